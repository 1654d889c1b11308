mod common;

use common::{coherent_candidates, incoherent_candidates, null_candidates};
use pulsepair_core::diagnostics::{self, DiagnosticsError};
use pulsepair_core::geometry::{self, InstrumentConfig};
use pulsepair_core::stats::{self, Classification, DoiParams, ExposureModel, FilterOverrides, PhaseFilter};

fn flat(cfg: &InstrumentConfig) -> ExposureModel {
    ExposureModel::from_exposure(vec![0.54; cfg.ra_bins_per_day as usize]).unwrap()
}

fn with_source(cfg: &InstrumentConfig, bin: u32) -> Vec<pulsepair_core::first_level::PulsePairCandidate> {
    let mut c = null_candidates(60_000, 0, 7, cfg);
    c.extend(coherent_candidates(400, 1_000_000, 8, geometry::bin_center(bin, cfg), 0.45, 0.02, cfg));
    c
}

#[test]
fn phase_noise_removes_a_coherent_doi() {
    let cfg = InstrumentConfig::default();
    let cands = with_source(&cfg, 1234);
    let params = DoiParams::default();
    let base = stats::analyze(&cands, &flat(&cfg), &cfg, &FilterOverrides::from_config(&cfg), &params).unwrap();
    assert!(base.dois.iter().any(|d| d.central_bin == 1234));
    for seed in 1..4 {
        let noisy = diagnostics::phase_noise_variant(&cands, seed).unwrap();
        assert_eq!(noisy.len(), cands.len());
        assert!(noisy.iter().zip(&cands).all(|(a, b)| a.id == b.id && a.pulses[0].phase_west_rad == b.pulses[0].phase_west_rad));
        let a = stats::analyze(&noisy, &flat(&cfg), &cfg, &FilterOverrides::from_config(&cfg), &params).unwrap();
        assert!(a.dois.is_empty(), "seed {seed}");
    }
    assert_eq!(diagnostics::phase_noise_variant(&cands, 0), Err(DiagnosticsError::ZeroSeed));
}

#[test]
fn phase_noise_depends_only_on_seed_and_id() {
    let cfg = InstrumentConfig::default();
    let cands = null_candidates(500, 0, 1, &cfg);
    let all = diagnostics::phase_noise_variant(&cands, 9).unwrap();
    let mut rev = cands.clone();
    rev.reverse();
    let back = diagnostics::phase_noise_variant(&rev[100..], 9).unwrap();
    for c in &back {
        assert_eq!(Some(c), all.iter().find(|a| a.id == c.id));
    }
    let phases: Vec<f64> = all.iter().flat_map(|c| c.pulses.map(|p| p.phase_east_rad)).collect();
    assert!(phases.iter().all(|p| *p > -std::f64::consts::PI && *p <= std::f64::consts::PI));
    let mean = phases.iter().sum::<f64>() / phases.len() as f64;
    assert!(mean.abs() < 0.15);
}

#[test]
fn wrong_delay_scatters_a_coherent_source() {
    let cfg = InstrumentConfig::default();
    let cands = with_source(&cfg, 2000);
    let params = DoiParams::default();
    let a = diagnostics::tau_override_variant(&cands, 0.0, &flat(&cfg), &cfg, &params).unwrap();
    assert!(a.dois.iter().all(|d| d.central_bin != 2000));
    let b = diagnostics::tau_override_variant(&cands, cfg.tau_inst_s, &flat(&cfg), &cfg, &params).unwrap();
    assert!(b.dois.iter().any(|d| d.central_bin == 2000));
}

#[test]
fn modified_windows_separate_coherent_from_rfi_like() {
    let cfg = InstrumentConfig::default();
    let mut cands = with_source(&cfg, 900);
    cands.extend(incoherent_candidates(25_000, 2_000_000, 9, geometry::bin_center(2500, &cfg), 0.45, &cfg));
    let cmp = diagnostics::modified_filter_variant(&cands, PhaseFilter::modified(&cfg), &flat(&cfg), &cfg, &DoiParams::default()).unwrap();
    assert!(cmp.warnings.is_empty());
    let class = |bin: u32| cmp.directions.iter().find(|d| d.bin.abs_diff(bin) <= 1).map(|d| d.classification);
    assert_eq!(class(900), Some(Classification::PhaseCoherent));
    assert_eq!(class(2500), Some(Classification::RfiLike));
}

#[test]
fn containing_windows_warn() {
    let cfg = InstrumentConfig::default();
    let cands = null_candidates(2000, 0, 3, &cfg);
    let wide = PhaseFilter { ew: (0.0, 3.2), ddf: (0.0, 3.2) };
    let cmp = diagnostics::modified_filter_variant(&cands, wide, &flat(&cfg), &cfg, &DoiParams::default()).unwrap();
    assert_eq!(cmp.warnings.len(), 1);
}

#[test]
fn uniform_pass_probability_matches_closed_forms() {
    let cfg = InstrumentConfig::default();
    let tau = 2.0 * std::f64::consts::PI;
    // default windows: the pair window never binds once both pulses pass
    let p = diagnostics::uniform_phase_pass_probability(&PhaseFilter::from_config(&cfg));
    assert!((p - (0.2 / tau).powi(2)).abs() < 1e-4, "{p}");
    // open per-pulse windows: the pair residual is uniform
    let m = diagnostics::uniform_phase_pass_probability(&PhaseFilter::modified(&cfg));
    let expect = 1.0 - 2.0 * cfg.ddf_phase_filter_rad / tau;
    assert!((m - expect).abs() < 1e-3, "{m} vs {expect}");
}
