//! Falsification and characterization variants of the second level.
//!
//! Each variant changes exactly one thing relative to the baseline pass:
//! the east phases (phase noise), the instrument delay, or the phase
//! filter windows.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::first_level::{PulsePairCandidate, WindowVisibility};
use crate::geometry::InstrumentConfig;
use crate::math::{PI, TAU};
use crate::stats::{self, Analysis, Classification, DoiParams, ExposureModel, FilterOverrides, PhaseFilter, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("phase-noise seed must be at least 1")]
    ZeroSeed,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestVariant {
    Baseline,
    PhaseNoise { seed: u64 },
    TauOverride { tau_s: f64 },
    ModifiedFilter { filter: PhaseFilter },
}

impl TestVariant {
    pub fn name(&self) -> String {
        use alloc::format;
        match self {
            TestVariant::Baseline => "baseline".into(),
            TestVariant::PhaseNoise { seed } => format!("phase_noise_{seed}"),
            TestVariant::TauOverride { tau_s } if *tau_s == 0.0 => "tau_zero".into(),
            TestVariant::TauOverride { tau_s } => format!("tau_{:.0}ns", tau_s * 1e9),
            TestVariant::ModifiedFilter { .. } => "modified_filter".into(),
        }
    }
}

/// Replace every east phase with a uniform draw on (−π, π].
///
/// Draws come from the ChaCha8 stream `(seed, candidate id)`, lower-frequency
/// pulse first, so the result depends only on the seed and the ids.
pub fn phase_noise_variant(candidates: &[PulsePairCandidate], seed: u64) -> Result<Vec<PulsePairCandidate>, DiagnosticsError> {
    if seed == 0 {
        return Err(DiagnosticsError::ZeroSeed);
    }
    Ok(candidates
        .iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c.id);
            let mut out = *c;
            for p in out.pulses.iter_mut() {
                p.phase_east_rad = PI - TAU * rng.random::<f64>();
            }
            out
        })
        .collect())
}

/// Probability that a pair of independent uniform east phases passes
/// `filter`: the per-pulse windows are independent and the pair residual
/// of two uniform angles is itself uniform only when the per-pulse window
/// is the full circle, so the general case is integrated numerically.
pub fn uniform_phase_pass_probability(filter: &PhaseFilter) -> f64 {
    // measure of {(a, b) ∈ A×A : |wrap(b − a)| ∈ D} / (2π)², A the per-pulse
    // set and D the pair window, both symmetric unions of two intervals
    let steps = 4000;
    let h = TAU / steps as f64;
    let in_window = |w: (f64, f64), x: f64| x.abs() >= w.0 && x.abs() <= w.1;
    let mut acc = 0.0;
    for i in 0..steps {
        let a = -PI + (i as f64 + 0.5) * h;
        if !in_window(filter.ew, a) {
            continue;
        }
        for j in 0..steps {
            let b = -PI + (j as f64 + 0.5) * h;
            if in_window(filter.ew, b) && in_window(filter.ddf, crate::geometry::wrap(b - a)) {
                acc += 1.0;
            }
        }
    }
    acc / (steps as f64 * steps as f64)
}

/// Second level with the instrument delay replaced.
pub fn tau_override_variant(
    candidates: &[PulsePairCandidate],
    tau_s: f64,
    beam_exposure: &ExposureModel,
    config: &InstrumentConfig,
    params: &DoiParams,
) -> Result<Analysis, DiagnosticsError> {
    let overrides = FilterOverrides {
        tau_inst_s: tau_s,
        ..FilterOverrides::from_config(config)
    };
    Ok(stats::analyze(candidates, beam_exposure, config, &overrides, params)?)
}

/// One direction compared under default and modified windows.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionClass {
    pub bin: u32,
    pub default_strength: f64,
    pub modified_strength: f64,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedComparison {
    pub default: Analysis,
    pub modified: Analysis,
    pub directions: Vec<DirectionClass>,
    pub warnings: Vec<String>,
}

/// Strength of a direction: the largest final-count z over `k − 1 ..= k + 1`.
pub fn direction_strength(final_z: &[f64], k: u32) -> f64 {
    let n = final_z.len() as i64;
    (-1..=1)
        .map(|o| final_z[(k as i64 + o).rem_euclid(n) as usize])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bins whose final count under `analysis` clears the family-wise Poisson
/// minimum, reduced to the local maximum of each contiguous run.
pub fn excess_peaks(analysis: &Analysis, params: &DoiParams) -> Vec<u32> {
    let counts = analysis.counts();
    let n = analysis.heap.len() as u64;
    let observed = analysis.exposure.observed_bins();
    let dispersion = params.dispersion_for(&analysis.heap);
    let hot: Vec<bool> = counts
        .iter()
        .zip(&analysis.exposure.p)
        .map(|(&c, &p)| p > 0.0 && c >= params.min_count(n, p, observed, dispersion) as u64)
        .collect();
    let z = analysis.final_z();
    let nb = hot.len();
    let mut peaks = Vec::new();
    for k in 0..nb {
        if !hot[k] {
            continue;
        }
        let l = (k + nb - 1) % nb;
        let r = (k + 1) % nb;
        let left_ok = !hot[l] || z[l] < z[k] || (z[l] == z[k] && l > k);
        let right_ok = !hot[r] || z[r] <= z[k];
        if left_ok && right_ok {
            peaks.push(k as u32);
        }
    }
    peaks
}

/// Run the default and modified windows and classify every direction that
/// is a DOI under the default windows or an excess peak under the
/// modified ones. A direction is RFI-like when its modified strength is at
/// least its default strength.
pub fn modified_filter_variant(
    candidates: &[PulsePairCandidate],
    filter: PhaseFilter,
    beam_exposure: &ExposureModel,
    config: &InstrumentConfig,
    params: &DoiParams,
) -> Result<ModifiedComparison, DiagnosticsError> {
    let base_overrides = FilterOverrides::from_config(config);
    let mut warnings = Vec::new();
    if filter.contains(&base_overrides.filter) {
        warnings.push(String::from(
            "modified windows contain the default windows; the comparison is vacuous",
        ));
    }
    let default = stats::analyze(candidates, beam_exposure, config, &base_overrides, params)?;
    let modified = stats::analyze(
        candidates,
        beam_exposure,
        config,
        &FilterOverrides {
            filter,
            ..base_overrides
        },
        params,
    )?;
    let zd = default.final_z();
    let zm = modified.final_z();
    let mut bins: Vec<u32> = default
        .dois
        .iter()
        .filter(|d| d.alias_of.is_none())
        .map(|d| d.central_bin)
        .collect();
    for k in excess_peaks(&modified, params) {
        let nb = zd.len() as i64;
        let near = bins.iter().any(|&b| {
            let diff = (b as i64 - k as i64).rem_euclid(nb);
            diff.min(nb - diff) <= 1
        });
        if !near {
            bins.push(k);
        }
    }
    bins.sort_unstable();
    let directions = bins
        .into_iter()
        .map(|bin| {
            let default_strength = direction_strength(&zd, bin);
            let modified_strength = direction_strength(&zm, bin);
            DirectionClass {
                bin,
                default_strength,
                modified_strength,
                classification: if modified_strength >= default_strength {
                    Classification::RfiLike
                } else {
                    Classification::PhaseCoherent
                },
            }
        })
        .collect();
    Ok(ModifiedComparison {
        default,
        modified,
        directions,
        warnings,
    })
}

/// Windows whose visibility magnitude exceeds `threshold_db_rel`.
pub fn high_visibility_scan(visibilities: &[WindowVisibility], threshold_db_rel: f64) -> Vec<WindowVisibility> {
    visibilities
        .iter()
        .filter(|v| v.magnitude_db_rel() > threshold_db_rel)
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::first_level::{AssociatedMeasurements, PulseDetection};
    use crate::Complex;

    fn cand(id: u64) -> PulsePairCandidate {
        let p = PulseDetection {
            mjd: 60_500.0,
            window_index: 0,
            freq_hz: 1400.0e6,
            bin_index: 0,
            snr_db_east: 9.0,
            snr_db_west: 9.0,
            phase_east_rad: 0.1,
            phase_west_rad: 0.2,
            segment_index: 0,
        };
        PulsePairCandidate {
            id,
            frame_index: 0,
            beam_ra_hr: 1.0,
            pulses: [p, p],
            delta_f_hz: 0.0,
            assoc: AssociatedMeasurements {
                east_power_954: 0.0,
                west_power_954: 0.0,
                east_power_wide: 0.0,
                west_power_wide: 0.0,
                visibility_mag_db_rel: 0.0,
                log10_df_likelihood: 0.0,
                log10_snr_likelihood_pulse: [0.0; 2],
                log10_snr_likelihood_pair: 0.0,
                rfi_spectral_margin_segments: None,
                rf_low_freq_hz: 0.0,
                mjd: 60_500.0,
            },
        }
    }

    #[test]
    fn phase_noise_is_deterministic_per_seed_and_id() {
        let c: Vec<_> = (0..50).map(cand).collect();
        let a = phase_noise_variant(&c, 1).unwrap();
        assert_eq!(a, phase_noise_variant(&c, 1).unwrap());
        assert_ne!(a, phase_noise_variant(&c, 4).unwrap());
        assert!(a.iter().all(|x| x.pulses[0].phase_east_rad > -PI && x.pulses[0].phase_east_rad <= PI));
        assert!(a.iter().all(|x| x.pulses[0].phase_west_rad == 0.2));
        // a candidate's draw does not depend on its neighbours
        let single = phase_noise_variant(&c[7..8], 1).unwrap();
        assert_eq!(single[0], a[7]);
        assert!(phase_noise_variant(&c, 0).is_err());
    }

    #[test]
    fn uniform_pass_probability_closed_form() {
        let cfg = InstrumentConfig::default();
        // per-pulse window dominates: both residuals within 0.1 forces |Δ| <= 0.2 < 0.8
        let p = uniform_phase_pass_probability(&PhaseFilter::from_config(&cfg));
        let oracle = (0.2 / TAU) * (0.2 / TAU);
        assert!((p - oracle).abs() < 2e-5, "{p} vs {oracle}");
        // open per-pulse window: the pair residual is uniform
        let m = uniform_phase_pass_probability(&PhaseFilter::modified(&cfg));
        assert!((m - (PI - 0.8) / PI).abs() < 1e-3, "{m}");
    }

    #[test]
    fn visibility_scan_threshold() {
        let v: Vec<WindowVisibility> = [10.0, 1e8]
            .iter()
            .enumerate()
            .map(|(i, &m)| WindowVisibility {
                frame_index: i as u64,
                window_index: 0,
                mjd: 60_500.0,
                beam_ra_hr: 1.0,
                visibility: Complex::new(m, 0.0),
            })
            .collect();
        let hits = high_visibility_scan(&v, 50.0);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].frame_index, 1);
    }

    #[test]
    fn names() {
        assert_eq!(TestVariant::PhaseNoise { seed: 3 }.name(), "phase_noise_3");
        assert_eq!(TestVariant::TauOverride { tau_s: 0.0 }.name(), "tau_zero");
    }
}
