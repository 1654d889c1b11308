mod common;

use common::ks_exponential;
use pulsepair_core::first_level;
use pulsepair_core::geometry::{self, InstrumentConfig};
use pulsepair_core::sim::{self, Materialize, PerElement, RfiSpec, Scenario, Simulator, SourceSpec};

fn narrow(lo: f64, hi: f64) -> InstrumentConfig {
    InstrumentConfig {
        rf_ranges_hz: vec![(lo, hi)],
        ..InstrumentConfig::default()
    }
}

fn dual_count(sim: &Simulator, frames: u64, floor: Option<f64>) -> (u64, u64) {
    let cfg = sim.config();
    let mut hits = 0;
    let mut windows = 0;
    for i in 0..frames {
        let f = sim.frame(i).unwrap();
        for w in &f.windows {
            let mut w = w.clone();
            if let Some(n) = floor {
                w.floor = Some(PerElement::new(n, n));
            }
            hits += first_level::detect_window(&w, f.mjd, cfg).unwrap().len() as u64;
            windows += 1;
        }
    }
    (hits, windows)
}

#[test]
fn sparse_dual_exceedance_rate() {
    let cfg = InstrumentConfig::default();
    let theta = cfg.snr_threshold_linear();
    let sim = Simulator::new(Scenario::null(cfg.clone(), vec![(60_500.0, 60_501.0)], 21)).unwrap();
    let (hits, windows) = dual_count(&sim, 4000, None);
    let expect = (windows * cfg.band_bin_count()) as f64 * (-2.0 * theta).exp();
    let sigma = expect.sqrt();
    assert!((hits as f64 - expect).abs() < 3.0 * sigma, "{hits} vs {expect} ± {sigma}");
}

#[test]
fn dense_dual_exceedance_rate() {
    // full draw of every bin against the true floor; threshold lowered so the count is informative
    let mut cfg = narrow(1400.0e6, 1400.2e6);
    cfg.snr_threshold_db = 5.0;
    let theta = cfg.snr_threshold_linear();
    let mut s = Scenario::null(cfg.clone(), vec![(60_500.0, 60_501.0)], 5);
    s.materialize = Materialize::Dense;
    let sim = Simulator::new(s).unwrap();
    let (hits, windows) = dual_count(&sim, 200, Some(1.0));
    let n = (windows * cfg.band_bin_count()) as f64;
    let p = (-2.0 * theta).exp();
    let expect = n * p;
    let sigma = (n * p * (1.0 - p)).sqrt();
    assert!((hits as f64 - expect).abs() < 3.0 * sigma, "{hits} vs {expect} ± {sigma}");
}

#[test]
fn dense_awgn_matches_exponential_on_both_elements() {
    let mut s = Scenario::null(narrow(1420.0e6, 1420.5e6), vec![(60_500.0, 60_500.01)], 9);
    s.materialize = Materialize::Dense;
    s.noise_power = 2.5;
    let sim = Simulator::new(s).unwrap();
    let f = sim.frame(3).unwrap();
    let w = &f.windows[1];
    assert!(w.bins.len() >= 100_000);
    let east: Vec<f64> = w.bins.iter().map(|b| b.east.norm_sqr()).collect();
    let west: Vec<f64> = w.bins.iter().map(|b| b.west.norm_sqr()).collect();
    assert!(ks_exponential(east, 2.5) < 0.01);
    assert!(ks_exponential(west, 2.5) < 0.01);
}

#[test]
fn seeds_change_the_stream_and_repeat_it() {
    let make = |seed| Simulator::new(Scenario::null(InstrumentConfig::default(), vec![(60_500.0, 60_500.02)], seed)).unwrap();
    let a = make(1);
    let b = make(1);
    let c = make(2);
    let idx = [0u64, 17, 3, 200, 99];
    for &i in &idx {
        assert_eq!(a.frame(i).unwrap(), b.frame(i).unwrap());
    }
    assert_ne!(a.frame(17).unwrap(), c.frame(17).unwrap());
}

#[test]
fn frame_count_is_floor_of_trigger_periods() {
    let cfg = InstrumentConfig::default();
    let s = Scenario::null(cfg, vec![(60_500.0, 60_500.5), (60_501.0, 60_501.00002)], 1);
    let sim = Simulator::new(s).unwrap();
    // 14400 + floor(1.728 / 3)
    assert_eq!(sim.frame_count(), 14_400);
    let mjds: Vec<f64> = sim.pointings().map(|p| p.mjd).collect();
    assert!(mjds.windows(2).all(|w| w[0] < w[1]));
    assert!((sim::duty_cycle(sim.config()) - 0.18).abs() < 1e-12);
}

#[test]
fn coherent_tones_carry_the_expected_phase() {
    let cfg = narrow(1398.0e6, 1403.0e6);
    let mut s = Scenario::null(cfg.clone(), vec![(60_500.0, 60_500.01)], 13);
    let sim0 = Simulator::new(s.clone()).unwrap();
    let transit = sim0.pointing(100).unwrap().beam_ra_hr;
    let tones = (cfg.bin_freq_hz(cfg.bin_of_freq(1399.0e6)), cfg.bin_freq_hz(cfg.bin_of_freq(1401.6e6)));
    s.sources.push(SourceSpec {
        ra_hr: transit,
        dec_deg: cfg.dec_deg,
        tone_pairs: vec![tones],
        snr_db_at_transit: 30.0,
        emission_probability_per_window: 1.0,
        phase_coherent: true,
    });
    let sim = Simulator::new(s).unwrap();
    let model = geometry::PhaseModel::from_config(&cfg);
    let mut worst: f64 = 0.0;
    let mut pair_worst: f64 = 0.0;
    for i in 60..140 {
        let f = sim.frame(i).unwrap();
        let h = geometry::hour_angle_rad(f.beam_ra_hr, transit);
        let pulses = first_level::detect_pulses(&f, &cfg).unwrap();
        for w in 0..2 {
            let tone: Vec<_> = pulses
                .iter()
                .filter(|p| p.window_index == w && (p.freq_hz == tones.0 || p.freq_hz == tones.1))
                .collect();
            assert_eq!(tone.len(), 2, "frame {i} window {w}");
            let r: Vec<f64> = tone
                .iter()
                .map(|p| geometry::wrap_phase(p.raw_ew_phase() - model.ew_phase(p.freq_hz, h)).unwrap())
                .collect();
            worst = worst.max(r[0].abs()).max(r[1].abs());
            let measured = geometry::wrap_phase(tone[1].raw_ew_phase() - tone[0].raw_ew_phase()).unwrap();
            let tau_g = model.geometric_delay(h);
            let expected = geometry::wrap_phase(2.0 * std::f64::consts::PI * (tones.1 - tones.0) * (tau_g - cfg.tau_inst_s)).unwrap();
            pair_worst = pair_worst.max(geometry::wrap_phase(measured - expected).unwrap().abs());
        }
    }
    // 30 dB: per-element phase scatter ~0.02 rad
    assert!(worst < 0.15, "{worst}");
    assert!(pair_worst < 0.2, "{pair_worst}");
}

#[test]
fn incoherent_tones_scatter() {
    let cfg = narrow(1398.0e6, 1403.0e6);
    let mut s = Scenario::null(cfg.clone(), vec![(60_500.0, 60_500.01)], 13);
    let transit = Simulator::new(s.clone()).unwrap().pointing(100).unwrap().beam_ra_hr;
    let tone = cfg.bin_freq_hz(cfg.bin_of_freq(1399.0e6));
    s.sources.push(SourceSpec {
        ra_hr: transit,
        dec_deg: cfg.dec_deg,
        tone_pairs: vec![(tone, tone + 1.0e6)],
        snr_db_at_transit: 30.0,
        emission_probability_per_window: 1.0,
        phase_coherent: false,
    });
    let sim = Simulator::new(s).unwrap();
    let model = geometry::PhaseModel::from_config(&cfg);
    let mut inside = 0;
    let mut total = 0;
    for i in 60..260 {
        let f = sim.frame(i).unwrap();
        let h = geometry::hour_angle_rad(f.beam_ra_hr, transit);
        for p in first_level::detect_pulses(&f, &cfg).unwrap().iter().filter(|p| p.freq_hz == tone) {
            total += 1;
            if geometry::wrap_phase(p.raw_ew_phase() - model.ew_phase(tone, h)).unwrap().abs() <= 0.1 {
                inside += 1;
            }
        }
    }
    assert!(total >= 300);
    // uniform phases: 0.2 / 2π ≈ 3% inside the per-pulse window
    assert!((inside as f64) < 0.08 * total as f64, "{inside}/{total}");
}

#[test]
fn emission_probability_sets_the_window_rate() {
    let cfg = narrow(1398.0e6, 1403.0e6);
    let mut s = Scenario::null(cfg.clone(), vec![(60_500.0, 60_500.02)], 4);
    let transit = Simulator::new(s.clone()).unwrap().pointing(250).unwrap().beam_ra_hr;
    let tone = cfg.bin_freq_hz(cfg.bin_of_freq(1399.0e6));
    s.sources.push(SourceSpec {
        ra_hr: transit,
        dec_deg: cfg.dec_deg,
        tone_pairs: vec![(tone, tone + 2.0e6)],
        snr_db_at_transit: 30.0,
        emission_probability_per_window: 0.3,
        phase_coherent: true,
    });
    let sim = Simulator::new(s).unwrap();
    let mut hit = 0;
    let mut windows = 0;
    for i in 200..300 {
        let f = sim.frame(i).unwrap();
        let pulses = first_level::detect_pulses(&f, &cfg).unwrap();
        for w in 0..2 {
            windows += 1;
            if pulses.iter().any(|p| p.window_index == w && p.freq_hz == tone) {
                hit += 1;
            }
        }
    }
    let p = hit as f64 / windows as f64;
    let sigma = (0.3f64 * 0.7 / windows as f64).sqrt();
    assert!((p - 0.3).abs() < 4.0 * sigma, "{p}");
}

#[test]
fn east_only_rfi_never_reaches_the_west_threshold() {
    let cfg = narrow(1409.0e6, 1411.0e6);
    let mut s = Scenario::null(cfg.clone(), vec![(60_500.0, 60_500.01)], 8);
    s.rfi.push(RfiSpec {
        segment_center_hz: 1410.0e6,
        bandwidth_hz: 200.0,
        burst_rate_per_hour: 3600.0 * 10.0,
        burst_snr_db: 40.0,
        element_coupling: PerElement::new(1.0, 0.0),
        correlated: true,
    });
    let sim = Simulator::new(s).unwrap();
    let lo = cfg.bin_of_freq(1410.0e6 - 100.0);
    let hi = cfg.bin_of_freq(1410.0e6 + 100.0);
    let mut loud_east = 0;
    let mut detections = 0;
    for i in 0..200 {
        let f = sim.frame(i).unwrap();
        for w in &f.windows {
            let floor = w.floor.map(|f| f.east).unwrap_or(1.0);
            loud_east += w.bins.iter().filter(|b| b.bin >= lo && b.bin <= hi && b.east.norm_sqr() > 100.0 * floor).count();
        }
        detections += first_level::detect_pulses(&f, &cfg)
            .unwrap()
            .iter()
            .filter(|p| p.bin_index >= lo && p.bin_index <= hi)
            .count();
    }
    assert!(loud_east > 1000, "{loud_east}");
    // only the west noise tail can clear threshold: e^{-θ} per loud bin
    let theta = cfg.snr_threshold_linear();
    let tail = loud_east as f64 * (-theta).exp();
    assert!((detections as f64) < tail + 5.0 * tail.sqrt() + 3.0, "{detections} vs {tail}");
}
