use proptest::prelude::*;
use pulsepair::channelize::{channelize, integration_length, tone};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const RATE: f64 = 3700.0;
const BIN: f64 = 3.7;

#[test]
fn centred_tone_power_and_phase() {
    let n = integration_length(RATE, BIN).unwrap();
    assert_eq!(n, 1000);
    for (k, amp, phase) in [(17usize, 1.0, 0.3), (250, 2.5, -1.2), (499, 0.7, 2.9)] {
        let x = channelize(&tone(n, RATE, k as f64 * BIN, amp, phase), RATE, BIN).unwrap();
        let expect = (n as f64 * amp).powi(2) / 4.0;
        assert!((x[k].norm_sqr() / expect - 1.0).abs() < 1e-9);
        assert!((x[k].arg() - phase).abs() < 1e-9);
        // no leakage for a bin-centred tone
        let other: f64 = x.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v.norm_sqr()).sum();
        assert!(other < 1e-12 * expect);
    }
}

#[test]
fn half_bin_tone_scallops() {
    let n = integration_length(RATE, BIN).unwrap();
    let k = 100;
    let x = channelize(&tone(n, RATE, (k as f64 + 0.5) * BIN, 1.0, 0.0), RATE, BIN).unwrap();
    let peak = (n as f64).powi(2) / 4.0;
    // rectangular window: |sinc(1/2)|² = 4/π²
    let expect = 4.0 / std::f64::consts::PI.powi(2);
    for j in [k, k + 1] {
        let r = x[j].norm_sqr() / peak;
        assert!((r - expect).abs() < 2e-3, "{r} vs {expect}");
    }
}

#[test]
fn white_noise_is_flat() {
    let n = integration_length(RATE, BIN).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 400;
    let mut mean = vec![0.0; n / 2 + 1];
    for _ in 0..trials {
        let s: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (m, v) in mean.iter_mut().zip(channelize(&s, RATE, BIN).unwrap()) {
            *m += v.norm_sqr() / trials as f64;
        }
    }
    // E|X_k|² = N σ² off DC and Nyquist
    let interior = &mean[1..n / 2];
    let avg = interior.iter().sum::<f64>() / interior.len() as f64;
    assert!((avg / n as f64 - 1.0).abs() < 0.01, "{avg}");
    let lo = interior[..interior.len() / 2].iter().sum::<f64>() / (interior.len() / 2) as f64;
    let hi = interior[interior.len() / 2..].iter().sum::<f64>() / (interior.len() - interior.len() / 2) as f64;
    assert!((lo / hi - 1.0).abs() < 0.03, "{lo} {hi}");
}

proptest! {
    #[test]
    fn channelizing_is_linear(k1 in 1usize..499, k2 in 1usize..499, a in 0.1..3.0f64, b in 0.1..3.0f64) {
        let n = 1000;
        let s1 = tone(n, RATE, k1 as f64 * BIN, a, 0.4);
        let s2 = tone(n, RATE, k2 as f64 * BIN, b, -0.9);
        let sum: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| x + y).collect();
        let (x1, x2, xs) = (channelize(&s1, RATE, BIN).unwrap(), channelize(&s2, RATE, BIN).unwrap(), channelize(&sum, RATE, BIN).unwrap());
        for i in 0..xs.len() {
            prop_assert!((xs[i] - x1[i] - x2[i]).norm() < 1e-7);
        }
    }
}
