//! Channel sampling, syndromes and dataset recipes.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use qldpc_core::channel::*;
use qldpc_core::codes::{bch_seed_codes, build_hgp};
use qldpc_core::{BinVector, CssCode};

fn hgp129() -> CssCode {
    let (a, b) = bch_seed_codes();
    build_hgp(&a, &b).unwrap()
}

fn p(v: f64) -> ChannelParams {
    ChannelParams::new(v).unwrap()
}

#[test]
fn prior_llr_examples() {
    assert!((prior_llr(p(0.01)).unwrap() - 99f64.ln()).abs() < 1e-15);
    assert!((prior_llr(p(0.01)).unwrap() - 4.595).abs() < 1e-3);
    let e = std::f64::consts::E;
    assert!((prior_llr(p(1.0 / (1.0 + e))).unwrap() - 1.0).abs() < 1e-15);
    assert!(prior_llr(p(0.5 - 1e-12)).unwrap().abs() < 1e-11);
    assert!(ChannelParams::new(0.5).is_err());
    assert!(ChannelParams::new(-0.1).is_err());
    assert!(prior_llr(p(0.0)).is_err());
}

#[test]
fn noiseless_channel_gives_zero_errors() {
    let code = hgp129();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        assert!(sample_error(&code, p(0.0), &mut rng).bits().is_zero());
    }
    assert!(gen_test_stream(&code, p(0.0), 50, 1).all(|(s, e)| s.bits().is_zero() && e.bits().is_zero()));
}

#[test]
fn weight_and_per_bit_statistics() {
    let code = hgp129();
    let draws = 100_000;
    let pf = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0u64; 2 * code.n];
    let (mut total, mut zero) = (0u64, 0u64);
    for _ in 0..draws {
        let e = sample_error(&code, p(pf), &mut rng);
        let w = e.bits().weight() as u64;
        total += w;
        zero += (w == 0) as u64;
        for i in e.bits().iter_ones() {
            counts[i] += 1;
        }
    }
    let mean = total as f64 / draws as f64;
    assert!((mean - 2.58).abs() < 0.05, "mean weight {mean}");
    let sigma = (draws as f64 * pf * (1.0 - pf)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        let dev = (c as f64 - draws as f64 * pf).abs() / sigma;
        assert!(dev <= 3.0, "bit {i}: {dev} sigma");
    }
    // Fraction of clean draws against (1 - p)^258, 3-sigma binomial bound.
    let q = (1.0 - pf).powi(258);
    let frac = zero as f64 / draws as f64;
    assert!((frac - q).abs() <= 3.0 * (q * (1.0 - q) / draws as f64).sqrt(), "{frac} vs {q}");
}

#[test]
fn truncated_binomial_passes_chi_square() {
    let bits = 258;
    let pf = 0.01;
    let target = TruncatedBinomial::pmf(bits, pf);
    let sampler = TruncatedBinomial::new(bits, pf).unwrap();
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut observed = vec![0u64; target.len()];
    for _ in 0..draws {
        let w = sampler.sample(&mut rng);
        assert!(w >= 2);
        observed[w - 2] += 1;
    }
    // Pool the upper tail until every bin expects at least five hits.
    let mut bins: Vec<(f64, u64)> = Vec::new();
    let (mut exp_acc, mut obs_acc) = (0.0, 0);
    for (q, &o) in target.iter().zip(&observed) {
        exp_acc += q * draws as f64;
        obs_acc += o;
        if exp_acc >= 5.0 {
            bins.push((exp_acc, obs_acc));
            (exp_acc, obs_acc) = (0.0, 0);
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += exp_acc;
        last.1 += obs_acc;
    }
    let stat: f64 = bins.iter().map(|&(e, o)| (o as f64 - e).powi(2) / e).sum();
    let dof = (bins.len() - 1) as f64;
    let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi2 {stat} >= {critical} with {dof} dof");
}

#[test]
fn truncated_binomial_matches_direct_formula() {
    let (n, pf) = (20usize, 0.1f64);
    let choose = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let raw: Vec<f64> = (2..=n).map(|w| choose(n, w) * pf.powi(w as i32) * (1.0 - pf).powi((n - w) as i32)).collect();
    let total: f64 = raw.iter().sum();
    for (got, want) in TruncatedBinomial::pmf(n, pf).iter().zip(&raw) {
        assert!((got - want / total).abs() < 1e-12);
    }
}

#[test]
fn syndrome_examples() {
    let code = hgp129();
    let n = code.n;
    assert!(syndrome(&code, &ErrorVector::zeros(n)).unwrap().bits().is_zero());
    for j in [0, 17, 128] {
        let e = ErrorVector(BinVector::unit(2 * n, j));
        let s = syndrome(&code, &e).unwrap();
        let mx = code.x_checks();
        assert_eq!(s.bits().slice(0, mx), code.hz.column(j));
        assert!(s.bits().slice(mx, s.len() - mx).is_zero());
    }
    assert!(matches!(
        syndrome(&code, &ErrorVector(BinVector::zeros(5))),
        Err(ChannelError::LengthMismatch { .. })
    ));
}

proptest! {
    #[test]
    fn syndrome_is_linear(seed in any::<u64>(), pf in 0.0f64..0.3) {
        let code = hgp129();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e1 = sample_error(&code, p(pf), &mut rng);
        let e2 = sample_error(&code, p(pf), &mut rng);
        let sum = ErrorVector(e1.bits().xor(e2.bits()));
        let s = syndrome(&code, &sum).unwrap();
        let s1 = syndrome(&code, &e1).unwrap();
        let s2 = syndrome(&code, &e2).unwrap();
        prop_assert_eq!(s.bits(), &s1.bits().xor(s2.bits()));
    }
}

#[test]
fn training_set_recipe() {
    let code = hgp129();
    let ds = gen_training_set(&code, p(0.01), 5000, 3).unwrap();
    assert_eq!(ds.len(), 5000);
    ds.verify(&code).unwrap();
    assert!(ds.entries[0].0.bits().is_zero() && ds.entries[0].1.bits().is_zero());
    for j in 1..=2 * code.n {
        assert_eq!(ds.entries[j].1, ErrorVector(BinVector::unit(2 * code.n, j - 1)));
    }
    assert!(ds.entries[2 * code.n + 1..].iter().all(|(_, e)| e.bits().weight() >= 2));
    assert_eq!(gen_training_set(&code, p(0.01), 5000, 3).unwrap(), ds);
    assert_ne!(gen_training_set(&code, p(0.01), 5000, 4).unwrap(), ds);
    assert!(matches!(
        gen_training_set(&code, p(0.01), 2 * code.n, 3),
        Err(ChannelError::TooFewEntries { min: 259, got: 258 })
    ));
}

#[test]
fn test_stream_is_plain_channel_draws() {
    let code = hgp129();
    let stream = gen_test_stream(&code, p(0.01), 20_000, 5);
    assert_eq!(stream.len(), 20_000);
    let mut zero = 0;
    for (s, e) in stream {
        assert_eq!(syndrome(&code, &e).unwrap(), s);
        zero += e.bits().is_zero() as u32;
    }
    let q = 0.99f64.powi(258);
    let frac = zero as f64 / 20_000.0;
    assert!((frac - q).abs() <= 3.0 * (q * (1.0 - q) / 20_000.0).sqrt(), "{frac}");
    let a: Vec<_> = gen_test_stream(&code, p(0.01), 100, 5).collect();
    let b: Vec<_> = gen_test_stream(&code, p(0.01), 100, 5).collect();
    assert_eq!(a, b);
}

#[test]
fn verify_rejects_corruption() {
    let code = hgp129();
    let mut ds = gen_training_set(&code, p(0.01), 300, 1).unwrap();
    ds.entries[280].1 .0.flip(3);
    assert!(matches!(ds.verify(&code), Err(ChannelError::InconsistentEntry { index: 280 })));
    ds.meta.code_hash ^= 1;
    assert!(matches!(ds.verify(&code), Err(ChannelError::CodeMismatch { .. })));
}
