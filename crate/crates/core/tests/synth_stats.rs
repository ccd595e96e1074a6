//! Statistical checks on the synthetic generator.

use learned_hash::synth::{generate, ground_truth, separation_report, SynthConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn one_feature(vocab: usize, alpha: f64, samples: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        vocab_sizes: vec![vocab],
        group_counts: vec![1],
        zipf_alpha: alpha,
        num_days: 1,
        samples_per_day: samples,
        seed,
        ..Default::default()
    }
}

fn id_counts(cfg: &SynthConfig) -> Vec<u64> {
    let (ds, _) = generate(cfg).unwrap();
    let mut counts = vec![0u64; cfg.vocab_sizes[0]];
    for i in 0..ds.len() {
        counts[ds.ids(i)[0] as usize] += 1;
    }
    counts
}

#[test]
fn alpha_zero_is_uniform() {
    let cfg = one_feature(100, 0.0, 1_000_000, 5);
    let counts = id_counts(&cfg);
    let expected = 1_000_000.0 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(99.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

/// Ranks with ties averaged, 1-based.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn top_decile_follows_popularity_permutation() {
    let cfg = one_feature(1_000, 1.05, 1_000_000, 8);
    let counts = id_counts(&cfg);
    let truth = ground_truth(&cfg).unwrap();
    let top = &truth.features[0].popularity[..100];
    // planted rank r should have the r-th largest count
    let planted: Vec<f64> = (0..top.len()).map(|r| -(r as f64)).collect();
    let observed: Vec<f64> = top.iter().map(|&id| counts[id as usize] as f64).collect();
    let rho = pearson(&ranks(&planted), &ranks(&observed));
    assert!(rho > 0.95, "spearman {rho}");
}

#[test]
fn centers_drift_by_sigma_sqrt_dim() {
    let dim = 4;
    let sigma = 0.1;
    let mut total = 0.0;
    let mut steps = 0;
    for seed in 0..40 {
        let cfg = SynthConfig {
            vocab_sizes: vec![64, 64],
            group_counts: vec![16, 16],
            truth_dim: dim,
            sigma_drift: sigma,
            num_days: 8,
            seed,
            ..Default::default()
        };
        let truth = ground_truth(&cfg).unwrap();
        for ft in &truth.features {
            for d in 0..cfg.num_days - 1 {
                for (a, b) in ft.centers[d].chunks_exact(dim).zip(ft.centers[d + 1].chunks_exact(dim)) {
                    total += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    steps += 1;
                }
            }
        }
    }
    let mean = total / steps as f64;
    let nominal = sigma * (dim as f64).sqrt();
    assert!((mean / nominal - 1.0).abs() < 0.2, "mean step {mean} vs {nominal}");
}

#[test]
fn default_config_is_well_separated() {
    let s = separation_report(&ground_truth(&SynthConfig::default()).unwrap());
    assert!(s.ratio() < 0.3, "ratio {}", s.ratio());
}

#[test]
fn equal_sigmas_leave_little_structure() {
    let cfg = SynthConfig {
        sigma_within: 1.0,
        sigma_between: 1.0,
        ..SynthConfig::default()
    };
    let s = separation_report(&ground_truth(&cfg).unwrap());
    // intra pairs differ only by noise (variance 2σ²), inter pairs by noise
    // and centers (4σ²), so the distance ratio sits near 1/√2
    assert!(
        (s.ratio() - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.06,
        "ratio {}",
        s.ratio()
    );
}
