use std::cmp::Ordering;

use super::{ClusterConfig, ClusterSet, MergeCandidate};
use crate::error::{Error, Result};

/// Maps each cluster's access count into `[1, 2]`: `count / ||counts||_2 + 1`.
///
/// The norm is taken over the clusters as they currently are. When every
/// count is zero all outputs are 1.
pub fn norm_counts(set: &ClusterSet) -> Vec<f64> {
    let norm = set
        .clusters
        .iter()
        .map(|c| {
            let x = c.count as f64;
            x * x
        })
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return vec![1.0; set.len()];
    }
    set.clusters
        .iter()
        .map(|c| (c.count as f64 / norm + 1.0).min(2.0))
        .collect()
}

/// Product of the normalized counts of the pair `(left, left + 1)`; in `[1, 4]`.
pub fn frequency_score(set: &ClusterSet, norm: &[f64], left: usize) -> f64 {
    debug_assert!(left + 1 < set.len());
    norm[left] * norm[left + 1]
}

fn by_key(key: impl Fn(&MergeCandidate) -> f64) -> impl Fn(&MergeCandidate, &MergeCandidate) -> Ordering {
    move |a, b| key(a).total_cmp(&key(b)).then(a.left_index.cmp(&b.left_index))
}

/// Keeps the `keep` smallest candidates under `cmp`, sorted.
fn keep_smallest<F>(cands: &mut Vec<MergeCandidate>, keep: usize, cmp: F)
where
    F: Fn(&MergeCandidate, &MergeCandidate) -> Ordering,
{
    if keep < cands.len() {
        cands.select_nth_unstable_by(keep, &cmp);
        cands.truncate(keep);
    }
    cands.sort_unstable_by(&cmp);
}

fn stage_len(factor: f64, m: usize) -> usize {
    ((factor * m as f64).floor() as usize).max(1)
}

/// Filters the neighbouring pairs of `set` down to this step's merge candidates.
///
/// With `k_eff = min(k, |set| - target)` and `M = stage1_factor * k_eff`:
/// keep the `M` lowest frequency scores (if the frequency filter is on), then
/// the `stage2_factor * M` closest pairs, then up to `k_eff` pairs whose merged
/// size stays under `size_max`, closest first. If none do, fall back to the
/// `stage3_factor * M` pairs with the smallest merged size. Ties go to the
/// smaller left index.
pub fn select_candidates(set: &ClusterSet, cfg: &ClusterConfig) -> Result<Vec<MergeCandidate>> {
    if set.len() <= cfg.target {
        return Err(Error::contract(format!(
            "select_candidates called with {} clusters and target {}",
            set.len(),
            cfg.target
        )));
    }
    if set.len() < 2 {
        return Err(Error::contract("need at least two clusters to merge"));
    }
    let k_eff = cfg.k.min(set.len() - cfg.target).max(1);
    let m = stage_len(cfg.stage1_factor, k_eff);

    let norm = if cfg.use_frequency_filter {
        norm_counts(set)
    } else {
        Vec::new()
    };
    let mut cands: Vec<MergeCandidate> = set
        .clusters
        .windows(2)
        .enumerate()
        .map(|(i, w)| MergeCandidate {
            left_index: i,
            right_index: i + 1,
            frequency_score: if norm.is_empty() {
                1.0
            } else {
                frequency_score(set, &norm, i)
            },
            distance: w[1].value - w[0].value,
            combined_size: w[0].size + w[1].size,
        })
        .collect();

    if cfg.use_frequency_filter {
        keep_smallest(&mut cands, m, by_key(|c| c.frequency_score));
    }
    keep_smallest(&mut cands, stage_len(cfg.stage2_factor, m), by_key(|c| c.distance));

    let (under, over): (Vec<_>, Vec<_>) = cands.into_iter().partition(|c| c.combined_size < cfg.size_max);
    if !under.is_empty() {
        let mut under = under;
        under.truncate(k_eff);
        return Ok(under);
    }
    let mut over = over;
    keep_smallest(
        &mut over,
        stage_len(cfg.stage3_factor, m),
        by_key(|c| c.combined_size as f64),
    );
    Ok(over)
}

#[cfg(test)]
mod tests {
    use super::super::init_clusters;
    use super::*;

    fn five() -> ClusterSet {
        init_clusters(&[0.0, 1.0, 3.0, 6.0, 10.0], &[9, 0, 0, 0, 12]).unwrap()
    }

    fn lefts(c: &[MergeCandidate]) -> Vec<usize> {
        c.iter().map(|c| c.left_index).collect()
    }

    #[test]
    fn norms_of_three_four() {
        let set = init_clusters(&[0.0, 1.0], &[3, 4]).unwrap();
        let n = norm_counts(&set);
        assert!((n[0] - 1.6).abs() < 1e-12 && (n[1] - 1.8).abs() < 1e-12);
        assert!((frequency_score(&set, &n, 0) - 2.88).abs() < 1e-12);
    }

    #[test]
    fn norms_zero_and_single() {
        let set = init_clusters(&[0.0, 1.0, 2.0], &[0, 0, 0]).unwrap();
        assert_eq!(norm_counts(&set), vec![1.0; 3]);
        assert_eq!(frequency_score(&set, &norm_counts(&set), 1), 1.0);
        let set = init_clusters(&[0.0], &[5]).unwrap();
        assert_eq!(norm_counts(&set), vec![2.0]);
    }

    #[test]
    fn max_score_is_four() {
        let set = init_clusters(&[0.0, 1.0], &[5, 0]).unwrap();
        let norm = vec![2.0, 2.0];
        assert_eq!(frequency_score(&set, &norm, 0), 4.0);
    }

    #[test]
    fn filter_trace_with_frequency() {
        let set = five();
        let cfg = ClusterConfig::new(5, 3, 1).with_size_max(8);
        let norm = norm_counts(&set);
        let expect = [1.6, 1.0, 1.0, 1.0, 1.8];
        for (a, b) in norm.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = select_candidates(&set, &cfg).unwrap();
        assert_eq!(lefts(&c), vec![1]);
        assert_eq!(c[0].right_index, 2);
        assert_eq!(c[0].distance, 2.0);
        assert_eq!(c[0].combined_size, 2);
    }

    #[test]
    fn filter_trace_without_frequency() {
        let set = five();
        let cfg = ClusterConfig::new(5, 3, 1).with_size_max(8).with_frequency(false, true);
        assert_eq!(lefts(&select_candidates(&set, &cfg).unwrap()), vec![0]);
    }

    #[test]
    fn two_clusters_returns_the_pair() {
        let set = init_clusters(&[4.0, -1.0], &[3, 3]).unwrap();
        for (filter, size_max) in [(true, 2), (false, 2), (true, 100)] {
            let cfg = ClusterConfig::new(2, 1, 7)
                .with_size_max(size_max)
                .with_frequency(filter, false);
            let c = select_candidates(&set, &cfg).unwrap();
            assert_eq!(lefts(&c), vec![0]);
        }
    }

    #[test]
    fn size_fallback_picks_smallest_merged_size() {
        // all pairs reach size_max, so stage 3 keeps the smallest combined sizes
        let mut set = init_clusters(&[0.0, 1.0, 2.0, 3.0], &[0; 4]).unwrap();
        for (c, s) in set.clusters.iter_mut().zip([3u64, 1, 2, 2]) {
            c.size = s;
        }
        let cfg = ClusterConfig {
            k: 3,
            target: 1,
            size_max: 3,
            use_frequency_filter: false,
            use_frequency_weighting: false,
            stage1_factor: 2.0,
            stage2_factor: 0.75,
            stage3_factor: 0.25,
        };
        let c = select_candidates(&set, &cfg).unwrap();
        // M = 6, stage 3 keeps floor(1.5) = 1: pair (1,2) has size 3
        assert_eq!(lefts(&c), vec![1]);
    }

    #[test]
    fn at_target_is_a_contract_violation() {
        let set = five();
        let cfg = ClusterConfig::new(6, 5, 1);
        assert!(matches!(select_candidates(&set, &cfg), Err(Error::Contract(_))));
    }
}
