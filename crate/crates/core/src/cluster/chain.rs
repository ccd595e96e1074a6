use std::ops::Range;

use super::{ClusterSet, MergeCandidate};

/// Turns this step's candidate pairs into disjoint merge groups.
///
/// Overlapping pairs are unified into maximal chains of consecutive clusters.
/// A chain whose total size exceeds `size_max` is broken into pairs from left
/// to right, leaving a trailing odd cluster unmerged. Relative sizes inside
/// the chain are not considered when splitting.
///
/// Groups are returned in ascending order; each covers at least two clusters.
pub fn unify_and_split(candidates: &[MergeCandidate], set: &ClusterSet, size_max: u64) -> Vec<Range<usize>> {
    let mut lefts: Vec<usize> = candidates.iter().map(|c| c.left_index).collect();
    lefts.sort_unstable();
    lefts.dedup();

    let mut groups = Vec::new();
    let mut i = 0;
    while i < lefts.len() {
        let start = lefts[i];
        let mut end = start + 2;
        i += 1;
        while i < lefts.len() && lefts[i] == end - 1 {
            end += 1;
            i += 1;
        }
        let total: u64 = set.clusters[start..end].iter().map(|c| c.size).sum();
        if total <= size_max {
            groups.push(start..end);
        } else {
            groups.extend((start..end - 1).step_by(2).map(|s| s..s + 2));
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::super::init_clusters;
    use super::*;

    fn pair(left: usize) -> MergeCandidate {
        MergeCandidate {
            left_index: left,
            right_index: left + 1,
            frequency_score: 1.0,
            distance: 1.0,
            combined_size: 2,
        }
    }

    fn unit_set(n: usize) -> ClusterSet {
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        init_clusters(&values, &vec![0; n]).unwrap()
    }

    #[test]
    fn abcde_chain_splits_into_pairs() {
        let set = unit_set(5);
        let cands: Vec<_> = (0..4).map(pair).collect();
        assert_eq!(unify_and_split(&cands, &set, 2), vec![0..2, 2..4]);
    }

    #[test]
    fn abc_chain_leaves_c_alone() {
        let set = unit_set(4);
        assert_eq!(unify_and_split(&[pair(0), pair(1)], &set, 2), vec![0..2]);
    }

    #[test]
    fn disjoint_pairs_unchanged() {
        let set = unit_set(4);
        assert_eq!(unify_and_split(&[pair(2), pair(0)], &set, 2), vec![0..2, 2..4]);
    }

    #[test]
    fn chain_within_limit_stays_whole() {
        let set = unit_set(6);
        let cands = [pair(3), pair(1), pair(2)];
        assert_eq!(unify_and_split(&cands, &set, 4), vec![1..5]);
    }
}
