//! Multi-merge agglomerative clustering over one latent dimension.
//!
//! Every categorical id starts as a singleton cluster positioned at its latent
//! value. Clusters are kept sorted by value, so the only merges that make sense
//! are between neighbours. Each step scores all neighbouring pairs, filters
//! them down to at most `k` candidates (access frequency, then distance, then
//! merged size), unifies overlapping candidates into chains, splits chains that
//! would exceed the size cap, and merges. The loop stops once the number of
//! clusters reaches the target.
//!
//! Merged values always lie inside the value range of the merged group and the
//! groups are contiguous, so the set stays sorted without ever re-sorting.

mod chain;
mod select;

use std::ops::Range;

pub use chain::unify_and_split;
pub use select::{frequency_score, norm_counts, select_candidates};

use crate::error::{Error, Result};

/// One cluster of original ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub value: f64,
    pub size: u64,
    pub count: u64,
    pub members: Vec<usize>,
}

impl Cluster {
    pub fn singleton(id: usize, value: f64, count: u64) -> Self {
        Cluster {
            value,
            size: 1,
            count,
            members: vec![id],
        }
    }
}

/// Clusters sorted ascending by value, plus the conserved totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub total_size: u64,
    pub total_count: u64,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.clusters.iter().map(|c| c.value)
    }

    pub fn is_sorted(&self) -> bool {
        self.clusters.windows(2).all(|w| w[1].value >= w[0].value)
    }

    /// Checks sortedness and that sizes and counts still add up to the totals.
    pub fn check_invariants(&self) -> Result<()> {
        if !self.is_sorted() {
            return Err(Error::contract("cluster set is not sorted by value"));
        }
        let size: u64 = self.clusters.iter().map(|c| c.size).sum();
        let count: u64 = self.clusters.iter().map(|c| c.count).sum();
        if size != self.total_size || count != self.total_count {
            return Err(Error::contract(format!(
                "conservation violated: size {size}/{}, count {count}/{}",
                self.total_size, self.total_count
            )));
        }
        for c in &self.clusters {
            if c.size == 0 || c.size as usize != c.members.len() {
                return Err(Error::contract("cluster size does not match its members"));
            }
        }
        Ok(())
    }

    /// Maps every original id to the index of the cluster holding it.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.total_size as usize];
        for (i, c) in self.clusters.iter().enumerate() {
            for &m in &c.members {
                out[m] = i;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    /// Target number of merges per step.
    pub k: usize,
    /// Final number of clusters.
    pub target: usize,
    /// A merged pair must stay strictly below this size to pass the size filter.
    pub size_max: u64,
    pub use_frequency_filter: bool,
    pub use_frequency_weighting: bool,
    pub stage1_factor: f64,
    pub stage2_factor: f64,
    pub stage3_factor: f64,
}

impl ClusterConfig {
    /// Frequency filter and weighting on, default stage factors and
    /// `size_max = 4 * ceil(n / target)`.
    pub fn new(n: usize, target: usize, k: usize) -> Self {
        ClusterConfig {
            k,
            target,
            size_max: default_size_max(n, target),
            use_frequency_filter: true,
            use_frequency_weighting: true,
            stage1_factor: 2.0,
            stage2_factor: 0.75,
            stage3_factor: 0.5,
        }
    }

    pub fn with_size_max(mut self, size_max: u64) -> Self {
        self.size_max = size_max;
        self
    }

    pub fn with_frequency(mut self, filter: bool, weighting: bool) -> Self {
        self.use_frequency_filter = filter;
        self.use_frequency_weighting = weighting;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if self.target == 0 || self.target >= n {
            return Err(Error::invalid(format!("target {} must be in [1, {n})", self.target)));
        }
        let balanced = n.div_ceil(self.target) as u64;
        if self.size_max < balanced {
            return Err(Error::invalid(format!(
                "size_max {} is below ceil(N / target) = {balanced}",
                self.size_max
            )));
        }
        for (name, f) in [
            ("stage1_factor", self.stage1_factor),
            ("stage2_factor", self.stage2_factor),
            ("stage3_factor", self.stage3_factor),
        ] {
            if !(f > 0.0 && f <= 2.0) {
                return Err(Error::invalid(format!("{name} = {f} not in (0, 2]")));
            }
        }
        Ok(())
    }
}

pub fn default_size_max(n: usize, target: usize) -> u64 {
    4 * n.div_ceil(target.max(1)) as u64
}

/// A neighbouring pair `(left, left + 1)` that may be merged this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeCandidate {
    pub left_index: usize,
    pub right_index: usize,
    pub frequency_score: f64,
    pub distance: f64,
    pub combined_size: u64,
}

/// Builds one singleton per id, sorted by value with ties broken by id.
pub fn init_clusters(values: &[f64], counts: &[u64]) -> Result<ClusterSet> {
    if values.is_empty() {
        return Err(Error::invalid("cannot cluster an empty set of values"));
    }
    if values.len() != counts.len() {
        return Err(Error::invalid(format!(
            "{} values but {} counts",
            values.len(),
            counts.len()
        )));
    }
    if let Some(id) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("value for id {id} is not finite")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let clusters = order
        .into_iter()
        .map(|id| Cluster::singleton(id, values[id], counts[id]))
        .collect();
    Ok(ClusterSet {
        clusters,
        total_size: values.len() as u64,
        total_count: counts.iter().sum(),
    })
}

/// Merges a contiguous run of clusters. Sizes and counts add; the value is the
/// plain mean of the member cluster values, or the count-weighted mean when
/// weighting is on and the group has any accesses at all.
pub fn merge_group(group: &[Cluster], use_frequency_weighting: bool) -> Result<Cluster> {
    let (first, rest) = group
        .split_first()
        .ok_or_else(|| Error::contract("cannot merge an empty group"))?;
    if rest.is_empty() {
        return Ok(first.clone());
    }
    let size = group.iter().map(|c| c.size).sum();
    let count: u64 = group.iter().map(|c| c.count).sum();
    let value = if use_frequency_weighting && count > 0 {
        group.iter().map(|c| c.count as f64 * c.value).sum::<f64>() / count as f64
    } else {
        group.iter().map(|c| c.value).sum::<f64>() / group.len() as f64
    };
    // rounding can push the mean a hair past the group's range
    let (lo, hi) = group.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(c.value), hi.max(c.value))
    });
    let mut members = Vec::with_capacity(size as usize);
    for c in group {
        members.extend_from_slice(&c.members);
    }
    Ok(Cluster {
        value: value.clamp(lo, hi),
        size,
        count,
        members,
    })
}

/// What one clustering step did.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub clusters_before: usize,
    pub clusters_after: usize,
    pub candidates: Vec<MergeCandidate>,
    pub groups: Vec<Range<usize>>,
}

/// Stepwise driver. [`run`] is the usual entry point; this is exposed so
/// callers can observe individual steps.
#[derive(Debug, Clone)]
pub struct Clusterer {
    set: ClusterSet,
    cfg: ClusterConfig,
    steps: usize,
}

impl Clusterer {
    pub fn new(values: &[f64], counts: &[u64], cfg: ClusterConfig) -> Result<Self> {
        let set = init_clusters(values, counts)?;
        cfg.validate(values.len())?;
        Ok(Clusterer { set, cfg, steps: 0 })
    }

    pub fn set(&self) -> &ClusterSet {
        &self.set
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.set.len() <= self.cfg.target
    }

    /// Runs one select / unify / merge step. Returns `None` once the target is reached.
    pub fn step(&mut self) -> Result<Option<StepReport>> {
        if self.is_done() {
            return Ok(None);
        }
        let before = self.set.len();
        let candidates = select_candidates(&self.set, &self.cfg)?;
        let groups = unify_and_split(&candidates, &self.set, self.cfg.size_max);
        if groups.is_empty() {
            return Err(Error::contract("clustering step produced no merges"));
        }

        let mut merged = Vec::with_capacity(before - groups.len());
        let mut cursor = 0;
        let mut old = std::mem::take(&mut self.set.clusters).into_iter();
        for g in &groups {
            merged.extend(old.by_ref().take(g.start - cursor));
            let group: Vec<Cluster> = old.by_ref().take(g.len()).collect();
            merged.push(merge_group(&group, self.cfg.use_frequency_weighting)?);
            cursor = g.end;
        }
        merged.extend(old);
        self.set.clusters = merged;
        self.set.check_invariants()?;
        if self.set.len() >= before {
            return Err(Error::contract("clustering step made no progress"));
        }
        self.steps += 1;
        Ok(Some(StepReport {
            clusters_before: before,
            clusters_after: self.set.len(),
            candidates,
            groups,
        }))
    }

    pub fn into_set(self) -> ClusterSet {
        self.set
    }
}

/// Clusters `values` down to at most `cfg.target` clusters.
///
/// Returns the final set and, for every original id, the index of its cluster.
/// The final count can land below the target when a terminal step collapses
/// a chain; callers should read it off the returned set.
pub fn run(values: &[f64], counts: &[u64], cfg: &ClusterConfig) -> Result<(ClusterSet, Vec<usize>)> {
    let mut clusterer = Clusterer::new(values, counts, cfg.clone())?;
    let limit = values.len() - cfg.target;
    while clusterer.step()?.is_some() {
        if clusterer.steps() > limit {
            return Err(Error::contract("clustering exceeded N - target steps"));
        }
    }
    let set = clusterer.into_set();
    let assignment = set.assignment();
    Ok((set, assignment))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, target: usize, size_max: u64) -> ClusterConfig {
        ClusterConfig::new(5, target, k).with_size_max(size_max)
    }

    #[test]
    fn init_single_element() {
        let set = init_clusters(&[3.0], &[5]).unwrap();
        assert_eq!(set.clusters, vec![Cluster::singleton(0, 3.0, 5)]);
    }

    #[test]
    fn init_sorts_and_breaks_ties_by_id() {
        let set = init_clusters(&[2.0, 1.0], &[0, 0]).unwrap();
        assert_eq!(set.clusters[0].members, vec![1]);
        assert_eq!(set.clusters[1].members, vec![0]);

        let set = init_clusters(&[1.0, 1.0, 0.5], &[7, 8, 9]).unwrap();
        let order: Vec<usize> = set.clusters.iter().map(|c| c.members[0]).collect();
        assert_eq!(order, vec![2, 0, 1]);
        assert_eq!(set.total_count, 24);
    }

    #[test]
    fn init_rejects_non_finite() {
        assert!(matches!(
            init_clusters(&[1.0, f64::NAN], &[0, 0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(init_clusters(&[f64::INFINITY], &[0]).is_err());
        assert!(init_clusters(&[], &[]).is_err());
    }

    fn c(value: f64, size: u64, count: u64, first: usize) -> Cluster {
        Cluster {
            value,
            size,
            count,
            members: (first..first + size as usize).collect(),
        }
    }

    #[test]
    fn merge_unweighted_and_weighted() {
        let group = [c(0.2, 1, 10, 0), c(0.4, 2, 30, 1)];
        let m = merge_group(&group, false).unwrap();
        assert!((m.value - 0.3).abs() < 1e-12);
        assert_eq!((m.size, m.count), (3, 40));
        assert_eq!(m.members, vec![0, 1, 2]);

        let m = merge_group(&group, true).unwrap();
        assert!((m.value - 0.35).abs() < 1e-12);
    }

    #[test]
    fn merge_weighted_with_zero_counts_falls_back_to_mean() {
        let group = [c(1.0, 1, 0, 0), c(3.0, 1, 0, 1)];
        assert_eq!(merge_group(&group, true).unwrap().value, 2.0);
    }

    #[test]
    fn merge_single_and_empty() {
        let one = [c(0.7, 2, 3, 4)];
        assert_eq!(merge_group(&one, true).unwrap(), one[0]);
        assert!(matches!(merge_group(&[], false), Err(Error::Contract(_))));
    }

    #[test]
    fn worked_trace_weighting_on_and_off() {
        let values = [0.0, 1.0, 3.0, 6.0, 10.0];
        let counts = [9, 0, 0, 0, 12];
        for (weighting, merged) in [(true, 0.0), (false, 1.0)] {
            let cfg = cfg(1, 3, 8).with_frequency(true, weighting);
            let (set, assignment) = run(&values, &counts, &cfg).unwrap();
            assert_eq!(assignment, vec![0, 0, 0, 1, 2]);
            let v: Vec<f64> = set.values().collect();
            assert_eq!(v, vec![merged, 6.0, 10.0]);
            assert_eq!(set.clusters[0].size, 3);
            assert_eq!(set.clusters[0].count, 9);
        }
    }

    #[test]
    fn one_step_when_one_above_target() {
        let mut cl = Clusterer::new(&[0.0, 5.0, 5.5, 9.0], &[1, 1, 1, 1], ClusterConfig::new(4, 3, 4)).unwrap();
        let report = cl.step().unwrap().unwrap();
        assert_eq!(report.groups, vec![1..3]);
        assert!(cl.step().unwrap().is_none());
        assert_eq!(cl.set().len(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(ClusterConfig::new(10, 10, 1).validate(10).is_err());
        assert!(ClusterConfig::new(10, 0, 1).validate(10).is_err());
        assert!(ClusterConfig::new(10, 5, 0).validate(10).is_err());
        assert!(ClusterConfig::new(10, 3, 1).with_size_max(3).validate(10).is_err());
        assert!(ClusterConfig::new(10, 3, 1).with_size_max(4).validate(10).is_ok());
        let mut bad = ClusterConfig::new(10, 3, 1);
        bad.stage2_factor = 2.5;
        assert!(bad.validate(10).is_err());
        assert_eq!(default_size_max(10, 3), 16);
    }
}
