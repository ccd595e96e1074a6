use crate::error::{Error, Result};

fn class_counts(labels: &[u8]) -> Result<(f64, f64)> {
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative labels"));
    }
    Ok((pos as f64, neg as f64))
}

/// ROC AUC as the Mann–Whitney statistic: sort once, give tied scores their
/// average rank, and sum the ranks of the positives.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::contract("scores and labels differ in length"));
    }
    let (pos, neg) = class_counts(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        let positives = order[i..j].iter().filter(|&&k| labels[k] != 0).count();
        rank_sum += avg * positives as f64;
        i = j;
    }
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Quadratic pair-counting AUC. Reference for tests.
pub fn auc_brute_force(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(labels)?;
    let mut wins = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] == 0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos * neg))
}

/// Mean binary cross-entropy of probabilities, clipped away from 0 and 1.
pub fn logloss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::contract("logloss needs equal, non-empty inputs"));
    }
    const CLIP: f64 = 1e-15;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            if y != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_is_one_half() {
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn one_concordant_one_discordant() {
        assert_eq!(auc(&[0.8, 0.4, 0.6], &[1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc_brute_force(&[0.8, 0.4, 0.6], &[1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auc(&[0.1], &[0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn logloss_of_half_is_ln2() {
        let l = logloss(&[0.5, 0.5], &[0, 1]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!(logloss(&[0.0], &[1]).unwrap().is_finite());
    }
}
