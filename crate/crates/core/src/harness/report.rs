use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use super::SweepRow;
use crate::error::{Error, Result};

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}

fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Groups rows by method, fraction, table count and teacher window, and
/// reports mean AUC ± sample standard deviation over the successful runs.
/// The best mean AUC at each fraction is marked.
pub fn report_markdown(rows: &[SweepRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to report"));
    }
    type Key = (String, String, usize, String, String);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    let mut order: Vec<Key> = Vec::new();
    for r in rows {
        let key = (
            format!("{}", r.frac),
            r.method.clone(),
            r.tables,
            r.teacher_days.clone().unwrap_or_default(),
            r.teacher_samples.map(|s| s.to_string()).unwrap_or_default(),
        );
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            (Vec::new(), Vec::new(), 0)
        });
        match (r.is_ok(), r.auc, r.logloss) {
            (true, Some(a), Some(l)) => {
                g.0.push(a);
                g.1.push(l);
            }
            _ => g.2 += 1,
        }
    }
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for (k, (aucs, _, _)) in &groups {
        if !aucs.is_empty() {
            let m = mean_std(aucs).0;
            let b = best.entry(k.0.clone()).or_insert(f64::NEG_INFINITY);
            *b = b.max(m);
        }
    }
    let mut out = String::new();
    out.push_str("| method | frac | tables | teacher_days | teacher_samples | runs | failed | auc_mean | auc_std | logloss_mean | best |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for k in &order {
        let (aucs, losses, failed) = &groups[k];
        let (frac, method, tables, days, samples) = k;
        let (auc_mean, auc_std, loss_mean, is_best) = if aucs.is_empty() {
            (String::new(), String::new(), String::new(), "")
        } else {
            let (m, s) = mean_std(aucs);
            (
                format!("{m:.6}"),
                s.map(|s| format!("{s:.6}")).unwrap_or_default(),
                format!("{:.6}", mean_std(losses).0),
                if best.get(frac) == Some(&m) { "*" } else { "" },
            )
        };
        writeln!(
            out,
            "| {method} | {frac} | {tables} | {days} | {samples} | {} | {failed} | {auc_mean} | {auc_std} | {loss_mean} | {is_best} |",
            aucs.len()
        )
        .expect("writing to a String");
    }
    Ok(out)
}
