//! metrics.csv / summary.csv rendering.
//!
//! Every row starts with the provenance key
//! `dataset,model,variant,alpha,surrogate,capacity,propensity,seed,config_hash`.

use std::fmt::Write as _;

use crate::config::ExperimentConfig;
use crate::pipeline::{Cell, CellResult};

const KEY: &str = "dataset,model,variant,alpha,surrogate,capacity,propensity,seed,config_hash";

#[derive(Clone, Debug)]
pub struct Row {
    pub dataset: String,
    pub cell: Cell,
    pub surrogate: String,
    pub capacity: String,
    pub propensity: String,
    pub config_hash: String,
    pub outcome: Result<CellResult, String>,
}

impl Row {
    pub fn new(cfg: &ExperimentConfig, cell: &Cell, outcome: Result<CellResult, String>) -> Self {
        Row {
            dataset: cfg.name.clone(),
            cell: *cell,
            surrogate: cfg.surrogate.to_string(),
            capacity: cfg.capacity.to_string(),
            propensity: cfg.propensity.to_string(),
            config_hash: cfg.hash_hex(),
            outcome,
        }
    }

    /// Metric values in [`metric_names`] order; `None` for missing values.
    pub fn values(&self, tops: &[usize]) -> Option<Vec<Option<f64>>> {
        let r = &self.outcome.as_ref().ok()?.report;
        let mut v = vec![Some(r.rmse), r.pairwise01, Some(r.capacity_loss), Some(r.overall)];
        for map in [&r.map_at, &r.wap_at, &r.wmcv_at] {
            v.extend(tops.iter().map(|k| map.get(k).copied()));
        }
        Some(v)
    }
}

pub fn metric_names(tops: &[usize]) -> Vec<String> {
    let mut names: Vec<String> = ["rmse", "pairwise01", "capacity_loss", "overall"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["map", "wap", "wmcv"] {
        names.extend(tops.iter().map(|k| format!("{prefix}@{k}")));
    }
    names
}

/// Shortest round-trip form; empty for missing, `NaN` kept literal.
fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Provenance key; the summary leaves out the seed.
fn key(out: &mut String, row: &Row, with_seed: bool) {
    write!(
        out,
        "{},{},{},{},{},{},{}",
        csv_field(&row.dataset),
        row.cell.family,
        row.cell.variant,
        row.cell.alpha,
        row.surrogate,
        row.capacity,
        row.propensity
    )
    .unwrap();
    if with_seed {
        write!(out, ",{}", row.cell.seed).unwrap();
    }
    write!(out, ",{}", row.config_hash).unwrap();
}

pub fn metrics_header(tops: &[usize]) -> String {
    format!("{KEY},status,iterations,stop_reason,{}", metric_names(tops).join(","))
}

pub fn metrics_csv(tops: &[usize], rows: &[Row]) -> String {
    let mut out = metrics_header(tops);
    out.push('\n');
    let blanks = ",".repeat(metric_names(tops).len());
    for row in rows {
        key(&mut out, row, true);
        match &row.outcome {
            Ok(result) => {
                let (iters, stop) = match result.training {
                    Some((i, s)) => (i.to_string(), s.to_string()),
                    None => (String::new(), String::new()),
                };
                write!(out, ",ok,{iters},{stop}").unwrap();
                for v in row.values(tops).unwrap() {
                    write!(out, ",{}", num(v)).unwrap();
                }
            }
            Err(e) => write!(out, ",{},,{blanks}", csv_field(&format!("error: {e}"))).unwrap(),
        }
        out.push('\n');
    }
    out
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per (model, variant, alpha) over the successful seeds.
pub fn summary_csv(tops: &[usize], rows: &[Row]) -> String {
    let names = metric_names(tops);
    let mut out = KEY.replace(",seed,", ",");
    out.push_str(",runs,failed");
    for n in &names {
        write!(out, ",{n}_mean,{n}_std").unwrap();
    }
    out.push('\n');

    let mut groups: Vec<Vec<&Row>> = Vec::new();
    for row in rows {
        let same = |g: &Vec<&Row>| {
            let c = &g[0].cell;
            c.family == row.cell.family && c.variant == row.cell.variant && c.alpha == row.cell.alpha
        };
        match groups.iter_mut().find(|g| same(g)) {
            Some(g) => g.push(row),
            None => groups.push(vec![row]),
        }
    }
    for g in groups {
        let first = g[0];
        key(&mut out, first, false);
        let ok: Vec<Vec<Option<f64>>> = g.iter().filter_map(|r| r.values(tops)).collect();
        write!(out, ",{},{}", ok.len(), g.len() - ok.len()).unwrap();
        for m in 0..names.len() {
            let xs: Vec<f64> = ok.iter().filter_map(|v| v[m]).collect();
            if xs.is_empty() {
                out.push_str(",,");
            } else {
                let (mean, std) = mean_std(&xs);
                write!(out, ",{mean},{std}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            metrics_header(&[1, 5]),
            "dataset,model,variant,alpha,surrogate,capacity,propensity,seed,config_hash,status,iterations,stop_reason,\
             rmse,pairwise01,capacity_loss,overall,map@1,map@5,wap@1,wap@5,wmcv@1,wmcv@5"
        );
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
