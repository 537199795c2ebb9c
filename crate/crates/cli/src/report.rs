//! Cross-run aggregation: mean and sample std of each metric over run
//! directories that share a schema (typically one directory per seed).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::output::{csv_text, num};
use crate::CliError;

/// Tables that are aggregated: path, key columns (hole, condition,
/// data_fraction), and metric columns.
pub const SOURCES: [(&str, [&str; 3], &[&str]); 3] = [
    ("eval.csv", ["hole", "init", "data_fraction"], &["err"]),
    (
        "mpc/success.csv",
        ["hole", "controller", "data_fraction"],
        &["success_rate", "mean_steps"],
    ),
    (
        "rl/success.csv",
        ["hole", "controller", "data_fraction"],
        &["success_rate", "mean_steps"],
    ),
];

pub const HEADER: [&str; 8] = [
    "source",
    "hole",
    "condition",
    "data_fraction",
    "metric",
    "n",
    "mean",
    "std",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub source: String,
    pub hole: String,
    pub condition: String,
    pub data_fraction: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample std (n - 1 denominator); 0 for a single run.
    pub std: f64,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn schema(msg: String) -> CliError {
    CliError::Runtime(format!("schema mismatch: {msg}"))
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|x| x.iter().map(String::from).collect())
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    Ok(Table { header, rows })
}

fn column(t: &Table, name: &str, path: &Path) -> Result<usize, CliError> {
    t.header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| schema(format!("{} has no column {name:?}", path.display())))
}

/// Aggregates every known table present in the first directory. Each such
/// table must exist in every directory with the same header and the same
/// set of keys.
pub fn aggregate(dirs: &[PathBuf]) -> Result<Vec<ReportRow>, CliError> {
    let first = dirs
        .first()
        .ok_or_else(|| CliError::Config("report needs at least one run directory".into()))?;
    let mut out = Vec::new();
    let mut found = false;
    for (rel, keys, metrics) in SOURCES {
        if !first.join(rel).is_file() {
            continue;
        }
        found = true;
        let mut order: Vec<[String; 3]> = Vec::new();
        let mut values: HashMap<([String; 3], &str), Vec<f64>> = HashMap::new();
        let mut header: Option<Vec<String>> = None;
        let mut key_set: Option<Vec<[String; 3]>> = None;
        for dir in dirs {
            let path = dir.join(rel);
            if !path.is_file() {
                return Err(schema(format!("{} is missing", path.display())));
            }
            let t = read_table(&path)?;
            match &header {
                None => header = Some(t.header.clone()),
                Some(h) if *h != t.header => {
                    return Err(schema(format!(
                        "{} header {:?} differs from {h:?}",
                        path.display(),
                        t.header
                    )))
                }
                Some(_) => {}
            }
            let mut key_cols = [0; 3];
            for (slot, k) in key_cols.iter_mut().zip(keys) {
                *slot = column(&t, k, &path)?;
            }
            let metric_cols = metrics
                .iter()
                .map(|m| column(&t, m, &path))
                .collect::<Result<Vec<_>, _>>()?;
            let mut seen = Vec::with_capacity(t.rows.len());
            for row in &t.rows {
                let key = key_cols.map(|c| row[c].clone());
                if seen.contains(&key) {
                    return Err(schema(format!("{} repeats key {key:?}", path.display())));
                }
                seen.push(key.clone());
                for (m, &c) in metrics.iter().zip(&metric_cols) {
                    let v: f64 = row[c]
                        .parse()
                        .map_err(|_| schema(format!("{}: {m} value {:?} is not a number", path.display(), row[c])))?;
                    values.entry((key.clone(), m)).or_default().push(v);
                }
            }
            let mut sorted = seen.clone();
            sorted.sort();
            match &key_set {
                None => {
                    key_set = Some(sorted);
                    order = seen;
                }
                Some(k) if *k != sorted => {
                    return Err(schema(format!(
                        "{} has different rows than {}",
                        path.display(),
                        first.join(rel).display()
                    )))
                }
                Some(_) => {}
            }
        }
        for key in &order {
            for m in metrics.iter() {
                let v = &values[&(key.clone(), *m)];
                let (mean, std) = mean_std(v);
                out.push(ReportRow {
                    source: rel.to_string(),
                    hole: key[0].clone(),
                    condition: key[1].clone(),
                    data_fraction: key[2].clone(),
                    metric: m.to_string(),
                    n: v.len(),
                    mean,
                    std,
                });
            }
        }
    }
    if !found {
        return Err(schema(format!(
            "{} contains none of {:?}",
            first.display(),
            SOURCES.map(|s| s.0)
        )));
    }
    Ok(out)
}

/// Shifted by the first value, so constant inputs give exactly that value
/// and a zero std.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let x0 = v[0];
    let (s, ss) = v
        .iter()
        .fold((0.0, 0.0), |(s, ss), x| (s + (x - x0), ss + (x - x0) * (x - x0)));
    let mean = x0 + s / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = ((ss - s * s / n) / (n - 1.0)).max(0.0);
    (mean, var.sqrt())
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.source.clone(),
                r.hole.clone(),
                r.condition.clone(),
                r.data_fraction.clone(),
                r.metric.clone(),
                r.n.to_string(),
                num(r.mean),
                num(r.std),
            ]
        })
        .collect();
    csv_text(&HEADER, &body)
}
