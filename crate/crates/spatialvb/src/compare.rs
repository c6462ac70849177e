//! `compare`: side-by-side posterior summaries of completed fits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::config::usage;
use crate::data::{fmt_f64, parse_f64, reader, Dataset, Truth, NA};
use crate::fit::RunSummary;

pub struct Comparison {
    pub labels: Vec<String>,
    /// Truth column, when the dataset has a `truth.json`.
    pub truth: Option<Vec<Option<f64>>>,
    /// One row per parameter: `(name, [(mean, sd) per run])`.
    pub rows: Vec<(String, Vec<Option<(f64, f64)>>)>,
    /// MSE of missing-value posterior means against `y_full`.
    pub mse: Option<Vec<f64>>,
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let p = dir.join("summary.json");
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

/// `(index, mean)` pairs of `missing_posterior.csv`.
pub fn read_missing_means(dir: &Path) -> Result<Vec<(usize, f64)>> {
    let p = dir.join("missing_posterior.csv");
    let mut r = reader(&p)?;
    if r.headers()?.iter().ne(["index", "mean", "sd"]) {
        bail!("{}: unexpected header", p.display());
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let i: usize = rec[0].parse().with_context(|| format!("{} row {line}", p.display()))?;
        out.push((i, parse_f64(&rec[1], &|| format!("{} row {line}", p.display()))?));
    }
    Ok(out)
}

pub fn mse(means: &[(usize, f64)], y_full: &[f64]) -> Result<f64> {
    if means.is_empty() {
        bail!("no missing values to score");
    }
    let mut s = 0.0;
    for &(i, m) in means {
        let t = y_full.get(i).with_context(|| format!("index {i} outside y_full"))?;
        s += (m - t) * (m - t);
    }
    Ok(s / means.len() as f64)
}

pub fn compare(runs: &[PathBuf]) -> Result<Comparison> {
    if runs.len() < 2 {
        return usage("compare needs at least two run directories");
    }
    let sums: Vec<RunSummary> = runs.iter().map(|d| read_summary(d)).collect::<Result<_>>()?;
    if let Some((k, s)) = sums.iter().enumerate().find(|(_, s)| s.dataset != sums[0].dataset) {
        bail!(
            "runs were fitted to different datasets: {} has {} but {} has {}",
            runs[0].display(),
            sums[0].dataset,
            runs[k].display(),
            s.dataset
        );
    }

    let mut labels: Vec<String> = sums.iter().map(|s| s.label.clone()).collect();
    for k in 0..labels.len() {
        if labels.iter().filter(|l| **l == sums[k].label).count() > 1 {
            let dir =
                runs[k].file_name().map_or_else(|| runs[k].display().to_string(), |f| f.to_string_lossy().into_owned());
            labels[k] = format!("{} ({dir})", sums[k].label);
        }
    }

    let mut names: Vec<String> = Vec::new();
    for s in &sums {
        for e in &s.parameters {
            if !names.contains(&e.name) {
                names.push(e.name.clone());
            }
        }
    }
    let rows = names
        .iter()
        .map(|n| {
            let cells =
                sums.iter().map(|s| s.parameters.iter().find(|e| &e.name == n).map(|e| (e.mean, e.sd))).collect();
            (n.clone(), cells)
        })
        .collect();

    let data_dir = sums.iter().find_map(|s| s.data_dir.clone());
    let truth_path = data_dir.as_ref().map(|d| d.join("truth.json")).filter(|p| p.exists());
    let truth: Option<Truth> = match &truth_path {
        Some(p) => Some(serde_json::from_str(&fs::read_to_string(p)?).context("parsing truth.json")?),
        None => None,
    };
    let mse = match (&truth, &data_dir) {
        (Some(_), Some(d)) => {
            let data = Dataset::read(d)?;
            if data.fingerprint()? != sums[0].dataset {
                bail!("dataset at {} no longer matches the fitted runs", d.display());
            }
            match &data.y_full {
                Some(y) => Some(runs.iter().map(|r| mse(&read_missing_means(r)?, y)).collect::<Result<Vec<_>>>()?),
                None => None,
            }
        }
        _ => None,
    };
    let truth = truth.map(|t| names.iter().map(|n| t.value(n)).collect());
    Ok(Comparison { labels, truth, rows, mse })
}

fn cell(v: Option<f64>) -> String {
    v.map_or(NA.to_string(), fmt_f64)
}

impl Comparison {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["parameter".to_string(), "truth".to_string()];
        for l in &self.labels {
            header.push(format!("{l} mean"));
            header.push(format!("{l} sd"));
        }
        w.write_record(&header)?;
        for (k, (name, cells)) in self.rows.iter().enumerate() {
            let mut rec = vec![name.clone(), cell(self.truth.as_ref().and_then(|t| t[k]))];
            for c in cells {
                rec.push(cell(c.map(|c| c.0)));
                rec.push(cell(c.map(|c| c.1)));
            }
            w.write_record(&rec)?;
        }
        let mut rec = vec!["MSE".to_string(), NA.to_string()];
        for k in 0..self.labels.len() {
            rec.push(cell(self.mse.as_ref().map(|m| m[k])));
            rec.push(NA.to_string());
        }
        w.write_record(&rec)?;
        w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
    }

    /// Fixed-width table: `mean (sd)` per method.
    pub fn render(&self) -> String {
        let mut header = vec!["parameter".to_string()];
        if self.truth.is_some() {
            header.push("truth".into());
        }
        header.extend(self.labels.iter().cloned());
        let mut lines = vec![header];
        for (k, (name, cells)) in self.rows.iter().enumerate() {
            let mut l = vec![name.clone()];
            if let Some(t) = &self.truth {
                l.push(t[k].map_or("-".into(), |v| format!("{v:.4}")));
            }
            l.extend(cells.iter().map(|c| c.map_or("-".into(), |(m, s)| format!("{m:.4} ({s:.4})"))));
            lines.push(l);
        }
        if let Some(m) = &self.mse {
            let mut l = vec!["MSE".to_string()];
            if self.truth.is_some() {
                l.push(String::new());
            }
            l.extend(m.iter().map(|v| format!("{v:.4}")));
            lines.push(l);
        }
        let widths: Vec<usize> =
            (0..lines[0].len()).map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
