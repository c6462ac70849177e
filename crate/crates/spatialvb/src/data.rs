//! Dataset files.
//!
//! A dataset directory holds
//!
//! | file          | columns                         | notes                           |
//! |---------------|---------------------------------|---------------------------------|
//! | `y.csv`       | `y`                             | `NA` at missing units           |
//! | `X.csv`       | `x0..x{r}`                      | `x0` is the intercept           |
//! | `W.csv`       | `row,col,weight`                | 0-based raw weight triplets     |
//! | `Xstar.csv`   | `xstar0..`                      | MNAR selection design, optional |
//! | `pattern.csv` | `index,missing`                 | optional, checked against `y`   |
//! | `y_full.csv`  | `y`                             | ground truth, optional          |
//! | `truth.json`  | [`Truth`]                       | optional                        |
//!
//! Reals are written in the shortest decimal form that parses back to the
//! same `f64`. Empty fields are rejected everywhere.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spatialvb_core::missing::{MissingPattern, SimConfig, SimulatedData};
use spatialvb_core::posterior::{PriorSpec, TargetDensity};
use spatialvb_core::spatial::{build_rook_grid_weights, SpatialWeights};

pub const NA: &str = "NA";

/// Data-generating values of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_y: Option<f64>,
    pub n_missing: usize,
    pub simulation: SimConfig,
}

impl Truth {
    /// Value of a constrained parameter by its summary name.
    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            "sigma2" => Some(self.sigma2),
            "rho" => Some(self.rho),
            "psi_y" => self.psi_y,
            _ => {
                if let Some(k) = name.strip_prefix("beta") {
                    return self.beta.get(k.parse::<usize>().ok()?).copied();
                }
                let k = name.strip_prefix("psi")?.parse::<usize>().ok()?;
                self.psi_x.as_ref()?.get(k).copied()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `None` at missing units.
    pub y: Vec<Option<f64>>,
    pub x: DMatrix<f64>,
    pub x_star: Option<DMatrix<f64>>,
    /// Raw weights, not normalised.
    pub weights: Vec<(usize, usize, f64)>,
    pub y_full: Option<Vec<f64>>,
    pub truth: Option<Truth>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn pattern(&self) -> MissingPattern {
        MissingPattern::from_indicator(self.y.iter().map(Option::is_none).collect())
    }

    pub fn from_simulation(cfg: &SimConfig, sim: &SimulatedData) -> Result<Self> {
        let raw = build_rook_grid_weights(cfg.side)?;
        let weights = triplets(&raw);
        let pattern = &sim.pattern;
        let y = sim.sem.y.iter().enumerate().map(|(i, &v)| (!pattern.is_missing(i)).then_some(v)).collect();
        let truth = Truth {
            beta: sim.sem.truth.beta.clone(),
            sigma2: sim.sem.truth.sigma2_y,
            rho: sim.sem.truth.rho,
            psi_x: sim.selection.as_ref().map(|s| s.psi_x.clone()),
            psi_y: sim.selection.as_ref().map(|s| s.psi_y),
            n_missing: pattern.n_u(),
            simulation: cfg.clone(),
        };
        Ok(Self {
            y,
            x: sim.sem.x.clone(),
            x_star: sim.selection.as_ref().map(|s| s.x_star.clone()),
            weights,
            y_full: Some(sim.sem.y.clone()),
            truth: Some(truth),
        })
    }

    pub fn weights(&self, row_normalize: bool) -> Result<SpatialWeights> {
        let w = SpatialWeights::from_triplets(self.n(), &self.weights)?;
        Ok(if row_normalize { w.row_normalize()? } else { w })
    }

    /// Posterior target; `mnar` requires `Xstar.csv`.
    pub fn target(&self, mnar: bool, row_normalize: bool, priors: PriorSpec) -> Result<TargetDensity> {
        let w = self.weights(row_normalize)?;
        let pattern = self.pattern();
        let y_o: Vec<f64> = self.y.iter().flatten().copied().collect();
        let t = if mnar {
            let xs = self.x_star.clone().ok_or_else(|| anyhow!("MNAR fit needs an Xstar.csv selection design"))?;
            TargetDensity::mnar(self.x.clone(), &w, y_o, pattern, xs, priors)?
        } else {
            TargetDensity::mar(self.x.clone(), &w, y_o, pattern, priors)?
        };
        Ok(t)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, bytes) in self.files()? {
            fs::write(dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        }
        Ok(())
    }

    /// Serialised files in a fixed order.
    fn files(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let mut out = vec![
            ("y.csv", column_csv("y", self.y.iter().map(|v| v.map_or(NA.to_string(), fmt_f64)))?),
            ("X.csv", matrix_csv("x", &self.x)?),
            ("W.csv", weights_csv(&self.weights)?),
            ("pattern.csv", pattern_csv(&self.pattern())?),
        ];
        if let Some(xs) = &self.x_star {
            out.push(("Xstar.csv", matrix_csv("xstar", xs)?));
        }
        if let Some(y) = &self.y_full {
            out.push(("y_full.csv", column_csv("y", y.iter().map(|&v| fmt_f64(v)))?));
        }
        if let Some(t) = &self.truth {
            let mut s = serde_json::to_string_pretty(t)?;
            s.push('\n');
            out.push(("truth.json", s.into_bytes()));
        }
        Ok(out)
    }

    /// SHA-256 over the observed-data files (`y`, `X`, `W`, `Xstar`).
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, bytes) in self.files()? {
            if matches!(name, "y.csv" | "X.csv" | "W.csv" | "Xstar.csv") {
                h.update(name.as_bytes());
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(&bytes);
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let y = read_column(&dir.join("y.csv"), true)?;
        let n = y.len();
        let x = read_matrix(&dir.join("X.csv"))?;
        if x.nrows() != n {
            bail!("X.csv has {} rows but y.csv has {n}", x.nrows());
        }
        let weights = read_weights(&dir.join("W.csv"), n)?;
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        let x_star = opt("Xstar.csv").map(|p| read_matrix(&p)).transpose()?;
        if let Some(xs) = &x_star {
            if xs.nrows() != n {
                bail!("Xstar.csv has {} rows but y.csv has {n}", xs.nrows());
            }
        }
        let y_full = match opt("y_full.csv") {
            Some(p) => {
                let v: Vec<f64> = read_column(&p, false)?.into_iter().flatten().collect();
                if v.len() != n {
                    bail!("y_full.csv has {} rows but y.csv has {n}", v.len());
                }
                Some(v)
            }
            None => None,
        };
        if let Some(p) = opt("pattern.csv") {
            let m = read_pattern(&p, n)?;
            if let Some(i) = (0..n).find(|&i| m[i] != y[i].is_none()) {
                bail!("pattern.csv disagrees with the NA positions of y.csv at index {i}");
            }
        }
        let truth = match opt("truth.json") {
            Some(p) => Some(serde_json::from_str(&fs::read_to_string(&p)?).context("parsing truth.json")?),
            None => None,
        };
        Ok(Self { y, x, x_star, weights, y_full, truth })
    }
}

/// Shortest decimal that parses back to `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn parse_f64(field: &str, what: &dyn Fn() -> String) -> Result<f64> {
    if field.is_empty() {
        bail!("empty field in {}", what());
    }
    field.parse::<f64>().map_err(|_| anyhow!("invalid number {field:?} in {}", what()))
}

fn triplets(w: &SpatialWeights) -> Vec<(usize, usize, f64)> {
    let m = w.matrix();
    (0..m.nrows())
        .flat_map(|i| {
            let (cols, vals) = m.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v)).collect::<Vec<_>>()
        })
        .collect()
}

fn to_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

pub fn column_csv(header: &str, values: impl Iterator<Item = String>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([header])?;
    for v in values {
        w.write_record([v])?;
    }
    to_bytes(w)
}

fn matrix_csv(prefix: &str, m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])))?;
    }
    to_bytes(w)
}

fn weights_csv(t: &[(usize, usize, f64)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "col", "weight"])?;
    for &(i, j, v) in t {
        w.write_record([i.to_string(), j.to_string(), fmt_f64(v)])?;
    }
    to_bytes(w)
}

fn pattern_csv(p: &MissingPattern) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "missing"])?;
    for (i, &m) in p.m().iter().enumerate() {
        w.write_record([i.to_string(), u8::from(m).to_string()])?;
    }
    to_bytes(w)
}

pub fn reader(path: &Path) -> Result<csv::Reader<Box<dyn Read>>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(Box::new(f) as Box<dyn Read>))
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[String]) -> Result<()> {
    if got.iter().ne(want.iter().map(String::as_str)) {
        bail!("{}: expected header {:?}, found {:?}", path.display(), want, got.iter().collect::<Vec<_>>());
    }
    Ok(())
}

fn read_column(path: &Path, allow_na: bool) -> Result<Vec<Option<f64>>> {
    let mut r = reader(path)?;
    check_header(path, r.headers()?, &["y".to_string()])?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = &rec[0];
        if f == NA {
            if !allow_na {
                bail!("{}: NA at row {line} is not allowed here", path.display());
            }
            out.push(None);
        } else {
            out.push(Some(parse_f64(f, &|| format!("{} row {line}", path.display()))?));
        }
    }
    Ok(out)
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = reader(path)?;
    let ncols = r.headers()?.len();
    let mut vals = Vec::new();
    let mut nrows = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (j, f) in rec.iter().enumerate() {
            vals.push(parse_f64(f, &|| format!("{} row {line} column {j}", path.display()))?);
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &vals))
}

fn read_weights(path: &Path, n: usize) -> Result<Vec<(usize, usize, f64)>> {
    let mut r = reader(path)?;
    check_header(path, r.headers()?, &["row", "col", "weight"].map(String::from))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let idx = |k: usize| -> Result<usize> {
            let f = &rec[k];
            if f.is_empty() {
                bail!("{}: empty field at row {line}", path.display());
            }
            let v: usize = f.parse().map_err(|_| anyhow!("{}: bad index {f:?} at row {line}", path.display()))?;
            if v >= n {
                bail!("{}: index {v} at row {line} exceeds n = {n}", path.display());
            }
            Ok(v)
        };
        let v = parse_f64(&rec[2], &|| format!("{} row {line}", path.display()))?;
        out.push((idx(0)?, idx(1)?, v));
    }
    Ok(out)
}

fn read_pattern(path: &Path, n: usize) -> Result<Vec<bool>> {
    let mut r = reader(path)?;
    check_header(path, r.headers()?, &["index", "missing"].map(String::from))?;
    let mut m = Vec::with_capacity(n);
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec[0] != *line.to_string() {
            bail!("{}: expected index {line}, found {:?}", path.display(), &rec[0]);
        }
        m.push(match &rec[1] {
            "0" => false,
            "1" => true,
            other => bail!("{}: missing flag must be 0 or 1, found {other:?}", path.display()),
        });
    }
    if m.len() != n {
        bail!("{}: {} rows, expected {n}", path.display(), m.len());
    }
    Ok(m)
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}
