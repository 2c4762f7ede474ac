//! Correlated-decision generator and simulation grid runner.
//!
//! The generator draws each subject's error probability from a Beta
//! distribution with mean `pi` and then the subject's decisions as
//! independent Bernoulli trials at that probability. With shape parameters
//! `a = pi (1 - rho) / rho` and `b = (1 - pi)(1 - rho) / rho` the resulting
//! decisions have mean `pi` and intra-class correlation exactly `rho`,
//! matching the exchangeable within-subject structure the estimators
//! assume. `rho = 0` degenerates to i.i.d. Bernoulli decisions.
//!
//! The grid runner sweeps margin-of-error behavior over (pi, rho, n, m, G),
//! R runs per cell, writing one CSV row of M percentiles per cell. Grid
//! execution is resumable: completed cells are recorded in an on-disk
//! ledger keyed by a hash of the cell configuration and skipped on rerun.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GroupDataset, StudyDataset, SubjectDecisions};
use crate::error::{AuditError, Result};
use crate::ftest::BootstrapConfig;
use crate::moe::margin_of_error;
use crate::rng::{child_seed, fnv1a_64, stream_rng, StreamKind};
use crate::stats::{quantile_nearest_rank, KahanSum};
use crate::{DEFAULT_ALPHA, DEFAULT_REPLICATES};

/// Parameters for one simulation cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Target FNMR, in (0, 1).
    pub pi: f64,
    /// Target intra-class correlation, in [0, 1).
    pub rho: f64,
    /// Subjects per group.
    pub n: u64,
    /// Attempts per subject (constant within a run).
    pub m: u64,
    /// Number of groups.
    #[serde(rename = "G")]
    pub groups: u64,
    /// Runs per cell.
    #[serde(rename = "R")]
    pub runs: usize,
    /// Bootstrap replicates per run.
    #[serde(rename = "K")]
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AuditError::InvalidConfig(msg));
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return bad(format!("pi must lie in (0, 1), got {}", self.pi));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.n < 1 || self.m < 1 || self.groups < 1 || self.runs < 1 || self.replicates < 1 {
            return bad("n, m, G, R and K must all be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    /// Canonical parameter key; the cell ledger and per-cell seed
    /// derivation both hang off this, so a cell means the same thing
    /// whether it runs inside a full grid or alone.
    pub fn cell_key(&self) -> String {
        format!(
            "pi={};rho={};n={};m={};G={};R={};K={};alpha={};seed={}",
            self.pi,
            self.rho,
            self.n,
            self.m,
            self.groups,
            self.runs,
            self.replicates,
            self.alpha,
            self.seed
        )
    }

    pub fn cell_hash(&self) -> String {
        format!("{:016x}", fnv1a_64(self.cell_key().as_bytes()))
    }
}

/// Margin-of-error summaries for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCellResult {
    pub pi: f64,
    pub rho: f64,
    pub n: u64,
    pub m: u64,
    #[serde(rename = "G")]
    pub groups: u64,
    #[serde(rename = "R")]
    pub runs: usize,
    #[serde(rename = "K")]
    pub replicates: usize,
    pub alpha: f64,
    pub p50: f64,
    pub p75: f64,
    pub p80: f64,
    pub p90: f64,
    pub p95: f64,
    pub p975: f64,
    #[serde(rename = "mean_M")]
    pub mean_m: f64,
    pub seed: u64,
}

/// One synthetic group: per-subject Beta error probabilities, Bernoulli
/// decisions. `pi` of exactly 0 or 1 yields constant decisions.
pub fn generate_group(
    group_id: &str,
    pi: f64,
    rho: f64,
    n: u64,
    m: u64,
    rng: &mut impl Rng,
) -> GroupDataset {
    assert!((0.0..=1.0).contains(&pi), "pi {pi} outside [0, 1]");
    assert!((0.0..1.0).contains(&rho), "rho {rho} outside [0, 1)");
    assert!(n >= 1 && m >= 1);
    let beta = if rho > 0.0 && pi > 0.0 && pi < 1.0 {
        let a = pi * (1.0 - rho) / rho;
        let b = (1.0 - pi) * (1.0 - rho) / rho;
        Some(Beta::new(a, b).expect("valid Beta shapes"))
    } else {
        None
    };
    let width = n.to_string().len().max(4);
    let mut subjects = Vec::with_capacity(n as usize);
    for i in 0..n {
        let p = match &beta {
            Some(beta) => beta.sample(rng),
            None => pi,
        };
        let decisions = (0..m).map(|_| rng.random_bool(p) as u8).collect();
        let id = format!("{group_id}-s{:0width$}", i + 1, width = width);
        subjects.push(SubjectDecisions::new(id, decisions).expect("generated subject"));
    }
    GroupDataset::new(group_id, subjects).expect("generated group")
}

fn group_label(g: u64, groups: u64) -> String {
    let width = groups.to_string().len().max(2);
    format!("g{:0width$}", g + 1, width = width)
}

/// One synthetic study of G identically-parameterized groups. Group `g` of
/// run `run` draws from its own stream, so studies are reproducible cell-wide
/// regardless of scheduling.
pub fn generate_study(cfg: &SimConfig, run: u64) -> StudyDataset {
    let groups = (0..cfg.groups)
        .map(|g| {
            let label = group_label(g, cfg.groups);
            let mut rng = stream_rng(cfg.seed, StreamKind::Generate, run, &label);
            generate_group(&label, cfg.pi, cfg.rho, cfg.n, cfg.m, &mut rng)
        })
        .collect();
    StudyDataset::new(groups, format!("simulated run {run}: {}", cfg.cell_key()))
        .expect("generated study")
}

/// Runs one cell: R independent runs of generate-then-margin-of-error,
/// summarized at the 50th/75th/80th/90th/95th/97.5th percentiles of M.
pub fn run_cell(cfg: &SimConfig) -> Result<SimCellResult> {
    cfg.validate()?;
    if cfg.groups < 2 {
        return Err(AuditError::InvalidConfig(
            "margin of error needs at least 2 groups".into(),
        ));
    }
    let margins: Vec<f64> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|run| {
            let study = generate_study(cfg, run);
            let moe_cfg = BootstrapConfig {
                replicates: cfg.replicates,
                alpha: cfg.alpha,
                seed: child_seed(cfg.seed, run, "moe"),
            };
            margin_of_error(&study, &moe_cfg).map(|r| r.margin)
        })
        .collect::<Result<_>>()?;

    let mut mean = KahanSum::new();
    for &m in &margins {
        mean.add(m);
    }
    Ok(SimCellResult {
        pi: cfg.pi,
        rho: cfg.rho,
        n: cfg.n,
        m: cfg.m,
        groups: cfg.groups,
        runs: cfg.runs,
        replicates: cfg.replicates,
        alpha: cfg.alpha,
        p50: quantile_nearest_rank(&margins, 0.50),
        p75: quantile_nearest_rank(&margins, 0.75),
        p80: quantile_nearest_rank(&margins, 0.80),
        p90: quantile_nearest_rank(&margins, 0.90),
        p95: quantile_nearest_rank(&margins, 0.95),
        p975: quantile_nearest_rank(&margins, 0.975),
        mean_m: mean.value() / margins.len() as f64,
        seed: cfg.seed,
    })
}

/// A Cartesian sweep over parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub pi: Vec<f64>,
    pub rho: Vec<f64>,
    pub n: Vec<u64>,
    pub m: Vec<u64>,
    pub groups: Vec<u64>,
    pub runs: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl GridSpec {
    /// The full-scale sweep: 5 x 5 x 4 x 5 x 8 = 4000 cells,
    /// 1000 runs per cell.
    pub fn paper(seed: u64) -> Self {
        Self {
            pi: vec![0.025, 0.05, 0.10, 0.15, 0.20],
            rho: vec![0.05, 0.15, 0.25, 0.35, 0.45],
            n: vec![100, 200, 400, 800],
            m: vec![2, 3, 4, 6, 10],
            groups: vec![3, 4, 5, 6, 10, 15, 20, 30],
            runs: 1000,
            replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
            seed,
        }
    }

    /// Desk-scale profile: a reduced grid (96 cells spanning the same
    /// parameter ranges) with fewer runs and replicates. Completes in
    /// minutes on a laptop; suitable for CI and exploratory sweeps.
    pub fn desk(seed: u64) -> Self {
        Self {
            pi: vec![0.05, 0.10, 0.20],
            rho: vec![0.05, 0.25],
            n: vec![100, 400],
            m: vec![2, 3],
            groups: vec![3, 5, 10, 20],
            runs: 200,
            replicates: 499,
            alpha: DEFAULT_ALPHA,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pi.is_empty()
            || self.rho.is_empty()
            || self.n.is_empty()
            || self.m.is_empty()
            || self.groups.is_empty()
        {
            return Err(AuditError::InvalidConfig(
                "every grid parameter needs at least one value".into(),
            ));
        }
        for cell in self.cells() {
            cell.validate()?;
        }
        Ok(())
    }

    /// Cells in deterministic sweep order (pi outermost, G innermost).
    /// Each cell's seed is derived from the grid seed and the cell's
    /// parameters, so a sub-grid reproduces the matching cells of the
    /// full grid exactly.
    pub fn cells(&self) -> Vec<SimConfig> {
        let mut cells = Vec::new();
        for &pi in &self.pi {
            for &rho in &self.rho {
                for &n in &self.n {
                    for &m in &self.m {
                        for &groups in &self.groups {
                            let mut cfg = SimConfig {
                                pi,
                                rho,
                                n,
                                m,
                                groups,
                                runs: self.runs,
                                replicates: self.replicates,
                                alpha: self.alpha,
                                seed: 0,
                            };
                            cfg.seed = child_seed(self.seed, 0, &cfg.cell_key());
                            cells.push(cfg);
                        }
                    }
                }
            }
        }
        cells
    }
}

fn ledger_path(out_csv: &Path) -> std::path::PathBuf {
    let mut name = out_csv.file_name().unwrap_or_default().to_os_string();
    name.push(".ledger");
    out_csv.with_file_name(name)
}

// Ledger lines are `cell_hash,<result as JSON>`; the CSV layer handles
// quoting, the JSON layer handles the numeric fields losslessly.
fn read_ledger(path: &Path) -> Result<HashMap<String, SimCellResult>> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| AuditError::Csv {
        path: path.display().to_string(),
        source: e,
    })?;
    for record in reader.records() {
        let record = record.map_err(|e| AuditError::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        let (hash, json) = match (record.get(0), record.get(1)) {
            (Some(h), Some(j)) => (h.to_string(), j),
            _ => {
                return Err(AuditError::Invalid(format!(
                    "malformed ledger line in {}",
                    path.display()
                )))
            }
        };
        done.insert(hash, serde_json::from_str(json)?);
    }
    Ok(done)
}

/// Runs every cell of the grid, skipping cells already present in the
/// on-disk ledger next to `out_csv`, and writes the full result table in
/// grid order. Returns the results in the same order.
pub fn run_grid(grid: &GridSpec, out_csv: impl AsRef<Path>) -> Result<Vec<SimCellResult>> {
    let out_csv = out_csv.as_ref();
    grid.validate()?;
    let cells = grid.cells();
    let ledger = ledger_path(out_csv);
    let mut done = read_ledger(&ledger)?;

    let io_err = |path: &Path, e: std::io::Error| AuditError::Io {
        path: path.display().to_string(),
        source: e,
    };

    let write_header = !ledger.exists();
    let ledger_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&ledger)
        .map_err(|e| io_err(&ledger, e))?;
    let mut ledger_writer = csv::Writer::from_writer(ledger_file);
    let ledger_err = |e| AuditError::Csv {
        path: ledger.display().to_string(),
        source: e,
    };
    if write_header {
        ledger_writer
            .write_record(["cell_hash", "result"])
            .map_err(ledger_err)?;
    }

    let mut results = Vec::with_capacity(cells.len());
    for cell in &cells {
        let hash = cell.cell_hash();
        let result = match done.remove(&hash) {
            Some(cached) => cached,
            None => {
                let result = run_cell(cell)?;
                let json = serde_json::to_string(&result)?;
                ledger_writer
                    .write_record([hash.as_str(), json.as_str()])
                    .map_err(ledger_err)?;
                ledger_writer.flush().map_err(|e| io_err(&ledger, e))?;
                result
            }
        };
        results.push(result);
    }

    let mut writer = csv::Writer::from_path(out_csv).map_err(|e| AuditError::Csv {
        path: out_csv.display().to_string(),
        source: e,
    })?;
    for result in &results {
        writer.serialize(result).map_err(|e| AuditError::Csv {
            path: out_csv.display().to_string(),
            source: e,
        })?;
    }
    writer.flush().map_err(|e| io_err(out_csv, e))?;
    Ok(results)
}

/// Which parameter distinguishes the curves of a figure-data series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesParam {
    Pi,
    Rho,
    N,
    M,
}

impl SeriesParam {
    pub fn name(self) -> &'static str {
        match self {
            SeriesParam::Pi => "pi",
            SeriesParam::Rho => "rho",
            SeriesParam::N => "n",
            SeriesParam::M => "m",
        }
    }

    fn value(self, r: &SimCellResult) -> f64 {
        match self {
            SeriesParam::Pi => r.pi,
            SeriesParam::Rho => r.rho,
            SeriesParam::N => r.n as f64,
            SeriesParam::M => r.m as f64,
        }
    }
}

/// Emits M-versus-G series data: one row per (series value, G), intended
/// for results in which only the series parameter and G vary.
pub fn write_series_csv(
    results: &[SimCellResult],
    param: SeriesParam,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut rows: Vec<(f64, u64, f64, f64)> = results
        .iter()
        .map(|r| (param.value(r), r.groups, r.p50, r.mean_m))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let csv_err = |e| AuditError::Csv {
        path: path.display().to_string(),
        source: e,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer
        .write_record(["series_param", "series_value", "G", "p50", "mean_M"])
        .map_err(csv_err)?;
    for (value, groups, p50, mean_m) in rows {
        writer
            .write_record([
                param.name(),
                &value.to_string(),
                &groups.to_string(),
                &p50.to_string(),
                &mean_m.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| AuditError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}
