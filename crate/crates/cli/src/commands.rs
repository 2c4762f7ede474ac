//! Command implementations: analyze, moe, simulate, replay.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fnmr_audit::data::{ingest_csv, CsvSchema, StudyDataset};
use fnmr_audit::ftest::{bootstrap_f_test, BootstrapConfig, FTestResult};
use fnmr_audit::moe::{margin_of_error, write_figure_data, write_flag_table, MoeResult};
use fnmr_audit::sim::{run_grid, write_series_csv, GridSpec, SeriesParam};

use crate::manifest::{
    sha256_file, AnalyzeConfig, CommandConfig, InputDigest, RunManifest, SimulateConfig,
};
use crate::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

fn ensure_out_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()).into())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()).into())
}

fn write_json_value<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| format!("cannot serialize {}: {e}", path.display()))?;
    text.push('\n');
    write_text(path, &text)
}

fn load_study(input: &Path) -> CliResult<StudyDataset> {
    ingest_csv(input, &CsvSchema::default()).map_err(|e| e.to_string().into())
}

fn input_digest(input: &Path) -> CliResult<InputDigest> {
    Ok(InputDigest {
        path: input.display().to_string(),
        sha256: sha256_file(input)
            .map_err(|e| format!("cannot digest {}: {e}", input.display()))?,
    })
}

fn analyze_summary(study: &StudyDataset, result: &FTestResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Bootstrap F-test of equal group FNMRs");
    let _ = writeln!(s, "  groups:      {}", study.n_groups());
    let _ = writeln!(s, "  decisions:   {}", study.decision_count());
    let _ = writeln!(s, "  pooled FNMR: {:.6}", result.pooled_pi_hat);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "  {:<16} {:>8} {:>10} {:>10} {:>8}",
        "group", "n_pi", "pi_hat", "rho_hat", "m0"
    );
    for g in &result.groups {
        let _ = writeln!(
            s,
            "  {:<16} {:>8} {:>10.6} {:>10.6} {:>8.3}",
            g.group_id, g.n_pi, g.pi_hat, g.rho_hat, g.m0
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "  F = {}", result.f_observed);
    let _ = writeln!(
        s,
        "  p = {}  (K = {} replicates, alpha = {})",
        result.p_value,
        result.replicates(),
        result.alpha
    );
    if result.degenerate_replicates > 0 {
        let _ = writeln!(
            s,
            "  note: {} replicate(s) had an undefined statistic and were counted as extreme",
            result.degenerate_replicates
        );
    }
    if result.reject_at_alpha {
        let _ = writeln!(
            s,
            "  At least one group FNMR differs detectably (p < alpha): reject equality."
        );
    } else {
        let _ = writeln!(
            s,
            "  No detectable difference among group FNMRs (p >= alpha): retain equality."
        );
    }
    s
}

fn moe_summary(result: &MoeResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Margin-of-error audit of group FNMRs");
    let _ = writeln!(s, "  groups:      {}", result.groups.len());
    let _ = writeln!(s, "  pooled FNMR: {}", result.pooled_pi_hat);
    let _ = writeln!(
        s,
        "  margin M:    {}  (1 - alpha/2 percentile of {} bootstrap maxima, alpha = {})",
        result.margin, result.replicates, result.alpha
    );
    let _ = writeln!(s, "  interval:    ({}, {})", result.lower, result.upper);
    let flagged = result.groups.iter().filter(|g| g.flagged).count();
    let _ = writeln!(
        s,
        "  flagged:     {flagged} of {} groups",
        result.groups.len()
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "  {:<16} {:>10} {:>9}", "group", "pi_hat", "flagged");
    for g in &result.groups {
        let _ = writeln!(
            s,
            "  {:<16} {:>10.6} {:>9}",
            g.group_id, g.pi_hat, g.flagged
        );
    }
    s
}

pub fn cmd_analyze(input: &Path, cfg: BootstrapConfig, out: &Path) -> CliResult<()> {
    ensure_out_dir(out)?;
    let study = load_study(input)?;
    let result = bootstrap_f_test(&study, &cfg).map_err(|e| e.to_string())?;

    write_json_value(&out.join("ftest.json"), &result.report())?;
    write_text(&out.join("summary.txt"), &analyze_summary(&study, &result))?;
    RunManifest::new(
        CommandConfig::Analyze(AnalyzeConfig {
            input: input.display().to_string(),
            replicates: cfg.replicates,
            alpha: cfg.alpha,
            seed: cfg.seed,
        }),
        cfg.seed,
        vec![input_digest(input)?],
        vec!["ftest.json".into(), "summary.txt".into()],
    )
    .write(&out.join(MANIFEST_FILE))
    .map_err(|e| format!("cannot write manifest: {e}"))?;

    println!("{}", analyze_summary(&study, &result));
    println!("results written to {}", out.display());
    Ok(())
}

pub fn cmd_moe(input: &Path, cfg: BootstrapConfig, out: &Path) -> CliResult<()> {
    ensure_out_dir(out)?;
    let study = load_study(input)?;
    let result = margin_of_error(&study, &cfg).map_err(|e| e.to_string())?;

    write_json_value(&out.join("moe.json"), &result)?;
    write_flag_table(&result, out.join("flags.csv")).map_err(|e| e.to_string())?;
    write_figure_data(&result, out.join("figure.csv")).map_err(|e| e.to_string())?;
    write_text(&out.join("summary.txt"), &moe_summary(&result))?;
    RunManifest::new(
        CommandConfig::Moe(AnalyzeConfig {
            input: input.display().to_string(),
            replicates: cfg.replicates,
            alpha: cfg.alpha,
            seed: cfg.seed,
        }),
        cfg.seed,
        vec![input_digest(input)?],
        vec![
            "moe.json".into(),
            "flags.csv".into(),
            "figure.csv".into(),
            "summary.txt".into(),
        ],
    )
    .write(&out.join(MANIFEST_FILE))
    .map_err(|e| format!("cannot write manifest: {e}"))?;

    println!("{}", moe_summary(&result));
    println!("results written to {}", out.display());
    Ok(())
}

fn series_param(name: &str) -> CliResult<SeriesParam> {
    match name {
        "pi" => Ok(SeriesParam::Pi),
        "rho" => Ok(SeriesParam::Rho),
        "n" => Ok(SeriesParam::N),
        "m" => Ok(SeriesParam::M),
        other => Err(format!("unknown series parameter {other:?} (use pi, rho, n or m)").into()),
    }
}

pub fn cmd_simulate(grid: GridSpec, series: Option<String>, out: &Path) -> CliResult<()> {
    ensure_out_dir(out)?;
    let grid_csv = out.join("grid.csv");
    let cell_count = grid.cells().len();
    eprintln!(
        "running {cell_count} cell(s), {} run(s) each, K = {}",
        grid.runs, grid.replicates
    );
    let results = run_grid(&grid, &grid_csv).map_err(|e| e.to_string())?;

    let mut outputs = vec!["grid.csv".to_string()];
    if let Some(name) = &series {
        let param = series_param(name)?;
        write_series_csv(&results, param, out.join("series.csv")).map_err(|e| e.to_string())?;
        outputs.push("series.csv".into());
    }
    RunManifest::new(
        CommandConfig::Simulate(SimulateConfig {
            grid: grid.clone(),
            series,
        }),
        grid.seed,
        vec![],
        outputs,
    )
    .write(&out.join(MANIFEST_FILE))
    .map_err(|e| format!("cannot write manifest: {e}"))?;

    println!(
        "{} cell(s) written to {}",
        results.len(),
        grid_csv.display()
    );
    Ok(())
}

pub fn cmd_replay(manifest_path: &Path, out: &Path) -> CliResult<()> {
    let manifest = RunManifest::read(manifest_path)?;
    manifest.verify_inputs()?;
    match manifest.command {
        CommandConfig::Analyze(c) => cmd_analyze(
            &PathBuf::from(&c.input),
            BootstrapConfig {
                replicates: c.replicates,
                alpha: c.alpha,
                seed: c.seed,
            },
            out,
        ),
        CommandConfig::Moe(c) => cmd_moe(
            &PathBuf::from(&c.input),
            BootstrapConfig {
                replicates: c.replicates,
                alpha: c.alpha,
                seed: c.seed,
            },
            out,
        ),
        CommandConfig::Simulate(c) => cmd_simulate(c.grid, c.series, out),
    }
}
