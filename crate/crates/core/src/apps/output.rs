//! Subcommand drivers and the files they write.
//!
//! | command  | files                                              |
//! |----------|----------------------------------------------------|
//! | check    | `report.txt`, `witnesses.csv`                      |
//! | simulate | `paths.csv`, `mc_summary.txt`                      |
//! | sweep    | `sweep_lambda.csv`, `sweep_level.csv`, `sweep_pairs.csv` |
//! | report   | `summary.md`                                       |
//!
//! CSV files are comma-separated with a header row and LF line endings;
//! floats carry 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{build_application, RunConfig};
use crate::conditions::{verdict, ConditionReport, Verdict, VerdictReport};
use crate::error::{Error, Result};
use crate::simulate::{
    mc_invariance, projection_convergence_study, yosida_convergence_study, GapRow, MCReport,
    SchemeConfig,
};

/// Stated in every report header.
pub const EXIT_FRACTION_CONVENTION: &str =
    "convention: a cone counts as invariant in practice when at most 1% of simulated paths exit (exit when dist(r, K) > exit_tol (1 + |r|))";

/// Formats a float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub report: VerdictReport,
    pub exit_code: i32,
}

fn condition_line(c: &ConditionReport) -> String {
    format!(
        "{}: {} margin={} relative_margin={} checked={} failed={} inconclusive={}",
        c.name,
        c.status.label(),
        fmt_float(c.margin),
        fmt_float(c.relative_margin),
        c.checked,
        c.failed,
        c.inconclusive
    )
}

/// Runs every checker on the configured application and writes
/// `report.txt` and `witnesses.csv`.
pub fn run_check(cfg: &RunConfig) -> Result<CheckOutcome> {
    let app = build_application(&cfg.app)?;
    let rep = verdict(&app.cone, &app.semigroup, &app.coeffs, &cfg.checker)?;
    let mut txt = String::new();
    writeln!(txt, "# cone invariance check").unwrap();
    writeln!(txt, "# {EXIT_FRACTION_CONVENTION}").unwrap();
    writeln!(txt, "app: {}", app.name).unwrap();
    writeln!(txt, "verdict: {}", rep.verdict.label()).unwrap();
    writeln!(txt, "exit_code: {}", rep.verdict.exit_code()).unwrap();
    writeln!(txt, "cone: {}", app.cone.name()).unwrap();
    writeln!(txt, "semigroup: {}", app.semigroup.name()).unwrap();
    writeln!(txt, "growth_bound: {}", fmt_float(rep.growth_bound)).unwrap();
    writeln!(
        txt,
        "semigroup_invariance: {} semigroup_distance={} resolvent_distance={} samples={}",
        if rep.invariance.pass { "PASS" } else { "FAIL" },
        fmt_float(rep.invariance.semigroup_distance),
        fmt_float(rep.invariance.resolvent_distance),
        rep.invariance.samples
    )
    .unwrap();
    writeln!(
        txt,
        "locality: {} vanishing={} bounded={} divergent={}",
        rep.locality.verdict.label(),
        rep.locality.vanishing,
        rep.locality.bounded,
        rep.locality.divergent
    )
    .unwrap();
    for c in rep.conditions() {
        writeln!(txt, "{}", condition_line(c)).unwrap();
    }
    writeln!(txt, "pairs: {}", rep.pairs).unwrap();
    writeln!(txt, "seed: {}", rep.seed).unwrap();
    for n in &app.notes {
        writeln!(txt, "note: {n}").unwrap();
    }
    write_file(&cfg.out_dir, "report.txt", &txt)?;

    let mut csv = String::from(
        "condition,status,margin,relative_margin,checked,failed,inconclusive,witness_index,witness_detail,witness_value,h_star_norm,h_norm,seed\n",
    );
    for c in rep.conditions() {
        let (idx, detail, value, hs, h) = match &c.witness {
            Some(w) => (
                w.index.to_string(),
                csv_text(&w.detail),
                fmt_float(w.value),
                opt_float(w.h_star.as_ref().map(|g| g.norm())),
                fmt_float(w.h.norm()),
            ),
            None => Default::default(),
        };
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{idx},{detail},{value},{hs},{h},{}",
            c.name,
            c.status.label(),
            fmt_float(c.margin),
            fmt_float(c.relative_margin),
            c.checked,
            c.failed,
            c.inconclusive,
            c.seed.map(|s| s.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    write_file(&cfg.out_dir, "witnesses.csv", &csv)?;
    Ok(CheckOutcome {
        exit_code: rep.verdict.exit_code(),
        report: rep,
    })
}

/// Runs the Monte Carlo invariance experiment and writes `paths.csv` and
/// `mc_summary.txt`.
pub fn run_simulate(cfg: &RunConfig) -> Result<MCReport> {
    let app = build_application(&cfg.app)?;
    let model = app.model()?;
    let rep = mc_invariance(&model, &app.cone, &cfg.simulation)?;
    let mut csv =
        String::from("path,exited,first_exit,max_distance,min_value,terminal_norm,blew_up\n");
    for p in &rep.per_path {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            p.index,
            p.exited,
            opt_float(p.first_exit),
            fmt_float(p.max_distance),
            fmt_float(p.min_value),
            fmt_float(p.terminal_norm),
            p.blew_up
        )
        .unwrap();
    }
    write_file(&cfg.out_dir, "paths.csv", &csv)?;
    let mut txt = String::new();
    writeln!(txt, "# cone exit simulation").unwrap();
    writeln!(txt, "# {EXIT_FRACTION_CONVENTION}").unwrap();
    writeln!(txt, "app: {}", app.name).unwrap();
    writeln!(txt, "scheme: {}", rep.scheme.name()).unwrap();
    writeln!(txt, "dt: {}", fmt_float(cfg.simulation.dt)).unwrap();
    writeln!(txt, "horizon: {}", fmt_float(cfg.simulation.horizon)).unwrap();
    writeln!(txt, "paths: {}", rep.paths).unwrap();
    writeln!(txt, "exits: {}", rep.exits).unwrap();
    writeln!(txt, "exit_fraction: {}", fmt_float(rep.exit_fraction)).unwrap();
    writeln!(txt, "blowups: {}", rep.blowups).unwrap();
    writeln!(txt, "exit_tol: {}", fmt_float(rep.exit_tol)).unwrap();
    writeln!(txt, "seed: {}", rep.seed).unwrap();
    for (p, q) in &rep.distance_quantiles {
        writeln!(txt, "max_distance_q{}: {}", p, fmt_float(*q)).unwrap();
    }
    let hist: Vec<String> = rep.exit_histogram.iter().map(|c| c.to_string()).collect();
    writeln!(txt, "first_exit_histogram: {}", hist.join(" ")).unwrap();
    write_file(&cfg.out_dir, "mc_summary.txt", &txt)?;
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub lambda_rows: Vec<GapRow>,
    /// `None` when the space admits no dyadic projection.
    pub level_rows: Option<Vec<GapRow>>,
    pub pair_rows: Vec<(usize, Verdict)>,
}

fn gap_csv(head: &str, rows: &[GapRow]) -> String {
    let mut s = format!("{head},mean_gap,std_error,paths\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{}",
            fmt_float(r.parameter),
            fmt_float(r.mean_gap),
            fmt_float(r.std_error),
            r.paths
        )
        .unwrap();
    }
    s
}

/// Runs the Yosida and projection convergence studies and the pair-count
/// sensitivity of the verdict.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let app = build_application(&cfg.app)?;
    let model = app.model()?;
    let sc = SchemeConfig {
        dt: cfg.sweep.dt,
        horizon: cfg.sweep.horizon,
        paths: cfg.sweep.paths,
        seed: cfg.simulation.seed,
        ..SchemeConfig::default()
    };
    let lambda_rows = yosida_convergence_study(&model, &cfg.sweep.lambdas, cfg.sweep.paths, &sc)?;
    write_file(&cfg.out_dir, "sweep_lambda.csv", &gap_csv("lambda", &lambda_rows))?;
    let level_rows = match projection_convergence_study(
        &model,
        cfg.sweep.level_lambda,
        &cfg.sweep.levels,
        cfg.sweep.paths,
        &sc,
    ) {
        Ok(rows) => Some(rows),
        Err(Error::UnsupportedSpace(_)) => None,
        Err(e) => return Err(e),
    };
    write_file(
        &cfg.out_dir,
        "sweep_level.csv",
        &gap_csv("level", level_rows.as_deref().unwrap_or(&[])),
    )?;
    let mut pair_rows = Vec::new();
    let mut csv = String::from("pairs,verdict,jump_margin,volatility_margin,drift_margin\n");
    for &n in &cfg.sweep.pair_counts {
        let mut checker = cfg.checker.clone();
        checker.pairs = n;
        let r = verdict(&app.cone, &app.semigroup, &app.coeffs, &checker)?;
        writeln!(
            csv,
            "{n},{},{},{},{}",
            r.verdict.label(),
            fmt_float(r.jump.relative_margin),
            fmt_float(r.volatility.relative_margin),
            fmt_float(r.drift.relative_margin)
        )
        .unwrap();
        pair_rows.push((n, r.verdict));
    }
    write_file(&cfg.out_dir, "sweep_pairs.csv", &csv)?;
    Ok(SweepOutcome {
        lambda_rows,
        level_rows,
        pair_rows,
    })
}

fn csv_as_markdown(text: &str) -> String {
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        writeln!(out, "| {} |", cells.join(" | ")).unwrap();
        if i == 0 {
            writeln!(out, "|{}", "---|".repeat(cells.len())).unwrap();
        }
    }
    out
}

fn key_lines(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| format!("- {l}\n"))
        .collect()
}

/// Collates the outputs found in `dir` into `summary.md`.
pub fn run_report(dir: &Path) -> Result<String> {
    let read = |name: &str| fs::read_to_string(dir.join(name)).ok();
    let check = read("report.txt");
    let sim = read("mc_summary.txt");
    let lambda = read("sweep_lambda.csv");
    let level = read("sweep_level.csv");
    let pairs = read("sweep_pairs.csv");
    if check.is_none() && sim.is_none() && lambda.is_none() {
        return Err(Error::Io {
            path: dir.display().to_string(),
            reason: "no run outputs found (expected report.txt, mc_summary.txt or sweep_lambda.csv)"
                .into(),
        });
    }
    let mut md = String::from("# Run summary\n\n");
    writeln!(md, "{EXIT_FRACTION_CONVENTION}\n").unwrap();
    if let Some(c) = &check {
        let v = c
            .lines()
            .find_map(|l| l.strip_prefix("verdict: "))
            .and_then(Verdict::from_label)
            .ok_or_else(|| Error::Config(format!("{}: no verdict line", dir.join("report.txt").display())))?;
        writeln!(md, "## Checker\n\nVerdict: **{}** (exit code {})\n", v.label(), v.exit_code()).unwrap();
        md.push_str(&key_lines(c));
        md.push('\n');
    }
    if let Some(s) = &sim {
        md.push_str("## Simulation\n\n");
        md.push_str(&key_lines(s));
        md.push('\n');
    }
    if let Some(t) = &lambda {
        md.push_str("## Yosida convergence\n\n");
        md.push_str(&csv_as_markdown(t));
        md.push('\n');
    }
    if let Some(t) = &level {
        md.push_str("## Projection convergence\n\n");
        if t.lines().count() <= 1 {
            md.push_str("No dyadic projection exists for this space.\n");
        } else {
            md.push_str(&csv_as_markdown(t));
        }
        md.push('\n');
    }
    if let Some(t) = &pairs {
        md.push_str("## Pair-count sensitivity\n\n");
        md.push_str(&csv_as_markdown(t));
        md.push('\n');
    }
    write_file(dir, "summary.md", &md)?;
    Ok(md)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(-2.5), "-2.5000000000000000e0");
        let digits = fmt_float(std::f64::consts::PI)
            .split('e')
            .next()
            .unwrap()
            .chars()
            .filter(|c| c.is_ascii_digit())
            .count();
        assert_eq!(digits, 17);
    }

    #[test]
    fn empty_directory_has_no_report() {
        let d = tempfile::tempdir().unwrap();
        assert!(run_report(d.path()).is_err());
    }

    #[test]
    fn markdown_tables_keep_columns() {
        let md = csv_as_markdown("a,b\n1,2\n");
        assert_eq!(md, "| a | b |\n|---|---|\n| 1 | 2 |\n");
    }
}
