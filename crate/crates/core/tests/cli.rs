use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cone-spde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

fn check_csv_shape(text: &str) {
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    let cols = lines.next().unwrap().split(',').count();
    for l in lines {
        assert_eq!(l.split(',').count(), cols, "{l}");
        for cell in l.split(',') {
            if cell.contains('e') && cell.parse::<f64>().is_ok() {
                let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
                assert_eq!(mantissa.replace('.', "").len(), 17, "{cell}");
            }
        }
    }
}

#[test]
fn energy_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cli(&["check", "--app", "energy", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(field(&read(dir.path(), "report.txt"), "verdict"), "SUFFICIENT-PASS");
    check_csv_shape(&read(dir.path(), "witnesses.csv"));
}

#[test]
fn additive_heat_check_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cli(&["check", "--app", "heat_anderson", "--override", "sigma=additive", "--out", out]);
    assert_eq!(code(&o), 2);
    assert_eq!(field(&read(dir.path(), "report.txt"), "verdict"), "NECESSARY-FAIL");
}

#[test]
fn config_and_usage_errors_exit_one() {
    let o = cli(&["check", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/run.toml"));

    assert_eq!(code(&cli(&["check", "--app", "nope"])), 1);
    assert_eq!(code(&cli(&["check", "--app", "energy", "--bogus"])), 1);
    assert_eq!(code(&cli(&["check", "--app", "energy", "--override", "noequals"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "app = \"energy\"\n[simulation]\ndt = \"fast\"\n").unwrap();
    let o = cli(&["check", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml") && err.contains("dt"), "{err}");
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "app = \"heat_anderson\"\n[params]\nsigma = \"additive\"\n[output]\ndir = \"{}\"\n",
            out.display()
        ),
    )
    .unwrap();
    assert_eq!(code(&cli(&["check", "--config", cfg.to_str().unwrap()])), 2);
    assert!(out.join("report.txt").exists());
}

#[test]
fn simulate_is_deterministic() {
    let run = |dir: &Path| {
        let o = cli(&[
            "simulate", "--app", "hjmm", "--seed", "11", "--paths", "20", "--dt", "0.01",
            "--horizon", "0.5", "--out", dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(dir.join("paths.csv")).unwrap(), fs::read(dir.join("mc_summary.txt")).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (pa, sa) = run(a.path());
    let (pb, sb) = run(b.path());
    assert_eq!(pa, pb);
    assert_eq!(sa, sb);
    check_csv_shape(&String::from_utf8(pa).unwrap());
}

#[test]
fn zero_noise_cable_never_exits() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "simulate", "--app", "cable", "--override", "sigma=none", "--override", "jumps=none",
        "--paths", "5", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let s = read(dir.path(), "mc_summary.txt");
    assert_eq!(field(&s, "exits"), "0");
    assert_eq!(field(&s, "exit_fraction").parse::<f64>().unwrap(), 0.0);
}

#[test]
fn additive_heat_simulation_exits_often() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "simulate", "--app", "heat_anderson", "--override", "sigma=additive", "--paths", "100",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let s = read(dir.path(), "mc_summary.txt");
    assert!(field(&s, "exit_fraction").parse::<f64>().unwrap() >= 0.5);
    assert!(s.contains("convention:"));
}

#[test]
fn identity_sweep_has_zero_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "sweep", "--app", "heat_anderson", "--override", "semigroup=identity",
        "--override", "sweep.paths=5", "--override", "sweep.pair_counts=[10, 100]",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["sweep_lambda.csv", "sweep_level.csv"] {
        let t = read(dir.path(), name);
        check_csv_shape(&t);
        assert!(t.lines().count() > 1);
        if name == "sweep_lambda.csv" {
            for l in t.lines().skip(1) {
                assert_eq!(l.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0, "{l}");
            }
        }
    }
}

#[test]
fn energy_verdict_is_stable_across_pair_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "sweep", "--app", "energy", "--override", "sweep.paths=4",
        "--override", "sweep.pair_counts=[10, 100, 1000]",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read(dir.path(), "sweep_pairs.csv");
    let verdicts: Vec<&str> = t.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(verdicts, ["SUFFICIENT-PASS"; 3]);
}

#[test]
fn report_collates_and_is_idempotent() {
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["report", empty.path().to_str().unwrap()])), 1);

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&cli(&["check", "--app", "energy", "--out", d])), 0);
    assert_eq!(code(&cli(&["report", d])), 0);
    let first = read(dir.path(), "summary.md");
    assert!(first.contains("SUFFICIENT-PASS"));
    assert_eq!(code(&cli(&["report", "--out", d])), 0);
    assert_eq!(read(dir.path(), "summary.md"), first);
}
