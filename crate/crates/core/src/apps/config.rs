//! Run configuration: a TOML file with dotted-key overrides.
//!
//! ```toml
//! app = "energy"
//!
//! [params]          # application parameters, see the README
//! scale = 0.3
//!
//! [checker]
//! pairs = 100
//! samples = 20
//! seed = 0
//!
//! [simulation]
//! dt = 1e-3
//! horizon = 1.0
//! paths = 200
//! seed = 0
//! scheme = "exponential-euler"   # or "yosida-euler", "projected-yosida-euler"
//! lambda = 40.0
//! level = 4
//! exit_tol = 1e-6
//!
//! [sweep]
//! lambdas = [10.0, 40.0, 160.0]
//! levels = [2, 3, 4, 5, 6]
//! level_lambda = 40.0
//! pair_counts = [10, 100, 1000]
//! paths = 50
//! dt = 1e-3
//! horizon = 0.1
//!
//! [output]
//! dir = "out"
//! ```
//!
//! An override `key=value` sets a dotted key; a key without a dot refers
//! to `params`. Values are read as TOML literals and fall back to strings.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{AppName, ApplicationSpec};
use crate::conditions::CheckerConfig;
use crate::error::{Error, Result};
use crate::simulate::{Scheme, SchemeConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    app: Option<String>,
    #[serde(default)]
    params: toml::Table,
    #[serde(default)]
    checker: RawChecker,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawChecker {
    pairs: usize,
    samples: usize,
    seed: u64,
    times: Vec<f64>,
    lambda_offsets: Vec<f64>,
}

impl Default for RawChecker {
    fn default() -> Self {
        let c = CheckerConfig::default();
        Self {
            pairs: c.pairs,
            samples: c.samples,
            seed: c.seed,
            times: c.times,
            lambda_offsets: c.lambda_offsets,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSimulation {
    dt: f64,
    horizon: f64,
    paths: usize,
    seed: u64,
    scheme: String,
    lambda: f64,
    level: u32,
    exit_tol: f64,
}

impl Default for RawSimulation {
    fn default() -> Self {
        let s = SchemeConfig::default();
        Self {
            dt: s.dt,
            horizon: s.horizon,
            paths: s.paths,
            seed: s.seed,
            scheme: "exponential-euler".into(),
            lambda: 40.0,
            level: 4,
            exit_tol: s.exit_tol,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSweep {
    lambdas: Vec<f64>,
    levels: Vec<u32>,
    level_lambda: f64,
    pair_counts: Vec<usize>,
    paths: usize,
    dt: f64,
    horizon: f64,
}

impl Default for RawSweep {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            lambdas: s.lambdas,
            levels: s.levels,
            level_lambda: s.level_lambda,
            pair_counts: s.pair_counts,
            paths: s.paths,
            dt: s.dt,
            horizon: s.horizon,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawOutput {
    dir: String,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Settings of the `sweep` subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub levels: Vec<u32>,
    /// `λ` used by the projection-level study.
    pub level_lambda: f64,
    pub pair_counts: Vec<usize>,
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![10.0, 40.0, 160.0],
            levels: vec![2, 3, 4, 5, 6],
            level_lambda: 40.0,
            pair_counts: vec![10, 100, 1000],
            paths: 50,
            dt: 1e-3,
            horizon: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub app: ApplicationSpec,
    pub checker: CheckerConfig,
    pub simulation: SchemeConfig,
    pub sweep: SweepConfig,
    pub out_dir: PathBuf,
}

/// Splits `key=value` and reads the value as a TOML literal.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{s}` has an empty key")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let path: Vec<&str> = if key.contains('.') {
        key.split('.').collect()
    } else {
        vec!["params", key]
    };
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Command-line settings that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct CliSettings {
    pub app: Option<String>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
}

impl RunConfig {
    /// Default configuration for one application.
    pub fn for_app(name: AppName) -> Self {
        Self::from_table(toml::Table::new(), Some(name.as_str()))
            .expect("defaults are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        // parse once into the typed form so errors carry line and field context
        toml::from_str::<RawConfig>(text).map_err(|e| Error::Config(e.to_string()))?;
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table, None)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Resolves an optional config file, command-line flags and overrides.
    pub fn resolve(config: Option<&Path>, cli: &CliSettings) -> Result<Self> {
        let mut table = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str::<RawConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for o in &cli.overrides {
            let (k, v) = parse_override(o)?;
            set_dotted(&mut table, &k, v)?;
        }
        if let Some(seed) = cli.seed {
            let s = toml::Value::Integer(seed as i64);
            set_dotted(&mut table, "checker.seed", s.clone())?;
            set_dotted(&mut table, "simulation.seed", s)?;
        }
        if let Some(p) = cli.paths {
            set_dotted(&mut table, "simulation.paths", toml::Value::Integer(p as i64))?;
        }
        if let Some(dt) = cli.dt {
            set_dotted(&mut table, "simulation.dt", toml::Value::Float(dt))?;
        }
        if let Some(h) = cli.horizon {
            set_dotted(&mut table, "simulation.horizon", toml::Value::Float(h))?;
        }
        if let Some(out) = &cli.out {
            set_dotted(
                &mut table,
                "output.dir",
                toml::Value::String(out.display().to_string()),
            )?;
        }
        Self::from_table(table, cli.app.as_deref())
    }

    fn from_table(mut table: toml::Table, app: Option<&str>) -> Result<Self> {
        if let Some(a) = app {
            table.insert("app".into(), toml::Value::String(a.into()));
        }
        let raw: RawConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let name: AppName = raw
            .app
            .as_deref()
            .ok_or_else(|| Error::Config("no application given (use --app or `app = ...`)".into()))?
            .parse()?;
        let c = raw.checker;
        if c.pairs == 0 || c.samples == 0 {
            return Err(Error::param("checker.pairs", "pair and sample counts must be positive"));
        }
        if c.times.is_empty() || c.times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::param("checker.times", "must be positive"));
        }
        if c.lambda_offsets.is_empty() || c.lambda_offsets.iter().any(|o| !(*o > 0.0)) {
            return Err(Error::param("checker.lambda_offsets", "must be positive"));
        }
        let s = raw.simulation;
        let scheme = match s.scheme.as_str() {
            "exponential-euler" => Scheme::ExponentialEuler,
            "yosida-euler" => Scheme::YosidaEuler { lambda: s.lambda },
            "projected-yosida-euler" => Scheme::ProjectedYosidaEuler {
                lambda: s.lambda,
                level: s.level,
            },
            other => {
                return Err(Error::param(
                    "simulation.scheme",
                    format!("unknown scheme `{other}`"),
                ))
            }
        };
        if s.paths == 0 {
            return Err(Error::param("simulation.paths", "must be at least 1"));
        }
        if !(s.exit_tol > 0.0) {
            return Err(Error::param("simulation.exit_tol", "must be positive"));
        }
        let simulation = SchemeConfig {
            dt: s.dt,
            horizon: s.horizon,
            scheme,
            seed: s.seed,
            paths: s.paths,
            exit_tol: s.exit_tol,
        };
        simulation.steps().map_err(|e| match e {
            Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                field: format!("simulation.{field}"),
                reason,
            },
            other => other,
        })?;
        let w = raw.sweep;
        if w.paths == 0 || w.lambdas.is_empty() || w.pair_counts.contains(&0) {
            return Err(Error::param("sweep", "paths, lambdas and pair counts must be positive"));
        }
        if w.lambdas.windows(2).any(|p| p[1] <= p[0]) || w.levels.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::param("sweep", "lambdas and levels must be increasing"));
        }
        SchemeConfig {
            dt: w.dt,
            horizon: w.horizon,
            ..SchemeConfig::default()
        }
        .steps()
        .map_err(|_| Error::param("sweep.dt", "sweep horizon must be a positive multiple of dt"))?;
        Ok(Self {
            app: ApplicationSpec {
                name,
                params: raw.params.into_iter().collect(),
            },
            checker: CheckerConfig {
                pairs: c.pairs,
                samples: c.samples,
                seed: c.seed,
                times: c.times,
                lambda_offsets: c.lambda_offsets,
            },
            simulation,
            sweep: SweepConfig {
                lambdas: w.lambdas,
                levels: w.levels,
                level_lambda: w.level_lambda,
                pair_counts: w.pair_counts,
                paths: w.paths,
                dt: w.dt,
                horizon: w.horizon,
            },
            out_dir: PathBuf::from(raw.output.dir),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_literals() {
        assert_eq!(parse_override("a=1").unwrap().1, toml::Value::Integer(1));
        assert_eq!(parse_override("a=0.5").unwrap().1, toml::Value::Float(0.5));
        assert_eq!(
            parse_override("sigma=additive").unwrap().1,
            toml::Value::String("additive".into())
        );
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=3").is_err());
    }

    #[test]
    fn bare_override_targets_params() {
        let cli = CliSettings {
            app: Some("heat_anderson".into()),
            overrides: vec!["sigma=additive".into(), "simulation.paths=7".into()],
            ..Default::default()
        };
        let cfg = RunConfig::resolve(None, &cli).unwrap();
        assert_eq!(
            cfg.app.params.get("sigma"),
            Some(&toml::Value::String("additive".into()))
        );
        assert_eq!(cfg.simulation.paths, 7);
    }

    #[test]
    fn file_errors_carry_context() {
        let e = RunConfig::from_toml_str("app = \"energy\"\n[simulation]\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = RunConfig::from_toml_str("app = \"energy\"\n[checker\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn horizon_must_be_a_step_multiple() {
        let cli = CliSettings {
            app: Some("energy".into()),
            dt: Some(0.3),
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, &cli).is_err());
    }
}
