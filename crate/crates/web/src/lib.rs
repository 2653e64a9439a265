//! Browser bindings for the static demo page in `www/`.

use std::fmt::Write;

use cone_spde::apps::{build_application, parse_override, AppName, ApplicationSpec};
use cone_spde::cones::{Cone, SchauderProjection};
use cone_spde::conditions::{verdict, CheckerConfig, ConditionReport};
use cone_spde::grid::{GridFunction, GridSpec, Space, WeightFunction};
use cone_spde::simulate::{simulate_path, SchemeConfig};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js<T>(r: Result<T, String>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// `overrides` holds whitespace-separated `key=value` parameters.
fn spec(app: &str, overrides: &str) -> Result<ApplicationSpec, String> {
    let name: AppName = app.parse().map_err(err)?;
    let mut spec = ApplicationSpec::new(name);
    for o in overrides.split_whitespace() {
        let (k, v) = parse_override(o).map_err(err)?;
        spec = spec.with(&k, v);
    }
    Ok(spec)
}

fn condition_line(out: &mut String, c: &ConditionReport) {
    writeln!(
        out,
        "{:<10} {:<12} margin {:+.3e} ({} pairs checked)",
        c.name,
        c.status.label(),
        c.margin + 0.0,
        c.checked
    )
    .unwrap();
    if let Some(w) = &c.witness {
        if !w.detail.is_empty() {
            writeln!(out, "           witness: {}", w.detail).unwrap();
        }
    }
}

fn check_report(app: &str, overrides: &str, pairs: usize, seed: u64) -> Result<String, String> {
    let a = build_application(&spec(app, overrides)?).map_err(err)?;
    let cfg = CheckerConfig {
        pairs: pairs.clamp(1, 2000),
        seed,
        ..CheckerConfig::default()
    };
    let r = verdict(&a.cone, &a.semigroup, &a.coeffs, &cfg).map_err(err)?;
    let mut out = String::new();
    writeln!(out, "{}: {}", a.name, r.verdict.label()).unwrap();
    writeln!(out, "cone {}, semigroup {}", a.cone.name(), a.semigroup.name()).unwrap();
    writeln!(
        out,
        "semigroup invariance {}, locality {}",
        if r.invariance.pass { "PASS" } else { "FAIL" },
        r.locality.verdict.label()
    )
    .unwrap();
    for c in r.conditions() {
        condition_line(&mut out, c);
    }
    Ok(out)
}

fn project(values: Vec<f64>, cone: &str) -> Result<Vec<f64>, String> {
    if values.len() < 2 {
        return Err("need at least two points".into());
    }
    let grid = GridSpec::interval(0.0, 1.0, values.len()).map_err(err)?;
    let (space, k) = match cone {
        "nonnegative" => {
            let s = Space::plain_l2(grid).map_err(err)?;
            let k = Cone::nonnegative(&s);
            (s, Some(k))
        }
        "monotone" => {
            let s = Space::filipovic(grid, WeightFunction::Constant(1.0), 0).map_err(err)?;
            let k = Cone::filipovic_monotone(&s).map_err(err)?;
            (s, Some(k))
        }
        _ => (Space::plain_l2(grid).map_err(err)?, None),
    };
    let h = GridFunction::new(space.clone(), values).map_err(err)?;
    let p = match (k, cone.strip_prefix("cells:")) {
        (Some(k), _) => k.project(&h),
        (None, Some(level)) => {
            let level: u32 = level.parse().map_err(err)?;
            SchauderProjection::new(&space, level).and_then(|pi| pi.apply(&h))
        }
        (None, None) => return Err(format!("unknown cone `{cone}`")),
    };
    Ok(p.map_err(err)?.values().to_vec())
}

fn path_summary(app: &str, overrides: &str, seed: u64, dt: f64, horizon: f64) -> Result<Vec<f64>, String> {
    let a = build_application(&spec(app, overrides)?).map_err(err)?;
    let model = a.model().map_err(err)?;
    let cfg = SchemeConfig {
        dt,
        horizon,
        seed,
        paths: 1,
        ..SchemeConfig::default()
    };
    let p = simulate_path(&model, Some(&a.cone), &cfg, 0).map_err(err)?;
    let mut out = p.distances;
    out.extend(p.min_values);
    Ok(out)
}

/// Runs the invariance checkers on a gallery application and returns a
/// plain-text report.
#[wasm_bindgen]
pub fn check_application(app: &str, overrides: &str, pairs: usize, seed: u64) -> Result<String, JsValue> {
    js(check_report(app, overrides, pairs, seed))
}

/// Projects a curve sampled at equispaced points of `[0, 1]` onto a cone:
/// `"nonnegative"`, `"monotone"` (nonnegative and nondecreasing) or
/// `"cells:n"` (averages over `2^n` dyadic cells).
#[wasm_bindgen]
pub fn project_curve(values: Vec<f64>, cone: &str) -> Result<Vec<f64>, JsValue> {
    js(project(values, cone))
}

/// Simulates one path and returns, per time step, the distance to the
/// application's cone followed by the smallest node value: `[d_0, …, d_N,
/// m_0, …, m_N]`.
#[wasm_bindgen]
pub fn simulate_path_summary(
    app: &str,
    overrides: &str,
    seed: u64,
    dt: f64,
    horizon: f64,
) -> Result<Vec<f64>, JsValue> {
    js(path_summary(app, overrides, seed, dt, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projections_land_in_their_cones() {
        let v = vec![0.5, -0.2, 0.1, 0.7, 0.3];
        assert_eq!(project(v.clone(), "nonnegative").unwrap(), vec![0.5, 0.0, 0.1, 0.7, 0.3]);
        let m = project(v.clone(), "monotone").unwrap();
        assert!(m[0] >= -1e-9 && m.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let c = project(vec![1.0, 3.0, 5.0, 7.0, 9.0], "cells:1").unwrap();
        assert_eq!(c[0], c[1]);
        assert!(c[2] == c[3] && c[3] == c[4] && c[2] > c[0]);
        assert_eq!(project(c.clone(), "cells:1").unwrap(), c);
        assert!(project(v, "cells:0").is_err());
    }

    #[test]
    fn energy_report_passes() {
        let r = check_report("energy", "", 50, 0).unwrap();
        assert!(r.starts_with("energy: SUFFICIENT-PASS"), "{r}");
    }

    #[test]
    fn additive_heat_path_leaves_the_cone() {
        let v = path_summary("heat_anderson", "sigma=additive", 1, 0.01, 1.0).unwrap();
        let (d, m) = v.split_at(v.len() / 2);
        assert_eq!(d.len(), 101);
        assert!(d.iter().any(|x| *x > 0.0));
        assert!(m.iter().any(|x| *x < 0.0));
    }
}
