//! The application gallery, run configuration and report output.
//!
//! Every application builds a cone, a semigroup, coefficients and an
//! initial state at "desk scale": 129-node 1-D grids, 33×33 2-D grids and
//! eight noise factors unless overridden through `params`.

mod config;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::cones::Cone;
use crate::conditions::{hjm_drift, CoefficientSet, JumpMap, MarkMeasure, StateMap};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, Space, WeightFunction};
use crate::semigroups::Semigroup;
use crate::simulate::{Model, QWienerSpec};

pub use config::{parse_override, CliSettings, RunConfig, SweepConfig};
pub use output::{
    fmt_float, run_check, run_report, run_simulate, run_sweep, CheckOutcome, SweepOutcome,
    EXIT_FRACTION_CONVENTION,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AppName {
    Cable,
    HeatAnderson,
    Hjmm,
    Mortality,
    Hybrid,
    Energy,
    VarianceSwap,
    Cdo,
    Fx,
}

impl AppName {
    pub const ALL: [AppName; 9] = [
        AppName::Cable,
        AppName::HeatAnderson,
        AppName::Hjmm,
        AppName::Mortality,
        AppName::Hybrid,
        AppName::Energy,
        AppName::VarianceSwap,
        AppName::Cdo,
        AppName::Fx,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AppName::Cable => "cable",
            AppName::HeatAnderson => "heat_anderson",
            AppName::Hjmm => "hjmm",
            AppName::Mortality => "mortality",
            AppName::Hybrid => "hybrid",
            AppName::Energy => "energy",
            AppName::VarianceSwap => "variance_swap",
            AppName::Cdo => "cdo",
            AppName::Fx => "fx",
        }
    }
}

impl fmt::Display for AppName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AppName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AppName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = AppName::ALL.iter().map(|a| a.as_str()).collect();
                Error::param("app", format!("unknown application `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// An application name with parameter overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct ApplicationSpec {
    pub name: AppName,
    pub params: BTreeMap<String, toml::Value>,
}

impl ApplicationSpec {
    pub fn new(name: AppName) -> Self {
        Self {
            name,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

/// A built application: the SPDE data plus its initial state.
#[derive(Clone, Debug)]
pub struct Application {
    pub name: AppName,
    pub cone: Cone,
    pub semigroup: Semigroup,
    pub coeffs: CoefficientSet,
    pub factor_variances: Vec<f64>,
    pub h0: GridFunction,
    /// Free-form lines copied into reports.
    pub notes: Vec<String>,
}

impl Application {
    pub fn space(&self) -> &Space {
        self.cone.space()
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(
            self.semigroup.clone(),
            self.coeffs.clone(),
            self.factor_variances.clone(),
            self.h0.clone(),
        )
    }
}

/// Typed access to `params`, consuming each key so leftovers can be
/// reported as unknown.
struct Params {
    map: BTreeMap<String, toml::Value>,
}

impl Params {
    fn field(key: &str) -> String {
        format!("params.{key}")
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(toml::Value::Float(x)) => Ok(x),
            Some(toml::Value::Integer(i)) => Ok(i as f64),
            Some(v) => Err(Error::param(Self::field(key), format!("expected a number, got {v}"))),
        }
        .and_then(|x| {
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::param(Self::field(key), "must be finite"))
            }
        })
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        let x = self.f64(key, default)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(Error::param(Self::field(key), format!("must be positive, got {x}")))
        }
    }

    fn nonnegative(&mut self, key: &str, default: f64) -> Result<f64> {
        let x = self.f64(key, default)?;
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(Error::param(Self::field(key), format!("must be nonnegative, got {x}")))
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> Result<usize> {
        let n = match self.map.remove(key) {
            None => default,
            Some(toml::Value::Integer(i)) if i >= 0 => i as usize,
            Some(v) => {
                return Err(Error::param(Self::field(key), format!("expected a count, got {v}")))
            }
        };
        if n < min {
            return Err(Error::param(Self::field(key), format!("must be at least {min}")));
        }
        Ok(n)
    }

    fn choice(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String> {
        let s = match self.map.remove(key) {
            None => default.to_string(),
            Some(toml::Value::String(s)) => s,
            Some(v) => {
                return Err(Error::param(Self::field(key), format!("expected a string, got {v}")))
            }
        };
        if allowed.contains(&s.as_str()) {
            Ok(s)
        } else {
            Err(Error::param(
                Self::field(key),
                format!("`{s}` is not one of {}", allowed.join(", ")),
            ))
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(b),
            Some(v) => Err(Error::param(Self::field(key), format!("expected a boolean, got {v}"))),
        }
    }

    fn finish(self, app: AppName) -> Result<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::param(
                Self::field(k),
                format!("unknown parameter for application `{app}`"),
            )),
        }
    }
}

fn exp_line(hi: f64, n: usize, rate: f64) -> Result<Space> {
    Space::weighted_l2(
        GridSpec::interval(0.0, hi, n)?,
        WeightFunction::Exponential { rate },
    )
}

/// `σ^j(h) = ℓ_j h`.
fn scalar_sigma(loadings: &[f64]) -> Vec<StateMap> {
    loadings
        .iter()
        .map(|&l| Arc::new(move |h: &GridFunction| h.scaled(l)) as StateMap)
        .collect()
}

/// `σ^j(h) = ℓ_j (profile_j ⊙ h)`.
fn profile_sigma(loadings: &[f64], profiles: Vec<GridFunction>) -> Vec<StateMap> {
    loadings
        .iter()
        .zip(profiles)
        .map(|(&l, p)| Arc::new(move |h: &GridFunction| h.hadamard(&p).scaled(l)) as StateMap)
        .collect()
}

fn harmonic(scale: f64, j: usize) -> Vec<f64> {
    (1..=j).map(|k| scale / k as f64).collect()
}

/// `γ(h, x) = x h`; keeps `h + γ` in any cone as long as every mark > −1.
fn proportional_jumps() -> JumpMap {
    Arc::new(|h: &GridFunction, x: f64| h.scaled(x))
}

fn symmetric_marks(size: f64, rate: f64) -> Result<MarkMeasure> {
    MarkMeasure::new(vec![-size, size], vec![0.5 * rate, 0.5 * rate])
}

fn sigma_lipschitz(loadings: &[f64]) -> f64 {
    loadings.iter().map(|l| l * l).sum::<f64>().sqrt()
}

/// Joins per-component data on a product space. Factor `j` drives every
/// component that has one; all jump parts share the same mark measure.
fn combine(name: AppName, parts: Vec<Application>) -> Result<Application> {
    let cone = Cone::product(parts.iter().map(|p| p.cone.clone()).collect())?;
    let semigroup = Semigroup::product(parts.iter().map(|p| p.semigroup.clone()).collect())?;
    let space = cone.space().clone();
    if semigroup.space() != &space {
        return Err(Error::MismatchedSpace);
    }
    let longest = parts
        .iter()
        .max_by_key(|p| p.factor_variances.len())
        .expect("at least one part");
    let factor_variances = longest.factor_variances.clone();
    for p in &parts {
        if factor_variances[..p.factor_variances.len()] != p.factor_variances[..] {
            return Err(Error::param("factors", "components disagree on factor variances"));
        }
    }
    let marks = parts
        .iter()
        .find(|p| p.coeffs.has_jumps())
        .map(|p| p.coeffs.marks.clone())
        .unwrap_or_else(MarkMeasure::empty);
    if parts
        .iter()
        .any(|p| p.coeffs.has_jumps() && p.coeffs.marks != marks)
    {
        return Err(Error::param("marks", "components disagree on the mark measure"));
    }
    let coeffs: Arc<Vec<CoefficientSet>> = Arc::new(parts.iter().map(|p| p.coeffs.clone()).collect());
    let k = coeffs.len();
    let split = move |h: &GridFunction| -> Vec<GridFunction> {
        (0..k).map(|i| h.component(i).expect("product state")).collect()
    };
    let alpha: StateMap = {
        let (c, split) = (coeffs.clone(), split);
        Arc::new(move |h: &GridFunction| {
            let parts: Vec<GridFunction> =
                split(h).iter().zip(c.iter()).map(|(x, cs)| (cs.alpha)(x)).collect();
            GridFunction::from_components(h.space(), &parts).expect("product state")
        })
    };
    let sigma: Vec<StateMap> = (0..factor_variances.len())
        .map(|j| {
            let (c, split) = (coeffs.clone(), split);
            Arc::new(move |h: &GridFunction| {
                let parts: Vec<GridFunction> = split(h)
                    .iter()
                    .zip(c.iter())
                    .map(|(x, cs)| match cs.sigma.get(j) {
                        Some(s) => s(x),
                        None => GridFunction::zeros(x.space()),
                    })
                    .collect();
                GridFunction::from_components(h.space(), &parts).expect("product state")
            }) as StateMap
        })
        .collect();
    let mut out = CoefficientSet::zero().with_alpha(alpha).with_sigma(sigma);
    if !marks.is_empty() {
        let (c, split) = (coeffs.clone(), split);
        let gamma: JumpMap = Arc::new(move |h: &GridFunction, x: f64| {
            let parts: Vec<GridFunction> =
                split(h).iter().zip(c.iter()).map(|(y, cs)| cs.gamma_at(y, x)).collect();
            GridFunction::from_components(h.space(), &parts).expect("product state")
        });
        out = out.with_jumps(gamma, marks);
    }
    let lip = parts.iter().map(|p| p.coeffs.lipschitz_hint).fold(0.0, f64::max);
    let growth = parts.iter().map(|p| p.coeffs.growth_hint).fold(0.0, f64::max);
    let h0 = GridFunction::from_components(
        &space,
        &parts.iter().map(|p| p.h0.clone()).collect::<Vec<_>>(),
    )?;
    Ok(Application {
        name,
        cone,
        semigroup,
        coeffs: out.with_hints(lip, growth),
        factor_variances,
        h0,
        notes: parts.into_iter().flat_map(|p| p.notes).collect(),
    })
}

/// Builds an application from its spec and checks that `h0 ∈ K`.
pub fn build_application(spec: &ApplicationSpec) -> Result<Application> {
    let mut p = Params {
        map: spec.params.clone(),
    };
    let mut app = match spec.name {
        AppName::Cable => cable(&mut p)?,
        AppName::HeatAnderson => heat_anderson(&mut p)?,
        AppName::Hjmm => hjmm(&HjmmParams::read(&mut p, 129)?)?,
        AppName::Mortality => mortality(&MortalityParams::read(&mut p)?)?,
        AppName::Hybrid => hybrid(&mut p)?,
        AppName::Energy => energy(&mut p)?,
        AppName::VarianceSwap => variance_swap(&mut p)?,
        AppName::Cdo => cdo(&mut p)?,
        AppName::Fx => fx(&mut p)?,
    };
    app.name = spec.name;
    if p.choice("semigroup", "default", &["default", "identity"])? == "identity" {
        app.semigroup = Semigroup::identity(app.space());
        app.notes.push("semigroup replaced by the identity".into());
    }
    p.finish(spec.name)?;
    if !app.cone.contains(&app.h0, 1e-9)? {
        return Err(Error::param("h0", "initial state lies outside the cone"));
    }
    if app.semigroup.space() != app.space() || app.h0.space() != app.space() {
        return Err(Error::MismatchedSpace);
    }
    Ok(app)
}

fn cable(p: &mut Params) -> Result<Application> {
    let n = p.count("nodes", 129, 5)?;
    let tau = p.positive("tau", 1.0)?;
    let length = p.positive("length", 0.5)?;
    let j = p.count("factors", 8, 1)?;
    let scale = p.nonnegative("scale", 0.5)?;
    let sigma_kind = p.choice("sigma", "multiplicative", &["multiplicative", "additive", "none"])?;
    let jumps = p.choice("jumps", "proportional", &["proportional", "none"])?;
    let jump_size = p.positive("jump_size", 0.5)?;
    let jump_rate = p.positive("jump_rate", 1.0)?;
    if jump_size >= 1.0 {
        return Err(Error::param("params.jump_size", "must be below 1"));
    }
    let space = Space::plain_l2(GridSpec::interval(0.0, 1.0, n)?)?;
    let sg = Semigroup::affine_scaled(
        Semigroup::dirichlet_heat(&space, 1.0)?,
        length * length / tau,
        -1.0 / tau,
    )?;
    let eig: Vec<f64> = (1..=j).map(|k| 1.0 / (k * k) as f64).collect();
    let qw = QWienerSpec::sine(&space, eig.clone())?;
    let ones = vec![scale; j];
    let (sigma, variances) = match sigma_kind.as_str() {
        "multiplicative" => (profile_sigma(&ones, qw.basis().to_vec()), eig),
        "additive" => {
            let maps = qw
                .basis()
                .iter()
                .map(|e| {
                    let e = e.scaled(scale);
                    Arc::new(move |_: &GridFunction| e.clone()) as StateMap
                })
                .collect();
            (maps, eig)
        }
        _ => (Vec::new(), Vec::new()),
    };
    let mut coeffs = CoefficientSet::zero()
        .with_sigma(sigma)
        .with_hints(2f64.sqrt() * scale, 2f64.sqrt() * scale);
    if jumps == "proportional" {
        coeffs = coeffs.with_jumps(proportional_jumps(), symmetric_marks(jump_size, jump_rate)?);
    }
    let h0 = GridFunction::from_fn(&space, |x| (std::f64::consts::PI * x[0]).sin())?;
    Ok(Application {
        name: AppName::Cable,
        cone: Cone::nonnegative(&space),
        semigroup: sg,
        coeffs,
        factor_variances: variances,
        h0,
        notes: vec![format!(
            "cable generator ({length}^2/{tau}) d2/dx2 - 1/{tau} with Dirichlet ends"
        )],
    })
}

fn heat_anderson(p: &mut Params) -> Result<Application> {
    let n = p.count("nodes", 129, 5)?;
    let a = p.positive("conductivity", 1.0)?;
    let j = p.count("factors", 8, 1)?;
    let scale = p.nonnegative("scale", 0.5)?;
    let level = p.positive("level", 0.05)?;
    let sigma_kind = p.choice("sigma", "anderson", &["anderson", "additive", "none"])?;
    let space = Space::plain_l2(GridSpec::interval(0.0, 1.0, n)?)?;
    let sg = Semigroup::dirichlet_heat(&space, a)?;
    let (sigma, variances, lip) = match sigma_kind.as_str() {
        "anderson" => {
            let l = harmonic(scale, j);
            let lip = sigma_lipschitz(&l);
            (scalar_sigma(&l), vec![1.0; j], lip)
        }
        "additive" => {
            let one: StateMap = Arc::new(|h: &GridFunction| GridFunction::constant(h.space(), 1.0));
            (vec![one], vec![1.0], 0.0)
        }
        _ => (Vec::new(), Vec::new(), 0.0),
    };
    Ok(Application {
        name: AppName::HeatAnderson,
        cone: Cone::nonnegative(&space),
        semigroup: sg,
        coeffs: CoefficientSet::zero().with_sigma(sigma).with_hints(lip, lip.max(1.0)),
        factor_variances: variances,
        h0: GridFunction::constant(&space, level),
        notes: vec![format!("volatility `{sigma_kind}` on the Dirichlet heat flow")],
    })
}

struct HjmmParams {
    n: usize,
    maturity: f64,
    weight_rate: f64,
    factors: usize,
    scale: f64,
    theta: f64,
    jump_size: f64,
    jump_rate: f64,
    jumps: bool,
}

impl HjmmParams {
    fn read(p: &mut Params, nodes: usize) -> Result<Self> {
        let out = Self {
            n: p.count("nodes", nodes, 5)?,
            maturity: p.positive("maturity", 10.0)?,
            weight_rate: p.nonnegative("weight_rate", 0.1)?,
            factors: p.count("factors", 8, 1)?,
            scale: p.nonnegative("scale", 0.2)?,
            theta: p.f64("theta", 0.0)?,
            jump_size: p.positive("jump_size", 0.2)?,
            jump_rate: p.positive("jump_rate", 1.0)?,
            jumps: p.choice("jumps", "proportional", &["proportional", "none"])? == "proportional",
        };
        if out.jump_size >= 1.0 {
            return Err(Error::param("params.jump_size", "must be below 1"));
        }
        Ok(out)
    }
}

/// Forward-rate curve under the Musiela parametrization with a
/// no-arbitrage drift.
fn hjmm(q: &HjmmParams) -> Result<Application> {
    let space = exp_line(q.maturity, q.n, q.weight_rate)?;
    let sg = Semigroup::translation(&space, &[1.0])?;
    let loadings = harmonic(q.scale, q.factors);
    let profiles = (1..=q.factors)
        .map(|k| GridFunction::from_fn(&space, |x| (-0.1 * k as f64 * x[0]).exp()))
        .collect::<Result<Vec<_>>>()?;
    let sigma = profile_sigma(&loadings, profiles);
    let theta = q.theta;
    let thetas = (0..q.factors)
        .map(|_| Arc::new(move |_: &GridFunction| theta) as crate::conditions::ScalarMap)
        .collect();
    let (gamma, marks) = if q.jumps {
        (Some(proportional_jumps()), symmetric_marks(q.jump_size, q.jump_rate)?)
    } else {
        (None, MarkMeasure::empty())
    };
    let alpha = hjm_drift(&space, sigma.clone(), gamma.clone(), thetas, None, marks.clone())?;
    let mut coeffs = CoefficientSet::zero().with_alpha(alpha).with_sigma(sigma);
    if let Some(g) = gamma {
        coeffs = coeffs.with_jumps(g, marks);
    }
    let lip = sigma_lipschitz(&loadings);
    let h0 = GridFunction::from_fn(&space, |x| 0.02 + 0.02 * (1.0 - (-0.5 * x[0]).exp()))?;
    Ok(Application {
        name: AppName::Hjmm,
        cone: Cone::nonnegative(&space),
        semigroup: sg,
        coeffs: coeffs.with_hints(lip, lip),
        factor_variances: vec![1.0; q.factors],
        h0,
        notes: vec!["drift fixed by the no-arbitrage relation".into()],
    })
}

struct MortalityParams {
    n: usize,
    extent: f64,
    factors: usize,
    scale: f64,
    improvement: f64,
    shock: f64,
    shock_rate: f64,
    jumps: bool,
}

impl MortalityParams {
    fn read(p: &mut Params) -> Result<Self> {
        Ok(Self {
            n: p.count("nodes_2d", 33, 5)?,
            extent: p.positive("extent", 4.0)?,
            factors: p.count("factors", 8, 1)?,
            scale: p.nonnegative("mortality_scale", 0.1)?,
            improvement: p.nonnegative("improvement", 0.02)?,
            shock: p.positive("shock", 0.5)?,
            shock_rate: p.positive("shock_rate", 0.1)?,
            jumps: p.choice("shocks", "on", &["on", "none"])? == "on",
        })
    }
}

/// Mortality rates `m(s, y)` on the box `[0, L] × [−L/2, L/2]`; the cone
/// only constrains nodes of `Ξ = {s + y ≥ 0}`.
fn mortality(q: &MortalityParams) -> Result<Application> {
    let half = 0.5 * q.extent;
    let grid = GridSpec::rectangle((0.0, q.extent, q.n), (-half, half, q.n))?;
    let space = Space::plain_l2(grid.clone())?;
    let sg = Semigroup::translation(&space, &[1.0, -1.0])?;
    let tol = 1e-9 * q.extent;
    let mask: Vec<bool> = (0..grid.len())
        .map(|i| {
            let [s, y] = grid.coords(i);
            s + y >= -tol
        })
        .collect();
    let cone = Cone::nonnegative_masked(&space, mask)?;
    let loadings = harmonic(q.scale, q.factors);
    let kappa = q.improvement;
    let mut coeffs = CoefficientSet::zero()
        .with_alpha(Arc::new(move |h: &GridFunction| h.scaled(-kappa)))
        .with_sigma(scalar_sigma(&loadings));
    if q.jumps {
        coeffs = coeffs.with_jumps(
            proportional_jumps(),
            MarkMeasure::new(vec![q.shock], vec![q.shock_rate])?,
        );
    }
    let lip = sigma_lipschitz(&loadings) + kappa;
    let h0 = GridFunction::from_fn(&space, |x| 0.002 * (0.5 * (x[0] + x[1])).exp())?;
    Ok(Application {
        name: AppName::Mortality,
        cone,
        semigroup: sg,
        coeffs: coeffs.with_hints(lip, lip),
        factor_variances: vec![1.0; q.factors],
        h0,
        notes: vec!["cone restricted to nodes with s + y >= 0; coefficients are proportional to h".into()],
    })
}

fn hybrid(p: &mut Params) -> Result<Application> {
    let rates = HjmmParams::read(p, 129)?;
    let mut mort = MortalityParams::read(p)?;
    // the rate curve's proportional shocks hit both components together
    mort.jumps = false;
    let r = hjmm(&rates)?;
    let mut m = mortality(&mort)?;
    if r.coeffs.has_jumps() {
        m.coeffs = m
            .coeffs
            .clone()
            .with_jumps(proportional_jumps(), r.coeffs.marks.clone());
    }
    combine(AppName::Hybrid, vec![r, m])
}

fn energy(p: &mut Params) -> Result<Application> {
    let n = p.count("nodes", 129, 5)?;
    let horizon = p.positive("maturity", 5.0)?;
    let rate = p.nonnegative("weight_rate", 0.1)?;
    let j = p.count("factors", 8, 1)?;
    let scale = p.nonnegative("scale", 0.3)?;
    let jumps = p.choice("jumps", "none", &["none", "proportional"])?;
    let space = exp_line(horizon, n, rate)?;
    let loadings = harmonic(scale, j);
    let mut coeffs = CoefficientSet::zero().with_sigma(scalar_sigma(&loadings));
    if jumps == "proportional" {
        coeffs = coeffs.with_jumps(proportional_jumps(), symmetric_marks(0.3, 0.5)?);
    }
    let lip = sigma_lipschitz(&loadings);
    let h0 = GridFunction::from_fn(&space, |x| {
        1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()
    })?;
    Ok(Application {
        name: AppName::Energy,
        cone: Cone::nonnegative(&space),
        semigroup: Semigroup::translation(&space, &[1.0])?,
        coeffs: coeffs.with_hints(lip, lip),
        factor_variances: vec![1.0; j],
        h0,
        notes: vec!["futures curve as a stochastic exponential (zero drift)".into()],
    })
}

fn variance_swap(p: &mut Params) -> Result<Application> {
    let n = p.count("nodes", 129, 5)?;
    let horizon = p.positive("maturity", 5.0)?;
    let rate = p.nonnegative("weight_rate", 0.1)?;
    let j = p.count("factors", 8, 1)?;
    let scale = p.nonnegative("scale", 0.2)?;
    let jumps = p.choice("jumps", "proportional", &["proportional", "none"])?;
    let space = Space::filipovic(
        GridSpec::interval(0.0, horizon, n)?,
        WeightFunction::Exponential { rate },
        0,
    )?;
    let loadings = harmonic(scale, j);
    let mut coeffs = CoefficientSet::zero().with_sigma(scalar_sigma(&loadings));
    if jumps == "proportional" {
        coeffs = coeffs.with_jumps(
            proportional_jumps(),
            MarkMeasure::new(vec![-0.3, 0.5], vec![0.5, 0.5])?,
        );
    }
    let lip = sigma_lipschitz(&loadings);
    let h0 = GridFunction::from_fn(&space, |x| 0.04 * x[0] + 0.02 * (1.0 - (-x[0]).exp()))?;
    Ok(Application {
        name: AppName::VarianceSwap,
        cone: Cone::filipovic_monotone(&space)?,
        semigroup: Semigroup::translation(&space, &[1.0])?,
        coeffs: coeffs.with_hints(lip, lip),
        factor_variances: vec![1.0; j],
        h0,
        notes: vec!["curves start at zero and stay nonnegative and increasing".into()],
    })
}

fn cdo(p: &mut Params) -> Result<Application> {
    let n = p.count("nodes", 129, 5)?;
    let m = p.count("tranches", 3, 2)?;
    let horizon = p.positive("maturity", 10.0)?;
    let rate = p.nonnegative("weight_rate", 0.1)?;
    let j = p.count("factors", 8, 1)?;
    let scale = p.nonnegative("scale", 0.2)?;
    let mismatch = p.nonnegative("mismatch", 0.5)?;
    let sigma_kind = p.choice("sigma", "parallel", &["parallel", "tranche_mismatch"])?;
    let h = exp_line(horizon, n, rate)?;
    let mut mat = DMatrix::identity(m, m);
    for i in 0..m - 1 {
        mat[(i, i + 1)] = -1.0;
    }
    let cone = Cone::matrix(mat, vec![Cone::nonnegative(&h); m])?;
    let sg = Semigroup::product(
        (0..m)
            .map(|_| Semigroup::translation(&h, &[1.0]))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let loadings = harmonic(scale, j);
    let tranche_scale: Vec<f64> = (0..m)
        .map(|i| if sigma_kind == "parallel" { 1.0 } else { 1.0 + mismatch * i as f64 })
        .collect();
    let tranche_scale = Arc::new(tranche_scale);
    let sigma: Vec<StateMap> = loadings
        .iter()
        .map(|&l| {
            let ts = tranche_scale.clone();
            Arc::new(move |x: &GridFunction| {
                let parts: Vec<GridFunction> = ts
                    .iter()
                    .enumerate()
                    .map(|(i, c)| x.component(i).expect("tranche").scaled(l * c))
                    .collect();
                GridFunction::from_components(x.space(), &parts).expect("tranche space")
            }) as StateMap
        })
        .collect();
    let space = cone.space().clone();
    let parts = (0..m)
        .map(|i| {
            let bump = 1.0 + 0.5 * (m - 1 - i) as f64;
            GridFunction::from_fn(&h, |x| bump * (0.02 + 0.001 * x[0]))
        })
        .collect::<Result<Vec<_>>>()?;
    let h0 = GridFunction::from_components(&space, &parts)?;
    let lip = sigma_lipschitz(&loadings) * tranche_scale.iter().copied().fold(0.0, f64::max);
    Ok(Application {
        name: AppName::Cdo,
        cone,
        semigroup: sg,
        coeffs: CoefficientSet::zero().with_sigma(sigma).with_hints(lip, lip),
        factor_variances: vec![1.0; j],
        h0,
        notes: vec![format!("{m} tranches ordered h1 >= ... >= h{m} >= 0; volatility `{sigma_kind}`")],
    })
}

fn fx(p: &mut Params) -> Result<Application> {
    let n = p.count("nodes", 129, 5)?;
    let horizon = p.positive("maturity", 10.0)?;
    let rate = p.nonnegative("weight_rate", 0.1)?;
    let j = p.count("factors", 8, 1)?;
    let scale = p.nonnegative("scale", 0.2)?;
    let reversion = p.nonnegative("reversion", 1.0)?;
    let strict = p.flag("strict_recovery", false)?;
    let h = exp_line(horizon, n, rate)?;
    let chain = Cone::monotone_chain(Cone::nonnegative(&h), 2, true)?;
    let x_space = Space::scalar();
    let trans = Semigroup::translation(&h, &[1.0])?;
    let rates_sg = Semigroup::product(vec![trans.clone(), trans])?;
    let loadings = harmonic(scale, j);
    let rates = Application {
        name: AppName::Fx,
        cone: chain,
        semigroup: rates_sg,
        coeffs: CoefficientSet::zero()
            .with_sigma(scalar_sigma(&loadings))
            .with_hints(sigma_lipschitz(&loadings), sigma_lipschitz(&loadings)),
        factor_variances: vec![1.0; j],
        h0: {
            let dom = GridFunction::from_fn(&h, |x| 0.02 + 0.002 * x[0])?;
            let foreign = dom.map(|v| v + 0.01);
            let s = h.power(2)?;
            GridFunction::from_components(&s, &[dom, foreign])?
        },
        notes: Vec::new(),
    };
    let marks = MarkMeasure::new(vec![0.1, 0.3], vec![0.5, 0.2])?;
    let compensation: f64 = marks.atoms().map(|(x, f)| x * f).sum();
    let kappa = if strict { 0.0 } else { reversion };
    let x_part = Application {
        name: AppName::Fx,
        cone: Cone::nonnegative(&x_space),
        semigroup: Semigroup::identity(&x_space),
        coeffs: CoefficientSet::zero()
            .with_alpha(Arc::new(move |x: &GridFunction| x.map(|v| compensation - kappa * v)))
            .with_jumps(
                Arc::new(|x: &GridFunction, mark: f64| GridFunction::constant(x.space(), mark)),
                marks,
            )
            .with_hints(kappa, kappa + compensation),
        factor_variances: Vec::new(),
        h0: GridFunction::zeros(&x_space),
        notes: vec![if strict {
            "strict recovery: the X drift exactly compensates its jumps, so X stays at zero until the first squeeze".to_string()
        } else {
            format!("X mean-reverts at rate {reversion} and jumps upward")
        }],
    };
    combine(AppName::Fx, vec![rates, x_part])
}
