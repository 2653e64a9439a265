//! Monte Carlo simulation of mild and Yosida-approximated solutions.
//!
//! All schemes consume the same per-step noise record (factor normals, then
//! a Poisson count and its marks), so paths under different schemes or
//! step sizes can be compared with matched randomness. Each path draws from
//! its own ChaCha stream selected by the path index, which keeps results
//! independent of scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cones::{Cone, SchauderProjection};
use crate::conditions::{CoefficientSet, MarkMeasure};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, Space};
use crate::semigroups::{Semigroup, YosidaOperator};

/// Truncated Karhunen–Loève data: `W = Σ_j √λ_j β^j e_j`.
#[derive(Clone, Debug)]
pub struct QWienerSpec {
    eigenvalues: Vec<f64>,
    basis: Vec<GridFunction>,
}

impl QWienerSpec {
    pub fn new(eigenvalues: Vec<f64>, basis: Vec<GridFunction>) -> Result<Self> {
        if eigenvalues.len() != basis.len() || basis.is_empty() {
            return Err(Error::LengthMismatch {
                expected: eigenvalues.len(),
                got: basis.len(),
            });
        }
        validate_eigenvalues(&eigenvalues)?;
        let space = basis[0].space().clone();
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let g = space.inner_product(a, b)?;
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - target).abs() > 1e-8 {
                    return Err(Error::param(
                        "basis",
                        format!("not orthonormal: <e{i}, e{j}> = {g}"),
                    ));
                }
            }
        }
        Ok(Self { eigenvalues, basis })
    }

    /// Orthonormalizes `raw` by Gram–Schmidt in the space's inner product.
    pub fn orthonormalized(eigenvalues: Vec<f64>, raw: Vec<GridFunction>) -> Result<Self> {
        let mut basis: Vec<GridFunction> = Vec::with_capacity(raw.len());
        for f in raw {
            let mut v = f.clone();
            for _ in 0..2 {
                for e in &basis {
                    let c = e.dot(&v);
                    v.axpy(-c, e);
                }
            }
            let n = v.norm();
            if n < 1e-12 {
                return Err(Error::param("basis", "functions are linearly dependent"));
            }
            basis.push(v.scaled(1.0 / n));
        }
        Self::new(eigenvalues, basis)
    }

    /// Sine modes `sin(jπ(x − lo)/L)`, orthonormalized on the grid.
    pub fn sine(space: &Space, eigenvalues: Vec<f64>) -> Result<Self> {
        let grid = space
            .grid()
            .filter(|g| g.dim() == 1)
            .ok_or_else(|| Error::UnsupportedSpace("sine basis needs a 1-D grid".into()))?;
        let (lo, len) = (grid.axis(0).lo, grid.axis(0).len());
        let raw = (1..=eigenvalues.len())
            .map(|j| {
                GridFunction::from_fn(space, |x| {
                    (j as f64 * std::f64::consts::PI * (x[0] - lo) / len).sin()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::orthonormalized(eigenvalues, raw)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &[GridFunction] {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `Σ_j √(λ_j Δt) ξ_j e_j` for given standard normals.
    pub fn increment_from(&self, dt: f64, xi: &[f64]) -> GridFunction {
        let mut out = GridFunction::zeros(self.basis[0].space());
        for ((l, e), x) in self.eigenvalues.iter().zip(&self.basis).zip(xi) {
            out.axpy((l * dt).sqrt() * x, e);
        }
        out
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<GridFunction> {
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        let xi: Vec<f64> = (0..self.len()).map(|_| rng.sample(StandardNormal)).collect();
        Ok(self.increment_from(dt, &xi))
    }
}

fn validate_eigenvalues(eigenvalues: &[f64]) -> Result<()> {
    if eigenvalues.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::param("eigenvalues", "must be positive and finite"));
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::param("eigenvalues", "must be non-increasing"));
    }
    Ok(())
}

/// Poisson number of jumps over `dt` with marks drawn from `F / F(E)`.
pub fn sample_jumps<R: Rng + ?Sized>(marks: &MarkMeasure, dt: f64, rng: &mut R) -> Vec<f64> {
    let mass = marks.total_mass();
    if mass <= 0.0 || marks.is_empty() {
        return Vec::new();
    }
    let count = Poisson::new(mass * dt).map_or(0, |p| p.sample(rng) as usize);
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * mass;
            let mut acc = 0.0;
            for (x, f) in marks.atoms() {
                acc += f;
                if u < acc {
                    return x;
                }
            }
            *marks.marks().last().unwrap()
        })
        .collect()
}

/// Randomness consumed by one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    pub xi: Vec<f64>,
    pub jumps: Vec<f64>,
}

/// The random stream of path `index` under master seed `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn draw_noise<R: Rng + ?Sized>(
    rng: &mut R,
    factors: usize,
    marks: &MarkMeasure,
    dt: f64,
    steps: usize,
) -> Vec<StepNoise> {
    (0..steps)
        .map(|_| StepNoise {
            xi: (0..factors).map(|_| rng.sample(StandardNormal)).collect(),
            jumps: sample_jumps(marks, dt, rng),
        })
        .collect()
}

/// Merges consecutive pairs of steps into steps of twice the length with
/// the same Brownian increments and jumps.
pub fn coarsen(noise: &[StepNoise]) -> Vec<StepNoise> {
    noise
        .chunks(2)
        .map(|c| match c {
            [a, b] => StepNoise {
                xi: a
                    .xi
                    .iter()
                    .zip(&b.xi)
                    .map(|(x, y)| (x + y) / std::f64::consts::SQRT_2)
                    .collect(),
                jumps: a.jumps.iter().chain(&b.jumps).copied().collect(),
            },
            [a] => a.clone(),
            _ => unreachable!(),
        })
        .collect()
}

/// The SPDE together with its initial state.
#[derive(Clone, Debug)]
pub struct Model {
    pub semigroup: Semigroup,
    pub coeffs: CoefficientSet,
    /// Variances `λ_j` of the scalar drivers, one per volatility factor.
    pub factor_variances: Vec<f64>,
    pub h0: GridFunction,
}

impl Model {
    pub fn new(
        semigroup: Semigroup,
        coeffs: CoefficientSet,
        factor_variances: Vec<f64>,
        h0: GridFunction,
    ) -> Result<Self> {
        if h0.space() != semigroup.space() {
            return Err(Error::MismatchedSpace);
        }
        if factor_variances.len() != coeffs.sigma.len() {
            return Err(Error::LengthMismatch {
                expected: coeffs.sigma.len(),
                got: factor_variances.len(),
            });
        }
        if factor_variances.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::param("factor_variances", "must be nonnegative and finite"));
        }
        if !h0.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Self {
            semigroup,
            coeffs,
            factor_variances,
            h0,
        })
    }

    pub fn space(&self) -> &Space {
        self.semigroup.space()
    }

    pub fn with_h0(&self, h0: GridFunction) -> Result<Self> {
        Self::new(
            self.semigroup.clone(),
            self.coeffs.clone(),
            self.factor_variances.clone(),
            h0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    ExponentialEuler,
    YosidaEuler { lambda: f64 },
    ProjectedYosidaEuler { lambda: f64, level: u32 },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ExponentialEuler => "exponential-euler",
            Scheme::YosidaEuler { .. } => "yosida-euler",
            Scheme::ProjectedYosidaEuler { .. } => "projected-yosida-euler",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub paths: usize,
    pub exit_tol: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            scheme: Scheme::ExponentialEuler,
            seed: 0,
            paths: 200,
            exit_tol: 1e-6,
        }
    }
}

impl SchemeConfig {
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("horizon", "must be positive"));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::param(
                "dt",
                format!("horizon {} is not a multiple of dt {}", self.horizon, self.dt),
            ));
        }
        if !(self.exit_tol > 0.0) {
            return Err(Error::param("exit_tol", "must be positive"));
        }
        Ok(steps as usize)
    }
}

/// A model prepared for one scheme: operators are assembled once and then
/// shared read-only by all paths.
pub struct Stepper<'a> {
    model: &'a Model,
    scheme: Scheme,
    yosida: Option<YosidaOperator>,
    projection: Option<SchauderProjection>,
    cap: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a Model, scheme: Scheme) -> Result<Self> {
        let (yosida, projection) = match scheme {
            Scheme::ExponentialEuler => (None, None),
            Scheme::YosidaEuler { lambda } => (Some(model.semigroup.yosida_operator(lambda)?), None),
            Scheme::ProjectedYosidaEuler { lambda, level } => (
                Some(model.semigroup.yosida_operator(lambda)?),
                Some(SchauderProjection::new(model.space(), level)?),
            ),
        };
        let shifted = model.h0.map(|v| v + 1.0);
        Ok(Self {
            model,
            scheme,
            yosida,
            projection,
            cap: 1e6 * shifted.norm(),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// One step from `r` with step size `dt`.
    pub fn step(&self, r: &GridFunction, dt: f64, noise: &StepNoise) -> GridFunction {
        let m = self.model;
        let c = &m.coeffs;
        let x = match &self.projection {
            Some(p) => p.apply(r).expect("state lives in the model space"),
            None => r.clone(),
        };
        let mut y = r.clone();
        let mut drift = (c.alpha)(&x);
        if let Some(op) = &self.yosida {
            if let YosidaOperator::Dense(_) = op {
                let a = op.apply(x.values());
                for (d, v) in drift.values_mut().iter_mut().zip(a) {
                    *d += v;
                }
            }
        }
        y.axpy(dt, &drift);
        for ((s, l), xi) in c.sigma.iter().zip(&m.factor_variances).zip(&noise.xi) {
            if *l > 0.0 {
                y.axpy((l * dt).sqrt() * xi, &s(&x));
            }
        }
        if c.gamma.is_some() {
            for mark in &noise.jumps {
                y.axpy(1.0, &c.gamma_at(&x, *mark));
            }
            if !c.marks.is_empty() {
                y.axpy(-dt, &c.compensator(&x));
            }
        }
        match self.scheme {
            Scheme::ExponentialEuler => y.with_values(m.semigroup.apply_raw(dt, y.values())),
            _ => y,
        }
    }

    /// Runs a full path on prescribed noise, tracking cone distances.
    pub fn run(
        &self,
        cone: Option<&Cone>,
        noise: &[StepNoise],
        dt: f64,
        exit_tol: f64,
    ) -> Result<PathResult> {
        let mut r = self.model.h0.clone();
        let n = noise.len();
        let mut res = PathResult {
            times: Vec::with_capacity(n + 1),
            distances: Vec::with_capacity(n + 1),
            min_values: Vec::with_capacity(n + 1),
            states_norm: Vec::with_capacity(n + 1),
            first_exit: None,
            terminal: r.clone(),
            trajectory: Vec::new(),
        };
        self.observe(&mut res, cone, &r, 0.0, exit_tol)?;
        for (k, nz) in noise.iter().enumerate() {
            r = self.step(&r, dt, nz);
            let norm = r.norm();
            if !norm.is_finite() || norm > self.cap || !r.is_finite() {
                return Err(Error::BlowUp { step: k + 1, norm });
            }
            self.observe(&mut res, cone, &r, (k + 1) as f64 * dt, exit_tol)?;
        }
        res.terminal = r;
        Ok(res)
    }

    /// Like [`Stepper::run`] but also keeps every state.
    pub fn run_trajectory(&self, noise: &[StepNoise], dt: f64) -> Result<Vec<GridFunction>> {
        let mut r = self.model.h0.clone();
        let mut out = Vec::with_capacity(noise.len() + 1);
        out.push(r.clone());
        for (k, nz) in noise.iter().enumerate() {
            r = self.step(&r, dt, nz);
            let norm = r.norm();
            if !norm.is_finite() || norm > self.cap {
                return Err(Error::BlowUp { step: k + 1, norm });
            }
            out.push(r.clone());
        }
        Ok(out)
    }

    fn observe(
        &self,
        res: &mut PathResult,
        cone: Option<&Cone>,
        r: &GridFunction,
        t: f64,
        exit_tol: f64,
    ) -> Result<()> {
        let norm = r.norm();
        let d = match cone {
            Some(k) => k.distance(r)?,
            None => 0.0,
        };
        if res.first_exit.is_none() && d > exit_tol * (1.0 + norm) {
            res.first_exit = Some(t);
        }
        res.times.push(t);
        res.distances.push(d);
        res.min_values.push(r.min_value());
        res.states_norm.push(norm);
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub min_values: Vec<f64>,
    pub states_norm: Vec<f64>,
    pub first_exit: Option<f64>,
    pub terminal: GridFunction,
    /// Empty unless requested.
    pub trajectory: Vec<GridFunction>,
}

impl PathResult {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.min_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Simulates path `index` under `config` (any scheme).
pub fn simulate_path(
    model: &Model,
    cone: Option<&Cone>,
    config: &SchemeConfig,
    index: u64,
) -> Result<PathResult> {
    let steps = config.steps()?;
    let stepper = Stepper::new(model, config.scheme)?;
    let mut rng = path_rng(config.seed, index);
    let noise = draw_noise(
        &mut rng,
        model.coeffs.sigma.len(),
        &model.coeffs.marks,
        config.dt,
        steps,
    );
    stepper.run(cone, &noise, config.dt, config.exit_tol)
}

/// Simulates with a Yosida scheme; rejects the exponential Euler scheme.
pub fn simulate_yosida_path(
    model: &Model,
    cone: Option<&Cone>,
    config: &SchemeConfig,
    index: u64,
) -> Result<PathResult> {
    if config.scheme == Scheme::ExponentialEuler {
        return Err(Error::param("scheme", "expected a Yosida scheme"));
    }
    simulate_path(model, cone, config, index)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSummary {
    pub index: usize,
    pub exited: bool,
    pub first_exit: Option<f64>,
    pub max_distance: f64,
    pub min_value: f64,
    pub terminal_norm: f64,
    pub blew_up: bool,
}

#[derive(Clone, Debug)]
pub struct MCReport {
    pub paths: usize,
    pub exits: usize,
    pub exit_fraction: f64,
    pub blowups: usize,
    /// `(probability, quantile)` of per-path maximal cone distance.
    pub distance_quantiles: Vec<(f64, f64)>,
    /// Counts of first-exit times in ten equal bins over `[0, T]`.
    pub exit_histogram: [usize; 10],
    pub seed: u64,
    pub exit_tol: f64,
    pub scheme: Scheme,
    pub per_path: Vec<PathSummary>,
    pub runtime_secs: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn map_paths<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Simulates `config.paths` independent paths and aggregates cone-exit
/// statistics. A path exits when `dist(r_t, K) > exit_tol (1 + ‖r_t‖)`.
pub fn mc_invariance(model: &Model, cone: &Cone, config: &SchemeConfig) -> Result<MCReport> {
    if config.paths == 0 {
        return Err(Error::param("paths", "must be at least 1"));
    }
    if cone.space() != model.space() {
        return Err(Error::MismatchedSpace);
    }
    #[cfg(not(target_arch = "wasm32"))]
    let start = std::time::Instant::now();
    let steps = config.steps()?;
    let stepper = Stepper::new(model, config.scheme)?;
    let results = map_paths(config.paths, |i| {
        let mut rng = path_rng(config.seed, i as u64);
        let noise = draw_noise(
            &mut rng,
            model.coeffs.sigma.len(),
            &model.coeffs.marks,
            config.dt,
            steps,
        );
        stepper.run(Some(cone), &noise, config.dt, config.exit_tol)
    });
    let mut per_path = Vec::with_capacity(config.paths);
    for (i, r) in results.into_iter().enumerate() {
        per_path.push(match r {
            Ok(p) => PathSummary {
                index: i,
                exited: p.first_exit.is_some(),
                first_exit: p.first_exit,
                max_distance: p.max_distance(),
                min_value: p.min_value(),
                terminal_norm: p.terminal.norm(),
                blew_up: false,
            },
            Err(Error::BlowUp { step, .. }) => PathSummary {
                index: i,
                exited: true,
                first_exit: Some(step as f64 * config.dt),
                max_distance: f64::INFINITY,
                min_value: f64::NEG_INFINITY,
                terminal_norm: f64::INFINITY,
                blew_up: true,
            },
            Err(e) => return Err(e),
        });
    }
    let exits = per_path.iter().filter(|p| p.exited).count();
    let blowups = per_path.iter().filter(|p| p.blew_up).count();
    let mut d: Vec<f64> = per_path.iter().map(|p| p.max_distance).collect();
    d.sort_by(f64::total_cmp);
    let distance_quantiles = [0.5, 0.9, 0.99, 1.0]
        .iter()
        .map(|&p| (p, quantile(&d, p)))
        .collect();
    let mut exit_histogram = [0usize; 10];
    for t in per_path.iter().filter_map(|p| p.first_exit) {
        let b = ((t / config.horizon) * 10.0).floor() as usize;
        exit_histogram[b.min(9)] += 1;
    }
    #[cfg(not(target_arch = "wasm32"))]
    let runtime_secs = start.elapsed().as_secs_f64();
    #[cfg(target_arch = "wasm32")]
    let runtime_secs = 0.0;
    Ok(MCReport {
        paths: config.paths,
        exits,
        exit_fraction: exits as f64 / config.paths as f64,
        blowups,
        distance_quantiles,
        exit_histogram,
        seed: config.seed,
        exit_tol: config.exit_tol,
        scheme: config.scheme,
        per_path,
        runtime_secs,
    })
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct GapRow {
    /// `λ` or the projection level.
    pub parameter: f64,
    pub mean_gap: f64,
    /// Standard error of the mean gap.
    pub std_error: f64,
    pub paths: usize,
}

fn sup_gap(space: &Space, a: &[GridFunction], b: &[GridFunction]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d: Vec<f64> = x.values().iter().zip(y.values()).map(|(p, q)| p - q).collect();
            space.norm_raw(&d)
        })
        .fold(0.0, f64::max)
}

fn gap_rows(params: &[f64], gaps: Vec<Vec<f64>>) -> Vec<GapRow> {
    let n = gaps.len();
    params
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let g: Vec<f64> = gaps.iter().map(|row| row[k]).collect();
            let mean = g.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            GapRow {
                parameter: p,
                mean_gap: mean,
                std_error: (var / n as f64).sqrt(),
                paths: n,
            }
        })
        .collect()
}

/// Mean `sup_t ‖r_t^λ − r_t‖` between matched-noise Yosida and exponential
/// Euler paths, per `λ`.
pub fn yosida_convergence_study(
    model: &Model,
    lambdas: &[f64],
    n_paths: usize,
    config: &SchemeConfig,
) -> Result<Vec<GapRow>> {
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("lambdas", "must be increasing"));
    }
    let steps = config.steps()?;
    let base = Stepper::new(model, Scheme::ExponentialEuler)?;
    let steppers = lambdas
        .iter()
        .map(|&l| Stepper::new(model, Scheme::YosidaEuler { lambda: l }))
        .collect::<Result<Vec<_>>>()?;
    let gaps = map_paths(n_paths, |i| -> Result<Vec<f64>> {
        let mut rng = path_rng(config.seed, i as u64);
        let noise = draw_noise(&mut rng, model.coeffs.sigma.len(), &model.coeffs.marks, config.dt, steps);
        let reference = base.run_trajectory(&noise, config.dt)?;
        steppers
            .iter()
            .map(|s| Ok(sup_gap(model.space(), &s.run_trajectory(&noise, config.dt)?, &reference)))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(gap_rows(lambdas, gaps))
}

/// Mean `sup_t ‖r_t^{λ,n} − r_t^λ‖` between matched-noise projected and
/// plain Yosida paths, per level `n`.
pub fn projection_convergence_study(
    model: &Model,
    lambda: f64,
    levels: &[u32],
    n_paths: usize,
    config: &SchemeConfig,
) -> Result<Vec<GapRow>> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("levels", "must be increasing"));
    }
    let steps = config.steps()?;
    let base = Stepper::new(model, Scheme::YosidaEuler { lambda })?;
    let steppers = levels
        .iter()
        .map(|&level| Stepper::new(model, Scheme::ProjectedYosidaEuler { lambda, level }))
        .collect::<Result<Vec<_>>>()?;
    let gaps = map_paths(n_paths, |i| -> Result<Vec<f64>> {
        let mut rng = path_rng(config.seed, i as u64);
        let noise = draw_noise(&mut rng, model.coeffs.sigma.len(), &model.coeffs.marks, config.dt, steps);
        let reference = base.run_trajectory(&noise, config.dt)?;
        steppers
            .iter()
            .map(|s| Ok(sup_gap(model.space(), &s.run_trajectory(&noise, config.dt)?, &reference)))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let params: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
    Ok(gap_rows(&params, gaps))
}
