//! Boundary-condition checkers and the aggregate invariance verdict.
//!
//! For a cone `K` with generating system `G`, the SPDE
//! `dr = (Ar + α(r))dt + Σ_j σ^j(r)dβ^j + ∫ γ(r−, x)(N − F)(dt, dx)`
//! leaves `K` invariant when, for all boundary pairs `(h*, h)`:
//!
//! * `h + γ(h, x) ∈ K` for every mark `x` (jump condition);
//! * `⟨h*, σ^j(h)⟩ = 0` for every factor (volatility condition);
//! * `⟨h*, α(h)⟩ − ∫ ⟨h*, γ(h, x)⟩ F(dx) ≥ 0` (drift condition), with the
//!   small-time term `lim inf ⟨h*, S_t h⟩/t` added when the semigroup is not
//!   local.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cones::{BoundaryPair, Cone};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, Space};
use crate::semigroups::{
    growth_bound, liminf_rate, local_semigroup_test, semigroup_cone_invariance_check,
    InvarianceReport, LimInfClass, Locality, LocalityReport, Semigroup,
};

pub type StateMap = Arc<dyn Fn(&GridFunction) -> GridFunction + Send + Sync>;
pub type JumpMap = Arc<dyn Fn(&GridFunction, f64) -> GridFunction + Send + Sync>;
pub type ScalarMap = Arc<dyn Fn(&GridFunction) -> f64 + Send + Sync>;
pub type MarkScalarMap = Arc<dyn Fn(&GridFunction, f64) -> f64 + Send + Sync>;

pub const JUMP_TOL: f64 = 1e-6;
pub const PAIRING_TOL: f64 = 1e-8;

/// A finite atomic mark measure `F = Σ F_i δ_{x_i}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarkMeasure {
    marks: Vec<f64>,
    weights: Vec<f64>,
}

impl MarkMeasure {
    pub fn new(marks: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if marks.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: marks.len(),
                got: weights.len(),
            });
        }
        if marks.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("marks", "must be finite"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::param("weights", "must be positive and finite"));
        }
        Ok(Self { marks, weights })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.marks.iter().copied().zip(self.weights.iter().copied())
    }
}

/// The SPDE data `(α, σ, γ)` with its mark measure.
#[derive(Clone)]
pub struct CoefficientSet {
    pub alpha: StateMap,
    pub sigma: Vec<StateMap>,
    pub gamma: Option<JumpMap>,
    pub marks: MarkMeasure,
    pub lipschitz_hint: f64,
    pub growth_hint: f64,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("factors", &self.sigma.len())
            .field("jumps", &self.gamma.is_some())
            .field("marks", &self.marks)
            .finish()
    }
}

pub fn zero_map() -> StateMap {
    Arc::new(|h: &GridFunction| GridFunction::zeros(h.space()))
}

impl CoefficientSet {
    /// `α = 0`, no noise, no jumps.
    pub fn zero() -> Self {
        Self {
            alpha: zero_map(),
            sigma: Vec::new(),
            gamma: None,
            marks: MarkMeasure::empty(),
            lipschitz_hint: 0.0,
            growth_hint: 0.0,
        }
    }

    pub fn with_alpha(mut self, alpha: StateMap) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_sigma(mut self, sigma: Vec<StateMap>) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_jumps(mut self, gamma: JumpMap, marks: MarkMeasure) -> Self {
        self.gamma = Some(gamma);
        self.marks = marks;
        self
    }

    pub fn with_hints(mut self, lipschitz: f64, growth: f64) -> Self {
        self.lipschitz_hint = lipschitz;
        self.growth_hint = growth;
        self
    }

    /// Multiplies every coefficient by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let a = self.alpha.clone();
        let mut out = self.clone();
        out.alpha = Arc::new(move |h: &GridFunction| a(h).scaled(c));
        out.sigma = self
            .sigma
            .iter()
            .map(|s| {
                let s = s.clone();
                Arc::new(move |h: &GridFunction| s(h).scaled(c)) as StateMap
            })
            .collect();
        out.gamma = self.gamma.clone().map(|g| {
            Arc::new(move |h: &GridFunction, x: f64| g(h, x).scaled(c)) as JumpMap
        });
        out
    }

    pub fn gamma_at(&self, h: &GridFunction, x: f64) -> GridFunction {
        match &self.gamma {
            Some(g) => g(h, x),
            None => GridFunction::zeros(h.space()),
        }
    }

    /// `Σ_i F_i γ(h, x_i)`, the jump compensator.
    pub fn compensator(&self, h: &GridFunction) -> GridFunction {
        let mut out = GridFunction::zeros(h.space());
        if self.gamma.is_some() {
            for (x, f) in self.marks.atoms() {
                out.axpy(f, &self.gamma_at(h, x));
            }
        }
        out
    }

    pub fn has_jumps(&self) -> bool {
        self.gamma.is_some() && !self.marks.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// The worst offending evaluation of a check.
#[derive(Clone, Debug)]
pub struct Witness {
    /// Index of the pair (or sample) in the evaluated batch.
    pub index: usize,
    /// Factor index or mark, when relevant.
    pub detail: String,
    pub h_star: Option<GridFunction>,
    pub h: GridFunction,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub name: &'static str,
    pub status: Status,
    /// Worst raw value: the minimum pairing for sign conditions and the
    /// negated maximum violation for equality and membership conditions.
    pub margin: f64,
    /// The same worst value divided by `‖h*‖(1 + ‖h‖)` (or `1 + ‖h‖`).
    pub relative_margin: f64,
    pub checked: usize,
    pub failed: usize,
    pub inconclusive: usize,
    pub witness: Option<Witness>,
    pub seed: Option<u64>,
}

impl ConditionReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            status: Status::Pass,
            margin: 0.0,
            relative_margin: 0.0,
            checked: 0,
            failed: 0,
            inconclusive: 0,
            witness: None,
            seed: None,
        }
    }

    fn record(&mut self, value: f64, scale: f64, ok: bool, witness: impl FnOnce() -> Witness) {
        let rel = value / scale;
        let first = self.checked == 0;
        self.checked += 1;
        if !ok {
            self.failed += 1;
        }
        if first || rel < self.relative_margin {
            self.margin = value;
            self.relative_margin = rel;
            if !ok || self.failed == 0 {
                self.witness = Some(witness());
            }
        }
    }

    fn finish(mut self) -> Self {
        self.status = if self.failed > 0 {
            Status::Fail
        } else if self.inconclusive > 0 {
            Status::Inconclusive
        } else {
            Status::Pass
        };
        if self.status == Status::Pass {
            self.witness = None;
        }
        self
    }
}

fn pair_scale(p: &BoundaryPair) -> f64 {
    p.h_star.norm() * (1.0 + p.h.norm())
}

/// Checks `dist(h + γ(h, x_i), K) ≤ 1e-6 (1 + ‖h‖)` on sampled members and
/// boundary points of `K`.
pub fn check_jump_condition(
    coeffs: &CoefficientSet,
    cone: &Cone,
    n_samples: usize,
    seed: u64,
) -> Result<ConditionReport> {
    let mut rep = ConditionReport::new("jump");
    rep.seed = Some(seed);
    if !coeffs.has_jumps() {
        return Ok(rep.finish());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(2 * n_samples);
    for _ in 0..n_samples {
        states.push(cone.sample_member(&mut rng)?);
        match cone.boundary_pair(&mut rng) {
            Ok(p) => states.push(p.h),
            Err(Error::Exhausted(_)) => {}
            Err(e) => return Err(e),
        }
    }
    for (i, h) in states.iter().enumerate() {
        let scale = 1.0 + h.norm();
        for x in coeffs.marks.marks() {
            let moved = h + &coeffs.gamma_at(h, *x);
            let d = cone.distance(&moved)?;
            let ok = d <= JUMP_TOL * scale;
            rep.record(-d, scale, ok, || Witness {
                index: i,
                detail: format!("mark={x}"),
                h_star: None,
                h: h.clone(),
                value: d,
            });
        }
    }
    Ok(rep.finish())
}

/// Checks `|⟨h*, σ^j(h)⟩| ≤ 1e-8 ‖h*‖(1 + ‖h‖)` on every pair and factor.
pub fn check_volatility_parallel(
    coeffs: &CoefficientSet,
    _cone: &Cone,
    pairs: &[BoundaryPair],
) -> ConditionReport {
    let mut rep = ConditionReport::new("volatility");
    for (i, p) in pairs.iter().enumerate() {
        let scale = pair_scale(p);
        for (j, s) in coeffs.sigma.iter().enumerate() {
            let v = p.h_star.dot(&s(&p.h));
            let ok = v.abs() <= PAIRING_TOL * scale;
            rep.record(-v.abs(), scale, ok, || Witness {
                index: i,
                detail: format!("factor={}", j + 1),
                h_star: Some(p.h_star.clone()),
                h: p.h.clone(),
                value: v,
            });
        }
    }
    rep.finish()
}

/// `⟨h*, α(h)⟩ − Σ_i F_i ⟨h*, γ(h, x_i)⟩`.
pub fn drift_quantity(coeffs: &CoefficientSet, p: &BoundaryPair) -> f64 {
    let mut v = p.h_star.dot(&(coeffs.alpha)(&p.h));
    if coeffs.gamma.is_some() {
        for (x, f) in coeffs.marks.atoms() {
            v -= f * p.h_star.dot(&coeffs.gamma_at(&p.h, x));
        }
    }
    v
}

/// Checks the drift condition `min drift_quantity ≥ −1e-8 ‖h*‖(1 + ‖h‖)`.
pub fn check_drift_condition(
    coeffs: &CoefficientSet,
    _cone: &Cone,
    pairs: &[BoundaryPair],
) -> ConditionReport {
    let mut rep = ConditionReport::new("drift");
    for (i, p) in pairs.iter().enumerate() {
        let scale = pair_scale(p);
        let v = drift_quantity(coeffs, p);
        rep.record(v, scale, v >= -PAIRING_TOL * scale, || Witness {
            index: i,
            detail: String::new(),
            h_star: Some(p.h_star.clone()),
            h: p.h.clone(),
            value: v,
        });
    }
    rep.finish()
}

/// Drift condition with the small-time semigroup term. Pairs whose term
/// diverges to `+∞` pass outright; a bounded term leaves the pair undecided
/// unless the drift part alone is already nonnegative.
pub fn check_drift_condition_with_liminf(
    coeffs: &CoefficientSet,
    sg: &Semigroup,
    _cone: &Cone,
    pairs: &[BoundaryPair],
) -> Result<ConditionReport> {
    let times = sg.default_times();
    let mut rep = ConditionReport::new("drift");
    for (i, p) in pairs.iter().enumerate() {
        let scale = pair_scale(p);
        let base = drift_quantity(coeffs, p);
        let lim = liminf_rate(sg, &p.h_star, &p.h, &times)?;
        match lim.class {
            LimInfClass::Vanishing => {
                rep.record(base, scale, base >= -PAIRING_TOL * scale, || Witness {
                    index: i,
                    detail: String::new(),
                    h_star: Some(p.h_star.clone()),
                    h: p.h.clone(),
                    value: base,
                });
            }
            LimInfClass::Divergent if lim.last() > 0.0 => {
                rep.checked += 1;
            }
            LimInfClass::Divergent => {
                rep.record(f64::NEG_INFINITY, scale, false, || Witness {
                    index: i,
                    detail: "semigroup term diverges to -inf".into(),
                    h_star: Some(p.h_star.clone()),
                    h: p.h.clone(),
                    value: f64::NEG_INFINITY,
                });
            }
            // The term is nonnegative, so a nonnegative base already decides.
            LimInfClass::Bounded if base >= -PAIRING_TOL * scale => {
                rep.record(base, scale, true, || Witness {
                    index: i,
                    detail: String::new(),
                    h_star: Some(p.h_star.clone()),
                    h: p.h.clone(),
                    value: base,
                });
            }
            LimInfClass::Bounded => {
                rep.checked += 1;
                rep.inconclusive += 1;
                let v = base + lim.last();
                if rep.witness.is_none() || v / scale < rep.relative_margin {
                    rep.margin = v;
                    rep.relative_margin = v / scale;
                    rep.witness = Some(Witness {
                        index: i,
                        detail: "bounded semigroup term".into(),
                        h_star: Some(p.h_star.clone()),
                        h: p.h.clone(),
                        value: v,
                    });
                }
            }
        }
    }
    Ok(rep.finish())
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    /// The drift condition evaluated with `α = 0`.
    pub drift: ConditionReport,
    /// `max_i |⟨h*, γ(h, x_i)⟩| ≤ tol` on every pair.
    pub jump_pairing: ConditionReport,
    /// PASS/FAIL when both sides agree, INCONCLUSIVE on a discrepancy.
    pub status: Status,
}

/// With `α = 0` the drift condition holds iff `⟨h*, γ(h, x)⟩ = 0` for all
/// marks; evaluates both sides and reports whether they agree.
pub fn check_zero_drift_equivalence(
    coeffs: &CoefficientSet,
    cone: &Cone,
    pairs: &[BoundaryPair],
) -> Result<EquivalenceReport> {
    for p in pairs {
        let a = (coeffs.alpha)(&p.h).norm();
        if a > 1e-12 * (1.0 + p.h.norm()) {
            return Err(Error::AlphaNotZero(a));
        }
    }
    let drift = check_drift_condition(coeffs, cone, pairs);
    let mut jp = ConditionReport::new("jump-pairing");
    for (i, p) in pairs.iter().enumerate() {
        let scale = pair_scale(p);
        for x in coeffs.marks.marks() {
            if coeffs.gamma.is_none() {
                break;
            }
            let v = p.h_star.dot(&coeffs.gamma_at(&p.h, *x));
            jp.record(-v.abs(), scale, v.abs() <= PAIRING_TOL * scale, || Witness {
                index: i,
                detail: format!("mark={x}"),
                h_star: Some(p.h_star.clone()),
                h: p.h.clone(),
                value: v,
            });
        }
    }
    let jp = jp.finish();
    let status = if drift.status == jp.status {
        drift.status
    } else {
        Status::Inconclusive
    };
    Ok(EquivalenceReport {
        drift,
        jump_pairing: jp,
        status,
    })
}

/// `⟨h*, f(h)⟩ ≥ −1e-8 ‖h*‖(1 + ‖h‖)` on all pairs.
pub fn check_inward_pointing(
    f: &dyn Fn(&GridFunction) -> GridFunction,
    _cone: &Cone,
    pairs: &[BoundaryPair],
) -> ConditionReport {
    let mut rep = ConditionReport::new("inward");
    for (i, p) in pairs.iter().enumerate() {
        let scale = pair_scale(p);
        let v = p.h_star.dot(&f(&p.h));
        rep.record(v, scale, v >= -PAIRING_TOL * scale, || Witness {
            index: i,
            detail: String::new(),
            h_star: Some(p.h_star.clone()),
            h: p.h.clone(),
            value: v,
        });
    }
    rep.finish()
}

/// `|⟨h*, f(h)⟩| ≤ 1e-8 ‖h*‖(1 + ‖h‖)` on all pairs.
pub fn check_parallel(
    f: &dyn Fn(&GridFunction) -> GridFunction,
    _cone: &Cone,
    pairs: &[BoundaryPair],
) -> ConditionReport {
    let mut rep = ConditionReport::new("parallel");
    for (i, p) in pairs.iter().enumerate() {
        let scale = pair_scale(p);
        let v = p.h_star.dot(&f(&p.h));
        rep.record(-v.abs(), scale, v.abs() <= PAIRING_TOL * scale, || Witness {
            index: i,
            detail: String::new(),
            h_star: Some(p.h_star.clone()),
            h: p.h.clone(),
            value: v,
        });
    }
    rep.finish()
}

/// The no-arbitrage drift of a forward-curve model in Musiela form:
///
/// `α(h) = Σ_j σ^j(h)(θ^j(h) + Σ^j(h)) − Σ_i F_i γ(h, x_i)(e^{−φ(h,x_i) − Γ(h,x_i)} − 1)`
///
/// with `Σ^j`, `Γ` the cumulative trapezoid integrals of `σ^j`, `γ` from the
/// left end of the grid.
pub fn hjm_drift(
    space: &Space,
    sigma: Vec<StateMap>,
    gamma: Option<JumpMap>,
    theta: Vec<ScalarMap>,
    phi: Option<MarkScalarMap>,
    marks: MarkMeasure,
) -> Result<StateMap> {
    let grid = space
        .grid()
        .filter(|g| g.dim() == 1)
        .ok_or_else(|| Error::UnsupportedSpace("forward-curve drift needs a 1-D grid".into()))?
        .clone();
    if !theta.is_empty() && theta.len() != sigma.len() {
        return Err(Error::LengthMismatch {
            expected: sigma.len(),
            got: theta.len(),
        });
    }
    Ok(Arc::new(move |h: &GridFunction| {
        let n = h.len();
        let mut out = vec![0.0; n];
        for (j, s) in sigma.iter().enumerate() {
            let sv = s(h);
            let cum = grid.cumulative_trapezoid(sv.values());
            let th = theta.get(j).map_or(0.0, |t| t(h));
            for i in 0..n {
                out[i] += sv.values()[i] * (th + cum[i]);
            }
        }
        if let Some(g) = &gamma {
            for (x, f) in marks.atoms() {
                let gv = g(h, x);
                let cum = grid.cumulative_trapezoid(gv.values());
                let ph = phi.as_ref().map_or(0.0, |p| p(h, x));
                for i in 0..n {
                    out[i] -= f * gv.values()[i] * ((-ph - cum[i]).exp() - 1.0);
                }
            }
        }
        h.with_values(out)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    SufficientPass,
    NecessaryFail,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::SufficientPass => "SUFFICIENT-PASS",
            Verdict::NecessaryFail => "NECESSARY-FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::SufficientPass => 0,
            Verdict::NecessaryFail => 2,
            Verdict::Inconclusive => 3,
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [
            Verdict::SufficientPass,
            Verdict::NecessaryFail,
            Verdict::Inconclusive,
        ]
        .into_iter()
        .find(|v| v.label() == s)
    }
}

#[derive(Clone, Debug)]
pub struct CheckerConfig {
    pub pairs: usize,
    pub samples: usize,
    pub seed: u64,
    /// Times for the growth-bound and invariance checks.
    pub times: Vec<f64>,
    /// Offsets `λ − β` for the resolvent invariance check.
    pub lambda_offsets: Vec<f64>,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            samples: 20,
            seed: 0,
            times: vec![0.01, 0.1, 0.5],
            lambda_offsets: vec![1.0, 10.0],
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub growth_bound: f64,
    pub invariance: InvarianceReport,
    pub locality: LocalityReport,
    pub jump: ConditionReport,
    pub volatility: ConditionReport,
    pub drift: ConditionReport,
    pub pairs: usize,
    pub seed: u64,
}

impl VerdictReport {
    pub fn conditions(&self) -> [&ConditionReport; 3] {
        [&self.jump, &self.volatility, &self.drift]
    }
}

/// Runs every diagnostic and combines them: all conditions holding on an
/// invariant semigroup is sufficient; a failure is conclusive only when the
/// semigroup is local.
pub fn verdict(
    cone: &Cone,
    sg: &Semigroup,
    coeffs: &CoefficientSet,
    config: &CheckerConfig,
) -> Result<VerdictReport> {
    if sg.space() != cone.space() {
        return Err(Error::MismatchedSpace);
    }
    let seed = config.seed;
    let beta = growth_bound(sg, config.samples.min(8), &config.times, seed)?;
    let lambdas: Vec<f64> = config
        .lambda_offsets
        .iter()
        .map(|o| sg.growth_hint().max(beta) + o)
        .collect();
    let invariance = semigroup_cone_invariance_check(
        sg,
        cone,
        config.samples,
        &config.times,
        &lambdas,
        seed.wrapping_add(1),
    )?;
    let locality = local_semigroup_test(sg, cone, config.pairs.min(32), seed.wrapping_add(2))?;
    let pairs = match cone.sample_boundary_pairs(config.pairs.max(1), seed.wrapping_add(3)) {
        Ok(p) => p,
        Err(Error::Exhausted(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    let jump = check_jump_condition(coeffs, cone, config.samples, seed.wrapping_add(4))?;
    let mut volatility = check_volatility_parallel(coeffs, cone, &pairs);
    let mut drift = if locality.verdict == Locality::Local {
        check_drift_condition(coeffs, cone, &pairs)
    } else {
        check_drift_condition_with_liminf(coeffs, sg, cone, &pairs)?
    };
    volatility.seed = Some(seed.wrapping_add(3));
    drift.seed = Some(seed.wrapping_add(3));
    let all_pass = invariance.pass
        && [&jump, &volatility, &drift]
            .iter()
            .all(|r| r.status == Status::Pass);
    let any_fail = [&jump, &volatility, &drift]
        .iter()
        .any(|r| r.status == Status::Fail);
    let verdict = if all_pass {
        Verdict::SufficientPass
    } else if locality.verdict == Locality::Local && any_fail {
        Verdict::NecessaryFail
    } else {
        Verdict::Inconclusive
    };
    Ok(VerdictReport {
        verdict,
        growth_bound: beta,
        invariance,
        locality,
        jump,
        volatility,
        drift,
        pairs: pairs.len(),
        seed,
    })
}
