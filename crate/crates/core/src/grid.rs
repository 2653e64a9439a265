//! Discretized Hilbert spaces.
//!
//! A [`GridSpec`] fixes a uniform tensor grid of dimension at most two. A
//! [`Space`] equips the grid with an inner product:
//!
//! * plain and weighted `L²`, integrated with the composite trapezoid rule on
//!   node-centred grids and the midpoint rule on cell-centred grids;
//! * the Filipović space of absolutely continuous curves with
//!   `‖h‖² = h(x₀)² + ∫ h′(x)² w(x) dx`, where the derivative lives on the
//!   cells between nodes so that `(a, f) ↦ a + ∫_{x₀} f w^{-1/2}` is an exact
//!   isometry from `ℝ × L²(cells)` onto the node values;
//! * finite products of the above.
//!
//! Every space also exposes "isometric coordinates": a linear bijection of the
//! node values under which the inner product becomes diagonal. Cone
//! projections run in those coordinates.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Centering {
    /// Values at the `n` end-inclusive nodes `lo, lo + Δx, …, hi`.
    Node,
    /// Values at the midpoints of `n` equal cells.
    Cell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub centering: Centering,
}

impl Axis {
    pub fn nodes(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes, got {n}")));
        }
        Self::checked(lo, hi, n, Centering::Node)
    }

    pub fn cells(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidGrid("need at least one cell".into()));
        }
        Self::checked(lo, hi, n, Centering::Cell)
    }

    fn checked(lo: f64, hi: f64, n: usize, centering: Centering) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidGrid(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n, centering })
    }

    pub fn spacing(&self) -> f64 {
        match self.centering {
            Centering::Node => (self.hi - self.lo) / (self.n - 1) as f64,
            Centering::Cell => (self.hi - self.lo) / self.n as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        let dx = self.spacing();
        match self.centering {
            Centering::Node if i + 1 == self.n => self.hi,
            Centering::Node => self.lo + i as f64 * dx,
            Centering::Cell => self.lo + (i as f64 + 0.5) * dx,
        }
    }

    pub fn quad_weight(&self, i: usize) -> f64 {
        let dx = self.spacing();
        match self.centering {
            Centering::Node if i == 0 || i + 1 == self.n => 0.5 * dx,
            _ => dx,
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Uniform tensor grid with at most two axes. A grid without axes is a
/// single point carrying unit weight (used for scalar state components).
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn interval(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Ok(Self {
            axes: vec![Axis::nodes(lo, hi, n)?],
        })
    }

    pub fn cells(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Ok(Self {
            axes: vec![Axis::cells(lo, hi, n)?],
        })
    }

    pub fn rectangle(x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<Self> {
        Ok(Self {
            axes: vec![Axis::nodes(x.0, x.1, x.2)?, Axis::nodes(y.0, y.1, y.2)?],
        })
    }

    pub fn point() -> Self {
        Self { axes: Vec::new() }
    }

    pub fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        if axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension {} exceeds 2",
                axes.len()
            )));
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Splits a flat index into per-axis indices; axis 0 varies fastest.
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        match self.axes.len() {
            0 => [0, 0],
            1 => [flat, 0],
            _ => [flat % self.axes[0].n, flat / self.axes[0].n],
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        match self.axes.len() {
            0 => 0,
            1 => idx[0],
            _ => idx[0] + self.axes[0].n * idx[1],
        }
    }

    pub fn coords(&self, flat: usize) -> [f64; 2] {
        let idx = self.unflatten(flat);
        let mut out = [0.0; 2];
        for (k, axis) in self.axes.iter().enumerate() {
            out[k] = axis.coord(idx[k]);
        }
        out
    }

    pub fn quadrature_weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|flat| {
                let idx = self.unflatten(flat);
                self.axes
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a.quad_weight(idx[k]))
                    .product()
            })
            .collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes
            .iter()
            .map(Axis::spacing)
            .fold(f64::INFINITY, f64::min)
    }

    /// Cumulative trapezoid integral `∫_{lo}^{x_i}` along a 1-D node grid.
    pub fn cumulative_trapezoid(&self, values: &[f64]) -> Vec<f64> {
        let dx = self.axes[0].spacing();
        let mut out = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * dx * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeightFunction {
    Constant(f64),
    /// `w(x) = e^{rate·x}` in the first coordinate.
    Exponential { rate: f64 },
    /// Piecewise-linear interpolation of `(x, w)` samples, constant beyond
    /// the table ends.
    Tabulated { x: Vec<f64>, w: Vec<f64> },
}

impl WeightFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            WeightFunction::Constant(c) => *c,
            WeightFunction::Exponential { rate } => (rate * x).exp(),
            WeightFunction::Tabulated { x: xs, w } => {
                if x <= xs[0] {
                    return w[0];
                }
                if x >= xs[xs.len() - 1] {
                    return w[w.len() - 1];
                }
                let k = xs.partition_point(|&p| p <= x) - 1;
                let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                (1.0 - t) * w[k] + t * w[k + 1]
            }
        }
    }

    /// Monotone non-decreasing in the first coordinate.
    pub fn is_increasing(&self) -> bool {
        match self {
            WeightFunction::Constant(_) => true,
            WeightFunction::Exponential { rate } => *rate >= 0.0,
            WeightFunction::Tabulated { w, .. } => w.windows(2).all(|p| p[1] >= p[0]),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            WeightFunction::Constant(c) if !(c.is_finite() && *c > 0.0) => {
                Err(Error::param("weight", "constant weight must be positive"))
            }
            WeightFunction::Exponential { rate } if !rate.is_finite() => {
                Err(Error::param("weight.rate", "must be finite"))
            }
            WeightFunction::Tabulated { x, w } => {
                if x.len() != w.len() || x.len() < 2 {
                    return Err(Error::param("weight", "table needs matching x/w of length >= 2"));
                }
                if !x.windows(2).all(|p| p[1] > p[0]) {
                    return Err(Error::param("weight.x", "must be strictly increasing"));
                }
                if !w.iter().all(|v| v.is_finite() && *v > 0.0) {
                    return Err(Error::param("weight.w", "must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpaceSpec {
    PlainL2 {
        grid: GridSpec,
    },
    WeightedL2 {
        grid: GridSpec,
        weight: WeightFunction,
    },
    /// Filipović space over a 1-D node grid; `base` is the node index of x₀.
    Filipovic {
        grid: GridSpec,
        weight: WeightFunction,
        base: usize,
    },
    Product(Vec<SpaceSpec>),
}

/// Which half of the decomposition `H_w = ℝ ⊕ {h : h(x₀) = 0}` to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectSumPart {
    Constants,
    ZeroAtBase,
}

#[derive(Debug)]
enum Metric {
    Diagonal(Vec<f64>),
    Filipovic {
        base: usize,
        dx: f64,
        /// `w^{-1/2}` at cell midpoints.
        root_inv_w: Vec<f64>,
        iso_weights: Vec<f64>,
    },
    Product {
        parts: Vec<Space>,
        offsets: Vec<usize>,
        iso_weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct SpaceData {
    spec: SpaceSpec,
    len: usize,
    metric: Metric,
}

/// A validated, immutable inner-product space. Cloning is cheap.
#[derive(Clone)]
pub struct Space(Arc<SpaceData>);

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Space({:?}, len={})", self.kind_name(), self.0.len)
    }
}

impl PartialEq for Space {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

impl Space {
    pub fn new(spec: SpaceSpec) -> Result<Self> {
        let (len, metric) = match &spec {
            SpaceSpec::PlainL2 { grid } => (grid.len(), Metric::Diagonal(grid.quadrature_weights())),
            SpaceSpec::WeightedL2 { grid, weight } => {
                weight.validate()?;
                let q = grid.quadrature_weights();
                let diag: Vec<f64> = q
                    .iter()
                    .enumerate()
                    .map(|(i, qi)| qi * weight.eval(grid.coords(i)[0]))
                    .collect();
                if let Some(i) = diag.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::param("weight", format!("non-positive at node {i}")));
                }
                (grid.len(), Metric::Diagonal(diag))
            }
            SpaceSpec::Filipovic { grid, weight, base } => {
                weight.validate()?;
                if grid.dim() != 1 || grid.axis(0).centering != Centering::Node {
                    return Err(Error::UnsupportedSpace(
                        "Filipović spaces need a 1-D node grid".into(),
                    ));
                }
                let n = grid.len();
                if *base >= n {
                    return Err(Error::param("base", format!("node {base} outside grid of {n}")));
                }
                let axis = grid.axis(0);
                let dx = axis.spacing();
                let mut root_inv_w = Vec::with_capacity(n - 1);
                for c in 0..n - 1 {
                    let w = weight.eval(axis.lo + (c as f64 + 0.5) * dx);
                    if !(w.is_finite() && w >= 1.0) {
                        return Err(Error::param("weight", "Filipović weight must be >= 1"));
                    }
                    root_inv_w.push(w.sqrt().recip());
                }
                let mut iso_weights = vec![dx; n];
                iso_weights[0] = 1.0;
                (
                    n,
                    Metric::Filipovic {
                        base: *base,
                        dx,
                        root_inv_w,
                        iso_weights,
                    },
                )
            }
            SpaceSpec::Product(specs) => {
                if specs.is_empty() {
                    return Err(Error::param("space", "empty product"));
                }
                let parts = specs
                    .iter()
                    .cloned()
                    .map(Space::new)
                    .collect::<Result<Vec<_>>>()?;
                let mut offsets = Vec::with_capacity(parts.len() + 1);
                let mut iso_weights = Vec::new();
                let mut off = 0;
                for p in &parts {
                    offsets.push(off);
                    off += p.len();
                    iso_weights.extend_from_slice(p.iso_weights());
                }
                offsets.push(off);
                (
                    off,
                    Metric::Product {
                        parts,
                        offsets,
                        iso_weights,
                    },
                )
            }
        };
        Ok(Space(Arc::new(SpaceData { spec, len, metric })))
    }

    pub fn plain_l2(grid: GridSpec) -> Result<Self> {
        Self::new(SpaceSpec::PlainL2 { grid })
    }

    pub fn weighted_l2(grid: GridSpec, weight: WeightFunction) -> Result<Self> {
        Self::new(SpaceSpec::WeightedL2 { grid, weight })
    }

    pub fn filipovic(grid: GridSpec, weight: WeightFunction, base: usize) -> Result<Self> {
        Self::new(SpaceSpec::Filipovic { grid, weight, base })
    }

    /// A one-dimensional space `ℝ` with the usual product.
    pub fn scalar() -> Self {
        Self::new(SpaceSpec::PlainL2 {
            grid: GridSpec::point(),
        })
        .expect("point space is valid")
    }

    pub fn product(parts: &[Space]) -> Result<Self> {
        Self::new(SpaceSpec::Product(
            parts.iter().map(|p| p.spec().clone()).collect(),
        ))
    }

    /// `H^m` for `m` copies of this space.
    pub fn power(&self, m: usize) -> Result<Self> {
        Self::product(&vec![self.clone(); m])
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.0.spec
    }

    pub fn len(&self) -> usize {
        self.0.len
    }

    pub fn is_empty(&self) -> bool {
        self.0.len == 0
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.0.spec {
            SpaceSpec::PlainL2 { grid } if grid.dim() == 0 => "scalar",
            SpaceSpec::PlainL2 { .. } => "L2",
            SpaceSpec::WeightedL2 { .. } => "weighted L2",
            SpaceSpec::Filipovic { .. } => "Filipovic",
            SpaceSpec::Product(_) => "product",
        }
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match &self.0.spec {
            SpaceSpec::PlainL2 { grid }
            | SpaceSpec::WeightedL2 { grid, .. }
            | SpaceSpec::Filipovic { grid, .. } => Some(grid),
            SpaceSpec::Product(_) => None,
        }
    }

    pub fn is_filipovic(&self) -> bool {
        matches!(self.0.metric, Metric::Filipovic { .. })
    }

    pub fn is_product(&self) -> bool {
        matches!(self.0.metric, Metric::Product { .. })
    }

    /// Component spaces of a product, or `None`.
    pub fn components(&self) -> Option<&[Space]> {
        match &self.0.metric {
            Metric::Product { parts, .. } => Some(parts),
            _ => None,
        }
    }

    /// Start offsets of product components (with a trailing total length).
    pub fn offsets(&self) -> Option<&[usize]> {
        match &self.0.metric {
            Metric::Product { offsets, .. } => Some(offsets),
            _ => None,
        }
    }

    /// Diagonal Gram weights when the inner product is a weighted sum of
    /// node products (all `L²` variants and products thereof).
    pub fn diagonal_weights(&self) -> Option<Vec<f64>> {
        match &self.0.metric {
            Metric::Diagonal(d) => Some(d.clone()),
            Metric::Filipovic { .. } => None,
            Metric::Product { parts, .. } => {
                let mut out = Vec::with_capacity(self.len());
                for p in parts {
                    out.extend(p.diagonal_weights()?);
                }
                Some(out)
            }
        }
    }

    pub fn is_diagonal(&self) -> bool {
        match &self.0.metric {
            Metric::Diagonal(_) => true,
            Metric::Filipovic { .. } => false,
            Metric::Product { parts, .. } => parts.iter().all(Space::is_diagonal),
        }
    }

    pub fn iso_weights(&self) -> &[f64] {
        match &self.0.metric {
            Metric::Diagonal(d) => d,
            Metric::Filipovic { iso_weights, .. } | Metric::Product { iso_weights, .. } => {
                iso_weights
            }
        }
    }

    /// Raw inner product on value slices, no validation.
    pub fn inner_raw(&self, f: &[f64], g: &[f64]) -> f64 {
        match &self.0.metric {
            Metric::Diagonal(d) => d.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum(),
            Metric::Filipovic {
                base,
                dx,
                root_inv_w,
                ..
            } => {
                let mut acc = f[*base] * g[*base];
                for c in 0..root_inv_w.len() {
                    let w = root_inv_w[c].powi(-2);
                    acc += w * (f[c + 1] - f[c]) * (g[c + 1] - g[c]) / dx;
                }
                acc
            }
            Metric::Product { parts, offsets, .. } => parts
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let r = offsets[k]..offsets[k + 1];
                    p.inner_raw(&f[r.clone()], &g[r])
                })
                .sum(),
        }
    }

    pub fn norm_raw(&self, f: &[f64]) -> f64 {
        self.inner_raw(f, f).max(0.0).sqrt()
    }

    fn check_member(&self, f: &GridFunction) -> Result<()> {
        if f.space != *self {
            return Err(Error::MismatchedSpace);
        }
        if let Some(i) = f.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    pub fn inner_product(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        self.check_member(f)?;
        self.check_member(g)?;
        Ok(self.inner_raw(&f.values, &g.values))
    }

    pub fn norm(&self, f: &GridFunction) -> Result<f64> {
        self.check_member(f)?;
        Ok(self.norm_raw(&f.values))
    }

    /// Coordinates in which the inner product is `Σ iso_weights[k]·c_k·d_k`.
    pub fn to_iso(&self, h: &[f64]) -> Vec<f64> {
        match &self.0.metric {
            Metric::Diagonal(_) => h.to_vec(),
            Metric::Filipovic {
                base,
                dx,
                root_inv_w,
                ..
            } => {
                let mut c = Vec::with_capacity(h.len());
                c.push(h[*base]);
                for k in 0..root_inv_w.len() {
                    c.push((h[k + 1] - h[k]) / (dx * root_inv_w[k]));
                }
                c
            }
            Metric::Product { parts, offsets, .. } => {
                let mut c = Vec::with_capacity(h.len());
                for (k, p) in parts.iter().enumerate() {
                    c.extend(p.to_iso(&h[offsets[k]..offsets[k + 1]]));
                }
                c
            }
        }
    }

    pub fn from_iso(&self, c: &[f64]) -> Vec<f64> {
        match &self.0.metric {
            Metric::Diagonal(_) => c.to_vec(),
            Metric::Filipovic {
                base,
                dx,
                root_inv_w,
                ..
            } => {
                let n = c.len();
                let mut h = vec![0.0; n];
                h[*base] = c[0];
                for i in *base + 1..n {
                    h[i] = h[i - 1] + dx * root_inv_w[i - 1] * c[i];
                }
                for i in (0..*base).rev() {
                    h[i] = h[i + 1] - dx * root_inv_w[i] * c[i + 1];
                }
                h
            }
            Metric::Product { parts, offsets, .. } => {
                let mut h = Vec::with_capacity(c.len());
                for (k, p) in parts.iter().enumerate() {
                    h.extend(p.from_iso(&c[offsets[k]..offsets[k + 1]]));
                }
                h
            }
        }
    }

    /// Transpose of [`Space::from_iso`]: turns a functional `h ↦ r·h` on raw
    /// values into the equivalent functional on isometric coordinates.
    pub fn pullback_row(&self, r: &[f64]) -> Vec<f64> {
        match &self.0.metric {
            Metric::Diagonal(_) => r.to_vec(),
            Metric::Filipovic {
                base,
                dx,
                root_inv_w,
                ..
            } => {
                let n = r.len();
                let mut out = vec![0.0; n];
                out[0] = r.iter().sum();
                // cells right of the base collect the suffix sums
                let mut suffix = 0.0;
                for c in (*base..n - 1).rev() {
                    suffix += r[c + 1];
                    out[c + 1] = dx * root_inv_w[c] * suffix;
                }
                let mut prefix = 0.0;
                for c in 0..*base {
                    prefix += r[c];
                    out[c + 1] = -dx * root_inv_w[c] * prefix;
                }
                out
            }
            Metric::Product { parts, offsets, .. } => {
                let mut out = Vec::with_capacity(r.len());
                for (k, p) in parts.iter().enumerate() {
                    out.extend(p.pullback_row(&r[offsets[k]..offsets[k + 1]]));
                }
                out
            }
        }
    }

    /// Gram matrix applied to `g`: the raw row `r` with `r·h = ⟨g, h⟩`.
    pub fn lower(&self, g: &[f64]) -> Vec<f64> {
        match &self.0.metric {
            Metric::Diagonal(d) => d.iter().zip(g).map(|(w, v)| w * v).collect(),
            Metric::Filipovic {
                base,
                dx,
                root_inv_w,
                iso_weights,
            } => {
                let c = self.to_iso(g);
                let n = g.len();
                let mut r = vec![0.0; n];
                r[*base] += iso_weights[0] * c[0];
                for k in 0..n - 1 {
                    let beta = iso_weights[k + 1] * c[k + 1] / (dx * root_inv_w[k]);
                    r[k + 1] += beta;
                    r[k] -= beta;
                }
                r
            }
            Metric::Product { parts, offsets, .. } => {
                let mut out = Vec::with_capacity(g.len());
                for (k, p) in parts.iter().enumerate() {
                    out.extend(p.lower(&g[offsets[k]..offsets[k + 1]]));
                }
                out
            }
        }
    }

    /// Riesz representer of the raw functional `h ↦ r·h`.
    pub fn riesz(&self, r: &[f64]) -> GridFunction {
        let pulled = self.pullback_row(r);
        let scaled: Vec<f64> = pulled
            .iter()
            .zip(self.iso_weights())
            .map(|(v, w)| v / w)
            .collect();
        GridFunction::from_raw(self.clone(), self.from_iso(&scaled))
    }

    /// Dense Gram matrix `G_ij = ⟨e_i, e_j⟩` over unit node vectors.
    pub fn gram_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                self.lower(&e)
            })
            .collect()
    }

    fn filipovic_parts(&self) -> Result<(usize, f64, &[f64])> {
        match &self.0.metric {
            Metric::Filipovic {
                base,
                dx,
                root_inv_w,
                ..
            } => Ok((*base, *dx, root_inv_w)),
            _ => Err(Error::UnsupportedSpace(format!(
                "{} space has no Filipović structure",
                self.kind_name()
            ))),
        }
    }

    /// The `L²` space (midpoint rule on the cells between nodes) on which the
    /// derivative component of a Filipović curve lives.
    pub fn derivative_space(&self) -> Result<Space> {
        self.filipovic_parts()?;
        let axis = self.grid().expect("Filipović space has a grid").axis(0);
        Space::plain_l2(GridSpec::cells(axis.lo, axis.hi, axis.n - 1)?)
    }

    /// `T(a, f) = a + ∫_{x₀}^{·} f(x) w^{-1/2}(x) dx`.
    pub fn filipovic_embed(&self, a: f64, f: &GridFunction) -> Result<GridFunction> {
        self.filipovic_parts()?;
        let fs = self.derivative_space()?;
        fs.check_member(f)?;
        if !a.is_finite() {
            return Err(Error::NonFinite(0));
        }
        let mut c = Vec::with_capacity(self.len());
        c.push(a);
        c.extend_from_slice(f.values());
        Ok(GridFunction::from_raw(self.clone(), self.from_iso(&c)))
    }

    /// `T⁻¹h = (h(x₀), h′ w^{1/2})` with forward differences on the cells.
    pub fn filipovic_extract(&self, h: &GridFunction) -> Result<(f64, GridFunction)> {
        self.filipovic_parts()?;
        self.check_member(h)?;
        let c = self.to_iso(h.values());
        let fs = self.derivative_space()?;
        Ok((c[0], GridFunction::from_raw(fs, c[1..].to_vec())))
    }

    /// Riesz representer `δ_x` of point evaluation at grid node `node`.
    pub fn point_eval_functional(&self, node: usize) -> Result<GridFunction> {
        self.filipovic_parts()?;
        if node >= self.len() {
            return Err(Error::param("node", format!("{node} outside grid")));
        }
        let mut e = vec![0.0; self.len()];
        e[node] = 1.0;
        Ok(self.riesz(&e))
    }

    pub fn direct_sum_project(&self, h: &GridFunction, part: DirectSumPart) -> Result<GridFunction> {
        let (base, _, _) = self.filipovic_parts()?;
        self.check_member(h)?;
        let a = h.values()[base];
        let vals = match part {
            DirectSumPart::Constants => vec![a; self.len()],
            DirectSumPart::ZeroAtBase => h.values().iter().map(|v| v - a).collect(),
        };
        Ok(GridFunction::from_raw(self.clone(), vals))
    }
}

/// Values of a function on a [`Space`]; the discretized state `h ∈ H`.
#[derive(Clone, Debug)]
pub struct GridFunction {
    space: Space,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.values == other.values
    }
}

impl GridFunction {
    pub fn new(space: Space, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { space, values })
    }

    /// Builds without the finiteness scan; length is still checked in debug.
    pub(crate) fn from_raw(space: Space, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), space.len());
        Self { space, values }
    }

    pub fn zeros(space: &Space) -> Self {
        Self::from_raw(space.clone(), vec![0.0; space.len()])
    }

    pub fn constant(space: &Space, c: f64) -> Self {
        Self::from_raw(space.clone(), vec![c; space.len()])
    }

    /// Samples `f` at the grid coordinates of a non-product space.
    pub fn from_fn(space: &Space, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let grid = space
            .grid()
            .ok_or_else(|| Error::UnsupportedSpace("from_fn needs a single grid".into()))?;
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                f(&c[..dim])
            })
            .collect();
        Self::new(space.clone(), values)
    }

    pub fn from_components(space: &Space, parts: &[GridFunction]) -> Result<Self> {
        let comps = space
            .components()
            .ok_or_else(|| Error::UnsupportedSpace("not a product space".into()))?;
        if comps.len() != parts.len() {
            return Err(Error::MismatchedSpace);
        }
        let mut values = Vec::with_capacity(space.len());
        for (c, p) in comps.iter().zip(parts) {
            if p.space != *c {
                return Err(Error::MismatchedSpace);
            }
            values.extend_from_slice(&p.values);
        }
        Ok(Self::from_raw(space.clone(), values))
    }

    pub fn component(&self, k: usize) -> Result<GridFunction> {
        let comps = self
            .space
            .components()
            .ok_or_else(|| Error::UnsupportedSpace("not a product space".into()))?;
        let offs = self.space.offsets().expect("product has offsets");
        let part = comps.get(k).ok_or(Error::MismatchedSpace)?;
        Ok(Self::from_raw(
            part.clone(),
            self.values[offs[k]..offs[k + 1]].to_vec(),
        ))
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.space.norm_raw(&self.values)
    }

    pub fn dot(&self, other: &GridFunction) -> f64 {
        debug_assert!(self.space == other.space);
        self.space.inner_raw(&self.values, &other.values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: f64, x: &GridFunction) {
        debug_assert_eq!(self.values.len(), x.values.len());
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        Self::from_raw(self.space.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise product.
    pub fn hadamard(&self, other: &GridFunction) -> GridFunction {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self::from_raw(
            self.space.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        )
    }

    pub fn with_values(&self, values: Vec<f64>) -> GridFunction {
        Self::from_raw(self.space.clone(), values)
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        self.scaled(rhs)
    }
}

impl Neg for &GridFunction {
    type Output = GridFunction;
    fn neg(self) -> GridFunction {
        self.scaled(-1.0)
    }
}
