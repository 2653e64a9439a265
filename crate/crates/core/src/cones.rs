//! Closed convex cones on discretized spaces.
//!
//! Every cone is polyhedral at grid level: it is described by raw constraint
//! rows `r` with `K = {h : r·h ≥ 0}`. Membership is checked directly per
//! variant, projections use closed forms where available (clipping, pooled
//! adjacent violators) and Dykstra's algorithm otherwise.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, Space};
use crate::qp;

/// Maximum number of attempts when a sampler has to retry.
const MAX_ATTEMPTS: usize = 200;

#[derive(Clone, Debug)]
pub enum ConeKind {
    /// `h ≥ 0` nodewise, optionally only on the nodes where `mask` is true.
    Nonnegative { mask: Option<Arc<[bool]>> },
    /// The whole space (no constraints).
    Whole,
    HalfspaceSystem { generators: Vec<GridFunction> },
    Product { parts: Vec<Cone> },
    /// `{h ∈ H^m : (Mh)_i ∈ K_i}` with `(Mh)_i = Σ_k M_ik h_k`.
    MatrixTransformed {
        m: DMatrix<f64>,
        m_inv: DMatrix<f64>,
        bases: Vec<Cone>,
    },
    /// `(0 ≤_K) h₁ ≤_K h₂ ≤_K … ≤_K h_m`.
    MonotoneChain {
        base: Box<Cone>,
        m: usize,
        with_floor: bool,
        matrix: Box<Cone>,
    },
    /// `{h : h(x_lo) ≥ 0, h′ ≥ 0}` on a Filipović space.
    FilipovicMonotone,
    /// `T·K` for an invertible matrix `T`.
    Transformed {
        t: DMatrix<f64>,
        t_inv: DMatrix<f64>,
        base: Box<Cone>,
    },
}

#[derive(Clone, Debug)]
pub struct Cone {
    space: Space,
    kind: ConeKind,
}

/// A pair `(h*, h) ∈ G × K` with `⟨h*, h⟩ = 0`.
#[derive(Clone, Debug)]
pub struct BoundaryPair {
    pub h_star: GridFunction,
    pub h: GridFunction,
    pub pairing: f64,
}

fn check_invertible(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::SingularTransform);
    }
    let n = m.nrows() as i32;
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let det = m.determinant();
    if !det.is_finite() || det.abs() < 1e-10 * scale.powi(n) {
        return Err(Error::SingularTransform);
    }
    m.clone().try_inverse().ok_or(Error::SingularTransform)
}

fn unit(len: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    e[i] = 1.0;
    e
}

impl Cone {
    pub fn nonnegative(space: &Space) -> Self {
        Self {
            space: space.clone(),
            kind: ConeKind::Nonnegative { mask: None },
        }
    }

    /// Nonnegativity imposed only where `mask` is true.
    pub fn nonnegative_masked(space: &Space, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: mask.len(),
            });
        }
        if !mask.iter().any(|m| *m) {
            return Err(Error::param("mask", "selects no nodes"));
        }
        Ok(Self {
            space: space.clone(),
            kind: ConeKind::Nonnegative {
                mask: Some(mask.into()),
            },
        })
    }

    pub fn whole(space: &Space) -> Self {
        Self {
            space: space.clone(),
            kind: ConeKind::Whole,
        }
    }

    pub fn halfspaces(space: &Space, generators: Vec<GridFunction>) -> Result<Self> {
        if generators.iter().any(|g| g.space() != space) {
            return Err(Error::MismatchedSpace);
        }
        Ok(Self {
            space: space.clone(),
            kind: ConeKind::HalfspaceSystem { generators },
        })
    }

    pub fn product(parts: Vec<Cone>) -> Result<Self> {
        let spaces: Vec<Space> = parts.iter().map(|c| c.space.clone()).collect();
        Ok(Self {
            space: Space::product(&spaces)?,
            kind: ConeKind::Product { parts },
        })
    }

    pub fn matrix(m: DMatrix<f64>, bases: Vec<Cone>) -> Result<Self> {
        if m.nrows() != bases.len() {
            return Err(Error::param(
                "matrix",
                format!("{}x{} matrix for {} cones", m.nrows(), m.ncols(), bases.len()),
            ));
        }
        let m_inv = check_invertible(&m)?;
        let h = bases[0].space.clone();
        if bases.iter().any(|b| b.space != h) {
            return Err(Error::MismatchedSpace);
        }
        Ok(Self {
            space: h.power(bases.len())?,
            kind: ConeKind::MatrixTransformed { m, m_inv, bases },
        })
    }

    pub fn monotone_chain(base: Cone, m: usize, with_floor: bool) -> Result<Self> {
        if m < 2 {
            return Err(Error::param("m", "a chain needs at least two links"));
        }
        let mut mat = DMatrix::identity(m, m);
        for i in 1..m {
            mat[(i, i - 1)] = -1.0;
        }
        let first = if with_floor {
            base.clone()
        } else {
            Cone::whole(&base.space)
        };
        let mut bases = vec![first];
        bases.extend(std::iter::repeat_n(base.clone(), m - 1));
        let matrix = Cone::matrix(mat, bases)?;
        Ok(Self {
            space: matrix.space.clone(),
            kind: ConeKind::MonotoneChain {
                base: Box::new(base),
                m,
                with_floor,
                matrix: Box::new(matrix),
            },
        })
    }

    pub fn filipovic_monotone(space: &Space) -> Result<Self> {
        if !space.is_filipovic() {
            return Err(Error::UnsupportedSpace(format!(
                "monotone cone needs a Filipović space, got {}",
                space.kind_name()
            )));
        }
        Ok(Self {
            space: space.clone(),
            kind: ConeKind::FilipovicMonotone,
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn kind(&self) -> &ConeKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            ConeKind::Nonnegative { .. } => "nonnegative",
            ConeKind::Whole => "whole",
            ConeKind::HalfspaceSystem { .. } => "halfspace-system",
            ConeKind::Product { .. } => "product",
            ConeKind::MatrixTransformed { .. } => "matrix-transformed",
            ConeKind::MonotoneChain { .. } => "monotone-chain",
            ConeKind::FilipovicMonotone => "filipovic-monotone",
            ConeKind::Transformed { .. } => "transformed",
        }
    }

    fn check(&self, h: &GridFunction) -> Result<()> {
        if h.space() != &self.space {
            return Err(Error::MismatchedSpace);
        }
        Ok(())
    }

    fn split(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let offs = self.space.offsets().expect("product-shaped cone");
        offs.windows(2).map(|w| values[w[0]..w[1]].to_vec()).collect()
    }

    /// `(Mh)_i` components for a matrix cone.
    fn matrix_image(m: &DMatrix<f64>, blocks: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = blocks[0].len();
        (0..m.nrows())
            .map(|i| {
                let mut out = vec![0.0; n];
                for (k, b) in blocks.iter().enumerate() {
                    let c = m[(i, k)];
                    if c != 0.0 {
                        for (o, v) in out.iter_mut().zip(b) {
                            *o += c * v;
                        }
                    }
                }
                out
            })
            .collect()
    }

    fn apply_matrix(t: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        (0..t.nrows())
            .map(|i| (0..t.ncols()).map(|j| t[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn contains(&self, h: &GridFunction, tol: f64) -> Result<bool> {
        self.check(h)?;
        Ok(self.contains_raw(h.values(), tol))
    }

    pub(crate) fn contains_raw(&self, v: &[f64], tol: f64) -> bool {
        match &self.kind {
            ConeKind::Nonnegative { mask: None } => v.iter().all(|x| *x >= -tol),
            ConeKind::Nonnegative { mask: Some(m) } => {
                v.iter().zip(m.iter()).all(|(x, on)| !on || *x >= -tol)
            }
            ConeKind::Whole => true,
            ConeKind::HalfspaceSystem { generators } => generators.iter().all(|g| {
                self.space.inner_raw(g.values(), v) >= -tol * g.norm()
            }),
            ConeKind::Product { parts } => {
                let blocks = self.split(v);
                parts.iter().zip(&blocks).all(|(c, b)| c.contains_raw(b, tol))
            }
            ConeKind::MatrixTransformed { m, bases, .. } => {
                let img = Self::matrix_image(m, &self.split(v));
                bases.iter().zip(&img).all(|(c, b)| c.contains_raw(b, tol))
            }
            ConeKind::MonotoneChain { matrix, .. } => matrix.contains_raw(v, tol),
            ConeKind::FilipovicMonotone => {
                v[0] >= -tol && v.windows(2).all(|w| w[1] - w[0] >= -tol)
            }
            ConeKind::Transformed { t_inv, base, .. } => {
                base.contains_raw(&Self::apply_matrix(t_inv, v), tol)
            }
        }
    }

    /// Raw constraint rows: `K = {h : r·h ≥ 0 for every row r}`.
    pub fn constraint_rows(&self) -> Vec<Vec<f64>> {
        let n = self.space.len();
        match &self.kind {
            ConeKind::Nonnegative { mask } => (0..n)
                .filter(|&i| mask.as_ref().is_none_or(|m| m[i]))
                .map(|i| unit(n, i))
                .collect(),
            ConeKind::Whole => Vec::new(),
            ConeKind::HalfspaceSystem { generators } => generators
                .iter()
                .map(|g| self.space.lower(g.values()))
                .collect(),
            ConeKind::Product { parts } => {
                let offs = self.space.offsets().unwrap();
                let mut rows = Vec::new();
                for (k, p) in parts.iter().enumerate() {
                    for r in p.constraint_rows() {
                        let mut full = vec![0.0; n];
                        full[offs[k]..offs[k + 1]].copy_from_slice(&r);
                        rows.push(full);
                    }
                }
                rows
            }
            ConeKind::MatrixTransformed { m, bases, .. } => {
                let offs = self.space.offsets().unwrap();
                let mut rows = Vec::new();
                for (i, b) in bases.iter().enumerate() {
                    for r in b.constraint_rows() {
                        let mut full = vec![0.0; n];
                        for k in 0..m.ncols() {
                            let c = m[(i, k)];
                            if c != 0.0 {
                                for (f, x) in full[offs[k]..offs[k + 1]].iter_mut().zip(&r) {
                                    *f += c * x;
                                }
                            }
                        }
                        rows.push(full);
                    }
                }
                rows
            }
            ConeKind::MonotoneChain { matrix, .. } => matrix.constraint_rows(),
            ConeKind::FilipovicMonotone => {
                let mut rows = vec![unit(n, 0)];
                for c in 0..n - 1 {
                    let mut r = vec![0.0; n];
                    r[c] = -1.0;
                    r[c + 1] = 1.0;
                    rows.push(r);
                }
                rows
            }
            ConeKind::Transformed { t_inv, base, .. } => base
                .constraint_rows()
                .into_iter()
                .map(|r| (0..n).map(|j| (0..n).map(|i| r[i] * t_inv[(i, j)]).sum()).collect())
                .collect(),
        }
    }

    /// Nearest point of the cone in the space norm.
    pub fn project(&self, h: &GridFunction) -> Result<GridFunction> {
        self.check(h)?;
        if self.contains_raw(h.values(), 0.0) {
            return Ok(h.clone());
        }
        Ok(h.with_values(self.project_raw(h.values())?))
    }

    fn project_raw(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            ConeKind::Nonnegative { mask } if self.space.is_diagonal() => Ok(v
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    if mask.as_ref().is_none_or(|m| m[i]) {
                        x.max(0.0)
                    } else {
                        *x
                    }
                })
                .collect()),
            ConeKind::Whole => Ok(v.to_vec()),
            ConeKind::Product { parts } => {
                let blocks = self.split(v);
                let mut out = Vec::with_capacity(v.len());
                for (c, b) in parts.iter().zip(&blocks) {
                    if c.contains_raw(b, 0.0) {
                        out.extend_from_slice(b);
                    } else {
                        out.extend(c.project_raw(b)?);
                    }
                }
                Ok(out)
            }
            ConeKind::MonotoneChain {
                base,
                m,
                with_floor,
                matrix,
            } => {
                if base.is_plain_nonnegative() && base.space.is_diagonal() {
                    let n = base.space.len();
                    let mut out = v.to_vec();
                    let mut link = vec![0.0; *m];
                    for j in 0..n {
                        for k in 0..*m {
                            link[k] = v[k * n + j];
                        }
                        qp::isotonic_increasing(&mut link);
                        for k in 0..*m {
                            out[k * n + j] = if *with_floor { link[k].max(0.0) } else { link[k] };
                        }
                    }
                    Ok(out)
                } else {
                    matrix.project_raw(v)
                }
            }
            ConeKind::MatrixTransformed { m, bases, .. }
                if self.space.is_diagonal()
                    && m.nrows() <= 8
                    && bases
                        .iter()
                        .all(|b| b.is_plain_nonnegative() || matches!(b.kind, ConeKind::Whole)) =>
            {
                self.project_matrix_nodewise(m, bases, v)
            }
            ConeKind::FilipovicMonotone if self.filipovic_base() == Some(0) => {
                let mut c = self.space.to_iso(v);
                for x in c.iter_mut() {
                    *x = x.max(0.0);
                }
                Ok(self.space.from_iso(&c))
            }
            _ => self.project_dykstra(v),
        }
    }

    fn is_plain_nonnegative(&self) -> bool {
        matches!(self.kind, ConeKind::Nonnegative { mask: None })
    }

    fn filipovic_base(&self) -> Option<usize> {
        match self.space.spec() {
            crate::grid::SpaceSpec::Filipovic { base, .. } => Some(*base),
            _ => None,
        }
    }

    /// With equal diagonal weights across the `m` copies the projection
    /// decouples into one `m`-dimensional problem per node.
    fn project_matrix_nodewise(
        &self,
        m: &DMatrix<f64>,
        bases: &[Cone],
        v: &[f64],
    ) -> Result<Vec<f64>> {
        let k = m.nrows();
        let n = v.len() / k;
        let rows: Vec<Vec<f64>> = (0..k)
            .filter(|&i| !matches!(bases[i].kind, ConeKind::Whole))
            .map(|i| {
                let r: Vec<f64> = (0..k).map(|c| m[(i, c)]).collect();
                let len = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                r.into_iter().map(|x| x / len).collect()
            })
            .collect();
        let mut out = v.to_vec();
        let mut y = vec![0.0; k];
        for j in 0..n {
            for c in 0..k {
                y[c] = v[c * n + j];
            }
            let u = qp::project_enumerate(&rows, &y);
            for c in 0..k {
                out[c * n + j] = u[c];
            }
        }
        Ok(out)
    }

    fn project_dykstra(&self, v: &[f64]) -> Result<Vec<f64>> {
        let w = self.space.iso_weights();
        let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let y: Vec<f64> = self
            .space
            .to_iso(v)
            .iter()
            .zip(&sw)
            .map(|(c, s)| c * s)
            .collect();
        let rows: Vec<Vec<f64>> = self
            .constraint_rows()
            .iter()
            .filter_map(|r| {
                let a: Vec<f64> = self
                    .space
                    .pullback_row(r)
                    .iter()
                    .zip(&sw)
                    .map(|(x, s)| x / s)
                    .collect();
                let len = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                (len > 0.0).then(|| a.into_iter().map(|x| x / len).collect())
            })
            .collect();
        let u = qp::project_dykstra(&rows, &y)?;
        let c: Vec<f64> = u.iter().zip(&sw).map(|(x, s)| x / s).collect();
        Ok(self.space.from_iso(&c))
    }

    pub fn distance(&self, h: &GridFunction) -> Result<f64> {
        self.check(h)?;
        self.distance_raw(h.values())
    }

    pub(crate) fn distance_raw(&self, v: &[f64]) -> Result<f64> {
        if self.contains_raw(v, 0.0) {
            return Ok(0.0);
        }
        let p = self.project_raw(v)?;
        let d: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
        Ok(self.space.norm_raw(&d))
    }

    /// A finite family of dual functionals whose half-spaces cut out the
    /// cone at the given resolution.
    pub fn generating_system(&self, resolution: usize) -> Result<Vec<GridFunction>> {
        if resolution == 0 {
            return Err(Error::param("resolution", "must be at least 1"));
        }
        let n = self.space.len();
        Ok(match &self.kind {
            ConeKind::Nonnegative { mask } => {
                let allowed = |i: usize| mask.as_ref().is_none_or(|m| m[i]);
                match (self.space.grid(), self.space.is_diagonal()) {
                    (Some(grid), true) if resolution < grid.len() && grid.dim() > 0 => {
                        block_indicators(grid, resolution)
                            .into_iter()
                            .filter_map(|b| {
                                let b: Vec<usize> = b.into_iter().filter(|&i| allowed(i)).collect();
                                (!b.is_empty()).then(|| {
                                    let mut v = vec![0.0; n];
                                    for i in b {
                                        v[i] = 1.0;
                                    }
                                    GridFunction::from_raw(self.space.clone(), v)
                                })
                            })
                            .collect()
                    }
                    _ => {
                        let step = (n / resolution.min(n)).max(1);
                        (0..n)
                            .filter(|&i| allowed(i) && (resolution >= n || i % step == 0))
                            .map(|i| self.space.riesz(&unit(n, i)))
                            .collect()
                    }
                }
            }
            ConeKind::Whole => Vec::new(),
            ConeKind::HalfspaceSystem { generators } => generators.clone(),
            ConeKind::Product { parts } => {
                let offs = self.space.offsets().unwrap();
                let mut out = Vec::new();
                for (k, p) in parts.iter().enumerate() {
                    for g in p.generating_system(resolution)? {
                        out.push(self.lift(k, offs, &g));
                    }
                }
                out
            }
            ConeKind::MatrixTransformed { m, bases, .. } => {
                let mut out = Vec::new();
                for (i, b) in bases.iter().enumerate() {
                    for g in b.generating_system(resolution)? {
                        out.push(self.matrix_generator(m, i, &g));
                    }
                }
                out
            }
            ConeKind::MonotoneChain { matrix, .. } => matrix.generating_system(resolution)?,
            ConeKind::FilipovicMonotone => {
                let cells = n - 1;
                let per = cells.div_ceil(resolution.min(cells));
                let mut out = vec![self.space.riesz(&unit(n, 0))];
                let mut c = 0;
                while c < cells {
                    let end = (c + per).min(cells);
                    let mut r = vec![0.0; n];
                    r[c] = -1.0;
                    r[end] = 1.0;
                    out.push(self.space.riesz(&r));
                    c = end;
                }
                out
            }
            ConeKind::Transformed { t_inv, base, .. } => base
                .generating_system(resolution)?
                .iter()
                .map(|g| self.adjoint_image(t_inv, g))
                .collect(),
        })
    }

    fn lift(&self, k: usize, offs: &[usize], g: &GridFunction) -> GridFunction {
        let mut v = vec![0.0; self.space.len()];
        v[offs[k]..offs[k + 1]].copy_from_slice(g.values());
        GridFunction::from_raw(self.space.clone(), v)
    }

    /// `(Mᵀ ⊗ I) δ_i g*`, so that `⟨h*, h⟩ = ⟨g*, (Mh)_i⟩`.
    fn matrix_generator(&self, m: &DMatrix<f64>, i: usize, g: &GridFunction) -> GridFunction {
        let n = g.len();
        let mut v = vec![0.0; self.space.len()];
        for k in 0..m.ncols() {
            let c = m[(i, k)];
            for (o, x) in v[k * n..(k + 1) * n].iter_mut().zip(g.values()) {
                *o = c * x;
            }
        }
        GridFunction::from_raw(self.space.clone(), v)
    }

    /// `S g* = G⁻¹ T^{-ᵀ} G g*`, so that `⟨S g*, T h⟩ = ⟨g*, h⟩`.
    fn adjoint_image(&self, t_inv: &DMatrix<f64>, g: &GridFunction) -> GridFunction {
        let low = self.space.lower(g.values());
        let n = low.len();
        let row: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| t_inv[(i, j)] * low[i]).sum())
            .collect();
        self.space.riesz(&row)
    }

    /// Image of a base generator under the adjoint inverse of a transform.
    pub fn transform_generator(&self, g: &GridFunction) -> Result<GridFunction> {
        match &self.kind {
            ConeKind::Transformed { t_inv, .. } => Ok(self.adjoint_image(t_inv, g)),
            _ => Err(Error::UnsupportedCone(format!("{} is not a transform", self.name()))),
        }
    }

    pub fn sample_boundary_pairs(&self, count: usize, seed: u64) -> Result<Vec<BoundaryPair>> {
        if count == 0 {
            return Err(Error::param("count", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.boundary_pair(&mut rng)).collect()
    }

    pub fn boundary_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BoundaryPair> {
        let (h_star, h) = self.pair_values(rng)?;
        let h_star = GridFunction::from_raw(self.space.clone(), h_star);
        let h = GridFunction::from_raw(self.space.clone(), h);
        let pairing = h_star.dot(&h);
        Ok(BoundaryPair { h_star, h, pairing })
    }

    fn pair_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.space.len();
        match &self.kind {
            ConeKind::Nonnegative { mask } => {
                let (lo, hi, grid) = match (self.space.offsets(), self.space.grid()) {
                    (Some(offs), _) => {
                        let k = rng.gen_range(0..offs.len() - 1);
                        let comp = &self.space.components().unwrap()[k];
                        let grid = comp.grid().cloned().unwrap_or_else(GridSpec::point);
                        (offs[k], offs[k + 1], grid)
                    }
                    (None, Some(g)) => (0, n, g.clone()),
                    (None, None) => unreachable!("non-product space has a grid"),
                };
                for _ in 0..MAX_ATTEMPTS {
                    let (zero, centre) = random_block(&grid, rng);
                    let node = lo + centre;
                    if !mask.as_ref().is_none_or(|m| m[node]) {
                        continue;
                    }
                    let mut h: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                    for z in zero {
                        h[lo + z] = 0.0;
                    }
                    debug_assert!(node < hi);
                    return Ok((self.space.riesz(&unit(n, node)).into_values(), h));
                }
                Err(Error::Exhausted("no masked node inside sampled blocks".into()))
            }
            ConeKind::Whole => Err(Error::Exhausted("the whole space has no boundary".into())),
            ConeKind::Product { parts } => {
                let offs = self.space.offsets().unwrap();
                let candidates: Vec<usize> = (0..parts.len())
                    .filter(|&k| !matches!(parts[k].kind, ConeKind::Whole))
                    .collect();
                if candidates.is_empty() {
                    return Err(Error::Exhausted("all factors are whole spaces".into()));
                }
                let k = candidates[rng.gen_range(0..candidates.len())];
                let (g, hk) = parts[k].pair_values(rng)?;
                let mut h_star = vec![0.0; n];
                let mut h = Vec::with_capacity(n);
                h_star[offs[k]..offs[k + 1]].copy_from_slice(&g);
                for (j, p) in parts.iter().enumerate() {
                    if j == k {
                        h.extend_from_slice(&hk);
                    } else {
                        h.extend(p.member_values(rng)?);
                    }
                }
                Ok((h_star, h))
            }
            ConeKind::MatrixTransformed { m, m_inv, bases } => {
                let candidates: Vec<usize> = (0..bases.len())
                    .filter(|&k| !matches!(bases[k].kind, ConeKind::Whole))
                    .collect();
                if candidates.is_empty() {
                    return Err(Error::Exhausted("all factors are whole spaces".into()));
                }
                let i = candidates[rng.gen_range(0..candidates.len())];
                let (g, ki) = bases[i].pair_values(rng)?;
                let mut blocks = Vec::with_capacity(bases.len());
                for (j, b) in bases.iter().enumerate() {
                    blocks.push(if j == i { ki.clone() } else { b.member_values(rng)? });
                }
                let h: Vec<f64> = Self::matrix_image(m_inv, &blocks).concat();
                let gf = GridFunction::from_raw(bases[i].space.clone(), g);
                Ok((self.matrix_generator(m, i, &gf).into_values(), h))
            }
            ConeKind::MonotoneChain { matrix, .. } => matrix.pair_values(rng),
            ConeKind::FilipovicMonotone => {
                let grid = self.space.grid().unwrap().clone();
                let dx = grid.axis(0).spacing();
                let mut inc: Vec<f64> = (0..n - 1).map(|_| rng.gen::<f64>() * dx).collect();
                if rng.gen_bool(0.5) {
                    let mut h = Vec::with_capacity(n);
                    let mut acc = 0.0;
                    h.push(acc);
                    for d in &inc {
                        acc += d;
                        h.push(acc);
                    }
                    Ok((self.space.riesz(&unit(n, 0)).into_values(), h))
                } else {
                    let cells = GridSpec::cells(grid.axis(0).lo, grid.axis(0).hi, n - 1)?;
                    let (zero, centre) = random_block(&cells, rng);
                    for z in zero {
                        inc[z] = 0.0;
                    }
                    let mut h = Vec::with_capacity(n);
                    let mut acc = rng.gen::<f64>();
                    h.push(acc);
                    for d in &inc {
                        acc += d;
                        h.push(acc);
                    }
                    let mut r = vec![0.0; n];
                    r[centre] = -1.0;
                    r[centre + 1] = 1.0;
                    Ok((self.space.riesz(&r).into_values(), h))
                }
            }
            ConeKind::HalfspaceSystem { generators } => {
                if generators.is_empty() {
                    return Err(Error::Exhausted("no generators".into()));
                }
                let mut rows = self.constraint_rows();
                for _ in 0..MAX_ATTEMPTS {
                    let k = rng.gen_range(0..generators.len());
                    let g = &generators[k];
                    rows.push(self.space.lower(g.values()).iter().map(|x| -x).collect());
                    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let h = self.project_rows(&rows, &y);
                    rows.pop();
                    let Ok(mut h) = h else { continue };
                    let norm = self.space.norm_raw(&h);
                    if norm < 1e-6 {
                        continue;
                    }
                    for x in h.iter_mut() {
                        *x /= norm;
                    }
                    let pairing = self.space.inner_raw(g.values(), &h);
                    if pairing.abs() <= 1e-10 * g.norm() && self.contains_raw(&h, 1e-9) {
                        return Ok((g.values().to_vec(), h));
                    }
                }
                Err(Error::Exhausted("no nontrivial face point found".into()))
            }
            ConeKind::Transformed { t, t_inv, base } => {
                let (g, k) = base.pair_values(rng)?;
                let gf = GridFunction::from_raw(self.space.clone(), g);
                Ok((
                    self.adjoint_image(t_inv, &gf).into_values(),
                    Self::apply_matrix(t, &k),
                ))
            }
        }
    }

    /// Dykstra projection onto the cone cut out by explicit raw `rows`.
    fn project_rows(&self, rows: &[Vec<f64>], v: &[f64]) -> Result<Vec<f64>> {
        let tmp = Cone {
            space: self.space.clone(),
            kind: ConeKind::HalfspaceSystem {
                generators: rows
                    .iter()
                    .map(|r| self.space.riesz(r))
                    .collect(),
            },
        };
        tmp.project_dykstra(v)
    }

    /// A random element of the cone.
    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GridFunction> {
        Ok(GridFunction::from_raw(self.space.clone(), self.member_values(rng)?))
    }

    fn member_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let n = self.space.len();
        match &self.kind {
            ConeKind::Nonnegative { mask } => Ok((0..n)
                .map(|i| {
                    let u = rng.gen::<f64>();
                    if mask.as_ref().is_none_or(|m| m[i]) {
                        u
                    } else {
                        2.0 * u - 1.0
                    }
                })
                .collect()),
            ConeKind::Whole => Ok((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            ConeKind::Product { parts } => {
                let mut out = Vec::with_capacity(n);
                for p in parts {
                    out.extend(p.member_values(rng)?);
                }
                Ok(out)
            }
            ConeKind::MatrixTransformed { m_inv, bases, .. } => {
                let blocks = bases
                    .iter()
                    .map(|b| b.member_values(rng))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::matrix_image(m_inv, &blocks).concat())
            }
            ConeKind::MonotoneChain { matrix, .. } => matrix.member_values(rng),
            ConeKind::FilipovicMonotone => {
                let dx = self.space.grid().unwrap().axis(0).spacing();
                let mut acc = rng.gen::<f64>();
                let mut h = vec![acc];
                for _ in 1..n {
                    acc += rng.gen::<f64>() * dx;
                    h.push(acc);
                }
                Ok(h)
            }
            ConeKind::HalfspaceSystem { .. } => {
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                self.project_raw(&y)
            }
            ConeKind::Transformed { t, base, .. } => {
                Ok(Self::apply_matrix(t, &base.member_values(rng)?))
            }
        }
    }
}

/// `T·K` with generators mapped through `S = (T⁻¹)*`.
pub fn transform_cone(t: DMatrix<f64>, base: &Cone) -> Result<Cone> {
    let n = base.space.len();
    if t.nrows() != n || t.ncols() != n {
        return Err(Error::param(
            "transform",
            format!("{}x{} matrix on a space of dimension {n}", t.nrows(), t.ncols()),
        ));
    }
    let t_inv = check_invertible(&t)?;
    Ok(Cone {
        space: base.space.clone(),
        kind: ConeKind::Transformed {
            t,
            t_inv,
            base: Box::new(base.clone()),
        },
    })
}

/// Splits a grid into at most `resolution` contiguous blocks per axis.
fn block_indicators(grid: &GridSpec, resolution: usize) -> Vec<Vec<usize>> {
    let ranges: Vec<Vec<(usize, usize)>> = grid
        .axes()
        .iter()
        .map(|a| {
            let b = resolution.min(a.n);
            (0..b).map(|k| (k * a.n / b, (k + 1) * a.n / b)).collect()
        })
        .collect();
    match ranges.len() {
        1 => ranges[0].iter().map(|&(s, e)| (s..e).collect()).collect(),
        _ => {
            let mut out = Vec::new();
            for &(s1, e1) in &ranges[1] {
                for &(s0, e0) in &ranges[0] {
                    let mut b = Vec::new();
                    for j in s1..e1 {
                        for i in s0..e0 {
                            b.push(grid.flatten([i, j]));
                        }
                    }
                    out.push(b);
                }
            }
            out
        }
    }
}

/// A random contiguous block (rectangle in 2-D) of nodes together with a
/// node well inside it. Returns `(block, centre)` as flat indices.
fn random_block<R: Rng + ?Sized>(grid: &GridSpec, rng: &mut R) -> (Vec<usize>, usize) {
    if grid.dim() == 0 {
        return (vec![0], 0);
    }
    let mut spans = [(0usize, 1usize); 2];
    let mut centre = [0usize; 2];
    for (k, a) in grid.axes().iter().enumerate() {
        let lo_len = a.n.min(5);
        let hi_len = (a.n / 4).max(lo_len);
        let len = rng.gen_range(lo_len..=hi_len);
        let start = rng.gen_range(0..=a.n - len);
        spans[k] = (start, start + len);
        let (i0, i1) = if len >= 5 {
            (start + 2, start + len - 3)
        } else {
            (start + len / 2, start + len / 2)
        };
        centre[k] = rng.gen_range(i0..=i1);
    }
    let mut block = Vec::new();
    if grid.dim() == 1 {
        block.extend(spans[0].0..spans[0].1);
    } else {
        for j in spans[1].0..spans[1].1 {
            for i in spans[0].0..spans[0].1 {
                block.push(grid.flatten([i, j]));
            }
        }
    }
    (block, grid.flatten(centre))
}

/// Conditional expectation onto the dyadic cells of level `n`, weighted by
/// the space's quadrature weights.
#[derive(Clone, Debug)]
pub struct SchauderProjection {
    space: Space,
    level: u32,
    /// Cell id per node (unique across product components).
    cell: Vec<usize>,
    cells: usize,
    weights: Vec<f64>,
}

impl SchauderProjection {
    pub fn new(space: &Space, level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::param("level", "must be at least 1"));
        }
        if level > 30 {
            return Err(Error::param("level", "must be at most 30"));
        }
        let weights = space.diagonal_weights().ok_or_else(|| {
            Error::UnsupportedSpace("dyadic projections need an L² metric".into())
        })?;
        let mut cell = Vec::with_capacity(space.len());
        let mut next = 0usize;
        let grids: Vec<GridSpec> = match space.components() {
            Some(parts) => {
                let mut g = Vec::new();
                for p in parts {
                    if p.is_product() {
                        return Err(Error::UnsupportedSpace(
                            "nested products are not supported".into(),
                        ));
                    }
                    g.push(p.grid().unwrap().clone());
                }
                g
            }
            None => vec![space.grid().unwrap().clone()],
        };
        let per_axis = 1usize << level;
        for grid in &grids {
            let mut used = 0usize;
            for i in 0..grid.len() {
                let c = grid.coords(i);
                let mut id = 0usize;
                let mut stride = 1usize;
                for (k, a) in grid.axes().iter().enumerate() {
                    let u = (c[k] - a.lo) / a.len();
                    let b = ((u * per_axis as f64).floor() as usize).min(per_axis - 1);
                    id += b * stride;
                    stride *= per_axis;
                }
                used = used.max(stride);
                cell.push(next + id);
            }
            next += used.max(1);
        }
        Ok(Self {
            space: space.clone(),
            level,
            cell,
            cells: next,
            weights,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn apply(&self, h: &GridFunction) -> Result<GridFunction> {
        if h.space() != &self.space {
            return Err(Error::MismatchedSpace);
        }
        Ok(h.with_values(self.apply_raw(h.values())))
    }

    pub(crate) fn apply_raw(&self, v: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.cells];
        let mut sum = vec![0.0; self.cells];
        // Constant cells are returned bit-for-bit.
        let mut first: Vec<Option<f64>> = vec![None; self.cells];
        let mut uniform = vec![true; self.cells];
        for ((c, w), x) in self.cell.iter().zip(&self.weights).zip(v) {
            mass[*c] += w;
            sum[*c] += w * x;
            match first[*c] {
                None => first[*c] = Some(*x),
                Some(f) if f != *x => uniform[*c] = false,
                _ => {}
            }
        }
        self.cell
            .iter()
            .map(|c| match first[*c] {
                Some(f) if uniform[*c] => f,
                _ => sum[*c] / mass[*c],
            })
            .collect()
    }
}

/// The dyadic projection `π_n` associated with a positive cone.
pub fn schauder_projection(cone: &Cone, level: u32) -> Result<SchauderProjection> {
    match cone.kind {
        ConeKind::Nonnegative { .. } => SchauderProjection::new(&cone.space, level),
        _ => Err(Error::UnsupportedCone(format!(
            "dyadic projections are defined for positive cones, not {}",
            cone.name()
        ))),
    }
}
