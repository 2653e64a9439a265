#![allow(dead_code)]

use cone_spde::cones::{transform_cone, Cone};
use cone_spde::grid::{GridFunction, GridSpec, Space, WeightFunction};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gram(space: &Space) -> DMatrix<f64> {
    let g = space.gram_matrix();
    let n = g.len();
    DMatrix::from_fn(n, n, |i, j| g[i][j])
}

/// Projection onto `{x : r·x ≥ 0}` in the metric `G` by enumerating every
/// active set: for each subset the metric projection onto its null space is
/// a candidate, and the closest feasible candidate is the minimiser.
pub fn exhaustive_projection(g: &DMatrix<f64>, rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let k = rows.len();
    assert!(k <= 16, "too many constraints for enumeration");
    let yv = DVector::from_column_slice(y);
    let g_inv = g.clone().try_inverse().expect("metric is invertible");
    let feasible = |x: &DVector<f64>| {
        let scale = 1.0 + x.amax();
        rows.iter()
            .all(|r| r.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() >= -1e-9 * scale)
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let active: Vec<&Vec<f64>> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| &rows[i]).collect();
        let x = if active.is_empty() {
            yv.clone()
        } else {
            let r = DMatrix::from_fn(active.len(), n, |i, j| active[i][j]);
            let m = &r * &g_inv * r.transpose();
            let rhs = -(&r * &yv);
            let mu = m.svd(true, true).solve(&rhs, 1e-12).unwrap();
            &yv + &g_inv * r.transpose() * mu
        };
        if !feasible(&x) {
            continue;
        }
        let d = &x - &yv;
        let obj = (d.transpose() * g * &d)[(0, 0)];
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.expect("the origin is always feasible").1.as_slice().to_vec()
}

pub fn line(n: usize) -> Space {
    Space::plain_l2(GridSpec::interval(0.0, 1.0, n).unwrap()).unwrap()
}

pub fn weighted_line(n: usize, hi: f64, rate: f64) -> Space {
    Space::weighted_l2(
        GridSpec::interval(0.0, hi, n).unwrap(),
        WeightFunction::Exponential { rate },
    )
    .unwrap()
}

pub fn filipovic_line(n: usize, hi: f64, rate: f64) -> Space {
    Space::filipovic(
        GridSpec::interval(0.0, hi, n).unwrap(),
        WeightFunction::Exponential { rate },
        0,
    )
    .unwrap()
}

/// A random matrix `I + s·U` with `U` uniform on `[-1, 1]`.
pub fn near_identity(n: usize, s: f64, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, n, |i, j| {
        let u: f64 = r.gen_range(-1.0..1.0);
        if i == j {
            1.0 + s * u
        } else {
            s * u
        }
    })
}

/// One cone of every variant on 5-node grids.
pub fn five_node_cones() -> Vec<(&'static str, Cone)> {
    let plain = line(5);
    let weighted = weighted_line(5, 2.0, 0.5);
    let fil = filipovic_line(5, 2.0, 0.3);
    let mut r = rng(5);
    let gens: Vec<GridFunction> = (0..6)
        .map(|_| {
            GridFunction::new(plain.clone(), (0..5).map(|_| r.gen_range(-0.5..1.0)).collect())
                .unwrap()
        })
        .collect();
    let chain = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]);
    vec![
        ("nonnegative", Cone::nonnegative(&weighted)),
        (
            "masked",
            Cone::nonnegative_masked(&plain, vec![true, false, true, true, false]).unwrap(),
        ),
        ("halfspaces", Cone::halfspaces(&plain, gens).unwrap()),
        (
            "product",
            Cone::product(vec![Cone::nonnegative(&plain), Cone::nonnegative(&weighted)]).unwrap(),
        ),
        (
            "matrix",
            Cone::matrix(chain, vec![Cone::nonnegative(&plain), Cone::nonnegative(&plain)]).unwrap(),
        ),
        (
            "chain",
            Cone::monotone_chain(Cone::nonnegative(&weighted), 2, false).unwrap(),
        ),
        (
            "chain-floor",
            Cone::monotone_chain(Cone::nonnegative(&plain), 2, true).unwrap(),
        ),
        ("filipovic-monotone", Cone::filipovic_monotone(&fil).unwrap()),
        (
            "transformed",
            transform_cone(near_identity(5, 0.3, 9), &Cone::nonnegative(&plain)).unwrap(),
        ),
    ]
}

pub fn random_values<R: Rng>(r: &mut R, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-amp..amp)).collect()
}

/// Translation flow on a weighted half-line with multiplicative noise, on a
/// grid whose spacing is `dt` so every step is an exact shift. The initial
/// curve varies slowly, so the Yosida error is small next to the noise.
pub fn translation_model(dt: f64, hi: f64) -> cone_spde::simulate::Model {
    use cone_spde::conditions::CoefficientSet;
    use cone_spde::semigroups::Semigroup;
    use std::sync::Arc;
    let n = (hi / dt).round() as usize + 1;
    let s = weighted_line(n, hi, 0.5);
    let sg = Semigroup::translation(&s, &[1.0]).unwrap();
    let coeffs = CoefficientSet::zero()
        .with_alpha(Arc::new(|h: &GridFunction| h.scaled(-0.2)))
        .with_sigma(vec![Arc::new(|h: &GridFunction| h.scaled(0.3))]);
    let h0 = GridFunction::from_fn(&s, |x| 1.0 + 0.5 * (-x[0]).exp()).unwrap();
    cone_spde::simulate::Model::new(sg, coeffs, vec![1.0], h0).unwrap()
}

/// Cumulative trapezoid integral from the first node.
pub fn cumulative(s: &Space, v: &[f64]) -> Vec<f64> {
    let g = s.grid().unwrap();
    let mut out = vec![0.0; v.len()];
    for i in 1..v.len() {
        let dx = g.coords(i)[0] - g.coords(i - 1)[0];
        out[i] = out[i - 1] + 0.5 * dx * (v[i] + v[i - 1]);
    }
    out
}
