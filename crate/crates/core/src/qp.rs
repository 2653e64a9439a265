//! Euclidean projections onto polyhedral cones `{u : a_i·u ≥ 0}`.
//!
//! Rows are assumed to be unit vectors. Dykstra's algorithm supplies a
//! candidate active set which is then solved exactly; tiny problems are
//! solved by enumerating active sets directly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const DYKSTRA_MAX_SWEEPS: usize = 10_000;
pub(crate) const DYKSTRA_TOL: f64 = 1e-8;
const KKT_TOL: f64 = 1e-10;
const POLISH_EVERY: usize = 25;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projects `y` onto `{u : A_S u = 0}` and returns `(u, μ)` with
/// `u = y + A_Sᵀ μ`.
fn equality_projection(rows: &[&[f64]], y: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    if rows.is_empty() {
        return Some((y.to_vec(), Vec::new()));
    }
    let n = y.len();
    let k = rows.len();
    let a = DMatrix::from_fn(k, n, |i, j| rows[i][j]);
    let gram = &a * a.transpose();
    let rhs = -(&a * DVector::from_column_slice(y));
    let mu = gram.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| {
        gram.svd(true, true)
            .solve(&rhs, 1e-13)
            .ok()
    })?;
    let mut u = y.to_vec();
    for (i, r) in rows.iter().enumerate() {
        for (uj, aj) in u.iter_mut().zip(r.iter()) {
            *uj += mu[i] * aj;
        }
    }
    Some((u, mu.iter().copied().collect()))
}

fn is_kkt(all_rows: &[Vec<f64>], u: &[f64], mu: &[f64], scale: f64) -> bool {
    mu.iter().all(|m| *m >= -KKT_TOL * scale)
        && all_rows.iter().all(|r| dot(r, u) >= -KKT_TOL * scale)
}

/// Solves the projection exactly from a guessed active set.
fn polish(rows: &[Vec<f64>], active: &[usize], y: &[f64]) -> Option<Vec<f64>> {
    let scale = 1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let act: Vec<&[f64]> = active.iter().map(|&i| rows[i].as_slice()).collect();
    let (u, mu) = equality_projection(&act, y)?;
    is_kkt(rows, &u, &mu, scale).then_some(u)
}

/// Exact projection by enumerating active sets in order of size.
pub(crate) fn project_enumerate(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = rows.len();
    debug_assert!(m <= 16);
    let scale = 1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rows.iter().all(|r| dot(r, y) >= 0.0) {
        return y.to_vec();
    }
    let mut masks: Vec<u32> = (1..(1u32 << m)).collect();
    masks.sort_by_key(|s| (s.count_ones(), *s));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in masks {
        let act: Vec<&[f64]> = (0..m)
            .filter(|i| s >> i & 1 == 1)
            .map(|i| rows[i].as_slice())
            .collect();
        if let Some((u, mu)) = equality_projection(&act, y) {
            if is_kkt(rows, &u, &mu, scale) {
                return u;
            }
            // keep the nearest feasible point in case rounding defeats KKT
            if rows.iter().all(|r| dot(r, &u) >= -KKT_TOL * scale) {
                let d: f64 = u.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, u));
                }
            }
        }
    }
    best.map(|(_, u)| u).unwrap_or_else(|| vec![0.0; y.len()])
}

/// Dykstra's alternating projections onto half-spaces, with periodic
/// exact polishing on the current active set.
pub(crate) fn project_dykstra(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if rows.iter().all(|r| dot(r, y) >= 0.0) {
        return Ok(y.to_vec());
    }
    let scale = 1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut u = y.to_vec();
    let mut s = vec![0.0; rows.len()];
    for sweep in 1..=DYKSTRA_MAX_SWEEPS {
        let mut change = 0.0f64;
        for (i, a) in rows.iter().enumerate() {
            let old = s[i];
            let new = (dot(a, &u) + old).min(0.0);
            let delta = old - new;
            if delta != 0.0 {
                for (uj, aj) in u.iter_mut().zip(a) {
                    *uj += delta * aj;
                }
                change = change.max(delta.abs());
            }
            s[i] = new;
        }
        if sweep % POLISH_EVERY == 0 || change <= DYKSTRA_TOL * scale {
            let active: Vec<usize> = (0..rows.len()).filter(|&i| s[i] < 0.0).collect();
            if let Some(p) = polish(rows, &active, y) {
                return Ok(p);
            }
            if change <= DYKSTRA_TOL * 1e-4 * scale {
                let feasible = rows.iter().all(|r| dot(r, &u) >= -DYKSTRA_TOL * scale);
                if feasible {
                    return Ok(u);
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: DYKSTRA_MAX_SWEEPS,
    })
}

/// Pool-adjacent-violators: the nondecreasing least-squares fit to `y`.
pub(crate) fn isotonic_increasing(y: &mut [f64]) {
    let mut level: Vec<f64> = Vec::with_capacity(y.len());
    let mut count: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y.iter() {
        level.push(v);
        count.push(1);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (b, cb) = (level.pop().unwrap(), count.pop().unwrap());
            let (a, ca) = (level.pop().unwrap(), count.pop().unwrap());
            let c = ca + cb;
            level.push((a * ca as f64 + b * cb as f64) / c as f64);
            count.push(c);
        }
    }
    let mut k = 0;
    for (l, c) in level.iter().zip(&count) {
        for v in &mut y[k..k + c] {
            *v = *l;
        }
        k += c;
    }
}
