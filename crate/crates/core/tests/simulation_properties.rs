mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use cone_spde::apps::{build_application, AppName, ApplicationSpec};
use cone_spde::cones::{Cone, SchauderProjection};
use cone_spde::conditions::{CoefficientSet, MarkMeasure};
use cone_spde::grid::{GridFunction, Space};
use cone_spde::semigroups::Semigroup;
use cone_spde::simulate::*;

use common::*;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn sup_diff(s: &Space, a: &GridFunction, b: &GridFunction) -> f64 {
    s.norm(&(a - b)).unwrap()
}

#[test]
fn single_factor_increment_has_variance_dt() {
    let s = line(17);
    let e = GridFunction::constant(&s, 1.0);
    let q = QWienerSpec::orthonormalized(vec![1.0], vec![e]).unwrap();
    let e1 = q.basis()[0].clone();
    let dt = 0.01;
    let mut r = rng(1);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| {
            let dw = q.sample_increment(dt, &mut r).unwrap();
            s.inner_product(&e1, &dw).unwrap()
        })
        .collect();
    let (_, v) = mean_var(&xs);
    // the sample variance of n normals has standard error σ²√(2/(n−1))
    let se = dt * (2.0 / (xs.len() as f64 - 1.0)).sqrt();
    assert!((v - dt).abs() <= 3.0 * se, "{v} vs {dt}");
}

#[test]
fn increments_satisfy_the_ito_isometry() {
    let s = line(33);
    let lams = vec![1.0, 0.5, 0.25, 0.125];
    let q = QWienerSpec::sine(&s, lams.clone()).unwrap();
    let dt = 0.02;
    let mut r = rng(2);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| q.sample_increment(dt, &mut r).unwrap().norm().powi(2))
        .collect();
    let (m, v) = mean_var(&xs);
    let want = dt * lams.iter().sum::<f64>();
    assert!((m - want).abs() <= 3.0 * (v / xs.len() as f64).sqrt(), "{m} vs {want}");
}

#[test]
fn same_seed_gives_the_same_increment() {
    let q = QWienerSpec::sine(&line(17), vec![1.0, 0.3]).unwrap();
    let a = q.sample_increment(0.1, &mut rng(9)).unwrap();
    let b = q.sample_increment(0.1, &mut rng(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn jump_counts_have_poisson_mean_and_mark_ratios() {
    assert!(sample_jumps(&MarkMeasure::empty(), 1.0, &mut rng(0)).is_empty());

    let one = MarkMeasure::new(vec![0.3], vec![2.0]).unwrap();
    let mut r = rng(4);
    let counts: Vec<f64> = (0..100_000).map(|_| sample_jumps(&one, 0.5, &mut r).len() as f64).collect();
    let (m, _) = mean_var(&counts);
    // Poisson(1) has unit variance
    assert!((m - 1.0).abs() <= 3.0 / (counts.len() as f64).sqrt(), "{m}");

    let two = MarkMeasure::new(vec![-1.0, 2.0], vec![1.0, 3.0]).unwrap();
    let mut hits = [0usize; 2];
    for _ in 0..20_000 {
        for x in sample_jumps(&two, 1.0, &mut r) {
            hits[usize::from(x > 0.0)] += 1;
        }
    }
    let total = (hits[0] + hits[1]) as f64;
    let p = hits[1] as f64 / total;
    assert!((p - 0.75).abs() <= 3.0 * (0.75 * 0.25 / total).sqrt(), "{p}");
}

#[test]
fn dirichlet_path_decays_like_the_first_mode() {
    let s = line(129);
    let h0 = GridFunction::from_fn(&s, |x| (PI * x[0]).sin()).unwrap();
    let m = Model::new(Semigroup::dirichlet_heat(&s, 1.0).unwrap(), CoefficientSet::zero(), vec![], h0.clone()).unwrap();
    let cfg = SchemeConfig {
        dt: 1e-3,
        horizon: 0.1,
        ..Default::default()
    };
    let p = simulate_path(&m, None, &cfg, 0).unwrap();
    let want = h0.scaled((-PI * PI * 0.1).exp());
    let err = p.terminal.values().iter().zip(want.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn zero_coefficients_reproduce_the_semigroup() {
    let dt = 1.0 / 64.0;
    let cases = [
        (Semigroup::dirichlet_heat(&line(65), 0.7).unwrap(), dt),
        (Semigroup::translation(&weighted_line(65, 1.0, 0.5), &[1.0]).unwrap(), dt),
        (Semigroup::identity(&line(9)), 0.1),
    ];
    for (sg, dt) in cases {
        let s = sg.space().clone();
        let h0 = GridFunction::from_fn(&s, |x| (3.0 * x[0]).cos() + x[0]).unwrap();
        let m = Model::new(sg.clone(), CoefficientSet::zero(), vec![], h0.clone()).unwrap();
        let noise = vec![StepNoise { xi: vec![], jumps: vec![] }; 20];
        let path = Stepper::new(&m, Scheme::ExponentialEuler).unwrap().run_trajectory(&noise, dt).unwrap();
        for (k, r) in path.iter().enumerate() {
            let want = sg.apply(k as f64 * dt, &h0).unwrap();
            assert!(sup_diff(&s, r, &want) <= 1e-10, "{} step {k}", sg.name());
        }
    }
}

#[test]
fn scalar_model_matches_ornstein_uhlenbeck_moments() {
    let (kappa, c, x0, t) = (1.0, 0.5, 1.0, 1.0);
    let s = Space::scalar();
    let coeffs = CoefficientSet::zero()
        .with_alpha(Arc::new(move |h: &GridFunction| h.scaled(-kappa)))
        .with_sigma(vec![Arc::new(move |h: &GridFunction| GridFunction::constant(h.space(), c))]);
    let m = Model::new(Semigroup::identity(&s), coeffs, vec![1.0], GridFunction::constant(&s, x0)).unwrap();
    let cfg = SchemeConfig {
        dt: 1e-3,
        horizon: t,
        seed: 5,
        ..Default::default()
    };
    let xs: Vec<f64> = (0..10_000)
        .map(|i| simulate_path(&m, None, &cfg, i).unwrap().terminal.values()[0])
        .collect();
    let (mean, var) = mean_var(&xs);
    let want_mean = x0 * (-kappa * t).exp();
    let want_var = c * c * (1.0 - (-2.0 * kappa * t).exp()) / (2.0 * kappa);
    let n = xs.len() as f64;
    assert!((mean - want_mean).abs() <= 3.0 * (var / n).sqrt(), "{mean} vs {want_mean}");
    assert!((var - want_var).abs() <= 3.0 * want_var * (2.0 / (n - 1.0)).sqrt(), "{var} vs {want_var}");
}

#[test]
fn compensated_jumps_have_zero_mean() {
    let s = Space::scalar();
    let marks = MarkMeasure::new(vec![-1.0, 2.0], vec![1.0, 1.5]).unwrap();
    let coeffs = CoefficientSet::zero().with_jumps(
        Arc::new(|h: &GridFunction, x: f64| GridFunction::constant(h.space(), x)),
        marks.clone(),
    );
    let dt = 0.01;
    let m = Model::new(Semigroup::identity(&s), coeffs, vec![], GridFunction::constant(&s, 0.0)).unwrap();
    let steps = 10_000;
    let noise = draw_noise(&mut rng(8), 0, &marks, dt, steps);
    let path = Stepper::new(&m, Scheme::ExponentialEuler).unwrap().run_trajectory(&noise, dt).unwrap();
    let mean = path[steps].values()[0] / steps as f64;
    let second: f64 = marks.atoms().map(|(x, f)| f * x * x).sum();
    let se = (dt * second / steps as f64).sqrt();
    assert!(mean.abs() <= 3.0 * se, "{mean} vs {se}");
}

#[test]
fn yosida_on_identity_is_plain_euler() {
    let app = build_application(&ApplicationSpec::new(AppName::HeatAnderson).with("nodes", 17)).unwrap();
    let s = app.space().clone();
    let m = Model::new(Semigroup::identity(&s), app.coeffs.clone(), app.factor_variances.clone(), app.h0.clone()).unwrap();
    let mut cfg = SchemeConfig {
        dt: 0.01,
        horizon: 0.5,
        seed: 3,
        ..Default::default()
    };
    let a = simulate_path(&m, None, &cfg, 2).unwrap();
    cfg.scheme = Scheme::YosidaEuler { lambda: 50.0 };
    let b = simulate_yosida_path(&m, None, &cfg, 2).unwrap();
    assert_eq!(a.terminal, b.terminal);
    assert_eq!(a.min_values, b.min_values);
}

#[test]
fn yosida_converges_at_order_dt_plus_inverse_lambda() {
    let s = line(65);
    let h0 = GridFunction::from_fn(&s, |x| (PI * x[0]).sin()).unwrap();
    let m = Model::new(Semigroup::dirichlet_heat(&s, 1.0).unwrap(), CoefficientSet::zero(), vec![], h0).unwrap();
    let gap = |dt: f64, lambda: f64| {
        let base = SchemeConfig {
            dt,
            horizon: 0.1,
            ..Default::default()
        };
        let y = SchemeConfig {
            scheme: Scheme::YosidaEuler { lambda },
            ..base.clone()
        };
        let a = simulate_path(&m, None, &base, 0).unwrap().terminal;
        let b = simulate_path(&m, None, &y, 0).unwrap().terminal;
        sup_diff(&s, &a, &b)
    };
    let coarse = gap(2e-4, 2500.0);
    let fine = gap(1e-4, 5000.0);
    let ratio = fine / coarse;
    assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn yosida_paths_stay_nonnegative_on_the_anderson_model() {
    let app = build_application(&ApplicationSpec::new(AppName::HeatAnderson).with("nodes", 65)).unwrap();
    let m = app.model().unwrap();
    let cfg = SchemeConfig {
        dt: 1e-3,
        horizon: 0.5,
        seed: 13,
        scheme: Scheme::YosidaEuler { lambda: 500.0 },
        ..Default::default()
    };
    for i in 0..100 {
        let p = simulate_yosida_path(&m, Some(&app.cone), &cfg, i).unwrap();
        assert!(p.min_value() >= -1e-6, "path {i}: {}", p.min_value());
    }
}

#[test]
fn decaying_deterministic_model_never_exits() {
    let s = line(33);
    let h0 = GridFunction::from_fn(&s, |x| x[0] * (1.0 - x[0])).unwrap();
    let m = Model::new(Semigroup::dirichlet_heat(&s, 1.0).unwrap(), CoefficientSet::zero(), vec![], h0).unwrap();
    let cfg = SchemeConfig {
        dt: 0.01,
        horizon: 1.0,
        paths: 10,
        ..Default::default()
    };
    let rep = mc_invariance(&m, &Cone::nonnegative(&s), &cfg).unwrap();
    assert_eq!(rep.exits, 0);
    assert_eq!(rep.exit_fraction, 0.0);
}

#[test]
fn monte_carlo_reports_are_deterministic() {
    let app = build_application(&ApplicationSpec::new(AppName::HeatAnderson).with("sigma", "additive")).unwrap();
    let m = app.model().unwrap();
    let cfg = SchemeConfig {
        dt: 1e-2,
        horizon: 0.5,
        paths: 40,
        seed: 21,
        ..Default::default()
    };
    let a = mc_invariance(&m, &app.cone, &cfg).unwrap();
    let b = mc_invariance(&m, &app.cone, &cfg).unwrap();
    assert_eq!(a.per_path, b.per_path);
    assert_eq!(a.distance_quantiles, b.distance_quantiles);
    assert_eq!(a.exit_histogram, b.exit_histogram);
}

#[test]
fn identity_yosida_study_has_zero_gaps() {
    let app = build_application(&ApplicationSpec::new(AppName::HeatAnderson).with("nodes", 17)).unwrap();
    let m = Model::new(Semigroup::identity(app.space()), app.coeffs.clone(), app.factor_variances.clone(), app.h0.clone()).unwrap();
    let cfg = SchemeConfig {
        dt: 1e-2,
        horizon: 0.5,
        ..Default::default()
    };
    for row in yosida_convergence_study(&m, &[10.0, 40.0, 160.0], 10, &cfg).unwrap() {
        assert_eq!(row.mean_gap, 0.0);
    }
}

/// Matched-noise gap between exponential Euler at `dt` and at `dt / 2`.
fn refinement_gap(m: &Model, dt: f64, horizon: f64, paths: usize) -> f64 {
    let steps = (horizon / dt).round() as usize;
    let coarse = Stepper::new(m, Scheme::ExponentialEuler).unwrap();
    let mut total = 0.0;
    for i in 0..paths {
        let fine_noise = draw_noise(&mut path_rng(17, i as u64), 1, &MarkMeasure::empty(), dt / 2.0, 2 * steps);
        let a = coarse.run_trajectory(&coarsen(&fine_noise), dt).unwrap();
        let b = coarse.run_trajectory(&fine_noise, dt / 2.0).unwrap();
        total += a
            .iter()
            .zip(b.iter().step_by(2))
            .map(|(x, y)| sup_diff(m.space(), x, y))
            .fold(0.0, f64::max);
    }
    total / paths as f64
}

#[test]
fn yosida_gap_falls_below_the_refinement_gap() {
    let dt = 1.0 / 200.0;
    let m = translation_model(dt, 4.0);
    let cfg = SchemeConfig {
        dt,
        horizon: 0.5,
        seed: 17,
        ..Default::default()
    };
    let rows = yosida_convergence_study(&m, &[10.0, 40.0, 160.0], 20, &cfg).unwrap();
    let refine = refinement_gap(&m, dt, 0.5, 20);
    assert!(rows[2].mean_gap < refine, "{} vs {refine}", rows[2].mean_gap);
}

#[test]
fn halving_dt_shrinks_the_gap_to_a_fine_reference() {
    let s = Space::scalar();
    let coeffs = CoefficientSet::zero()
        .with_alpha(Arc::new(|h: &GridFunction| h.map(|x| -2.0 * x + x.sin())))
        .with_sigma(vec![Arc::new(|h: &GridFunction| GridFunction::constant(h.space(), 0.4))]);
    let m = Model::new(Semigroup::identity(&s), coeffs, vec![1.0], GridFunction::constant(&s, 1.0)).unwrap();
    let stepper = Stepper::new(&m, Scheme::ExponentialEuler).unwrap();
    let dt = 0.02;
    let (mut g1, mut g2) = (0.0, 0.0);
    for i in 0..200 {
        let n4 = draw_noise(&mut path_rng(3, i), 1, &MarkMeasure::empty(), dt / 4.0, 200);
        let n2 = coarsen(&n4);
        let n1 = coarsen(&n2);
        let r4 = stepper.run_trajectory(&n4, dt / 4.0).unwrap();
        let r2 = stepper.run_trajectory(&n2, dt / 2.0).unwrap();
        let r1 = stepper.run_trajectory(&n1, dt).unwrap();
        let gap = |r: &[GridFunction], stride: usize| {
            r.iter()
                .zip(r4.iter().step_by(stride))
                .map(|(a, b)| (a.values()[0] - b.values()[0]).abs())
                .fold(0.0, f64::max)
        };
        g1 += gap(&r1, 4);
        g2 += gap(&r2, 2);
    }
    // with a Δt/4 reference the gaps scale as (1 − 1/4) : (1/2 − 1/4)
    let ratio = g2 / g1;
    assert!((0.3..=0.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn projected_paths_keep_nonnegative_cell_averages() {
    let app = build_application(&ApplicationSpec::new(AppName::HeatAnderson).with("nodes", 65)).unwrap();
    let m = app.model().unwrap();
    let lambda = 500.0;
    for level in [2, 4] {
        let stepper = Stepper::new(&m, Scheme::ProjectedYosidaEuler { lambda, level }).unwrap();
        let pi = SchauderProjection::new(app.space(), level).unwrap();
        for i in 0..20 {
            let noise = draw_noise(&mut path_rng(4, i), app.factor_variances.len(), &MarkMeasure::empty(), 1e-3, 300);
            for r in stepper.run_trajectory(&noise, 1e-3).unwrap() {
                assert!(pi.apply(&r).unwrap().min_value() >= -1e-6);
            }
        }
    }
}
