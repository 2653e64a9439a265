mod common;

use cone_spde::cones::{schauder_projection, transform_cone, Cone, SchauderProjection};
use cone_spde::grid::GridFunction;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use common::*;

#[test]
fn projection_matches_exhaustive_qp_on_five_nodes() {
    let mut r = rng(21);
    for (name, cone) in five_node_cones() {
        let s = cone.space().clone();
        let g = gram(&s);
        let rows = cone.constraint_rows();
        for _ in 0..20 {
            let y = random_values(&mut r, s.len(), 2.0);
            let want = exhaustive_projection(&g, &rows, &y);
            let got = cone.project(&GridFunction::new(s.clone(), y.clone()).unwrap()).unwrap();
            let diff: Vec<f64> = got.values().iter().zip(&want).map(|(a, b)| a - b).collect();
            let err = s.norm_raw(&diff);
            assert!(err <= 1e-6 * (1.0 + s.norm_raw(&y)), "{name}: {err}");
        }
    }
}

#[test]
fn generators_lie_in_the_dual_cone() {
    let mut r = rng(3);
    for (name, cone) in five_node_cones() {
        let gens = cone.generating_system(cone.space().len()).unwrap();
        for _ in 0..100 {
            let h = cone.sample_member(&mut r).unwrap();
            for g in &gens {
                let v = cone.space().inner_product(g, &h).unwrap();
                assert!(v >= -1e-8 * g.norm() * (1.0 + h.norm()), "{name}: {v}");
            }
        }
    }
}

#[test]
fn projection_satisfies_variational_inequality() {
    let mut r = rng(4);
    for (name, cone) in five_node_cones() {
        let s = cone.space().clone();
        for _ in 0..20 {
            let y = GridFunction::new(s.clone(), random_values(&mut r, s.len(), 2.0)).unwrap();
            let p = cone.project(&y).unwrap();
            assert!(cone.contains(&p, 1e-6).unwrap(), "{name}: projection left the cone");
            let pp = cone.project(&p).unwrap();
            assert!(s.norm(&(&pp - &p)).unwrap() <= 1e-8 * (1.0 + p.norm()));
            let res = &y - &p;
            for _ in 0..10 {
                let k = cone.sample_member(&mut r).unwrap();
                let v = s.inner_product(&res, &(&k - &p)).unwrap();
                assert!(v <= 1e-6 * (1.0 + y.norm()) * (1.0 + k.norm()), "{name}: {v}");
            }
        }
    }
}

#[test]
fn distance_is_bounded_by_norm_and_zero_inside() {
    let mut r = rng(6);
    for (name, cone) in five_node_cones() {
        let s = cone.space().clone();
        for _ in 0..20 {
            let y = GridFunction::new(s.clone(), random_values(&mut r, s.len(), 2.0)).unwrap();
            assert!(cone.distance(&y).unwrap() <= y.norm() * (1.0 + 1e-12) + 1e-12, "{name}");
            let k = cone.sample_member(&mut r).unwrap();
            assert!(cone.distance(&k).unwrap() <= 1e-10, "{name}");
        }
    }
}

#[test]
fn negative_constant_distance_is_its_norm() {
    let s = line(65);
    let k = Cone::nonnegative(&s);
    let h = GridFunction::constant(&s, -0.7);
    assert!((k.distance(&h).unwrap() - 0.7).abs() < 1e-12);
}

fn explicit_inverse_membership(t: &DMatrix<f64>, v: &[f64]) -> Option<bool> {
    let x = t.clone().try_inverse().unwrap() * DVector::from_column_slice(v);
    if x.iter().any(|c| c.abs() < 1e-6) {
        return None;
    }
    Some(x.iter().all(|c| *c > 0.0))
}

#[test]
fn transform_membership_matches_explicit_inverse() {
    let s = line(6);
    let base = Cone::nonnegative(&s);
    let t = near_identity(6, 0.4, 17);
    let k = transform_cone(t.clone(), &base).unwrap();
    let mut r = rng(8);
    let mut compared = 0;
    for _ in 0..200 {
        let v: Vec<f64> = (0..6).map(|_| r.gen_range(-0.3..1.0)).collect();
        if let Some(want) = explicit_inverse_membership(&t, &v) {
            let h = GridFunction::new(s.clone(), v).unwrap();
            assert_eq!(k.contains(&h, 0.0).unwrap(), want);
            compared += 1;
        }
    }
    assert!(compared > 150);
}

#[test]
fn scaled_identity_transform_keeps_membership() {
    let s = line(6);
    let base = Cone::nonnegative(&s);
    let id = transform_cone(DMatrix::identity(6, 6), &base).unwrap();
    let two = transform_cone(DMatrix::identity(6, 6) * 2.0, &base).unwrap();
    let mut r = rng(2);
    for _ in 0..100 {
        let h = GridFunction::new(s.clone(), random_values(&mut r, 6, 1.0)).unwrap();
        let b = base.contains(&h, 0.0).unwrap();
        assert_eq!(id.contains(&h, 0.0).unwrap(), b);
        assert_eq!(two.contains(&h, 0.0).unwrap(), b);
    }
}

#[test]
fn transformed_generators_keep_the_pairing() {
    let s = line(6);
    let t = near_identity(6, 0.5, 31);
    let k = transform_cone(t.clone(), &Cone::nonnegative(&s)).unwrap();
    let mut r = rng(12);
    for _ in 0..200 {
        let gs = GridFunction::new(s.clone(), random_values(&mut r, 6, 1.0)).unwrap();
        let g = GridFunction::new(s.clone(), random_values(&mut r, 6, 1.0)).unwrap();
        let tg = &t * DVector::from_column_slice(g.values());
        let tg = GridFunction::new(s.clone(), tg.as_slice().to_vec()).unwrap();
        let lhs = s.inner_product(&k.transform_generator(&gs).unwrap(), &tg).unwrap();
        let rhs = s.inner_product(&gs, &g).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + gs.norm() * g.norm()));
    }
}

#[test]
fn product_pairs_reduce_to_a_component() {
    let a = line(7);
    let b = weighted_line(5, 2.0, 0.5);
    let k = Cone::product(vec![Cone::nonnegative(&a), Cone::nonnegative(&b)]).unwrap();
    for p in k.sample_boundary_pairs(40, 1).unwrap() {
        assert!(p.pairing.abs() <= 1e-10);
        let mut total = 0.0;
        for (i, part) in [&a, &b].into_iter().enumerate() {
            let hs = p.h_star.component(i).unwrap();
            let h = p.h.component(i).unwrap();
            total += part.inner_product(&hs, &h).unwrap();
        }
        let direct = k.space().inner_product(&p.h_star, &p.h).unwrap();
        assert!((total - direct).abs() <= 1e-12);
    }
}

#[test]
fn boundary_pairs_satisfy_their_invariants() {
    for (name, cone) in five_node_cones() {
        let pairs = match cone.sample_boundary_pairs(30, 7) {
            Ok(p) => p,
            Err(e) => panic!("{name}: {e}"),
        };
        for p in pairs {
            assert!(cone.contains(&p.h, 1e-9).unwrap(), "{name}");
            let v = cone.space().inner_product(&p.h_star, &p.h).unwrap();
            assert!(v.abs() <= 1e-10 * (1.0 + p.h_star.norm() * p.h.norm()), "{name}: {v}");
        }
    }
}

#[test]
fn schauder_error_halves_per_level_for_a_sine() {
    let s = line(513);
    let h = GridFunction::from_fn(&s, |x| (std::f64::consts::PI * x[0]).sin()).unwrap();
    let errs: Vec<f64> = (2..=6)
        .map(|n| {
            let p = SchauderProjection::new(&s, n).unwrap().apply(&h).unwrap();
            s.norm(&(&p - &h)).unwrap()
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.35..=0.65).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn schauder_needs_a_positive_cone() {
    let s = filipovic_line(9, 1.0, 0.1);
    let k = Cone::filipovic_monotone(&s).unwrap();
    assert!(schauder_projection(&k, 2).is_err());
    assert!(schauder_projection(&Cone::nonnegative(&line(9)), 2).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schauder_is_a_positive_contraction(
        f in prop::collection::vec(-3.0..3.0f64, 33),
        g in prop::collection::vec(-3.0..3.0f64, 33),
        level in 1u32..6,
    ) {
        let s = weighted_line(33, 2.0, 0.8);
        let pi = SchauderProjection::new(&s, level).unwrap();
        let f = GridFunction::new(s.clone(), f).unwrap();
        let g = GridFunction::new(s.clone(), g).unwrap();
        let (pf, pg) = (pi.apply(&f).unwrap(), pi.apply(&g).unwrap());
        let lhs = s.norm(&(&pf - &pg)).unwrap();
        let rhs = s.norm(&(&f - &g)).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-10));
        let ppf = pi.apply(&pf).unwrap();
        prop_assert!(s.norm(&(&ppf - &pf)).unwrap() <= 1e-12 * (1.0 + pf.norm()));
        let pos = f.map(f64::abs);
        prop_assert!(pi.apply(&pos).unwrap().min_value() >= 0.0);
    }

    #[test]
    fn nonnegative_projection_is_clipping(v in prop::collection::vec(-3.0..3.0f64, 17)) {
        let s = weighted_line(17, 1.0, 1.0);
        let p = Cone::nonnegative(&s).project(&GridFunction::new(s.clone(), v.clone()).unwrap()).unwrap();
        for (a, b) in p.values().iter().zip(&v) {
            prop_assert_eq!(*a, b.max(0.0));
        }
    }
}
