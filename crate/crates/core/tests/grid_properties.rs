use cone_spde::grid::{DirectSumPart, GridFunction, GridSpec, Space, WeightFunction};
use proptest::prelude::*;

fn weighted(n: usize) -> Space {
    Space::weighted_l2(
        GridSpec::interval(0.0, 2.0, n).unwrap(),
        WeightFunction::Exponential { rate: 0.7 },
    )
    .unwrap()
}

fn filipovic(n: usize) -> Space {
    Space::filipovic(
        GridSpec::interval(0.0, 3.0, n).unwrap(),
        WeightFunction::Exponential { rate: 0.4 },
        0,
    )
    .unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

fn gf(s: &Space, v: Vec<f64>) -> GridFunction {
    GridFunction::new(s.clone(), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_product_is_bilinear_and_symmetric(
        a in -3.0..3.0f64, b in -3.0..3.0f64,
        f in values(17), g in values(17), u in values(17),
    ) {
        for s in [weighted(17), filipovic(17)] {
            let (f, g, u) = (gf(&s, f.clone()), gf(&s, g.clone()), gf(&s, u.clone()));
            let mut comb = f.scaled(a);
            comb.axpy(b, &g);
            let lhs = s.inner_product(&comb, &u).unwrap();
            let rhs = a * s.inner_product(&f, &u).unwrap() + b * s.inner_product(&g, &u).unwrap();
            let scale = (a.abs() * f.norm() + b.abs() * g.norm()) * u.norm() + 1.0;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
            let sym = s.inner_product(&u, &f).unwrap() - s.inner_product(&f, &u).unwrap();
            prop_assert!(sym.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn cauchy_schwarz(f in values(33), g in values(33)) {
        for s in [weighted(33), filipovic(33)] {
            let (f, g) = (gf(&s, f.clone()), gf(&s, g.clone()));
            let ip = s.inner_product(&f, &g).unwrap();
            prop_assert!(ip.abs() <= f.norm() * g.norm() * (1.0 + 1e-10) + 1e-300);
        }
    }

    #[test]
    fn embed_extract_round_trip(a in -4.0..4.0f64, f in values(32)) {
        let s = filipovic(33);
        let fs = s.derivative_space().unwrap();
        let h = s.filipovic_embed(a, &gf(&fs, f)).unwrap();
        let (a2, f2) = s.filipovic_extract(&h).unwrap();
        let back = s.filipovic_embed(a2, &f2).unwrap();
        prop_assert!(s.norm(&(&h - &back)).unwrap() <= 1e-8 * (1.0 + h.norm()));
        prop_assert!((a - a2).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn direct_sum_recombines_orthogonally(v in values(21)) {
        let s = Space::filipovic(
            GridSpec::interval(0.0, 1.0, 21).unwrap(),
            WeightFunction::Constant(1.0),
            7,
        )
        .unwrap();
        let h = gf(&s, v);
        let c = s.direct_sum_project(&h, DirectSumPart::Constants).unwrap();
        let z = s.direct_sum_project(&h, DirectSumPart::ZeroAtBase).unwrap();
        prop_assert!(s.inner_product(&c, &z).unwrap().abs() <= 1e-10);
        let sum = &c + &z;
        for (x, y) in sum.values().iter().zip(h.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn point_evaluation_reads_nodes(v in values(25), node in 0usize..25) {
        let s = Space::filipovic(
            GridSpec::interval(0.0, 2.0, 25).unwrap(),
            WeightFunction::Exponential { rate: 1.0 },
            3,
        )
        .unwrap();
        let h = gf(&s, v);
        let d = s.point_eval_functional(node).unwrap();
        let got = s.inner_product(&d, &h).unwrap();
        prop_assert!((got - h.values()[node]).abs() <= 1e-8 * (1.0 + h.norm()));
    }
}

/// 200 random `(a, f)` on a 129-node grid; the norm of the embedded curve is
/// Pythagorean.
#[test]
fn filipovic_embedding_is_isometric() {
    use rand::{Rng, SeedableRng};
    let s = filipovic(129);
    let fs = s.derivative_space().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let a: f64 = rng.gen_range(-3.0..3.0);
        let f = gf(&fs, (0..fs.len()).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let h = s.filipovic_embed(a, &f).unwrap();
        let lhs = s.norm(&h).unwrap().powi(2);
        let rhs = a * a + f.norm().powi(2);
        assert!((lhs - rhs).abs() <= 1e-8 * rhs, "{lhs} vs {rhs}");
    }
}

/// Point evaluation kernel against a dense Gram solve.
#[test]
fn point_evaluation_matches_gram_solve() {
    let s = filipovic(17);
    let n = s.len();
    let g = s.gram_matrix();
    let gm = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i][j]);
    let lu = gm.lu();
    for node in [0, 5, 16] {
        let mut e = nalgebra::DVector::zeros(n);
        e[node] = 1.0;
        let k = lu.solve(&e).unwrap();
        let d = s.point_eval_functional(node).unwrap();
        for i in 0..n {
            assert!((d.values()[i] - k[i]).abs() <= 1e-6 * (1.0 + k[i].abs()));
        }
    }
}

/// The trapezoid inner product of smooth functions converges at second order.
#[test]
fn refinement_is_second_order() {
    let exact = {
        // ∫_0^2 sin(x) cos(x/2) e^{0.7x} dx by a very fine grid
        let s = weighted(200_001);
        let f = GridFunction::from_fn(&s, |x| x[0].sin()).unwrap();
        let g = GridFunction::from_fn(&s, |x| (0.5 * x[0]).cos()).unwrap();
        s.inner_product(&f, &g).unwrap()
    };
    let err = |n: usize| {
        let s = weighted(n);
        let f = GridFunction::from_fn(&s, |x| x[0].sin()).unwrap();
        let g = GridFunction::from_fn(&s, |x| (0.5 * x[0]).cos()).unwrap();
        (s.inner_product(&f, &g).unwrap() - exact).abs()
    };
    let errs: Vec<f64> = [17, 33, 65, 129].iter().map(|&n| err(n)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "observed order {order}");
    }
}

#[test]
fn constants_extract_to_zero_slope() {
    let s = filipovic(33);
    let (a, f) = s.filipovic_extract(&GridFunction::constant(&s, -1.25)).unwrap();
    assert_eq!(a, -1.25);
    assert!(f.values().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn base_constant_is_orthogonal_to_zero_at_base() {
    let s = filipovic(33);
    let fs = s.derivative_space().unwrap();
    let u = GridFunction::from_fn(&fs, |x| (2.0 * x[0]).sin() + 0.3).unwrap();
    let one = s.filipovic_embed(1.0, &GridFunction::zeros(&fs)).unwrap();
    let z = s.filipovic_embed(0.0, &u).unwrap();
    assert!(s.inner_product(&one, &z).unwrap().abs() < 1e-12);
}
