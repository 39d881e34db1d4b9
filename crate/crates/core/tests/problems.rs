use nalgebra::{DMatrix, SymmetricEigen};
use piag::problems::{estimate_constants, ProblemInstance, ProblemSpec};
use piag::vector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn specs() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec::RegularizedLeastSquares {
            m: 20,
            n: 5,
            seed: 3,
            l1_weight: 0.1,
            l2_weight: 1.0,
            condition: None,
        },
        ProblemSpec::RegularizedLeastSquares {
            m: 12,
            n: 6,
            seed: 9,
            l1_weight: 0.0,
            l2_weight: 0.2,
            condition: Some(25.0),
        },
        ProblemSpec::ConstrainedQuadratic {
            n: 4,
            seed: 1,
            box_lo: -1.0,
            box_hi: 1.0,
            ridge: 1.0,
            condition: None,
        },
    ]
}

/// Hessian of the quadratic smooth part, column j = ∇f(e_j) − ∇f(0).
fn hessian(p: &ProblemInstance) -> DMatrix<f64> {
    let n = p.dim();
    let g0 = p.smooth.gradient(&vec![0.0; n]);
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let gj = p.smooth.gradient(&e);
        for i in 0..n {
            h[(i, j)] = gj[i] - g0[i];
        }
    }
    (&h + h.transpose()) * 0.5
}

#[test]
fn declared_constants_bracket_the_spectrum() {
    for spec in specs() {
        let p = spec.build().unwrap();
        let eig = SymmetricEigen::new(hessian(&p)).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        assert!(p.smooth.lipschitz() >= hi * (1.0 - 1e-12), "{spec:?}: L {} < {hi}", p.smooth.lipschitz());
        assert!(p.smooth.mu() <= lo * (1.0 + 1e-12), "{spec:?}: mu {} > {lo}", p.smooth.mu());
        assert!(p.smooth.mu() > 0.0);
    }
}

#[test]
fn condition_override_sets_q() {
    let p = specs()[1].build().unwrap();
    assert!((p.smooth.condition() - 25.0).abs() < 1e-9);
}

#[test]
fn smoothness_and_strong_monotonicity_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for spec in specs() {
        let p = spec.build().unwrap();
        let (l, mu) = (p.smooth.lipschitz(), p.smooth.mu());
        for _ in 0..100 {
            let x: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let dx = vector::sub(&x, &y);
            let dg = vector::sub(&p.smooth.gradient(&x), &p.smooth.gradient(&y));
            assert!(vector::norm(&dg) <= l * vector::norm(&dx) + 1e-10);
            assert!(vector::dot(&dx, &dg) >= mu * vector::norm_sq(&dx) - 1e-10);
        }
    }
}

#[test]
fn midpoint_convexity_after_removing_mu() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for spec in specs() {
        let p = spec.build().unwrap();
        let mu = p.smooth.mu();
        let h = |x: &[f64]| p.smooth.value(x) - 0.5 * mu * vector::norm_sq(x);
        for _ in 0..100 {
            let x: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let scale = 1.0 + h(&x).abs() + h(&y).abs();
            assert!(h(&mid) <= 0.5 * (h(&x) + h(&y)) + 1e-12 * scale);
        }
    }
}

#[test]
fn reference_is_a_fixed_point() {
    for spec in specs() {
        let p = spec.build().unwrap();
        let r = p.reference.as_ref().unwrap();
        for eta in [1.0 / p.smooth.lipschitz(), 0.1 / p.smooth.lipschitz()] {
            assert!(p.fixed_point_residual(&r.x, eta).unwrap() <= 1e-11, "{spec:?}");
        }
        assert!((p.objective(&r.x) - r.value).abs() <= 1e-14 * (1.0 + r.value.abs()));
    }
}

#[test]
fn reference_beats_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for spec in specs() {
        let p = spec.build().unwrap();
        let f_star = p.reference.as_ref().unwrap().value;
        for _ in 0..200 {
            let x: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(p.objective(&x) >= f_star - 1e-12);
        }
    }
}

#[test]
fn estimated_constants_are_consistent() {
    for spec in specs() {
        let p = spec.build().unwrap();
        let est = estimate_constants(&p, 200, 5).unwrap();
        assert!(est.consistent_with(&p, 1e-10), "{spec:?}: {est:?}");
    }
}

#[test]
fn builds_are_deterministic() {
    for spec in specs() {
        let (a, b) = (spec.build().unwrap(), spec.build().unwrap());
        assert_eq!(a.summary(), b.summary());
        let x = vec![0.3; a.dim()];
        assert_eq!(a.smooth.gradient(&x), b.smooth.gradient(&x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spec_json_round_trip_rebuilds_identically(seed in 0u64..1000, m in 1usize..8, n in 1usize..5) {
        let spec = ProblemSpec::RegularizedLeastSquares { m, n, seed, l1_weight: 0.05, l2_weight: 0.5, condition: None };
        let back: ProblemSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        prop_assert_eq!(&back, &spec);
        let (a, b) = (spec.build().unwrap(), back.build().unwrap());
        prop_assert_eq!(a.summary(), b.summary());
    }
}
