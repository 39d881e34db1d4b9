use piag::certify::{self, CheckStatus, TheoryConstants};
use piag::problems::{ProblemInstance, ProblemSpec};
use piag::schedule::{GradientTable, OrderPolicy};
use piag::solver::{self, piag_step, run, SolverConfig};
use piag::vector;
use proptest::prelude::*;

fn lasso(m: usize, n: usize, seed: u64) -> ProblemInstance {
    ProblemSpec::RegularizedLeastSquares {
        m,
        n,
        seed,
        l1_weight: 0.1,
        l2_weight: 1.0,
        condition: None,
    }
    .build()
    .unwrap()
}

fn policy_strategy(m: usize) -> impl Strategy<Value = OrderPolicy> {
    prop_oneof![
        Just(OrderPolicy::Cyclic),
        Just(OrderPolicy::Full),
        (0u64..50).prop_map(|seed| OrderPolicy::ShuffledCyclic { seed }),
        proptest::collection::vec(0usize..4, m).prop_map(|delays| OrderPolicy::FixedDelay { delays }),
    ]
}

#[test]
fn aggregated_gradient_matches_stored_points() {
    // cyclic m=3 (K=2), five steps in
    let p = lasso(3, 2, 8);
    let schedule = OrderPolicy::Cyclic.compile(3).unwrap();
    let mut table = GradientTable::new(&p, &[0.0, 0.0]).unwrap();
    let mut x = vec![0.0, 0.0];
    let eta = 0.05;
    for k in 0..5 {
        x = piag_step(&p, &x, &mut table, &schedule, eta, k).unwrap().x_next;
    }
    table.refresh(&p, &schedule, 5, &x).unwrap();
    let mut expect = vec![0.0; 2];
    for (i, c) in p.smooth.components().iter().enumerate() {
        let g = c.gradient(table.stored_point(i));
        expect[0] += g[0] / 3.0;
        expect[1] += g[1] / 3.0;
    }
    let got = table.aggregated_gradient();
    for (a, b) in got.iter().zip(&expect) {
        assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
    }
    assert_eq!(table.timestamps(), &[3, 4, 5]);
}

#[test]
fn distance_bound_at_full_gradient() {
    // K = 0, r = 0: d_k = −∇f(x_k) and ‖x_k − x*‖ ≤ (2/μ)‖∇f(x_k)‖
    let p = ProblemSpec::RegularizedLeastSquares {
        m: 6,
        n: 3,
        seed: 2,
        l1_weight: 0.0,
        l2_weight: 0.5,
        condition: None,
    }
    .build()
    .unwrap();
    let eta = 1.0 / p.smooth.lipschitz();
    let t = run(&p, &SolverConfig::new(eta, OrderPolicy::Full, 60), &[3.0, -2.0, 1.0]).unwrap();
    for row in &t.rows[..60] {
        let g = p.smooth.gradient(&row.x);
        let d = row.direction.as_ref().unwrap();
        for (di, gi) in d.iter().zip(&g) {
            assert!((di + gi).abs() <= 1e-12 * (1.0 + gi.abs()));
        }
        assert!(row.dist_to_opt <= 2.0 / p.smooth.mu() * vector::norm(&g) + 1e-12);
    }
    assert_eq!(certify::check_lemma2(&t).unwrap().status, CheckStatus::Pass);
}

#[test]
fn corollary2_lasso_stays_under_the_envelope() {
    let p = lasso(20, 5, 1);
    let step = solver::step_size_corollary2(p.smooth.lipschitz(), p.smooth.mu(), 19).unwrap();
    let t = run(&p, &SolverConfig::new(step.eta, OrderPolicy::Cyclic, 4000), &[0.0; 5]).unwrap();
    let r = certify::check_theorem2_envelope(&t, step.a).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    assert!(r.iterations_checked >= 4000 - step.a * 19);
}

#[test]
fn corollary1_recursion_feeds_the_sequence_lemma() {
    // at the theorem-2 step size, F_k itself satisfies the lemma's hypothesis
    let p = lasso(6, 3, 4);
    let (l, mu, k, a) = (p.smooth.lipschitz(), p.smooth.mu(), 5, 4);
    let eta = solver::step_size_theorem2(l, mu, k, a).unwrap();
    let t = run(&p, &SolverConfig::new(eta, OrderPolicy::Cyclic, 400), &[0.0; 3]).unwrap();
    let c = TheoryConstants::new(eta, l, mu, k, a).unwrap();
    let (pp, q, window) = c.sequence_coefficients();
    assert!(pp + q.iter().sum::<f64>() <= 1.0 - eta * mu / 18.0 + 1e-15);
    // the recursion holds from k = aK+1, so index Z_j = F_(j+1)
    let f = t.suboptimality();
    let r = certify::check_sequence_lemma(&f[1..], pp, &q, window).unwrap();
    assert_eq!(r.status, CheckStatus::Pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn traces_satisfy_identities_and_certified_bounds(
        seed in 0u64..500,
        m in 1usize..6,
        policy in (1usize..6).prop_flat_map(policy_strategy),
        scale in 0.2f64..1.0,
    ) {
        let policy = match policy {
            OrderPolicy::FixedDelay { mut delays } => { delays.resize(m, 0); OrderPolicy::FixedDelay { delays } }
            other => other,
        };
        let p = lasso(m, 3, seed);
        let k = policy.compile(m).unwrap().staleness();
        let eta = scale / (p.smooth.lipschitz() * (k as f64 + 1.0));
        let t = run(&p, &SolverConfig::new(eta, policy, 150), &[1.0, -1.0, 0.5]).unwrap();
        let tol = 1e-8 * (1.0 + t.meta.reference_value.abs());
        for w in t.rows.windows(2) {
            let d = w[0].direction.as_ref().unwrap();
            for ((a, b), di) in w[1].x.iter().zip(&w[0].x).zip(d) {
                let gap = (*a - *b) - eta * di;
                prop_assert!(gap.abs() <= 4.0 * f64::EPSILON * (a.abs() + b.abs()), "{} vs {}", *a - *b, eta * di);
            }
            prop_assert!(w[0].suboptimality >= -tol);
        }
        for r in certify::certify_trace(&t, 2, 3) {
            prop_assert!(r.pass, "{:?}", r);
        }
    }

    #[test]
    fn staleness_never_exceeds_certified_bound(m in 1usize..7, policy in (1usize..7).prop_flat_map(policy_strategy)) {
        let policy = match policy {
            OrderPolicy::FixedDelay { mut delays } => { delays.resize(m, 1); OrderPolicy::FixedDelay { delays } }
            other => other,
        };
        let p = lasso(m, 2, 0);
        let schedule = policy.compile(m).unwrap();
        let mut table = GradientTable::new(&p, &[0.0, 0.0]).unwrap();
        let mut x = vec![0.0, 0.0];
        for k in 0..40 {
            x = piag_step(&p, &x, &mut table, &schedule, 0.01, k).unwrap().x_next;
            prop_assert!(table.max_age(k) <= schedule.staleness());
        }
    }
}
