use optdes::design::{self, equivalence_check, ContinuousDesign, GlmCriterion};
use optdes::glm::{self, Family, FamilyKind, Link, ModelBasis, ModelSpec};
use optdes::grid::GridSpec;
use optdes::linalg::Cholesky;
use optdes::optimize::{self, ContinuousOptOptions};
use optdes::DesignRegion;
use proptest::prelude::*;

fn logistic2() -> ModelSpec {
    ModelSpec::logistic_first_order(DesignRegion::cube(2, -1.0, 1.0).unwrap()).unwrap()
}

fn points_and_weights(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), n),
            prop::collection::vec(0.05f64..1.0, n),
        )
    })
}

fn theta() -> impl Strategy<Value = Vec<f64>> {
    (-1.0f64..1.0, -3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b, c)| vec![a, b, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_trace_equals_p((pts, w) in points_and_weights(3..8), theta in theta()) {
        let m = logistic2();
        let d = ContinuousDesign::normalized(pts, w).unwrap();
        let im = design::information_matrix(&d, &m, &theta).unwrap();
        let Ok(ch) = Cholesky::new(im.matrix()) else { return Ok(()) };
        let tr: f64 = d
            .iter()
            .map(|(x, w)| {
                let f = glm::eval_basis(m.basis(), x).unwrap();
                w * glm::glm_weight(&m, &theta, x).unwrap() * ch.quad_form(&f)
            })
            .sum();
        prop_assert!((tr - 3.0).abs() < 1e-8, "trace {tr}");
    }

    #[test]
    fn mass_at_negative_psi_lowers_objective((pts, w) in points_and_weights(3..6), theta in theta()) {
        let m = logistic2();
        let d = ContinuousDesign::normalized(pts, w).unwrap();
        let c = GlmCriterion::local(&m, &theta).unwrap();
        let before = design::objective(&c, &d);
        prop_assume!(before.is_finite() && before < 40.0);
        let r = equivalence_check(&c, &d, &GridSpec::with_step(0.1)).unwrap();
        prop_assume!(r.min_psi < -1e-3);
        let alpha = 1e-6;
        let mut points = d.points().to_vec();
        let mut weights: Vec<f64> = d.weights().iter().map(|w| w * (1.0 - alpha)).collect();
        points.push(r.argmin.clone());
        weights.push(alpha);
        let after = design::objective(&c, &ContinuousDesign::normalized(points, weights).unwrap());
        prop_assert!(after < before, "{after} >= {before} at psi {}", r.min_psi);
        // The slope matches the directional derivative.
        let slope = (after - before) / alpha;
        let tol = 1e-3 * (1.0 + r.min_psi.abs()) + alpha * r.min_psi * r.min_psi;
        prop_assert!((slope - r.min_psi).abs() <= tol, "{slope} vs {}", r.min_psi);
    }

    #[test]
    fn caratheodory_keeps_information((pts, w) in points_and_weights(8..16), theta in theta()) {
        let m = logistic2();
        let c = GlmCriterion::local(&m, &theta).unwrap();
        let d = ContinuousDesign::normalized(pts, w).unwrap();
        let before = design::objective(&c, &d);
        prop_assume!(before.is_finite() && before < 30.0);
        let reduced = design::caratheodory_reduce(&c, &d).unwrap();
        prop_assert!(reduced.support_size() <= design::caratheodory_bound(3));
        prop_assert!((design::objective(&c, &reduced) - before).abs() < 1e-8);
    }

    #[test]
    fn merging_coincident_points_is_exact((pts, w) in points_and_weights(3..8), theta in theta()) {
        let m = logistic2();
        let c = GlmCriterion::local(&m, &theta).unwrap();
        let d = ContinuousDesign::normalized(pts.clone(), w.clone()).unwrap();
        let before = design::objective(&c, &d);
        prop_assume!(before.is_finite());
        // Every point appears twice, splitting its weight.
        let doubled = ContinuousDesign::normalized(
            pts.iter().chain(&pts).cloned().collect(),
            w.iter().chain(&w).map(|v| v / 2.0).collect(),
        )
        .unwrap();
        let pruned = design::prune(&c, &doubled).unwrap();
        prop_assert!(pruned.support_size() <= d.support_size());
        prop_assert!((design::objective(&c, &pruned) - before).abs() < 1e-10);
    }
}

#[test]
fn factorial_is_efficient_for_small_effects() {
    let m = logistic2();
    let factorial =
        ContinuousDesign::equally_weighted(vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]).unwrap();
    let mut last = 0.0;
    for eps in [1e-1, 1e-2, 1e-3] {
        let theta = [0.0, eps, eps];
        let opt = optimize::optimize_continuous_local(&m, &theta, &ContinuousOptOptions::default()).unwrap();
        let e = design::d_efficiency(&factorial, &opt.design, &m, &theta).unwrap();
        assert!(e >= last - 1e-9 && e <= 1.0 + 1e-9, "eps {eps}: {e}");
        last = e;
    }
    assert!(last >= 0.999, "{last}");
}

#[test]
fn minimal_support_gets_equal_weights() {
    let sq = DesignRegion::cube(2, -1.0, 1.0).unwrap();
    let gamma = ModelSpec::new(
        Family::new(FamilyKind::Gamma),
        Link::Power { kappa: 1.0 },
        ModelBasis::first_order(2).unwrap(),
        DesignRegion::cube(2, 0.0, 1.0).unwrap(),
    )
    .unwrap();
    let poisson = ModelSpec::new(Family::new(FamilyKind::Poisson), Link::Log, ModelBasis::first_order(2).unwrap(), sq.clone())
        .unwrap();
    let logistic = ModelSpec::logistic_first_order(sq).unwrap();
    let cases = [
        (logistic.clone(), vec![2.5, 2.0, 2.0]),
        (logistic, vec![3.0, 2.0, 2.0]),
        (poisson.clone(), vec![0.0, 2.0, 2.0]),
        (poisson, vec![1.0, -3.0, 4.0]),
        (gamma, vec![1.0, 1.0, 1.0]),
    ];
    let mut seen = 0;
    for (m, theta) in cases {
        let r = optimize::optimize_continuous_local(&m, &theta, &ContinuousOptOptions::default()).unwrap();
        if r.design.support_size() == m.p() {
            seen += 1;
            for w in r.design.weights() {
                assert!((w - 1.0 / 3.0).abs() < 1e-4, "{theta:?}: {:?}", r.design.weights());
            }
        }
    }
    assert!(seen >= 4, "only {seen} minimally supported optima");
}
