use optdes::design::{self, ContinuousDesign, GlmCriterion};
use optdes::glm::ModelSpec;
use optdes::priors::{self, Prior, Reference, SampleSpec};
use optdes::DesignRegion;
use proptest::prelude::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn box3() -> Prior {
    Prior::uniform_box(vec![[-1.0, 1.0], [0.5, 2.0], [1.0, 3.0]])
}

fn logistic2() -> ModelSpec {
    ModelSpec::logistic_first_order(DesignRegion::cube(2, -1.0, 1.0).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lhs_marginals_cover_every_stratum(n in 1usize..200, seed in any::<u64>()) {
        let prior = box3();
        let s = priors::sample_prior(&prior, &SampleSpec::lhs(n, seed)).unwrap();
        let Prior::UniformBox { bounds } = &prior else { unreachable!() };
        for (j, [a, b]) in bounds.iter().enumerate() {
            let mut u: Vec<f64> = s.thetas.iter().map(|t| (t[j] - a) / (b - a)).collect();
            u.sort_by(f64::total_cmp);
            let sup = u
                .iter()
                .enumerate()
                .map(|(i, &v)| (v - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - v))
                .fold(0.0, f64::max);
            prop_assert!(sup <= 1.0 / n as f64 + 1e-12, "coordinate {j}: {sup}");
        }
    }

    #[test]
    fn sampling_is_reproducible(n in 1usize..64, seed in any::<u64>(), lhs in any::<bool>()) {
        let spec = if lhs { SampleSpec::lhs(n, seed) } else { SampleSpec::iid(n, seed) };
        let a = in_pool(1, || priors::sample_prior(&box3(), &spec).unwrap());
        let b = in_pool(4, || priors::sample_prior(&box3(), &spec).unwrap());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn uniform_box_mean_converges() {
    let prior = box3();
    for spec in [SampleSpec::iid(10_000, 11), SampleSpec::lhs(10_000, 11)] {
        let mean = priors::sample_prior(&prior, &spec).unwrap().mean();
        for (m, [a, b]) in mean.iter().zip([[-1.0, 1.0], [0.5, 2.0], [1.0, 3.0]]) {
            assert!((m - (a + b) / 2.0).abs() <= 0.02 * (b - a), "{m} vs [{a}, {b}]");
        }
    }
}

#[test]
fn efficiency_distribution_ignores_thread_count() {
    let m = logistic2();
    let d = ContinuousDesign::equally_weighted(vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0]])
        .unwrap();
    let r = ContinuousDesign::equally_weighted(vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    let run = |threads| {
        in_pool(threads, || priors::efficiency_distribution(&d, &Reference::Fixed(r.clone()), &m, &box3(), 500, 3).unwrap())
    };
    let (a, b) = (run(1), run(8));
    assert_eq!(a, b);
    assert_eq!(a.samples, b.samples);
}

/// Mean and standard error of the per-draw local objectives.
fn mc_estimate(d: &ContinuousDesign, m: &ModelSpec, seed: u64) -> (f64, f64) {
    let s = priors::sample_prior(&box3(), &SampleSpec::iid(2000, seed)).unwrap();
    let vals: Vec<f64> = s
        .thetas
        .iter()
        .map(|t| design::objective(&GlmCriterion::local(m, t).unwrap(), d))
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let bayes = priors::bayes_objective(d, m, &box3(), &SampleSpec::iid(2000, seed)).unwrap();
    assert!((bayes - mean).abs() < 1e-10);
    (mean, (var / n).sqrt())
}

#[test]
fn monte_carlo_estimates_agree_across_seeds() {
    let m = logistic2();
    let d = ContinuousDesign::equally_weighted(vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0]])
        .unwrap();
    let (a, sa) = mc_estimate(&d, &m, 100);
    let (b, sb) = mc_estimate(&d, &m, 200);
    assert!((a - b).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
}
