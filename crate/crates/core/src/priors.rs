//! Parameter priors, sampling, pseudo-Bayesian criteria and efficiency distributions.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form;
use crate::design::{self, ContinuousDesign, GlmCriterion, Sensitivity};
use crate::error::{Error, Result};
use crate::glm::{FamilyKind, Link, ModelSpec};
use crate::rng;

/// Prior distribution on the parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    Point {
        theta: Vec<f64>,
    },
    /// Independent uniforms on `[a_i, b_i]`; `a_i = b_i` fixes a component.
    UniformBox {
        bounds: Vec<[f64; 2]>,
    },
    Sample {
        draws: Vec<Vec<f64>>,
        /// Equal weights when absent.
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    Lhs,
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub n_draws: usize,
    pub seed: u64,
    pub method: SampleMethod,
}

impl SampleSpec {
    pub fn lhs(n_draws: usize, seed: u64) -> Self {
        SampleSpec {
            n_draws,
            seed,
            method: SampleMethod::Lhs,
        }
    }

    pub fn iid(n_draws: usize, seed: u64) -> Self {
        SampleSpec {
            n_draws,
            seed,
            method: SampleMethod::Iid,
        }
    }
}

/// Parameter vectors with probability weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub thetas: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let p = self.thetas[0].len();
        let mut m = vec![0.0; p];
        for (t, w) in self.thetas.iter().zip(&self.weights) {
            for (mi, ti) in m.iter_mut().zip(t) {
                *mi += w * ti;
            }
        }
        m
    }
}

impl Prior {
    pub fn point(theta: Vec<f64>) -> Self {
        Prior::Point { theta }
    }

    pub fn uniform_box(bounds: Vec<[f64; 2]>) -> Self {
        Prior::UniformBox { bounds }
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Point { theta } => theta.len(),
            Prior::UniformBox { bounds } => bounds.len(),
            Prior::Sample { draws, .. } => draws.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::invalid("prior", why));
        match self {
            Prior::Point { theta } => {
                if theta.is_empty() || theta.iter().any(|v| !v.is_finite()) {
                    return bad("point prior needs a finite parameter vector".into());
                }
            }
            Prior::UniformBox { bounds } => {
                if bounds.is_empty() {
                    return bad("uniform box needs at least one interval".into());
                }
                for (i, [a, b]) in bounds.iter().enumerate() {
                    if !(a.is_finite() && b.is_finite() && a <= b) {
                        return bad(format!("interval {i} needs finite a <= b, got [{a}, {b}]"));
                    }
                }
            }
            Prior::Sample { draws, weights } => {
                let p = self.dim();
                if draws.is_empty() || p == 0 || draws.iter().any(|d| d.len() != p) {
                    return bad("sample needs draws of one common positive length".into());
                }
                if let Some(w) = weights {
                    if w.len() != draws.len() || w.iter().any(|v| !(*v >= 0.0)) {
                        return bad("sample weights must be nonnegative, one per draw".into());
                    }
                    let total: f64 = w.iter().sum();
                    if (total - 1.0).abs() > design::WEIGHT_SUM_TOL {
                        return bad(format!("sample weights must sum to 1, got {total}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// `E(theta)`, exact for every kind.
    pub fn mean(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self {
            Prior::Point { theta } => theta.clone(),
            Prior::UniformBox { bounds } => bounds.iter().map(|[a, b]| 0.5 * (a + b)).collect(),
            Prior::Sample { .. } => self.as_sample().expect("sample prior").mean(),
        })
    }

    fn as_sample(&self) -> Option<WeightedSample> {
        match self {
            Prior::Sample { draws, weights } => {
                let n = draws.len();
                Some(WeightedSample {
                    thetas: draws.clone(),
                    weights: weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]),
                })
            }
            _ => None,
        }
    }

    /// Draws one parameter vector.
    pub fn draw(&self, r: &mut rng::Rng) -> Vec<f64> {
        match self {
            Prior::Point { theta } => theta.clone(),
            Prior::UniformBox { bounds } => bounds.iter().map(|[a, b]| a + (b - a) * r.random::<f64>()).collect(),
            Prior::Sample { draws, weights } => {
                let i = match weights {
                    None => r.random_range(0..draws.len()),
                    Some(w) => {
                        let u: f64 = r.random();
                        let mut acc = 0.0;
                        w.iter()
                            .position(|wi| {
                                acc += wi;
                                u < acc
                            })
                            .unwrap_or(draws.len() - 1)
                    }
                };
                draws[i].clone()
            }
        }
    }
}

/// Weighted parameter sample from a prior.
pub fn sample_prior(prior: &Prior, spec: &SampleSpec) -> Result<WeightedSample> {
    prior.validate()?;
    if spec.n_draws == 0 {
        return Err(Error::invalid("sample spec", "n_draws must be at least 1"));
    }
    let n = spec.n_draws;
    let thetas = match (prior, spec.method) {
        (Prior::Point { theta }, _) => {
            return Ok(WeightedSample {
                thetas: vec![theta.clone()],
                weights: vec![1.0],
            })
        }
        (Prior::UniformBox { bounds }, SampleMethod::Lhs) => {
            let mut r = rng::stream(spec.seed, "lhs", 0);
            let mut thetas = vec![vec![0.0; bounds.len()]; n];
            for (j, [a, b]) in bounds.iter().enumerate() {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut r);
                for (i, cell) in perm.into_iter().enumerate() {
                    let u: f64 = r.random();
                    thetas[i][j] = a + (b - a) * (cell as f64 + u) / n as f64;
                }
            }
            thetas
        }
        (Prior::Sample { .. }, SampleMethod::Lhs) => {
            return Err(Error::Unsupported("Latin hypercube sampling of an explicit sample".into()))
        }
        (_, SampleMethod::Iid) => {
            let mut r = rng::stream(spec.seed, "iid", 0);
            (0..n).map(|_| prior.draw(&mut r)).collect()
        }
    };
    Ok(WeightedSample {
        thetas,
        weights: vec![1.0 / n as f64; n],
    })
}

/// Criterion averaging over a sample of the prior.
pub fn prior_criterion(model: &ModelSpec, prior: &Prior, spec: &SampleSpec) -> Result<GlmCriterion> {
    if prior.dim() != model.p() {
        return Err(Error::Dimension {
            expected: model.p(),
            got: prior.dim(),
        });
    }
    let s = sample_prior(prior, spec)?;
    GlmCriterion::weighted(model, s.thetas, s.weights)
}

/// `-E_theta log det M(xi; theta)` over the sample; `+inf` if any draw is singular.
pub fn bayes_objective(design: &ContinuousDesign, model: &ModelSpec, prior: &Prior, spec: &SampleSpec) -> Result<f64> {
    design::try_objective(&prior_criterion(model, prior, spec)?, design)
}

/// Prior-averaged sensitivity.
pub fn bayes_sensitivity(
    x: &[f64],
    design: &ContinuousDesign,
    model: &ModelSpec,
    prior: &Prior,
    spec: &SampleSpec,
) -> Result<f64> {
    let c = prior_criterion(model, prior, spec)?;
    Sensitivity::new(&c, design)?.psi(x)
}

/// What the design is compared against at each draw.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Fixed(ContinuousDesign),
    /// The closed-form locally optimal design at each draw.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySample {
    pub theta: Vec<f64>,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfSummary {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    /// Oracle draws that violated the constructor's precondition and were redrawn.
    pub rejected: usize,
    #[serde(skip)]
    pub samples: Vec<EfficiencySample>,
}

impl EcdfSummary {
    /// Fraction of draws with efficiency strictly above `x`.
    pub fn fraction_above(&self, x: f64) -> f64 {
        self.samples.iter().filter(|s| s.efficiency > x).count() as f64 / self.samples.len() as f64
    }
}

/// Nearest-rank quantile of sorted data.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn oracle_supported(model: &ModelSpec) -> Result<()> {
    let first = model.basis().is_first_order();
    match (model.family().kind, model.link()) {
        (FamilyKind::Poisson, Link::Log) if first => Ok(()),
        (FamilyKind::Binomial, Link::Logistic) if first && model.k() == 1 => Ok(()),
        _ => Err(Error::Unsupported(format!(
            "no closed-form locally optimal design for {} / {}",
            model.family().name(),
            model.link().name()
        ))),
    }
}

fn oracle_design(model: &ModelSpec, theta: &[f64]) -> Result<ContinuousDesign> {
    oracle_supported(model)?;
    if model.family().kind == FamilyKind::Poisson {
        Ok(closed_form::russell_poisson_design(theta, model.region())?.design)
    } else {
        Ok(closed_form::logistic_1d_design(theta[0], theta[1], model.region())?.design)
    }
}

/// Distribution of `(det M(xi_a)/det M(xi_b))^(1/p)` over `n` iid prior draws.
pub fn efficiency_distribution(
    design: &ContinuousDesign,
    reference: &Reference,
    model: &ModelSpec,
    prior: &Prior,
    n: usize,
    seed: u64,
) -> Result<EcdfSummary> {
    prior.validate()?;
    if n == 0 {
        return Err(Error::invalid("efficiency distribution", "needs at least one draw"));
    }
    if prior.dim() != model.p() {
        return Err(Error::Dimension {
            expected: model.p(),
            got: prior.dim(),
        });
    }
    if matches!(reference, Reference::Oracle) {
        oracle_supported(model)?;
    }
    let mut r = rng::stream(seed, "effdist", 0);
    let mut draws = Vec::with_capacity(n);
    let mut rejected = 0;
    let max_rejects = 100 * n;
    while draws.len() < n {
        let theta = prior.draw(&mut r);
        let ok = match reference {
            Reference::Fixed(_) => true,
            Reference::Oracle => oracle_design(model, &theta).is_ok(),
        };
        if ok {
            draws.push(theta);
        } else {
            rejected += 1;
            if rejected > max_rejects {
                return Err(Error::Precondition(
                    "prior draws almost never satisfy the closed-form precondition".into(),
                ));
            }
        }
    }
    let samples: Vec<EfficiencySample> = draws
        .into_par_iter()
        .map(|theta| {
            let ref_design = match reference {
                Reference::Fixed(d) => d.clone(),
                Reference::Oracle => oracle_design(model, &theta)?,
            };
            let efficiency = design::d_efficiency(design, &ref_design, model, &theta)?;
            Ok(EfficiencySample { theta, efficiency })
        })
        .collect::<Result<_>>()?;
    let mut sorted: Vec<f64> = samples.iter().map(|s| s.efficiency).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(EcdfSummary {
        min: sorted[0],
        q25: nearest_rank(&sorted, 0.25),
        median: nearest_rank(&sorted, 0.5),
        q75: nearest_rank(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        rejected,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::DesignRegion;

    #[test]
    fn point_prior_returns_itself() {
        let p = Prior::point(vec![1.0, 2.0]);
        let s = sample_prior(&p, &SampleSpec::lhs(50, 3)).unwrap();
        assert_eq!(s.thetas, vec![vec![1.0, 2.0]]);
        assert_eq!(s.weights, vec![1.0]);
    }

    #[test]
    fn lhs_one_draw_per_stratum() {
        let p = Prior::uniform_box(vec![[0.0, 1.0]]);
        let s = sample_prior(&p, &SampleSpec::lhs(4, 11)).unwrap();
        let mut cells: Vec<usize> = s.thetas.iter().map(|t| (t[0] * 4.0).floor() as usize).collect();
        cells.sort();
        assert_eq!(cells, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lhs_rejected_on_sample_prior() {
        let p = Prior::Sample {
            draws: vec![vec![0.0]],
            weights: None,
        };
        assert!(matches!(sample_prior(&p, &SampleSpec::lhs(4, 0)), Err(Error::Unsupported(_))));
        assert_eq!(sample_prior(&p, &SampleSpec::iid(3, 0)).unwrap().thetas.len(), 3);
    }

    #[test]
    fn degenerate_interval_fixes_component() {
        let p = Prior::uniform_box(vec![[0.0, 0.0], [1.0, 3.0]]);
        let s = sample_prior(&p, &SampleSpec::lhs(10, 1)).unwrap();
        assert!(s.thetas.iter().all(|t| t[0] == 0.0 && (1.0..=3.0).contains(&t[1])));
        assert!(Prior::uniform_box(vec![[1.0, 0.0]]).validate().is_err());
    }

    #[test]
    fn nearest_rank_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&v, 0.5), 2.0);
        assert_eq!(nearest_rank(&v, 0.25), 1.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&v, 1.0), 4.0);
    }

    #[test]
    fn two_draw_average() {
        let m = ModelSpec::logistic_first_order(DesignRegion::cube(1, -3.0, 3.0).unwrap()).unwrap();
        let d = ContinuousDesign::equally_weighted(vec![vec![-1.0], vec![1.2]]).unwrap();
        let a = [0.1, 1.0];
        let b = [-0.4, 2.0];
        let prior = Prior::Sample {
            draws: vec![a.to_vec(), b.to_vec()],
            weights: Some(vec![0.5, 0.5]),
        };
        let c = GlmCriterion::weighted(&m, vec![a.to_vec(), b.to_vec()], vec![0.5, 0.5]).unwrap();
        let oa = design::d_objective(&design::information_matrix(&d, &m, &a).unwrap());
        let ob = design::d_objective(&design::information_matrix(&d, &m, &b).unwrap());
        assert!((design::try_objective(&c, &d).unwrap() - 0.5 * (oa + ob)).abs() < 1e-14);
        let sa = design::sensitivity(&[0.3], &d, &m, &a).unwrap();
        let sb = design::sensitivity(&[0.3], &d, &m, &b).unwrap();
        let s = Sensitivity::new(&c, &d).unwrap().psi(&[0.3]).unwrap();
        assert!((s - 0.5 * (sa + sb)).abs() < 1e-13);
        // The explicit-sample prior evaluates the same average through iid resampling only.
        assert!(bayes_objective(&d, &m, &prior, &SampleSpec::iid(2000, 0)).unwrap().is_finite());
    }

    #[test]
    fn fixed_reference_equal_to_design_gives_ones() {
        let m = ModelSpec::logistic_first_order(DesignRegion::cube(1, -3.0, 3.0).unwrap()).unwrap();
        let d = ContinuousDesign::equally_weighted(vec![vec![-1.0], vec![1.0]]).unwrap();
        let prior = Prior::uniform_box(vec![[-1.0, 1.0], [0.5, 2.0]]);
        let s = efficiency_distribution(&d, &Reference::Fixed(d.clone()), &m, &prior, 50, 2).unwrap();
        assert!(s.samples.iter().all(|e| e.efficiency == 1.0));
        assert_eq!((s.min, s.median, s.max), (1.0, 1.0, 1.0));
    }
}
