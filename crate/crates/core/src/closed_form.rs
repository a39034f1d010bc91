//! Analytic locally D-optimal designs.

use serde::{Deserialize, Serialize};

use crate::design::ContinuousDesign;
use crate::error::{Error, Result};
use crate::glm::{weight_at_eta, Family, FamilyKind, Link};
use crate::optimize::{self, ContinuousOptOptions};
use crate::priors::Prior;
use crate::region::DesignRegion;

/// Maximizer `c*` of `eta^2 u(eta)^2` over `eta > 0` for a binomial link,
/// the half-width of the two-point design on the linear predictor scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalConstant {
    pub c_star: f64,
    pub link: Link,
}

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn binomial_weight(link: &Link, eta: f64) -> f64 {
    weight_at_eta(&Family::new(FamilyKind::Binomial), link, eta).unwrap_or(0.0)
}

/// `argmax_{eta > 0} eta^2 u(eta)^power` for a binomial link, searched on `(0, upper]`.
pub fn eta_star(link: &Link, power: i32, upper: f64) -> f64 {
    // Work with the log to keep the bracket free of underflow.
    let g = |e: f64| 2.0 * e.ln() + power as f64 * binomial_weight(link, e).ln();
    let e0 = golden_max(g, 1e-9, upper, 1e-10);
    // Golden section stalls near sqrt(eps) on a flat top; finish on the slope.
    let slope = |e: f64| {
        let h = 1e-5 * e;
        (g(e + h) - g(e - h)) / (2.0 * h)
    };
    let (mut a, mut b) = (e0 * (1.0 - 1e-3), e0 * (1.0 + 1e-3));
    if !(slope(a) > 0.0 && slope(b) < 0.0) {
        return e0;
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn canonical_constant(link: Link) -> Result<CanonicalConstant> {
    if !matches!(link, Link::Logistic | Link::Probit | Link::Cloglog | Link::Loglog) {
        return Err(Error::Unsupported(format!("{} is not a binomial link", link.name())));
    }
    Ok(CanonicalConstant {
        c_star: eta_star(&link, 2, 10.0),
        link,
    })
}

pub fn canonical_logistic_constant() -> CanonicalConstant {
    canonical_constant(Link::Logistic).expect("logistic is a binomial link")
}

/// Closed-form one-variable logistic design, or a numerical one when the
/// analytic support leaves the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic1d {
    pub design: ContinuousDesign,
    pub fallback: bool,
}

pub fn logistic_1d_design(theta0: f64, theta1: f64, region: &DesignRegion) -> Result<Logistic1d> {
    if region.k() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: region.k(),
        });
    }
    if theta1 == 0.0 {
        return Err(Error::Precondition("theta1 = 0 leaves the design undefined".into()));
    }
    let c = canonical_logistic_constant().c_star;
    let pts = vec![vec![(-c - theta0) / theta1], vec![(c - theta0) / theta1]];
    if pts.iter().all(|x| region.contains(x)) {
        let mut pts = pts;
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        return Ok(Logistic1d {
            design: ContinuousDesign::equally_weighted(pts)?,
            fallback: false,
        });
    }
    if !region.is_bounded() {
        return Err(Error::Unsupported("numerical fallback needs a bounded region".into()));
    }
    let model = crate::glm::ModelSpec::logistic_first_order(region.clone())?;
    let res = optimize::optimize_continuous_local(&model, &[theta0, theta1], &ContinuousOptOptions::default())?;
    Ok(Logistic1d {
        design: res.design,
        fallback: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremKind {
    /// Logistic first-order design with one unbounded variable.
    UnboundedLogistic,
    /// One-factor-at-a-time gamma design.
    GammaOfaat,
    /// Minimally supported Poisson design.
    PoissonMinimal,
    /// Poisson design at the prior mean.
    PoissonBayesMinimal,
}

/// A constructed design with the intermediate quantities that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremDesign {
    pub design: ContinuousDesign,
    pub kind: TheoremKind,
    pub eta_star: Option<f64>,
    /// Per factorial level of the bounded variables, `(eta* - eta_l) / theta_k`.
    pub a_star: Vec<f64>,
    /// Corner `c` of the Poisson construction.
    pub c: Vec<f64>,
    /// Parameter value the design is locally optimal for.
    pub theta: Vec<f64>,
    pub preconditions: Vec<String>,
}

/// Levels of the bounded variables for factorial pattern `l` (1-based), `k-1` of them.
fn factorial_level(l: usize, j: usize, k: usize) -> f64 {
    let div = 1usize << (k - 1 - j);
    if l.div_ceil(div) % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Logistic first-order design on `[-1,1]^(k-1) x R` with `2^k` equally weighted points.
pub fn yang_zhang_design(theta: &[f64], link: Link, region: &DesignRegion) -> Result<TheoremDesign> {
    if link != Link::Logistic {
        return Err(Error::Unsupported("this construction is stated for the logistic link".into()));
    }
    let k = region.k();
    if theta.len() != k + 1 {
        return Err(Error::Dimension {
            expected: k + 1,
            got: theta.len(),
        });
    }
    let shape_ok =
        region.unbounded_axis() == Some(k - 1) && (0..k - 1).all(|j| region.bound(j) == Some((-1.0, 1.0)));
    if !shape_ok {
        return Err(Error::Precondition("region must be [-1,1]^(k-1) x R with the last axis free".into()));
    }
    let tk = theta[k];
    if tk == 0.0 {
        return Err(Error::Precondition("the coefficient of the free variable must be nonzero".into()));
    }
    let es = eta_star(&link, k as i32 + 1, 50.0);
    let levels = 1usize << (k - 1);
    let mut points = Vec::with_capacity(2 * levels);
    let mut a_star = Vec::with_capacity(levels);
    for l in 1..=levels {
        let xl: Vec<f64> = (0..k - 1).map(|j| factorial_level(l, j + 1, k)).collect();
        let eta_l = theta[0] + xl.iter().zip(&theta[1..k]).map(|(x, t)| x * t).sum::<f64>();
        a_star.push((es - eta_l) / tk);
        for target in [es, -es] {
            let mut x = xl.clone();
            x.push((target - eta_l) / tk);
            points.push(x);
        }
    }
    Ok(TheoremDesign {
        design: ContinuousDesign::equally_weighted(points)?.sorted(),
        kind: TheoremKind::UnboundedLogistic,
        eta_star: Some(es),
        a_star,
        c: Vec::new(),
        theta: theta.to_vec(),
        preconditions: vec![format!("eta* = {es} maximizes eta^2 u(eta)^{}", k + 1)],
    })
}

/// Why the one-factor-at-a-time design is not optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Pairs `(i, j)` (1-based) violating the condition.
    pub violations: Vec<(usize, usize)>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum OfaatOutcome {
    Optimal(TheoremDesign),
    ConditionFails(ConditionReport),
}

/// Gamma first-order design on the coded region `[0,1]^k`: equal weights on
/// the origin and the unit vectors when the link condition holds.
pub fn gamma_ofaat_design(theta: &[f64], link: Link) -> Result<OfaatOutcome> {
    if theta.len() < 2 {
        return Err(Error::invalid("theta", "needs an intercept and at least one slope"));
    }
    if let Some(j) = theta.iter().position(|&t| t < 0.0) {
        return Err(Error::Precondition(format!(
            "theta_{j} = {} is negative; the coded problem needs theta_j >= 0",
            theta[j]
        )));
    }
    if theta.iter().all(|&t| t == 0.0) {
        return Err(Error::Precondition("at least one theta_j must be positive".into()));
    }
    let k = theta.len() - 1;
    let (lhs, scale) = match link {
        Link::Power { .. } => (theta[0] * theta[0], 1.0),
        Link::BoxCox { lambda } => ((1.0 + lambda * theta[0]).powi(2), lambda * lambda),
        Link::Log => (1.0, 0.0),
        other => return Err(Error::Unsupported(format!("{} is not a gamma link", other.name()))),
    };
    let mut violations = Vec::new();
    for i in 1..=k {
        for j in i..=k {
            if lhs > scale * theta[i] * theta[j] {
                violations.push((i, j));
            }
        }
    }
    if !violations.is_empty() {
        let note = if scale == 0.0 {
            "log link: the condition fails for every theta and the design tends to the 2^k factorial".to_string()
        } else {
            "condition fails: optimize numerically over the 2^k factorial support".to_string()
        };
        return Ok(OfaatOutcome::ConditionFails(ConditionReport { violations, note }));
    }
    let mut points = vec![vec![0.0; k]];
    for i in 0..k {
        let mut e = vec![0.0; k];
        e[i] = 1.0;
        points.push(e);
    }
    Ok(OfaatOutcome::Optimal(TheoremDesign {
        design: ContinuousDesign::equally_weighted(points)?,
        kind: TheoremKind::GammaOfaat,
        eta_star: None,
        a_star: Vec::new(),
        c: Vec::new(),
        theta: theta.to_vec(),
        preconditions: vec!["link condition holds for all i, j".into()],
    }))
}

/// Minimally supported Poisson log-linear design with `k + 1` equally weighted points.
pub fn russell_poisson_design(theta: &[f64], region: &DesignRegion) -> Result<TheoremDesign> {
    let k = region.k();
    if theta.len() != k + 1 {
        return Err(Error::Dimension {
            expected: k + 1,
            got: theta.len(),
        });
    }
    let bounds = region.box_bounds()?;
    for (i, &(l, u)) in bounds.iter().enumerate() {
        let t = theta[i + 1];
        if !((t * (u - l)).abs() >= 2.0) {
            return Err(Error::Precondition(format!(
                "|theta_{}(u_{0} - l_{0})| = {} < 2",
                i + 1,
                (t * (u - l)).abs()
            )));
        }
    }
    let c: Vec<f64> = bounds
        .iter()
        .zip(&theta[1..])
        .map(|(&(l, u), &t)| if t > 0.0 { u } else { l })
        .collect();
    let mut points = Vec::with_capacity(k + 1);
    for i in 0..k {
        let mut x = c.clone();
        x[i] -= 2.0 / theta[i + 1];
        points.push(x);
    }
    points.push(c.clone());
    Ok(TheoremDesign {
        design: ContinuousDesign::equally_weighted(points)?,
        kind: TheoremKind::PoissonMinimal,
        eta_star: None,
        a_star: Vec::new(),
        c,
        theta: theta.to_vec(),
        preconditions: vec!["|theta_i(u_i - l_i)| >= 2 for every i".into()],
    })
}

/// Minimally supported Bayesian Poisson design: the local design at `E(theta)`.
pub fn bayes_minimal_poisson_design(prior: &Prior, region: &DesignRegion) -> Result<TheoremDesign> {
    let mean = prior.mean()?;
    let mut d = russell_poisson_design(&mean, region)?;
    d.kind = TheoremKind::PoissonBayesMinimal;
    d.preconditions = vec!["|E(theta_i)(u_i - l_i)| >= 2 for every i".into()];
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_constant_value() {
        let c = canonical_logistic_constant();
        assert!((c.c_star - 1.5434).abs() < 1e-3, "{}", c.c_star);
        // Stationarity: 1/eta = 2h - 1.
        let h = crate::glm::sigmoid(c.c_star);
        assert!((1.0 / c.c_star - (2.0 * h - 1.0)).abs() < 1e-8);
        assert!((h - 0.824).abs() < 1e-3);
    }

    #[test]
    fn shifted_logistic_design() {
        let r = DesignRegion::cube(1, -10.0, 10.0).unwrap();
        let c = canonical_logistic_constant().c_star;
        let d = logistic_1d_design(0.0, 2.0, &r).unwrap();
        assert!((d.design.points()[1][0] - 0.7717).abs() < 1e-4);
        let d = logistic_1d_design(c, 1.0, &r).unwrap();
        assert!((d.design.points()[0][0] + 2.0 * c).abs() < 1e-12 && d.design.points()[1][0].abs() < 1e-12);
        assert!(!d.fallback);
        assert!(logistic_1d_design(0.0, 0.0, &r).is_err());
    }

    #[test]
    fn unbounded_logistic_eta_star() {
        // 2/eta = 3(2h - 1) at the maximizer of eta^2 u^3.
        let es = eta_star(&Link::Logistic, 3, 50.0);
        let h = crate::glm::sigmoid(es);
        assert!((2.0 / es - 3.0 * (2.0 * h - 1.0)).abs() < 1e-8);
        assert!((es - 1.2229).abs() < 1e-4);
    }

    #[test]
    fn factorial_pattern_order() {
        // k = 3: x_1 changes slowest.
        let pat: Vec<(f64, f64)> = (1..=4).map(|l| (factorial_level(l, 1, 3), factorial_level(l, 2, 3))).collect();
        assert_eq!(pat, vec![(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]);
    }

    #[test]
    fn poisson_support_examples() {
        let r = DesignRegion::cube(2, -1.0, 1.0).unwrap();
        let d = russell_poisson_design(&[0.0, 2.0, 2.0], &r).unwrap();
        assert_eq!(d.design.points(), &[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let d = russell_poisson_design(&[0.0, 1.0, 1.0], &r).unwrap();
        assert_eq!(d.design.points(), &[vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]);
        let d = russell_poisson_design(&[0.0, -2.0, 2.0], &r).unwrap();
        assert_eq!(d.c, vec![-1.0, 1.0]);
        assert_eq!(d.design.points(), &[vec![0.0, 1.0], vec![-1.0, 0.0], vec![-1.0, 1.0]]);
        let e = russell_poisson_design(&[0.0, 0.5, 2.0], &r).unwrap_err();
        assert!(e.to_string().contains("theta_1"), "{e}");
    }

    #[test]
    fn gamma_condition() {
        match gamma_ofaat_design(&[1.0, 1.0, 1.0], Link::Power { kappa: 1.0 }).unwrap() {
            OfaatOutcome::Optimal(d) => {
                assert_eq!(d.design.support_size(), 3);
                assert!(d.design.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            gamma_ofaat_design(&[1.0, 0.5, 0.5], Link::Power { kappa: 1.0 }).unwrap(),
            OfaatOutcome::ConditionFails(_)
        ));
        match gamma_ofaat_design(&[1.0, 50.0, 50.0], Link::BoxCox { lambda: 0.0 }).unwrap() {
            OfaatOutcome::ConditionFails(r) => assert!(r.note.contains("factorial")),
            other => panic!("{other:?}"),
        }
        assert!(gamma_ofaat_design(&[1.0, -1.0, 1.0], Link::Power { kappa: 1.0 }).is_err());
    }

    #[test]
    fn prior_mean_design() {
        let r = DesignRegion::cube(5, -1.0, 1.0).unwrap();
        let alpha = 10.0;
        let prior = Prior::uniform_box(
            std::iter::once([0.0, 0.0])
                .chain((0..5).map(|i| if i % 2 == 0 { [1.0, 1.0 + alpha] } else { [-1.0 - alpha, -1.0] }))
                .collect(),
        );
        let d = bayes_minimal_poisson_design(&prior, &r).unwrap();
        assert_eq!(d.theta[1..], [6.0, -6.0, 6.0, -6.0, 6.0]);
        let beta = (alpha - 2.0) / (alpha + 2.0);
        assert!((d.design.points()[0][0] - beta).abs() < 1e-12);
        assert!((d.design.points()[1][1] + beta).abs() < 1e-12);
    }
}
