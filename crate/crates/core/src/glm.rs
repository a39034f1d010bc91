//! Generalized linear model ingredients: response families, link functions,
//! polynomial bases and the GLM weight `u(x) = V(mu)^-1 (dmu/deta)^2` that
//! scales every rank-one information contribution.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::region::DesignRegion;

/// Smallest admissible value of `1 + lambda*eta` (Box-Cox) and of `eta` (power link).
pub const ADMISSIBLE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Normal,
    Binomial,
    Poisson,
    Gamma,
}

/// Response distribution. The dispersion is carried along for completeness
/// but never enters a D-criterion: it rescales `M` by a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub kind: FamilyKind,
    #[serde(default = "unit_dispersion")]
    pub dispersion: f64,
}

fn unit_dispersion() -> f64 {
    1.0
}

impl Family {
    pub fn new(kind: FamilyKind) -> Self {
        Family {
            kind,
            dispersion: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Normal => "normal",
            FamilyKind::Binomial => "binomial",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Gamma => "gamma",
        }
    }

    /// Variance function `V(mu)`.
    pub fn variance(&self, mu: f64) -> f64 {
        match self.kind {
            FamilyKind::Normal => 1.0,
            FamilyKind::Binomial => mu * (1.0 - mu),
            FamilyKind::Poisson => mu,
            FamilyKind::Gamma => mu * mu,
        }
    }
}

/// Link function `g(mu) = eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Link {
    Identity,
    Logistic,
    Probit,
    Cloglog,
    /// `eta = log(-log mu)`, the complementary log-log link with success and
    /// failure interchanged; `mu` decreases in `eta`.
    Loglog,
    Log,
    #[serde(rename = "boxcox")]
    BoxCox {
        lambda: f64,
    },
    Power {
        kappa: f64,
    },
}

impl Link {
    pub fn name(&self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Logistic => "logistic",
            Link::Probit => "probit",
            Link::Cloglog => "cloglog",
            Link::Loglog => "loglog",
            Link::Log => "log",
            Link::BoxCox { .. } => "boxcox",
            Link::Power { .. } => "power",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Link::Power { kappa } if kappa == 0.0 || !kappa.is_finite() => {
                Err(Error::invalid("link", "power link needs a finite kappa != 0"))
            }
            Link::BoxCox { lambda } if !lambda.is_finite() => {
                Err(Error::invalid("link", "boxcox lambda must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Checks that `eta` lies in the domain of the inverse link.
    pub fn check(&self, eta: f64) -> Result<()> {
        let ok = eta.is_finite()
            && match *self {
                Link::BoxCox { lambda } => lambda == 0.0 || 1.0 + lambda * eta >= ADMISSIBLE_FLOOR,
                Link::Power { .. } => eta >= ADMISSIBLE_FLOOR,
                _ => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::LinkDomain {
                link: self.name(),
                eta,
            })
        }
    }

    /// `g(mu)`.
    pub fn link(&self, mu: f64) -> f64 {
        match *self {
            Link::Identity => mu,
            Link::Logistic => (mu / (1.0 - mu)).ln(),
            Link::Probit => norm_quantile(mu),
            Link::Cloglog => (-(-mu).ln_1p()).ln(),
            Link::Loglog => (-mu.ln()).ln(),
            Link::Log => mu.ln(),
            Link::BoxCox { lambda: 0.0 } => mu.ln(),
            Link::BoxCox { lambda } => (mu.powf(lambda) - 1.0) / lambda,
            Link::Power { kappa } => mu.powf(kappa),
        }
    }

    /// `h(eta) = g^-1(eta)`.
    pub fn inverse(&self, eta: f64) -> Result<f64> {
        self.check(eta)?;
        Ok(match *self {
            Link::Identity => eta,
            Link::Logistic => sigmoid(eta),
            Link::Probit => norm_cdf(eta),
            Link::Cloglog => -(-eta.exp()).exp_m1(),
            Link::Loglog => (-eta.exp()).exp(),
            Link::Log => eta.exp(),
            Link::BoxCox { lambda: 0.0 } => eta.exp(),
            Link::BoxCox { lambda } => (1.0 + lambda * eta).powf(1.0 / lambda),
            Link::Power { kappa } => eta.powf(1.0 / kappa),
        })
    }

    /// `dmu/deta`.
    pub fn mu_eta(&self, eta: f64) -> Result<f64> {
        self.check(eta)?;
        Ok(match *self {
            Link::Identity => 1.0,
            Link::Logistic => logistic_variance(eta),
            Link::Probit => norm_pdf(eta),
            Link::Cloglog => (eta - eta.exp()).exp(),
            Link::Loglog => -(eta - eta.exp()).exp(),
            Link::Log => eta.exp(),
            Link::BoxCox { lambda: 0.0 } => eta.exp(),
            Link::BoxCox { lambda } => (1.0 + lambda * eta).powf(1.0 / lambda - 1.0),
            Link::Power { kappa } => eta.powf(1.0 / kappa - 1.0) / kappa,
        })
    }

    fn admissible_for(&self, family: FamilyKind) -> bool {
        use FamilyKind::*;
        matches!(
            (family, self),
            (Normal, Link::Identity)
                | (Binomial, Link::Logistic | Link::Probit | Link::Cloglog | Link::Loglog)
                | (Poisson, Link::Log)
                | (Gamma, Link::BoxCox { .. } | Link::Power { .. } | Link::Log)
        )
    }
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `mu (1 - mu)` at `mu = sigmoid(eta)`, without cancellation for large |eta|.
pub(crate) fn logistic_variance(eta: f64) -> f64 {
    let e = (-eta.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

pub(crate) fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `Phi^-1(p)`: an `erf_inv` start polished by Newton steps.
fn norm_quantile(p: f64) -> f64 {
    let mut x = statrs::function::erf::erf_inv(2.0 * p - 1.0) * SQRT_2;
    for _ in 0..3 {
        let d = norm_pdf(x);
        if !(d > 0.0) || !x.is_finite() {
            break;
        }
        x -= (norm_cdf(x) - p) / d;
    }
    x
}

/// `log Phi(x)`, finite far into the lower tail.
fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        // Mills-ratio expansion; erfc underflows near x = -38.
        let a = -x;
        let a2 = a * a;
        -0.5 * a2 - (2.0 * PI).sqrt().ln() - a.ln() + (1.0 - 1.0 / a2 + 3.0 / (a2 * a2)).ln()
    }
}

/// `log(expm1(t))` for `t > 0`.
fn log_expm1(t: f64) -> f64 {
    if t > 30.0 {
        t + (-(-t).exp()).ln_1p()
    } else {
        t.exp_m1().ln()
    }
}

/// GLM weight for a family/link pair at linear predictor `eta`, using a
/// closed form per link that stays finite (possibly underflowing to zero)
/// for extreme `eta`.
pub fn weight_at_eta(family: &Family, link: &Link, eta: f64) -> Result<f64> {
    link.check(eta)?;
    use FamilyKind::*;
    let u = match (family.kind, *link) {
        (Normal, Link::Identity) => 1.0,
        (Binomial, Link::Logistic) => logistic_variance(eta),
        (Binomial, Link::Probit) => {
            let log_u = -eta * eta - (2.0 * PI).ln() - log_norm_cdf(eta) - log_norm_cdf(-eta);
            log_u.exp()
        }
        // The log-log weight equals the cloglog weight at the same eta.
        (Binomial, Link::Cloglog | Link::Loglog) => {
            let t = eta.exp();
            if t < 1e-300 {
                t
            } else {
                (2.0 * eta - log_expm1(t)).exp()
            }
        }
        (Poisson, Link::Log) => eta.exp(),
        (Gamma, Link::Log) => 1.0,
        (Gamma, Link::BoxCox { lambda }) => {
            let s = 1.0 + lambda * eta;
            1.0 / (s * s)
        }
        (Gamma, Link::Power { kappa }) => 1.0 / (kappa * kappa * eta * eta),
        _ => {
            let mu = link.inverse(eta)?;
            let d = link.mu_eta(eta)?;
            let v = family.variance(mu);
            if v <= 0.0 {
                return Err(Error::MeanDomain {
                    family: family.name(),
                    mu,
                });
            }
            d * d / v
        }
    };
    if family.kind == Gamma && matches!(link, Link::Power { .. }) {
        let mu = link.inverse(eta)?;
        if mu <= 0.0 {
            return Err(Error::MeanDomain {
                family: family.name(),
                mu,
            });
        }
    }
    Ok(u)
}

/// One monomial term of a polynomial basis, stored as per-variable exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Term(pub Vec<u8>);

impl Term {
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn is_intercept(&self) -> bool {
        self.degree() == 0
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &v)| match e {
                0 => acc,
                1 => acc * v,
                _ => acc * v * v,
            })
    }
}

/// Ordered monomial terms `f(x)` of total degree at most two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct ModelBasis {
    k: usize,
    terms: Vec<Term>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum BasisRepr {
    FirstOrder { k: usize },
    SecondOrder { k: usize },
    Terms { k: usize, terms: Vec<Term> },
}

impl TryFrom<BasisRepr> for ModelBasis {
    type Error = Error;
    fn try_from(r: BasisRepr) -> Result<Self> {
        match r {
            BasisRepr::FirstOrder { k } => ModelBasis::first_order(k),
            BasisRepr::SecondOrder { k } => ModelBasis::second_order(k),
            BasisRepr::Terms { k, terms } => ModelBasis::from_terms(k, terms),
        }
    }
}

impl From<ModelBasis> for BasisRepr {
    fn from(b: ModelBasis) -> Self {
        if b.is_first_order() {
            BasisRepr::FirstOrder { k: b.k }
        } else if b == ModelBasis::second_order(b.k).expect("k >= 1") {
            BasisRepr::SecondOrder { k: b.k }
        } else {
            BasisRepr::Terms {
                k: b.k,
                terms: b.terms,
            }
        }
    }
}

impl ModelBasis {
    pub fn from_terms(k: usize, terms: Vec<Term>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("basis", "needs k >= 1"));
        }
        if terms.is_empty() {
            return Err(Error::invalid("basis", "needs at least one term"));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.0.len() != k {
                return Err(Error::invalid(
                    "basis",
                    format!("term {i} has {} exponents for k = {k}", t.0.len()),
                ));
            }
            if t.0.iter().any(|&e| e > 2) || t.degree() > 2 {
                return Err(Error::invalid("basis", format!("term {i} has degree above 2")));
            }
            if terms[..i].contains(t) {
                return Err(Error::invalid("basis", format!("term {i} is repeated")));
            }
            if i > 0 && t.is_intercept() {
                return Err(Error::invalid("basis", "the intercept must be the first term"));
            }
        }
        Ok(ModelBasis { k, terms })
    }

    /// `(1, x_1, ..., x_k)`.
    pub fn first_order(k: usize) -> Result<Self> {
        let mut terms = vec![Term(vec![0; k])];
        terms.extend((0..k).map(|j| unit_term(k, &[j])));
        Self::from_terms(k, terms)
    }

    /// `(1, x_1..x_k, x_i x_j for i < j in lexicographic order, x_1^2..x_k^2)`.
    pub fn second_order(k: usize) -> Result<Self> {
        let mut terms = vec![Term(vec![0; k])];
        terms.extend((0..k).map(|j| unit_term(k, &[j])));
        for i in 0..k {
            for j in i + 1..k {
                terms.push(unit_term(k, &[i, j]));
            }
        }
        terms.extend((0..k).map(|j| unit_term(k, &[j, j])));
        Self::from_terms(k, terms)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn has_intercept(&self) -> bool {
        self.terms[0].is_intercept()
    }

    pub fn is_first_order(&self) -> bool {
        self.k >= 1 && *self == Self::first_order(self.k).expect("k >= 1")
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut f = vec![0.0; self.p()];
        self.eval_into(x, &mut f)?;
        Ok(f)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.k {
            return Err(Error::Dimension {
                expected: self.k,
                got: x.len(),
            });
        }
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(x);
        }
        Ok(())
    }
}

fn unit_term(k: usize, vars: &[usize]) -> Term {
    let mut e = vec![0u8; k];
    for &v in vars {
        e[v] += 1;
    }
    Term(e)
}

/// Parameter vector aligned with the terms of a [`ModelBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn for_basis(basis: &ModelBasis, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != basis.p() {
            return Err(Error::Dimension {
                expected: basis.p(),
                got: theta.len(),
            });
        }
        Ok(ParameterVector(theta))
    }
}

impl std::ops::Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Family, link, basis and region of a GLM design problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct ModelSpec {
    family: Family,
    link: Link,
    basis: ModelBasis,
    region: DesignRegion,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    family: Family,
    link: Link,
    basis: ModelBasis,
    region: DesignRegion,
}

impl TryFrom<ModelRepr> for ModelSpec {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        ModelSpec::new(r.family, r.link, r.basis, r.region)
    }
}

impl From<ModelSpec> for ModelRepr {
    fn from(m: ModelSpec) -> Self {
        ModelRepr {
            family: m.family,
            link: m.link,
            basis: m.basis,
            region: m.region,
        }
    }
}

impl ModelSpec {
    pub fn new(family: Family, link: Link, basis: ModelBasis, region: DesignRegion) -> Result<Self> {
        link.validate()?;
        if !link.admissible_for(family.kind) {
            return Err(Error::Inadmissible {
                family: family.name(),
                link: link.name(),
            });
        }
        if !(family.dispersion > 0.0 && family.dispersion.is_finite()) {
            return Err(Error::invalid("family", "dispersion must be positive"));
        }
        if basis.k() != region.k() {
            return Err(Error::Dimension {
                expected: basis.k(),
                got: region.k(),
            });
        }
        Ok(ModelSpec {
            family,
            link,
            basis,
            region,
        })
    }

    /// Logistic regression with a first-order predictor.
    pub fn logistic_first_order(region: DesignRegion) -> Result<Self> {
        let k = region.k();
        Self::new(
            Family::new(FamilyKind::Binomial),
            Link::Logistic,
            ModelBasis::first_order(k)?,
            region,
        )
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn basis(&self) -> &ModelBasis {
        &self.basis
    }

    pub fn region(&self) -> &DesignRegion {
        &self.region
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn p(&self) -> usize {
        self.basis.p()
    }

    pub fn with_region(&self, region: DesignRegion) -> Result<Self> {
        Self::new(self.family, self.link, self.basis.clone(), region)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::Dimension {
                expected: self.p(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    pub fn eta(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        let f = self.basis.eval(x)?;
        self.check_theta(theta)?;
        Ok(dot(theta, &f))
    }

    pub fn mean(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.link.inverse(self.eta(theta, x)?)
    }

    /// Fills `f` with `f(x)` and returns `u(x)`.
    pub fn weight_into(&self, theta: &[f64], x: &[f64], f: &mut [f64]) -> Result<f64> {
        self.basis.eval_into(x, f)?;
        self.check_theta(theta)?;
        weight_at_eta(&self.family, &self.link, dot(theta, f))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f(x)` for the basis.
pub fn eval_basis(basis: &ModelBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.eval(x)
}

/// `mu = g^-1(eta)`.
pub fn inverse_link(link: &Link, eta: f64) -> Result<f64> {
    link.inverse(eta)
}

/// GLM weight `u(x)` at parameter `theta`.
pub fn glm_weight(model: &ModelSpec, theta: &[f64], x: &[f64]) -> Result<f64> {
    let mut f = vec![0.0; model.p()];
    model.weight_into(theta, x, &mut f)
}

/// Image of `x` in the induced design region, `(sqrt(u), sqrt(u) x_1, ..., sqrt(u) x_k)`.
/// Only defined for first-order predictors.
pub fn induced_point(model: &ModelSpec, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if !model.basis().is_first_order() {
        return Err(Error::Unsupported(
            "induced design region needs a first-order basis".into(),
        ));
    }
    let s = glm_weight(model, theta, x)?.sqrt();
    Ok(std::iter::once(s).chain(x.iter().map(|v| s * v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(l: f64, u: f64) -> DesignRegion {
        DesignRegion::cube(1, l, u).unwrap()
    }

    fn model(family: FamilyKind, link: Link, k: usize) -> ModelSpec {
        ModelSpec::new(
            Family::new(family),
            link,
            ModelBasis::first_order(k).unwrap(),
            DesignRegion::cube(k, -1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn basis_evaluation() {
        let b1 = ModelBasis::first_order(2).unwrap();
        assert_eq!(b1.eval(&[0.3, -2.0]).unwrap(), vec![1.0, 0.3, -2.0]);
        let b2 = ModelBasis::second_order(2).unwrap();
        assert_eq!(b2.eval(&[1.0, -1.0]).unwrap(), vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0]);
        let z = b2.eval(&[0.0, 0.0]).unwrap();
        assert_eq!(z, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(ModelBasis::second_order(3).unwrap().p(), 10);
        assert!(matches!(b1.eval(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn second_order_term_order_is_lexicographic() {
        let b = ModelBasis::second_order(3).unwrap();
        let x = [2.0, 3.0, 5.0];
        assert_eq!(
            b.eval(&x).unwrap(),
            vec![1.0, 2.0, 3.0, 5.0, 6.0, 10.0, 15.0, 4.0, 9.0, 25.0]
        );
    }

    #[test]
    fn basis_rejects_bad_terms() {
        assert!(ModelBasis::from_terms(1, vec![Term(vec![3])]).is_err());
        assert!(ModelBasis::from_terms(2, vec![Term(vec![0, 0]), Term(vec![2, 1])]).is_err());
        assert!(ModelBasis::from_terms(1, vec![Term(vec![1]), Term(vec![0])]).is_err());
        assert!(ModelBasis::from_terms(1, vec![Term(vec![0]), Term(vec![0])]).is_err());
    }

    #[test]
    fn inverse_link_examples() {
        assert_eq!(inverse_link(&Link::Logistic, 0.0).unwrap(), 0.5);
        let mu = inverse_link(&Link::Logistic, 1.5434).unwrap();
        assert!((mu - 0.824).abs() < 5e-4, "{mu}");
        let mu = inverse_link(&Link::BoxCox { lambda: 0.5 }, 2.0).unwrap();
        assert!((mu - 4.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_link_roundtrips() {
        let links = [
            (Link::Identity, 0.7),
            (Link::Logistic, -2.3),
            (Link::Probit, 1.1),
            (Link::Cloglog, 0.4),
            (Link::Loglog, -0.6),
            (Link::Log, 2.2),
            (Link::BoxCox { lambda: 0.5 }, 2.0),
            (Link::BoxCox { lambda: 0.0 }, -1.0),
            (Link::Power { kappa: 0.5 }, 3.0),
        ];
        for (link, eta) in links {
            let mu = link.inverse(eta).unwrap();
            let back = link.link(mu);
            assert!((back - eta).abs() <= 1e-12 * eta.abs().max(1.0), "{link:?}: {back} vs {eta}");
        }
    }

    #[test]
    fn domain_errors_name_the_link() {
        let e = Link::BoxCox { lambda: 1.0 }.inverse(-2.0).unwrap_err();
        assert_eq!(
            e,
            Error::LinkDomain {
                link: "boxcox",
                eta: -2.0
            }
        );
        assert!(Link::Power { kappa: 2.0 }.inverse(0.0).is_err());
        assert!(Link::Power { kappa: 2.0 }.inverse(1e-12).is_ok());
    }

    #[test]
    fn admissible_family_link_pairs() {
        let b = ModelBasis::first_order(1).unwrap();
        let bad = ModelSpec::new(Family::new(FamilyKind::Poisson), Link::Logistic, b.clone(), line(-1.0, 1.0));
        assert!(matches!(bad, Err(Error::Inadmissible { .. })));
        let bad = ModelSpec::new(Family::new(FamilyKind::Gamma), Link::Power { kappa: 0.0 }, b, line(-1.0, 1.0));
        assert!(bad.is_err());
    }

    #[test]
    fn weight_examples() {
        let logit = model(FamilyKind::Binomial, Link::Logistic, 1);
        assert_eq!(glm_weight(&logit, &[0.0, 1.0], &[0.0]).unwrap(), 0.25);

        // phi(0)^2 / 0.25 = 2 / pi
        let probit = model(FamilyKind::Binomial, Link::Probit, 1);
        let u = glm_weight(&probit, &[0.0, 1.0], &[0.0]).unwrap();
        assert!((u - 2.0 / PI).abs() < 1e-12);

        let gamma_log = model(FamilyKind::Gamma, Link::BoxCox { lambda: 0.0 }, 1);
        for x in [-1.0, 0.3, 1.0] {
            assert_eq!(glm_weight(&gamma_log, &[0.2, -3.0], &[x]).unwrap(), 1.0);
        }

        let pois = model(FamilyKind::Poisson, Link::Log, 1);
        let u = glm_weight(&pois, &[1.0, 0.0], &[0.5]).unwrap();
        assert!((u - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn weights_match_generic_formula() {
        // u = (dmu/deta)^2 / V(mu) evaluated from the generic pieces.
        let cases = [
            (FamilyKind::Binomial, Link::Logistic),
            (FamilyKind::Binomial, Link::Probit),
            (FamilyKind::Binomial, Link::Cloglog),
            (FamilyKind::Binomial, Link::Loglog),
            (FamilyKind::Poisson, Link::Log),
            (FamilyKind::Gamma, Link::BoxCox { lambda: 0.7 }),
            (FamilyKind::Gamma, Link::Power { kappa: 0.5 }),
            (FamilyKind::Gamma, Link::Log),
            (FamilyKind::Normal, Link::Identity),
        ];
        for (fam, link) in cases {
            let family = Family::new(fam);
            for eta in [0.3, 1.0, 2.5, 4.0] {
                let mu = link.inverse(eta).unwrap();
                let d = link.mu_eta(eta).unwrap();
                let expect = d * d / family.variance(mu);
                let got = weight_at_eta(&family, &link, eta).unwrap();
                assert!((got - expect).abs() <= 1e-10 * expect, "{link:?} eta={eta}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn extreme_eta_does_not_overflow() {
        let fam = Family::new(FamilyKind::Binomial);
        for link in [Link::Logistic, Link::Probit, Link::Cloglog, Link::Loglog] {
            for eta in [-800.0, -30.0, 30.0, 800.0] {
                let u = weight_at_eta(&fam, &link, eta).unwrap();
                assert!(u.is_finite() && u >= 0.0, "{link:?} at {eta}: {u}");
                assert!(u < 1e-10, "{link:?} at {eta}: {u}");
            }
        }
    }

    #[test]
    fn induced_point_examples() {
        let m = ModelSpec::logistic_first_order(line(-6.0, 6.0)).unwrap();
        let z = induced_point(&m, &[0.0, 1.0], &[1.5434]).unwrap();
        // Oracle: mu = 1/(1+e^-1.5434), u = mu(1-mu), z = sqrt(u) (1, x).
        let mu = 1.0 / (1.0 + (-1.5434f64).exp());
        let s = (mu * (1.0 - mu)).sqrt();
        assert!((z[0] - s).abs() < 1e-14 && (z[1] - 1.5434 * s).abs() < 1e-14);
        // The quoted (0.38082, 0.58776) rounds mu to 0.824 first.
        assert!((z[0] - 0.38082).abs() < 1e-4 && (z[1] - 0.58776).abs() < 1e-4);

        let z0 = induced_point(&m, &[0.0, 1.0], &[0.0]).unwrap();
        assert_eq!(z0, vec![0.5, 0.0]);

        let gamma_log = model(FamilyKind::Gamma, Link::Log, 2);
        let z = induced_point(&gamma_log, &[1.0, 2.0, 3.0], &[0.4, -0.2]).unwrap();
        assert_eq!(z, vec![1.0, 0.4, -0.2]);

        let quad = ModelSpec::new(
            Family::new(FamilyKind::Binomial),
            Link::Logistic,
            ModelBasis::second_order(1).unwrap(),
            line(-1.0, 1.0),
        )
        .unwrap();
        assert!(matches!(induced_point(&quad, &[0.0, 1.0, 1.0], &[0.2]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn serde_model_spec() {
        let json = r#"{"family":{"kind":"gamma"},"link":{"kind":"power","kappa":0.5},
            "basis":{"kind":"second_order","k":2},"region":{"bounds":[[-1,1],[-1,1]]}}"#;
        let m: ModelSpec = serde_json::from_str(json).unwrap();
        assert_eq!(m.p(), 6);
        let bad = r#"{"family":{"kind":"poisson"},"link":{"kind":"logistic"},
            "basis":{"kind":"first_order","k":1},"region":{"bounds":[[-1,1]]}}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).is_err());
    }
}
