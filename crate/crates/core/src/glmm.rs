//! Block designs for random-intercept GLMMs under quasi-likelihood style
//! approximations to the block information matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::{self, ContinuousDesign, Criterion, EquivalenceReport, InformationMatrix, Sensitivity};
use crate::error::{Error, Result};
use crate::glm::{self, FamilyKind, Link, ModelSpec};
use crate::grid::GridSpec;
use crate::linalg::{self, Cholesky};
use crate::optimize::{self, ContinuousOptOptions};
use crate::region::DesignRegion;

/// Gauss-Hermite order for marginal moments and the direct binary information.
pub const GH_ORDER: usize = 32;

/// GLM with a `N(0, sigma2)` intercept shared by the `m` runs of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RimRepr", into = "RimRepr")]
pub struct RandomInterceptModel {
    base: ModelSpec,
    sigma2: f64,
    m: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RimRepr {
    base: ModelSpec,
    sigma2: f64,
    m: usize,
}

impl TryFrom<RimRepr> for RandomInterceptModel {
    type Error = Error;
    fn try_from(r: RimRepr) -> Result<Self> {
        RandomInterceptModel::new(r.base, r.sigma2, r.m)
    }
}

impl From<RandomInterceptModel> for RimRepr {
    fn from(m: RandomInterceptModel) -> Self {
        RimRepr {
            base: m.base,
            sigma2: m.sigma2,
            m: m.m,
        }
    }
}

impl RandomInterceptModel {
    pub fn new(base: ModelSpec, sigma2: f64, m: usize) -> Result<Self> {
        let ok = matches!(
            (base.family().kind, base.link()),
            (FamilyKind::Poisson, Link::Log) | (FamilyKind::Binomial, Link::Logistic)
        );
        if !ok {
            return Err(Error::Unsupported(format!(
                "random-intercept models need poisson/log or binomial/logistic, got {}/{}",
                base.family().name(),
                base.link().name()
            )));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid("sigma2", "must be finite and nonnegative"));
        }
        if m == 0 {
            return Err(Error::invalid("m", "block size must be at least 1"));
        }
        Ok(RandomInterceptModel { base, sigma2, m })
    }

    pub fn base(&self) -> &ModelSpec {
        &self.base
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.base.p()
    }

    /// `X^m` as one region of dimension `m k`.
    pub fn block_region(&self) -> Result<DesignRegion> {
        let r = self.base.region();
        DesignRegion::new((0..self.m).flat_map(|_| (0..r.k()).map(|j| r.bound(j))).collect())
    }
}

/// Intra-block working correlation for GEE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkingCorrelation {
    Exchangeable { alpha: f64 },
    Matrix { r: Vec<Vec<f64>> },
}

impl WorkingCorrelation {
    pub fn matrix(&self, m: usize) -> Result<DMatrix<f64>> {
        let r = match self {
            WorkingCorrelation::Exchangeable { alpha } => {
                DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { *alpha })
            }
            WorkingCorrelation::Matrix { r } => {
                if r.len() != m || r.iter().any(|row| row.len() != m) {
                    return Err(Error::invalid("working correlation", format!("must be {m} x {m}")));
                }
                DMatrix::from_fn(m, m, |i, j| r[i][j])
            }
        };
        for i in 0..m {
            if (r[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("working correlation", "diagonal must be 1"));
            }
            for j in 0..i {
                if (r[(i, j)] - r[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid("working correlation", "must be symmetric"));
                }
            }
        }
        Cholesky::new(&r).map_err(|_| Error::invalid("working correlation", "must be positive definite"))?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Marginal mean and covariance of the response.
    Ql,
    /// Linear mixed model approximation at the conditional mean.
    Mql,
    /// Independent variances at the conditional mean joined by a working correlation.
    Gee { working: WorkingCorrelation },
}

impl Method {
    pub fn gee_exchangeable(alpha: f64) -> Self {
        Method::Gee {
            working: WorkingCorrelation::Exchangeable { alpha },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ql => "ql",
            Method::Mql => "mql",
            Method::Gee { .. } => "gee",
        }
    }
}

/// Probabilists' Gauss-Hermite rule for `E f(Z)`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch on the Jacobi matrix of the Hermite polynomials.
    pub fn new(order: usize) -> Self {
        let j = DMatrix::from_fn(order, order, |a, b| {
            if a + 1 == b || b + 1 == a {
                (a.max(b) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }
}

/// Regressor rows and linear predictors of a block.
fn block_rows(zeta: &[Vec<f64>], model: &RandomInterceptModel, theta: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = model.p();
    if zeta.len() != model.m {
        return Err(Error::Dimension {
            expected: model.m,
            got: zeta.len(),
        });
    }
    if theta.len() != p {
        return Err(Error::Dimension { expected: p, got: theta.len() });
    }
    let mut x = DMatrix::zeros(zeta.len(), p);
    let mut eta = Vec::with_capacity(zeta.len());
    let mut f = vec![0.0; p];
    for (i, z) in zeta.iter().enumerate() {
        model.base.basis().eval_into(z, &mut f).map_err(|e| e.at_point(i))?;
        for (j, v) in f.iter().enumerate() {
            x[(i, j)] = *v;
        }
        eta.push(glm::dot(theta, &f));
    }
    Ok((x, eta))
}

/// `(Delta, V)` of a block under the method's approximation.
fn moments(
    eta: &[f64],
    model: &RandomInterceptModel,
    method: &Method,
    gh: &GaussHermite,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = eta.len();
    let s2 = model.sigma2;
    let poisson = model.base.family().kind == FamilyKind::Poisson;
    let cond_var = |e: f64| if poisson { e.exp() } else { glm::logistic_variance(e) };
    match method {
        Method::Ql => {
            if poisson {
                let mu: Vec<f64> = eta.iter().map(|e| (e + 0.5 * s2).exp()).collect();
                let c = s2.exp_m1();
                let v = DMatrix::from_fn(m, m, |i, j| c * mu[i] * mu[j] + if i == j { mu[i] } else { 0.0 });
                Ok((mu, v))
            } else {
                let s = s2.sqrt();
                let mut mu = vec![0.0; m];
                let mut delta = vec![0.0; m];
                let mut second = DMatrix::<f64>::zeros(m, m);
                let mut h = vec![0.0; m];
                for (z, w) in gh.nodes.iter().zip(&gh.weights) {
                    for i in 0..m {
                        h[i] = glm::sigmoid(eta[i] + s * z);
                        mu[i] += w * h[i];
                        delta[i] += w * h[i] * (1.0 - h[i]);
                    }
                    for i in 0..m {
                        for j in 0..m {
                            second[(i, j)] += w * if i == j { h[i] } else { h[i] * h[j] };
                        }
                    }
                }
                let v = DMatrix::from_fn(m, m, |i, j| second[(i, j)] - mu[i] * mu[j]);
                Ok((delta, v))
            }
        }
        Method::Mql => {
            let delta: Vec<f64> = eta.iter().map(|&e| cond_var(e)).collect();
            let v = DMatrix::from_fn(m, m, |i, j| s2 * delta[i] * delta[j] + if i == j { cond_var(eta[i]) } else { 0.0 });
            Ok((delta, v))
        }
        Method::Gee { working } => {
            let r = working.matrix(m)?;
            let d: Vec<f64> = eta.iter().map(|&e| cond_var(e).sqrt()).collect();
            let delta: Vec<f64> = eta.iter().map(|&e| cond_var(e)).collect();
            let v = DMatrix::from_fn(m, m, |i, j| d[i] * r[(i, j)] * d[j]);
            Ok((delta, v))
        }
    }
}

fn block_info_with(
    zeta: &[Vec<f64>],
    model: &RandomInterceptModel,
    theta: &[f64],
    method: &Method,
    gh: &GaussHermite,
) -> Result<DMatrix<f64>> {
    let (x, eta) = block_rows(zeta, model, theta)?;
    let (delta, v) = moments(&eta, model, method, gh)?;
    if delta.iter().chain(v.iter()).any(|d| !d.is_finite()) {
        return Err(Error::Singular);
    }
    let vi = Cholesky::new(&v)?.inverse();
    let dx = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| delta[i] * x[(i, j)]);
    let mut out = dx.transpose() * vi * dx;
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// `M = X' Delta V^-1 Delta X` for one block.
pub fn block_info_matrix(
    zeta: &[Vec<f64>],
    model: &RandomInterceptModel,
    theta: &[f64],
    method: &Method,
) -> Result<InformationMatrix> {
    InformationMatrix::new(block_info_with(zeta, model, theta, method, &GaussHermite::new(GH_ORDER))?)
}

/// Weighted blocks of `m` points each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockRepr", into = "BlockRepr")]
pub struct BlockDesign {
    blocks: Vec<Vec<Vec<f64>>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRepr {
    blocks: Vec<Vec<Vec<f64>>>,
    weights: Vec<f64>,
}

impl TryFrom<BlockRepr> for BlockDesign {
    type Error = Error;
    fn try_from(r: BlockRepr) -> Result<Self> {
        BlockDesign::new(r.blocks, r.weights)
    }
}

impl From<BlockDesign> for BlockRepr {
    fn from(d: BlockDesign) -> Self {
        BlockRepr {
            blocks: d.blocks,
            weights: d.weights,
        }
    }
}

impl BlockDesign {
    /// Points within each block are stored in lexicographic order.
    pub fn new(mut blocks: Vec<Vec<Vec<f64>>>, weights: Vec<f64>) -> Result<Self> {
        let m = blocks.first().map_or(0, Vec::len);
        if m == 0 || blocks.iter().any(|b| b.len() != m) {
            return Err(Error::invalid("block design", "blocks must share one positive size"));
        }
        let k = blocks[0][0].len();
        if blocks.iter().flatten().any(|x| x.len() != k) {
            return Err(Error::invalid("block design", "points must share one dimension"));
        }
        for b in blocks.iter_mut() {
            b.sort_by(|a, c| design::lex_cmp(a, c));
        }
        // Reuse the continuous-design weight checks on the flattened blocks.
        let flat: Vec<Vec<f64>> = blocks.iter().map(|b| b.concat()).collect();
        ContinuousDesign::new(flat, weights.clone())?;
        Ok(BlockDesign { blocks, weights })
    }

    pub fn blocks(&self) -> &[Vec<Vec<f64>>] {
        &self.blocks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn m(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn k(&self) -> usize {
        self.blocks[0][0].len()
    }

    /// Each block flattened to one unit of `m k` coordinates.
    pub fn to_units(&self) -> ContinuousDesign {
        ContinuousDesign::new(self.blocks.iter().map(|b| b.concat()).collect(), self.weights.clone())
            .expect("validated on construction")
    }

    pub fn from_units(d: &ContinuousDesign, k: usize) -> Result<Self> {
        let blocks = d.points().iter().map(|u| u.chunks(k).map(<[f64]>::to_vec).collect()).collect();
        BlockDesign::new(blocks, d.weights().to_vec())
    }

    pub fn check_region(&self, region: &DesignRegion) -> Result<()> {
        for (l, b) in self.blocks.iter().enumerate() {
            if b.iter().any(|x| !region.contains(x)) {
                return Err(Error::invalid("block design", format!("block {l} leaves the region")));
            }
        }
        Ok(())
    }
}

/// D-criterion whose units are whole blocks.
#[derive(Debug, Clone)]
pub struct BlockCriterion {
    model: RandomInterceptModel,
    theta: Vec<f64>,
    method: Method,
    gh: GaussHermite,
    region: DesignRegion,
    one: [f64; 1],
}

impl BlockCriterion {
    pub fn new(model: &RandomInterceptModel, theta: &[f64], method: &Method) -> Result<Self> {
        if theta.len() != model.p() {
            return Err(Error::Dimension {
                expected: model.p(),
                got: theta.len(),
            });
        }
        if let Method::Gee { working } = method {
            working.matrix(model.m)?;
        }
        Ok(BlockCriterion {
            model: model.clone(),
            theta: theta.to_vec(),
            method: method.clone(),
            gh: GaussHermite::new(GH_ORDER),
            region: model.block_region()?,
            one: [1.0],
        })
    }

    fn split(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.chunks(self.model.base.k()).map(<[f64]>::to_vec).collect()
    }
}

impl Criterion for BlockCriterion {
    fn p(&self) -> usize {
        self.model.p()
    }

    fn unit_region(&self) -> DesignRegion {
        self.region.clone()
    }

    fn draw_weights(&self) -> &[f64] {
        &self.one
    }

    fn add_unit_info(&self, _draw: usize, x: &[f64], w: f64, m: &mut DMatrix<f64>) -> Result<()> {
        let b = block_info_with(&self.split(x), &self.model, &self.theta, &self.method, &self.gh)?;
        *m += b * w;
        Ok(())
    }

    fn canonicalize(&self, x: &mut [f64]) {
        let k = self.model.base.k();
        let mut pts = self.split(x);
        pts.sort_by(|a, b| design::lex_cmp(a, b));
        for (dst, src) in x.chunks_mut(k).zip(pts) {
            dst.copy_from_slice(&src);
        }
    }

    fn is_canonical(&self, x: &[f64]) -> bool {
        let k = self.model.base.k();
        x.chunks(k).zip(x.chunks(k).skip(1)).all(|(a, b)| design::lex_cmp(a, b).is_le())
    }

    fn min_support(&self) -> usize {
        self.model.p().div_ceil(self.model.m)
    }
}

/// `M(xi) = sum_l w_l M(zeta_l)`.
pub fn block_design_info(
    xi: &BlockDesign,
    model: &RandomInterceptModel,
    theta: &[f64],
    method: &Method,
) -> Result<InformationMatrix> {
    let c = BlockCriterion::new(model, theta, method)?;
    let mut ms = design::info_matrices(&c, &xi.to_units())?;
    InformationMatrix::new(ms.pop().expect("one draw"))
}

/// `psi(zeta) = p - trace(M(zeta) M^-1(xi))`.
pub fn mv_sensitivity(
    zeta: &[Vec<f64>],
    xi: &BlockDesign,
    model: &RandomInterceptModel,
    theta: &[f64],
    method: &Method,
) -> Result<f64> {
    let c = BlockCriterion::new(model, theta, method)?;
    Sensitivity::new(&c, &xi.to_units())?.psi(&zeta.concat())
}

/// Default grid for block scans: step 0.02 on every coordinate of `X^m`.
pub fn block_grid() -> GridSpec {
    GridSpec {
        step: 0.02,
        max_tensor_dim: 2,
        ..GridSpec::default()
    }
}

pub fn block_equivalence_check(
    xi: &BlockDesign,
    model: &RandomInterceptModel,
    theta: &[f64],
    method: &Method,
    spec: &GridSpec,
) -> Result<EquivalenceReport> {
    let c = BlockCriterion::new(model, theta, method)?;
    design::equivalence_check(&c, &xi.to_units(), spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub design: BlockDesign,
    pub objective: f64,
    pub report: EquivalenceReport,
}

pub fn optimize_block_design(
    model: &RandomInterceptModel,
    theta: &[f64],
    method: &Method,
    opts: &ContinuousOptOptions,
) -> Result<BlockResult> {
    if !model.base.region().is_bounded() {
        return Err(Error::Precondition("block designs need a bounded region".into()));
    }
    let c = BlockCriterion::new(model, theta, method)?;
    let r = optimize::optimize_criterion(&c, opts)?;
    Ok(BlockResult {
        design: BlockDesign::from_units(&r.design, model.base.k())?,
        objective: r.objective,
        report: r.report,
    })
}

/// Relative efficiency `det M(a) / det M(b)` under one method, and its `1/p` power.
pub fn block_efficiency(
    a: &BlockDesign,
    b: &BlockDesign,
    model: &RandomInterceptModel,
    theta: &[f64],
    method: &Method,
) -> Result<(f64, f64)> {
    let c = BlockCriterion::new(model, theta, method)?;
    let e = design::criterion_efficiency(&c, &a.to_units(), &b.to_units())?;
    Ok((e.powi(model.p() as i32), e))
}

/// Exact expected information for binary responses in one block, by
/// enumerating `{0,1}^m` with Gauss-Hermite marginal likelihoods.
pub fn direct_binary_block_info(
    zeta: &[Vec<f64>],
    model: &RandomInterceptModel,
    theta: &[f64],
    order: usize,
) -> Result<InformationMatrix> {
    if model.base.family().kind != FamilyKind::Binomial {
        return Err(Error::Unsupported("direct information is for binary responses".into()));
    }
    if model.m > 3 {
        return Err(Error::Unsupported(format!("block size {} exceeds 3", model.m)));
    }
    if order == 0 {
        return Err(Error::invalid("quadrature order", "must be positive"));
    }
    let (x, _) = block_rows(zeta, model, theta)?;
    let gh = GaussHermite::new(order);
    let m = model.m;
    let p = model.p();
    let s = model.sigma2.sqrt();
    // Marginal probability of y and its score in theta.
    let prob_score = |th: &[f64], y: usize| -> (f64, Vec<f64>) {
        let eta: Vec<f64> = (0..m).map(|i| (0..p).map(|j| x[(i, j)] * th[j]).sum()).collect();
        let mut prob = 0.0;
        let mut score = vec![0.0; p];
        for (z, w) in gh.nodes.iter().zip(&gh.weights) {
            let mut lik = 1.0;
            let mut resid = vec![0.0; m];
            for i in 0..m {
                let h = glm::sigmoid(eta[i] + s * z);
                let yi = ((y >> i) & 1) as f64;
                lik *= if yi == 1.0 { h } else { 1.0 - h };
                resid[i] = yi - h;
            }
            prob += w * lik;
            for j in 0..p {
                score[j] += w * lik * (0..m).map(|i| resid[i] * x[(i, j)]).sum::<f64>();
            }
        }
        (prob, score.into_iter().map(|v| v / prob).collect())
    };
    let step = 1e-5;
    let mut info = DMatrix::zeros(p, p);
    for y in 0..(1usize << m) {
        let (prob, _) = prob_score(theta, y);
        for j in 0..p {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[j] += step;
            tm[j] -= step;
            let (_, sp) = prob_score(&tp, y);
            let (_, sm) = prob_score(&tm, y);
            for i in 0..p {
                info[(i, j)] -= prob * (sp[i] - sm[i]) / (2.0 * step);
            }
        }
    }
    linalg::symmetrize(&mut info);
    InformationMatrix::new(info)
}
