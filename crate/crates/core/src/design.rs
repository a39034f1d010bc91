//! Continuous and exact designs, information matrices, the D-criterion and
//! its equivalence-theorem certificate.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::ModelSpec;
use crate::grid::{self, GridSpec, PointSet};
use crate::linalg::{self, Cholesky};
use crate::region::DesignRegion;

/// Points closer than this (after scaling each axis to unit length) are merged.
pub const MERGE_RADIUS: f64 = 1e-3;
/// Support points lighter than this are dropped before renormalizing.
pub const WEIGHT_FLOOR: f64 = 1e-4;
/// Allowed deviation of user-supplied weights from summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Equivalence tolerance on `psi` for a `p`-parameter model.
pub fn tol_eq(p: usize) -> f64 {
    1e-3 * p as f64
}

/// Support-size bound `p(p+1)/2 + 1`.
pub fn caratheodory_bound(p: usize) -> usize {
    p * (p + 1) / 2 + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignRepr", into = "DesignRepr")]
pub struct ContinuousDesign {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignRepr {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<DesignRepr> for ContinuousDesign {
    type Error = Error;
    fn try_from(r: DesignRepr) -> Result<Self> {
        ContinuousDesign::new(r.points, r.weights)
    }
}

impl From<ContinuousDesign> for DesignRepr {
    fn from(d: ContinuousDesign) -> Self {
        DesignRepr {
            points: d.points,
            weights: d.weights,
        }
    }
}

impl ContinuousDesign {
    /// Weights must be positive and sum to one within [`WEIGHT_SUM_TOL`].
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("design", "needs at least one support point"));
        }
        if points.len() != weights.len() {
            return Err(Error::invalid(
                "design",
                format!("{} points but {} weights", points.len(), weights.len()),
            ));
        }
        let k = points[0].len();
        if k == 0 || points.iter().any(|x| x.len() != k) {
            return Err(Error::invalid("design", "points must share one positive dimension"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design", "coordinates must be finite"));
        }
        if let Some(i) = weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("design", format!("weight {i} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(
                "design",
                format!("weights must sum to 1, got {total}"),
            ));
        }
        Ok(ContinuousDesign { points, weights })
    }

    /// Rescales arbitrary positive weights to sum to one.
    pub fn normalized(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("design", "weights must have a positive total"));
        }
        Self::new(points, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn equally_weighted(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_size(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// Support points in lexicographic order.
    pub fn sorted(&self) -> Self {
        let mut pairs: Vec<(Vec<f64>, f64)> = self.points.iter().cloned().zip(self.weights.iter().copied()).collect();
        pairs.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let (points, weights) = pairs.into_iter().unzip();
        ContinuousDesign { points, weights }
    }

    pub fn check_region(&self, region: &DesignRegion) -> Result<()> {
        for (i, x) in self.points.iter().enumerate() {
            if x.len() != region.k() {
                return Err(Error::Dimension {
                    expected: region.k(),
                    got: x.len(),
                });
            }
            if !region.contains(x) {
                return Err(Error::invalid("design", format!("point {i} lies outside the region")));
            }
        }
        Ok(())
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// `n` trials as distinct points with replication counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExactRepr", into = "ExactRepr")]
pub struct ExactDesign {
    points: Vec<Vec<f64>>,
    reps: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExactRepr {
    points: Vec<Vec<f64>>,
    reps: Vec<u32>,
}

impl TryFrom<ExactRepr> for ExactDesign {
    type Error = Error;
    fn try_from(r: ExactRepr) -> Result<Self> {
        ExactDesign::new(r.points, r.reps)
    }
}

impl From<ExactDesign> for ExactRepr {
    fn from(d: ExactDesign) -> Self {
        ExactRepr {
            points: d.points,
            reps: d.reps,
        }
    }
}

impl ExactDesign {
    pub fn new(points: Vec<Vec<f64>>, reps: Vec<u32>) -> Result<Self> {
        if points.is_empty() || points.len() != reps.len() {
            return Err(Error::invalid("exact design", "needs one positive count per point"));
        }
        if reps.contains(&0) {
            return Err(Error::invalid("exact design", "replication counts must be positive"));
        }
        let k = points[0].len();
        if k == 0 || points.iter().any(|x| x.len() != k) {
            return Err(Error::invalid("exact design", "points must share one positive dimension"));
        }
        Ok(ExactDesign { points, reps })
    }

    /// Groups identical trials; the result is sorted lexicographically.
    pub fn from_trials(mut trials: Vec<Vec<f64>>) -> Result<Self> {
        trials.sort_by(|a, b| lex_cmp(a, b));
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut reps = Vec::new();
        for t in trials {
            if points.last() == Some(&t) {
                *reps.last_mut().unwrap() += 1;
            } else {
                points.push(t);
                reps.push(1);
            }
        }
        Self::new(points, reps)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn reps(&self) -> &[u32] {
        &self.reps
    }

    pub fn n(&self) -> u32 {
        self.reps.iter().sum()
    }

    pub fn trials(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .zip(&self.reps)
            .flat_map(|(x, &r)| std::iter::repeat_n(x.clone(), r as usize))
            .collect()
    }

    /// Weights `n_i / n`.
    pub fn to_continuous(&self) -> ContinuousDesign {
        let n = self.n() as f64;
        ContinuousDesign {
            points: self.points.clone(),
            weights: self.reps.iter().map(|&r| r as f64 / n).collect(),
        }
    }
}

/// Symmetric positive semidefinite information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMatrix(DMatrix<f64>);

impl InformationMatrix {
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("information matrix", "must be square"));
        }
        let scale = m.abs().max().max(1.0);
        for i in 0..m.nrows() {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("information matrix", "must be symmetric"));
                }
            }
        }
        linalg::symmetrize(&mut m);
        Ok(InformationMatrix(m))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `log det M`, or `None` if singular.
    pub fn logdet(&self) -> Option<f64> {
        linalg::logdet(&self.0)
    }
}

/// `-log det M`; `+inf` when `M` is singular.
pub fn d_objective(m: &InformationMatrix) -> f64 {
    m.logdet().map_or(f64::INFINITY, |l| -l)
}

/// A D-criterion: a parameter-free unit space, a finite weighted set of
/// parameter draws, and the information each unit contributes under each draw.
/// A unit is a design point for ordinary GLMs and a whole block for mixed models.
pub trait Criterion: Sync {
    fn p(&self) -> usize;

    /// The space each unit ranges over.
    fn unit_region(&self) -> DesignRegion;

    /// Probability weights of the parameter draws.
    fn draw_weights(&self) -> &[f64];

    /// `m += w * M(x; theta_draw)`.
    fn add_unit_info(&self, draw: usize, x: &[f64], w: f64, m: &mut DMatrix<f64>) -> Result<()>;

    /// `trace(M(x; theta_draw) M^-1)` given the factor of `M`.
    fn unit_trace(&self, draw: usize, x: &[f64], chol: &Cholesky) -> Result<f64> {
        let mut mx = DMatrix::zeros(self.p(), self.p());
        self.add_unit_info(draw, x, 1.0, &mut mx)?;
        Ok(linalg::trace_product(&mx, &chol.inverse()))
    }

    /// Maps a unit to its representative under model symmetries.
    fn canonicalize(&self, _x: &mut [f64]) {}

    fn is_canonical(&self, _x: &[f64]) -> bool {
        true
    }

    /// Scan range for an unbounded axis of the unit region.
    fn informative_window(&self) -> Option<(f64, f64)> {
        None
    }

    fn n_draws(&self) -> usize {
        self.draw_weights().len()
    }

    /// Fewest units that can give a nonsingular information matrix.
    fn min_support(&self) -> usize {
        self.p()
    }
}

/// Ordinary GLM under a finite weighted set of parameter vectors
/// (a single vector for locally optimal design).
#[derive(Debug, Clone)]
pub struct GlmCriterion {
    model: ModelSpec,
    thetas: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl GlmCriterion {
    pub fn local(model: &ModelSpec, theta: &[f64]) -> Result<Self> {
        Self::weighted(model, vec![theta.to_vec()], vec![1.0])
    }

    pub fn weighted(model: &ModelSpec, thetas: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() || thetas.len() != weights.len() {
            return Err(Error::invalid("parameter sample", "needs one weight per draw"));
        }
        for t in &thetas {
            if t.len() != model.p() {
                return Err(Error::Dimension {
                    expected: model.p(),
                    got: t.len(),
                });
            }
        }
        Ok(GlmCriterion {
            model: model.clone(),
            thetas,
            weights,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }
}

impl Criterion for GlmCriterion {
    fn p(&self) -> usize {
        self.model.p()
    }

    fn unit_region(&self) -> DesignRegion {
        self.model.region().clone()
    }

    fn draw_weights(&self) -> &[f64] {
        &self.weights
    }

    fn add_unit_info(&self, draw: usize, x: &[f64], w: f64, m: &mut DMatrix<f64>) -> Result<()> {
        let mut f = vec![0.0; self.p()];
        let u = self.model.weight_into(&self.thetas[draw], x, &mut f)?;
        linalg::add_rank_one(m, w * u, &f);
        Ok(())
    }

    fn unit_trace(&self, draw: usize, x: &[f64], chol: &Cholesky) -> Result<f64> {
        let mut f = vec![0.0; self.p()];
        let u = self.model.weight_into(&self.thetas[draw], x, &mut f)?;
        Ok(u * chol.quad_form(&f))
    }

    fn informative_window(&self) -> Option<(f64, f64)> {
        let region = self.model.region();
        let free = region.unbounded_axis()?;
        let k = region.k();
        // Anchors: the 3-level lattice of the bounded axes.
        let axes: Vec<Vec<f64>> = (0..k)
            .map(|j| match region.bound(j) {
                Some((l, u)) => vec![l, 0.5 * (l + u), u],
                None => vec![0.0],
            })
            .collect();
        let anchors = grid::tensor_of(&axes);
        let mut ts = vec![0.0];
        for i in 0..=14_000 {
            let t = 10f64.powf(-3.0 + i as f64 / 2000.0);
            ts.push(t);
            ts.push(-t);
        }
        let mut scanned = Vec::with_capacity(ts.len() * anchors.len() * self.thetas.len());
        let mut x = vec![0.0; k];
        for theta in &self.thetas {
            for a in anchors.iter() {
                x.copy_from_slice(a);
                for &t in &ts {
                    x[free] = t;
                    if let Ok(u) = crate::glm::glm_weight(&self.model, theta, &x) {
                        scanned.push((t, u));
                    }
                }
            }
        }
        let umax = scanned.iter().map(|s| s.1).fold(0.0f64, f64::max);
        if !(umax > 0.0) {
            return None;
        }
        let keep = scanned.iter().filter(|s| s.1 >= 1e-6 * umax).map(|s| s.0);
        let (lo, hi) = keep.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(t), h.max(t)));
        let (c, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        Some((c - 1.2 * half, c + 1.2 * half))
    }
}

/// Per-draw information matrices `M(xi; theta_d)`.
pub fn info_matrices<C: Criterion + ?Sized>(c: &C, design: &ContinuousDesign) -> Result<Vec<DMatrix<f64>>> {
    (0..c.n_draws())
        .map(|d| {
            let mut m = DMatrix::zeros(c.p(), c.p());
            for (i, (x, w)) in design.iter().enumerate() {
                c.add_unit_info(d, x, w, &mut m).map_err(|e| e.at_point(i))?;
            }
            Ok(m)
        })
        .collect()
}

/// Draw-averaged `-log det M`; `+inf` if any draw is singular.
pub fn try_objective<C: Criterion + ?Sized>(c: &C, design: &ContinuousDesign) -> Result<f64> {
    let ms = info_matrices(c, design)?;
    let mut total = 0.0;
    for (m, &lambda) in ms.iter().zip(c.draw_weights()) {
        match linalg::logdet(m) {
            Some(l) => total -= lambda * l,
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(total)
}

/// As [`try_objective`], mapping domain errors to `+inf`.
pub fn objective<C: Criterion + ?Sized>(c: &C, design: &ContinuousDesign) -> f64 {
    try_objective(c, design).unwrap_or(f64::INFINITY)
}

/// Factored information matrices of a design, ready for evaluating `psi`.
pub struct Sensitivity<'a, C: Criterion + ?Sized> {
    c: &'a C,
    chols: Vec<Cholesky>,
}

impl<'a, C: Criterion + ?Sized> Sensitivity<'a, C> {
    pub fn new(c: &'a C, design: &ContinuousDesign) -> Result<Self> {
        let ms = info_matrices(c, design)?;
        let single = ms.len() == 1;
        let chols = ms
            .iter()
            .enumerate()
            .map(|(d, m)| {
                Cholesky::new(m).map_err(|_| if single { Error::Singular } else { Error::SingularDraw(d) })
            })
            .collect::<Result<_>>()?;
        Ok(Sensitivity { c, chols })
    }

    /// `psi(x) = p - E_theta trace(M(x) M^-1(xi))`.
    pub fn psi(&self, x: &[f64]) -> Result<f64> {
        let mut tr = 0.0;
        for (d, (chol, &lambda)) in self.chols.iter().zip(self.c.draw_weights()).enumerate() {
            tr += lambda * self.c.unit_trace(d, x, chol)?;
        }
        Ok(self.c.p() as f64 - tr)
    }

    pub fn cholesky(&self, draw: usize) -> &Cholesky {
        &self.chols[draw]
    }
}

/// Outcome of scanning `psi` over the design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub min_psi: f64,
    pub argmin: Vec<f64>,
    pub is_optimal: bool,
    pub tol: f64,
    /// `psi` at each support point, in design order.
    pub support_psi: Vec<f64>,
    #[serde(skip)]
    pub grid: PointSet,
    #[serde(skip)]
    pub psi: Vec<f64>,
}

/// Box actually scanned: the unit region with its unbounded axis windowed.
pub fn scan_box<C: Criterion + ?Sized>(c: &C, spec: &GridSpec) -> Result<Vec<(f64, f64)>> {
    let region = c.unit_region();
    if region.is_bounded() {
        return region.box_bounds();
    }
    let window = spec
        .window
        .or_else(|| c.informative_window())
        .ok_or_else(|| Error::Unsupported("no scan window for the unbounded axis".into()))?;
    Ok(region.windowed(window))
}

/// Scans `psi` on the grid and certifies optimality when `min psi >= -tol_eq`.
pub fn equivalence_check<C: Criterion + ?Sized>(
    c: &C,
    design: &ContinuousDesign,
    spec: &GridSpec,
) -> Result<EquivalenceReport> {
    spec.validate()?;
    let sens = Sensitivity::new(c, design)?;
    let bounds = scan_box(c, spec)?;
    let dim = bounds.len();
    let raw = if spec.uses_tensor(dim) {
        grid::tensor(&bounds, spec.step)
    } else {
        grid::low_discrepancy(&bounds, spec.n_points, spec.seed)
    };
    let mut points = PointSet::new(dim);
    for x in raw.iter().filter(|x| c.is_canonical(x)) {
        points.push(x);
    }
    let mut psi: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| sens.psi(points.point(i)))
        .collect::<Result<_>>()?;

    if !spec.uses_tensor(dim) && spec.refine_from > 0 {
        let mut order: Vec<usize> = (0..psi.len()).collect();
        order.sort_by(|&a, &b| psi[a].total_cmp(&psi[b]).then(a.cmp(&b)));
        order.truncate(spec.refine_from);
        let f = |x: &[f64]| {
            let mut y = x.to_vec();
            c.canonicalize(&mut y);
            sens.psi(&y).unwrap_or(f64::INFINITY)
        };
        let refined: Vec<(Vec<f64>, f64)> = order
            .par_iter()
            .map(|&i| grid::coordinate_descent(&f, points.point(i), &bounds))
            .collect();
        for (mut x, v) in refined {
            c.canonicalize(&mut x);
            points.push(&x);
            psi.push(v);
        }
    }

    let mut best = 0;
    for (i, v) in psi.iter().enumerate() {
        if *v < psi[best] {
            best = i;
        }
    }
    let support_psi = design.points().iter().map(|x| sens.psi(x)).collect::<Result<Vec<_>>>()?;
    let mut min_psi = psi[best];
    let mut argmin = points.point(best).to_vec();
    // Support points belong to the scanned set too.
    for (x, &v) in design.points().iter().zip(&support_psi) {
        if v < min_psi {
            min_psi = v;
            argmin = x.clone();
        }
    }
    let tol = tol_eq(c.p());
    Ok(EquivalenceReport {
        min_psi,
        argmin,
        is_optimal: min_psi >= -tol,
        tol,
        support_psi,
        grid: points,
        psi,
    })
}

/// Merges near-coincident points, drops negligible weights and, for a single
/// parameter draw, removes support points until the Caratheodory bound holds.
pub fn prune<C: Criterion + ?Sized>(c: &C, design: &ContinuousDesign) -> Result<ContinuousDesign> {
    let region = c.unit_region();
    let scales: Vec<f64> = (0..region.k()).map(|j| region.scale(j)).collect();

    let mut order: Vec<usize> = (0..design.support_size()).collect();
    order.sort_by(|&a, &b| design.weights[b].total_cmp(&design.weights[a]).then(a.cmp(&b)));
    let mut clusters: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in order {
        let mut x = design.points[i].clone();
        c.canonicalize(&mut x);
        let w = design.weights[i];
        let hit = clusters.iter_mut().find(|(y, _)| {
            let d2: f64 = x.iter().zip(y.iter()).zip(&scales).map(|((a, b), s)| ((a - b) / s).powi(2)).sum();
            d2.sqrt() <= MERGE_RADIUS
        });
        match hit {
            Some((y, wy)) => {
                for (a, b) in y.iter_mut().zip(&x) {
                    *a = (*a * *wy + b * w) / (*wy + w);
                }
                *wy += w;
            }
            None => clusters.push((x, w)),
        }
    }
    if clusters.iter().any(|(_, w)| *w >= WEIGHT_FLOOR) {
        clusters.retain(|(_, w)| *w >= WEIGHT_FLOOR);
    }
    let (points, weights): (Vec<_>, Vec<_>) = clusters.into_iter().unzip();
    let mut out = ContinuousDesign::normalized(points, weights)?;
    if c.n_draws() == 1 {
        out = caratheodory_reduce(c, &out)?;
    }
    Ok(out.sorted())
}

/// Shifts weight along null directions of `[vech M_i; 1]` until at most
/// `p(p+1)/2 + 1` points remain; the information matrix is unchanged.
pub fn caratheodory_reduce<C: Criterion + ?Sized>(c: &C, design: &ContinuousDesign) -> Result<ContinuousDesign> {
    let p = c.p();
    let rows = p * (p + 1) / 2 + 1;
    let mut points = design.points.clone();
    let mut weights = design.weights.clone();
    while points.len() > caratheodory_bound(p) {
        let t = points.len();
        let mut a = DMatrix::zeros(rows, t);
        for (i, x) in points.iter().enumerate() {
            let mut m = DMatrix::zeros(p, p);
            c.add_unit_info(0, x, 1.0, &mut m)?;
            let mut r = 0;
            for col in 0..p {
                for row in col..p {
                    a[(r, i)] = m[(row, col)];
                    r += 1;
                }
            }
            a[(r, i)] = 1.0;
        }
        let mut v = linalg::null_vector(&a).ok_or(Error::Singular)?;
        if v.iter().all(|&x| x <= 0.0) {
            v = -v;
        }
        let (drop, step) = (0..t)
            .filter(|&i| v[i] > 0.0)
            .map(|i| (i, weights[i] / v[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or(Error::Singular)?;
        for i in 0..t {
            weights[i] -= step * v[i];
        }
        weights[drop] = 0.0;
        let keep: Vec<usize> = (0..t).filter(|&i| weights[i] > 1e-14).collect();
        points = keep.iter().map(|&i| points[i].clone()).collect();
        weights = keep.iter().map(|&i| weights[i]).collect();
    }
    ContinuousDesign::normalized(points, weights)
}

/// `M(xi; theta) = sum w_i u(x_i) f(x_i) f(x_i)'`.
pub fn information_matrix(design: &ContinuousDesign, model: &ModelSpec, theta: &[f64]) -> Result<InformationMatrix> {
    let c = GlmCriterion::local(model, theta)?;
    let mut ms = info_matrices(&c, design)?;
    InformationMatrix::new(ms.pop().expect("one draw"))
}

/// Information matrix of an exact design, using weights `n_i / n`.
pub fn exact_information_matrix(design: &ExactDesign, model: &ModelSpec, theta: &[f64]) -> Result<InformationMatrix> {
    information_matrix(&design.to_continuous(), model, theta)
}

/// `(det M(xi) / det M(xi_ref))^(1/p)`; zero when `xi` is singular.
pub fn d_efficiency(
    design: &ContinuousDesign,
    reference: &ContinuousDesign,
    model: &ModelSpec,
    theta: &[f64],
) -> Result<f64> {
    let c = GlmCriterion::local(model, theta)?;
    criterion_efficiency(&c, design, reference)
}

/// Relative D-efficiency under a single-draw criterion.
pub fn criterion_efficiency<C: Criterion + ?Sized>(
    c: &C,
    design: &ContinuousDesign,
    reference: &ContinuousDesign,
) -> Result<f64> {
    let r = try_objective(c, reference)?;
    if !r.is_finite() {
        return Err(Error::Singular);
    }
    let a = try_objective(c, design)?;
    if !a.is_finite() {
        return Ok(0.0);
    }
    Ok(((r - a) / c.p() as f64).exp())
}

/// Local sensitivity `psi(x) = p - u(x) f(x)' M^-1 f(x)`.
pub fn sensitivity(x: &[f64], design: &ContinuousDesign, model: &ModelSpec, theta: &[f64]) -> Result<f64> {
    let c = GlmCriterion::local(model, theta)?;
    Sensitivity::new(&c, design)?.psi(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{Family, FamilyKind, Link, ModelBasis};

    fn logistic(l: f64, u: f64) -> ModelSpec {
        ModelSpec::logistic_first_order(DesignRegion::cube(1, l, u).unwrap()).unwrap()
    }

    fn sym(c: f64) -> ContinuousDesign {
        ContinuousDesign::equally_weighted(vec![vec![-c], vec![c]]).unwrap()
    }

    #[test]
    fn weights_must_sum_to_one() {
        let e = ContinuousDesign::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.4]).unwrap_err();
        assert!(e.to_string().contains("sum to 1"), "{e}");
        assert!(ContinuousDesign::new(vec![vec![0.0]], vec![-1.0]).is_err());
        let d: std::result::Result<ContinuousDesign, _> =
            serde_json::from_str(r#"{"points":[[0.0],[1.0]],"weights":[0.5,0.4]}"#);
        assert!(d.is_err());
    }

    #[test]
    fn single_point_unit_weight() {
        let m = ModelSpec::new(
            Family::new(FamilyKind::Normal),
            Link::Identity,
            ModelBasis::from_terms(1, vec![crate::glm::Term(vec![0])]).unwrap(),
            DesignRegion::cube(1, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let d = ContinuousDesign::new(vec![vec![0.3]], vec![1.0]).unwrap();
        let im = information_matrix(&d, &m, &[0.0]).unwrap();
        assert_eq!(im.matrix(), &DMatrix::from_element(1, 1, 1.0));
        // p = 1, one point: psi vanishes at the support.
        assert!(sensitivity(&[0.3], &d, &m, &[0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn canonical_logistic_information() {
        let m = logistic(-6.0, 6.0);
        let im = information_matrix(&sym(1.5434), &m, &[0.0, 1.0]).unwrap();
        // Oracle: u = mu(1-mu) at eta = 1.5434 on both points, off-diagonals cancel.
        let mu = 1.0 / (1.0 + (-1.5434f64).exp());
        let u = mu * (1.0 - mu);
        let expect = [u, 0.0, 0.0, u * 1.5434 * 1.5434];
        for (a, b) in im.matrix().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // Quoted values (0.145025, 0.345468, 2.9937) use mu rounded to 0.824.
        assert!((im.matrix()[(0, 0)] - 0.145025).abs() < 5e-5);
        assert!((im.matrix()[(1, 1)] - 0.345468).abs() < 1e-4);
        let obj = d_objective(&im);
        assert!((obj - (-(u * u * 1.5434 * 1.5434).ln())).abs() < 1e-12);
        assert!((obj - 2.9937).abs() < 5e-4);
    }

    #[test]
    fn singular_objective_is_infinite() {
        let m = logistic(-6.0, 6.0);
        let d = ContinuousDesign::new(vec![vec![1.0]], vec![1.0]).unwrap();
        assert_eq!(d_objective(&information_matrix(&d, &m, &[0.0, 1.0]).unwrap()), f64::INFINITY);
        assert_eq!(d_objective(&InformationMatrix::new(DMatrix::identity(2, 2)).unwrap()), 0.0);
        assert_eq!(sensitivity(&[0.0], &d, &m, &[0.0, 1.0]).unwrap_err(), Error::Singular);
        assert_eq!(d_efficiency(&sym(1.0), &d, &m, &[0.0, 1.0]).unwrap_err(), Error::Singular);
        assert_eq!(d_efficiency(&d, &sym(1.0), &m, &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn duplicated_points_merge_linearly() {
        let m = logistic(-6.0, 6.0);
        let a = ContinuousDesign::new(vec![vec![0.5], vec![0.5], vec![-1.0]], vec![0.2, 0.3, 0.5]).unwrap();
        let b = ContinuousDesign::new(vec![vec![0.5], vec![-1.0]], vec![0.5, 0.5]).unwrap();
        let ma = information_matrix(&a, &m, &[0.3, 1.2]).unwrap();
        let mb = information_matrix(&b, &m, &[0.3, 1.2]).unwrap();
        assert!((ma.matrix() - mb.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn inadmissible_point_is_identified() {
        let m = ModelSpec::new(
            Family::new(FamilyKind::Gamma),
            Link::Power { kappa: 1.0 },
            ModelBasis::first_order(1).unwrap(),
            DesignRegion::cube(1, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let d = ContinuousDesign::equally_weighted(vec![vec![0.0], vec![-1.0]]).unwrap();
        let e = information_matrix(&d, &m, &[1.0, 2.0]).unwrap_err();
        assert!(matches!(e, Error::Point { index: 1, .. }), "{e:?}");
    }

    #[test]
    fn one_variable_efficiency_entries() {
        let m = logistic(-10.0, 10.0);
        let e = d_efficiency(&sym(3.0863), &sym(0.7717), &m, &[0.0, 2.0]).unwrap();
        assert!((e - 0.0572).abs() < 5e-4, "{e}");
        let e = d_efficiency(&sym(1.5434), &sym(3.0868), &m, &[0.0, 0.5]).unwrap();
        assert!((e - 0.7452).abs() < 5e-4, "{e}");
        assert_eq!(d_efficiency(&sym(1.0), &sym(1.0), &m, &[0.0, 0.5]).unwrap(), 1.0);
    }

    #[test]
    fn equivalence_of_canonical_design() {
        let m = logistic(-6.0, 6.0);
        let r = equivalence_check(&GlmCriterion::local(&m, &[0.0, 1.0]).unwrap(), &sym(1.5434), &GridSpec::default())
            .unwrap();
        assert!(r.is_optimal, "{}", r.min_psi);
        assert_eq!(r.grid.len(), 1201);
        assert!(r.support_psi.iter().all(|v| v.abs() < 1e-6));

        let c = GlmCriterion::local(&m, &[0.0, 1.0]).unwrap();
        let wide = equivalence_check(&c, &sym(3.0863), &GridSpec::default()).unwrap();
        assert!(!wide.is_optimal);
        assert!(wide.argmin[0].abs() < 0.1, "{:?}", wide.argmin);
        let narrow = equivalence_check(&c, &sym(0.7717), &GridSpec::default()).unwrap();
        assert!(!narrow.is_optimal);
        assert!((narrow.argmin[0].abs() - 2.0).abs() < 0.3, "{:?}", narrow.argmin);
    }

    #[test]
    fn prune_merges_and_floors() {
        let m = logistic(-6.0, 6.0);
        let c = GlmCriterion::local(&m, &[0.0, 1.0]).unwrap();
        let d = ContinuousDesign::new(
            vec![vec![-1.5], vec![1.5], vec![1.5 + 1e-5], vec![0.0]],
            vec![0.5, 0.25, 0.25 - 5e-5, 5e-5],
        )
        .unwrap();
        let p = prune(&c, &d).unwrap();
        assert_eq!(p.support_size(), 2);
        assert!((p.weights()[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn caratheodory_keeps_information() {
        let m = logistic(-3.0, 3.0);
        let c = GlmCriterion::local(&m, &[0.2, 1.0]).unwrap();
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![-2.0 + 0.5 * i as f64]).collect();
        let d = ContinuousDesign::equally_weighted(pts).unwrap();
        let r = caratheodory_reduce(&c, &d).unwrap();
        assert!(r.support_size() <= caratheodory_bound(2));
        let a = info_matrices(&c, &d).unwrap();
        let b = info_matrices(&c, &r).unwrap();
        assert!((&a[0] - &b[0]).abs().max() < 1e-12);
    }

    #[test]
    fn exact_design_grouping() {
        let e = ExactDesign::from_trials(vec![vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(e.points(), &[vec![0.0], vec![1.0]]);
        assert_eq!(e.reps(), &[1, 2]);
        assert_eq!(e.n(), 3);
        assert_eq!(e.to_continuous().weights(), &[1.0 / 3.0, 2.0 / 3.0]);
    }
}
