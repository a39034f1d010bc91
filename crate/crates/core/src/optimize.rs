//! Numerical search for continuous and exact D-optimal designs.

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    self, caratheodory_bound, equivalence_check, tol_eq, ContinuousDesign, Criterion, EquivalenceReport,
    ExactDesign, GlmCriterion, Sensitivity,
};
use crate::error::{Error, Result};
use crate::glm::ModelSpec;
use crate::grid::{self, GridSpec, PointSet};
use crate::linalg::{self, Cholesky};
use crate::minimize;
use crate::priors::{self, Prior, SampleSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuousOptOptions {
    /// Smallest support size tried; the criterion's minimum when absent.
    pub t_min: Option<usize>,
    /// Largest support size tried; `p(p+1)/2 + 1` when absent.
    pub t_max: Option<usize>,
    pub multistarts: usize,
    /// Objective evaluations per start for the simplex search.
    pub max_evals: usize,
    /// Relative objective change at which a simplex is considered converged.
    pub tol_obj: f64,
    pub seed: u64,
    /// Grid for the final equivalence check.
    pub grid: GridSpec,
}

impl Default for ContinuousOptOptions {
    fn default() -> Self {
        ContinuousOptOptions {
            t_min: None,
            t_max: None,
            multistarts: 16,
            max_evals: 2000,
            tol_obj: 1e-10,
            seed: 0,
            grid: GridSpec::default(),
        }
    }
}

impl ContinuousOptOptions {
    fn support_range<C: Criterion + ?Sized>(&self, c: &C) -> Result<(usize, usize)> {
        let lo = self.t_min.unwrap_or(c.min_support());
        let hi = self.t_max.unwrap_or(caratheodory_bound(c.p()));
        if lo < c.min_support() || lo > hi || hi > caratheodory_bound(c.p()) {
            return Err(Error::invalid(
                "options",
                format!(
                    "need {} <= t_min <= t_max <= {}, got {lo}..{hi}",
                    c.min_support(),
                    caratheodory_bound(c.p())
                ),
            ));
        }
        if self.multistarts == 0 || self.max_evals == 0 {
            return Err(Error::invalid("options", "multistarts and max_evals must be positive"));
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousResult {
    pub design: ContinuousDesign,
    pub objective: f64,
    pub report: EquivalenceReport,
}

/// Objective of raw points and weights; zero weights are skipped.
fn objective_raw<C: Criterion + ?Sized>(c: &C, points: &[Vec<f64>], weights: &[f64]) -> f64 {
    let p = c.p();
    let mut total = 0.0;
    for (d, &lambda) in c.draw_weights().iter().enumerate() {
        let mut m = DMatrix::zeros(p, p);
        for (x, &w) in points.iter().zip(weights) {
            if w > 0.0 && c.add_unit_info(d, x, w, &mut m).is_err() {
                return f64::INFINITY;
            }
        }
        match linalg::logdet(&m) {
            Some(l) => total -= lambda * l,
            None => return f64::INFINITY,
        }
    }
    total
}

/// Support of size `t` in unconstrained angle coordinates.
struct TrigMap<'a> {
    bounds: &'a [(f64, f64)],
    t: usize,
}

impl TrigMap<'_> {
    fn dim(&self) -> usize {
        self.t * self.bounds.len() + self.t - 1
    }

    fn decode(&self, v: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let k = self.bounds.len();
        let points = (0..self.t)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let (l, u) = self.bounds[j];
                        l + (u - l) * v[i * k + j].sin().powi(2)
                    })
                    .collect()
            })
            .collect();
        let angles = &v[self.t * k..];
        let mut weights = Vec::with_capacity(self.t);
        let mut rest = 1.0;
        for a in angles {
            weights.push(rest * a.cos().powi(2));
            rest *= a.sin().powi(2);
        }
        weights.push(rest);
        (points, weights)
    }

    fn encode(&self, points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for x in points {
            for (j, &xj) in x.iter().enumerate() {
                let (l, u) = self.bounds[j];
                let s = ((xj - l) / (u - l)).clamp(0.0, 1.0);
                v.push(s.sqrt().asin());
            }
        }
        let mut rest = 1.0;
        for &w in &weights[..self.t - 1] {
            let c = if rest > 0.0 { (w / rest).clamp(0.0, 1.0) } else { 1.0 };
            v.push(c.sqrt().acos());
            rest -= w;
        }
        v
    }
}

/// Candidate units for the seeding algorithm, with their per-draw information.
struct Candidates {
    points: PointSet,
    info: Vec<Vec<DMatrix<f64>>>,
    radius: f64,
}

fn candidates<C: Criterion + ?Sized>(c: &C, bounds: &[(f64, f64)], seed: u64) -> Candidates {
    let dim = bounds.len();
    let (raw, radius) = match dim {
        1 => (grid::tensor_of(&[grid::levels(bounds[0].0, bounds[0].1, (bounds[0].1 - bounds[0].0) / 200.0)]), 2.5 / 200.0),
        2 => {
            let axes: Vec<Vec<f64>> = bounds.iter().map(|&(l, u)| grid::levels(l, u, (u - l) / 40.0)).collect();
            (grid::tensor_of(&axes), 2.5 / 40.0)
        }
        _ => (grid::low_discrepancy(bounds, 2048, seed), 1.5 * 2048f64.powf(-1.0 / dim as f64)),
    };
    let rows: Vec<(Vec<f64>, Vec<DMatrix<f64>>)> = raw
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .filter(|x| c.is_canonical(x))
        .filter_map(|x| {
            let ms: Result<Vec<DMatrix<f64>>> = (0..c.n_draws())
                .map(|d| {
                    let mut m = DMatrix::zeros(c.p(), c.p());
                    c.add_unit_info(d, x, 1.0, &mut m)?;
                    Ok(m)
                })
                .collect();
            ms.ok().filter(|ms| ms.iter().all(|m| m.iter().all(|v| v.is_finite()))).map(|ms| (x.to_vec(), ms))
        })
        .collect();
    let mut points = PointSet::new(dim);
    let mut info = Vec::with_capacity(rows.len());
    for (x, ms) in rows {
        points.push(&x);
        info.push(ms);
    }
    Candidates { points, info, radius }
}

/// Multiplicative weight iterations over the candidates; returns candidate weights.
fn multiplicative<C: Criterion + ?Sized>(c: &C, cand: &Candidates, iters: usize) -> Result<Vec<f64>> {
    let n = cand.info.len();
    if n == 0 {
        return Err(Error::Unsupported("no admissible candidate units in the region".into()));
    }
    let p = c.p() as f64;
    let mut w = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        let inverses: Vec<DMatrix<f64>> = (0..c.n_draws())
            .map(|d| {
                let mut m = DMatrix::zeros(c.p(), c.p());
                for (wi, ms) in w.iter().zip(&cand.info) {
                    if *wi > 0.0 {
                        m += &ms[d] * *wi;
                    }
                }
                Cholesky::new(&m).map(|ch| ch.inverse())
            })
            .collect::<Result<_>>()?;
        let traces: Vec<f64> = cand
            .info
            .par_iter()
            .map(|ms| {
                ms.iter()
                    .zip(&inverses)
                    .zip(c.draw_weights())
                    .map(|((m, inv), lambda)| lambda * linalg::trace_product(m, inv))
                    .sum()
            })
            .collect();
        let worst = traces.iter().cloned().fold(0.0, f64::max);
        for (wi, t) in w.iter_mut().zip(&traces) {
            *wi *= t / p;
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        if worst <= p * (1.0 + 1e-4) {
            break;
        }
    }
    Ok(w)
}

/// Merges weighted candidates within `radius` (region-scaled), heaviest first.
fn cluster<C: Criterion + ?Sized>(
    c: &C,
    points: &PointSet,
    weights: &[f64],
    scales: &[f64],
    radius: f64,
) -> Result<ContinuousDesign> {
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 1e-3 * wmax).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut groups: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in order {
        let x = points.point(i);
        let w = weights[i];
        let hit = groups.iter_mut().find(|(y, _)| {
            let d2: f64 = x.iter().zip(y.iter()).zip(scales).map(|((a, b), s)| ((a - b) / s).powi(2)).sum();
            d2.sqrt() <= radius
        });
        match hit {
            Some((y, wy)) => {
                for (a, b) in y.iter_mut().zip(x) {
                    *a = (*a * *wy + b * w) / (*wy + w);
                }
                *wy += w;
            }
            None => groups.push((x.to_vec(), w)),
        }
    }
    let (mut pts, ws): (Vec<Vec<f64>>, Vec<f64>) = groups.into_iter().unzip();
    for x in pts.iter_mut() {
        c.canonicalize(x);
    }
    ContinuousDesign::normalized(pts, ws)
}

/// Starting support of size `t` built from a design: heaviest points first,
/// padded with the candidates of lowest sensitivity.
fn start_from<C: Criterion + ?Sized>(
    c: &C,
    base: &ContinuousDesign,
    t: usize,
    cand: &Candidates,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut order: Vec<usize> = (0..base.support_size()).collect();
    order.sort_by(|&a, &b| base.weights()[b].total_cmp(&base.weights()[a]).then(a.cmp(&b)));
    let mut pts: Vec<Vec<f64>> = order.iter().take(t).map(|&i| base.points()[i].clone()).collect();
    let mut ws: Vec<f64> = order.iter().take(t).map(|&i| base.weights()[i]).collect();
    if pts.len() < t {
        let extra = t - pts.len();
        let psi: Vec<f64> = match Sensitivity::new(c, base) {
            Ok(s) => (0..cand.points.len())
                .map(|i| s.psi(cand.points.point(i)).unwrap_or(f64::INFINITY))
                .collect(),
            Err(_) => (0..cand.points.len()).map(|i| i as f64).collect(),
        };
        let mut idx: Vec<usize> = (0..psi.len()).collect();
        idx.sort_by(|&a, &b| psi[a].total_cmp(&psi[b]).then(a.cmp(&b)));
        for i in idx.into_iter().take(extra) {
            pts.push(cand.points.point(i).to_vec());
            ws.push(1.0 / t as f64);
        }
    }
    let total: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= total);
    (pts, ws)
}

fn random_start(cand: &Candidates, t: usize, r: &mut rng::Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let idx: Vec<usize> = (0..cand.points.len()).collect();
    let pts: Vec<Vec<f64>> = (0..t)
        .map(|_| cand.points.point(*idx.choose(r).expect("candidates")).to_vec())
        .collect();
    let ws: Vec<f64> = (0..t).map(|_| 0.5 + r.random::<f64>()).collect();
    let total: f64 = ws.iter().sum();
    (pts, ws.into_iter().map(|w| w / total).collect())
}

/// Local search from one start: simplex search then quasi-Newton polish.
fn local_search<C: Criterion + ?Sized>(
    c: &C,
    map: &TrigMap,
    v0: &[f64],
    step: f64,
    opts: &ContinuousOptOptions,
) -> (Vec<f64>, f64) {
    let f = |v: &[f64]| {
        let (pts, ws) = map.decode(v);
        objective_raw(c, &pts, &ws)
    };
    let nm = minimize::nelder_mead(&f, v0, step, opts.max_evals, opts.tol_obj, 2);
    let polished = minimize::bfgs(&f, &nm.x, 200, 1e-9);
    if polished.f <= nm.f {
        (polished.x, polished.f)
    } else {
        (nm.x, nm.f)
    }
}

/// Drops zero weights, merges, and moves coordinates within `1e-6` of a bound onto it.
fn tidy<C: Criterion + ?Sized>(c: &C, pts: Vec<Vec<f64>>, ws: Vec<f64>, bounds: &[(f64, f64)]) -> Result<ContinuousDesign> {
    let keep: Vec<usize> = (0..ws.len()).filter(|&i| ws[i] > 0.0).collect();
    let d = ContinuousDesign::normalized(
        keep.iter().map(|&i| pts[i].clone()).collect(),
        keep.iter().map(|&i| ws[i]).collect(),
    )?;
    let d = design::prune(c, &d)?;
    let region = c.unit_region();
    let snapped: Vec<Vec<f64>> = d
        .points()
        .iter()
        .map(|x| {
            let mut y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(j, &v)| match region.bound(j) {
                    Some(_) => {
                        let (l, u) = bounds[j];
                        let tol = 1e-6 * (u - l);
                        if (v - l).abs() <= tol {
                            l
                        } else if (u - v).abs() <= tol {
                            u
                        } else {
                            v
                        }
                    }
                    None => v,
                })
                .collect();
            c.canonicalize(&mut y);
            y
        })
        .collect();
    let s = ContinuousDesign::new(snapped, d.weights().to_vec())?.sorted();
    if design::objective(c, &s) <= design::objective(c, &d) + 1e-12 {
        Ok(s)
    } else {
        Ok(d)
    }
}

/// Continuous D-optimal design for an arbitrary criterion.
pub fn optimize_criterion<C: Criterion + ?Sized>(c: &C, opts: &ContinuousOptOptions) -> Result<ContinuousResult> {
    opts.grid.validate()?;
    let (t_lo, t_hi) = opts.support_range(c)?;
    let bounds = design::scan_box(c, &opts.grid)?;
    let region = c.unit_region();
    let scales: Vec<f64> = (0..region.k())
        .map(|j| if region.bound(j).is_some() { region.scale(j) } else { bounds[j].1 - bounds[j].0 })
        .collect();

    let cand = candidates(c, &bounds, opts.seed);
    let cw = multiplicative(c, &cand, 500)?;
    let seed = cluster(c, &cand.points, &cw, &scales, cand.radius)?;
    log::info!("seed design: {} points, objective {:.10}", seed.support_size(), design::objective(c, &seed));

    let mut base = seed.clone();
    let mut best: Option<(ContinuousDesign, f64)> = None;
    let mut best_start = f64::INFINITY;
    let mut last_report = None;
    for t in t_lo..=t_hi {
        let map = TrigMap { bounds: &bounds, t };
        let runs: Vec<(f64, Vec<f64>, f64)> = (0..opts.multistarts)
            .into_par_iter()
            .map(|s| {
                let (pts, ws, step) = if s == 0 {
                    let (p, w) = start_from(c, &base, t, &cand);
                    (p, w, 0.05)
                } else {
                    let mut r = rng::stream(opts.seed, "multistart", (t * 1000 + s) as u64);
                    if s % 2 == 1 {
                        let (p, w) = start_from(c, &base, t, &cand);
                        let mut v = map.encode(&p, &w);
                        v.iter_mut().for_each(|x| *x += 0.3 * (r.random::<f64>() - 0.5));
                        let (p, w) = map.decode(&v);
                        (p, w, 0.2)
                    } else {
                        let (p, w) = random_start(&cand, t, &mut r);
                        (p, w, 0.4)
                    }
                };
                let f0 = objective_raw(c, &pts, &ws);
                let v0 = map.encode(&pts, &ws);
                let (v, f) = local_search(c, &map, &v0, step, opts);
                (f0, v, f)
            })
            .collect();
        best_start = runs.iter().map(|r| r.0).fold(best_start, f64::min);
        let mut winner = 0;
        for (i, r) in runs.iter().enumerate() {
            if r.2 < runs[winner].2 {
                winner = i;
            }
        }
        let (pts, ws) = map.decode(&runs[winner].1);
        let mut d = tidy(c, pts, ws, &bounds)?;
        // Polish the merged support once more.
        if d.support_size() >= c.min_support() {
            let m2 = TrigMap { bounds: &bounds, t: d.support_size() };
            let v0 = m2.encode(d.points(), d.weights());
            let f = |v: &[f64]| {
                let (p, w) = m2.decode(v);
                objective_raw(c, &p, &w)
            };
            let pol = minimize::bfgs(&f, &v0, 200, 1e-10);
            if pol.f < design::objective(c, &d) {
                let (p, w) = m2.decode(&pol.x);
                d = tidy(c, p, w, &bounds)?;
            }
        }
        let obj = design::objective(c, &d);
        log::info!("t = {t}: objective {obj:.10} on {} points", d.support_size());
        if best.as_ref().is_none_or(|b| obj < b.1) {
            best = Some((d.clone(), obj));
        }
        if !obj.is_finite() {
            continue;
        }
        let report = equivalence_check(c, &d, &opts.grid)?;
        if report.is_optimal {
            return finish(c, d, obj, report, &seed, best_start, opts);
        }
        // Next size starts from this design plus the sensitivity minimizer.
        let mut p = d.points().to_vec();
        let mut w: Vec<f64> = d.weights().iter().map(|w| w * t as f64 / (t + 1) as f64).collect();
        p.push(report.argmin.clone());
        w.push(1.0 / (t + 1) as f64);
        base = ContinuousDesign::normalized(p, w)?;
        last_report = Some((d, report));
    }
    let (d, obj) = best.ok_or(Error::Singular)?;
    if !obj.is_finite() {
        return Err(Error::Singular);
    }
    let report = match last_report {
        Some((ld, r)) if ld == d => r,
        _ => equivalence_check(c, &d, &opts.grid)?,
    };
    finish(c, d, obj, report, &seed, best_start, opts)
}

fn finish<C: Criterion + ?Sized>(
    c: &C,
    d: ContinuousDesign,
    obj: f64,
    report: EquivalenceReport,
    seed: &ContinuousDesign,
    best_start: f64,
    opts: &ContinuousOptOptions,
) -> Result<ContinuousResult> {
    let seed_obj = design::objective(c, seed);
    if obj <= seed_obj.min(best_start) {
        return Ok(ContinuousResult {
            design: d,
            objective: obj,
            report,
        });
    }
    let fallback = seed.sorted();
    let report = equivalence_check(c, &fallback, &opts.grid)?;
    Ok(ContinuousResult {
        objective: design::objective(c, &fallback),
        design: fallback,
        report,
    })
}

/// Continuous design under a prior; point priors give the locally optimal design.
pub fn optimize_continuous(
    model: &ModelSpec,
    prior: &Prior,
    spec: &SampleSpec,
    opts: &ContinuousOptOptions,
) -> Result<ContinuousResult> {
    if !model.region().is_bounded() {
        return Err(Error::Precondition(
            "numerical optimization needs a bounded region; use the closed-form constructor".into(),
        ));
    }
    let c = priors::prior_criterion(model, prior, spec)?;
    optimize_criterion(&c, opts)
}

pub fn optimize_continuous_local(model: &ModelSpec, theta: &[f64], opts: &ContinuousOptOptions) -> Result<ContinuousResult> {
    optimize_continuous(model, &Prior::point(theta.to_vec()), &SampleSpec::lhs(1, 0), opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WynnOptions {
    pub max_iters: usize,
    pub seed: u64,
    /// Starting design; `p + 1` random grid points with equal weights when absent.
    pub start: Option<ContinuousDesign>,
}

impl Default for WynnOptions {
    fn default() -> Self {
        WynnOptions {
            max_iters: 2000,
            seed: 0,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WynnResult {
    pub design: ContinuousDesign,
    pub objective: f64,
    /// Iterations performed; zero when the start already passes.
    pub iterations: usize,
    pub min_psi: f64,
    /// Objective of the iterate at each step, starting with the initial design.
    pub history: Vec<f64>,
}

/// Sequential addition of the sensitivity minimizer with step `1/(s+1+p)`.
pub fn wynn_fedorov_criterion<C: Criterion + ?Sized>(c: &C, spec: &GridSpec, opts: &WynnOptions) -> Result<WynnResult> {
    spec.validate()?;
    let bounds = design::scan_box(c, spec)?;
    let raw = if spec.uses_tensor(bounds.len()) {
        grid::tensor(&bounds, spec.step)
    } else {
        grid::low_discrepancy(&bounds, spec.n_points, spec.seed)
    };
    let mut cands = PointSet::new(bounds.len());
    for x in raw.iter().filter(|x| c.is_canonical(x)) {
        cands.push(x);
    }
    let p = c.p();
    let mut xi = match &opts.start {
        Some(d) => d.clone(),
        None => {
            let mut found = None;
            for attempt in 0..32 {
                let mut r = rng::stream(opts.seed, "wynn-start", attempt);
                let pts: Vec<Vec<f64>> = (0..=p)
                    .map(|_| cands.point(r.random_range(0..cands.len())).to_vec())
                    .collect();
                let d = ContinuousDesign::equally_weighted(pts)?;
                if design::objective(c, &d).is_finite() {
                    found = Some(d);
                    break;
                }
            }
            found.ok_or_else(|| Error::Precondition("no nonsingular start after 32 draws".into()))?
        }
    };
    let tol = tol_eq(p);
    let mut obj = design::try_objective(c, &xi)?;
    if !obj.is_finite() {
        return Err(Error::Singular);
    }
    let mut history = vec![obj];
    let mut incumbent = (xi.clone(), obj);
    let mut iterations = 0;
    let mut min_psi;
    loop {
        let sens = Sensitivity::new(c, &xi)?;
        let psi: Vec<f64> = (0..cands.len())
            .into_par_iter()
            .map(|i| sens.psi(cands.point(i)).unwrap_or(f64::INFINITY))
            .collect();
        let mut arg = 0;
        for (i, v) in psi.iter().enumerate() {
            if *v < psi[arg] {
                arg = i;
            }
        }
        min_psi = psi[arg];
        if min_psi >= -tol || iterations >= opts.max_iters {
            break;
        }
        let alpha = 1.0 / (iterations + 1 + p) as f64;
        let x = cands.point(arg).to_vec();
        let mut pts = xi.points().to_vec();
        let mut ws: Vec<f64> = xi.weights().iter().map(|w| w * (1.0 - alpha)).collect();
        match pts.iter().position(|y| *y == x) {
            Some(j) => ws[j] += alpha,
            None => {
                pts.push(x);
                ws.push(alpha);
            }
        }
        xi = ContinuousDesign::normalized(pts, ws)?;
        iterations += 1;
        obj = design::objective(c, &xi);
        history.push(obj);
        if obj < incumbent.1 {
            incumbent = (xi.clone(), obj);
            log::info!("iteration {iterations}: objective {obj:.10}");
        }
    }
    let mut d = design::prune(c, &incumbent.0)?;
    // Early iterates keep residual mass away from the optimum; drop support
    // points well off the minimum of psi when that helps.
    if let Ok(sens) = Sensitivity::new(c, &d) {
        let keep: Vec<usize> = (0..d.support_size())
            .filter(|&i| sens.psi(&d.points()[i]).is_ok_and(|v| v <= 0.1 * p as f64))
            .collect();
        if !keep.is_empty() && keep.len() < d.support_size() {
            let trimmed = ContinuousDesign::normalized(
                keep.iter().map(|&i| d.points()[i].clone()).collect(),
                keep.iter().map(|&i| d.weights()[i]).collect(),
            )?;
            if design::objective(c, &trimmed) < design::objective(c, &d) {
                d = design::prune(c, &trimmed)?;
            }
        }
    }
    Ok(WynnResult {
        objective: design::objective(c, &d),
        design: d,
        iterations,
        min_psi,
        history,
    })
}

pub fn wynn_fedorov(model: &ModelSpec, theta: &[f64], spec: &GridSpec, opts: &WynnOptions) -> Result<WynnResult> {
    wynn_fedorov_criterion(&GlmCriterion::local(model, theta)?, spec, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSchedule {
    /// Initial temperature; the spread of 64 probe moves when absent.
    pub t0: Option<f64>,
    pub cooling: f64,
    pub steps: usize,
    pub chains: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t0: None,
            cooling: 0.95,
            steps: 100_000,
            chains: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExactMethod {
    Anneal(AnnealSchedule),
    GridExchange { grid_step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactOptOptions {
    pub n: usize,
    pub method: ExactMethod,
    #[serde(default)]
    pub seed: u64,
    /// Independent exchange starts.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_starts() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub design: ExactDesign,
    pub objective: f64,
}

/// Draw-averaged `-log det` of the normalized information of `n` trials.
pub fn exact_objective(c: &GlmCriterion, trials: &[Vec<f64>]) -> f64 {
    let w = vec![1.0 / trials.len() as f64; trials.len()];
    objective_raw(c, trials, &w)
}

/// Exact `n`-trial design under a prior.
pub fn optimize_exact(model: &ModelSpec, prior: &Prior, spec: &SampleSpec, opts: &ExactOptOptions) -> Result<ExactResult> {
    let c = priors::prior_criterion(model, prior, spec)?;
    optimize_exact_criterion(&c, opts)
}

pub fn optimize_exact_criterion(c: &GlmCriterion, opts: &ExactOptOptions) -> Result<ExactResult> {
    if opts.n < c.p() {
        return Err(Error::invalid("options", format!("n = {} is below p = {}", opts.n, c.p())));
    }
    let bounds = c.model().region().box_bounds().map_err(|_| {
        Error::Precondition("exact optimization needs a bounded region".into())
    })?;
    let trials = match &opts.method {
        ExactMethod::GridExchange { grid_step } => {
            if !(*grid_step > 0.0) {
                return Err(Error::invalid("options", "grid_step must be positive"));
            }
            let runs: Vec<(Vec<Vec<f64>>, f64)> = (0..opts.starts.max(1))
                .into_par_iter()
                .map(|s| exchange(c, &bounds, *grid_step, opts.n, opts.seed, s as u64))
                .collect::<Result<_>>()?;
            pick_best(runs)
        }
        ExactMethod::Anneal(sched) => {
            if !(sched.cooling > 0.0 && sched.cooling < 1.0) || sched.steps == 0 || sched.chains == 0 {
                return Err(Error::invalid("anneal", "need 0 < cooling < 1 and positive steps and chains"));
            }
            let runs: Vec<(Vec<Vec<f64>>, f64)> = (0..sched.chains)
                .into_par_iter()
                .map(|s| anneal(c, &bounds, sched, opts.n, opts.seed, s as u64))
                .collect::<Result<_>>()?;
            pick_best(runs)
        }
    };
    let objective = exact_objective(c, &trials);
    Ok(ExactResult {
        design: ExactDesign::from_trials(trials)?,
        objective,
    })
}

fn pick_best(runs: Vec<(Vec<Vec<f64>>, f64)>) -> Vec<Vec<f64>> {
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.1 < runs[best].1 {
            best = i;
        }
    }
    runs.into_iter().nth(best).expect("at least one run").0
}

fn random_trials(c: &GlmCriterion, n: usize, mut draw: impl FnMut() -> Vec<f64>) -> Result<Vec<Vec<f64>>> {
    for _ in 0..32 {
        let t: Vec<Vec<f64>> = (0..n).map(|_| draw()).collect();
        if exact_objective(c, &t).is_finite() {
            return Ok(t);
        }
    }
    Err(Error::Precondition("no nonsingular random start after 32 draws".into()))
}

/// Scaled regressor `sqrt(u) f` of every admissible candidate under every draw.
fn scaled_regressors(c: &GlmCriterion, cands: &PointSet) -> (Vec<usize>, Vec<Vec<Vec<f64>>>) {
    let p = c.p();
    let rows: Vec<Option<Vec<Vec<f64>>>> = (0..cands.len())
        .into_par_iter()
        .map(|i| {
            let x = cands.point(i);
            c.thetas()
                .iter()
                .map(|theta| {
                    let mut f = vec![0.0; p];
                    let u = c.model().weight_into(theta, x, &mut f).ok()?;
                    let s = u.sqrt();
                    Some(f.into_iter().map(|v| v * s).collect())
                })
                .collect()
        })
        .collect();
    let mut idx = Vec::new();
    let mut g = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        if let Some(r) = r {
            idx.push(i);
            g.push(r);
        }
    }
    (idx, g)
}

/// Fedorov exchange on a lattice: repeatedly applies the best single swap
/// of a trial for a candidate until none improves.
fn exchange(
    c: &GlmCriterion,
    bounds: &[(f64, f64)],
    step: f64,
    n: usize,
    seed: u64,
    start: u64,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let cands = grid::tensor(bounds, step);
    let (idx, g) = scaled_regressors(c, &cands);
    if idx.is_empty() {
        return Err(Error::Unsupported("no admissible lattice points".into()));
    }
    let mut r = rng::stream(seed, "exchange-start", start);
    let mut chosen = Vec::new();
    for _ in 0..32 {
        let pick: Vec<usize> = (0..n).map(|_| r.random_range(0..idx.len())).collect();
        let trials: Vec<Vec<f64>> = pick.iter().map(|&j| cands.point(idx[j]).to_vec()).collect();
        if exact_objective(c, &trials).is_finite() {
            chosen = pick;
            break;
        }
    }
    if chosen.is_empty() {
        return Err(Error::Precondition("no nonsingular random start after 32 draws".into()));
    }
    let p = c.p();
    let lambdas = c.draw_weights();
    loop {
        // Factor the unnormalized information of the current trials per draw.
        let mut chols = Vec::with_capacity(lambdas.len());
        for d in 0..lambdas.len() {
            let mut m = DMatrix::zeros(p, p);
            for &j in &chosen {
                linalg::add_rank_one(&mut m, 1.0, &g[j][d]);
            }
            chols.push(Cholesky::new(&m)?);
        }
        // z = L^-1 g for every candidate and draw.
        let z: Vec<Vec<Vec<f64>>> = g
            .par_iter()
            .map(|gd| gd.iter().zip(&chols).map(|(v, ch)| ch.forward(v)).collect())
            .collect();
        let gains: Vec<(f64, usize, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let zi = &z[chosen[i]];
                let mut best = (0.0, i, chosen[i]);
                for (j, zj) in z.iter().enumerate() {
                    let mut gain = 0.0;
                    for d in 0..lambdas.len() {
                        let dx = dot(&zj[d], &zj[d]);
                        let di = dot(&zi[d], &zi[d]);
                        let dxi = dot(&zj[d], &zi[d]);
                        let delta = (1.0 + dx) * (1.0 - di) + dxi * dxi;
                        gain += lambdas[d] * if delta > 0.0 { delta.ln() } else { f64::NEG_INFINITY };
                    }
                    if gain > best.0 {
                        best = (gain, i, j);
                    }
                }
                best
            })
            .collect();
        let mut top = gains[0];
        for g in &gains[1..] {
            if g.0 > top.0 {
                top = *g;
            }
        }
        if top.0 <= 1e-10 {
            break;
        }
        chosen[top.1] = top.2;
    }
    let trials: Vec<Vec<f64>> = chosen.iter().map(|&j| cands.point(idx[j]).to_vec()).collect();
    let f = exact_objective(c, &trials);
    log::info!("exchange start {start}: objective {f:.10}");
    Ok((trials, f))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Simulated annealing over trial coordinates with a greedy coordinate polish.
fn anneal(
    c: &GlmCriterion,
    bounds: &[(f64, f64)],
    sched: &AnnealSchedule,
    n: usize,
    seed: u64,
    chain: u64,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let k = bounds.len();
    let mut r = rng::stream(seed, "anneal", chain);
    let uniform_point = |r: &mut rng::Rng| -> Vec<f64> { bounds.iter().map(|&(l, u)| l + (u - l) * r.random::<f64>()).collect() };
    let mut x = random_trials(c, n, || uniform_point(&mut r))?;
    let mut fx = exact_objective(c, &x);
    let propose = |x: &[Vec<f64>], radius: f64, r: &mut rng::Rng| -> (usize, usize, f64) {
        let i = r.random_range(0..n);
        let j = r.random_range(0..k);
        let (l, u) = bounds[j];
        let v = (x[i][j] + radius * (u - l) * (2.0 * r.random::<f64>() - 1.0)).clamp(l, u);
        (i, j, v)
    };
    let t0 = match sched.t0 {
        Some(t) => t,
        None => {
            let probes: Vec<f64> = (0..64)
                .map(|_| {
                    let (i, j, v) = propose(&x, 0.5, &mut r);
                    let mut y = x.clone();
                    y[i][j] = v;
                    exact_objective(c, &y)
                })
                .filter(|v| v.is_finite())
                .collect();
            let mean = probes.iter().sum::<f64>() / probes.len().max(1) as f64;
            let var = probes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / probes.len().max(1) as f64;
            var.sqrt().max(1e-6)
        }
    };
    let block = 100 * n;
    let mut temp = t0;
    let mut best = (x.clone(), fx);
    for s in 0..sched.steps {
        let frac = s as f64 / sched.steps as f64;
        let radius = 0.5 * (0.02f64).powf(frac);
        let (i, j, v) = propose(&x, radius, &mut r);
        let old = x[i][j];
        x[i][j] = v;
        let fy = exact_objective(c, &x);
        let accept = fy <= fx || (fy.is_finite() && r.random::<f64>() < (-(fy - fx) / temp).exp());
        if accept {
            fx = fy;
            if fx < best.1 {
                best = (x.clone(), fx);
            }
        } else {
            x[i][j] = old;
        }
        if (s + 1) % block == 0 {
            temp *= sched.cooling;
        }
    }
    let flat: Vec<f64> = best.0.iter().flatten().copied().collect();
    let fb: Vec<(f64, f64)> = (0..n).flat_map(|_| bounds.iter().copied()).collect();
    let f = |v: &[f64]| {
        let t: Vec<Vec<f64>> = v.chunks(k).map(<[f64]>::to_vec).collect();
        exact_objective(c, &t)
    };
    let (v, fv) = grid::coordinate_descent(&f, &flat, &fb);
    let trials = if fv < best.1 {
        v.chunks(k).map(<[f64]>::to_vec).collect()
    } else {
        best.0
    };
    let f_final = exact_objective(c, &trials);
    log::info!("anneal chain {chain}: objective {f_final:.10}");
    Ok((trials, f_final))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{Family, FamilyKind, Link, ModelBasis};
    use crate::region::DesignRegion;

    fn logistic(k: usize, l: f64, u: f64) -> ModelSpec {
        ModelSpec::logistic_first_order(DesignRegion::cube(k, l, u).unwrap()).unwrap()
    }

    #[test]
    fn trig_map_round_trip() {
        let b = [(-1.0, 1.0), (0.0, 2.0)];
        let m = TrigMap { bounds: &b, t: 3 };
        let pts = vec![vec![-0.5, 0.3], vec![1.0, 2.0], vec![0.0, 0.0]];
        let ws = vec![0.2, 0.5, 0.3];
        let (p2, w2) = m.decode(&m.encode(&pts, &ws));
        for (a, b) in p2.iter().flatten().zip(pts.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in w2.iter().zip(&ws) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(m.dim(), 8);
    }

    #[test]
    fn canonical_logistic_optimum() {
        let m = logistic(1, -6.0, 6.0);
        let r = optimize_continuous_local(&m, &[0.0, 1.0], &ContinuousOptOptions::default()).unwrap();
        assert!(r.report.is_optimal, "{:?}", r.report.min_psi);
        assert_eq!(r.design.support_size(), 2);
        assert!((r.design.points()[1][0] - 1.5434).abs() < 1e-3, "{:?}", r.design);
        assert!((r.design.points()[0][0] + 1.5434).abs() < 1e-3);
        assert!((r.design.weights()[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn gamma_factorial_weights() {
        let m = ModelSpec::new(
            Family::new(FamilyKind::Gamma),
            Link::Power { kappa: 1.0 },
            ModelBasis::first_order(2).unwrap(),
            DesignRegion::cube(2, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let r = optimize_continuous_local(&m, &[1.0, 0.5, 0.5], &ContinuousOptOptions::default()).unwrap();
        assert!(r.report.is_optimal);
        let expect = [5.0 / 16.0, 9.0 / 32.0, 9.0 / 32.0, 1.0 / 8.0];
        assert_eq!(r.design.support_size(), 4, "{:?}", r.design);
        for (w, e) in r.design.weights().iter().zip(expect) {
            assert!((w - e).abs() < 1e-3, "{:?}", r.design.weights());
        }
    }

    #[test]
    fn wynn_stops_at_optimum() {
        let m = logistic(1, -6.0, 6.0);
        let start = ContinuousDesign::equally_weighted(vec![vec![-1.5434], vec![1.5434]]).unwrap();
        let r = wynn_fedorov(
            &m,
            &[0.0, 1.0],
            &GridSpec::default(),
            &WynnOptions {
                start: Some(start),
                ..WynnOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn wynn_approaches_optimum() {
        let m = logistic(1, -6.0, 6.0);
        let r = wynn_fedorov(&m, &[0.0, 1.0], &GridSpec::default(), &WynnOptions::default()).unwrap();
        let opt = optimize_continuous_local(&m, &[0.0, 1.0], &ContinuousOptOptions::default()).unwrap();
        assert!((r.objective - opt.objective).abs() < 1e-3, "{} vs {}", r.objective, opt.objective);
        let mut running = f64::INFINITY;
        for h in &r.history {
            running = running.min(*h);
            assert!(h.is_finite());
        }
        assert!(r.objective <= r.history[0] + 1e-9);
    }

    #[test]
    fn exact_two_runs() {
        let m = logistic(1, -6.0, 6.0);
        let opts = ExactOptOptions {
            n: 2,
            method: ExactMethod::GridExchange { grid_step: 0.01 },
            seed: 1,
            starts: 2,
        };
        let r = optimize_exact(&m, &Prior::point(vec![0.0, 1.0]), &SampleSpec::lhs(1, 0), &opts).unwrap();
        let pts = r.design.points();
        assert!((pts[0][0] + 1.5434).abs() < 0.006 && (pts[1][0] - 1.5434).abs() < 0.006, "{pts:?}");
        let bad = ExactOptOptions { n: 1, ..opts };
        assert!(optimize_exact(&m, &Prior::point(vec![0.0, 1.0]), &SampleSpec::lhs(1, 0), &bad).is_err());
    }

    #[test]
    fn anneal_two_runs() {
        let m = logistic(1, -6.0, 6.0);
        let opts = ExactOptOptions {
            n: 2,
            method: ExactMethod::Anneal(AnnealSchedule {
                steps: 5000,
                chains: 2,
                ..AnnealSchedule::default()
            }),
            seed: 3,
            starts: 1,
        };
        let r = optimize_exact(&m, &Prior::point(vec![0.0, 1.0]), &SampleSpec::lhs(1, 0), &opts).unwrap();
        let pts = r.design.points();
        assert!((pts[0][0] + 1.5434).abs() < 1e-3 && (pts[1][0] - 1.5434).abs() < 1e-3, "{pts:?}");
        let again = optimize_exact(&m, &Prior::point(vec![0.0, 1.0]), &SampleSpec::lhs(1, 0), &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn exact_objective_ignores_order() {
        let m = logistic(1, -3.0, 3.0);
        let c = GlmCriterion::local(&m, &[0.2, 1.0]).unwrap();
        let a = vec![vec![-1.0], vec![0.5], vec![2.0]];
        let b = vec![vec![2.0], vec![-1.0], vec![0.5]];
        assert!((exact_objective(&c, &a) - exact_objective(&c, &b)).abs() < 1e-14);
    }
}
