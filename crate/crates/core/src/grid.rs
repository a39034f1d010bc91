//! Candidate grids for scanning a function over a box.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// How to cover the design space when scanning the sensitivity function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Tensor-grid spacing, in the units of each axis.
    pub step: f64,
    /// Spaces of at most this dimension get a full tensor grid.
    pub max_tensor_dim: usize,
    /// Size of the low-discrepancy set used above `max_tensor_dim`.
    pub n_points: usize,
    /// Number of best low-discrepancy points polished by coordinate descent.
    pub refine_from: usize,
    pub seed: u64,
    /// Scan range for an unbounded axis; chosen from the model when absent.
    pub window: Option<(f64, f64)>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            step: 0.01,
            max_tensor_dim: 2,
            n_points: 4096,
            refine_from: 16,
            seed: 0,
            window: None,
        }
    }
}

impl GridSpec {
    pub fn with_step(step: f64) -> Self {
        GridSpec {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("grid", "step must be positive"));
        }
        if self.n_points == 0 {
            return Err(Error::invalid("grid", "n_points must be positive"));
        }
        if let Some((l, u)) = self.window {
            if !(l < u && l.is_finite() && u.is_finite()) {
                return Err(Error::invalid("grid", "window needs finite l < u"));
            }
        }
        Ok(())
    }

    pub fn uses_tensor(&self, dim: usize) -> bool {
        dim <= self.max_tensor_dim
    }
}

/// Points stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.coords.extend_from_slice(x);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.max(1))
    }
}

/// Number of equally spaced levels covering `[l, u]` at roughly `step`, ends included.
pub fn levels(l: f64, u: f64, step: f64) -> Vec<f64> {
    let n = ((u - l) / step).round().max(1.0) as usize;
    (0..=n)
        .map(|i| if i == n { u } else { l + (u - l) * i as f64 / n as f64 })
        .collect()
}

/// Full tensor grid, last axis varying fastest.
pub fn tensor(bounds: &[(f64, f64)], step: f64) -> PointSet {
    let axes: Vec<Vec<f64>> = bounds.iter().map(|&(l, u)| levels(l, u, step)).collect();
    tensor_of(&axes)
}

pub fn tensor_of(axes: &[Vec<f64>]) -> PointSet {
    let dim = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut set = PointSet {
        dim,
        coords: Vec::with_capacity(total * dim),
    };
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    for _ in 0..total {
        for j in 0..dim {
            x[j] = axes[j][idx[j]];
        }
        set.push(&x);
        for j in (0..dim).rev() {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
    set
}

/// Generalized golden ratio: the positive root of `x^(d+1) = x + 1`.
fn phi(d: usize) -> f64 {
    let mut x = 2.0f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

/// `3^d` lattice (corners, edge and face midpoints, centre) when small enough.
fn lattice(bounds: &[(f64, f64)]) -> Option<PointSet> {
    let d = bounds.len();
    (d <= 6).then(|| {
        let axes: Vec<Vec<f64>> = bounds.iter().map(|&(l, u)| vec![l, 0.5 * (l + u), u]).collect();
        tensor_of(&axes)
    })
}

/// `n` points of an additive recurrence sequence with a random shift, plus the 3^d lattice.
pub fn low_discrepancy(bounds: &[(f64, f64)], n: usize, seed: u64) -> PointSet {
    let d = bounds.len();
    let g = phi(d);
    let alpha: Vec<f64> = (1..=d).map(|j| g.powi(-(j as i32))).collect();
    let mut r = rng::stream(seed, "grid-shift", d as u64);
    let shift: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
    let mut set = lattice(bounds).unwrap_or_else(|| PointSet::new(d));
    let mut x = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            let t = (shift[j] + alpha[j] * (i + 1) as f64).fract();
            let (l, u) = bounds[j];
            x[j] = l + (u - l) * t;
        }
        set.push(&x);
    }
    set
}

/// Coordinate descent on `f` from `start`, inside `bounds`; returns the best
/// point visited and its value.
pub fn coordinate_descent<F>(f: &F, start: &[f64], bounds: &[(f64, f64)]) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut h: Vec<f64> = bounds.iter().map(|(l, u)| 0.05 * (u - l)).collect();
    let min_h: Vec<f64> = bounds.iter().map(|(l, u)| 1e-5 * (u - l)).collect();
    while h.iter().zip(&min_h).any(|(a, b)| a > b) {
        let mut improved = false;
        for j in 0..x.len() {
            for dir in [-1.0, 1.0] {
                let mut y = x.clone();
                y[j] = (y[j] + dir * h[j]).clamp(bounds[j].0, bounds[j].1);
                if y[j] == x[j] {
                    continue;
                }
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for v in h.iter_mut() {
                *v *= 0.5;
            }
        }
    }
    (x, fx)
}
