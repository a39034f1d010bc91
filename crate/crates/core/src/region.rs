//! Design regions: boxes of closed intervals, optionally with one axis that
//! ranges over the whole real line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when testing membership, so optimizer output that lands a
/// rounding error outside a face still counts as inside.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct DesignRegion {
    bounds: Vec<Option<(f64, f64)>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionRepr {
    /// `[l, u]` per axis, `null` for the unbounded axis.
    bounds: Vec<Option<[f64; 2]>>,
}

impl TryFrom<RegionRepr> for DesignRegion {
    type Error = Error;
    fn try_from(r: RegionRepr) -> Result<Self> {
        DesignRegion::new(r.bounds.into_iter().map(|b| b.map(|[l, u]| (l, u))).collect())
    }
}

impl From<DesignRegion> for RegionRepr {
    fn from(r: DesignRegion) -> Self {
        RegionRepr {
            bounds: r.bounds.into_iter().map(|b| b.map(|(l, u)| [l, u])).collect(),
        }
    }
}

impl DesignRegion {
    /// `None` entries mark an axis that ranges over all reals; at most one is allowed.
    pub fn new(bounds: Vec<Option<(f64, f64)>>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("region", "needs at least one axis"));
        }
        let mut unbounded = 0;
        for (j, b) in bounds.iter().enumerate() {
            match b {
                Some((l, u)) => {
                    if !(l.is_finite() && u.is_finite() && l < u) {
                        return Err(Error::invalid(
                            "region",
                            format!("axis {} needs finite l < u, got [{l}, {u}]", j + 1),
                        ));
                    }
                }
                None => unbounded += 1,
            }
        }
        if unbounded > 1 {
            return Err(Error::invalid("region", "at most one axis may be unbounded"));
        }
        Ok(DesignRegion { bounds })
    }

    /// The box `[l, u]^k`.
    pub fn cube(k: usize, l: f64, u: f64) -> Result<Self> {
        Self::new(vec![Some((l, u)); k])
    }

    /// `[l, u]^(k-1) x R`, with the last axis unbounded.
    pub fn cube_with_free_last(k: usize, l: f64, u: f64) -> Result<Self> {
        let mut b = vec![Some((l, u)); k];
        b[k - 1] = None;
        Self::new(b)
    }

    pub fn k(&self) -> usize {
        self.bounds.len()
    }

    pub fn bound(&self, axis: usize) -> Option<(f64, f64)> {
        self.bounds[axis]
    }

    pub fn unbounded_axis(&self) -> Option<usize> {
        self.bounds.iter().position(Option::is_none)
    }

    pub fn is_bounded(&self) -> bool {
        self.unbounded_axis().is_none()
    }

    /// Per-axis bounds; fails for a region with an unbounded axis.
    pub fn box_bounds(&self) -> Result<Vec<(f64, f64)>> {
        self.bounds
            .iter()
            .map(|b| b.ok_or_else(|| Error::Unsupported("region has an unbounded axis".into())))
            .collect()
    }

    /// Bounds with the unbounded axis (if any) replaced by `window`.
    pub fn windowed(&self, window: (f64, f64)) -> Vec<(f64, f64)> {
        self.bounds.iter().map(|b| b.unwrap_or(window)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.k()
            && x.iter().zip(&self.bounds).all(|(&v, b)| match b {
                Some((l, u)) => {
                    let slack = MEMBERSHIP_TOL * (u - l).max(1.0);
                    v >= l - slack && v <= u + slack
                }
                None => v.is_finite(),
            })
    }

    /// Length used to scale distances along an axis (1 for the unbounded axis).
    pub fn scale(&self, axis: usize) -> f64 {
        self.bounds[axis].map_or(1.0, |(l, u)| u - l)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, b) in x.iter_mut().zip(&self.bounds) {
            if let Some((l, u)) = b {
                *v = v.clamp(*l, *u);
            }
        }
    }
}
