//! Projectable convex feasible sets.
//!
//! The menu covers every set used by the built-in problems: all of space,
//! boxes, Euclidean balls, and the nonnegative orthant. Each variant has an
//! exact O(d) Euclidean projection, so no iterative subproblem solver is
//! ever needed.

use crate::error::{Error, Result};
use crate::vecmath::RealVec;

/// Membership slack used by `contains`; projections are exact up to rounding.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum FeasibleSet {
    AllSpace(usize),
    Box { lower: RealVec, upper: RealVec },
    Ball { center: RealVec, radius: f64 },
    NonNegOrthant(usize),
}

impl FeasibleSet {
    /// Box constructor with the `lower <= upper` invariant check.
    pub fn boxed(lower: RealVec, upper: RealVec) -> Result<Self> {
        if lower.dim() != upper.dim() {
            return Err(Error::argument("box bounds must share a dimension"));
        }
        for i in 0..lower.dim() {
            if lower[i] > upper[i] {
                return Err(Error::argument(format!(
                    "box lower bound exceeds upper bound at coordinate {i}"
                )));
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    /// Uniform box `[lo, hi]^dim`.
    pub fn interval(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        FeasibleSet::boxed(
            RealVec::new(vec![lo; dim])?,
            RealVec::new(vec![hi; dim])?,
        )
    }

    pub fn ball(center: RealVec, radius: f64) -> Result<Self> {
        if radius <= 0.0 || !radius.is_finite() {
            return Err(Error::argument("ball radius must be positive"));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::AllSpace(d) | FeasibleSet::NonNegOrthant(d) => *d,
            FeasibleSet::Box { lower, .. } => lower.dim(),
            FeasibleSet::Ball { center, .. } => center.dim(),
        }
    }

    fn check_dim(&self, q: &RealVec) -> Result<()> {
        if q.dim() != self.dim() {
            return Err(Error::argument(format!(
                "point of dimension {} projected onto set of dimension {}",
                q.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    ///
    /// For a ball, a query equal to the center is returned unchanged (any
    /// tie-break is valid; the center is the deterministic choice).
    pub fn project(&self, q: &RealVec) -> Result<RealVec> {
        self.check_dim(q)?;
        Ok(match self {
            FeasibleSet::AllSpace(_) => q.clone(),
            FeasibleSet::Box { lower, upper } => RealVec::from_raw(
                q.as_slice()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v.clamp(lower[i], upper[i]))
                    .collect(),
            ),
            FeasibleSet::Ball { center, radius } => {
                let d = q.sub(center);
                let n = d.norm();
                // The few-ulp guard band keeps the projection exactly
                // idempotent: a rescaled point re-measures within a couple
                // of ulps of the radius and must be returned unchanged.
                if n <= radius * (1.0 + 16.0 * f64::EPSILON) {
                    q.clone()
                } else {
                    center.axpy(radius / n, &d)
                }
            }
            FeasibleSet::NonNegOrthant(_) => RealVec::from_raw(
                q.as_slice().iter().map(|&v| v.max(0.0)).collect(),
            ),
        })
    }

    /// Membership test with componentwise tolerance.
    pub fn contains(&self, q: &RealVec, tol: f64) -> bool {
        if q.dim() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::AllSpace(_) => true,
            FeasibleSet::Box { lower, upper } => (0..q.dim())
                .all(|i| q[i] >= lower[i] - tol && q[i] <= upper[i] + tol),
            FeasibleSet::Ball { center, radius } => q.dist(center) <= radius + tol,
            FeasibleSet::NonNegOrthant(_) => q.as_slice().iter().all(|&v| v >= -tol),
        }
    }
}

/// Generalized (proximal) gradient `(x - proj(x - eta * grad)) / eta`.
///
/// This is the stationarity measure for constrained problems: it vanishes
/// exactly at points satisfying the first-order variational inequality, and
/// it reduces to `grad` on all of space.
pub fn generalized_gradient(
    set: &FeasibleSet,
    x: &RealVec,
    grad: &RealVec,
    eta: f64,
) -> Result<RealVec> {
    if eta <= 0.0 {
        return Err(Error::argument("generalized gradient step must be positive"));
    }
    if !set.contains(x, MEMBERSHIP_TOL) {
        return Err(Error::precondition(
            "generalized gradient evaluated at an infeasible point",
        ));
    }
    let stepped = set.project(&x.axpy(-eta, grad))?;
    Ok(x.sub(&stepped).scale(1.0 / eta))
}
