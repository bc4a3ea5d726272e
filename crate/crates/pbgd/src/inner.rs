//! Inner solvers: projected gradient descent on the lower level ("Min
//! Solver") and projected gradient descent-ascent on the lower-level
//! Lagrangian ("MaxMin Solver").
//!
//! Both are deterministic single-threaded state machines designed to be
//! warm-started across outer iterations.

use crate::error::{Error, Result};
use crate::problem::BilevelProblem;
use crate::set::{generalized_gradient, FeasibleSet, MEMBERSHIP_TOL};
use crate::vecmath::RealVec;

/// Reference step used inside the KKT stationarity term.
pub const KKT_ETA_REF: f64 = 1e-2;

/// Inner iteration budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerStop {
    /// Run exactly `k` steps (k >= 1).
    FixedSteps(usize),
    /// Stop when the step norm drops below `tol`, or after `max_steps`.
    StepNormTol { tol: f64, max_steps: usize },
}

impl InnerStop {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InnerStop::FixedSteps(k) if k >= 1 => Ok(()),
            InnerStop::FixedSteps(_) => Err(Error::argument("FixedSteps requires k >= 1")),
            InnerStop::StepNormTol { tol, max_steps } => {
                if tol <= 0.0 || !tol.is_finite() {
                    Err(Error::argument("StepNormTol requires tol > 0"))
                } else if max_steps == 0 {
                    Err(Error::argument("StepNormTol requires max_steps >= 1"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn max_steps(&self) -> usize {
        match *self {
            InnerStop::FixedSteps(k) => k,
            InnerStop::StepNormTol { max_steps, .. } => max_steps,
        }
    }

    fn tol(&self) -> Option<f64> {
        match *self {
            InnerStop::FixedSteps(_) => None,
            InnerStop::StepNormTol { tol, .. } => Some(tol),
        }
    }
}

/// Result of a projected-gradient minimization.
#[derive(Debug, Clone)]
pub struct MinSolve {
    pub y: RealVec,
    pub steps_used: usize,
    pub last_step_norm: f64,
    /// True when a `StepNormTol` budget ran out above its tolerance.
    pub budget_exhausted: bool,
}

/// Projected gradient descent `y <- proj(y - eta * grad(y))` until `stop`.
pub fn pgd_min(
    grad_oracle: impl Fn(&RealVec) -> RealVec,
    set: &FeasibleSet,
    y0: &RealVec,
    eta_inner: f64,
    stop: InnerStop,
) -> Result<MinSolve> {
    stop.validate()?;
    if eta_inner <= 0.0 || !eta_inner.is_finite() {
        return Err(Error::argument("inner step size must be positive"));
    }
    if !set.contains(y0, MEMBERSHIP_TOL) {
        return Err(Error::precondition("pgd_min started outside the feasible set"));
    }
    let mut y = set.project(y0)?;
    let mut last_step = f64::INFINITY;
    let mut steps = 0;
    for _ in 0..stop.max_steps() {
        let g = grad_oracle(&y);
        if !g.is_finite() {
            return Err(Error::numerical(
                "non-finite gradient in pgd_min",
                Some(y.as_slice()),
            ));
        }
        let next = set.project(&y.axpy(-eta_inner, &g))?;
        last_step = next.dist(&y);
        y = next;
        steps += 1;
        if let Some(tol) = stop.tol() {
            if last_step < tol {
                return Ok(MinSolve {
                    y,
                    steps_used: steps,
                    last_step_norm: last_step,
                    budget_exhausted: false,
                });
            }
        }
    }
    let exhausted = stop.tol().map(|t| last_step >= t).unwrap_or(false);
    Ok(MinSolve {
        y,
        steps_used: steps,
        last_step_norm: last_step,
        budget_exhausted: exhausted,
    })
}

/// Saddle point of a lower-level Lagrangian.
#[derive(Debug, Clone)]
pub struct SaddlePoint {
    pub y: RealVec,
    /// Componentwise nonnegative multiplier.
    pub lambda: RealVec,
    /// KKT residual at `(y, lambda)`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SaddleSolve {
    pub point: SaddlePoint,
    pub steps_used: usize,
    pub last_step_norm: f64,
    pub budget_exhausted: bool,
    /// Smallest multiplier over active constraints (|c_i| <= 1e-8), if any.
    /// Strict complementarity wants this positive; reported, never enforced.
    pub min_active_multiplier: Option<f64>,
}

/// Oracles describing one Lagrangian saddle problem
/// `max_{lambda >= 0} min_{y in set} L(y, lambda)`.
pub struct LagrangianOracles<'a> {
    /// `grad_y L(y, lambda)`.
    pub grad_y: &'a dyn Fn(&RealVec, &RealVec) -> RealVec,
    /// `grad_lambda L(y, lambda) = c(x, y)`.
    pub constraint: &'a dyn Fn(&RealVec) -> RealVec,
}

/// Alternating projected gradient descent-ascent on a Lagrangian.
///
/// The `y` block descends with the current multiplier, then the multiplier
/// ascends along the fresh constraint value, projected onto the nonnegative
/// orthant (clipped at `b_lambda` when a cap is supplied).
#[allow(clippy::too_many_arguments)]
pub fn pgda_saddle(
    oracles: LagrangianOracles<'_>,
    set_y: &FeasibleSet,
    d_c: usize,
    b_lambda: Option<f64>,
    y0: &RealVec,
    lambda0: &RealVec,
    eta_y: f64,
    eta_lambda: f64,
    stop: InnerStop,
) -> Result<SaddleSolve> {
    stop.validate()?;
    if eta_y <= 0.0 || eta_lambda <= 0.0 {
        return Err(Error::argument("saddle step sizes must be positive"));
    }
    if lambda0.dim() != d_c {
        return Err(Error::argument("lambda0 dimension does not match d_c"));
    }
    if lambda0.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::precondition("lambda0 must be componentwise nonnegative"));
    }
    if !set_y.contains(y0, MEMBERSHIP_TOL) {
        return Err(Error::precondition("pgda_saddle started outside the feasible set"));
    }
    let clip = |v: f64| match b_lambda {
        Some(cap) => v.clamp(0.0, cap),
        None => v.max(0.0),
    };
    let mut y = set_y.project(y0)?;
    let mut lambda = lambda0.clone();
    let mut last_step = f64::INFINITY;
    let mut steps = 0;
    for _ in 0..stop.max_steps() {
        let gy = (oracles.grad_y)(&y, &lambda);
        if !gy.is_finite() {
            return Err(Error::numerical(
                "non-finite y-gradient in pgda_saddle",
                Some(y.as_slice()),
            ));
        }
        let y_next = set_y.project(&y.axpy(-eta_y, &gy))?;
        let c = (oracles.constraint)(&y_next);
        if !c.is_finite() {
            return Err(Error::numerical(
                "non-finite constraint value in pgda_saddle",
                Some(y_next.as_slice()),
            ));
        }
        let lambda_next = RealVec::from_raw(
            lambda
                .as_slice()
                .iter()
                .zip(c.as_slice())
                .map(|(&l, &ci)| clip(l + eta_lambda * ci))
                .collect(),
        );
        last_step = (y_next.dist(&y).powi(2) + lambda_next.dist(&lambda).powi(2)).sqrt();
        y = y_next;
        lambda = lambda_next;
        steps += 1;
        if let Some(tol) = stop.tol() {
            if last_step < tol {
                break;
            }
        }
    }
    let exhausted = stop.tol().map(|t| last_step >= t).unwrap_or(false);
    let c = (oracles.constraint)(&y);
    let residual = kkt_residual_from_parts(
        set_y,
        &y,
        &(oracles.grad_y)(&y, &lambda),
        &lambda,
        &c,
    )?;
    let min_active = lambda
        .as_slice()
        .iter()
        .zip(c.as_slice())
        .filter(|(_, &ci)| ci.abs() <= 1e-8)
        .map(|(&l, _)| l)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.min(l))));
    Ok(SaddleSolve {
        point: SaddlePoint { y, lambda, residual },
        steps_used: steps,
        last_step_norm: last_step,
        budget_exhausted: exhausted,
        min_active_multiplier: min_active,
    })
}

/// Which lower-level Lagrangian a KKT residual refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LowerLevel {
    /// Plain lower objective `g`.
    LowerG,
    /// Penalized objective `f/gamma + g`.
    LowerGamma(f64),
}

/// KKT residual: stationarity norm + primal violation + complementarity.
///
/// `|| G(set_y, y, grad_y L, eta_ref) || + || max(0, c) || + |<lambda, c>|`
/// with `eta_ref = 1e-2`. For uncoupled problems the two constraint terms
/// are zero and this reduces to the projected stationarity norm.
pub fn kkt_residual(
    problem: &BilevelProblem,
    x: &RealVec,
    y: &RealVec,
    lambda: &RealVec,
    which: LowerLevel,
) -> Result<f64> {
    let gamma = match which {
        LowerLevel::LowerG => None,
        LowerLevel::LowerGamma(g) => Some(g),
    };
    let grad = problem.grad_y_lagrangian(x, y, Some(lambda), gamma);
    let c = match &problem.coupled {
        Some(cc) => cc.eval(x, y),
        None => RealVec::zeros(lambda.dim().max(1)),
    };
    kkt_residual_from_parts(&problem.set_y, y, &grad, lambda, &c)
}

fn kkt_residual_from_parts(
    set_y: &FeasibleSet,
    y: &RealVec,
    grad_y_l: &RealVec,
    lambda: &RealVec,
    c: &RealVec,
) -> Result<f64> {
    if lambda.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::precondition("kkt_residual requires lambda >= 0"));
    }
    let stationarity = generalized_gradient(set_y, y, grad_y_l, KKT_ETA_REF)?.norm();
    let violation = c
        .as_slice()
        .iter()
        .map(|&ci| ci.max(0.0).powi(2))
        .sum::<f64>()
        .sqrt();
    let complementarity = if lambda.dim() == c.dim() {
        lambda.dot(c).abs()
    } else {
        0.0
    };
    Ok(stationarity + violation + complementarity)
}
