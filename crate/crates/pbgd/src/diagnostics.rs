//! High-accuracy evaluation of the penalty objective and its analytical
//! companions: value/solution gaps, the value-function-free update bias,
//! flatness constants, and finite-difference curvature probes.
//!
//! Everything here is offline tooling, so the defaults favour accuracy over
//! speed: inner problems are solved to a 1e-10 step/KKT residual with a
//! generous iteration budget, and the penalized solve is always warm-started
//! from the plain lower-level solution (they are within O(1/gamma) of each
//! other, which matters a lot on oscillatory objectives).

use crate::error::{Error, Result};
use crate::inner::{pgd_min, pgda_saddle, InnerStop, LagrangianOracles};
use crate::problem::BilevelProblem;
use crate::set::MEMBERSHIP_TOL;
use crate::vecmath::RealVec;

/// Accuracy knobs for the diagnostic solves.
#[derive(Debug, Clone, Copy)]
pub struct DiagConfig {
    /// Target step-norm / KKT residual of the inner solves.
    pub precision: f64,
    /// Iteration budget per inner solve.
    pub max_steps: usize,
    /// Lower-level step size; derived from constants when absent.
    pub eta_y: Option<f64>,
    /// Multiplier step size; defaults to the y step.
    pub eta_lambda: Option<f64>,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig { precision: 1e-10, max_steps: 2_000_000, eta_y: None, eta_lambda: None }
    }
}

impl DiagConfig {
    pub fn with_precision(precision: f64) -> Self {
        DiagConfig { precision, ..Default::default() }
    }
}

/// Both lower-level solutions at one `x`, with solve quality attached.
#[derive(Debug, Clone)]
pub struct InnerPair {
    pub y_g: RealVec,
    pub y_gamma: RealVec,
    pub lambda_g: Option<RealVec>,
    pub lambda_gamma: Option<RealVec>,
    /// Final step norm (uncoupled) or KKT residual (coupled) per solve.
    pub residuals: (f64, f64),
    /// Present when an inner budget ran out above its tolerance.
    pub warning: Option<String>,
}

fn inner_eta(problem: &BilevelProblem, gamma: Option<f64>, cfg: &DiagConfig) -> Result<f64> {
    if let Some(e) = cfg.eta_y {
        if e <= 0.0 {
            return Err(Error::argument("diagnostic eta_y must be positive"));
        }
        return Ok(e);
    }
    crate::catalog::default_inner_step(problem, gamma).ok_or_else(|| {
        Error::argument("diagnostics need eta_y or problem constants (l_g1, l_f1)")
    })
}

/// Solve both lower-level problems at `x` to `cfg.precision`.
pub fn solve_inner_pair(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    cfg: &DiagConfig,
) -> Result<InnerPair> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::argument("gamma must be positive"));
    }
    if !problem.set_x.contains(x, MEMBERSHIP_TOL) {
        return Err(Error::precondition("diagnostic point x is not feasible"));
    }
    let stop = InnerStop::StepNormTol { tol: cfg.precision, max_steps: cfg.max_steps };
    let origin = problem.set_y.project(&RealVec::zeros(problem.d_y))?;
    let mut warning = None;
    if let Some(cc) = &problem.coupled {
        let eta_y_g = inner_eta(problem, None, cfg)?;
        let eta_y_p = inner_eta(problem, Some(gamma), cfg)?;
        let eta_l = cfg.eta_lambda.unwrap_or(eta_y_p);
        let b_lambda = problem.constants.as_ref().and_then(|c| c.b_lambda);
        let grad_g = |y: &RealVec, l: &RealVec| problem.grad_y_lagrangian(x, y, Some(l), None);
        let constraint = |y: &RealVec| cc.eval(x, y);
        let sol_g = pgda_saddle(
            LagrangianOracles { grad_y: &grad_g, constraint: &constraint },
            &problem.set_y,
            cc.d_c,
            b_lambda,
            &origin,
            &RealVec::zeros(cc.d_c),
            eta_y_g,
            eta_l,
            stop,
        )?;
        let grad_p =
            |y: &RealVec, l: &RealVec| problem.grad_y_lagrangian(x, y, Some(l), Some(gamma));
        let sol_p = pgda_saddle(
            LagrangianOracles { grad_y: &grad_p, constraint: &constraint },
            &problem.set_y,
            cc.d_c,
            b_lambda,
            &sol_g.point.y,
            &sol_g.point.lambda,
            eta_y_p,
            eta_l,
            stop,
        )?;
        if sol_g.budget_exhausted || sol_p.budget_exhausted {
            warning = Some(format!(
                "saddle budget exhausted above tolerance (residuals {:.3e}, {:.3e})",
                sol_g.point.residual, sol_p.point.residual
            ));
        }
        Ok(InnerPair {
            y_g: sol_g.point.y,
            y_gamma: sol_p.point.y,
            lambda_g: Some(sol_g.point.lambda),
            lambda_gamma: Some(sol_p.point.lambda),
            residuals: (sol_g.point.residual, sol_p.point.residual),
            warning,
        })
    } else {
        let eta_g = inner_eta(problem, None, cfg)?;
        let eta_p = inner_eta(problem, Some(gamma), cfg)?;
        let sol_g = pgd_min(
            |y| problem.grad_y_g(x, y),
            &problem.set_y,
            &origin,
            eta_g,
            stop,
        )?;
        let sol_p = pgd_min(
            |y| problem.grad_y_lagrangian(x, y, None, Some(gamma)),
            &problem.set_y,
            &sol_g.y,
            eta_p,
            stop,
        )?;
        if sol_g.budget_exhausted || sol_p.budget_exhausted {
            warning = Some(format!(
                "inner budget exhausted above tolerance (step norms {:.3e}, {:.3e})",
                sol_g.last_step_norm, sol_p.last_step_norm
            ));
        }
        Ok(InnerPair {
            y_g: sol_g.y,
            y_gamma: sol_p.y,
            lambda_g: None,
            lambda_gamma: None,
            residuals: (sol_g.last_step_norm, sol_p.last_step_norm),
            warning,
        })
    }
}

/// `F_gamma(x)` with solve quality attached.
#[derive(Debug, Clone)]
pub struct PenaltyValue {
    pub value: f64,
    pub inner_residuals: (f64, f64),
    pub warning: Option<String>,
}

fn penalty_from_pair(problem: &BilevelProblem, gamma: f64, x: &RealVec, pair: &InnerPair) -> f64 {
    // F_gamma = f(x, y_gamma) + gamma * (g(x, y_gamma) - g(x, y_g)), with the
    // Lagrangian constraint terms included for coupled problems (they vanish
    // at exact saddles by complementarity, and improve inexact estimates).
    let mut v_gap = problem.g(x, &pair.y_gamma) - problem.g(x, &pair.y_g);
    if let (Some(cc), Some(lg), Some(lp)) =
        (&problem.coupled, &pair.lambda_g, &pair.lambda_gamma)
    {
        v_gap += lp.dot(&cc.eval(x, &pair.y_gamma)) - lg.dot(&cc.eval(x, &pair.y_g));
    }
    problem.f(x, &pair.y_gamma) + gamma * v_gap
}

/// Evaluate the decoupled penalty objective `F_gamma(x)`.
pub fn penalty_value(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    precision: f64,
) -> Result<PenaltyValue> {
    penalty_value_cfg(problem, gamma, x, &DiagConfig::with_precision(precision))
}

pub fn penalty_value_cfg(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    cfg: &DiagConfig,
) -> Result<PenaltyValue> {
    let pair = solve_inner_pair(problem, gamma, x, cfg)?;
    Ok(PenaltyValue {
        value: penalty_from_pair(problem, gamma, x, &pair),
        inner_residuals: pair.residuals,
        warning: pair.warning,
    })
}

/// Value and solution gaps between the bilevel objective and its penalty
/// surrogate at one `x`.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub x: RealVec,
    /// `f` at the lower-level solution (the bilevel objective).
    pub phi_val: f64,
    pub f_gamma_val: f64,
    pub value_gap: f64,
    pub y_g: RealVec,
    pub y_gamma: RealVec,
    pub solution_gap: f64,
    pub inner_residuals: (f64, f64),
    pub warning: Option<String>,
}

pub fn gap_report(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    precision: f64,
) -> Result<GapReport> {
    gap_report_cfg(problem, gamma, x, &DiagConfig::with_precision(precision))
}

pub fn gap_report_cfg(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    cfg: &DiagConfig,
) -> Result<GapReport> {
    let pair = solve_inner_pair(problem, gamma, x, cfg)?;
    let phi_val = problem.f(x, &pair.y_g);
    let f_gamma_val = penalty_from_pair(problem, gamma, x, &pair);
    Ok(GapReport {
        x: x.clone(),
        phi_val,
        f_gamma_val,
        value_gap: (phi_val - f_gamma_val).abs(),
        solution_gap: pair.y_g.dist(&pair.y_gamma),
        y_g: pair.y_g,
        y_gamma: pair.y_gamma,
        inner_residuals: pair.residuals,
        warning: pair.warning,
    })
}

/// Flatness constant `delta(x) = max{0, |f(x,y_g) - f(x,y_gamma)| -
/// c_mod * ||y_g - y_gamma||^alpha}` for a pre-determined modulus and
/// exponent.
pub fn flatness_delta(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    c_mod: f64,
    alpha: f64,
    precision: f64,
) -> Result<f64> {
    flatness_delta_cfg(problem, gamma, x, c_mod, alpha, &DiagConfig::with_precision(precision))
}

pub fn flatness_delta_cfg(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    c_mod: f64,
    alpha: f64,
    cfg: &DiagConfig,
) -> Result<f64> {
    if c_mod < 0.0 || !c_mod.is_finite() {
        return Err(Error::argument("flatness modulus must be nonnegative"));
    }
    if !(1.0..2.0).contains(&alpha) {
        return Err(Error::argument("flatness exponent must lie in [1, 2)"));
    }
    let pair = solve_inner_pair(problem, gamma, x, cfg)?;
    let df = (problem.f(x, &pair.y_g) - problem.f(x, &pair.y_gamma)).abs();
    let gap = pair.y_g.dist(&pair.y_gamma);
    Ok((df - c_mod * gap.powf(alpha)).max(0.0))
}

/// Norm of the update bias of the value-function-free scheme:
/// `|| grad F_gamma(x) - grad_x f(x, y_gamma) ||` from exact-precision inner
/// solutions.
pub fn free_bias(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    precision: f64,
) -> Result<f64> {
    free_bias_cfg(problem, gamma, x, &DiagConfig::with_precision(precision))
}

pub fn free_bias_cfg(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    cfg: &DiagConfig,
) -> Result<f64> {
    let pair = solve_inner_pair(problem, gamma, x, cfg)?;
    let grad_f_gamma = if problem.is_coupled() {
        let grad_p = problem.grad_x_lagrangian(
            x,
            &pair.y_gamma,
            pair.lambda_gamma.as_ref(),
            Some(gamma),
        );
        let grad_g = problem.grad_x_lagrangian(x, &pair.y_g, pair.lambda_g.as_ref(), None);
        grad_p.sub(&grad_g).scale(gamma)
    } else {
        problem.grad_x_f(x, &pair.y_gamma).axpy(
            gamma,
            &problem
                .grad_x_g(x, &pair.y_gamma)
                .sub(&problem.grad_x_g(x, &pair.y_g)),
        )
    };
    Ok(grad_f_gamma.sub(&problem.grad_x_f(x, &pair.y_gamma)).norm())
}

fn assert_unit_direction(d: &RealVec) -> Result<()> {
    if (d.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::argument("probe direction must be a unit vector"));
    }
    Ok(())
}

/// Central second-difference estimate of the directional curvature of
/// `F_gamma` at `x` along a unit `direction`.
///
/// Computes the stencil at `h` and `h/2`; when the two estimates differ by
/// more than 10% the Richardson extrapolation of the pair is returned.
pub fn smoothness_probe(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    direction: &RealVec,
    h: f64,
    precision: f64,
) -> Result<f64> {
    smoothness_probe_cfg(
        problem,
        gamma,
        x,
        direction,
        h,
        &DiagConfig::with_precision(precision),
    )
}

pub fn smoothness_probe_cfg(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    direction: &RealVec,
    h: f64,
    cfg: &DiagConfig,
) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::argument("probe step must be positive"));
    }
    assert_unit_direction(direction)?;
    let stencil_points = [
        x.axpy(h, direction),
        x.axpy(-h, direction),
        x.axpy(0.5 * h, direction),
        x.axpy(-0.5 * h, direction),
    ];
    for p in &stencil_points {
        if !problem.set_x.contains(p, MEMBERSHIP_TOL) {
            return Err(Error::precondition(
                "probe stencil leaves the feasible set; shrink h or move x",
            ));
        }
    }
    let value = |p: &RealVec| -> Result<f64> {
        Ok(penalty_value_cfg(problem, gamma, p, cfg)?.value)
    };
    let center = value(x)?;
    let coarse =
        (value(&stencil_points[0])? - 2.0 * center + value(&stencil_points[1])?) / (h * h);
    let fine = (value(&stencil_points[2])? - 2.0 * center + value(&stencil_points[3])?)
        / (0.25 * h * h);
    let scale = coarse.abs().max(fine.abs()).max(1e-12);
    if (coarse - fine).abs() > 0.1 * scale {
        // Richardson step for the O(h^2) stencil error.
        Ok((4.0 * fine - coarse) / 3.0)
    } else {
        Ok(coarse)
    }
}

/// Same stencil applied to the joint penalty objective
/// `f(x, y) + gamma * (g(x, y) - v(x))` in a `y`-direction at fixed `x`.
///
/// Its curvature scales with `gamma` where the decoupled objective's does
/// not, which is the whole point of the alternating scheme.
pub fn joint_smoothness_probe(
    problem: &BilevelProblem,
    gamma: f64,
    x: &RealVec,
    y: &RealVec,
    direction: &RealVec,
    h: f64,
    precision: f64,
) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::argument("probe step must be positive"));
    }
    assert_unit_direction(direction)?;
    let cfg = DiagConfig::with_precision(precision);
    let plus = y.axpy(h, direction);
    let minus = y.axpy(-h, direction);
    for p in [&plus, &minus, y] {
        if !problem.set_y.contains(p, MEMBERSHIP_TOL) {
            return Err(Error::precondition(
                "probe stencil leaves the feasible set; shrink h or move y",
            ));
        }
    }
    // v(x) is identical at all three stencil points and cancels exactly in
    // the second difference, but keep it so each evaluation is the honest
    // joint objective.
    let pair = solve_inner_pair(problem, gamma, x, &cfg)?;
    let v = problem.g(x, &pair.y_g);
    let joint = |yy: &RealVec| problem.f(x, yy) + gamma * (problem.g(x, yy) - v);
    Ok((joint(&plus) - 2.0 * joint(y) + joint(&minus)) / (h * h))
}
