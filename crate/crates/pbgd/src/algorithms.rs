//! Outer-loop drivers for the penalty reformulation.
//!
//! All five drivers share the same skeleton: estimate a gradient of the
//! penalty objective `F_gamma` from inner solutions (or skip the estimate in
//! the value-function-free variants), take one projected step in `x`, and
//! stop on the realized-step stationarity proxy `||x_t - x_{t+1}|| / eta`.

use crate::error::{Error, Result};
use crate::inner::{pgd_min, pgda_saddle, InnerStop, LagrangianOracles, SaddleSolve};
use crate::problem::BilevelProblem;
use crate::set::MEMBERSHIP_TOL;
use crate::vecmath::RealVec;
use std::time::Instant;

/// Iterate norms above this threshold terminate a run as diverged.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Converged,
    MaxIters,
    Diverged,
}

impl std::fmt::Display for Terminal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Terminal::Converged => write!(f, "converged"),
            Terminal::MaxIters => write!(f, "max_iters"),
            Terminal::Diverged => write!(f, "diverged"),
        }
    }
}

/// Outer-loop configuration shared by every driver.
///
/// Step sizes left as `None` are derived from the problem's constants; when
/// no constants are available the run refuses to start.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    pub gamma: f64,
    pub eta_outer: Option<f64>,
    pub inner_stop: InnerStop,
    pub eta_inner_y: Option<f64>,
    pub eta_inner_lambda: Option<f64>,
    pub max_outer: usize,
    /// Stop once the generalized-gradient proxy drops below this.
    pub outer_tol: f64,
    pub record_every: usize,
    pub seed: u64,
}

impl PenaltyConfig {
    pub fn new(gamma: f64, eta_outer: f64) -> Self {
        PenaltyConfig {
            gamma,
            eta_outer: Some(eta_outer),
            inner_stop: InnerStop::StepNormTol { tol: 1e-9, max_steps: 5_000 },
            eta_inner_y: None,
            eta_inner_lambda: None,
            max_outer: 500,
            outer_tol: 1e-6,
            record_every: 1,
            seed: 0,
        }
    }

    pub fn with_inner_stop(mut self, stop: InnerStop) -> Self {
        self.inner_stop = stop;
        self
    }

    pub fn with_max_outer(mut self, max_outer: usize) -> Self {
        self.max_outer = max_outer;
        self
    }

    pub fn with_outer_tol(mut self, tol: f64) -> Self {
        self.outer_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(Error::argument("gamma must be positive"));
        }
        if self.max_outer == 0 {
            return Err(Error::argument("max_outer must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::argument("record_every must be at least 1"));
        }
        if self.outer_tol < 0.0 {
            return Err(Error::argument("outer_tol must be nonnegative"));
        }
        if let Some(e) = self.eta_outer {
            if e <= 0.0 || !e.is_finite() {
                return Err(Error::argument("eta_outer must be positive"));
            }
        }
        self.inner_stop.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeMode {
    /// Solve the penalized lower level to the inner budget each iteration.
    Naive,
    /// One projected lower-level step per outer iteration.
    SingleLoop,
}

/// Per-iteration snapshot (state before the `x`-update, metrics of the step).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub x: RealVec,
    pub y_gamma: RealVec,
    pub y_g: Option<RealVec>,
    pub lambda_gamma: Option<RealVec>,
    pub lambda_g: Option<RealVec>,
    pub g_t_norm: f64,
    /// Realized-step proxy `||(x_t - x_{t+1}) / eta||` for the generalized
    /// gradient of `F_gamma` (joint step for the joint driver).
    pub gg_metric: f64,
    pub inner_steps_used: usize,
    /// Measured wall-clock time; the one field excluded from determinism.
    pub wall_ms: f64,
}

/// How many inner solves of each kind a run issued.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InnerCallCounts {
    pub min_solves_on_g: usize,
    pub min_solves_on_penalty: usize,
    pub saddle_solves_on_g: usize,
    pub saddle_solves_on_penalty: usize,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub algorithm: &'static str,
    pub iterations: Vec<IterationRecord>,
    pub terminal: Terminal,
    /// Number of x-updates performed.
    pub outer_iterations: usize,
    pub final_x: RealVec,
    pub final_y_gamma: Option<RealVec>,
    pub final_gg_metric: f64,
    /// KKT residual of the last penalized saddle solve (coupled drivers).
    pub final_inner_residual: Option<f64>,
    pub inner_calls: InnerCallCounts,
    pub wall_ms: f64,
}

impl TrajectoryRecord {
    /// Iterate displacement `||z_{t+1} - z_t||` at a recorded iteration.
    pub fn iterate_change(&self, rec: &IterationRecord, eta: f64) -> f64 {
        rec.gg_metric * eta
    }
}

/// Per-iteration callback; return `false` to stop the run (terminal counts
/// as converged, the harness uses this for validation-loss stopping rules).
pub(crate) type Observer<'a> = &'a mut dyn FnMut(usize, &RealVec, &RealVec) -> bool;

struct EffectiveSteps {
    eta_outer: f64,
    /// Step for the plain lower-level solve.
    eta_g: f64,
    /// Step for the penalized lower-level solve.
    eta_penalty: f64,
    eta_lambda: f64,
}

fn resolve_steps(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    joint_update: bool,
) -> Result<EffectiveSteps> {
    let consts = problem.constants.as_ref();
    let eta_outer = match config.eta_outer {
        Some(e) => e,
        None => {
            let c = consts.ok_or_else(|| {
                Error::argument("eta_outer is required when problem constants are absent")
            })?;
            let (l_f1, l_g1, mu_g) = match (c.l_f1, c.l_g1, c.mu_g) {
                (Some(a), Some(b), Some(m)) => (a, b, m),
                _ => {
                    return Err(Error::argument(
                        "eta_outer derivation needs l_f1, l_g1, and mu_g",
                    ))
                }
            };
            if joint_update {
                // Joint objective smoothness scales with gamma.
                1.0 / (2.0 * config.gamma * l_g1)
            } else {
                // Constant-order bound on the penalty objective curvature.
                let l_est = (l_f1 * (1.0 + l_g1 / mu_g).powi(2)).max(1.0);
                1.0 / (2.0 * l_est)
            }
        }
    };
    let derived = |gamma: Option<f64>| -> Result<f64> {
        let c = consts.ok_or_else(|| {
            Error::argument("eta_inner_y is required when problem constants are absent")
        })?;
        let l_g1 = c
            .l_g1
            .ok_or_else(|| Error::argument("inner step derivation needs l_g1"))?;
        let curv = match gamma {
            Some(t) => {
                l_g1 + c
                    .l_f1
                    .ok_or_else(|| Error::argument("inner step derivation needs l_f1"))?
                    / t
            }
            None => l_g1,
        };
        Ok(1.0 / (2.0 * curv))
    };
    let eta_g = match config.eta_inner_y {
        Some(e) if e > 0.0 => e,
        Some(_) => return Err(Error::argument("eta_inner_y must be positive")),
        None => derived(None)?,
    };
    let eta_penalty = match config.eta_inner_y {
        Some(e) => e,
        None => derived(Some(config.gamma))?,
    };
    let eta_lambda = match config.eta_inner_lambda {
        Some(e) if e > 0.0 => e,
        Some(_) => return Err(Error::argument("eta_inner_lambda must be positive")),
        None => eta_penalty,
    };
    Ok(EffectiveSteps { eta_outer, eta_g, eta_penalty, eta_lambda })
}

fn require_uncoupled(problem: &BilevelProblem, name: &str) -> Result<()> {
    if problem.is_coupled() {
        return Err(Error::Unsupported(format!(
            "{name} handles uncoupled problems only; use pbgd_blocc or pbgd_free_cc"
        )));
    }
    Ok(())
}

fn require_coupled(problem: &BilevelProblem, name: &str) -> Result<()> {
    if !problem.is_coupled() {
        return Err(Error::Unsupported(format!(
            "{name} requires a coupled constraint"
        )));
    }
    Ok(())
}

fn require_feasible(set: &crate::set::FeasibleSet, p: &RealVec, what: &str) -> Result<()> {
    if !set.contains(p, MEMBERSHIP_TOL) {
        return Err(Error::precondition(format!("{what} is not feasible")));
    }
    Ok(())
}

/// Shared recording state for one run.
struct Recorder {
    every: usize,
    start: Instant,
    iterations: Vec<IterationRecord>,
    pending: Option<IterationRecord>,
}

impl Recorder {
    fn new(every: usize) -> Self {
        Recorder { every, start: Instant::now(), iterations: Vec::new(), pending: None }
    }

    fn elapsed_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        t: usize,
        x: &RealVec,
        y_gamma: &RealVec,
        y_g: Option<&RealVec>,
        lambda_gamma: Option<&RealVec>,
        lambda_g: Option<&RealVec>,
        g_t_norm: f64,
        gg_metric: f64,
        inner_steps_used: usize,
    ) {
        let rec = IterationRecord {
            t,
            x: x.clone(),
            y_gamma: y_gamma.clone(),
            y_g: y_g.cloned(),
            lambda_gamma: lambda_gamma.cloned(),
            lambda_g: lambda_g.cloned(),
            g_t_norm,
            gg_metric,
            inner_steps_used,
            wall_ms: self.elapsed_ms(),
        };
        if t.is_multiple_of(self.every) {
            self.iterations.push(rec);
            self.pending = None;
        } else {
            self.pending = Some(rec);
        }
    }

    /// Push the last observed iteration if thinning skipped it.
    fn finish(mut self) -> Vec<IterationRecord> {
        if let Some(rec) = self.pending.take() {
            self.iterations.push(rec);
        }
        self.iterations
    }
}

/// Distinguish a diverging run from a genuine error: non-finite oracle
/// output maps to a diverged terminal, everything else propagates.
enum StepOutcome<T> {
    Ok(T),
    Diverged,
}

fn map_inner<T>(res: Result<T>) -> Result<StepOutcome<T>> {
    match res {
        Ok(v) => Ok(StepOutcome::Ok(v)),
        Err(Error::Numerical { .. }) => Ok(StepOutcome::Diverged),
        Err(e) => Err(e),
    }
}

fn diverged(x: &RealVec) -> bool {
    !x.is_finite() || x.norm() > DIVERGENCE_NORM
}

/// Joint-update driver: one lower-level solve for the value-function
/// gradient, then a single projected step on the stacked `(x, y)` pair.
pub fn jnt_pbgd(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
    y0: &RealVec,
) -> Result<TrajectoryRecord> {
    require_uncoupled(problem, "jnt_pbgd")?;
    config.validate()?;
    require_feasible(&problem.set_x, x0, "x0")?;
    require_feasible(&problem.set_y, y0, "y0")?;
    let steps = resolve_steps(problem, config, true)?;
    let gamma = config.gamma;
    let eta = steps.eta_outer;

    let mut x = problem.set_x.project(x0)?;
    let mut y = problem.set_y.project(y0)?;
    let mut warm_g = problem.set_y.project(&RealVec::zeros(problem.d_y))?;
    let mut recorder = Recorder::new(config.record_every);
    let mut calls = InnerCallCounts::default();
    let mut terminal = Terminal::MaxIters;
    let mut gg = f64::INFINITY;
    let mut outer = 0;

    for t in 0..config.max_outer {
        let solve = map_inner(pgd_min(
            |yy| problem.grad_y_g(&x, yy),
            &problem.set_y,
            &warm_g,
            steps.eta_g,
            config.inner_stop,
        ))?;
        let sol_g = match solve {
            StepOutcome::Ok(s) => s,
            StepOutcome::Diverged => {
                terminal = Terminal::Diverged;
                break;
            }
        };
        calls.min_solves_on_g += 1;
        warm_g = sol_g.y.clone();

        let gx = problem
            .grad_x_f(&x, &y)
            .axpy(gamma, &problem.grad_x_g(&x, &y).sub(&problem.grad_x_g(&x, &sol_g.y)));
        let gy = problem.grad_y_f(&x, &y).axpy(gamma, &problem.grad_y_g(&x, &y));
        let joint_grad_norm = (gx.dot(&gx) + gy.dot(&gy)).sqrt();
        if !gx.is_finite() || !gy.is_finite() {
            terminal = Terminal::Diverged;
            break;
        }
        let x_next = problem.set_x.project(&x.axpy(-eta, &gx))?;
        let y_next = problem.set_y.project(&y.axpy(-eta, &gy))?;
        gg = (x.dist(&x_next).powi(2) + y.dist(&y_next).powi(2)).sqrt() / eta;
        recorder.observe(
            t,
            &x,
            &y,
            Some(&sol_g.y),
            None,
            None,
            joint_grad_norm,
            gg,
            sol_g.steps_used,
        );
        x = x_next;
        y = y_next;
        outer = t + 1;
        if diverged(&x) || diverged(&y) {
            terminal = Terminal::Diverged;
            break;
        }
        if gg < config.outer_tol {
            terminal = Terminal::Converged;
            break;
        }
    }

    Ok(TrajectoryRecord {
        algorithm: "jnt_pbgd",
        iterations: recorder.finish(),
        terminal,
        outer_iterations: outer,
        final_gg_metric: gg,
        final_x: x,
        final_y_gamma: Some(y),
        final_inner_residual: None,
        inner_calls: calls,
        wall_ms: 0.0,
    }
    .stamped())
}

impl TrajectoryRecord {
    fn stamped(mut self) -> Self {
        self.wall_ms = self
            .iterations
            .last()
            .map(|r| r.wall_ms)
            .unwrap_or(0.0);
        self
    }
}

/// Alternating driver: solve both lower-level problems, estimate the
/// penalty gradient, and step in `x` alone.
pub fn alt_pbgd(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
) -> Result<TrajectoryRecord> {
    require_uncoupled(problem, "alt_pbgd")?;
    config.validate()?;
    require_feasible(&problem.set_x, x0, "x0")?;
    let steps = resolve_steps(problem, config, false)?;
    let gamma = config.gamma;
    let eta = steps.eta_outer;

    let mut x = problem.set_x.project(x0)?;
    let origin = problem.set_y.project(&RealVec::zeros(problem.d_y))?;
    let mut warm_g = origin.clone();
    let mut warm_p = origin;
    let mut recorder = Recorder::new(config.record_every);
    let mut calls = InnerCallCounts::default();
    let mut terminal = Terminal::MaxIters;
    let mut gg = f64::INFINITY;
    let mut outer = 0;
    let mut last_y = None;

    for t in 0..config.max_outer {
        let sol_g = match map_inner(pgd_min(
            |yy| problem.grad_y_g(&x, yy),
            &problem.set_y,
            &warm_g,
            steps.eta_g,
            config.inner_stop,
        ))? {
            StepOutcome::Ok(s) => s,
            StepOutcome::Diverged => {
                terminal = Terminal::Diverged;
                break;
            }
        };
        calls.min_solves_on_g += 1;
        let sol_p = match map_inner(pgd_min(
            |yy| problem.grad_y_lagrangian(&x, yy, None, Some(gamma)),
            &problem.set_y,
            &warm_p,
            steps.eta_penalty,
            config.inner_stop,
        ))? {
            StepOutcome::Ok(s) => s,
            StepOutcome::Diverged => {
                terminal = Terminal::Diverged;
                break;
            }
        };
        calls.min_solves_on_penalty += 1;
        warm_g = sol_g.y.clone();
        warm_p = sol_p.y.clone();

        let g_t = problem.grad_x_f(&x, &sol_p.y).axpy(
            gamma,
            &problem
                .grad_x_g(&x, &sol_p.y)
                .sub(&problem.grad_x_g(&x, &sol_g.y)),
        );
        if !g_t.is_finite() {
            terminal = Terminal::Diverged;
            break;
        }
        let x_next = problem.set_x.project(&x.axpy(-eta, &g_t))?;
        gg = x.dist(&x_next) / eta;
        recorder.observe(
            t,
            &x,
            &sol_p.y,
            Some(&sol_g.y),
            None,
            None,
            g_t.norm(),
            gg,
            sol_g.steps_used + sol_p.steps_used,
        );
        last_y = Some(sol_p.y);
        x = x_next;
        outer = t + 1;
        if diverged(&x) {
            terminal = Terminal::Diverged;
            break;
        }
        if gg < config.outer_tol {
            terminal = Terminal::Converged;
            break;
        }
    }

    Ok(TrajectoryRecord {
        algorithm: "alt_pbgd",
        iterations: recorder.finish(),
        terminal,
        outer_iterations: outer,
        final_gg_metric: gg,
        final_x: x,
        final_y_gamma: last_y,
        final_inner_residual: None,
        inner_calls: calls,
        wall_ms: 0.0,
    }
    .stamped())
}

/// Value-function-free driver; no plain lower-level solve ever happens.
pub fn pbgd_free(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
    y0: &RealVec,
    mode: FreeMode,
) -> Result<TrajectoryRecord> {
    pbgd_free_observed(problem, config, x0, y0, mode, None)
}

pub(crate) fn pbgd_free_observed(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
    y0: &RealVec,
    mode: FreeMode,
    mut observer: Option<Observer<'_>>,
) -> Result<TrajectoryRecord> {
    require_uncoupled(problem, "pbgd_free")?;
    config.validate()?;
    require_feasible(&problem.set_x, x0, "x0")?;
    require_feasible(&problem.set_y, y0, "y0")?;
    let steps = resolve_steps(problem, config, false)?;
    let gamma = config.gamma;
    let eta = steps.eta_outer;

    let mut x = problem.set_x.project(x0)?;
    let mut y = problem.set_y.project(y0)?;
    let mut recorder = Recorder::new(config.record_every);
    let mut calls = InnerCallCounts::default();
    let mut terminal = Terminal::MaxIters;
    let mut gg = f64::INFINITY;
    let mut outer = 0;

    for t in 0..config.max_outer {
        let (y_fresh, inner_steps) = match mode {
            FreeMode::Naive => {
                let sol = match map_inner(pgd_min(
                    |yy| problem.grad_y_lagrangian(&x, yy, None, Some(gamma)),
                    &problem.set_y,
                    &y,
                    steps.eta_penalty,
                    config.inner_stop,
                ))? {
                    StepOutcome::Ok(s) => s,
                    StepOutcome::Diverged => {
                        terminal = Terminal::Diverged;
                        break;
                    }
                };
                calls.min_solves_on_penalty += 1;
                (sol.y, sol.steps_used)
            }
            FreeMode::SingleLoop => {
                let grad = problem.grad_y_lagrangian(&x, &y, None, Some(gamma));
                if !grad.is_finite() {
                    terminal = Terminal::Diverged;
                    break;
                }
                calls.min_solves_on_penalty += 1;
                (
                    problem.set_y.project(&y.axpy(-steps.eta_penalty, &grad))?,
                    1,
                )
            }
        };
        let g_t = problem.grad_x_f(&x, &y_fresh);
        if !g_t.is_finite() {
            terminal = Terminal::Diverged;
            break;
        }
        let x_next = problem.set_x.project(&x.axpy(-eta, &g_t))?;
        gg = x.dist(&x_next) / eta;
        recorder.observe(t, &x, &y_fresh, None, None, None, g_t.norm(), gg, inner_steps);
        y = y_fresh;
        x = x_next;
        outer = t + 1;
        if diverged(&x) || diverged(&y) {
            terminal = Terminal::Diverged;
            break;
        }
        if gg < config.outer_tol {
            terminal = Terminal::Converged;
            break;
        }
        if let Some(obs) = observer.as_mut() {
            if !obs(t, &x, &y) {
                terminal = Terminal::Converged;
                break;
            }
        }
    }

    Ok(TrajectoryRecord {
        algorithm: match mode {
            FreeMode::Naive => "pbgd_free_naive",
            FreeMode::SingleLoop => "pbgd_free_single",
        },
        iterations: recorder.finish(),
        terminal,
        outer_iterations: outer,
        final_gg_metric: gg,
        final_x: x,
        final_y_gamma: Some(y),
        final_inner_residual: None,
        inner_calls: calls,
        wall_ms: 0.0,
    }
    .stamped())
}

struct SaddleState {
    y: RealVec,
    lambda: RealVec,
}

fn solve_saddle(
    problem: &BilevelProblem,
    x: &RealVec,
    state: &SaddleState,
    gamma: Option<f64>,
    eta_y: f64,
    eta_lambda: f64,
    stop: InnerStop,
) -> Result<SaddleSolve> {
    let cc = problem.coupled.as_ref().expect("coupled constraint checked by caller");
    let grad_y = |y: &RealVec, l: &RealVec| problem.grad_y_lagrangian(x, y, Some(l), gamma);
    let constraint = |y: &RealVec| cc.eval(x, y);
    let b_lambda = problem.constants.as_ref().and_then(|c| c.b_lambda);
    pgda_saddle(
        LagrangianOracles { grad_y: &grad_y, constraint: &constraint },
        &problem.set_y,
        cc.d_c,
        b_lambda,
        &state.y,
        &state.lambda,
        eta_y,
        eta_lambda,
        stop,
    )
}

/// Coupled-constraint driver with two saddle solves per iteration.
pub fn pbgd_blocc(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
) -> Result<TrajectoryRecord> {
    pbgd_blocc_observed(problem, config, x0, None)
}

pub(crate) fn pbgd_blocc_observed(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
    mut observer: Option<Observer<'_>>,
) -> Result<TrajectoryRecord> {
    require_coupled(problem, "pbgd_blocc")?;
    config.validate()?;
    require_feasible(&problem.set_x, x0, "x0")?;
    let steps = resolve_steps(problem, config, false)?;
    let gamma = config.gamma;
    let eta = steps.eta_outer;
    let d_c = problem.coupled.as_ref().unwrap().d_c;

    let mut x = problem.set_x.project(x0)?;
    let origin = problem.set_y.project(&RealVec::zeros(problem.d_y))?;
    let mut warm_g = SaddleState { y: origin.clone(), lambda: RealVec::zeros(d_c) };
    let mut warm_p = SaddleState { y: origin, lambda: RealVec::zeros(d_c) };
    let mut recorder = Recorder::new(config.record_every);
    let mut calls = InnerCallCounts::default();
    let mut terminal = Terminal::MaxIters;
    let mut gg = f64::INFINITY;
    let mut outer = 0;
    let mut last_residual = None;
    let mut last_y = None;

    for t in 0..config.max_outer {
        let sol_g = match map_inner(solve_saddle(
            problem,
            &x,
            &warm_g,
            None,
            steps.eta_g,
            steps.eta_lambda,
            config.inner_stop,
        ))? {
            StepOutcome::Ok(s) => s,
            StepOutcome::Diverged => {
                terminal = Terminal::Diverged;
                break;
            }
        };
        calls.saddle_solves_on_g += 1;
        let sol_p = match map_inner(solve_saddle(
            problem,
            &x,
            &warm_p,
            Some(gamma),
            steps.eta_penalty,
            steps.eta_lambda,
            config.inner_stop,
        ))? {
            StepOutcome::Ok(s) => s,
            StepOutcome::Diverged => {
                terminal = Terminal::Diverged;
                break;
            }
        };
        calls.saddle_solves_on_penalty += 1;
        warm_g = SaddleState { y: sol_g.point.y.clone(), lambda: sol_g.point.lambda.clone() };
        warm_p = SaddleState { y: sol_p.point.y.clone(), lambda: sol_p.point.lambda.clone() };

        // g_t = gamma * (grad_x L_gamma - grad_x L_g) at the fresh saddles.
        let grad_p =
            problem.grad_x_lagrangian(&x, &sol_p.point.y, Some(&sol_p.point.lambda), Some(gamma));
        let grad_g =
            problem.grad_x_lagrangian(&x, &sol_g.point.y, Some(&sol_g.point.lambda), None);
        let g_t = grad_p.sub(&grad_g).scale(gamma);
        if !g_t.is_finite() {
            terminal = Terminal::Diverged;
            break;
        }
        let x_next = problem.set_x.project(&x.axpy(-eta, &g_t))?;
        gg = x.dist(&x_next) / eta;
        recorder.observe(
            t,
            &x,
            &sol_p.point.y,
            Some(&sol_g.point.y),
            Some(&sol_p.point.lambda),
            Some(&sol_g.point.lambda),
            g_t.norm(),
            gg,
            sol_g.steps_used + sol_p.steps_used,
        );
        last_residual = Some(sol_p.point.residual);
        last_y = Some(sol_p.point.y);
        x = x_next;
        outer = t + 1;
        if diverged(&x) {
            terminal = Terminal::Diverged;
            break;
        }
        if gg < config.outer_tol {
            terminal = Terminal::Converged;
            break;
        }
        if let Some(obs) = observer.as_mut() {
            let y_ref = last_y.as_ref().unwrap();
            if !obs(t, &x, y_ref) {
                terminal = Terminal::Converged;
                break;
            }
        }
    }

    Ok(TrajectoryRecord {
        algorithm: "pbgd_blocc",
        iterations: recorder.finish(),
        terminal,
        outer_iterations: outer,
        final_gg_metric: gg,
        final_x: x,
        final_y_gamma: last_y,
        final_inner_residual: last_residual,
        inner_calls: calls,
        wall_ms: 0.0,
    }
    .stamped())
}

/// Value-function-free driver for coupled constraints: one penalized saddle
/// solve per iteration, multiplier information never enters the `x`-update.
pub fn pbgd_free_cc(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
    y0: &RealVec,
) -> Result<TrajectoryRecord> {
    pbgd_free_cc_observed(problem, config, x0, y0, None)
}

pub(crate) fn pbgd_free_cc_observed(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    x0: &RealVec,
    y0: &RealVec,
    mut observer: Option<Observer<'_>>,
) -> Result<TrajectoryRecord> {
    require_coupled(problem, "pbgd_free_cc")?;
    config.validate()?;
    require_feasible(&problem.set_x, x0, "x0")?;
    require_feasible(&problem.set_y, y0, "y0")?;
    let steps = resolve_steps(problem, config, false)?;
    let gamma = config.gamma;
    let eta = steps.eta_outer;
    let d_c = problem.coupled.as_ref().unwrap().d_c;

    let mut x = problem.set_x.project(x0)?;
    let mut warm = SaddleState {
        y: problem.set_y.project(y0)?,
        lambda: RealVec::zeros(d_c),
    };
    let mut recorder = Recorder::new(config.record_every);
    let mut calls = InnerCallCounts::default();
    let mut terminal = Terminal::MaxIters;
    let mut gg = f64::INFINITY;
    let mut outer = 0;
    let mut last_residual = None;

    for t in 0..config.max_outer {
        let sol = match map_inner(solve_saddle(
            problem,
            &x,
            &warm,
            Some(gamma),
            steps.eta_penalty,
            steps.eta_lambda,
            config.inner_stop,
        ))? {
            StepOutcome::Ok(s) => s,
            StepOutcome::Diverged => {
                terminal = Terminal::Diverged;
                break;
            }
        };
        calls.saddle_solves_on_penalty += 1;
        warm = SaddleState { y: sol.point.y.clone(), lambda: sol.point.lambda.clone() };

        let g_t = problem.grad_x_f(&x, &sol.point.y);
        if !g_t.is_finite() {
            terminal = Terminal::Diverged;
            break;
        }
        let x_next = problem.set_x.project(&x.axpy(-eta, &g_t))?;
        gg = x.dist(&x_next) / eta;
        recorder.observe(
            t,
            &x,
            &sol.point.y,
            None,
            Some(&sol.point.lambda),
            None,
            g_t.norm(),
            gg,
            sol.steps_used,
        );
        last_residual = Some(sol.point.residual);
        x = x_next;
        outer = t + 1;
        if diverged(&x) {
            terminal = Terminal::Diverged;
            break;
        }
        if gg < config.outer_tol {
            terminal = Terminal::Converged;
            break;
        }
        if let Some(obs) = observer.as_mut() {
            if !obs(t, &x, &warm.y) {
                terminal = Terminal::Converged;
                break;
            }
        }
    }

    let final_y = Some(warm.y);
    Ok(TrajectoryRecord {
        algorithm: "pbgd_free_cc",
        iterations: recorder.finish(),
        terminal,
        outer_iterations: outer,
        final_gg_metric: gg,
        final_x: x,
        final_y_gamma: final_y,
        final_inner_residual: last_residual,
        inner_calls: calls,
        wall_ms: 0.0,
    }
    .stamped())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::make_example;
    use crate::diagnostics;
    use crate::problem::{BilevelProblem, CoupledConstraint, ProblemConstants};
    use crate::set::FeasibleSet;
    use crate::vecmath::DenseMatrix;
    use std::sync::Arc;

    fn x1(v: f64) -> RealVec {
        RealVec::scalar(v)
    }

    fn tight_inner() -> InnerStop {
        InnerStop::StepNormTol { tol: 1e-12, max_steps: 50_000 }
    }

    fn config(gamma: f64, eta: f64) -> PenaltyConfig {
        PenaltyConfig::new(gamma, eta).with_inner_stop(tight_inner())
    }

    #[test]
    fn alt_first_gradient_on_bias_is_ten() {
        // Exact inner solves at x = 0: y_g = -1, y_gamma = -1.5, so
        // g_0 = 0 + 10 * (1 - 0) = 10, matching grad F_gamma(0) = 2*0 + 10.
        let p = make_example("bias").unwrap();
        let cfg = config(10.0, 0.05).with_max_outer(1);
        let rec = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        let first = &rec.iterations[0];
        assert!((first.g_t_norm - 10.0).abs() < 1e-9, "g_0 = {}", first.g_t_norm);
        assert!((first.y_g.as_ref().unwrap()[0] + 1.0).abs() < 1e-10);
        assert!((first.y_gamma[0] + 1.5).abs() < 1e-10);
    }

    #[test]
    fn alt_bias_converges_to_minus_five() {
        let p = make_example("bias").unwrap();
        let cfg = config(10.0, 0.05).with_outer_tol(1e-8);
        let rec = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        assert_eq!(rec.terminal, Terminal::Converged);
        assert!((rec.final_x[0] + 5.0).abs() < 1e-2, "x_T = {}", rec.final_x[0]);
    }

    #[test]
    fn alt_gradient_estimates_match_closed_form_along_run() {
        // grad F_gamma(x) = 2x + 10 on the bias example.
        let p = make_example("bias").unwrap();
        let cfg = config(10.0, 0.05).with_max_outer(60).with_outer_tol(0.0);
        let rec = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        for it in &rec.iterations {
            let expect = (2.0 * it.x[0] + 10.0).abs();
            assert!(
                (it.g_t_norm - expect).abs() < 1e-8,
                "t={}: g_t {} vs closed form {}",
                it.t,
                it.g_t_norm,
                expect
            );
        }
    }

    #[test]
    fn alt_descent_on_penalty_objective() {
        // F_gamma is 2-smooth on the bias example, so eta <= 1/2 descends.
        let p = make_example("bias").unwrap();
        let cfg = config(10.0, 0.4).with_max_outer(60).with_outer_tol(0.0);
        let rec = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        let mut values: Vec<f64> = rec
            .iterations
            .iter()
            .map(|it| diagnostics::penalty_value(&p, 10.0, &it.x, 1e-11).unwrap().value)
            .collect();
        values.push(diagnostics::penalty_value(&p, 10.0, &rec.final_x, 1e-11).unwrap().value);
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "ascent step: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn alt_example1_converges_fast_with_large_step() {
        let p = make_example("example1").unwrap();
        let cfg = PenaltyConfig::new(10.0, 0.1)
            .with_inner_stop(InnerStop::StepNormTol { tol: 1e-10, max_steps: 20_000 })
            .with_outer_tol(1e-4)
            .with_max_outer(50);
        let rec = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        assert_eq!(rec.terminal, Terminal::Converged);
        assert!(rec.final_gg_metric < 1e-4);
        assert!(rec.outer_iterations <= 50, "took {}", rec.outer_iterations);
    }

    #[test]
    fn jnt_rejects_coupled_problem() {
        let p = make_example("example2").unwrap();
        let cfg = config(10.0, 0.05);
        let err = jnt_pbgd(&p, &cfg, &x1(0.0), &x1(0.0)).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn jnt_decoupled_quadratics_converge() {
        // f = x^2, g = y^2: the y-update factor is 1 - 2 eta gamma, stable
        // for gamma <= 10 at eta = 0.05.
        let p = make_example("quad_decoupled").unwrap();
        for gamma in [1.0, 5.0, 10.0] {
            let cfg = config(gamma, 0.05).with_outer_tol(1e-6).with_max_outer(400);
            let rec = jnt_pbgd(&p, &cfg, &x1(1.0), &x1(1.0)).unwrap();
            assert_eq!(rec.terminal, Terminal::Converged, "gamma = {gamma}");
            assert!(rec.final_x[0].abs() < 1e-4);
            assert!(rec.final_y_gamma.unwrap()[0].abs() < 1e-4);
            assert!(rec.outer_iterations <= 400);
        }
    }

    #[test]
    fn jnt_example1_small_step_converges_within_500() {
        let p = make_example("example1").unwrap();
        let cfg = PenaltyConfig::new(10.0, 0.01)
            .with_inner_stop(InnerStop::StepNormTol { tol: 1e-9, max_steps: 20_000 })
            .with_outer_tol(1e-4)
            .with_max_outer(500);
        let rec = jnt_pbgd(&p, &cfg, &x1(0.0), &x1(0.0)).unwrap();
        assert_eq!(rec.terminal, Terminal::Converged, "gg = {}", rec.final_gg_metric);
        assert!(rec.outer_iterations <= 500, "took {}", rec.outer_iterations);
    }

    #[test]
    fn jnt_example1_large_step_keeps_oscillating() {
        let p = make_example("example1").unwrap();
        let cfg = PenaltyConfig::new(10.0, 0.1)
            .with_inner_stop(InnerStop::StepNormTol { tol: 1e-9, max_steps: 20_000 })
            .with_outer_tol(1e-4)
            .with_max_outer(240);
        let rec = jnt_pbgd(&p, &cfg, &x1(0.0), &x1(0.0)).unwrap();
        assert_ne!(rec.terminal, Terminal::Converged);
        let at_200 = rec.iterations.iter().find(|it| it.t == 200).unwrap();
        assert!(
            rec.iterate_change(at_200, 0.1) > 1e-2,
            "iterate change at t=200: {}",
            rec.iterate_change(at_200, 0.1)
        );
    }

    #[test]
    fn free_naive_bias_stays_at_origin_while_alt_leaves() {
        let p = make_example("bias").unwrap();
        let cfg = config(10.0, 0.05).with_outer_tol(0.0).with_max_outer(200);
        let rec = pbgd_free(&p, &cfg, &x1(0.0), &x1(0.0), FreeMode::Naive).unwrap();
        assert!(rec.final_x[0].abs() < 1e-3, "x_T = {}", rec.final_x[0]);
        // Same budget moves ALT decisively toward -5.
        let alt = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        assert!(alt.final_x[0] < -4.9);
    }

    #[test]
    fn free_single_loop_tracks_true_penalty_metric_when_f_ignores_y() {
        // f = x^2, g = (y - x)^2: the omitted value-function term vanishes,
        // so the true F_gamma = x^2 (as gamma-independent oracle) and the
        // final generalized gradient 2|x_T| must be small.
        let p = BilevelProblem::builder(1, 1)
            .objectives(|x, _| x[0] * x[0], |x, y| (y[0] - x[0]).powi(2))
            .upper_gradients(
                |x, _| RealVec::from_raw(vec![2.0 * x[0]]),
                |_, _| RealVec::zeros(1),
            )
            .lower_gradients(
                |x, y| RealVec::from_raw(vec![-2.0 * (y[0] - x[0])]),
                |x, y| RealVec::from_raw(vec![2.0 * (y[0] - x[0])]),
            )
            .sets(FeasibleSet::AllSpace(1), FeasibleSet::AllSpace(1))
            .constants(ProblemConstants {
                l_f0: Some(0.0),
                l_f1: Some(0.0),
                l_g1: Some(2.0),
                mu_g: Some(2.0),
                l_g2: Some(0.0),
                b_lambda: None,
            })
            .build()
            .unwrap();
        let cfg = config(10.0, 0.1).with_outer_tol(0.0).with_max_outer(200);
        let rec = pbgd_free(&p, &cfg, &x1(1.0), &x1(0.0), FreeMode::SingleLoop).unwrap();
        assert!(rec.final_x[0].abs() < 5e-5, "x_T = {}", rec.final_x[0]);
        let true_gg = 2.0 * rec.final_x[0].abs();
        assert!(true_gg < 1e-4, "generalized gradient of true F: {true_gg}");
    }

    #[test]
    fn free_modes_never_solve_the_plain_lower_level() {
        let p = make_example("bias").unwrap();
        let cfg = config(10.0, 0.05).with_max_outer(30).with_outer_tol(0.0);
        for mode in [FreeMode::Naive, FreeMode::SingleLoop] {
            let rec = pbgd_free(&p, &cfg, &x1(0.0), &x1(0.0), mode).unwrap();
            assert_eq!(rec.inner_calls.min_solves_on_g, 0);
            assert_eq!(rec.inner_calls.saddle_solves_on_g, 0);
            assert_eq!(rec.inner_calls.min_solves_on_penalty, 30);
        }
    }

    #[test]
    fn free_naive_example3_ends_near_stationary() {
        // F_gamma is constant in x on example3, so the finite-difference
        // gradient at the terminal point must be tiny no matter where the
        // trajectory wandered.
        let p = make_example("example3").unwrap();
        let cfg = PenaltyConfig::new(15.0, 0.05)
            .with_inner_stop(InnerStop::StepNormTol { tol: 1e-9, max_steps: 5_000 })
            .with_outer_tol(0.0)
            .with_max_outer(150);
        let rec = pbgd_free(&p, &cfg, &x1(2.0), &x1(0.0), FreeMode::Naive).unwrap();
        let xt = rec.final_x[0];
        let h = 1e-3;
        let fval = |x: f64| {
            diagnostics::penalty_value(&p, 15.0, &x1(x), 1e-10).unwrap().value
        };
        // One-sided difference when the terminal point sits on the box edge.
        let grad = if xt + h <= 10.0 && xt - h >= -10.0 {
            (fval(xt + h) - fval(xt - h)) / (2.0 * h)
        } else if xt + h <= 10.0 {
            (fval(xt + h) - fval(xt)) / h
        } else {
            (fval(xt) - fval(xt - h)) / h
        };
        assert!(grad.abs() <= 0.05, "fd grad F at x_T = {xt}: {grad}");
    }

    #[test]
    fn blocc_rejects_uncoupled_and_free_cc_rejects_coupled_absence() {
        let p = make_example("bias").unwrap();
        let cfg = config(10.0, 0.05);
        assert!(matches!(
            pbgd_blocc(&p, &cfg, &x1(0.0)).unwrap_err(),
            Error::Unsupported(_)
        ));
        assert!(matches!(
            pbgd_free_cc(&p, &cfg, &x1(0.0), &x1(0.0)).unwrap_err(),
            Error::Unsupported(_)
        ));
    }

    #[test]
    fn blocc_example2_converges_for_both_gammas() {
        let p = make_example("example2").unwrap();
        for gamma in [10.0, 100.0] {
            let cfg = PenaltyConfig::new(gamma, 0.05)
                .with_inner_stop(InnerStop::StepNormTol { tol: 1e-10, max_steps: 50_000 })
                .with_outer_tol(1e-4)
                .with_max_outer(400);
            let rec = pbgd_blocc(&p, &cfg, &x1(0.0)).unwrap();
            assert_eq!(rec.terminal, Terminal::Converged, "gamma = {gamma}");
        }
    }

    #[test]
    fn blocc_gradient_matches_hand_derivation_at_exact_saddles() {
        // At x = 1, gamma = 10: lambda_g = 2, lambda_gamma = 2 + e/(gamma(2+cos4)),
        // y_g = y_gamma = 1, and g_t = grad_x f(1,1) - e/(2+cos 4).
        let p = make_example("example2").unwrap();
        let gamma = 10.0;
        let x = x1(1.0);
        let pair = diagnostics::solve_inner_pair(
            &p,
            gamma,
            &x,
            &crate::diagnostics::DiagConfig::with_precision(1e-12),
        )
        .unwrap();
        assert!((pair.y_g[0] - 1.0).abs() < 1e-9);
        assert!((pair.y_gamma[0] - 1.0).abs() < 1e-9);
        let lam_g = pair.lambda_g.as_ref().unwrap()[0];
        let lam_p = pair.lambda_gamma.as_ref().unwrap()[0];
        let e_term = std::f64::consts::E / (2.0 + 4.0f64.cos());
        assert!((lam_g - 2.0).abs() < 1e-9, "lambda_g = {lam_g}");
        assert!(
            (lam_p - (2.0 + e_term / gamma)).abs() < 1e-9,
            "lambda_gamma = {lam_p}"
        );
        let grad_p = p.grad_x_lagrangian(&x, &pair.y_gamma, pair.lambda_gamma.as_ref(), Some(gamma));
        let grad_g = p.grad_x_lagrangian(&x, &pair.y_g, pair.lambda_g.as_ref(), None);
        let g_t = grad_p.sub(&grad_g).scale(gamma)[0];
        let expect = p.grad_x_f(&x, &x1(1.0))[0] - e_term;
        assert!((g_t - expect).abs() < 1e-7, "g_t = {g_t}, expect {expect}");
    }

    /// Coupled problem whose upper objective ignores y: the two saddle
    /// solves coincide, multipliers cancel, and BLOCC's direction reduces to
    /// grad_x f exactly, so both drivers walk the same trajectory.
    fn coupled_quad() -> BilevelProblem {
        BilevelProblem::builder(1, 1)
            .objectives(|x, _| x[0] * x[0], |x, y| (y[0] - 2.0 * x[0]).powi(2))
            .upper_gradients(
                |x, _| RealVec::from_raw(vec![2.0 * x[0]]),
                |_, _| RealVec::zeros(1),
            )
            .lower_gradients(
                |x, y| RealVec::from_raw(vec![-4.0 * (y[0] - 2.0 * x[0])]),
                |x, y| RealVec::from_raw(vec![2.0 * (y[0] - 2.0 * x[0])]),
            )
            .sets(
                FeasibleSet::interval(1, 0.0, 3.0).unwrap(),
                FeasibleSet::interval(1, 0.0, 3.0).unwrap(),
            )
            .coupled(CoupledConstraint::new(
                1,
                Arc::new(|x: &RealVec, y: &RealVec| RealVec::from_raw(vec![y[0] - x[0]])),
                Arc::new(|_: &RealVec, _: &RealVec| DenseMatrix::new(1, 1, vec![-1.0]).unwrap()),
                Arc::new(|_: &RealVec, _: &RealVec| DenseMatrix::new(1, 1, vec![1.0]).unwrap()),
            ))
            .constants(ProblemConstants {
                l_f0: Some(0.0),
                l_f1: Some(0.0),
                l_g1: Some(2.0),
                mu_g: Some(2.0),
                l_g2: Some(0.0),
                b_lambda: Some(12.0),
            })
            .build()
            .unwrap()
    }

    #[test]
    fn free_cc_matches_blocc_when_f_ignores_y() {
        let p = coupled_quad();
        let cfg = config(10.0, 0.05).with_max_outer(100).with_outer_tol(0.0);
        let a = pbgd_blocc(&p, &cfg, &x1(2.0)).unwrap();
        let b = pbgd_free_cc(&p, &cfg, &x1(2.0), &x1(0.0)).unwrap();
        assert_eq!(a.iterations.len(), b.iterations.len());
        for (ra, rb) in a.iterations.iter().zip(&b.iterations) {
            assert!(
                (ra.x[0] - rb.x[0]).abs() <= 1e-8,
                "t={}: {} vs {}",
                ra.t,
                ra.x[0],
                rb.x[0]
            );
            assert!((ra.g_t_norm - rb.g_t_norm).abs() <= 1e-8);
        }
        assert!((a.final_x[0] - b.final_x[0]).abs() <= 1e-8);
    }

    #[test]
    fn every_recorded_iterate_stays_feasible() {
        let tol = 1e-12;
        for name in ["example1", "bias", "quad_decoupled", "fig1_box"] {
            let p = make_example(name).unwrap();
            let cfg = config(10.0, 0.05).with_max_outer(60).with_outer_tol(0.0);
            let x0 = p.set_x.project(&RealVec::zeros(p.d_x)).unwrap();
            let y0 = p.set_y.project(&RealVec::zeros(p.d_y)).unwrap();
            let runs = vec![
                jnt_pbgd(&p, &cfg, &x0, &y0).unwrap(),
                alt_pbgd(&p, &cfg, &x0).unwrap(),
                pbgd_free(&p, &cfg, &x0, &y0, FreeMode::Naive).unwrap(),
                pbgd_free(&p, &cfg, &x0, &y0, FreeMode::SingleLoop).unwrap(),
            ];
            for rec in runs {
                for it in &rec.iterations {
                    assert!(p.set_x.contains(&it.x, tol), "{name}/{}", rec.algorithm);
                    assert!(p.set_y.contains(&it.y_gamma, tol), "{name}/{}", rec.algorithm);
                    if let Some(y_g) = &it.y_g {
                        assert!(p.set_y.contains(y_g, tol));
                    }
                }
                assert!(p.set_x.contains(&rec.final_x, tol));
            }
        }
        for name in ["example2", "fig1_coupled"] {
            let p = make_example(name).unwrap();
            let cfg = config(10.0, 0.05).with_max_outer(40).with_outer_tol(0.0);
            let x0 = p.set_x.project(&RealVec::zeros(p.d_x)).unwrap();
            let y0 = p.set_y.project(&RealVec::zeros(p.d_y)).unwrap();
            for rec in [
                pbgd_blocc(&p, &cfg, &x0).unwrap(),
                pbgd_free_cc(&p, &cfg, &x0, &y0).unwrap(),
            ] {
                for it in &rec.iterations {
                    assert!(p.set_x.contains(&it.x, tol));
                    assert!(p.set_y.contains(&it.y_gamma, tol));
                    if let Some(l) = &it.lambda_gamma {
                        assert!(l.as_slice().iter().all(|&v| v >= 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn identical_configs_give_bit_identical_records() {
        let p = make_example("example1").unwrap();
        let cfg = config(10.0, 0.1).with_max_outer(40).with_outer_tol(0.0);
        let a = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        let b = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        assert_eq!(a.iterations.len(), b.iterations.len());
        for (ra, rb) in a.iterations.iter().zip(&b.iterations) {
            assert_eq!(ra.t, rb.t);
            assert_eq!(ra.x, rb.x);
            assert_eq!(ra.y_gamma, rb.y_gamma);
            assert_eq!(ra.y_g, rb.y_g);
            assert!(ra.g_t_norm.to_bits() == rb.g_t_norm.to_bits());
            assert!(ra.gg_metric.to_bits() == rb.gg_metric.to_bits());
            assert_eq!(ra.inner_steps_used, rb.inner_steps_used);
        }
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(a.terminal, b.terminal);
    }

    #[test]
    fn alt_fully_single_loop_mode_converges() {
        // One warm-started projected step per inner problem per iteration,
        // which is the fully single-loop regime of the alternating driver.
        let p = make_example("bias").unwrap();
        let cfg = PenaltyConfig::new(10.0, 0.02)
            .with_inner_stop(InnerStop::FixedSteps(1))
            .with_outer_tol(0.0)
            .with_max_outer(3_000);
        let rec = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        assert!(
            (rec.final_x[0] + 5.0).abs() < 0.1,
            "single-loop alt ended at {}",
            rec.final_x[0]
        );
        for it in &rec.iterations {
            assert_eq!(it.inner_steps_used, 2, "one step per inner problem");
        }
    }

    #[test]
    fn step_sizes_derive_from_constants_when_absent() {
        let p = make_example("bias").unwrap();
        let mut cfg = config(10.0, 0.05).with_outer_tol(1e-8);
        cfg.eta_outer = None;
        cfg.eta_inner_y = None;
        let rec = alt_pbgd(&p, &cfg, &x1(0.0)).unwrap();
        assert_eq!(rec.terminal, Terminal::Converged);
        assert!((rec.final_x[0] + 5.0).abs() < 1e-2);
        // Without constants, a missing eta_outer must refuse to run.
        let bare = BilevelProblem::builder(1, 1)
            .objectives(|x, _| x[0] * x[0], |_, y| y[0] * y[0])
            .upper_gradients(
                |x, _| RealVec::from_raw(vec![2.0 * x[0]]),
                |_, _| RealVec::zeros(1),
            )
            .lower_gradients(
                |_, _| RealVec::zeros(1),
                |_, y| RealVec::from_raw(vec![2.0 * y[0]]),
            )
            .sets(FeasibleSet::AllSpace(1), FeasibleSet::AllSpace(1))
            .build()
            .unwrap();
        let mut cfg2 = config(10.0, 0.05);
        cfg2.eta_outer = None;
        assert!(matches!(
            alt_pbgd(&bare, &cfg2, &x1(0.0)).unwrap_err(),
            Error::Argument(_)
        ));
    }

    #[test]
    fn divergence_terminates_cleanly() {
        // Quadratic with a catastrophically large step: iterates blow up
        // and the driver must report diverged instead of erroring or hanging.
        let p = make_example("quad_decoupled").unwrap();
        let cfg = PenaltyConfig::new(10.0, 1e7)
            .with_inner_stop(InnerStop::FixedSteps(1))
            .with_outer_tol(0.0)
            .with_max_outer(10_000);
        let rec = pbgd_free(&p, &cfg, &x1(1.0), &x1(1.0), FreeMode::SingleLoop).unwrap();
        assert_eq!(rec.terminal, Terminal::Diverged);
    }

    /// Every compatible driver/problem pair runs to a clean terminal on a
    /// small budget: no panics, no hangs, no infeasible iterates.
    #[test]
    fn smoke_all_catalog_algorithm_combinations() {
        for entry in crate::catalog::catalog() {
            let p = make_example(entry.name).unwrap();
            let cfg = PenaltyConfig::new(entry.default_gamma, entry.default_eta_outer)
                .with_inner_stop(InnerStop::FixedSteps(5))
                .with_outer_tol(0.0)
                .with_max_outer(15);
            let x0 = p.set_x.project(&RealVec::zeros(p.d_x)).unwrap();
            let y0 = p.set_y.project(&RealVec::zeros(p.d_y)).unwrap();
            let records = if p.is_coupled() {
                vec![
                    pbgd_blocc(&p, &cfg, &x0).unwrap(),
                    pbgd_free_cc(&p, &cfg, &x0, &y0).unwrap(),
                ]
            } else {
                vec![
                    jnt_pbgd(&p, &cfg, &x0, &y0).unwrap(),
                    alt_pbgd(&p, &cfg, &x0).unwrap(),
                    pbgd_free(&p, &cfg, &x0, &y0, FreeMode::Naive).unwrap(),
                    pbgd_free(&p, &cfg, &x0, &y0, FreeMode::SingleLoop).unwrap(),
                ]
            };
            for rec in records {
                assert!(
                    !rec.iterations.is_empty() || rec.terminal == Terminal::Diverged,
                    "{}/{}",
                    entry.name,
                    rec.algorithm
                );
                for it in &rec.iterations {
                    assert!(p.set_x.contains(&it.x, 1e-12), "{}/{}", entry.name, rec.algorithm);
                }
            }
        }
    }

    #[test]
    fn infeasible_start_is_a_precondition_error() {
        let p = make_example("example1").unwrap();
        let cfg = config(10.0, 0.05);
        assert!(matches!(
            alt_pbgd(&p, &cfg, &x1(-1.0)).unwrap_err(),
            Error::Precondition(_)
        ));
    }
}
