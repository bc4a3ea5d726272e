//! Flatness: a huge gradient spike at the lower-level optimum does not stop
//! the value-function-free scheme when the upper objective is flat there.
//!
//! On example3 the upper gradient at y_g*(x) is 1000 in magnitude, yet the
//! flatness constant delta(x) computed from the penalized minimizer stays
//! below 3e-3 across the whole x-range, and the free update bias is tiny.

use pbgd::algorithms::{pbgd_free, FreeMode, PenaltyConfig};
use pbgd::catalog::make_example;
use pbgd::diagnostics::{flatness_delta, free_bias, penalty_value};
use pbgd::inner::InnerStop;
use pbgd::vecmath::RealVec;

fn main() -> pbgd::Result<()> {
    let problem = make_example("example3")?;
    let gamma = 15.0;
    let (c_mod, alpha) = (5.0, 1.1);

    let x_probe = RealVec::scalar(1.25);
    let spike = problem.grad_y_f(&x_probe, &x_probe)[0];
    println!("grad_y f at the lower-level optimum: {spike} (Lipschitz bound >= 1000)");

    let mut max_delta: f64 = 0.0;
    for i in 0..201 {
        let x = -10.0 + 20.0 * i as f64 / 200.0;
        let d = flatness_delta(&problem, gamma, &RealVec::scalar(x), c_mod, alpha, 1e-10)?;
        max_delta = max_delta.max(d);
    }
    println!(
        "max delta(x) over 201 grid points on [-10, 10] with (c, alpha) = ({c_mod}, {alpha}): {max_delta:.6e}"
    );

    let bias = free_bias(&problem, gamma, &RealVec::scalar(1.0), 1e-10)?;
    println!("free update bias at x = 1: {bias:.3e}");

    let config = PenaltyConfig::new(gamma, 0.05)
        .with_inner_stop(InnerStop::StepNormTol { tol: 1e-9, max_steps: 5_000 })
        .with_outer_tol(0.0)
        .with_max_outer(150);
    let rec = pbgd_free(&problem, &config, &RealVec::scalar(2.0), &RealVec::scalar(0.0), FreeMode::Naive)?;
    let xt = rec.final_x[0];
    let h = 1e-3;
    let f = |x: f64| penalty_value(&problem, gamma, &RealVec::scalar(x), 1e-10).map(|p| p.value);
    let grad = if (-10.0..=10.0).contains(&(xt - h)) && (-10.0..=10.0).contains(&(xt + h)) {
        (f(xt + h)? - f(xt - h)?) / (2.0 * h)
    } else if xt + h <= 10.0 {
        (f(xt + h)? - f(xt)?) / h
    } else {
        (f(xt)? - f(xt - h)?) / h
    };
    println!("value-function-free run from x0 = 2: x_T = {xt:.4}, |fd grad F(x_T)| = {:.3e}", grad.abs());
    Ok(())
}
