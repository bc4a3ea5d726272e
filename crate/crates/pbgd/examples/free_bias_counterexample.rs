//! The value-function-free update bias, on the problem built to expose it.
//!
//! With f = x^2 + 10y and g = (y - x + 1)^2, the penalty gradient is
//! 2x + 10 (minimizer x = -5) while the bare upper gradient is 2x
//! (minimizer x = 0): the two point in opposite directions on (-5, 0).
//! The alternating driver walks to -5; the value-function-free one stays
//! at 0, exactly the bias the diagnostics quantify.

use pbgd::algorithms::{alt_pbgd, pbgd_free, FreeMode, PenaltyConfig};
use pbgd::catalog::make_example;
use pbgd::diagnostics::free_bias;
use pbgd::inner::InnerStop;
use pbgd::vecmath::RealVec;

fn main() -> pbgd::Result<()> {
    let problem = make_example("bias")?;
    let gamma = 10.0;
    let config = PenaltyConfig::new(gamma, 0.05)
        .with_inner_stop(InnerStop::StepNormTol { tol: 1e-10, max_steps: 50_000 })
        .with_outer_tol(1e-8)
        .with_max_outer(1_000);
    let x0 = RealVec::scalar(0.0);
    let y0 = RealVec::scalar(0.0);

    let alt = alt_pbgd(&problem, &config, &x0)?;
    let free = pbgd_free(&problem, &config, &x0, &y0, FreeMode::Naive)?;
    println!("bias example, gamma = {gamma}, eta = 0.05, x0 = 0");
    println!("  alternating driver:        x_T = {:+.6}  (penalty minimizer -5)", alt.final_x[0]);
    println!("  value-function-free driver: x_T = {:+.6}  (upper-gradient fixed point 0)", free.final_x[0]);

    println!("\nupdate bias ||grad F_gamma(x) - grad_x f(x, y_gamma)|| along x:");
    for x in [-5.0, -2.5, 0.0, 1.0] {
        let b = free_bias(&problem, gamma, &RealVec::scalar(x), 1e-10)?;
        println!("  x = {x:+.1}: bias = {b:.6}");
    }
    println!("\nat every x the bias equals gamma * |grad_x g(x,y_gamma) - grad_x g(x,y_g)| = 10");
    Ok(())
}
