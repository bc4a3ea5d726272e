//! Coupled constraints: large constant steps keep working as gamma grows.
//!
//! The saddle-based driver on example2 (lower level constrained by
//! y - x <= 0) converges with eta = 0.05 for both gamma = 10 and 100, and
//! the conservative eta = 1/(10 gamma) choices just take longer.

use pbgd::algorithms::{pbgd_blocc, PenaltyConfig};
use pbgd::catalog::make_example;
use pbgd::inner::InnerStop;
use pbgd::vecmath::RealVec;

fn main() -> pbgd::Result<()> {
    let problem = make_example("example2")?;
    let x0 = RealVec::scalar(0.0);
    println!("{:>7} {:>8} {:>11} {:>8} {:>12} {:>10}", "gamma", "eta", "terminal", "iters", "final gg", "final x");
    for (gamma, eta) in [(10.0, 0.05), (100.0, 0.05), (10.0, 0.01), (100.0, 0.001)] {
        let config = PenaltyConfig::new(gamma, eta)
            .with_inner_stop(InnerStop::StepNormTol { tol: 1e-10, max_steps: 50_000 })
            .with_outer_tol(1e-4)
            .with_max_outer(5_000);
        let rec = pbgd_blocc(&problem, &config, &x0)?;
        println!(
            "{gamma:>7} {eta:>8} {:>11} {:>8} {:>12.3e} {:>10.6}",
            rec.terminal.to_string(),
            rec.outer_iterations,
            rec.final_gg_metric,
            rec.final_x[0]
        );
    }
    Ok(())
}
