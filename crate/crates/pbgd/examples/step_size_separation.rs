//! Step-size separation between the joint and alternating drivers.
//!
//! The joint penalty objective has curvature that grows with gamma, so the
//! joint driver needs a small step; the decoupled objective does not, so the
//! alternating driver tolerates the large one. Run with:
//!
//! ```text
//! cargo run --example step_size_separation
//! ```

use pbgd::algorithms::{alt_pbgd, jnt_pbgd, PenaltyConfig, Terminal};
use pbgd::catalog::make_example;
use pbgd::inner::InnerStop;
use pbgd::vecmath::RealVec;

fn main() -> pbgd::Result<()> {
    let problem = make_example("example1")?;
    let x0 = RealVec::scalar(0.0);
    let y0 = RealVec::scalar(0.0);
    println!("example1, gamma = 10, start (x0, y0) = (0, 0)\n");
    println!("{:<10} {:>6} {:>11} {:>9} {:>12}", "driver", "eta", "terminal", "iters", "final gg");
    for eta in [0.1, 0.01] {
        let config = PenaltyConfig::new(10.0, eta)
            .with_inner_stop(InnerStop::StepNormTol { tol: 1e-10, max_steps: 20_000 })
            .with_outer_tol(1e-4)
            .with_max_outer(2_000);
        let alt = alt_pbgd(&problem, &config, &x0)?;
        println!(
            "{:<10} {:>6} {:>11} {:>9} {:>12.3e}",
            "alt", eta, alt.terminal.to_string(), alt.outer_iterations, alt.final_gg_metric
        );
        let jnt = jnt_pbgd(&problem, &config, &x0, &y0)?;
        println!(
            "{:<10} {:>6} {:>11} {:>9} {:>12.3e}",
            "jnt", eta, jnt.terminal.to_string(), jnt.outer_iterations, jnt.final_gg_metric
        );
        if eta == 0.1 && jnt.terminal != Terminal::Converged {
            let t200 = jnt.iterations.iter().find(|it| it.t == 200);
            if let Some(it) = t200 {
                println!(
                    "           joint driver still moving at t = 200: |z_201 - z_200| = {:.3e}",
                    jnt.iterate_change(it, eta)
                );
            }
        }
    }
    Ok(())
}
