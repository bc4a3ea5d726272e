//! Value- and solution-gap laws of the penalty surrogate.
//!
//! On the bias problem both gaps have closed forms: the penalized minimizer
//! sits 5/gamma away from the true lower-level solution, and the surrogate
//! undershoots the bilevel objective by exactly 25/gamma.

use pbgd::catalog::make_example;
use pbgd::diagnostics::gap_report;
use pbgd::vecmath::RealVec;

fn main() -> pbgd::Result<()> {
    let problem = make_example("bias")?;
    let x = RealVec::scalar(0.0);
    println!(
        "{:>6} {:>14} {:>10} {:>14} {:>10}",
        "gamma", "solution_gap", "5/gamma", "value_gap", "25/gamma"
    );
    for gamma in [5.0, 10.0, 20.0, 50.0, 100.0] {
        let rep = gap_report(&problem, gamma, &x, 1e-10)?;
        println!(
            "{gamma:>6} {:>14.9} {:>10.6} {:>14.9} {:>10.6}",
            rep.solution_gap,
            5.0 / gamma,
            rep.value_gap,
            25.0 / gamma
        );
    }
    Ok(())
}
