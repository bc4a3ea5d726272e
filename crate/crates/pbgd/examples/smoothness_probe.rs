//! Curvature probes: the penalty objective stays O(1)-smooth as gamma grows
//! while the joint objective's curvature scales linearly with gamma.
//!
//! A central second-difference stencil estimates the directional curvature
//! of F_gamma on a feasible x-grid for gamma = 10 and 100 (the two should
//! have the same magnitude), and of the joint objective in the y-direction
//! (which should grow tenfold).

use pbgd::catalog::make_example;
use pbgd::diagnostics::{joint_smoothness_probe, smoothness_probe};
use pbgd::vecmath::RealVec;

fn main() -> pbgd::Result<()> {
    let dir = RealVec::scalar(1.0);
    for name in ["example1", "example2"] {
        let problem = make_example(name)?;
        let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
        let mut max10: f64 = 0.0;
        let mut max100: f64 = 0.0;
        for i in 0..41 {
            let x = 0.05 + 2.9 * i as f64 / 40.0;
            let xv = RealVec::scalar(x);
            let p10 = smoothness_probe(&problem, 10.0, &xv, &dir, 1e-3, 1e-10)?;
            let p100 = smoothness_probe(&problem, 100.0, &xv, &dir, 1e-3, 1e-10)?;
            max10 = max10.max(p10.abs());
            max100 = max100.max(p100.abs());
            let ratio = p100.abs() / p10.abs().max(1.0);
            if ratio > worst.0 {
                worst = (ratio, p10, p100);
            }
        }
        println!("{name}: max |D^2 F_10| = {max10:.4}, max |D^2 F_100| = {max100:.4}");
        println!(
            "  worst pointwise ratio |probe(100)| / max(1, |probe(10)|) = {:.3} (probes {:+.4} vs {:+.4})",
            worst.0, worst.1, worst.2
        );
    }

    let bias = make_example("bias")?;
    let x = RealVec::scalar(0.0);
    let y = RealVec::scalar(0.5);
    let j10 = joint_smoothness_probe(&bias, 10.0, &x, &y, &dir, 1e-3, 1e-10)?;
    let j100 = joint_smoothness_probe(&bias, 100.0, &x, &y, &dir, 1e-3, 1e-10)?;
    println!("\nbias, joint objective y-curvature: gamma=10 -> {j10:.3}, gamma=100 -> {j100:.3}");
    println!("  ratio {:.1}x: the joint curvature is 2*gamma, the decoupled one stays at 2", j100 / j10);
    Ok(())
}
