//! SVM hyperparameter optimization over seeded splits.
//!
//! Trains a linear soft-margin SVM whose per-sample violation bounds are the
//! upper-level variable, on the synthetic two-Gaussian dataset (pass a CSV
//! path and label column as arguments to use real data):
//!
//! ```text
//! cargo run --example svm_hyperparameter
//! cargo run --example svm_hyperparameter -- data/diabetes.csv Outcome 1
//! ```

use pbgd::algorithms::PenaltyConfig;
use pbgd::inner::InnerStop;
use pbgd::svm::{
    load_csv_dataset, run_svm_once, synthetic_dataset, LabelColumn, SvmAlgorithm, SvmConfig,
};

fn main() -> pbgd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (raw, label) = if args.is_empty() {
        (synthetic_dataset(200, 2, 2.0, 0.02, 0), "synthetic two-Gaussian".to_string())
    } else {
        let column = args.get(1).cloned().unwrap_or_else(|| "Outcome".to_string());
        let positive = args.get(2).cloned().unwrap_or_else(|| "1".to_string());
        (
            load_csv_dataset(&args[0], &LabelColumn::Name(column), &positive)?,
            args[0].clone(),
        )
    };
    println!("dataset: {label} ({} rows, {} features)\n", raw.n(), raw.p());

    let svm_config = SvmConfig::default();
    let penalty = PenaltyConfig {
        gamma: 20.0,
        eta_outer: Some(0.05),
        inner_stop: InnerStop::StepNormTol { tol: 1e-8, max_steps: 400 },
        eta_inner_y: Some(0.05),
        eta_inner_lambda: Some(0.05),
        max_outer: 50,
        outer_tol: 0.0,
        record_every: 1,
        seed: 0,
    };
    let seeds = 5;
    for (name, algo) in [("free_cc", SvmAlgorithm::FreeCc), ("blocc", SvmAlgorithm::Blocc)] {
        let mut accs = Vec::new();
        let mut ms = 0.0;
        for seed in 0..seeds {
            let r = run_svm_once(&raw, &svm_config, algo, &penalty, 1e-5, seed)?;
            accs.push(r.test_accuracy);
            ms += r.wall_ms;
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64).sqrt();
        println!(
            "{name:<8} test accuracy {mean:.4} +- {std:.4} over {seeds} splits ({:.1} ms/run)",
            ms / seeds as f64
        );
    }
    Ok(())
}
