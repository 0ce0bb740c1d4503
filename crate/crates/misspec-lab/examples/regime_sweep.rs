//! A small Monte Carlo sweep over the three regimes (alpha in {2, 1/2, 0.1})
//! with the Hermite-2 direction, printing the per-cell regret ranking with
//! paired-difference standard errors.
//!
//! Run with: cargo run --release --example regime_sweep

use misspec_lab::experiments::{sweep, ExperimentConfig};
use misspec_lab::perturbation::DirectionSpec;

fn main() -> misspec_lab::Result<()> {
    let mut config = ExperimentConfig::benchmark_default(DirectionSpec::Hermite2);
    config.replications = 100; // desk-scale demo; the acceptance runs use 500
    config.sample_sizes = vec![1000];

    let result = sweep(&config)?;
    for v in &result.verdicts {
        println!(
            "n = {:>5}, alpha = {:>4} ({:?}): lowest mean regret {}",
            v.n, v.alpha, v.regime, v.lowest.name()
        );
        for p in &v.paired {
            println!(
                "    {} vs {}: paired mean diff {:+.3e} (SE {:.1e})",
                p.higher.name(),
                p.lower.name(),
                p.mean_diff,
                p.se_diff
            );
        }
    }
    println!(
        "{} samples, {} failures",
        result.samples.len(),
        result.metadata.failure_count
    );
    Ok(())
}
