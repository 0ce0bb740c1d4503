//! Invariant suite behind the `check` CLI subcommand: four cross-cutting
//! Monte Carlo consistency checks that tie the sampled pipelines back to the
//! quadrature asymptotics.

use crate::asymptotics::{Asymptotics, Method};
use crate::calibration::severe_calibrated_direction;
use crate::error::Result;
use crate::experiments::{monte_carlo_cell, CellMonteCarlo, ExperimentConfig};
use crate::perturbation::{DirectionSpec, GridSpec, TiltKind};

#[derive(Debug, Clone)]
pub struct InvariantOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub struct InvariantOptions {
    pub seed: u64,
    /// Overrides the per-check default replication counts when set.
    pub reps: Option<usize>,
    /// Overrides the per-check default grid resolutions when set.
    pub resolution: Option<usize>,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        InvariantOptions {
            seed: 20260826,
            reps: None,
            resolution: None,
        }
    }
}

fn grid(resolution: usize) -> GridSpec {
    GridSpec {
        resolution,
        ..GridSpec::default()
    }
}

fn bias_within_3se(cell: &CellMonteCarlo, method: Method, b: &[f64]) -> (bool, String) {
    let mm = cell.method(method);
    let mut ok = true;
    let mut parts = Vec::new();
    for j in 0..b.len() {
        let gap = mm.mean_scaled_dev[j] - b[j];
        let se = mm.se_scaled_dev[j];
        if gap.abs() > 3.0 * se {
            ok = false;
        }
        parts.push(format!("comp {j}: gap {gap:+.4} vs 3SE {:.4}", 3.0 * se));
    }
    (ok, parts.join("; "))
}

/// Balanced-regime CLT: at alpha = 1/2, n = 10^4, the Monte Carlo mean of
/// sqrt(n) (w_hat^ETO - w*_n) matches the quadrature b^ETO within 3 SE.
pub fn check_balanced_clt(opts: &InvariantOptions) -> Result<InvariantOutcome> {
    let config = ExperimentConfig::benchmark_default(DirectionSpec::Hermite2);
    let problem = config.build_problem()?;
    let family = config.family();
    let direction = config.build_direction()?;
    let asy = Asymptotics::new(problem.clone(), family.clone(), config.theta0)?;
    let b = asy.bias_vector(Method::Eto, &direction);

    let n = 10_000usize;
    let alpha = 0.5;
    let scale = (n as f64).sqrt();
    let cell = monte_carlo_cell(
        &problem,
        &family,
        direction,
        TiltKind::Exponential,
        grid(opts.resolution.unwrap_or(262_144)),
        config.theta0,
        opts.seed,
        n,
        alpha,
        opts.reps.unwrap_or(200),
        scale,
        scale * scale,
    )?;
    let (passed, detail) = bias_within_3se(&cell, Method::Eto, b.as_slice());
    Ok(InvariantOutcome {
        name: "balanced-regime CLT (ETO bias at alpha = 1/2)",
        passed,
        detail,
    })
}

/// Severe-regime bias and regret: at alpha = 0.3, n = 10^4, the mean of
/// n^alpha (w_hat^ETO - w*_n) matches b^ETO within 3 SE and n^{2 alpha} times
/// the mean regret matches the limit regret within 10%. Uses the calibrated
/// direction, whose finite-t expansion remainder is engineered to vanish, so
/// the check measures the machinery rather than second-order drift.
pub fn check_severe_bias(opts: &InvariantOptions) -> Result<InvariantOutcome> {
    let config = ExperimentConfig::benchmark_default(DirectionSpec::Hermite2);
    let problem = config.build_problem()?;
    let family = config.family();
    let n = 10_000usize;
    let alpha = 0.3;
    let t = (n as f64).powf(-alpha);
    let cal = severe_calibrated_direction(&problem, &family, config.theta0, t)?;
    let asy = Asymptotics::new(problem.clone(), family.clone(), config.theta0)?;
    let b = asy.bias_vector(Method::Eto, &cal.direction);
    let r_limit = asy.limit_regret_bias(&b);

    let scale = (n as f64).powf(alpha);
    let cell = monte_carlo_cell(
        &problem,
        &family,
        cal.direction,
        TiltKind::SmoothG,
        grid(opts.resolution.unwrap_or(65_536)),
        config.theta0,
        opts.seed,
        n,
        alpha,
        opts.reps.unwrap_or(200),
        scale,
        scale * scale,
    )?;
    let (bias_ok, bias_detail) = bias_within_3se(&cell, Method::Eto, b.as_slice());
    let mm = cell.method(Method::Eto);
    let rel = (mm.mean_scaled_regret - r_limit) / r_limit;
    let regret_ok = rel.abs() <= 0.10;
    Ok(InvariantOutcome {
        name: "severe-regime bias and regret (ETO at alpha = 0.3)",
        passed: bias_ok && regret_ok,
        detail: format!(
            "{bias_detail}; scaled regret {:.4} vs limit {r_limit:.4} ({:+.1}%)",
            mm.mean_scaled_regret,
            100.0 * rel
        ),
    })
}

/// Mild-regime regret scale: n times the mean regret agrees across
/// n in {10^3, 10^4} within 15% for every method.
pub fn check_mild_scale(opts: &InvariantOptions) -> Result<InvariantOutcome> {
    let config = ExperimentConfig::benchmark_default(DirectionSpec::Hermite2);
    let problem = config.build_problem()?;
    let family = config.family();
    let alpha = 2.0;
    let reps = opts.reps.unwrap_or(400);

    let mut cells = Vec::new();
    for &n in &[1000usize, 10_000] {
        cells.push(monte_carlo_cell(
            &problem,
            &family,
            config.build_direction()?,
            TiltKind::Exponential,
            grid(opts.resolution.unwrap_or(262_144)),
            config.theta0,
            opts.seed,
            n,
            alpha,
            reps,
            1.0,
            n as f64,
        )?);
    }
    let mut passed = true;
    let mut parts = Vec::new();
    for m in Method::ALL {
        let a = cells[0].method(m).mean_scaled_regret;
        let b = cells[1].method(m).mean_scaled_regret;
        let rel = (b - a) / a;
        if rel.abs() > 0.15 {
            passed = false;
        }
        parts.push(format!("{m}: n*regret {a:.4} -> {b:.4} ({:+.1}%)", 100.0 * rel));
    }
    Ok(InvariantOutcome {
        name: "mild-regime regret scale stability (n * mean regret)",
        passed,
        detail: parts.join("; "),
    })
}

/// Impactless direction: with u = beta^T s (the example1 preset), the
/// severe-regime scaled ETO deviation has Monte Carlo mean within 3 SE of 0.
pub fn check_impactless_direction(opts: &InvariantOptions) -> Result<InvariantOutcome> {
    let config = ExperimentConfig::example1();
    let problem = config.build_problem()?;
    let family = config.family();
    let n = config.sample_sizes[0];
    let alpha = config.alphas[0];
    let scale = (n as f64).powf(alpha);
    let cell = monte_carlo_cell(
        &problem,
        &family,
        config.build_direction()?,
        config.tilt,
        grid(opts.resolution.unwrap_or(131_072)),
        config.theta0,
        opts.seed,
        n,
        alpha,
        opts.reps.unwrap_or(100),
        scale,
        scale * scale,
    )?;
    let (passed, detail) = bias_within_3se(&cell, Method::Eto, &vec![0.0; problem.decision_dim()]);
    Ok(InvariantOutcome {
        name: "impactless direction (score-linear ETO bias is 0)",
        passed,
        detail,
    })
}

/// Runs all four invariants in order; never short-circuits, so a report
/// always covers the full suite.
pub fn run_invariant_suite(opts: &InvariantOptions) -> Result<Vec<InvariantOutcome>> {
    Ok(vec![
        check_balanced_clt(opts)?,
        check_severe_bias(opts)?,
        check_mild_scale(opts)?,
        check_impactless_direction(opts)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impactless_direction_check_passes() {
        let opts = InvariantOptions {
            reps: Some(60),
            ..InvariantOptions::default()
        };
        let out = check_impactless_direction(&opts).unwrap();
        assert!(out.passed, "{}", out.detail);
    }

    #[test]
    fn balanced_clt_check_passes_small() {
        let opts = InvariantOptions {
            reps: Some(60),
            ..InvariantOptions::default()
        };
        let out = check_balanced_clt(&opts).unwrap();
        assert!(out.passed, "{}", out.detail);
    }
}
