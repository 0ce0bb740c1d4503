//! Local asymptotic normality in action: under data from the base law, the
//! log likelihood ratio of Q_{1/sqrt(n)} against P_{theta0} is asymptotically
//! N(-sigma^2/2, sigma^2) with sigma^2 = E[u^2].
//!
//! Run with: cargo run --release --example log_likelihood_ratio

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use misspec_lab::model::{GaussianScaledMeanFamily, ParametricFamily};
use misspec_lab::perturbation::{
    Direction, DirectionSpec, GridSpec, TiltKind, TiltedDistribution,
};

fn main() -> misspec_lab::Result<()> {
    let family = GaussianScaledMeanFamily::new(2);
    let theta0 = 3.0;
    let n = 10_000usize;
    let t = 1.0 / (n as f64).sqrt();
    let reps = 200;

    let direction = Direction::centered(DirectionSpec::Hermite2, &family, theta0)?;
    let sigma_sq = direction.second_moment;
    let tilted = TiltedDistribution::new(
        &family,
        theta0,
        direction,
        t,
        TiltKind::Exponential,
        GridSpec::default(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut llrs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let data = family.sample(&[theta0], n, &mut rng);
        let (llr, truncated) = tilted.log_likelihood_ratio(&data)?;
        assert!(!truncated);
        llrs.push(llr);
    }
    let mean = llrs.iter().sum::<f64>() / reps as f64;
    let var = llrs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;

    println!("direction second moment sigma^2 = {sigma_sq:.4}");
    println!("LLR mean     {mean:+.4}   (theory: {:+.4})", -sigma_sq / 2.0);
    println!("LLR variance {var:.4}    (theory: {sigma_sq:.4})");
    Ok(())
}
