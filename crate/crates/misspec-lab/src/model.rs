//! Parametric distribution families: densities, scores, Fisher information,
//! sampling and maximum-likelihood fitting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::opt;
use crate::quad::GaussianTensor;

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// A parametric family {P_theta} over R^{d_z}. Parameters are passed as
/// slices so the interface stays general in the parameter dimension even
/// though the concrete family below is scalar.
pub trait ParametricFamily: Sync {
    fn param_dim(&self) -> usize;
    fn data_dim(&self) -> usize;

    fn log_density(&self, theta: &[f64], z: &[f64]) -> Result<f64>;

    /// Gradient of `log_density` in theta.
    fn score(&self, theta: &[f64], z: &[f64]) -> Result<DVector<f64>>;

    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>>;

    /// Maximizer of the empirical mean log-likelihood.
    fn mle_fit(&self, data: &[Vec<f64>]) -> Result<DVector<f64>>;

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn rand::RngCore) -> Vec<Vec<f64>>;
}

/// Scaled-mean Gaussian family: independent components with component j
/// (1-indexed) distributed as N(j*theta, 1), theta scalar.
#[derive(Debug, Clone)]
pub struct GaussianScaledMeanFamily {
    data_dim: usize,
}

impl GaussianScaledMeanFamily {
    pub fn new(data_dim: usize) -> Self {
        assert!(data_dim >= 1);
        GaussianScaledMeanFamily { data_dim }
    }

    /// Per-component means (theta, 2*theta, ..., d_z*theta).
    pub fn means(&self, theta: f64) -> Vec<f64> {
        (1..=self.data_dim).map(|j| j as f64 * theta).collect()
    }

    /// Sum of squared scale factors 1^2 + ... + d_z^2; equals the Fisher
    /// information and the normalizer of the closed-form MLE.
    pub fn scale_sq_sum(&self) -> f64 {
        (1..=self.data_dim).map(|j| (j * j) as f64).sum()
    }

    fn check_point(&self, theta: &[f64], z: &[f64]) -> Result<()> {
        if theta.len() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected scalar theta, got dim {}",
                theta.len()
            )));
        }
        if z.len() != self.data_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected z of dim {}, got {}",
                self.data_dim,
                z.len()
            )));
        }
        if !theta[0].is_finite() {
            return Err(Error::OutsideSupport("non-finite theta".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutsideSupport("non-finite data point".into()));
        }
        Ok(())
    }

    /// Numeric MLE via grid + golden section on the mean log-likelihood,
    /// used to cross-check the closed form.
    pub fn mle_fit_numeric(&self, data: &[Vec<f64>]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::DegenerateData("empty data".into()));
        }
        let nll = |theta: f64| -> f64 {
            -data
                .iter()
                .map(|z| self.log_density(&[theta], z).unwrap_or(f64::NEG_INFINITY))
                .sum::<f64>()
                / data.len() as f64
        };
        let start = self.closed_form_mle(data)?;
        opt::grid_then_golden_adaptive(&nll, start, 2.0, 201, 1e-12, 8)
    }

    fn closed_form_mle(&self, data: &[Vec<f64>]) -> Result<f64> {
        let n = data.len();
        if n == 0 {
            return Err(Error::DegenerateData("empty data".into()));
        }
        let mut weighted = 0.0;
        let mut count = 0usize;
        for z in data {
            if z.len() != self.data_dim {
                return Err(Error::DimensionMismatch(format!(
                    "data row of dim {}, expected {}",
                    z.len(),
                    self.data_dim
                )));
            }
            if z.iter().all(|v| v.is_finite()) {
                for (j, &zj) in z.iter().enumerate() {
                    weighted += (j + 1) as f64 * zj;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::DegenerateData("all data rows non-finite".into()));
        }
        Ok(weighted / (count as f64 * self.scale_sq_sum()))
    }
}

impl ParametricFamily for GaussianScaledMeanFamily {
    fn param_dim(&self) -> usize {
        1
    }

    fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn log_density(&self, theta: &[f64], z: &[f64]) -> Result<f64> {
        self.check_point(theta, z)?;
        let t = theta[0];
        let mut ll = 0.0;
        for (j, &zj) in z.iter().enumerate() {
            let dev = zj - (j + 1) as f64 * t;
            ll += -0.5 * dev * dev - LOG_SQRT_2PI;
        }
        Ok(ll)
    }

    fn score(&self, theta: &[f64], z: &[f64]) -> Result<DVector<f64>> {
        self.check_point(theta, z)?;
        let t = theta[0];
        let s: f64 = z
            .iter()
            .enumerate()
            .map(|(j, &zj)| {
                let jf = (j + 1) as f64;
                jf * (zj - jf * t)
            })
            .sum();
        Ok(DVector::from_element(1, s))
    }

    fn fisher_information(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, self.scale_sq_sum()))
    }

    fn mle_fit(&self, data: &[Vec<f64>]) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, self.closed_form_mle(data)?))
    }

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn rand::RngCore) -> Vec<Vec<f64>> {
        let means = self.means(theta[0]);
        (0..n)
            .map(|_| {
                means
                    .iter()
                    .map(|&mu| mu + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }
}

/// Quadrature of E_theta[s s^T]; should match `fisher_information`.
pub fn fisher_information_by_quadrature(
    family: &GaussianScaledMeanFamily,
    theta: f64,
    nodes: usize,
) -> Result<DMatrix<f64>> {
    let quad = GaussianTensor::hermite(&family.means(theta), nodes);
    let v = quad.expect(|z| {
        let s = family.score(&[theta], z).expect("score in quadrature");
        s[0] * s[0]
    });
    if !v.is_finite() {
        return Err(Error::Numeric("Fisher information quadrature".into()));
    }
    Ok(DMatrix::from_element(1, 1, v))
}

/// Quadrature of E_theta[s]; the score must integrate to zero.
pub fn score_mean_by_quadrature(
    family: &GaussianScaledMeanFamily,
    theta: f64,
    nodes: usize,
) -> f64 {
    let quad = GaussianTensor::hermite(&family.means(theta), nodes);
    quad.expect(|z| family.score(&[theta], z).expect("score in quadrature")[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_density_standard_normal_at_mode() {
        let fam = GaussianScaledMeanFamily::new(1);
        assert_relative_eq!(
            fam.log_density(&[0.0], &[0.0]).unwrap(),
            -LOG_SQRT_2PI,
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_density_two_components_at_means() {
        let fam = GaussianScaledMeanFamily::new(2);
        assert_relative_eq!(
            fam.log_density(&[1.0], &[1.0, 2.0]).unwrap(),
            -(2.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_density_unit_deviation() {
        let fam = GaussianScaledMeanFamily::new(1);
        assert_relative_eq!(
            fam.log_density(&[3.0], &[4.0]).unwrap(),
            -0.5 - LOG_SQRT_2PI,
            epsilon = 1e-14
        );
    }

    #[test]
    fn score_values() {
        let fam1 = GaussianScaledMeanFamily::new(1);
        assert_abs_diff_eq!(fam1.score(&[3.0], &[3.0]).unwrap()[0], 0.0);
        assert_abs_diff_eq!(fam1.score(&[3.0], &[4.0]).unwrap()[0], 1.0);
        let fam2 = GaussianScaledMeanFamily::new(2);
        assert_abs_diff_eq!(fam2.score(&[3.0], &[4.0, 7.0]).unwrap()[0], 3.0);
    }

    #[test]
    fn score_matches_finite_difference_of_log_density() {
        let fam = GaussianScaledMeanFamily::new(2);
        let h = 1e-6;
        for (theta, z) in [(3.0, vec![4.0, 7.0]), (-1.5, vec![0.3, 2.2]), (0.0, vec![1.0, -1.0])] {
            let fd = (fam.log_density(&[theta + h], &z).unwrap()
                - fam.log_density(&[theta - h], &z).unwrap())
                / (2.0 * h);
            let s = fam.score(&[theta], &z).unwrap()[0];
            assert_relative_eq!(fd, s, epsilon = 1e-5, max_relative = 1e-5);
        }
    }

    #[test]
    fn fisher_information_closed_forms() {
        for (d, expected) in [(1, 1.0), (2, 5.0), (3, 14.0)] {
            let fam = GaussianScaledMeanFamily::new(d);
            assert_relative_eq!(
                fam.fisher_information(&[0.7]).unwrap()[(0, 0)],
                expected,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn fisher_information_matches_quadrature() {
        let fam = GaussianScaledMeanFamily::new(2);
        let by_quad = fisher_information_by_quadrature(&fam, 3.0, 64).unwrap();
        assert_abs_diff_eq!(by_quad[(0, 0)], 5.0, epsilon = 1e-6);
    }

    #[test]
    fn score_integrates_to_zero() {
        let fam = GaussianScaledMeanFamily::new(3);
        assert!(score_mean_by_quadrature(&fam, 2.0, 64).abs() < 1e-8);
    }

    #[test]
    fn mle_examples() {
        let fam1 = GaussianScaledMeanFamily::new(1);
        assert_relative_eq!(
            fam1.mle_fit(&[vec![2.0], vec![4.0]]).unwrap()[0],
            3.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(fam1.mle_fit(&[vec![5.0]]).unwrap()[0], 5.0, epsilon = 1e-14);
        let fam2 = GaussianScaledMeanFamily::new(2);
        assert_relative_eq!(
            fam2.mle_fit(&[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap()[0],
            2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn mle_closed_form_agrees_with_numeric_maximizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..=3 {
            let fam = GaussianScaledMeanFamily::new(d);
            for n in [1usize, 5, 50] {
                let data = fam.sample(&[1.3], n, &mut rng);
                let closed = fam.mle_fit(&data).unwrap()[0];
                let numeric = fam.mle_fit_numeric(&data).unwrap();
                assert_abs_diff_eq!(closed, numeric, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn mle_rejects_degenerate_data() {
        let fam = GaussianScaledMeanFamily::new(1);
        assert!(fam.mle_fit(&[]).is_err());
        assert!(fam.mle_fit(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let fam = GaussianScaledMeanFamily::new(2);
        let a = fam.sample(&[3.0], 10, &mut ChaCha8Rng::seed_from_u64(42));
        let b = fam.sample(&[3.0], 10, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_moments_match_clt_bounds() {
        let fam = GaussianScaledMeanFamily::new(1);
        let n = 100_000usize;
        let data = fam.sample(&[3.0], n, &mut ChaCha8Rng::seed_from_u64(1));
        let mean: f64 = data.iter().map(|z| z[0]).sum::<f64>() / n as f64;
        let var: f64 = data.iter().map(|z| (z[0] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = 1.0 / (n as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * se_mean);
        // SE of the sample variance of a Gaussian is sqrt(2/(n-1)).
        let se_var = (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se_var);
    }
}
