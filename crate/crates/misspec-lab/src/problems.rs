//! Decision problems: cost, gradient, the oracle map theta -> w_theta, and
//! the sensitivity matrices (V, Sigma, I, Phi) at the base model point.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{GaussianScaledMeanFamily, ParametricFamily};
use crate::quad::GaussianTensor;

/// Multi-product newsvendor: c(w, z) = a^T (w - z)^+ + d^T (z - w)^+ with
/// per-product holding costs a and backlogging costs d; d_w = d_z.
#[derive(Debug, Clone)]
pub struct NewsvendorProblem {
    pub holding: Vec<f64>,
    pub backlog: Vec<f64>,
}

impl NewsvendorProblem {
    pub fn new(holding: Vec<f64>, backlog: Vec<f64>) -> Result<Self> {
        if holding.len() != backlog.len() || holding.is_empty() {
            return Err(Error::DimensionMismatch(
                "holding and backlog cost vectors must have equal, positive length".into(),
            ));
        }
        if holding.iter().chain(&backlog).any(|&c| !(c > 0.0)) {
            return Err(Error::Config("all unit costs must be positive".into()));
        }
        Ok(NewsvendorProblem { holding, backlog })
    }

    /// Uniform costs a and d across `dim` products.
    pub fn uniform(dim: usize, holding: f64, backlog: f64) -> Result<Self> {
        Self::new(vec![holding; dim], vec![backlog; dim])
    }

    pub fn decision_dim(&self) -> usize {
        self.holding.len()
    }

    /// Critical ratio d_j / (a_j + d_j) per product.
    pub fn critical_ratio(&self, j: usize) -> f64 {
        self.backlog[j] / (self.holding[j] + self.backlog[j])
    }

    pub fn cost(&self, w: &[f64], z: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.decision_dim());
        debug_assert_eq!(z.len(), self.decision_dim());
        w.iter()
            .zip(z)
            .zip(self.holding.iter().zip(&self.backlog))
            .map(|((&wj, &zj), (&aj, &dj))| aj * (wj - zj).max(0.0) + dj * (zj - wj).max(0.0))
            .collect::<Vec<_>>()
            .iter()
            .sum()
    }

    /// Subgradient of the cost in w. At the kink z_j = w_j the overage-side
    /// value a_j is used; the event has measure zero under every continuous
    /// law here, so quadrature identities are unaffected.
    pub fn grad_cost(&self, w: &[f64], z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.decision_dim(),
            w.iter()
                .zip(z)
                .zip(self.holding.iter().zip(&self.backlog))
                .map(|((&wj, &zj), (&aj, &dj))| if zj <= wj { aj } else { -dj }),
        )
    }

    /// Oracle decision under P_theta: componentwise critical-ratio quantile
    /// of N(j theta, 1).
    pub fn oracle_solution(&self, family: &GaussianScaledMeanFamily, theta: f64) -> DVector<f64> {
        assert_eq!(family.data_dim(), self.decision_dim());
        let n01 = Normal::standard();
        let means = family.means(theta);
        DVector::from_iterator(
            self.decision_dim(),
            means
                .iter()
                .enumerate()
                .map(|(j, &mu)| mu + n01.inverse_cdf(self.critical_ratio(j))),
        )
    }

    /// E_{P_theta}[c(w, z)] by kink-aware quadrature; separable across
    /// components, so it reduces to a sum of marginal integrals.
    pub fn expected_cost_model(
        &self,
        family: &GaussianScaledMeanFamily,
        theta: f64,
        w: &[f64],
    ) -> f64 {
        let means = family.means(theta);
        let mut total = 0.0;
        for j in 0..self.decision_dim() {
            let ax = crate::quad::GaussianAxis::legendre_with_kinks(means[j], &[w[j]], 1.0, 16);
            let (aj, dj, wj) = (self.holding[j], self.backlog[j], w[j]);
            total += ax.expect(|zj| aj * (wj - zj).max(0.0) + dj * (zj - wj).max(0.0));
        }
        total
    }
}

/// The Hessian blocks of the expected cost at (w_theta0, theta0): V and Sigma
/// from the smoothness assumption, the Fisher information I, and
/// Phi = Sigma^T V^{-1} Sigma.
#[derive(Debug, Clone)]
pub struct SensitivityMatrices {
    pub v: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub fisher: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub w_theta0: DVector<f64>,
    pub theta0: f64,
}

impl SensitivityMatrices {
    /// d w_theta / d theta at theta0, equal to -Sigma^T V^{-1}.
    pub fn oracle_jacobian(&self) -> DMatrix<f64> {
        -self.sigma.transpose() * self.v_inv()
    }

    pub fn v_inv(&self) -> DMatrix<f64> {
        self.v
            .clone()
            .try_inverse()
            .expect("V is positive definite by construction")
    }
}

/// Builds the sensitivity matrices for newsvendor costs under the
/// scaled-mean Gaussian family. V comes from the analytic separable formula
/// V_jj = (a_j + d_j) p_j(w_j); Sigma from kink-aware quadrature of
/// E[grad_w c * s^T]; Phi from the closed-form identity.
pub fn sensitivity_matrices(
    problem: &NewsvendorProblem,
    family: &GaussianScaledMeanFamily,
    theta0: f64,
) -> Result<SensitivityMatrices> {
    let dw = problem.decision_dim();
    if family.data_dim() != dw {
        return Err(Error::DimensionMismatch(
            "family data dim must match decision dim".into(),
        ));
    }
    let w0 = problem.oracle_solution(family, theta0);
    let means = family.means(theta0);
    let n01 = Normal::standard();

    let mut v = DMatrix::zeros(dw, dw);
    for j in 0..dw {
        let density_at_w = n01.pdf(w0[j] - means[j]);
        v[(j, j)] = (problem.holding[j] + problem.backlog[j]) * density_at_w;
    }

    let kinks: Vec<Vec<f64>> = (0..dw).map(|j| vec![w0[j]]).collect();
    let quad = GaussianTensor::legendre_with_kinks(&means, &kinks);
    let w0_slice: Vec<f64> = w0.iter().copied().collect();
    let mut sigma = DMatrix::zeros(dw, 1);
    for j in 0..dw {
        sigma[(j, 0)] = quad.expect(|z| {
            let g = problem.grad_cost(&w0_slice, z);
            let s = family.score(&[theta0], z).expect("score");
            g[j] * s[0]
        });
    }
    if sigma.norm() < 1e-12 {
        return Err(Error::Assumption(
            "Sigma is rank-deficient (zero norm); sensitivity analysis undefined".into(),
        ));
    }

    let fisher = family.fisher_information(&[theta0])?;
    let v_inv = v.clone().try_inverse().ok_or_else(|| {
        Error::Assumption("V is singular; expected-cost Hessian must be positive definite".into())
    })?;
    let phi = sigma.transpose() * &v_inv * &sigma;

    Ok(SensitivityMatrices {
        v,
        sigma,
        fisher,
        phi,
        w_theta0: w0,
        theta0,
    })
}

/// Central finite-difference Hessian diagonal of the expected model cost in
/// w, for cross-checking the analytic V.
pub fn v_by_finite_difference(
    problem: &NewsvendorProblem,
    family: &GaussianScaledMeanFamily,
    theta0: f64,
) -> DMatrix<f64> {
    let w0 = problem.oracle_solution(family, theta0);
    let dw = problem.decision_dim();
    let mut v = DMatrix::zeros(dw, dw);
    for j in 0..dw {
        let h = 1e-4 * (1.0 + w0[j].abs());
        let mut wp: Vec<f64> = w0.iter().copied().collect();
        let mut wm = wp.clone();
        wp[j] += h;
        wm[j] -= h;
        let w0v: Vec<f64> = w0.iter().copied().collect();
        let fp = problem.expected_cost_model(family, theta0, &wp);
        let f0 = problem.expected_cost_model(family, theta0, &w0v);
        let fm = problem.expected_cost_model(family, theta0, &wm);
        v[(j, j)] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn one_product() -> NewsvendorProblem {
        NewsvendorProblem::uniform(1, 5.0, 1.0).unwrap()
    }

    #[test]
    fn cost_examples() {
        let p = one_product();
        assert_abs_diff_eq!(p.cost(&[3.0], &[3.0]), 0.0);
        assert_abs_diff_eq!(p.cost(&[4.0], &[3.0]), 5.0);
        assert_abs_diff_eq!(p.cost(&[3.0], &[5.0]), 2.0);
    }

    #[test]
    fn grad_examples_and_kink_convention() {
        let p = one_product();
        assert_abs_diff_eq!(p.grad_cost(&[4.0], &[3.0])[0], 5.0);
        assert_abs_diff_eq!(p.grad_cost(&[3.0], &[5.0])[0], -1.0);
        assert_abs_diff_eq!(p.grad_cost(&[3.0], &[3.0])[0], 5.0);
    }

    #[test]
    fn grad_matches_finite_difference_off_kinks() {
        let p = NewsvendorProblem::new(vec![5.0, 2.0], vec![1.0, 3.0]).unwrap();
        let w = [2.0, 4.0];
        let z = [2.7, 3.1];
        let g = p.grad_cost(&w, &z);
        let h = 1e-6;
        for j in 0..2 {
            let mut wp = w;
            let mut wm = w;
            wp[j] += h;
            wm[j] -= h;
            let fd = (p.cost(&wp, &z) - p.cost(&wm, &z)) / (2.0 * h);
            assert_relative_eq!(g[j], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn oracle_solution_one_product() {
        let p = one_product();
        let fam = GaussianScaledMeanFamily::new(1);
        let w = p.oracle_solution(&fam, 3.0);
        let n01 = Normal::standard();
        assert_relative_eq!(w[0], 3.0 + n01.inverse_cdf(1.0 / 6.0), epsilon = 1e-12);
        assert_relative_eq!(w[0], 2.032580, epsilon = 1e-5);
    }

    #[test]
    fn symmetric_costs_pick_the_median() {
        let p = NewsvendorProblem::uniform(1, 2.0, 2.0).unwrap();
        let fam = GaussianScaledMeanFamily::new(1);
        assert_abs_diff_eq!(p.oracle_solution(&fam, 0.0)[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_solution_componentwise_two_products() {
        let p = NewsvendorProblem::uniform(2, 5.0, 1.0).unwrap();
        let fam = GaussianScaledMeanFamily::new(2);
        let w = p.oracle_solution(&fam, 1.0);
        let n01 = Normal::standard();
        let q = n01.inverse_cdf(1.0 / 6.0);
        assert_relative_eq!(w[0], 1.0 + q, epsilon = 1e-12);
        assert_relative_eq!(w[1], 2.0 + q, epsilon = 1e-12);
    }

    #[test]
    fn oracle_minimizes_expected_cost() {
        let p = one_product();
        let fam = GaussianScaledMeanFamily::new(1);
        let w = p.oracle_solution(&fam, 3.0);
        let at = |x: f64| p.expected_cost_model(&fam, 3.0, &[x]);
        let v0 = at(w[0]);
        assert!(at(w[0] + 0.1) > v0);
        assert!(at(w[0] - 0.1) > v0);
        // Cross-check against a numeric minimizer of the quadrature cost.
        let numeric = crate::opt::grid_then_golden(at, w[0] - 2.0, w[0] + 2.0, 401, 1e-10).unwrap();
        assert_abs_diff_eq!(numeric, w[0], epsilon = 1e-6);
    }

    #[test]
    fn expected_cost_half_normal_mean() {
        // Symmetric unit costs at w = 0 under N(0,1): E|z| = sqrt(2/pi).
        let p = NewsvendorProblem::uniform(1, 1.0, 1.0).unwrap();
        let fam = GaussianScaledMeanFamily::new(1);
        assert_relative_eq!(
            p.expected_cost_model(&fam, 0.0, &[0.0]),
            (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn sensitivity_closed_forms_one_product() {
        let p = one_product();
        let fam = GaussianScaledMeanFamily::new(1);
        let m = sensitivity_matrices(&p, &fam, 3.0).unwrap();
        let n01 = Normal::standard();
        let expected = 6.0 * n01.pdf(n01.inverse_cdf(1.0 / 6.0));
        assert_relative_eq!(m.v[(0, 0)], expected, epsilon = 1e-10);
        assert_relative_eq!(m.v[(0, 0)], 1.49914, epsilon = 1e-4);
        assert_relative_eq!(m.sigma[(0, 0)], -expected, epsilon = 1e-8);
        assert_relative_eq!(m.phi[(0, 0)], expected, epsilon = 1e-8);
        assert_relative_eq!(m.fisher[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lemma_identities_two_products() {
        let p = NewsvendorProblem::uniform(2, 5.0, 1.0).unwrap();
        let fam = GaussianScaledMeanFamily::new(2);
        let theta0 = 3.0;
        let m = sensitivity_matrices(&p, &fam, theta0).unwrap();

        // Phi = Sigma^T V^{-1} Sigma.
        let phi_identity = m.sigma.transpose() * m.v_inv() * &m.sigma;
        assert!((phi_identity - &m.phi).norm() < 1e-8);

        // d w_theta / d theta by central differences matches -Sigma^T V^{-1}.
        let h = 1e-5;
        let wp = p.oracle_solution(&fam, theta0 + h);
        let wm = p.oracle_solution(&fam, theta0 - h);
        let fd = (wp - wm) / (2.0 * h);
        let jac = m.oracle_jacobian();
        for j in 0..2 {
            assert_relative_eq!(fd[j], jac[(0, j)], epsilon = 1e-4);
        }

        // First-order condition: E[grad_w c(w0, z)] = 0.
        let means = fam.means(theta0);
        let kinks: Vec<Vec<f64>> = (0..2).map(|j| vec![m.w_theta0[j]]).collect();
        let quad = GaussianTensor::legendre_with_kinks(&means, &kinks);
        let w0: Vec<f64> = m.w_theta0.iter().copied().collect();
        for j in 0..2 {
            let foc = quad.expect(|z| p.grad_cost(&w0, z)[j]);
            assert!(foc.abs() < 1e-8, "first-order condition component {j}: {foc}");
        }
    }

    #[test]
    fn analytic_v_matches_finite_difference_hessian() {
        let p = NewsvendorProblem::uniform(2, 5.0, 1.0).unwrap();
        let fam = GaussianScaledMeanFamily::new(2);
        let m = sensitivity_matrices(&p, &fam, 3.0).unwrap();
        let fd = v_by_finite_difference(&p, &fam, 3.0);
        for j in 0..2 {
            assert_relative_eq!(m.v[(j, j)], fd[(j, j)], max_relative = 1e-4);
        }
    }
}
