//! Quadrature rules for expectations against Gaussian bases.
//!
//! Two regimes are needed. Smooth integrands (densities, tilt factors,
//! direction moments) are handled by tensor-product Gauss-Hermite. Integrands
//! with axis-aligned kinks (newsvendor gradients, positive parts) are handled
//! by panelled Gauss-Legendre with explicit breakpoints at the kinks, so each
//! panel sees a smooth function and convergence stays spectral.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Half-width of the truncation window, in standard deviations, used by the
/// panelled Legendre rules. Gaussian mass outside is below 1e-22.
pub const LEGENDRE_WINDOW_SD: f64 = 10.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Nodes and weights of the n-point Gauss-Hermite rule for weight exp(-x^2),
/// computed from the eigendecomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Per-axis quadrature for E[f(z)] with z ~ N(mu, 1): nodes in z-space and
/// weights that already include the Gaussian density.
#[derive(Debug, Clone)]
pub struct GaussianAxis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianAxis {
    /// Gauss-Hermite rule transplanted to N(mu, 1). Exact for polynomials of
    /// degree < 2n against the Gaussian weight.
    ///
    /// Nodes whose weight falls below 1e-24 of the maximum are dropped: below
    /// that level the Golub-Welsch eigenvector components are pure rounding
    /// noise (absolute error ~1e-16 before squaring), and keeping them
    /// poisons integrands that grow toward the tails. The true mass removed
    /// is under 1e-24 per node.
    pub fn hermite(mu: f64, n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        let s = std::f64::consts::SQRT_2;
        let norm = std::f64::consts::PI.sqrt();
        let w_max = w.iter().cloned().fold(0.0_f64, f64::max);
        let cut = 1e-24 * w_max;
        let (nodes, weights) = x
            .iter()
            .zip(&w)
            .filter(|(_, &wi)| wi > cut)
            .map(|(&xi, &wi)| (mu + s * xi, wi / norm))
            .unzip();
        GaussianAxis { nodes, weights }
    }

    /// Panelled Gauss-Legendre rule on [mu - 10, mu + 10] with breakpoints at
    /// the given kink locations. Each panel is at most `panel_width` wide and
    /// carries `pts` Legendre points; weights include the N(mu,1) density.
    pub fn legendre_with_kinks(mu: f64, kinks: &[f64], panel_width: f64, pts: usize) -> Self {
        let lo = mu - LEGENDRE_WINDOW_SD;
        let hi = mu + LEGENDRE_WINDOW_SD;
        let mut breaks: Vec<f64> = vec![lo, hi];
        breaks.extend(kinks.iter().copied().filter(|&k| k > lo && k < hi));
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();

        let (gl_x, gl_w) = gauss_legendre(pts);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let n_panels = ((b - a) / panel_width).ceil().max(1.0) as usize;
            let h = (b - a) / n_panels as f64;
            for p in 0..n_panels {
                let pa = a + p as f64 * h;
                for (&xi, &wi) in gl_x.iter().zip(&gl_w) {
                    let z = pa + 0.5 * h * (xi + 1.0);
                    nodes.push(z);
                    weights.push(0.5 * h * wi * std_normal_pdf(z - mu));
                }
            }
        }
        GaussianAxis { nodes, weights }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Tensor product of per-axis Gaussian rules for expectations of multivariate
/// integrands under independent unit-variance components.
#[derive(Debug, Clone)]
pub struct GaussianTensor {
    axes: Vec<GaussianAxis>,
}

impl GaussianTensor {
    pub fn hermite(means: &[f64], nodes_per_axis: usize) -> Self {
        GaussianTensor {
            axes: means
                .iter()
                .map(|&mu| GaussianAxis::hermite(mu, nodes_per_axis))
                .collect(),
        }
    }

    /// Kink-aware tensor rule; `kinks[j]` lists the kink locations along axis j.
    pub fn legendre_with_kinks(means: &[f64], kinks: &[Vec<f64>]) -> Self {
        Self::legendre_with_kinks_params(means, kinks, 1.0, 16)
    }

    /// As `legendre_with_kinks`, with explicit panel width and points per
    /// panel. Coarser settings keep tensor rules tractable in dimension 3.
    pub fn legendre_with_kinks_params(
        means: &[f64],
        kinks: &[Vec<f64>],
        panel_width: f64,
        pts: usize,
    ) -> Self {
        assert_eq!(means.len(), kinks.len());
        GaussianTensor {
            axes: means
                .iter()
                .zip(kinks)
                .map(|(&mu, k)| GaussianAxis::legendre_with_kinks(mu, k, panel_width, pts))
                .collect(),
        }
    }

    /// Visits every tensor node with its weight. Lets callers accumulate
    /// several expectations in a single sweep.
    pub fn for_each_node(&self, mut f: impl FnMut(&[f64], f64)) {
        let mut z = vec![0.0; self.axes.len()];
        self.visit(0, 1.0, &mut z, &mut f);
    }

    fn visit(
        &self,
        axis: usize,
        w_acc: f64,
        z: &mut Vec<f64>,
        f: &mut impl FnMut(&[f64], f64),
    ) {
        if axis == self.axes.len() {
            f(z, w_acc);
            return;
        }
        let ax = &self.axes[axis];
        for (&node, &w) in ax.nodes.iter().zip(&ax.weights) {
            z[axis] = node;
            self.visit(axis + 1, w_acc * w, z, f);
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// E[f(z)] over the tensor grid.
    pub fn expect(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let dim = self.axes.len();
        let mut z = vec![0.0; dim];
        let mut total = 0.0;
        self.recurse(0, 1.0, &mut z, &mut total, &mut f);
        total
    }

    fn recurse(
        &self,
        axis: usize,
        w_acc: f64,
        z: &mut Vec<f64>,
        total: &mut f64,
        f: &mut impl FnMut(&[f64]) -> f64,
    ) {
        if axis == self.axes.len() {
            *total += w_acc * f(z);
            return;
        }
        let ax = &self.axes[axis];
        for (&node, &w) in ax.nodes.iter().zip(&ax.weights) {
            z[axis] = node;
            self.recurse(axis + 1, w_acc * w, z, total, f);
        }
    }
}

/// Evaluates E[f] with Gauss-Hermite at `nodes` and `2*nodes` points and
/// requires relative agreement below `rtol`. Used as the integrability guard
/// for exponential tilts, whose integrals can genuinely diverge.
pub fn hermite_expect_checked(
    means: &[f64],
    nodes: usize,
    rtol: f64,
    f: impl Fn(&[f64]) -> f64 + Copy,
    what: &str,
) -> Result<f64> {
    let coarse = GaussianTensor::hermite(means, nodes).expect(f);
    let fine = GaussianTensor::hermite(means, 2 * nodes).expect(f);
    if !coarse.is_finite() || !fine.is_finite() {
        return Err(Error::Numeric(format!("{what}: non-finite quadrature")));
    }
    let denom = fine.abs().max(1e-300);
    if ((fine - coarse) / denom).abs() > rtol {
        return Err(Error::Divergence(format!(
            "{what}: unstable under node doubling ({nodes} -> {} nodes: {coarse:.9e} vs {fine:.9e})",
            2 * nodes
        )));
    }
    Ok(fine)
}
