//! Locally misspecified ground truths: a base model point, a perturbation
//! direction u(z), a magnitude t = n^{-alpha}, and one of three tilt
//! constructions (exponential, positive-part linear, smooth bounded).
//!
//! Sampling uses an exact categorical draw from a tensor-grid discretization
//! of the tilted density rather than rejection: unbounded directions make
//! rejection envelopes fragile, while grid error is quantifiable and shrinks
//! with resolution. Cell weights are accumulated in log space so strongly
//! tilted configurations normalize without overflow.

use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GaussianScaledMeanFamily, ParametricFamily};
use crate::quad::{hermite_expect_checked, GaussianTensor};

/// Relative tolerance of the node-doubling stability guard on the
/// normalization integral of exponential tilts.
pub const NORMALIZATION_GUARD_RTOL: f64 = 1e-6;

/// Hermite nodes per axis for direction moments and normalization integrals.
pub const SMOOTH_QUAD_NODES: usize = 128;

// ---------------------------------------------------------------------------
// Directions

/// Built-in perturbation direction vocabulary; `mu` below denotes the
/// per-component means of the base model point.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectionSpec {
    /// prod_j z_j^2
    ProdSq,
    /// prod_j (z_j - mu_j)^2 / 2
    ProdCenteredSq,
    /// beta^T s_theta0(z); lies in the score span, hence impactless.
    ScoreLinear { beta: Vec<f64> },
    /// sum_j ((z_j - mu_j)^2 - 1)
    Hermite2,
}

enum RawDirection {
    Spec(DirectionSpec),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    /// u(z) = sum_j f_j(z_j); keeps the per-axis factorization available.
    CustomSeparable(Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>),
}

impl fmt::Debug for RawDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawDirection::Spec(s) => write!(f, "{s:?}"),
            RawDirection::Custom(_) => write!(f, "Custom(..)"),
            RawDirection::CustomSeparable(fs) => write!(f, "CustomSeparable({} axes)", fs.len()),
        }
    }
}

/// A perturbation direction u(z), centered so E_{theta0}[u] = 0, with its
/// second moment under the base point stored.
#[derive(Debug, Clone)]
pub struct Direction {
    raw: Arc<RawDirection>,
    means: Vec<f64>,
    theta0: f64,
    /// Subtracted centering constant E_{theta0}[raw u].
    pub offset: f64,
    /// E_{theta0}[u^2] of the centered direction.
    pub second_moment: f64,
}

impl Direction {
    /// Centers a vocabulary direction against the base point by quadrature.
    pub fn centered(
        spec: DirectionSpec,
        family: &GaussianScaledMeanFamily,
        theta0: f64,
    ) -> Result<Self> {
        if let DirectionSpec::ScoreLinear { beta } = &spec {
            if beta.len() != family.param_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "score_linear beta of dim {}, parameter dim {}",
                    beta.len(),
                    family.param_dim()
                )));
            }
        }
        Self::build(RawDirection::Spec(spec), family, theta0)
    }

    /// Centers an arbitrary scalar function of z. Intended for experiments
    /// outside the config vocabulary and for tests.
    pub fn centered_custom(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        family: &GaussianScaledMeanFamily,
        theta0: f64,
    ) -> Result<Self> {
        Self::build(RawDirection::Custom(Arc::new(f)), family, theta0)
    }

    /// Centers a direction of the form u(z) = sum_j f_j(z_j), one term per
    /// axis; the additive structure is preserved for per-axis sampling.
    pub fn centered_separable(
        fs: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
        family: &GaussianScaledMeanFamily,
        theta0: f64,
    ) -> Result<Self> {
        if fs.len() != family.data_dim() {
            return Err(Error::DimensionMismatch(format!(
                "separable direction with {} axis terms, data dim {}",
                fs.len(),
                family.data_dim()
            )));
        }
        Self::build(RawDirection::CustomSeparable(fs), family, theta0)
    }

    fn build(raw: RawDirection, family: &GaussianScaledMeanFamily, theta0: f64) -> Result<Self> {
        let means = family.means(theta0);
        let eval_raw = |z: &[f64]| raw_eval(&raw, &means, theta0, z);
        let quad = GaussianTensor::hermite(&means, SMOOTH_QUAD_NODES);
        let mean = quad.expect(|z| eval_raw(z));
        if !mean.is_finite() {
            return Err(Error::Direction("mean not finite".into()));
        }
        let second = quad.expect(|z| {
            let u = eval_raw(z) - mean;
            u * u
        });
        if !second.is_finite() {
            return Err(Error::Direction("second moment not finite".into()));
        }
        Ok(Direction {
            raw: Arc::new(raw),
            means,
            theta0,
            offset: mean,
            second_moment: second,
        })
    }

    /// The centered direction value at z.
    pub fn eval(&self, z: &[f64]) -> f64 {
        raw_eval(&self.raw, &self.means, self.theta0, z) - self.offset
    }

    /// True when u separates into a sum of per-axis terms, which lets the
    /// exponential tilt factor into independent per-axis laws.
    pub fn is_additive(&self) -> bool {
        match self.raw.as_ref() {
            RawDirection::Spec(DirectionSpec::Hermite2)
            | RawDirection::Spec(DirectionSpec::ScoreLinear { .. }) => true,
            RawDirection::Spec(_) => self.means.len() == 1,
            RawDirection::CustomSeparable(_) => true,
            RawDirection::Custom(_) => false,
        }
    }

    /// For additive directions, which axes the direction actually varies
    /// on, detected by probing the per-axis terms at a handful of points
    /// (enough to distinguish any low-degree polynomial from a constant).
    /// None for non-additive directions.
    pub fn active_axes(&self) -> Option<Vec<bool>> {
        if !self.is_additive() {
            return None;
        }
        Some(
            (0..self.means.len())
                .map(|j| {
                    let mu = self.means[j];
                    let vals: Vec<f64> = [-3.1, -1.7, 0.0, 1.3, 2.9]
                        .iter()
                        .map(|d| self.axis_component(j, mu + d))
                        .collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    hi - lo > 1e-12 * (1.0 + hi.abs().max(lo.abs()))
                })
                .collect(),
        )
    }

    /// Per-axis term of an additive direction, uncentered.
    pub fn axis_component(&self, axis: usize, z: f64) -> f64 {
        let mu = self.means[axis];
        let j = (axis + 1) as f64;
        match self.raw.as_ref() {
            RawDirection::Spec(DirectionSpec::Hermite2) => {
                let d = z - mu;
                d * d - 1.0
            }
            RawDirection::Spec(DirectionSpec::ScoreLinear { beta }) => beta[0] * j * (z - mu),
            RawDirection::Spec(DirectionSpec::ProdSq) => z * z,
            RawDirection::Spec(DirectionSpec::ProdCenteredSq) => {
                let d = z - mu;
                0.5 * d * d
            }
            RawDirection::CustomSeparable(fs) => fs[axis](z),
            RawDirection::Custom(_) => unreachable!("custom directions are never additive"),
        }
    }
}

fn raw_eval(raw: &RawDirection, means: &[f64], theta0: f64, z: &[f64]) -> f64 {
    match raw {
        RawDirection::Spec(DirectionSpec::ProdSq) => z.iter().map(|&v| v * v).product(),
        RawDirection::Spec(DirectionSpec::ProdCenteredSq) => z
            .iter()
            .zip(means)
            .map(|(&v, &mu)| 0.5 * (v - mu) * (v - mu))
            .product(),
        RawDirection::Spec(DirectionSpec::ScoreLinear { beta }) => {
            let s: f64 = z
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let jf = (j + 1) as f64;
                    jf * (v - jf * theta0)
                })
                .sum();
            beta[0] * s
        }
        RawDirection::Spec(DirectionSpec::Hermite2) => z
            .iter()
            .zip(means)
            .map(|(&v, &mu)| (v - mu) * (v - mu) - 1.0)
            .sum(),
        RawDirection::Custom(f) => f(z),
        RawDirection::CustomSeparable(fs) => z.iter().zip(fs).map(|(&v, f)| f(v)).sum(),
    }
}

// ---------------------------------------------------------------------------
// Tilt kinds

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltKind {
    /// dQ_t = exp(t u) / C_t dP
    Exponential,
    /// dQ_t = [1 + t u]_+ / C_t dP
    ReluLinear,
    /// dQ_t = (1 + g(t u)) / C_t dP with bounded monotone g
    SmoothG,
}

/// The bounded transfer function of the SmoothG tilt: identity on
/// [-1/2, 1/2], cubic-blended to +-1 by |x| = 3/2, constant beyond.
pub fn smooth_g(x: f64) -> f64 {
    let a = x.abs();
    let v = if a <= 0.5 {
        a
    } else if a <= 1.5 {
        let s = a - 0.5;
        0.5 + s - 0.5 * s * s
    } else {
        1.0
    };
    v.copysign(x)
}

fn log_tilt_factor(kind: TiltKind, tu: f64) -> f64 {
    match kind {
        TiltKind::Exponential => tu,
        TiltKind::ReluLinear => {
            let v = 1.0 + tu;
            if v > 0.0 {
                v.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        TiltKind::SmoothG => {
            let v = 1.0 + smooth_g(tu);
            if v > 0.0 {
                v.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

fn tilt_factor(kind: TiltKind, tu: f64) -> f64 {
    match kind {
        TiltKind::Exponential => tu.exp(),
        TiltKind::ReluLinear => (1.0 + tu).max(0.0),
        TiltKind::SmoothG => 1.0 + smooth_g(tu),
    }
}

// ---------------------------------------------------------------------------
// Misspecification regimes

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Regime {
    Mild,
    Balanced,
    Severe,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Mild => write!(f, "mild"),
            Regime::Balanced => write!(f, "balanced"),
            Regime::Severe => write!(f, "severe"),
        }
    }
}

/// Sample size and misspecification exponent; the tilt magnitude is n^{-alpha}.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RegimeConfig {
    pub alpha: f64,
    pub n: usize,
}

impl RegimeConfig {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        Ok(RegimeConfig { alpha, n })
    }

    pub fn t(&self) -> f64 {
        (self.n as f64).powf(-self.alpha)
    }

    pub fn regime(&self) -> Regime {
        if self.alpha > 0.5 {
            Regime::Mild
        } else if self.alpha == 0.5 {
            Regime::Balanced
        } else {
            Regime::Severe
        }
    }
}

// ---------------------------------------------------------------------------
// Tilted distribution with tensor-grid sampler

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// Cells per axis.
    pub resolution: usize,
    /// Half-width of the per-axis window, in standard deviations around the
    /// component mean.
    pub half_width_sd: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 512,
            half_width_sd: 8.0,
        }
    }
}

#[derive(Debug)]
enum Grid {
    /// Independent per-axis categorical laws; valid when the tilt factorizes.
    PerAxis(Vec<AxisGrid>),
    /// Full tensor categorical law over all cells.
    Tensor {
        axis_nodes: Vec<Vec<f64>>,
        probs: Vec<f64>,
        sampler: WeightedIndex<f64>,
    },
}

#[derive(Debug)]
struct AxisGrid {
    nodes: Vec<f64>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

/// The ground-truth law Q_t: base point, direction, magnitude, tilt kind,
/// normalization constant, and a tensor-grid discretization for sampling.
#[derive(Debug)]
pub struct TiltedDistribution {
    pub family: GaussianScaledMeanFamily,
    pub theta0: f64,
    pub direction: Direction,
    pub t: f64,
    pub kind: TiltKind,
    grid_spec: GridSpec,
    grid: Grid,
    /// Quadrature normalization C_t of the continuous tilt; Err carries the
    /// divergence diagnostic for exponential tilts whose integral is unstable.
    c_t: std::result::Result<f64, String>,
    /// Mass the continuous law places outside the grid window (only
    /// meaningful when `c_t` is valid).
    outside_mass: f64,
}

impl TiltedDistribution {
    pub fn new(
        family: &GaussianScaledMeanFamily,
        theta0: f64,
        direction: Direction,
        t: f64,
        kind: TiltKind,
        grid_spec: GridSpec,
    ) -> Result<Self> {
        if t < 0.0 {
            return Err(Error::Config(format!("tilt magnitude must be >= 0, got {t}")));
        }
        let d = family.data_dim();
        if d > 3 {
            return Err(Error::Config(format!(
                "tensor-grid sampling supports data dim <= 3, got {d}"
            )));
        }
        let means = family.means(theta0);

        let c_t = compute_normalization(&means, &direction, t, kind);

        // The grid factorizes when the tilt does: always for exponential
        // tilts of additive directions, and for any tilt kind when the
        // direction varies on at most one axis (the centered tilt factor
        // then depends on that axis alone).
        let active = direction.active_axes();
        let single_axis = active
            .as_ref()
            .is_some_and(|a| a.iter().filter(|&&b| b).count() <= 1);
        let use_per_axis = d > 1
            && direction.is_additive()
            && t > 0.0
            && (kind == TiltKind::Exponential || single_axis);
        let grid = if use_per_axis {
            let active = active.unwrap_or_else(|| vec![true; d]);
            Grid::PerAxis(
                (0..d)
                    .map(|axis| {
                        build_axis_grid(
                            &direction,
                            means[axis],
                            axis,
                            t,
                            kind,
                            active[axis],
                            &grid_spec,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            build_tensor_grid(&means, &direction, t, kind, &grid_spec)?
        };

        let mut dist = TiltedDistribution {
            family: family.clone(),
            theta0,
            direction,
            t,
            kind,
            grid_spec,
            grid,
            c_t,
            outside_mass: 0.0,
        };
        if let Ok(c) = dist.c_t {
            let riemann = dist.grid_riemann_mass();
            dist.outside_mass = (1.0 - riemann / c).max(0.0);
        }
        Ok(dist)
    }

    pub fn data_dim(&self) -> usize {
        self.family.data_dim()
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid_spec
    }

    /// True when the continuous normalization integral was rejected by the
    /// stability guard and the grid law is the (truncated) definition of Q_t.
    pub fn is_truncated(&self) -> bool {
        self.c_t.is_err()
    }

    pub fn divergence_diagnostic(&self) -> Option<&str> {
        self.c_t.as_ref().err().map(|s| s.as_str())
    }

    /// The normalization constant C_t of the continuous tilt.
    pub fn normalization_constant(&self) -> Result<f64> {
        self.c_t.clone().map_err(Error::Divergence)
    }

    /// Continuous tilted density q_t(z).
    pub fn density(&self, z: &[f64]) -> Result<f64> {
        let c = self.normalization_constant()?;
        let base = self.family.log_density(&[self.theta0], z)?.exp();
        let tu = self.t * self.direction.eval(z);
        Ok(tilt_factor(self.kind, tu) * base / c)
    }

    /// log q_t(z); -inf where the tilt factor vanishes.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        let c = self.normalization_constant()?;
        let base = self.family.log_density(&[self.theta0], z)?;
        let tu = self.t * self.direction.eval(z);
        Ok(log_tilt_factor(self.kind, tu) + base - c.ln())
    }

    /// Sum of log q_t(z_i) - log p_theta0(z_i) over a dataset. The flag marks
    /// data points landing where the tilted density vanishes, which drive the
    /// value to -inf.
    pub fn log_likelihood_ratio(&self, data: &[Vec<f64>]) -> Result<(f64, bool)> {
        let c = self.normalization_constant()?;
        let log_c = c.ln();
        let mut total = 0.0;
        let mut hit_zero = false;
        for z in data {
            if z.len() != self.data_dim() {
                return Err(Error::DimensionMismatch("data row dim".into()));
            }
            let tu = self.t * self.direction.eval(z);
            let lf = log_tilt_factor(self.kind, tu);
            if lf == f64::NEG_INFINITY {
                hit_zero = true;
            }
            total += lf - log_c;
        }
        Ok((total, hit_zero))
    }

    /// i.i.d. draws from Q_t: the exact base model when t = 0, otherwise the
    /// tensor-grid law.
    pub fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
        if self.t == 0.0 {
            return self.family.sample(&[self.theta0], n, rng);
        }
        match &self.grid {
            Grid::PerAxis(axes) => (0..n)
                .map(|_| {
                    axes.iter()
                        .map(|ax| ax.nodes[ax.sampler.sample(rng)])
                        .collect()
                })
                .collect(),
            Grid::Tensor {
                axis_nodes,
                sampler,
                ..
            } => {
                let dims: Vec<usize> = axis_nodes.iter().map(|a| a.len()).collect();
                (0..n)
                    .map(|_| {
                        let mut flat = sampler.sample(rng);
                        let mut z = vec![0.0; dims.len()];
                        for axis in (0..dims.len()).rev() {
                            z[axis] = axis_nodes[axis][flat % dims[axis]];
                            flat /= dims[axis];
                        }
                        z
                    })
                    .collect()
            }
        }
    }

    /// Errors when the continuous law provably puts more than `tol` mass
    /// outside the grid window.
    pub fn check_coverage(&self, tol: f64) -> Result<()> {
        if self.c_t.is_ok() && self.outside_mass > tol {
            return Err(Error::Coverage(format!(
                "{:.3e} of the tilted mass lies outside the +-{} sd grid window",
                self.outside_mass, self.grid_spec.half_width_sd
            )));
        }
        Ok(())
    }

    /// Marginal cell law of component `axis` under the grid distribution.
    pub fn grid_marginal(&self, axis: usize) -> (Vec<f64>, Vec<f64>) {
        match &self.grid {
            Grid::PerAxis(axes) => (axes[axis].nodes.clone(), axes[axis].probs.clone()),
            Grid::Tensor {
                axis_nodes, probs, ..
            } => {
                let dims: Vec<usize> = axis_nodes.iter().map(|a| a.len()).collect();
                let mut marg = vec![0.0; dims[axis]];
                // Strides for row-major flat index (axis 0 slowest).
                let mut stride = 1usize;
                for d in (axis + 1)..dims.len() {
                    stride *= dims[d];
                }
                for (flat, &p) in probs.iter().enumerate() {
                    marg[(flat / stride) % dims[axis]] += p;
                }
                (axis_nodes[axis].clone(), marg)
            }
        }
    }

    /// Mean of the grid law, per component.
    pub fn grid_mean(&self) -> Vec<f64> {
        (0..self.data_dim())
            .map(|axis| {
                let (nodes, probs) = self.grid_marginal(axis);
                nodes.iter().zip(&probs).map(|(&x, &p)| x * p).sum()
            })
            .collect()
    }

    /// Per-component variance of the grid law.
    pub fn grid_variance(&self) -> Vec<f64> {
        let mean = self.grid_mean();
        (0..self.data_dim())
            .map(|axis| {
                let (nodes, probs) = self.grid_marginal(axis);
                nodes
                    .iter()
                    .zip(&probs)
                    .map(|(&x, &p)| p * (x - mean[axis]).powi(2))
                    .sum()
            })
            .collect()
    }

    /// Riemann sum of the unnormalized continuous density over the grid.
    fn grid_riemann_mass(&self) -> f64 {
        let means = self.family.means(self.theta0);
        let h: Vec<f64> = (0..self.data_dim())
            .map(|_| 2.0 * self.grid_spec.half_width_sd / self.grid_spec.resolution as f64)
            .collect();
        let vol: f64 = h.iter().product();
        match &self.grid {
            Grid::PerAxis(_) => {
                // Per-axis grids exist only for factorizing tilts; compute
                // the Riemann mass from the product of axis sums.
                let active = self
                    .direction
                    .active_axes()
                    .unwrap_or_else(|| vec![true; means.len()]);
                let mut mass = 1.0;
                for (axis, &mu) in means.iter().enumerate() {
                    let r = self.grid_spec.resolution;
                    let lo = mu - self.grid_spec.half_width_sd;
                    let mut s = 0.0;
                    for i in 0..r {
                        let z = lo + (i as f64 + 0.5) * h[axis];
                        let lt = axis_log_tilt(&self.direction, self.kind, active[axis], axis, z, self.t);
                        s += lt.exp() * crate::quad::std_normal_pdf(z - mu) * h[axis];
                    }
                    mass *= s;
                }
                // Exponential tilts absorb the centering offset into the
                // normalization; other kinds carry it inside the factor.
                if self.kind == TiltKind::Exponential {
                    mass *= (-self.t * self.direction.offset).exp();
                }
                mass
            }
            Grid::Tensor { axis_nodes, .. } => {
                let dims: Vec<usize> = axis_nodes.iter().map(|a| a.len()).collect();
                let total: usize = dims.iter().product();
                let mut mass = 0.0;
                let mut z = vec![0.0; dims.len()];
                for flat in 0..total {
                    let mut rem = flat;
                    for axis in (0..dims.len()).rev() {
                        z[axis] = axis_nodes[axis][rem % dims[axis]];
                        rem /= dims[axis];
                    }
                    let tu = self.t * self.direction.eval(&z);
                    let mut logw = log_tilt_factor(self.kind, tu);
                    for (axis, &mu) in means.iter().enumerate() {
                        logw += crate::quad::std_normal_pdf(z[axis] - mu).ln();
                    }
                    mass += logw.exp();
                }
                mass * vol
            }
        }
    }
}

fn compute_normalization(
    means: &[f64],
    direction: &Direction,
    t: f64,
    kind: TiltKind,
) -> std::result::Result<f64, String> {
    if t == 0.0 {
        return Ok(1.0);
    }
    match kind {
        TiltKind::Exponential => {
            match hermite_expect_checked(
                means,
                SMOOTH_QUAD_NODES,
                NORMALIZATION_GUARD_RTOL,
                |z| (t * direction.eval(z)).exp(),
                "exponential tilt normalization",
            ) {
                Ok(v) => Ok(v),
                Err(e) => Err(e.to_string()),
            }
        }
        TiltKind::ReluLinear | TiltKind::SmoothG => {
            let quad = GaussianTensor::hermite(means, 2 * SMOOTH_QUAD_NODES);
            let v = quad.expect(|z| tilt_factor(kind, t * direction.eval(z)));
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(format!("normalization integral evaluated to {v}"))
            }
        }
    }
}

/// Log tilt factor of one axis of a factorizing tilt. Exponential tilts
/// factor axis by axis up to a constant, so the centering offset can be
/// dropped (it cancels in normalization). Other kinds factorize only with a
/// single active axis, where the centered direction value is exactly that
/// axis term minus the offset.
fn axis_log_tilt(
    direction: &Direction,
    kind: TiltKind,
    active: bool,
    axis: usize,
    z: f64,
    t: f64,
) -> f64 {
    match kind {
        TiltKind::Exponential => t * direction.axis_component(axis, z),
        _ if active => {
            tilt_factor(kind, t * (direction.axis_component(axis, z) - direction.offset)).ln()
        }
        _ => 0.0,
    }
}

fn build_axis_grid(
    direction: &Direction,
    mu: f64,
    axis: usize,
    t: f64,
    kind: TiltKind,
    active: bool,
    spec: &GridSpec,
) -> Result<AxisGrid> {
    let r = spec.resolution;
    let h = 2.0 * spec.half_width_sd / r as f64;
    let lo = mu - spec.half_width_sd;
    let nodes: Vec<f64> = (0..r).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let logw: Vec<f64> = nodes
        .iter()
        .map(|&z| axis_log_tilt(direction, kind, active, axis, z, t) - 0.5 * (z - mu) * (z - mu))
        .collect();
    let probs = normalize_log_weights(&logw)?;
    let sampler = WeightedIndex::new(probs.iter().copied())
        .map_err(|e| Error::Numeric(format!("axis sampler: {e}")))?;
    Ok(AxisGrid {
        nodes,
        probs,
        sampler,
    })
}

fn build_tensor_grid(
    means: &[f64],
    direction: &Direction,
    t: f64,
    kind: TiltKind,
    spec: &GridSpec,
) -> Result<Grid> {
    let d = means.len();
    let r = spec.resolution;
    let axis_nodes: Vec<Vec<f64>> = means
        .iter()
        .map(|&mu| {
            let h = 2.0 * spec.half_width_sd / r as f64;
            let lo = mu - spec.half_width_sd;
            (0..r).map(|i| lo + (i as f64 + 0.5) * h).collect()
        })
        .collect();
    let total: usize = r.pow(d as u32);
    let mut logw = vec![f64::NEG_INFINITY; total];
    let mut z = vec![0.0; d];
    for (flat, lw) in logw.iter_mut().enumerate() {
        let mut rem = flat;
        for axis in (0..d).rev() {
            z[axis] = axis_nodes[axis][rem % r];
            rem /= r;
        }
        let tu = t * direction.eval(&z);
        let mut acc = log_tilt_factor(kind, tu);
        if acc > f64::NEG_INFINITY {
            for (axis, &mu) in means.iter().enumerate() {
                acc -= 0.5 * (z[axis] - mu) * (z[axis] - mu);
            }
        }
        *lw = acc;
    }
    let probs = normalize_log_weights(&logw)?;
    let sampler = WeightedIndex::new(probs.iter().copied())
        .map_err(|e| Error::Numeric(format!("tensor sampler: {e}")))?;
    Ok(Grid::Tensor {
        axis_nodes,
        probs,
        sampler,
    })
}

fn normalize_log_weights(logw: &[f64]) -> Result<Vec<f64>> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric("all grid cells have zero density".into()));
    }
    let mut probs: Vec<f64> = logw.iter().map(|&lw| (lw - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Ok(probs)
}
