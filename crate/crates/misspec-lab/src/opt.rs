//! One-dimensional minimization: coarse grid scan followed by golden-section
//! refinement. The empirical objectives here are piecewise linear with kinks
//! at the data points, so a local method alone can stall; the scan supplies a
//! reliable bracket first.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimizer of `f` on [a, b].
/// Returns the midpoint of the final interval once it is narrower than `xtol`.
pub fn golden_section(f: impl Fn(f64) -> f64, a: f64, b: f64, xtol: f64) -> f64 {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > xtol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Scans `grid_points` equally spaced points on [lo, hi], then refines around
/// the best point by golden section. Errors if the scan minimum sits on the
/// boundary, which signals an inadequate bracket.
pub fn grid_then_golden(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    grid_points: usize,
    xtol: f64,
) -> Result<f64> {
    assert!(grid_points >= 3);
    let h = (hi - lo) / (grid_points - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..grid_points {
        let v = f(lo + i as f64 * h);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    if best_i == 0 || best_i == grid_points - 1 {
        return Err(Error::Solver(format!(
            "grid minimum at boundary of [{lo}, {hi}]; widen the search range"
        )));
    }
    let a = lo + (best_i - 1) as f64 * h;
    let b = lo + (best_i + 1) as f64 * h;
    Ok(golden_section(f, a, b, xtol))
}

/// Like `grid_then_golden` but widens the interval around `center` (doubling
/// `half_width` up to `max_doublings` times) while the scan minimum lands on
/// the boundary.
pub fn grid_then_golden_adaptive(
    f: impl Fn(f64) -> f64 + Copy,
    center: f64,
    half_width: f64,
    grid_points: usize,
    xtol: f64,
    max_doublings: usize,
) -> Result<f64> {
    let mut hw = half_width;
    for _ in 0..=max_doublings {
        match grid_then_golden(f, center - hw, center + hw, grid_points, xtol) {
            Ok(x) => return Ok(x),
            Err(Error::Solver(_)) => hw *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Solver(format!(
        "no interior minimum within {hw} of {center}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let x = golden_section(|x| (x - 1.3).powi(2), -4.0, 5.0, 1e-10);
        assert_abs_diff_eq!(x, 1.3, epsilon = 1e-8);
    }

    #[test]
    fn piecewise_linear_kink_minimum() {
        // min of |x - 2| + 0.5|x + 1| is at x = 2.
        let f = |x: f64| (x - 2.0).abs() + 0.5 * (x + 1.0).abs();
        let x = grid_then_golden(f, -10.0, 10.0, 401, 1e-10).unwrap();
        assert_abs_diff_eq!(x, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn adaptive_widening_escapes_bad_bracket() {
        let f = |x: f64| (x - 40.0).powi(2);
        let x = grid_then_golden_adaptive(f, 0.0, 1.0, 41, 1e-10, 10).unwrap();
        assert_abs_diff_eq!(x, 40.0, epsilon = 1e-7);
    }
}
