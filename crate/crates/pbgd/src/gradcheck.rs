//! Central-difference validation of analytic gradient oracles.

use crate::error::{Error, Result};
use crate::vecmath::RealVec;

/// Compare an analytic gradient against central differences of the value
/// oracle at `point`.
///
/// Returns the maximum over coordinates of `|fd_i - g_i| / max(1, |g_i|)`.
pub fn fd_gradient_check(
    value: impl Fn(&RealVec) -> f64,
    grad: impl Fn(&RealVec) -> RealVec,
    point: &RealVec,
    h: f64,
) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::argument("finite-difference step must be positive"));
    }
    let g = grad(point);
    if g.dim() != point.dim() {
        return Err(Error::argument(
            "gradient oracle dimension does not match the point",
        ));
    }
    let mut worst = 0.0f64;
    let mut probe = point.clone();
    for i in 0..point.dim() {
        let base = point[i];
        probe[i] = base + h;
        let plus = value(&probe);
        probe[i] = base - h;
        let minus = value(&probe);
        probe[i] = base;
        let fd = (plus - minus) / (2.0 * h);
        let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_rounding() {
        let err = fd_gradient_check(
            |p| p[0] * p[0],
            |p| RealVec::new(vec![2.0 * p[0]]).unwrap(),
            &RealVec::scalar(3.0),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "central diff on a quadratic: got {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = fd_gradient_check(
            |_| 4.25,
            |p| RealVec::zeros(p.dim()),
            &RealVec::new(vec![0.3, -1.7]).unwrap(),
            1e-6,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let err = fd_gradient_check(
            |p| p[0].sin(),
            |p| RealVec::new(vec![p[0].cos() + 0.5]).unwrap(),
            &RealVec::scalar(0.7),
            1e-6,
        )
        .unwrap();
        assert!(err > 0.1);
    }
}
