//! One-dimensional search: golden-section maximisation and sign bisection.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximises a unimodal `f` on `[a, b]`; returns `(x_max, f(x_max))`.
///
/// Iterates until the bracket is below `tol` or the floating-point
/// resolution of the bracket is exhausted.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..300 {
        if b - a <= tol || x1 >= x2 {
            break;
        }
        // NaN is treated as worse than any number
        if f1 > f2 || f2.is_nan() {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Locates the sign change of `g` on `[a, b]` to floating-point resolution.
///
/// `g(a)` and `g(b)` must have opposite signs (zero counts as either).
/// Returns the midpoint of the final bracket.
pub fn bisect<F: Fn(f64) -> f64>(g: F, a: f64, b: f64) -> Result<f64> {
    let (mut lo, mut hi) = (a, b);
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.is_nan() || g_hi.is_nan() || g_lo.signum() == g_hi.signum() {
        return Err(Error::NoConvergence {
            method: "bisection",
            detail: format!("no sign change on [{a}, {b}]: g = ({g_lo}, {g_hi})"),
        });
    }
    for _ in 0..2100 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return Ok(mid);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3).powi(2), -2.0, 5.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(fx.abs() < 1e-12);
    }

    #[test]
    fn golden_handles_boundary_maximum() {
        let (x, _) = golden_section_max(|x| x, 0.0, 1.0, 1e-12);
        assert!((x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 4e-16);
    }

    #[test]
    fn bisect_rejects_same_sign() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0).is_err());
    }
}
