//! Lower real branch of the Lambert W function.

use crate::error::{Error, Result};

/// `-1/e`, the branch point.
pub const BRANCH_POINT: f64 = -0.36787944117144233;

/// `W_{-1}(x)`: the solution `w <= -1` of `w * exp(w) = x` for `x` in
/// `[-1/e, 0)`.
///
/// `w * exp(w)` is strictly decreasing on `(-inf, -1]`, so the root is found
/// by bisection. The bracket is widened geometrically toward `-inf` and the
/// interval is halved until it cannot be split in floating point; the endpoint
/// with the smaller residual is returned.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    if !(BRANCH_POINT..0.0).contains(&x) {
        return Err(Error::Domain {
            value: x,
            domain: "[-1/e, 0)",
        });
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }
    let g = |w: f64| w * w.exp() - x;

    // g(-1) <= 0 <= g(lo)
    let mut hi = -1.0;
    let mut lo = -2.0;
    while g(lo) < 0.0 {
        hi = lo;
        lo *= 2.0;
    }
    Ok(bisect_decreasing(g, lo, hi))
}

/// `W_{-1}(-exp(-a))` for `a >= 1`, solved in log space as
/// `w + ln(-w) = -a`. Stays accurate when `exp(-a)` underflows.
pub(crate) fn lambert_w_minus1_neg_exp(a: f64) -> f64 {
    debug_assert!(a >= 1.0);
    let x = -(-a).exp();
    if x < -f64::MIN_POSITIVE {
        if let Ok(w) = lambert_w_minus1(x) {
            return w;
        }
    }
    // h(w) = w + ln(-w) + a is increasing on (-inf, -1]
    let h = |w: f64| -(w + (-w).ln() + a);
    let mut hi = -1.0;
    let mut lo = -2.0 * a.max(1.0);
    while h(lo) < 0.0 {
        hi = lo;
        lo *= 2.0;
    }
    bisect_decreasing(h, lo, hi)
}

/// Root of a decreasing function with `f(lo) >= 0 >= f(hi)`, `lo < hi`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    for _ in 0..2048 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if f_lo.abs() <= f_hi.abs() {
        lo
    } else {
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(w: f64, x: f64) -> f64 {
        (w * w.exp() - x).abs()
    }

    #[test]
    fn branch_point() {
        assert_eq!(lambert_w_minus1(BRANCH_POINT).unwrap(), -1.0);
        assert_eq!(BRANCH_POINT, -(-1f64).exp());
    }

    #[test]
    fn domain_errors() {
        assert!(lambert_w_minus1(0.0).is_err());
        assert!(lambert_w_minus1(0.1).is_err());
        assert!(lambert_w_minus1(-0.4).is_err());
        assert!(lambert_w_minus1(f64::NAN).is_err());
    }

    #[test]
    fn known_values() {
        // W_{-1}(-2 e^{-2}) = -2 exactly
        let x = -2.0 * (-2f64).exp();
        assert!((lambert_w_minus1(x).unwrap() + 2.0).abs() < 1e-9);

        let x = -(-2f64).exp();
        let w = lambert_w_minus1(x).unwrap();
        assert!((w + 3.1461932206205825).abs() < 1e-9, "{w}");
        assert!(residual(w, x) < 1e-12 * x.abs());
    }

    #[test]
    fn tiny_arguments() {
        for &x in &[-1e-9, -1e-100, -1e-300] {
            let w = lambert_w_minus1(x).unwrap();
            assert!(w < -1.0);
            assert!(residual(w, x) < 1e-12 * x.abs(), "x={x} w={w}");
        }
    }

    #[test]
    fn log_space_variant_agrees() {
        for &a in &[1.5f64, 2.0, 3.0, 11.0, 40.0] {
            let direct = lambert_w_minus1(-(-a).exp()).unwrap();
            let logspace = lambert_w_minus1_neg_exp(a);
            assert!((direct - logspace).abs() < 1e-9 * direct.abs(), "a={a}");
        }
        // exp(-1000) underflows; the log-space equation still has a root
        let w = lambert_w_minus1_neg_exp(1000.0);
        assert!((w + (-w).ln() + 1000.0).abs() < 1e-9);
    }
}
