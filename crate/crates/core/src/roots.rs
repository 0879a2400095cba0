//! Scalar bracketing used for η, ξ and numeric inverses.

use crate::error::{Error, Result};

pub(crate) const BISECTION_CAP: usize = 200;
const EXPANSION_CAP: usize = 200;

/// Bisection on a bracket with `f(lo) < 0 < f(hi)`. Stops at the cap or once
/// the bracket collapses to adjacent floats.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, cap: usize) -> f64 {
    for _ in 0..cap {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Grows `start` geometrically (factor 2) until `pred` holds.
pub(crate) fn expand_up<P: Fn(f64) -> bool>(start: f64, pred: P) -> Option<f64> {
    let mut x = start;
    for _ in 0..EXPANSION_CAP {
        if pred(x) {
            return Some(x);
        }
        x *= 2.0;
        if !x.is_finite() {
            return None;
        }
    }
    None
}

/// Shrinks `start` geometrically (factor 2) until `pred` holds.
pub(crate) fn expand_down<P: Fn(f64) -> bool>(start: f64, pred: P) -> Option<f64> {
    let mut x = start;
    for _ in 0..EXPANSION_CAP {
        if pred(x) {
            return Some(x);
        }
        x *= 0.5;
        if x == 0.0 {
            return None;
        }
    }
    None
}

/// Positive root of `h` where `h < 0` just above zero and `h > 0` far out.
/// Both sign conditions are strict, so an identically vanishing residual has
/// no root.
pub(crate) fn positive_root<F: Fn(f64) -> f64>(h: F, what: &str) -> Result<f64> {
    let lo = expand_down(1.0, |u| h(u) < 0.0)
        .ok_or_else(|| Error::NoRoot(format!("{what}: no point with negative residual")))?;
    let hi =
        expand_up(lo, |u| h(u) > 0.0).ok_or_else(|| Error::NoRoot(format!("{what}: residual never turns positive")))?;
    // the expansion visited hi/2 and found h <= 0 there
    let lo = (hi * 0.5).max(lo);
    Ok(bisect(&h, lo, hi, BISECTION_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, BISECTION_CAP);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn positive_root_of_cubic() {
        // u^3 - 1.5u has positive root sqrt(1.5)
        let r = positive_root(|u| u * u * u - 1.5 * u, "cubic").unwrap();
        assert!((r - 1.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn positive_root_missing() {
        assert!(positive_root(|u| -u, "never").is_err());
        assert!(positive_root(|u| u, "always").is_err());
        assert!(positive_root(|_| 0.0, "flat").is_err());
    }
}
