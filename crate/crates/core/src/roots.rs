//! Bracketed inversion of monotone scalar maps.

use crate::error::{Error, Result};

/// Default target residual for scalar inversions.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Bracket expansion gives up once the half-width exceeds this.
const BRACKET_LIMIT: f64 = (1u64 << 60) as f64;

const MAX_BISECTIONS: usize = 400;

/// Solves `f(t) = y` for a strictly increasing continuous `f`.
///
/// The bracket starts at `[-1, 1]` and doubles outward until it encloses
/// `y`; bisection then runs until `|f(t) - y| <= tol` or the bracket can no
/// longer be split in floating point.
pub fn invert_increasing(f: impl Fn(f64) -> f64, y: f64, tol: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::OutOfRange { value: y });
    }
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    while f_lo > y {
        if -lo > BRACKET_LIMIT {
            return Err(Error::OutOfRange { value: y });
        }
        hi = lo;
        f_hi = f_lo;
        lo *= 2.0;
        f_lo = f(lo);
    }
    while f_hi < y {
        if hi > BRACKET_LIMIT {
            return Err(Error::OutOfRange { value: y });
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = f(hi);
    }
    if f_lo == y {
        return Ok(lo);
    }
    if f_hi == y {
        return Ok(hi);
    }
    let mut best = (lo, (f_lo - y).abs());
    if (f_hi - y).abs() < best.1 {
        best = (hi, (f_hi - y).abs());
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        let err = (f_mid - y).abs();
        if err < best.1 {
            best = (mid, err);
        }
        if err <= tol {
            return Ok(mid);
        }
        if f_mid < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

/// Solves `f(t) = y` for a strictly decreasing continuous `f`.
pub fn invert_decreasing(f: impl Fn(f64) -> f64, y: f64, tol: f64) -> Result<f64> {
    invert_increasing(|t| -f(t), -y, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_cubic() {
        let t = invert_increasing(|t| t * t * t + t, 10.0, 1e-13).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn far_targets_expand_the_bracket() {
        let t = invert_increasing(|t| t, -1.0e6, 1e-12).unwrap();
        assert!((t + 1.0e6).abs() < 1e-9);
        let t = invert_decreasing(|t| -3.0 * t + 1.0, 4.0, 1e-12).unwrap();
        assert!((t + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unattainable_value_is_out_of_range() {
        // -exp(-t) never reaches 0.5
        let r = invert_increasing(|t| -(-t).exp(), 0.5, 1e-10);
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
        let r = invert_increasing(|t| t.atan(), 2.0, 1e-10);
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn exact_hit_at_bracket_end() {
        assert_eq!(invert_increasing(|t| t, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(invert_increasing(|t| t, -4.0, 0.0).unwrap(), -4.0);
    }
}
