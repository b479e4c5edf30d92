//! Deterministic bracketing solvers shared by the CRM and consistency code.

/// Bisection for a root of `f` on `[lo, hi]`. Returns `None` when `f(lo)`
/// and `f(hi)` have the same strict sign. The returned point is within
/// `tol` of a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Root of a strictly decreasing function on `[lo, hi]` using Newton steps
/// safeguarded by a shrinking bracket. `fd` returns `(f(x), f'(x))`.
/// Returns the bracket end when the function does not change sign.
pub fn decreasing_root<F: FnMut(f64) -> (f64, f64)>(mut fd: F, lo: f64, hi: f64, start: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut x = start.clamp(lo, hi);
    for _ in 0..200 {
        let (fx, dfx) = fd(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = if dfx < 0.0 { x - fx / dfx } else { f64::NAN };
        let next = if newton.is_finite() && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= tol || b - a <= tol {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9).is_none());
    }

    #[test]
    fn newton_root_of_decreasing_function() {
        let r = decreasing_root(|x| (1.0 - x.exp(), -x.exp()), -5.0, 5.0, 4.0, 1e-13);
        assert!(r.abs() < 1e-12);
        // no sign change: returns the end of the bracket it is driven to
        let r = decreasing_root(|x| (-1.0 - x, -1.0), 0.0, 1.0, 0.5, 1e-12);
        assert!(r < 1e-9);
    }
}
