//! One-dimensional maximization of unimodal functions.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Result of a bracketed maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
///
/// Exact (up to `tol` on the argument) for functions that are unimodal on the
/// bracket. Both endpoints are evaluated as candidates so that a maximum sitting
/// on the boundary is reported with its boundary value rather than an interior
/// approximation of it.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, tol: f64) -> Maximum
where
    F: Fn(f64) -> f64,
{
    debug_assert!(lo <= hi);
    debug_assert!(tol > 0.0);

    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);

    while (b - a) > tol {
        if fc >= fd {
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

    let mid = 0.5 * (a + b);
    let mut best = Maximum { x: mid, value: f(mid) };
    for (x, v) in [(c, fc), (d, fd), (lo, f(lo)), (hi, f(hi))] {
        if v > best.value {
            best = Maximum { x, value: v };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum_of_parabola() {
        let m = golden_section_max(|x| -(x - 1.25).powi(2) + 3.0, -4.0, 10.0, 1e-10);
        assert!((m.x - 1.25).abs() < 1e-6);
        assert!((m.value - 3.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_maximum_is_reported_exactly() {
        let m = golden_section_max(|x| -x, 0.0, 5.0, 1e-10);
        assert_eq!(m.x, 0.0);
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn degenerate_bracket() {
        let m = golden_section_max(|x| x * x, 2.0, 2.0, 1e-10);
        assert_eq!(m.value, 4.0);
    }
}
