use crate::error::{MimlError, Result};

/// Golden-section minimization of a convex function on `[lo, hi]`.
///
/// The bracket is shrunk until narrower than `tol`, then the interior estimate
/// is compared against both endpoints so monotone functions land exactly on
/// the boundary.
pub fn minimize_1d_convex(g: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo <= hi) {
        return Err(MimlError::InvalidArgument(format!(
            "empty interval [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(MimlError::InvalidArgument(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = g(x2);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, g(mid));
    for x in [lo, hi] {
        let v = g(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best.0)
}
