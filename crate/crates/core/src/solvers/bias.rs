//! Exact bias for a fixed decision function under weighted hinge loss.

/// `sum_i w_i max(0, 1 - y_i (f_i + b))`.
pub fn weighted_hinge(f: &[f64], y: &[f64], w: &[f64], b: f64) -> f64 {
    f.iter()
        .zip(y)
        .zip(w)
        .map(|((fi, yi), wi)| wi * (1.0 - yi * (fi + b)).max(0.0))
        .sum()
}

/// Minimizes [`weighted_hinge`] over `b`.
///
/// The loss is piecewise linear with breakpoints at `b = y_i - f_i`, so the
/// minimum sits on a breakpoint. When the minimizing set is an interval its
/// midpoint is returned.
pub fn optimal_bias(f: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mut points: Vec<(f64, f64, f64)> = f
        .iter()
        .zip(y)
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|((&fi, &yi), &wi)| (yi - fi, yi, wi))
        .collect();
    if points.is_empty() {
        return 0.0;
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = points.iter().map(|p| p.2).sum();
    let eps = 1e-12 * total;
    // slope just right of b: W-(bp <= b) - W+(bp > b)
    let mut pos_above: f64 = points.iter().filter(|p| p.1 > 0.0).map(|p| p.2).sum();
    let mut neg_below = 0.0;
    let mut k = 0;
    while k < points.len() {
        let v = points[k].0;
        while k < points.len() && points[k].0 == v {
            if points[k].1 > 0.0 {
                pos_above -= points[k].2;
            } else {
                neg_below += points[k].2;
            }
            k += 1;
        }
        let slope = neg_below - pos_above;
        if slope > eps {
            return v;
        }
        if slope >= -eps {
            return match points.get(k) {
                Some(next) => 0.5 * (v + next.0),
                None => v,
            };
        }
    }
    points[points.len() - 1].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_pair_centers_bias() {
        let b = optimal_bias(&[0.0, 0.0], &[1.0, -1.0], &[1.0, 1.0]);
        assert_eq!(b, 0.0);
        let b = optimal_bias(&[3.0, 1.0], &[1.0, -1.0], &[1.0, 1.0]);
        assert!(weighted_hinge(&[3.0, 1.0], &[1.0, -1.0], &[1.0, 1.0], b) < 1e-12);
    }

    proptest! {
        #[test]
        fn bias_beats_dense_grid(
            rows in proptest::collection::vec((-3.0f64..3.0, any::<bool>(), 0.0f64..2.0), 1..12)
        ) {
            let f: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let y: Vec<f64> = rows.iter().map(|r| if r.1 { 1.0 } else { -1.0 }).collect();
            let w: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let b = optimal_bias(&f, &y, &w);
            let best = weighted_hinge(&f, &y, &w, b);
            for k in 0..=2000 {
                let t = -6.0 + 12.0 * k as f64 / 2000.0;
                prop_assert!(best <= weighted_hinge(&f, &y, &w, t) + 1e-9);
            }
        }
    }
}
