use nalgebra::DMatrix;

/// Minimum-norm least-squares solution of `design * W ≈ targets` via SVD.
///
/// Singular values below `max(p, M) * eps * sigma_max` are treated as zero.
pub fn lstsq_svd(design: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, cols) = design.shape();
    if p == 0 || cols == 0 {
        return DMatrix::zeros(cols, targets.ncols());
    }
    let svd = design.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = (p.max(cols) as f64) * f64::EPSILON * sigma_max;
    svd.solve(targets, eps)
        .expect("both singular subspaces were computed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_returns_targets() {
        let t = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.5, 2.0, -3.0, 0.0]);
        let w = lstsq_svd(&DMatrix::identity(3, 3), &t);
        assert!((w - t).abs().max() < 1e-14);
    }

    #[test]
    fn duplicated_column_splits_weight_evenly() {
        // columns 0 and 1 are identical: the minimum-norm solution shares the weight
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let t = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let w = lstsq_svd(&phi, &t);
        assert!((w[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((w[(1, 0)] - 1.0).abs() < 1e-12);
    }
}
