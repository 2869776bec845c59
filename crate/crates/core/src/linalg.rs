use nalgebra::DMatrix;

use crate::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix given as rows.
pub(crate) fn cholesky(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = cov.len();
    if cov.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidParameter("covariance must be square".into()));
    }
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * (1.0 + m[(i, j)].abs()) {
                return Err(Error::InvalidParameter("covariance must be symmetric".into()));
            }
        }
    }
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidParameter("covariance must be positive definite".into()))
}
