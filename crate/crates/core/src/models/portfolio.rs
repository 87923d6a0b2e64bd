use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const PORTFOLIO_COEFFICIENTS: [f64; 5] = [20.0, 16.0, 12.0, 10.0, 4.0];

/// `20 x1 + 16 x2 + 12 x3 + 10 x4 + 4 x5`.
pub fn portfolio(x: &[f64; 5]) -> f64 {
    PORTFOLIO_COEFFICIENTS.iter().zip(x).map(|(c, v)| c * v).sum()
}

/// Unit-diagonal covariance with entries `0.5 rho` at (1,2) and (1,3),
/// `0.8 rho` at (1,5) and `0.3 rho` at (3,5) (1-based), zero elsewhere.
pub fn portfolio_sigma(rho: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter { name: "rho", reason: format!("must lie in [0, 1], got {rho}") });
    }
    let mut s = DMatrix::<f64>::identity(5, 5);
    for &(i, j, w) in &[(0, 1, 0.5), (0, 2, 0.5), (0, 4, 0.8), (2, 4, 0.3)] {
        s[(i, j)] = w * rho;
        s[(j, i)] = w * rho;
    }
    let min = s.clone().symmetric_eigenvalues().min();
    if min < -1e-10 {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(s)
}
