//! Ordinary least squares used by the unit-root and LM regressions and
//! for warm starts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    /// Centered R².
    pub r_squared: f64,
    /// Residual variance with divisor n - k.
    pub sigma2: f64,
}

impl OlsFit {
    pub fn t_ratio(&self, i: usize) -> f64 {
        self.coef[i] / self.std_errors[i]
    }
}

/// Regress `y` on the columns of `x` (rows are observations).
pub fn ols(y: &[f64], x: &DMatrix<f64>) -> Result<OlsFit> {
    let n = y.len();
    let k = x.ncols();
    if x.nrows() != n {
        return Err(Error::SpecMismatch(format!(
            "design has {} rows for {} observations",
            x.nrows(),
            n
        )));
    }
    if n <= k {
        return Err(Error::InsufficientData { needed: k + 1, have: n });
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * x;
    // scale-aware singularity check on the normal equations
    let diag_max = xtx.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = xtx.clone().cholesky().ok_or(Error::SingularDesign)?;
    let l_diag_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if diag_max == 0.0 || l_diag_min * l_diag_min < 1e-13 * diag_max {
        return Err(Error::SingularDesign);
    }
    let xty = x.transpose() * &yv;
    let beta = chol.solve(&xty);
    let fitted = x * &beta;
    let resid: Vec<f64> = yv.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let sigma2 = ssr / (n - k) as f64;
    let inv = chol.inverse();
    let std_errors = (0..k).map(|i| (sigma2 * inv[(i, i)]).sqrt()).collect();
    Ok(OlsFit {
        coef: beta.iter().copied().collect(),
        std_errors,
        residuals: resid,
        ssr,
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 },
        sigma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y: Vec<f64> = (0..5).map(|i| 2.0 + 3.0 * i as f64).collect();
        let f = ols(&y, &x).unwrap();
        assert!((f.coef[0] - 2.0).abs() < 1e-12);
        assert!((f.coef[1] - 3.0).abs() < 1e-12);
        assert!(f.ssr < 1e-20);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_design() {
        let x = DMatrix::from_fn(6, 2, |i, _| i as f64);
        let y = vec![1.0; 6];
        assert!(matches!(ols(&y, &x), Err(Error::SingularDesign)));
    }

    #[test]
    fn textbook_standard_errors() {
        // y = [1,3,2,5,4], x = [1..5]: slope 0.8, se(slope) = sqrt(s²/Sxx)
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { (i + 1) as f64 });
        let y = vec![1.0, 3.0, 2.0, 5.0, 4.0];
        let f = ols(&y, &x).unwrap();
        assert!((f.coef[1] - 0.8).abs() < 1e-12);
        let s2 = f.ssr / 3.0;
        assert!((f.std_errors[1] - (s2 / 10.0).sqrt()).abs() < 1e-12);
    }
}
