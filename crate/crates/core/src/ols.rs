//! Ordinary least squares with homoscedastic covariance, and the two
//! reduced-form (intention-to-treat) regressions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{IvError, Result};
use crate::linalg::{with_intercept, Projector};

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, Serialize)]
pub struct OlsFit {
    /// Intercept first when one was fitted, then regressors in input order.
    pub coefficients: Vec<f64>,
    /// `σ̂² (X'X)⁻¹`, row-major `p × p`.
    pub coef_cov: Vec<Vec<f64>>,
    /// `RSS / (n − p)`.
    pub residual_variance: f64,
    pub n: usize,
    pub regressor_names: Vec<String>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|j| self.coef_cov[j][j].max(0.0).sqrt())
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.regressor_names.iter().position(|n| n == name)
    }

    /// Coefficient and standard error for a named regressor.
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.index_of(name)
            .map(|j| (self.coefficients[j], self.coef_cov[j][j].max(0.0).sqrt()))
    }
}

/// Regress `y` on `regressors` (plus an intercept column if requested).
///
/// `names` labels the regressor columns; pass an empty slice for `x1, x2, …`.
pub fn ols(
    y: &DVector<f64>,
    regressors: &DMatrix<f64>,
    names: &[String],
    include_intercept: bool,
) -> Result<OlsFit> {
    let n = y.len();
    if regressors.nrows() != n {
        return Err(IvError::LengthMismatch {
            column: "regressors".into(),
            expected: n,
            got: regressors.nrows(),
        });
    }
    let mut labels: Vec<String> = if names.len() == regressors.ncols() {
        names.to_vec()
    } else {
        (1..=regressors.ncols()).map(|j| format!("x{j}")).collect()
    };
    let design = if include_intercept {
        labels.insert(0, INTERCEPT.to_string());
        with_intercept(n, &[regressors])
    } else {
        regressors.clone()
    };
    let p = design.ncols();
    if n <= p {
        return Err(IvError::TooFewObservations { n, p });
    }
    let proj = Projector::new(design, Some(&labels))?;
    let beta = proj.coefficients(y);
    let resid = y - proj.design() * &beta;
    let sigma2 = resid.norm_squared() / (n - p) as f64;
    let cov = proj.xtx_inv() * sigma2;
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        coef_cov: rows(&cov),
        residual_variance: sigma2,
        n,
        regressor_names: labels,
        residuals: resid.iter().copied().collect(),
    })
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Outcome and treatment each regressed on `(1, Z, V)`.
///
/// With one binary instrument and no covariates the instrument coefficients
/// are the differences in arm means, i.e. the two intention-to-treat effects.
pub fn reduced_forms(d: &Dataset) -> Result<(OlsFit, OlsFit)> {
    let regressors = exogenous_block(d);
    let names: Vec<String> = d
        .instrument_names()
        .iter()
        .chain(d.covariate_names())
        .cloned()
        .collect();
    let outcome = ols(d.outcome(), &regressors, &names, true)?;
    let treatment = ols(d.treatment(), &regressors, &names, true)?;
    Ok((outcome, treatment))
}

/// `[Z | V]` without the intercept.
pub(crate) fn exogenous_block(d: &Dataset) -> DMatrix<f64> {
    let (z, v) = (d.instruments(), d.covariates());
    let mut m = DMatrix::zeros(d.n(), z.ncols() + v.ncols());
    m.columns_mut(0, z.ncols()).copy_from(z);
    m.columns_mut(z.ncols(), v.ncols()).copy_from(v);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::flu_table;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn exact_fit() {
        let f = ols(&vec(&[2.0, 4.0, 6.0]), &col(&[1.0, 2.0, 3.0]), &[], true).unwrap();
        assert!(f.coefficients[0].abs() < 1e-12);
        assert!((f.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(f.residual_variance < 1e-24);
    }

    #[test]
    fn hand_computed_normal_equations() {
        // x̄ = 1.5, ȳ = 1, Sxy = 3, Sxx = 5 → slope 0.6, intercept 0.1.
        let f = ols(&vec(&[0.0, 1.0, 1.0, 2.0]), &col(&[0.0, 1.0, 2.0, 3.0]), &[], true).unwrap();
        assert!((f.coefficients[1] - 0.6).abs() < 1e-12);
        assert!((f.coefficients[0] - 0.1).abs() < 1e-12);
        assert_eq!(f.regressor_names, vec![INTERCEPT.to_string(), "x1".to_string()]);
    }

    #[test]
    fn too_few_rows() {
        let r = ols(&vec(&[1.0, 2.0]), &col(&[1.0, 2.0]), &[], true);
        assert!(matches!(r, Err(IvError::TooFewObservations { n: 2, p: 2 })));
    }

    #[test]
    fn constant_regressor_is_rank_deficient() {
        let r = ols(&vec(&[1.0, 2.0, 3.0, 4.0]), &col(&[5.0; 4]), &["p".into()], true);
        match r {
            Err(IvError::RankDeficient { column }) => assert_eq!(column.as_deref(), Some("p")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flu_itt_on_outcome() {
        let d = flu_table().expand();
        let f = ols(d.outcome(), d.instruments(), &["z".into()], true).unwrap();
        let (b, se) = f.get("z").unwrap();
        let exact = 115.0 / 1472.0 - 129.0 / 1389.0;
        assert!((b - exact).abs() < 1e-12);
        assert!((se - 0.011).abs() < 0.001, "se = {se}");
    }

    #[test]
    fn flu_reduced_forms() {
        let d = flu_table().expand();
        let (y, x) = reduced_forms(&d).unwrap();
        assert!((y.get("z").unwrap().0 - (-0.014747570194384454)).abs() < 1e-12);
        assert!((x.get("z").unwrap().0 - 0.11839971280558423).abs() < 1e-12);
    }
}
