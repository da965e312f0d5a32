//! Least-squares projections via Householder QR, with an SVD of the
//! triangular factor for rank checks and the inverse cross-product.

use nalgebra::{DMatrix, DVector};

use crate::error::{IvError, Result};

/// Singular values of the design below this multiple of the largest one
/// declare rank deficiency.
pub const RANK_TOL: f64 = 1e-10;

/// Projection onto the column space of a full-rank design matrix.
#[derive(Debug, Clone)]
pub struct Projector {
    design: DMatrix<f64>,
    /// Thin orthonormal factor, `n × p`.
    q: DMatrix<f64>,
    /// `R⁻¹` where `design = Q R`.
    r_inv: DMatrix<f64>,
}

impl Projector {
    /// `names`, when given, is used to report the offending column.
    pub fn new(design: DMatrix<f64>, names: Option<&[String]>) -> Result<Self> {
        let (n, p) = design.shape();
        if p == 0 {
            return Err(IvError::InvalidArgument("design has no columns".into()));
        }
        if n < p {
            return Err(IvError::TooFewObservations { n, p });
        }
        let qr = design.clone().qr();
        let r = qr.r();
        let svd = r.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin < RANK_TOL * smax {
            // Without pivoting, a vanishing diagonal of R marks the first
            // column that lies in the span of its predecessors.
            let dmax = r.diagonal().amax();
            let column = (0..p)
                .find(|&j| r[(j, j)].abs() <= RANK_TOL * dmax.max(f64::MIN_POSITIVE))
                .and_then(|j| names.and_then(|ns| ns.get(j)).cloned());
            return Err(IvError::RankDeficient { column });
        }
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let inv_s = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
        let r_inv = v_t.transpose() * inv_s * u.transpose();
        Ok(Self {
            q: qr.q(),
            design,
            r_inv,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn ncols(&self) -> usize {
        self.design.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.design.nrows()
    }

    /// Least-squares coefficients of `y` on the design.
    pub fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.r_inv * (self.q.tr_mul(y))
    }

    pub fn fitted(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.q * self.q.tr_mul(y)
    }

    pub fn residuals(&self, y: &DVector<f64>) -> DVector<f64> {
        y - self.fitted(y)
    }

    /// Residualize every column of `m`.
    pub fn residualize(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m - &self.q * self.q.tr_mul(m)
    }

    /// `(X'X)⁻¹ = R⁻¹ R⁻ᵀ`.
    pub fn xtx_inv(&self) -> DMatrix<f64> {
        &self.r_inv * self.r_inv.transpose()
    }
}

/// `[1 | blocks...]` as one `n × (1 + Σ cols)` matrix.
pub fn with_intercept(n: usize, blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let p = 1 + blocks.iter().map(|b| b.ncols()).sum::<usize>();
    let mut m = DMatrix::zeros(n, p);
    m.column_mut(0).fill(1.0);
    let mut j = 1;
    for b in blocks {
        m.columns_mut(j, b.ncols()).copy_from(*b);
        j += b.ncols();
    }
    m
}

pub fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn mean(v: &DVector<f64>) -> f64 {
    v.sum() / v.len() as f64
}

/// `Σ (a_i − ā)(b_i − b̄) / n`.
pub fn cov_n(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let p = Projector::new(x, None).unwrap();
        let b = p.coefficients(&DVector::from_vec(vec![2.0, 4.0, 6.0]));
        assert!((b[0]).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_named() {
        let names: Vec<String> = ["const", "a", "b"].iter().map(|s| s.to_string()).collect();
        let x = DMatrix::from_row_slice(4, 3, &[1., 1., 2., 1., 2., 4., 1., 3., 6., 1., 5., 10.]);
        match Projector::new(x, Some(&names)) {
            Err(IvError::RankDeficient { column }) => assert_eq!(column.as_deref(), Some("b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn xtx_inverse_matches_direct() {
        let x = DMatrix::from_row_slice(4, 2, &[1., 0., 1., 1., 1., 2., 1., 3.]);
        let p = Projector::new(x.clone(), None).unwrap();
        let direct = (x.transpose() * &x).try_inverse().unwrap();
        assert!((p.xtx_inv() - direct).amax() < 1e-12);
    }
}
