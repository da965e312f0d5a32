//! Single-endogenous-regressor IV estimators for
//! `Y = β₀ + β₁·X + β₂'V + ε` with instruments `Z`.
//!
//! All estimators share one variance formula:
//! `σ̂² · (Σ (1, X̂, V)(1, X̂, V)')⁻¹`, where `X̂` is the first-stage fit and
//! `σ̂²` is computed from structural residuals `Y − β̂₀ − β̂₁X − β̂₂'V` (actual
//! `X`, not `X̂`) with divisor `n − p`.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{IvError, Result};
use crate::linalg::{column, cov_n, mean, with_intercept, Projector};
use crate::ols::reduced_forms;
use crate::report::{EstimateReport, Estimand};

/// Relative size below which the instrument-driven part of the treatment
/// is treated as exactly zero.
pub const RELEVANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IvMethod {
    IvRatio,
    Ils,
    Tsls,
    Liml,
}

#[derive(Debug, Clone, Serialize)]
pub struct IvFit {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: Vec<f64>,
    /// Aligned with `(β₀, β₁, β₂…)`.
    pub std_errors: Vec<f64>,
    /// k-class parameter: 1 for TSLS, κ̂ for LIML.
    pub kappa: f64,
    pub method: IvMethod,
    pub n: usize,
    pub warnings: Vec<String>,
}

impl IvFit {
    pub fn se_beta1(&self) -> f64 {
        self.std_errors[1]
    }

    pub fn report(&self) -> EstimateReport {
        let estimand = match self.method {
            IvMethod::IvRatio => Estimand::Iv,
            IvMethod::Ils => Estimand::Ils,
            IvMethod::Tsls => Estimand::Tsls,
            IvMethod::Liml => Estimand::Liml,
        };
        let mut r = EstimateReport::new(estimand, self.beta1, Some(self.se_beta1()), self.n)
            .with_detail("beta0", self.beta0);
        if self.method == IvMethod::Liml {
            r = r.with_detail("kappa", self.kappa);
        }
        r.warnings = self.warnings.clone();
        r
    }
}

/// Arm means of outcome and treatment for a binary instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMeans {
    /// `(ȳ₀, ȳ₁)`
    pub mean_y_by_arm: (f64, f64),
    /// `(x̄₀, x̄₁)`
    pub mean_x_by_arm: (f64, f64),
    /// `(N₀, N₁)`
    pub arm_sizes: (u64, u64),
}

impl GroupMeans {
    pub fn new(mean_y: (f64, f64), mean_x: (f64, f64), arm_sizes: (u64, u64)) -> Result<Self> {
        if arm_sizes.0 == 0 || arm_sizes.1 == 0 {
            return Err(IvError::InvalidArgument("arm sizes must be positive".into()));
        }
        Ok(Self {
            mean_y_by_arm: mean_y,
            mean_x_by_arm: mean_x,
            arm_sizes,
        })
    }

    /// Arm means from a dataset whose single instrument is 0/1.
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        if d.k() != 1 {
            return Err(IvError::InvalidArgument("group means need exactly one instrument".into()));
        }
        let mut sums = [[0.0; 2]; 2];
        let mut sizes = [0u64; 2];
        for i in 0..d.n() {
            let z = d.instruments()[(i, 0)];
            let arm = if z == 0.0 {
                0
            } else if z == 1.0 {
                1
            } else {
                return Err(IvError::NonBinary {
                    row: i + 1,
                    column: d.instrument_names()[0].clone(),
                    value: z,
                });
            };
            sums[arm][0] += d.outcome()[i];
            sums[arm][1] += d.treatment()[i];
            sizes[arm] += 1;
        }
        let m = |arm: usize, v: usize| sums[arm][v] / sizes[arm] as f64;
        Self::new((m(0, 0), m(1, 0)), (m(0, 1), m(1, 1)), (sizes[0], sizes[1]))
    }
}

/// `(ȳ₁ − ȳ₀) / (x̄₁ − x̄₀)`.
pub fn wald_from_means(g: &GroupMeans) -> Result<f64> {
    let num = g.mean_y_by_arm.1 - g.mean_y_by_arm.0;
    let den = g.mean_x_by_arm.1 - g.mean_x_by_arm.0;
    if den == 0.0 {
        return Err(IvError::IrrelevantInstrument { denominator: den });
    }
    Ok(num / den)
}

fn require_simple(d: &Dataset, what: &str) -> Result<()> {
    if d.k() != 1 || d.l() != 0 {
        return Err(IvError::InvalidArgument(format!(
            "{what} needs one instrument and no covariates (K = {}, L = {})",
            d.k(),
            d.l()
        )));
    }
    Ok(())
}

/// `cov(Y, Z) / cov(X, Z)` with `1/N` covariances.
pub fn iv_ratio(d: &Dataset) -> Result<IvFit> {
    require_simple(d, "iv_ratio")?;
    let (y, x) = (d.outcome(), d.treatment());
    let z: DVector<f64> = d.instruments().column(0).into_owned();
    let cov_xz = cov_n(x, &z);
    let scale = (cov_n(x, x) * cov_n(&z, &z)).sqrt();
    if !(cov_xz.abs() >= RELEVANCE_TOL * scale) || scale == 0.0 {
        return Err(IvError::IrrelevantInstrument { denominator: cov_xz });
    }
    let beta1 = cov_n(y, &z) / cov_xz;
    let beta0 = mean(y) - beta1 * mean(x);
    let pi21 = cov_xz / cov_n(&z, &z);
    let (xbar, zbar) = (mean(x), mean(&z));
    let xhat = z.map(|zi| xbar + pi21 * (zi - zbar));
    finish(d, DVector::from_vec(vec![beta0, beta1]), &xhat, 1.0, IvMethod::IvRatio, vec![])
}

/// Ratio of the instrument coefficients in the two reduced forms.
pub fn ils(d: &Dataset) -> Result<IvFit> {
    if d.k() != 1 {
        return Err(IvError::InvalidArgument(format!(
            "ils needs exactly one instrument, found {}",
            d.k()
        )));
    }
    let first = first_stage(d)?;
    let xhat = first.fitted(d.treatment());
    check_relevance(d, &xhat)?;
    let (rf_y, rf_x) = reduced_forms(d)?;
    let (pi11, pi21) = (rf_y.coefficients[1], rf_x.coefficients[1]);
    let beta1 = pi11 / pi21;
    let mut beta = Vec::with_capacity(2 + d.l());
    beta.push(rf_y.coefficients[0] - beta1 * rf_x.coefficients[0]);
    beta.push(beta1);
    for j in 0..d.l() {
        beta.push(rf_y.coefficients[2 + j] - beta1 * rf_x.coefficients[2 + j]);
    }
    finish(d, DVector::from_vec(beta), &xhat, 1.0, IvMethod::Ils, vec![])
}

/// Two-stage least squares: regress `X` on `(1, Z, V)`, then `Y` on `(1, X̂, V)`.
pub fn tsls(d: &Dataset) -> Result<IvFit> {
    let first = first_stage(d)?;
    let xhat = first.fitted(d.treatment());
    check_relevance(d, &xhat)?;
    let second = Projector::new(with_intercept(d.n(), &[&column(&xhat), d.covariates()]), None)?;
    let beta = second.coefficients(d.outcome());
    finish(d, beta, &xhat, 1.0, IvMethod::Tsls, vec![])
}

/// k-class estimator at a given `k` (0 = OLS, 1 = TSLS).
pub fn k_class(d: &Dataset, k: f64) -> Result<DVector<f64>> {
    let first = first_stage(d)?;
    k_class_with(d, &first, k)
}

fn k_class_with(d: &Dataset, first: &Projector, k: f64) -> Result<DVector<f64>> {
    let r = structural_design(d);
    let e_x = first.residuals(d.treatment());
    let e_y = first.residuals(d.outcome());
    // M_{ZV} annihilates the exogenous columns of R, so only the X entry
    // of R'MR and R'My is nonzero.
    let mut lhs = r.tr_mul(&r);
    let mut rhs = r.tr_mul(d.outcome());
    lhs[(1, 1)] -= k * e_x.dot(&e_x);
    rhs[1] -= k * e_x.dot(&e_y);
    lhs.lu()
        .solve(&rhs)
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .ok_or(IvError::RankDeficient { column: None })
}

/// Smallest root κ̂ of `det(W'M_V W − κ W'M_{ZV} W) = 0`, `W = (Y, X)`,
/// plus the gap to the other root.
fn liml_kappa(d: &Dataset, first: &Projector) -> Result<(f64, f64)> {
    let exo = Projector::new(with_intercept(d.n(), &[d.covariates()]), None)?;
    let mut w = DMatrix::zeros(d.n(), 2);
    w.set_column(0, d.outcome());
    w.set_column(1, d.treatment());
    let mv = exo.residualize(&w);
    let mzv = first.residualize(&w);
    let a = Matrix2::from_iterator(mv.tr_mul(&mv).iter().copied());
    let b = Matrix2::from_iterator(mzv.tr_mul(&mzv).iter().copied());
    // Reduce to a symmetric problem: L⁻¹ A L⁻ᵀ with B = L L'.
    let chol = b.cholesky().ok_or(IvError::RankDeficient { column: None })?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or(IvError::RankDeficient { column: None })?;
    let c = l_inv * a * l_inv.transpose();
    let half_tr = 0.5 * (c[(0, 0)] + c[(1, 1)]);
    let half_diff = 0.5 * (c[(0, 0)] - c[(1, 1)]);
    let off = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    let radius = half_diff.hypot(off);
    Ok((half_tr - radius, 2.0 * radius))
}

/// Limited-information maximum likelihood as the k-class estimator at
/// `k = κ̂`.
pub fn liml(d: &Dataset) -> Result<IvFit> {
    let first = first_stage(d)?;
    let xhat = first.fitted(d.treatment());
    check_relevance(d, &xhat)?;
    let (kappa, gap) = liml_kappa(d, &first)?;
    let mut warnings = Vec::new();
    if gap <= 1e-12 * kappa.abs().max(1.0) {
        warnings.push(format!(
            "degenerate eigenvalue problem: both roots equal {kappa}"
        ));
    }
    let beta = k_class_with(d, &first, kappa)?;
    finish(d, beta, &xhat, kappa, IvMethod::Liml, warnings)
}

/// One instrument's ILS estimate, or `None` when it alone is irrelevant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstrumentEstimate {
    pub instrument: String,
    pub estimate: Option<f64>,
}

/// Just-identified estimate from each instrument on its own (with all
/// covariates). A dispersion diagnostic for over-identified models.
pub fn per_instrument_estimates(d: &Dataset) -> Result<Vec<InstrumentEstimate>> {
    if d.k() < 2 {
        return Err(IvError::InvalidArgument(format!(
            "per-instrument comparison needs K >= 2, found {}",
            d.k()
        )));
    }
    first_stage(d)?;
    (0..d.k())
        .map(|k| {
            let single = d.with_single_instrument(k)?;
            let estimate = match ils(&single) {
                Ok(fit) => Some(fit.beta1),
                Err(IvError::IrrelevantInstrument { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(InstrumentEstimate {
                instrument: d.instrument_names()[k].clone(),
                estimate,
            })
        })
        .collect()
}

/// Projection onto `(1, Z, V)`.
pub(crate) fn first_stage(d: &Dataset) -> Result<Projector> {
    let names: Vec<String> = std::iter::once("(intercept)".to_string())
        .chain(d.instrument_names().iter().cloned())
        .chain(d.covariate_names().iter().cloned())
        .collect();
    Projector::new(
        with_intercept(d.n(), &[d.instruments(), d.covariates()]),
        Some(&names),
    )
}

/// Fails when `X̂` carries no variation beyond `(1, V)`.
fn check_relevance(d: &Dataset, xhat: &DVector<f64>) -> Result<()> {
    let exo = Projector::new(with_intercept(d.n(), &[d.covariates()]), None)?;
    let explained = exo.residuals(xhat).norm_squared();
    let total = exo.residuals(d.treatment()).norm_squared();
    if !(explained.sqrt() >= RELEVANCE_TOL * total.sqrt()) || total == 0.0 {
        return Err(IvError::IrrelevantInstrument {
            denominator: explained / d.n() as f64,
        });
    }
    Ok(())
}

/// `[1 | X | V]`.
fn structural_design(d: &Dataset) -> DMatrix<f64> {
    with_intercept(d.n(), &[&column(d.treatment()), d.covariates()])
}

fn finish(
    d: &Dataset,
    beta: DVector<f64>,
    xhat: &DVector<f64>,
    kappa: f64,
    method: IvMethod,
    warnings: Vec<String>,
) -> Result<IvFit> {
    let n = d.n();
    let p = beta.len();
    if n <= p {
        return Err(IvError::TooFewObservations { n, p });
    }
    let resid = d.outcome() - structural_design(d) * &beta;
    let sigma2 = resid.norm_squared() / (n - p) as f64;
    let fitted_design = Projector::new(with_intercept(n, &[&column(xhat), d.covariates()]), None)?;
    let cov = fitted_design.xtx_inv() * sigma2;
    Ok(IvFit {
        beta0: beta[0],
        beta1: beta[1],
        beta2: beta.iter().skip(2).copied().collect(),
        std_errors: cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        kappa,
        method,
        n,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::flu_table;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn flu_iv_ratio() {
        let fit = iv_ratio(&flu_table().expand()).unwrap();
        assert!((fit.beta1 - (-0.12455748282599632)).abs() < 1e-12);
        assert!((fit.se_beta1() - 0.090).abs() < 0.0005, "{}", fit.se_beta1());
    }

    #[test]
    fn identity_response() {
        let x = [1.0, 2.0, 4.0, 3.0, 7.0];
        let z = [0.0, 1.0, 1.0, 0.0, 1.0];
        let d = Dataset::from_slices(&x, &x, &z).unwrap();
        assert!((iv_ratio(&d).unwrap().beta1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_instrument() {
        let d = Dataset::from_slices(&[1.0, 2.0, 3.0, 4.0], &[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0])
            .unwrap();
        assert!(matches!(iv_ratio(&d), Err(IvError::IrrelevantInstrument { .. })));
        assert!(matches!(tsls(&d), Err(IvError::IrrelevantInstrument { .. })));
        assert!(matches!(ils(&d), Err(IvError::IrrelevantInstrument { .. })));
        assert!(matches!(liml(&d), Err(IvError::IrrelevantInstrument { .. })));
    }

    #[test]
    fn fish_wald_from_table_means() {
        let g = GroupMeans::new((8.63, 8.27), (-0.29, 0.04), (79, 32)).unwrap();
        let w = wald_from_means(&g).unwrap();
        assert!((w - (-0.36 / 0.33)).abs() < 1e-12);
        assert!((w - (-1.08)).abs() < 0.06);
    }

    #[test]
    fn wald_null_and_zero_denominator() {
        let g = GroupMeans::new((1.0, 1.0), (0.0, 1.0), (3, 3)).unwrap();
        assert_eq!(wald_from_means(&g).unwrap(), 0.0);
        let g = GroupMeans::new((1.0, 2.0), (0.5, 0.5), (3, 3)).unwrap();
        assert!(wald_from_means(&g).is_err());
    }

    #[test]
    fn flu_just_identified_agreement() {
        let d = flu_table().expand();
        let a = iv_ratio(&d).unwrap();
        let b = ils(&d).unwrap();
        let c = tsls(&d).unwrap();
        let l = liml(&d).unwrap();
        let w = wald_from_means(&GroupMeans::from_dataset(&d).unwrap()).unwrap();
        for v in [b.beta1, c.beta1, l.beta1, w] {
            assert!(rel(v, a.beta1) < 1e-10);
        }
        assert!((l.kappa - 1.0).abs() < 1e-8);
        assert!(rel(c.se_beta1(), a.se_beta1()) < 1e-8);
    }

    #[test]
    fn duplicated_instruments_rank_error() {
        let z = [0.0, 1.0, 2.0, 1.0, 0.0, 3.0];
        let d = Dataset::new(
            ("y".into(), vec![1.0, 2.0, 3.0, 1.0, 0.0, 4.0]),
            ("x".into(), vec![0.5, 1.0, 2.5, 1.0, 0.2, 2.0]),
            vec![("z1".into(), z.to_vec()), ("z2".into(), z.to_vec())],
            vec![],
        )
        .unwrap();
        match per_instrument_estimates(&d) {
            Err(IvError::RankDeficient { column }) => assert_eq!(column.as_deref(), Some("z2")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(tsls(&d), Err(IvError::RankDeficient { .. })));
    }

    #[test]
    fn per_instrument_needs_two() {
        assert!(per_instrument_estimates(&flu_table().expand()).is_err());
    }

    #[test]
    fn k_class_zero_is_ols() {
        let d = Dataset::from_slices(
            &[1.0, 3.0, 2.0, 5.0, 4.0],
            &[0.0, 1.0, 1.0, 3.0, 2.0],
            &[0.0, 1.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let b = k_class(&d, 0.0).unwrap();
        let o = crate::ols::ols(d.outcome(), &column(d.treatment()), &[], true).unwrap();
        assert!((b[1] - o.coefficients[1]).abs() < 1e-12);
    }
}
