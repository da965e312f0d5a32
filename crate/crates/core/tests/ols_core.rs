mod common;

use common::{dot, mean, normal_equations};
use ivkit_core::market::{simulate_markets, InstrumentLaw, MarketParams};
use ivkit_core::{flu_table, ols, reduced_forms, Dataset};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_design(seed: u64, n: usize, p: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0 + 1.0).collect())
        .collect();
    let y = (0..n)
        .map(|i| 2.0 + cols.iter().enumerate().map(|(j, c)| (j as f64 - 1.0) * c[i]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    (y, cols)
}

fn matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols[0].len();
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

#[test]
fn matches_normal_equations_oracle() {
    for seed in 0..10 {
        let (y, cols) = random_design(seed, 40, 3);
        let fit = ols(&DVector::from_vec(y.clone()), &matrix(&cols), &[], true).unwrap();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let oracle = normal_equations(&y, &refs);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn flu_itt_on_outcome_from_counts() {
    let d = flu_table().expand();
    let fit = ols(d.outcome(), d.instruments(), &["z".to_string()], true).unwrap();
    let (slope, se) = fit.get("z").unwrap();
    assert!((slope - (115.0 / 1472.0 - 129.0 / 1389.0)).abs() < 1e-12);

    let z: Vec<f64> = d.instruments().column(0).iter().copied().collect();
    let zbar = mean(&z);
    let szz: f64 = z.iter().map(|v| (v - zbar).powi(2)).sum();
    let resid: Vec<f64> = fit.residuals.clone();
    let sigma2 = dot(&resid, &resid) / (d.n() - 2) as f64;
    assert!((se - (sigma2 / szz).sqrt()).abs() < 1e-12);
    assert!((se - 0.0104).abs() < 1e-4);
}

#[test]
fn market_reduced_forms_converge_to_closed_forms() {
    let p = MarketParams::default();
    let d = simulate_markets(&p, 100_000, &InstrumentLaw::fish_binary(), 5).unwrap();
    let (rf_q, rf_p) = reduced_forms(&d).unwrap();
    let (want_q, want_p) = p.reduced_form_slopes();
    let (got_q, se_q) = rf_q.get("stormy").unwrap();
    let (got_p, se_p) = rf_p.get("stormy").unwrap();
    assert!((got_q - want_q).abs() < 4.0 * se_q, "{got_q} vs {want_q}");
    assert!((got_p - want_p).abs() < 4.0 * se_p, "{got_p} vs {want_p}");
}

#[test]
fn independent_instrument_has_vanishing_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 200_000;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let (y, x, z) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
    let d = Dataset::from_slices(&y, &x, &z).unwrap();
    let (a, b) = reduced_forms(&d).unwrap();
    assert!(a.coefficients[1].abs() < 0.01 && b.coefficients[1].abs() < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residuals_orthogonal_to_regressors(seed in 0u64..10_000, n in 8usize..60, p in 1usize..4) {
        let (y, cols) = random_design(seed, n, p);
        let fit = ols(&DVector::from_vec(y.clone()), &matrix(&cols), &[], true).unwrap();
        let scale = dot(&y, &y).sqrt();
        prop_assert!(fit.residuals.iter().sum::<f64>().abs() < 1e-10 * scale * n as f64);
        for c in &cols {
            prop_assert!(dot(&fit.residuals, c).abs() < 1e-10 * scale * dot(c, c).sqrt() * n as f64);
        }
        prop_assert!(fit.residual_variance >= 0.0);
        for i in 0..fit.coef_cov.len() {
            for j in 0..fit.coef_cov.len() {
                prop_assert!((fit.coef_cov[i][j] - fit.coef_cov[j][i]).abs() < 1e-12 * (1.0 + fit.coef_cov[i][i].abs()));
            }
        }
    }

    #[test]
    fn affine_equivariance(seed in 0u64..10_000, c in prop_oneof![-50.0f64..-0.02, 0.02f64..50.0]) {
        let (y, mut cols) = random_design(seed, 30, 2);
        let yv = DVector::from_vec(y);
        let base = ols(&yv, &matrix(&cols), &[], true).unwrap();
        for v in cols[1].iter_mut() {
            *v *= c;
        }
        let scaled = ols(&yv, &matrix(&cols), &[], true).unwrap();
        prop_assert!((scaled.coefficients[2] * c - base.coefficients[2]).abs() < 1e-8 * (1.0 + base.coefficients[2].abs()));
        for (a, b) in base.residuals.iter().zip(&scaled.residuals) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
