//! Anderson–Rubin test and its inversion into confidence sets that stay
//! valid however weak the instruments are.
//!
//! With `e(b) = Y − b·X`, `M` the annihilator of `(1, V)` and `P` the
//! projection onto `M·Z`,
//!
//! ```text
//! AR(b) = N · e'Pe / e'Me
//! ```
//!
//! For one instrument and no covariates this is
//! `(N^{-1/2} Σ (Z_i − z̄)(Y_i − b X_i))² / (N^{-1} Σ (Z_i − z̄)² · σ̂²(b))`
//! with `σ̂²(b)` the divisor-`N` variance of `e(b)`. Both quadratic forms
//! are quadratic in `b`, so `{b : AR(b) ≤ c}` is found in closed form.

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Dataset;
use crate::error::{IvError, Result};
use crate::interval::{Interval, IntervalSet};
use crate::linalg::{with_intercept, Projector};

/// 95% critical value of χ²(1).
pub const DEFAULT_CRITICAL_VALUE: f64 = 3.84;

/// Grid fallback settings.
pub const GRID_POINTS: usize = 10_001;
pub const GRID_HALF_WIDTH_SCALES: f64 = 50.0;
pub const BISECTION_TOL: f64 = 1e-8;

/// 95% critical value for `k` instruments: 3.84 for one, the χ²(k)
/// quantile otherwise.
pub fn default_critical_value(k: usize) -> f64 {
    if k <= 1 {
        DEFAULT_CRITICAL_VALUE
    } else {
        ChiSquared::new(k as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.95)
    }
}

/// How `σ̂²(b)` in the denominator of `AR(b)` is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceCentering {
    /// Residualized on `(1, V)`: the divisor-`N` sample variance.
    #[default]
    Demeaned,
    /// Residualized on `V` only (plain `N^{-1} Σ e²` without covariates).
    Raw,
}

/// Sufficient statistics for `AR(b)`: the 2×2 Gram matrices of `(Y, X)`
/// under `P` and `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArProblem {
    n: usize,
    k: usize,
    gram_p: Matrix2<f64>,
    gram_m: Matrix2<f64>,
}

fn quad(g: &Matrix2<f64>, b: f64) -> f64 {
    g[(0, 0)] - 2.0 * b * g[(0, 1)] + b * b * g[(1, 1)]
}

impl ArProblem {
    pub fn new(d: &Dataset) -> Result<Self> {
        Self::with_centering(d, VarianceCentering::Demeaned)
    }

    pub fn with_centering(d: &Dataset, centering: VarianceCentering) -> Result<Self> {
        let n = d.n();
        if n < 3 {
            return Err(IvError::TooFewObservations { n, p: 3 });
        }
        let exo = Projector::new(with_intercept(n, &[d.covariates()]), None)?;
        let mut w = DMatrix::zeros(n, 2);
        w.set_column(0, d.outcome());
        w.set_column(1, d.treatment());
        let mw = exo.residualize(&w);
        let mz = exo.residualize(d.instruments());
        let proj = Projector::new(mz, Some(d.instrument_names()))?;
        let pw = &mw - proj.residualize(&mw);
        let to2 = |m: DMatrix<f64>| Matrix2::from_iterator(m.iter().copied());
        let gram_m = match centering {
            VarianceCentering::Demeaned => mw.tr_mul(&mw),
            VarianceCentering::Raw if d.l() == 0 => w.tr_mul(&w),
            VarianceCentering::Raw => {
                let rw = Projector::new(d.covariates().clone(), Some(d.covariate_names()))?
                    .residualize(&w);
                rw.tr_mul(&rw)
            }
        };
        Ok(Self {
            n,
            k: d.k(),
            gram_p: to2(pw.tr_mul(&pw)),
            gram_m: to2(gram_m),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `AR(b)`. Where `e(b)` has no variation left (up to rounding) the
    /// numerator vanishes too and the statistic is 0.
    pub fn statistic(&self, b: f64) -> f64 {
        let num = quad(&self.gram_p, b).max(0.0);
        let den = quad(&self.gram_m, b);
        // Below this the quadratic is rounding noise: e(b) is constant.
        let noise = 1e-12 * (self.gram_m[(0, 0)] + b * b * self.gram_m[(1, 1)]);
        if den <= noise || num == 0.0 {
            return 0.0;
        }
        self.n as f64 * num / den
    }

    /// `lim AR(b)` as `|b| → ∞`.
    pub fn limit_at_infinity(&self) -> f64 {
        if self.gram_m[(1, 1)] <= 0.0 {
            return 0.0;
        }
        self.n as f64 * self.gram_p[(1, 1)].max(0.0) / self.gram_m[(1, 1)]
    }

    /// Coefficients `(A, B, C)` of `q(b) = A b² + B b + C` with
    /// `AR(b) ≤ c ⇔ q(b) ≤ 0`.
    fn boundary(&self, c: f64) -> (f64, f64, f64) {
        let n = self.n as f64;
        let (p, m) = (&self.gram_p, &self.gram_m);
        (
            n * p[(1, 1)] - c * m[(1, 1)],
            -2.0 * (n * p[(0, 1)] - c * m[(0, 1)]),
            n * p[(0, 0)] - c * m[(0, 0)],
        )
    }

    /// `{b : AR(b) ≤ c}` by solving the quadratic boundary.
    pub fn confidence_set(&self, critical_value: f64) -> Result<IntervalSet> {
        if critical_value.is_nan() || critical_value < 0.0 {
            return Err(IvError::InvalidArgument(format!(
                "critical value must be nonnegative, got {critical_value}"
            )));
        }
        if critical_value == f64::INFINITY {
            return Ok(IntervalSet::whole_line());
        }
        let (a, b, c) = self.boundary(critical_value);
        if ![a, b, c].iter().all(|v| v.is_finite()) {
            return self.confidence_set_grid(critical_value, 0.0, 1.0);
        }
        let inf = f64::INFINITY;
        if a == 0.0 {
            return Ok(match b.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => IntervalSet::closed(-inf, -c / b),
                Some(std::cmp::Ordering::Less) => IntervalSet::closed(-c / b, inf),
                _ if c <= 0.0 => IntervalSet::whole_line(),
                _ => IntervalSet::empty(),
            });
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Ok(if a > 0.0 { IntervalSet::empty() } else { IntervalSet::whole_line() });
        }
        let (r1, r2) = stable_roots(a, b, c, disc);
        Ok(if a > 0.0 {
            IntervalSet::closed(r1, r2)
        } else if r1 == r2 {
            IntervalSet::whole_line()
        } else {
            IntervalSet::new(vec![Interval::closed(-inf, r1), Interval::closed(r2, inf)])
        })
    }

    /// Grid scan over `center ± 50·scale` with bisection refinement.
    ///
    /// Crossings beyond the grid are located by comparing the last grid
    /// value with the limit of `AR` at infinity and expanding outwards.
    pub fn confidence_set_grid(
        &self,
        critical_value: f64,
        center: f64,
        scale: f64,
    ) -> Result<IntervalSet> {
        if !(scale > 0.0) || !center.is_finite() {
            return Err(IvError::InvalidArgument("grid needs finite center and positive scale".into()));
        }
        if critical_value == f64::INFINITY {
            return Ok(IntervalSet::whole_line());
        }
        let inside = |b: f64| self.statistic(b) <= critical_value;
        let half = GRID_HALF_WIDTH_SCALES * scale;
        let step = 2.0 * half / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|i| center - half + step * i as f64).collect();
        let flags: Vec<bool> = grid.iter().map(|&b| inside(b)).collect();
        let limit_inside = self.limit_at_infinity() <= critical_value;

        let refine = |mut lo: f64, mut hi: f64| {
            // Invariant: inside(lo) != inside(hi).
            let lo_in = inside(lo);
            while (hi - lo).abs() > BISECTION_TOL * hi.abs().max(lo.abs()).max(1.0) {
                let mid = 0.5 * (lo + hi);
                if inside(mid) == lo_in {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let outward = |from: f64, dir: f64, from_in: bool| -> Option<f64> {
            let mut dist = half.max(1.0);
            for _ in 0..2000 {
                let probe = from + dir * dist;
                if !probe.is_finite() {
                    return None;
                }
                if inside(probe) != from_in {
                    return Some(refine(from, probe));
                }
                dist *= 2.0;
            }
            None
        };

        let mut pieces = Vec::new();
        let mut start: Option<f64> = None;
        let first = grid[0];
        if flags[0] {
            start = Some(if limit_inside {
                f64::NEG_INFINITY
            } else {
                outward(first, -1.0, true).unwrap_or(f64::NEG_INFINITY)
            });
        } else if limit_inside {
            if let Some(edge) = outward(first, -1.0, false) {
                pieces.push(Interval::closed(f64::NEG_INFINITY, edge));
            }
        }
        for i in 1..GRID_POINTS {
            match (flags[i - 1], flags[i]) {
                (false, true) => start = Some(refine(grid[i - 1], grid[i])),
                (true, false) => {
                    let end = refine(grid[i - 1], grid[i]);
                    pieces.push(Interval::closed(start.take().expect("open piece"), end));
                }
                _ => {}
            }
        }
        let last = grid[GRID_POINTS - 1];
        if let Some(s) = start {
            let end = if limit_inside {
                f64::INFINITY
            } else {
                outward(last, 1.0, true).unwrap_or(f64::INFINITY)
            };
            pieces.push(Interval::closed(s, end));
        } else if limit_inside {
            if let Some(edge) = outward(last, 1.0, false) {
                pieces.push(Interval::closed(edge, f64::INFINITY));
            }
        }
        Ok(IntervalSet::new(pieces))
    }
}

/// Roots of `a x² + b x + c` (`disc = b² − 4ac ≥ 0`), ascending, without
/// cancellation.
fn stable_roots(a: f64, b: f64, c: f64, disc: f64) -> (f64, f64) {
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    if r1 <= r2 {
        (r1, r2)
    } else {
        (r2, r1)
    }
}

/// `AR(b)` for the dataset.
pub fn ar_statistic(d: &Dataset, b: f64) -> Result<f64> {
    Ok(ArProblem::new(d)?.statistic(b))
}

/// `{b : AR(b) ≤ critical_value}`; `None` uses [`default_critical_value`].
pub fn ar_confidence_set(d: &Dataset, critical_value: Option<f64>) -> Result<IntervalSet> {
    let problem = ArProblem::new(d)?;
    problem.confidence_set(critical_value.unwrap_or_else(|| default_critical_value(d.k())))
}

/// AR evaluated on a grid of candidate values.
#[derive(Debug, Clone, Serialize)]
pub struct ArCurve {
    pub critical_value: f64,
    /// `(b, AR(b))` pairs.
    pub evaluation_grid: Vec<(f64, f64)>,
}

pub fn ar_curve(d: &Dataset, grid: &[f64], critical_value: Option<f64>) -> Result<ArCurve> {
    let problem = ArProblem::new(d)?;
    Ok(ArCurve {
        critical_value: critical_value.unwrap_or_else(|| default_critical_value(d.k())),
        evaluation_grid: grid.iter().map(|&b| (b, problem.statistic(b))).collect(),
    })
}
