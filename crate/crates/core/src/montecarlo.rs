//! Monte Carlo harness for weak- and many-instrument behavior.
//!
//! Data-generating process, per replication:
//!
//! ```text
//! Z ~ N(0, I_K)            (n × K)
//! (ε, v) ~ N(0, [[1, ρ], [ρ, 1]])
//! X = Z π + v,             π_j = strength / √K
//! Y = β₁ X + ε
//! ```
//!
//! so `‖π‖ = instrument_strength` and the concentration parameter is about
//! `n · strength²`.
//!
//! Replication `r` draws from a ChaCha8 generator keyed by `master_seed`
//! on stream `r`. Each replication is independent of scheduling, and
//! summaries are computed serially from the ordered records, so serial and
//! parallel runs give bit-identical reports.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{parse_key_values, KeyValues};
use crate::data::{Column, Dataset};
use crate::error::{IvError, Result};
use crate::iv::{liml, tsls};
use crate::linalg::column;
use crate::ols::ols;
use crate::weak::{default_critical_value, ArProblem};

/// Two-sided 95% normal quantile used for conventional intervals.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub n: usize,
    pub k_instruments: usize,
    pub beta1_true: f64,
    /// Euclidean norm of the first-stage coefficient vector.
    pub instrument_strength: f64,
    /// Correlation between structural and first-stage errors.
    pub endogeneity: f64,
    pub replications: usize,
    pub master_seed: u64,
    /// Keep per-replication records in the report.
    pub keep_replications: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n: 500,
            k_instruments: 1,
            beta1_true: 1.0,
            instrument_strength: 0.5,
            endogeneity: 0.5,
            replications: 1000,
            master_seed: 0,
            keep_replications: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IvError::InvalidArgument(m));
        if !(self.endogeneity > -1.0 && self.endogeneity < 1.0) {
            return bad(format!("endogeneity must lie in (-1, 1), got {}", self.endogeneity));
        }
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if self.k_instruments < 1 {
            return bad("k_instruments must be at least 1".into());
        }
        if self.n < self.k_instruments + 3 {
            return bad(format!(
                "n = {} too small for {} instruments",
                self.n, self.k_instruments
            ));
        }
        if !self.beta1_true.is_finite() || !self.instrument_strength.is_finite() {
            return bad("beta1_true and instrument_strength must be finite".into());
        }
        Ok(())
    }

    /// Parse `key = value` lines; unspecified keys keep their defaults.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut kv = parse_key_values(text)?;
        let d = Self::default();
        let cfg = Self {
            n: kv.take_or("n", d.n)?,
            k_instruments: kv.take_or("k_instruments", d.k_instruments)?,
            beta1_true: kv.take_or("beta1_true", d.beta1_true)?,
            instrument_strength: kv.take_or("instrument_strength", d.instrument_strength)?,
            endogeneity: kv.take_or("endogeneity", d.endogeneity)?,
            replications: kv.take_or("replications", d.replications)?,
            master_seed: kv.take_or("master_seed", d.master_seed)?,
            keep_replications: kv.take_or("keep_replications", d.keep_replications)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        let mut kv = KeyValues::default();
        kv.insert("n", self.n);
        kv.insert("k_instruments", self.k_instruments);
        kv.insert("beta1_true", self.beta1_true);
        kv.insert("instrument_strength", self.instrument_strength);
        kv.insert("endogeneity", self.endogeneity);
        kv.insert("replications", self.replications);
        kv.insert("master_seed", self.master_seed);
        kv.insert("keep_replications", self.keep_replications);
        kv.render()
    }
}

/// RNG for replication `r`.
pub fn replication_rng(master_seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(r);
    rng
}

/// One simulated dataset from the DGP.
pub fn simulate_linear_iv(cfg: &McConfig, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let (n, k) = (cfg.n, cfg.k_instruments);
    let pi = cfg.instrument_strength / (k as f64).sqrt();
    let rho = cfg.endogeneity;
    let tail = (1.0 - rho * rho).sqrt();
    let mut z = vec![vec![0.0; n]; k];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut index = 0.0;
        for col in z.iter_mut() {
            let v: f64 = StandardNormal.sample(rng);
            col[i] = v;
            index += v;
        }
        let eps: f64 = StandardNormal.sample(rng);
        let w: f64 = StandardNormal.sample(rng);
        let v = rho * eps + tail * w;
        x[i] = pi * index + v;
        y[i] = cfg.beta1_true * x[i] + eps;
    }
    let instruments: Vec<Column> = z
        .into_iter()
        .enumerate()
        .map(|(j, c)| (format!("z{}", j + 1), c))
        .collect();
    Dataset::new(("y".into(), y), ("x".into(), x), instruments, vec![])
}

/// Point estimate and conventional standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointSe {
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub ols: Option<PointSe>,
    pub tsls: Option<PointSe>,
    pub liml: Option<PointSe>,
    /// `AR(β₁_true)`.
    pub ar_at_truth: Option<f64>,
    /// `AR(0)`.
    pub ar_at_zero: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub median_estimate: f64,
    pub median_bias: f64,
    /// Share of nominal-95% conventional intervals covering the truth.
    pub coverage: f64,
    /// Share of replications rejecting `β₁ = 0` at 5%.
    pub rejects_zero: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArSummary {
    pub critical_value: f64,
    /// Share of replications with `AR(β₁_true) ≤ critical value`.
    pub coverage: f64,
    pub rejects_zero: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub config: McConfig,
    pub estimators: BTreeMap<String, EstimatorSummary>,
    pub anderson_rubin: ArSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<Vec<ReplicationRecord>>,
}

impl McReport {
    pub fn estimator(&self, name: &str) -> &EstimatorSummary {
        &self.estimators[name]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

fn run_replication(cfg: &McConfig, r: usize) -> Result<ReplicationRecord> {
    let mut rng = replication_rng(cfg.master_seed, r as u64);
    let d = simulate_linear_iv(cfg, &mut rng)?;
    let ols_fit = ols(d.outcome(), &column(d.treatment()), &[], true).ok().map(|f| PointSe {
        estimate: f.coefficients[1],
        std_error: f.coef_cov[1][1].sqrt(),
    });
    let iv = |fit: Result<crate::iv::IvFit>| {
        fit.ok().map(|f| PointSe {
            estimate: f.beta1,
            std_error: f.se_beta1(),
        })
    };
    let ar = ArProblem::new(&d).ok();
    Ok(ReplicationRecord {
        replication: r,
        ols: ols_fit,
        tsls: iv(tsls(&d)),
        liml: iv(liml(&d)),
        ar_at_truth: ar.map(|a| a.statistic(cfg.beta1_true)),
        ar_at_zero: ar.map(|a| a.statistic(0.0)),
    })
}

/// Median of a non-empty slice (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn summarize(records: &[ReplicationRecord], pick: fn(&ReplicationRecord) -> Option<PointSe>, truth: f64) -> EstimatorSummary {
    let ok: Vec<PointSe> = records.iter().filter_map(pick).collect();
    let estimates: Vec<f64> = ok.iter().map(|p| p.estimate).collect();
    let share = |f: &dyn Fn(&PointSe) -> bool| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().filter(|p| f(p)).count() as f64 / ok.len() as f64
        }
    };
    let med = median(&estimates);
    EstimatorSummary {
        median_estimate: med,
        median_bias: med - truth,
        coverage: share(&|p| (p.estimate - truth).abs() <= Z_95 * p.std_error),
        rejects_zero: share(&|p| p.estimate.abs() > Z_95 * p.std_error),
        failures: records.len() - ok.len(),
    }
}

/// Simulate `cfg.replications` datasets and summarize OLS, TSLS, LIML and
/// Anderson–Rubin inference.
pub fn run_weak_iv_study(cfg: &McConfig) -> Result<McReport> {
    run_weak_iv_study_with(cfg, Execution::Parallel)
}

pub fn run_weak_iv_study_with(cfg: &McConfig, exec: Execution) -> Result<McReport> {
    cfg.validate()?;
    let crit = default_critical_value(cfg.k_instruments);
    let records: Vec<ReplicationRecord> = match exec {
        Execution::Serial => (0..cfg.replications)
            .map(|r| run_replication(cfg, r))
            .collect::<Result<_>>()?,
        Execution::Parallel => (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, r))
            .collect::<Result<_>>()?,
    };

    let truth = cfg.beta1_true;
    let mut estimators = BTreeMap::new();
    estimators.insert("ols".to_string(), summarize(&records, |r| r.ols, truth));
    estimators.insert("tsls".to_string(), summarize(&records, |r| r.tsls, truth));
    estimators.insert("liml".to_string(), summarize(&records, |r| r.liml, truth));

    let at_truth: Vec<f64> = records.iter().filter_map(|r| r.ar_at_truth).collect();
    let at_zero: Vec<f64> = records.iter().filter_map(|r| r.ar_at_zero).collect();
    let rate = |v: &[f64], f: &dyn Fn(f64) -> bool| {
        v.iter().filter(|&&a| f(a)).count() as f64 / v.len().max(1) as f64
    };
    let anderson_rubin = ArSummary {
        critical_value: crit,
        coverage: rate(&at_truth, &|a| a <= crit),
        rejects_zero: rate(&at_zero, &|a| a > crit),
        failures: records.len() - at_truth.len(),
    };

    Ok(McReport {
        config: cfg.clone(),
        estimators,
        anderson_rubin,
        replications: cfg.keep_replications.then_some(records),
    })
}

/// Empirical quantile by the nearest-rank rule.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Per-replication `AR(β₁_true)` values; convenience for distribution checks.
pub fn ar_at_truth_draws(cfg: &McConfig) -> Result<Vec<f64>> {
    let cfg = McConfig {
        keep_replications: true,
        ..cfg.clone()
    };
    let report = run_weak_iv_study(&cfg)?;
    Ok(report
        .replications
        .unwrap_or_default()
        .iter()
        .filter_map(|r| r.ar_at_truth)
        .collect())
}
