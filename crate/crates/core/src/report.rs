use std::collections::BTreeMap;

use serde::Serialize;

/// What a reported number estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    OlsSlope,
    IttOutcome,
    IttTreatment,
    Iv,
    Ils,
    Tsls,
    Liml,
    Late,
    Wald,
}

impl Estimand {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimand::OlsSlope => "ols_slope",
            Estimand::IttOutcome => "itt_outcome",
            Estimand::IttTreatment => "itt_treatment",
            Estimand::Iv => "iv",
            Estimand::Ils => "ils",
            Estimand::Tsls => "tsls",
            Estimand::Liml => "liml",
            Estimand::Late => "late",
            Estimand::Wald => "wald",
        }
    }
}

/// A point estimate with its standard error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub point: f64,
    pub std_error: Option<f64>,
    pub n_used: usize,
    /// Extra numeric metadata, e.g. `kappa` for LIML.
    pub details: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub fn new(estimand: Estimand, point: f64, std_error: Option<f64>, n_used: usize) -> Self {
        debug_assert!(std_error.is_none_or(|s| s >= 0.0));
        Self {
            estimand,
            point,
            std_error,
            n_used,
            details: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }
}
