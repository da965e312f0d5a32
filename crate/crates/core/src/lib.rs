//! Instrumental-variables toolkit.
//!
//! - [`data`]: datasets, the binary `(Y, X, Z)` count table, CSV input/output
//! - [`ols`]: least squares and reduced forms
//! - [`iv`]: IV ratio, Wald, indirect least squares, TSLS, LIML
//! - [`late`]: compliance shares, LATE, testable inequalities, natural bounds
//! - [`weak`]: Anderson–Rubin statistic and confidence sets
//! - [`montecarlo`]: weak / many instrument simulation studies
//! - [`market`]: supply and demand simulator
//! - [`cli`]: the `ivkit` command-line front end

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod interval;
pub mod iv;
pub mod late;
pub mod linalg;
pub mod market;
pub mod montecarlo;
pub mod ols;
pub mod report;
pub mod weak;

pub use data::{flu_table, load_csv, table_from_dataset, BinaryIVTable, ColumnRoles, Dataset};
pub use error::{IvError, Result};
pub use interval::{Interval, IntervalSet};
pub use iv::{iv_ratio, ils, liml, per_instrument_estimates, tsls, wald_from_means, GroupMeans, IvFit, IvMethod};
pub use late::{compliance_shares, exclusion_tests, late, late_with_defiers, natural_bounds, ComplianceShares, InequalityReport};
pub use market::{equilibrium, simulate_markets, tax_counterfactual, working_slope, InstrumentLaw, MarketDraw, MarketParams};
pub use montecarlo::{run_weak_iv_study, McConfig, McReport};
pub use ols::{ols, reduced_forms, OlsFit};
pub use report::{EstimateReport, Estimand};
pub use weak::{ar_confidence_set, ar_statistic, ArCurve, ArProblem, VarianceCentering};
