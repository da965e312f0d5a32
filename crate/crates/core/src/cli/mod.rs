//! The `ivkit` command-line front end.
//!
//! Every command prints one JSON document on standard output (except
//! `reproduce` without `--json`, which prints a table). Failures print
//! `{"error": {...}}` on standard error and exit with 2 for bad input or
//! 3 for a degenerate estimation problem.

pub mod json;
pub mod reproduce;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::data::{flu_table, read_columns, read_csv, table_from_dataset, write_csv, BinaryIVTable, ColumnRoles};
use crate::error::{IvError, Result};
use crate::interval::IntervalSet;
use crate::iv::{iv_ratio, ils, liml, per_instrument_estimates, tsls, IvFit};
use crate::late::{compliance_shares, exclusion_tests, itt_effects, late, natural_bounds};
use crate::market::{simulate_markets, working_slope, InstrumentLaw, MarketParams};
use crate::montecarlo::{run_weak_iv_study_with, Execution, McConfig};
use crate::ols::ols;
use crate::report::Estimand;
use crate::weak::{default_critical_value, ArProblem, VarianceCentering};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ivkit", version, about = "Instrumental-variables estimation and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Point estimate and standard error of the treatment coefficient.
    Estimate(EstimateArgs),
    /// Compliance shares, LATE, testable inequalities and natural bounds
    /// for a binary outcome, treatment and instrument.
    Late(LateArgs),
    /// Anderson-Rubin confidence set.
    Ar(ArArgs),
    /// Simulated data.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Recompute the published reference values from bundled data.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Ols,
    Iv,
    Ils,
    Tsls,
    Liml,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Iv => "iv",
            Method::Ils => "ils",
            Method::Tsls => "tsls",
            Method::Liml => "liml",
        }
    }
}

#[derive(Debug, Args)]
struct RoleArgs {
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    treatment: String,
    /// Comma-separated instrument columns.
    #[arg(long, value_delimiter = ',')]
    instruments: Vec<String>,
    /// Comma-separated exogenous covariate columns.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Map cell text to numbers, e.g. `--recode treated=yes:1,no:0`. Repeatable.
    #[arg(long)]
    recode: Vec<String>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[command(flatten)]
    roles: RoleArgs,
    file: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builtin {
    Flu,
}

#[derive(Debug, Args)]
struct LateArgs {
    /// Use a bundled table instead of a file.
    #[arg(long, value_enum, conflicts_with = "file")]
    builtin: Option<Builtin>,
    #[arg(long, default_value = "y")]
    outcome: String,
    #[arg(long, default_value = "x")]
    treatment: String,
    #[arg(long, default_value = "z")]
    instrument: String,
    #[arg(long)]
    recode: Vec<String>,
    #[arg(required_unless_present = "builtin")]
    file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ArArgs {
    #[command(flatten)]
    roles: RoleArgs,
    /// Defaults to 3.84 for one instrument, the 95% chi-square(K) quantile otherwise.
    #[arg(long)]
    critical_value: Option<f64>,
    /// Centring of the residual variance in the denominator.
    #[arg(long, value_enum, default_value = "demeaned")]
    centering: Centering,
    file: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Centering {
    Demeaned,
    Raw,
}

#[derive(Debug, Subcommand)]
enum SimulateCommand {
    /// Supply-and-demand equilibrium draws written as CSV.
    Market(MarketArgs),
    /// Weak / many-instrument Monte Carlo study.
    Weakiv(WeakIvArgs),
}

#[derive(Debug, Args)]
struct MarketArgs {
    /// `key = value` parameter file; missing keys keep their defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 111)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// bernoulli:Q, normal, weather:MIXED:STORMY, fish, fish-weather.
    #[arg(long, default_value = "fish")]
    law: String,
    /// Destination CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WeakIvArgs {
    /// `key = value` study configuration; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `replications` from the config.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    keep_replications: bool,
    /// Worker threads (output does not depend on this).
    #[arg(long, conflicts_with = "serial")]
    threads: Option<usize>,
    #[arg(long)]
    serial: bool,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long)]
    json: bool,
}

/// Provenance embedded in every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub toolkit_version: String,
    /// `sha256:<hex>` of the input file, when there is one.
    pub input_digest: Option<String>,
    pub options: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
}

impl RunManifest {
    fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.into(),
            toolkit_version: VERSION.into(),
            input_digest: None,
            options: BTreeMap::new(),
            master_seed: None,
        }
    }

    fn option(mut self, key: &str, value: impl Serialize) -> Self {
        self.options
            .insert(key.into(), serde_json::to_value(value).expect("serializable option"));
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(7 + 64);
    s.push_str("sha256:");
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| IvError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `col=text:value,text:value`
fn parse_recode(specs: &[String]) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for spec in specs {
        let bad = || IvError::InvalidArgument(format!("bad --recode `{spec}` (expected col=text:value,...)"));
        let (col, pairs) = spec.split_once('=').ok_or_else(bad)?;
        let map = out.entry(col.trim().to_string()).or_default();
        for pair in pairs.split(',') {
            let (text, value) = pair.rsplit_once(':').ok_or_else(bad)?;
            let value: f64 = value.trim().parse().map_err(|_| bad())?;
            if !value.is_finite() {
                return Err(bad());
            }
            map.insert(text.trim().to_string(), value);
        }
    }
    Ok(out)
}

fn role_options(m: RunManifest, r: &RoleArgs) -> RunManifest {
    m.option("outcome", &r.outcome)
        .option("treatment", &r.treatment)
        .option("instruments", &r.instruments)
        .option("covariates", &r.covariates)
        .option("recode", &r.recode)
}

fn roles_of(r: &RoleArgs) -> Result<ColumnRoles> {
    Ok(ColumnRoles {
        outcome: r.outcome.clone(),
        treatment: r.treatment.clone(),
        instruments: r.instruments.clone(),
        covariates: r.covariates.clone(),
        recode: parse_recode(&r.recode)?,
    })
}

fn with_manifest(manifest: &RunManifest, body: Value) -> Value {
    let mut map = match body {
        Value::Object(map) => map,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    map.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest"));
    Value::Object(map)
}

fn fit_json(fit: &IvFit) -> Value {
    let report = fit.report();
    json!({
        "estimand": report.estimand,
        "point": report.point,
        "std_error": report.std_error,
        "n": report.n_used,
        "details": report.details,
        "warnings": report.warnings,
    })
}

fn cmd_estimate(a: &EstimateArgs) -> Result<Value> {
    let bytes = read_bytes(&a.file)?;
    let mut manifest = role_options(RunManifest::new("estimate"), &a.roles)
        .option("method", a.method.name())
        .option("file", a.file.display().to_string());
    manifest.input_digest = Some(sha256_hex(&bytes));

    let mut body = match a.method {
        Method::Ols => {
            let mut names = vec![a.roles.outcome.clone(), a.roles.treatment.clone()];
            names.extend(a.roles.covariates.iter().cloned());
            let cols = read_columns(&bytes[..], &names, &parse_recode(&a.roles.recode)?)?;
            let y = DVector::from_column_slice(&cols[0].1);
            let n = y.len();
            let flat: Vec<f64> = cols[1..].iter().flat_map(|(_, v)| v.iter().copied()).collect();
            let regressors = DMatrix::from_column_slice(n, cols.len() - 1, &flat);
            let fit = ols(&y, &regressors, &names[1..], true)?;
            let (point, se) = fit.get(&a.roles.treatment).expect("treatment column present");
            let mut warnings = Vec::<String>::new();
            if !a.roles.instruments.is_empty() {
                warnings.push("instruments are ignored by --method ols".into());
            }
            json!({
                "estimand": Estimand::OlsSlope,
                "point": point,
                "std_error": se,
                "n": fit.n,
                "details": {"beta0": fit.coefficients[0]},
                "warnings": warnings,
            })
        }
        method => {
            let d = read_csv(&bytes[..], &roles_of(&a.roles)?)?;
            let fit = match method {
                Method::Iv => iv_ratio(&d)?,
                Method::Ils => ils(&d)?,
                Method::Tsls => tsls(&d)?,
                Method::Liml => liml(&d)?,
                Method::Ols => unreachable!(),
            };
            let mut body = fit_json(&fit);
            if matches!(method, Method::Liml) {
                body["kappa"] = json!(fit.kappa);
            }
            if d.k() >= 2 {
                body["per_instrument"] = serde_json::to_value(per_instrument_estimates(&d)?)
                    .expect("serializable");
            }
            body
        }
    };
    body["method"] = json!(a.method.name());
    Ok(with_manifest(&manifest, body))
}

fn cmd_late(a: &LateArgs) -> Result<Value> {
    let mut manifest = RunManifest::new("late");
    let table: BinaryIVTable = match (&a.builtin, &a.file) {
        (Some(Builtin::Flu), _) => {
            manifest = manifest.option("builtin", "flu");
            flu_table()
        }
        (None, Some(file)) => {
            let bytes = read_bytes(file)?;
            manifest = manifest
                .option("file", file.display().to_string())
                .option("outcome", &a.outcome)
                .option("treatment", &a.treatment)
                .option("instrument", &a.instrument)
                .option("recode", &a.recode);
            manifest.input_digest = Some(sha256_hex(&bytes));
            let mut roles = ColumnRoles::new(&a.outcome, &a.treatment, &[a.instrument.as_str()]);
            roles.recode = parse_recode(&a.recode)?;
            table_from_dataset(&read_csv(&bytes[..], &roles)?)?
        }
        (None, None) => return Err(IvError::InvalidArgument("give a FILE or --builtin".into())),
    };

    let shares = compliance_shares(&table);
    let itt = itt_effects(&table);
    let mut warnings = Vec::<String>::new();
    let (late_point, late_se) = match late(&table) {
        Ok(r) => (Some(r.point), r.std_error),
        Err(e @ IvError::NonPositiveCompliance { .. }) => {
            warnings.push(e.to_string());
            (None, None)
        }
        Err(e) => return Err(e),
    };
    let bounds = match natural_bounds(&table) {
        Ok(set) => {
            let i = set.intervals()[0];
            Some([i.lo, i.hi])
        }
        Err(e @ IvError::Undefined(_)) => {
            warnings.push(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    let ineq = exclusion_tests(&table);
    let body = json!({
        "n": table.total(),
        "counts": table.counts(),
        "shares": shares,
        "monotonicity_violated": shares.monotonicity_violated,
        "itt_y": itt.itt_y,
        "se_itt_y": itt.se_itt_y,
        "itt_x": itt.itt_x,
        "se_itt_x": itt.se_itt_x,
        "late": late_point,
        "late_se": late_se,
        "bounds": bounds,
        "exclusion_tests": ineq.restrictions,
        "any_inequality_violated": ineq.any_violated(),
        "warnings": warnings,
    });
    Ok(with_manifest(&manifest, body))
}

fn cmd_ar(a: &ArArgs) -> Result<Value> {
    let centering = match a.centering {
        Centering::Demeaned => VarianceCentering::Demeaned,
        Centering::Raw => VarianceCentering::Raw,
    };
    let bytes = read_bytes(&a.file)?;
    let mut manifest = role_options(RunManifest::new("ar"), &a.roles)
        .option("critical_value", a.critical_value)
        .option("centering", centering)
        .option("file", a.file.display().to_string());
    manifest.input_digest = Some(sha256_hex(&bytes));
    let d = read_csv(&bytes[..], &roles_of(&a.roles)?)?;
    let crit = a.critical_value.unwrap_or_else(|| default_critical_value(d.k()));
    if !(crit > 0.0) || !crit.is_finite() {
        return Err(IvError::InvalidArgument(format!(
            "critical value must be positive and finite, got {crit}"
        )));
    }
    let problem = ArProblem::with_centering(&d, centering)?;
    let set: IntervalSet = problem.confidence_set(crit)?;
    let mut warnings = Vec::<String>::new();
    let estimate = match tsls(&d) {
        Ok(fit) => Some(fit.beta1),
        Err(e @ (IvError::IrrelevantInstrument { .. } | IvError::RankDeficient { .. })) => {
            warnings.push(format!("no IV point estimate: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let body = json!({
        "n": d.n(),
        "k": d.k(),
        "critical_value": crit,
        "confidence_set": set,
        "confidence_set_text": set.to_string(),
        "bounded": set.is_bounded(),
        "empty": set.is_empty(),
        "iv_estimate": estimate,
        "ar_at_estimate": estimate.map(|b| problem.statistic(b)),
        "ar_at_infinity": problem.limit_at_infinity(),
        "warnings": warnings,
    });
    Ok(with_manifest(&manifest, body))
}

fn cmd_market(a: &MarketArgs) -> Result<Value> {
    let mut manifest = RunManifest::new("simulate market");
    let params = match &a.params {
        Some(path) => {
            let bytes = read_bytes(path)?;
            manifest.input_digest = Some(sha256_hex(&bytes));
            let text = String::from_utf8(bytes)
                .map_err(|_| IvError::InvalidArgument(format!("{} is not UTF-8", path.display())))?;
            MarketParams::from_key_values(&text)?
        }
        None => MarketParams::default(),
    };
    let law = InstrumentLaw::parse(&a.law)?;
    manifest = manifest
        .option("params", params)
        .option("n", a.n)
        .option("law", &a.law)
        .option("out", a.out.display().to_string());
    manifest.master_seed = Some(a.seed);

    let d = simulate_markets(&params, a.n, &law, a.seed)?;
    let mut buf = Vec::new();
    write_csv(&d, &mut buf)?;
    fs::write(&a.out, &buf).map_err(|source| IvError::Io {
        path: a.out.clone(),
        source,
    })?;
    let (rf_quantity, rf_price) = params.reduced_form_slopes();
    let body = json!({
        "rows": d.n(),
        "columns": std::iter::once(d.outcome_name())
            .chain([d.treatment_name()])
            .chain(d.instrument_names().iter().map(String::as_str))
            .collect::<Vec<_>>(),
        "output_digest": sha256_hex(&buf),
        "true_parameters": params,
        "instrument_law": law,
        "reduced_form_slope_quantity": rf_quantity,
        "reduced_form_slope_price": rf_price,
        "ols_probability_limit_without_shifter": working_slope(&params).ok(),
    });
    Ok(with_manifest(&manifest, body))
}

fn cmd_weakiv(a: &WeakIvArgs) -> Result<Value> {
    let mut manifest = RunManifest::new("simulate weakiv");
    let mut cfg = match &a.config {
        Some(path) => {
            let bytes = read_bytes(path)?;
            manifest.input_digest = Some(sha256_hex(&bytes));
            let text = String::from_utf8(bytes)
                .map_err(|_| IvError::InvalidArgument(format!("{} is not UTF-8", path.display())))?;
            McConfig::from_key_values(&text)?
        }
        None => McConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    cfg.keep_replications |= a.keep_replications;
    cfg.validate()?;
    manifest = manifest.option("config", &cfg);
    manifest.master_seed = Some(cfg.master_seed);

    let report = if a.serial {
        run_weak_iv_study_with(&cfg, Execution::Serial)?
    } else if let Some(threads) = a.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| IvError::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| run_weak_iv_study_with(&cfg, Execution::Parallel))?
    } else {
        run_weak_iv_study_with(&cfg, Execution::Parallel)?
    };
    let body = serde_json::to_value(&report).expect("serializable report");
    Ok(with_manifest(&manifest, body))
}

fn error_json(kind: &str, message: &str, exit_code: i32) -> String {
    json::render(&json!({"error": {"kind": kind, "message": message, "exit_code": exit_code}}))
}

/// Run the command line `args` (including the program name), writing to
/// the given streams. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let message = e.render().to_string();
            let _ = stderr.write_all(error_json("usage", message.trim_end(), EXIT_INPUT).as_bytes());
            return EXIT_INPUT;
        }
    };

    let outcome: Result<(String, i32)> = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a).map(|v| (json::render(&v), 0)),
        Command::Late(a) => cmd_late(a).map(|v| (json::render(&v), 0)),
        Command::Ar(a) => cmd_ar(a).map(|v| (json::render(&v), 0)),
        Command::Simulate(SimulateCommand::Market(a)) => cmd_market(a).map(|v| (json::render(&v), 0)),
        Command::Simulate(SimulateCommand::Weakiv(a)) => cmd_weakiv(a).map(|v| (json::render(&v), 0)),
        Command::Reproduce(a) => reproduce::reproduce_rows().map(|rows| {
            let failed = rows.iter().any(|r| r.status == reproduce::Status::Fail);
            let text = if a.json {
                let manifest = RunManifest::new("reproduce").option("json", true);
                json::render(&with_manifest(
                    &manifest,
                    json!({"rows": rows, "all_reproducible_pass": !failed}),
                ))
            } else {
                reproduce::render_table(&rows)
            };
            (text, 0)
        }),
    };

    match outcome {
        Ok((text, code)) => {
            let _ = stdout.write_all(text.as_bytes());
            code
        }
        Err(e) => {
            let code = if e.is_degenerate() { EXIT_DEGENERATE } else { EXIT_INPUT };
            let _ = stderr.write_all(error_json(e.kind(), &e.to_string(), code).as_bytes());
            code
        }
    }
}
