//! Datasets, the binary (Y, X, Z) count table, and CSV input/output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{IvError, Result};

/// Rectangular data with fixed column roles: one outcome, one endogenous
/// treatment, `K >= 1` instruments and `L >= 0` exogenous covariates.
///
/// Every entry is finite and no instrument column is constant; both are
/// checked once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcome_name: String,
    treatment_name: String,
    outcome: DVector<f64>,
    treatment: DVector<f64>,
    instruments: DMatrix<f64>,
    covariates: DMatrix<f64>,
    instrument_names: Vec<String>,
    covariate_names: Vec<String>,
}

/// A named data column.
pub type Column = (String, Vec<f64>);

impl Dataset {
    pub fn new(
        outcome: Column,
        treatment: Column,
        instruments: Vec<Column>,
        covariates: Vec<Column>,
    ) -> Result<Self> {
        let n = outcome.1.len();
        if n == 0 {
            return Err(IvError::Empty);
        }
        if instruments.is_empty() {
            return Err(IvError::InvalidArgument(
                "at least one instrument column is required".into(),
            ));
        }
        let all = std::iter::once(&outcome)
            .chain(std::iter::once(&treatment))
            .chain(instruments.iter())
            .chain(covariates.iter());
        for (name, values) in all {
            if values.len() != n {
                return Err(IvError::LengthMismatch {
                    column: name.clone(),
                    expected: n,
                    got: values.len(),
                });
            }
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(IvError::BadCell {
                    row: row + 1,
                    column: name.clone(),
                    value: values[row].to_string(),
                });
            }
        }
        for (name, values) in &instruments {
            let first = values[0];
            if values.iter().all(|&v| v == first) {
                return Err(IvError::ConstantInstrument {
                    column: name.clone(),
                });
            }
        }

        let block = |cols: &[Column]| {
            DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i])
        };
        Ok(Self {
            instruments: block(&instruments),
            covariates: block(&covariates),
            instrument_names: instruments.into_iter().map(|c| c.0).collect(),
            covariate_names: covariates.into_iter().map(|c| c.0).collect(),
            outcome: DVector::from_vec(outcome.1),
            treatment: DVector::from_vec(treatment.1),
            outcome_name: outcome.0,
            treatment_name: treatment.0,
        })
    }

    /// Unnamed constructor for the common `y, x, z` case.
    pub fn from_slices(y: &[f64], x: &[f64], z: &[f64]) -> Result<Self> {
        Self::new(
            ("y".into(), y.to_vec()),
            ("x".into(), x.to_vec()),
            vec![("z".into(), z.to_vec())],
            vec![],
        )
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Number of instruments `K`.
    pub fn k(&self) -> usize {
        self.instruments.ncols()
    }

    /// Number of exogenous covariates `L`.
    pub fn l(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.outcome
    }

    pub fn treatment(&self) -> &DVector<f64> {
        &self.treatment
    }

    pub fn instruments(&self) -> &DMatrix<f64> {
        &self.instruments
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn instrument_names(&self) -> &[String] {
        &self.instrument_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Same rows, keeping only instrument `k` (all covariates retained).
    pub fn with_single_instrument(&self, k: usize) -> Result<Self> {
        if k >= self.k() {
            return Err(IvError::InvalidArgument(format!(
                "instrument index {k} out of range (K = {})",
                self.k()
            )));
        }
        Ok(Self {
            instruments: self.instruments.columns(k, 1).into_owned(),
            instrument_names: vec![self.instrument_names[k].clone()],
            ..self.clone()
        })
    }

    /// Replace the outcome column, keeping everything else.
    pub fn with_outcome(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.rebuild(Some((name.to_string(), values)), None, None)
    }

    /// Replace the treatment column, keeping everything else.
    pub fn with_treatment(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.rebuild(None, Some((name.to_string(), values)), None)
    }

    /// Replace the instrument block, keeping everything else.
    pub fn with_instruments(&self, instruments: Vec<Column>) -> Result<Self> {
        self.rebuild(None, None, Some(instruments))
    }

    fn rebuild(
        &self,
        outcome: Option<Column>,
        treatment: Option<Column>,
        instruments: Option<Vec<Column>>,
    ) -> Result<Self> {
        let col = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        let block = |m: &DMatrix<f64>, names: &[String]| {
            names
                .iter()
                .enumerate()
                .map(|(j, name)| (name.clone(), m.column(j).iter().copied().collect()))
                .collect::<Vec<Column>>()
        };
        Self::new(
            outcome.unwrap_or_else(|| (self.outcome_name.clone(), col(&self.outcome))),
            treatment.unwrap_or_else(|| (self.treatment_name.clone(), col(&self.treatment))),
            instruments
                .unwrap_or_else(|| block(&self.instruments, &self.instrument_names)),
            block(&self.covariates, &self.covariate_names),
        )
    }

    /// Reorder rows: row `i` of the result is row `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n() {
            return Err(IvError::InvalidArgument("permutation length differs from n".into()));
        }
        let mut seen = vec![false; self.n()];
        for &i in order {
            if i >= self.n() || std::mem::replace(&mut seen[i], true) {
                return Err(IvError::InvalidArgument("not a permutation".into()));
            }
        }
        let rows = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(order[i], j)]);
        Ok(Self {
            outcome: DVector::from_fn(self.n(), |i, _| self.outcome[order[i]]),
            treatment: DVector::from_fn(self.n(), |i, _| self.treatment[order[i]]),
            instruments: rows(&self.instruments),
            covariates: rows(&self.covariates),
            ..self.clone()
        })
    }
}

/// Which CSV columns play which role. Column names must match the header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnRoles {
    pub outcome: String,
    pub treatment: String,
    pub instruments: Vec<String>,
    pub covariates: Vec<String>,
    /// Optional per-column map from literal cell text to a numeric value,
    /// e.g. `{"yes": 1, "no": 0}`. Cells not in the map are parsed as numbers.
    pub recode: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ColumnRoles {
    pub fn new(outcome: &str, treatment: &str, instruments: &[&str]) -> Self {
        Self {
            outcome: outcome.into(),
            treatment: treatment.into(),
            instruments: instruments.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn with_covariates(mut self, covariates: &[&str]) -> Self {
        self.covariates = covariates.iter().map(|s| s.to_string()).collect();
        self
    }

    fn all(&self) -> impl Iterator<Item = &String> {
        [&self.outcome, &self.treatment]
            .into_iter()
            .chain(self.instruments.iter())
            .chain(self.covariates.iter())
    }

    fn validate(&self) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(IvError::InvalidArgument("no instrument column given".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in self.all() {
            if name.is_empty() {
                return Err(IvError::InvalidArgument("empty column name in roles".into()));
            }
            if !seen.insert(name) {
                return Err(IvError::InvalidArgument(format!(
                    "column `{name}` assigned to more than one role"
                )));
            }
        }
        Ok(())
    }
}

/// Read a comma-separated, UTF-8 file with a header row.
///
/// Any missing, non-numeric or non-finite cell in a role column rejects the
/// whole file; rows are never dropped.
pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, roles)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<Dataset> {
    roles.validate()?;
    let names: Vec<String> = roles.all().cloned().collect();
    let mut named = read_columns(reader, &names, &roles.recode)?.into_iter();
    let outcome = named.next().expect("outcome role");
    let treatment = named.next().expect("treatment role");
    let instruments: Vec<Column> = named.by_ref().take(roles.instruments.len()).collect();
    let covariates: Vec<Column> = named.collect();
    Dataset::new(outcome, treatment, instruments, covariates)
}

/// Read the named numeric columns, in the order given, under the same
/// whole-file rejection rules as [`read_csv`].
pub fn read_columns<R: Read>(
    reader: R,
    names: &[String],
    recode: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<Vec<Column>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| IvError::Csv(e.to_string()))?.clone();
    let wanted: Vec<usize> = names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IvError::MissingColumn { column: name.clone() })
        })
        .collect::<Result<_>>()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IvError::Csv(e.to_string()))?;
        for ((name, idx), out) in names.iter().zip(&wanted).zip(columns.iter_mut()) {
            let cell = record.get(*idx).unwrap_or("");
            out.push(parse_cell(cell, name, r + 1, recode.get(name))?);
        }
    }
    if columns.first().is_none_or(Vec::is_empty) {
        return Err(IvError::Empty);
    }
    Ok(names.iter().cloned().zip(columns).collect())
}

fn parse_cell(
    cell: &str,
    column: &str,
    row: usize,
    recode: Option<&BTreeMap<String, f64>>,
) -> Result<f64> {
    let bad = || IvError::BadCell {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    };
    if let Some(&v) = recode.and_then(|m| m.get(cell)) {
        return Ok(v);
    }
    let v: f64 = cell.parse().map_err(|_| bad())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Write a dataset as CSV: outcome, treatment, instruments, covariates.
/// Values use Rust's shortest round-trip float formatting.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let csv_err = |e: csv::Error| IvError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = [d.outcome_name(), d.treatment_name()]
        .into_iter()
        .chain(d.instrument_names().iter().map(String::as_str))
        .chain(d.covariate_names().iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..d.n() {
        let row: Vec<String> = [d.outcome[i], d.treatment[i]]
            .into_iter()
            .chain(d.instruments.row(i).iter().copied())
            .chain(d.covariates.row(i).iter().copied())
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| IvError::Csv(e.to_string()))
}

/// The 2×2×2 table of counts `N[y][x][z]` for binary outcome, treatment
/// and instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct BinaryIVTable {
    counts: [[[u64; 2]; 2]; 2],
}

impl BinaryIVTable {
    /// Both instrument arms must be non-empty.
    pub fn new(counts: [[[u64; 2]; 2]; 2]) -> Result<Self> {
        let t = Self { counts };
        if t.n_z(0) == 0 || t.n_z(1) == 0 {
            return Err(IvError::InvalidTable(format!(
                "both instrument arms must be non-empty (n_z0 = {}, n_z1 = {})",
                t.n_z(0),
                t.n_z(1)
            )));
        }
        Ok(t)
    }

    /// Build from per-arm counts laid out as `[(y0,x0), (y1,x0), (y0,x1), (y1,x1)]`.
    pub fn from_arms(z0: [u64; 4], z1: [u64; 4]) -> Result<Self> {
        let mut counts = [[[0; 2]; 2]; 2];
        for (z, arm) in [z0, z1].into_iter().enumerate() {
            for (cell, &c) in arm.iter().enumerate() {
                counts[cell % 2][cell / 2][z] = c;
            }
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[[[u64; 2]; 2]; 2] {
        &self.counts
    }

    pub fn count(&self, y: usize, x: usize, z: usize) -> u64 {
        self.counts[y][x][z]
    }

    /// Size of instrument arm `z`.
    pub fn n_z(&self, z: usize) -> u64 {
        (0..2)
            .flat_map(|y| (0..2).map(move |x| (y, x)))
            .map(|(y, x)| self.counts[y][x][z])
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.n_z(0) + self.n_z(1)
    }

    /// `P̂(Y = y, X = x | Z = z)`.
    pub fn prob(&self, y: usize, x: usize, z: usize) -> f64 {
        self.counts[y][x][z] as f64 / self.n_z(z) as f64
    }

    /// `P̂(X = 1 | Z = z)`.
    pub fn treated_share(&self, z: usize) -> f64 {
        (self.counts[0][1][z] + self.counts[1][1][z]) as f64 / self.n_z(z) as f64
    }

    /// `P̂(Y = 1 | Z = z)`.
    pub fn outcome_share(&self, z: usize) -> f64 {
        (self.counts[1][0][z] + self.counts[1][1][z]) as f64 / self.n_z(z) as f64
    }

    /// Table with outcome labels swapped (`y ↔ 1 − y`).
    pub fn flip_outcome(&self) -> Self {
        let c = self.counts;
        Self {
            counts: [c[1], c[0]],
        }
    }

    /// One row per unit, ordered by `(z, x, y)`, columns named `y`, `x`, `z`.
    pub fn expand(&self) -> Dataset {
        let (mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for zi in 0..2 {
            for xi in 0..2 {
                for yi in 0..2 {
                    for _ in 0..self.counts[yi][xi][zi] {
                        y.push(yi as f64);
                        x.push(xi as f64);
                        z.push(zi as f64);
                    }
                }
            }
        }
        Dataset::from_slices(&y, &x, &z).expect("expanded table has both arms")
    }
}

/// Influenza vaccination data: letter to physician (Z), vaccination (X),
/// hospitalization (Y), N = 2861.
pub fn flu_table() -> BinaryIVTable {
    let mut counts = [[[0; 2]; 2]; 2];
    counts[0][0][0] = 1027;
    counts[0][0][1] = 935;
    counts[0][1][0] = 233;
    counts[0][1][1] = 422;
    counts[1][0][0] = 99;
    counts[1][0][1] = 84;
    counts[1][1][0] = 30;
    counts[1][1][1] = 31;
    BinaryIVTable::new(counts).expect("flu table is well formed")
}

/// Cross-tabulate a dataset with one instrument and 0/1 columns.
pub fn table_from_dataset(d: &Dataset) -> Result<BinaryIVTable> {
    if d.k() != 1 {
        return Err(IvError::InvalidArgument(format!(
            "binary table needs exactly one instrument, found {}",
            d.k()
        )));
    }
    let as_bit = |v: f64, row: usize, column: &str| -> Result<usize> {
        if v == 0.0 {
            Ok(0)
        } else if v == 1.0 {
            Ok(1)
        } else {
            Err(IvError::NonBinary {
                row: row + 1,
                column: column.to_string(),
                value: v,
            })
        }
    };
    let mut counts = [[[0u64; 2]; 2]; 2];
    for i in 0..d.n() {
        let y = as_bit(d.outcome[i], i, d.outcome_name())?;
        let x = as_bit(d.treatment[i], i, d.treatment_name())?;
        let z = as_bit(d.instruments[(i, 0)], i, &d.instrument_names[0])?;
        counts[y][x][z] += 1;
    }
    BinaryIVTable::new(counts)
}
