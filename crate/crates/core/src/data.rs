//! Tabular cohorts with explicit covariate missingness.
//!
//! A [`Dataset`] is a list of [`Subject`] rows sharing a covariate count `p`.
//! Only covariates may be missing; arm and outcome are always observed.
//! Datasets are immutable once built and are split into training and test
//! sets with a seeded permutation.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset needs at least 2 rows, got {0}")]
    EmptyDataset(usize),

    #[error("train fraction must lie strictly inside (0, 1), got {0}")]
    BadFraction(f64),

    #[error("duplicate subject id `{0}`")]
    DuplicateId(String),

    #[error("subject `{id}` has {got} covariates, dataset declares {expected}")]
    WidthMismatch { id: String, got: usize, expected: usize },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse { row: usize, column: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("non-finite outcome for subject `{0}`")]
    NonFiniteOutcome(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn from_code(code: u8) -> Option<Arm> {
        match code {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    /// `{0, 1}` coding.
    pub fn code(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn indicator(self) -> f64 {
        f64::from(self.code())
    }

    /// `{-1, +1}` coding.
    pub fn signed(self) -> f64 {
        match self {
            Arm::Control => -1.0,
            Arm::Treated => 1.0,
        }
    }

    pub fn from_signed(s: f64) -> Option<Arm> {
        if s == -1.0 {
            Some(Arm::Control)
        } else if s == 1.0 {
            Some(Arm::Treated)
        } else {
            None
        }
    }

    pub fn flipped(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

impl From<Arm> for u8 {
    fn from(arm: Arm) -> u8 {
        arm.code()
    }
}

impl TryFrom<u8> for Arm {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        Arm::from_code(code).ok_or_else(|| format!("arm code must be 0 or 1, got {code}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub covariates: Vec<Option<f64>>,
    pub arm: Arm,
    pub outcome: f64,
}

impl Subject {
    pub fn complete(id: impl Into<String>, covariates: &[f64], arm: Arm, outcome: f64) -> Self {
        Subject {
            id: id.into(),
            covariates: covariates.iter().copied().map(Some).collect(),
            arm,
            outcome,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.covariates.iter().all(Option::is_some)
    }

    /// Covariates as plain values, or `None` if any is missing.
    pub fn observed_covariates(&self) -> Option<Vec<f64>> {
        self.covariates.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    subjects: Vec<Subject>,
    p: usize,
    covariate_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with default covariate names `x1..xp`.
    pub fn new(subjects: Vec<Subject>, p: usize) -> Result<Self, DataError> {
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::with_names(subjects, names)
    }

    pub fn with_names(subjects: Vec<Subject>, covariate_names: Vec<String>) -> Result<Self, DataError> {
        let p = covariate_names.len();
        let mut seen = HashSet::with_capacity(subjects.len());
        for s in &subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::DuplicateId(s.id.clone()));
            }
            if s.covariates.len() != p {
                return Err(DataError::WidthMismatch {
                    id: s.id.clone(),
                    got: s.covariates.len(),
                    expected: p,
                });
            }
            if !s.outcome.is_finite() {
                return Err(DataError::NonFiniteOutcome(s.id.clone()));
            }
        }
        Ok(Dataset { subjects, p, covariate_names })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn is_complete(&self) -> bool {
        self.subjects.iter().all(Subject::is_complete)
    }

    pub fn missing_count(&self) -> usize {
        self.subjects
            .iter()
            .map(|s| s.covariates.iter().filter(|c| c.is_none()).count())
            .sum()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.outcome).collect()
    }

    pub fn arms(&self) -> Vec<Arm> {
        self.subjects.iter().map(|s| s.arm).collect()
    }

    /// Row-major covariate matrix; `None` if any cell is missing.
    pub fn covariate_rows(&self) -> Option<Vec<Vec<f64>>> {
        self.subjects.iter().map(Subject::observed_covariates).collect()
    }

    /// `n × p` covariate matrix; `None` if any cell is missing.
    pub fn covariate_matrix(&self) -> Option<nalgebra::DMatrix<f64>> {
        if !self.is_complete() {
            return None;
        }
        Some(nalgebra::DMatrix::from_fn(self.len(), self.p, |i, j| {
            self.subjects[i].covariates[j].expect("checked complete")
        }))
    }

    /// Same covariate layout, new rows. Used by transformations that keep the schema.
    pub fn with_subjects(&self, subjects: Vec<Subject>) -> Result<Dataset, DataError> {
        Dataset::with_names(subjects, self.covariate_names.clone())
    }

    fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            p: self.p,
            covariate_names: self.covariate_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// Seeded uniform random split with `round(train_fraction * N)` training rows.
///
/// The count is clamped to `[1, N - 1]` so both halves are non-empty.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<Split, DataError> {
    let n = data.len();
    if n < 2 {
        return Err(DataError::EmptyDataset(n));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0, crate::rng::Purpose::Split));
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok(Split {
        train: data.select(train_idx),
        test: data.select(test_idx),
    })
}

// ── CSV ─────────────────────────────────────────────────────────────────

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    read_csv_from(File::open(path)?)
}

/// Parses `id,y,a,<covariates...>`. Empty covariate cells are missing.
///
/// `id` is optional; rows are numbered from 1 when it is absent. All columns
/// other than `id`, `y` and `a` are covariates, in header order.
pub fn read_csv_from<R: Read>(reader: R) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let y_col = find("y").ok_or_else(|| DataError::Schema("missing `y` column".into()))?;
    let a_col = find("a").ok_or_else(|| DataError::Schema("missing `a` column".into()))?;
    let id_col = find("id");
    let x_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != y_col && c != a_col && Some(c) != id_col)
        .collect();
    let names: Vec<String> = x_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut subjects = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let parse = |c: usize| -> Result<f64, DataError> {
            let raw = cell(c);
            raw.parse::<f64>().map_err(|e| DataError::Parse {
                row,
                column: headers[c].to_string(),
                message: format!("`{raw}`: {e}"),
            })
        };
        let id = match id_col {
            Some(c) => cell(c).to_string(),
            None => row.to_string(),
        };
        if cell(y_col).is_empty() {
            return Err(DataError::Schema(format!("row {row}: outcome `y` is missing")));
        }
        let outcome = parse(y_col)?;
        let arm = match cell(a_col) {
            "0" | "0.0" => Arm::Control,
            "1" | "1.0" => Arm::Treated,
            other => {
                return Err(DataError::Schema(format!(
                    "row {row}: arm `a` must be 0 or 1, got `{other}`"
                )))
            }
        };
        let covariates = x_cols
            .iter()
            .map(|&c| if cell(c).is_empty() { Ok(None) } else { parse(c).map(Some) })
            .collect::<Result<Vec<_>, _>>()?;
        subjects.push(Subject { id, covariates, arm, outcome });
    }
    Dataset::with_names(subjects, names)
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_csv_to(data, File::create(path)?)
}

/// Writes floats with Rust's shortest round-trip formatting.
pub fn write_csv_to<W: Write>(data: &Dataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["id".to_string(), "y".to_string(), "a".to_string()];
    header.extend(data.covariate_names.iter().cloned());
    wtr.write_record(&header)?;
    for s in &data.subjects {
        let mut rec = Vec::with_capacity(3 + data.p);
        rec.push(s.id.clone());
        rec.push(s.outcome.to_string());
        rec.push(s.arm.code().to_string());
        rec.extend(s.covariates.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
