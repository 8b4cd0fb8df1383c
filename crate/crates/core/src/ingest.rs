//! Loading and validation of analysis datasets.
//!
//! A dataset is a list of observations `(W, A, Y)` where `W` is a vector of
//! 0/1 covariate indicators, `A` a treatment category in `0..K` and `Y` a
//! binary outcome. Incomplete rows are dropped and counted; malformed cells
//! are errors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default covariate schema: sex, age group, self-rated health, physical
/// functioning, cardiac history, chronic conditions, smoking, activity decline.
pub const STANDARD_COVARIATES: [&str; 15] = [
    "FEMALE", "AGE.1", "AGE.2", "AGE.4", "AGE.5", "HLT.EX", "HLT.FAIR", "HLT.POOR", "NRB.FAIR",
    "NRB.POOR", "CARD", "CHRON", "SMK.CURR", "SMK.EX", "DECLINE",
];

/// Number of treatment categories produced by [`categorize_met`].
pub const DEFAULT_LEVELS: usize = 6;

/// Upper (inclusive) bounds of categories 1 through 4, in MET-hours/week.
const MET_BOUNDS: [f64; 4] = [10.0, 20.0, 40.0, 60.0];

/// Maps a leisure-time physical activity score to its treatment category.
///
/// Category 0 is exactly zero; the remaining intervals are closed on the
/// right: (0, 10], (10, 20], (20, 40], (40, 60], (60, inf).
pub fn categorize_met(met_score: f64) -> Result<usize> {
    if !met_score.is_finite() || met_score < 0.0 {
        return Err(Error::validation(
            "met_score",
            format!("must be finite and nonnegative, got {met_score}"),
        ));
    }
    if met_score == 0.0 {
        return Ok(0);
    }
    Ok(MET_BOUNDS
        .iter()
        .position(|&upper| met_score <= upper)
        .map_or(5, |i| i + 1))
}

/// Ordered 0/1 covariate indicators for one subject.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct CovariateVector(Vec<u8>);

impl CovariateVector {
    pub fn new(indicators: Vec<u8>) -> Result<Self> {
        if let Some(bad) = indicators.iter().find(|&&v| v > 1) {
            return Err(Error::validation(
                "covariate",
                format!("indicator values must be 0 or 1, got {bad}"),
            ));
        }
        Ok(Self(indicators))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> u8 {
        self.0[index]
    }
}

impl TryFrom<Vec<u8>> for CovariateVector {
    type Error = Error;

    fn try_from(value: Vec<u8>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<CovariateVector> for Vec<u8> {
    fn from(value: CovariateVector) -> Self {
        value.0
    }
}

/// One subject's observed data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub w: CovariateVector,
    pub a: usize,
    pub y: u8,
}

/// Validated, immutable collection of observations sharing one covariate schema.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    n_levels: usize,
    rows: Vec<Observation>,
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, n_levels: usize, rows: Vec<Observation>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset { dropped: 0 });
        }
        if n_levels < 2 {
            return Err(Error::validation("n_levels", "need at least two treatment levels"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.w.len() != covariate_names.len() {
                return Err(Error::SchemaMismatch {
                    expected: covariate_names.len(),
                    got: row.w.len(),
                });
            }
            if row.a >= n_levels {
                return Err(Error::Parse {
                    row: i + 1,
                    column: "A".into(),
                    message: format!("treatment level {} is not below {n_levels}", row.a),
                });
            }
            if row.y > 1 {
                return Err(Error::Parse {
                    row: i + 1,
                    column: "Y".into(),
                    message: format!("outcome must be 0 or 1, got {}", row.y),
                });
            }
        }
        Ok(Self {
            covariate_names,
            n_levels,
            rows,
        })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    /// Index of a covariate column by name.
    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Sample mean of the outcome.
    pub fn outcome_mean(&self) -> f64 {
        self.rows.iter().map(|r| r.y as f64).sum::<f64>() / self.len() as f64
    }

    /// Count of subjects at each treatment level.
    pub fn level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_levels];
        for row in &self.rows {
            counts[row.a] += 1;
        }
        counts
    }

    /// Dataset made of the rows at `indices`, repeated as often as they appear.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            covariate_names: self.covariate_names.clone(),
            n_levels: self.n_levels,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Writes the dataset with an integer `A` column and a `Y` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push("A");
        header.push("Y");
        out.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for row in &self.rows {
            record.clear();
            record.extend(row.w.as_slice().iter().map(|v| v.to_string()));
            record.push(row.a.to_string());
            record.push(row.y.to_string());
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// How the treatment is recorded in the input file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentColumn {
    /// Integer category column.
    Category(String),
    /// Raw MET-hours/week column, categorised with [`categorize_met`].
    Met(String),
}

/// Column layout expected by [`load_csv`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub covariates: Vec<String>,
    pub treatment: TreatmentColumn,
    pub outcome: String,
    pub n_levels: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            covariates: STANDARD_COVARIATES.iter().map(|s| s.to_string()).collect(),
            treatment: TreatmentColumn::Category("A".into()),
            outcome: "Y".into(),
            n_levels: DEFAULT_LEVELS,
        }
    }
}

impl CsvSchema {
    pub fn with_covariates<S: AsRef<str>>(covariates: &[S]) -> Self {
        Self {
            covariates: covariates.iter().map(|s| s.as_ref().to_string()).collect(),
            ..Self::default()
        }
    }
}

/// A loaded dataset plus the number of incomplete rows that were dropped.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub dropped: usize,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedDataset> {
    read_csv(File::open(path)?, schema)
}

fn is_missing(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

/// Reads a CSV with a header row. Rows with any blank (or `NA`) required cell
/// are dropped and counted; any other malformed cell is an error naming its
/// 1-based data row and column.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LoadedDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let column = |name: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::validation("header", format!("missing column `{name}`")))
    };

    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let (treat_name, treat_col, is_met) = match &schema.treatment {
        TreatmentColumn::Category(name) => (name.as_str(), column(name)?, false),
        TreatmentColumn::Met(name) => (name.as_str(), column(name)?, true),
    };
    let outcome_col = column(&schema.outcome)?;

    let mut rows = Vec::new();
    let mut dropped = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let cell = |col: usize| record.get(col).unwrap_or("");

        let required = cov_cols.iter().copied().chain([treat_col, outcome_col]);
        if required.into_iter().any(|c| is_missing(cell(c))) {
            dropped += 1;
            continue;
        }

        let parse_binary = |col: usize, name: &str| -> Result<u8> {
            match cell(col).trim() {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::Parse {
                    row: row_no,
                    column: name.to_string(),
                    message: format!("expected 0 or 1, got `{other}`"),
                }),
            }
        };

        let w = cov_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&c, name)| parse_binary(c, name))
            .collect::<Result<Vec<_>>>()?;
        let raw = cell(treat_col).trim();
        let parse_err = |message: String| Error::Parse {
            row: row_no,
            column: treat_name.to_string(),
            message,
        };
        let a = if is_met {
            let met: f64 = raw
                .parse()
                .map_err(|_| parse_err(format!("expected a number, got `{raw}`")))?;
            categorize_met(met).map_err(|e| parse_err(e.to_string()))?
        } else {
            raw.parse::<usize>()
                .map_err(|_| parse_err(format!("expected a treatment level, got `{raw}`")))?
        };
        if a >= schema.n_levels {
            return Err(parse_err(format!(
                "treatment level {a} is not below {}",
                schema.n_levels
            )));
        }
        let y = parse_binary(outcome_col, &schema.outcome)?;
        rows.push(Observation {
            w: CovariateVector(w),
            a,
            y,
        });
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset { dropped });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} incomplete rows");
    }
    let dataset = Dataset::new(schema.covariates.clone(), schema.n_levels, rows)?;
    Ok(LoadedDataset { dataset, dropped })
}
