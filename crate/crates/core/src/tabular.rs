//! Data model, CSV ingestion, holdout splits and cross-validation folds.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Column-major matrix of real features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::InvalidData("columns have unequal lengths".into()));
        }
        Ok(Self { n_rows, columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidData("rows have unequal lengths".into()));
        }
        let columns = (0..k)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Ok(Self {
            n_rows: rows.len(),
            columns,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.columns[col]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn push_column(&mut self, column: Vec<f64>) -> Result<()> {
        if !self.columns.is_empty() && column.len() != self.n_rows {
            return Err(Error::InvalidData(
                "appended column has wrong length".into(),
            ));
        }
        self.n_rows = column.len();
        self.columns.push(column);
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.columns.iter().flatten().all(|v| v.is_finite())
    }
}

/// Features, target and column names. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: FeatureMatrix,
    y: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: FeatureMatrix, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::InvalidData(format!(
                "{} feature rows but {} targets",
                x.n_rows(),
                y.len()
            )));
        }
        if feature_names.len() != x.n_cols() {
            return Err(Error::InvalidData(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.n_cols()
            )));
        }
        if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in dataset".into()));
        }
        Ok(Self {
            x,
            y,
            feature_names,
        })
    }

    /// Builds a dataset with generated feature names `x0..x{K-1}`.
    pub fn from_parts(x: FeatureMatrix, y: Vec<f64>) -> Result<Self> {
        let names = (0..x.n_cols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names)
    }

    pub fn x(&self) -> &FeatureMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.x.n_cols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Checks the minimum shape every learner needs (N >= 2, K >= 1).
    pub fn check_learner_input(&self) -> Result<()> {
        if self.n() < 2 || self.k() < 1 {
            return Err(Error::InvalidData(format!(
                "learners need N >= 2 and K >= 1 (got N={}, K={})",
                self.n(),
                self.k()
            )));
        }
        Ok(())
    }
}

const MISSING_MARKERS: &[&str] = &["", "NA", "N/A", "NaN", "nan", "?", "null", "NULL", "."];

/// Result of reading a CSV file, including how many rows were dropped.
#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

/// Reads a comma-separated file with a header row. Rows containing a missing
/// marker in any column are dropped.
pub fn read_csv(path: impl AsRef<Path>, target_column: &str) -> Result<CsvLoad> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingTarget(target_column.to_owned()))?;

    let k = headers.len() - 1;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut y = Vec::new();
    let mut dropped = 0;
    let mut row_buf = vec![0.0; headers.len()];
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let mut missing = false;
        for (j, cell) in record.iter().enumerate() {
            if MISSING_MARKERS.contains(&cell) {
                missing = true;
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row_buf[j] = v,
                Ok(_) => missing = true,
                Err(_) => {
                    return Err(Error::NonNumeric {
                        column: headers[j].clone(),
                        row: row_no + 1,
                        value: cell.to_owned(),
                    })
                }
            }
        }
        if missing {
            dropped += 1;
            continue;
        }
        let mut col = 0;
        for (j, &v) in row_buf.iter().enumerate() {
            if j == target_idx {
                y.push(v);
            } else {
                columns[col].push(v);
                col += 1;
            }
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let names = headers
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h)
        .collect();
    let x = if k == 0 {
        FeatureMatrix {
            n_rows: y.len(),
            columns: Vec::new(),
        }
    } else {
        FeatureMatrix::from_columns(columns)?
    };
    Ok(CsvLoad {
        dataset: Dataset::new(x, y, names)?,
        dropped_rows: dropped,
    })
}

/// Loads a CSV dataset, logging a warning when rows with missing values are
/// dropped.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let load = read_csv(path, target_column)?;
    if load.dropped_rows > 0 {
        log::warn!(
            "{}: dropped {} row(s) with missing values",
            path.display(),
            load.dropped_rows
        );
    }
    Ok(load.dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldoutMode {
    Random,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutPlan {
    pub mode: HoldoutMode,
    pub train_fraction: f64,
    pub seed: u64,
}

impl HoldoutPlan {
    pub fn random(train_fraction: f64, seed: u64) -> Self {
        Self {
            mode: HoldoutMode::Random,
            train_fraction,
            seed,
        }
    }

    pub fn temporal(train_fraction: f64) -> Self {
        Self {
            mode: HoldoutMode::Temporal,
            train_fraction,
            seed: 0,
        }
    }

    /// Train and test row indices, each in ascending order.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let f = self.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {f} is outside (0, 1)"
            )));
        }
        let n_train = (f * n as f64).floor() as usize;
        if n_train == 0 || n_train >= n {
            return Err(Error::InvalidConfig(format!(
                "train fraction {f} leaves an empty side with N={n}"
            )));
        }
        match self.mode {
            HoldoutMode::Temporal => Ok(((0..n_train).collect(), (n_train..n).collect())),
            HoldoutMode::Random => {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut seed::rng(seed::named(self.seed, "holdout")));
                let mut train = perm[..n_train].to_vec();
                let mut test = perm[n_train..].to_vec();
                train.sort_unstable();
                test.sort_unstable();
                Ok((train, test))
            }
        }
    }
}

pub fn split_holdout(d: &Dataset, plan: &HoldoutPlan) -> Result<(Dataset, Dataset)> {
    let (train, test) = plan.indices(d.n())?;
    Ok((d.select_rows(&train), d.select_rows(&test)))
}

/// Assignment of observations to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// (training rows, held-out rows) for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut fit = Vec::new();
        let mut held = Vec::new();
        for (i, &a) in self.assignments.iter().enumerate() {
            if a == fold {
                held.push(i);
            } else {
                fit.push(i);
            }
        }
        (fit, held)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k_folds];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn make_folds(n: usize, k_folds: usize, seed: u64) -> Result<FoldPlan> {
    if k_folds < 2 || k_folds > n {
        return Err(Error::InvalidConfig(format!(
            "need 2 <= k_folds <= n (k_folds={k_folds}, n={n})"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed::named(seed, "folds")));
    let mut assignments = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignments[i] = pos % k_folds;
    }
    Ok(FoldPlan {
        k_folds,
        assignments,
        seed,
    })
}

/// Reads a headered numeric CSV as features only. When `columns` is given,
/// those columns are taken by name, in that order, and any others ignored.
/// Missing values are an error, since every row needs a prediction.
pub fn read_feature_csv(
    path: impl AsRef<Path>,
    columns: Option<&[String]>,
) -> Result<(Vec<String>, FeatureMatrix)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let picks: Vec<usize> = match columns {
        None => (0..headers.len()).collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                headers.iter().position(|h| h == n).ok_or_else(|| {
                    Error::InvalidData(format!(
                        "feature column `{n}` not found in {}",
                        path.display()
                    ))
                })
            })
            .collect::<Result<_>>()?,
    };
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); picks.len()];
    let mut n_rows = 0;
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        for (c, &j) in picks.iter().enumerate() {
            let cell = record.get(j).unwrap_or("");
            let value = cell.parse::<f64>().ok().filter(|v| v.is_finite());
            match value {
                Some(v) => cols[c].push(v),
                None if MISSING_MARKERS.contains(&cell) || cell.parse::<f64>().is_ok() => {
                    return Err(Error::InvalidData(format!(
                        "missing value in column `{}` at row {}",
                        headers[j],
                        row_no + 1
                    )))
                }
                None => {
                    return Err(Error::NonNumeric {
                        column: headers[j].clone(),
                        row: row_no + 1,
                        value: cell.to_owned(),
                    })
                }
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let names = picks.iter().map(|&j| headers[j].clone()).collect();
    let x = if cols.is_empty() {
        FeatureMatrix {
            n_rows,
            columns: Vec::new(),
        }
    } else {
        FeatureMatrix::from_columns(cols)?
    };
    Ok((names, x))
}
