//! Lasso regression by cyclic coordinate descent.
//!
//! Features are standardized to mean 0 and unit population variance, the
//! target is centered, and the objective on that scale is
//! `(1 / 2N) ||y - X b||^2 + lambda ||b||_1`.

use serde::{Deserialize, Serialize};

use crate::cart::check_features;
use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::{make_folds, Dataset, FeatureMatrix, FoldPlan};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub n_lambda: usize,
    /// Smallest grid point as a fraction of `lambda_max`.
    pub min_ratio: f64,
    pub k_folds: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            min_ratio: 1e-4,
            k_folds: 5,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    /// Coefficients on the standardized features.
    pub coefficients: Vec<f64>,
    /// Mean of the training target.
    pub intercept: f64,
    pub lambda: f64,
    pub feature_means: Vec<f64>,
    /// Population standard deviations; zero marks a constant feature.
    pub feature_sds: Vec<f64>,
}

/// Standardized columns of a training matrix.
struct Standardized {
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

fn standardize(x: &FeatureMatrix) -> Standardized {
    let n = x.n_rows() as f64;
    let mut cols = Vec::with_capacity(x.n_cols());
    let mut means = Vec::with_capacity(x.n_cols());
    let mut sds = Vec::with_capacity(x.n_cols());
    for c in x.columns() {
        let mean = c.iter().sum::<f64>() / n;
        let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let sd = if sd > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            sd
        } else {
            0.0
        };
        cols.push(if sd > 0.0 {
            c.iter().map(|v| (v - mean) / sd).collect()
        } else {
            vec![0.0; c.len()]
        });
        means.push(mean);
        sds.push(sd);
    }
    Standardized { cols, means, sds }
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(train: &Dataset) -> f64 {
    let s = standardize(train.x());
    let yc = centered(train.y());
    max_abs_correlation(&s.cols, &yc)
}

fn max_abs_correlation(cols: &[Vec<f64>], yc: &[f64]) -> f64 {
    let n = yc.len() as f64;
    cols.iter()
        .map(|c| (dot(c, yc) / n).abs())
        .fold(0.0, f64::max)
}

fn centered(y: &[f64]) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| v - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `n` log-spaced penalties from `lambda_max` down to `min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * min_ratio).ln());
    (0..n)
        .map(|i| (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Objective on the standardized scale.
pub fn objective(cols: &[Vec<f64>], yc: &[f64], b: &[f64], lambda: f64) -> f64 {
    let n = yc.len() as f64;
    let rss: f64 = (0..yc.len())
        .map(|i| {
            let fit: f64 = cols.iter().zip(b).map(|(c, bk)| c[i] * bk).sum();
            (yc[i] - fit).powi(2)
        })
        .sum();
    rss / (2.0 * n) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Receives the coefficients after each coordinate-descent sweep.
pub type SweepHook<'a> = &'a mut dyn FnMut(&[f64]);

/// Runs sweeps from the warm start `b` until the largest coefficient change
/// in a sweep is below `tol`. Returns the number of sweeps used. When
/// `on_sweep` is given it receives the coefficients after every sweep.
pub fn coordinate_descent(
    cols: &[Vec<f64>],
    yc: &[f64],
    lambda: f64,
    b: &mut [f64],
    tol: f64,
    max_sweeps: usize,
    mut on_sweep: Option<SweepHook<'_>>,
) -> Result<usize> {
    let n = yc.len() as f64;
    let mut r: Vec<f64> = yc.to_vec();
    for (c, &bk) in cols.iter().zip(b.iter()) {
        if bk != 0.0 {
            r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= ci * bk);
        }
    }
    // Column norms / N: 1 for standardized columns, 0 for constant ones.
    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c) / n).collect();
    let mut achieved = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let mut max_change = 0.0f64;
        for (k, c) in cols.iter().enumerate() {
            if norms[k] == 0.0 {
                b[k] = 0.0;
                continue;
            }
            let old = b[k];
            let rho = dot(c, &r) / n + norms[k] * old;
            let new = soft_threshold(rho, lambda) / norms[k];
            let delta = new - old;
            if delta != 0.0 {
                r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= ci * delta);
                b[k] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if let Some(f) = on_sweep.as_deref_mut() {
            f(b);
        }
        achieved = max_change;
        if max_change < tol {
            return Ok(sweep);
        }
    }
    Err(Error::NotConverged {
        sweeps: max_sweeps,
        achieved,
    })
}

/// Solves along `grid` (assumed decreasing) with warm starts; returns the
/// coefficients at every grid point.
fn solve_path(
    cols: &[Vec<f64>],
    yc: &[f64],
    grid: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut b = vec![0.0; cols.len()];
    grid.iter()
        .map(|&lambda| {
            coordinate_descent(cols, yc, lambda, &mut b, tol, max_sweeps, None)?;
            Ok(b.clone())
        })
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if let Some(l) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "lambda {l} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// Path order: decreasing penalties, remembering each one's grid position.
fn path_order(grid: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]).then(a.cmp(&b)));
    order
}

/// Fits at a single penalty.
pub fn fit_lasso_at(
    train: &Dataset,
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<LassoModel> {
    train.check_learner_input()?;
    check_grid(&[lambda])?;
    let s = standardize(train.x());
    let yc = centered(train.y());
    let b = solve_path(&s.cols, &yc, &[lambda], tol, max_sweeps)?.remove(0);
    Ok(model_from(train, s, b, lambda))
}

fn model_from(train: &Dataset, s: Standardized, coefficients: Vec<f64>, lambda: f64) -> LassoModel {
    LassoModel {
        coefficients,
        intercept: train.y().iter().sum::<f64>() / train.n() as f64,
        lambda,
        feature_means: s.means,
        feature_sds: s.sds,
    }
}

/// Selects the penalty with the lowest mean held-out MSE over `folds` (first
/// in grid order on ties) and refits on all of `train`.
pub fn fit_lasso(train: &Dataset, lambda_grid: &[f64], folds: &FoldPlan) -> Result<LassoModel> {
    fit_lasso_with(train, lambda_grid, folds, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)
}

pub fn fit_lasso_with(
    train: &Dataset,
    lambda_grid: &[f64],
    folds: &FoldPlan,
    tol: f64,
    max_sweeps: usize,
) -> Result<LassoModel> {
    train.check_learner_input()?;
    check_grid(lambda_grid)?;
    if folds.n() != train.n() {
        return Err(Error::InvalidConfig(format!(
            "fold plan covers {} rows, training set has {}",
            folds.n(),
            train.n()
        )));
    }
    let order = path_order(lambda_grid);
    let sorted_grid: Vec<f64> = order.iter().map(|&i| lambda_grid[i]).collect();
    let mut sse = vec![0.0; lambda_grid.len()];
    for fold in 0..folds.k_folds {
        let (tr, te) = folds.split(fold);
        let fit_set = train.select_rows(&tr);
        let s = standardize(fit_set.x());
        let yc = centered(fit_set.y());
        let path = solve_path(&s.cols, &yc, &sorted_grid, tol, max_sweeps)?;
        for (pos, b) in path.into_iter().enumerate() {
            let m = LassoModel {
                coefficients: b,
                intercept: fit_set.y().iter().sum::<f64>() / fit_set.n() as f64,
                lambda: sorted_grid[pos],
                feature_means: s.means.clone(),
                feature_sds: s.sds.clone(),
            };
            for &i in &te {
                let e = train.y()[i] - m.predict_row(&train.x().row(i));
                sse[order[pos]] += e * e;
            }
        }
    }
    let best = (0..sse.len()).fold(0, |b, i| if sse[i] < sse[b] { i } else { b });
    let lambda = lambda_grid[best];
    // Refit along the path down to the chosen penalty.
    let s = standardize(train.x());
    let yc = centered(train.y());
    let upto: Vec<f64> = sorted_grid
        .iter()
        .copied()
        .filter(|&l| l >= lambda)
        .collect();
    let b = solve_path(&s.cols, &yc, &upto, tol, max_sweeps)?
        .pop()
        .expect("non-empty path");
    Ok(model_from(train, s, b, lambda))
}

/// Cross-validated fit on the default log-spaced grid.
pub fn fit_lasso_cv(train: &Dataset, cfg: &LassoConfig) -> Result<LassoModel> {
    train.check_learner_input()?;
    let lmax = lambda_max(train);
    if lmax == 0.0 {
        return fit_lasso_at(train, 0.0, cfg.tol, cfg.max_sweeps);
    }
    let grid = lambda_grid(lmax, cfg.n_lambda.max(1), cfg.min_ratio);
    let folds = make_folds(train.n(), cfg.k_folds, seed::named(cfg.seed, "lasso-folds"))?;
    fit_lasso_with(train, &grid, &folds, cfg.tol, cfg.max_sweeps)
}

impl LassoModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .filter(|(k, _)| self.feature_sds[*k] > 0.0)
                .map(|(k, b)| b * (row[k] - self.feature_means[k]) / self.feature_sds[k])
                .sum::<f64>()
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        check_features(self.n_features(), x)?;
        Ok((0..x.n_rows())
            .map(|i| self.predict_row(&x.row(i)))
            .collect())
    }

    /// Coefficients on the original feature scale.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.feature_sds)
            .map(|(b, sd)| if *sd > 0.0 { b / sd } else { 0.0 })
            .collect()
    }
}

pub fn predict_lasso(model: &LassoModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}
