//! Synthetic data-generating processes and the simulation grid.
//!
//! Friedman functions use the usual conventions:
//!
//! * Friedman 1: `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`,
//!   `x_j ~ U(0, 1)`.
//! * Friedman 2: `sqrt(x1^2 + (x2 x3 - 1 / (x2 x4))^2)`.
//! * Friedman 3: `atan((x2 x3 - 1 / (x2 x4)) / x1)`.
//!
//! For Friedman 2 and 3, `x1 ~ U(0, 100)`, `x2 ~ U(40 pi, 560 pi)`,
//! `x3 ~ U(0, 1)` and `x4 ~ U(1, 11)`. Features beyond the active ones are
//! independent `U(0, 1)` noise. The linear process sums five independent
//! standard normal features; its other features are standard normal too.
//! The tree process is the prediction function of a CART fitted to a
//! Friedman 1 sample, grown so that leaves hold about an eighth of the sample.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;

use crate::cart::{fit_cart, CartConfig, CartTree};
use crate::error::{Error, Result};
use crate::eval::{
    fit_learner, fmt_f64, fmt_opt, learner_by_name, oracle_r2, NamedLearner, TuneGrid,
};
use crate::model::Regressor;
use crate::seed;
use crate::tabular::{Dataset, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpKind {
    Tree,
    Friedman1,
    Friedman2,
    Friedman3,
    Linear,
}

impl DgpKind {
    pub const ALL: [DgpKind; 5] = [
        DgpKind::Tree,
        DgpKind::Friedman1,
        DgpKind::Friedman2,
        DgpKind::Friedman3,
        DgpKind::Linear,
    ];

    pub fn active_features(self) -> usize {
        match self {
            DgpKind::Tree | DgpKind::Friedman1 | DgpKind::Linear => 5,
            DgpKind::Friedman2 | DgpKind::Friedman3 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Tree => "tree",
            DgpKind::Friedman1 => "friedman1",
            DgpKind::Friedman2 => "friedman2",
            DgpKind::Friedman3 => "friedman3",
            DgpKind::Linear => "linear",
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DgpKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown DGP `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n_features: usize,
    /// Seeds the generating function itself (only the tree process has one).
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(kind: DgpKind) -> Self {
        Self {
            kind,
            n_features: 10,
            seed: 0,
        }
    }
}

/// Features and the conditional mean at each row.
#[derive(Debug, Clone)]
pub struct DgpDraw {
    pub x: FeatureMatrix,
    pub mean: Vec<f64>,
    /// Leaf count of the generating tree (tree process only).
    pub generator_leaves: Option<usize>,
}

pub fn friedman1(x: &[f64]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

pub fn friedman2(x: &[f64]) -> f64 {
    let inner = x[1] * x[2] - 1.0 / (x[1] * x[3]);
    (x[0] * x[0] + inner * inner).sqrt()
}

pub fn friedman3(x: &[f64]) -> f64 {
    ((x[1] * x[2] - 1.0 / (x[1] * x[3])) / x[0]).atan()
}

pub fn linear(x: &[f64]) -> f64 {
    x[..5].iter().sum()
}

fn uniform_columns<R: Rng>(rng: &mut R, n: usize, ranges: &[(f64, f64)]) -> Vec<Vec<f64>> {
    ranges
        .iter()
        .map(|&(lo, hi)| (0..n).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

fn normal_columns<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn friedman23_ranges(k: usize) -> Vec<(f64, f64)> {
    let mut r = vec![
        (0.0, 100.0),
        (40.0 * PI, 560.0 * PI),
        (0.0, 1.0),
        (1.0, 11.0),
    ];
    r.resize(k, (0.0, 1.0));
    r
}

fn apply_rows(x: &FeatureMatrix, f: fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.n_rows()).map(|i| f(&x.row(i))).collect()
}

/// Builds the generating tree of the tree process: a CART fit to a Friedman 1
/// sample of size `n`, with the minimum leaf size chosen so the tree has as
/// close to eight leaves as possible.
pub fn generating_tree(n_features: usize, n: usize, seed: u64) -> Result<CartTree> {
    let mut rng = seed::rng(seed::named(seed, "tree-dgp-base"));
    let x =
        FeatureMatrix::from_columns(uniform_columns(&mut rng, n, &vec![(0.0, 1.0); n_features]))?;
    let y: Vec<f64> = apply_rows(&x, friedman1)
        .into_iter()
        .map(|m| {
            let e: f64 = StandardNormal.sample(&mut rng);
            m + e
        })
        .collect();
    let base = Dataset::from_parts(x, y)?;
    let target_leaves = 8usize;
    let mut best: Option<(usize, CartTree)> = None;
    for min_leaf in 1..=(n / 2).max(1) {
        let cfg = CartConfig {
            min_node_size: min_leaf,
            ..CartConfig::default()
        };
        let tree = fit_cart(&base, &cfg)?;
        let gap = tree.n_leaves().abs_diff(target_leaves);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, tree));
        }
        if gap == 0 {
            break;
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Draws `n` rows of features and their conditional mean.
pub fn gen_dgp(spec: &DgpSpec, n: usize, seed: u64) -> Result<DgpDraw> {
    let k = spec.n_features;
    if k < spec.kind.active_features() {
        return Err(Error::InvalidConfig(format!(
            "{} needs at least {} features",
            spec.kind,
            spec.kind.active_features()
        )));
    }
    let mut rng = seed::rng(seed::named(seed, spec.kind.name()));
    let (x, mean, leaves) = match spec.kind {
        DgpKind::Friedman1 => {
            let x =
                FeatureMatrix::from_columns(uniform_columns(&mut rng, n, &vec![(0.0, 1.0); k]))?;
            let m = apply_rows(&x, friedman1);
            (x, m, None)
        }
        DgpKind::Friedman2 | DgpKind::Friedman3 => {
            let x =
                FeatureMatrix::from_columns(uniform_columns(&mut rng, n, &friedman23_ranges(k)))?;
            let f = if spec.kind == DgpKind::Friedman2 {
                friedman2
            } else {
                friedman3
            };
            let m = apply_rows(&x, f);
            (x, m, None)
        }
        DgpKind::Linear => {
            let x = FeatureMatrix::from_columns(normal_columns(&mut rng, n, k))?;
            let m = apply_rows(&x, linear);
            (x, m, None)
        }
        DgpKind::Tree => {
            let tree = generating_tree(k, n.max(16), spec.seed)?;
            let x =
                FeatureMatrix::from_columns(uniform_columns(&mut rng, n, &vec![(0.0, 1.0); k]))?;
            let m = tree.predict(&x)?;
            (x, m, Some(tree.n_leaves()))
        }
    };
    Ok(DgpDraw {
        x,
        mean,
        generator_leaves: leaves,
    })
}

pub(crate) fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Noise variance giving a population signal share of `target_r2`.
pub fn noise_variance_for_r2(var_m: f64, target_r2: f64) -> f64 {
    var_m * (1.0 - target_r2) / target_r2
}

/// Adds Gaussian noise to `m` so that `Var(m) / (Var(m) + sigma^2)` equals
/// `target_r2`, with `Var(m)` the variance of the given conditional means.
pub fn scale_noise_to_r2(m: &[f64], target_r2: f64, seed: u64) -> Result<Vec<f64>> {
    if !(target_r2 > 0.0 && target_r2 < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "true R2 {target_r2} is outside (0, 1)"
        )));
    }
    let var_m = population_variance(m);
    let scale = m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64;
    if var_m.is_nan() || var_m <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidData(
            "conditional mean is constant; cannot calibrate noise".into(),
        ));
    }
    let sigma = noise_variance_for_r2(var_m, target_r2).sqrt();
    let mut rng = seed::rng(seed::named(seed, "noise"));
    Ok(m.iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + sigma * e
        })
        .collect())
}

/// Model names of the default simulation grid.
pub const DEFAULT_VARIANTS: [&str; 10] = [
    "rf",
    "cart",
    "sgt_0.5_0.25",
    "sgt_0.1_0.25",
    "sgt_0.1_0.05",
    "booging",
    "bt_0.25_tuned",
    "bt_0.1_1500",
    "bt_0.001_1500",
    "bt_0.001_750",
];

pub fn default_r2_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub dgps: Vec<DgpKind>,
    pub true_r2_grid: Vec<f64>,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_replications: usize,
    pub model_variants: Vec<NamedLearner>,
    pub grid: TuneGrid,
    pub seed: u64,
    /// Fill the runtime column. Off by default so result files are
    /// reproducible byte for byte.
    pub record_runtime: bool,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        Self {
            dgps: DgpKind::ALL.to_vec(),
            true_r2_grid: default_r2_grid(),
            n_features: 10,
            n_train: 100,
            n_test: 100,
            n_replications: 30,
            model_variants: DEFAULT_VARIANTS
                .iter()
                .map(|n| learner_by_name(n).expect("default variants parse"))
                .collect(),
            grid: TuneGrid::default(),
            seed: 0,
            record_runtime: false,
        }
    }
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dgps.is_empty() || self.true_r2_grid.is_empty() || self.model_variants.is_empty() {
            return bad("plan needs at least one DGP, one true R2 and one model".into());
        }
        if let Some(r) = self.true_r2_grid.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return bad(format!("true R2 {r} is outside (0, 1)"));
        }
        if let Some(k) = self
            .dgps
            .iter()
            .find(|k| self.n_features < k.active_features())
        {
            return bad(format!(
                "{k} needs at least {} features",
                k.active_features()
            ));
        }
        if self.n_train < 10 || self.n_test < 2 || self.n_replications == 0 {
            return bad(
                "plan needs n_train >= 10, n_test >= 2 and at least one replication".into(),
            );
        }
        let mut names: Vec<&str> = self
            .model_variants
            .iter()
            .map(|m| m.name.as_str())
            .collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("model `{}` is listed twice", w[0]));
        }
        self.grid.validate()
    }

    pub fn n_rows(&self) -> usize {
        self.dgps.len() * self.true_r2_grid.len() * self.model_variants.len() * self.n_replications
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub dgp: DgpKind,
    pub true_r2: f64,
    pub model: String,
    pub replication: usize,
    /// R² against the true conditional mean on the test draw.
    pub oracle_r2: Option<f64>,
    /// R² against the noisy test targets, test mean as baseline.
    pub test_r2: Option<f64>,
    pub runtime: Option<f64>,
    pub error: Option<String>,
}

impl SimulationRow {
    pub const CSV_HEADER: &'static str =
        "dgp,true_r2,model,replication,oracle_r2,test_r2,runtime,error";

    fn record(&self) -> [String; 8] {
        [
            self.dgp.name().to_string(),
            fmt_f64(self.true_r2),
            self.model.clone(),
            self.replication.to_string(),
            fmt_opt(self.oracle_r2),
            fmt_opt(self.test_r2),
            fmt_opt(self.runtime),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub rows: Vec<SimulationRow>,
}

/// Mean oracle R² of one model in one (DGP, true R²) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dgp: DgpKind,
    pub true_r2: f64,
    pub model: String,
    pub mean_oracle_r2: Option<f64>,
    pub sd_oracle_r2: Option<f64>,
    pub mean_test_r2: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

impl SummaryRow {
    pub const CSV_HEADER: &'static str =
        "dgp,true_r2,model,mean_oracle_r2,sd_oracle_r2,mean_test_r2,n_ok,n_failed";
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd =
        (v.len() > 1).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(m), sd)
}

impl SimulationResult {
    /// Aggregates over replications, in first-appearance order.
    pub fn summarize(&self) -> Vec<SummaryRow> {
        let mut order: Vec<(DgpKind, u64, String)> = Vec::new();
        let mut groups: BTreeMap<(DgpKind, u64, String), Vec<&SimulationRow>> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.dgp, r.true_r2.to_bits(), r.model.clone());
            let entry = groups.entry(key.clone()).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push(r);
        }
        order
            .into_iter()
            .map(|key| {
                let rows = &groups[&key];
                let oracle: Vec<f64> = rows.iter().filter_map(|r| r.oracle_r2).collect();
                let test: Vec<f64> = rows.iter().filter_map(|r| r.test_r2).collect();
                let (mean_oracle_r2, sd_oracle_r2) = mean_sd(&oracle);
                SummaryRow {
                    dgp: key.0,
                    true_r2: f64::from_bits(key.1),
                    model: key.2,
                    mean_oracle_r2,
                    sd_oracle_r2,
                    mean_test_r2: mean_sd(&test).0,
                    n_ok: oracle.len(),
                    n_failed: rows.len() - oracle.len(),
                }
            })
            .collect()
    }

    /// Mean oracle R² of `model` on `dgp` at `true_r2`, if any run succeeded.
    pub fn mean_oracle_r2(&self, dgp: DgpKind, true_r2: f64, model: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.dgp == dgp && r.true_r2 == true_r2 && r.model == model)
            .filter_map(|r| r.oracle_r2)
            .collect();
        mean_sd(&v).0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = RowWriter::new(out)?;
        for r in &self.rows {
            w.write(r)?;
        }
        w.finish()
    }

    pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SummaryRow::CSV_HEADER.split(','))?;
        for s in summary {
            w.write_record([
                s.dgp.name().to_string(),
                fmt_f64(s.true_r2),
                s.model.clone(),
                fmt_opt(s.mean_oracle_r2),
                fmt_opt(s.sd_oracle_r2),
                fmt_opt(s.mean_test_r2),
                s.n_ok.to_string(),
                s.n_failed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
        Ok(())
    }

    /// Plain-text table of mean oracle R², one line per (DGP, true R²).
    pub fn summary_table(summary: &[SummaryRow]) -> String {
        let mut models: Vec<&str> = Vec::new();
        for s in summary {
            if !models.contains(&s.model.as_str()) {
                models.push(&s.model);
            }
        }
        let mut out = format!("{:<10} {:>6}", "dgp", "R2");
        for m in &models {
            out.push_str(&format!(" {:>14}", m));
        }
        out.push('\n');
        let mut i = 0;
        while i < summary.len() {
            let (dgp, r2) = (summary[i].dgp, summary[i].true_r2);
            out.push_str(&format!("{:<10} {:>6}", dgp.name(), r2));
            for m in &models {
                let cell = summary
                    .iter()
                    .find(|s| s.dgp == dgp && s.true_r2 == r2 && s.model == *m)
                    .and_then(|s| s.mean_oracle_r2)
                    .map_or("-".to_string(), |v| format!("{v:.3}"));
                out.push_str(&format!(" {:>14}", cell));
            }
            out.push('\n');
            while i < summary.len() && summary[i].dgp == dgp && summary[i].true_r2 == r2 {
                i += 1;
            }
        }
        out
    }
}

/// Streams result rows as CSV, flushing after every row.
pub struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RowWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(SimulationRow::CSV_HEADER.split(','))?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &SimulationRow) -> Result<()> {
        self.inner.write_record(row.record())?;
        self.inner.flush().map_err(|e| Error::io("<results>", e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io("<results>", e))
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    dgp: DgpKind,
    true_r2: f64,
    replication: usize,
}

/// Seed of a (DGP, replication) draw. The true R² does not enter, so every
/// noise level of a replication shares features, mean and standardized noise.
fn draw_seed(master: u64, dgp: DgpKind, replication: usize) -> u64 {
    seed::child(seed::named(master, dgp.name()), replication as u64)
}

/// Train and test data of one cell, plus the test conditional mean.
pub fn simulate_draw(
    dgp: DgpKind,
    n_features: usize,
    n_train: usize,
    n_test: usize,
    true_r2: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, Vec<f64>)> {
    let spec = DgpSpec {
        kind: dgp,
        n_features,
        seed: seed::named(seed, "generator"),
    };
    let n = n_train + n_test;
    let draw = gen_dgp(&spec, n, seed::named(seed, "features"))?;
    let y = scale_noise_to_r2(&draw.mean, true_r2, seed)?;
    let train_rows: Vec<usize> = (0..n_train).collect();
    let test_rows: Vec<usize> = (n_train..n).collect();
    let all = Dataset::from_parts(draw.x, y)?;
    let test_mean = test_rows.iter().map(|&i| draw.mean[i]).collect();
    Ok((
        all.select_rows(&train_rows),
        all.select_rows(&test_rows),
        test_mean,
    ))
}

fn run_cell(plan: &SimulationPlan, cell: Cell) -> Vec<SimulationRow> {
    let dseed = draw_seed(plan.seed, cell.dgp, cell.replication);
    let row = |model: &str| SimulationRow {
        dgp: cell.dgp,
        true_r2: cell.true_r2,
        model: model.to_string(),
        replication: cell.replication,
        oracle_r2: None,
        test_r2: None,
        runtime: None,
        error: None,
    };
    let data = simulate_draw(
        cell.dgp,
        plan.n_features,
        plan.n_train,
        plan.n_test,
        cell.true_r2,
        dseed,
    );
    let (train, test, truth) = match data {
        Ok(d) => d,
        Err(e) => {
            return plan
                .model_variants
                .iter()
                .map(|m| SimulationRow {
                    error: Some(e.to_string()),
                    ..row(&m.name)
                })
                .collect()
        }
    };
    plan.model_variants
        .iter()
        .map(|m| {
            let start = Instant::now();
            let mseed = seed::named(dseed, &m.name);
            let outcome =
                fit_learner(&train, &m.learner, &plan.grid, mseed).and_then(|(model, _)| {
                    let pred = model.predict(test.x())?;
                    let test_mean = test.y().iter().sum::<f64>() / test.n() as f64;
                    let test_r2 = crate::eval::compute_metrics(test.y(), &pred, test_mean)?.r2;
                    Ok((oracle_r2(&truth, &pred)?, test_r2))
                });
            let runtime = plan.record_runtime.then(|| start.elapsed().as_secs_f64());
            match outcome {
                Ok((oracle_r2, test_r2)) => SimulationRow {
                    oracle_r2,
                    test_r2,
                    runtime,
                    ..row(&m.name)
                },
                Err(e) => {
                    log::warn!(
                        "{} on {} (R2 {}, rep {}): {e}",
                        m.name,
                        cell.dgp,
                        cell.true_r2,
                        cell.replication
                    );
                    SimulationRow {
                        runtime,
                        error: Some(e.to_string()),
                        ..row(&m.name)
                    }
                }
            }
        })
        .collect()
}

/// Runs every (DGP, true R², replication) cell in parallel and returns the
/// rows in plan order.
pub fn run_simulation_grid(plan: &SimulationPlan) -> Result<SimulationResult> {
    let mut rows = Vec::with_capacity(plan.n_rows());
    run_simulation_grid_with(plan, |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(SimulationResult { rows })
}

/// Like [`run_simulation_grid`], handing each row to `sink` as soon as every
/// earlier cell has finished, so output is ordered whatever the scheduling.
pub fn run_simulation_grid_with<F>(plan: &SimulationPlan, mut sink: F) -> Result<()>
where
    F: FnMut(&SimulationRow) -> Result<()>,
{
    plan.validate()?;
    let mut cells = Vec::new();
    for &dgp in &plan.dgps {
        for &true_r2 in &plan.true_r2_grid {
            for replication in 0..plan.n_replications {
                cells.push(Cell {
                    dgp,
                    true_r2,
                    replication,
                });
            }
        }
    }
    let (tx, rx) = mpsc::channel::<(usize, Vec<SimulationRow>)>();
    std::thread::scope(|scope| {
        scope.spawn(move || {
            cells
                .par_iter()
                .enumerate()
                .for_each_with(tx, |tx, (i, &cell)| {
                    // The receiver only disappears after a sink error; the rows are
                    // then discarded anyway.
                    let _ = tx.send((i, run_cell(plan, cell)));
                });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0usize;
        for (i, rows) in rx {
            pending.insert(i, rows);
            while let Some(rows) = pending.remove(&next) {
                for r in &rows {
                    sink(r)?;
                }
                log::info!("simulation: {} cells done", next + 1);
                next += 1;
            }
        }
        Ok(())
    })
}
