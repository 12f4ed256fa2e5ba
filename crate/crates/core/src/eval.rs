//! Metrics, loss-differential tests, cross-validated tuning and the holdout
//! benchmark.

use std::fmt::Write as _;
use std::io::Write;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::cart::CartConfig;
use crate::ensembles::{fit_bt, BtConfig, RfConfig};
use crate::error::{Error, Result};
use crate::lasso::LassoConfig;
use crate::model::{Model, ModelSpec, Regressor};
use crate::seed;
use crate::sgt::SgtConfig;
use crate::tabular::{make_folds, split_holdout, Dataset, FoldPlan, HoldoutMode, HoldoutPlan};

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the targets are constant around the baseline.
    pub r2: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
}

/// `r2 = 1 - sum (y - p)^2 / sum (y - baseline_mean)^2`.
pub fn compute_metrics(y_true: &[f64], y_pred: &[f64], baseline_mean: f64) -> Result<Metrics> {
    if y_true.len() != y_pred.len() || y_true.len() < 2 {
        return Err(Error::InvalidData(format!(
            "metrics need two equal-length vectors of length >= 2 (got {} and {})",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true.len() as f64;
    let sse: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    let sst: f64 = y_true
        .iter()
        .map(|y| (y - baseline_mean) * (y - baseline_mean))
        .sum();
    let mae = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / n;
    Ok(Metrics {
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
        rmse: (sse / n).sqrt(),
        mae,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// R² of `pred` against the true conditional mean, with the mean of `truth`
/// as baseline.
pub fn oracle_r2(truth: &[f64], pred: &[f64]) -> Result<Option<f64>> {
    Ok(compute_metrics(truth, pred, mean(truth))?.r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PairedT,
    DieboldMariano,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::PairedT => "paired_t",
            TestKind::DieboldMariano => "diebold_mariano",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDiffTest {
    pub kind: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    /// Mean of `e1^2 - e2^2`; positive when the first model has larger losses.
    pub mean_diff: f64,
    pub lags: usize,
}

/// Default Bartlett truncation lag, `floor(T^(1/3))`.
pub fn default_hac_lags(t: usize) -> usize {
    let mut l = (t as f64).cbrt().floor() as usize;
    // Guard against cbrt rounding just below an exact cube.
    while (l + 1).pow(3) <= t {
        l += 1;
    }
    l
}

/// Tests equal squared-error loss of two forecasts, `d_t = e1_t^2 - e2_t^2`.
///
/// The paired t test uses `mean(d) / (s_d / sqrt(T))` with a Student t
/// reference on `T - 1` degrees of freedom. The Diebold-Mariano statistic is
/// `mean(d) / sqrt(lrv / T)`, with `lrv` the Bartlett-weighted long-run
/// variance using `1/T` autocovariances, against a standard normal. Both
/// p-values are two-sided.
pub fn loss_differential_test(
    e1: &[f64],
    e2: &[f64],
    kind: TestKind,
    hac_lags: Option<usize>,
) -> Result<LossDiffTest> {
    if e1.len() != e2.len() || e1.len() < 5 {
        return Err(Error::InvalidData(format!(
            "loss-differential test needs two equal-length error vectors of length >= 5 (got {} and {})",
            e1.len(),
            e2.len()
        )));
    }
    let t = e1.len();
    let tf = t as f64;
    let d: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a * a - b * b).collect();
    let lags = match kind {
        TestKind::PairedT => 0,
        TestKind::DieboldMariano => hac_lags.unwrap_or_else(|| default_hac_lags(t)).min(t - 1),
    };
    let dbar = mean(&d);
    let result = |statistic: f64, p_value: f64| LossDiffTest {
        kind,
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        mean_diff: dbar,
        lags,
    };
    if d.iter().all(|&v| v == 0.0) {
        return Ok(result(0.0, 1.0));
    }
    let autocov = |j: usize| {
        (j..t)
            .map(|i| (d[i] - dbar) * (d[i - j] - dbar))
            .sum::<f64>()
            / tf
    };
    let gamma0 = autocov(0);
    let variance = match kind {
        TestKind::PairedT => gamma0 * tf / (tf - 1.0),
        TestKind::DieboldMariano => {
            let mut lrv = gamma0;
            for j in 1..=lags {
                lrv += 2.0 * (1.0 - j as f64 / (lags as f64 + 1.0)) * autocov(j);
            }
            lrv
        }
    };
    if variance.is_nan() || variance <= 0.0 {
        // A constant nonzero differential: the evidence is unbounded.
        return Ok(result(dbar.signum() * f64::INFINITY, 0.0));
    }
    let stat = dbar / (variance / tf).sqrt();
    let p = match kind {
        TestKind::PairedT => {
            let dist = StudentsT::new(0.0, 1.0, tf - 1.0).expect("valid degrees of freedom");
            2.0 * (1.0 - dist.cdf(stat.abs()))
        }
        TestKind::DieboldMariano => {
            let dist = Normal::standard();
            2.0 * (1.0 - dist.cdf(stat.abs()))
        }
    };
    Ok(result(stat, p))
}

/// `***`, `**`, `*` for p below 1%, 5% and 10%.
pub fn stars(p_value: f64) -> &'static str {
    if p_value < 0.01 {
        "***"
    } else if p_value < 0.05 {
        "**"
    } else if p_value < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Hyperparameter lists searched by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub k_folds: usize,
    pub rf_mtry: Vec<f64>,
    pub rf_min_node_size: Vec<usize>,
    pub cart_depths: Vec<usize>,
    pub bt_nu: Vec<f64>,
    pub bt_steps: Vec<usize>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            k_folds: 5,
            rf_mtry: vec![0.25, 0.33, 0.5, 0.75, 1.0],
            rf_min_node_size: vec![1, 3, 5, 10],
            cart_depths: (1..=12).collect(),
            bt_nu: vec![0.25, 0.1, 0.01],
            bt_steps: vec![50, 150, 500, 1500],
        }
    }
}

impl TuneGrid {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("rf_mtry", self.rf_mtry.is_empty()),
            ("rf_min_node_size", self.rf_min_node_size.is_empty()),
            ("cart_depths", self.cart_depths.is_empty()),
            ("bt_nu", self.bt_nu.is_empty()),
            ("bt_steps", self.bt_steps.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidConfig(format!(
                "tuning grid `{name}` is empty"
            )));
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidConfig("k_folds must be >= 2".into()));
        }
        Ok(())
    }
}

/// How a learner's hyperparameters are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tuning", rename_all = "snake_case")]
pub enum Learner {
    /// Fit as given.
    Fixed { spec: ModelSpec },
    /// `mtry_fraction` and `min_node_size` chosen by CV.
    TunedRf { base: RfConfig },
    /// `max_depth` chosen by CV.
    TunedCart { base: CartConfig },
    /// Number of trees chosen by CV, and `nu` too when `tune_nu`.
    TunedBt { base: BtConfig, tune_nu: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLearner {
    pub name: String,
    pub learner: Learner,
}

impl NamedLearner {
    pub fn new(name: impl Into<String>, learner: Learner) -> Self {
        Self {
            name: name.into(),
            learner,
        }
    }

    pub fn fixed(name: impl Into<String>, spec: ModelSpec) -> Self {
        Self::new(name, Learner::Fixed { spec })
    }
}

/// The learners known by name to the benchmark and the command line.
pub fn learner_by_name(name: &str) -> Result<NamedLearner> {
    let l = |learner| Ok(NamedLearner::new(name, learner));
    match name {
        "rf" => l(Learner::TunedRf { base: RfConfig::default() }),
        "cart" => l(Learner::TunedCart { base: CartConfig::default() }),
        "bt" => l(Learner::TunedBt { base: BtConfig::default(), tune_nu: true }),
        "booging" => l(Learner::Fixed { spec: ModelSpec::Booging(Default::default()) }),
        "lasso" => l(Learner::Fixed { spec: ModelSpec::Lasso(LassoConfig::default()) }),
        "sgt" => l(Learner::Fixed { spec: ModelSpec::Sgt(SgtConfig::new(0.1, 0.25)) }),
        _ => parse_parameterized(name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown model `{name}` (expected rf, cart, sgt, bt, booging, lasso, sgt_<eta>_<hbar>, sgtc_<eta>_<hbar>, bt_<nu>_<steps> or bt_<nu>_tuned)"
            ))
        }),
    }
}

fn parse_parameterized(name: &str) -> Option<NamedLearner> {
    let mut parts = name.split('_');
    let (kind, a, b) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let learner = match kind {
        "sgt" | "sgtc" => {
            let (eta, h_bar) = (a.parse().ok()?, b.parse().ok()?);
            let cfg = if kind == "sgt" {
                SgtConfig::new(eta, h_bar)
            } else {
                SgtConfig::constant(eta, h_bar)
            };
            cfg.validate().ok()?;
            Learner::Fixed {
                spec: ModelSpec::Sgt(cfg),
            }
        }
        "bt" => {
            let nu: f64 = a.parse().ok()?;
            if !(nu > 0.0 && nu <= 1.0) {
                return None;
            }
            if b == "tuned" {
                Learner::TunedBt {
                    base: BtConfig {
                        nu,
                        ..BtConfig::default()
                    },
                    tune_nu: false,
                }
            } else {
                Learner::Fixed {
                    spec: ModelSpec::Bt(BtConfig::new(nu, b.parse().ok()?)),
                }
            }
        }
        _ => return None,
    };
    Some(NamedLearner::new(name, learner))
}

/// One candidate's cross-validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub candidate: String,
    pub mean_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub spec: ModelSpec,
    pub log: Vec<CvEntry>,
}

impl Tuned {
    pub fn describe(&self) -> String {
        match &self.spec {
            ModelSpec::Rf(c) => {
                format!("mtry={} min_node_size={}", c.mtry_fraction, c.min_node_size)
            }
            ModelSpec::Cart(c) => format!(
                "max_depth={}",
                c.max_depth.map_or("none".into(), |d| d.to_string())
            ),
            ModelSpec::Bt(c) => format!("nu={} steps={}", c.nu, c.n_steps),
            _ => String::new(),
        }
    }
}

fn fold_mse(data: &Dataset, test_rows: &[usize], pred: &[f64]) -> f64 {
    test_rows
        .iter()
        .zip(pred)
        .map(|(&i, p)| (data.y()[i] - p).powi(2))
        .sum::<f64>()
}

/// Mean held-out MSE of `spec` over the folds.
fn cv_mse(data: &Dataset, folds: &FoldPlan, spec: &ModelSpec) -> Result<f64> {
    let mut sse = 0.0;
    for fold in 0..folds.k_folds {
        let (tr, te) = folds.split(fold);
        let model = spec.fit(&data.select_rows(&tr))?;
        let pred = model.predict(&data.x().select_rows(&te))?;
        sse += fold_mse(data, &te, &pred);
    }
    Ok(sse / data.n() as f64)
}

/// Picks the candidate with the lowest mean CV MSE, the first in grid order
/// on ties. Candidates that fail are logged and skipped.
fn select(candidates: Vec<(String, ModelSpec, Result<f64>)>) -> Result<Tuned> {
    let mut best: Option<(f64, ModelSpec)> = None;
    let mut log = Vec::with_capacity(candidates.len());
    for (name, spec, outcome) in candidates {
        match outcome {
            Ok(mse) => {
                debug!("cv {name}: mse {mse}");
                if best.as_ref().is_none_or(|(b, _)| mse < *b) {
                    best = Some((mse, spec));
                }
                log.push(CvEntry {
                    candidate: name,
                    mean_mse: Some(mse),
                    error: None,
                });
            }
            Err(e) => {
                debug!("cv {name}: failed: {e}");
                log.push(CvEntry {
                    candidate: name,
                    mean_mse: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((_, spec)) => Ok(Tuned { spec, log }),
        None => Err(Error::TuningFailed(
            log.iter()
                .map(|e| format!("{}: {}", e.candidate, e.error.as_deref().unwrap_or("?")))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

/// Chooses the hyperparameters of `learner` by k-fold CV on `train`.
pub fn tune_cv(
    train: &Dataset,
    grid: &TuneGrid,
    folds: &FoldPlan,
    learner: &Learner,
) -> Result<Tuned> {
    grid.validate()?;
    if folds.n() != train.n() {
        return Err(Error::InvalidConfig(format!(
            "fold plan covers {} rows, training set has {}",
            folds.n(),
            train.n()
        )));
    }
    let candidates = match *learner {
        Learner::Fixed { spec } => {
            return Ok(Tuned {
                spec,
                log: Vec::new(),
            })
        }
        Learner::TunedRf { base } => {
            let mut out = Vec::new();
            for &mtry in &grid.rf_mtry {
                for &node in &grid.rf_min_node_size {
                    let spec = ModelSpec::Rf(RfConfig {
                        mtry_fraction: mtry,
                        min_node_size: node,
                        ..base
                    });
                    let name = format!("rf mtry={mtry} min_node_size={node}");
                    out.push((name, spec, cv_mse(train, folds, &spec)));
                }
            }
            out
        }
        Learner::TunedCart { base } => grid
            .cart_depths
            .iter()
            .map(|&d| {
                let spec = ModelSpec::Cart(CartConfig {
                    max_depth: Some(d),
                    ..base
                });
                (
                    format!("cart max_depth={d}"),
                    spec,
                    cv_mse(train, folds, &spec),
                )
            })
            .collect(),
        Learner::TunedBt { base, tune_nu } => {
            let nus = if tune_nu {
                grid.bt_nu.clone()
            } else {
                vec![base.nu]
            };
            tune_bt_candidates(train, folds, base, &nus, &grid.bt_steps)
        }
    };
    select(candidates)
}

/// Every (nu, steps) pair from one boosting run per nu and fold, reading the
/// shorter ensembles off staged predictions.
fn tune_bt_candidates(
    train: &Dataset,
    folds: &FoldPlan,
    base: BtConfig,
    nus: &[f64],
    steps: &[usize],
) -> Vec<(String, ModelSpec, Result<f64>)> {
    let max_steps = steps.iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    for &nu in nus {
        let cfg = BtConfig {
            nu,
            n_steps: max_steps,
            ..base
        };
        let mut sse = Ok(vec![0.0; steps.len()]);
        for fold in 0..folds.k_folds {
            let Ok(acc) = sse.as_mut() else { break };
            let (tr, te) = folds.split(fold);
            let staged = fit_bt(&train.select_rows(&tr), &cfg)
                .and_then(|m| m.predict_stages(&train.x().select_rows(&te), steps));
            match staged {
                Ok(preds) => {
                    for (a, p) in acc.iter_mut().zip(&preds) {
                        *a += fold_mse(train, &te, p);
                    }
                }
                Err(e) => sse = Err(e.to_string()),
            }
        }
        for (k, &s) in steps.iter().enumerate() {
            let spec = ModelSpec::Bt(BtConfig { n_steps: s, ..cfg });
            let outcome = match &sse {
                Ok(v) => Ok(v[k] / train.n() as f64),
                Err(e) => Err(Error::TuningFailed(e.clone())),
            };
            out.push((format!("bt nu={nu} steps={s}"), spec, outcome));
        }
    }
    out
}

/// Tunes (when needed) with folds drawn from `seed`, then fits on all of
/// `train`. Every candidate and the final model share the learner seed.
pub fn fit_learner(
    train: &Dataset,
    learner: &Learner,
    grid: &TuneGrid,
    seed: u64,
) -> Result<(Model, Tuned)> {
    let learner = with_learner_seed(learner, seed::named(seed, "model"));
    let tuned = match learner {
        Learner::Fixed { spec } => Tuned {
            spec,
            log: Vec::new(),
        },
        _ => {
            let folds = make_folds(train.n(), grid.k_folds, seed::named(seed, "cv-folds"))?;
            tune_cv(train, grid, &folds, &learner)?
        }
    };
    let model = tuned.spec.fit(train)?;
    Ok((model, tuned))
}

fn with_learner_seed(learner: &Learner, seed: u64) -> Learner {
    match *learner {
        Learner::Fixed { spec } => Learner::Fixed {
            spec: spec.with_seed(seed),
        },
        Learner::TunedRf { base } => Learner::TunedRf {
            base: RfConfig { seed, ..base },
        },
        Learner::TunedCart { base } => Learner::TunedCart {
            base: CartConfig { seed, ..base },
        },
        Learner::TunedBt { base, tune_nu } => Learner::TunedBt {
            base: BtConfig { seed, ..base },
            tune_nu,
        },
    }
}

/// One model's line in a benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub name: String,
    /// R² with the test-set mean as baseline.
    pub r2: Option<f64>,
    /// R² with the training mean as baseline.
    pub oos_r2: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub tuned: String,
    pub error: Option<String>,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    /// Reference model (first error vector).
    pub reference: String,
    /// Challenger (second error vector).
    pub challenger: String,
    pub test: LossDiffTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_train: usize,
    pub n_test: usize,
    pub split: HoldoutMode,
    pub seed: u64,
    pub models: Vec<ModelRow>,
    pub tests: Vec<PairTest>,
}

/// Pairs compared in every report when both models are present.
pub const TEST_PAIRS: [(&str, &str); 2] = [("rf", "sgt"), ("bt", "booging")];

/// Splits, tunes on the training part only, fits, and scores every learner on
/// the held-out part.
pub fn run_benchmark(
    data: &Dataset,
    split: &HoldoutPlan,
    models: &[NamedLearner],
    grid: &TuneGrid,
) -> Result<EvalReport> {
    grid.validate()?;
    if models.is_empty() {
        return Err(Error::InvalidConfig("no models to benchmark".into()));
    }
    let (train, test) = split_holdout(data, split)?;
    let train_mean = mean(train.y());
    let test_mean = mean(test.y());
    let mut rows = Vec::with_capacity(models.len());
    let mut errors: Vec<Option<Vec<f64>>> = Vec::with_capacity(models.len());
    for m in models {
        info!("benchmark: fitting {}", m.name);
        let outcome = fit_learner(&train, &m.learner, grid, seed::named(split.seed, &m.name))
            .and_then(|(model, tuned)| {
                let pred = model.predict(test.x())?;
                let metrics = compute_metrics(test.y(), &pred, test_mean)?;
                let oos = compute_metrics(test.y(), &pred, train_mean)?;
                Ok((pred, metrics, oos.r2, tuned))
            });
        match outcome {
            Ok((pred, metrics, oos_r2, tuned)) => {
                errors.push(Some(
                    test.y().iter().zip(&pred).map(|(y, p)| y - p).collect(),
                ));
                rows.push(ModelRow {
                    name: m.name.clone(),
                    r2: metrics.r2,
                    oos_r2,
                    rmse: Some(metrics.rmse),
                    mae: Some(metrics.mae),
                    tuned: tuned.describe(),
                    error: None,
                    best: false,
                });
            }
            Err(e) => {
                log::warn!("benchmark: {} failed: {e}", m.name);
                errors.push(None);
                rows.push(ModelRow {
                    name: m.name.clone(),
                    r2: None,
                    oos_r2: None,
                    rmse: None,
                    mae: None,
                    tuned: String::new(),
                    error: Some(e.to_string()),
                    best: false,
                });
            }
        }
    }
    let best_r2 = rows
        .iter()
        .filter_map(|r| r.r2)
        .fold(f64::NEG_INFINITY, f64::max);
    for r in &mut rows {
        r.best = r.r2 == Some(best_r2);
    }
    let kind = match split.mode {
        HoldoutMode::Random => TestKind::PairedT,
        HoldoutMode::Temporal => TestKind::DieboldMariano,
    };
    let position = |name: &str| models.iter().position(|m| m.name == name);
    let mut tests = Vec::new();
    for (a, b) in TEST_PAIRS {
        let (Some(ia), Some(ib)) = (position(a), position(b)) else {
            continue;
        };
        if let (Some(ea), Some(eb)) = (&errors[ia], &errors[ib]) {
            tests.push(PairTest {
                reference: a.into(),
                challenger: b.into(),
                test: loss_differential_test(ea, eb, kind, None)?,
            });
        }
    }
    Ok(EvalReport {
        n_train: train.n(),
        n_test: test.n(),
        split: split.mode,
        seed: split.seed,
        models: rows,
        tests,
    })
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "model,r2,oos_r2,rmse,mae,best,tuned,test_against,statistic,p_value,stars,test_kind,error";

    /// One row per model; pairwise test columns are filled on the challenger.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER.split(','))?;
        for r in &self.models {
            let test = self.tests.iter().find(|t| t.challenger == r.name);
            w.write_record([
                r.name.clone(),
                fmt_opt(r.r2),
                fmt_opt(r.oos_r2),
                fmt_opt(r.rmse),
                fmt_opt(r.mae),
                r.best.to_string(),
                r.tuned.clone(),
                test.map(|t| t.reference.clone()).unwrap_or_default(),
                test.map(|t| fmt_f64(t.test.statistic)).unwrap_or_default(),
                test.map(|t| fmt_f64(t.test.p_value)).unwrap_or_default(),
                test.map(|t| stars(t.test.p_value).to_string())
                    .unwrap_or_default(),
                test.map(|t| t.test.kind.name().to_string())
                    .unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    /// Plain-text table with significance stars on challengers.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "train {} / test {} rows, {} split, seed {}",
            self.n_train,
            self.n_test,
            match self.split {
                HoldoutMode::Random => "random",
                HoldoutMode::Temporal => "temporal",
            },
            self.seed
        );
        let _ = writeln!(
            s,
            "{:<16} {:>9} {:>9} {:>11} {:>11}  tuned",
            "model", "R2", "oos R2", "RMSE", "MAE"
        );
        for r in &self.models {
            let star = self
                .tests
                .iter()
                .find(|t| t.challenger == r.name)
                .map(|t| stars(t.test.p_value))
                .unwrap_or("");
            let show = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
            let name = if r.best {
                format!("{} (best)", r.name)
            } else {
                r.name.clone()
            };
            let _ = writeln!(
                s,
                "{:<16} {:>9} {:>9} {:>11} {:>11}  {}{}",
                name,
                format!("{}{}", show(r.r2, 3), star),
                show(r.oos_r2, 3),
                show(r.rmse, 4),
                show(r.mae, 4),
                r.tuned,
                r.error
                    .as_deref()
                    .map(|e| format!(" FAILED: {e}"))
                    .unwrap_or_default()
            );
        }
        for t in &self.tests {
            let _ = writeln!(
                s,
                "{} vs {}: {} statistic {:.3}, p = {:.4} {}",
                t.challenger,
                t.reference,
                t.test.kind.name(),
                t.test.statistic,
                t.test.p_value,
                stars(t.test.p_value)
            );
        }
        s
    }
}
