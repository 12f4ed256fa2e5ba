//! Random forests, stochastic gradient boosting and Booging (bagged boosting
//! with a high learning rate on feature-augmented data).
//!
//! Every member of an ensemble draws from its own child seed, and members are
//! collected in index order, so fits do not depend on the thread count.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{check_features, grow_cart_sorted, CartConfig, CartTree};
use crate::error::{Error, Result};
use crate::seed::{self, SeedRng};
use crate::splitcore::SortedColumns;
use crate::tabular::{Dataset, FeatureMatrix};

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Row multiplicities of a bootstrap draw of `n` rows out of `n`.
fn bootstrap_counts(rng: &mut SeedRng, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_trees: usize,
    pub mtry_fraction: f64,
    pub min_node_size: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry_fraction: 1.0 / 3.0,
            min_node_size: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
        }
        self.tree_config().validate(n)
    }

    fn tree_config(&self) -> CartConfig {
        CartConfig {
            max_depth: None,
            min_node_size: self.min_node_size,
            min_split_size: 2,
            mtry_fraction: self.mtry_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub trees: Vec<CartTree>,
    pub n_features: usize,
}

pub fn fit_rf(train: &Dataset, cfg: &RfConfig) -> Result<RfModel> {
    train.check_learner_input()?;
    cfg.validate(train.n())?;
    let (x, y, n) = (train.x(), train.y(), train.n());
    let sorted = SortedColumns::new(x);
    let tree_cfg = cfg.tree_config();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::child(cfg.seed, t as u64));
            let orders = if cfg.bootstrap {
                sorted.with_counts(&bootstrap_counts(&mut rng, n))
            } else {
                sorted.clone()
            };
            grow_cart_sorted(x, y, orders, &tree_cfg, &mut rng)
        })
        .collect();
    Ok(RfModel {
        trees,
        n_features: x.n_cols(),
    })
}

impl RfModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        check_features(self.n_features, x)?;
        let m = self.trees.len() as f64;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| compensated_sum(self.trees.iter().map(|t| t.predict_row(x, i))) / m)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtConfig {
    /// Shrinkage applied to every tree.
    pub nu: f64,
    pub n_steps: usize,
    /// Maximum depth of each tree.
    pub interaction_depth: usize,
    pub subsample_fraction: f64,
    /// Minimum observations per leaf of each tree.
    pub min_node_size: usize,
    pub seed: u64,
}

impl Default for BtConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            n_steps: 500,
            interaction_depth: 5,
            subsample_fraction: 0.5,
            min_node_size: 5,
            seed: 0,
        }
    }
}

impl BtConfig {
    pub fn new(nu: f64, n_steps: usize) -> Self {
        Self {
            nu,
            n_steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu {} is outside (0, 1]", self.nu));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!(
                "subsample_fraction {} is outside (0, 1]",
                self.subsample_fraction
            ));
        }
        if self.interaction_depth == 0 {
            return bad("interaction_depth must be >= 1".into());
        }
        if self.min_node_size == 0 {
            return bad("min_node_size must be >= 1".into());
        }
        Ok(())
    }

    fn tree_config(&self) -> CartConfig {
        CartConfig {
            max_depth: Some(self.interaction_depth),
            min_node_size: self.min_node_size,
            min_split_size: 2,
            mtry_fraction: 1.0,
            seed: self.seed,
        }
    }
}

/// `init + nu * sum_s tree_s(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtModel {
    pub init: f64,
    pub nu: f64,
    pub trees: Vec<CartTree>,
    pub n_features: usize,
}

pub fn fit_bt(train: &Dataset, cfg: &BtConfig) -> Result<BtModel> {
    train.check_learner_input()?;
    cfg.validate()?;
    let sorted = SortedColumns::new(train.x());
    let counts = vec![1u32; train.n()];
    Ok(boost(train.x(), train.y(), &sorted, &counts, cfg))
}

/// Boosts on the row multiset `counts` (all ones for a plain fit).
fn boost(
    x: &FeatureMatrix,
    y: &[f64],
    sorted: &SortedColumns,
    counts: &[u32],
    cfg: &BtConfig,
) -> BtModel {
    let mut rng = seed::rng(cfg.seed);
    let members: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect();
    let m = members.len();
    let init = compensated_sum(members.iter().map(|&i| y[i])) / m as f64;
    let sub = ((cfg.subsample_fraction * m as f64).floor() as usize).clamp(1, m);
    let tree_cfg = cfg.tree_config();

    let mut fitted = vec![init; x.n_rows()];
    let mut residual = vec![0.0; x.n_rows()];
    let mut step_counts = vec![0u32; x.n_rows()];
    let mut trees = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        for (r, (yi, fi)) in residual.iter_mut().zip(y.iter().zip(&fitted)) {
            *r = yi - fi;
        }
        step_counts.iter_mut().for_each(|c| *c = 0);
        if sub == m {
            step_counts.copy_from_slice(counts);
        } else {
            for pos in index::sample(&mut rng, m, sub) {
                step_counts[members[pos]] += 1;
            }
        }
        let tree = grow_cart_sorted(
            x,
            &residual,
            sorted.with_counts(&step_counts),
            &tree_cfg,
            &mut rng,
        );
        for (i, f) in fitted.iter_mut().enumerate() {
            if counts[i] > 0 {
                *f += cfg.nu * tree.predict_row(x, i);
            }
        }
        trees.push(tree);
    }
    BtModel {
        init,
        nu: cfg.nu,
        trees,
        n_features: x.n_cols(),
    }
}

impl BtModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.predict_stages(x, &[self.trees.len()])?.remove(0))
    }

    /// Predictions using only the first `s` trees, for every `s` in `stages`.
    pub fn predict_stages(&self, x: &FeatureMatrix, stages: &[usize]) -> Result<Vec<Vec<f64>>> {
        check_features(self.n_features, x)?;
        if let Some(&s) = stages.iter().find(|&&s| s > self.trees.len()) {
            return Err(Error::InvalidConfig(format!(
                "stage {s} exceeds the {} fitted trees",
                self.trees.len()
            )));
        }
        let mut order: Vec<usize> = (0..stages.len()).collect();
        order.sort_by_key(|&i| stages[i]);
        let mut out = vec![Vec::new(); stages.len()];
        let mut acc = vec![self.init; x.n_rows()];
        let mut done = 0;
        for idx in order {
            for tree in &self.trees[done..stages[idx]] {
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += self.nu * tree.predict_row(x, i);
                }
            }
            done = stages[idx];
            out[idx] = acc.clone();
        }
        Ok(out)
    }

    /// Keeps only the first `s` trees.
    pub fn truncate(&mut self, s: usize) {
        self.trees.truncate(s);
    }
}

/// Noise model for the augmented feature copies. Copy `c` of feature `j` is
/// `x_j + noise_scale * sd_j * e`, with `e` standard normal drawn from a stream
/// keyed by the seed and the row's values, so the same row always receives
/// the same copies whether it appears in training or at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub copies: usize,
    pub noise_scale: f64,
    /// Sample standard deviation of each original training feature.
    pub feature_sd: Vec<f64>,
    pub seed: u64,
}

impl Augmentation {
    pub fn fit(x: &FeatureMatrix, copies: usize, noise_scale: f64, seed: u64) -> Result<Self> {
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise scale {noise_scale} must be finite and >= 0"
            )));
        }
        let feature_sd = x.columns().iter().map(|c| sample_sd(c)).collect();
        Ok(Self {
            copies,
            noise_scale,
            feature_sd,
            seed,
        })
    }

    pub fn n_input_features(&self) -> usize {
        self.feature_sd.len()
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_features(self.n_input_features(), x)?;
        let k = x.n_cols();
        let mut columns = x.columns().to_vec();
        let mut extra = vec![vec![0.0; x.n_rows()]; k * self.copies];
        // Column-major output filled row by row: each row seeds its own noise.
        #[allow(clippy::needless_range_loop)]
        for i in 0..x.n_rows() {
            let row = x.row(i);
            let mut rng = seed::rng(seed::child(self.seed, row_key(&row)));
            for c in 0..self.copies {
                for j in 0..k {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    extra[c * k + j][i] = row[j] + self.noise_scale * self.feature_sd[j] * e;
                }
            }
        }
        columns.extend(extra);
        FeatureMatrix::from_columns(columns)
    }
}

fn row_key(row: &[f64]) -> u64 {
    // Adding 0.0 maps -0.0 to 0.0 so equal values share a key.
    row.iter()
        .fold(row.len() as u64, |h, v| seed::child(h, (v + 0.0).to_bits()))
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Appends `copies` noisy copies of every feature; see [`Augmentation`].
pub fn augment_features(
    d: &Dataset,
    copies: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    let aug = Augmentation::fit(d.x(), copies, noise_scale, seed)?;
    let x = aug.apply(d.x())?;
    let mut names = d.feature_names().to_vec();
    for c in 0..copies {
        names.extend(
            d.feature_names()
                .iter()
                .map(|n| format!("{n}_copy{}", c + 1)),
        );
    }
    Dataset::new(x, d.y().to_vec(), names)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoogingConfig {
    pub n_bags: usize,
    pub bt: BtConfig,
    pub augment_copies: usize,
    pub augment_noise_scale: f64,
    /// Resample each bag with replacement; off fits every bag on all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for BoogingConfig {
    fn default() -> Self {
        Self {
            n_bags: 100,
            bt: BtConfig::new(0.25, 500),
            augment_copies: 1,
            augment_noise_scale: 0.33,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl BoogingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bags == 0 {
            return Err(Error::InvalidConfig("n_bags must be >= 1".into()));
        }
        self.bt.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoogingModel {
    pub augmentation: Augmentation,
    pub bags: Vec<BtModel>,
}

pub fn fit_booging(train: &Dataset, cfg: &BoogingConfig) -> Result<BoogingModel> {
    train.check_learner_input()?;
    cfg.validate()?;
    let augmentation = Augmentation::fit(
        train.x(),
        cfg.augment_copies,
        cfg.augment_noise_scale,
        seed::named(cfg.seed, "augment"),
    )?;
    let x = augmentation.apply(train.x())?;
    let y = train.y();
    let n = train.n();
    let sorted = SortedColumns::new(&x);
    let bags = (0..cfg.n_bags)
        .into_par_iter()
        .map(|b| {
            let bag_seed = seed::child(cfg.seed, b as u64);
            let counts = if cfg.bootstrap {
                bootstrap_counts(&mut seed::rng(seed::named(bag_seed, "bootstrap")), n)
            } else {
                vec![1u32; n]
            };
            let bt = BtConfig {
                seed: seed::named(bag_seed, "boost"),
                ..cfg.bt
            };
            boost(&x, y, &sorted, &counts, &bt)
        })
        .collect();
    Ok(BoogingModel { augmentation, bags })
}

impl BoogingModel {
    pub fn n_features(&self) -> usize {
        self.augmentation.n_input_features()
    }

    /// Takes the original (unaugmented) features.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let xa = self.augmentation.apply(x)?;
        let per_bag = self
            .bags
            .par_iter()
            .map(|b| b.predict(&xa))
            .collect::<Result<Vec<_>>>()?;
        let m = per_bag.len() as f64;
        Ok((0..x.n_rows())
            .map(|i| compensated_sum(per_bag.iter().map(|p| p[i])) / m)
            .collect())
    }
}
