//! Slow-growing trees.
//!
//! An SGT is one deep tree in which a split does not discard the rows on the
//! rejected side: it multiplies their weights by `1 - eta`. Every node keeps
//! all N observations with weights on the simplex, and a branch stops growing
//! once its weights are concentrated enough, i.e. its Herfindahl index
//! `sum w_i^2` reaches `h_bar`. With `eta = 1` the procedure is exactly CART.
//!
//! A leaf stores the path of filters that produced it and the weighted mean
//! `sum_i w_i y_i` of the training targets. A new point gets, for each leaf,
//! the product over that leaf's path of `1` (kept side) or `1 - eta`
//! (rejected side). Those products are normalized across leaves and used to
//! average the leaf values.

use serde::{Deserialize, Serialize};

use crate::cart::{check_features, draw_features, mtry_count};
use crate::error::{Error, Result};
use crate::seed;
use crate::splitcore::{
    herfindahl, scan_best_split, EntryWeights, ScanInput, SortedColumns, SplitResult, WeightVector,
};
use crate::tabular::{Dataset, FeatureMatrix};

/// Absolute slack on the Herfindahl stopping test, so a node whose index equals
/// `h_bar` up to rounding counts as concentrated.
const H_TOL: f64 = 1e-12;

pub const DEFAULT_MAX_LEAVES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgtConfig {
    /// Base learning rate, in (0, 1].
    pub eta0: f64,
    /// Learning-rate increase per level of depth when the schedule is on.
    pub eta_increment: f64,
    /// Upper bound on the scheduled learning rate (never below `eta0`).
    pub eta_plateau: f64,
    pub schedule_enabled: bool,
    /// Maximal concentration index: a leaf stops once `H >= h_bar`.
    pub h_bar: f64,
    pub mtry_fraction: f64,
    pub max_depth_cap: usize,
    /// Growth stops once expanding another node could push the leaf count
    /// past this; unexpanded nodes become capped leaves.
    pub max_leaves: usize,
    pub dead_branch_tol: f64,
    pub seed: u64,
}

impl Default for SgtConfig {
    fn default() -> Self {
        Self {
            eta0: 0.1,
            eta_increment: 0.01,
            eta_plateau: 0.5,
            schedule_enabled: true,
            h_bar: 0.25,
            mtry_fraction: 0.75,
            max_depth_cap: 64,
            max_leaves: DEFAULT_MAX_LEAVES,
            dead_branch_tol: 1e-10,
            seed: 0,
        }
    }
}

impl SgtConfig {
    /// Scheduled learning rate starting at `eta0`, with the default increment
    /// and plateau.
    pub fn new(eta0: f64, h_bar: f64) -> Self {
        Self {
            eta0,
            h_bar,
            ..Self::default()
        }
    }

    /// A fixed learning rate at every depth.
    pub fn constant(eta: f64, h_bar: f64) -> Self {
        Self {
            eta0: eta,
            h_bar,
            schedule_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return bad(format!("eta0 {} is outside (0, 1]", self.eta0));
        }
        if self.schedule_enabled && !(self.eta_increment >= 0.0 && self.eta_plateau <= 1.0) {
            return bad("eta schedule needs increment >= 0 and plateau <= 1".into());
        }
        if !(self.h_bar > 0.0 && self.h_bar <= 1.0) {
            return bad(format!("h_bar {} is outside (0, 1]", self.h_bar));
        }
        if !(self.mtry_fraction > 0.0 && self.mtry_fraction <= 1.0) {
            return bad(format!(
                "mtry_fraction {} is outside (0, 1]",
                self.mtry_fraction
            ));
        }
        if self.max_leaves == 0 {
            return bad("max_leaves must be >= 1".into());
        }
        if self.dead_branch_tol < 0.0 {
            return bad("dead_branch_tol must be >= 0".into());
        }
        Ok(())
    }
}

/// Learning rate applied to a split at `depth` (number of filters above it).
pub fn eta_at_depth(cfg: &SgtConfig, depth: usize) -> f64 {
    if !cfg.schedule_enabled {
        return cfg.eta0;
    }
    let plateau = cfg.eta_plateau.max(cfg.eta0);
    (cfg.eta0 + cfg.eta_increment * depth as f64).min(plateau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Leq,
    Gt,
}

/// One split on a leaf's path: rows on `kept_side` keep their weight, the
/// others are scaled by `1 - eta_used`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFilter {
    pub feature: usize,
    pub threshold: f64,
    pub kept_side: Side,
    pub eta_used: f64,
}

impl PathFilter {
    #[inline]
    pub fn keeps(&self, value: f64) -> bool {
        match self.kept_side {
            Side::Leq => value <= self.threshold,
            Side::Gt => value > self.threshold,
        }
    }

    #[inline]
    fn factor(&self, value: f64) -> f64 {
        if self.keeps(value) {
            1.0
        } else {
            1.0 - self.eta_used
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgtLeaf {
    pub path: Vec<PathFilter>,
    pub value: f64,
    /// Herfindahl index of the leaf's training weights.
    pub train_h: f64,
    /// True when the leaf stopped on the depth cap or the leaf budget rather
    /// than on `h_bar` or for lack of a split.
    #[serde(default)]
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgtModel {
    pub leaves: Vec<SgtLeaf>,
    pub config: SgtConfig,
    pub n_features: usize,
    /// Children discarded as dead branches.
    #[serde(default)]
    pub trimmed_branches: usize,
}

/// Reweights `w` for the child that keeps `filter.kept_side`.
pub fn child_weights(
    w: &WeightVector,
    filter: &PathFilter,
    x: &FeatureMatrix,
) -> Result<WeightVector> {
    if !(filter.eta_used > 0.0 && filter.eta_used <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "eta {} is outside (0, 1]",
            filter.eta_used
        )));
    }
    let col = x.column(filter.feature);
    let raw = w
        .as_slice()
        .iter()
        .zip(col)
        .map(|(&wi, &v)| wi * filter.factor(v))
        .collect();
    WeightVector::from_raw(raw)
}

/// True when `w` is uniform over all observations, within `tol`.
pub fn is_dead_branch(w: &WeightVector, tol: f64) -> bool {
    let flat = 1.0 / w.len() as f64;
    w.as_slice().iter().all(|v| (v - flat).abs() <= tol)
}

/// True when `path` already holds the same split with the opposite side kept.
///
/// Such a child undoes an earlier step: with a constant learning rate and the
/// two filters adjacent its weights are exactly the grandparent's, and in
/// general it only re-spreads mass that an ancestor already concentrated.
pub fn undoes_earlier_split(path: &[PathFilter], filter: &PathFilter) -> bool {
    path.iter().any(|p| {
        p.feature == filter.feature
            && p.threshold == filter.threshold
            && p.kept_side != filter.kept_side
    })
}

/// What happened at one node during growth, in growth order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub path: Vec<PathFilter>,
    pub weights: Vec<f64>,
    pub herfindahl: f64,
    pub action: TraceAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceAction {
    /// Node became a leaf.
    Leaf { value: f64, capped: bool },
    /// Node was split; `dead` lists the trimmed children.
    Split {
        feature: usize,
        threshold: f64,
        eta: f64,
        dead: Vec<Side>,
    },
}

struct Frontier {
    weights: WeightVector,
    path: Vec<PathFilter>,
    /// Seeds this node's feature draw; derived from the path, so the tree does
    /// not depend on the order in which nodes are expanded.
    seed: u64,
}

pub fn fit_sgt(train: &Dataset, cfg: &SgtConfig) -> Result<SgtModel> {
    grow(train, cfg, None)
}

/// Fits and also returns the node-by-node growth trace.
pub fn fit_sgt_traced(train: &Dataset, cfg: &SgtConfig) -> Result<(SgtModel, Vec<TraceStep>)> {
    let mut trace = Vec::new();
    let model = grow(train, cfg, Some(&mut trace))?;
    Ok((model, trace))
}

fn leaf_value(w: &WeightVector, y: &[f64]) -> f64 {
    w.as_slice().iter().zip(y).map(|(w, y)| w * y).sum()
}

/// Grows level by level, each level left to right.
fn grow(
    train: &Dataset,
    cfg: &SgtConfig,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<SgtModel> {
    train.check_learner_input()?;
    cfg.validate()?;
    let x = train.x();
    let y = train.y();
    let k = x.n_cols();
    let sorted = SortedColumns::new(x);
    let mtry = mtry_count(cfg.mtry_fraction, k);

    let mut leaves = Vec::new();
    let mut trimmed = 0;
    let mut level = vec![Frontier {
        weights: WeightVector::uniform(train.n()),
        path: Vec::new(),
        seed: cfg.seed,
    }];

    while !level.is_empty() {
        let mut next: Vec<Frontier> = Vec::new();
        let mut remaining = level.len();
        for node in level {
            remaining -= 1;
            let h = herfindahl(&node.weights);
            let depth = node.path.len();
            // Splitting adds at most one node to the final count.
            let over_budget = leaves.len() + next.len() + remaining + 2 > cfg.max_leaves;
            let stop = if h + H_TOL >= cfg.h_bar {
                Some(false)
            } else if depth >= cfg.max_depth_cap || over_budget {
                Some(true)
            } else {
                None
            };
            let split = match stop {
                Some(_) => None,
                None => {
                    let mut rng = seed::rng(node.seed);
                    let features = draw_features(&mut rng, k, mtry);
                    best_split(x, y, &sorted, &node.weights, &features)
                }
            };
            let Some(split) = split else {
                let capped = stop.unwrap_or(false);
                push_leaf(&mut leaves, &mut trace, node, h, y, capped);
                continue;
            };
            let eta = eta_at_depth(cfg, depth);
            let mut children = Vec::with_capacity(2);
            let mut dead = Vec::new();
            for (label, side) in [Side::Leq, Side::Gt].into_iter().enumerate() {
                let filter = PathFilter {
                    feature: split.feature,
                    threshold: split.threshold,
                    kept_side: side,
                    eta_used: eta,
                };
                let w = child_weights(&node.weights, &filter, x)?;
                if is_dead_branch(&w, cfg.dead_branch_tol)
                    || undoes_earlier_split(&node.path, &filter)
                {
                    dead.push(side);
                    continue;
                }
                let mut path = node.path.clone();
                path.push(filter);
                children.push(Frontier {
                    weights: w,
                    path,
                    seed: seed::child(node.seed, label as u64),
                });
            }
            if children.is_empty() {
                push_leaf(&mut leaves, &mut trace, node, h, y, false);
                continue;
            }
            trimmed += dead.len();
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceStep {
                    path: node.path.clone(),
                    weights: node.weights.as_slice().to_vec(),
                    herfindahl: h,
                    action: TraceAction::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        eta,
                        dead,
                    },
                });
            }
            next.extend(children);
        }
        level = next;
    }

    Ok(SgtModel {
        leaves,
        config: *cfg,
        n_features: k,
        trimmed_branches: trimmed,
    })
}

fn push_leaf(
    leaves: &mut Vec<SgtLeaf>,
    trace: &mut Option<&mut Vec<TraceStep>>,
    node: Frontier,
    h: f64,
    y: &[f64],
    capped: bool,
) {
    let value = leaf_value(&node.weights, y);
    if let Some(t) = trace.as_deref_mut() {
        t.push(TraceStep {
            path: node.path.clone(),
            weights: node.weights.as_slice().to_vec(),
            herfindahl: h,
            action: TraceAction::Leaf { value, capped },
        });
    }
    leaves.push(SgtLeaf {
        path: node.path,
        value,
        train_h: h,
        capped,
    });
}

fn best_split(
    x: &FeatureMatrix,
    y: &[f64],
    sorted: &SortedColumns,
    w: &WeightVector,
    features: &[usize],
) -> Option<SplitResult> {
    let input = ScanInput {
        x,
        y,
        weights: EntryWeights::ByRow(w.as_slice()),
        min_side_count: 1,
    };
    scan_best_split(&input, |j| sorted.order(j), features)
}

impl SgtModel {
    fn raw_leaf_weights(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.leaves.iter().map(|leaf| {
            leaf.path
                .iter()
                .map(|f| f.factor(row[f.feature]))
                .product::<f64>()
        }));
    }

    /// Normalized membership of `row` in each leaf.
    pub fn leaf_membership_weights(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let mut w = Vec::with_capacity(self.leaves.len());
        self.raw_leaf_weights(row, &mut w);
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidData("point falls in no leaf".into()));
        }
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        check_features(self.n_features, x)?;
        let mut raw = Vec::with_capacity(self.leaves.len());
        (0..x.n_rows())
            .map(|i| {
                self.raw_leaf_weights(&x.row(i), &mut raw);
                let total: f64 = raw.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidData(format!("row {i} falls in no leaf")));
                }
                let acc: f64 = raw
                    .iter()
                    .zip(&self.leaves)
                    .map(|(w, leaf)| w * leaf.value)
                    .sum();
                Ok(acc / total)
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn max_depth(&self) -> usize {
        self.leaves.iter().map(|l| l.path.len()).max().unwrap_or(0)
    }
}

pub fn leaf_membership_weights(model: &SgtModel, row: &[f64]) -> Result<Vec<f64>> {
    model.leaf_membership_weights(row)
}

pub fn predict_sgt(model: &SgtModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}
