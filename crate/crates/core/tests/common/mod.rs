//! Independent reference implementations used as test oracles. They favour
//! directness over speed: no presorting, no prefix sums, plain loops.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgtree::cart::{CartNode, CartTree};
use sgtree::{Dataset, FeatureMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform features and a noisy nonlinear target.
pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, k: usize) -> Dataset {
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| r.random::<f64>()).collect())
        .collect();
    let y = (0..n)
        .map(|i| {
            let x0 = cols[0][i];
            let x1 = cols[k.min(2) - 1][i];
            (3.0 * x0).sin() + 2.0 * x1 * x1 + 0.3 * r.random::<f64>()
        })
        .collect();
    Dataset::from_parts(FeatureMatrix::from_columns(cols).unwrap(), y).unwrap()
}

pub fn random_matrix(r: &mut ChaCha8Rng, n: usize, k: usize) -> FeatureMatrix {
    FeatureMatrix::from_columns(
        (0..k)
            .map(|_| (0..n).map(|_| r.random::<f64>()).collect())
            .collect(),
    )
    .unwrap()
}

/// Weighted SSE of `y` around its weighted mean over `rows`, by direct
/// summation.
pub fn weighted_sse(y: &[f64], w: &[f64], rows: &[usize]) -> (f64, f64) {
    let total: f64 = rows.iter().map(|&i| w[i]).sum();
    let mean = rows.iter().map(|&i| w[i] * y[i]).sum::<f64>() / total;
    let sse = rows.iter().map(|&i| w[i] * (y[i] - mean).powi(2)).sum();
    (total, sse)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSplit {
    pub feature: usize,
    pub threshold: f64,
    pub sse: f64,
    pub parent_sse: f64,
}

/// Exhaustive split search: every feature, every midpoint between distinct
/// positive-weight values, children scored by direct summation. Ties within
/// `1e-10` of the parent SSE keep the earliest (feature, threshold).
pub fn brute_force_split(
    x: &FeatureMatrix,
    y: &[f64],
    w: &[f64],
    features: &[usize],
) -> Option<OracleSplit> {
    let support: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
    if support.len() < 2 {
        return None;
    }
    let (total, parent_sse) = weighted_sse(y, w, &support);
    let second: f64 = support.iter().map(|&i| w[i] * y[i] * y[i]).sum();
    let tol = 1e-10 * parent_sse.max(f64::MIN_POSITIVE);
    let mut best: Option<OracleSplit> = None;
    let mut feats = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    for &j in &feats {
        let mut values: Vec<f64> = support.iter().map(|&i| x.get(i, j)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let mut c = 0.5 * (pair[0] + pair[1]);
            if c >= pair[1] {
                c = pair[0];
            }
            let left: Vec<usize> = support
                .iter()
                .copied()
                .filter(|&i| x.get(i, j) <= c)
                .collect();
            let right: Vec<usize> = support
                .iter()
                .copied()
                .filter(|&i| x.get(i, j) > c)
                .collect();
            let (wl, sl) = weighted_sse(y, w, &left);
            let (wr, sr) = weighted_sse(y, w, &right);
            if wl < 1e-6 * total || wr < 1e-6 * total {
                continue;
            }
            let sse = sl + sr;
            if best.is_none_or(|b| sse < b.sse - tol) {
                best = Some(OracleSplit {
                    feature: j,
                    threshold: c,
                    sse,
                    parent_sse,
                });
            }
        }
    }
    let b = best?;
    let floor = (f64::EPSILON * second).max(parent_sse);
    (parent_sse - b.sse > 1e-12 * floor).then_some(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleFilter {
    pub feature: usize,
    pub threshold: f64,
    pub keep_leq: bool,
    pub eta: f64,
}

impl OracleFilter {
    pub fn factor(&self, v: f64) -> f64 {
        if (v <= self.threshold) == self.keep_leq {
            1.0
        } else {
            1.0 - self.eta
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleEvent {
    Leaf {
        value: f64,
        capped: bool,
    },
    Split {
        feature: usize,
        threshold: f64,
        eta: f64,
        dead_leq: bool,
        dead_gt: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleStep {
    pub path: Vec<OracleFilter>,
    pub weights: Vec<f64>,
    pub h: f64,
    pub event: OracleEvent,
}

pub struct OracleSgt {
    pub leaves: Vec<(Vec<OracleFilter>, f64)>,
    pub steps: Vec<OracleStep>,
}

impl OracleSgt {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (path, value) in &self.leaves {
            let mut p = 1.0;
            for f in path {
                p *= f.factor(row[f.feature]);
            }
            num += p * value;
            den += p;
        }
        num / den
    }
}

/// Slow-growing tree with every feature eligible at every node, grown
/// breadth first. Children of a node are considered `<=` side first. A child
/// is dropped when its weights are uniform or it reverses a filter already on
/// its path. Growth stops at `h + 1e-12 >= h_bar`, at `depth_cap`, or when
/// expanding could exceed `max_leaves`.
pub fn oracle_sgt(
    d: &Dataset,
    eta_at: impl Fn(usize) -> f64,
    h_bar: f64,
    depth_cap: usize,
    max_leaves: usize,
) -> OracleSgt {
    let n = d.n();
    let y = d.y();
    let x = d.x();
    let features: Vec<usize> = (0..d.k()).collect();
    let mut leaves = Vec::new();
    let mut steps = Vec::new();
    let mut level: Vec<(Vec<f64>, Vec<OracleFilter>)> = vec![(vec![1.0 / n as f64; n], Vec::new())];
    while !level.is_empty() {
        let mut next = Vec::new();
        let count = level.len();
        for (pos, (w, path)) in level.into_iter().enumerate() {
            let remaining = count - pos - 1;
            let h: f64 = w.iter().map(|v| v * v).sum();
            let value: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
            let over = leaves.len() + next.len() + remaining + 2 > max_leaves;
            let leaf = |capped| OracleEvent::Leaf { value, capped };
            if h + 1e-12 >= h_bar {
                steps.push(OracleStep {
                    path: path.clone(),
                    weights: w.clone(),
                    h,
                    event: leaf(false),
                });
                leaves.push((path, value));
                continue;
            }
            if path.len() >= depth_cap || over {
                steps.push(OracleStep {
                    path: path.clone(),
                    weights: w.clone(),
                    h,
                    event: leaf(true),
                });
                leaves.push((path, value));
                continue;
            }
            let Some(split) = brute_force_split(x, y, &w, &features) else {
                steps.push(OracleStep {
                    path: path.clone(),
                    weights: w.clone(),
                    h,
                    event: leaf(false),
                });
                leaves.push((path, value));
                continue;
            };
            let eta = eta_at(path.len());
            let mut dead = [false, false];
            let mut children = Vec::new();
            for (side, keep_leq) in [true, false].into_iter().enumerate() {
                let f = OracleFilter {
                    feature: split.feature,
                    threshold: split.threshold,
                    keep_leq,
                    eta,
                };
                let raw: Vec<f64> = (0..n)
                    .map(|i| w[i] * f.factor(x.get(i, f.feature)))
                    .collect();
                let s: f64 = raw.iter().sum();
                let cw: Vec<f64> = raw.iter().map(|v| v / s).collect();
                let uniform = cw.iter().all(|v| (v - 1.0 / n as f64).abs() <= 1e-10);
                let reverses = path.iter().any(|p| {
                    p.feature == f.feature && p.threshold == f.threshold && p.keep_leq != keep_leq
                });
                if uniform || reverses {
                    dead[side] = true;
                    continue;
                }
                let mut p = path.clone();
                p.push(f);
                children.push((cw, p));
            }
            if children.is_empty() {
                steps.push(OracleStep {
                    path: path.clone(),
                    weights: w.clone(),
                    h,
                    event: leaf(false),
                });
                leaves.push((path, value));
                continue;
            }
            steps.push(OracleStep {
                path,
                weights: w,
                h,
                event: OracleEvent::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    eta,
                    dead_leq: dead[0],
                    dead_gt: dead[1],
                },
            });
            next.extend(children);
        }
        level = next;
    }
    OracleSgt { leaves, steps }
}

/// Routes a row by enumerating every root-to-leaf path and returning the
/// value of the unique path whose conditions all hold.
pub fn route_by_paths(tree: &CartTree, row: &[f64]) -> f64 {
    type Conds = Vec<(usize, f64, bool)>;
    fn collect(node: &CartNode, conds: &mut Conds, out: &mut Vec<(Conds, f64)>) {
        match node {
            CartNode::Leaf { value, .. } => out.push((conds.clone(), *value)),
            CartNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                conds.push((*feature, *threshold, true));
                collect(left, conds, out);
                conds.pop();
                conds.push((*feature, *threshold, false));
                collect(right, conds, out);
                conds.pop();
            }
        }
    }
    let mut paths = Vec::new();
    collect(&tree.root, &mut Vec::new(), &mut paths);
    let hits: Vec<f64> = paths
        .iter()
        .filter(|(conds, _)| conds.iter().all(|&(j, c, left)| (row[j] <= c) == left))
        .map(|(_, v)| *v)
        .collect();
    assert_eq!(hits.len(), 1, "row must match exactly one path");
    hits[0]
}
