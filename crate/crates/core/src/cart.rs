//! Hard-threshold regression trees.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, SeedRng};
use crate::splitcore::{scan_best_split, EntryWeights, ScanInput, SortedColumns};
use crate::tabular::{Dataset, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    /// `None` grows until another stopping rule binds.
    pub max_depth: Option<usize>,
    /// Minimum number of observations in each leaf.
    pub min_node_size: usize,
    /// Nodes with fewer observations than this are not split.
    pub min_split_size: usize,
    pub mtry_fraction: f64,
    pub seed: u64,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_node_size: 1,
            min_split_size: 2,
            mtry_fraction: 1.0,
            seed: 0,
        }
    }
}

impl CartConfig {
    pub fn with_max_depth(depth: usize) -> Self {
        Self {
            max_depth: Some(depth),
            ..Self::default()
        }
    }

    /// The stopping rule a slow-growing tree with learning rate 1 applies
    /// under `h_bar`: a node of `n` members has `H = 1/n`, so it is split
    /// only while `n > 1/h_bar`.
    pub fn matching_h_bar(h_bar: f64) -> Self {
        let max_leaf = (1.0 / h_bar + 1e-9).floor() as usize;
        Self {
            min_split_size: max_leaf + 1,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.min_node_size == 0 {
            return Err(Error::InvalidConfig("min_node_size must be >= 1".into()));
        }
        if self.min_node_size > n {
            return Err(Error::InvalidConfig(format!(
                "min_node_size {} exceeds N={n}",
                self.min_node_size
            )));
        }
        if !(self.mtry_fraction > 0.0 && self.mtry_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "mtry_fraction {} is outside (0, 1]",
                self.mtry_fraction
            )));
        }
        Ok(())
    }
}

/// Number of features drawn per split for a given fraction.
pub fn mtry_count(fraction: f64, k: usize) -> usize {
    ((fraction * k as f64 - 1e-9).ceil() as usize).clamp(1, k)
}

/// Candidate features for one split attempt, ascending. Consumes no
/// randomness when every feature is eligible.
pub(crate) fn draw_features(rng: &mut SeedRng, k: usize, m: usize) -> Vec<usize> {
    if m >= k {
        return (0..k).collect();
    }
    let mut f = index::sample(rng, k, m).into_vec();
    f.sort_unstable();
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CartNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
}

impl CartNode {
    pub fn leaf(value: f64) -> Self {
        CartNode::Leaf { value, n: 0 }
    }

    pub fn split(feature: usize, threshold: f64, left: CartNode, right: CartNode) -> Self {
        CartNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn route(&self, x: &FeatureMatrix, row: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                CartNode::Leaf { value, .. } => return *value,
                CartNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x.get(row, *feature) <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 0,
            CartNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn collect_leaves(&self, out: &mut Vec<f64>) {
        match self {
            CartNode::Leaf { value, .. } => out.push(*value),
            CartNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            CartNode::Leaf { .. } => None,
            CartNode::Split {
                feature,
                left,
                right,
                ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    pub root: CartNode,
    pub n_features: usize,
}

impl CartTree {
    pub fn new(root: CartNode, n_features: usize) -> Result<Self> {
        if root.max_feature().is_some_and(|f| f >= n_features) {
            return Err(Error::InvalidData(
                "tree splits on a feature beyond n_features".into(),
            ));
        }
        Ok(Self { root, n_features })
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Leaf values in left-to-right order.
    pub fn leaf_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_values().len()
    }

    pub(crate) fn predict_row(&self, x: &FeatureMatrix, row: usize) -> f64 {
        self.root.route(x, row)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        check_features(self.n_features, x)?;
        Ok((0..x.n_rows()).map(|i| self.predict_row(x, i)).collect())
    }
}

pub(crate) fn check_features(expected: usize, x: &FeatureMatrix) -> Result<()> {
    if x.n_cols() != expected {
        return Err(Error::FeatureMismatch {
            expected,
            got: x.n_cols(),
        });
    }
    Ok(())
}

/// Fits a tree on every row of `train`.
pub fn fit_cart(train: &Dataset, cfg: &CartConfig) -> Result<CartTree> {
    train.check_learner_input()?;
    cfg.validate(train.n())?;
    let rows: Vec<usize> = (0..train.n()).collect();
    let mut rng = seed::rng(cfg.seed);
    Ok(grow_cart(train.x(), train.y(), &rows, cfg, &mut rng))
}

pub fn predict_cart(tree: &CartTree, x: &FeatureMatrix) -> Result<Vec<f64>> {
    tree.predict(x)
}

/// Grows a tree on the multiset `rows` (rows may repeat, as in a bootstrap
/// sample) against targets `y`.
pub(crate) fn grow_cart(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    cfg: &CartConfig,
    rng: &mut SeedRng,
) -> CartTree {
    grow_cart_sorted(x, y, SortedColumns::for_rows(x, rows), cfg, rng)
}

/// Like [`grow_cart`] with the row multiset already sorted per feature.
pub(crate) fn grow_cart_sorted(
    x: &FeatureMatrix,
    y: &[f64],
    orders: SortedColumns,
    cfg: &CartConfig,
    rng: &mut SeedRng,
) -> CartTree {
    let k = x.n_cols();
    let mut orders = orders.into_orders();
    let len = orders.first().map_or(0, Vec::len);
    let mut grower = Grower {
        x,
        y,
        cfg,
        mtry: mtry_count(cfg.mtry_fraction, k),
        goes_left: vec![false; x.n_rows()],
        scratch: Vec::with_capacity(len),
        rng,
    };
    let root = grower.grow(&mut orders, 0, len, 0);
    CartTree {
        root,
        n_features: k,
    }
}

struct Grower<'a, 'r> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    cfg: &'a CartConfig,
    mtry: usize,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    rng: &'r mut SeedRng,
}

impl Grower<'_, '_> {
    /// Grows the node whose entries sit at `lo..hi` of every per-feature
    /// order. Children are laid out in place by a stable partition.
    fn grow(&mut self, orders: &mut [Vec<usize>], lo: usize, hi: usize, depth: usize) -> CartNode {
        let n = hi - lo;
        let value = orders[0][lo..hi].iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let leaf = CartNode::Leaf { value, n };
        if n < self.cfg.min_split_size.max(2)
            || n < 2 * self.cfg.min_node_size
            || self.cfg.max_depth.is_some_and(|d| depth >= d)
        {
            return leaf;
        }
        let features = draw_features(self.rng, self.x.n_cols(), self.mtry);
        let input = ScanInput {
            x: self.x,
            y: self.y,
            weights: EntryWeights::Constant(1.0 / n as f64),
            min_side_count: self.cfg.min_node_size,
        };
        let Some(split) = scan_best_split(&input, |j| &orders[j][lo..hi], &features) else {
            return leaf;
        };

        let col = self.x.column(split.feature);
        for &i in &orders[0][lo..hi] {
            self.goes_left[i] = col[i] <= split.threshold;
        }
        let mut mid = lo;
        for order in orders.iter_mut() {
            let part = &mut order[lo..hi];
            self.scratch.clear();
            let mut w = 0;
            for r in 0..part.len() {
                let i = part[r];
                if self.goes_left[i] {
                    part[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            part[w..].copy_from_slice(&self.scratch);
            mid = lo + w;
        }
        let l = self.grow(orders, lo, mid, depth + 1);
        let r = self.grow(orders, mid, hi, depth + 1);
        CartNode::split(split.feature, split.threshold, l, r)
    }
}

/// Threshold split used by the additive-basis view of a tree: `d+ = 1{x > c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSplit {
    pub feature: usize,
    pub threshold: f64,
}

impl BasisSplit {
    fn plus(&self, row: &[f64]) -> f64 {
        if row[self.feature] > self.threshold {
            1.0
        } else {
            0.0
        }
    }
}

/// A depth-1 or symmetric depth-2 tree written as an additive model over
/// products of split indicators.
///
/// With root split `x`, right-side split `z` (leaves `alpha1` for `z > c`,
/// `alpha2` otherwise) and left-side split `q` (leaves `gamma1`, `gamma2`):
///
/// * `theta` weights `(d_x+ d_z+, d_x+ d_z-, d_x- d_q+, d_x- d_q-)`
/// * `beta` weights `(d_x+, d_x+ d_z+, d_x-, d_x- d_q+)`
///
/// A depth-1 tree is the sub-case where each side's leaves coincide; the
/// missing sub-split indicators are then taken as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisExpansion {
    pub root: BasisSplit,
    pub right: Option<BasisSplit>,
    pub left: Option<BasisSplit>,
    pub theta: [f64; 4],
    pub beta: [f64; 4],
}

impl BasisExpansion {
    pub fn from_leaf_means(
        root: BasisSplit,
        right: Option<BasisSplit>,
        left: Option<BasisSplit>,
        alpha: (f64, f64),
        gamma: (f64, f64),
    ) -> Self {
        let (a1, a2) = alpha;
        let (g1, g2) = gamma;
        Self {
            root,
            right,
            left,
            theta: [a1, a2, g1, g2],
            beta: [a2, a1 - a2, g2, g1 - g2],
        }
    }

    fn indicators(&self, row: &[f64]) -> (f64, f64, f64) {
        let dx = self.root.plus(row);
        let dz = self.right.map_or(1.0, |s| s.plus(row));
        let dq = self.left.map_or(1.0, |s| s.plus(row));
        (dx, dz, dq)
    }

    pub fn predict_theta(&self, row: &[f64]) -> f64 {
        let (dx, dz, dq) = self.indicators(row);
        let t = &self.theta;
        t[0] * dx * dz
            + t[1] * dx * (1.0 - dz)
            + t[2] * (1.0 - dx) * dq
            + t[3] * (1.0 - dx) * (1.0 - dq)
    }

    pub fn predict_beta(&self, row: &[f64]) -> f64 {
        let (dx, dz, dq) = self.indicators(row);
        let b = &self.beta;
        b[0] * dx + b[1] * dx * dz + b[2] * (1.0 - dx) + b[3] * (1.0 - dx) * dq
    }
}

pub fn to_basis_expansion(tree: &CartTree) -> Result<BasisExpansion> {
    let CartNode::Split {
        feature,
        threshold,
        left,
        right,
    } = &tree.root
    else {
        return Err(Error::NotBasisExpandable);
    };
    let root = BasisSplit {
        feature: *feature,
        threshold: *threshold,
    };
    // Returns (sub-split, value above threshold, value at or below threshold).
    fn side(node: &CartNode) -> Option<(Option<BasisSplit>, f64, f64)> {
        match node {
            CartNode::Leaf { value, .. } => Some((None, *value, *value)),
            CartNode::Split {
                feature,
                threshold,
                left,
                right,
            } => match (left.as_ref(), right.as_ref()) {
                (CartNode::Leaf { value: lo, .. }, CartNode::Leaf { value: hi, .. }) => Some((
                    Some(BasisSplit {
                        feature: *feature,
                        threshold: *threshold,
                    }),
                    *hi,
                    *lo,
                )),
                _ => None,
            },
        }
    }
    let (right_split, a1, a2) = side(right).ok_or(Error::NotBasisExpandable)?;
    let (left_split, g1, g2) = side(left).ok_or(Error::NotBasisExpandable)?;
    if right_split.is_some() != left_split.is_some() {
        return Err(Error::NotBasisExpandable);
    }
    Ok(BasisExpansion::from_leaf_means(
        root,
        right_split,
        left_split,
        (a1, a2),
        (g1, g2),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::FeatureMatrix;
    use rand::{Rng, SeedableRng};

    fn step_data() -> Dataset {
        let x = FeatureMatrix::from_columns(vec![vec![1., 2., 3., 4.]]).unwrap();
        Dataset::from_parts(x, vec![0., 0., 1., 1.]).unwrap()
    }

    fn random_data(n: usize, k: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = (0..n).map(|_| rng.random::<f64>()).collect();
        Dataset::from_parts(FeatureMatrix::from_columns(cols).unwrap(), y).unwrap()
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let x = FeatureMatrix::from_columns(vec![vec![1., 2., 3.]]).unwrap();
        let d = Dataset::from_parts(x.clone(), vec![4.; 3]).unwrap();
        let t = fit_cart(&d, &CartConfig::default()).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict(&x).unwrap(), vec![4.; 3]);
    }

    #[test]
    fn separable_step_gives_stump() {
        let t = fit_cart(&step_data(), &CartConfig::default()).unwrap();
        assert_eq!(t.depth(), 1);
        match &t.root {
            CartNode::Split { threshold, .. } => assert_eq!(*threshold, 2.5),
            _ => panic!(),
        }
        let probe = FeatureMatrix::from_columns(vec![vec![2.4, 2.6]]).unwrap();
        assert_eq!(t.predict(&probe).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn full_tree_interpolates_distinct_inputs() {
        let d = random_data(30, 4, 11);
        let t = fit_cart(&d, &CartConfig::default()).unwrap();
        let p = t.predict(d.x()).unwrap();
        for (a, b) in p.iter().zip(d.y()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn routing_matches_path_enumeration() {
        let d = random_data(60, 3, 5);
        let t = fit_cart(&d, &CartConfig::default()).unwrap();
        // Oracle: enumerate each leaf as a conjunction of constraints.
        type Conds = Vec<(usize, f64, bool)>;
        fn paths(node: &CartNode, acc: &mut Conds, out: &mut Vec<(Conds, f64)>) {
            match node {
                CartNode::Leaf { value, .. } => out.push((acc.clone(), *value)),
                CartNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    acc.push((*feature, *threshold, true));
                    paths(left, acc, out);
                    acc.pop();
                    acc.push((*feature, *threshold, false));
                    paths(right, acc, out);
                    acc.pop();
                }
            }
        }
        let mut leaves = Vec::new();
        paths(&t.root, &mut Vec::new(), &mut leaves);
        let probe = random_data(100, 3, 99);
        let pred = t.predict(probe.x()).unwrap();
        for (i, p) in pred.iter().enumerate() {
            let row = probe.x().row(i);
            let hits: Vec<f64> = leaves
                .iter()
                .filter(|(c, _)| c.iter().all(|&(f, th, leq)| (row[f] <= th) == leq))
                .map(|(_, v)| *v)
                .collect();
            assert_eq!(hits, vec![*p]);
        }
    }

    #[test]
    fn each_split_reduces_sse() {
        let d = random_data(40, 3, 8);
        let t = fit_cart(
            &d,
            &CartConfig {
                max_depth: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let sse = |tree: &CartTree| -> f64 {
            let p = tree.predict(d.x()).unwrap();
            p.iter().zip(d.y()).map(|(a, b)| (a - b).powi(2)).sum()
        };
        let mut prev = f64::INFINITY;
        for depth in 0..=3 {
            let t = fit_cart(
                &d,
                &CartConfig {
                    max_depth: Some(depth),
                    ..Default::default()
                },
            )
            .unwrap();
            let s = sse(&t);
            assert!(s < prev);
            prev = s;
        }
        assert!((sse(&t) - prev).abs() < 1e-12);
    }

    #[test]
    fn min_node_size_respected() {
        let d = random_data(50, 3, 3);
        let t = fit_cart(
            &d,
            &CartConfig {
                min_node_size: 7,
                ..Default::default()
            },
        )
        .unwrap();
        fn sizes(n: &CartNode, out: &mut Vec<usize>) {
            match n {
                CartNode::Leaf { n, .. } => out.push(*n),
                CartNode::Split { left, right, .. } => {
                    sizes(left, out);
                    sizes(right, out);
                }
            }
        }
        let mut s = Vec::new();
        sizes(&t.root, &mut s);
        assert!(s.iter().all(|&n| n >= 7));
        assert_eq!(s.iter().sum::<usize>(), 50);
        assert!(fit_cart(
            &d,
            &CartConfig {
                min_node_size: 51,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn full_mtry_ignores_seed() {
        let d = random_data(40, 4, 1);
        let a = fit_cart(
            &d,
            &CartConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = fit_cart(
            &d,
            &CartConfig {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mtry_count_rounding() {
        assert_eq!(mtry_count(0.3, 10), 3);
        assert_eq!(mtry_count(0.75, 10), 8);
        assert_eq!(mtry_count(0.01, 10), 1);
        assert_eq!(mtry_count(1.0, 10), 10);
    }

    #[test]
    fn basis_expansion_examples() {
        let root = BasisSplit {
            feature: 0,
            threshold: 0.0,
        };
        let z = Some(BasisSplit {
            feature: 1,
            threshold: 0.0,
        });
        let q = Some(BasisSplit {
            feature: 2,
            threshold: 0.0,
        });
        let b = BasisExpansion::from_leaf_means(root, z, q, (3.0, 1.0), (-2.0, 0.0));
        assert_eq!(b.beta, [1.0, 2.0, 0.0, -2.0]);
        let c = 1.5;
        let b = BasisExpansion::from_leaf_means(root, z, q, (c, c), (c, c));
        assert_eq!(b.beta, [c, 0.0, c, 0.0]);
        for row in [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0],
            [-1.0, 1.0, 1.0],
            [-1.0, 1.0, -1.0],
        ] {
            assert_eq!(b.predict_theta(&row), c);
        }
    }

    #[test]
    fn basis_expansion_rejects_deep_or_asymmetric() {
        let deep = CartTree::new(
            CartNode::split(
                0,
                0.0,
                CartNode::split(
                    0,
                    -1.0,
                    CartNode::split(0, -2.0, CartNode::leaf(1.), CartNode::leaf(2.)),
                    CartNode::leaf(3.),
                ),
                CartNode::split(0, 1.0, CartNode::leaf(4.), CartNode::leaf(5.)),
            ),
            1,
        )
        .unwrap();
        assert!(to_basis_expansion(&deep).is_err());
        let asym = CartTree::new(
            CartNode::split(
                0,
                0.0,
                CartNode::leaf(1.),
                CartNode::split(0, 1.0, CartNode::leaf(4.), CartNode::leaf(5.)),
            ),
            1,
        )
        .unwrap();
        assert!(to_basis_expansion(&asym).is_err());
        let stump = CartTree::new(
            CartNode::split(0, 0.0, CartNode::leaf(1.), CartNode::leaf(2.)),
            1,
        )
        .unwrap();
        let b = to_basis_expansion(&stump).unwrap();
        assert_eq!(b.predict_beta(&[1.0]), 2.0);
        assert_eq!(b.predict_beta(&[-1.0]), 1.0);
        assert_eq!(b.predict_theta(&[-1.0]), 1.0);
    }
}
