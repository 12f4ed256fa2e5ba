//! Weighted least-squares node statistics and exhaustive best-split search.
//!
//! A split `(feature, threshold)` sends rows with `x[feature] <= threshold`
//! left. Each side is scored by its weighted SSE around its own weighted
//! mean; the search returns the split minimizing the sum of both sides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::FeatureMatrix;

const SIMPLEX_TOL: f64 = 1e-12;
/// Minimum share of the node's total weight each side of a split must hold.
pub const MIN_SIDE_MASS: f64 = 1e-6;
/// Relative tolerance below which an SSE reduction does not count.
pub const MIN_IMPROVEMENT: f64 = 1e-12;
/// Relative tolerance under which two candidate SSEs are treated as tied.
const TIE_TOL: f64 = 1e-10;

/// Nonnegative per-observation weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Normalizes nonnegative raw weights onto the simplex.
    pub fn from_raw(mut raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidData("weights must be finite and >= 0".into()));
        }
        let total: f64 = raw.iter().sum();
        if total < 1e-12 {
            return Err(Error::InvalidData(format!(
                "total weight {total:e} is too small to normalize"
            )));
        }
        raw.iter_mut().for_each(|w| *w /= total);
        Ok(Self(raw))
    }

    /// Wraps weights that are already on the simplex.
    pub fn try_new(w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidData(format!(
                "weights are not on the simplex (sum {total})"
            )));
        }
        if !w.iter().any(|&v| v > 0.0) {
            return Err(Error::InvalidData("weights have empty support".into()));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Herfindahl concentration index `sum w_i^2`.
pub fn herfindahl(w: &WeightVector) -> f64 {
    w.0.iter().map(|v| v * v).sum()
}

/// Weighted mean and weighted SSE around it.
pub fn weighted_sse_stats(y: &[f64], w: &WeightVector) -> (f64, f64) {
    let mean: f64 = y.iter().zip(&w.0).map(|(y, w)| w * y).sum();
    let sse = y
        .iter()
        .zip(&w.0)
        .map(|(y, w)| w * (y - mean) * (y - mean))
        .sum();
    (mean, sse)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub feature: usize,
    pub threshold: f64,
    pub left_mean: f64,
    pub right_mean: f64,
    pub weighted_sse: f64,
    pub parent_sse: f64,
}

/// Row indices sorted by each feature's value (ties by row index).
#[derive(Debug, Clone)]
pub struct SortedColumns {
    orders: Vec<Vec<usize>>,
}

impl SortedColumns {
    pub fn new(x: &FeatureMatrix) -> Self {
        Self::for_rows(x, &(0..x.n_rows()).collect::<Vec<_>>())
    }

    /// Sorts an arbitrary row list (which may repeat rows) by every feature.
    pub fn for_rows(x: &FeatureMatrix, rows: &[usize]) -> Self {
        let orders = (0..x.n_cols())
            .map(|j| {
                let col = x.column(j);
                let mut order = rows.to_vec();
                order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                order
            })
            .collect();
        Self { orders }
    }

    /// Orders for the multiset holding row `i` `counts[i]` times, derived from
    /// orders over every row without re-sorting. Equal to `for_rows` on the
    /// same multiset.
    pub fn with_counts(&self, counts: &[u32]) -> Self {
        let orders = self
            .orders
            .iter()
            .map(|order| {
                let mut out = Vec::with_capacity(order.len());
                for &i in order {
                    for _ in 0..counts[i] {
                        out.push(i);
                    }
                }
                out
            })
            .collect();
        Self { orders }
    }

    pub(crate) fn into_orders(self) -> Vec<Vec<usize>> {
        self.orders
    }

    pub fn order(&self, feature: usize) -> &[usize] {
        &self.orders[feature]
    }

    pub fn orders_mut(&mut self) -> &mut [Vec<usize>] {
        &mut self.orders
    }
}

/// Per-entry weights for a split scan.
#[derive(Clone, Copy)]
pub(crate) enum EntryWeights<'a> {
    /// Every listed entry carries the same weight (CART nodes).
    Constant(f64),
    /// Weight looked up by row; zero-weight rows are skipped.
    ByRow(&'a [f64]),
}

impl EntryWeights<'_> {
    #[inline]
    fn get(&self, row: usize) -> f64 {
        match *self {
            EntryWeights::Constant(w) => w,
            EntryWeights::ByRow(w) => w[row],
        }
    }
}

pub(crate) struct ScanInput<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [f64],
    pub weights: EntryWeights<'a>,
    /// Minimum number of positive-weight entries on each side.
    pub min_side_count: usize,
}

/// Split search over entries presorted per feature. `orders(j)` must list the
/// node's entries sorted by feature `j`; every order lists the same multiset.
pub(crate) fn scan_best_split<'a>(
    input: &ScanInput<'_>,
    orders: impl Fn(usize) -> &'a [usize],
    features: &[usize],
) -> Option<SplitResult> {
    let first = features.first()?;
    let y = input.y;
    let entries = orders(*first);

    let mut total_w = 0.0;
    let mut total_wy = 0.0;
    let mut second = 0.0;
    let mut n_pos = 0usize;
    for &i in entries {
        let w = input.weights.get(i);
        if w > 0.0 {
            n_pos += 1;
            total_w += w;
            total_wy += w * y[i];
            second += w * y[i] * y[i];
        }
    }
    if total_w <= 0.0 || n_pos < 2 {
        return None;
    }
    let mean = total_wy / total_w;
    // Work with centered targets to limit cancellation.
    let mut raw_c2 = 0.0;
    let mut sum_c = 0.0;
    for &i in entries {
        let w = input.weights.get(i);
        if w > 0.0 {
            let c = y[i] - mean;
            raw_c2 += w * c * c;
            sum_c += w * c;
        }
    }
    let parent_sse = (raw_c2 - sum_c * sum_c / total_w).max(0.0);
    let min_mass = MIN_SIDE_MASS * total_w;
    let tie_tol = TIE_TOL * parent_sse.max(f64::MIN_POSITIVE);

    let mut sorted_features = features.to_vec();
    sorted_features.sort_unstable();
    sorted_features.dedup();

    // (feature, threshold, sse, left weighted centered sum, left weight)
    let mut best: Option<(usize, f64, f64, f64, f64)> = None;
    for &j in &sorted_features {
        let col = input.x.column(j);
        let mut wl = 0.0;
        let mut syl = 0.0;
        let mut s2l = 0.0;
        let mut count_l = 0usize;
        let mut prev: Option<usize> = None;
        for &i in orders(j) {
            let w = input.weights.get(i);
            if w <= 0.0 {
                continue;
            }
            if let Some(p) = prev {
                let (xa, xb) = (col[p], col[i]);
                let count_r = n_pos - count_l;
                let wr = total_w - wl;
                if xa < xb
                    && count_l >= input.min_side_count
                    && count_r >= input.min_side_count
                    && wl >= min_mass
                    && wr >= min_mass
                {
                    let syr = sum_c - syl;
                    let s2r = raw_c2 - s2l;
                    let sse = (s2l - syl * syl / wl).max(0.0) + (s2r - syr * syr / wr).max(0.0);
                    if best.is_none_or(|b| sse < b.2 - tie_tol) {
                        let mut threshold = 0.5 * (xa + xb);
                        if threshold >= xb {
                            threshold = xa;
                        }
                        best = Some((j, threshold, sse, syl, wl));
                    }
                }
            }
            let c = y[i] - mean;
            wl += w;
            syl += w * c;
            s2l += w * c * c;
            count_l += 1;
            prev = Some(i);
        }
    }

    let (feature, threshold, sse, syl, wl) = best?;
    let floor = (f64::EPSILON * second).max(parent_sse);
    if parent_sse - sse <= MIN_IMPROVEMENT * floor {
        return None;
    }
    let wr = total_w - wl;
    Some(SplitResult {
        feature,
        threshold,
        left_mean: mean + syl / wl,
        right_mean: mean + (sum_c - syl) / wr,
        weighted_sse: sse,
        parent_sse,
    })
}

/// Exhaustive best split under weights `w` among `candidate_features`.
///
/// Candidate thresholds are midpoints between consecutive distinct values of
/// the positive-weight observations. Ties go to the lowest feature index and
/// then the smallest threshold. Returns `None` when no split reduces the
/// weighted SSE.
pub fn find_best_split(
    x: &FeatureMatrix,
    y: &[f64],
    w: &WeightVector,
    candidate_features: &[usize],
) -> Option<SplitResult> {
    let support: Vec<usize> = (0..y.len()).filter(|&i| w.0[i] > 0.0).collect();
    let sorted = SortedColumns::for_rows(x, &support);
    let input = ScanInput {
        x,
        y,
        weights: EntryWeights::ByRow(&w.0),
        min_side_count: 1,
    };
    scan_best_split(&input, |j| sorted.order(j), candidate_features)
}
