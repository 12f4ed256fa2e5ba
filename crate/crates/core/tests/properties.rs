//! Invariants checked on random inputs, each against an independent oracle
//! or a closed form.

mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;
use sgtree::cart::{fit_cart, to_basis_expansion, CartConfig};
use sgtree::ensembles::{fit_booging, fit_bt, fit_rf, BoogingConfig, BtConfig, RfConfig};
use sgtree::eval::{compute_metrics, loss_differential_test, oracle_r2, stars, TestKind};
use sgtree::lasso::{coordinate_descent, fit_lasso_at, objective, soft_threshold};
use sgtree::sgt::{child_weights, fit_sgt, PathFilter, SgtConfig, Side};
use sgtree::simlab::{friedman1, friedman2, friedman3, linear, scale_noise_to_r2};
use sgtree::splitcore::{find_best_split, WeightVector};
use sgtree::tabular::{make_folds, HoldoutPlan};
use sgtree::{Dataset, FeatureMatrix};

fn dataset_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 5usize..40, 1usize..4)
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn child_weights_stay_on_simplex(seed in any::<u64>(), n in 2usize..30, eta in 0.01f64..=1.0, leq in any::<bool>()) {
        let mut r = common::rng(seed);
        let x = common::random_matrix(&mut r, n, 2);
        let w = WeightVector::from_raw((0..n).map(|_| r.random::<f64>() + 1e-3).collect()).unwrap();
        let f = PathFilter { feature: 1, threshold: 0.5, kept_side: if leq { Side::Leq } else { Side::Gt }, eta_used: eta };
        match child_weights(&w, &f, &x) {
            Ok(c) => {
                let s: f64 = c.as_slice().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(c.as_slice().iter().all(|&v| v >= 0.0));
                // Kept rows gain relative to damped rows by exactly 1 / (1 - eta).
                for i in 0..n {
                    let expected = w.as_slice()[i] * if f.keeps(x.get(i, 1)) { 1.0 } else { 1.0 - eta };
                    let norm: f64 = (0..n).map(|j| w.as_slice()[j] * if f.keeps(x.get(j, 1)) { 1.0 } else { 1.0 - eta }).sum();
                    prop_assert!((c.as_slice()[i] - expected / norm).abs() < 1e-12);
                }
            }
            // Only possible when every row is damped to zero.
            Err(_) => prop_assert!(eta == 1.0 && (0..n).all(|i| !f.keeps(x.get(i, 1)))),
        }
    }

    #[test]
    fn sgt_predictions_are_convex_combinations((seed, n, k) in dataset_strategy(), eta in 0.05f64..=1.0, h_bar in 0.05f64..0.9) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n, k);
        let cfg = SgtConfig { max_leaves: 256, ..SgtConfig::new(eta, h_bar) };
        let model = fit_sgt(&d, &cfg).unwrap();
        let probe = common::random_matrix(&mut r, 20, k);
        let pred = model.predict(&probe).unwrap();
        let lo = model.leaves.iter().map(|l| l.value).fold(f64::INFINITY, f64::min);
        let hi = model.leaves.iter().map(|l| l.value).fold(f64::NEG_INFINITY, f64::max);
        let ylo = d.y().iter().copied().fold(f64::INFINITY, f64::min);
        let yhi = d.y().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, p) in pred.iter().enumerate() {
            prop_assert!(*p >= lo - 1e-9 && *p <= hi + 1e-9);
            prop_assert!(ylo - 1e-9 <= lo && hi <= yhi + 1e-9);
            let m = model.leaf_membership_weights(&probe.row(i)).unwrap();
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(m.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn best_split_matches_brute_force((seed, n, k) in dataset_strategy(), zero_share in 0.0f64..0.5) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n, k);
        let raw: Vec<f64> = (0..n).map(|_| if r.random::<f64>() < zero_share { 0.0 } else { r.random::<f64>() + 0.01 }).collect();
        prop_assume!(raw.iter().any(|&v| v > 0.0));
        let w = WeightVector::from_raw(raw).unwrap();
        let features: Vec<usize> = (0..k).collect();
        let got = find_best_split(d.x(), d.y(), &w, &features);
        let want = common::brute_force_split(d.x(), d.y(), w.as_slice(), &features);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(o)) => {
                let scale = o.parent_sse.max(1e-300);
                prop_assert!((g.weighted_sse - o.sse).abs() <= 1e-9 * scale, "sse {} vs {}", g.weighted_sse, o.sse);
                prop_assert!((g.parent_sse - o.parent_sse).abs() <= 1e-9 * scale);
                if (g.feature, g.threshold) != (o.feature, o.threshold) {
                    // Only acceptable as a tie.
                    prop_assert!((g.weighted_sse - o.sse).abs() <= 1e-10 * scale);
                }
            }
            (g, o) => {
                // Disagreement is only allowed when the gain sits at the noise floor.
                let gain = g.map(|s| s.parent_sse - s.weighted_sse).or(o.map(|s| s.parent_sse - s.sse)).unwrap();
                let parent = g.map(|s| s.parent_sse).or(o.map(|s| s.parent_sse)).unwrap();
                prop_assert!(gain <= 1e-10 * parent.max(1e-300), "{g:?} vs {o:?}");
            }
        }
    }

    #[test]
    fn holdout_is_a_partition(n in 2usize..500, f in 0.05f64..0.95, seed in any::<u64>(), temporal in any::<bool>()) {
        let plan = if temporal { HoldoutPlan::temporal(f) } else { HoldoutPlan::random(f, seed) };
        let Ok((train, test)) = plan.indices(n) else {
            let n_train = (f * n as f64).floor() as usize;
            prop_assert!(n_train == 0 || n_train >= n);
            return Ok(());
        };
        prop_assert_eq!(train.len(), (f * n as f64).floor() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        if temporal {
            prop_assert!(train.iter().max() < test.iter().min());
        }
        prop_assert_eq!(plan.indices(n).unwrap(), (train, test));
    }

    #[test]
    fn folds_partition_rows(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = make_folds(n, k, seed).unwrap();
        let mut seen = vec![0usize; n];
        for f in 0..k {
            let (train, valid) = folds.split(f);
            prop_assert_eq!(train.len() + valid.len(), n);
            for &i in &valid {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = folds.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn unrestricted_cart_interpolates((seed, n, k) in dataset_strategy()) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n, k);
        let tree = fit_cart(&d, &CartConfig::default()).unwrap();
        let pred = tree.predict(d.x()).unwrap();
        for (p, y) in pred.iter().zip(d.y()) {
            prop_assert!((p - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn cart_routing_matches_path_enumeration((seed, n, k) in dataset_strategy(), depth in 1usize..6) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n, k);
        let tree = fit_cart(&d, &CartConfig::with_max_depth(depth)).unwrap();
        prop_assert!(tree.depth() <= depth);
        let probe = common::random_matrix(&mut r, 30, k);
        let pred = tree.predict(&probe).unwrap();
        for (i, p) in pred.iter().enumerate() {
            prop_assert_eq!(*p, common::route_by_paths(&tree, &probe.row(i)));
        }
    }

    #[test]
    fn basis_expansions_agree_with_the_tree((seed, n, k) in dataset_strategy(), depth in 1usize..=2) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n, k);
        let tree = fit_cart(&d, &CartConfig::with_max_depth(depth)).unwrap();
        let Ok(basis) = to_basis_expansion(&tree) else {
            prop_assume!(false);
            unreachable!()
        };
        let probe = common::random_matrix(&mut r, 30, k);
        let pred = tree.predict(&probe).unwrap();
        for (i, p) in pred.iter().enumerate() {
            let row = probe.row(i);
            prop_assert!((basis.predict_theta(&row) - p).abs() <= 1e-12);
            prop_assert!((basis.predict_beta(&row) - p).abs() <= 1e-12);
        }
    }

    #[test]
    fn lasso_objective_never_increases((seed, n, k) in (any::<u64>(), 10usize..60, 1usize..6), ratio in 0.001f64..1.0) {
        let mut r = common::rng(seed);
        let cols: Vec<Vec<f64>> = (0..k).map(|_| standardized((0..n).map(|_| r.random::<f64>()).collect())).collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] * 2.0 + r.random::<f64>()).collect();
        let ym = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let lmax = cols.iter().map(|c| (c.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / n as f64).abs()).fold(0.0, f64::max);
        let lambda = ratio * lmax;
        let mut b = vec![0.0; k];
        let mut values = vec![objective(&cols, &yc, &b, lambda)];
        let mut record = |coef: &[f64]| values.push(objective(&cols, &yc, coef, lambda));
        coordinate_descent(&cols, &yc, lambda, &mut b, 1e-10, 1000, Some(&mut record)).unwrap();
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn metrics_are_bounded(seed in any::<u64>(), n in 5usize..80) {
        let mut r = common::rng(seed);
        let y: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let p: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 2.0).collect();
        let base = y.iter().sum::<f64>() / n as f64;
        let m = compute_metrics(&y, &p, base).unwrap();
        prop_assert!(m.r2.unwrap() <= 1.0);
        prop_assert!(m.rmse >= 0.0 && m.mae >= 0.0 && m.mae <= m.rmse + 1e-12);
        let e1: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        let e2: Vec<f64> = y.iter().map(|a| a - base).collect();
        for kind in [TestKind::PairedT, TestKind::DieboldMariano] {
            let t = loss_differential_test(&e1, &e2, kind, None).unwrap();
            prop_assert!((0.0..=1.0).contains(&t.p_value), "{}", t.p_value);
            let swapped = loss_differential_test(&e2, &e1, kind, None).unwrap();
            prop_assert!((t.statistic + swapped.statistic).abs() <= 1e-9 * t.statistic.abs().max(1.0));
            prop_assert!((t.p_value - swapped.p_value).abs() <= 1e-12);
        }
    }

    #[test]
    fn stars_depend_only_on_the_threshold_band(p in 0.0f64..=1.0) {
        let expected = match p {
            p if p < 0.01 => "***",
            p if p < 0.05 => "**",
            p if p < 0.10 => "*",
            _ => "",
        };
        prop_assert_eq!(stars(p), expected);
        prop_assert_eq!(stars(p), stars(p));
    }

    #[test]
    fn inactive_features_do_not_matter(x in prop::collection::vec(0.01f64..1.0, 10), perm_seed in any::<u64>()) {
        let mut shuffled = x.clone();
        let mut r = common::rng(perm_seed);
        for i in (6..10).rev() {
            let j = r.random_range(5..=i);
            shuffled.swap(i, j);
        }
        prop_assert_eq!(friedman1(&x), friedman1(&shuffled));
        prop_assert_eq!(linear(&x), linear(&shuffled));
        prop_assert_eq!(friedman2(&x), friedman2(&shuffled));
        prop_assert_eq!(friedman3(&x), friedman3(&shuffled));
        let mut bumped = x.clone();
        bumped[7] += 3.0;
        prop_assert_eq!(friedman1(&x), friedman1(&bumped));
    }

    #[test]
    fn predicting_the_truth_scores_one(seed in any::<u64>(), n in 2usize..100) {
        let mut r = common::rng(seed);
        let m: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        prop_assume!(m.iter().any(|&v| v != m[0]));
        prop_assert_eq!(oracle_r2(&m, &m).unwrap(), Some(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..config() })]

    #[test]
    fn forest_predictions_stay_within_training_range((seed, n, k) in dataset_strategy()) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n.max(10), k);
        let cfg = RfConfig { n_trees: 25, min_node_size: 2, seed, ..RfConfig::default() };
        let model = fit_rf(&d, &cfg).unwrap();
        let lo = d.y().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.y().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probe = common::random_matrix(&mut r, 40, k);
        for p in model.predict(&probe).unwrap() {
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
        }
    }

    #[test]
    fn booging_averages_its_bags((seed, n, k) in dataset_strategy()) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n.max(12), k);
        let cfg = BoogingConfig { n_bags: 6, bt: BtConfig { min_node_size: 2, ..BtConfig::new(0.25, 20) }, seed, ..BoogingConfig::default() };
        let model = fit_booging(&d, &cfg).unwrap();
        let probe = common::random_matrix(&mut r, 20, k);
        let pred = model.predict(&probe).unwrap();
        let xa = model.augmentation.apply(&probe).unwrap();
        let members: Vec<Vec<f64>> = model.bags.iter().map(|b| b.predict(&xa).unwrap()).collect();
        for (i, p) in pred.iter().enumerate() {
            let lo = members.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
            let hi = members.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*p >= lo - 1e-9 && *p <= hi + 1e-9);
            let mean = members.iter().map(|m| m[i]).sum::<f64>() / members.len() as f64;
            prop_assert!((p - mean).abs() <= 1e-9 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn full_sample_boosting_never_raises_training_sse((seed, n, k) in dataset_strategy(), nu in 0.01f64..=1.0, depth in 1usize..4) {
        let mut r = common::rng(seed);
        let d = common::random_dataset(&mut r, n.max(10), k);
        let cfg = BtConfig { nu, n_steps: 25, interaction_depth: depth, subsample_fraction: 1.0, min_node_size: 1, seed };
        let model = fit_bt(&d, &cfg).unwrap();
        let stages: Vec<usize> = (0..=25).collect();
        let fits = model.predict_stages(d.x(), &stages).unwrap();
        let sse = |p: &[f64]| p.iter().zip(d.y()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for w in fits.windows(2) {
            prop_assert!(sse(&w[1]) <= sse(&w[0]) * (1.0 + 1e-12) + 1e-12);
        }
    }
}

fn standardized(mut c: Vec<f64>) -> Vec<f64> {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    c.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    c
}

#[test]
fn one_boosting_stump_is_the_best_residual_split() {
    let mut r = common::rng(5);
    let d = common::random_dataset(&mut r, 40, 3);
    let nu = 0.3;
    let cfg = BtConfig {
        nu,
        n_steps: 1,
        interaction_depth: 1,
        subsample_fraction: 1.0,
        min_node_size: 1,
        seed: 0,
    };
    let model = fit_bt(&d, &cfg).unwrap();
    let mean = d.y().iter().sum::<f64>() / d.n() as f64;
    let resid: Vec<f64> = d.y().iter().map(|v| v - mean).collect();
    let w = vec![1.0 / d.n() as f64; d.n()];
    let s = common::brute_force_split(d.x(), &resid, &w, &[0, 1, 2]).unwrap();
    let side_mean = |left: bool| {
        let rows: Vec<usize> = (0..d.n())
            .filter(|&i| (d.x().get(i, s.feature) <= s.threshold) == left)
            .collect();
        rows.iter().map(|&i| resid[i]).sum::<f64>() / rows.len() as f64
    };
    let (ml, mr) = (side_mean(true), side_mean(false));
    let pred = model.predict(d.x()).unwrap();
    for (i, p) in pred.iter().enumerate() {
        let step = if d.x().get(i, s.feature) <= s.threshold {
            ml
        } else {
            mr
        };
        assert_abs_diff_eq!(*p, mean + nu * step, epsilon = 1e-12);
    }
}

#[test]
fn lasso_soft_thresholds_an_orthonormal_design() {
    // Walsh columns on 8 rows: zero mean, unit variance, mutually orthogonal.
    let walsh = |j: usize| -> Vec<f64> {
        (0..8usize)
            .map(|i| {
                if (i & j).count_ones().is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    };
    let cols: Vec<Vec<f64>> = [1, 2, 3, 4, 7].iter().map(|&j| walsh(j)).collect();
    let y = vec![3.0, -1.0, 2.5, 0.2, -2.0, 1.7, 0.4, -0.9];
    let d = Dataset::from_parts(
        FeatureMatrix::from_columns(cols.clone()).unwrap(),
        y.clone(),
    )
    .unwrap();
    let ym = y.iter().sum::<f64>() / 8.0;
    for lambda in [0.0, 0.1, 0.3, 0.6, 2.0] {
        let model = fit_lasso_at(&d, lambda, 1e-12, 1000).unwrap();
        for (c, b) in cols.iter().zip(&model.coefficients) {
            let z = c.iter().zip(&y).map(|(a, v)| a * (v - ym)).sum::<f64>() / 8.0;
            assert_abs_diff_eq!(*b, soft_threshold(z, lambda), epsilon = 1e-10);
        }
    }
}

#[test]
fn soft_threshold_closed_form() {
    assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
}

#[test]
fn calibrated_noise_hits_the_target_share() {
    let mut r = common::rng(99);
    let m: Vec<f64> = (0..100_000)
        .map(|_| friedman1(&(0..5).map(|_| r.random::<f64>()).collect::<Vec<_>>()))
        .collect();
    let var = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
    };
    for target in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
        let y = scale_noise_to_r2(&m, target, 7).unwrap();
        let share = var(&m) / var(&y);
        assert!((share - target).abs() < 0.01, "target {target}: {share}");
    }
}

#[test]
fn friedman1_at_the_centre() {
    // 10 sin(pi / 4) + 0 + 5 + 2.5
    assert_eq!(friedman1(&[0.5; 10]), 14.571067811865476);
}

#[test]
fn fits_do_not_depend_on_thread_count() {
    let mut r = common::rng(3);
    let d = common::random_dataset(&mut r, 60, 4);
    let fit_all = || {
        let rf = fit_rf(
            &d,
            &RfConfig {
                n_trees: 40,
                seed: 8,
                ..RfConfig::default()
            },
        )
        .unwrap();
        let bg = fit_booging(
            &d,
            &BoogingConfig {
                n_bags: 8,
                bt: BtConfig::new(0.25, 30),
                seed: 8,
                ..BoogingConfig::default()
            },
        )
        .unwrap();
        let sgt = fit_sgt(
            &d,
            &SgtConfig {
                seed: 8,
                ..SgtConfig::new(0.1, 0.25)
            },
        )
        .unwrap();
        (rf, bg, sgt)
    };
    let pool = |t| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
    };
    let one = pool(1).install(fit_all);
    let four = pool(4).install(fit_all);
    assert!(one == four);
}
