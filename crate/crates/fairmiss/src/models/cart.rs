//! CART decision tree with Gini-impurity splits and surrogate splitting for
//! missing values.
//!
//! Split quality at a node is evaluated over the rows where the candidate
//! attribute is observed; rows with a masked primary attribute are routed by
//! surrogates in agreement order, then by the default direction. A surrogate
//! is kept only when it beats blindly sending co-observed rows to the
//! majority side.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_class, Binding, FeatureValue};
use crate::dataset::{ColumnKind, Dataset};
use crate::seeding::derive_seed;

/// What to do at prediction time when a node's primary attribute is masked
/// and no surrogate resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Surrogates in agreement order, then the default direction.
    Surrogate,
    /// A uniformly random child, deterministic in the model seed and row.
    RandomChild,
    /// Descend both children and aggregate leaf distributions weighted by
    /// training-row counts.
    WeightedAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: usize,
    /// Minimum number of rows at a node for a split to be attempted.
    pub min_split: usize,
    /// Minimum impurity improvement, as a fraction of the root risk.
    pub complexity: f64,
    pub max_surrogates: usize,
    pub use_surrogates: bool,
    pub missing_policy: MissingPolicy,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: 30,
            min_split: 20,
            complexity: 0.01,
            max_surrogates: 5,
            use_surrogates: true,
            missing_policy: MissingPolicy::Surrogate,
        }
    }
}

/// A split condition; rows satisfying it go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum SplitTest {
    NumericLe { feature: usize, threshold: f64 },
    CategoryEq { feature: usize, category: usize },
}

impl SplitTest {
    pub fn feature(&self) -> usize {
        match *self {
            SplitTest::NumericLe { feature, .. } | SplitTest::CategoryEq { feature, .. } => feature,
        }
    }

    /// Evaluate against a model-space feature value; `None` when masked.
    fn eval(&self, value: &FeatureValue) -> Option<bool> {
        match (self, value) {
            (_, FeatureValue::Missing) => None,
            (SplitTest::NumericLe { threshold, .. }, FeatureValue::Numeric(x)) => {
                Some(*x <= *threshold)
            }
            (SplitTest::CategoryEq { category, .. }, FeatureValue::Category(c)) => {
                Some(*c == *category as i64)
            }
            _ => None,
        }
    }
}

/// A backup split with its agreement score; `flip` reverses its sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub test: SplitTest,
    pub agreement: f64,
    pub flip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        /// Class distribution over C, summing to 1.
        dist: Vec<f64>,
        n: usize,
    },
    Internal {
        test: SplitTest,
        surrogates: Vec<Surrogate>,
        default_left: bool,
        /// Risk decrease of this split in count-weighted Gini units.
        improvement: f64,
        n: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn n(&self) -> usize {
        match self {
            TreeNode::Leaf { n, .. } | TreeNode::Internal { n, .. } => *n,
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// Count-weighted Gini risk: `n - sum_c count_c^2 / n`.
fn risk(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    n as f64 - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

struct FitContext<'a> {
    train: &'a Dataset,
    /// Dataset column index per model feature.
    feature_cols: Vec<usize>,
    labels: Vec<u32>,
    n_classes: usize,
    params: &'a CartParams,
    root_risk: f64,
    mtry: Option<usize>,
    rng: ChaCha8Rng,
}

/// Grow a tree. `mtry` restricts each node's split search to a random
/// feature subset (used by forests); the seed only matters when it is set.
pub(crate) fn fit_tree(
    train: &Dataset,
    params: &CartParams,
    mtry: Option<usize>,
    seed: u64,
) -> TreeNode {
    fit_tree_on_rows(
        train,
        params,
        mtry,
        seed,
        (0..train.n_rows() as u32).collect(),
    )
}

pub(crate) fn fit_tree_on_rows(
    train: &Dataset,
    params: &CartParams,
    mtry: Option<usize>,
    seed: u64,
    rows: Vec<u32>,
) -> TreeNode {
    let label = train.label().expect("label checked by caller");
    let n_classes = label.categories().map_or(0, <[String]>::len);
    let labels: Vec<u32> = (0..train.n_rows())
        .map(|r| label.code(r).expect("label observed"))
        .collect();
    let mut root_counts = vec![0u64; n_classes];
    for &r in &rows {
        root_counts[labels[r as usize] as usize] += 1;
    }
    let mut ctx = FitContext {
        train,
        feature_cols: train.feature_indices(),
        labels,
        n_classes,
        params,
        root_risk: risk(&root_counts),
        mtry,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    grow(&mut ctx, rows, 0)
}

fn class_counts(ctx: &FitContext, rows: &[u32]) -> Vec<u64> {
    let mut counts = vec![0u64; ctx.n_classes];
    for &r in rows {
        counts[ctx.labels[r as usize] as usize] += 1;
    }
    counts
}

fn leaf(ctx: &FitContext, rows: &[u32]) -> TreeNode {
    let counts = class_counts(ctx, rows);
    let n: u64 = counts.iter().sum();
    TreeNode::Leaf {
        dist: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        n: rows.len(),
    }
}

/// Model-space value of `feature` for training row `r`; `None` if masked.
fn train_value(ctx: &FitContext, feature: usize, r: u32) -> Option<FeatureValue> {
    let col = &ctx.train.columns()[ctx.feature_cols[feature]];
    if col.is_missing(r as usize) {
        return None;
    }
    Some(match col.kind() {
        ColumnKind::Numeric => FeatureValue::Numeric(col.numeric(r as usize).unwrap()),
        ColumnKind::Categorical => FeatureValue::Category(col.code(r as usize).unwrap() as i64),
    })
}

struct BestSplit {
    test: SplitTest,
    improvement: f64,
}

/// Best split of `feature` over its observed rows at this node.
fn best_split_for_feature(ctx: &FitContext, rows: &[u32], feature: usize) -> Option<BestSplit> {
    let col = &ctx.train.columns()[ctx.feature_cols[feature]];
    match col.kind() {
        ColumnKind::Numeric => {
            let mut pairs: Vec<(f64, u32)> = rows
                .iter()
                .filter_map(|&r| {
                    col.numeric(r as usize)
                        .map(|v| (v, ctx.labels[r as usize]))
                })
                .collect();
            if pairs.len() < 2 {
                return None;
            }
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut total = vec![0u64; ctx.n_classes];
            for &(_, c) in &pairs {
                total[c as usize] += 1;
            }
            let parent_risk = risk(&total);
            let mut left = vec![0u64; ctx.n_classes];
            let mut best: Option<BestSplit> = None;
            for i in 0..pairs.len() - 1 {
                left[pairs[i].1 as usize] += 1;
                if pairs[i + 1].0 <= pairs[i].0 {
                    continue; // not a boundary between distinct values
                }
                let right: Vec<u64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let improvement = parent_risk - risk(&left) - risk(&right);
                if best.as_ref().is_none_or(|b| improvement > b.improvement) {
                    best = Some(BestSplit {
                        test: SplitTest::NumericLe {
                            feature,
                            threshold: (pairs[i].0 + pairs[i + 1].0) / 2.0,
                        },
                        improvement,
                    });
                }
            }
            best
        }
        ColumnKind::Categorical => {
            let k = col.categories().map_or(0, <[String]>::len);
            let mut per_cat = vec![vec![0u64; ctx.n_classes]; k];
            let mut total = vec![0u64; ctx.n_classes];
            let mut observed = 0u64;
            for &r in rows {
                if let Some(code) = col.code(r as usize) {
                    per_cat[code as usize][ctx.labels[r as usize] as usize] += 1;
                    total[ctx.labels[r as usize] as usize] += 1;
                    observed += 1;
                }
            }
            if observed < 2 {
                return None;
            }
            let parent_risk = risk(&total);
            let mut best: Option<BestSplit> = None;
            // One-vs-rest: rows equal to the category go left.
            for (cat, counts) in per_cat.iter().enumerate() {
                let cat_n: u64 = counts.iter().sum();
                if cat_n == 0 || cat_n == observed {
                    continue;
                }
                let rest: Vec<u64> = total.iter().zip(counts).map(|(t, c)| t - c).collect();
                let improvement = parent_risk - risk(counts) - risk(&rest);
                if best.as_ref().is_none_or(|b| improvement > b.improvement) {
                    best = Some(BestSplit {
                        test: SplitTest::CategoryEq { feature, category: cat },
                        improvement,
                    });
                }
            }
            best
        }
    }
}

/// Surrogates for `primary` at this node, ordered by non-increasing
/// agreement over co-observed rows.
fn find_surrogates(ctx: &mut FitContext, rows: &[u32], primary: &SplitTest) -> Vec<Surrogate> {
    // Primary routing of the rows where the primary attribute is observed.
    let routed: Vec<(u32, bool)> = rows
        .iter()
        .filter_map(|&r| {
            train_value(ctx, primary.feature(), r)
                .and_then(|v| primary.eval(&v))
                .map(|side| (r, side))
        })
        .collect();
    if routed.is_empty() {
        return Vec::new();
    }
    let mut surrogates: Vec<Surrogate> = Vec::new();
    for feature in 0..ctx.feature_cols.len() {
        if feature == primary.feature() {
            continue;
        }
        let col = &ctx.train.columns()[ctx.feature_cols[feature]];
        // Co-observed rows with their primary side.
        let co: Vec<(u32, bool)> = routed
            .iter()
            .filter(|&&(r, _)| !col.is_missing(r as usize))
            .copied()
            .collect();
        if co.len() < 2 {
            continue;
        }
        let left_total = co.iter().filter(|&&(_, l)| l).count() as u64;
        let right_total = co.len() as u64 - left_total;
        let baseline = left_total.max(right_total);
        let candidate = match col.kind() {
            ColumnKind::Numeric => {
                let mut pairs: Vec<(f64, bool)> = co
                    .iter()
                    .map(|&(r, side)| (col.numeric(r as usize).unwrap(), side))
                    .collect();
                pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                let mut pref_left = 0u64;
                let mut best: Option<(u64, SplitTest, bool)> = None;
                for i in 0..pairs.len() - 1 {
                    if pairs[i].1 {
                        pref_left += 1;
                    }
                    if pairs[i + 1].0 <= pairs[i].0 {
                        continue;
                    }
                    let taken = (i + 1) as u64;
                    // Surrogate-left = first taken rows.
                    let matches = pref_left + (right_total - (taken - pref_left));
                    let (m, flip) = if matches * 2 >= co.len() as u64 {
                        (matches, false)
                    } else {
                        (co.len() as u64 - matches, true)
                    };
                    if best.as_ref().is_none_or(|b| m > b.0) {
                        best = Some((
                            m,
                            SplitTest::NumericLe {
                                feature,
                                threshold: (pairs[i].0 + pairs[i + 1].0) / 2.0,
                            },
                            flip,
                        ));
                    }
                }
                best
            }
            ColumnKind::Categorical => {
                let k = col.categories().map_or(0, <[String]>::len);
                let mut cat_n = vec![0u64; k];
                let mut cat_left = vec![0u64; k];
                for &(r, side) in &co {
                    let code = col.code(r as usize).unwrap() as usize;
                    cat_n[code] += 1;
                    if side {
                        cat_left[code] += 1;
                    }
                }
                let mut best: Option<(u64, SplitTest, bool)> = None;
                for cat in 0..k {
                    if cat_n[cat] == 0 || cat_n[cat] == co.len() as u64 {
                        continue;
                    }
                    let matches =
                        cat_left[cat] + (right_total - (cat_n[cat] - cat_left[cat]));
                    let (m, flip) = if matches * 2 >= co.len() as u64 {
                        (matches, false)
                    } else {
                        (co.len() as u64 - matches, true)
                    };
                    if best.as_ref().is_none_or(|b| m > b.0) {
                        best = Some((m, SplitTest::CategoryEq { feature, category: cat }, flip));
                    }
                }
                best
            }
        };
        if let Some((matches, test, flip)) = candidate {
            if matches > baseline {
                surrogates.push(Surrogate {
                    test,
                    agreement: matches as f64 / co.len() as f64,
                    flip,
                });
            }
        }
    }
    surrogates.sort_by(|a, b| {
        b.agreement
            .total_cmp(&a.agreement)
            .then(a.test.feature().cmp(&b.test.feature()))
    });
    surrogates.truncate(ctx.params.max_surrogates);
    surrogates
}

fn grow(ctx: &mut FitContext, rows: Vec<u32>, depth: usize) -> TreeNode {
    let counts = class_counts(ctx, &rows);
    let node_risk = risk(&counts);
    if depth >= ctx.params.max_depth
        || rows.len() < ctx.params.min_split
        || node_risk <= 0.0
    {
        return leaf(ctx, &rows);
    }

    // Candidate features, optionally subsampled per node.
    let features: Vec<usize> = match ctx.mtry {
        None => (0..ctx.feature_cols.len()).collect(),
        Some(m) => {
            let mut all: Vec<usize> = (0..ctx.feature_cols.len()).collect();
            let take = m.clamp(1, all.len());
            for i in 0..take {
                let j = ctx.rng.gen_range(i..all.len());
                all.swap(i, j);
            }
            let mut chosen = all[..take].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };

    let mut best: Option<BestSplit> = None;
    for feature in features {
        if let Some(candidate) = best_split_for_feature(ctx, &rows, feature) {
            if best.as_ref().is_none_or(|b| candidate.improvement > b.improvement) {
                best = Some(candidate);
            }
        }
    }
    let Some(best) = best else {
        return leaf(ctx, &rows);
    };
    if best.improvement <= 0.0 || best.improvement < ctx.params.complexity * ctx.root_risk {
        return leaf(ctx, &rows);
    }

    let surrogates = if ctx.params.use_surrogates {
        find_surrogates(ctx, &rows, &best.test)
    } else {
        Vec::new()
    };

    // First pass: rows resolvable by the primary test or a surrogate.
    let mut left_rows: Vec<u32> = Vec::new();
    let mut right_rows: Vec<u32> = Vec::new();
    let mut unresolved: Vec<u32> = Vec::new();
    for &r in &rows {
        let side = train_value(ctx, best.test.feature(), r)
            .and_then(|v| best.test.eval(&v))
            .or_else(|| {
                surrogates.iter().find_map(|s| {
                    train_value(ctx, s.test.feature(), r)
                        .and_then(|v| s.test.eval(&v))
                        .map(|side| side ^ s.flip)
                })
            });
        match side {
            Some(true) => left_rows.push(r),
            Some(false) => right_rows.push(r),
            None => unresolved.push(r),
        }
    }
    if left_rows.is_empty() || right_rows.is_empty() {
        // Observed routing should prevent this; bail out defensively.
        return leaf(ctx, &rows);
    }
    // Default direction: the side holding more training rows so far.
    let default_left = left_rows.len() >= right_rows.len();
    if default_left {
        left_rows.extend(unresolved);
    } else {
        right_rows.extend(unresolved);
    }

    let n = rows.len();
    drop(rows);
    let left = grow(ctx, left_rows, depth + 1);
    let right = grow(ctx, right_rows, depth + 1);
    TreeNode::Internal {
        test: best.test,
        surrogates,
        default_left,
        improvement: best.improvement,
        n,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Predict a row's class code by routing it through the tree.
#[allow(clippy::too_many_arguments)]
pub(crate) fn predict_row(
    root: &TreeNode,
    params: &CartParams,
    binding: &Binding,
    rows: &Dataset,
    row: usize,
    model_seed: u64,
    n_classes: usize,
) -> u32 {
    match params.missing_policy {
        MissingPolicy::WeightedAggregate => {
            let mut dist = vec![0.0; n_classes];
            aggregate_dist(root, binding, rows, row, 1.0, &mut dist);
            argmax_class(&dist)
        }
        MissingPolicy::Surrogate | MissingPolicy::RandomChild => {
            let mut rng: Option<ChaCha8Rng> = None;
            let mut node = root;
            loop {
                match node {
                    TreeNode::Leaf { dist, .. } => return argmax_class(dist),
                    TreeNode::Internal {
                        test,
                        surrogates,
                        default_left,
                        left,
                        right,
                        ..
                    } => {
                        let primary = test.eval(&binding.value(rows, test.feature(), row));
                        let side = match (primary, params.missing_policy) {
                            (Some(side), _) => side,
                            (None, MissingPolicy::RandomChild) => rng
                                .get_or_insert_with(|| {
                                    ChaCha8Rng::seed_from_u64(derive_seed(
                                        model_seed,
                                        row as u64,
                                    ))
                                })
                                .gen_bool(0.5),
                            (None, _) => surrogates
                                .iter()
                                .find_map(|s| {
                                    s.test
                                        .eval(&binding.value(rows, s.test.feature(), row))
                                        .map(|side| side ^ s.flip)
                                })
                                .unwrap_or(*default_left),
                        };
                        node = if side { left } else { right };
                    }
                }
            }
        }
    }
}

/// Accumulate `weight` times the leaf distributions reachable from `node`,
/// splitting the weight by child size whenever the primary test is masked.
fn aggregate_dist(
    node: &TreeNode,
    binding: &Binding,
    rows: &Dataset,
    row: usize,
    weight: f64,
    out: &mut [f64],
) {
    match node {
        TreeNode::Leaf { dist, .. } => {
            for (o, d) in out.iter_mut().zip(dist) {
                *o += weight * d;
            }
        }
        TreeNode::Internal {
            test, left, right, ..
        } => match test.eval(&binding.value(rows, test.feature(), row)) {
            Some(true) => aggregate_dist(left, binding, rows, row, weight, out),
            Some(false) => aggregate_dist(right, binding, rows, row, weight, out),
            None => {
                let total = (left.n() + right.n()) as f64;
                aggregate_dist(left, binding, rows, row, weight * left.n() as f64 / total, out);
                aggregate_dist(
                    right,
                    binding,
                    rows,
                    row,
                    weight * right.n() as f64 / total,
                    out,
                );
            }
        },
    }
}

pub(crate) fn accumulate_importance(node: &TreeNode, out: &mut [f64]) {
    if let TreeNode::Internal {
        test,
        improvement,
        left,
        right,
        ..
    } = node
    {
        out[test.feature()] += improvement;
        accumulate_importance(left, out);
        accumulate_importance(right, out);
    }
}
