//! Multi-output regression trees and bagged forests.
//!
//! Two split criteria share one greedy top-down builder:
//!
//! * squared error summed over every output component (CART);
//! * decision regret of predicting the leaf-mean cost for every sample in
//!   the leaf (SPOT). A leaf needs a single solve since all its samples share
//!   one prediction.
//!
//! Candidate thresholds per feature are the boundaries between `split_grid`
//! equal-count groups of the node's sorted feature values, placed halfway
//! between neighbouring order statistics. Ties in split score go to the lowest
//! feature index, then the lowest threshold.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::qcp;
use crate::spo::{DecisionContext, OracleCache, NEGATIVE_LOSS_GRACE};

/// Default number of quantile groups per feature in split search.
pub const DEFAULT_SPLIT_GRID: usize = 10;

/// Anything that maps a feature vector to a cost prediction.
pub trait Predict {
    fn predict(&self, x: &[f64]) -> Vec<f64>;

    fn predict_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree stored as a node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    max_depth: usize,
}

impl RegressionTree {
    pub fn leaf(value: Vec<f64>) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
            max_depth: 0,
        }
    }

    /// Builds a tree from raw nodes, checking structure.
    pub fn from_nodes(nodes: Vec<Node>, max_depth: usize) -> Result<Self> {
        let tree = Self { nodes, max_depth };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidConfig("tree has no nodes".into()));
        }
        let mut width = None;
        let mut stack = vec![(0usize, 0usize)];
        let mut seen = 0;
        while let Some((idx, depth)) = stack.pop() {
            seen += 1;
            if seen > self.nodes.len() {
                return Err(Error::InvalidConfig("tree contains a cycle".into()));
            }
            match self.nodes.get(idx) {
                None => return Err(Error::InvalidConfig(format!("dangling node index {idx}"))),
                Some(Node::Leaf { value }) => match width {
                    None => width = Some(value.len()),
                    Some(w) if w != value.len() => {
                        return Err(Error::InvalidConfig("leaves disagree in width".into()))
                    }
                    _ => {}
                },
                Some(Node::Split { left, right, .. }) => {
                    if depth + 1 > self.max_depth {
                        return Err(Error::InvalidConfig("tree deeper than max_depth".into()));
                    }
                    stack.push((*left, depth + 1));
                    stack.push((*right, depth + 1));
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Longest root-to-leaf path actually present.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Leaf index reached by `x` (left when `x[feature] <= threshold`).
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

impl Predict for RegressionTree {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value.clone(),
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }
}

/// Average of member trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub feature_rate: f64,
    pub sample_rate: f64,
}

impl Predict for Forest {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = self.trees[0].predict(x);
        for t in &self.trees[1..] {
            for (a, v) in acc.iter_mut().zip(t.predict(x)) {
                *a += v;
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}

/// Column means of `rows[idx]`, summed in index order.
pub(crate) fn mean_rows(rows: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[idx[0]].len()];
    for &i in idx {
        for (a, v) in acc.iter_mut().zip(&rows[i]) {
            *a += v;
        }
    }
    let n = idx.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn check_data(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyData("no training rows"));
    }
    check_dim("target rows", x.len(), y.len())?;
    let dx = x[0].len();
    let dy = y[0].len();
    for (xi, yi) in x.iter().zip(y) {
        check_dim("feature width", dx, xi.len())?;
        check_dim("target width", dy, yi.len())?;
    }
    Ok(())
}

fn check_depth(max_depth: usize) -> Result<()> {
    if max_depth > 2 {
        return Err(Error::InvalidConfig(format!(
            "max_depth must be 0, 1 or 2, got {max_depth}"
        )));
    }
    Ok(())
}

/// Candidate thresholds for one feature over the node's samples.
pub(crate) fn candidate_thresholds(values: &mut [f64], split_grid: usize) -> Vec<f64> {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let mut out: Vec<f64> = Vec::new();
    let groups = split_grid.max(2);
    for k in 1..groups {
        let pos = k * n / groups;
        if pos == 0 || pos >= n {
            continue;
        }
        let (lo, hi) = (values[pos - 1], values[pos]);
        if lo < hi {
            let t = lo + 0.5 * (hi - lo);
            if out.last().is_none_or(|&last| t > last) {
                out.push(t);
            }
        }
    }
    out
}

/// Split quality oracle used by the shared builder.
trait SplitCriterion: Sync {
    /// Leaf prediction for the samples in `idx`.
    fn leaf_value(&self, idx: &[usize]) -> Vec<f64>;
    /// Loss incurred by the samples in `idx` when predicting their leaf value.
    fn node_loss(&self, idx: &[usize]) -> Result<f64>;
    /// Smallest loss reduction that counts as a real improvement.
    fn min_gain(&self, idx: &[usize], parent_loss: f64) -> f64 {
        let _ = idx;
        1e-12 * parent_loss.abs().max(1.0)
    }
}

struct MseCriterion<'a> {
    targets: &'a [Vec<f64>],
}

impl SplitCriterion for MseCriterion<'_> {
    fn leaf_value(&self, idx: &[usize]) -> Vec<f64> {
        mean_rows(self.targets, idx)
    }

    fn node_loss(&self, idx: &[usize]) -> Result<f64> {
        let mean = mean_rows(self.targets, idx);
        Ok(idx
            .iter()
            .map(|&i| {
                self.targets[i]
                    .iter()
                    .zip(&mean)
                    .map(|(t, m)| (t - m).powi(2))
                    .sum::<f64>()
            })
            .sum())
    }
}

struct SpotCriterion<'a> {
    ctx: &'a DecisionContext,
    cache: &'a OracleCache,
}

impl SplitCriterion for SpotCriterion<'_> {
    fn leaf_value(&self, idx: &[usize]) -> Vec<f64> {
        mean_rows_of(self.cache, idx)
    }

    fn node_loss(&self, idx: &[usize]) -> Result<f64> {
        let c_hat = mean_rows_of(self.cache, idx);
        let z = self.ctx.decide(&c_hat, None)?.z;
        let curvature = 0.5 * qcp::quad_form(self.ctx.problem().p(), &z);
        Ok(idx
            .iter()
            .map(|&i| {
                let o = self.cache.get(i);
                curvature + qcp::dot(&o.cost, &z) - o.objective
            })
            .sum())
    }

    // Regrets carry solver noise, so gains below it would split on noise.
    fn min_gain(&self, idx: &[usize], _parent_loss: f64) -> f64 {
        idx.iter()
            .map(|&i| NEGATIVE_LOSS_GRACE * (1.0 + self.cache.get(i).objective.abs()))
            .sum()
    }
}

fn mean_rows_of(cache: &OracleCache, idx: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; cache.get(idx[0]).cost.len()];
    for &i in idx {
        for (a, v) in acc.iter_mut().zip(&cache.get(i).cost) {
            *a += v;
        }
    }
    let n = idx.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

struct Builder<'a, C: SplitCriterion> {
    x: &'a [Vec<f64>],
    criterion: &'a C,
    features: &'a [usize],
    split_grid: usize,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    loss: f64,
}

impl<C: SplitCriterion> Builder<'_, C> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks
    fn grow(&mut self, idx: Vec<usize>, depth_left: usize) -> Result<usize> {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.criterion.leaf_value(&idx),
        });
        if depth_left == 0 || idx.len() < 2 {
            return Ok(slot);
        }
        let parent_loss = self.criterion.node_loss(&idx)?;
        let Some(best) = self.best_split(&idx)? else {
            return Ok(slot);
        };
        let tol = self.criterion.min_gain(&idx, parent_loss);
        if !(best.loss < parent_loss - tol) {
            return Ok(slot);
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(l, depth_left - 1)?;
        let right = self.grow(r, depth_left - 1)?;
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        Ok(slot)
    }

    fn best_split(&self, idx: &[usize]) -> Result<Option<Candidate>> {
        let mut proposals = Vec::new();
        for &f in self.features {
            let mut vals: Vec<f64> = idx.iter().map(|&i| self.x[i][f]).collect();
            for t in candidate_thresholds(&mut vals, self.split_grid) {
                proposals.push((f, t));
            }
        }
        let scored: Vec<Option<Candidate>> = proposals
            .par_iter()
            .map(|&(feature, threshold)| {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
                if l.is_empty() || r.is_empty() {
                    return Ok(None);
                }
                let loss = self.criterion.node_loss(&l)? + self.criterion.node_loss(&r)?;
                Ok(Some(Candidate {
                    feature,
                    threshold,
                    loss,
                }))
            })
            .collect::<Result<_>>()?;
        // Proposals are ordered by feature then threshold; keep the first minimum.
        let mut best: Option<Candidate> = None;
        for c in scored.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| c.loss < b.loss) {
                best = Some(c);
            }
        }
        Ok(best)
    }
}

fn build<C: SplitCriterion>(
    x: &[Vec<f64>],
    criterion: &C,
    rows: Vec<usize>,
    features: &[usize],
    max_depth: usize,
    split_grid: usize,
) -> Result<RegressionTree> {
    let mut b = Builder {
        x,
        criterion,
        features,
        split_grid,
        nodes: Vec::new(),
    };
    b.grow(rows, max_depth)?;
    Ok(RegressionTree {
        nodes: b.nodes,
        max_depth,
    })
}

/// Least-squares tree over all output components.
pub fn fit_mse_tree(
    x: &[Vec<f64>],
    targets: &[Vec<f64>],
    max_depth: usize,
    split_grid: usize,
) -> Result<RegressionTree> {
    check_data(x, targets)?;
    let features: Vec<usize> = (0..x[0].len()).collect();
    fit_mse_subset(x, targets, (0..x.len()).collect(), &features, max_depth, split_grid)
}

fn fit_mse_subset(
    x: &[Vec<f64>],
    targets: &[Vec<f64>],
    rows: Vec<usize>,
    features: &[usize],
    max_depth: usize,
    split_grid: usize,
) -> Result<RegressionTree> {
    check_depth(max_depth)?;
    build(x, &MseCriterion { targets }, rows, features, max_depth, split_grid)
}

/// Tree whose splits minimize summed decision regret of leaf-mean predictions.
pub fn fit_spot_tree(
    x: &[Vec<f64>],
    costs: &[Vec<f64>],
    max_depth: usize,
    ctx: &DecisionContext,
    split_grid: usize,
) -> Result<RegressionTree> {
    check_data(x, costs)?;
    let cache = OracleCache::build(ctx, costs)?;
    fit_spot_tree_cached(x, &cache, max_depth, ctx, split_grid)
}

/// [`fit_spot_tree`] with a prebuilt oracle cache aligned with `x`.
pub fn fit_spot_tree_cached(
    x: &[Vec<f64>],
    cache: &OracleCache,
    max_depth: usize,
    ctx: &DecisionContext,
    split_grid: usize,
) -> Result<RegressionTree> {
    if x.is_empty() {
        return Err(Error::EmptyData("no training rows"));
    }
    check_dim("oracle cache size", x.len(), cache.len())?;
    let features: Vec<usize> = (0..x[0].len()).collect();
    fit_spot_subset(x, cache, ctx, (0..x.len()).collect(), &features, max_depth, split_grid)
}

fn fit_spot_subset(
    x: &[Vec<f64>],
    cache: &OracleCache,
    ctx: &DecisionContext,
    rows: Vec<usize>,
    features: &[usize],
    max_depth: usize,
    split_grid: usize,
) -> Result<RegressionTree> {
    check_depth(max_depth)?;
    build(x, &SpotCriterion { ctx, cache }, rows, features, max_depth, split_grid)
}

/// Which criterion a forest's members use.
#[derive(Clone, Copy)]
pub enum BaseFitter<'a> {
    Mse { targets: &'a [Vec<f64>] },
    Spot { ctx: &'a DecisionContext, cache: &'a OracleCache },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub feature_rate: f64,
    pub sample_rate: f64,
    pub split_grid: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 1,
            feature_rate: 0.5,
            sample_rate: 0.5,
            split_grid: DEFAULT_SPLIT_GRID,
        }
    }
}

fn subsample_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64).ceil() as usize).clamp(1, n)
}

/// Bagged forest: each member sees a row subsample and a feature subsample,
/// both drawn without replacement and kept in ascending order.
pub fn fit_forest(
    x: &[Vec<f64>],
    base: BaseFitter<'_>,
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Forest> {
    if cfg.n_trees == 0 {
        return Err(Error::InvalidConfig("forest needs at least one tree".into()));
    }
    if !(cfg.feature_rate > 0.0 && cfg.feature_rate <= 1.0 && cfg.sample_rate > 0.0 && cfg.sample_rate <= 1.0) {
        return Err(Error::InvalidConfig("forest rates must lie in (0, 1]".into()));
    }
    if x.is_empty() {
        return Err(Error::EmptyData("no training rows"));
    }
    match base {
        BaseFitter::Mse { targets } => check_data(x, targets)?,
        BaseFitter::Spot { cache, .. } => check_dim("oracle cache size", x.len(), cache.len())?,
    }
    let (m, dx) = (x.len(), x[0].len());
    let n_rows = subsample_count(cfg.sample_rate, m);
    let n_feats = subsample_count(cfg.feature_rate, dx);
    let draws: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.n_trees)
        .map(|_| {
            let mut tree_rng = ChaCha8Rng::seed_from_u64(rng.random());
            let mut rows = sample(&mut tree_rng, m, n_rows).into_vec();
            let mut feats = sample(&mut tree_rng, dx, n_feats).into_vec();
            rows.sort_unstable();
            feats.sort_unstable();
            (rows, feats)
        })
        .collect();
    let trees = draws
        .into_par_iter()
        .map(|(rows, feats)| match base {
            BaseFitter::Mse { targets } => {
                fit_mse_subset(x, targets, rows, &feats, cfg.max_depth, cfg.split_grid)
            }
            BaseFitter::Spot { ctx, cache } => {
                fit_spot_subset(x, cache, ctx, rows, &feats, cfg.max_depth, cfg.split_grid)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        feature_rate: cfg.feature_rate,
        sample_rate: cfg.sample_rate,
    })
}

/// Summed squared error of `model` on `(x, y)`.
pub fn sse<P: Predict>(model: &P, x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(xi, yi)| {
            model
                .predict(xi)
                .iter()
                .zip(yi)
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcp::SolverSettings;
    use crate::spo::tests::simplex_ctx;
    use approx::assert_abs_diff_eq;

    fn step_data() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![-1.0 + (i as f64 + 0.5) / 20.0]).collect();
        let y = x
            .iter()
            .map(|r| vec![if r[0] < 0.0 { 0.0 } else { 1.0 }])
            .collect();
        (x, y)
    }

    /// Exhaustive best single split on a 1-d sample: every midpoint.
    fn exhaustive_stump(x: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, f64) {
        let mut xs: Vec<f64> = x.iter().map(|r| r[0]).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        let mut best = (f64::NAN, f64::INFINITY);
        for w in xs.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let part = |left: bool| -> Vec<f64> {
                x.iter()
                    .zip(y)
                    .filter(|(r, _)| (r[0] <= t) == left)
                    .map(|(_, v)| v[0])
                    .collect()
            };
            let sse = |v: Vec<f64>| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
            };
            let s = sse(part(true)) + sse(part(false));
            if s < best.1 {
                best = (t, s);
            }
        }
        best
    }

    #[test]
    fn depth_zero_is_column_mean() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![vec![1.0, 4.0], vec![2.0, 5.0], vec![6.0, 0.0]];
        let t = fit_mse_tree(&x, &y, 0, 10).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict(&[5.0]), vec![3.0, 3.0]);
    }

    #[test]
    fn stump_finds_the_step() {
        let (x, y) = step_data();
        let (t_star, sse_star) = exhaustive_stump(&x, &y);
        assert!(t_star.abs() < 0.05);
        assert_eq!(sse_star, 0.0);
        let t = fit_mse_tree(&x, &y, 1, 10).unwrap();
        match &t.nodes()[0] {
            Node::Split { threshold, .. } => assert!(threshold.abs() < 0.05),
            Node::Leaf { .. } => panic!("expected a split"),
        }
        assert_abs_diff_eq!(t.predict(&[-0.5])[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.predict(&[0.5])[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let y = vec![vec![2.0, -1.0]; 20];
        let t = fit_mse_tree(&x, &y, 2, 10).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict(&[3.0, 1.0]), vec![2.0, -1.0]);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(fit_mse_tree(&[], &[], 1, 10), Err(Error::EmptyData(_))));
        assert!(fit_mse_tree(&[vec![0.0]], &[vec![1.0]], 3, 10).is_err());
        assert!(fit_mse_tree(&[vec![0.0], vec![1.0]], &[vec![1.0]], 1, 10).is_err());
    }

    #[test]
    fn training_sse_is_non_increasing_in_depth() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.173;
                vec![t.sin(), (2.1 * t).cos(), (0.7 * t).sin()]
            })
            .collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * r[1], r[2].powi(2) - r[0]]).collect();
        let mut prev = f64::INFINITY;
        for d in 0..=2 {
            let t = fit_mse_tree(&x, &y, d, 10).unwrap();
            let s = sse(&t, &x, &y);
            assert!(s <= prev + 1e-12);
            prev = s;
        }
    }

    #[test]
    fn thresholds_split_into_equal_groups() {
        let mut v: Vec<f64> = (0..10).map(|i| i as f64).rev().collect();
        assert_eq!(candidate_thresholds(&mut v, 10), vec![0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.5]);
        let mut v = vec![1.0; 5];
        assert!(candidate_thresholds(&mut v, 10).is_empty());
        let mut v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = candidate_thresholds(&mut v, 4);
        assert_eq!(t, vec![24.5, 49.5, 74.5]);
    }

    #[test]
    fn spot_depth_zero_matches_cart() {
        let ctx = simplex_ctx(3, 0.0);
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 15.0]).collect();
        let costs: Vec<Vec<f64>> = x
            .iter()
            .map(|r| vec![r[0], 1.0 - r[0], 0.5 + 0.1 * r[0]])
            .collect();
        let spot = fit_spot_tree(&x, &costs, 0, &ctx, 10).unwrap();
        let cart = fit_mse_tree(&x, &costs, 0, 10).unwrap();
        assert_eq!(spot, cart);
    }

    #[test]
    fn spot_keeps_single_leaf_when_decisions_agree() {
        let ctx = simplex_ctx(2, 0.0);
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        // Asset 0 always cheapest, with varying magnitude.
        let costs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.1, 2.0 + i as f64 * 0.3]).collect();
        let t = fit_spot_tree(&x, &costs, 2, &ctx, 10).unwrap();
        assert_eq!(t.n_leaves(), 1);
        let cache = OracleCache::build(&ctx, &costs).unwrap();
        let loss: f64 = (0..12)
            .map(|i| ctx.regret(&t.predict(&x[i]), cache.get(i), None).unwrap().loss)
            .sum();
        assert!(loss.abs() < 1e-6);
    }

    #[test]
    fn spot_splits_where_the_decision_flips() {
        let ctx = simplex_ctx(2, 0.0);
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let costs: Vec<Vec<f64>> = (0..20)
            .map(|i| if i < 10 { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
            .collect();
        let t = fit_spot_tree(&x, &costs, 1, &ctx, 10).unwrap();
        match &t.nodes()[0] {
            Node::Split { threshold, .. } => assert_abs_diff_eq!(*threshold, 9.5),
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn forest_behaviour() {
        let (x, y) = step_data();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let single = ForestConfig {
            n_trees: 1,
            max_depth: 1,
            feature_rate: 1.0,
            sample_rate: 1.0,
            split_grid: 10,
        };
        let f = fit_forest(&x, BaseFitter::Mse { targets: &y }, &single, &mut rng).unwrap();
        assert_eq!(f.trees[0], fit_mse_tree(&x, &y, 1, 10).unwrap());

        let cfg = ForestConfig {
            n_trees: 7,
            ..ForestConfig::default()
        };
        let f = fit_forest(&x, BaseFitter::Mse { targets: &y }, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let g = fit_forest(&x, BaseFitter::Mse { targets: &y }, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(f, g);
        for xi in &x {
            let mean: f64 = f.trees.iter().map(|t| t.predict(xi)[0]).sum::<f64>() / 7.0;
            assert_abs_diff_eq!(f.predict(xi)[0], mean, epsilon = 1e-12);
        }

        let twin = Forest {
            trees: vec![f.trees[0].clone(), f.trees[0].clone()],
            feature_rate: 0.5,
            sample_rate: 0.5,
        };
        assert_eq!(twin.predict(&[0.3]), f.trees[0].predict(&[0.3]));

        let constant = vec![vec![1.5]; x.len()];
        let f = fit_forest(&x, BaseFitter::Mse { targets: &constant }, &cfg, &mut rng).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes() == RegressionTree::leaf(vec![1.5]).nodes()));

        let bad = ForestConfig { n_trees: 0, ..cfg };
        assert!(fit_forest(&x, BaseFitter::Mse { targets: &y }, &bad, &mut rng).is_err());
    }

    #[test]
    fn spot_forest_runs() {
        let ctx = DecisionContext::new(crate::spo::tests::simplex(2, 0.0), SolverSettings::default()).unwrap();
        let x: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let costs: Vec<Vec<f64>> = (0..16)
            .map(|i| if i < 8 { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
            .collect();
        let cache = OracleCache::build(&ctx, &costs).unwrap();
        let cfg = ForestConfig {
            n_trees: 4,
            ..ForestConfig::default()
        };
        let f = fit_forest(&x, BaseFitter::Spot { ctx: &ctx, cache: &cache }, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(f.trees.len(), 4);
    }

    #[test]
    fn tree_structure_is_validated() {
        let ok = RegressionTree::from_nodes(
            vec![
                Node::Split { feature: 0, threshold: 0.0, left: 1, right: 2 },
                Node::Leaf { value: vec![0.0] },
                Node::Leaf { value: vec![1.0] },
            ],
            1,
        );
        assert!(ok.is_ok());
        let too_deep = RegressionTree::from_nodes(ok.unwrap().nodes().to_vec(), 0);
        assert!(too_deep.is_err());
        let dangling = RegressionTree::from_nodes(
            vec![Node::Split { feature: 0, threshold: 0.0, left: 1, right: 5 }, Node::Leaf { value: vec![0.0] }],
            1,
        );
        assert!(dangling.is_err());
    }
}
