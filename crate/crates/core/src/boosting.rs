//! Gradient boosting of regression trees against a pluggable training loss.
//!
//! The prediction is `f(x) = f0 + Σ βₙ·hₙ(x)` with every `βₙ ≥ 0`. Each stage
//! fits a least-squares tree to the negative loss gradient at the current
//! predictions, then picks `βₙ` for that tree. Two objectives are provided:
//! decision regret ([`SpoObjective`]) and squared error ([`MseObjective`]).
//!
//! Stopping: a stage whose `β` falls below `eps_beta` is rejected and ends
//! fitting; an accepted stage whose relative loss change satisfies
//! `|Δℓ| < eps_loss` ends fitting; otherwise fitting stops after
//! `max_stages`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-sample losses and optimal iterates (`None` where the solve failed).
type RegretBatch = (Vec<f64>, Vec<Option<Vec<f64>>>);

use crate::error::{check_dim, Error, Result};
use crate::spo::{clamp_noise, DecisionContext, OracleCache};
use crate::trees::{fit_mse_tree, Predict, RegressionTree, DEFAULT_SPLIT_GRID};

pub const ENSEMBLE_FORMAT: &str = "decision-boost-ensemble";
pub const ENSEMBLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchConfig {
    /// Evenly spaced points on `[0, beta_max]`, both ends included.
    pub grid: usize,
    pub beta_max: f64,
    /// Golden-section iterations on the interval bracketing the best grid point.
    pub golden_iters: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            grid: 32,
            beta_max: 10.0,
            golden_iters: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub max_stages: usize,
    pub eps_beta: f64,
    pub eps_loss: f64,
    pub max_depth: usize,
    pub split_grid: usize,
    pub line_search: LineSearchConfig,
    /// Random perturbations of the mean cost tried as `f0`.
    pub f0_restarts: usize,
    pub seed: u64,
    /// Largest tolerated fraction of samples whose solve fails in one pass.
    pub max_failure_rate: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            max_stages: 100,
            eps_beta: 1e-4,
            eps_loss: 1e-5,
            max_depth: 1,
            split_grid: DEFAULT_SPLIT_GRID,
            line_search: LineSearchConfig::default(),
            f0_restarts: 4,
            seed: 0,
            max_failure_rate: 0.01,
        }
    }
}

impl BoostConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.eps_beta) || !open_unit(self.eps_loss) {
            return Err(Error::InvalidConfig("eps_beta and eps_loss must lie in (0, 1)".into()));
        }
        if self.max_depth > 2 {
            return Err(Error::InvalidConfig("max_depth must be 0, 1 or 2".into()));
        }
        if self.line_search.grid < 2 || !(self.line_search.beta_max > 0.0) {
            return Err(Error::InvalidConfig(
                "line search needs at least 2 grid points and a positive beta_max".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.max_failure_rate) {
            return Err(Error::InvalidConfig("max_failure_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The proposed stage had `β < eps_beta` and was discarded.
    BetaBelowThreshold,
    /// The last accepted stage changed the loss by less than `eps_loss` relative.
    LossPlateau,
    MaxStages,
    /// Training loss reached exactly zero.
    ZeroLoss,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BetaBelowThreshold => "beta_below_threshold",
            Self::LossPlateau => "loss_plateau",
            Self::MaxStages => "max_stages",
            Self::ZeroLoss => "zero_loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub beta: f64,
    pub tree: RegressionTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Samples whose backward pass hit a singular system (zero pseudo-residual).
    pub degenerate_gradients: usize,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub f0: Vec<f64>,
    pub stages: Vec<Stage>,
    /// Training loss at `f0`, then after every accepted stage.
    pub loss_trace: Vec<f64>,
    pub stop_reason: StopReason,
    /// `β` of the discarded stage when stopping on `BetaBelowThreshold`.
    pub rejected_beta: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    ensemble: Ensemble,
}

impl Ensemble {
    pub fn constant(f0: Vec<f64>) -> Self {
        Self {
            f0,
            stages: Vec::new(),
            loss_trace: Vec::new(),
            stop_reason: StopReason::MaxStages,
            rejected_beta: None,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Relative loss changes between consecutive trace entries.
    pub fn loss_deltas(&self) -> Vec<f64> {
        self.loss_trace
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.loss_trace.windows(2).all(|w| w[1] <= w[0])
    }

    /// Whether the recorded stop reason follows from the recorded `β` and `Δℓ`
    /// values under `cfg`, and no earlier stage should have stopped fitting.
    pub fn stop_is_consistent(&self, cfg: &BoostConfig) -> bool {
        let deltas = self.loss_deltas();
        let n = self.stages.len();
        if self.loss_trace.len() != n + 1 {
            return false;
        }
        let betas_ok = self.stages.iter().all(|s| s.beta >= cfg.eps_beta);
        let early_plateau = deltas
            .iter()
            .take(n.saturating_sub(1))
            .any(|d| d.abs() < cfg.eps_loss);
        let early_zero = self.loss_trace[..n].iter().any(|&l| l <= 0.0);
        if !betas_ok || early_plateau || early_zero || n > cfg.max_stages {
            return false;
        }
        let last_plateau = deltas.last().is_some_and(|d| d.abs() < cfg.eps_loss);
        let last_loss = self.loss_trace[n];
        match self.stop_reason {
            StopReason::BetaBelowThreshold => {
                self.rejected_beta.is_some_and(|b| b < cfg.eps_beta)
                    && !last_plateau
                    && last_loss > 0.0
                    && n < cfg.max_stages
            }
            StopReason::LossPlateau => last_plateau && self.rejected_beta.is_none(),
            StopReason::MaxStages => n == cfg.max_stages && !last_plateau && self.rejected_beta.is_none(),
            StopReason::ZeroLoss => last_loss <= 0.0 && self.rejected_beta.is_none() && !last_plateau,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EnsembleFile {
            format: ENSEMBLE_FORMAT.into(),
            version: ENSEMBLE_VERSION,
            ensemble: self.clone(),
        })
        .expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnsembleFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("ensemble file: {e}")))?;
        if file.format != ENSEMBLE_FORMAT || file.version != ENSEMBLE_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported ensemble file {} v{}",
                file.format, file.version
            )));
        }
        for s in &file.ensemble.stages {
            RegressionTree::from_nodes(s.tree.nodes().to_vec(), s.tree.max_depth())?;
        }
        Ok(file.ensemble)
    }
}

impl Predict for Ensemble {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        predict_ensemble(self, x)
    }
}

/// `f0 + Σ βₙ·hₙ(x)`.
pub fn predict_ensemble(ens: &Ensemble, x: &[f64]) -> Vec<f64> {
    let mut out = ens.f0.clone();
    for s in &ens.stages {
        for (o, h) in out.iter_mut().zip(s.tree.predict(x)) {
            *o += s.beta * h;
        }
    }
    out
}

fn shifted(preds: &[Vec<f64>], outputs: &[Vec<f64>], beta: f64) -> Vec<Vec<f64>> {
    preds
        .iter()
        .zip(outputs)
        .map(|(p, h)| p.iter().zip(h).map(|(a, b)| a + beta * b).collect())
        .collect()
}

/// Minimizes `f` over `[0, beta_max]`: best grid point, then golden-section
/// refinement between its neighbours. Returns `(β, f(β))`.
///
/// Only strict improvements replace the incumbent, and grid points are
/// visited in increasing order, so ties resolve to the smallest `β`.
/// `f0`, when given, is used as `f(0)` without evaluating.
pub fn grid_golden_search<F>(mut f: F, cfg: &LineSearchConfig, f0: Option<f64>) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let n = cfg.grid.max(2);
    let step = cfg.beta_max / (n - 1) as f64;
    let mut best = (0.0, match f0 {
        Some(v) => v,
        None => f(0.0)?,
    });
    let mut best_k = 0;
    for k in 1..n {
        let beta = step * k as f64;
        let v = f(beta)?;
        if v < best.1 {
            best = (beta, v);
            best_k = k;
        }
    }
    let lo = step * best_k.saturating_sub(1) as f64;
    let hi = step * (best_k + 1).min(n - 1) as f64;
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let consider = |beta: f64, v: f64, best: &mut (f64, f64)| {
        if v < best.1 || (v == best.1 && beta < best.0) {
            *best = (beta, v);
        }
    };
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    for _ in 0..cfg.golden_iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
            consider(x1, f1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
            consider(x2, f2, &mut best);
        }
    }
    Ok(best)
}

/// Training loss seen by the boosting skeleton.
pub trait BoostObjective {
    fn n_samples(&self) -> usize;
    fn n_outputs(&self) -> usize;
    /// Constant initial prediction.
    fn initial(&mut self, cfg: &BoostConfig) -> Result<Vec<f64>>;
    /// Total loss at `preds`; may record state (e.g. warm starts) for the next calls.
    fn evaluate(&mut self, preds: &[Vec<f64>]) -> Result<f64>;
    /// Negative loss gradient per sample at `preds`.
    fn pseudo_residuals(&mut self, preds: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
    /// Step size for `preds + β·outputs`, and the loss there. `current` is the
    /// loss at `preds`.
    fn step(
        &mut self,
        preds: &[Vec<f64>],
        outputs: &[Vec<f64>],
        current: f64,
        cfg: &LineSearchConfig,
    ) -> Result<(f64, f64)>;
    fn diagnostics(&self) -> FitDiagnostics {
        FitDiagnostics::default()
    }
}

/// Runs the boosting loop for any objective.
pub fn fit_boost<O: BoostObjective>(x: &[Vec<f64>], objective: &mut O, cfg: &BoostConfig) -> Result<Ensemble> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::EmptyData("no training rows"));
    }
    check_dim("training rows", objective.n_samples(), x.len())?;
    let f0 = objective.initial(cfg)?;
    check_dim("initial prediction", objective.n_outputs(), f0.len())?;
    let mut preds = vec![f0.clone(); x.len()];
    let mut loss = objective.evaluate(&preds)?;
    let mut ens = Ensemble {
        f0,
        stages: Vec::new(),
        loss_trace: vec![loss],
        stop_reason: StopReason::MaxStages,
        rejected_beta: None,
        diagnostics: FitDiagnostics::default(),
    };
    for n in 1..=cfg.max_stages {
        if loss <= 0.0 {
            ens.stop_reason = StopReason::ZeroLoss;
            break;
        }
        let residuals = objective.pseudo_residuals(&preds)?;
        let tree = fit_mse_tree(x, &residuals, cfg.max_depth, cfg.split_grid)?;
        let outputs = tree.predict_all(x);
        let (beta, new_loss) = objective.step(&preds, &outputs, loss, &cfg.line_search)?;
        if beta < cfg.eps_beta {
            ens.stop_reason = StopReason::BetaBelowThreshold;
            ens.rejected_beta = Some(beta);
            break;
        }
        preds = shifted(&preds, &outputs, beta);
        ens.stages.push(Stage { beta, tree });
        ens.loss_trace.push(new_loss);
        let delta = (new_loss - loss) / loss;
        loss = new_loss;
        if delta.abs() < cfg.eps_loss {
            ens.stop_reason = StopReason::LossPlateau;
            break;
        }
        if n == cfg.max_stages {
            ens.stop_reason = StopReason::MaxStages;
        }
    }
    ens.diagnostics = objective.diagnostics();
    Ok(ens)
}

fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let idx: Vec<usize> = (0..rows.len()).collect();
    crate::trees::mean_rows(rows, &idx)
}

fn column_median(rows: &[Vec<f64>]) -> Vec<f64> {
    (0..rows[0].len())
        .map(|j| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect()
}

fn column_std(rows: &[Vec<f64>], mean: &[f64]) -> Vec<f64> {
    let n = rows.len() as f64;
    mean.iter()
        .enumerate()
        .map(|(j, m)| (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt())
        .collect()
}

/// Squared-error objective `Σ ‖c⁽ⁱ⁾ − ĉ⁽ⁱ⁾‖²`.
pub struct MseObjective<'a> {
    targets: &'a [Vec<f64>],
    closed_form: bool,
}

impl<'a> MseObjective<'a> {
    /// Closed-form step `β = Σ⟨r, h⟩ / Σ‖h‖²`, clamped at zero.
    pub fn new(targets: &'a [Vec<f64>]) -> Self {
        Self {
            targets,
            closed_form: true,
        }
    }

    /// Same loss, but `β` comes from the generic grid/golden line search.
    pub fn with_line_search(targets: &'a [Vec<f64>]) -> Self {
        Self {
            targets,
            closed_form: false,
        }
    }

    fn total(&self, preds: &[Vec<f64>]) -> f64 {
        preds
            .iter()
            .zip(self.targets)
            .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (b - a).powi(2)).sum::<f64>())
            .sum()
    }
}

impl BoostObjective for MseObjective<'_> {
    fn n_samples(&self) -> usize {
        self.targets.len()
    }

    fn n_outputs(&self) -> usize {
        self.targets[0].len()
    }

    fn initial(&mut self, _cfg: &BoostConfig) -> Result<Vec<f64>> {
        Ok(column_mean(self.targets))
    }

    fn evaluate(&mut self, preds: &[Vec<f64>]) -> Result<f64> {
        Ok(self.total(preds))
    }

    fn pseudo_residuals(&mut self, preds: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(preds
            .iter()
            .zip(self.targets)
            .map(|(p, t)| t.iter().zip(p).map(|(a, b)| a - b).collect())
            .collect())
    }

    fn step(
        &mut self,
        preds: &[Vec<f64>],
        outputs: &[Vec<f64>],
        current: f64,
        cfg: &LineSearchConfig,
    ) -> Result<(f64, f64)> {
        if !self.closed_form {
            return grid_golden_search(|b| Ok(self.total(&shifted(preds, outputs, b))), cfg, Some(current));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for ((p, t), h) in preds.iter().zip(self.targets).zip(outputs) {
            for ((pi, ti), hi) in p.iter().zip(t).zip(h) {
                num += (ti - pi) * hi;
                den += hi * hi;
            }
        }
        let beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        if beta == 0.0 {
            return Ok((0.0, current));
        }
        Ok((beta, self.total(&shifted(preds, outputs, beta))))
    }
}

/// Summed decision regret over a cached dataset.
pub struct SpoObjective<'a> {
    ctx: &'a DecisionContext,
    cache: &'a OracleCache,
    /// `w*` at the current predictions, per sample.
    warm: Vec<Option<Vec<f64>>>,
    /// Regret at the current predictions, per sample.
    current: Vec<f64>,
    max_failure_rate: f64,
    diagnostics: FitDiagnostics,
}

impl<'a> SpoObjective<'a> {
    pub fn new(ctx: &'a DecisionContext, cache: &'a OracleCache) -> Self {
        Self {
            ctx,
            cache,
            warm: vec![None; cache.len()],
            current: vec![0.0; cache.len()],
            max_failure_rate: 0.01,
            diagnostics: FitDiagnostics::default(),
        }
    }

    /// Per-sample regrets at `preds`, retrying cold on failure. Failed samples
    /// keep their current regret; too many failures abort.
    fn regrets(&mut self, preds: &[Vec<f64>]) -> Result<RegretBatch> {
        let (ctx, cache, warm) = (self.ctx, self.cache, &self.warm);
        let results: Vec<Result<(f64, Vec<f64>)>> = preds
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let r = ctx
                    .regret(p, cache.get(i), warm[i].as_deref())
                    .or_else(|_| ctx.regret(p, cache.get(i), None))?;
                Ok((clamp_noise(r.loss), r.solution.w_star))
            })
            .collect();
        self.collect(results)
    }

    fn collect(&mut self, results: Vec<Result<(f64, Vec<f64>)>>) -> Result<RegretBatch> {
        let total = results.len();
        let mut losses = Vec::with_capacity(total);
        let mut ws = Vec::with_capacity(total);
        let mut failed = 0;
        let mut first = None;
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok((l, w)) => {
                    losses.push(l);
                    ws.push(Some(w));
                }
                Err(e) => {
                    failed += 1;
                    first.get_or_insert_with(|| format!("sample {i}: {e}"));
                    losses.push(self.current[i]);
                    ws.push(self.warm[i].clone());
                }
            }
        }
        self.record_failures(failed, total, first)?;
        Ok((losses, ws))
    }

    fn record_failures(&mut self, failed: usize, total: usize, first: Option<String>) -> Result<()> {
        if failed == 0 {
            return Ok(());
        }
        self.diagnostics.solver_failures += failed;
        if failed as f64 > self.max_failure_rate * total as f64 {
            return Err(Error::TooManySolverFailures {
                failed,
                total,
                first: first.unwrap_or_default(),
            });
        }
        Ok(())
    }
}

impl BoostObjective for SpoObjective<'_> {
    fn n_samples(&self) -> usize {
        self.cache.len()
    }

    fn n_outputs(&self) -> usize {
        self.ctx.n_z()
    }

    /// Lowest-loss constant among the mean cost, the median cost and seeded
    /// perturbations of the mean; the mean wins ties.
    fn initial(&mut self, cfg: &BoostConfig) -> Result<Vec<f64>> {
        self.max_failure_rate = cfg.max_failure_rate;
        let costs = self.cache.costs();
        let mean = column_mean(&costs);
        let std = column_std(&costs, &mean);
        let mut candidates = vec![mean.clone(), column_median(&costs)];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.f0_restarts {
            candidates.push(
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        m + 0.5 * s * e
                    })
                    .collect(),
            );
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for cand in candidates {
            let preds = vec![cand.clone(); self.n_samples()];
            let (losses, _) = self.regrets(&preds)?;
            let total: f64 = losses.iter().sum();
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, cand));
            }
        }
        Ok(best.expect("at least one candidate").1)
    }

    fn evaluate(&mut self, preds: &[Vec<f64>]) -> Result<f64> {
        let (losses, ws) = self.regrets(preds)?;
        let total = losses.iter().sum();
        self.current = losses;
        self.warm = ws;
        Ok(total)
    }

    fn pseudo_residuals(&mut self, preds: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let (ctx, cache, warm) = (self.ctx, self.cache, &self.warm);
        let results: Vec<Result<(Vec<f64>, bool)>> = preds
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let g = ctx
                    .regret_gradient(p, cache.get(i), warm[i].as_deref())
                    .or_else(|_| ctx.regret_gradient(p, cache.get(i), None))?;
                Ok((g.grad.iter().map(|v| -v).collect(), g.degenerate))
            })
            .collect();
        let total = results.len();
        let mut out = Vec::with_capacity(total);
        let (mut failed, mut first) = (0, None);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok((g, degenerate)) => {
                    if degenerate {
                        self.diagnostics.degenerate_gradients += 1;
                    }
                    out.push(g);
                }
                Err(e) => {
                    failed += 1;
                    first.get_or_insert_with(|| format!("sample {i}: {e}"));
                    out.push(vec![0.0; self.ctx.n_z()]);
                }
            }
        }
        self.record_failures(failed, total, first)?;
        Ok(out)
    }

    fn step(
        &mut self,
        preds: &[Vec<f64>],
        outputs: &[Vec<f64>],
        current: f64,
        cfg: &LineSearchConfig,
    ) -> Result<(f64, f64)> {
        let (beta, loss) = grid_golden_search(
            |b| Ok(self.regrets(&shifted(preds, outputs, b))?.0.iter().sum()),
            cfg,
            Some(current),
        )?;
        if beta > 0.0 {
            // Refresh warm starts and per-sample regrets at the accepted point.
            let (losses, ws) = self.regrets(&shifted(preds, outputs, beta))?;
            self.current = losses;
            self.warm = ws;
        }
        Ok((beta, loss))
    }

    fn diagnostics(&self) -> FitDiagnostics {
        self.diagnostics
    }
}

/// Boosting against summed decision regret.
pub fn fit_dboost(x: &[Vec<f64>], costs: &[Vec<f64>], ctx: &DecisionContext, cfg: &BoostConfig) -> Result<Ensemble> {
    if costs.is_empty() {
        return Err(Error::EmptyData("no training rows"));
    }
    let cache = OracleCache::build(ctx, costs)?;
    fit_dboost_cached(x, &cache, ctx, cfg)
}

/// [`fit_dboost`] with a prebuilt oracle cache aligned with `x`.
pub fn fit_dboost_cached(
    x: &[Vec<f64>],
    cache: &OracleCache,
    ctx: &DecisionContext,
    cfg: &BoostConfig,
) -> Result<Ensemble> {
    let mut obj = SpoObjective::new(ctx, cache);
    fit_boost(x, &mut obj, cfg)
}

/// Boosting against summed squared prediction error.
pub fn fit_mse_boost(x: &[Vec<f64>], costs: &[Vec<f64>], cfg: &BoostConfig) -> Result<Ensemble> {
    if costs.is_empty() {
        return Err(Error::EmptyData("no training rows"));
    }
    let mut obj = MseObjective::new(costs);
    fit_boost(x, &mut obj, cfg)
}

/// `β ∈ [0, beta_max]` minimizing summed regret of `predictions + β·tree_outputs`.
pub fn line_search_beta(
    ctx: &DecisionContext,
    predictions: &[Vec<f64>],
    tree_outputs: &[Vec<f64>],
    cache: &OracleCache,
    cfg: &LineSearchConfig,
) -> Result<f64> {
    check_dim("tree outputs", predictions.len(), tree_outputs.len())?;
    check_dim("oracle cache size", predictions.len(), cache.len())?;
    let mut obj = SpoObjective::new(ctx, cache);
    obj.max_failure_rate = 0.0;
    let current = obj.evaluate(predictions)?;
    Ok(obj.step(predictions, tree_outputs, current, cfg)?.0)
}
