//! Decision regret (the SPO loss), its gradient in the predicted cost, and the
//! dataset-level excess-cost ratio.
//!
//! For a predicted cost `ĉ` and realized cost `c`,
//!
//! ```text
//! regret(ĉ, c) = [½ z*(ĉ)ᵀP z*(ĉ) + cᵀz*(ĉ)] - [½ z*(c)ᵀP z*(c) + cᵀz*(c)]
//! ```
//!
//! The second bracket does not depend on the prediction and is cached once
//! per dataset in an [`OracleCache`].

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::qcp::{self, AssembledSystem, QcpProblem, QcpSolution, SolverSettings};
use crate::qcpdiff;

/// Losses above this negative value are solver noise and reported as zero.
pub const NEGATIVE_LOSS_GRACE: f64 = 1e-6;

/// Feasible set and curvature shared by every sample; the cost is per sample.
#[derive(Debug, Clone)]
pub struct DecisionContext {
    problem: QcpProblem,
    system: AssembledSystem,
    settings: SolverSettings,
}

/// Optimal decision under the realized cost.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecision {
    pub cost: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct Regret {
    pub loss: f64,
    pub solution: QcpSolution,
}

#[derive(Debug, Clone)]
pub struct RegretGradient {
    pub loss: f64,
    /// `∂regret/∂ĉ`
    pub grad: Vec<f64>,
    /// The solution map was not differentiable; `grad` is zero.
    pub degenerate: bool,
    pub solution: QcpSolution,
}

impl DecisionContext {
    /// The cost stored in `problem` is ignored; only `P`, `A`, `b` and the cone matter.
    pub fn new(problem: QcpProblem, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let system = qcp::assemble(&problem)?;
        Ok(Self {
            problem,
            system,
            settings,
        })
    }

    pub fn problem(&self) -> &QcpProblem {
        &self.problem
    }

    pub fn system(&self) -> &AssembledSystem {
        &self.system
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn n_z(&self) -> usize {
        self.problem.n_z()
    }

    /// `z*(ĉ)` and the rest of the solution.
    pub fn decide(&self, c_hat: &[f64], warm_start: Option<&[f64]>) -> Result<QcpSolution> {
        self.system.solve_with_cost(c_hat, &self.settings, warm_start)
    }

    pub fn oracle(&self, cost: &[f64]) -> Result<OracleDecision> {
        let sol = self.decide(cost, None)?;
        Ok(OracleDecision {
            cost: cost.to_vec(),
            objective: self.problem.objective_with_cost(&sol.z, cost),
            z: sol.z,
        })
    }

    /// Realized objective of a decision under the oracle's cost.
    pub fn realized_objective(&self, z: &[f64], oracle: &OracleDecision) -> f64 {
        self.problem.objective_with_cost(z, &oracle.cost)
    }

    pub fn regret(&self, c_hat: &[f64], oracle: &OracleDecision, warm_start: Option<&[f64]>) -> Result<Regret> {
        check_dim("predicted cost", self.n_z(), c_hat.len())?;
        let solution = self.decide(c_hat, warm_start)?;
        let loss = self.realized_objective(&solution.z, oracle) - oracle.objective;
        Ok(Regret { loss, solution })
    }

    /// Regret and its gradient in `ĉ`, chaining `∂ℓ/∂z* = P z*(ĉ) + c` through
    /// the implicit backward pass.
    pub fn regret_gradient(
        &self,
        c_hat: &[f64],
        oracle: &OracleDecision,
        warm_start: Option<&[f64]>,
    ) -> Result<RegretGradient> {
        let Regret { loss, solution } = self.regret(c_hat, oracle, warm_start)?;
        let p = self.problem.p();
        let dl_dz: Vec<f64> = (0..self.n_z())
            .map(|i| qcp::dot(p.row(i).transpose().as_slice(), &solution.z) + oracle.cost[i])
            .collect();
        let back = qcpdiff::differentiate(&self.system, &solution, &dl_dz)?;
        Ok(RegretGradient {
            loss,
            grad: back.grads.dc,
            degenerate: back.degenerate,
            solution,
        })
    }
}

/// Regret of predicting `c_hat` when the realized cost is `c`.
pub fn qspo_loss(ctx: &DecisionContext, c_hat: &[f64], c: &[f64]) -> Result<f64> {
    check_dim("realized cost", ctx.n_z(), c.len())?;
    let oracle = ctx.oracle(c)?;
    Ok(ctx.regret(c_hat, &oracle, None)?.loss)
}

/// Gradient of [`qspo_loss`] in `c_hat`, with the degeneracy flag.
pub fn qspo_grad(ctx: &DecisionContext, c_hat: &[f64], c: &[f64]) -> Result<(Vec<f64>, bool)> {
    check_dim("realized cost", ctx.n_z(), c.len())?;
    let oracle = ctx.oracle(c)?;
    let g = ctx.regret_gradient(c_hat, &oracle, None)?;
    Ok((g.grad, g.degenerate))
}

/// Oracle decisions for every sample of a dataset, built once and read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCache {
    decisions: Vec<OracleDecision>,
}

impl OracleCache {
    pub fn build(ctx: &DecisionContext, costs: &[Vec<f64>]) -> Result<Self> {
        let decisions = costs
            .par_iter()
            .map(|c| {
                check_dim("realized cost", ctx.n_z(), c.len())?;
                ctx.oracle(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { decisions })
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn get(&self, i: usize) -> &OracleDecision {
        &self.decisions[i]
    }

    pub fn decisions(&self) -> &[OracleDecision] {
        &self.decisions
    }

    pub fn costs(&self) -> Vec<Vec<f64>> {
        self.decisions.iter().map(|d| d.cost.clone()).collect()
    }

    /// Sum of optimal objectives, the excess-cost denominator.
    pub fn optimal_total(&self) -> f64 {
        self.decisions.iter().map(|d| d.objective).sum()
    }

    /// Pairs `(i, j)` where the cached decision of sample `j` beats sample
    /// `i`'s own oracle under cost `c⁽ⁱ⁾` by more than `tol`. All decisions
    /// share one feasible set, so this should be empty.
    pub fn consistency_violations(&self, ctx: &DecisionContext, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, di) in self.decisions.iter().enumerate() {
            for (j, dj) in self.decisions.iter().enumerate() {
                if i != j && ctx.realized_objective(&dj.z, di) < di.objective - tol {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Excess decision cost with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessCost {
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
}

/// Per-sample regrets for a batch of predictions, optionally warm-started.
pub fn batch_regrets(
    ctx: &DecisionContext,
    predictions: &[Vec<f64>],
    cache: &OracleCache,
    warm_starts: Option<&[Vec<f64>]>,
) -> Result<Vec<Regret>> {
    check_dim("prediction count", cache.len(), predictions.len())?;
    predictions
        .par_iter()
        .enumerate()
        .map(|(i, pred)| {
            let warm = warm_starts.map(|w| w[i].as_slice());
            ctx.regret(pred, cache.get(i), warm)
        })
        .collect()
}

/// `Σ regret / Σ optimal objective` over the cached dataset.
pub fn excess_cost_cached(
    ctx: &DecisionContext,
    predictions: &[Vec<f64>],
    cache: &OracleCache,
) -> Result<ExcessCost> {
    let regrets = batch_regrets(ctx, predictions, cache, None)?;
    let numerator: f64 = regrets.iter().map(|r| clamp_noise(r.loss)).sum();
    ratio(numerator, cache.optimal_total())
}

/// Uncached variant of [`excess_cost_cached`].
pub fn excess_cost(ctx: &DecisionContext, predictions: &[Vec<f64>], costs: &[Vec<f64>]) -> Result<ExcessCost> {
    check_dim("prediction count", costs.len(), predictions.len())?;
    let cache = OracleCache::build(ctx, costs)?;
    excess_cost_cached(ctx, predictions, &cache)
}

pub(crate) fn ratio(numerator: f64, denominator: f64) -> Result<ExcessCost> {
    if numerator == 0.0 {
        return Ok(ExcessCost {
            ratio: 0.0,
            numerator,
            denominator,
        });
    }
    if denominator.abs() < 1e-10 * numerator.abs() {
        return Err(Error::DenominatorNearZero {
            numerator,
            denominator,
        });
    }
    Ok(ExcessCost {
        ratio: numerator / denominator,
        numerator,
        denominator,
    })
}

/// Maps regrets in `[-grace, 0)` to zero.
pub fn clamp_noise(loss: f64) -> f64 {
    if (-NEGATIVE_LOSS_GRACE..0.0).contains(&loss) {
        0.0
    } else {
        loss
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cones::{ConeBlock, ConeSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    /// `{z ≥ 0, 1ᵀz = 1}` with curvature `p_scale · I`.
    pub(crate) fn simplex(n: usize, p_scale: f64) -> QcpProblem {
        let mut a = DMatrix::zeros(n + 1, n);
        a.row_mut(0).fill(1.0);
        for i in 0..n {
            a[(i + 1, i)] = -1.0;
        }
        let mut b = vec![0.0; n + 1];
        b[0] = 1.0;
        QcpProblem::new(
            DMatrix::identity(n, n) * p_scale,
            vec![0.0; n],
            a,
            b,
            ConeSpec::new(vec![ConeBlock::Zero(1), ConeBlock::NonNeg(n)]).unwrap(),
        )
        .unwrap()
    }

    pub(crate) fn simplex_ctx(n: usize, p_scale: f64) -> DecisionContext {
        DecisionContext::new(simplex(n, p_scale), SolverSettings::default()).unwrap()
    }

    #[test]
    fn regret_examples_on_simplex_lp() {
        let ctx = simplex_ctx(2, 0.0);
        assert_abs_diff_eq!(qspo_loss(&ctx, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(qspo_loss(&ctx, &[2.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(qspo_loss(&ctx, &[0.5, 1.0], &[1.0, 2.0]).unwrap(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn excess_cost_examples() {
        let ctx = simplex_ctx(2, 0.0);
        let costs = vec![vec![1.0, 2.0], vec![3.0, 1.5]];
        let e = excess_cost(&ctx, &costs, &costs).unwrap();
        assert_eq!(e.ratio, 0.0);

        let e = excess_cost(&ctx, &[vec![2.0, 1.0]], &[vec![1.0, 2.0]]).unwrap();
        assert_abs_diff_eq!(e.ratio, 1.0, epsilon = 1e-7);

        let preds = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let base = excess_cost(&ctx, &preds, &costs).unwrap().ratio;
        let lambda = 3.7;
        let scale = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            v.iter().map(|r| r.iter().map(|x| x * lambda).collect()).collect()
        };
        let scaled = excess_cost(&ctx, &scale(&preds), &scale(&costs)).unwrap().ratio;
        assert_abs_diff_eq!(base, scaled, epsilon = 1e-6);
    }

    #[test]
    fn near_zero_denominator_is_reported() {
        assert!(matches!(ratio(1.0, 1e-12), Err(Error::DenominatorNearZero { .. })));
        assert_eq!(ratio(0.0, 0.0).unwrap().ratio, 0.0);
        assert_eq!(ratio(-2.0, -4.0).unwrap().ratio, 0.5);
        assert_eq!(ratio(2.0, -4.0).unwrap().ratio, -0.5);
    }

    #[test]
    fn gradient_vanishes_where_argmin_is_locally_constant() {
        let ctx = simplex_ctx(3, 0.0);
        let (g, degenerate) = qspo_grad(&ctx, &[0.2, 1.0, 1.5], &[0.5, 0.1, 0.9]).unwrap();
        assert!(!degenerate);
        for x in g {
            assert!(x.abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_matches_one_sided_differences_at_floor() {
        // Curved simplex: z*(ĉ) is smooth near an interior optimum.
        let ctx = simplex_ctx(2, 1.0);
        let c = [-0.6, -0.3];
        let (g, _) = qspo_grad(&ctx, &c, &c).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut plus = c.to_vec();
            plus[i] += h;
            let one_sided = qspo_loss(&ctx, &plus, &c).unwrap() / h;
            // Regret is quadratic at its floor: the slope is O(h).
            assert!(one_sided.abs() < 1e-4);
            assert!(g[i].abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_curved_simplex() {
        let ctx = DecisionContext::new(
            simplex(3, 1.0),
            SolverSettings {
                tol_abs: 1e-12,
                tol_rel: 1e-12,
                max_iter: 1_000_000,
                ..Default::default()
            },
        )
        .unwrap();
        let c = [-0.5, -0.2, -0.4];
        let c_hat = [-0.1, -0.5, -0.3];
        let (g, degenerate) = qspo_grad(&ctx, &c_hat, &c).unwrap();
        assert!(!degenerate);
        let h = 1e-5;
        for i in 0..3 {
            let mut p = c_hat.to_vec();
            let mut m = c_hat.to_vec();
            p[i] += h;
            m[i] -= h;
            let fd = (qspo_loss(&ctx, &p, &c).unwrap() - qspo_loss(&ctx, &m, &c).unwrap()) / (2.0 * h);
            assert!(crate::gradcheck::within(g[i], fd, 1e-4, 1e-7), "{i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn cache_rebuild_is_stable_and_consistent() {
        let ctx = simplex_ctx(3, 0.5);
        let costs: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin(), (1.3 * t).cos(), 0.2 * t - 1.0]
            })
            .collect();
        let a = OracleCache::build(&ctx, &costs).unwrap();
        let b = OracleCache::build(&ctx, &costs).unwrap();
        for (x, y) in a.decisions().iter().zip(b.decisions()) {
            assert!((x.objective - y.objective).abs() <= 1e-9);
        }
        assert!(a.consistency_violations(&ctx, 1e-6).is_empty());
        let preds: Vec<Vec<f64>> = costs.iter().map(|c| c.iter().map(|x| x + 0.3).collect()).collect();
        for r in batch_regrets(&ctx, &preds, &a, None).unwrap() {
            assert!(r.loss >= -NEGATIVE_LOSS_GRACE);
        }
    }

    #[test]
    fn clamp_only_touches_noise() {
        assert_eq!(clamp_noise(-1e-7), 0.0);
        assert_eq!(clamp_noise(-1e-3), -1e-3);
        assert_eq!(clamp_noise(0.5), 0.5);
    }
}
