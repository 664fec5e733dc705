//! Synthetic benchmark generation and trial orchestration.
//!
//! Costs follow a sparse polynomial model in the features,
//! `c = H0 + Σⱼ Hⱼ·x^j + τ·ε` with `ε ~ N(0, I)`, over three decision
//! problems: a regularized network flow, an equality-constrained QP with an
//! estimated curvature matrix, and a risk-capped long-only portfolio.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boosting::{fit_boost, BoostConfig, Ensemble, MseObjective, SpoObjective};
use crate::cones::{ConeBlock, ConeSpec};
use crate::error::{check_dim, Error, Result};
use crate::qcp::{QcpProblem, SolverSettings};
use crate::spo::{excess_cost_cached, DecisionContext, OracleCache};
use crate::trees::{fit_forest, fit_mse_tree, fit_spot_tree_cached, BaseFitter, ForestConfig, Predict};

/// Redraw budget for generators that reject degenerate samples.
const MAX_REDRAWS: usize = 1000;

pub const FEATURE_DIM: usize = 5;
pub const POLY_DEGREE: usize = 3;

/// `c = H0 + Σⱼ Hⱼ·x^j + τ·ε`, with `x^j` taken elementwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub h0: Vec<f64>,
    /// `Hⱼ` for `j = 1..=degree`, each `d_z × d_x`.
    pub h: Vec<DMatrix<f64>>,
    pub tau: f64,
}

impl PolynomialModel {
    /// Coefficients are zero with probability 1/2 and `U(-1, 1)` otherwise.
    pub fn random(h0: Vec<f64>, d_x: usize, degree: usize, tau: f64, rng: &mut ChaCha8Rng) -> Self {
        let d_z = h0.len();
        let h = (0..degree)
            .map(|_| {
                DMatrix::from_fn(d_z, d_x, |_, _| {
                    if rng.random_bool(0.5) {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
            })
            .collect();
        Self { h0, h, tau }
    }

    pub fn d_z(&self) -> usize {
        self.h0.len()
    }

    pub fn d_x(&self) -> usize {
        self.h.first().map_or(0, |m| m.ncols())
    }

    pub fn degree(&self) -> usize {
        self.h.len()
    }

    /// Noise-free cost for one feature vector.
    pub fn mean_cost(&self, x: &[f64]) -> Vec<f64> {
        let mut c = self.h0.clone();
        for (j, hj) in self.h.iter().enumerate() {
            let power = (j + 1) as i32;
            for (r, cr) in c.iter_mut().enumerate() {
                *cr += (0..x.len()).map(|k| hj[(r, k)] * x[k].powi(power)).sum::<f64>();
            }
        }
        c
    }
}

/// i.i.d. `U(-1, 1)` features.
pub fn gen_features(m: usize, d_x: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d_x).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// One noisy cost row per feature row.
pub fn gen_costs(model: &PolynomialModel, x: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    x.iter()
        .map(|xi| {
            check_dim("feature width", model.d_x(), xi.len())?;
            let mut c = model.mean_cost(xi);
            for v in c.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *v += model.tau * e;
            }
            Ok(c)
        })
        .collect()
}

fn normal_vec(n: usize, mean: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dist = Normal::new(mean, 1.0).expect("unit variance");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone().svd(false, false).rank(1e-9)
}

/// Edge-probability rule for the random network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeExponent {
    /// `Pr(i→j) = 0.75^|i−j−1|`.
    #[default]
    AsPrinted,
    /// `Pr(i→j) = 0.75^(|i−j|−1)`, so neighbouring nodes are always linked.
    AdjacentFavored,
}

impl EdgeExponent {
    pub fn probability(self, i: usize, j: usize) -> f64 {
        let (i, j) = (i as f64, j as f64);
        let e = match self {
            Self::AsPrinted => (i - j - 1.0).abs(),
            Self::AdjacentFavored => (i - j).abs() - 1.0,
        };
        0.75f64.powf(e)
    }
}

fn has_path(n_nodes: usize, edges: &[(usize, usize)], from: usize, to: usize) -> bool {
    let mut seen = vec![false; n_nodes];
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        if u == to {
            return true;
        }
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        stack.extend(edges.iter().filter(|e| e.0 == u).map(|e| e.1));
    }
    false
}

/// Unit flow from node 0 to node `n_nodes − 1` over directed `edges`, with
/// `0 ≤ z ≤ 1` and a `½‖z‖²` regularizer.
///
/// Flow balance uses the incidence convention `+1` outgoing, `−1` incoming.
/// The full incidence matrix always has dependent rows (they sum to zero), so
/// only a maximal independent subset of balance rows is kept.
pub fn network_flow_problem(n_nodes: usize, edges: &[(usize, usize)]) -> Result<QcpProblem> {
    if n_nodes < 2 || edges.is_empty() {
        return Err(Error::InvalidProblem("network needs two nodes and an edge".into()));
    }
    if edges.iter().any(|&(i, j)| i == j || i >= n_nodes || j >= n_nodes) {
        return Err(Error::InvalidProblem("edge endpoints must be distinct valid nodes".into()));
    }
    if !has_path(n_nodes, edges, 0, n_nodes - 1) {
        return Err(Error::InvalidProblem("no path from source to sink".into()));
    }
    let d_z = edges.len();
    let mut incidence = DMatrix::zeros(n_nodes, d_z);
    for (k, &(i, j)) in edges.iter().enumerate() {
        incidence[(i, k)] = 1.0;
        incidence[(j, k)] = -1.0;
    }
    let mut supply = vec![0.0; n_nodes];
    supply[0] = 1.0;
    supply[n_nodes - 1] = -1.0;

    let mut kept: Vec<usize> = Vec::new();
    for r in 0..n_nodes {
        let mut trial = kept.clone();
        trial.push(r);
        if rank(&incidence.select_rows(&trial)) == trial.len() {
            kept = trial;
        }
    }
    let n_eq = kept.len();
    let n_rows = n_eq + 2 * d_z;
    let mut a = DMatrix::zeros(n_rows, d_z);
    let mut b = vec![0.0; n_rows];
    for (row, &r) in kept.iter().enumerate() {
        a.row_mut(row).copy_from(&incidence.row(r));
        b[row] = supply[r];
    }
    for k in 0..d_z {
        a[(n_eq + k, k)] = -1.0;
        a[(n_eq + d_z + k, k)] = 1.0;
        b[n_eq + d_z + k] = 1.0;
    }
    let cone = ConeSpec::new(vec![ConeBlock::Zero(n_eq), ConeBlock::NonNeg(2 * d_z)])?;
    QcpProblem::new(DMatrix::identity(d_z, d_z), vec![0.0; d_z], a, b, cone)
}

/// Random directed edges over `n_nodes` nodes, redrawn until a source-to-sink path exists.
pub fn sample_edges(n_nodes: usize, rule: EdgeExponent, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    for _ in 0..MAX_REDRAWS {
        let mut edges = Vec::new();
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                if i != j && rng.random_bool(rule.probability(i + 1, j + 1).min(1.0)) {
                    edges.push((i, j));
                }
            }
        }
        if has_path(n_nodes, &edges, 0, n_nodes - 1) {
            return Ok(edges);
        }
    }
    Err(Error::GenerationFailed(MAX_REDRAWS))
}

/// Network-flow instance with `H0 ~ N(−1, 1)`.
pub fn build_network_flow(
    n_nodes: usize,
    rule: EdgeExponent,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(QcpProblem, PolynomialModel)> {
    let edges = sample_edges(n_nodes, rule, rng)?;
    let problem = network_flow_problem(n_nodes, &edges)?;
    let h0 = normal_vec(edges.len(), -1.0, rng);
    let model = PolynomialModel::random(h0, FEATURE_DIM, POLY_DEGREE, tau, rng);
    Ok((problem, model))
}

/// `(1/n)·LᵀL` with `L ∈ ℝ^{n×d}`, `n = 10·d`, standard normal entries.
pub fn gram_factor(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = 10 * d;
    let l: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    (l.transpose() * l) / n as f64
}

/// Equality-constrained QP: `A ∈ {0,1}^{3×d_z}` with full row rank,
/// `b = A·1`, curvature `P + 0.1·Ξ` where both `P − 0.01·I` and `Ξ` are Gram
/// matrices. Costs have `H0 = 0`.
pub fn build_qp(d_z: usize, tau: f64, rng: &mut ChaCha8Rng) -> Result<(QcpProblem, PolynomialModel)> {
    let n_eq = 3.min(d_z);
    let mut a = None;
    for _ in 0..MAX_REDRAWS {
        let cand = DMatrix::from_fn(n_eq, d_z, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        if rank(&cand) == n_eq {
            a = Some(cand);
            break;
        }
    }
    let a = a.ok_or(Error::GenerationFailed(MAX_REDRAWS))?;
    let b: Vec<f64> = (0..n_eq).map(|r| a.row(r).sum()).collect();
    let base = gram_factor(d_z, rng) + DMatrix::identity(d_z, d_z) * 0.01;
    let xi = gram_factor(d_z, rng);
    let mut p = base + xi * 0.1;
    p = (&p + p.transpose()) * 0.5;
    let problem = QcpProblem::new(p, vec![0.0; d_z], a, b, ConeSpec::new(vec![ConeBlock::Zero(n_eq)])?)?;
    let model = PolynomialModel::random(vec![0.0; d_z], FEATURE_DIM, POLY_DEGREE, tau, rng);
    Ok((problem, model))
}

/// Long-only fully-invested portfolio with risk cap `‖R z‖ ≤ σ`, `RᵀR = V`.
pub fn portfolio_problem(v: &DMatrix<f64>, sigma: f64) -> Result<QcpProblem> {
    let d_z = v.nrows();
    let chol = v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidProblem("covariance is not positive definite".into()))?;
    let r = chol.l().transpose();
    let n_rows = 1 + d_z + 1 + d_z;
    let mut a = DMatrix::zeros(n_rows, d_z);
    let mut b = vec![0.0; n_rows];
    a.row_mut(0).fill(1.0);
    b[0] = 1.0;
    for k in 0..d_z {
        a[(1 + k, k)] = -1.0;
    }
    b[1 + d_z] = sigma;
    a.view_mut((2 + d_z, 0), (d_z, d_z)).copy_from(&(-r));
    let cone = ConeSpec::new(vec![ConeBlock::Zero(1), ConeBlock::NonNeg(d_z), ConeBlock::Soc(1 + d_z)])?;
    QcpProblem::new(DMatrix::zeros(d_z, d_z), vec![0.0; d_z], a, b, cone)
}

/// Smallest variance over the simplex, by projected gradient.
pub fn min_simplex_variance(v: &DMatrix<f64>) -> f64 {
    let n = v.nrows();
    let step = 1.0 / v.norm().max(1e-12);
    let mut z = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..5000 {
        let g = v * &z * 2.0;
        z = project_simplex(&(&z - g * step));
    }
    (z.transpose() * v * &z)[(0, 0)]
}

fn project_simplex(v: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Portfolio instance with `V = LᵀL + 0.01·I`, `L ∈ 4×d_z` uniform on
/// `(-1, 1)`, `σ = √(1ᵀV1) / d_z` and `H0 ~ N(0, 1)`. Redrawn if the risk
/// ball has no interior point on the simplex.
pub fn build_portfolio(d_z: usize, tau: f64, rng: &mut ChaCha8Rng) -> Result<(QcpProblem, PolynomialModel)> {
    for _ in 0..MAX_REDRAWS {
        let l = DMatrix::from_fn(4, d_z, |_, _| rng.random_range(-1.0..1.0));
        let v: DMatrix<f64> = l.transpose() * l + DMatrix::identity(d_z, d_z) * 0.01;
        let sigma = v.sum().sqrt() / d_z as f64;
        if min_simplex_variance(&v) < sigma * sigma * (1.0 - 1e-6) {
            let problem = portfolio_problem(&v, sigma)?;
            let h0 = normal_vec(d_z, 0.0, rng);
            let model = PolynomialModel::random(h0, FEATURE_DIM, POLY_DEGREE, tau, rng);
            return Ok((problem, model));
        }
    }
    Err(Error::GenerationFailed(MAX_REDRAWS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    NetworkFlow,
    Qp,
    Portfolio,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NetworkFlow => "network_flow",
            Self::Qp => "qp",
            Self::Portfolio => "portfolio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cart,
    CartForest,
    Spot,
    SpotForest,
    MseBoost,
    Dboost,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cart,
        Method::CartForest,
        Method::Spot,
        Method::SpotForest,
        Method::MseBoost,
        Method::Dboost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cart => "cart",
            Self::CartForest => "cart_forest",
            Self::Spot => "spot",
            Self::SpotForest => "spot_forest",
            Self::MseBoost => "mse_boost",
            Self::Dboost => "dboost",
        }
    }

    fn stream(self) -> u64 {
        Method::ALL.iter().position(|&m| m == self).expect("listed") as u64 + 1
    }
}

/// Default decision dimension per problem family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSizes {
    pub network_nodes: usize,
    pub qp_dz: usize,
    pub portfolio_dz: usize,
}

impl Default for ProblemSizes {
    fn default() -> Self {
        Self {
            network_nodes: 5,
            qp_dz: 25,
            portfolio_dz: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    pub tau: f64,
    pub depth: usize,
    pub m_train: usize,
    pub m_test: usize,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub n_trees: usize,
    pub edge_exponent: EdgeExponent,
    pub sizes: ProblemSizes,
    pub solver: SolverSettings,
    /// `max_depth` and `seed` are overridden per trial.
    pub boost: BoostConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Qp,
            tau: 0.0,
            depth: 1,
            m_train: 200,
            m_test: 200,
            trials: 3,
            seed: 0,
            methods: Method::ALL.to_vec(),
            n_trees: 100,
            edge_exponent: EdgeExponent::AsPrinted,
            sizes: ProblemSizes::default(),
            solver: SolverSettings::default(),
            boost: BoostConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_train == 0 || self.m_test == 0 || self.trials == 0 {
            return Err(Error::InvalidConfig("m_train, m_test and trials must be at least 1".into()));
        }
        if self.depth > 2 {
            return Err(Error::InvalidConfig("depth must be 0, 1 or 2".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::InvalidConfig("tau must be finite and non-negative".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        self.solver.validate()?;
        BoostConfig {
            max_depth: self.depth,
            ..self.boost
        }
        .validate()
    }

    /// Problem and cost model for one trial.
    pub fn build_instance(&self, rng: &mut ChaCha8Rng) -> Result<(QcpProblem, PolynomialModel)> {
        match self.problem {
            ProblemKind::NetworkFlow => build_network_flow(self.sizes.network_nodes, self.edge_exponent, self.tau, rng),
            ProblemKind::Qp => build_qp(self.sizes.qp_dz, self.tau, rng),
            ProblemKind::Portfolio => build_portfolio(self.sizes.portfolio_dz, self.tau, rng),
        }
    }
}

/// Trial streams share the base seed and differ in the ChaCha stream id, so
/// trials are independent of each other and of their execution order.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn method_rng(seed: u64, trial: usize, method: Method) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(((trial as u64) << 8) | method.stream());
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub train_excess: Option<f64>,
    pub test_excess: Option<f64>,
    /// Regret sums behind the ratios.
    pub train_regret: Option<f64>,
    pub test_regret: Option<f64>,
    /// Trees in the fitted model (stages for boosting).
    pub n_trees: usize,
    pub stop_reason: Option<String>,
    pub runtime_s: f64,
    /// Sum of all training-set prediction entries; identifies the fitted model.
    pub checksum: f64,
    pub loss_trace: Vec<f64>,
    pub trace_consistent: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub d_z: usize,
    pub train_denominator: f64,
    pub test_denominator: f64,
    pub methods: Vec<MethodResult>,
}

impl TrialResult {
    pub fn get(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn failures(&self) -> usize {
        self.methods.iter().filter(|m| m.error.is_some()).count()
    }
}

struct Fitted {
    model: Box<dyn Predict + Sync>,
    n_trees: usize,
    stop_reason: Option<String>,
    loss_trace: Vec<f64>,
    trace_consistent: Option<bool>,
}

impl Predict for Box<dyn Predict + Sync> {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        (**self).predict(x)
    }
}

struct TrialData<'a> {
    ctx: &'a DecisionContext,
    x_train: &'a [Vec<f64>],
    c_train: &'a [Vec<f64>],
    cache_train: &'a OracleCache,
}

fn boosted(ens: Ensemble, cfg: &BoostConfig) -> Fitted {
    Fitted {
        n_trees: ens.n_stages(),
        stop_reason: Some(ens.stop_reason.as_str().into()),
        trace_consistent: Some(ens.is_monotone() && ens.stop_is_consistent(cfg)),
        loss_trace: ens.loss_trace.clone(),
        model: Box::new(ens),
    }
}

fn fit_method(spec: &ExperimentSpec, data: &TrialData<'_>, method: Method, rng: &mut ChaCha8Rng) -> Result<Fitted> {
    let depth = spec.depth;
    let grid = spec.boost.split_grid;
    let single = |model: Box<dyn Predict + Sync>, n_trees| Fitted {
        model,
        n_trees,
        stop_reason: None,
        loss_trace: Vec::new(),
        trace_consistent: None,
    };
    let forest_cfg = ForestConfig {
        n_trees: spec.n_trees,
        max_depth: depth,
        split_grid: grid,
        ..ForestConfig::default()
    };
    let boost_cfg = BoostConfig {
        max_depth: depth,
        max_stages: spec.n_trees,
        seed: rng.random(),
        ..spec.boost
    };
    Ok(match method {
        Method::Cart => single(Box::new(fit_mse_tree(data.x_train, data.c_train, depth, grid)?), 1),
        Method::Spot => single(
            Box::new(fit_spot_tree_cached(data.x_train, data.cache_train, depth, data.ctx, grid)?),
            1,
        ),
        Method::CartForest => {
            let f = fit_forest(data.x_train, BaseFitter::Mse { targets: data.c_train }, &forest_cfg, rng)?;
            let n = f.trees.len();
            single(Box::new(f), n)
        }
        Method::SpotForest => {
            let base = BaseFitter::Spot {
                ctx: data.ctx,
                cache: data.cache_train,
            };
            let f = fit_forest(data.x_train, base, &forest_cfg, rng)?;
            let n = f.trees.len();
            single(Box::new(f), n)
        }
        Method::MseBoost => {
            let ens = fit_boost(data.x_train, &mut MseObjective::new(data.c_train), &boost_cfg)?;
            boosted(ens, &boost_cfg)
        }
        Method::Dboost => {
            let ens = fit_boost(
                data.x_train,
                &mut SpoObjective::new(data.ctx, data.cache_train),
                &boost_cfg,
            )?;
            boosted(ens, &boost_cfg)
        }
    })
}

/// Generates one trial's data, fits every requested method and scores it on
/// both splits. A failing method is recorded and the others still run.
///
/// Training data is drawn before test data from the trial stream and fitting
/// uses separate per-method streams, so test data never influences a model.
pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> Result<TrialResult> {
    spec.validate()?;
    let mut rng = trial_rng(spec.seed, trial);
    let (problem, model) = spec.build_instance(&mut rng)?;
    let x_train = gen_features(spec.m_train, model.d_x(), &mut rng);
    let c_train = gen_costs(&model, &x_train, &mut rng)?;
    let x_test = gen_features(spec.m_test, model.d_x(), &mut rng);
    let c_test = gen_costs(&model, &x_test, &mut rng)?;

    let d_z = problem.n_z();
    let ctx = DecisionContext::new(problem, spec.solver)?;
    let cache_train = OracleCache::build(&ctx, &c_train)?;
    let cache_test = OracleCache::build(&ctx, &c_test)?;
    let data = TrialData {
        ctx: &ctx,
        x_train: &x_train,
        c_train: &c_train,
        cache_train: &cache_train,
    };

    let mut methods = Vec::new();
    for &method in &spec.methods {
        let start = Instant::now();
        let mut mrng = method_rng(spec.seed, trial, method);
        let outcome = fit_method(spec, &data, method, &mut mrng).and_then(|fitted| {
            let p_train = fitted.model.predict_all(&x_train);
            let p_test = fitted.model.predict_all(&x_test);
            let train = excess_cost_cached(&ctx, &p_train, &cache_train)?;
            let test = excess_cost_cached(&ctx, &p_test, &cache_test)?;
            let checksum = p_train.iter().flatten().sum();
            Ok((fitted, train, test, checksum))
        });
        let runtime_s = start.elapsed().as_secs_f64();
        methods.push(match outcome {
            Ok((fitted, train, test, checksum)) => MethodResult {
                method,
                train_excess: Some(train.ratio),
                test_excess: Some(test.ratio),
                train_regret: Some(train.numerator),
                test_regret: Some(test.numerator),
                n_trees: fitted.n_trees,
                stop_reason: fitted.stop_reason,
                runtime_s,
                checksum,
                loss_trace: fitted.loss_trace,
                trace_consistent: fitted.trace_consistent,
                error: None,
            },
            Err(e) => MethodResult {
                method,
                train_excess: None,
                test_excess: None,
                train_regret: None,
                test_regret: None,
                n_trees: 0,
                stop_reason: None,
                runtime_s,
                checksum: f64::NAN,
                loss_trace: Vec::new(),
                trace_consistent: None,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(TrialResult {
        trial,
        d_z,
        train_denominator: cache_train.optimal_total(),
        test_denominator: cache_test.optimal_total(),
        methods,
    })
}

/// Two-asset allocation `min ½‖z‖² − rᵀz` over the simplex, with
/// `r₁ = x + ε₁`, `r₂ = x + sin(3x) + ε₂`, `x ~ U(0, 1)`.
pub mod motivating {
    use super::*;

    /// Standard deviation of the per-asset return noise (variance 0.1).
    pub const NOISE_STD: f64 = 0.316_227_766_016_837_94;

    pub fn problem() -> QcpProblem {
        let mut a = DMatrix::zeros(3, 2);
        a.row_mut(0).fill(1.0);
        a[(1, 0)] = -1.0;
        a[(2, 1)] = -1.0;
        QcpProblem::new(
            DMatrix::identity(2, 2),
            vec![0.0; 2],
            a,
            vec![1.0, 0.0, 0.0],
            ConeSpec::new(vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2)]).expect("valid cone"),
        )
        .expect("valid problem")
    }

    /// Noise-free cost `c = −r` at feature `x`.
    pub fn mean_cost(x: f64) -> Vec<f64> {
        vec![-x, -(x + (3.0 * x).sin())]
    }

    /// `m` samples; noise is drawn independently per asset.
    pub fn data(m: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let noise = Normal::new(0.0, noise_std).expect("finite std");
        let mut xs = Vec::with_capacity(m);
        let mut cs = Vec::with_capacity(m);
        for _ in 0..m {
            let x: f64 = rng.random_range(0.0..1.0);
            let mut c = mean_cost(x);
            for v in c.iter_mut() {
                *v -= noise.sample(rng);
            }
            xs.push(vec![x]);
            cs.push(c);
        }
        (xs, cs)
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TracePoint {
        pub method: Method,
        pub iteration: usize,
        pub loss: f64,
        pub excess_cost: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CurvePoint {
        pub x: f64,
        pub true_cost: Vec<f64>,
        pub mse_boost: Vec<f64>,
        pub dboost: Vec<f64>,
        pub mse_boost_z: Vec<f64>,
        pub dboost_z: Vec<f64>,
    }

    #[derive(Debug, Clone)]
    pub struct Report {
        pub dboost: Ensemble,
        pub mse_boost: Ensemble,
        pub trace: Vec<TracePoint>,
        pub curve: Vec<CurvePoint>,
        pub dboost_final: crate::spo::ExcessCost,
        pub mse_final: crate::spo::ExcessCost,
    }

    fn prefix(ens: &Ensemble, k: usize) -> Ensemble {
        Ensemble {
            stages: ens.stages[..k].to_vec(),
            ..ens.clone()
        }
    }

    /// Fits both boosting variants on `m` samples and records the training
    /// excess cost after every stage plus prediction curves on `grid` points.
    pub fn run(m: usize, noise_std: f64, seed: u64, cfg: &BoostConfig, grid: usize) -> Result<Report> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, c) = data(m, noise_std, &mut rng);
        let ctx = DecisionContext::new(problem(), SolverSettings::default())?;
        let cache = OracleCache::build(&ctx, &c)?;
        let cfg = BoostConfig { seed, ..*cfg };
        let dboost = fit_boost(&x, &mut SpoObjective::new(&ctx, &cache), &cfg)?;
        let mse_boost = fit_boost(&x, &mut MseObjective::new(&c), &cfg)?;

        let mut trace = Vec::new();
        for (method, ens) in [(Method::Dboost, &dboost), (Method::MseBoost, &mse_boost)] {
            for k in 0..=ens.n_stages() {
                let preds = prefix(ens, k).predict_all(&x);
                let e = excess_cost_cached(&ctx, &preds, &cache)?;
                trace.push(TracePoint {
                    method,
                    iteration: k,
                    loss: ens.loss_trace[k],
                    excess_cost: e.ratio,
                });
            }
        }
        let dboost_final = excess_cost_cached(&ctx, &dboost.predict_all(&x), &cache)?;
        let mse_final = excess_cost_cached(&ctx, &mse_boost.predict_all(&x), &cache)?;

        let mut curve = Vec::with_capacity(grid);
        for i in 0..grid {
            let xv = if grid > 1 { i as f64 / (grid - 1) as f64 } else { 0.5 };
            let d = dboost.predict(&[xv]);
            let s = mse_boost.predict(&[xv]);
            curve.push(CurvePoint {
                x: xv,
                true_cost: mean_cost(xv),
                dboost_z: ctx.decide(&d, None)?.z,
                mse_boost_z: ctx.decide(&s, None)?.z,
                mse_boost: s,
                dboost: d,
            });
        }
        Ok(Report {
            dboost,
            mse_boost,
            trace,
            curve,
            dboost_final,
            mse_final,
        })
    }
}
