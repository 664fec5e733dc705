use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use decision_boost::boosting::BoostConfig;
use decision_boost::experiments::{motivating, EdgeExponent, ExperimentSpec, Method, ProblemKind, ProblemSizes};
use decision_boost::qcp::SolverSettings;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const ALLOWED_TAUS: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    NetworkFlow,
    Qp,
    Portfolio,
    /// Two-asset example with loss traces and prediction curves.
    Motivating,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NetworkFlow => "network_flow",
            Self::Qp => "qp",
            Self::Portfolio => "portfolio",
            Self::Motivating => "motivating",
        }
    }

    pub fn kind(self) -> Option<ProblemKind> {
        match self {
            Self::NetworkFlow => Some(ProblemKind::NetworkFlow),
            Self::Qp => Some(ProblemKind::Qp),
            Self::Portfolio => Some(ProblemKind::Portfolio),
            Self::Motivating => None,
        }
    }
}

/// Fully resolved `run` configuration; also the `--config` file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Scenario,
    pub tau: f64,
    pub depths: Vec<usize>,
    pub m_train: usize,
    pub m_test: usize,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub n_trees: usize,
    pub edge_exponent: EdgeExponent,
    pub sizes: ProblemSizes,
    pub solver: SolverSettings,
    pub boost: BoostConfig,
    /// Noise standard deviation of the motivating example.
    pub noise_std: f64,
    /// Grid size of the motivating prediction curve.
    pub curve_points: usize,
    pub allow_any_tau: bool,
    pub out: PathBuf,
    pub plot: bool,
    /// Worker threads across trials; `None` runs trials one after another.
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn defaults(problem: Scenario) -> Self {
        let spec = ExperimentSpec::default();
        let motivating = problem == Scenario::Motivating;
        Self {
            problem,
            tau: spec.tau,
            depths: vec![spec.depth],
            m_train: if motivating { 500 } else { spec.m_train },
            m_test: spec.m_test,
            trials: if motivating { 1 } else { spec.trials },
            seed: spec.seed,
            methods: if motivating {
                vec![Method::MseBoost, Method::Dboost]
            } else {
                spec.methods
            },
            n_trees: spec.n_trees,
            edge_exponent: spec.edge_exponent,
            sizes: spec.sizes,
            solver: spec.solver,
            boost: spec.boost,
            noise_std: motivating::NOISE_STD,
            curve_points: 201,
            allow_any_tau: false,
            out: PathBuf::from("results"),
            plot: false,
            jobs: None,
        }
    }

    /// Defaults for the scenario, overlaid with the entries present in `file`.
    pub fn from_json(problem_flag: Option<Scenario>, file: Option<&Value>) -> anyhow::Result<Self> {
        let from_file = match file.and_then(|v| v.get("problem")) {
            Some(p) => Some(serde_json::from_value::<Scenario>(p.clone()).context("config field `problem`")?),
            None => None,
        };
        let problem = problem_flag.or(from_file).unwrap_or(Scenario::Qp);
        let mut base = serde_json::to_value(Self::defaults(problem))?;
        if let Some(file) = file {
            if !file.is_object() {
                bail!("config file must hold a JSON object");
            }
            merge(&mut base, file);
        }
        base["problem"] = serde_json::to_value(problem)?;
        serde_json::from_value(base).context("invalid config")
    }

    pub fn load_file(path: &Path) -> anyhow::Result<Value> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks
    pub fn validate(&self) -> anyhow::Result<()> {
        if !self.allow_any_tau && !ALLOWED_TAUS.contains(&self.tau) {
            bail!("--tau must be one of 0, 0.5, 1 (got {}); pass --allow-any-tau to override", self.tau);
        }
        if self.depths.is_empty() {
            bail!("at least one depth is required");
        }
        if self.methods.is_empty() {
            bail!("at least one method is required");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        if self.problem == Scenario::Motivating {
            if self.methods.iter().any(|m| !matches!(m, Method::MseBoost | Method::Dboost)) {
                bail!("the motivating scenario only runs mse_boost and dboost");
            }
            if self.curve_points < 2 {
                bail!("curve_points must be at least 2");
            }
            if !(self.noise_std >= 0.0) {
                bail!("noise_std must be non-negative");
            }
        }
        for &depth in &self.depths {
            if let Some(spec) = self.spec(depth) {
                spec.validate()?;
            } else {
                BoostConfig {
                    max_depth: depth,
                    ..self.boost
                }
                .validate()?;
            }
        }
        self.solver.validate()?;
        Ok(())
    }

    /// Experiment spec for one depth; `None` for the motivating scenario.
    pub fn spec(&self, depth: usize) -> Option<ExperimentSpec> {
        Some(ExperimentSpec {
            problem: self.problem.kind()?,
            tau: self.tau,
            depth,
            m_train: self.m_train,
            m_test: self.m_test,
            trials: self.trials,
            seed: self.seed,
            methods: self.methods.clone(),
            n_trees: self.n_trees,
            edge_exponent: self.edge_exponent,
            sizes: self.sizes,
            solver: self.solver,
            boost: self.boost,
        })
    }
}

/// Recursively overlays `patch` onto `base`; non-object values replace.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_merge_keeps_defaults() {
        let file = serde_json::json!({"boost": {"eps_loss": 0.01}, "seed": 4});
        let cfg = RunConfig::from_json(None, Some(&file)).unwrap();
        assert_eq!(cfg.boost.eps_loss, 0.01);
        assert_eq!(cfg.boost.eps_beta, BoostConfig::default().eps_beta);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.problem, Scenario::Qp);
    }

    #[test]
    fn unknown_keys_rejected() {
        let file = serde_json::json!({"sede": 4});
        assert!(RunConfig::from_json(None, Some(&file)).is_err());
        let file = serde_json::json!({"boost": {"eps": 4}});
        assert!(RunConfig::from_json(None, Some(&file)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::defaults(Scenario::Portfolio);
        cfg.tau = 0.5;
        cfg.jobs = Some(3);
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(None, Some(&v)).unwrap(), cfg);
    }

    #[test]
    fn tau_restriction() {
        let mut cfg = RunConfig::defaults(Scenario::Qp);
        cfg.tau = 0.7;
        assert!(cfg.validate().is_err());
        cfg.allow_any_tau = true;
        assert!(cfg.validate().is_ok());
    }
}
