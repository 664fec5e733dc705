//! Invariant suite behind the `check` subcommand.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::boosting::{self, BoostConfig};
use crate::cones::{ConeBlock, ConeSpec};
use crate::error::Result;
use crate::experiments::{self, ExperimentSpec, Method, ProblemKind};
use crate::gradcheck;
use crate::qcp::{self, QcpProblem, SolverSettings};
use crate::spo::{DecisionContext, OracleCache};
use crate::trees::{self, BaseFitter, ForestConfig};

pub const PROJECTION_SAMPLES: usize = 1000;
pub const DPROJECTION_SAMPLES: usize = 100;

const PROJECTION_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-6;
/// Points closer than this to a kink are redrawn for the derivative checks.
const KINK_CLEARANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn outcome(name: &str, start: Instant, res: Result<std::result::Result<String, String>>) -> CheckOutcome {
    let (passed, detail) = match res {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(e) => (false, format!("error: {e}")),
    };
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn normal_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn test_cones() -> Vec<(&'static str, ConeSpec)> {
    let cone = |b: Vec<ConeBlock>| ConeSpec::new(b).expect("static cone");
    vec![
        ("zero", cone(vec![ConeBlock::Zero(4)])),
        ("nonneg", cone(vec![ConeBlock::NonNeg(6)])),
        ("soc", cone(vec![ConeBlock::Soc(5)])),
        (
            "product",
            cone(vec![ConeBlock::Zero(2), ConeBlock::NonNeg(3), ConeBlock::Soc(3), ConeBlock::Soc(4)]),
        ),
    ]
}

/// `Π(Π(v)) = Π(v)`, `v = Π_K(v) - Π_K*(-v)` with orthogonal parts, and
/// `‖Π(u) - Π(v)‖ ≤ ‖u - v‖`.
fn projection_invariants(cone: &ConeSpec, rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let dual = cone.dual();
    let n = cone.dim();
    let mut worst = [0.0f64; 4];
    for _ in 0..PROJECTION_SAMPLES {
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let v = normal_vec(n, scale, rng);
        let u = normal_vec(n, scale, rng);
        let pv = cone.project(&v)?;
        let ppv = cone.project(&pv)?;
        worst[0] = worst[0].max(dist(&pv, &ppv) / scale.max(1.0));

        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let pd = dual.project(&neg)?;
        let recon: Vec<f64> = pv.iter().zip(&pd).map(|(a, b)| a - b).collect();
        worst[1] = worst[1].max(dist(&recon, &v) / scale.max(1.0));
        let inner: f64 = pv.iter().zip(&pd).map(|(a, b)| a * b).sum();
        worst[2] = worst[2].max(inner.abs() / (scale * scale).max(1.0));

        let pu = cone.project(&u)?;
        worst[3] = worst[3].max(dist(&pu, &pv) - dist(&u, &v));
    }
    let detail = format!(
        "idempotence {:.1e}, moreau {:.1e}, orthogonality {:.1e}, expansion {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    let ok = worst[..3].iter().all(|&w| w <= PROJECTION_TOL) && worst[3] <= PROJECTION_TOL;
    Ok(if ok { Ok(detail) } else { Err(detail) })
}

fn dprojection_fd(cone: &ConeSpec, rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let n = cone.dim();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < DPROJECTION_SAMPLES {
        let v = normal_vec(n, 1.0, rng);
        if cone.kink_margin(&v) < KINK_CLEARANCE {
            continue;
        }
        let analytic = cone.dprojection(&v)?.into_matrix();
        let fd = gradcheck::projection_jacobian(cone, &v, FD_STEP)?;
        worst = worst.max((analytic - fd).abs().max());
        done += 1;
    }
    let detail = format!("{DPROJECTION_SAMPLES} points, max entry error {worst:.1e}");
    Ok(if worst <= FD_TOL { Ok(detail) } else { Err(detail) })
}

fn random_constrained_qp(rng: &mut ChaCha8Rng) -> Result<QcpProblem> {
    let n = 6;
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let p = &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1;
    let p = (&p + p.transpose()) * 0.5;
    let c = normal_vec(n, 1.0, rng);
    let rows = 2 + n + 4;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = vec![0.0; rows];
    for j in 0..n {
        a[(0, j)] = 1.0;
        a[(1, j)] = rng.sample(StandardNormal);
        a[(2 + j, j)] = -1.0;
    }
    b[0] = 1.0;
    // ‖(z_0, z_1, z_2)‖ ≤ 2
    b[2 + n] = 2.0;
    for k in 0..3 {
        a[(3 + n + k, k)] = -1.0;
    }
    let cone = ConeSpec::new(vec![ConeBlock::Zero(2), ConeBlock::NonNeg(n), ConeBlock::Soc(4)])?;
    QcpProblem::new(p, c, a, b, cone)
}

/// Regret gradient in `ĉ` against central differences on a random conic QP.
fn regret_gradient_fd(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let settings = SolverSettings {
        tol_abs: 1e-10,
        tol_rel: 1e-10,
        ..SolverSettings::default()
    };
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut attempts = 0;
    while checked < 5 && attempts < 50 {
        attempts += 1;
        let problem = match random_constrained_qp(rng) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let ctx = DecisionContext::new(problem.clone(), settings)?;
        let c_true = normal_vec(problem.n_z(), 1.0, rng);
        let oracle = ctx.oracle(&c_true)?;
        let c_hat = problem.c().to_vec();
        let g = ctx.regret_gradient(&c_hat, &oracle, None)?;
        if g.degenerate {
            continue;
        }
        let loss = |z: &[f64]| ctx.realized_objective(z, &oracle);
        let fd = gradcheck::cost_gradient(&problem, &settings, 1e-5, loss)?;
        for (a, r) in g.grad.iter().zip(&fd) {
            let err = (a - r).abs() / (1e-4 * r.abs()).max(1e-7);
            worst = worst.max(err);
        }
        checked += 1;
    }
    let detail = format!("{checked} instances, worst error / tolerance {worst:.2}");
    Ok(if checked == 5 && worst <= 1.0 { Ok(detail) } else { Err(detail) })
}

fn replay_solve(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let problem = random_constrained_qp(rng)?;
    let settings = SolverSettings::default();
    let a = qcp::solve(&problem, &settings, None)?;
    let b = qcp::solve(&problem, &settings, None)?;
    let same = a.z == b.z && a.y == b.y && a.iterations == b.iterations;
    let detail = format!("{} iterations", a.iterations);
    Ok(if same { Ok(detail) } else { Err(detail) })
}

fn replay_fits() -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (x, c) = experiments::motivating::data(120, experiments::motivating::NOISE_STD, &mut rng);
    let ctx = DecisionContext::new(experiments::motivating::problem(), SolverSettings::default())?;
    let cache = OracleCache::build(&ctx, &c)?;

    let forest = |seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ForestConfig {
            n_trees: 8,
            ..ForestConfig::default()
        };
        trees::fit_forest(&x, BaseFitter::Mse { targets: &c }, &cfg, &mut r)
    };
    let same_forest = forest(3)? == forest(3)?;

    let cfg = BoostConfig {
        max_stages: 5,
        ..BoostConfig::default()
    };
    let e1 = boosting::fit_dboost_cached(&x, &cache, &ctx, &cfg)?;
    let e2 = boosting::fit_dboost_cached(&x, &cache, &ctx, &cfg)?;
    let same_boost = e1.to_json() == e2.to_json();

    let detail = format!("forest {same_forest}, dboost {same_boost}");
    Ok(if same_forest && same_boost { Ok(detail) } else { Err(detail) })
}

fn replay_trial() -> Result<std::result::Result<String, String>> {
    let spec = ExperimentSpec {
        problem: ProblemKind::Qp,
        m_train: 40,
        m_test: 40,
        trials: 1,
        seed: 5,
        n_trees: 5,
        methods: vec![Method::Cart, Method::SpotForest, Method::Dboost],
        ..ExperimentSpec::default()
    };
    let strip = |mut t: experiments::TrialResult| {
        t.methods.iter_mut().for_each(|m| m.runtime_s = 0.0);
        t
    };
    let a = strip(experiments::run_trial(&spec, 0)?);
    let b = strip(experiments::run_trial(&spec, 0)?);
    let detail = format!("{} methods", a.methods.len());
    Ok(if a == b && a.failures() == 0 { Ok(detail) } else { Err(detail) })
}

/// Runs every check; deterministic in `seed`.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, cone) in test_cones() {
        let t = Instant::now();
        out.push(outcome(&format!("projection/{name}"), t, projection_invariants(&cone, &mut rng)));
    }
    for (name, cone) in test_cones() {
        let t = Instant::now();
        out.push(outcome(&format!("dprojection/{name}"), t, dprojection_fd(&cone, &mut rng)));
    }
    let t = Instant::now();
    out.push(outcome("gradient/regret", t, regret_gradient_fd(&mut rng)));
    let t = Instant::now();
    out.push(outcome("replay/solve", t, replay_solve(&mut rng)));
    let t = Instant::now();
    out.push(outcome("replay/fits", t, replay_fits()));
    let t = Instant::now();
    out.push(outcome("replay/trial", t, replay_trial()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_green() {
        let res = run_all(0);
        for r in &res {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert_eq!(res.len(), 12);
    }
}
