use decision_boost::cones::{ConeBlock, ConeSpec};
use decision_boost::qcp::{self, QcpProblem, SolverSettings};
use decision_boost::spo::{batch_regrets, qspo_grad, qspo_loss, DecisionContext, OracleCache};
use decision_boost::trees::{self, BaseFitter, ForestConfig, Predict};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cones() -> Vec<ConeSpec> {
    vec![
        ConeSpec::new(vec![ConeBlock::NonNeg(5)]).unwrap(),
        ConeSpec::new(vec![ConeBlock::Soc(5)]).unwrap(),
        ConeSpec::new(vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2), ConeBlock::Soc(2)]).unwrap(),
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two assets on the simplex with curvature `P = p·I`.
fn simplex(p: f64) -> QcpProblem {
    QcpProblem::new(
        DMatrix::identity(3, 3) * p,
        vec![0.0; 3],
        DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]),
        vec![1.0, 0.0, 0.0, 0.0],
        ConeSpec::new(vec![ConeBlock::Zero(1), ConeBlock::NonNeg(3)]).unwrap(),
    )
    .unwrap()
}

fn tight() -> SolverSettings {
    SolverSettings {
        max_iter: 1_000_000,
        tol_abs: 1e-12,
        tol_rel: 1e-12,
        check_every: 10,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dual_projection_is_orthogonal_to_its_residual(v in prop::collection::vec(-10.0f64..10.0, 5)) {
        for cone in cones() {
            let dual = cone.dual();
            let p = dual.project(&v).unwrap();
            let r: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a - b).collect();
            prop_assert!(dot(&p, &r).abs() <= 1e-10 * (1.0 + dot(&v, &v)));
            // p - v is minus the polar component, so it lies in K.
            prop_assert!(cone.contains(&r, 1e-10));
        }
    }

    #[test]
    fn projection_is_non_expansive(
        u in prop::collection::vec(-10.0f64..10.0, 5),
        v in prop::collection::vec(-10.0f64..10.0, 5),
    ) {
        for cone in cones() {
            let (pu, pv) = (cone.project(&u).unwrap(), cone.project(&v).unwrap());
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d(&pu, &pv) <= d(&u, &v) + 1e-12);
        }
    }

    #[test]
    fn dprojection_is_symmetric_with_unit_spectrum(v in prop::collection::vec(-10.0f64..10.0, 5)) {
        for cone in cones() {
            let d = cone.dprojection(&v).unwrap().into_matrix();
            prop_assert!((&d - d.transpose()).abs().max() <= 1e-12);
            let eig = SymmetricEigen::new(d).eigenvalues;
            prop_assert!(eig.iter().all(|&e| (-1e-12..=1.0 + 1e-12).contains(&e)), "{eig}");
        }
    }

    #[test]
    fn qspo_loss_is_never_materially_negative(
        c_hat in prop::collection::vec(-3.0f64..3.0, 3),
        c in prop::collection::vec(-3.0f64..3.0, 3),
        p in 0.0f64..2.0,
    ) {
        let ctx = DecisionContext::new(simplex(p), SolverSettings::default()).unwrap();
        prop_assert!(qspo_loss(&ctx, &c_hat, &c).unwrap() >= -1e-6);
    }
}

#[test]
fn small_step_against_gradient_descends() {
    let ctx = DecisionContext::new(simplex(1.0), tight()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..200 {
        let c: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let c_hat: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let (g, degenerate) = qspo_grad(&ctx, &c_hat, &c).unwrap();
        let gn = dot(&g, &g).sqrt();
        let sol = ctx.decide(&c_hat, None).unwrap();
        let margin = ctx.problem().cone().dual().kink_margin(&sol.w_star[3..]);
        if degenerate || gn < 1e-3 || margin < 1e-2 {
            continue;
        }
        let base = qspo_loss(&ctx, &c_hat, &c).unwrap();
        for eta in [1e-3, 1e-4] {
            let stepped: Vec<f64> = c_hat.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
            let after = qspo_loss(&ctx, &stepped, &c).unwrap();
            assert!(after < base, "eta {eta}: {after} !< {base}");
        }
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} non-degenerate instances");
}

#[test]
fn summed_loss_drops_along_negative_gradient() {
    let ctx = DecisionContext::new(simplex(0.5), tight()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let costs: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
        .collect();
    let cache = OracleCache::build(&ctx, &costs).unwrap();
    let preds = vec![vec![0.3, -0.2, 0.1]; costs.len()];
    let total = |p: &[Vec<f64>]| -> f64 { batch_regrets(&ctx, p, &cache, None).unwrap().iter().map(|r| r.loss).sum() };
    let mut grad = vec![0.0; 3];
    for (p, c) in preds.iter().zip(&costs) {
        let (g, _) = qspo_grad(&ctx, p, c).unwrap();
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let base = total(&preds);
    let best = [1e-3, 1e-2, 1e-1, 1.0]
        .iter()
        .map(|eta| {
            let moved: Vec<Vec<f64>> =
                preds.iter().map(|p| p.iter().zip(&grad).map(|(a, g)| a - eta * g).collect()).collect();
            total(&moved)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(best < base, "{best} !< {base}");
}

#[test]
fn warm_start_from_solution_converges_fast() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let (problem, _) = decision_boost::experiments::build_portfolio(6, 0.5, &mut rng).unwrap();
        let c: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let problem = problem.with_cost(c).unwrap();
        let settings = SolverSettings::default();
        let first = qcp::solve(&problem, &settings, None).unwrap();
        let again = qcp::solve(&problem, &settings, Some(&first.w_star)).unwrap();
        assert!(again.iterations <= 5, "{} iterations", again.iterations);
    }
}

#[test]
fn forest_refits_identically_and_averages_its_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, c) = decision_boost::experiments::motivating::data(150, 0.3, &mut rng);
    let cfg = ForestConfig {
        n_trees: 12,
        max_depth: 2,
        ..ForestConfig::default()
    };
    let fit = |seed| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        trees::fit_forest(&x, BaseFitter::Mse { targets: &c }, &cfg, &mut r).unwrap()
    };
    let f = fit(1);
    assert_eq!(f, fit(1));
    for xi in x.iter().take(20) {
        let mean: Vec<f64> = (0..2)
            .map(|k| f.trees.iter().map(|t| t.predict(xi)[k]).sum::<f64>() / f.trees.len() as f64)
            .collect();
        let p = f.predict(xi);
        assert!(p.iter().zip(&mean).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
}
