//! Implicit differentiation of the solver's fixed point.
//!
//! At a fixed point `w* = F(w*)` the implicit function theorem gives
//! `dw* = G⁻¹ (-dq - dM u*)` with
//!
//! ```text
//! G = (I + M) DΠ_C(w*) + I - 2 DΠ_C(w*)
//! ```
//!
//! For a loss `ℓ(z*)`, the adjoint `d = -G⁻ᵀ DΠ_C(w*)ᵀ (∂ℓ/∂z*, 0)` split as
//! `(d_z, d_y)` yields
//!
//! ```text
//! ∂ℓ/∂P = ½ (d_z z*ᵀ + z* d_zᵀ)    ∂ℓ/∂c = d_z
//! ∂ℓ/∂A = y* d_zᵀ - d_y z*ᵀ        ∂ℓ/∂b = d_y
//! ```

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::cones::{self, LinearMap};
use crate::error::{check_dim, Error, Result};
use crate::qcp::{self, AssembledSystem, QcpSolution};

/// `G`, the projection derivative at `w*`, and the LU factors of `Gᵀ`.
#[derive(Debug, Clone)]
pub struct BackwardWorkspace {
    g: DMatrix<f64>,
    dpi: LinearMap,
    g_transpose_lu: LU<f64, Dyn, Dyn>,
    n_z: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataGradients {
    pub dp: DMatrix<f64>,
    pub dc: Vec<f64>,
    pub da: DMatrix<f64>,
    pub db: Vec<f64>,
    pub d_hat_z: Vec<f64>,
    pub d_hat_y: Vec<f64>,
}

impl DataGradients {
    pub fn zeros(n_z: usize, n_y: usize) -> Self {
        Self {
            dp: DMatrix::zeros(n_z, n_z),
            dc: vec![0.0; n_z],
            da: DMatrix::zeros(n_y, n_z),
            db: vec![0.0; n_y],
            d_hat_z: vec![0.0; n_z],
            d_hat_y: vec![0.0; n_y],
        }
    }
}

/// `G = (I + M) D + I - 2D`.
pub fn g_matrix(sys: &AssembledSystem, dpi: &LinearMap) -> DMatrix<f64> {
    let n = sys.dim();
    let d = dpi.matrix();
    let i_plus_m = DMatrix::identity(n, n) + sys.m();
    &i_plus_m * d + DMatrix::identity(n, n) - d * 2.0
}

/// Builds `G` at `w_star` and factorizes its transpose.
pub fn build_workspace(sys: &AssembledSystem, w_star: &[f64]) -> Result<BackwardWorkspace> {
    check_dim("fixed point", sys.dim(), w_star.len())?;
    let dpi = cones::dprojection_c(w_star, sys.n_z(), sys.cone())?;
    let g = g_matrix(sys, &dpi);
    let gt = g.transpose();
    let lu = gt.clone().lu();
    if !qcp::lu_is_regular(lu.u().diagonal().as_slice(), &gt) {
        return Err(Error::SingularSystem);
    }
    Ok(BackwardWorkspace {
        g,
        dpi,
        g_transpose_lu: lu,
        n_z: sys.n_z(),
    })
}

impl BackwardWorkspace {
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn dpi(&self) -> &LinearMap {
        &self.dpi
    }

    /// Pulls `∂ℓ/∂z*` back to gradients with respect to the problem data.
    pub fn backward(&self, sol: &QcpSolution, dl_dz: &[f64]) -> Result<DataGradients> {
        let n_z = self.n_z;
        let n = self.g.nrows();
        let n_y = n - n_z;
        check_dim("loss gradient", n_z, dl_dz.len())?;
        check_dim("solution z", n_z, sol.z.len())?;
        check_dim("solution y", n_y, sol.y.len())?;

        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, n_z).copy_from_slice(dl_dz);
        let rhs = -(self.dpi.matrix().transpose() * rhs);
        let d = self.g_transpose_lu.solve(&rhs).ok_or(Error::SingularSystem)?;
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem);
        }
        let d_z = d.rows(0, n_z).into_owned();
        let d_y = d.rows(n_z, n_y).into_owned();
        let z = DVector::from_column_slice(&sol.z);
        let y = DVector::from_column_slice(&sol.y);

        let dzz = &d_z * z.transpose();
        let dp = (&dzz + dzz.transpose()) * 0.5;
        let da = &y * d_z.transpose() - &d_y * z.transpose();
        Ok(DataGradients {
            dp,
            dc: d_z.as_slice().to_vec(),
            da,
            db: d_y.as_slice().to_vec(),
            d_hat_z: d_z.as_slice().to_vec(),
            d_hat_y: d_y.as_slice().to_vec(),
        })
    }
}

/// Gradient result that tolerates degenerate solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Backprop {
    pub grads: DataGradients,
    /// Set when `G` was singular; `grads` is then all zeros.
    pub degenerate: bool,
}

/// Workspace build plus backward pass, mapping a singular `G` to zero
/// gradients with the degeneracy flag raised.
pub fn differentiate(sys: &AssembledSystem, sol: &QcpSolution, dl_dz: &[f64]) -> Result<Backprop> {
    let attempt = build_workspace(sys, &sol.w_star).and_then(|ws| ws.backward(sol, dl_dz));
    match attempt {
        Ok(grads) => Ok(Backprop {
            grads,
            degenerate: false,
        }),
        Err(Error::SingularSystem) => Ok(Backprop {
            grads: DataGradients::zeros(sys.n_z(), sys.n_y()),
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::{ConeBlock, ConeSpec};
    use crate::gradcheck;
    use crate::qcp::{assemble, QcpProblem, SolverSettings};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eq_qp(rng: &mut ChaCha8Rng, nz: usize, ny: usize) -> QcpProblem {
        let l = DMatrix::from_fn(nz, nz, |_, _| rng.random_range(-1.0..1.0));
        let p = l.transpose() * &l + DMatrix::identity(nz, nz) * 0.2;
        let c = (0..nz).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = DMatrix::from_fn(ny, nz, |_, _| rng.random_range(-1.0..1.0));
        let b = (0..ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        QcpProblem::new(p, c, a, b, ConeSpec::new(vec![ConeBlock::Zero(ny)]).unwrap()).unwrap()
    }

    /// min ½‖z‖² + cᵀz  s.t. z₁ + z₂ = 1, z ≥ 0
    fn two_asset(c: Vec<f64>) -> QcpProblem {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        QcpProblem::new(
            DMatrix::identity(2, 2),
            c,
            a,
            vec![1.0, 0.0, 0.0],
            ConeSpec::new(vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2)]).unwrap(),
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

    #[test]
    fn identity_projection_gives_g_equal_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prob = eq_qp(&mut rng, 4, 2);
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&SolverSettings::default(), None).unwrap();
        let ws = build_workspace(&sys, &sol.w_star).unwrap();
        assert_eq!(ws.dpi().matrix(), &DMatrix::identity(6, 6));
        assert!((ws.g() - sys.m()).abs().max() < 1e-15);
    }

    #[test]
    fn zero_projection_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = assemble(&eq_qp(&mut rng, 3, 1)).unwrap();
        let g = g_matrix(&sys, &LinearMap(DMatrix::zeros(4, 4)));
        assert_eq!(g, DMatrix::identity(4, 4));
    }

    #[test]
    fn g_matches_independent_formula() {
        let prob = two_asset(vec![-0.6, -0.3]);
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&SolverSettings::default(), None).unwrap();
        let ws = build_workspace(&sys, &sol.w_star).unwrap();
        let n = 5;
        let d = ws.dpi().matrix();
        for i in 0..n {
            for j in 0..n {
                let mut expected = if i == j { 1.0 } else { 0.0 };
                for k in 0..n {
                    let ipm = sys.m()[(i, k)] + if i == k { 1.0 } else { 0.0 };
                    expected += ipm * d[(k, j)];
                }
                expected -= 2.0 * d[(i, j)];
                assert_abs_diff_eq!(ws.g()[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero() {
        let prob = two_asset(vec![-0.6, -0.3]);
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&SolverSettings::default(), None).unwrap();
        let g = differentiate(&sys, &sol, &[0.0, 0.0]).unwrap();
        assert!(!g.degenerate);
        assert_eq!(g.grads, DataGradients::zeros(2, 3));
    }

    #[test]
    fn unconstrained_sign_is_negative() {
        // z* = -c, so ∂(g z*)/∂c = -g.
        let prob = QcpProblem::new(
            DMatrix::identity(1, 1),
            vec![0.3],
            DMatrix::zeros(0, 1),
            vec![],
            ConeSpec::new(vec![]).unwrap(),
        )
        .unwrap();
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&SolverSettings::default(), None).unwrap();
        let g = differentiate(&sys, &sol, &[2.0]).unwrap();
        assert_abs_diff_eq!(g.grads.dc[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn equality_qp_matches_kkt_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let prob = eq_qp(&mut rng, 6, 2);
            let sys = assemble(&prob).unwrap();
            let sol = sys.solve(&SolverSettings::default(), None).unwrap();
            let dl: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = differentiate(&sys, &sol, &dl).unwrap().grads;

            let mut kkt = DMatrix::zeros(8, 8);
            kkt.view_mut((0, 0), (6, 6)).copy_from(prob.p());
            kkt.view_mut((0, 6), (6, 2)).copy_from(&prob.a().transpose());
            kkt.view_mut((6, 0), (2, 6)).copy_from(prob.a());
            let inv = kkt.try_inverse().unwrap();
            let sens = -inv.view((0, 0), (6, 6)) * DVector::from_column_slice(&dl);
            for i in 0..6 {
                assert_abs_diff_eq!(g.dc[i], sens[i], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn two_asset_cost_gradient_matches_finite_differences() {
        let prob = two_asset(vec![-0.6, -0.3]);
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&tight(), None).unwrap();
        let weights = [0.7, -1.3];
        let g = differentiate(&sys, &sol, &weights).unwrap().grads;
        let loss = |z: &[f64]| weights[0] * z[0] + weights[1] * z[1];
        let fd = gradcheck::cost_gradient(&prob, &tight(), 1e-5, loss).unwrap();
        for (a, b) in g.dc.iter().zip(&fd) {
            let tol = (1e-4 * b.abs()).max(1e-7);
            assert!((a - b).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn backward_is_linear_in_loss_gradient() {
        let prob = two_asset(vec![-0.6, -0.3]);
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&SolverSettings::default(), None).unwrap();
        let ws = build_workspace(&sys, &sol.w_star).unwrap();
        let (g1, g2, alpha) = ([0.4, -0.2], [1.5, 0.3], 2.5);
        let combo = [alpha * g1[0] + g2[0], alpha * g1[1] + g2[1]];
        let a = ws.backward(&sol, &g1).unwrap();
        let b = ws.backward(&sol, &g2).unwrap();
        let c = ws.backward(&sol, &combo).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(c.dc[i], alpha * a.dc[i] + b.dc[i], epsilon = 1e-12);
        }
        for i in 0..3 {
            assert_abs_diff_eq!(c.db[i], alpha * a.db[i] + b.db[i], epsilon = 1e-12);
        }
        assert!((&c.da - (&a.da * alpha + &b.da)).abs().max() < 1e-12);
        assert!((&c.dp - (&a.dp * alpha + &b.dp)).abs().max() < 1e-12);
        assert_eq!(c.dp, c.dp.transpose());
    }

    #[test]
    fn wrong_gradient_length_is_rejected() {
        let prob = two_asset(vec![-0.6, -0.3]);
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&SolverSettings::default(), None).unwrap();
        let ws = build_workspace(&sys, &sol.w_star).unwrap();
        assert!(matches!(
            ws.backward(&sol, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn singular_g_yields_flagged_zero_gradient() {
        // Zero curvature and no constraints: M = 0 and G = 0.
        let prob = QcpProblem::new(
            DMatrix::zeros(2, 2),
            vec![0.0, 0.0],
            DMatrix::zeros(0, 2),
            vec![],
            ConeSpec::new(vec![]).unwrap(),
        )
        .unwrap();
        let sys = assemble(&prob).unwrap();
        let sol = sys.solve(&SolverSettings::default(), None).unwrap();
        assert!(matches!(
            build_workspace(&sys, &sol.w_star),
            Err(Error::SingularSystem)
        ));
        let g = differentiate(&sys, &sol, &[1.0, 1.0]).unwrap();
        assert!(g.degenerate);
        assert_eq!(g.grads, DataGradients::zeros(2, 0));
    }
}
