//! Finite-difference oracles that only go through [`qcp::solve`].
//!
//! These never touch the implicit-differentiation path and serve as the
//! reference for it in tests and in the `check` self-test.

use nalgebra::DMatrix;

use crate::cones::ConeSpec;
use crate::error::Result;
use crate::qcp::{self, QcpProblem, SolverSettings};

/// Whether `analytic` agrees with `reference` within `max(rel·|reference|, abs)`.
pub fn within(analytic: f64, reference: f64, rel: f64, abs: f64) -> bool {
    (analytic - reference).abs() <= (rel * reference.abs()).max(abs)
}

fn loss_at<L>(problem: &QcpProblem, settings: &SolverSettings, loss: &L) -> Result<f64>
where
    L: Fn(&[f64]) -> f64,
{
    let sol = qcp::solve(problem, settings, None)?;
    Ok(loss(&sol.z))
}

/// Central differences of `loss(z*(c))` along every coordinate of `c`.
pub fn cost_gradient<L>(problem: &QcpProblem, settings: &SolverSettings, h: f64, loss: L) -> Result<Vec<f64>>
where
    L: Fn(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(problem.n_z());
    for i in 0..problem.n_z() {
        let mut plus = problem.c().to_vec();
        let mut minus = plus.clone();
        plus[i] += h;
        minus[i] -= h;
        let fp = loss_at(&problem.with_cost(plus)?, settings, &loss)?;
        let fm = loss_at(&problem.with_cost(minus)?, settings, &loss)?;
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Central differences of `loss(z*(b))` along every coordinate of `b`.
pub fn rhs_gradient<L>(problem: &QcpProblem, settings: &SolverSettings, h: f64, loss: L) -> Result<Vec<f64>>
where
    L: Fn(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(problem.n_y());
    for i in 0..problem.n_y() {
        let mut plus = problem.b().to_vec();
        let mut minus = plus.clone();
        plus[i] += h;
        minus[i] -= h;
        let fp = loss_at(&problem.with_data(None, None, Some(plus))?, settings, &loss)?;
        let fm = loss_at(&problem.with_data(None, None, Some(minus))?, settings, &loss)?;
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Directional derivative of `loss(z*(P))` along the symmetric unit
/// perturbation of entry `(i, j)`.
///
/// Analytic counterpart: `dP[(i,i)]` on the diagonal, `2·dP[(i,j)]` off it.
/// When `P - hE` would leave the PSD cone (e.g. `P = 0`), a second-order
/// one-sided stencil `(-3f(0) + 4f(h) - f(2h)) / 2h` replaces central
/// differences.
pub fn p_entry_derivative<L>(
    problem: &QcpProblem,
    settings: &SolverSettings,
    (i, j): (usize, usize),
    h: f64,
    loss: L,
) -> Result<f64>
where
    L: Fn(&[f64]) -> f64,
{
    let shifted = |t: f64| -> Result<QcpProblem> {
        let mut p = problem.p().clone();
        p[(i, j)] += t;
        if i != j {
            p[(j, i)] += t;
        }
        problem.with_data(Some(p), None, None)
    };
    match shifted(-h) {
        Ok(minus) => {
            let fp = loss_at(&shifted(h)?, settings, &loss)?;
            let fm = loss_at(&minus, settings, &loss)?;
            Ok((fp - fm) / (2.0 * h))
        }
        Err(_) => {
            let f0 = loss_at(problem, settings, &loss)?;
            let f1 = loss_at(&shifted(h)?, settings, &loss)?;
            let f2 = loss_at(&shifted(2.0 * h)?, settings, &loss)?;
            Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
        }
    }
}

/// Central difference of `loss(z*(A))` along entry `(r, j)` of `A`.
pub fn a_entry_derivative<L>(
    problem: &QcpProblem,
    settings: &SolverSettings,
    (r, j): (usize, usize),
    h: f64,
    loss: L,
) -> Result<f64>
where
    L: Fn(&[f64]) -> f64,
{
    let shifted = |t: f64| -> Result<QcpProblem> {
        let mut a = problem.a().clone();
        a[(r, j)] += t;
        problem.with_data(None, Some(a), None)
    };
    let fp = loss_at(&shifted(h)?, settings, &loss)?;
    let fm = loss_at(&shifted(-h)?, settings, &loss)?;
    Ok((fp - fm) / (2.0 * h))
}

/// Central-difference Jacobian of the projection onto `cone`.
pub fn projection_jacobian(cone: &ConeSpec, v: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = v.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut plus = v.to_vec();
        let mut minus = v.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let fp = cone.project(&plus)?;
        let fm = cone.project(&minus)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}
