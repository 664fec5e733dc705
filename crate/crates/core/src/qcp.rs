//! Convex quadratic cone programs and their Douglas–Rachford solver.
//!
//! Primal-dual pair:
//!
//! ```text
//! minimize   ½ zᵀPz + cᵀz          maximize  -½ zᵀPz - bᵀy
//! s.t.       Az + s = b, s ∈ K     s.t.      Pz + Aᵀy + c = 0, y ∈ K*
//! ```
//!
//! With `u = (z, y)`, `v = (0, s)`, `M = [[P, Aᵀ], [-A, 0]]`, `q = (c, b)` and
//! `C = ℝ^{d_z} × K*`, the splitting iteration is recast as a fixed point of
//!
//! ```text
//! F(w) = (I + M)⁻¹ (2 Π_C(w) - w - q) + w - Π_C(w)
//! ```
//!
//! and the solution is read back as `u* = Π_C(w*)`, `v* = Π_C(w*) - w*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cones::{self, ConeBlock, ConeSpec};
use crate::error::{check_dim, Error, Result};

/// Smallest eigenvalue of `P` tolerated before the problem is rejected.
pub const PSD_TOLERANCE: f64 = 1e-8;
const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QcpProblem {
    p: DMatrix<f64>,
    c: Vec<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
    cone: ConeSpec,
}

impl QcpProblem {
    pub fn new(
        p: DMatrix<f64>,
        c: Vec<f64>,
        a: DMatrix<f64>,
        b: Vec<f64>,
        cone: ConeSpec,
    ) -> Result<Self> {
        let n = c.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::InvalidProblem(format!(
                "P is {}x{} but c has length {n}",
                p.nrows(),
                p.ncols()
            )));
        }
        check_dim("constraint columns", n, a.ncols())?;
        check_dim("right-hand side", a.nrows(), b.len())?;
        check_dim("cone dimension", a.nrows(), cone.dim())?;
        let scale = p.abs().max().max(1.0);
        if (&p - p.transpose()).abs().max() > SYMMETRY_TOLERANCE * scale {
            return Err(Error::InvalidProblem("P is not symmetric".into()));
        }
        if n > 0 {
            let min_eig = p.clone().symmetric_eigenvalues().min();
            if min_eig < -PSD_TOLERANCE {
                return Err(Error::InvalidProblem(format!(
                    "P is not positive semidefinite (smallest eigenvalue {min_eig:.3e})"
                )));
            }
        }
        if p.iter().chain(a.iter()).chain(&c).chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("non-finite problem data".into()));
        }
        Ok(Self { p, c, a, b, cone })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn c(&self) -> &[f64] {
        &self.c
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }
    /// Number of primal variables.
    pub fn n_z(&self) -> usize {
        self.c.len()
    }
    /// Number of constraint rows.
    pub fn n_y(&self) -> usize {
        self.b.len()
    }

    /// Same feasible set and curvature, different linear cost.
    pub fn with_cost(&self, c: Vec<f64>) -> Result<Self> {
        check_dim("cost vector", self.n_z(), c.len())?;
        Ok(Self { c, ..self.clone() })
    }

    /// Replaces `P`, `A` or `b` (whichever is given), re-validating.
    pub fn with_data(
        &self,
        p: Option<DMatrix<f64>>,
        a: Option<DMatrix<f64>>,
        b: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::new(
            p.unwrap_or_else(|| self.p.clone()),
            self.c.clone(),
            a.unwrap_or_else(|| self.a.clone()),
            b.unwrap_or_else(|| self.b.clone()),
            self.cone.clone(),
        )
    }

    /// `½ zᵀPz + cᵀz` for the given cost.
    pub fn objective_with_cost(&self, z: &[f64], c: &[f64]) -> f64 {
        0.5 * quad_form(&self.p, z) + dot(c, z)
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        self.objective_with_cost(z, &self.c)
    }
}

/// Termination controls for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub check_every: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            tol_abs: 1e-8,
            tol_rel: 1e-8,
            check_every: 10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.check_every == 0 {
            return Err(Error::InvalidConfig(
                "max_iter and check_every must be at least 1".into(),
            ));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::InvalidConfig("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcpSolution {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub w_star: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `‖F(w*) - w*‖`
    pub fixed_point_residual: f64,
}

/// Splitting matrix, offset vector and the factorized `(I + M)`.
///
/// `(I + M)⁻¹` depends only on `P` and `A`, so one system serves every cost
/// vector; see [`AssembledSystem::solve_with_cost`].
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    n_z: usize,
    n_y: usize,
    m: DMatrix<f64>,
    q: Vec<f64>,
    /// `(I + M)⁻¹`, row-major.
    inverse: Vec<f64>,
    /// `M⁻¹`, row-major, kept when every cone block is Zero. `Π_C` is then the
    /// identity, so the fixed point solves `M w = -q` directly.
    direct: Option<Vec<f64>>,
    cone: ConeSpec,
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
}

/// Builds `M`, `q` and the inverse of `I + M`.
pub fn assemble(problem: &QcpProblem) -> Result<AssembledSystem> {
    let (n_z, n_y) = (problem.n_z(), problem.n_y());
    let n = n_z + n_y;
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (n_z, n_z)).copy_from(&problem.p);
    m.view_mut((0, n_z), (n_z, n_y)).copy_from(&problem.a.transpose());
    m.view_mut((n_z, 0), (n_y, n_z)).copy_from(&(-&problem.a));

    let i_plus_m = DMatrix::identity(n, n) + &m;
    let inverse = invert(&i_plus_m).ok_or(Error::SingularSplittingMatrix)?;

    let linear = problem.cone.blocks().iter().all(|b| matches!(b, ConeBlock::Zero(_)));
    let direct = if linear {
        invert(&m).map(|inv| inv.transpose().as_slice().to_vec())
    } else {
        None
    };

    let mut q = problem.c.clone();
    q.extend_from_slice(&problem.b);
    Ok(AssembledSystem {
        n_z,
        n_y,
        m,
        q,
        inverse: inverse.transpose().as_slice().to_vec(),
        direct,
        cone: problem.cone.clone(),
        p: problem.p.clone(),
        a: problem.a.clone(),
        b: problem.b.clone(),
    })
}

/// Inverse by LU with a relative pivot threshold.
pub(crate) fn invert(mat: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = mat.nrows();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let lu = mat.clone().lu();
    if !lu_is_regular(lu.u().diagonal().as_slice(), mat) {
        return None;
    }
    lu.try_inverse()
}

pub(crate) fn lu_is_regular(pivots: &[f64], mat: &DMatrix<f64>) -> bool {
    let scale = mat.abs().max().max(f64::MIN_POSITIVE);
    pivots
        .iter()
        .all(|p| p.is_finite() && p.abs() > 1e-13 * scale)
}

impl AssembledSystem {
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn dim(&self) -> usize {
        self.n_z + self.n_y
    }
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }
    pub fn q(&self) -> &[f64] {
        &self.q
    }
    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    /// `(I + M)⁻¹` as a dense matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.inverse)
    }

    /// Solves `(I + M) x = rhs` with the stored factorization.
    pub fn solve_linear(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_dim("linear solve", self.dim(), rhs.len())?;
        let mut out = vec![0.0; self.dim()];
        self.apply_inverse(rhs, &mut out);
        Ok(out)
    }

    fn apply_inverse(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.inverse[i * n..(i + 1) * n];
            *o = row.iter().zip(rhs).map(|(a, b)| a * b).sum();
        }
    }

    fn q_with_cost(&self, c: &[f64]) -> Vec<f64> {
        let mut q = c.to_vec();
        q.extend_from_slice(&self.b);
        q
    }

    /// One application of the fixed-point map `F` with the assembled `q`.
    pub fn fixed_point_step(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_dim("fixed-point iterate", self.dim(), w.len())?;
        let mut scratch = Scratch::new(self.dim());
        let mut out = vec![0.0; self.dim()];
        self.step_into(w, &self.q, &mut scratch, &mut out);
        Ok(out)
    }

    /// `F(w)` for an arbitrary cost vector.
    pub fn fixed_point_step_with_cost(&self, w: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        check_dim("fixed-point iterate", self.dim(), w.len())?;
        check_dim("cost vector", self.n_z, c.len())?;
        let q = self.q_with_cost(c);
        let mut scratch = Scratch::new(self.dim());
        let mut out = vec![0.0; self.dim()];
        self.step_into(w, &q, &mut scratch, &mut out);
        Ok(out)
    }

    /// Computes `F(w)` into `out`, leaving `Π_C(w)` in `scratch.u`.
    fn step_into(&self, w: &[f64], q: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        scratch.u.copy_from_slice(w);
        cones::project_c_in_place(&mut scratch.u, self.n_z, &self.cone);
        for i in 0..w.len() {
            scratch.rhs[i] = 2.0 * scratch.u[i] - w[i] - q[i];
        }
        self.apply_inverse(&scratch.rhs, out);
        for i in 0..w.len() {
            out[i] += w[i] - scratch.u[i];
        }
    }

    /// Runs the fixed-point iteration with the assembled cost.
    pub fn solve(&self, settings: &SolverSettings, warm_start: Option<&[f64]>) -> Result<QcpSolution> {
        self.run(&self.q.clone(), settings, warm_start)
    }

    /// Runs the fixed-point iteration with cost `c` in place of the assembled one.
    pub fn solve_with_cost(
        &self,
        c: &[f64],
        settings: &SolverSettings,
        warm_start: Option<&[f64]>,
    ) -> Result<QcpSolution> {
        check_dim("cost vector", self.n_z, c.len())?;
        self.run(&self.q_with_cost(c), settings, warm_start)
    }

    fn run(&self, q: &[f64], settings: &SolverSettings, warm_start: Option<&[f64]>) -> Result<QcpSolution> {
        settings.validate()?;
        let n = self.dim();
        if let Some(ws) = warm_start {
            check_dim("warm start", n, ws.len())?;
        }
        let mut w = match (&self.direct, warm_start) {
            (Some(direct), _) => {
                let mut w = vec![0.0; n];
                for (i, wi) in w.iter_mut().enumerate() {
                    *wi = -direct[i * n..(i + 1) * n].iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
                }
                w
            }
            (None, Some(ws)) => ws.to_vec(),
            (None, None) => vec![0.0; n],
        };
        let mut next = vec![0.0; n];
        let mut scratch = Scratch::new(n);
        let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

        for k in 0..=settings.max_iter {
            self.step_into(&w, q, &mut scratch, &mut next);
            let check = k % settings.check_every == 0 || k == settings.max_iter;
            if check {
                let fp = next
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let res = self.residuals(&scratch.u, &w, q);
                last = (res.primal, res.dual, fp);
                if res.converged(settings) && fp <= settings.tol_abs {
                    return Ok(self.extract(&w, &scratch.u, k, res, fp));
                }
            }
            std::mem::swap(&mut w, &mut next);
        }
        Err(Error::MaxIterationsExceeded {
            iterations: settings.max_iter,
            primal_residual: last.0,
            dual_residual: last.1,
            fixed_point_residual: last.2,
        })
    }

    fn residuals(&self, u: &[f64], w: &[f64], q: &[f64]) -> Residuals {
        let (nz, ny) = (self.n_z, self.n_y);
        let z = &u[..nz];
        let y = &u[nz..];
        let mut primal = 0.0;
        let mut az_norm = 0.0;
        let mut s_norm = 0.0;
        for r in 0..ny {
            let az: f64 = (0..nz).map(|j| self.a[(r, j)] * z[j]).sum();
            let s = u[nz + r] - w[nz + r];
            primal += (az + s - q[nz + r]).powi(2);
            az_norm += az * az;
            s_norm += s * s;
        }
        let mut dual = 0.0;
        let mut pz_norm = 0.0;
        let mut aty_norm = 0.0;
        for (i, qi) in q.iter().enumerate().take(nz) {
            let pz: f64 = (0..nz).map(|j| self.p[(i, j)] * z[j]).sum();
            let aty: f64 = (0..ny).map(|r| self.a[(r, i)] * y[r]).sum();
            dual += (pz + aty + qi).powi(2);
            pz_norm += pz * pz;
            aty_norm += aty * aty;
        }
        Residuals {
            primal: primal.sqrt(),
            dual: dual.sqrt(),
            primal_scale: az_norm.sqrt().max(s_norm.sqrt()).max(cones::norm(&q[nz..])),
            dual_scale: pz_norm.sqrt().max(aty_norm.sqrt()).max(cones::norm(&q[..nz])),
        }
    }

    fn extract(&self, w: &[f64], u: &[f64], iterations: usize, res: Residuals, fp: f64) -> QcpSolution {
        let nz = self.n_z;
        QcpSolution {
            z: u[..nz].to_vec(),
            y: u[nz..].to_vec(),
            s: u[nz..].iter().zip(&w[nz..]).map(|(a, b)| a - b).collect(),
            w_star: w.to_vec(),
            iterations,
            primal_residual: res.primal,
            dual_residual: res.dual,
            fixed_point_residual: fp,
        }
    }
}

struct Scratch {
    u: Vec<f64>,
    rhs: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }
}

struct Residuals {
    primal: f64,
    dual: f64,
    primal_scale: f64,
    dual_scale: f64,
}

impl Residuals {
    fn converged(&self, s: &SolverSettings) -> bool {
        self.primal <= s.tol_abs + s.tol_rel * self.primal_scale
            && self.dual <= s.tol_abs + s.tol_rel * self.dual_scale
    }
}

/// Assembles and solves in one call.
pub fn solve(
    problem: &QcpProblem,
    settings: &SolverSettings,
    warm_start: Option<&[f64]>,
) -> Result<QcpSolution> {
    assemble(problem)?.solve(settings, warm_start)
}

/// KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Az + s - b‖`
    pub primal: f64,
    /// `‖Pz + Aᵀy + c‖`
    pub dual: f64,
    /// `|½zᵀPz + cᵀz + ½zᵀPz + bᵀy|`
    pub gap: f64,
}

pub fn kkt_residuals(problem: &QcpProblem, sol: &QcpSolution) -> Result<KktResiduals> {
    check_dim("solution z", problem.n_z(), sol.z.len())?;
    check_dim("solution y", problem.n_y(), sol.y.len())?;
    check_dim("solution s", problem.n_y(), sol.s.len())?;
    let z = DVector::from_column_slice(&sol.z);
    let y = DVector::from_column_slice(&sol.y);
    let s = DVector::from_column_slice(&sol.s);
    let b = DVector::from_column_slice(&problem.b);
    let c = DVector::from_column_slice(&problem.c);
    let pz = &problem.p * &z;
    let primal = (&problem.a * &z + s - &b).norm();
    let dual = (&pz + problem.a.transpose() * &y + &c).norm();
    let zpz = z.dot(&pz);
    let gap = (zpz + c.dot(&z) + b.dot(&y)).abs();
    Ok(KktResiduals { primal, dual, gap })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn quad_form(p: &DMatrix<f64>, z: &[f64]) -> f64 {
    let n = z.len();
    let mut acc = 0.0;
    for j in 0..n {
        if z[j] == 0.0 {
            continue;
        }
        let col = p.column(j);
        let mut inner = 0.0;
        for i in 0..n {
            inner += col[i] * z[i];
        }
        acc += inner * z[j];
    }
    acc
}
