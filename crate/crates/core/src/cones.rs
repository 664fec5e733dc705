//! Block-structured convex cones, their duals, Euclidean projections and
//! projection derivatives.
//!
//! A [`ConeSpec`] is an ordered product of blocks. The block order fixes the
//! row order of the constraint matrix and the layout of the dual and slack
//! vectors. Second-order blocks use the layout `(t, x)` with `t` first:
//!
//! ```text
//! Soc(n) = { (t, x) ∈ ℝ × ℝ^{n-1} : ‖x‖₂ ≤ t }
//! ```
//!
//! The dual of the zero cone is the whole space, represented by an explicit
//! [`ConeBlock::Free`] block. `Free` only ever arises from [`ConeSpec::dual`];
//! user-built specs are rejected if they contain it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Offset along `t` used to pick the one-sided derivative at SOC kinks.
const SOC_KINK_SHIFT: f64 = 1e-12;

/// One factor of a product cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "dim", rename_all = "snake_case")]
pub enum ConeBlock {
    /// `{0}^n`
    Zero(usize),
    /// `ℝ^n_+`
    NonNeg(usize),
    /// Second-order cone of total dimension `n ≥ 2`.
    Soc(usize),
    /// `ℝ^n`; only produced by [`ConeSpec::dual`].
    Free(usize),
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Zero(n) | ConeBlock::NonNeg(n) | ConeBlock::Soc(n) | ConeBlock::Free(n) => n,
        }
    }

    pub fn dual(&self) -> ConeBlock {
        match *self {
            ConeBlock::Zero(n) => ConeBlock::Free(n),
            ConeBlock::Free(n) => ConeBlock::Zero(n),
            other => other,
        }
    }

    /// Projects `v` in place onto this block.
    pub fn project_in_place(&self, v: &mut [f64]) {
        match *self {
            ConeBlock::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
            ConeBlock::Free(_) => {}
            ConeBlock::NonNeg(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            ConeBlock::Soc(_) => project_soc_in_place(v),
        }
    }

    /// Writes the Jacobian of the projection at `v` into the square view `out`.
    fn dprojection_into(&self, v: &[f64], out: &mut nalgebra::DMatrixViewMut<'_, f64>) {
        out.fill(0.0);
        match *self {
            ConeBlock::Zero(_) => {}
            ConeBlock::Free(_) => out.fill_diagonal(1.0),
            ConeBlock::NonNeg(_) => {
                for (i, &x) in v.iter().enumerate() {
                    if x > 0.0 {
                        out[(i, i)] = 1.0;
                    }
                }
            }
            ConeBlock::Soc(_) => soc_jacobian_into(v, out),
        }
    }
}

/// Euclidean projection onto the second-order cone, in place.
fn project_soc_in_place(v: &mut [f64]) {
    let t = v[0];
    let norm_x = norm(&v[1..]);
    if norm_x <= t {
        return;
    }
    if norm_x <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let alpha = 0.5 * (t + norm_x);
    v[0] = alpha;
    let scale = alpha / norm_x;
    v[1..].iter_mut().for_each(|x| *x *= scale);
}

fn soc_jacobian_into(v: &[f64], out: &mut nalgebra::DMatrixViewMut<'_, f64>) {
    let n = v.len();
    let t = v[0];
    let norm_x = norm(&v[1..]);
    let t_side = t + SOC_KINK_SHIFT;
    if norm_x < t_side {
        out.fill_diagonal(1.0);
        return;
    }
    if norm_x <= -t_side {
        return;
    }
    // |t| < ‖x‖: the projection lands on the cone boundary.
    let ratio = t / norm_x;
    out[(0, 0)] = 0.5;
    for i in 1..n {
        let xi = v[i] / norm_x;
        out[(0, i)] = 0.5 * xi;
        out[(i, 0)] = 0.5 * xi;
        for j in 1..n {
            let xj = v[j] / norm_x;
            let diag = if i == j { 1.0 + ratio } else { 0.0 };
            out[(i, j)] = 0.5 * (diag - ratio * xi * xj);
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Ordered product of cone blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ConeBlock>", into = "Vec<ConeBlock>")]
pub struct ConeSpec {
    blocks: Vec<ConeBlock>,
}

impl ConeSpec {
    /// Builds a primal cone. `Free` blocks are not allowed here.
    pub fn new(blocks: Vec<ConeBlock>) -> Result<Self> {
        for b in &blocks {
            match *b {
                ConeBlock::Free(_) => {
                    return Err(Error::InvalidCone(
                        "free blocks only arise as duals of zero blocks".into(),
                    ))
                }
                ConeBlock::Soc(n) if n < 2 => {
                    return Err(Error::InvalidCone(format!("SOC block needs dim >= 2, got {n}")))
                }
                ref other if other.dim() == 0 => {
                    return Err(Error::InvalidCone("block of dimension 0".into()))
                }
                _ => {}
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(ConeBlock::dim).sum()
    }

    /// Blockwise dual. Zero maps to Free, the others are self-dual.
    pub fn dual(&self) -> ConeSpec {
        ConeSpec {
            blocks: self.blocks.iter().map(ConeBlock::dual).collect(),
        }
    }

    /// Iterates `(offset, block)` pairs.
    pub fn layout(&self) -> impl Iterator<Item = (usize, ConeBlock)> + '_ {
        self.blocks.iter().scan(0usize, |off, b| {
            let start = *off;
            *off += b.dim();
            Some((start, *b))
        })
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        for (off, b) in self.layout() {
            b.project_in_place(&mut v[off..off + b.dim()]);
        }
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("cone projection", self.dim(), v.len())?;
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    pub fn dprojection(&self, v: &[f64]) -> Result<LinearMap> {
        check_dim("cone projection derivative", self.dim(), v.len())?;
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        self.fill_dprojection(v, &mut m, 0);
        Ok(LinearMap(m))
    }

    fn fill_dprojection(&self, v: &[f64], m: &mut DMatrix<f64>, shift: usize) {
        for (off, b) in self.layout() {
            let d = b.dim();
            let mut view = m.view_mut((shift + off, shift + off), (d, d));
            b.dprojection_into(&v[off..off + d], &mut view);
        }
    }

    /// Whether `v` lies in the cone up to `tol`.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        self.layout().all(|(off, b)| {
            let s = &v[off..off + b.dim()];
            match b {
                ConeBlock::Zero(_) => s.iter().all(|x| x.abs() <= tol),
                ConeBlock::Free(_) => true,
                ConeBlock::NonNeg(_) => s.iter().all(|&x| x >= -tol),
                ConeBlock::Soc(_) => norm(&s[1..]) <= s[0] + tol,
            }
        })
    }

    /// Smallest distance of `v` from a kink of the projection onto this cone.
    ///
    /// The projection is differentiable at `v` iff the margin is positive. Free
    /// and zero blocks have no kinks and report `+inf`.
    pub fn kink_margin(&self, v: &[f64]) -> f64 {
        let mut margin = f64::INFINITY;
        for (off, b) in self.layout() {
            let s = &v[off..off + b.dim()];
            match b {
                ConeBlock::NonNeg(_) => {
                    for &x in s {
                        margin = margin.min(x.abs());
                    }
                }
                ConeBlock::Soc(_) => {
                    let nx = norm(&s[1..]);
                    margin = margin.min((nx - s[0].abs()).abs() / std::f64::consts::SQRT_2);
                }
                ConeBlock::Zero(_) | ConeBlock::Free(_) => {}
            }
        }
        margin
    }
}

impl TryFrom<Vec<ConeBlock>> for ConeSpec {
    type Error = Error;

    fn try_from(blocks: Vec<ConeBlock>) -> Result<Self> {
        ConeSpec::new(blocks)
    }
}

impl From<ConeSpec> for Vec<ConeBlock> {
    fn from(c: ConeSpec) -> Self {
        c.blocks
    }
}

/// Dense square linear map, block diagonal by cone block.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap(pub(crate) DMatrix<f64>);

impl LinearMap {
    pub fn identity(n: usize) -> Self {
        LinearMap(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("linear map", self.dim(), v.len())?;
        let out = &self.0 * nalgebra::DVector::from_column_slice(v);
        Ok(out.as_slice().to_vec())
    }
}

/// Projection onto `C = ℝ^{n_free} × K*`.
pub fn project_c(w: &[f64], n_free: usize, cone: &ConeSpec) -> Result<Vec<f64>> {
    check_dim("product-cone projection", n_free + cone.dim(), w.len())?;
    let mut out = w.to_vec();
    project_c_in_place(&mut out, n_free, cone);
    Ok(out)
}

/// In-place projection onto `ℝ^{n_free} × K*` with no dimension check.
pub(crate) fn project_c_in_place(w: &mut [f64], n_free: usize, cone: &ConeSpec) {
    for (off, b) in cone.layout() {
        let start = n_free + off;
        b.dual().project_in_place(&mut w[start..start + b.dim()]);
    }
}

/// Derivative of [`project_c`]: an identity block of size `n_free` followed by
/// the dual-cone projection derivative.
pub fn dprojection_c(w: &[f64], n_free: usize, cone: &ConeSpec) -> Result<LinearMap> {
    check_dim("product-cone projection derivative", n_free + cone.dim(), w.len())?;
    let n = w.len();
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (n_free, n_free)).fill_diagonal(1.0);
    cone.dual().fill_dprojection(&w[n_free..], &mut m, n_free);
    Ok(LinearMap(m))
}
