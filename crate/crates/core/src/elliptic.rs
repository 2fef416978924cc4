//! Coefficient fields and the discrete operator `−div(A∇·)` with zero
//! Dirichlet data.
//!
//! The operator is stored in energy scaling: `K = h^N · L_h`, where `L_h` is
//! the finite-difference operator. Loads are therefore nodal masses, so a
//! lumped atom enters without any `1/h^N` factor.
//!
//! Per cell the bilinear form is
//! `h^N [ Σ_k A_kk mean_e(Δ_e u/h)(Δ_e v/h) + Σ_{k≠l} A_kl ḡ_k(u) ḡ_l(v) ]`,
//! with `e` running over the cell edges along axis `k`, `ḡ_k` the mean of those
//! edge quotients and `A` averaged over the cell vertices. For `A = I` this is
//! the standard `2N+1`-point stencil, and for diagonal `A` the matrix is an
//! M-matrix.

use std::sync::OnceLock;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{MatMut, Side};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::domain::{Domain, ScalarField, MAX_DIM};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::measure::DiscreteMeasure;

pub type Matrix3 = [[f64; MAX_DIM]; MAX_DIM];

const NONE: usize = usize::MAX;

fn identity3() -> Matrix3 {
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for (k, row) in m.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    m
}

#[derive(Debug, Clone)]
enum Repr {
    Constant(Matrix3),
    Nodal(Vec<Matrix3>),
}

/// Symmetric matrix field `A(x)`, constant or given per node.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    dim: usize,
    repr: Repr,
}

impl CoefficientField {
    pub fn identity(dim: usize) -> Self {
        CoefficientField {
            dim,
            repr: Repr::Constant(identity3()),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (k, &d) in diag.iter().enumerate() {
            m[k][k] = d;
        }
        CoefficientField {
            dim: diag.len(),
            repr: Repr::Constant(m),
        }
    }

    /// Constant matrix given row by row.
    pub fn constant(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument(format!(
                "coefficient must be a square matrix of size 1 to 3 (got {rows:?})"
            )));
        }
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (k, row) in rows.iter().enumerate() {
            m[k][..dim].copy_from_slice(row);
        }
        Ok(CoefficientField {
            dim,
            repr: Repr::Constant(m),
        })
    }

    pub fn from_fn(dom: &Domain, f: impl Fn(&[f64]) -> Matrix3) -> Self {
        let values = (0..dom.node_count())
            .map(|i| f(&dom.coords(i)[..dom.dim()]))
            .collect();
        CoefficientField {
            dim: dom.dim(),
            repr: Repr::Nodal(values),
        }
    }

    /// Diagonal field with one expression per axis.
    pub fn from_diagonal_exprs(dom: &Domain, exprs: &[Expression]) -> Result<Self> {
        if exprs.len() != dom.dim() {
            return Err(Error::Config(format!(
                "coefficient.exprs needs {} entries for a diagonal field (got {})",
                dom.dim(),
                exprs.len()
            )));
        }
        let points: Vec<[f64; MAX_DIM]> = (0..dom.node_count()).map(|i| dom.coords(i)).collect();
        let mut values = vec![[[0.0; MAX_DIM]; MAX_DIM]; dom.node_count()];
        for (k, e) in exprs.iter().enumerate() {
            let col = e.eval_many(points.iter().map(|p| &p[..dom.dim()]))?;
            for (m, v) in values.iter_mut().zip(col) {
                m[k][k] = v;
            }
        }
        Ok(CoefficientField {
            dim: dom.dim(),
            repr: Repr::Nodal(values),
        })
    }

    /// Full field with `dim × dim` expressions given row by row.
    pub fn from_matrix_exprs(dom: &Domain, exprs: &[Vec<Expression>]) -> Result<Self> {
        let dim = dom.dim();
        if exprs.len() != dim || exprs.iter().any(|r| r.len() != dim) {
            return Err(Error::Config(format!(
                "coefficient.exprs needs a {dim}x{dim} matrix of expressions"
            )));
        }
        let points: Vec<[f64; MAX_DIM]> = (0..dom.node_count()).map(|i| dom.coords(i)).collect();
        let mut values = vec![[[0.0; MAX_DIM]; MAX_DIM]; dom.node_count()];
        for (k, row) in exprs.iter().enumerate() {
            for (l, e) in row.iter().enumerate() {
                let col = e.eval_many(points.iter().map(|p| &p[..dim]))?;
                for (m, v) in values.iter_mut().zip(col) {
                    m[k][l] = v;
                }
            }
        }
        Ok(CoefficientField {
            dim,
            repr: Repr::Nodal(values),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, node: usize) -> Matrix3 {
        match &self.repr {
            Repr::Constant(m) => *m,
            Repr::Nodal(v) => v[node],
        }
    }

    fn node_count(&self) -> Option<usize> {
        match &self.repr {
            Repr::Constant(_) => None,
            Repr::Nodal(v) => Some(v.len()),
        }
    }

    /// Whether every off-diagonal entry vanishes.
    pub fn is_diagonal(&self) -> bool {
        let off = |m: &Matrix3| {
            (0..self.dim).all(|k| (0..self.dim).all(|l| k == l || m[k][l] == 0.0))
        };
        match &self.repr {
            Repr::Constant(m) => off(m),
            Repr::Nodal(v) => v.iter().all(off),
        }
    }

    fn matrices(&self) -> Box<dyn Iterator<Item = (usize, Matrix3)> + '_> {
        match &self.repr {
            Repr::Constant(m) => Box::new(std::iter::once((0, *m))),
            Repr::Nodal(v) => Box::new(v.iter().copied().enumerate()),
        }
    }
}

/// Ellipticity bounds `(α, β)` with `α|ξ|² ≤ A ξ·ξ ≤ β|ξ|²` at every node.
///
/// Uses exact eigenvalues, so the bounds are the tightest possible.
pub fn validate_ellipticity(a: &CoefficientField) -> Result<(f64, f64)> {
    let dim = a.dim;
    let mut alpha = f64::INFINITY;
    let mut beta = 0.0f64;
    for (node, m) in a.matrices() {
        let scale = (0..dim)
            .flat_map(|k| (0..dim).map(move |l| (k, l)))
            .map(|(k, l)| m[k][l].abs())
            .fold(0.0, f64::max);
        for k in 0..dim {
            for l in 0..k {
                if !((m[k][l] - m[l][k]).abs() <= 1e-12 * scale.max(1.0)) {
                    return Err(Error::NotSymmetric { node });
                }
            }
        }
        let (lo, hi) = if dim == 1 {
            (m[0][0], m[0][0])
        } else {
            let mat = DMatrix::from_fn(dim, dim, |k, l| m[k][l]);
            let eig = SymmetricEigen::new(mat).eigenvalues;
            (eig.min(), eig.max())
        };
        if !(lo > 0.0) {
            return Err(Error::NotElliptic {
                node,
                eigenvalue: lo,
            });
        }
        alpha = alpha.min(lo);
        beta = beta.max(hi);
    }
    Ok((alpha, beta))
}

/// Sparse symmetric operator over the interior nodes.
///
/// The pattern couples every pair of vertices sharing a cell, so value
/// arrays for other cell-local forms (such as the `p`-energy Hessian) fit
/// the same structure and reuse its symbolic factorization.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    dom: Domain,
    free: Vec<usize>,
    slot: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    diag: Vec<usize>,
    vals: Vec<f64>,
    m_matrix: bool,
    symbolic: OnceLock<SymbolicLlt<usize>>,
}

/// Local element matrix of the form for one cell coefficient.
pub(crate) fn element_matrix(dim: usize, h: f64, a: &Matrix3) -> Vec<f64> {
    let nv = 1usize << dim;
    let scale = h.powi(dim as i32 - 2);
    let edge = scale / (1usize << (dim - 1)) as f64;
    let mean = 1.0 / (1usize << (dim - 1)) as f64;
    let sign = |v: usize, k: usize| if v & (1 << k) != 0 { mean } else { -mean };
    let mut ke = vec![0.0; nv * nv];
    for va in 0..nv {
        for vb in 0..nv {
            let mut s = 0.0;
            for k in 0..dim {
                if va == vb {
                    s += edge * a[k][k];
                } else if va ^ vb == 1 << k {
                    s -= edge * a[k][k];
                }
                for l in 0..dim {
                    if l != k {
                        s += scale * a[k][l] * sign(va, k) * sign(vb, l);
                    }
                }
            }
            ke[va * nv + vb] = s;
        }
    }
    ke
}

/// Cell mean of `A` over its vertices.
fn cell_coefficient(a: &CoefficientField, verts: &[usize]) -> Matrix3 {
    match &a.repr {
        Repr::Constant(m) => *m,
        Repr::Nodal(v) => {
            let mut m = [[0.0; MAX_DIM]; MAX_DIM];
            for &i in verts {
                for k in 0..MAX_DIM {
                    for l in 0..MAX_DIM {
                        m[k][l] += v[i][k][l];
                    }
                }
            }
            let w = 1.0 / verts.len() as f64;
            for row in m.iter_mut() {
                for x in row.iter_mut() {
                    *x *= w;
                }
            }
            m
        }
    }
}

impl LinearSystem {
    /// Pattern with all values zero.
    pub(crate) fn pattern(dom: &Domain) -> Self {
        Self::pattern_for(dom, dom.interior_nodes())
    }

    /// Pattern over the given unknowns; every other node is held fixed.
    pub(crate) fn pattern_for(dom: &Domain, free: Vec<usize>) -> Self {
        let mut slot = vec![NONE; dom.node_count()];
        for (f, &node) in free.iter().enumerate() {
            slot[node] = f;
        }
        let n = free.len();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        dom.for_each_cell(|verts| {
            for &a in verts {
                let fa = slot[a];
                if fa == NONE {
                    continue;
                }
                for &b in verts {
                    let fb = slot[b];
                    if fb != NONE {
                        cols[fa].push(fb);
                    }
                }
            }
        });
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut diag = Vec::with_capacity(n);
        col_ptr.push(0);
        for (j, mut c) in cols.into_iter().enumerate() {
            c.sort_unstable();
            c.dedup();
            let start = row_idx.len();
            diag.push(start + c.binary_search(&j).expect("diagonal is in the pattern"));
            row_idx.extend(c);
            col_ptr.push(row_idx.len());
        }
        let nnz = row_idx.len();
        LinearSystem {
            dom: dom.clone(),
            free,
            slot,
            col_ptr,
            row_idx,
            diag,
            vals: vec![0.0; nnz],
            m_matrix: true,
            symbolic: OnceLock::new(),
        }
    }

    /// Position of the entry `(free_i, free_j)` in the value array.
    pub(crate) fn position(&self, fi: usize, fj: usize) -> usize {
        let (s, e) = (self.col_ptr[fj], self.col_ptr[fj + 1]);
        s + self.row_idx[s..e]
            .binary_search(&fi)
            .expect("entry lies in the cell pattern")
    }

    /// Scatters a cell-local matrix into `vals`, dropping boundary rows and
    /// columns.
    pub(crate) fn scatter(&self, verts: &[usize], ke: &[f64], vals: &mut [f64]) {
        let nv = verts.len();
        for (va, &a) in verts.iter().enumerate() {
            let fa = self.slot[a];
            if fa == NONE {
                continue;
            }
            for (vb, &b) in verts.iter().enumerate() {
                let fb = self.slot[b];
                if fb == NONE {
                    continue;
                }
                let v = ke[va * nv + vb];
                if v != 0.0 {
                    vals[self.position(fa, fb)] += v;
                }
            }
        }
    }

    /// Same pattern and symbolic factorization, new values.
    pub(crate) fn with_values(&self, vals: Vec<f64>) -> Self {
        assert_eq!(vals.len(), self.vals.len());
        let mut out = self.clone();
        out.m_matrix = off_diagonals_nonpositive(&out.col_ptr, &out.row_idx, &vals);
        out.vals = vals;
        out
    }

    pub fn domain(&self) -> &Domain {
        &self.dom
    }

    /// Number of unknowns.
    pub fn size(&self) -> usize {
        self.free.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    /// Unknown index of `node`, or `None` on the boundary.
    pub fn slot(&self, node: usize) -> Option<usize> {
        match self.slot[node] {
            NONE => None,
            f => Some(f),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Whether every off-diagonal entry is nonpositive.
    pub fn is_m_matrix(&self) -> bool {
        self.m_matrix
    }

    /// Entry of the finite-difference operator `L_h = K / h^N` between two
    /// interior nodes.
    pub fn stencil_entry(&self, i: usize, j: usize) -> f64 {
        match (self.slot(i), self.slot(j)) {
            (Some(fi), Some(fj)) => {
                let (s, e) = (self.col_ptr[fj], self.col_ptr[fj + 1]);
                match self.row_idx[s..e].binary_search(&fi) {
                    Ok(p) => self.vals[s + p] / self.dom.cell_volume(),
                    Err(_) => 0.0,
                }
            }
            _ => 0.0,
        }
    }

    /// `K u` for a nodal vector; boundary entries of `u` are ignored and
    /// boundary entries of the result are zero.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dom.node_count()];
        for (fj, &nj) in self.free.iter().enumerate() {
            let uj = u[nj];
            if uj == 0.0 {
                continue;
            }
            for p in self.col_ptr[fj]..self.col_ptr[fj + 1] {
                out[self.free[self.row_idx[p]]] += self.vals[p] * uj;
            }
        }
        out
    }

    /// `vᵀ K u`, the discrete `∫ A∇u·∇v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let ku = self.apply(u);
        self.free.iter().map(|&i| ku[i] * v[i]).sum()
    }

    pub(crate) fn symbolic(&self) -> Result<&SymbolicLlt<usize>> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s);
        }
        let mat = self.faer_matrix(self.vals.clone());
        let sym = SymbolicLlt::try_new(mat.symbolic(), Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(self.symbolic.get_or_init(|| sym))
    }

    fn faer_matrix(&self, vals: Vec<f64>) -> SparseColMat<usize, f64> {
        let n = self.size();
        let sym = SymbolicSparseColMat::new_checked(
            n,
            n,
            self.col_ptr.clone(),
            None,
            self.row_idx.clone(),
        );
        SparseColMat::new(sym, vals)
    }

    /// Cholesky factor of `K + diag(shift)`, with `shift` indexed by node.
    pub fn factor(&self, shift: Option<&[f64]>) -> Result<Factor> {
        let sym = self.symbolic()?.clone();
        let mut vals = self.vals.clone();
        if let Some(s) = shift {
            for (f, &node) in self.free.iter().enumerate() {
                vals[self.diag[f]] += s[node];
            }
        }
        let mat = self.faer_matrix(vals);
        let llt = Llt::try_new_with_symbolic(sym, mat.as_ref(), Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Factor {
            llt,
            free: self.free.clone(),
            nodes: self.dom.node_count(),
        })
    }
}

fn off_diagonals_nonpositive(col_ptr: &[usize], row_idx: &[usize], vals: &[f64]) -> bool {
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (0..col_ptr.len() - 1).all(|j| {
        (col_ptr[j]..col_ptr[j + 1]).all(|p| row_idx[p] == j || vals[p] <= 1e-14 * scale)
    })
}

/// Sparse Cholesky factor over the interior nodes.
pub struct Factor {
    llt: Llt<usize, f64>,
    free: Vec<usize>,
    nodes: usize,
}

impl Factor {
    /// Solves with a nodal right-hand side; boundary entries of the result
    /// are zero.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.free.iter().map(|&i| rhs[i]).collect();
        let n = x.len();
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        let mut out = vec![0.0; self.nodes];
        for (f, &i) in self.free.iter().enumerate() {
            out[i] = x[f];
        }
        out
    }
}

/// Assembles `K` for `−div(A∇·)` on `dom`.
pub fn assemble(dom: &Domain, a: &CoefficientField) -> Result<LinearSystem> {
    if a.dim() != dom.dim() {
        return Err(Error::InvalidArgument(format!(
            "coefficient of dimension {} on a {}-dimensional domain",
            a.dim(),
            dom.dim()
        )));
    }
    if let Some(n) = a.node_count() {
        if n != dom.node_count() {
            return Err(Error::DomainMismatch);
        }
    }
    validate_ellipticity(a)?;
    let mut sys = LinearSystem::pattern(dom);
    let mut vals = vec![0.0; sys.vals.len()];
    let constant = match &a.repr {
        Repr::Constant(m) => Some(element_matrix(dom.dim(), dom.h(), m)),
        Repr::Nodal(_) => None,
    };
    dom.for_each_cell(|verts| match &constant {
        Some(ke) => sys.scatter(verts, ke, &mut vals),
        None => {
            let ke = element_matrix(dom.dim(), dom.h(), &cell_coefficient(a, verts));
            sys.scatter(verts, &ke, &mut vals);
        }
    });
    sys.m_matrix = off_diagonals_nonpositive(&sys.col_ptr, &sys.row_idx, &vals);
    sys.vals = vals;
    Ok(sys)
}

/// Right-hand side of a linear solve.
#[derive(Debug, Clone, Copy)]
pub enum Load<'a> {
    /// Lumped nodal masses.
    Measure(&'a DiscreteMeasure),
    /// Pointwise density, integrated with the nodal control volumes.
    Density(&'a ScalarField),
    /// Raw nodal masses.
    Nodal(&'a [f64]),
}

impl Load<'_> {
    pub fn masses(&self, dom: &Domain) -> Result<Vec<f64>> {
        match self {
            Load::Measure(m) => {
                if m.domain() != dom {
                    return Err(Error::DomainMismatch);
                }
                Ok(m.masses().to_vec())
            }
            Load::Density(f) => {
                if f.domain() != dom {
                    return Err(Error::DomainMismatch);
                }
                Ok(f.values()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * dom.node_volume(i))
                    .collect())
            }
            Load::Nodal(v) => {
                if v.len() != dom.node_count() {
                    return Err(Error::DomainMismatch);
                }
                Ok(v.to_vec())
            }
        }
    }
}

fn free_norm(sys: &LinearSystem, v: &[f64]) -> f64 {
    sys.free.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()
}

/// Solves `K u = b` to `‖Ku − b‖ ≤ tol ‖b‖` over the interior nodes.
///
/// Direct factorization followed by up to three steps of iterative
/// refinement.
pub fn solve_linear(sys: &LinearSystem, load: Load<'_>, tol: f64) -> Result<ScalarField> {
    let b = load.masses(&sys.dom)?;
    let bnorm = free_norm(sys, &b);
    if bnorm == 0.0 {
        return Ok(ScalarField::zeros(&sys.dom));
    }
    let factor = sys.factor(None)?;
    let mut u = factor.solve(&b);
    let mut history = Vec::new();
    for _ in 0..4 {
        let ku = sys.apply(&u);
        let r: Vec<f64> = b.iter().zip(&ku).map(|(x, y)| x - y).collect();
        let rel = free_norm(sys, &r) / bnorm;
        history.push(rel);
        if rel <= tol {
            return ScalarField::new(&sys.dom, u);
        }
        let du = factor.solve(&r);
        for (x, d) in u.iter_mut().zip(du) {
            *x += d;
        }
    }
    Err(Error::LinearSolve { residuals: history })
}

/// `Σ_k mean_e (Δ_e u / h)²` over the edges of one cell.
///
/// Summed against `h^N` this reproduces the energy `uᵀKu` for `A = I`.
pub fn cell_gradient_sq(dom: &Domain, u: &[f64], verts: &[usize]) -> f64 {
    let dim = dom.dim();
    let nv = verts.len();
    let h2 = dom.h() * dom.h();
    let per_axis = (nv / 2) as f64;
    let mut s = 0.0;
    for k in 0..dim {
        let bit = 1 << k;
        let mut acc = 0.0;
        for v in 0..nv {
            if v & bit == 0 {
                let d = u[verts[v | bit]] - u[verts[v]];
                acc += d * d;
            }
        }
        s += acc / per_axis;
    }
    s / h2
}
