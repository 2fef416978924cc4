//! Uniform tensor grids on axis-aligned boxes.
//!
//! Nodes are numbered with axis 0 varying fastest: `idx = i0 + r*(i1 + r*i2)`.
//! Cells are addressed by their lower corner; local vertex `v` of a cell sits
//! at offset `+1` along axis `k` whenever bit `k` of `v` is set.

use std::sync::Arc;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Relative slack used when comparing distances against lattice values.
const LATTICE_SLACK: f64 = 1e-9;

#[derive(Debug)]
struct Grid {
    dim: usize,
    resolution: usize,
    lower: [f64; MAX_DIM],
    upper: [f64; MAX_DIM],
    h: f64,
    boundary: Vec<bool>,
    distance: Vec<f64>,
}

/// Discretized box `Ω` with boundary flags and exact boundary distance.
///
/// Cheap to clone; the node tables are shared.
#[derive(Debug, Clone)]
pub struct Domain(Arc<Grid>);

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.dim == other.0.dim
                && self.0.resolution == other.0.resolution
                && self.0.lower == other.0.lower
                && self.0.upper == other.0.upper)
    }
}

impl Domain {
    /// Builds a grid with `resolution` nodes per axis on the box `extents`.
    ///
    /// All axes must have the same length so that the spacing is uniform.
    pub fn new(dim: usize, resolution: usize, extents: &[(f64, f64)]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Config(format!("dim must be 1, 2 or 3 (got {dim})")));
        }
        if resolution < 3 {
            return Err(Error::Config(format!(
                "resolution must be at least 3 (got {resolution})"
            )));
        }
        if extents.len() != dim {
            return Err(Error::Config(format!(
                "expected {dim} extents, got {}",
                extents.len()
            )));
        }
        let mut lower = [0.0; MAX_DIM];
        let mut upper = [0.0; MAX_DIM];
        for (k, &(a, b)) in extents.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::Config(format!("extent {k} = [{a}, {b}] is degenerate")));
            }
            lower[k] = a;
            upper[k] = b;
        }
        let length = upper[0] - lower[0];
        for k in 1..dim {
            let lk = upper[k] - lower[k];
            if (lk - length).abs() > 1e-12 * length {
                return Err(Error::Config(format!(
                    "extents must have equal lengths for a uniform spacing ({length} vs {lk})"
                )));
            }
        }
        let h = length / (resolution - 1) as f64;
        let count = resolution.pow(dim as u32);
        let mut boundary = Vec::with_capacity(count);
        let mut distance = Vec::with_capacity(count);
        for idx in 0..count {
            let mut steps = usize::MAX;
            let mut rest = idx;
            for _ in 0..dim {
                let i = rest % resolution;
                rest /= resolution;
                steps = steps.min(i.min(resolution - 1 - i));
            }
            boundary.push(steps == 0);
            distance.push(steps as f64 * h);
        }
        Ok(Domain(Arc::new(Grid {
            dim,
            resolution,
            lower,
            upper,
            h,
            boundary,
            distance,
        })))
    }

    /// Unit cube `(0,1)^dim`.
    pub fn unit(dim: usize, resolution: usize) -> Result<Self> {
        Self::new(dim, resolution, &vec![(0.0, 1.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn resolution(&self) -> usize {
        self.0.resolution
    }

    pub fn h(&self) -> f64 {
        self.0.h
    }

    pub fn node_count(&self) -> usize {
        self.0.boundary.len()
    }

    pub fn extents(&self) -> Vec<(f64, f64)> {
        (0..self.dim()).map(|k| (self.0.lower[k], self.0.upper[k])).collect()
    }

    /// Edge length of the box.
    pub fn side(&self) -> f64 {
        self.0.upper[0] - self.0.lower[0]
    }

    /// Lebesgue measure of the box.
    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.0.boundary[idx]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.0.boundary
    }

    /// Distance of each node to `∂Ω`.
    pub fn d_boundary(&self) -> &[f64] {
        &self.0.distance
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let r = self.resolution();
        let mut out = [0; MAX_DIM];
        let mut rest = idx;
        for slot in out.iter_mut().take(self.dim()) {
            *slot = rest % r;
            rest /= r;
        }
        out
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let r = self.resolution();
        multi
            .iter()
            .take(self.dim())
            .rev()
            .fold(0, |acc, &i| acc * r + i)
    }

    /// Physical coordinates of a node (unused axes are zero).
    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim() {
            x[k] = self.0.lower[k] + m[k] as f64 * self.h();
        }
        x
    }

    /// Trapezoidal control volume of a node.
    pub fn node_volume(&self, idx: usize) -> f64 {
        let m = self.multi_index(idx);
        let r = self.resolution();
        let mut v = self.cell_volume();
        for &i in m.iter().take(self.dim()) {
            if i == 0 || i == r - 1 {
                v *= 0.5;
            }
        }
        v
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim() as i32)
    }

    pub fn vertices_per_cell(&self) -> usize {
        1 << self.dim()
    }

    pub fn cell_count(&self) -> usize {
        (self.resolution() - 1).pow(self.dim() as u32)
    }

    /// Calls `f` with the node indices of every cell, ordered by local vertex
    /// number.
    pub fn for_each_cell<F: FnMut(&[usize])>(&self, mut f: F) {
        let dim = self.dim();
        let r = self.resolution();
        let cells_per_axis = r - 1;
        let nv = self.vertices_per_cell();
        let mut offsets = [0usize; 1 << MAX_DIM];
        for (v, off) in offsets.iter_mut().enumerate().take(nv) {
            let mut stride = 1;
            for k in 0..dim {
                if v & (1 << k) != 0 {
                    *off += stride;
                }
                stride *= r;
            }
        }
        let mut verts = [0usize; 1 << MAX_DIM];
        for c in 0..self.cell_count() {
            let mut rest = c;
            let mut base = 0;
            let mut stride = 1;
            for _ in 0..dim {
                base += (rest % cells_per_axis) * stride;
                rest /= cells_per_axis;
                stride *= r;
            }
            for v in 0..nv {
                verts[v] = base + offsets[v];
            }
            f(&verts[..nv]);
        }
    }

    /// Whether `x` lies in the open box.
    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|k| x[k] > self.0.lower[k] && x[k] < self.0.upper[k])
    }

    /// Interior node nearest to `x`; ties go to the lower index.
    pub fn nearest_interior_node(&self, x: &[f64]) -> usize {
        let r = self.resolution();
        let mut multi = [0usize; MAX_DIM];
        for k in 0..self.dim() {
            let t = (x[k] - self.0.lower[k]) / self.h();
            let i = (t - 0.5).ceil().max(0.0) as usize;
            multi[k] = i.clamp(1, r - 2);
        }
        self.index(&multi)
    }

    pub fn distance_to(&self, idx: usize, x: &[f64]) -> f64 {
        let c = self.coords(idx);
        (0..self.dim())
            .map(|k| (c[k] - x[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| !self.is_boundary(i))
            .collect()
    }

    /// Nodes at distance at least `delta` from the boundary: a discrete
    /// compact subset `ω ⊂⊂ Ω`.
    pub fn compact_subdomain(&self, delta: f64) -> Result<NodeMask> {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "subdomain distance must be positive (got {delta})"
            )));
        }
        let slack = LATTICE_SLACK * self.h();
        let mask = NodeMask::from_fn(self.node_count(), |i| self.d_boundary()[i] + slack >= delta);
        if mask.count() == 0 {
            return Err(Error::EmptySubdomain { delta });
        }
        Ok(mask)
    }

    /// Nodes with `dist(x, ∂Ω) < eps`.
    pub fn boundary_layer(&self, eps: f64) -> Result<NodeMask> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "layer width must be positive (got {eps})"
            )));
        }
        let slack = LATTICE_SLACK * self.h();
        Ok(NodeMask::from_fn(self.node_count(), |i| {
            self.d_boundary()[i] + slack < eps
        }))
    }

    /// `N = 1`: outside the `N ≥ 2` theory, used only for closed-form checks.
    pub fn is_oracle_regime(&self) -> bool {
        self.dim() == 1
    }
}

/// Boolean selection of grid nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMask(Vec<bool>);

impl NodeMask {
    pub fn from_fn(len: usize, f: impl Fn(usize) -> bool) -> Self {
        NodeMask((0..len).map(f).collect())
    }

    pub fn all(len: usize) -> Self {
        NodeMask(vec![true; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.0[idx]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn complement(&self) -> Self {
        NodeMask(self.0.iter().map(|b| !b).collect())
    }

    pub fn is_subset_of(&self, other: &NodeMask) -> bool {
        self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// One real value per node of a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dom: Domain,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(dom: &Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != dom.node_count() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for {} nodes",
                values.len(),
                dom.node_count()
            )));
        }
        Ok(ScalarField {
            dom: dom.clone(),
            values,
        })
    }

    pub fn zeros(dom: &Domain) -> Self {
        ScalarField {
            dom: dom.clone(),
            values: vec![0.0; dom.node_count()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(dom: &Domain, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..dom.node_count())
            .map(|i| f(&dom.coords(i)[..dom.dim()]))
            .collect();
        ScalarField {
            dom: dom.clone(),
            values,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.dom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether boundary values are exactly zero.
    pub fn is_dirichlet(&self) -> bool {
        self.values
            .iter()
            .zip(self.dom.boundary_flags())
            .all(|(&v, &b)| !b || v == 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            dom: self.dom.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same(&self, other: &ScalarField) -> Result<()> {
        if self.dom != other.dom {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }

    /// Discrete `L²(Ω)` distance with trapezoidal weights.
    pub fn l2_distance(&self, other: &ScalarField) -> Result<f64> {
        self.check_same(other)?;
        let s: f64 = (0..self.values.len())
            .map(|i| self.dom.node_volume(i) * (self.values[i] - other.values[i]).powi(2))
            .sum();
        Ok(s.sqrt())
    }

    pub fn linf_distance(&self, other: &ScalarField) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}
