//! Nonnegative measures `μ = μ_a + μ_s` and their nodal discretization.
//!
//! The absolutely continuous part is a density; the singular part is a sum
//! of weighted atoms and of curves carrying a constant linear density. A
//! [`DiscreteMeasure`] stores one lumped mass per node. Truncation acts on the
//! nodal density `mass / control volume`, which is what `T_n(μ)` means on the
//! grid.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::domain::{Domain, NodeMask, ScalarField};
use crate::error::{Error, Result};
use crate::expr::Expression;

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Absolutely continuous part of a measure.
#[derive(Clone)]
pub enum Density {
    Constant(f64),
    Expression(Expression),
    Function(DensityFn),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Density::Expression(e) => f.debug_tuple("Expression").field(&e.source()).finish(),
            Density::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Density {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Density::Constant(c) => Ok(*c),
            Density::Expression(e) => e.eval(x),
            Density::Function(f) => Ok(f(x)),
        }
    }

    fn sample(&self, dom: &Domain) -> Result<Vec<f64>> {
        let pts: Vec<[f64; 3]> = (0..dom.node_count()).map(|i| dom.coords(i)).collect();
        match self {
            Density::Constant(c) => Ok(vec![*c; pts.len()]),
            Density::Expression(e) => e.eval_many(pts.iter().map(|p| &p[..dom.dim()])),
            Density::Function(f) => Ok(pts.iter().map(|p| f(&p[..dom.dim()])).collect()),
        }
    }

    /// `∫_Ω density` by three-point Gauss-Legendre on every grid cell.
    fn integral(&self, dom: &Domain) -> Result<f64> {
        if let Density::Constant(c) = self {
            return Ok(c * dom.volume());
        }
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let dim = dom.dim();
        let h = dom.h();
        let scale = (h / 2.0).powi(dim as i32);
        let mut total = 0.0;
        let mut err = None;
        dom.for_each_cell(|verts| {
            if err.is_some() {
                return;
            }
            let base = dom.coords(verts[0]);
            let npts = 3usize.pow(dim as u32);
            for q in 0..npts {
                let mut x = [0.0; 3];
                let mut w = scale;
                let mut rest = q;
                for k in 0..dim {
                    let j = rest % 3;
                    rest /= 3;
                    x[k] = base[k] + h / 2.0 * (1.0 + NODES[j]);
                    w *= WEIGHTS[j];
                }
                match self.eval(&x[..dim]) {
                    Ok(v) => total += w * v,
                    Err(e) => err = Some(e),
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Polyline carrying a constant nonnegative linear density.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub polyline: Vec<Vec<f64>>,
    pub density: f64,
}

impl Curve {
    pub fn length(&self) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| dist(&w[0], &w[1]))
            .sum()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Distance from `x` to the segment `[a, b]`.
pub(crate) fn segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    let ax: Vec<f64> = a.iter().zip(x).map(|(p, q)| q - p).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 {
        (ax.iter().zip(&ab).map(|(u, v)| u * v).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(p, v)| p + t * v).collect();
    dist(x, &proj)
}

/// Symbolic nonnegative bounded measure on `Ω`.
#[derive(Debug, Clone, Default)]
pub struct MeasureSpec {
    pub density: Option<Density>,
    pub atoms: Vec<Atom>,
    pub curves: Vec<Curve>,
}

impl MeasureSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        MeasureSpec {
            density: Some(Density::Constant(c)),
            ..Self::default()
        }
    }

    pub fn atom(point: &[f64], weight: f64) -> Self {
        MeasureSpec {
            atoms: vec![Atom {
                point: point.to_vec(),
                weight,
            }],
            ..Self::default()
        }
    }

    pub fn curve(polyline: Vec<Vec<f64>>, density: f64) -> Self {
        MeasureSpec {
            curves: vec![Curve { polyline, density }],
            ..Self::default()
        }
    }

    pub fn with_density(mut self, density: Density) -> Self {
        self.density = Some(density);
        self
    }

    pub fn with_atom(mut self, point: &[f64], weight: f64) -> Self {
        self.atoms.push(Atom {
            point: point.to_vec(),
            weight,
        });
        self
    }

    pub fn with_curve(mut self, polyline: Vec<Vec<f64>>, density: f64) -> Self {
        self.curves.push(Curve { polyline, density });
        self
    }

    pub fn has_singular_part(&self) -> bool {
        !self.atoms.is_empty() || !self.curves.is_empty()
    }

    /// Checks signs and that singular parts sit strictly inside `Ω`.
    pub fn validate(&self, dom: &Domain) -> Result<()> {
        for a in &self.atoms {
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "atom weight must be nonnegative and finite (got {})",
                    a.weight
                )));
            }
            if !dom.contains_strictly(&a.point) {
                return Err(Error::OutsideDomain {
                    point: a.point.clone(),
                });
            }
        }
        for c in &self.curves {
            if !(c.density >= 0.0 && c.density.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "curve density must be nonnegative and finite (got {})",
                    c.density
                )));
            }
            if c.polyline.len() < 2 {
                return Err(Error::InvalidArgument(
                    "a curve needs at least two points".into(),
                ));
            }
            if let Some(p) = c.polyline.iter().find(|p| !dom.contains_strictly(p)) {
                return Err(Error::OutsideDomain { point: p.clone() });
            }
        }
        if let Some(Density::Constant(c)) = &self.density {
            if !(*c >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "density must be nonnegative (got {c})"
                )));
            }
        }
        Ok(())
    }

    /// Mass of the absolutely continuous part.
    pub fn absolute_mass(&self, dom: &Domain) -> Result<f64> {
        match &self.density {
            Some(d) => d.integral(dom),
            None => Ok(0.0),
        }
    }

    /// Mass of the singular part.
    pub fn singular_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum::<f64>()
            + self.curves.iter().map(|c| c.density * c.length()).sum::<f64>()
    }

    /// `μ(Ω)`.
    pub fn total_mass(&self, dom: &Domain) -> Result<f64> {
        Ok(self.absolute_mass(dom)? + self.singular_mass())
    }

    /// Nodes within `radius` of an atom or a curve.
    pub fn singular_neighborhood(&self, dom: &Domain, radius: f64) -> NodeMask {
        NodeMask::from_fn(dom.node_count(), |i| {
            let x = dom.coords(i);
            let x = &x[..dom.dim()];
            self.atoms.iter().any(|a| dist(x, &a.point) <= radius)
                || self.curves.iter().any(|c| {
                    c.polyline
                        .windows(2)
                        .any(|w| segment_distance(x, &w[0], &w[1]) <= radius)
                })
        })
    }
}

/// How a [`DiscreteMeasure`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub radius: f64,
    pub truncation: Option<f64>,
}

/// Lumped nodal masses on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dom: Domain,
    masses: Vec<f64>,
    total_mass: f64,
    provenance: Provenance,
}

impl DiscreteMeasure {
    pub fn from_masses(dom: &Domain, masses: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if masses.len() != dom.node_count() {
            return Err(Error::InvalidArgument(format!(
                "{} masses for {} nodes",
                masses.len(),
                dom.node_count()
            )));
        }
        if let Some(i) = masses.iter().position(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "negative or NaN mass {} at node {i}",
                masses[i]
            )));
        }
        let total_mass = masses.iter().sum();
        Ok(DiscreteMeasure {
            dom: dom.clone(),
            masses,
            total_mass,
            provenance,
        })
    }

    pub fn zero(dom: &Domain) -> Self {
        DiscreteMeasure {
            dom: dom.clone(),
            masses: vec![0.0; dom.node_count()],
            total_mass: 0.0,
            provenance: Provenance {
                radius: dom.h() / 2.0,
                truncation: None,
            },
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.dom
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_zero(&self) -> bool {
        self.masses.iter().all(|&m| m == 0.0)
    }

    /// Mass divided by the node's control volume.
    pub fn nodal_density(&self) -> Vec<f64> {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| m / self.dom.node_volume(i))
            .collect()
    }

    /// `T_k` applied to the nodal density.
    pub fn truncated(&self, k: f64) -> Self {
        let masses: Vec<f64> = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let vol = self.dom.node_volume(i);
                vol * truncate(m / vol, k)
            })
            .collect();
        DiscreteMeasure {
            dom: self.dom.clone(),
            total_mass: masses.iter().sum(),
            masses,
            provenance: Provenance {
                radius: self.provenance.radius,
                truncation: Some(k),
            },
        }
    }

    pub fn sum(&self, other: &DiscreteMeasure) -> Result<Self> {
        if self.dom != other.dom {
            return Err(Error::DomainMismatch);
        }
        let masses: Vec<f64> = self.masses.iter().zip(&other.masses).map(|(a, b)| a + b).collect();
        Ok(DiscreteMeasure {
            dom: self.dom.clone(),
            total_mass: masses.iter().sum(),
            masses,
            provenance: Provenance {
                radius: self.provenance.radius.max(other.provenance.radius),
                truncation: None,
            },
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let masses: Vec<f64> = self.masses.iter().map(|m| m * factor).collect();
        DiscreteMeasure {
            dom: self.dom.clone(),
            total_mass: masses.iter().sum(),
            masses,
            provenance: self.provenance.clone(),
        }
    }
}

/// `T_k(s) = max(-k, min(s, k))`.
pub fn truncate(s: f64, k: f64) -> f64 {
    s.min(k).max(-k)
}

pub fn truncate_values(values: &[f64], k: f64) -> Vec<f64> {
    values.iter().map(|&s| truncate(s, k)).collect()
}

/// Discretized absolutely continuous and singular parts, kept apart.
#[derive(Debug, Clone)]
pub struct MeasureParts {
    pub absolute: DiscreteMeasure,
    pub singular: DiscreteMeasure,
}

impl MeasureParts {
    pub fn combined(&self) -> DiscreteMeasure {
        let mut m = self
            .absolute
            .sum(&self.singular)
            .expect("parts share a domain");
        m.provenance.radius = self.singular.provenance.radius;
        m
    }
}

/// Spreads `weight` at `point` onto interior nodes.
fn lump(dom: &Domain, point: &[f64], weight: f64, radius: f64, masses: &mut [f64]) {
    let h = dom.h();
    if radius <= 0.5 * h * (1.0 + 1e-12) {
        masses[dom.nearest_interior_node(point)] += weight;
        return;
    }
    // Cone bump of radius `radius`, normalized over the interior nodes it
    // touches.
    let reach = (radius / h).ceil() as isize + 1;
    let centre = dom.multi_index(dom.nearest_interior_node(point));
    let r = dom.resolution() as isize;
    let dim = dom.dim();
    let mut support = Vec::new();
    let span = (2 * reach + 1) as usize;
    for q in 0..span.pow(dim as u32) {
        let mut rest = q;
        let mut multi = [0usize; 3];
        let mut ok = true;
        for k in 0..dim {
            let off = (rest % span) as isize - reach;
            rest /= span;
            let i = centre[k] as isize + off;
            if i < 1 || i > r - 2 {
                ok = false;
                break;
            }
            multi[k] = i as usize;
        }
        if !ok {
            continue;
        }
        let idx = dom.index(&multi);
        let w = 1.0 - dom.distance_to(idx, point) / radius;
        if w > 0.0 {
            support.push((idx, w));
        }
    }
    let total: f64 = support.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        masses[dom.nearest_interior_node(point)] += weight;
        return;
    }
    for (idx, w) in support {
        masses[idx] += weight * w / total;
    }
}

/// Discretizes both parts of `spec` with mollification radius `radius`.
pub fn discretize_parts(spec: &MeasureSpec, dom: &Domain, radius: f64) -> Result<MeasureParts> {
    let half = dom.h() / 2.0;
    if radius < half * (1.0 - 1e-12) {
        return Err(Error::RadiusTooSmall {
            radius,
            half_spacing: half,
        });
    }
    spec.validate(dom)?;
    let provenance = Provenance {
        radius,
        truncation: None,
    };

    let mut absolute = vec![0.0; dom.node_count()];
    if let Some(d) = &spec.density {
        let values = d.sample(dom)?;
        for (i, v) in values.into_iter().enumerate() {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "density is negative ({v}) at {:?}",
                    &dom.coords(i)[..dom.dim()]
                )));
            }
            absolute[i] = v * dom.node_volume(i);
        }
    }

    let mut singular = vec![0.0; dom.node_count()];
    for a in &spec.atoms {
        lump(dom, &a.point, a.weight, radius, &mut singular);
    }
    // Composite midpoint rule, step at most h/2.
    for c in &spec.curves {
        for w in c.polyline.windows(2) {
            let len = dist(&w[0], &w[1]);
            if len == 0.0 {
                continue;
            }
            let pieces = (len / half).ceil().max(1.0) as usize;
            let piece_mass = c.density * len / pieces as f64;
            for j in 0..pieces {
                let t = (j as f64 + 0.5) / pieces as f64;
                let p: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a + t * (b - a)).collect();
                lump(dom, &p, piece_mass, radius, &mut singular);
            }
        }
    }

    Ok(MeasureParts {
        absolute: DiscreteMeasure::from_masses(dom, absolute, provenance.clone())?,
        singular: DiscreteMeasure::from_masses(dom, singular, provenance)?,
    })
}

/// Nodal discretization of the whole measure.
pub fn discretize(spec: &MeasureSpec, dom: &Domain, radius: f64) -> Result<DiscreteMeasure> {
    Ok(discretize_parts(spec, dom, radius)?.combined())
}

/// Nondecreasing sequence `T_n(μ_h)` over the schedule, with `μ_h` the
/// mesh-scale lumping of the full measure.
pub fn monotone_ladder(
    spec: &MeasureSpec,
    dom: &Domain,
    schedule: &[f64],
) -> Result<Vec<DiscreteMeasure>> {
    check_schedule(schedule)?;
    let full = discretize(spec, dom, dom.h() / 2.0)?;
    Ok(schedule.iter().map(|&n| full.truncated(n)).collect())
}

pub(crate) fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty level schedule".into()));
    }
    if schedule.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "levels must be positive and finite: {schedule:?}"
        )));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "schedule must be strictly increasing: {schedule:?}"
        )));
    }
    Ok(())
}

/// `∫ u dμ` as the nodal sum `Σ u_i m_i`.
pub fn integrate(u: &ScalarField, m: &DiscreteMeasure) -> Result<f64> {
    if u.domain() != m.domain() {
        return Err(Error::DomainMismatch);
    }
    Ok(u.values().iter().zip(m.masses()).map(|(a, b)| a * b).sum())
}

/// Capacity verdict for one component of a measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diffuseness {
    Diffuse,
    Concentrated,
    /// Zero capacity at the threshold exponent; counts as concentrated.
    Borderline,
}

impl Diffuseness {
    pub fn is_concentrated(self) -> bool {
        !matches!(self, Diffuseness::Diffuse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "index", rename_all = "kebab-case")]
pub enum Component {
    Density,
    Atom(usize),
    Curve(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentVerdict {
    pub component: Component,
    /// Hausdorff dimension of the supporting set.
    pub set_dimension: usize,
    pub verdict: Diffuseness,
}

/// Rule-based `p`-capacity classification.
///
/// A `k`-dimensional set in `R^N` has positive `p`-capacity iff `p > N - k`;
/// at equality the capacity vanishes, reported as [`Diffuseness::Borderline`].
pub fn classify_diffuseness(spec: &MeasureSpec, p: f64, dim: usize) -> Vec<ComponentVerdict> {
    let rule = |k: usize| {
        let threshold = dim as f64 - k as f64;
        if p > threshold {
            Diffuseness::Diffuse
        } else if p == threshold {
            Diffuseness::Borderline
        } else {
            Diffuseness::Concentrated
        }
    };
    let mut out = Vec::new();
    if spec.density.is_some() {
        out.push(ComponentVerdict {
            component: Component::Density,
            set_dimension: dim,
            verdict: Diffuseness::Diffuse,
        });
    }
    for i in 0..spec.atoms.len() {
        out.push(ComponentVerdict {
            component: Component::Atom(i),
            set_dimension: 0,
            verdict: rule(0),
        });
    }
    for i in 0..spec.curves.len() {
        out.push(ComponentVerdict {
            component: Component::Curve(i),
            set_dimension: 1.min(dim),
            verdict: rule(1.min(dim)),
        });
    }
    out
}

/// Worst verdict over all components.
pub fn overall_diffuseness(verdicts: &[ComponentVerdict]) -> Diffuseness {
    let mut out = Diffuseness::Diffuse;
    for v in verdicts {
        match v.verdict {
            Diffuseness::Concentrated => return Diffuseness::Concentrated,
            Diffuseness::Borderline => out = Diffuseness::Borderline,
            Diffuseness::Diffuse => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(dim: usize, r: usize) -> Domain {
        Domain::unit(dim, r).unwrap()
    }

    #[test]
    fn atom_lands_on_node() {
        let d = unit(1, 5);
        let m = discretize(&MeasureSpec::atom(&[0.5], 1.0), &d, d.h() / 2.0).unwrap();
        assert_eq!(m.masses(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn constant_density_mass() {
        let d = unit(2, 33);
        let m = discretize(&MeasureSpec::constant(1.0), &d, d.h() / 2.0).unwrap();
        assert!((m.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn segment_mass() {
        let d = unit(2, 33);
        let spec = MeasureSpec::curve(vec![vec![0.5, 0.25], vec![0.5, 0.75]], 2.0);
        let m = discretize(&spec, &d, d.h() / 2.0).unwrap();
        assert!((m.total_mass() - 1.0).abs() <= 1e-12);
        assert!((spec.total_mass(&d).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn expression_density_mass_matches_quadrature() {
        let d = unit(2, 65);
        let spec = MeasureSpec::zero().with_density(Density::Expression(
            Expression::parse("x * y").unwrap(),
        ));
        let exact = 0.25;
        assert!((spec.total_mass(&d).unwrap() - exact).abs() < 1e-12);
        let m = discretize(&spec, &d, d.h() / 2.0).unwrap();
        assert!((m.total_mass() - exact).abs() < 1e-9);
    }

    #[test]
    fn bump_spreading_preserves_mass() {
        let d = unit(2, 33);
        let spec = MeasureSpec::atom(&[0.41, 0.57], 3.0);
        let m = discretize(&spec, &d, 3.0 * d.h()).unwrap();
        assert!((m.total_mass() - 3.0).abs() < 1e-12);
        assert!(m.masses().iter().filter(|&&v| v > 0.0).count() > 9);
    }

    #[test]
    fn discretize_errors() {
        let d = unit(1, 9);
        assert!(matches!(
            discretize(&MeasureSpec::atom(&[1.5], 1.0), &d, d.h()),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            discretize(&MeasureSpec::atom(&[0.5], 1.0), &d, d.h() / 4.0),
            Err(Error::RadiusTooSmall { .. })
        ));
    }

    #[test]
    fn truncation_values() {
        assert_eq!(truncate(3.0, 2.0), 2.0);
        assert_eq!(truncate(-3.0, 2.0), -2.0);
        assert_eq!(truncate(1.5, 2.0), 1.5);
        assert_eq!(truncate_values(&[0.0, 4.0], 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_ladder() {
        let d = unit(2, 9);
        let ladder = monotone_ladder(&MeasureSpec::constant(5.0), &d, &[2.0, 10.0]).unwrap();
        for (m, expect) in ladder.iter().zip([2.0, 5.0]) {
            for v in m.nodal_density() {
                assert!((v - expect).abs() < 1e-12);
            }
        }
        assert!(monotone_ladder(&MeasureSpec::constant(5.0), &d, &[2.0, 2.0]).is_err());
    }

    #[test]
    fn atom_ladder_reaches_full_weight_at_inverse_cell_volume() {
        // Lumped density is weight / h^2 = 256 on a 17x17 unit grid.
        let d = unit(2, 17);
        let cap = 1.0 / d.cell_volume();
        let ladder =
            monotone_ladder(&MeasureSpec::atom(&[0.5, 0.5], 1.0), &d, &[cap / 4.0, cap, 4.0 * cap])
                .unwrap();
        assert!((ladder[0].total_mass() - 0.25).abs() < 1e-12);
        assert!((ladder[1].total_mass() - 1.0).abs() < 1e-12);
        assert!((ladder[2].total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_examples() {
        let d = unit(1, 5);
        let atom = discretize(&MeasureSpec::atom(&[0.5], 1.0), &d, d.h() / 2.0).unwrap();
        let three = ScalarField::from_fn(&d, |_| 3.0);
        assert_eq!(integrate(&three, &atom).unwrap(), 3.0);
        let vanishing = ScalarField::from_fn(&d, |x| (x[0] - 0.5).abs());
        assert_eq!(integrate(&vanishing, &atom).unwrap(), 0.0);
        let two = atom.scaled(2.0);
        let tent = ScalarField::from_fn(&d, |x| x[0].min(1.0 - x[0]));
        assert_eq!(integrate(&tent, &two).unwrap(), 1.0);
        let other = unit(1, 7);
        assert!(matches!(
            integrate(&ScalarField::zeros(&other), &atom),
            Err(Error::DomainMismatch)
        ));
    }

    #[test]
    fn classification_rules() {
        let atom = MeasureSpec::atom(&[0.5, 0.5], 1.0);
        assert_eq!(classify_diffuseness(&atom, 2.0, 2)[0].verdict, Diffuseness::Borderline);
        assert!(classify_diffuseness(&atom, 2.0, 2)[0].verdict.is_concentrated());
        assert_eq!(classify_diffuseness(&atom, 3.0, 2)[0].verdict, Diffuseness::Diffuse);
        assert_eq!(classify_diffuseness(&atom, 1.5, 2)[0].verdict, Diffuseness::Concentrated);
        let seg = MeasureSpec::curve(vec![vec![0.5, 0.25], vec![0.5, 0.75]], 2.0);
        assert_eq!(classify_diffuseness(&seg, 2.0, 2)[0].verdict, Diffuseness::Diffuse);
        assert_eq!(classify_diffuseness(&seg, 2.0, 3)[0].verdict, Diffuseness::Borderline);
        let dens = MeasureSpec::constant(1.0).with_atom(&[0.5, 0.5], 1.0);
        let v = classify_diffuseness(&dens, 2.0, 2);
        assert_eq!(v[0].verdict, Diffuseness::Diffuse);
        assert_eq!(overall_diffuseness(&v), Diffuseness::Borderline);
    }

    proptest! {
        #[test]
        fn ladder_is_nodewise_monotone(
            x in 0.05f64..0.95, y in 0.05f64..0.95, w in 0.0f64..5.0,
            c in 0.0f64..20.0, mut levels in proptest::collection::vec(0.1f64..1e4, 2..6),
        ) {
            levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            levels.dedup();
            prop_assume!(levels.len() >= 2);
            let d = unit(2, 17);
            let spec = MeasureSpec::constant(c)
                .with_atom(&[x, y], w)
                .with_curve(vec![vec![0.3, 0.3], vec![x, y]], w);
            let ladder = monotone_ladder(&spec, &d, &levels).unwrap();
            for pair in ladder.windows(2) {
                for (a, b) in pair[0].masses().iter().zip(pair[1].masses()) {
                    prop_assert!(a <= b);
                }
            }
            let full = discretize(&spec, &d, d.h() / 2.0).unwrap();
            prop_assert!(ladder.last().unwrap().total_mass() <= full.total_mass() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn quadrature_bound_holds(vals in proptest::collection::vec(0.0f64..10.0, 81), w in 0.0f64..3.0) {
            let d = unit(2, 9);
            let u = ScalarField::new(&d, vals).unwrap();
            let m = discretize(&MeasureSpec::constant(1.3).with_atom(&[0.4, 0.6], w), &d, d.h() / 2.0).unwrap();
            let lhs = integrate(&u, &m).unwrap();
            prop_assert!(lhs <= u.max() * m.total_mass() * (1.0 + 1e-12));
        }

        #[test]
        fn atom_mass_is_conserved(x in 0.01f64..0.99, w in 0.0f64..10.0, r in 0.5f64..4.0) {
            let d = unit(1, 33);
            let m = discretize(&MeasureSpec::atom(&[x], w), &d, r * d.h()).unwrap();
            prop_assert!((m.total_mass() - w).abs() <= 1e-12 * w.max(1.0));
        }
    }
}
