//! Norms, traces, residuals and captured mass of computed fields.
//!
//! Every gradient quantity uses the per-cell squared gradient
//! [`cell_gradient_sq`], so `norm_w1q(u, 2)²` equals the stencil energy
//! `uᵀKu` for `A = I`.

use serde::Serialize;

use crate::domain::{Domain, NodeMask, ScalarField, MAX_DIM};
use crate::elliptic::{cell_gradient_sq, LinearSystem};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub q: f64,
    pub q_prime: f64,
    /// Only for `N ≥ 3`.
    pub s: Option<f64>,
    pub oracle_regime: bool,
}

/// `q = N(γ+1)/(N−1+γ)`, `q' = N(γ+1)/((N−1)γ+1)`, both `2` once `γ ≥ 1`;
/// `s = N(γ+1)/(N−2)` for `N ≥ 3`.
pub fn sobolev_exponents(gamma: f64, dim: usize) -> Exponents {
    if dim == 1 {
        return Exponents {
            q: 2.0,
            q_prime: 2.0,
            s: None,
            oracle_regime: true,
        };
    }
    let n = dim as f64;
    let (q, q_prime) = if gamma >= 1.0 {
        (2.0, 2.0)
    } else {
        (
            n * (gamma + 1.0) / (n - 1.0 + gamma),
            n * (gamma + 1.0) / ((n - 1.0) * gamma + 1.0),
        )
    };
    Exponents {
        q,
        q_prime,
        s: (dim >= 3).then(|| n * (gamma + 1.0) / (n - 2.0)),
        oracle_regime: false,
    }
}

/// `(Σ_c h^N |∇u|_c^q)^{1/q}` over all cells.
pub fn norm_w1q(u: &ScalarField, q: f64) -> f64 {
    let dom = u.domain();
    let vol = dom.cell_volume();
    let mut acc = 0.0;
    dom.for_each_cell(|v| {
        acc += vol * cell_gradient_sq(dom, u.values(), v).powf(q / 2.0);
    });
    acc.powf(1.0 / q)
}

/// `H¹` seminorm over the cells whose vertices all lie in `ω`.
pub fn local_h1(u: &ScalarField, omega: &NodeMask) -> Result<f64> {
    let dom = u.domain();
    if omega.len() != dom.node_count() {
        return Err(Error::DomainMismatch);
    }
    let vol = dom.cell_volume();
    let mut acc = 0.0;
    dom.for_each_cell(|v| {
        if v.iter().all(|&i| omega.contains(i)) {
            acc += vol * cell_gradient_sq(dom, u.values(), v);
        }
    });
    Ok(acc.sqrt())
}

/// `‖u^{(γ+1)/2}‖_{H¹_0}`; negative values count as zero.
pub fn power_energy(u: &ScalarField, gamma: f64) -> f64 {
    let e = (gamma + 1.0) / 2.0;
    norm_w1q(&u.map(|x| x.max(0.0).powf(e)), 2.0)
}

/// `(Σ_i vol_i |u_i|^s)^{1/s}`.
pub fn norm_ls(u: &ScalarField, s: f64) -> f64 {
    let dom = u.domain();
    u.values()
        .iter()
        .enumerate()
        .map(|(i, x)| dom.node_volume(i) * x.abs().powf(s))
        .sum::<f64>()
        .powf(1.0 / s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    pub q: f64,
    pub norm_w1q: f64,
    pub local_h1: f64,
    pub power_energy: f64,
    pub norm_ls: Option<f64>,
}

pub fn norm_report(u: &ScalarField, gamma: f64, omega: &NodeMask) -> Result<NormReport> {
    let ex = sobolev_exponents(gamma, u.domain().dim());
    Ok(NormReport {
        q: ex.q,
        norm_w1q: norm_w1q(u, ex.q),
        local_h1: local_h1(u, omega)?,
        power_energy: power_energy(u, gamma),
        norm_ls: ex.s.map(|s| norm_ls(u, s)),
    })
}

/// `Φ(ε) = (1/ε) ∫_{dist(x,∂Ω)<ε} u` for each `ε`.
///
/// A cell belongs to the layer when one of its vertices is closer than `ε` to
/// the boundary, and contributes `h^N` times its vertex mean.
pub fn boundary_trace_profile(u: &ScalarField, eps_list: &[f64]) -> Result<Vec<f64>> {
    let dom = u.domain();
    let slack = 1e-9 * dom.h();
    let vol = dom.cell_volume();
    eps_list
        .iter()
        .map(|&eps| {
            if eps + slack < dom.h() {
                return Err(Error::InvalidArgument(format!(
                    "trace width {eps} is below the grid spacing {}",
                    dom.h()
                )));
            }
            let mut acc = 0.0;
            dom.for_each_cell(|v| {
                let near = v.iter().map(|&i| dom.d_boundary()[i]).fold(f64::INFINITY, f64::min);
                if near + slack < eps {
                    acc += vol * v.iter().map(|&i| u.values()[i]).sum::<f64>() / v.len() as f64;
                }
            });
            Ok(acc / eps)
        })
        .collect()
}

/// Discrete test function: nonnegative weights on interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TestBump {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub weights: Vec<(usize, f64)>,
}

impl TestBump {
    /// Tensor-product hat on the box `[lower, upper]`, peak 1 at its centre.
    pub fn hat(dom: &Domain, lower: &[f64], upper: &[f64]) -> Self {
        let dim = dom.dim();
        let weights = (0..dom.node_count())
            .filter_map(|i| {
                let x = dom.coords(i);
                let mut w = 1.0;
                for k in 0..dim {
                    let c = 0.5 * (lower[k] + upper[k]);
                    let half = 0.5 * (upper[k] - lower[k]);
                    w *= (1.0 - (x[k] - c).abs() / half).max(0.0);
                }
                (w > 0.0 && !dom.is_boundary(i)).then_some((i, w))
            })
            .collect();
        TestBump {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            weights,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn to_field(&self, dom: &Domain) -> ScalarField {
        let mut v = vec![0.0; dom.node_count()];
        for &(i, w) in &self.weights {
            v[i] = w;
        }
        ScalarField::new(dom, v).expect("length matches")
    }
}

/// Hats on the central box `[L/4, 3L/4]^N` and on the boxes of side `L/4`
/// with lower corners at `k·L/8`, `k = 1..5` per axis. Empty bumps are
/// dropped.
pub fn builtin_test_set(dom: &Domain) -> Vec<TestBump> {
    let dim = dom.dim();
    let ext = dom.extents();
    let len = dom.side();
    let mut out = Vec::new();
    let lo: Vec<f64> = ext.iter().map(|e| e.0 + len / 4.0).collect();
    let hi: Vec<f64> = ext.iter().map(|e| e.0 + 3.0 * len / 4.0).collect();
    out.push(TestBump::hat(dom, &lo, &hi));
    let per_axis = 5usize;
    for q in 0..per_axis.pow(dim as u32) {
        let mut rest = q;
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for k in 0..dim {
            let j = rest % per_axis + 1;
            rest /= per_axis;
            lo[k] = ext[k].0 + j as f64 * len / 8.0;
            hi[k] = lo[k] + len / 4.0;
        }
        out.push(TestBump::hat(dom, &lo[..dim], &hi[..dim]));
    }
    out.retain(|b| !b.is_empty());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    pub per_test: Vec<f64>,
    pub max: f64,
}

/// `max_φ |∫A∇u·∇φ − ∫ φ (shift + u)^{−γ} dm|` over the test set.
///
/// `shift = 1/n` tests a regularized level, `shift = 0` the limit equation.
/// The singular factor is evaluated only on the support of each `φ`.
pub fn weak_residual(
    u: &ScalarField,
    m: &DiscreteMeasure,
    gamma: f64,
    shift: f64,
    system: &LinearSystem,
    tests: &[TestBump],
) -> Result<WeakResidual> {
    let dom = u.domain();
    if m.domain() != dom || system.domain() != dom {
        return Err(Error::DomainMismatch);
    }
    let ku = system.apply(u.values());
    let mut per_test = Vec::with_capacity(tests.len());
    for t in tests {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for &(i, w) in &t.weights {
            let ui = u.values()[i];
            if !(ui > 0.0) {
                return Err(Error::NonPositive { node: i, value: ui });
            }
            lhs += w * ku[i];
            let mi = m.masses()[i];
            if mi != 0.0 {
                rhs += w * mi * (shift + ui).powf(-gamma);
            }
        }
        per_test.push((lhs - rhs).abs());
    }
    let max = per_test.iter().copied().fold(0.0, f64::max);
    Ok(WeakResidual { per_test, max })
}

/// `∫_region dm / (1/n + u)^γ`; `region = None` means all of `Ω`.
pub fn captured_mass(
    u: &ScalarField,
    m: &DiscreteMeasure,
    gamma: f64,
    n: f64,
    region: Option<&NodeMask>,
) -> Result<f64> {
    if u.domain() != m.domain() {
        return Err(Error::DomainMismatch);
    }
    let shift = 1.0 / n;
    Ok(m.masses()
        .iter()
        .zip(u.values())
        .enumerate()
        .filter(|(i, _)| region.is_none_or(|r| r.contains(*i)))
        .map(|(_, (&mi, &ui))| if mi == 0.0 { 0.0 } else { mi * (shift + ui.max(0.0)).powf(-gamma) })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeComparison {
    pub l2: f64,
    pub linf: f64,
    pub pass: bool,
    /// `γ ≥ 1`; below that uniqueness is only claimed in a restricted class.
    pub uniqueness_regime: bool,
}

pub fn cross_scheme_compare(
    u_split: &ScalarField,
    u_monotone: &ScalarField,
    gamma: f64,
    tol: f64,
) -> Result<SchemeComparison> {
    let linf = u_split.linf_distance(u_monotone)?;
    Ok(SchemeComparison {
        l2: u_split.l2_distance(u_monotone)?,
        linf,
        pass: linf <= tol,
        uniqueness_regime: gamma >= 1.0,
    })
}
