//! One regularized level `K u = ν (1/n + u)^{−γ}` and the interior barrier.
//!
//! `T(v) = K⁻¹(ν (1/n + v)^{−γ})` is antitone when `K` is an M-matrix. The
//! solver keeps a certified bracket `lo ≤ u ≤ hi`: `lo` is always a discrete
//! subsolution and `hi` a supersolution. Each sweep takes a Newton step from
//! `lo` (monotone from below because the residual is concave), then sets
//! `lo ← max(newton, T(hi))` and `hi ← min(hi, T(lo))`.

use log::{debug, warn};
use serde::Serialize;

use crate::domain::{Domain, NodeMask, ScalarField};
use crate::elliptic::{Factor, LinearSystem};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// `−div(A∇u) = ν/(1/n + u)^γ`, `u = 0` on `∂Ω`.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedProblem<'a> {
    pub system: &'a LinearSystem,
    pub nu: &'a DiscreteMeasure,
    pub gamma: f64,
    pub n: f64,
}

impl<'a> RegularizedProblem<'a> {
    pub fn new(system: &'a LinearSystem, nu: &'a DiscreteMeasure, gamma: f64, n: f64) -> Result<Self> {
        let p = RegularizedProblem { system, nu, gamma, n };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.system.domain() != self.nu.domain() {
            return Err(Error::DomainMismatch);
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive (got {})",
                self.gamma
            )));
        }
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization level must be at least 1 (got {})",
                self.n
            )));
        }
        Ok(())
    }

    pub fn domain(&self) -> &Domain {
        self.system.domain()
    }

    pub fn shift(&self) -> f64 {
        1.0 / self.n
    }

    /// Nodal right-hand side `ν_i (1/n + v_i)^{−γ}`; negative `v` counts as 0.
    pub fn source(&self, v: &[f64]) -> Vec<f64> {
        source(self.nu.masses(), self.shift(), self.gamma, v)
    }

    /// `max_i |(Ku)_i − ν_i (1/n + u_i)^{−γ}|` over interior nodes.
    pub fn residual(&self, u: &[f64]) -> f64 {
        let ku = self.system.apply(u);
        let g = self.source(u);
        self.system
            .free_nodes()
            .iter()
            .map(|&i| (ku[i] - g[i]).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn source(masses: &[f64], shift: f64, gamma: f64, v: &[f64]) -> Vec<f64> {
    masses
        .iter()
        .zip(v)
        .map(|(&m, &x)| if m == 0.0 { 0.0 } else { m * (shift + x.max(0.0)).powf(-gamma) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Sup-norm bracket width at which a level counts as solved.
    pub tol: f64,
    pub max_outer: usize,
    /// Relative residual for the inner linear solves.
    pub linear_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_outer: 200,
            linear_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bracket,
    DampedPicard,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: ScalarField,
    /// Final certified bounds; equal to `solution` under damped Picard.
    pub lower: ScalarField,
    pub upper: ScalarField,
    pub iterations: usize,
    pub bracket_width: f64,
    pub width_history: Vec<f64>,
    /// Nodal residual `max |Ku − ν(1/n+u)^{−γ}|`.
    pub residual: f64,
    pub method: Method,
}

/// Solves one level from the zero subsolution.
pub fn solve_regularized(p: &RegularizedProblem<'_>, opts: &SolverOptions) -> Result<SolveReport> {
    solve_regularized_from(p, opts, None)
}

/// Solves one level, starting the bracket at `start` when it is a
/// subsolution (the previous level of a monotone ladder always is).
pub fn solve_regularized_from(
    p: &RegularizedProblem<'_>,
    opts: &SolverOptions,
    start: Option<&ScalarField>,
) -> Result<SolveReport> {
    p.validate()?;
    let dom = p.domain();
    if p.nu.is_zero() {
        let z = ScalarField::zeros(dom);
        return Ok(SolveReport {
            solution: z.clone(),
            lower: z.clone(),
            upper: z,
            iterations: 0,
            bracket_width: 0.0,
            width_history: vec![0.0],
            residual: 0.0,
            method: Method::Bracket,
        });
    }
    let base = p.system.factor(None)?;
    if !p.system.is_m_matrix() {
        warn!("operator is not an M-matrix; falling back to damped Picard without a certified bracket");
        return damped_picard(p, opts, &base, start);
    }

    let mut lo = match start {
        Some(s) if s.domain() == dom && is_subsolution(p, s.values()) => s.values().to_vec(),
        Some(_) => {
            debug!("warm start is not a subsolution; starting from zero");
            vec![0.0; dom.node_count()]
        }
        None => vec![0.0; dom.node_count()],
    };
    let mut hi = apply_t(p, &base, &lo);
    let mut history = vec![sup_diff(&hi, &lo)];
    let mut iterations = 0;
    while *history.last().unwrap() > opts.tol {
        if iterations == opts.max_outer {
            return Err(Error::BracketStall {
                iterations,
                history,
            });
        }
        iterations += 1;
        let newton = newton_step(p, &lo)?;
        let from_hi = apply_t(p, &base, &hi);
        for ((l, a), b) in lo.iter_mut().zip(&newton).zip(&from_hi) {
            *l = l.max(a.max(*b));
        }
        let from_lo = apply_t(p, &base, &lo);
        for (h, b) in hi.iter_mut().zip(&from_lo) {
            *h = h.min(*b);
        }
        history.push(sup_diff(&hi, &lo));
    }

    // Rounding can cross the bounds by a few ulps once they meet.
    for (h, l) in hi.iter_mut().zip(&lo) {
        *h = h.max(*l);
    }
    // Polish inside the certified bracket.
    let mut u = newton_step(p, &lo)?;
    for ((x, l), h) in u.iter_mut().zip(&lo).zip(&hi) {
        *x = x.clamp(*l, *h);
    }
    let residual = p.residual(&u);
    Ok(SolveReport {
        solution: ScalarField::new(dom, u)?,
        lower: ScalarField::new(dom, lo)?,
        upper: ScalarField::new(dom, hi)?,
        iterations,
        bracket_width: *history.last().unwrap(),
        width_history: history,
        residual,
        method: Method::Bracket,
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn apply_t(p: &RegularizedProblem<'_>, base: &Factor, v: &[f64]) -> Vec<f64> {
    base.solve(&p.source(v))
}

fn is_subsolution(p: &RegularizedProblem<'_>, v: &[f64]) -> bool {
    if v.iter().any(|&x| x < 0.0) {
        return false;
    }
    let kv = p.system.apply(v);
    let g = p.source(v);
    let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    p.system
        .free_nodes()
        .iter()
        .all(|&i| kv[i] - g[i] <= 1e-12 * scale)
}

/// `(K + D) x = g(v) + D v` with `D = diag(γ ν (1/n + v)^{−γ−1})`.
fn newton_step(p: &RegularizedProblem<'_>, v: &[f64]) -> Result<Vec<f64>> {
    let s = p.shift();
    let g = p.source(v);
    let d: Vec<f64> = p
        .nu
        .masses()
        .iter()
        .zip(v)
        .map(|(&m, &x)| if m == 0.0 { 0.0 } else { p.gamma * m * (s + x.max(0.0)).powf(-p.gamma - 1.0) })
        .collect();
    let rhs: Vec<f64> = g.iter().zip(&d).zip(v).map(|((g, d), x)| g + d * x).collect();
    Ok(p.system.factor(Some(&d))?.solve(&rhs))
}

fn damped_picard(
    p: &RegularizedProblem<'_>,
    opts: &SolverOptions,
    base: &Factor,
    start: Option<&ScalarField>,
) -> Result<SolveReport> {
    let dom = p.domain();
    let mut u = match start {
        Some(s) if s.domain() == dom => s.values().to_vec(),
        _ => vec![0.0; dom.node_count()],
    };
    let mut theta = 0.5;
    let mut tu = apply_t(p, base, &u);
    let mut history = vec![sup_diff(&tu, &u)];
    let cap = opts.max_outer * 10;
    let mut iterations = 0;
    while *history.last().unwrap() > opts.tol {
        if iterations == cap {
            return Err(Error::BracketStall {
                iterations,
                history,
            });
        }
        iterations += 1;
        let next: Vec<f64> = u.iter().zip(&tu).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
        let t_next = apply_t(p, base, &next);
        let change = sup_diff(&t_next, &next);
        if change < *history.last().unwrap() {
            theta = (theta * 1.2).min(1.0);
        } else {
            theta = (theta * 0.5).max(1e-3);
        }
        u = next;
        tu = t_next;
        history.push(change);
    }
    let residual = p.residual(&u);
    let field = ScalarField::new(dom, u)?;
    Ok(SolveReport {
        lower: field.clone(),
        upper: field.clone(),
        solution: field,
        iterations,
        bracket_width: *history.last().unwrap(),
        width_history: history,
        residual,
        method: Method::DampedPicard,
    })
}

/// Interior barrier `w` with `−div(A∇w) = T_1(μ_a)/(1+w)^γ`.
#[derive(Debug, Clone)]
pub struct Barrier {
    pub field: ScalarField,
    /// `μ_a ≡ 0`: `w ≡ 0`, and lower bounds must come from the first level.
    pub use_first_level: bool,
    pub report: Option<SolveReport>,
}

pub fn compute_barrier(
    system: &LinearSystem,
    mu_a: &DiscreteMeasure,
    gamma: f64,
    opts: &SolverOptions,
) -> Result<Barrier> {
    if mu_a.is_zero() {
        return Ok(Barrier {
            field: ScalarField::zeros(system.domain()),
            use_first_level: true,
            report: None,
        });
    }
    let nu = mu_a.truncated(1.0);
    let report = solve_regularized(&RegularizedProblem::new(system, &nu, gamma, 1.0)?, opts)?;
    Ok(Barrier {
        field: report.solution.clone(),
        use_first_level: false,
        report: Some(report),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub level: usize,
    pub node: usize,
    pub value: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    /// `min_ω` of the reference field.
    pub c_omega: f64,
    pub pass: bool,
    /// Worst violation, if any.
    pub violation: Option<Violation>,
}

/// Checks `u_n ≥ reference − tol` on `ω` for every level.
pub fn check_lower_bound(
    levels: &[ScalarField],
    reference: &ScalarField,
    omega: &NodeMask,
    tol: f64,
) -> Result<LowerBoundReport> {
    if omega.len() != reference.values().len() {
        return Err(Error::DomainMismatch);
    }
    let c_omega = omega
        .nodes()
        .map(|i| reference.values()[i])
        .fold(f64::INFINITY, f64::min);
    let mut violation: Option<Violation> = None;
    for (level, u) in levels.iter().enumerate() {
        if u.domain() != reference.domain() {
            return Err(Error::DomainMismatch);
        }
        for i in omega.nodes() {
            let (v, r) = (u.values()[i], reference.values()[i]);
            let deficit = r - v;
            if deficit > tol && violation.as_ref().is_none_or(|w| deficit > w.reference - w.value) {
                violation = Some(Violation {
                    level,
                    node: i,
                    value: v,
                    reference: r,
                });
            }
        }
    }
    Ok(LowerBoundReport {
        c_omega,
        pass: violation.is_none(),
        violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{assemble, solve_linear, CoefficientField, Load};
    use crate::measure::{discretize, MeasureSpec};
    use proptest::prelude::*;

    fn setup(dim: usize, r: usize) -> (Domain, LinearSystem) {
        let d = Domain::unit(dim, r).unwrap();
        let sys = assemble(&d, &CoefficientField::identity(dim)).unwrap();
        (d, sys)
    }

    fn dirac(d: &Domain) -> DiscreteMeasure {
        discretize(&MeasureSpec::atom(&[0.5], 1.0), d, d.h() / 2.0).unwrap()
    }

    /// Root of `2a = (s + a/2)^{−γ}` by bisection.
    fn jump_slope(gamma: f64, s: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let a = 0.5 * (lo + hi);
            if 2.0 * a > (s + a / 2.0).powf(-gamma) {
                hi = a;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn dirac_level_is_a_scaled_tent() {
        let (d, sys) = setup(1, 65);
        let nu = dirac(&d);
        for (gamma, n) in [(1.0, 1e4), (3.0, 1e4), (0.5, 10.0)] {
            let p = RegularizedProblem::new(&sys, &nu, gamma, n).unwrap();
            let rep = solve_regularized(&p, &SolverOptions::default()).unwrap();
            let a = jump_slope(gamma, 1.0 / n);
            for i in 0..d.node_count() {
                let x = d.coords(i)[0];
                assert!((rep.solution.values()[i] - a * x.min(1.0 - x)).abs() < 1e-10);
            }
            assert!(rep.bracket_width <= 1e-10);
            assert!(rep.residual < 1e-9);
        }
        let p = RegularizedProblem::new(&sys, &nu, 3.0, 1e4).unwrap();
        let peak = solve_regularized(&p, &SolverOptions::default()).unwrap().solution.max();
        assert!((peak - 0.5f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn zero_datum_gives_zero() {
        let (d, sys) = setup(2, 9);
        let nu = DiscreteMeasure::zero(&d);
        let rep = solve_regularized(&RegularizedProblem::new(&sys, &nu, 1.0, 10.0).unwrap(), &SolverOptions::default()).unwrap();
        assert_eq!(rep.solution.max(), 0.0);
    }

    #[test]
    fn vanishing_exponent_reduces_to_linear_solve() {
        let (d, sys) = setup(2, 17);
        let nu = discretize(&MeasureSpec::constant(1.0), &d, d.h() / 2.0).unwrap();
        let rep = solve_regularized(&RegularizedProblem::new(&sys, &nu, 1e-6, 10.0).unwrap(), &SolverOptions::default()).unwrap();
        let lin = solve_linear(&sys, Load::Measure(&nu), 1e-12).unwrap();
        assert!(rep.solution.linf_distance(&lin).unwrap() < 1e-5 * lin.max());
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let (d, sys) = setup(1, 9);
        let nu = dirac(&d);
        assert!(RegularizedProblem::new(&sys, &nu, 0.0, 10.0).is_err());
        assert!(RegularizedProblem::new(&sys, &nu, 1.0, 0.5).is_err());
        let (other, _) = setup(1, 11);
        let nu2 = dirac(&other);
        assert!(matches!(RegularizedProblem::new(&sys, &nu2, 1.0, 2.0), Err(Error::DomainMismatch)));
    }

    #[test]
    fn barrier_ignores_density_above_one() {
        let (d, sys) = setup(2, 17);
        let one = discretize(&MeasureSpec::constant(1.0), &d, d.h() / 2.0).unwrap();
        let five = discretize(&MeasureSpec::constant(5.0), &d, d.h() / 2.0).unwrap();
        let w1 = compute_barrier(&sys, &one, 1.0, &SolverOptions::default()).unwrap();
        let w5 = compute_barrier(&sys, &five, 1.0, &SolverOptions::default()).unwrap();
        assert!(w1.field.linf_distance(&w5.field).unwrap() < 1e-14);
        assert!(!w1.use_first_level);
        for i in d.interior_nodes() {
            assert!(w1.field.values()[i] > 0.0);
        }
        let zero = compute_barrier(&sys, &DiscreteMeasure::zero(&d), 1.0, &SolverOptions::default()).unwrap();
        assert!(zero.use_first_level);
        assert_eq!(zero.field.max(), 0.0);
    }

    #[test]
    fn lower_bound_negative_control() {
        let (d, sys) = setup(2, 17);
        let nu = discretize(&MeasureSpec::constant(1.0), &d, d.h() / 2.0).unwrap();
        let w = compute_barrier(&sys, &nu, 1.0, &SolverOptions::default()).unwrap().field;
        let omega = d.compact_subdomain(0.1).unwrap();
        let rep = check_lower_bound(&[ScalarField::zeros(&d)], &w, &omega, 1e-8).unwrap();
        assert!(!rep.pass);
        let v = rep.violation.unwrap();
        assert_eq!(v.level, 0);
        assert!((v.reference - w.max()).abs() < 1e-14);
        assert!(rep.c_omega > 0.0);
        let ok = check_lower_bound(std::slice::from_ref(&w), &w, &omega, 1e-8).unwrap();
        assert!(ok.pass);
    }

    #[test]
    fn mixed_coefficient_uses_damped_picard() {
        let d = Domain::unit(2, 17).unwrap();
        let a = CoefficientField::constant(&[vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let sys = assemble(&d, &a).unwrap();
        let nu = discretize(&MeasureSpec::constant(1.0), &d, d.h() / 2.0).unwrap();
        let p = RegularizedProblem::new(&sys, &nu, 1.0, 10.0).unwrap();
        let rep = solve_regularized(&p, &SolverOptions::default()).unwrap();
        assert_eq!(rep.method, Method::DampedPicard);
        assert!(rep.residual < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bracket_encloses_solution_and_narrows(
            gamma in 0.2f64..4.0, n in 1.0f64..1e3, w in 0.1f64..3.0, c in 0.0f64..2.0,
            x in 0.2f64..0.8, y in 0.2f64..0.8,
        ) {
            let (d, sys) = setup(2, 17);
            let nu = discretize(&MeasureSpec::constant(c).with_atom(&[x, y], w), &d, d.h() / 2.0).unwrap();
            let p = RegularizedProblem::new(&sys, &nu, gamma, n).unwrap();
            let rep = solve_regularized(&p, &SolverOptions::default()).unwrap();
            for w in rep.width_history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            let (lo, u, hi) = (rep.lower.values(), rep.solution.values(), rep.upper.values());
            for i in 0..u.len() {
                prop_assert!(lo[i] <= u[i] && u[i] <= hi[i]);
                prop_assert!(u[i] >= 0.0);
            }
        }

        #[test]
        fn comparison_in_datum_and_level(
            gamma in 0.2f64..3.0, n in 1.0f64..1e3, w in 0.1f64..3.0, c in 0.0f64..2.0, extra in 0.0f64..2.0,
        ) {
            let (d, sys) = setup(2, 17);
            let small = discretize(&MeasureSpec::constant(c).with_atom(&[0.4, 0.6], w), &d, d.h() / 2.0).unwrap();
            let big = discretize(&MeasureSpec::constant(c + extra).with_atom(&[0.4, 0.6], w), &d, d.h() / 2.0).unwrap();
            let opts = SolverOptions::default();
            let u1 = solve_regularized(&RegularizedProblem::new(&sys, &small, gamma, n).unwrap(), &opts).unwrap().solution;
            let u2 = solve_regularized(&RegularizedProblem::new(&sys, &big, gamma, n).unwrap(), &opts).unwrap().solution;
            let u3 = solve_regularized(&RegularizedProblem::new(&sys, &small, gamma, n + 1.0).unwrap(), &opts).unwrap().solution;
            for i in 0..d.node_count() {
                prop_assert!(u1.values()[i] <= u2.values()[i] + 1e-9);
                prop_assert!(u1.values()[i] <= u3.values()[i] + 1e-9);
            }
        }
    }
}
