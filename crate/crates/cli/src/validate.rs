//! Self-test against closed forms and oracles, sized to finish in seconds.

use singlab_core::capacity::estimate_capacity;
use singlab_core::diagnostics::{boundary_trace_profile, builtin_test_set, sobolev_exponents, weak_residual};
use singlab_core::elliptic::assemble;
use singlab_core::ladder::run_ladder_with;
use singlab_core::measure::discretize;
use singlab_core::oracle::{dirac_closed_form, shoot};
use singlab_core::singular::solve_regularized;
use singlab_core::{
    CoefficientField, CondenserProblem, CondenserSet, Domain, LadderConfig, MeasureSpec, RegularizedProblem,
    ScalarField, Scheme, SolverOptions,
};

use crate::run::Check;

type Probe = fn() -> singlab_core::Result<(bool, String)>;

const PROBES: [(&str, Probe); 6] = [
    ("dirac-1d", dirac),
    ("exponents", exponents),
    ("shooting-1d", shooting),
    ("trace-tent", trace),
    ("annulus-capacity", annulus),
    ("weak-residual-controls", controls),
];

pub fn run_validation() -> Vec<Check> {
    PROBES
        .iter()
        .map(|(name, probe)| match probe() {
            Ok((pass, detail)) => Check {
                name: name.to_string(),
                pass,
                detail,
            },
            Err(e) => Check {
                name: name.to_string(),
                pass: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

/// Monotone ladders for `γ ∈ {1, 2}`: tent, peak and monotonicity.
fn dirac() -> singlab_core::Result<(bool, String)> {
    let dom = Domain::unit(1, 129)?;
    let system = assemble(&dom, &CoefficientField::identity(1))?;
    let mut pass = true;
    let mut notes = Vec::new();
    for gamma in [1.0, 2.0] {
        let cfg = LadderConfig::new(Scheme::Monotone, vec![10.0, 100.0, 1e3, 1e4]);
        let res = run_ladder_with(&system, &MeasureSpec::atom(&[0.5], 1.0), gamma, &cfg)?;
        let oracle = dirac_closed_form(gamma)?;
        let linf = res.last().unwrap().solution().linf_distance(&oracle.field(&dom)?)?;
        let monotone = res.monotonicity.as_ref().is_some_and(|m| m.pass);
        pass &= res.failure.is_none() && linf <= 2e-3 * oracle.a && monotone;
        notes.push(format!("gamma {gamma}: linf {linf:.2e}"));
    }
    Ok((pass, notes.join(", ")))
}

fn exponents() -> singlab_core::Result<(bool, String)> {
    let e = sobolev_exponents(0.5, 3);
    let conj = 1.0 / e.q + 1.0 / e.q_prime - 1.0;
    let two = sobolev_exponents(1.0, 2);
    let pass = (e.q - 1.8).abs() <= 1e-12
        && (e.q_prime - 2.25).abs() <= 1e-12
        && conj.abs() <= 1e-12
        && two.q == 2.0
        && two.q_prime == 2.0;
    Ok((pass, format!("(0.5, 3) -> ({}, {})", e.q, e.q_prime)))
}

/// Constant data against shooting, `γ = 1`, `1/n = 0.1`.
fn shooting() -> singlab_core::Result<(bool, String)> {
    let dom = Domain::unit(1, 257)?;
    let system = assemble(&dom, &CoefficientField::identity(1))?;
    let datum = discretize(&MeasureSpec::constant(1.0), &dom, dom.h() / 2.0)?;
    let u = solve_regularized(&RegularizedProblem::new(&system, &datum, 1.0, 10.0)?, &SolverOptions::default())?.solution;
    let exact = shoot(1.0, 1.0, 0.1, 1e-12)?.field(&dom)?;
    let err = u.linf_distance(&exact)?;
    Ok((err <= 1e-4, format!("linf {err:.2e}")))
}

fn trace() -> singlab_core::Result<(bool, String)> {
    let dom = Domain::unit(1, 129)?;
    let tent = ScalarField::from_fn(&dom, |x| x[0].min(1.0 - x[0]));
    let eps = [8.0 * dom.h(), 4.0 * dom.h(), 2.0 * dom.h()];
    let phi = boundary_trace_profile(&tent, &eps)?;
    let err = eps.iter().zip(&phi).map(|(e, p)| (e - p).abs()).fold(0.0, f64::max);
    Ok((err <= 1e-10, format!("max |phi(eps) - eps| {err:.1e}")))
}

/// Concentric discs `r = 1/4`, `R = 1`: `2π/ln 4`.
fn annulus() -> singlab_core::Result<(bool, String)> {
    let cp = CondenserProblem {
        dom: Domain::new(2, 129, &[(-1.0, 1.0), (-1.0, 1.0)])?,
        set: CondenserSet::Ball {
            centre: vec![0.0, 0.0],
            radius: 0.25,
        },
        p: 2.0,
        outer_radius: Some(1.0),
    };
    let est = estimate_capacity(&cp, 1e-8)?.value;
    let exact = 2.0 * std::f64::consts::PI / 4f64.ln();
    let rel = (est - exact).abs() / exact;
    Ok((rel <= 0.05, format!("estimate {est:.5}, exact {exact:.5}, rel {rel:.2e}")))
}

/// A solved level passes; a perturbed field and a doubled measure fail.
fn controls() -> singlab_core::Result<(bool, String)> {
    let dom = Domain::unit(2, 33)?;
    let system = assemble(&dom, &CoefficientField::identity(2))?;
    let datum = discretize(&MeasureSpec::constant(1.0), &dom, dom.h() / 2.0)?;
    let opts = SolverOptions::default();
    let u = solve_regularized(&RegularizedProblem::new(&system, &datum, 1.0, 100.0)?, &opts)?.solution;
    let tests = builtin_test_set(&dom);
    let limit = 10.0 * opts.tol;
    let good = weak_residual(&u, &datum, 1.0, 0.01, &system, &tests)?.max;
    let perturbed = weak_residual(&u.map(|v| 1.01 * v), &datum, 1.0, 0.01, &system, &tests)?.max;
    let doubled = weak_residual(&u, &datum.scaled(2.0), 1.0, 0.01, &system, &tests)?.max;
    let pass = good <= limit && perturbed >= 1e3 * limit && doubled >= 1e3 * limit;
    Ok((pass, format!("solved {good:.1e}, perturbed {perturbed:.1e}, doubled {doubled:.1e}")))
}
