//! The regularization ladder: one solve per level `n`, checks between
//! levels, and detection of a limit.
//!
//! The split scheme solves with `T_n(μ_a) + μ_s` (singular part at full
//! mass) and compares every level with the barrier. The monotone scheme
//! solves with `T_n` of the whole lumped measure and checks
//! `u_{n_k} ≤ u_{n_{k+1}}` nodewise.

use serde::Serialize;

use crate::diagnostics::{
    boundary_trace_profile, builtin_test_set, captured_mass, norm_report, sobolev_exponents,
    weak_residual, Exponents, NormReport,
};
use crate::domain::{Domain, NodeMask, ScalarField};
use crate::elliptic::{assemble, CoefficientField, LinearSystem};
use crate::error::{Error, Result};
use crate::measure::{
    check_schedule, classify_diffuseness, discretize, discretize_parts, overall_diffuseness,
    ComponentVerdict, DiscreteMeasure, Diffuseness, MeasureParts, MeasureSpec,
};
use crate::singular::{
    check_lower_bound, compute_barrier, solve_regularized_from, LowerBoundReport,
    RegularizedProblem, SolveReport, SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Split,
    Monotone,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Split => "split",
            Scheme::Monotone => "monotone",
        }
    }
}

/// Which per-level diagnostics to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsConfig {
    pub norms: bool,
    /// Trace widths as multiples of `h`.
    pub trace_eps: Vec<f64>,
    pub weak_residual: bool,
    /// Distance defining `ω = {dist ≥ δ}`.
    pub omega_delta: f64,
    /// Radius of the region around the singular set used for captured mass.
    pub capture_radius: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            norms: true,
            trace_eps: vec![8.0, 4.0, 2.0],
            weak_residual: true,
            omega_delta: 0.1,
            capture_radius: Some(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderConfig {
    pub scheme: Scheme,
    pub schedule: Vec<f64>,
    pub solver: SolverOptions,
    pub convergence_tol: f64,
    /// Monotone scheme only: start each level's bracket at the previous
    /// solution.
    pub warm_start: bool,
    /// Tolerance of the nodewise monotonicity and barrier checks.
    pub check_tol: f64,
    pub diagnostics: DiagnosticsConfig,
}

impl LadderConfig {
    pub fn new(scheme: Scheme, schedule: Vec<f64>) -> Self {
        LadderConfig {
            scheme,
            schedule,
            solver: SolverOptions::default(),
            convergence_tol: 1e-3,
            warm_start: true,
            check_tol: 1e-9,
            diagnostics: DiagnosticsConfig::default(),
        }
    }

    /// `n0, n0·factor, …` with `count` entries.
    pub fn geometric(n0: f64, factor: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| n0 * factor.powi(k as i32)).collect()
    }

    /// Factor 10 from 10 to `10⁴`, narrowed to about 3 for `γ > 1`.
    pub fn default_schedule(gamma: f64) -> Vec<f64> {
        if gamma > 1.0 {
            vec![10.0, 30.0, 100.0, 300.0, 1e3, 3e3, 1e4]
        } else {
            vec![10.0, 100.0, 1e3, 1e4]
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub n: f64,
    pub datum: DiscreteMeasure,
    pub report: SolveReport,
    pub norms: Option<NormReport>,
    /// `Φ(ε)` for the configured widths, in that order.
    pub trace: Vec<f64>,
    /// Captured mass over `Ω`.
    pub captured_mass: f64,
    /// Captured mass near the singular set.
    pub captured_near_singular: Option<f64>,
    /// Weak residual of the level's own regularized equation.
    pub weak_residual: Option<f64>,
    /// Monotone scheme: nodewise `u_prev ≤ u + tol`.
    pub above_previous: Option<bool>,
}

impl LevelRecord {
    pub fn solution(&self) -> &ScalarField {
        &self.report.solution
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone)]
pub struct Limit {
    pub field: ScalarField,
    pub status: LimitStatus,
    /// `‖u_{k+1} − u_k‖_{L²}` for consecutive levels.
    pub differences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// Largest `u_k − u_{k+1}` over nodes and consecutive pairs.
    pub worst_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelFailure {
    pub level: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LadderResult {
    pub scheme: Scheme,
    pub gamma: f64,
    pub domain: Domain,
    pub exponents: Exponents,
    /// Classification at `p = q'(γ, N)`.
    pub verdicts: Vec<ComponentVerdict>,
    pub diffuseness: Diffuseness,
    pub levels: Vec<LevelRecord>,
    /// Barrier (split) or first-level (monotone) lower bound on `ω`.
    pub lower_bound: Option<LowerBoundReport>,
    pub barrier_uses_first_level: bool,
    pub monotonicity: Option<MonotonicityReport>,
    pub failure: Option<LevelFailure>,
    pub convergence_tol: f64,
}

impl LadderResult {
    pub fn fields(&self) -> Vec<&ScalarField> {
        self.levels.iter().map(|l| l.solution()).collect()
    }

    pub fn last(&self) -> Option<&LevelRecord> {
        self.levels.last()
    }
}

/// Converged iff the last difference is at most `tol` and the last (up to)
/// three differences do not increase.
pub fn convergence_status(differences: &[f64], tol: f64) -> LimitStatus {
    let Some(&last) = differences.last() else {
        return LimitStatus::NotConverged;
    };
    let tail = &differences[differences.len().saturating_sub(3)..];
    if last <= tol && tail.windows(2).all(|w| w[1] <= w[0]) {
        LimitStatus::Converged
    } else {
        LimitStatus::NotConverged
    }
}

pub fn level_differences(fields: &[&ScalarField]) -> Result<Vec<f64>> {
    fields.windows(2).map(|w| w[1].l2_distance(w[0])).collect()
}

/// Limit candidate: the last level, flagged by [`convergence_status`].
pub fn extract_limit(res: &LadderResult, tol: f64) -> Result<Limit> {
    if res.levels.len() < 2 {
        return Err(Error::InvalidArgument(
            "a limit needs at least two completed levels".into(),
        ));
    }
    let differences = level_differences(&res.fields())?;
    Ok(Limit {
        field: res.levels.last().unwrap().solution().clone(),
        status: convergence_status(&differences, tol),
        differences,
    })
}

/// Data of level `n` for either scheme.
pub fn level_datum(scheme: Scheme, parts: &MeasureParts, full: &DiscreteMeasure, n: f64) -> Result<DiscreteMeasure> {
    match scheme {
        Scheme::Split => parts.absolute.truncated(n).sum(&parts.singular),
        Scheme::Monotone => Ok(full.truncated(n)),
    }
}

/// Runs every level of `cfg.schedule`. A failing level stops the ladder and
/// is recorded in [`LadderResult::failure`]; completed levels are kept.
pub fn run_ladder(
    dom: &Domain,
    a: &CoefficientField,
    spec: &MeasureSpec,
    gamma: f64,
    cfg: &LadderConfig,
) -> Result<LadderResult> {
    let system = assemble(dom, a)?;
    run_ladder_with(&system, spec, gamma, cfg)
}

pub fn run_ladder_with(
    system: &LinearSystem,
    spec: &MeasureSpec,
    gamma: f64,
    cfg: &LadderConfig,
) -> Result<LadderResult> {
    check_schedule(&cfg.schedule)?;
    if cfg.schedule.len() < 2 {
        return Err(Error::InvalidArgument(
            "a ladder needs at least two levels".into(),
        ));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive (got {gamma})"
        )));
    }
    let dom = system.domain().clone();
    let exponents = sobolev_exponents(gamma, dom.dim());
    let verdicts = classify_diffuseness(spec, exponents.q_prime, dom.dim());
    let diffuseness = overall_diffuseness(&verdicts);

    let half = dom.h() / 2.0;
    let parts = discretize_parts(spec, &dom, half)?;
    let full = discretize(spec, &dom, half)?;
    let omega = dom.compact_subdomain(cfg.diagnostics.omega_delta)?;
    let near = match cfg.diagnostics.capture_radius {
        Some(r) if spec.has_singular_part() => Some(spec.singular_neighborhood(&dom, r)),
        _ => None,
    };
    let tests = builtin_test_set(&dom);
    let eps: Vec<f64> = cfg.diagnostics.trace_eps.iter().map(|k| k * dom.h()).collect();

    let mut levels: Vec<LevelRecord> = Vec::with_capacity(cfg.schedule.len());
    let mut failure = None;
    for &n in &cfg.schedule {
        let datum = level_datum(cfg.scheme, &parts, &full, n)?;
        let start = match cfg.scheme {
            Scheme::Monotone if cfg.warm_start => levels.last().map(|l| l.solution()),
            _ => None,
        };
        let problem = RegularizedProblem::new(system, &datum, gamma, n)?;
        let report = match solve_regularized_from(&problem, &cfg.solver, start) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(LevelFailure {
                    level: n,
                    message: Error::Level {
                        level: n,
                        source: Box::new(e),
                    }
                    .to_string(),
                });
                break;
            }
        };
        let record = evaluate_level(
            n, datum, report, gamma, system, cfg, &omega, near.as_ref(), &tests, &eps,
            levels.last(),
        )?;
        levels.push(record);
    }

    let mut barrier_uses_first_level = false;
    let lower_bound = if levels.is_empty() {
        None
    } else {
        let fields: Vec<ScalarField> = levels.iter().map(|l| l.solution().clone()).collect();
        let reference = match cfg.scheme {
            Scheme::Split => {
                let b = compute_barrier(system, &parts.absolute, gamma, &cfg.solver)?;
                barrier_uses_first_level = b.use_first_level;
                if b.use_first_level {
                    fields[0].clone()
                } else {
                    b.field
                }
            }
            Scheme::Monotone => fields[0].clone(),
        };
        Some(check_lower_bound(&fields, &reference, &omega, cfg.check_tol)?)
    };

    let monotonicity = match cfg.scheme {
        Scheme::Monotone => Some(monotonicity_report(&levels, cfg.check_tol)),
        Scheme::Split => None,
    };

    Ok(LadderResult {
        scheme: cfg.scheme,
        gamma,
        domain: dom,
        exponents,
        verdicts,
        diffuseness,
        levels,
        lower_bound,
        barrier_uses_first_level,
        monotonicity,
        failure,
        convergence_tol: cfg.convergence_tol,
    })
}

fn monotonicity_report(levels: &[LevelRecord], tol: f64) -> MonotonicityReport {
    let mut worst_drop = 0.0f64;
    for w in levels.windows(2) {
        for (a, b) in w[0].solution().values().iter().zip(w[1].solution().values()) {
            worst_drop = worst_drop.max(a - b);
        }
    }
    MonotonicityReport {
        pass: worst_drop <= tol,
        worst_drop,
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_level(
    n: f64,
    datum: DiscreteMeasure,
    report: SolveReport,
    gamma: f64,
    system: &LinearSystem,
    cfg: &LadderConfig,
    omega: &NodeMask,
    near: Option<&NodeMask>,
    tests: &[crate::diagnostics::TestBump],
    eps: &[f64],
    previous: Option<&LevelRecord>,
) -> Result<LevelRecord> {
    let u = &report.solution;
    let norms = if cfg.diagnostics.norms {
        Some(norm_report(u, gamma, omega)?)
    } else {
        None
    };
    let trace = boundary_trace_profile(u, eps)?;
    let captured = captured_mass(u, &datum, gamma, n, None)?;
    let captured_near_singular = match near {
        Some(mask) => Some(captured_mass(u, &datum, gamma, n, Some(mask))?),
        None => None,
    };
    let weak = if cfg.diagnostics.weak_residual {
        match weak_residual(u, &datum, gamma, 1.0 / n, system, tests) {
            Ok(r) => Some(r.max),
            // A zero datum yields u ≡ 0, which no bump can test.
            Err(Error::NonPositive { .. }) if datum.is_zero() => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let above_previous = match (cfg.scheme, previous) {
        (Scheme::Monotone, Some(p)) => Some(
            p.solution()
                .values()
                .iter()
                .zip(u.values())
                .all(|(a, b)| *a <= b + cfg.check_tol),
        ),
        _ => None,
    };
    Ok(LevelRecord {
        n,
        datum,
        report,
        norms,
        trace,
        captured_mass: captured,
        captured_near_singular,
        weak_residual: weak,
        above_previous,
    })
}

/// Captured mass near the singular set under refinement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementPoint {
    pub resolution: usize,
    pub captured_mass: f64,
}

/// Solves the monotone-scheme level `n` cold on each resolution and reports
/// the captured mass within `radius` of the singular set.
#[allow(clippy::too_many_arguments)]
pub fn captured_mass_study(
    spec: &MeasureSpec,
    dim: usize,
    a: &CoefficientField,
    gamma: f64,
    n: f64,
    resolutions: &[usize],
    radius: f64,
    opts: &SolverOptions,
) -> Result<Vec<RefinementPoint>> {
    resolutions
        .iter()
        .map(|&r| {
            let dom = Domain::unit(dim, r)?;
            let system = assemble(&dom, a)?;
            let datum = discretize(spec, &dom, dom.h() / 2.0)?.truncated(n);
            let rep = solve_regularized_from(
                &RegularizedProblem::new(&system, &datum, gamma, n)?,
                opts,
                None,
            )?;
            let mask = spec.singular_neighborhood(&dom, radius);
            Ok(RefinementPoint {
                resolution: r,
                captured_mass: captured_mass(&rep.solution, &datum, gamma, n, Some(&mask))?,
            })
        })
        .collect()
}
