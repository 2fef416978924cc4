//! Executes a parsed scenario.

use log::info;
use serde::Serialize;
use singlab_core::capacity::{capacity_family, TrendPoint};
use singlab_core::diagnostics::{cross_scheme_compare, SchemeComparison};
use singlab_core::elliptic::assemble;
use singlab_core::ladder::{captured_mass_study, extract_limit, run_ladder_with, RefinementPoint};
use singlab_core::measure::{classify_diffuseness, overall_diffuseness, Diffuseness};
use singlab_core::{LadderResult, LimitStatus, Trend};

use crate::config::{ConfigError, ScenarioConfig};

/// Why a scenario stopped short of a clean pass.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// Setup failed before any level ran.
    Solver(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptureTrend {
    /// Last over first at most 1/2.
    Decaying,
    /// Spread within 10%.
    Stable,
    Inconclusive,
}

pub fn capture_trend(points: &[RefinementPoint]) -> CaptureTrend {
    let masses: Vec<f64> = points.iter().map(|p| p.captured_mass).collect();
    let (first, last) = (masses[0], masses[masses.len() - 1]);
    let max = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = masses.iter().copied().fold(f64::INFINITY, f64::min);
    if last <= 0.5 * first {
        CaptureTrend::Decaying
    } else if max - min <= 0.1 * max {
        CaptureTrend::Stable
    } else {
        CaptureTrend::Inconclusive
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementOutcome {
    pub n: f64,
    pub radius: f64,
    pub points: Vec<RefinementPoint>,
    pub trend: CaptureTrend,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityOutcome {
    pub p: f64,
    pub points: Vec<TrendPoint>,
    pub trend: Trend,
    /// Rule-based verdict for the set the family shrinks to.
    pub rule_verdict: Diffuseness,
    /// Vanishing iff the rule says concentrated.
    pub consistent: bool,
}

#[derive(Debug)]
pub struct SchemeOutcome {
    pub result: LadderResult,
    pub status: LimitStatus,
    pub differences: Vec<f64>,
}

#[derive(Debug)]
pub struct Outcome {
    pub schemes: Vec<SchemeOutcome>,
    pub comparison: Option<SchemeComparison>,
    pub refinement: Option<RefinementOutcome>,
    pub capacity: Option<CapacityOutcome>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn solver_failed(&self) -> bool {
        self.schemes.iter().any(|s| s.result.failure.is_some())
    }

    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs every requested scheme, then the optional refinement and capacity
/// studies. A level failure stops its ladder and skips the later studies.
pub fn run_scenario(cfg: &ScenarioConfig, quiet: bool) -> Result<Outcome, RunError> {
    let dom = cfg.build_domain()?;
    let a = cfg.build_coefficient(&dom)?;
    let spec = cfg.build_measure(&dom)?;
    let system = assemble(&dom, &a).map_err(|e| RunError::Config(ConfigError {
        key: Some("coefficient".into()),
        message: e.to_string(),
    }))?;

    let mut schemes = Vec::new();
    for scheme in cfg.scheme.schemes() {
        if !quiet {
            info!("running the {} ladder", scheme.name());
        }
        let ladder = cfg.ladder_config(scheme);
        let result = run_ladder_with(&system, &spec, cfg.gamma, &ladder).map_err(|e| RunError::Solver(e.to_string()))?;
        let (status, differences) = match extract_limit(&result, ladder.convergence_tol) {
            Ok(limit) => (limit.status, limit.differences),
            Err(_) => (LimitStatus::NotConverged, Vec::new()),
        };
        let failed = result.failure.is_some();
        schemes.push(SchemeOutcome {
            result,
            status,
            differences,
        });
        if failed {
            break;
        }
    }

    let mut outcome = Outcome {
        schemes,
        comparison: None,
        refinement: None,
        capacity: None,
        checks: Vec::new(),
    };
    if outcome.solver_failed() {
        outcome.checks = checks(cfg, &outcome);
        return Ok(outcome);
    }

    if let [s, m] = &outcome.schemes[..] {
        let (us, um) = (s.result.last().unwrap().solution(), m.result.last().unwrap().solution());
        outcome.comparison = Some(
            cross_scheme_compare(us, um, cfg.gamma, cfg.diagnostics.uniqueness_tol)
                .map_err(|e| RunError::Solver(e.to_string()))?,
        );
    }

    if let Some(r) = &cfg.refinement {
        if !quiet {
            info!("captured-mass study over {:?}", r.resolutions);
        }
        let mut points = Vec::new();
        for &res in &r.resolutions {
            let d = cfg.domain_at(res)?;
            let coef = cfg.build_coefficient(&d)?;
            let mut p = captured_mass_study(&spec, d.dim(), &coef, cfg.gamma, r.n, &[res], r.radius, &cfg.solver_options())
                .map_err(|e| RunError::Solver(e.to_string()))?;
            points.append(&mut p);
        }
        outcome.refinement = Some(RefinementOutcome {
            n: r.n,
            radius: r.radius,
            trend: capture_trend(&points),
            points,
        });
    }

    if cfg.capacity.is_some() {
        outcome.capacity = Some(run_capacity(cfg, quiet)?);
    }
    outcome.checks = checks(cfg, &outcome);
    Ok(outcome)
}

pub fn run_capacity(cfg: &ScenarioConfig, quiet: bool) -> Result<CapacityOutcome, RunError> {
    let cap = cfg.capacity.as_ref().ok_or_else(|| ConfigError {
        key: Some("capacity".into()),
        message: "the scenario has no capacity table".into(),
    })?;
    let dom = cfg.build_domain()?;
    if !quiet {
        info!("capacity family p = {} over radii {:?}", cap.p, cap.radii);
    }
    let (points, trend) = capacity_family(&dom, &cap.condenser_set(), cap.p, &cap.radii, cap.outer_radius, cap.tol)
        .map_err(|e| RunError::Solver(e.to_string()))?;
    let rule_verdict = overall_diffuseness(&classify_diffuseness(&cap.limit_measure(), cap.p, dom.dim()));
    Ok(CapacityOutcome {
        p: cap.p,
        points,
        consistent: rule_verdict.is_concentrated() == (trend == Trend::Vanishing),
        trend,
        rule_verdict,
    })
}

fn checks(cfg: &ScenarioConfig, outcome: &Outcome) -> Vec<Check> {
    let mut out = Vec::new();
    for s in &outcome.schemes {
        let r = &s.result;
        let name = r.scheme.name();
        if let Some(m) = &r.monotonicity {
            out.push(Check {
                name: format!("{name}/monotonicity"),
                pass: m.pass,
                detail: format!("worst drop {:e}", m.worst_drop),
            });
        }
        if let Some(lb) = &r.lower_bound {
            out.push(Check {
                name: format!("{name}/lower-bound"),
                pass: lb.pass && lb.c_omega > 0.0,
                detail: format!("c_omega {:e}", lb.c_omega),
            });
        }
        if cfg.diagnostics.weak_residual {
            let limit = 10.0 * cfg.solver.tol;
            let worst = r.levels.iter().filter_map(|l| l.weak_residual).fold(0.0, f64::max);
            out.push(Check {
                name: format!("{name}/weak-residual"),
                pass: worst <= limit,
                detail: format!("worst {worst:e}, limit {limit:e}"),
            });
        }
    }
    if let Some(c) = &outcome.comparison {
        out.push(Check {
            name: "uniqueness".into(),
            pass: c.pass,
            detail: format!("linf {:e}, tol {:e}", c.linf, cfg.diagnostics.uniqueness_tol),
        });
    }
    if let Some(c) = &outcome.capacity {
        out.push(Check {
            name: "capacity/rule-consistency".into(),
            pass: c.consistent,
            detail: format!("trend {:?}, rule {:?}", c.trend, c.rule_verdict),
        });
    }
    out
}
