//! Report files. CSV floats carry 17 significant digits; JSON keys follow
//! struct order, so identical runs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use singlab_core::capacity::TrendPoint;
use singlab_core::diagnostics::SchemeComparison;
use singlab_core::ladder::{LevelFailure, MonotonicityReport};
use singlab_core::measure::{ComponentVerdict, Diffuseness};
use singlab_core::{Exponents, LadderResult, LimitStatus};

use crate::run::{CapacityOutcome, CaptureTrend, Check, Outcome, RefinementOutcome};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn level_header(trace_eps: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["scheme", "level", "q", "norm_w1q", "local_h1", "power_energy", "norm_ls"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(trace_eps.iter().map(|k| format!("phi_eps_{k}h")));
    h.extend(
        [
            "captured_mass",
            "captured_near_singular",
            "weak_residual",
            "iterations",
            "bracket_width",
            "above_previous",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

/// One row per completed level, schemes in the given order.
pub fn write_levels<W: Write>(out: W, trace_eps: &[f64], results: &[&LadderResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(level_header(trace_eps))?;
    for r in results {
        for l in &r.levels {
            let norms = l.norms.as_ref();
            let mut row = vec![
                r.scheme.name().to_string(),
                num(l.n),
                opt(norms.map(|n| n.q)),
                opt(norms.map(|n| n.norm_w1q)),
                opt(norms.map(|n| n.local_h1)),
                opt(norms.map(|n| n.power_energy)),
                opt(norms.and_then(|n| n.norm_ls)),
            ];
            row.extend(l.trace.iter().map(|&v| num(v)));
            row.extend([
                num(l.captured_mass),
                opt(l.captured_near_singular),
                opt(l.weak_residual),
                l.report.iterations.to_string(),
                num(l.report.bracket_width),
                l.above_previous.map(|b| b.to_string()).unwrap_or_default(),
            ]);
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_capacity<W: Write>(out: W, p: f64, points: &[TrendPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "p", "estimate"])?;
    for pt in points {
        w.write_record([num(pt.radius), num(p), num(pt.estimate)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SchemeSummary {
    pub scheme: &'static str,
    pub levels_completed: usize,
    pub limit_status: LimitStatus,
    pub differences: Vec<f64>,
    pub c_omega: Option<f64>,
    pub lower_bound_pass: Option<bool>,
    pub barrier_uses_first_level: bool,
    pub monotonicity: Option<MonotonicityReport>,
    pub max_weak_residual: Option<f64>,
    pub failure: Option<LevelFailure>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub status: &'static str,
    /// `"<diffuseness> / <signature>"`.
    pub flag: String,
    pub gamma: f64,
    pub dim: usize,
    pub resolution: usize,
    pub exponents: Option<Exponents>,
    pub diffuseness: Option<Diffuseness>,
    pub verdicts: Vec<ComponentVerdict>,
    pub schemes: Vec<SchemeSummary>,
    pub uniqueness: Option<SchemeComparison>,
    pub refinement: Option<RefinementOutcome>,
    pub capacity: Option<CapacityOutcome>,
    pub checks: Vec<Check>,
}

pub fn status_name(outcome: &Outcome) -> &'static str {
    if outcome.solver_failed() {
        "solver-failure"
    } else if !outcome.checks_passed() {
        "check-failure"
    } else {
        "pass"
    }
}

pub fn summarize(gamma: f64, dim: usize, resolution: usize, outcome: &Outcome) -> Summary {
    let first = outcome.schemes.first().map(|s| &s.result);
    let diffuseness = first.map(|r| r.diffuseness);
    let signature = match (&outcome.refinement, outcome.schemes.first()) {
        (Some(r), _) if r.trend == CaptureTrend::Decaying => "captured-mass decaying",
        (_, Some(s)) if s.status == LimitStatus::Converged => "converged",
        (_, Some(_)) => "not converged",
        (_, None) => "no ladder",
    };
    let kind = match diffuseness {
        Some(d) if d.is_concentrated() => "concentrated",
        Some(_) => "diffuse",
        None => "unclassified",
    };
    Summary {
        status: status_name(outcome),
        flag: format!("{kind} / {signature}"),
        gamma,
        dim,
        resolution,
        exponents: first.map(|r| r.exponents),
        diffuseness,
        verdicts: first.map(|r| r.verdicts.clone()).unwrap_or_default(),
        schemes: outcome
            .schemes
            .iter()
            .map(|s| {
                let r = &s.result;
                SchemeSummary {
                    scheme: r.scheme.name(),
                    levels_completed: r.levels.len(),
                    limit_status: s.status,
                    differences: s.differences.clone(),
                    c_omega: r.lower_bound.as_ref().map(|b| b.c_omega),
                    lower_bound_pass: r.lower_bound.as_ref().map(|b| b.pass),
                    barrier_uses_first_level: r.barrier_uses_first_level,
                    monotonicity: r.monotonicity.clone(),
                    max_weak_residual: r.levels.iter().filter_map(|l| l.weak_residual).reduce(f64::max),
                    failure: r.failure.clone(),
                }
            })
            .collect(),
        uniqueness: outcome.comparison,
        refinement: outcome.refinement.clone(),
        capacity: outcome.capacity.clone(),
        checks: outcome.checks.clone(),
    }
}

/// Writes `levels.csv`, `summary.json` and, with a capacity study,
/// `capacity.csv` into `dir`.
pub fn emit(dir: &Path, trace_eps: &[f64], summary: &Summary, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let results: Vec<&LadderResult> = outcome.schemes.iter().map(|s| &s.result).collect();
    let levels = dir.join("levels.csv");
    write_levels(fs::File::create(&levels).with_context(|| format!("writing {}", levels.display()))?, trace_eps, &results)?;
    if let Some(c) = &outcome.capacity {
        let path = dir.join("capacity.csv");
        write_capacity(fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?, c.p, &c.points)?;
    }
    write_json(&dir.join("summary.json"), summary)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use singlab_core::ladder::run_ladder;
    use singlab_core::{CoefficientField, Domain, LadderConfig, MeasureSpec, Scheme};

    #[test]
    fn empty_results_give_headers_only() {
        let mut buf = Vec::new();
        write_levels(&mut buf, &[8.0, 4.0], &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("scheme,level,q,"));
        assert!(text.contains("phi_eps_8h,phi_eps_4h"));

        let mut buf = Vec::new();
        write_capacity(&mut buf, 2.0, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "r,p,estimate\n");
    }

    #[test]
    fn two_levels_give_two_rows_in_order() {
        let d = Domain::unit(1, 17).unwrap();
        let cfg = LadderConfig::new(Scheme::Monotone, vec![10.0, 100.0]);
        let res = run_ladder(&d, &CoefficientField::identity(1), &MeasureSpec::constant(1.0), 1.0, &cfg).unwrap();
        let mut buf = Vec::new();
        write_levels(&mut buf, &cfg.diagnostics.trace_eps, &[&res]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("monotone,1.0000000000000000e1,"));
        assert!(rows[1].starts_with("monotone,1.0000000000000000e2,"));
        let width = level_header(&cfg.diagnostics.trace_eps).len();
        assert!(rows.iter().all(|r| r.split(',').count() == width));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, 6.02e23] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
