//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use singlab_core::capacity::{capacity_family, estimate_capacity, TrendPoint};
use singlab_core::diagnostics::{
    boundary_trace_profile, builtin_test_set, cross_scheme_compare, sobolev_exponents, weak_residual,
};
use singlab_core::elliptic::assemble;
use singlab_core::ladder::{captured_mass_study, extract_limit, run_ladder_with};
use singlab_core::measure::{classify_diffuseness, overall_diffuseness};
use singlab_core::oracle::dirac_closed_form;
use singlab_core::{
    CoefficientField, CondenserProblem, CondenserSet, Domain, LadderConfig, LadderResult, LimitStatus,
    LinearSystem, MeasureSpec, ScalarField, Scheme, SolverOptions, Trend,
};

const SOLVER_TOL: f64 = 1e-10;
const SEGMENT_RES: usize = 129;
const SCHEDULE: [f64; 7] = [10.0, 30.0, 100.0, 300.0, 1e3, 3e3, 1e4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Every ladder run by this binary, for the suite-wide criteria.
#[derive(Default)]
struct Runs {
    ladders: Vec<(String, LadderResult)>,
}

impl Runs {
    fn ladder(
        &mut self,
        label: &str,
        system: &LinearSystem,
        spec: &MeasureSpec,
        gamma: f64,
        cfg: &LadderConfig,
    ) -> &LadderResult {
        let res = run_ladder_with(system, spec, gamma, cfg).expect("ladder setup");
        if let Some(f) = &res.failure {
            panic!("{label}: level {} failed: {}", f.level, f.message);
        }
        self.ladders.push((label.to_string(), res));
        &self.ladders.last().unwrap().1
    }

    fn get(&self, label: &str) -> &LadderResult {
        &self.ladders.iter().find(|(l, _)| l == label).unwrap().1
    }
}

fn segment() -> MeasureSpec {
    MeasureSpec::curve(vec![vec![0.5, 0.25], vec![0.5, 0.75]], 2.0)
}

fn config(scheme: Scheme, schedule: &[f64]) -> LadderConfig {
    let mut cfg = LadderConfig::new(scheme, schedule.to_vec());
    cfg.solver.tol = SOLVER_TOL;
    cfg
}

/// `(max − min)/max` over the values.
fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

fn sci(values: &[f64]) -> String {
    let v: Vec<String> = values.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", v.join(" "))
}

fn dirac_1d(runs: &mut Runs) -> Verdict {
    let dom = Domain::unit(1, 257).unwrap();
    let system = assemble(&dom, &CoefficientField::identity(1)).unwrap();
    let atom = MeasureSpec::atom(&[0.5], 1.0);
    let mut notes = Vec::new();
    let mut pass = true;
    for gamma in [1.0, 2.0, 3.0] {
        let res = runs.ladder(
            &format!("dirac-1d-monotone-{gamma}"),
            &system,
            &atom,
            gamma,
            &config(Scheme::Monotone, &[10.0, 100.0, 1e3, 1e4]),
        );
        let oracle = dirac_closed_form(gamma).unwrap();
        let u = res.last().unwrap().solution();
        let peak_err = (u.max() - oracle.peak()).abs() / oracle.peak();
        pass &= peak_err <= 0.01;
        notes.push(format!("peak err γ={gamma}: {peak_err:.2e}"));
        if gamma == 1.0 {
            let linf = u.linf_distance(&oracle.field(&dom).unwrap()).unwrap();
            pass &= linf <= 1e-3;
            notes.push(format!("L∞ to tent {linf:.2e}"));
        }
    }
    verdict(pass, notes.join(", "))
}

fn monotonicity(runs: &Runs) -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (_, res) in &runs.ladders {
        if let Some(m) = &res.monotonicity {
            worst = worst.max(m.worst_drop);
            count += 1;
        }
    }
    verdict(
        count > 0 && worst <= 1e-9,
        format!("{count} monotone runs, worst drop {worst:.2e}"),
    )
}

fn barrier(runs: &mut Runs) -> Verdict {
    let dom = Domain::unit(2, 65).unwrap();
    let system = assemble(&dom, &CoefficientField::identity(2)).unwrap();
    let spec = MeasureSpec::constant(1.0).with_curve(vec![vec![0.5, 0.25], vec![0.5, 0.75]], 2.0);
    let mut pass = true;
    let mut notes = Vec::new();
    for gamma in [0.5, 1.0, 2.0] {
        let mut cfg = config(Scheme::Split, &SCHEDULE);
        cfg.check_tol = 1e-8;
        let res = runs.ladder(&format!("barrier-split-{gamma}"), &system, &spec, gamma, &cfg);
        let lb = res.lower_bound.as_ref().unwrap();
        pass &= lb.pass && lb.c_omega > 0.0 && !res.barrier_uses_first_level;
        notes.push(format!("γ={gamma}: c_ω={:.3e} {}", lb.c_omega, if lb.pass { "ok" } else { "violated" }));
    }
    verdict(pass, notes.join(", "))
}

fn exponent_map() -> Verdict {
    let mut worst = 0.0f64;
    let mut pass = true;
    for dim in 1..=3usize {
        for gamma in [0.1, 0.25, 0.5, 0.75, 0.9, 1.0, 1.5, 2.0, 5.0] {
            let e = sobolev_exponents(gamma, dim);
            let n = dim as f64;
            // Both exponents are 2 once γ ≥ 1, and in the 1D oracle regime.
            let (q, qp) = if gamma >= 1.0 || dim == 1 {
                (2.0, 2.0)
            } else {
                (n * (gamma + 1.0) / (n - 1.0 + gamma), n * (gamma + 1.0) / ((n - 1.0) * gamma + 1.0))
            };
            worst = worst.max((e.q - q).abs()).max((e.q_prime - qp).abs());
            if gamma < 1.0 && dim > 1 {
                worst = worst.max((1.0 / e.q + 1.0 / e.q_prime - 1.0).abs());
            }
        }
    }
    let e = sobolev_exponents(0.5, 3);
    pass &= (e.q - 1.8).abs() <= 1e-12 && (e.q_prime - 2.25).abs() <= 1e-12;
    pass &= worst <= 1e-12;
    verdict(pass, format!("worst deviation {worst:.1e}; (0.5, 3) → ({}, {})", e.q, e.q_prime))
}

fn segment_ladders(runs: &mut Runs) {
    let dom = Domain::unit(2, SEGMENT_RES).unwrap();
    let system = assemble(&dom, &CoefficientField::identity(2)).unwrap();
    let spec = segment();
    for gamma in [0.5, 1.0, 2.0] {
        runs.ladder(&format!("segment-split-{gamma}"), &system, &spec, gamma, &config(Scheme::Split, &SCHEDULE));
    }
    for gamma in [1.0, 2.0] {
        runs.ladder(
            &format!("segment-monotone-{gamma}"),
            &system,
            &spec,
            gamma,
            &config(Scheme::Monotone, &SCHEDULE),
        );
    }
}

fn norm_uniformity(runs: &Runs) -> Verdict {
    let tail = |gamma: f64, pick: &dyn Fn(&singlab_core::NormReport) -> f64| -> f64 {
        let res = runs.get(&format!("segment-split-{gamma}"));
        let values: Vec<f64> = res.levels[res.levels.len() - 5..]
            .iter()
            .map(|l| pick(l.norms.as_ref().unwrap()))
            .collect();
        spread(&values)
    };
    let w1q = tail(0.5, &|n| n.norm_w1q);
    let h1 = tail(1.0, &|n| n.norm_w1q);
    let local = tail(2.0, &|n| n.local_h1);
    let power = tail(2.0, &|n| n.power_energy);
    let pass = [w1q, h1, local, power].iter().all(|&s| s <= 0.1);
    verdict(
        pass,
        format!("spreads: W1q(γ=.5) {w1q:.2e}, H1(γ=1) {h1:.2e}, local H1(γ=2) {local:.2e}, power(γ=2) {power:.2e}"),
    )
}

fn boundary_trace(runs: &Runs) -> Verdict {
    let res = runs.get("segment-split-2");
    let limit = extract_limit(res, res.convergence_tol).unwrap();
    let phi = &res.last().unwrap().trace;
    let ratios: Vec<f64> = phi.windows(2).map(|w| w[1] / w[0]).collect();
    let mut pass = limit.status == LimitStatus::Converged && ratios.iter().all(|&r| r <= 0.75);

    let dom = Domain::unit(1, 257).unwrap();
    let tent = ScalarField::from_fn(&dom, |x| x[0].min(1.0 - x[0]));
    let eps: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|k| k * dom.h()).collect();
    let tent_phi = boundary_trace_profile(&tent, &eps).unwrap();
    let tent_err = eps.iter().zip(&tent_phi).map(|(e, p)| (e - p).abs()).fold(0.0, f64::max);
    pass &= tent_err <= 1e-10;
    verdict(
        pass,
        format!("{:?} limit, halving ratios {ratios:.3?}, tent error {tent_err:.1e}", limit.status),
    )
}

fn uniqueness(runs: &mut Runs) -> Verdict {
    let dom = Domain::unit(1, SEGMENT_RES).unwrap();
    let system = assemble(&dom, &CoefficientField::identity(1)).unwrap();
    let atom = MeasureSpec::atom(&[0.5], 1.0);
    let mut pass = true;
    let mut notes = Vec::new();
    for gamma in [1.0, 2.0] {
        let s = runs.ladder(&format!("dirac-1d-split-{gamma}"), &system, &atom, gamma, &config(Scheme::Split, &SCHEDULE));
        let s = s.last().unwrap().solution().clone();
        let m = runs.ladder(
            &format!("dirac-1d-monotone-sched-{gamma}"),
            &system,
            &atom,
            gamma,
            &config(Scheme::Monotone, &SCHEDULE),
        );
        let cmp = cross_scheme_compare(&s, m.last().unwrap().solution(), gamma, 1e-2).unwrap();
        pass &= cmp.pass;
        notes.push(format!("1D γ={gamma}: {:.2e}", cmp.linf));
    }
    for gamma in [1.0, 2.0] {
        let s = runs.get(&format!("segment-split-{gamma}")).last().unwrap().solution();
        let m = runs.get(&format!("segment-monotone-{gamma}")).last().unwrap().solution();
        let cmp = cross_scheme_compare(s, m, gamma, 1e-2).unwrap();
        pass &= cmp.pass;
        notes.push(format!("2D γ={gamma}: {:.2e}", cmp.linf));
    }
    verdict(pass, format!("L∞ split vs monotone: {}", notes.join(", ")))
}

/// Name, set, `p`, radii, expected trend, measure on the limit set.
type FamilyCase<'a> = (&'a str, &'a CondenserSet, f64, &'a [f64], Trend, &'a MeasureSpec);

fn capacity() -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();

    let annulus = Domain::new(2, 257, &[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let cp = CondenserProblem {
        dom: annulus,
        set: CondenserSet::Ball {
            centre: vec![0.0, 0.0],
            radius: 0.25,
        },
        p: 2.0,
        outer_radius: Some(1.0),
    };
    let est = estimate_capacity(&cp, 1e-8).unwrap().value;
    let exact = 2.0 * std::f64::consts::PI / 4f64.ln();
    let rel = (est - exact).abs() / exact;
    pass &= rel <= 0.03;
    notes.push(format!("annulus rel err {rel:.2e}"));

    let dom = Domain::unit(2, 257).unwrap();
    let ball = CondenserSet::Ball {
        centre: vec![0.5, 0.5],
        radius: 0.1,
    };
    let tube = CondenserSet::Tube {
        a: vec![0.5, 0.25],
        b: vec![0.5, 0.75],
        radius: 0.05,
    };
    let point = MeasureSpec::atom(&[0.5, 0.5], 1.0);
    let cases: [FamilyCase<'_>; 3] = [
        ("B_r p=2", &ball, 2.0, &[0.2, 0.1, 0.05], Trend::Vanishing, &point),
        ("B_r p=3", &ball, 3.0, &[0.032, 0.016, 0.008, 0.004], Trend::BoundedBelow, &point),
        ("tube p=2", &tube, 2.0, &[0.1, 0.05, 0.025, 0.0125], Trend::BoundedBelow, &segment()),
    ];
    for (name, set, p, radii, expected, spec) in cases {
        let (points, trend): (Vec<TrendPoint>, Trend) = capacity_family(&dom, set, p, radii, None, 1e-8).unwrap();
        let concentrated = overall_diffuseness(&classify_diffuseness(spec, p, 2)).is_concentrated();
        let consistent = concentrated == (trend == Trend::Vanishing);
        pass &= trend == expected && consistent;
        let est: Vec<String> = points.iter().map(|q| format!("{:.3}", q.estimate)).collect();
        notes.push(format!("{name}: {trend:?} [{}]", est.join(" ")));
    }
    verdict(pass, notes.join("; "))
}

fn dichotomy() -> Verdict {
    let a = CoefficientField::identity(2);
    let opts = SolverOptions {
        tol: SOLVER_TOL,
        ..SolverOptions::default()
    };
    let resolutions = [65, 129, 257];
    let atom = MeasureSpec::atom(&[0.5, 0.5], 1.0);
    let atom_pts = captured_mass_study(&atom, 2, &a, 1.0, 1e4, &resolutions, 0.1, &opts).unwrap();
    let seg_pts = captured_mass_study(&segment(), 2, &a, 1.0, 1e4, &resolutions, 0.1, &opts).unwrap();
    let atom_mass: Vec<f64> = atom_pts.iter().map(|p| p.captured_mass).collect();
    let seg_mass: Vec<f64> = seg_pts.iter().map(|p| p.captured_mass).collect();
    let decay = atom_mass[0] / atom_mass[atom_mass.len() - 1];
    let seg_spread = spread(&seg_mass);
    verdict(
        decay >= 2.0 && seg_spread <= 0.1,
        format!("atom {} (decay ×{decay:.2}), segment {} (spread {seg_spread:.2e})", sci(&atom_mass), sci(&seg_mass)),
    )
}

fn weak_form(runs: &Runs) -> Verdict {
    let threshold = 10.0 * SOLVER_TOL;
    let mut worst = 0.0f64;
    let mut levels = 0;
    for (_, res) in &runs.ladders {
        for l in &res.levels {
            if let Some(r) = l.weak_residual {
                worst = worst.max(r);
                levels += 1;
            }
        }
    }
    let res = runs.get("segment-split-1");
    let last = res.last().unwrap();
    let dom = &res.domain;
    let system = assemble(dom, &CoefficientField::identity(2)).unwrap();
    let tests = builtin_test_set(dom);
    let shift = 1.0 / last.n;
    let perturbed = last.solution().map(|v| 1.01 * v);
    let bad_field = weak_residual(&perturbed, &last.datum, 1.0, shift, &system, &tests).unwrap().max;
    let doubled = last.datum.scaled(2.0);
    let bad_measure = weak_residual(last.solution(), &doubled, 1.0, shift, &system, &tests).unwrap().max;
    let margin = bad_field.min(bad_measure) / threshold;
    verdict(
        levels > 0 && worst <= threshold && margin >= 1e3,
        format!(
            "{levels} levels, worst {worst:.2e} (limit {threshold:.0e}); controls: perturbed {bad_field:.2e}, doubled {bad_measure:.2e}, margin ×{margin:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let mut runs = Runs::default();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        eprintln!("criterion {k} done in {:.1}s", t.elapsed().as_secs_f64());
        results.push((k, name, v));
    };
    record(1, "1D Dirac oracle", &mut || dirac_1d(&mut runs));
    record(3, "barrier lower bound", &mut || barrier(&mut runs));
    record(4, "exponent map", &mut exponent_map);
    segment_ladders(&mut runs);
    record(5, "norm uniformity", &mut || norm_uniformity(&runs));
    record(6, "boundary trace", &mut || boundary_trace(&runs));
    record(7, "uniqueness", &mut || uniqueness(&mut runs));
    record(8, "capacity", &mut capacity);
    record(9, "dichotomy", &mut dichotomy);
    record(10, "weak-form residual", &mut || weak_form(&runs));
    record(2, "monotonicity", &mut || monotonicity(&runs));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (k, name, v) in &results {
        println!("criterion {k:>2} {:<4} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
