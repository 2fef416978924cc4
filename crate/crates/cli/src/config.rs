//! Scenario files: TOML, every table closed under `deny_unknown_fields`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use singlab_core::capacity::CondenserSet;
use singlab_core::ladder::DiagnosticsConfig;
use singlab_core::measure::Density;
use singlab_core::{
    CoefficientField, Domain, Expression, LadderConfig, MeasureSpec, Scheme, SolverOptions,
};

/// A rejected scenario; `key` is the dotted path of the offending entry.
#[derive(Debug)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "invalid `{k}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Checked<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub gamma: f64,
    #[serde(default)]
    pub scheme: SchemeChoice,
    pub domain: DomainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<CoefficientConfig>,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeChoice {
    #[default]
    Split,
    Monotone,
    Both,
}

impl SchemeChoice {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::Split => vec![Scheme::Split],
            SchemeChoice::Monotone => vec![Scheme::Monotone],
            SchemeChoice::Both => vec![Scheme::Split, Scheme::Monotone],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub resolution: usize,
    /// `[lo, hi]` per axis; the unit box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<Vec<[f64; 2]>>,
}

/// Exactly one of `diagonal` and `matrix`; entries are numbers or expressions
/// in `x`, `y`, `z`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<Vec<Scalar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<Scalar>>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expression(String),
}

impl Scalar {
    fn expression(&self, key: &str) -> Checked<Expression> {
        let source = match self {
            Scalar::Number(v) => format!("{v:?}"),
            Scalar::Expression(s) => s.clone(),
        };
        Expression::parse(&source).map_err(|e| ConfigError::at(key, e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Scalar>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<AtomConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub points: Vec<Vec<f64>>,
    /// Mass per unit length.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    /// Defaults to the schedule suggested for `gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    #[serde(default = "default_check_tol")]
    pub check_tol: f64,
}

impl Default for LadderSection {
    fn default() -> Self {
        LadderSection {
            schedule: None,
            convergence_tol: default_convergence_tol(),
            warm_start: true,
            check_tol: default_check_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: default_solver_tol(),
            max_outer: default_max_outer(),
            linear_tol: default_linear_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_true")]
    pub norms: bool,
    /// Trace widths in units of `h`.
    #[serde(default = "default_trace_eps")]
    pub trace_eps: Vec<f64>,
    #[serde(default = "default_true")]
    pub weak_residual: bool,
    #[serde(default = "default_omega_delta")]
    pub omega_delta: f64,
    #[serde(default = "default_capture_radius")]
    pub capture_radius: f64,
    /// Largest accepted `L∞` distance between the two schemes' limits.
    #[serde(default = "default_uniqueness_tol")]
    pub uniqueness_tol: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            norms: true,
            trace_eps: default_trace_eps(),
            weak_residual: true,
            omega_delta: default_omega_delta(),
            capture_radius: default_capture_radius(),
            uniqueness_tol: default_uniqueness_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub set: SetConfig,
    pub p: f64,
    pub radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_radius: Option<f64>,
    #[serde(default = "default_capacity_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetConfig {
    Disc { centre: Vec<f64> },
    Tube { a: Vec<f64>, b: Vec<f64> },
    Point { centre: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementSection {
    pub resolutions: Vec<usize>,
    pub n: f64,
    #[serde(default = "default_capture_radius")]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out_dir() }
    }
}

fn default_true() -> bool {
    true
}
fn default_convergence_tol() -> f64 {
    1e-3
}
fn default_check_tol() -> f64 {
    1e-9
}
fn default_solver_tol() -> f64 {
    SolverOptions::default().tol
}
fn default_max_outer() -> usize {
    SolverOptions::default().max_outer
}
fn default_linear_tol() -> f64 {
    SolverOptions::default().linear_tol
}
fn default_trace_eps() -> Vec<f64> {
    DiagnosticsConfig::default().trace_eps
}
fn default_omega_delta() -> f64 {
    DiagnosticsConfig::default().omega_delta
}
fn default_capture_radius() -> f64 {
    0.1
}
fn default_uniqueness_tol() -> f64 {
    1e-2
}
fn default_capacity_tol() -> f64 {
    1e-6
}
fn default_out_dir() -> String {
    "out".into()
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Checked<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError {
            key: None,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Checked<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    /// Semantic checks that serde cannot express.
    pub fn validate(&self) -> Checked<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ConfigError::at("gamma", format!("must be positive and finite (got {})", self.gamma)));
        }
        let dim = self.domain.dim;
        if !(1..=3).contains(&dim) {
            return Err(ConfigError::at("domain.dim", format!("must be 1, 2 or 3 (got {dim})")));
        }
        if self.domain.resolution < 3 {
            return Err(ConfigError::at(
                "domain.resolution",
                format!("needs at least 3 nodes per axis (got {})", self.domain.resolution),
            ));
        }
        if let Some(ext) = &self.domain.extents {
            if ext.len() != dim {
                return Err(ConfigError::at("domain.extents", format!("needs {dim} intervals")));
            }
        }
        if let Some(s) = &self.ladder.schedule {
            if s.len() < 2 || s.iter().any(|n| !(*n >= 1.0)) || s.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::at(
                    "ladder.schedule",
                    "needs at least two strictly increasing levels, each at least 1",
                ));
            }
        }
        for (key, v) in [
            ("ladder.convergence_tol", self.ladder.convergence_tol),
            ("ladder.check_tol", self.ladder.check_tol),
            ("solver.tol", self.solver.tol),
            ("solver.linear_tol", self.solver.linear_tol),
            ("diagnostics.capture_radius", self.diagnostics.capture_radius),
            ("diagnostics.uniqueness_tol", self.diagnostics.uniqueness_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::at(key, format!("must be positive (got {v})")));
            }
        }
        if self.diagnostics.omega_delta < 0.0 {
            return Err(ConfigError::at("diagnostics.omega_delta", "must be nonnegative"));
        }
        if self.diagnostics.trace_eps.iter().any(|e| !(*e >= 1.0)) {
            return Err(ConfigError::at("diagnostics.trace_eps", "widths are multiples of h and at least 1"));
        }
        for (i, a) in self.measure.atoms.iter().enumerate() {
            if a.point.len() != dim {
                return Err(ConfigError::at(&format!("measure.atoms[{i}].point"), format!("needs {dim} coordinates")));
            }
            if !(a.weight >= 0.0) {
                return Err(ConfigError::at(&format!("measure.atoms[{i}].weight"), "must be nonnegative"));
            }
        }
        for (i, c) in self.measure.curves.iter().enumerate() {
            if c.points.len() < 2 || c.points.iter().any(|p| p.len() != dim) {
                return Err(ConfigError::at(
                    &format!("measure.curves[{i}].points"),
                    format!("needs at least two points with {dim} coordinates"),
                ));
            }
            if !(c.density >= 0.0) {
                return Err(ConfigError::at(&format!("measure.curves[{i}].density"), "must be nonnegative"));
            }
        }
        if let Some(c) = &self.coefficient {
            match (&c.diagonal, &c.matrix) {
                (Some(d), None) if d.len() == dim => {}
                (None, Some(m)) if m.len() == dim && m.iter().all(|r| r.len() == dim) => {}
                (Some(_), Some(_)) | (None, None) => {
                    return Err(ConfigError::at("coefficient", "give exactly one of `diagonal` and `matrix`"));
                }
                _ => return Err(ConfigError::at("coefficient", format!("entries must be {dim}-dimensional"))),
            }
        }
        if let Some(cap) = &self.capacity {
            if !(cap.p > 1.0) {
                return Err(ConfigError::at("capacity.p", format!("must exceed 1 (got {})", cap.p)));
            }
            if cap.radii.len() < 3 || cap.radii.windows(2).any(|w| !(w[1] < w[0])) || cap.radii.iter().any(|r| !(*r > 0.0)) {
                return Err(ConfigError::at("capacity.radii", "needs at least three positive, strictly decreasing radii"));
            }
            let points: Vec<&Vec<f64>> = match &cap.set {
                SetConfig::Disc { centre } | SetConfig::Point { centre } => vec![centre],
                SetConfig::Tube { a, b } => vec![a, b],
            };
            if points.iter().any(|p| p.len() != dim) {
                return Err(ConfigError::at("capacity.set", format!("points need {dim} coordinates")));
            }
        }
        if let Some(r) = &self.refinement {
            if self.domain.extents.as_ref().is_some_and(|e| e.iter().any(|iv| *iv != [0.0, 1.0])) {
                return Err(ConfigError::at("refinement", "refinement studies run on the unit box"));
            }
            if r.resolutions.len() < 2 || r.resolutions.iter().any(|&k| k < 3) {
                return Err(ConfigError::at("refinement.resolutions", "needs at least two resolutions of at least 3"));
            }
            if !(r.n >= 1.0) {
                return Err(ConfigError::at("refinement.n", "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn domain_at(&self, resolution: usize) -> Checked<Domain> {
        let dim = self.domain.dim;
        let extents: Vec<(f64, f64)> = match &self.domain.extents {
            Some(e) => e.iter().map(|iv| (iv[0], iv[1])).collect(),
            None => vec![(0.0, 1.0); dim],
        };
        Domain::new(dim, resolution, &extents).map_err(|e| ConfigError::at("domain", e.to_string()))
    }

    pub fn build_domain(&self) -> Checked<Domain> {
        self.domain_at(self.domain.resolution)
    }

    pub fn build_coefficient(&self, dom: &Domain) -> Checked<CoefficientField> {
        let Some(c) = &self.coefficient else {
            return Ok(CoefficientField::identity(dom.dim()));
        };
        let field = if let Some(diag) = &c.diagonal {
            let exprs = diag
                .iter()
                .enumerate()
                .map(|(i, s)| s.expression(&format!("coefficient.diagonal[{i}]")))
                .collect::<Checked<Vec<_>>>()?;
            CoefficientField::from_diagonal_exprs(dom, &exprs)
        } else {
            let rows = c.matrix.as_ref().expect("validated");
            let exprs = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, s)| s.expression(&format!("coefficient.matrix[{i}][{j}]")))
                        .collect::<Checked<Vec<_>>>()
                })
                .collect::<Checked<Vec<_>>>()?;
            CoefficientField::from_matrix_exprs(dom, &exprs)
        };
        field.map_err(|e| ConfigError::at("coefficient", e.to_string()))
    }

    pub fn build_measure(&self, dom: &Domain) -> Checked<MeasureSpec> {
        let mut spec = match &self.measure.density {
            None => MeasureSpec::zero(),
            Some(Scalar::Number(c)) => MeasureSpec::zero().with_density(Density::Constant(*c)),
            Some(s) => MeasureSpec::zero().with_density(Density::Expression(s.expression("measure.density")?)),
        };
        for a in &self.measure.atoms {
            spec = spec.with_atom(&a.point, a.weight);
        }
        for c in &self.measure.curves {
            spec = spec.with_curve(c.points.clone(), c.density);
        }
        spec.validate(dom).map_err(|e| ConfigError::at("measure", e.to_string()))?;
        Ok(spec)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_outer: self.solver.max_outer,
            linear_tol: self.solver.linear_tol,
        }
    }

    pub fn ladder_config(&self, scheme: Scheme) -> LadderConfig {
        let schedule = self
            .ladder
            .schedule
            .clone()
            .unwrap_or_else(|| LadderConfig::default_schedule(self.gamma));
        let mut cfg = LadderConfig::new(scheme, schedule);
        cfg.solver = self.solver_options();
        cfg.convergence_tol = self.ladder.convergence_tol;
        cfg.warm_start = self.ladder.warm_start;
        cfg.check_tol = self.ladder.check_tol;
        cfg.diagnostics = DiagnosticsConfig {
            norms: self.diagnostics.norms,
            trace_eps: self.diagnostics.trace_eps.clone(),
            weak_residual: self.diagnostics.weak_residual,
            omega_delta: self.diagnostics.omega_delta,
            capture_radius: Some(self.diagnostics.capture_radius),
        };
        cfg
    }
}

impl CapacitySection {
    /// The set at the first radius; the family varies the radius.
    pub fn condenser_set(&self) -> CondenserSet {
        let radius = self.radii[0];
        match &self.set {
            SetConfig::Disc { centre } => CondenserSet::Ball {
                centre: centre.clone(),
                radius,
            },
            SetConfig::Point { centre } => CondenserSet::Point {
                centre: centre.clone(),
                radius,
            },
            SetConfig::Tube { a, b } => CondenserSet::Tube {
                a: a.clone(),
                b: b.clone(),
                radius,
            },
        }
    }

    /// The measure supported on the family's limit set, for the rule-based
    /// verdict.
    pub fn limit_measure(&self) -> MeasureSpec {
        match &self.set {
            SetConfig::Disc { centre } | SetConfig::Point { centre } => MeasureSpec::atom(centre, 1.0),
            SetConfig::Tube { a, b } => MeasureSpec::curve(vec![a.clone(), b.clone()], 1.0),
        }
    }
}
