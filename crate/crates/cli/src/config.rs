//! Run configuration. Every knob has a default, so a minimal config names the
//! mode and the operator; [`RunConfig::resolve`] fills in the rest and the
//! resolved form is what reports echo.

use serde::{Deserialize, Serialize};

use feller_uniq::fdsolver::Bc;
use feller_uniq::operator::{make_operator_1d, Interval};
use feller_uniq::quadrature::Budget;
use feller_uniq::uniqueness::{ConditionOptions, MarchControl, NdMode};
use feller_uniq::{Endpoint, Expr, Operator1D, OperatorND};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[serde(rename = "classify_1d")]
    Classify1d,
    ClassifyNd,
    Entrance,
    FokkerPlanck,
    FeynmanKac,
    CrossValidate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Classify1d => "classify_1d",
            Mode::ClassifyNd => "classify_nd",
            Mode::Entrance => "entrance",
            Mode::FokkerPlanck => "fokker_planck",
            Mode::FeynmanKac => "feynman_kac",
            Mode::CrossValidate => "cross_validate",
        }
    }
}

/// An interval end: a number, or one of the strings `"-inf"`, `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EndpointSpec {
    Number(f64),
    Text(String),
}

impl EndpointSpec {
    fn to_endpoint(&self, pointer: &str) -> Result<Endpoint, CliError> {
        match self {
            EndpointSpec::Number(v) => Ok(Endpoint::Finite(*v)),
            EndpointSpec::Text(t) => match t.trim() {
                "-inf" => Ok(Endpoint::NEG_INF),
                "inf" | "+inf" => Ok(Endpoint::POS_INF),
                other => {
                    Err(CliError::config(pointer, format!("expected a number, \"-inf\" or \"inf\", got {other:?}")))
                }
            },
        }
    }
}

/// `a f'' + b f' - V f` on `(interval[0], interval[1])`, expressions in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub a: String,
    pub b: String,
    #[serde(default = "zero")]
    pub v: String,
    #[serde(default = "real_line")]
    pub interval: [EndpointSpec; 2],
}

/// `½Δf + b·∇f - V(|x|) f`; drift components over `x1..xd`, `V` and the
/// optional radial lower bound `beta` over `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorNdSpec {
    pub drift: Vec<String>,
    #[serde(default = "zero")]
    pub v: String,
    #[serde(default)]
    pub beta: Option<String>,
}

fn zero() -> String {
    "0".into()
}

fn real_line() -> [EndpointSpec; 2] {
    [EndpointSpec::Text("-inf".into()), EndpointSpec::Text("inf".into())]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarchSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for MarchSpec {
    fn default() -> Self {
        let m = MarchControl::default();
        MarchSpec { rel_tol: m.rel_tol, abs_tol: m.abs_tol, max_steps: m.max_steps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegralSpec {
    pub windows: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub divergence_cap: f64,
}

impl Default for IntegralSpec {
    fn default() -> Self {
        let b = ConditionOptions::default().budget;
        IntegralSpec { windows: b.windows, rel_tol: b.rel_tol, abs_tol: b.abs_tol, divergence_cap: b.divergence_cap }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NdModeSpec {
    #[default]
    ProofFaithful,
    StrictTheorem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NdSpec {
    pub mode: NdModeSpec,
    /// Directions sampled for the radial lower bound.
    pub directions: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
}

impl Default for NdSpec {
    fn default() -> Self {
        NdSpec { mode: NdModeSpec::ProofFaithful, directions: 256, r_min: 1e-3, r_max: 1e3, radii: 241 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcSpec {
    Absorbing,
    #[default]
    Reflecting,
}

impl From<BcSpec> for Bc {
    fn from(b: BcSpec) -> Bc {
        match b {
            BcSpec::Absorbing => Bc::Absorbing,
            BcSpec::Reflecting => Bc::Reflecting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpSpec {
    pub t_end: f64,
    pub dt: f64,
    pub cells: usize,
    /// Window `[-radius, radius]`, clipped to the interval.
    pub radius: f64,
    pub bc: BcSpec,
    /// Initial density, an expression in `x` (or `r` for radial runs).
    pub initial: String,
}

impl Default for FpSpec {
    fn default() -> Self {
        FpSpec {
            t_end: 1.0,
            dt: 1e-3,
            cells: 800,
            radius: 8.0,
            bc: BcSpec::Reflecting,
            initial: "exp(-x^2/2)/2.5066282746310002".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FkSpec {
    /// Start point; one coordinate in 1D. Empty means the base point `c` (1D)
    /// or `(1, 0, ..., 0)` (ND).
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub paths: usize,
    /// `f`, an expression in `x` (1D) or `x1..xd` (ND).
    pub observable: String,
    pub r_explode: f64,
    /// Radii for the explosion-fraction sensitivity table.
    pub explosion_radii: Vec<f64>,
}

impl Default for FkSpec {
    fn default() -> Self {
        FkSpec {
            x0: Vec::new(),
            t_end: 1.0,
            dt: 1e-3,
            paths: 10_000,
            observable: "1".into(),
            r_explode: 1e6,
            explosion_radii: vec![1e4, 1e6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSpec {
    pub t_end: f64,
    pub dt: f64,
    pub dx: f64,
    pub windows: Vec<f64>,
    /// Core radius `R₀` on which the two solutions are compared.
    pub core: f64,
    pub initial: String,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            t_end: 1.0,
            dt: 1e-3,
            dx: 0.02,
            windows: vec![4.0, 6.0, 8.0],
            core: 2.0,
            initial: "max(0, 1 - x^2)^2".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub march: MarchSpec,
    pub integral: IntegralSpec,
    pub nd: NdSpec,
    pub fp: FpSpec,
    pub fk: FkSpec,
    pub probe: ProbeSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Report path; standard output when absent.
    pub report: Option<String>,
    /// `t,mass` CSV from a Fokker–Planck run.
    pub mass_csv: Option<String>,
    /// `x,u` CSV of the final Fokker–Planck profile.
    pub profile_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free text, carried into the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_nd: Option<OperatorNdSpec>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Base point; interval midpoint by default, fixed at 1 for radial runs.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Parses a config, reporting schema violations with a JSON pointer.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        CliError::config(pointer, e.into_inner().to_string())
    })
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn parse_expr(text: &str, vars: &[&str], pointer: &str) -> Result<Expr, CliError> {
    Expr::parse_multi(text, vars).map_err(|e| CliError::config(pointer, e.to_string()))
}

fn positive(v: f64, pointer: &str) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(pointer, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn needs_nd(&self) -> bool {
        match self.mode {
            Mode::ClassifyNd => true,
            Mode::FeynmanKac | Mode::FokkerPlanck => self.operator.is_none() && self.operator_nd.is_some(),
            _ => false,
        }
    }

    /// Checks the config against the mode and fills every default, including
    /// `c` and the Feynman–Kac start point.
    pub fn resolve(mut self) -> Result<RunConfig, CliError> {
        if self.needs_nd() {
            if self.operator_nd.is_none() {
                return Err(CliError::config("/operator_nd", format!("required for mode {}", self.mode.name())));
            }
            if self.mode == Mode::ClassifyNd && self.operator.is_some() {
                return Err(CliError::config("/operator", "not used by classify_nd; give operator_nd only"));
            }
            self.c = Some(1.0);
        } else {
            if self.operator.is_none() {
                return Err(CliError::config("/operator", format!("required for mode {}", self.mode.name())));
            }
            if self.operator_nd.is_some() {
                return Err(CliError::config("/operator_nd", format!("not used by mode {}", self.mode.name())));
            }
            let iv = self.interval()?;
            let c = self.c.unwrap_or_else(|| iv.default_center());
            if !iv.contains(c) {
                return Err(CliError::config("/c", format!("base point {c} is not interior")));
            }
            self.c = Some(c);
        }
        if self.lambdas.is_empty() {
            return Err(CliError::config("/lambdas", "λ set is empty"));
        }
        for (i, &l) in self.lambdas.iter().enumerate() {
            positive(l, &format!("/lambdas/{i}"))?;
        }
        if self.numerics.fk.x0.is_empty() {
            self.numerics.fk.x0 = match &self.operator_nd {
                Some(nd) if self.needs_nd() => {
                    let mut x = vec![0.0; nd.drift.len()];
                    x[0] = 1.0;
                    x
                }
                _ => vec![self.c.expect("resolved")],
            };
        }
        let n = &self.numerics;
        positive(n.fp.t_end, "/numerics/fp/t_end")?;
        positive(n.fp.dt, "/numerics/fp/dt")?;
        positive(n.fp.radius, "/numerics/fp/radius")?;
        positive(n.fk.t_end, "/numerics/fk/t_end")?;
        positive(n.fk.dt, "/numerics/fk/dt")?;
        positive(n.fk.r_explode, "/numerics/fk/r_explode")?;
        positive(n.probe.t_end, "/numerics/probe/t_end")?;
        positive(n.probe.dt, "/numerics/probe/dt")?;
        positive(n.probe.dx, "/numerics/probe/dx")?;
        positive(n.probe.core, "/numerics/probe/core")?;
        positive(n.integral.rel_tol, "/numerics/integral/rel_tol")?;
        positive(n.march.rel_tol, "/numerics/march/rel_tol")?;
        if n.fk.paths < feller_uniq::montecarlo::MIN_PATHS {
            return Err(CliError::config(
                "/numerics/fk/paths",
                format!("need at least {} paths", feller_uniq::montecarlo::MIN_PATHS),
            ));
        }
        if n.nd.r_min <= 0.0 || n.nd.r_max <= n.nd.r_min || n.nd.radii < 2 {
            return Err(CliError::config("/numerics/nd", "need 0 < r_min < r_max and at least 2 radii"));
        }
        Ok(self)
    }

    pub fn interval(&self) -> Result<Interval, CliError> {
        let spec = self.operator.as_ref().ok_or_else(|| CliError::config("/operator", "missing"))?;
        let lo = spec.interval[0].to_endpoint("/operator/interval/0")?;
        let hi = spec.interval[1].to_endpoint("/operator/interval/1")?;
        Interval::new(lo, hi).map_err(|e| CliError::config("/operator/interval", e.to_string()))
    }

    /// Parses and validates the one-dimensional operator.
    pub fn operator_1d(&self) -> Result<Operator1D, CliError> {
        let spec = self.operator.as_ref().ok_or_else(|| CliError::config("/operator", "missing"))?;
        let a = parse_expr(&spec.a, &["x"], "/operator/a")?;
        let b = parse_expr(&spec.b, &["x"], "/operator/b")?;
        let v = parse_expr(&spec.v, &["x"], "/operator/v")?;
        Ok(make_operator_1d(a, b, v, self.interval()?).map_err(feller_uniq::Error::from)?)
    }

    pub fn operator_nd(&self) -> Result<OperatorND, CliError> {
        let spec = self.operator_nd.as_ref().ok_or_else(|| CliError::config("/operator_nd", "missing"))?;
        let d = spec.drift.len();
        if d < 2 {
            return Err(CliError::config("/operator_nd/drift", format!("need at least 2 components, got {d}")));
        }
        let names = feller_uniq::operator::coordinate_names(d);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let drift = spec
            .drift
            .iter()
            .enumerate()
            .map(|(i, t)| parse_expr(t, &refs, &format!("/operator_nd/drift/{i}")))
            .collect::<Result<Vec<_>, _>>()?;
        let v = parse_expr(&spec.v, &["r"], "/operator_nd/v")?;
        let beta = spec.beta.as_deref().map(|t| parse_expr(t, &["r"], "/operator_nd/beta")).transpose()?;
        Ok(OperatorND::new(d, drift, v, beta)?)
    }

    pub fn condition_options(&self) -> ConditionOptions {
        let n = &self.numerics;
        ConditionOptions {
            budget: Budget {
                windows: n.integral.windows,
                rel_tol: n.integral.rel_tol,
                abs_tol: n.integral.abs_tol,
                divergence_cap: n.integral.divergence_cap,
                ..ConditionOptions::default().budget
            },
            march: MarchControl {
                rel_tol: n.march.rel_tol,
                abs_tol: n.march.abs_tol,
                max_steps: n.march.max_steps,
                ..MarchControl::default()
            },
        }
    }

    pub fn nd_mode(&self) -> NdMode {
        match self.numerics.nd.mode {
            NdModeSpec::ProofFaithful => NdMode::ProofFaithful,
            NdModeSpec::StrictTheorem => NdMode::StrictTheorem,
        }
    }

    /// A one-variable expression from the config, in `var`.
    pub fn expr(&self, text: &str, var: &str, pointer: &str) -> Result<Expr, CliError> {
        parse_expr(text, &[var], pointer)
    }

    /// An expression over the coordinates of the process: `x` in 1D, `x1..xd` in ND.
    pub fn observable(&self) -> Result<Expr, CliError> {
        let text = &self.numerics.fk.observable;
        let pointer = "/numerics/fk/observable";
        match (&self.operator_nd, self.needs_nd()) {
            (Some(nd), true) => {
                let names = feller_uniq::operator::coordinate_names(nd.drift.len());
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                parse_expr(text, &refs, pointer)
            }
            _ => parse_expr(text, &["x"], pointer),
        }
    }
}
