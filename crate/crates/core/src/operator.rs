//! Operator specifications and their sampled hypothesis checks.
//!
//! Coefficient conditions (positivity of `a`, `V ≥ 0`, local integrability of
//! `1/a` and `b/a`) are almost-everywhere statements about black-box
//! expressions, so they are checked on samples. A violation found on a sample
//! is a hard error; passing means "not falsified".

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::grid::GridFunction;
use crate::Error;

/// Samples per compact probe interval.
pub const N_VALIDATE: usize = 512;
/// Probe intervals toward a finite endpoint, each half as far away as the last.
const FINITE_PROBES: usize = 30;
/// Probe intervals toward an infinite endpoint, `[m + 2^k - 1, m + 2^{k+1} - 1]`.
const INFINITE_PROBES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Neg => -1.0,
            Sign::Pos => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Endpoint {
    Finite(f64),
    Infinite(Sign),
}

impl Endpoint {
    pub const NEG_INF: Endpoint = Endpoint::Infinite(Sign::Neg);
    pub const POS_INF: Endpoint = Endpoint::Infinite(Sign::Pos);

    /// Position on the extended real line.
    pub fn value(self) -> f64 {
        match self {
            Endpoint::Finite(v) => v,
            Endpoint::Infinite(s) => s.factor() * f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Endpoint::Finite(_))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Finite(v) => write!(f, "{v}"),
            Endpoint::Infinite(Sign::Pos) => f.write_str("+inf"),
            Endpoint::Infinite(Sign::Neg) => f.write_str("-inf"),
        }
    }
}

/// Open interval `(lower, upper)` with `lower < upper` in the extended order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: Endpoint,
    upper: Endpoint,
}

impl Interval {
    pub fn new(lower: Endpoint, upper: Endpoint) -> Result<Interval, Error> {
        let ok = match (lower, upper) {
            (Endpoint::Infinite(Sign::Pos), _) | (_, Endpoint::Infinite(Sign::Neg)) => false,
            (Endpoint::Finite(a), Endpoint::Finite(b)) => a.is_finite() && b.is_finite() && a < b,
            (Endpoint::Finite(a), _) | (_, Endpoint::Finite(a)) => a.is_finite(),
            _ => true,
        };
        if ok {
            Ok(Interval { lower, upper })
        } else {
            Err(Error::InvalidInput(format!("invalid interval ({lower}, {upper})")))
        }
    }

    pub fn real_line() -> Interval {
        Interval { lower: Endpoint::NEG_INF, upper: Endpoint::POS_INF }
    }

    pub fn half_line() -> Interval {
        Interval { lower: Endpoint::Finite(0.0), upper: Endpoint::POS_INF }
    }

    pub fn lower(&self) -> Endpoint {
        self.lower
    }

    pub fn upper(&self) -> Endpoint {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower.value() && x < self.upper.value()
    }

    /// Default interior reference point: the midpoint of a bounded interval,
    /// one unit inside a half-line, `0` on the whole line.
    pub fn default_center(&self) -> f64 {
        match (self.lower, self.upper) {
            (Endpoint::Finite(a), Endpoint::Finite(b)) => 0.5 * (a + b),
            (Endpoint::Finite(a), _) => a + 1.0,
            (_, Endpoint::Finite(b)) => b - 1.0,
            _ => 0.0,
        }
    }

    /// Compact probe intervals covering the interior, refined geometrically
    /// toward each endpoint.
    pub fn probe_intervals(&self) -> Vec<(f64, f64)> {
        let m = self.default_center();
        let mut out = Vec::new();
        for (end, dir) in [(self.upper, 1.0), (self.lower, -1.0)] {
            match end {
                Endpoint::Finite(e) => {
                    let gap = (e - m).abs();
                    for k in 0..FINITE_PROBES {
                        let near = e - dir * gap * 0.5f64.powi(k as i32 + 1);
                        let far = e - dir * gap * 0.5f64.powi(k as i32);
                        out.push((near.min(far), near.max(far)));
                    }
                }
                Endpoint::Infinite(_) => {
                    for k in 0..INFINITE_PROBES {
                        let near = m + dir * (2f64.powi(k as i32) - 1.0);
                        let far = m + dir * (2f64.powi(k as i32 + 1) - 1.0);
                        out.push((near.min(far), near.max(far)));
                    }
                }
            }
        }
        out
    }

    /// Sample points: `N_VALIDATE` per probe interval, strictly interior.
    pub fn sample_points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for (lo, hi) in self.probe_intervals() {
            for j in 0..N_VALIDATE {
                let t = lo + (hi - lo) * (j as f64 + 0.5) / N_VALIDATE as f64;
                if self.contains(t) {
                    pts.push(t);
                }
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    NegativeDiffusion,
    NegativePotential,
    SingularCoefficient,
    NonZeroPotential,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind:?} at x = {at}: {detail}")]
pub struct ValidationError {
    pub kind: ViolationKind,
    pub at: f64,
    pub detail: String,
}

impl ValidationError {
    fn new(kind: ViolationKind, at: f64, detail: impl Into<String>) -> Self {
        ValidationError { kind, at, detail: detail.into() }
    }
}

/// Radial drift lower bound, either exact or tabulated.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaProfile {
    Exact(Expr),
    /// Linear interpolation; constant extension past either end of the table.
    Table(GridFunction),
}

impl BetaProfile {
    pub fn eval(&self, r: f64) -> Result<f64, ExprError> {
        match self {
            BetaProfile::Exact(e) => e.eval(r),
            BetaProfile::Table(g) => Ok(g.eval(r)),
        }
    }
}

/// First-order coefficient of a one-dimensional operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Expr(Expr),
    /// `β(r) + (d - 1) / (2r)`, the drift of the radial comparison diffusion.
    Radial {
        beta: BetaProfile,
        dim: usize,
    },
}

impl Drift {
    pub fn eval(&self, x: f64) -> Result<f64, ExprError> {
        match self {
            Drift::Expr(e) => e.eval(x),
            Drift::Radial { beta, dim } => {
                if x <= 0.0 {
                    return Err(ExprError::Domain(format!("radial drift evaluated at r = {x}")));
                }
                Ok(beta.eval(x)? + (*dim as f64 - 1.0) / (2.0 * x))
            }
        }
    }
}

/// `A f = a f'' + b f' - V f` on an open interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator1D {
    a: Expr,
    b: Drift,
    v: Expr,
    interval: Interval,
}

impl Operator1D {
    pub fn new(a: Expr, b: Drift, v: Expr, interval: Interval) -> Result<Self, ValidationError> {
        let op = Operator1D { a, b, v, interval };
        op.validate()?;
        Ok(op)
    }

    /// Builds without sampling validation. For internally constructed
    /// operators whose hypotheses hold by construction.
    pub fn new_unchecked(a: Expr, b: Drift, v: Expr, interval: Interval) -> Self {
        Operator1D { a, b, v, interval }
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn diffusion_expr(&self) -> &Expr {
        &self.a
    }

    pub fn drift(&self) -> &Drift {
        &self.b
    }

    pub fn potential_expr(&self) -> &Expr {
        &self.v
    }

    #[inline]
    pub fn a(&self, x: f64) -> Result<f64, ExprError> {
        self.a.eval(x)
    }

    #[inline]
    pub fn b(&self, x: f64) -> Result<f64, ExprError> {
        self.b.eval(x)
    }

    #[inline]
    pub fn v(&self, x: f64) -> Result<f64, ExprError> {
        self.v.eval(x)
    }

    /// `b(x) / a(x)`, the log-derivative of the scale function.
    #[inline]
    pub fn drift_ratio(&self, x: f64) -> Result<f64, ExprError> {
        let a = self.a(x)?;
        if a == 0.0 {
            return Err(ExprError::Domain(format!("a vanishes at x = {x}")));
        }
        Ok(self.b(x)? / a)
    }

    /// Whether `V` evaluates to exactly zero at every validation sample.
    pub fn potential_vanishes(&self) -> Result<(), ValidationError> {
        if self.v.as_constant() == Some(0.0) {
            return Ok(());
        }
        for x in self.interval.sample_points() {
            match self.v(x) {
                Ok(0.0) => {}
                Ok(val) => {
                    return Err(ValidationError::new(
                        ViolationKind::NonZeroPotential,
                        x,
                        format!("potential must vanish identically, V = {val}"),
                    ))
                }
                Err(e) => return Err(ValidationError::new(ViolationKind::SingularCoefficient, x, e.to_string())),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for x in self.interval.sample_points() {
            self.check_point(x)?;
        }
        Ok(())
    }

    fn check_point(&self, x: f64) -> Result<(), ValidationError> {
        let singular = |e: ExprError| ValidationError::new(ViolationKind::SingularCoefficient, x, e.to_string());
        let a = self.a(x).map_err(singular)?;
        if !(a > 0.0) {
            return Err(ValidationError::new(ViolationKind::NegativeDiffusion, x, format!("a = {a}")));
        }
        let v = self.v(x).map_err(singular)?;
        if v < 0.0 {
            return Err(ValidationError::new(ViolationKind::NegativePotential, x, format!("V = {v}")));
        }
        let b = self.b(x).map_err(singular)?;
        let ratio = b / a;
        if !(1.0 / a).is_finite() || !ratio.is_finite() {
            return Err(ValidationError::new(
                ViolationKind::SingularCoefficient,
                x,
                format!("1/a = {}, b/a = {ratio}", 1.0 / a),
            ));
        }
        Ok(())
    }
}

/// Validated 1D operator from expressions in a common variable.
pub fn make_operator_1d(a: Expr, b: Expr, v: Expr, interval: Interval) -> Result<Operator1D, ValidationError> {
    Operator1D::new(a, Drift::Expr(b), v, interval)
}

/// Coordinate names `x1, ..., xd` used by drift components.
pub fn coordinate_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

/// `A f = ½Δf + b·∇f - V(|x|) f` on ℝᵈ, `d ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorND {
    dim: usize,
    drift: Vec<Expr>,
    v: Expr,
    beta_override: Option<Expr>,
}

impl OperatorND {
    /// `drift[i]` is an expression in the coordinates `x1..xd`; `v` and
    /// `beta_override` are expressions in the radius.
    pub fn new(dim: usize, drift: Vec<Expr>, v: Expr, beta_override: Option<Expr>) -> Result<Self, Error> {
        if dim < 2 {
            return Err(Error::InvalidInput(format!("dimension must be at least 2, got {dim}")));
        }
        if drift.len() != dim {
            return Err(Error::InvalidInput(format!("{} drift components for dimension {dim}", drift.len())));
        }
        if let Some(bad) = drift.iter().find(|e| e.vars().len() != dim) {
            return Err(Error::InvalidInput(format!("drift component `{bad}` must be parsed over {dim} coordinates")));
        }
        for r in Interval::half_line().sample_points() {
            let val =
                v.eval(r).map_err(|e| ValidationError::new(ViolationKind::SingularCoefficient, r, e.to_string()))?;
            if val < 0.0 {
                return Err(ValidationError::new(ViolationKind::NegativePotential, r, format!("V = {val}")).into());
            }
        }
        Ok(OperatorND { dim, drift, v, beta_override })
    }

    /// Parses drift components over `x1..xd` and `V`, `β` over `r`.
    pub fn parse(drift: &[&str], v: &str, beta_override: Option<&str>) -> Result<Self, Error> {
        let names = coordinate_names(drift.len());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let drift = drift.iter().map(|t| Expr::parse_multi(t, &refs)).collect::<Result<Vec<_>, _>>()?;
        let v = Expr::parse(v, "r")?;
        let beta = beta_override.map(|t| Expr::parse(t, "r")).transpose()?;
        OperatorND::new(drift.len(), drift, v, beta)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn potential(&self) -> &Expr {
        &self.v
    }

    pub fn beta_override(&self) -> Option<&Expr> {
        self.beta_override.as_ref()
    }

    pub fn drift_at(&self, x: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval_at(x)?;
        }
        Ok(())
    }

    /// `V(|x|)`.
    pub fn v_at(&self, x: &[f64]) -> Result<f64, ExprError> {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.v.eval(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundProvenance {
    Sampled,
    UserSupplied,
}

/// Tabulated `β(r)` with `b(x)·x/|x| ≥ β(|x|)` on the sampled directions.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBound {
    pub beta: GridFunction,
    pub provenance: BoundProvenance,
    /// The override expression when `provenance` is `UserSupplied`.
    pub exact: Option<Expr>,
}

impl RadialBound {
    pub fn profile(&self) -> BetaProfile {
        match &self.exact {
            Some(e) => BetaProfile::Exact(e.clone()),
            None => BetaProfile::Table(self.beta.clone()),
        }
    }

    pub fn r_max(&self) -> f64 {
        self.beta.last().0
    }
}

/// Geometric radius grid on `[r_min, r_max]`.
pub fn default_radii(r_min: f64, r_max: f64, n: usize) -> Vec<f64> {
    let ratio = (r_max / r_min).ln() / (n - 1) as f64;
    (0..n).map(|i| r_min * (ratio * i as f64).exp()).collect()
}

/// Tabulates the radial drift lower bound. With an override the expression is
/// tabulated directly; otherwise `β(r)` is the minimum of `b(r e)·e` over
/// `n_dirs` unit directions from [`sphere_directions`].
pub fn radial_bound(op: &OperatorND, radii: &[f64], n_dirs: usize, seed: u64) -> Result<RadialBound, Error> {
    let d = op.dim();
    if n_dirs < 2 * d {
        return Err(Error::InvalidInput(format!("need at least {} directions, got {n_dirs}", 2 * d)));
    }
    if radii.is_empty() || radii[0] <= 0.0 {
        return Err(Error::InvalidInput("radii must be positive".into()));
    }
    if let Some(beta) = op.beta_override() {
        let values = radii.iter().map(|&r| beta.eval(r)).collect::<Result<Vec<_>, _>>()?;
        return Ok(RadialBound {
            beta: GridFunction::new(radii.to_vec(), values)?,
            provenance: BoundProvenance::UserSupplied,
            exact: Some(beta.clone()),
        });
    }
    let dirs = sphere_directions(d, n_dirs, seed);
    let values = radii
        .par_iter()
        .map(|&r| {
            let mut x = vec![0.0; d];
            let mut b = vec![0.0; d];
            let mut lowest = f64::INFINITY;
            for e in &dirs {
                for (xi, ei) in x.iter_mut().zip(e) {
                    *xi = r * ei;
                }
                op.drift_at(&x, &mut b)?;
                let radial: f64 = b.iter().zip(e).map(|(bi, ei)| bi * ei).sum();
                lowest = lowest.min(radial);
            }
            Ok(lowest)
        })
        .collect::<Result<Vec<f64>, ExprError>>()?;
    Ok(RadialBound {
        beta: GridFunction::new(radii.to_vec(), values)?,
        provenance: BoundProvenance::Sampled,
        exact: None,
    })
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

/// Unit directions in ℝᵈ: the `2d` signed coordinate axes first, then a
/// Cranley–Patterson-rotated Halton sequence pushed to the sphere through the
/// Gaussian quantile. The first `n` directions for a given seed are a prefix of
/// the first `m > n`, so refinements are nested.
pub fn sphere_directions(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(d >= 1 && d <= PRIMES.len(), "dimension {d} unsupported");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(n);
    'axes: for i in 0..d {
        for s in [1.0, -1.0] {
            if out.len() == n {
                break 'axes;
            }
            let mut e = vec![0.0; d];
            e[i] = s;
            out.push(e);
        }
    }
    let mut k = 1u64;
    while out.len() < n {
        let e: Vec<f64> = if d == 2 {
            let theta = 2.0 * PI * (radical_inverse(k, 2) + shift[0]).fract();
            vec![theta.cos(), theta.sin()]
        } else {
            let g: Vec<f64> = (0..d)
                .map(|j| {
                    let u = (radical_inverse(k, PRIMES[j]) + shift[j]).fract();
                    normal_quantile(u.clamp(1e-12, 1.0 - 1e-12))
                })
                .collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.iter().map(|v| v / norm).collect()
        };
        k += 1;
        if e.iter().all(|v| v.is_finite()) {
            out.push(e);
        }
    }
    out
}

/// Acklam's rational approximation to the standard normal quantile.
#[allow(clippy::excessive_precision)]
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] =
        [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}
