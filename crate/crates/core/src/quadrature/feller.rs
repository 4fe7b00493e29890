//! Speed measure and scale function of a one-dimensional operator.
//!
//! With `L(x) = ∫_c^x b/a`, the scale function is `α = e^L` and the speed
//! measure is `ρ = e^L / a`, so that `a f'' + b f' = (1/ρ)(α f')'`.
//! `L` is tabulated on an adaptive mesh and interpolated by cubic Hermite
//! polynomials using the exact slope `b/a` at each node.

use super::gauss_kronrod::integrate;
use crate::grid::{hermite, hermite_slope, locate};
use crate::operator::{Endpoint, Interval, Operator1D};
use crate::{Error, ExprError};

const ABS_TOL: f64 = 1e-10;
const REL_TOL: f64 = 1e-12;
const MAX_NODES: usize = 200_000;
/// Geometric refinements toward a finite endpoint: the mesh reaches within
/// `gap·2^-FINITE_DEPTH` of it.
const FINITE_DEPTH: i32 = 44;
/// Doublings toward an infinite endpoint: reach `c ± s(2^INFINITE_DEPTH - 1)`.
const INFINITE_DEPTH: i32 = 14;

#[derive(Debug, Clone)]
pub struct FellerPair {
    op: Operator1D,
    c: f64,
    x: Vec<f64>,
    log_alpha: Vec<f64>,
    slope: Vec<f64>,
    /// Mesh ends that stopped early because `b/a` could not be evaluated.
    truncated: [Option<f64>; 2],
}

impl FellerPair {
    /// Tabulates `L` from the base point `c` toward both endpoints.
    pub fn build(op: &Operator1D, c: f64) -> Result<FellerPair, Error> {
        let iv = op.interval();
        if !iv.contains(c) {
            return Err(Error::InvalidInput(format!("base point {c} is not interior")));
        }
        let probe = probe_extent(&iv);
        let sc = op.drift_ratio(c)?;
        let mut upper = vec![(c, 0.0, sc)];
        let t_hi = build_side(op, c, iv.upper(), probe.1, &mut upper)?;
        let mut lower = vec![(c, 0.0, sc)];
        let t_lo = build_side(op, c, iv.lower(), probe.0, &mut lower)?;
        lower.reverse();
        lower.pop();
        lower.extend(upper);
        let (x, rest): (Vec<f64>, Vec<(f64, f64)>) = lower.into_iter().map(|(x, l, s)| (x, (l, s))).unzip();
        let (log_alpha, slope) = rest.into_iter().unzip();
        Ok(FellerPair { op: op.clone(), c, x, log_alpha, slope, truncated: [t_lo, t_hi] })
    }

    pub fn base(&self) -> f64 {
        self.c
    }

    pub fn operator(&self) -> &Operator1D {
        &self.op
    }

    /// Range covered by the cached mesh.
    pub fn span(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn mesh_len(&self) -> usize {
        self.x.len()
    }

    pub fn truncated(&self) -> [Option<f64>; 2] {
        self.truncated
    }

    /// `L(x) = log α(x) = ∫_c^x b/a`.
    pub fn log_alpha(&self, t: f64) -> Result<f64, ExprError> {
        let n = self.x.len();
        if t >= self.x[0] && t <= self.x[n - 1] {
            if n == 1 {
                return Ok(0.0);
            }
            let i = locate(&self.x, t);
            return Ok(hermite(
                self.x[i],
                self.x[i + 1],
                self.log_alpha[i],
                self.log_alpha[i + 1],
                self.slope[i],
                self.slope[i + 1],
                t,
            ));
        }
        // Outside the mesh: integrate from the nearest cached node.
        let (x0, l0) =
            if t < self.x[0] { (self.x[0], self.log_alpha[0]) } else { (self.x[n - 1], self.log_alpha[n - 1]) };
        let r = integrate(|s| self.op.drift_ratio(s), x0, t, ABS_TOL, REL_TOL, 2000)?;
        if !r.converged {
            return Err(ExprError::Domain(format!("b/a not integrable up to x = {t}")));
        }
        Ok(l0 + r.value)
    }

    /// Slope of the interpolant of `L`; approximates `b/a`.
    pub fn log_alpha_slope(&self, t: f64) -> Result<f64, ExprError> {
        let n = self.x.len();
        if n >= 2 && t >= self.x[0] && t <= self.x[n - 1] {
            let i = locate(&self.x, t);
            return Ok(hermite_slope(
                self.x[i],
                self.x[i + 1],
                self.log_alpha[i],
                self.log_alpha[i + 1],
                self.slope[i],
                self.slope[i + 1],
                t,
            ));
        }
        self.op.drift_ratio(t)
    }

    pub fn alpha(&self, t: f64) -> Result<f64, ExprError> {
        Ok(self.log_alpha(t)?.exp())
    }

    pub fn log_rho(&self, t: f64) -> Result<f64, ExprError> {
        Ok(self.log_alpha(t)? - self.op.a(t)?.ln())
    }

    pub fn rho(&self, t: f64) -> Result<f64, ExprError> {
        Ok(self.log_rho(t)?.exp())
    }
}

/// Free-function form of [`FellerPair::build`].
pub fn build_feller(op: &Operator1D, c: f64) -> Result<FellerPair, Error> {
    FellerPair::build(op, c)
}

/// Extent of the validation probes on each side: evaluation failures inside it
/// are errors, beyond it they truncate the mesh.
fn probe_extent(iv: &Interval) -> (f64, f64) {
    let pi = iv.probe_intervals();
    let lo = pi.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pi.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn breakpoints(c: f64, end: Endpoint) -> Vec<f64> {
    match end {
        Endpoint::Finite(e) => {
            let gap = e - c;
            (1..=FINITE_DEPTH).map(|k| e - gap * 0.5f64.powi(k)).collect()
        }
        Endpoint::Infinite(s) => {
            let scale = s.factor() * c.abs().max(1.0);
            let mut pts: Vec<f64> = (1..=8).map(|k| c + scale * 0.125 * k as f64).collect();
            pts.extend((1..=INFINITE_DEPTH).map(|k| c + scale * 2f64.powi(k)));
            pts
        }
    }
}

/// Appends nodes `(x, L, b/a)` from `c` toward `end`. Returns the point where
/// the mesh was truncated, if any.
fn build_side(
    op: &Operator1D,
    c: f64,
    end: Endpoint,
    probe_limit: f64,
    nodes: &mut Vec<(f64, f64, f64)>,
) -> Result<Option<f64>, Error> {
    let inside_probe = |x: f64| {
        if probe_limit > c {
            x <= probe_limit
        } else {
            x >= probe_limit
        }
    };
    for target in breakpoints(c, end) {
        let mut stack = vec![target];
        while let Some(x1) = stack.pop() {
            let &(x0, l0, s0) = nodes.last().expect("seeded");
            match accept_cell(op, x0, l0, s0, x1) {
                Ok(Some(node)) => nodes.push(node),
                Ok(None) => {
                    let mid = 0.5 * (x0 + x1);
                    if mid == x0 || mid == x1 || nodes.len() + stack.len() > MAX_NODES {
                        if inside_probe(x1) {
                            return Err(ExprError::Domain(format!("cannot resolve ∫ b/a near x = {x0}")).into());
                        }
                        return Ok(Some(x0));
                    }
                    stack.push(x1);
                    stack.push(mid);
                }
                Err(e) => {
                    if inside_probe(x1) {
                        return Err(e.into());
                    }
                    return Ok(Some(x0));
                }
            }
        }
    }
    Ok(None)
}

/// Accepts the cell `[x0, x1]` when the Hermite interpolant of `L` agrees with
/// direct quadrature at the midpoint.
fn accept_cell(op: &Operator1D, x0: f64, l0: f64, s0: f64, x1: f64) -> Result<Option<(f64, f64, f64)>, ExprError> {
    let mid = 0.5 * (x0 + x1);
    let f = |s: f64| op.drift_ratio(s);
    let half = integrate(f, x0, mid, ABS_TOL * 0.1, REL_TOL * 0.1, 50)?;
    let rest = integrate(f, mid, x1, ABS_TOL * 0.1, REL_TOL * 0.1, 50)?;
    if !half.converged || !rest.converged {
        return Ok(None);
    }
    let l_mid = l0 + half.value;
    let l1 = l_mid + rest.value;
    let s1 = op.drift_ratio(x1)?;
    if !l1.is_finite() || !s1.is_finite() {
        return Err(ExprError::Domain(format!("log scale not finite at x = {x1}")));
    }
    let predicted = hermite(x0, x1, l0, l1, s0, s1, mid);
    let tol = ABS_TOL + REL_TOL * l_mid.abs();
    if (predicted - l_mid).abs() <= tol {
        Ok(Some((x1, l1, s1)))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{make_operator_1d, BetaProfile, Drift};
    use crate::Expr;

    fn op(a: &str, b: &str, iv: Interval) -> Operator1D {
        let p = |t: &str| Expr::parse(t, "x").unwrap();
        make_operator_1d(p(a), p(b), p("0"), iv).unwrap()
    }

    #[test]
    fn brownian_motion() {
        let fp = FellerPair::build(&op("0.5", "0", Interval::real_line()), 0.0).unwrap();
        for x in [-50.0, -1.0, 0.0, 0.3, 7.0, 1e3] {
            assert_eq!(fp.alpha(x).unwrap(), 1.0);
            assert!((fp.rho(x).unwrap() - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ornstein_uhlenbeck_log_scale() {
        // Oracle: ∫_0^x (-2t) dt = -x².
        let fp = FellerPair::build(&op("0.5", "-x", Interval::real_line()), 0.0).unwrap();
        for x in [-3.0, -0.7, 0.0, 0.25, 1.0, 2.5, 10.0] {
            let l = fp.log_alpha(x).unwrap();
            assert!((l + x * x).abs() <= 1e-9 * (1.0 + x * x), "L({x}) = {l}");
            let rho = fp.rho(x).unwrap();
            assert!((rho - 2.0 * (-x * x).exp()).abs() <= 1e-8 * rho.max(1e-300));
        }
    }

    #[test]
    fn identities_at_base_point() {
        let o = op("1 + x^2", "sin(x) - x", Interval::real_line());
        let fp = FellerPair::build(&o, 0.4).unwrap();
        assert_eq!(fp.alpha(0.4).unwrap(), 1.0);
        assert!((fp.rho(0.4).unwrap() - 1.0 / o.a(0.4).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn radial_bessel_three() {
        let o = Operator1D::new_unchecked(
            Expr::constant(0.5),
            Drift::Radial { beta: BetaProfile::Exact(Expr::parse("0", "r").unwrap()), dim: 3 },
            Expr::constant(0.0),
            Interval::half_line(),
        );
        let fp = FellerPair::build(&o, 1.0).unwrap();
        for r in [1e-6, 0.01, 0.5, 1.0, 3.0, 100.0] {
            let alpha = fp.alpha(r).unwrap();
            assert!((alpha - r * r).abs() <= 1e-8 * r * r, "alpha({r}) = {alpha}");
            let rho = fp.rho(r).unwrap();
            assert!((rho - 2.0 * r * r).abs() <= 1e-8 * r * r);
        }
    }

    #[test]
    fn evaluation_beyond_mesh_falls_back_to_quadrature() {
        let fp = FellerPair::build(&op("0.5", "-x", Interval::real_line()), 0.0).unwrap();
        let (_, hi) = fp.span();
        let x = hi * 1.5;
        let l = fp.log_alpha(x).unwrap();
        assert!((l + x * x).abs() <= 1e-9 * x * x);
    }

    #[test]
    fn overflowing_drift_truncates_outside_probes() {
        // exp(x) overflows near 710, beyond the validation probes.
        let fp = FellerPair::build(&op("1", "-exp(x/8)", Interval::real_line()), 0.0).unwrap();
        assert!(fp.truncated()[1].is_some());
        assert!(fp.truncated()[0].is_none());
    }

    #[test]
    fn rejects_exterior_base_point() {
        let iv = Interval::new(Endpoint::Finite(0.0), Endpoint::Finite(1.0)).unwrap();
        assert!(FellerPair::build(&op("1", "0", iv), 2.0).is_err());
    }
}
