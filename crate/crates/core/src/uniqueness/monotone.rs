//! The increasing solution of `(α u')' = ρ (λ + V) u`, `u(c) = 1`, `α u'(c) = 0`.
//!
//! Dividing by `ρ` turns the equation into `a u'' + b u' = (λ + V) u`. The march
//! follows `s = (log α u)' = b/a + u'/u`, which satisfies the Riccati equation
//!
//! ```text
//! s' = A + B' + B s - s²,   A = (λ + V)/a,   B = b/a,
//! ```
//!
//! so that `log(ρ u) = m - ln a` with `m = ∫_c s` never forms the difference of
//! two large logarithms. Steps are backward Euler, solved exactly through the
//! quadratic formula, extrapolated over one, two and four substeps to third
//! order with an embedded error estimate. `m` and `L = ∫_c B` are accumulated by Simpson's
//! rule, and `log u = m - L`.

use serde::{Deserialize, Serialize};

use crate::grid::{hermite, locate, GridFunction};
use crate::operator::{Endpoint, Interval, Operator1D};
use crate::{Error, ExprError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    TowardUpper,
    TowardLower,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::TowardUpper => 1.0,
            Direction::TowardLower => -1.0,
        }
    }

    pub fn endpoint(self, iv: &Interval) -> Endpoint {
        match self {
            Direction::TowardUpper => iv.upper(),
            Direction::TowardLower => iv.lower(),
        }
    }

    pub fn toward(iv: &Interval, end: Endpoint) -> Option<Direction> {
        if end == iv.upper() {
            Some(Direction::TowardUpper)
        } else if end == iv.lower() {
            Some(Direction::TowardLower)
        } else {
            None
        }
    }
}

/// Step control for the march.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step as a fraction of `max(1, |c|)`, also capped by the distance
    /// to a finite endpoint.
    pub initial_step: f64,
    pub max_steps: usize,
    /// `u'(c)`; zero for the monotone solution itself.
    pub initial_slope: f64,
}

impl Default for MarchControl {
    fn default() -> Self {
        MarchControl { rel_tol: 1e-10, abs_tol: 1e-10, initial_step: 1e-3, max_steps: 2_000_000, initial_slope: 0.0 }
    }
}

/// Largest step relative to the distance to a finite endpoint ahead, or to
/// `max(1, |x|)` toward infinity. Keeps Simpson accumulation of `m` accurate
/// where stiffness alone would allow huge steps.
const STEP_CAP: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
struct Node {
    x: f64,
    /// `(log α u)'`
    s: f64,
    /// `b/a`
    b: f64,
    /// `log α u`
    m: f64,
    /// `log α`
    l: f64,
}

/// Coefficients of the Riccati right-hand side at one point.
#[derive(Debug, Clone, Copy)]
struct Coeffs {
    a_term: f64,
    b: f64,
    db: f64,
}

/// Lazily extended march from `c` toward one endpoint.
#[derive(Debug, Clone)]
pub struct Marcher<'a> {
    op: &'a Operator1D,
    lambda: f64,
    dir: f64,
    /// Finite endpoint in the march direction, if any.
    end: Option<f64>,
    /// Finite endpoint behind the base point, for difference stencils.
    behind: Option<f64>,
    ctl: MarchControl,
    nodes: Vec<Node>,
    h: f64,
    stopped: Option<String>,
}

impl<'a> Marcher<'a> {
    pub fn new(
        op: &'a Operator1D,
        c: f64,
        lambda: f64,
        direction: Direction,
        ctl: MarchControl,
    ) -> Result<Self, Error> {
        let iv = op.interval();
        if !iv.contains(c) {
            return Err(Error::InvalidInput(format!("base point {c} is not interior")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!("λ must be positive, got {lambda}")));
        }
        let end = match direction.endpoint(&iv) {
            Endpoint::Finite(e) => Some(e),
            Endpoint::Infinite(_) => None,
        };
        let behind = match direction {
            Direction::TowardUpper => iv.lower(),
            Direction::TowardLower => iv.upper(),
        };
        let behind = match behind {
            Endpoint::Finite(e) => Some(e),
            Endpoint::Infinite(_) => None,
        };
        let mut m =
            Marcher { op, lambda, dir: direction.sign(), end, behind, ctl, nodes: Vec::new(), h: 0.0, stopped: None };
        let k = m.coeffs(c)?;
        let s0 = k.b + ctl.initial_slope;
        m.nodes.push(Node { x: c, s: s0, b: k.b, m: 0.0, l: 0.0 });
        let mut h = ctl.initial_step * c.abs().max(1.0);
        if let Some(e) = end {
            h = h.min(0.25 * (e - c).abs());
        }
        if let Some(e) = behind {
            h = h.min(0.25 * (e - c).abs());
        }
        m.h = m.dir * h;
        Ok(m)
    }

    fn coeffs(&self, x: f64) -> Result<Coeffs, ExprError> {
        let a = self.op.a(x)?;
        let v = self.op.v(x)?;
        let b = self.op.drift_ratio(x)?;
        // Central difference for (b/a)', kept inside the interval.
        let mut room = f64::INFINITY;
        for e in [self.end, self.behind].into_iter().flatten() {
            room = room.min((e - x).abs());
        }
        let d = 1e-5 * x.abs().max(1.0).min(0.5 * room);
        let db = (self.op.drift_ratio(x + d)? - self.op.drift_ratio(x - d)?) / (2.0 * d);
        let k = Coeffs { a_term: (self.lambda + v) / a, b, db };
        if !(k.a_term.is_finite() && k.b.is_finite() && k.db.is_finite()) {
            return Err(ExprError::Domain(format!("coefficients not finite at x = {x}")));
        }
        Ok(k)
    }

    /// One backward Euler step: root of `h s1² + (1 - h B) s1 - (s0 + h(A + B')) = 0`
    /// that tends to `s0` as `h → 0`.
    fn backward_euler(s0: f64, h: f64, k: &Coeffs) -> Option<f64> {
        let p = 1.0 - h * k.b;
        let sigma = s0 + h * (k.a_term + k.db);
        if p == 0.0 {
            let r = sigma / h;
            return if r >= 0.0 { Some(r.sqrt().copysign(h)) } else { None };
        }
        let t = (4.0 * h * sigma / p) / p;
        if !(t >= -1.0) || !t.is_finite() {
            return None;
        }
        let root = (1.0 + t).sqrt();
        let s1 = if p > 0.0 { 2.0 * sigma / (p * (1.0 + root)) } else { -p * (1.0 + root) / (2.0 * h) };
        s1.is_finite().then_some(s1)
    }

    fn last(&self) -> Node {
        *self.nodes.last().expect("seeded")
    }

    pub fn stopped(&self) -> Option<&str> {
        self.stopped.as_deref()
    }

    /// Furthest point reached.
    pub fn reach(&self) -> f64 {
        self.last().x
    }

    fn stop(&mut self, why: String) -> ExprError {
        self.stopped = Some(why.clone());
        ExprError::Domain(why)
    }

    fn step(&mut self) -> Result<(), ExprError> {
        let n0 = self.last();
        let mut h = self.h;
        let room = match self.end {
            Some(e) => (e - n0.x).abs(),
            None => n0.x.abs().max(1.0),
        };
        if h.abs() > STEP_CAP * room {
            h = self.dir * STEP_CAP * room;
        }
        loop {
            if h.abs() <= 4.0 * f64::EPSILON * n0.x.abs() || h.abs() < 1e-300 {
                return Err(self.stop(format!("step size underflow at x = {}", n0.x)));
            }
            let mut k = [None; 4];
            for (j, slot) in k.iter_mut().enumerate() {
                match self.coeffs(n0.x + 0.25 * (j + 1) as f64 * h) {
                    Ok(c) => *slot = Some(c),
                    Err(e) => return Err(self.stop(format!("coefficients unavailable beyond x = {}: {e}", n0.x))),
                }
            }
            let [kq, km, k3, k1] = k.map(|c| c.expect("filled"));
            let be = Self::backward_euler;
            let full = be(n0.s, h, &k1);
            let h1 = be(n0.s, 0.5 * h, &km);
            let h2 = h1.and_then(|v| be(v, 0.5 * h, &k1));
            let q2 = be(n0.s, 0.25 * h, &kq).and_then(|v| be(v, 0.25 * h, &km));
            let q4 = q2.and_then(|v| be(v, 0.25 * h, &k3)).and_then(|v| be(v, 0.25 * h, &k1));
            let (full, h1, h2, q2, q4) = match (full, h1, h2, q2, q4) {
                (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
                _ => {
                    h *= 0.25;
                    continue;
                }
            };
            // Extrapolation tableau in the step count, order 3.
            let t22 = 2.0 * h2 - full;
            let t32 = 2.0 * q4 - h2;
            let s1 = (4.0 * t32 - t22) / 3.0;
            let s_mid = 2.0 * q2 - h1;
            let err = (s1 - t22).abs();
            let tol = self.ctl.abs_tol + self.ctl.rel_tol * n0.s.abs().max(s1.abs());
            if err > tol || !s1.is_finite() || !s_mid.is_finite() {
                let shrink = if err.is_finite() { (0.9 * (tol / err).cbrt()).clamp(0.2, 0.9) } else { 0.2 };
                h *= shrink;
                continue;
            }
            let m1 = n0.m + h / 6.0 * (n0.s + 4.0 * s_mid + s1);
            let l1 = n0.l + h / 6.0 * (n0.b + 4.0 * km.b + k1.b);
            if !(m1.is_finite() && l1.is_finite()) {
                return Err(self.stop(format!("log scale overflow at x = {}", n0.x + h)));
            }
            self.nodes.push(Node { x: n0.x + h, s: s1, b: k1.b, m: m1, l: l1 });
            let grow = if err > 0.0 { (0.9 * (tol / err).cbrt()).clamp(0.2, 4.0) } else { 4.0 };
            self.h = h * grow;
            return Ok(());
        }
    }

    /// Extends the march until it covers `x`.
    pub fn advance_to(&mut self, x: f64) -> Result<(), ExprError> {
        while (x - self.last().x) * self.dir > 0.0 {
            if let Some(why) = &self.stopped {
                return Err(ExprError::Domain(why.clone()));
            }
            if self.nodes.len() >= self.ctl.max_steps {
                let why = format!("step budget exhausted at x = {}", self.last().x);
                return Err(self.stop(why));
            }
            self.step()?;
        }
        Ok(())
    }

    fn cell(&self, x: f64) -> (Node, Node) {
        // Nodes are monotone in the march direction; search on the signed axis.
        let n = self.nodes.len();
        if n == 1 {
            return (self.nodes[0], self.nodes[0]);
        }
        let i = self.nodes.partition_point(|nd| (nd.x - x) * self.dir <= 0.0);
        let i = i.clamp(1, n - 1);
        (self.nodes[i - 1], self.nodes[i])
    }

    /// `log(α u)` at a covered point.
    pub fn log_alpha_u(&mut self, x: f64) -> Result<f64, ExprError> {
        self.advance_to(x)?;
        let (n0, n1) = self.cell(x);
        if n0.x == n1.x {
            return Ok(n0.m);
        }
        Ok(hermite(n0.x, n1.x, n0.m, n1.m, n0.s, n1.s, x))
    }

    /// `log u` at a covered point.
    pub fn log_u(&mut self, x: f64) -> Result<f64, ExprError> {
        self.advance_to(x)?;
        let (n0, n1) = self.cell(x);
        if n0.x == n1.x {
            return Ok(n0.m - n0.l);
        }
        Ok(hermite(n0.x, n1.x, n0.m - n0.l, n1.m - n1.l, n0.s - n0.b, n1.s - n1.b, x))
    }

    /// `log(ρ u) = log(α u) - ln a`.
    pub fn log_rho_u(&mut self, x: f64) -> Result<f64, ExprError> {
        let m = self.log_alpha_u(x)?;
        Ok(m - self.op.a(x)?.ln())
    }

    pub fn into_solution(self, c: f64, direction: Direction) -> MonotoneSolution {
        let mut x = Vec::with_capacity(self.nodes.len());
        let mut log_u = Vec::with_capacity(self.nodes.len());
        let mut log_alpha_u = Vec::with_capacity(self.nodes.len());
        let mut q = Vec::with_capacity(self.nodes.len());
        let mut s = Vec::with_capacity(self.nodes.len());
        for nd in &self.nodes {
            x.push(nd.x);
            log_u.push(nd.m - nd.l);
            log_alpha_u.push(nd.m);
            q.push(nd.s - nd.b);
            s.push(nd.s);
        }
        MonotoneSolution { direction, lambda: self.lambda, c, x, log_u, q, log_alpha_u, s, truncated: self.stopped }
    }
}

/// Tabulated monotone solution in march order, kept in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneSolution {
    pub direction: Direction,
    pub lambda: f64,
    pub c: f64,
    /// Mesh points, starting at `c`.
    pub x: Vec<f64>,
    pub log_u: Vec<f64>,
    /// `u'/u`
    pub q: Vec<f64>,
    pub log_alpha_u: Vec<f64>,
    /// `(log α u)'`
    pub s: Vec<f64>,
    /// Why the march stopped short of its target, if it did.
    pub truncated: Option<String>,
}

impl MonotoneSolution {
    pub fn reach(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// `log u` by cubic Hermite interpolation; `None` outside the mesh.
    pub fn log_u_at(&self, t: f64) -> Option<f64> {
        let n = self.x.len();
        let (lo, hi) = (self.x[0].min(self.x[n - 1]), self.x[0].max(self.x[n - 1]));
        if !(t >= lo && t <= hi) {
            return None;
        }
        if n == 1 {
            return Some(self.log_u[0]);
        }
        let (xs, ys, ds) = self.increasing();
        let i = locate(&xs, t);
        Some(hermite(xs[i], xs[i + 1], ys[i], ys[i + 1], ds[i], ds[i + 1], t))
    }

    pub fn u_at(&self, t: f64) -> Option<f64> {
        self.log_u_at(t).map(f64::exp)
    }

    /// `u` on the mesh as an increasing-abscissa table (may overflow to `inf`).
    pub fn grid_function(&self) -> GridFunction {
        let (xs, ys, _) = self.increasing();
        GridFunction::new(xs, ys.into_iter().map(f64::exp).collect()).expect("march is strictly monotone")
    }

    fn increasing(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut xs = self.x.clone();
        let mut ys = self.log_u.clone();
        let mut ds = self.q.clone();
        if self.direction == Direction::TowardLower {
            xs.reverse();
            ys.reverse();
            ds.reverse();
        }
        (xs, ys, ds)
    }

    /// Relative defect of `[α u']_{x_i}^{x_{i+1}} = ∫ ρ (λ + V) u` on each cell,
    /// with the right side by Simpson's rule.
    pub fn cell_residuals(&self, op: &Operator1D) -> Result<Vec<f64>, ExprError> {
        let n = self.x.len();
        let mut out = Vec::with_capacity(n.saturating_sub(1));
        // α u' = e^{log α u} · q
        let flux = |i: usize| self.log_alpha_u[i].exp() * self.q[i];
        let source = |t: f64, log_au: f64| -> Result<f64, ExprError> {
            let a = op.a(t)?;
            Ok((log_au - a.ln()).exp() * (self.lambda + op.v(t)?))
        };
        for i in 0..n - 1 {
            let (x0, x1) = (self.x[i], self.x[i + 1]);
            let xm = 0.5 * (x0 + x1);
            let m_mid = hermite(x0, x1, self.log_alpha_u[i], self.log_alpha_u[i + 1], self.s[i], self.s[i + 1], xm);
            let rhs = (x1 - x0) / 6.0
                * (source(x0, self.log_alpha_u[i])? + 4.0 * source(xm, m_mid)? + source(x1, self.log_alpha_u[i + 1])?);
            let lhs = flux(i + 1) - flux(i);
            out.push((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
        }
        Ok(out)
    }
}

/// Marches the monotone solution from the base point of `fp` to `target`
/// (clamped strictly inside the interval). A stalled march returns the
/// truncated solution with the reason recorded.
pub fn monotone_solution(
    op: &Operator1D,
    c: f64,
    lambda: f64,
    direction: Direction,
    target: f64,
    ctl: MarchControl,
) -> Result<MonotoneSolution, Error> {
    let mut m = Marcher::new(op, c, lambda, direction, ctl)?;
    if (target - c) * direction.sign() < 0.0 {
        return Err(Error::InvalidInput(format!("target {target} lies behind the base point {c}")));
    }
    let _ = m.advance_to(target);
    Ok(m.into_solution(c, direction))
}
