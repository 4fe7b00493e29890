//! Lazily extended running integrals of positive functions, kept in log space.
//!
//! `F(s) = ∫_0^s e^{g(t)} dt` is tabulated in the distance `s = |x - c|` from a
//! base point toward one endpoint. Values at a geometric schedule of nodes are
//! cached; any other point adds one quadrature from the nearest node below.

use super::gauss_kronrod::integrate_log;
use crate::operator::Endpoint;
use crate::ExprError;

const REL_TOL: f64 = 1e-11;
const SUBSTEPS: f64 = 8.0;
const MAX_NODES: usize = 100_000;

pub struct LogCumulative<G> {
    log_f: G,
    c: f64,
    dir: f64,
    /// Distance from `c` to a finite endpoint.
    gap: Option<f64>,
    scale: f64,
    s: Vec<f64>,
    log_int: Vec<f64>,
    next_k: i32,
}

impl<G: FnMut(f64) -> Result<f64, ExprError>> LogCumulative<G> {
    /// `log_f` is the logarithm of the integrand as a function of `x`.
    pub fn new(log_f: G, c: f64, endpoint: Endpoint) -> Self {
        let (dir, gap) = match endpoint {
            Endpoint::Finite(e) => ((e - c).signum(), Some((e - c).abs())),
            Endpoint::Infinite(sign) => (sign.factor(), None),
        };
        LogCumulative {
            log_f,
            c,
            dir,
            gap,
            scale: c.abs().max(1.0),
            s: vec![0.0],
            log_int: vec![f64::NEG_INFINITY],
            next_k: 1,
        }
    }

    pub fn point(&self, s: f64) -> f64 {
        self.c + self.dir * s
    }

    /// `s` of the `k`-th scheduled node.
    fn scheduled(&self, k: i32) -> f64 {
        let t = k as f64 / SUBSTEPS;
        match self.gap {
            Some(gap) => gap * (1.0 - 0.5f64.powf(t)),
            None => self.scale * (2f64.powf(t) - 1.0),
        }
    }

    fn integrate(&mut self, s0: f64, s1: f64) -> Result<f64, ExprError> {
        let (c, dir) = (self.c, self.dir);
        let f = &mut self.log_f;
        let (lv, _, ok) = integrate_log(|s| f(c + dir * s), s0, s1, REL_TOL, 200)?;
        if !ok {
            return Err(ExprError::Domain(format!(
                "running integral failed to converge on [{}, {}]",
                c + dir * s0,
                c + dir * s1
            )));
        }
        Ok(lv)
    }

    /// `log ∫ e^g` between the base point and `c + dir·s`.
    pub fn log_value(&mut self, s: f64) -> Result<f64, ExprError> {
        if s <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        if let Some(gap) = self.gap {
            if s >= gap {
                return Err(ExprError::Domain("running integral evaluated at the endpoint".into()));
            }
        }
        while *self.s.last().expect("seeded") < s {
            if self.s.len() > MAX_NODES {
                return Err(ExprError::Domain("running integral needs too many nodes".into()));
            }
            let target = self.scheduled(self.next_k);
            self.next_k += 1;
            let n = self.s.len();
            let piece = self.integrate(self.s[n - 1], target)?;
            let total = log_add(self.log_int[n - 1], piece);
            if total == f64::INFINITY || total.is_nan() {
                return Err(ExprError::Domain(format!("running integral not finite at x = {}", self.point(target))));
            }
            self.s.push(target);
            self.log_int.push(total);
        }
        let i = self.s.partition_point(|&v| v <= s) - 1;
        let piece = self.integrate(self.s[i], s)?;
        Ok(log_add(self.log_int[i], piece))
    }

    /// `log ∫` between the base point and `x`.
    pub fn log_value_at(&mut self, x: f64) -> Result<f64, ExprError> {
        self.log_value((x - self.c) * self.dir)
    }

    pub fn node_count(&self) -> usize {
        self.s.len()
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Sign;

    #[test]
    fn exponential_growth_toward_infinity() {
        // ∫_0^x e^{t} = e^x - 1
        let mut cum = LogCumulative::new(|x: f64| Ok(x), 0.0, Endpoint::Infinite(Sign::Pos));
        for x in [0.01, 0.5, 3.0, 40.0, 700.0, 2000.0] {
            let lv = cum.log_value_at(x).unwrap();
            let exact = x + (-(-x).exp_m1()).ln();
            assert!((lv - exact).abs() < 1e-8 * (1.0 + exact.abs()), "{x}: {lv} vs {exact}");
        }
    }

    #[test]
    fn toward_lower_finite_endpoint() {
        // ∫_x^1 t^{-1/2} dt = 2 - 2√x
        let mut cum = LogCumulative::new(|x: f64| Ok(-0.5 * x.ln()), 1.0, Endpoint::Finite(0.0));
        for x in [0.9, 0.5, 1e-3, 1e-9] {
            let v = cum.log_value_at(x).unwrap().exp();
            let exact = 2.0 - 2.0 * x.sqrt();
            assert!((v - exact).abs() < 1e-8 * exact, "{x}: {v} vs {exact}");
        }
        assert!(cum.log_value_at(0.0).is_err());
    }

    #[test]
    fn base_point_is_zero() {
        let mut cum = LogCumulative::new(|_: f64| Ok(0.0), 2.0, Endpoint::Infinite(Sign::Neg));
        assert_eq!(cum.log_value_at(2.0).unwrap(), f64::NEG_INFINITY);
        let v = cum.log_value_at(-3.0).unwrap().exp();
        assert!((v - 5.0).abs() < 1e-10);
    }

    #[test]
    fn log_add_is_stable() {
        assert_eq!(log_add(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((log_add(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
