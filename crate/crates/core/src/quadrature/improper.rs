//! Three-valued verdicts for improper integrals of non-negative functions.
//!
//! The integral is accumulated over windows that march toward the endpoint:
//! `[anchor + s(2^k - 1), anchor + s(2^{k+1} - 1)]` with `s = max(1, |anchor|)`
//! toward ±∞, and gaps halving toward a finite endpoint. The sequence of window
//! increments `ΔI_k` is then read as asymptotic evidence:
//!
//! * Diverges when the running total passes `divergence_cap`, when increments
//!   fail to decrease over three consecutive windows, or when the least-squares
//!   slope of `log ΔI_k` over the last five windows is at least `-0.05`.
//! * Converges when five consecutive increment ratios are at most
//!   [`CONVERGENCE_RATIO`] and the geometric tail extrapolation has settled to
//!   within `rel_tol·|value| + abs_tol`.
//! * Inconclusive otherwise, including when the integrand cannot be evaluated.

use std::fmt::Display;

use serde::{Deserialize, Serialize};

use super::cumulative::log_add;
use super::gauss_kronrod::integrate_log;
use crate::operator::Endpoint;

/// Largest increment ratio counted as geometric decay.
pub const CONVERGENCE_RATIO: f64 = 0.75;
/// Least-squares slope of `log ΔI_k` at or above which growth is declared.
pub const DIVERGENCE_SLOPE: f64 = -0.05;
const SLOPE_WINDOWS: usize = 5;
const RATIO_WINDOWS: usize = 5;
const GROWTH_WINDOWS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub windows: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Adaptive subintervals allowed per window.
    pub max_intervals: usize,
    pub divergence_cap: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { windows: 40, rel_tol: 1e-9, abs_tol: 1e-12, max_intervals: 400, divergence_cap: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum IntegralVerdict {
    Converges { value: f64, err: f64 },
    Diverges { evidence: String },
    Inconclusive { reason: String },
}

impl IntegralVerdict {
    pub fn converges(&self) -> bool {
        matches!(self, IntegralVerdict::Converges { .. })
    }

    pub fn diverges(&self) -> bool {
        matches!(self, IntegralVerdict::Diverges { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, IntegralVerdict::Inconclusive { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            IntegralVerdict::Converges { .. } => "Converges",
            IntegralVerdict::Diverges { .. } => "Diverges",
            IntegralVerdict::Inconclusive { .. } => "Inconclusive",
        }
    }
}

/// Window boundaries `p_0 = anchor, p_1, ..., p_n` toward `endpoint`.
pub fn window_points(endpoint: Endpoint, anchor: f64, n: usize) -> Vec<f64> {
    match endpoint {
        Endpoint::Infinite(sign) => {
            let s = sign.factor() * anchor.abs().max(1.0);
            (0..=n).map(|k| anchor + s * (2f64.powi(k as i32) - 1.0)).collect()
        }
        Endpoint::Finite(e) => {
            let gap = e - anchor;
            (0..=n).map(|k| e - gap * 0.5f64.powi(k as i32)).collect()
        }
    }
}

/// Verdict for `∫ f` from `anchor` toward `endpoint`, `f ≥ 0`.
pub fn improper_integral<E: Display>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    endpoint: Endpoint,
    anchor: f64,
    budget: &Budget,
) -> IntegralVerdict {
    improper_integral_log(
        |x| {
            let v = f(x)?;
            Ok::<f64, E>(if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        },
        endpoint,
        anchor,
        budget,
    )
}

/// As [`improper_integral`], with the integrand given by its logarithm.
pub fn improper_integral_log<E: Display>(
    mut log_f: impl FnMut(f64) -> Result<f64, E>,
    endpoint: Endpoint,
    anchor: f64,
    budget: &Budget,
) -> IntegralVerdict {
    if let Endpoint::Finite(e) = endpoint {
        if e == anchor {
            return IntegralVerdict::Converges { value: 0.0, err: 0.0 };
        }
    }
    let points = window_points(endpoint, anchor, budget.windows);
    let log_cap = budget.divergence_cap.ln();
    let mut log_inc: Vec<f64> = Vec::with_capacity(budget.windows);
    let mut log_total = f64::NEG_INFINITY;
    let mut quad_err = 0.0;
    let mut prev_extrapolated: Option<f64> = None;

    for k in 1..points.len() {
        let (a, b) = (points[k - 1], points[k]);
        if !(a - b).is_normal() || a == b {
            return IntegralVerdict::Inconclusive {
                reason: format!("window {k} collapsed at x = {a} (floating-point resolution)"),
            };
        }
        let (lv, rel, ok) = match integrate_log(&mut log_f, a, b, budget.rel_tol * 0.1, budget.max_intervals) {
            Ok(r) => r,
            Err(e) => {
                return IntegralVerdict::Inconclusive {
                    reason: format!("integrand unavailable in window {k} [{a}, {b}]: {e}"),
                }
            }
        };
        if lv == f64::INFINITY {
            return IntegralVerdict::Diverges { evidence: format!("integrand overflows in window {k} [{a}, {b}]") };
        }
        if !ok && lv.is_finite() {
            return IntegralVerdict::Inconclusive {
                reason: format!("quadrature budget exceeded in window {k} [{a}, {b}]"),
            };
        }
        log_total = log_add(log_total, lv);
        log_inc.push(lv);
        if lv.is_finite() {
            quad_err += rel * lv.exp();
        }

        if log_total > log_cap {
            return IntegralVerdict::Diverges {
                evidence: format!(
                    "cumulative integral exceeds {:e} after {k} windows (x = {b})",
                    budget.divergence_cap
                ),
            };
        }
        let n = log_inc.len();
        if n > GROWTH_WINDOWS {
            let growing = (n - GROWTH_WINDOWS..n).all(|i| log_inc[i] >= log_inc[i - 1] - 1e-9);
            if growing && log_inc[n - 1].is_finite() {
                return IntegralVerdict::Diverges {
                    evidence: format!(
                        "window increments non-decreasing over {GROWTH_WINDOWS} consecutive windows up to x = {b} (last increment {:e})",
                        log_inc[n - 1].exp()
                    ),
                };
            }
        }
        if n >= SLOPE_WINDOWS {
            let tail = &log_inc[n - SLOPE_WINDOWS..];
            if tail.iter().all(|v| v.is_finite()) {
                let slope = ls_slope(tail);
                if slope >= DIVERGENCE_SLOPE {
                    return IntegralVerdict::Diverges {
                        evidence: format!(
                            "log-increment slope {slope:.4} over last {SLOPE_WINDOWS} windows up to x = {b}"
                        ),
                    };
                }
            }
        }
        if n > RATIO_WINDOWS {
            let decaying = (n - RATIO_WINDOWS..n)
                .all(|i| log_inc[i] - log_inc[i - 1] <= CONVERGENCE_RATIO.ln() || log_inc[i] == f64::NEG_INFINITY);
            let total = log_total.exp();
            let last = log_inc[n - 1];
            let tail = if last == f64::NEG_INFINITY {
                0.0
            } else {
                let r = (last - log_inc[n - 2]).exp();
                last.exp() * r / (1.0 - r)
            };
            let extrapolated = total + tail;
            if decaying {
                if let Some(prev) = prev_extrapolated {
                    let err = (extrapolated - prev).abs() + quad_err;
                    if err <= budget.rel_tol * extrapolated.abs() + budget.abs_tol {
                        return IntegralVerdict::Converges { value: extrapolated, err };
                    }
                }
            }
            prev_extrapolated = Some(extrapolated);
        } else if n >= 2 {
            let last = log_inc[n - 1];
            let r = (last - log_inc[n - 2]).exp();
            prev_extrapolated = Some(if r < 1.0 && last.is_finite() {
                log_total.exp() + last.exp() * r / (1.0 - r)
            } else {
                log_total.exp()
            });
        }
    }
    let n = log_inc.len();
    let last_ratio = if n >= 2 { (log_inc[n - 1] - log_inc[n - 2]).exp() } else { f64::NAN };
    IntegralVerdict::Inconclusive {
        reason: format!(
            "no verdict after {} windows (x = {}): last increment ratio {last_ratio:.4}, cumulative {:e}",
            n,
            points[points.len() - 1],
            log_total.exp()
        ),
    }
}

fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        num += dx * (y - ybar);
        den += dx * dx;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn run(f: impl Fn(f64) -> f64, end: Endpoint, anchor: f64) -> IntegralVerdict {
        improper_integral(|x| Ok::<_, Infallible>(f(x)), end, anchor, &Budget::default())
    }

    #[test]
    fn inverse_square_tail_converges_to_one() {
        match run(|y| 1.0 / (y * y), Endpoint::POS_INF, 1.0) {
            IntegralVerdict::Converges { value, err } => {
                assert!((value - 1.0).abs() <= 1e-8, "{value}");
                assert!(err <= 1e-8);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn harmonic_tail_diverges() {
        assert!(run(|y| 1.0 / y, Endpoint::POS_INF, 1.0).diverges());
    }

    #[test]
    fn inverse_sqrt_at_zero_converges_to_two() {
        match run(|y| 1.0 / y.sqrt(), Endpoint::Finite(0.0), 1.0) {
            IntegralVerdict::Converges { value, err } => {
                assert!((value - 2.0).abs() <= 1e-8, "{value}");
                assert!(err <= 1e-8);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn pole_at_finite_endpoint_diverges() {
        assert!(run(|y| 1.0 / y, Endpoint::Finite(0.0), 1.0).diverges());
    }

    #[test]
    fn negative_infinity_mirrors() {
        match run(|y| (y * y).recip(), Endpoint::NEG_INF, -1.0) {
            IntegralVerdict::Converges { value, .. } => assert!((value - 1.0).abs() < 1e-8),
            v => panic!("{v:?}"),
        }
        assert!(run(|y| y.abs(), Endpoint::NEG_INF, 0.0).diverges());
    }

    #[test]
    fn exponential_growth_hits_cap() {
        match run(|y| y.exp(), Endpoint::POS_INF, 0.0) {
            IntegralVerdict::Diverges { .. } => {}
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn marginal_tail_is_inconclusive() {
        // y^{-1.1}: ratio 2^{-0.1} ≈ 0.93, neither decaying fast enough nor flat.
        assert!(run(|y| y.powf(-1.1), Endpoint::POS_INF, 1.0).is_inconclusive());
    }

    #[test]
    fn evaluation_failure_is_inconclusive() {
        let v = improper_integral(
            |x: f64| if x > 10.0 { Err("out of range") } else { Ok(1.0 / (x * x)) },
            Endpoint::POS_INF,
            1.0,
            &Budget::default(),
        );
        assert!(v.is_inconclusive());
    }

    #[test]
    fn window_schedule() {
        assert_eq!(window_points(Endpoint::POS_INF, 1.0, 3), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(window_points(Endpoint::NEG_INF, 0.0, 2), vec![0.0, -1.0, -3.0]);
        assert_eq!(window_points(Endpoint::Finite(0.0), 1.0, 2), vec![1.0, 0.5, 0.25]);
    }
}
