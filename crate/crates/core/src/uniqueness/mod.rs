//! L∞-uniqueness verdicts.
//!
//! A one-dimensional operator on `(x₀, y₀)` is unique exactly when, for
//! `λ > 0`, the increasing solution `u` of `(α u')' = ρ (λ + V) u` started at an
//! interior `c` makes `∫ ρ u` diverge toward both endpoints. With `V ≡ 0` the
//! same question reduces to the absence of entrance boundaries. On ℝᵈ a radial
//! lower bound `β` for `b(x)·x/|x|` yields a comparison operator on `(0, ∞)`
//! whose divergence at infinity is sufficient for uniqueness.

mod monotone;
mod series;

pub use monotone::{monotone_solution, Direction, MarchControl, Marcher, MonotoneSolution};
pub use series::{series_partial, SeriesTable};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::operator::{BoundProvenance, Drift, Endpoint, Interval, Operator1D, OperatorND, RadialBound};
use crate::quadrature::{improper_integral_log, Budget, FellerPair, IntegralVerdict, LogCumulative};
use crate::Error;

/// Tolerances for one endpoint condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionOptions {
    pub budget: Budget,
    pub march: MarchControl,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions { budget: Budget { rel_tol: 1e-6, ..Budget::default() }, march: MarchControl::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Unique,
    NotUnique,
    Inconclusive,
}

/// Evidence for one endpoint at one `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub endpoint: Endpoint,
    pub lambda: f64,
    pub verdict: IntegralVerdict,
    /// Furthest point the monotone solution was marched to.
    pub reach: f64,
    pub march_stopped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub classification: Classification,
    pub c: f64,
    pub lambdas: Vec<f64>,
    /// Classification for each entry of `lambdas`.
    pub per_lambda: Vec<Classification>,
    pub endpoints: Vec<EndpointReport>,
    pub diagnostics: Vec<String>,
}

/// Verdict on `∫ ρ u` from the base point of `fp` toward `endpoint`.
pub fn endpoint_condition(
    op: &Operator1D,
    fp: &FellerPair,
    lambda: f64,
    endpoint: Endpoint,
    opts: &ConditionOptions,
) -> Result<EndpointReport, Error> {
    let iv = op.interval();
    let direction = Direction::toward(&iv, endpoint)
        .ok_or_else(|| Error::InvalidInput(format!("{endpoint} is not an endpoint of the interval")))?;
    let c = fp.base();
    let mut march = Marcher::new(op, c, lambda, direction, opts.march)?;
    let verdict = improper_integral_log(|x| march.log_rho_u(x), endpoint, c, &opts.budget);
    Ok(EndpointReport {
        endpoint,
        lambda,
        verdict,
        reach: march.reach(),
        march_stopped: march.stopped().map(str::to_owned),
    })
}

/// For `V ≡ 0`: verdict on `∫ ρ(y) ∫ (1/α(r)) ∫ ρ(t) dt dr dy` toward
/// `endpoint`, each integral running from the base point. Divergence means the
/// endpoint is not an entrance boundary.
pub fn entrance_test(
    op: &Operator1D,
    fp: &FellerPair,
    endpoint: Endpoint,
    budget: &Budget,
) -> Result<IntegralVerdict, Error> {
    op.potential_vanishes()?;
    let iv = op.interval();
    Direction::toward(&iv, endpoint)
        .ok_or_else(|| Error::InvalidInput(format!("{endpoint} is not an endpoint of the interval")))?;
    let c = fp.base();
    let p = LogCumulative::new(|t| fp.log_rho(t), c, endpoint);
    let mut q = {
        let mut p = p;
        LogCumulative::new(move |r| Ok(p.log_value_at(r)? - fp.log_alpha(r)?), c, endpoint)
    };
    Ok(improper_integral_log(|y| Ok::<f64, crate::ExprError>(fp.log_rho(y)? + q.log_value_at(y)?), endpoint, c, budget))
}

fn combine_lambda(reports: &[&EndpointReport]) -> Classification {
    if reports.iter().any(|r| r.verdict.converges()) {
        Classification::NotUnique
    } else if reports.iter().all(|r| r.verdict.diverges()) {
        Classification::Unique
    } else {
        Classification::Inconclusive
    }
}

fn combine(lambdas: &[f64], per_lambda: &[Classification], diagnostics: &mut Vec<String>) -> Classification {
    let first = per_lambda[0];
    if per_lambda.iter().all(|&k| k == first) {
        if first == Classification::Inconclusive {
            diagnostics.push("endpoint evidence inconclusive".into());
        }
        return first;
    }
    let table: Vec<String> = lambdas.iter().zip(per_lambda).map(|(l, k)| format!("λ={l}: {k:?}")).collect();
    diagnostics.push(format!("verdict depends on λ ({})", table.join(", ")));
    Classification::Inconclusive
}

fn check_lambdas(lambdas: &[f64]) -> Result<(), Error> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("λ set is empty".into()));
    }
    if let Some(l) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput(format!("λ must be positive, got {l}")));
    }
    Ok(())
}

/// Evaluates both endpoint conditions for every `λ` (in parallel) and combines
/// them: Unique when all diverge, NotUnique when every `λ` has a convergent
/// endpoint, Inconclusive otherwise.
pub fn uniqueness_1d(op: &Operator1D, lambdas: &[f64], c: f64, opts: &ConditionOptions) -> Result<Verdict, Error> {
    check_lambdas(lambdas)?;
    let fp = FellerPair::build(op, c)?;
    let iv = op.interval();
    let jobs: Vec<(f64, Endpoint)> = lambdas.iter().flat_map(|&l| [(l, iv.lower()), (l, iv.upper())]).collect();
    let endpoints =
        jobs.par_iter().map(|&(l, e)| endpoint_condition(op, &fp, l, e, opts)).collect::<Result<Vec<_>, _>>()?;
    let per_lambda: Vec<Classification> =
        endpoints.chunks(2).map(|pair| combine_lambda(&[&pair[0], &pair[1]])).collect();
    let mut diagnostics = Vec::new();
    for r in &endpoints {
        if let IntegralVerdict::Inconclusive { reason } = &r.verdict {
            diagnostics.push(format!("λ={} at {}: {reason}", r.lambda, r.endpoint));
        }
    }
    let classification = combine(lambdas, &per_lambda, &mut diagnostics);
    Ok(Verdict { classification, c, lambdas: lambdas.to_vec(), per_lambda, endpoints, diagnostics })
}

/// Radial comparison operator `½ f'' + (β(r) + (d-1)/(2r)) f' - V(r) f` on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialReduction {
    pub operator: Operator1D,
    /// Largest tabulated radius when `β` is a sampled table; beyond it `β` is
    /// held at its last value.
    pub tabulated_to: Option<f64>,
}

pub fn radial_reduce(beta: &RadialBound, dim: usize, v: &Expr) -> Result<RadialReduction, Error> {
    if dim < 2 {
        return Err(Error::InvalidInput(format!("dimension must be at least 2, got {dim}")));
    }
    let tabulated_to = match beta.provenance {
        BoundProvenance::UserSupplied if beta.exact.is_some() => None,
        _ => Some(beta.r_max()),
    };
    let operator = Operator1D::new_unchecked(
        Expr::constant(0.5),
        Drift::Radial { beta: beta.profile(), dim },
        v.clone(),
        Interval::half_line(),
    );
    Ok(RadialReduction { operator, tabulated_to })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NdMode {
    /// Unique when the comparison condition diverges at `+∞` for every `λ`.
    #[default]
    ProofFaithful,
    /// Requires the full one-dimensional verdict for the comparison operator.
    StrictTheorem,
}

/// Sufficient condition for uniqueness on ℝᵈ through the radial comparison
/// operator, with base point `r = 1`. Never returns NotUnique.
pub fn uniqueness_nd(
    op: &OperatorND,
    bound: &RadialBound,
    lambdas: &[f64],
    mode: NdMode,
    opts: &ConditionOptions,
) -> Result<Verdict, Error> {
    check_lambdas(lambdas)?;
    let red = radial_reduce(bound, op.dim(), op.potential())?;
    let cmp = &red.operator;
    let c = 1.0;
    let mut diagnostics = Vec::new();
    if bound.provenance == BoundProvenance::Sampled {
        diagnostics.push("β is a sampled minimum over finitely many directions (lower-bound heuristic)".into());
    }
    let (mut per_lambda, endpoints) = match mode {
        NdMode::ProofFaithful => {
            let fp = FellerPair::build(cmp, c)?;
            let endpoints = lambdas
                .par_iter()
                .map(|&l| endpoint_condition(cmp, &fp, l, Endpoint::POS_INF, opts))
                .collect::<Result<Vec<_>, _>>()?;
            let per: Vec<Classification> = endpoints
                .iter()
                .map(|r| if r.verdict.diverges() { Classification::Unique } else { Classification::Inconclusive })
                .collect();
            for r in &endpoints {
                if !r.verdict.diverges() {
                    diagnostics.push(format!(
                        "λ={}: condition at +inf is {} (sufficiency only, nothing follows)",
                        r.lambda,
                        r.verdict.label()
                    ));
                }
            }
            (per, endpoints)
        }
        NdMode::StrictTheorem => {
            let v = uniqueness_1d(cmp, lambdas, c, opts)?;
            for r in &v.endpoints {
                if r.endpoint == Endpoint::Finite(0.0) && r.verdict.converges() {
                    let note = "entrance boundary at 0: the comparison operator is not unique on (0, inf)".to_string();
                    if !diagnostics.contains(&note) {
                        diagnostics.push(note);
                    }
                }
            }
            diagnostics.extend(v.diagnostics);
            (v.per_lambda, v.endpoints)
        }
    };
    for k in per_lambda.iter_mut() {
        if *k == Classification::NotUnique {
            *k = Classification::Inconclusive;
        }
    }
    if let Some(r_max) = red.tabulated_to {
        if let Some(r) = endpoints.iter().filter(|r| r.endpoint == Endpoint::POS_INF).find(|r| r.reach > r_max) {
            diagnostics.push(format!(
                "β held at its last tabulated value beyond r = {r_max}; verdict window reached r = {:.4e} (λ={})",
                r.reach, r.lambda
            ));
        }
    }
    let classification = combine(lambdas, &per_lambda, &mut diagnostics);
    Ok(Verdict { classification, c, lambdas: lambdas.to_vec(), per_lambda, endpoints, diagnostics })
}
