//! Report layout. Everything except [`Timing`] is a deterministic function of
//! the resolved config.

use serde::{Deserialize, Serialize};

use feller_uniq::fdsolver::ProbeTable;
use feller_uniq::montecarlo::FKEstimate;
use feller_uniq::operator::BoundProvenance;
use feller_uniq::uniqueness::{Classification, Verdict};
use feller_uniq::{Endpoint, IntegralVerdict};

use crate::config::{BcSpec, Mode, NdModeSpec, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub result: Outcome,
    /// The resolved config; re-running it reproduces `result` exactly.
    pub config: RunConfig,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    #[serde(rename = "classify_1d")]
    Classify1d {
        verdict: Verdict,
    },
    ClassifyNd {
        verdict: Verdict,
        /// The same run under the other ND mode.
        alternate_mode: NdModeSpec,
        alternate: Verdict,
        beta: BetaSummary,
    },
    Entrance {
        endpoints: Vec<EntranceRow>,
    },
    FokkerPlanck(FpReport),
    FeynmanKac(FkReport),
    CrossValidate(XvalReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub provenance: BoundProvenance,
    pub r_min: f64,
    pub r_max: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntranceRow {
    pub endpoint: Endpoint,
    /// Verdict on `∫ ρ ∫ (1/α) ∫ ρ` toward the endpoint.
    pub verdict: IntegralVerdict,
    /// Convergence: the diffusion can be started from the endpoint.
    pub entrance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpReport {
    /// Set for radial runs: the dimension of the reduced operator.
    pub radial_dim: Option<usize>,
    pub window: [f64; 2],
    pub cells: usize,
    pub bc: BcSpec,
    pub t_end: f64,
    pub steps: usize,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub mean: f64,
    pub variance: f64,
    /// Largest per-step mass-balance residual.
    pub balance_residual: f64,
    /// Steps redone with θ = 1 to keep the solution non-negative.
    pub fallback_steps: usize,
    pub mass_csv: Option<String>,
    pub profile_csv: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplosionRow {
    pub r_explode: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkReport {
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub estimate: FKEstimate,
    pub explosion_sensitivity: Vec<ExplosionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub feynman_kac: FKEstimate,
    /// `Σ u_i f(x_i) Δx` for the FP solution started from a unit mass at `x0`.
    pub finite_volume: f64,
    pub difference: f64,
    /// `3·stderr + grid bias`
    pub tolerance: f64,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub check: String,
    pub outcome: String,
    /// Whether the outcome matches the uniqueness verdict; absent when either
    /// side is undecided.
    pub consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XvalReport {
    pub verdict: Verdict,
    /// Boundary-condition probe; evidence only.
    pub probe: ProbeTable,
    pub agreement: Agreement,
    pub table: Vec<CrossRow>,
}

impl Report {
    /// The headline classification, when the mode produces one.
    pub fn classification(&self) -> Option<Classification> {
        match &self.result {
            Outcome::Classify1d { verdict } | Outcome::ClassifyNd { verdict, .. } => Some(verdict.classification),
            Outcome::CrossValidate(x) => Some(x.verdict.classification),
            _ => None,
        }
    }

    /// JSON with the timing block removed, for reproducibility comparisons.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// A few lines for a terminal.
    pub fn summary(&self) -> String {
        let mut out = format!("{} {} ({})\n", self.tool, self.version, self.mode.name());
        match &self.result {
            Outcome::Classify1d { verdict } => push_verdict(&mut out, verdict),
            Outcome::ClassifyNd { verdict, alternate_mode, alternate, .. } => {
                push_verdict(&mut out, verdict);
                out.push_str(&format!("{alternate_mode:?}: {:?}\n", alternate.classification));
            }
            Outcome::Entrance { endpoints } => {
                for e in endpoints {
                    out.push_str(&format!("{}: {} (entrance: {})\n", e.endpoint, e.verdict.label(), e.entrance));
                }
            }
            Outcome::FokkerPlanck(f) => out.push_str(&format!(
                "mass {:.6e} -> {:.6e}, balance residual {:.2e}, θ=1 steps {}\n",
                f.mass_initial, f.mass_final, f.balance_residual, f.fallback_steps
            )),
            Outcome::FeynmanKac(f) => out.push_str(&format!(
                "estimate {:.6e} ± {:.2e} ({} paths, explosion fraction {})\n",
                f.estimate.mean, f.estimate.stderr, f.estimate.n_paths, f.estimate.explosion_fraction
            )),
            Outcome::CrossValidate(x) => {
                push_verdict(&mut out, &x.verdict);
                for row in &x.table {
                    let mark = match row.consistent {
                        Some(true) => "consistent",
                        Some(false) => "INCONSISTENT",
                        None => "-",
                    };
                    out.push_str(&format!("{}: {} [{mark}]\n", row.check, row.outcome));
                }
            }
        }
        out.push_str(&format!("wall clock {:.3} s\n", self.timing.wall_clock_seconds));
        out
    }
}

fn push_verdict(out: &mut String, v: &Verdict) {
    out.push_str(&format!("verdict: {:?}\n", v.classification));
    for e in &v.endpoints {
        out.push_str(&format!("  λ={} {}: {}\n", e.lambda, e.endpoint, e.verdict.label()));
    }
    for d in &v.diagnostics {
        out.push_str(&format!("  note: {d}\n"));
    }
}
