//! Absorbing-versus-reflecting truncation probe.
//!
//! For each window radius the FP equation is solved under both wall types and
//! the largest difference on a fixed core is recorded. Differences that die
//! out as the window grows are evidence that the walls do not matter, i.e.
//! that the weak solution on the whole line is unique. Evidence, not proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fp_solve, Bc, FPState, Grid1D};
use crate::operator::Operator1D;
use crate::Error;

/// Differences below this fraction of `sup |u|` on the core count as zero.
pub const NOISE_FLOOR: f64 = 1e-13;
pub const SENSITIVE_RATIO: f64 = 0.5;
pub const INSENSITIVE_RATIO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbeLabel {
    BoundarySensitive,
    Insensitive,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub radius: f64,
    /// `sup_core |u_abs - u_refl|` at time `T`
    pub sup_diff: f64,
    /// `sup_core |u_refl|`
    pub sup_u: f64,
    pub mass_absorbing: f64,
    pub mass_reflecting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub core: f64,
    pub t_end: f64,
    pub rows: Vec<ProbeRow>,
    /// `d_{k} / d_{k-1}`; zero when `d_k` sits at the noise floor.
    pub ratios: Vec<f64>,
    /// From the last ratio.
    pub label: ProbeLabel,
}

fn label(ratio: f64) -> ProbeLabel {
    if ratio >= SENSITIVE_RATIO {
        ProbeLabel::BoundarySensitive
    } else if ratio <= INSENSITIVE_RATIO {
        ProbeLabel::Insensitive
    } else {
        ProbeLabel::Unlabeled
    }
}

fn ratios(rows: &[ProbeRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| {
            let floor = NOISE_FLOOR * w[0].sup_u.max(w[1].sup_u);
            if w[1].sup_diff <= floor {
                0.0
            } else {
                w[1].sup_diff / w[0].sup_diff.max(floor)
            }
        })
        .collect()
}

/// `windows` are truncation radii in increasing order; `core` is `R₀`. Cells
/// of width `dx` on `[-R, R]` clipped to the interval.
pub fn bc_sensitivity_probe(
    op: &Operator1D,
    u0: impl Fn(f64) -> f64 + Sync,
    t_end: f64,
    windows: &[f64],
    core: f64,
    dx: f64,
    dt: f64,
) -> Result<ProbeTable, Error> {
    if windows.len() < 2 || windows.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("need at least two increasing window radii".into()));
    }
    if !(core > 0.0) || core > windows[0] {
        return Err(Error::InvalidInput(format!("core radius {core} must lie inside the smallest window")));
    }
    let iv = op.interval();
    let grids: Vec<Grid1D> = windows.iter().map(|&r| Grid1D::window(&iv, r, dx)).collect::<Result<_, _>>()?;
    let solves: Vec<(usize, Bc)> = (0..grids.len()).flat_map(|k| [(k, Bc::Absorbing), (k, Bc::Reflecting)]).collect();
    let states: Vec<FPState> = solves
        .par_iter()
        .map(|&(k, bc)| {
            let start = FPState::from_fn(grids[k].clone(), bc, &u0);
            fp_solve(op, &start, t_end, dt).map(|s| s.state)
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<ProbeRow> = states
        .chunks(2)
        .zip(windows)
        .map(|(pair, &radius)| {
            let (abs, refl) = (&pair[0], &pair[1]);
            let mut sup_diff = 0.0f64;
            let mut sup_u = 0.0f64;
            for ((x, ua), ur) in abs.grid.centers().iter().zip(&abs.u).zip(&refl.u) {
                if x.abs() <= core {
                    sup_diff = sup_diff.max((ua - ur).abs());
                    sup_u = sup_u.max(ur.abs()).max(ua.abs());
                }
            }
            ProbeRow { radius, sup_diff, sup_u, mass_absorbing: abs.mass(), mass_reflecting: refl.mass() }
        })
        .collect();
    let ratios = ratios(&rows);
    let label = label(*ratios.last().expect("two windows"));
    Ok(ProbeTable { core, t_end, rows, ratios, label })
}
