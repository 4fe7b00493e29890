//! Dispatch from a config to the library.

use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use feller_uniq::fdsolver::{bc_sensitivity_probe, fp_solve, Bc, FPState, Grid1D, ProbeLabel};
use feller_uniq::montecarlo::{explosion_sensitivity, feynman_kac, FKEstimate, McConfig, Process};
use feller_uniq::operator::{default_radii, radial_bound};
use feller_uniq::uniqueness::{entrance_test, radial_reduce, uniqueness_1d, uniqueness_nd, Classification, NdMode};
use feller_uniq::{Endpoint, Expr, FellerPair, Interval, Operator1D};

use crate::config::{Mode, NdModeSpec, RunConfig};
use crate::report::{
    Agreement, BetaSummary, CrossRow, EntranceRow, ExplosionRow, FkReport, FpReport, Outcome, Report, Timing,
    XvalReport,
};
use crate::CliError;

/// Grid bias allowance in the Feynman–Kac against finite-volume comparison.
pub const GRID_BIAS: f64 = 5e-3;

pub fn run(config: RunConfig) -> Result<Report, CliError> {
    let start = Instant::now();
    let cfg = config.resolve()?;
    let result = match cfg.mode {
        Mode::Classify1d => classify_1d(&cfg)?,
        Mode::ClassifyNd => classify_nd(&cfg)?,
        Mode::Entrance => entrance(&cfg)?,
        Mode::FokkerPlanck => fokker_planck(&cfg)?,
        Mode::FeynmanKac => feynman_kac_run(&cfg)?,
        Mode::CrossValidate => cross_validate(&cfg)?,
    };
    Ok(Report {
        tool: "feller-uniq".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: cfg.mode,
        result,
        config: cfg,
        timing: Timing { wall_clock_seconds: start.elapsed().as_secs_f64() },
    })
}

fn base_point(cfg: &RunConfig) -> f64 {
    cfg.c.expect("resolved config has c")
}

fn classify_1d(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let op = cfg.operator_1d()?;
    let verdict = uniqueness_1d(&op, &cfg.lambdas, base_point(cfg), &cfg.condition_options())?;
    Ok(Outcome::Classify1d { verdict })
}

fn classify_nd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let op = cfg.operator_nd()?;
    let nd = &cfg.numerics.nd;
    let radii = default_radii(nd.r_min, nd.r_max, nd.radii);
    let bound = radial_bound(&op, &radii, nd.directions, cfg.seed)?;
    let opts = cfg.condition_options();
    let mode = cfg.nd_mode();
    let (alt_spec, alt_mode) = match mode {
        NdMode::ProofFaithful => (NdModeSpec::StrictTheorem, NdMode::StrictTheorem),
        NdMode::StrictTheorem => (NdModeSpec::ProofFaithful, NdMode::ProofFaithful),
    };
    let verdict = uniqueness_nd(&op, &bound, &cfg.lambdas, mode, &opts)?;
    let alternate = uniqueness_nd(&op, &bound, &cfg.lambdas, alt_mode, &opts)?;
    let min_value = bound.beta.y().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Outcome::ClassifyNd {
        verdict,
        alternate_mode: alt_spec,
        alternate,
        beta: BetaSummary { provenance: bound.provenance, r_min: nd.r_min, r_max: nd.r_max, min_value },
    })
}

fn entrance(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let op = cfg.operator_1d()?;
    let fp = FellerPair::build(&op, base_point(cfg))?;
    let iv = op.interval();
    let budget = cfg.condition_options().budget;
    let endpoints = [iv.lower(), iv.upper()]
        .into_iter()
        .map(|e| {
            let verdict = entrance_test(&op, &fp, e, &budget)?;
            Ok(EntranceRow { endpoint: e, entrance: verdict.converges(), verdict })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Outcome::Entrance { endpoints })
}

/// The operator a Fokker–Planck run works with: the 1D operator itself, or the
/// radial comparison operator of an ND one.
fn fp_operator(cfg: &RunConfig) -> Result<(Operator1D, Option<usize>, &'static str), CliError> {
    if cfg.needs_nd() {
        let op = cfg.operator_nd()?;
        let nd = &cfg.numerics.nd;
        let radii = default_radii(nd.r_min, nd.r_max, nd.radii);
        let bound = radial_bound(&op, &radii, nd.directions, cfg.seed)?;
        let red = radial_reduce(&bound, op.dim(), op.potential())?;
        Ok((red.operator, Some(op.dim()), "r"))
    } else {
        Ok((cfg.operator_1d()?, None, "x"))
    }
}

/// `cells` cells on `[-radius, radius]` clipped to the interval.
fn fp_grid(iv: &Interval, radius: f64, cells: usize) -> Result<Grid1D, CliError> {
    let lo = match iv.lower() {
        Endpoint::Finite(e) => e.max(-radius),
        Endpoint::Infinite(_) => -radius,
    };
    let hi = match iv.upper() {
        Endpoint::Finite(e) => e.min(radius),
        Endpoint::Infinite(_) => radius,
    };
    if lo >= hi {
        return Err(CliError::config("/numerics/fp/radius", format!("window [{lo}, {hi}] is empty")));
    }
    Ok(Grid1D::uniform(lo, hi, cells)?)
}

fn eval_on(expr: &Expr, xs: &[f64], pointer: &str) -> Result<Vec<f64>, CliError> {
    xs.iter()
        .map(|&x| match expr.eval(x) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(CliError::config(pointer, format!("value {v} at x = {x}"))),
            Err(e) => Err(CliError::config(pointer, format!("{e} at x = {x}"))),
        })
        .collect()
}

fn create(path: &str) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io { path: path.into(), source })
}

fn fokker_planck(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (op, radial_dim, var) = fp_operator(cfg)?;
    let spec = &cfg.numerics.fp;
    let grid = fp_grid(&op.interval(), spec.radius, spec.cells)?;
    let initial = cfg.expr(&spec.initial, var, "/numerics/fp/initial")?;
    let u = eval_on(&initial, grid.centers(), "/numerics/fp/initial")?;
    if u.iter().any(|&v| v < 0.0) {
        return Err(CliError::config("/numerics/fp/initial", "initial density must be non-negative"));
    }
    let state = FPState::new(grid, u, spec.bc.into())?;
    let sol = fp_solve(&op, &state, spec.t_end, spec.dt)?;
    let io = |path: &str, e: std::io::Error| CliError::Io { path: path.into(), source: e };
    if let Some(path) = &cfg.output.mass_csv {
        feller_uniq::fdsolver::write_mass_csv(&mut create(path)?, &sol.mass_trace).map_err(|e| io(path, e))?;
    }
    if let Some(path) = &cfg.output.profile_csv {
        feller_uniq::fdsolver::write_profile_csv(&mut create(path)?, &sol.state).map_err(|e| io(path, e))?;
    }
    let (mean, variance) = sol.state.moments();
    let (lo, hi) = sol.state.grid.bounds();
    Ok(Outcome::FokkerPlanck(FpReport {
        radial_dim,
        window: [lo, hi],
        cells: sol.state.grid.len(),
        bc: spec.bc,
        t_end: spec.t_end,
        steps: sol.mass_trace.len() - 1,
        mass_initial: sol.mass_trace[0].1,
        mass_final: sol.state.mass(),
        mean,
        variance,
        balance_residual: sol.balance_residual,
        fallback_steps: sol.fallback_steps,
        mass_csv: cfg.output.mass_csv.clone(),
        profile_csv: cfg.output.profile_csv.clone(),
    }))
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    McConfig { dt: cfg.numerics.fk.dt, r_explode: cfg.numerics.fk.r_explode, ..McConfig::default() }
}

fn feynman_kac_run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = &cfg.numerics.fk;
    let f = cfg.observable()?;
    let obs = move |x: &[f64]| f.eval_at(x).unwrap_or(f64::NAN);
    let mc = mc_config(cfg);
    let (estimate, sensitivity) = if cfg.needs_nd() {
        let op = cfg.operator_nd()?;
        fk_pair(Process::from(&op), &obs, cfg, &mc)?
    } else {
        let op = cfg.operator_1d()?;
        fk_pair(Process::from(&op), &obs, cfg, &mc)?
    };
    Ok(Outcome::FeynmanKac(FkReport {
        x0: spec.x0.clone(),
        t_end: spec.t_end,
        estimate,
        explosion_sensitivity: sensitivity,
    }))
}

fn fk_pair(
    process: Process<'_>,
    obs: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: &RunConfig,
    mc: &McConfig,
) -> Result<(FKEstimate, Vec<ExplosionRow>), CliError> {
    let spec = &cfg.numerics.fk;
    if spec.x0.len() != process.dim() {
        return Err(CliError::config(
            "/numerics/fk/x0",
            format!("need {} coordinates, got {}", process.dim(), spec.x0.len()),
        ));
    }
    let estimate = feynman_kac(process, obs, spec.t_end, &spec.x0, spec.paths, cfg.seed, mc)?;
    if estimate.mean.is_nan() {
        return Err(CliError::config("/numerics/fk/observable", "observable is undefined on some terminal point"));
    }
    let rows = explosion_sensitivity(process, spec.t_end, &spec.x0, spec.paths, cfg.seed, mc, &spec.explosion_radii)?
        .into_iter()
        .map(|(r_explode, fraction)| ExplosionRow { r_explode, fraction })
        .collect();
    Ok((estimate, rows))
}

/// `E^{x0}[f(X_T) W]` from the FP density started as a unit mass in the cell
/// holding `x0`.
fn finite_volume_value(op: &Operator1D, cfg: &RunConfig, f: &Expr) -> Result<f64, CliError> {
    let fp = &cfg.numerics.fp;
    let x0 = cfg.numerics.fk.x0[0];
    let grid = fp_grid(&op.interval(), fp.radius, fp.cells)?;
    let (lo, hi) = grid.bounds();
    if !(x0 > lo && x0 < hi) {
        return Err(CliError::config("/numerics/fk/x0", format!("x0 = {x0} lies outside the FP window")));
    }
    let dx = grid.dx();
    let k = (((x0 - lo) / dx) as usize).min(grid.len() - 1);
    let mut u = vec![0.0; grid.len()];
    u[k] = 1.0 / dx;
    let fx = eval_on(f, grid.centers(), "/numerics/fk/observable")?;
    let state = FPState::new(grid, u, Bc::from(fp.bc))?;
    let sol = fp_solve(op, &state, cfg.numerics.fk.t_end, fp.dt)?;
    Ok(sol.state.u.iter().zip(&fx).map(|(u, f)| u * f).sum::<f64>() * dx)
}

fn cross_validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let op = cfg.operator_1d()?;
    let verdict = uniqueness_1d(&op, &cfg.lambdas, base_point(cfg), &cfg.condition_options())?;

    let p = &cfg.numerics.probe;
    let initial = cfg.expr(&p.initial, "x", "/numerics/probe/initial")?;
    let u0 = |x: f64| initial.eval(x).unwrap_or(0.0);
    let probe = bc_sensitivity_probe(&op, u0, p.t_end, &p.windows, p.core, p.dx, p.dt)?;

    let f = cfg.observable()?;
    let obs = |x: &[f64]| f.eval_at(x).unwrap_or(f64::NAN);
    let spec = &cfg.numerics.fk;
    let fk = feynman_kac(Process::from(&op), &obs, spec.t_end, &spec.x0, spec.paths, cfg.seed, &mc_config(cfg))?;
    let fd = finite_volume_value(&op, cfg, &f)?;
    let difference = (fk.mean - fd).abs();
    let tolerance = 3.0 * fk.stderr + GRID_BIAS;
    let agreement =
        Agreement { feynman_kac: fk, finite_volume: fd, difference, tolerance, agree: difference <= tolerance };

    let expected = match verdict.classification {
        Classification::Unique => Some(ProbeLabel::Insensitive),
        Classification::NotUnique => Some(ProbeLabel::BoundarySensitive),
        Classification::Inconclusive => None,
    };
    let probe_consistent = match (expected, probe.label) {
        (_, ProbeLabel::Unlabeled) | (None, _) => None,
        (Some(want), got) => Some(want == got),
    };
    let table = vec![
        CrossRow {
            check: "uniqueness verdict".into(),
            outcome: format!("{:?}", verdict.classification),
            consistent: None,
        },
        CrossRow {
            check: "boundary-condition probe (evidence)".into(),
            outcome: format!("{:?}", probe.label),
            consistent: probe_consistent,
        },
        CrossRow {
            check: "Feynman-Kac vs finite volumes".into(),
            outcome: format!("|{:.6e} - {:.6e}| = {:.2e} (tolerance {:.2e})", fk.mean, fd, difference, tolerance),
            consistent: Some(agreement.agree),
        },
        CrossRow {
            check: "explosion fraction".into(),
            outcome: format!("{}", fk.explosion_fraction),
            consistent: None,
        },
    ];
    Ok(Outcome::CrossValidate(XvalReport { verdict, probe, agreement, table }))
}
