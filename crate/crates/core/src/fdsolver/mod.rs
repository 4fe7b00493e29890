//! Fokker–Planck evolution `∂_t u = (a u)'' - (b u)' - V u` by finite volumes.
//!
//! Cell fluxes use the exponentially fitted (Scharfetter–Gummel) form in
//! `w = a u`: with `z = (b/a)·Δx` at the face and `B(z) = z / (e^z - 1)`,
//!
//! ```text
//! F_{i+1/2} = -[B(z) w_{i+1} - B(-z) w_i] / Δx,
//! ```
//!
//! which is exact for locally constant `b/a`, reduces to central differencing
//! as `z → 0` and to upwinding as `|z| → ∞`, keeps the semi-discrete operator
//! an M-matrix, and telescopes so mass changes only through walls and `V`.
//! Time stepping is the θ-scheme with θ = ½; a step that leaves values below
//! `-1e-12·max u` is redone with θ = 1.

mod duality;
mod probe;

pub use duality::{duality_check, DualityCheck};
pub use probe::{bc_sensitivity_probe, ProbeLabel, ProbeRow, ProbeTable, NOISE_FLOOR};

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::grid::GridFunction;
use crate::operator::{Endpoint, Interval, Operator1D};
use crate::{Error, ExprError};

/// Tolerated negativity relative to `max u`.
pub const POSITIVITY_TOL: f64 = 1e-12;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_CELLS: usize = 800;
pub const DEFAULT_RADIUS: f64 = 8.0;
const MIN_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bc {
    /// `u = 0` on the wall faces.
    Absorbing,
    /// Zero total flux through the wall faces.
    Reflecting,
}

/// Uniform cells on `[lo, hi]`; values live at cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    dx: f64,
}

impl Grid1D {
    pub fn uniform(lo: f64, hi: f64, cells: usize) -> Result<Grid1D, Error> {
        if cells < MIN_CELLS {
            return Err(Error::InvalidInput(format!("need at least {MIN_CELLS} cells, got {cells}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!("bad window [{lo}, {hi}]")));
        }
        let dx = (hi - lo) / cells as f64;
        let centers = (0..cells).map(|i| lo + (i as f64 + 0.5) * dx).collect();
        Ok(Grid1D { lo, hi, centers, dx })
    }

    /// Cells of width close to `dx` on the window `[-radius, radius]` clipped to
    /// the interval, whose walls may sit on finite endpoints.
    pub fn window(iv: &Interval, radius: f64, dx: f64) -> Result<Grid1D, Error> {
        let lo = match iv.lower() {
            Endpoint::Finite(e) => e.max(-radius),
            Endpoint::Infinite(_) => -radius,
        };
        let hi = match iv.upper() {
            Endpoint::Finite(e) => e.min(radius),
            Endpoint::Infinite(_) => radius,
        };
        let cells = ((hi - lo) / dx).round().max(MIN_CELLS as f64) as usize;
        let g = Grid1D::uniform(lo, hi, cells)?;
        g.check_inside(iv)?;
        Ok(g)
    }

    /// Rejects grids whose cell centres leave the open interval or whose walls
    /// leave its closure.
    pub fn check_inside(&self, iv: &Interval) -> Result<(), Error> {
        if self.lo < iv.lower().value() || self.hi > iv.upper().value() {
            return Err(Error::InvalidInput(format!(
                "window [{}, {}] leaves the interval ({}, {})",
                self.lo,
                self.hi,
                iv.lower(),
                iv.upper()
            )));
        }
        Ok(())
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn face(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FPState {
    pub grid: Grid1D,
    pub u: Vec<f64>,
    pub t: f64,
    pub bc: Bc,
}

impl FPState {
    pub fn new(grid: Grid1D, u: Vec<f64>, bc: Bc) -> Result<FPState, Error> {
        if u.len() != grid.len() {
            return Err(Error::InvalidInput(format!("{} values for {} cells", u.len(), grid.len())));
        }
        Ok(FPState { grid, u, t: 0.0, bc })
    }

    /// Cell values `f(x_i)` at the centres.
    pub fn from_fn(grid: Grid1D, bc: Bc, f: impl Fn(f64) -> f64) -> FPState {
        let u = grid.centers().iter().map(|&x| f(x)).collect();
        FPState { grid, u, t: 0.0, bc }
    }

    pub fn mass(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.grid.dx
    }

    pub fn max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation between cell centres.
    pub fn profile(&self) -> GridFunction {
        GridFunction::new(self.grid.centers.clone(), self.u.clone()).expect("centres increase")
    }

    pub fn moments(&self) -> (f64, f64) {
        let m = self.mass();
        let mean = self.grid.centers.iter().zip(&self.u).map(|(x, u)| x * u).sum::<f64>() * self.grid.dx / m;
        let var =
            self.grid.centers.iter().zip(&self.u).map(|(x, u)| (x - mean).powi(2) * u).sum::<f64>() * self.grid.dx / m;
        (mean, var)
    }
}

/// `z / (e^z - 1)`, continuous through `z = 0`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 - 0.5 * z + z * z / 12.0
    } else {
        z / z.exp_m1()
    }
}

/// Semi-discrete operator `du/dt = L u` for one grid, operator and wall type.
#[derive(Debug, Clone, PartialEq)]
pub struct FpMatrix {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    v: Vec<f64>,
    /// Outflow rates through the left and right walls per unit `u` at the
    /// adjacent cell (already divided by `Δx`).
    wall_out: [f64; 2],
}

impl FpMatrix {
    pub fn assemble(op: &Operator1D, grid: &Grid1D, bc: Bc) -> Result<FpMatrix, Error> {
        let n = grid.len();
        let dx = grid.dx;
        let idx2 = 1.0 / (dx * dx);
        let x = grid.centers();
        let a: Vec<f64> = x.iter().map(|&t| op.a(t)).collect::<Result<_, _>>()?;
        let v: Vec<f64> = x.iter().map(|&t| op.v(t)).collect::<Result<_, _>>()?;
        let mut lower = vec![0.0; n];
        let mut diag: Vec<f64> = v.iter().map(|&vi| -vi).collect();
        let mut upper = vec![0.0; n];
        for i in 0..n - 1 {
            let z = op.drift_ratio(grid.face(i + 1))? * dx;
            let to_right = bernoulli(-z) * a[i] * idx2;
            let to_left = bernoulli(z) * a[i + 1] * idx2;
            diag[i] -= to_right;
            upper[i] = to_left;
            lower[i + 1] = to_right;
            diag[i + 1] -= to_left;
        }
        let mut wall_out = [0.0; 2];
        if bc == Bc::Absorbing {
            // Dirichlet wall half a cell from the centre.
            let zl = op.drift_ratio(grid.lo + 0.25 * dx)? * 0.5 * dx;
            let zr = op.drift_ratio(grid.hi - 0.25 * dx)? * 0.5 * dx;
            wall_out[0] = 2.0 * bernoulli(zl) * a[0] * idx2;
            wall_out[1] = 2.0 * bernoulli(-zr) * a[n - 1] * idx2;
            diag[0] -= wall_out[0];
            diag[n - 1] -= wall_out[1];
        }
        for (k, val) in lower.iter().chain(&diag).chain(&upper).enumerate() {
            if !val.is_finite() {
                return Err(ExprError::Domain(format!("non-finite matrix entry (slot {k})")).into());
            }
        }
        Ok(FpMatrix { lower, diag, upper, v, wall_out })
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut r = self.diag[i] * u[i];
                if i > 0 {
                    r += self.lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    r += self.upper[i] * u[i + 1];
                }
                r
            })
            .collect()
    }

    /// `(Σ V_i u_i Δx, wall outflow rate)` for the state `u`.
    pub fn sinks(&self, u: &[f64], dx: f64) -> (f64, f64) {
        let killed = self.v.iter().zip(u).map(|(v, u)| v * u).sum::<f64>() * dx;
        let out = (self.wall_out[0] * u[0] + self.wall_out[1] * u[u.len() - 1]) * dx;
        (killed, out)
    }

    /// Largest `|L_ii|`; θ = ½ is positivity preserving for `dt ≤ 2 / max|L_ii|`.
    pub fn stability_bound(&self) -> f64 {
        2.0 / self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()))
    }

    fn theta_step(&self, u: &[f64], dt: f64, theta: f64) -> Result<Vec<f64>, Error> {
        theta_step(&self.lower, &self.diag, &self.upper, u, dt, theta)
    }
}

/// `(I - θ dt L) u' = (I + (1-θ) dt L) u` for tridiagonal `L`.
pub(crate) fn theta_step(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    u: &[f64],
    dt: f64,
    theta: f64,
) -> Result<Vec<f64>, Error> {
    let n = u.len();
    let explicit = (1.0 - theta) * dt;
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let mut r = diag[i] * u[i];
            if i > 0 {
                r += lower[i] * u[i - 1];
            }
            if i + 1 < n {
                r += upper[i] * u[i + 1];
            }
            u[i] + explicit * r
        })
        .collect();
    let lo: Vec<f64> = lower.iter().map(|l| -theta * dt * l).collect();
    let di: Vec<f64> = diag.iter().map(|d| 1.0 - theta * dt * d).collect();
    let up: Vec<f64> = upper.iter().map(|l| -theta * dt * l).collect();
    solve_tridiagonal(&lo, &di, &up, &rhs)
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>, Error> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SingularMatrix { row: 0 });
    }
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularMatrix { row: i });
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Mass bookkeeping for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBalance {
    pub mass_before: f64,
    pub mass_after: f64,
    /// `dt·Σ V ū Δx` with `ū = θ u^{n+1} + (1-θ) u^n`
    pub killed: f64,
    /// `dt·(wall outflow of ū)`
    pub boundary_out: f64,
    pub theta: f64,
}

impl StepBalance {
    /// `|Δmass + killed + boundary_out|`, zero up to roundoff for this scheme.
    pub fn residual(&self) -> f64 {
        (self.mass_after - self.mass_before + self.killed + self.boundary_out).abs()
    }
}

/// θ-stepper with the operator assembled once.
#[derive(Debug, Clone)]
pub struct FpStepper {
    matrix: FpMatrix,
    pub fallback_steps: usize,
}

impl FpStepper {
    pub fn new(op: &Operator1D, grid: &Grid1D, bc: Bc) -> Result<FpStepper, Error> {
        grid.check_inside(&op.interval())?;
        Ok(FpStepper { matrix: FpMatrix::assemble(op, grid, bc)?, fallback_steps: 0 })
    }

    pub fn matrix(&self) -> &FpMatrix {
        &self.matrix
    }

    pub fn step(&mut self, state: &mut FPState, dt: f64) -> Result<StepBalance, Error> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let mass_before = state.mass();
        let mut theta = 0.5;
        let mut next = self.matrix.theta_step(&state.u, dt, theta)?;
        let peak = next.iter().copied().fold(0.0f64, f64::max);
        if next.iter().any(|&v| v < -POSITIVITY_TOL * peak) {
            theta = 1.0;
            self.fallback_steps += 1;
            next = self.matrix.theta_step(&state.u, dt, theta)?;
        }
        let dx = state.grid.dx;
        let (k0, o0) = self.matrix.sinks(&state.u, dx);
        let (k1, o1) = self.matrix.sinks(&next, dx);
        state.u = next;
        state.t += dt;
        Ok(StepBalance {
            mass_before,
            mass_after: state.mass(),
            killed: dt * (theta * k1 + (1.0 - theta) * k0),
            boundary_out: dt * (theta * o1 + (1.0 - theta) * o0),
            theta,
        })
    }
}

/// One θ-step; assembles the operator on every call (see [`FpStepper`]).
pub fn fp_step(state: &FPState, op: &Operator1D, dt: f64) -> Result<FPState, Error> {
    let mut stepper = FpStepper::new(op, &state.grid, state.bc)?;
    let mut next = state.clone();
    stepper.step(&mut next, dt)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpSolution {
    pub state: FPState,
    /// `(t, mass)` after every step, starting with `t = 0`.
    pub mass_trace: Vec<(f64, f64)>,
    /// Largest per-step mass-balance residual.
    pub balance_residual: f64,
    pub fallback_steps: usize,
}

/// Steps of size `T/⌈T/dt⌉` up to time `T`.
pub fn fp_solve(op: &Operator1D, u0: &FPState, t_end: f64, dt: f64) -> Result<FpSolution, Error> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("need T > 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut stepper = FpStepper::new(op, &u0.grid, u0.bc)?;
    let mut state = u0.clone();
    let mut mass_trace = Vec::with_capacity(steps + 1);
    mass_trace.push((state.t, state.mass()));
    let mut balance_residual = 0.0f64;
    for _ in 0..steps {
        let b = stepper.step(&mut state, h)?;
        balance_residual = balance_residual.max(b.residual());
        mass_trace.push((state.t, b.mass_after));
    }
    Ok(FpSolution { state, mass_trace, balance_residual, fallback_steps: stepper.fallback_steps })
}

/// Writes `t,mass` rows with 17 significant digits.
pub fn write_mass_csv(out: &mut impl Write, trace: &[(f64, f64)]) -> io::Result<()> {
    writeln!(out, "t,mass")?;
    for (t, m) in trace {
        writeln!(out, "{t:.16e},{m:.16e}")?;
    }
    Ok(())
}

/// Writes `x,u` rows with 17 significant digits.
pub fn write_profile_csv(out: &mut impl Write, state: &FPState) -> io::Result<()> {
    writeln!(out, "x,u")?;
    for (x, u) in state.grid.centers().iter().zip(&state.u) {
        writeln!(out, "{x:.16e},{u:.16e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::make_operator_1d;
    use crate::Expr;

    fn op(a: &str, b: &str, v: &str) -> Operator1D {
        let p = |t: &str| Expr::parse(t, "x").unwrap();
        make_operator_1d(p(a), p(b), p(v), Interval::real_line()).unwrap()
    }

    fn gaussian(var: f64) -> impl Fn(f64) -> f64 {
        move |x| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn grid() -> Grid1D {
        Grid1D::uniform(-8.0, 8.0, 800).unwrap()
    }

    #[test]
    fn bernoulli_limits() {
        assert_eq!(bernoulli(0.0), 1.0);
        assert!((bernoulli(1e-6) - (1e-6 / (1e-6f64).exp_m1())).abs() < 1e-15);
        assert!((bernoulli(-800.0) - 800.0).abs() < 1e-9);
        assert_eq!(bernoulli(800.0), 0.0);
        // B(-z) = B(z) + z
        for z in [-3.0, -0.2, 0.7, 5.0] {
            assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-13);
        }
    }

    #[test]
    fn reflecting_walls_conserve_mass() {
        let o = op("0.5 + 0.25*sin(x)", "-x + cos(3*x)", "0");
        let s0 = FPState::from_fn(grid(), Bc::Reflecting, gaussian(0.3));
        let sol = fp_solve(&o, &s0, 1.0, 1e-3).unwrap();
        let m0 = s0.mass();
        assert!((sol.state.mass() - m0).abs() <= 1e-10 * m0.max(1.0));
        assert!(sol.balance_residual < 1e-12);
    }

    #[test]
    fn single_step_conserves_for_brownian_motion() {
        let o = op("0.5", "0", "0");
        let s0 = FPState::from_fn(grid(), Bc::Reflecting, |x| if x.abs() < 1.0 { 1.0 } else { 0.0 });
        let s1 = fp_step(&s0, &o, 1e-3).unwrap();
        assert!((s1.mass() - s0.mass()).abs() < 1e-12);
    }

    #[test]
    fn constant_killing() {
        let o = op("0.5", "0", "1");
        let s0 = FPState::from_fn(grid(), Bc::Reflecting, gaussian(0.5));
        let sol = fp_solve(&o, &s0, 0.1, 1e-3).unwrap();
        let ratio = sol.state.mass() / s0.mass();
        assert!((ratio - (-0.1f64).exp()).abs() < 1e-6);
        assert_eq!(sol.fallback_steps, 0);
    }

    #[test]
    fn ornstein_uhlenbeck_variance_relaxes() {
        let o = op("0.5", "-x", "0");
        let s0 = FPState::from_fn(grid(), Bc::Reflecting, gaussian(0.1));
        let sol = fp_solve(&o, &s0, 1.0, 1e-3).unwrap();
        let (_, var) = sol.state.moments();
        let e = (-2.0f64).exp();
        let exact = 0.5 * (1.0 - e) + 0.1 * e;
        assert!((var - exact).abs() < 1e-3, "{var} vs {exact}");
    }

    #[test]
    fn second_order_in_space() {
        // OU from N(0, 0.1): exact density N(0, σ²(T)).
        let o = op("0.5", "-x", "0");
        let t_end: f64 = 0.5;
        let e = (-2.0 * t_end).exp();
        let var = 0.5 * (1.0 - e) + 0.1 * e;
        let exact = gaussian(var);
        let errs: Vec<f64> = [100usize, 200, 400]
            .iter()
            .map(|&m| {
                let g = Grid1D::uniform(-8.0, 8.0, m).unwrap();
                let s0 = FPState::from_fn(g, Bc::Reflecting, gaussian(0.1));
                let sol = fp_solve(&o, &s0, t_end, 2.5e-4).unwrap();
                sol.state
                    .grid
                    .centers()
                    .iter()
                    .zip(&sol.state.u)
                    .map(|(&x, &u)| (u - exact(x)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((2.8..=5.2).contains(&r), "{errs:?}");
        }
    }

    #[test]
    fn positivity_from_rough_data() {
        let o = op("0.5", "x", "x^2");
        let s0 = FPState::from_fn(grid(), Bc::Absorbing, |x| if (x - 0.3).abs() < 0.05 { 1.0 } else { 0.0 });
        let sol = fp_solve(&o, &s0, 0.2, 1e-3).unwrap();
        let peak = sol.state.max();
        assert!(sol.state.u.iter().all(|&v| v >= -POSITIVITY_TOL * peak));
    }

    #[test]
    fn mass_balance_with_killing_and_walls() {
        let o = op("0.5", "1", "0.3 + x^2/10");
        let g = Grid1D::uniform(-3.0, 3.0, 300).unwrap();
        let s0 = FPState::from_fn(g, Bc::Absorbing, gaussian(0.4));
        let mut st = FpStepper::new(&o, &s0.grid, Bc::Absorbing).unwrap();
        let mut s = s0;
        for _ in 0..500 {
            let b = st.step(&mut s, 1e-3).unwrap();
            assert!(b.residual() <= 1e-10 * b.mass_before.max(1e-300) + 1e-16, "{b:?}");
            assert!(b.boundary_out >= 0.0 && b.killed >= 0.0);
        }
    }

    #[test]
    fn thomas_matches_dense_solution() {
        let lo = [0.0, -1.0, -1.0, -1.0];
        let di = [4.0, 4.0, 4.0, 4.0];
        let up = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, 2.0, 3.0, 4.0];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                di[i] * x[i] + if i > 0 { lo[i] * x[i - 1] } else { 0.0 } + if i < 3 { up[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let sol = solve_tridiagonal(&lo, &di, &up, &rhs).unwrap();
        for (a, b) in sol.iter().zip(x) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(
            solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::SingularMatrix { row: 0 })
        );
    }

    #[test]
    fn csv_has_seventeen_digits() {
        let mut buf = Vec::new();
        write_mass_csv(&mut buf, &[(0.0, 1.0 / 3.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        let mass = line.split(',').nth(1).unwrap();
        assert_eq!(mass.parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(mass.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn window_respects_finite_endpoints() {
        let iv = Interval::new(Endpoint::Finite(0.0), Endpoint::Finite(1.0)).unwrap();
        let g = Grid1D::window(&iv, 8.0, 0.02).unwrap();
        assert_eq!(g.bounds(), (0.0, 1.0));
        assert_eq!(g.len(), 50);
        assert!(Grid1D::uniform(0.0, 1.0, 8).is_err());
    }
}
