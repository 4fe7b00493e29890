//! Discrete check of `⟨P_T g, f⟩ = ⟨g, T_T f⟩`.
//!
//! `P_T` is the Fokker–Planck solver with reflecting walls, `T_T` the backward
//! semigroup of `A^V f = a f'' + b f' - V f` by central differences with
//! mirrored ghost cells. Both take the same Strang-split steps, exact
//! `e^{-V h/2}` factors around a θ = ½ step of the `V = 0` part, so the
//! discrepancy measures the spatial mismatch between the two transport
//! discretizations only and constant `V` factors out exactly.

use serde::{Deserialize, Serialize};

use super::{theta_step, Bc, FpMatrix, Grid1D};
use crate::grid::GridFunction;
use crate::operator::Operator1D;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    /// `⟨P_T g, f⟩`
    pub forward: f64,
    /// `⟨g, T_T f⟩`
    pub backward: f64,
    pub discrepancy: f64,
}

struct Tri {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

fn backward_matrix(op: &Operator1D, grid: &Grid1D) -> Result<Tri, Error> {
    let n = grid.len();
    let dx = grid.dx();
    let mut t = Tri { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] };
    for (i, &x) in grid.centers().iter().enumerate() {
        let a = op.a(x)? / (dx * dx);
        let b = op.b(x)? / (2.0 * dx);
        let (lo, up) = (a - b, a + b);
        t.diag[i] = -2.0 * a;
        // f_{-1} = f_0 and f_n = f_{n-1}
        if i == 0 {
            t.diag[i] += lo;
        } else {
            t.lower[i] = lo;
        }
        if i + 1 == n {
            t.diag[i] += up;
        } else {
            t.upper[i] = up;
        }
    }
    Ok(t)
}

/// Runs both semigroups to `t_end` with steps close to `dt` on `grid`, taking
/// `f` and `g` at the cell centres.
pub fn duality_check(
    op: &Operator1D,
    f: &GridFunction,
    g: &GridFunction,
    t_end: f64,
    dt: f64,
    grid: &Grid1D,
) -> Result<DualityCheck, Error> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("need T > 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    grid.check_inside(&op.interval())?;
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut fwd = FpMatrix::assemble(op, grid, Bc::Reflecting)?;
    for (d, v) in fwd.diag.iter_mut().zip(&fwd.v) {
        *d += v;
    }
    let half_kill: Vec<f64> = fwd.v.iter().map(|v| (-0.5 * h * v).exp()).collect();
    let kill = |u: &mut Vec<f64>| u.iter_mut().zip(&half_kill).for_each(|(u, k)| *u *= k);
    let bwd = backward_matrix(op, grid)?;
    let f0: Vec<f64> = grid.centers().iter().map(|&x| f.eval(x)).collect();
    let g0: Vec<f64> = grid.centers().iter().map(|&x| g.eval(x)).collect();
    let (mut pg, mut tf) = (g0.clone(), f0.clone());
    for _ in 0..steps {
        kill(&mut pg);
        kill(&mut tf);
        pg = theta_step(&fwd.lower, &fwd.diag, &fwd.upper, &pg, h, 0.5)?;
        tf = theta_step(&bwd.lower, &bwd.diag, &bwd.upper, &tf, h, 0.5)?;
        kill(&mut pg);
        kill(&mut tf);
    }
    let dx = grid.dx();
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() * dx;
    let forward = dot(&pg, &f0);
    let backward = dot(&g0, &tf);
    Ok(DualityCheck { forward, backward, discrepancy: (forward - backward).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{make_operator_1d, Interval};
    use crate::Expr;

    fn op(a: &str, b: &str, v: &str) -> Operator1D {
        let p = |t: &str| Expr::parse(t, "x").unwrap();
        make_operator_1d(p(a), p(b), p(v), Interval::real_line()).unwrap()
    }

    fn run(o: &Operator1D, cells: usize) -> DualityCheck {
        let grid = Grid1D::uniform(-8.0, 8.0, cells).unwrap();
        let x = grid.centers().to_vec();
        let f = GridFunction::from_fn(x.clone(), |t| (-t * t).exp()).unwrap();
        let g = GridFunction::from_fn(x, |t| (-(t - 1.0).powi(2) / 2.0).exp()).unwrap();
        duality_check(o, &f, &g, 0.5, 1e-3, &grid).unwrap()
    }

    #[test]
    fn exact_without_drift() {
        let d = run(&op("1 + 0.5*sin(x)", "0", "0"), 800);
        assert!(d.discrepancy <= 1e-6, "{d:?}");
    }

    #[test]
    fn ornstein_uhlenbeck_second_order() {
        let o = op("0.5", "-x", "0");
        let coarse = run(&o, 400).discrepancy;
        let fine = run(&o, 800).discrepancy;
        assert!(fine <= 5e-4, "{fine}");
        let ratio = coarse / fine;
        assert!((3.0..5.5).contains(&ratio), "{coarse} {fine}");
    }

    #[test]
    fn unit_potential_scales_by_exp() {
        let d0 = run(&op("0.5", "-x", "0"), 400);
        let d1 = run(&op("0.5", "-x", "1"), 400);
        let damp = (-0.5f64).exp();
        assert!((d1.forward - damp * d0.forward).abs() < 1e-12 * d0.forward.abs());
        assert!((d1.backward - damp * d0.backward).abs() < 1e-12 * d0.backward.abs());
        assert!((d1.discrepancy - damp * d0.discrepancy).abs() < 1e-9 * d0.discrepancy);
    }
}
