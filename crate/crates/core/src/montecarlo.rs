//! Feynman–Kac estimates `E^x[1{t < τ_e} f(X_t) e^{-∫₀ᵗ V(X_s) ds}]` by
//! Euler–Maruyama paths.
//!
//! Path `i` draws from the ChaCha8 stream `i` of the run seed, so results do
//! not depend on thread count and two runs with the same seed share their
//! Brownian increments path by path. Explosion is approximated by leaving the
//! ball of radius `r_explode` (or the interval, for finite endpoints); exploded
//! paths contribute zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::GridFunction;
use crate::operator::{Endpoint, Operator1D, OperatorND};
use crate::{Error, Expr};

pub const DEFAULT_R_EXPLODE: f64 = 1e6;
/// Weights below this are set to zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;
pub const MIN_PATHS: usize = 100;
/// Allowed lead of the comparison radius, in units of `√dt`.
pub const COUPLING_SLACK: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub dt: f64,
    pub r_explode: f64,
    /// Paths within this distance of a finite endpoint count as exited.
    pub guard: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { dt: 1e-3, r_explode: DEFAULT_R_EXPLODE, guard: 0.0 }
    }
}

/// A 1D diffusion `dX = b dt + √(2a) dW` or an ND one `dX = b dt + dW`.
#[derive(Debug, Clone, Copy)]
pub enum Process<'a> {
    Line(&'a Operator1D),
    Space(&'a OperatorND),
}

impl<'a> From<&'a Operator1D> for Process<'a> {
    fn from(op: &'a Operator1D) -> Self {
        Process::Line(op)
    }
}

impl<'a> From<&'a OperatorND> for Process<'a> {
    fn from(op: &'a OperatorND) -> Self {
        Process::Space(op)
    }
}

impl Process<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Process::Line(_) => 1,
            Process::Space(op) => op.dim(),
        }
    }

    fn potential(&self, x: &[f64]) -> Option<f64> {
        let v = match self {
            Process::Line(op) => op.v(x[0]),
            Process::Space(op) => op.v_at(x),
        };
        v.ok().filter(|v| v.is_finite())
    }

    fn inside(&self, x: &[f64], cfg: &McConfig) -> bool {
        let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm <= cfg.r_explode) {
            return false;
        }
        match self {
            Process::Line(op) => {
                let iv = op.interval();
                let lo_ok = match iv.lower() {
                    Endpoint::Finite(e) => x[0] > e + cfg.guard,
                    Endpoint::Infinite(_) => true,
                };
                let hi_ok = match iv.upper() {
                    Endpoint::Finite(e) => x[0] < e - cfg.guard,
                    Endpoint::Infinite(_) => true,
                };
                lo_ok && hi_ok
            }
            Process::Space(_) => true,
        }
    }

    /// One Euler–Maruyama step in place; `None` when a coefficient fails.
    fn step(&self, x: &mut [f64], h: f64, z: &[f64], drift: &mut [f64]) -> Option<()> {
        match self {
            Process::Line(op) => {
                let a = op.a(x[0]).ok()?;
                let b = op.b(x[0]).ok()?;
                x[0] += b * h + (2.0 * a * h).sqrt() * z[0];
            }
            Process::Space(op) => {
                op.drift_at(x, drift).ok()?;
                let sh = h.sqrt();
                for ((xi, bi), zi) in x.iter_mut().zip(drift.iter()).zip(z) {
                    *xi += bi * h + sh * zi;
                }
            }
        }
        x.iter().all(|c| c.is_finite()).then_some(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fate {
    Survived,
    /// Left the ball of radius `r_explode` or the interval at `time`.
    Exploded {
        time: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    /// Terminal point, or the last point inside before explosion.
    pub position: Vec<f64>,
    pub fate: Fate,
    /// `e^{-∫V}` up to `T` or the explosion time.
    pub weight: f64,
}

impl PathOutcome {
    pub fn exploded(&self) -> bool {
        matches!(self.fate, Fate::Exploded { .. })
    }
}

/// The random stream for path `index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn step_count(t_end: f64, dt: f64) -> usize {
    if t_end == 0.0 {
        0
    } else {
        (t_end / dt - 1e-9).ceil().max(1.0) as usize
    }
}

fn check_times(t_end: f64, dt: f64) -> Result<(), Error> {
    if !(t_end >= 0.0) || !t_end.is_finite() || !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("need T ≥ 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    Ok(())
}

/// Steps of size `T/⌈T/dt⌉`; `∫V` by the trapezoid rule along the path.
pub fn simulate_path(process: Process<'_>, x0: &[f64], t_end: f64, cfg: &McConfig, rng: &mut impl Rng) -> PathOutcome {
    let d = process.dim();
    let steps = step_count(t_end, cfg.dt);
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let mut x = x0.to_vec();
    let mut next = x.clone();
    let mut z = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let mut integral = 0.0;
    let mut v_prev = process.potential(&x).unwrap_or(0.0);
    let weight = |integral: f64| {
        let w = (-integral).exp();
        if w < WEIGHT_FLOOR {
            0.0
        } else {
            w
        }
    };
    for n in 0..steps {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        next.copy_from_slice(&x);
        let moved = process.step(&mut next, h, &z, &mut drift);
        let v_next = moved.filter(|_| process.inside(&next, cfg)).and_then(|_| process.potential(&next));
        let Some(v_next) = v_next else {
            return PathOutcome {
                position: x,
                fate: Fate::Exploded { time: (n + 1) as f64 * h },
                weight: weight(integral),
            };
        };
        integral += 0.5 * (v_prev + v_next) * h;
        v_prev = v_next;
        std::mem::swap(&mut x, &mut next);
    }
    PathOutcome { position: x, fate: Fate::Survived, weight: weight(integral) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FKEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_paths`.
    pub stderr: f64,
    pub n_paths: usize,
    pub explosion_fraction: f64,
}

impl FKEstimate {
    /// `√(s₁² + s₂²)`
    pub fn combined_stderr(&self, other: &FKEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// A test function `f` for [`feynman_kac`].
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// Interpolated in the coordinate (1D) or the radius (ND).
    Grid(GridFunction),
    /// Over one variable in 1D, over `x1..xd` in ND.
    Expr(Expr),
}

impl Observable {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Observable::Grid(g) => {
                let t = if x.len() == 1 { x[0] } else { x.iter().map(|c| c * c).sum::<f64>().sqrt() };
                if g.covers(t) {
                    g.eval(t)
                } else {
                    0.0
                }
            }
            Observable::Expr(e) => e.eval_at(x).unwrap_or(f64::NAN),
        }
    }
}

/// Sum in a balanced binary tree, so the result is independent of how the
/// values were produced.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (l, r) = v.split_at(v.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

/// Monte Carlo mean of `1{survived} f(X_T) W` over `n_paths` streams of `seed`.
pub fn feynman_kac(
    process: Process<'_>,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    t_end: f64,
    x0: &[f64],
    n_paths: usize,
    seed: u64,
    cfg: &McConfig,
) -> Result<FKEstimate, Error> {
    check_times(t_end, cfg.dt)?;
    if n_paths < MIN_PATHS {
        return Err(Error::InvalidInput(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    if x0.len() != process.dim() {
        return Err(Error::InvalidInput(format!(
            "start point has {} coordinates, process has {}",
            x0.len(),
            process.dim()
        )));
    }
    if !process.inside(x0, cfg) {
        return Err(Error::InvalidInput(format!("start point {x0:?} is not interior")));
    }
    let outcomes: Vec<(f64, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let p = simulate_path(process, x0, t_end, cfg, &mut rng);
            match p.fate {
                Fate::Survived => (f(&p.position) * p.weight, false),
                Fate::Exploded { .. } => (0.0, true),
            }
        })
        .collect();
    let values: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let n = n_paths as f64;
    let mean = pairwise_sum(&values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    let exploded = outcomes.iter().filter(|o| o.1).count();
    Ok(FKEstimate { mean, stderr: (var / n).sqrt(), n_paths, explosion_fraction: exploded as f64 / n })
}

/// Explosion fraction for each radius in `radii`, on shared streams.
pub fn explosion_sensitivity(
    process: Process<'_>,
    t_end: f64,
    x0: &[f64],
    n_paths: usize,
    seed: u64,
    cfg: &McConfig,
    radii: &[f64],
) -> Result<Vec<(f64, f64)>, Error> {
    radii
        .iter()
        .map(|&r| {
            let c = McConfig { r_explode: r, ..*cfg };
            feynman_kac(process, &|_| 0.0, t_end, x0, n_paths, seed, &c).map(|e| (r, e.explosion_fraction))
        })
        .collect()
}

/// Positive root of `y - h b(y) = c`, the drift-implicit Euler step. The
/// explicit step overshoots badly next to an entrance at 0, where `b ~ 1/r`.
fn implicit_radius(op: &Operator1D, c: f64, h: f64) -> Option<f64> {
    let g = |y: f64| op.b(y).ok().map(|b| y - h * b - c);
    let mut hi = c.abs().max(h.sqrt()).max(1e-300);
    while g(hi)? <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    let mut lo = hi;
    let mut glo = g(lo)?;
    for _ in 0..2100 {
        if glo < 0.0 {
            break;
        }
        lo *= 0.5;
        glo = g(lo)?;
    }
    if glo >= 0.0 {
        return (glo == 0.0).then_some(lo);
    }
    // Newton inside the bracket, bisecting when a step would leave it.
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gy = g(y)?;
        if gy == 0.0 {
            return Some(y);
        }
        if gy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let d = 1e-7 * y;
        let slope = (g(y + d)? - g(y - d)?) / (2.0 * d);
        let newton = y - gy / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - y).abs() <= 4.0 * f64::EPSILON * y {
            return Some(next);
        }
        y = next;
    }
    Some(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub n_paths: usize,
    pub steps: usize,
    /// `max (R_n - |X_n|)` over paths and steps; the comparison radius `R`
    /// should never lead by more than the discretization error.
    pub worst_lead: f64,
    /// Paths dropped because the comparison path exploded, left its interval
    /// or hit a coefficient failure.
    pub dropped: usize,
}

/// Runs an ND path `X` and a 1D path `R` of the radial comparison operator on
/// the same Brownian increments, feeding `R` the radial projection
/// `(X/|X|)·ΔW`, and records how far `R` ever gets ahead of `|X|`. `R` takes
/// drift-implicit steps, which stay positive when `b → +∞` at 0.
pub fn comparison_coupling(
    op: &OperatorND,
    comparison: &Operator1D,
    x0: &[f64],
    t_end: f64,
    cfg: &McConfig,
    n_paths: usize,
    seed: u64,
) -> Result<CouplingReport, Error> {
    check_times(t_end, cfg.dt)?;
    let d = op.dim();
    if x0.len() != d {
        return Err(Error::InvalidInput(format!("start point has {} coordinates, need {d}", x0.len())));
    }
    let steps = step_count(t_end, cfg.dt);
    let h = t_end / steps.max(1) as f64;
    let sh = h.sqrt();
    let r0 = x0.iter().map(|c| c * c).sum::<f64>().sqrt();
    let leads: Vec<Option<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let mut x = x0.to_vec();
            let mut drift = vec![0.0; d];
            let mut dw = vec![0.0; d];
            let mut r = r0;
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..steps {
                for w in dw.iter_mut() {
                    *w = sh * rng.sample::<f64, _>(StandardNormal);
                }
                let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                let radial = x.iter().zip(&dw).map(|(xi, w)| xi * w).sum::<f64>() / norm;
                op.drift_at(&x, &mut drift).ok()?;
                for ((xi, bi), wi) in x.iter_mut().zip(&drift).zip(&dw) {
                    *xi += bi * h + wi;
                }
                let a = comparison.a(r).ok()?;
                r = implicit_radius(comparison, r + (2.0 * a).sqrt() * radial, h)?;
                if r > cfg.r_explode || !comparison.interval().contains(r) {
                    return None;
                }
                let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                worst = worst.max(r - norm);
            }
            Some(worst)
        })
        .collect();
    let dropped = leads.iter().filter(|l| l.is_none()).count();
    let worst_lead = leads.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CouplingReport { n_paths, steps, worst_lead, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdsolver::{fp_solve, Bc, FPState, Grid1D};
    use crate::operator::{make_operator_1d, Interval};

    fn op(a: &str, b: &str, v: &str) -> Operator1D {
        let p = |t: &str| Expr::parse(t, "x").unwrap();
        make_operator_1d(p(a), p(b), p(v), Interval::real_line()).unwrap()
    }

    fn one(_: &[f64]) -> f64 {
        1.0
    }

    #[test]
    fn zero_time_path_stays_put() {
        let o = op("0.5", "0", "0");
        let p = simulate_path((&o).into(), &[0.3], 0.0, &McConfig::default(), &mut path_rng(1, 0));
        assert_eq!(p.position, vec![0.3]);
        assert_eq!(p.weight, 1.0);
        assert_eq!(p.fate, Fate::Survived);
    }

    #[test]
    fn constant_potential_gives_deterministic_weight() {
        let o = op("0.5", "-x", "0.7");
        for i in 0..20 {
            let p = simulate_path((&o).into(), &[0.0], 1.3, &McConfig::default(), &mut path_rng(5, i));
            assert!((p.weight - (-0.7f64 * 1.3).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn cubic_outward_drift_explodes() {
        let o = op("0.5", "x^3", "0");
        let cfg = McConfig { dt: 1e-4, ..McConfig::default() };
        let e = feynman_kac((&o).into(), &one, 1.0, &[2.0], 1000, 3, &cfg).unwrap();
        assert!(e.explosion_fraction > 0.5, "{e:?}");
    }

    #[test]
    fn constant_killing_estimate() {
        let o = op("0.5", "0", "1");
        let e = feynman_kac((&o).into(), &one, 0.5, &[0.0], 100_000, 7, &McConfig::default()).unwrap();
        let exact = (-0.5f64).exp();
        // Every path carries the same weight, so the spread is roundoff.
        assert!((e.mean - exact).abs() <= 3.0 * e.stderr + 1e-12, "{e:?}");
    }

    #[test]
    fn ornstein_uhlenbeck_mean() {
        let o = op("0.5", "-x", "0");
        let e = feynman_kac((&o).into(), &|x| x[0], 1.0, &[1.0], 20_000, 11, &McConfig::default()).unwrap();
        let exact = (-1.0f64).exp();
        assert!((e.mean - exact).abs() <= 3.0 * e.stderr, "{e:?} vs {exact}");
    }

    #[test]
    fn agrees_with_finite_volumes() {
        // Brownian motion has a symmetric kernel, so the FP density started
        // from the bump at 0 equals E^x[bump(X_1)] read at x = 0.
        let bump = |x: f64| (-2.0 * x * x).exp();
        let o = op("0.5", "0", "0");
        let grid = Grid1D::uniform(-8.0, 8.0, 801).unwrap();
        let s0 = FPState::from_fn(grid, Bc::Reflecting, bump);
        let fd = fp_solve(&o, &s0, 1.0, 1e-3).unwrap().state.profile().eval(0.0);
        let e = feynman_kac((&o).into(), &|x| bump(x[0]), 1.0, &[0.0], 20_000, 13, &McConfig::default()).unwrap();
        assert!((e.mean - fd).abs() <= 3.0 * e.stderr + 5e-3, "{e:?} vs {fd}");
        // Closed form: (1 + 4t)^{-1/2} at t = 1
        assert!((fd - 5f64.sqrt().recip()).abs() < 1e-4);
    }

    #[test]
    fn same_seed_same_bits() {
        let o = op("0.5", "-x", "x^2");
        let run = || feynman_kac((&o).into(), &|x| x[0].cos(), 0.5, &[0.2], 500, 42, &McConfig::default()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let other = feynman_kac((&o).into(), &|x| x[0].cos(), 0.5, &[0.2], 500, 43, &McConfig::default()).unwrap();
        assert_ne!(a.mean, other.mean);
    }

    #[test]
    fn larger_potential_never_raises_estimate() {
        let small = op("0.5", "-x", "0.5*x^2");
        let large = op("0.5", "-x", "x^2 + 0.1");
        let cfg = McConfig::default();
        let f = |x: &[f64]| 1.0 / (1.0 + x[0] * x[0]);
        let es = feynman_kac((&small).into(), &f, 1.0, &[0.5], 5000, 21, &cfg).unwrap();
        let el = feynman_kac((&large).into(), &f, 1.0, &[0.5], 5000, 21, &cfg).unwrap();
        assert!(el.mean <= es.mean + 3.0 * el.combined_stderr(&es));
        // Shared streams make the inequality hold path by path.
        assert!(el.mean < es.mean);
    }

    #[test]
    fn halving_dt_is_consistent() {
        let o = op("0.5", "-x", "0.3");
        let f = |x: &[f64]| x[0] * x[0];
        let coarse =
            feynman_kac((&o).into(), &f, 1.0, &[1.0], 20_000, 17, &McConfig { dt: 2e-2, ..McConfig::default() })
                .unwrap();
        let fine = feynman_kac((&o).into(), &f, 1.0, &[1.0], 20_000, 18, &McConfig { dt: 1e-2, ..McConfig::default() })
            .unwrap();
        assert!((coarse.mean - fine.mean).abs() <= 3.0 * coarse.combined_stderr(&fine), "{coarse:?} {fine:?}");
    }

    #[test]
    fn finite_interval_exit_counts_as_explosion() {
        let iv = Interval::new(Endpoint::Finite(0.0), Endpoint::Finite(1.0)).unwrap();
        let p = |t: &str| Expr::parse(t, "x").unwrap();
        let o = make_operator_1d(p("0.5"), p("0"), p("0"), iv).unwrap();
        let e = feynman_kac((&o).into(), &one, 5.0, &[0.5], 1000, 2, &McConfig::default()).unwrap();
        // Survival ~ (4/π) e^{-π² T/2} ≈ 2e-11.
        assert_eq!(e.explosion_fraction, 1.0);
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let o = op("0.5", "0", "0");
        let cfg = McConfig::default();
        assert!(feynman_kac((&o).into(), &one, 1.0, &[0.0], 10, 0, &cfg).is_err());
        assert!(feynman_kac((&o).into(), &one, -1.0, &[0.0], 100, 0, &cfg).is_err());
        assert!(feynman_kac((&o).into(), &one, 1.0, &[0.0, 1.0], 100, 0, &cfg).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn bessel_comparison_never_leads_in_three_dimensions() {
        let nd = OperatorND::parse(&["0", "0", "0"], "0", None).unwrap();
        let p = |t: &str| Expr::parse(t, "x").unwrap();
        let bessel =
            Operator1D::new_unchecked(p("0.5"), crate::operator::Drift::Expr(p("1/x")), p("0"), Interval::half_line());
        let cfg = McConfig { dt: 1e-3, ..McConfig::default() };
        let rep = comparison_coupling(&nd, &bessel, &[1.0, 0.0, 0.0], 1.0, &cfg, 1000, 9).unwrap();
        assert_eq!(rep.dropped, 0);
        // The radius gap is a mean-reverting walk with O(dt) kicks, so its
        // running maximum over 1000 paths is a few √dt.
        assert!(rep.worst_lead <= COUPLING_SLACK * cfg.dt.sqrt(), "{rep:?}");
    }
}
