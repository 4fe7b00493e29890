//! Globally adaptive 7/15-point Gauss–Kronrod integration.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub err: f64,
    pub evals: usize,
    /// Whether the requested tolerance was met within the interval budget.
    pub converged: bool,
}

/// One 15-point Kronrod estimate with the embedded Gauss difference as error.
pub fn gk15<E>(f: &mut impl FnMut(f64) -> Result<f64, E>, a: f64, b: f64) -> Result<(f64, f64), E> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx)? + f(c + dx)?;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

/// Adaptive integration of `f` over `[a, b]`, bisecting the interval with the
/// largest error estimate until `err ≤ max(abs_tol, rel_tol·|value|)` or
/// `max_intervals` is reached.
pub fn integrate<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult, E> {
    if a == b {
        return Ok(QuadResult { value: 0.0, err: 0.0, evals: 0, converged: true });
    }
    let (v, e) = gk15(&mut f, a, b)?;
    let mut cells = vec![(a, b, v, e)];
    let mut evals = 15;
    let mut value = v;
    let mut err = e;
    loop {
        let tol = abs_tol.max(rel_tol * value.abs());
        if err <= tol || !value.is_finite() {
            break;
        }
        if cells.len() >= max_intervals {
            return Ok(QuadResult { value, err, evals, converged: false });
        }
        let (worst, _) = cells.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("non-empty");
        let (lo, hi, v0, e0) = cells.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            return Ok(QuadResult { value, err, evals, converged: false });
        }
        let (v1, e1) = gk15(&mut f, lo, mid)?;
        let (v2, e2) = gk15(&mut f, mid, hi)?;
        evals += 30;
        value += v1 + v2 - v0;
        err += e1 + e2 - e0;
        cells.push((lo, mid, v1, e1));
        cells.push((mid, hi, v2, e2));
    }
    // Re-sum to shed the drift of the running updates.
    let value_sum: f64 = cells.iter().map(|c| c.2).sum();
    let err_sum: f64 = cells.iter().map(|c| c.3).sum();
    Ok(QuadResult {
        value: value_sum,
        err: err_sum,
        evals,
        converged: err_sum <= abs_tol.max(rel_tol * value_sum.abs()) || !value_sum.is_finite(),
    })
}

/// Integral of `exp(log_f)` over `[a, b]` carried out on a shifted scale so
/// that integrands like `e^{1000}` stay representable. Returns the logarithm of
/// the integral (`-∞` for a vanishing integral) and its relative error.
pub fn integrate_log<E>(
    mut log_f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64, bool), E> {
    let (lo, hi) = (a.min(b), a.max(b));
    // Seed the shift from a coarse scan of the interval.
    let mut shift = f64::NEG_INFINITY;
    for k in 0..=16 {
        let t = lo + (hi - lo) * k as f64 / 16.0;
        let v = log_f(t)?;
        if v > shift {
            shift = v;
        }
    }
    for _ in 0..4 {
        if shift == f64::NEG_INFINITY {
            return Ok((f64::NEG_INFINITY, 0.0, true));
        }
        if shift == f64::INFINITY {
            return Ok((f64::INFINITY, 0.0, true));
        }
        let mut seen = shift;
        let s = shift;
        let res = integrate(
            |t| {
                let v = log_f(t)?;
                if v > seen {
                    seen = v;
                }
                Ok((v - s).exp())
            },
            lo,
            hi,
            0.0,
            rel_tol,
            max_intervals,
        )?;
        if res.value.is_finite() && seen - shift < 600.0 {
            if res.value <= 0.0 {
                return Ok((f64::NEG_INFINITY, 0.0, res.converged));
            }
            let rel = res.err / res.value;
            return Ok((shift + res.value.ln(), rel, res.converged));
        }
        shift = seen;
    }
    Ok((f64::INFINITY, 0.0, false))
}
