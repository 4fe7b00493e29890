//! Tabulated functions on strictly increasing abscissae.

use serde::{Deserialize, Serialize};

use crate::Error;

/// Values on a strictly increasing grid, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl GridFunction {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, Error> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!("grid has {} abscissae but {} values", x.len(), y.len())));
        }
        if x.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("grid abscissae must be strictly increasing".into()));
        }
        Ok(GridFunction { x, y })
    }

    pub fn from_fn(x: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, Error> {
        let y = x.iter().map(|&t| f(t)).collect();
        GridFunction::new(x, y)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn first(&self) -> (f64, f64) {
        (self.x[0], self.y[0])
    }

    pub fn last(&self) -> (f64, f64) {
        let n = self.x.len() - 1;
        (self.x[n], self.y[n])
    }

    /// Linear interpolation, extended by the end values outside the grid.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = locate(&self.x, t);
        let w = (t - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.y[i] + w * (self.y[i + 1] - self.y[i])
    }

    /// Whether `t` lies within the tabulated range.
    pub fn covers(&self, t: f64) -> bool {
        t >= self.x[0] && t <= self.x[self.x.len() - 1]
    }
}

/// Index `i` with `xs[i] <= t < xs[i + 1]`, clamped to a valid cell.
pub fn locate(xs: &[f64], t: f64) -> usize {
    let n = xs.len();
    debug_assert!(n >= 2);
    match xs.partition_point(|&v| v <= t) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    }
}

/// Cubic Hermite interpolation on `[x0, x1]` from values and slopes.
#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = x1 - x0;
    let s = (t - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative of [`hermite`] with respect to `t`.
#[inline]
pub fn hermite_slope(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = x1 - x0;
    let s = (t - x0) / h;
    let s2 = s * s;
    let dh00 = (6.0 * s2 - 6.0 * s) / h;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = (-6.0 * s2 + 6.0 * s) / h;
    let dh11 = 3.0 * s2 - 2.0 * s;
    dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
}

/// Running integral `F(x_i) = ∫_{x_0}^{x_i} f` of tabulated values, using on
/// each cell the cubic through the four nearest nodes (quadratic when the grid
/// has three nodes, trapezoid for two). Works for decreasing grids too, in
/// which case the integrals carry the orientation sign.
pub fn cumulative_cubic(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert_eq!(n, f.len());
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    // Two-point Gauss-Legendre is exact for cubics.
    let g = 0.5 / 3f64.sqrt();
    for i in 0..n - 1 {
        let (lo, hi) = stencil(i, n);
        let (a, b) = (x[i], x[i + 1]);
        let mid = 0.5 * (a + b);
        let half = b - a;
        let mut cell = 0.0;
        for t in [mid - g * half, mid + g * half] {
            cell += lagrange(&x[lo..hi], &f[lo..hi], t);
        }
        out[i + 1] = out[i] + 0.5 * half * cell;
    }
    out
}

fn stencil(i: usize, n: usize) -> (usize, usize) {
    let width = n.min(4);
    let start = i.saturating_sub(1).min(n - width);
    (start, start + width)
}

fn lagrange(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for (j, (&xj, &yj)) in xs.iter().zip(ys).enumerate() {
        let mut w = 1.0;
        for (k, &xk) in xs.iter().enumerate() {
            if k != j {
                w *= (t - xk) / (xj - xk);
            }
        }
        acc += w * yj;
    }
    acc
}
