//! Truncated iterated-integral series `Σ φ_n`, an independent check on the march.
//!
//! `φ_0 = 1` and `φ_n(y) = ∫_c^y (1/α) dr ∫_c^r ρ (λ + V) φ_{n-1} dt`, with both
//! integrals taken over the segment between `c` and the point, so that every
//! term is non-negative on either side of `c`.

use serde::{Deserialize, Serialize};

use super::monotone::Direction;
use crate::grid::cumulative_cubic;
use crate::operator::Operator1D;
use crate::quadrature::FellerPair;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub direction: Direction,
    pub lambda: f64,
    /// Grid in march order, starting at `c`.
    pub x: Vec<f64>,
    /// `partial[n][i] = S_n(x_i)`
    pub partial: Vec<Vec<f64>>,
    pub n_max: usize,
}

impl SeriesTable {
    pub fn last(&self) -> &[f64] {
        &self.partial[self.n_max]
    }

    /// `φ_n` on the grid.
    pub fn term(&self, n: usize) -> Vec<f64> {
        if n == 0 {
            return self.partial[0].clone();
        }
        self.partial[n].iter().zip(&self.partial[n - 1]).map(|(a, b)| a - b).collect()
    }
}

/// Partial sums `S_0, ..., S_N` on `grid`. The grid lists points on one side
/// of `c` (in any order); `c` is added when absent.
pub fn series_partial(
    op: &Operator1D,
    fp: &FellerPair,
    lambda: f64,
    direction: Direction,
    n: usize,
    grid: &[f64],
) -> Result<SeriesTable, Error> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("λ must be positive, got {lambda}")));
    }
    let c = fp.base();
    let sign = direction.sign();
    let mut x: Vec<f64> = grid.iter().copied().filter(|&t| t != c).collect();
    if let Some(bad) = x.iter().find(|&&t| (t - c) * sign < 0.0 || !op.interval().contains(t)) {
        return Err(Error::InvalidInput(format!("grid point {bad} is not on the {direction:?} side of c = {c}")));
    }
    x.push(c);
    x.sort_by(|p, q| ((p - c) * sign).total_cmp(&((q - c) * sign)));
    x.dedup();
    // Distance from c: both nested integrals are then plain running integrals.
    let dist: Vec<f64> = x.iter().map(|t| (t - c).abs()).collect();
    let mut weight = Vec::with_capacity(x.len());
    let mut inv_alpha = Vec::with_capacity(x.len());
    for &t in &x {
        weight.push(fp.rho(t)? * (lambda + op.v(t)?));
        inv_alpha.push(1.0 / fp.alpha(t)?);
    }
    let mut partial = vec![vec![1.0; x.len()]];
    let mut phi = vec![1.0; x.len()];
    for _ in 0..n {
        let inner: Vec<f64> = weight.iter().zip(&phi).map(|(w, p)| w * p).collect();
        let inner = cumulative_cubic(&dist, &inner);
        let outer: Vec<f64> = inner.iter().zip(&inv_alpha).map(|(i, ia)| i * ia).collect();
        phi = cumulative_cubic(&dist, &outer);
        let prev = partial.last().expect("non-empty");
        let next = prev.iter().zip(&phi).map(|(s, p)| s + p).collect();
        partial.push(next);
    }
    Ok(SeriesTable { direction, lambda, x, partial, n_max: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{make_operator_1d, Interval};
    use crate::Expr;

    fn bm() -> Operator1D {
        let p = |t: &str| Expr::parse(t, "x").unwrap();
        make_operator_1d(p("0.5"), p("0"), p("0"), Interval::real_line()).unwrap()
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }

    #[test]
    fn first_term_for_brownian_motion() {
        let o = bm();
        let fp = FellerPair::build(&o, 0.0).unwrap();
        let t = series_partial(&o, &fp, 1.0, Direction::TowardUpper, 1, &grid(0.0, 1.0, 50)).unwrap();
        // φ_1(y) = y², so S_1(1) = 2.
        assert!((t.last()[50] - 2.0).abs() < 1e-12);
        assert!(t.partial[0].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn converges_to_cosh() {
        let o = bm();
        let fp = FellerPair::build(&o, 0.0).unwrap();
        let t = series_partial(&o, &fp, 1.0, Direction::TowardUpper, 20, &grid(0.0, 1.0, 200)).unwrap();
        let exact = 2f64.sqrt().cosh();
        assert!((t.last()[200] - exact).abs() < 1e-9, "{}", t.last()[200]);
    }

    #[test]
    fn terms_vanish_at_base_point_and_are_non_negative() {
        let o = bm();
        let fp = FellerPair::build(&o, 0.0).unwrap();
        let t = series_partial(&o, &fp, 0.5, Direction::TowardLower, 6, &grid(-2.0, 0.0, 40)).unwrap();
        assert_eq!(t.x[0], 0.0);
        for n in 1..=6 {
            let phi = t.term(n);
            assert_eq!(phi[0], 0.0);
            assert!(phi.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn rejects_points_on_the_wrong_side() {
        let o = bm();
        let fp = FellerPair::build(&o, 0.0).unwrap();
        assert!(series_partial(&o, &fp, 1.0, Direction::TowardUpper, 2, &[-1.0, 1.0]).is_err());
    }
}
