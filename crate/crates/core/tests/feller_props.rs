//! Scale and speed identities, and symmetry of the operator in `L²(ρ)`.

use feller_uniq::operator::{make_operator_1d, Interval};
use feller_uniq::quadrature::{integrate, FellerPair};
use feller_uniq::{Endpoint, Expr, ExprError, Operator1D};
use proptest::prelude::*;

fn op(a: &str, b: &str, v: &str, iv: Interval) -> Operator1D {
    let p = |t: &str| Expr::parse(t, "x").unwrap();
    make_operator_1d(p(a), p(b), p(v), iv).unwrap()
}

fn unit() -> Interval {
    Interval::new(Endpoint::Finite(0.0), Endpoint::Finite(1.0)).unwrap()
}

/// `(name, operator, base point, range for bump centres)`
fn canonical() -> Vec<(&'static str, Operator1D, f64, (f64, f64))> {
    vec![
        ("brownian", op("0.5", "0", "0", Interval::real_line()), 0.0, (-3.0, 3.0)),
        ("unit interval", op("1", "0", "0", unit()), 0.5, (0.2, 0.8)),
        ("ornstein-uhlenbeck", op("0.5", "-x", "0", Interval::real_line()), 0.0, (-3.0, 3.0)),
        ("cubic", op("0.5", "-x^3", "0", Interval::real_line()), 0.0, (-2.0, 2.0)),
        ("cubic with x^6", op("0.5", "-x^3", "x^6", Interval::real_line()), 0.0, (-2.0, 2.0)),
        ("bessel-3", op("0.5", "1/x", "0", Interval::half_line()), 1.0, (0.5, 4.0)),
    ]
}

#[derive(Debug, Clone, Copy)]
struct Bump {
    m: f64,
    w: f64,
}

impl Bump {
    /// `(f, f', f'')` for `(1 - t²)⁴`, `t = (x - m)/w`.
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        let t = (x - self.m) / self.w;
        if t.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = 1.0 - t * t;
        let f = s.powi(4);
        let d1 = -8.0 * t * s.powi(3) / self.w;
        let d2 = (-8.0 * s.powi(3) + 48.0 * t * t * s * s) / (self.w * self.w);
        (f, d1, d2)
    }
}

fn apply(o: &Operator1D, f: &Bump, x: f64) -> Result<f64, ExprError> {
    let (v, d1, d2) = f.jet(x);
    Ok(o.a(x)? * d2 + o.b(x)? * d1 - o.v(x)? * v)
}

fn overlap(f: &Bump, g: &Bump) -> Option<(f64, f64)> {
    let lo = (f.m - f.w).max(g.m - g.w);
    let hi = (f.m + f.w).min(g.m + g.w);
    (lo < hi).then_some((lo, hi))
}

fn weighted(fp: &FellerPair, lo: f64, hi: f64, mut h: impl FnMut(f64) -> Result<f64, ExprError>) -> f64 {
    integrate(|x| Ok::<f64, ExprError>(h(x)? * fp.rho(x)?), lo, hi, 1e-14, 1e-12, 2000).unwrap().value
}

fn bump_pair(range: (f64, f64)) -> impl Strategy<Value = (Bump, Bump)> {
    let (lo, hi) = range;
    let half = 0.25 * (hi - lo);
    (lo..hi, 0.1f64..1.0, -1.0f64..1.0, 0.1f64..1.0).prop_map(move |(m, wf, shift, wg)| {
        let wf = (wf * half).min(m - lo + 1e-3).min(hi - m + 1e-3).max(1e-3);
        let f = Bump { m, w: wf };
        let gm = (m + shift * wf).clamp(lo, hi);
        let wg = (wg * half).min(gm - lo + 1e-3).min(hi - gm + 1e-3).max(1e-3);
        (f, Bump { m: gm, w: wg })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_is_symmetric_in_speed_measure(
        (idx, pairs) in (0usize..6).prop_flat_map(|i| (Just(i), prop::collection::vec(bump_pair(canonical()[i].3), 20)))
    ) {
        let (name, o, c, _) = canonical().swap_remove(idx);
        let fp = FellerPair::build(&o, c).unwrap();
        for (f, g) in pairs {
            let Some((lo, hi)) = overlap(&f, &g) else { continue };
            let afg = weighted(&fp, lo, hi, |x| Ok(apply(&o, &f, x)? * g.jet(x).0));
            let fag = weighted(&fp, lo, hi, |x| Ok(f.jet(x).0 * apply(&o, &g, x)?));
            let fg = weighted(&fp, lo, hi, |x| Ok(f.jet(x).0 * g.jet(x).0));
            prop_assert!((afg - fag).abs() <= 1e-6 * fg.abs().max(1.0), "{name}: {f:?} {g:?}: {afg} vs {fag}");
        }
    }

    #[test]
    fn log_scale_of_polynomial_drift(
        a in 0.2f64..2.0,
        coef in prop::collection::vec(-1.0f64..1.0, 4),
        c in -1.0f64..1.0,
    ) {
        let b = format!("{:?} + {:?}*x + {:?}*x^2 - {:?}*x^3", coef[0], coef[1], coef[2], coef[3].abs());
        let o = op(&format!("{a:?}"), &b, "0", Interval::real_line());
        let fp = FellerPair::build(&o, c).unwrap();
        // L(x) = P(x) - P(c), P the antiderivative of b/a.
        let p = |x: f64| (coef[0] * x + coef[1] * x * x / 2.0 + coef[2] * x.powi(3) / 3.0 - coef[3].abs() * x.powi(4) / 4.0) / a;
        for k in 0..64 {
            let x = -3.0 + 6.0 * k as f64 / 63.0;
            let want = p(x) - p(c);
            let got = fp.log_alpha(x).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "x = {x}: {got} vs {want}");
            // α' = (b/a) α holds for the interpolant to its derivative accuracy; ρ a = α exactly.
            let slope = fp.log_alpha_slope(x).unwrap();
            let ratio = o.drift_ratio(x).unwrap();
            prop_assert!((slope - ratio).abs() <= 1e-6 * ratio.abs().max(1.0), "x = {x}: {slope} vs {ratio}");
            let lr = fp.log_rho(x).unwrap() + a.ln();
            prop_assert!((lr - got).abs() <= 1e-12 * got.abs().max(1.0));
        }
        prop_assert_eq!(fp.log_alpha(c).unwrap(), 0.0);
    }
}
