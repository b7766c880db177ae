//! Smooth cutoffs built from cumulative cardinal B-splines, and the
//! growth-class test functions ψ used by the functional calculus.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Order of the B-spline: the smoothstep is C^{ORDER−1} with ORDER polynomial pieces.
pub const SPLINE_ORDER: usize = 12;

/// St(s) = ∫₀^{ns} B_n, n = SPLINE_ORDER: 0 for s ≤ 0, 1 for s ≥ 1.
/// Piece m covers [m/n, (m+1)/n] as a polynomial in u = ns − m.
struct Smoothstep {
    pieces: Vec<Vec<f64>>,
}

fn smoothstep_table() -> &'static Smoothstep {
    static T: OnceLock<Smoothstep> = OnceLock::new();
    T.get_or_init(|| {
        let n = SPLINE_ORDER;
        let fact: BigInt = (1..=n).fold(BigInt::one(), |a, i| a * BigInt::from(i));
        let binom = |a: usize, b: usize| -> BigInt {
            (0..b).fold(BigInt::one(), |acc, i| acc * BigInt::from(a - i) / BigInt::from(i + 1))
        };
        let pieces = (0..n)
            .map(|m| {
                // (1/n!) Σ_{k≤m} (−1)^k C(n,k) (u + m − k)^n, expanded in u
                let mut coef = vec![BigRational::zero(); n + 1];
                for k in 0..=m {
                    let sign = if k % 2 == 0 { BigInt::one() } else { -BigInt::one() };
                    let shift = BigInt::from(m - k);
                    for (p, cp) in coef.iter_mut().enumerate() {
                        let v = &sign * binom(n, k) * binom(n, p) * num_traits::pow(shift.clone(), n - p);
                        *cp += BigRational::new(v, fact.clone());
                    }
                }
                coef.iter().map(|c| c.to_f64().unwrap()).collect()
            })
            .collect();
        Smoothstep { pieces }
    })
}

/// d^k/ds^k St(s) for k = 0..=order.
pub fn smoothstep_derivs(s: f64, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    if s <= 0.0 {
        return out;
    }
    if s >= 1.0 {
        out[0] = 1.0;
        return out;
    }
    let n = SPLINE_ORDER as f64;
    let x = s * n;
    let m = (x.floor() as usize).min(SPLINE_ORDER - 1);
    let u = x - m as f64;
    let coef = &smoothstep_table().pieces[m];
    // derivatives in u via Horner on successive derivative polynomials
    let mut c = coef.clone();
    let mut scale = 1.0;
    for o in out.iter_mut() {
        if c.is_empty() {
            break;
        }
        *o = c.iter().rev().fold(0.0, |acc, a| acc * u + a) * scale;
        c = c.iter().enumerate().skip(1).map(|(p, a)| a * p as f64).collect();
        scale *= n;
    }
    out
}

pub fn smoothstep(s: f64) -> f64 {
    smoothstep_derivs(s, 0)[0]
}

/// Breakpoints where St changes polynomial piece, mapped through s = (x − x0)/h.
pub fn smoothstep_knots(x0: f64, h: f64) -> Vec<f64> {
    (0..=SPLINE_ORDER).map(|k| x0 + h * k as f64 / SPLINE_ORDER as f64).collect()
}

/// St(g) for a jet g.
pub fn smoothstep_jet(g: &Jet) -> Jet {
    g.compose(&smoothstep_derivs(g.value(), g.order))
}

/// Plateau cutoff: 1 on |x| ≤ a, 0 on |x| ≥ b, St((b − |x|)/(b − a)) between.
pub fn plateau(x: f64, a: f64, b: f64) -> f64 {
    smoothstep((b - x.abs()) / (b - a))
}

/// Derivatives of the plateau in x, up to `order`.
pub fn plateau_derivs(x: f64, a: f64, b: f64, order: usize) -> Vec<f64> {
    let h = b - a;
    let sgn = if x >= 0.0 { -1.0 } else { 1.0 };
    let d = smoothstep_derivs((b - x.abs()) / h, order);
    d.iter().enumerate().map(|(k, v)| v * (sgn / h).powi(k as i32)).collect()
}

pub fn plateau_jet(g: &Jet, a: f64, b: f64) -> Jet {
    g.compose(&plateau_derivs(g.value(), a, b, g.order))
}

/// Window that is 1 on [lo, hi] and 0 outside [lo − 2w, hi + 2w], with
/// transitions on [lo − 2w, lo − w] and [hi + w, hi + 2w].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub w: f64,
}

impl Window {
    pub fn outer(&self) -> (f64, f64) {
        (self.lo - 2.0 * self.w, self.hi + 2.0 * self.w)
    }

    /// Value and first derivative.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let mid = 0.5 * (self.lo + self.hi);
        if x < mid {
            let d = smoothstep_derivs((x - (self.lo - 2.0 * self.w)) / self.w, 1);
            (d[0], d[1] / self.w)
        } else {
            let d = smoothstep_derivs(((self.hi + 2.0 * self.w) - x) / self.w, 1);
            (d[0], -d[1] / self.w)
        }
    }

    /// Piece boundaries of the two transitions.
    pub fn knots(&self) -> (Vec<f64>, Vec<f64>) {
        (smoothstep_knots(self.lo - 2.0 * self.w, self.w), smoothstep_knots(self.hi + self.w, self.w))
    }
}

// ---------------------------------------------------------------------------
// Growth-class functions.

type JetFn = dyn Fn(&Jet) -> Jet + Send + Sync;

/// ψ with |ψ^{(k)}(λ)| ≲ (1+|λ|)^{m'−k}; evaluated through univariate jets.
#[derive(Clone)]
pub struct GrowthClassFunction {
    pub name: String,
    /// Growth order m'.
    pub growth: f64,
    pub max_order: usize,
    /// Compact support, when known.
    pub support: Option<(f64, f64)>,
    f: Arc<JetFn>,
}

impl fmt::Debug for GrowthClassFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(m'={}, support={:?})", self.name, self.growth, self.support)
    }
}

/// Library of registered ψ: (name, parameter count, description).
pub const REGISTERED_PSI: &[(&str, usize, &str)] = &[
    ("resolvent", 0, "(1 + λ²)^(−1)"),
    ("resolvent2", 0, "(1 + λ²)^(−2)"),
    ("gaussian", 1, "exp(−λ²/s²)"),
    ("odd_gaussian", 0, "λ exp(−λ²/2)"),
    ("window", 3, "smoothed indicator of [a, b] with ramp width δ"),
    ("bump", 2, "smooth bump supported in [a, b]"),
    ("zero", 0, "0"),
];

impl GrowthClassFunction {
    pub fn new(
        name: &str,
        growth: f64,
        support: Option<(f64, f64)>,
        f: impl Fn(&Jet) -> Jet + Send + Sync + 'static,
    ) -> Self {
        GrowthClassFunction { name: name.into(), growth, max_order: 16, support, f: Arc::new(f) }
    }

    pub fn registered(name: &str, params: &[f64]) -> Result<Self> {
        let want = REGISTERED_PSI
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown test function '{name}'")))?
            .1;
        if params.len() != want {
            return Err(Error::InvalidArgument(format!("'{name}' takes {want} parameters, got {}", params.len())));
        }
        let p = params.to_vec();
        Ok(match name {
            "resolvent" => Self::new(name, -2.0, None, |x| x.mul(x).add_const(1.0).recip()),
            "resolvent2" => Self::new(name, -4.0, None, |x| x.mul(x).add_const(1.0).powi(-2)),
            "gaussian" => {
                let s = p[0];
                Self::new(name, -4.0, None, move |x| x.mul(x).scale(-1.0 / (s * s)).exp())
            }
            "odd_gaussian" => Self::new(name, -4.0, None, |x| x.mul(&x.mul(x).scale(-0.5).exp())),
            "window" => {
                let (a, b, d) = (p[0], p[1], p[2]);
                if !(b > a && d > 0.0) {
                    return Err(Error::InvalidArgument("window needs a < b and δ > 0".into()));
                }
                Self::new(name, 0.0, Some((a - d, b + d)), move |x| {
                    smoothstep_jet(&x.add_const(d - a).scale(1.0 / d))
                        .mul(&smoothstep_jet(&x.scale(-1.0).add_const(b + d).scale(1.0 / d)))
                })
            }
            "bump" => {
                let (a, b) = (p[0], p[1]);
                if b <= a {
                    return Err(Error::InvalidArgument("bump needs a < b".into()));
                }
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                Self::new(name, 0.0, Some((a, b)), move |x| plateau_jet(&x.add_const(-c), 0.0, h))
            }
            "zero" => Self::new(name, -4.0, Some((0.0, 0.0)), |x| Jet::constant(1, x.order, 0.0)),
            _ => unreachable!(),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if let Some((a, b)) = self.support {
            if x < a || x > b {
                return 0.0;
            }
        }
        (self.f)(&Jet::var1(0, x)).value()
    }

    /// ψ^{(k)}(x), k = 0..=order.
    pub fn derivatives(&self, x: f64, order: usize) -> Vec<f64> {
        if let Some((a, b)) = self.support {
            if x < a || x > b {
                return vec![0.0; order + 1];
            }
        }
        let j = (self.f)(&Jet::var1(order, x));
        (0..=order).map(|k| j.derivative(k)).collect()
    }

    /// ψ applied to a univariate jet.
    pub fn jet(&self, g: &Jet) -> Jet {
        if let Some((a, b)) = self.support {
            let x = g.value();
            if x < a || x > b {
                return Jet::constant(1, g.order, 0.0);
            }
        }
        (self.f)(g)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.name == "zero"
    }

    /// ‖ψ‖_{𝒢^{m'},N} = max_{k≤N} sup_grid (1+|λ|)^{k−m'} |ψ^{(k)}(λ)|.
    pub fn seminorm(&self, n: usize, grid: &[f64]) -> Result<f64> {
        if n > self.max_order {
            return Err(Error::DerivativeOrder { have: self.max_order as u32, need: n as u32 });
        }
        let mut best: f64 = 0.0;
        for &x in grid {
            for (k, d) in self.derivatives(x, n).iter().enumerate() {
                best = best.max((1.0 + x.abs()).powf(k as f64 - self.growth) * d.abs());
            }
        }
        Ok(best)
    }

    pub fn add(&self, o: &Self) -> Self {
        let (f, g) = (self.f.clone(), o.f.clone());
        let (s1, s2) = (self.support, o.support);
        let support = match (s1, s2) {
            (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.max(b.1))),
            _ => None,
        };
        let inside = |s: Option<(f64, f64)>, x: f64| s.is_none_or(|(a, b)| x >= a && x <= b);
        GrowthClassFunction {
            name: format!("{}+{}", self.name, o.name),
            growth: self.growth.max(o.growth),
            max_order: self.max_order.min(o.max_order),
            support,
            f: Arc::new(move |x| {
                let v = x.value();
                let a = if inside(s1, v) { f(x) } else { Jet::constant(1, x.order, 0.0) };
                let b = if inside(s2, v) { g(x) } else { Jet::constant(1, x.order, 0.0) };
                a.add(&b)
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_is_a_cumulative_bspline() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        for k in 0..=40 {
            let s = k as f64 / 40.0;
            assert!((smoothstep(s) + smoothstep(1.0 - s) - 1.0).abs() < 1e-14);
        }
        // continuity of derivatives through every knot, up to order n − 1
        for m in 1..SPLINE_ORDER {
            let s = m as f64 / SPLINE_ORDER as f64;
            let l = smoothstep_derivs(s - 1e-12, SPLINE_ORDER - 1);
            let r = smoothstep_derivs(s + 1e-12, SPLINE_ORDER - 1);
            for k in 0..SPLINE_ORDER - 1 {
                let sc = (SPLINE_ORDER as f64).powi(k as i32);
                assert!((l[k] - r[k]).abs() < 1e-6 * sc.max(1.0), "knot {m} order {k}");
            }
        }
        // monotone
        let v: Vec<f64> = (0..=200).map(|k| smoothstep(k as f64 / 200.0)).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for s in [0.05, 0.31, 0.5, 0.77] {
            let h = 1e-6;
            let fd = (smoothstep(s + h) - smoothstep(s - h)) / (2.0 * h);
            assert!((smoothstep_derivs(s, 1)[1] - fd).abs() < 1e-7);
        }
        let (a, b) = (1.0, 2.0);
        let x = -1.4;
        let fd = (plateau(x + 1e-6, a, b) - plateau(x - 1e-6, a, b)) / 2e-6;
        assert!((plateau_derivs(x, a, b, 1)[1] - fd).abs() < 1e-7);
    }

    #[test]
    fn registered_functions() {
        let r = GrowthClassFunction::registered("resolvent2", &[]).unwrap();
        let d = r.derivatives(0.5, 2);
        assert!((d[0] - 1.25f64.powi(-2)).abs() < 1e-15);
        assert!((d[1] + 4.0 * 0.5 * 1.25f64.powi(-3)).abs() < 1e-14);
        let grid: Vec<f64> = (-100..=100).map(|k| k as f64 * 0.5).collect();
        let s = r.seminorm(3, &grid).unwrap();
        assert!(s.is_finite() && s > 0.0);
        let w = GrowthClassFunction::registered("window", &[1.0, 2.0, 0.1]).unwrap();
        assert_eq!(w.eval(1.5), 1.0);
        assert_eq!(w.eval(0.85), 0.0);
        assert!(GrowthClassFunction::registered("nope", &[]).is_err());
        let sum = r.add(&w);
        assert!((sum.eval(1.5) - (r.eval(1.5) + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn window_profile() {
        let w = Window { lo: 0.5, hi: 2.0, w: 0.001 };
        assert_eq!(w.eval(1.0).0, 1.0);
        assert_eq!(w.eval(0.499).0, 1.0);
        assert_eq!(w.eval(0.498).0, 0.0);
        assert_eq!(w.eval(2.002).0, 0.0);
        assert!(w.eval(0.4985).0 > 0.0 && w.eval(0.4985).0 < 1.0);
    }
}
