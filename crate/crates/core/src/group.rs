//! The Heisenberg group H₁ in exponential coordinates.
//!
//! Elements are triples (p, q, t) with the symmetric group law
//! (p,q,t)(p',q',t') = (p+p', q+q', t+t' + (pq' − qp')/2).

use std::ops::{Add, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One nonzero bracket `[e_i, e_j] = coeff · e_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub coeff: i64,
}

/// Graded structure of a nilpotent Lie algebra with an adapted basis.
///
/// Only the brackets with `i < j` are stored; antisymmetry supplies the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDescriptor {
    pub labels: Vec<String>,
    pub weights: Vec<u32>,
    pub brackets: Vec<Bracket>,
}

impl GroupDescriptor {
    pub fn heisenberg() -> Self {
        GroupDescriptor {
            labels: vec!["X".into(), "Y".into(), "T".into()],
            weights: vec![1, 1, 2],
            brackets: vec![Bracket { i: 0, j: 1, k: 2, coeff: 1 }],
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Homogeneous dimension Q.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.weights.iter().sum()
    }

    /// c^k_{ij}, antisymmetric in (i, j).
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> i64 {
        self.brackets
            .iter()
            .map(|b| {
                if (b.i, b.j, b.k) == (i, j, k) {
                    b.coeff
                } else if (b.j, b.i, b.k) == (i, j, k) {
                    -b.coeff
                } else {
                    0
                }
            })
            .sum()
    }

    /// Homogeneous degree of a multi-index in this basis.
    pub fn degree(&self, alpha: &[u32]) -> u32 {
        alpha.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        if self.labels.len() != n {
            return Err(Error::InvalidArgument("labels and weights differ in length".into()));
        }
        for b in &self.brackets {
            if b.i >= n || b.j >= n || b.k >= n {
                return Err(Error::InvalidArgument(format!("bracket index out of range: {b:?}")));
            }
            if b.i == b.j && b.coeff != 0 {
                return Err(Error::InvalidArgument("[e_i, e_i] must vanish".into()));
            }
            if b.coeff != 0 && self.weights[b.k] != self.weights[b.i] + self.weights[b.j] {
                return Err(Error::InvalidArgument(format!("bracket {b:?} breaks the grading")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let d: Self = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        d.validate()?;
        Ok(d)
    }
}

/// Scalars usable as group coordinates: exact rationals and `f64`.
pub trait Scalar:
    Clone
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn half(&self) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn half(&self) -> Self {
        0.5 * self
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn half(&self) -> Self {
        self / BigRational::from_integer(2.into())
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupElement<T> {
    pub p: T,
    pub q: T,
    pub t: T,
}

impl<T: Scalar> GroupElement<T> {
    pub fn new(p: T, q: T, t: T) -> Self {
        GroupElement { p, q, t }
    }

    pub fn identity() -> Self {
        GroupElement { p: T::zero(), q: T::zero(), t: T::zero() }
    }

    pub fn multiply(&self, h: &Self) -> Self {
        let twist = (self.p.clone() * h.q.clone() - self.q.clone() * h.p.clone()).half();
        GroupElement {
            p: self.p.clone() + h.p.clone(),
            q: self.q.clone() + h.q.clone(),
            t: self.t.clone() + h.t.clone() + twist,
        }
    }

    pub fn inverse(&self) -> Self {
        GroupElement { p: -self.p.clone(), q: -self.q.clone(), t: -self.t.clone() }
    }

    /// D_r(p, q, t) = (rp, rq, r²t). Rejects r ≤ 0.
    pub fn dilate(&self, r: &T) -> Result<Self>
    where
        T: PartialOrd,
    {
        if *r <= T::zero() {
            return Err(Error::InvalidArgument("dilation factor must be positive".into()));
        }
        Ok(GroupElement {
            p: r.clone() * self.p.clone(),
            q: r.clone() * self.q.clone(),
            t: r.clone() * r.clone() * self.t.clone(),
        })
    }

    pub fn to_f64(&self) -> GroupElement<f64> {
        GroupElement { p: self.p.to_f64(), q: self.q.to_f64(), t: self.t.to_f64() }
    }

    pub fn coords(&self) -> [T; 3] {
        [self.p.clone(), self.q.clone(), self.t.clone()]
    }
}

/// |g|_p = (Σ |x_j|^{p/υ_j})^{1/p}.
pub fn quasinorm<T: Scalar>(p_exp: f64, g: &GroupElement<T>) -> Result<f64> {
    if !(p_exp >= 1.0) {
        return Err(Error::InvalidArgument(format!("quasinorm exponent {p_exp} < 1")));
    }
    let w = [1.0, 1.0, 2.0];
    let s: f64 = g
        .coords()
        .iter()
        .zip(w)
        .map(|(x, wj)| x.to_f64().abs().powf(p_exp / wj))
        .sum();
    Ok(s.powf(1.0 / p_exp))
}

/// |g|_p^p computed exactly, for even integer p (every p/υ_j is then an integer).
pub fn quasinorm_pow_exact(p_exp: u32, g: &GroupElement<BigRational>) -> Result<BigRational> {
    if p_exp == 0 || !p_exp.is_multiple_of(2) {
        return Err(Error::InvalidArgument("exact quasinorm needs an even exponent".into()));
    }
    let w = [1u32, 1, 2];
    Ok(g.coords()
        .iter()
        .zip(w)
        .map(|(x, wj)| num_traits::pow(x.abs(), (p_exp / wj) as usize))
        .fold(BigRational::zero(), |a, b| a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn el(p: (i64, i64), q: (i64, i64), t: (i64, i64)) -> GroupElement<BigRational> {
        GroupElement::new(rat(p.0, p.1), rat(q.0, q.1), rat(t.0, t.1))
    }

    fn arb_rat() -> impl Strategy<Value = BigRational> {
        (-50i64..50, 1i64..12).prop_map(|(n, d)| rat(n, d))
    }

    fn arb_el() -> impl Strategy<Value = GroupElement<BigRational>> {
        (arb_rat(), arb_rat(), arb_rat()).prop_map(|(p, q, t)| GroupElement::new(p, q, t))
    }

    #[test]
    fn law_examples() {
        let x = el((1, 1), (0, 1), (0, 1));
        let y = el((0, 1), (1, 1), (0, 1));
        let z = el((0, 1), (0, 1), (1, 1));
        assert_eq!(x.multiply(&y), el((1, 1), (1, 1), (1, 2)));
        assert_eq!(x.multiply(&GroupElement::identity()), x);
        assert_eq!(x.multiply(&y).multiply(&z), x.multiply(&y.multiply(&z)));
        assert_eq!(el((3, 2), (-1, 5), (7, 3)).inverse(), el((-3, 2), (1, 5), (-7, 3)));
        let g = el((1, 1), (1, 1), (1, 1));
        assert_eq!(g.dilate(&rat(2, 1)).unwrap(), el((2, 1), (2, 1), (4, 1)));
        assert!(g.dilate(&rat(0, 1)).is_err());
    }

    #[test]
    fn quasinorm_examples() {
        let t = GroupElement::new(0.0, 0.0, 1.0);
        assert_eq!(quasinorm(4.0, &t).unwrap(), 1.0);
        let e = GroupElement::new(3.0, 4.0, 0.0);
        assert!((quasinorm(2.0, &e).unwrap() - 5.0).abs() < 1e-15);
        assert!(quasinorm(0.5, &e).is_err());
        assert_eq!(quasinorm(3.0, &GroupElement::<f64>::identity()).unwrap(), 0.0);
    }

    #[test]
    fn descriptor_roundtrip() {
        let d = GroupDescriptor::heisenberg();
        assert_eq!(d.homogeneous_dimension(), 4);
        assert_eq!(d.structure_constant(0, 1, 2), 1);
        assert_eq!(d.structure_constant(1, 0, 2), -1);
        assert_eq!(d.structure_constant(0, 2, 1), 0);
        d.validate().unwrap();
        assert_eq!(GroupDescriptor::from_toml(&d.to_toml()).unwrap(), d);
        let mut bad = d.clone();
        bad.brackets[0].k = 1;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn group_axioms(g in arb_el(), h in arb_el(), k in arb_el()) {
            prop_assert_eq!(g.multiply(&h).multiply(&k), g.multiply(&h.multiply(&k)));
            prop_assert_eq!(g.multiply(&g.inverse()), GroupElement::identity());
            prop_assert_eq!(g.inverse().inverse(), g.clone());
            prop_assert_eq!(g.multiply(&GroupElement::identity()), g);
        }

        #[test]
        fn dilation_is_automorphism(g in arb_el(), h in arb_el(), (n, d) in (1i64..20, 1i64..20)) {
            let r = rat(n, d);
            let lhs = g.multiply(&h).dilate(&r).unwrap();
            let rhs = g.dilate(&r).unwrap().multiply(&h.dilate(&r).unwrap());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn exact_quasinorm_homogeneity(g in arb_el(), (n, d) in (1i64..20, 1i64..20), p in 1u32..4) {
            let r = rat(n, d);
            let pe = 2 * p;
            let lhs = quasinorm_pow_exact(pe, &g.dilate(&r).unwrap()).unwrap();
            let rhs = num_traits::pow(r, pe as usize) * quasinorm_pow_exact(pe, &g).unwrap();
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(quasinorm_pow_exact(pe, &g.inverse()).unwrap(),
                            quasinorm_pow_exact(pe, &g).unwrap());
        }

        #[test]
        fn float_quasinorm(p in 1.0f64..6.0, x in -5.0f64..5.0, y in -5.0f64..5.0, t in -5.0f64..5.0,
                           r in 0.1f64..10.0) {
            let g = GroupElement::new(x, y, t);
            let n = quasinorm(p, &g).unwrap();
            prop_assert_eq!(quasinorm(p, &g.inverse()).unwrap(), n);
            let nd = quasinorm(p, &g.dilate(&r).unwrap()).unwrap();
            prop_assert!((nd - r * n).abs() <= 1e-12 * (1.0 + r * n));
            prop_assert_eq!(n == 0.0, x == 0.0 && y == 0.0 && t == 0.0);
        }
    }
}
