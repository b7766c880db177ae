//! Exact polynomial calculus on H₁: polynomials in (p, q, t), left-invariant
//! differential operators in PBW normal form, the dual basis q_α and the
//! structure constants of the difference operators Δ^α.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupDescriptor, GroupElement};

pub type Q = BigRational;

/// Exponents (i, j, k) of p^i q^j t^k.
pub type Monomial = [u32; 3];

/// PBW multi-index (β₁, β₂, β₃) meaning X^β₁ Y^β₂ T^β₃.
pub type MultiIndex = [u32; 3];

pub const DEFAULT_DEGREE_CAP: u32 = 6;

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Homogeneous degree [α] = α₁ + α₂ + 2α₃.
pub fn degree(a: &MultiIndex) -> u32 {
    a[0] + a[1] + 2 * a[2]
}

pub fn length(a: &MultiIndex) -> u32 {
    a[0] + a[1] + a[2]
}

/// All multi-indices with [α] = d, in lexicographic order.
pub fn indices_of_degree(d: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for k in 0..=d / 2 {
        let r = d - 2 * k;
        for i in (0..=r).rev() {
            out.push([i, r - i, k]);
        }
    }
    out
}

/// All multi-indices with [α] ≤ d, ordered by degree.
pub fn indices_up_to(d: u32) -> Vec<MultiIndex> {
    (0..=d).flat_map(indices_of_degree).collect()
}

fn binom(n: u32, k: u32) -> Q {
    if k > n {
        return Q::zero();
    }
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    Q::from_integer(r)
}

fn factorial(n: u32) -> Q {
    Q::from_integer((1..=n).fold(BigInt::one(), |a, i| a * BigInt::from(i)))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Polynomial {
    pub terms: BTreeMap<Monomial, Q>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: Q) -> Self {
        Polynomial::monomial([0, 0, 0], c)
    }

    pub fn one() -> Self {
        Polynomial::constant(Q::one())
    }

    pub fn monomial(m: Monomial, c: Q) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Polynomial { terms }
    }

    /// The coordinate functions p, q, t.
    pub fn coordinate(j: usize) -> Self {
        let mut m = [0; 3];
        m[j] = 1;
        Polynomial::monomial(m, Q::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, m: Monomial, c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(m).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            r.add_term(*m, c.clone());
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(&-Q::one()))
    }

    pub fn scale(&self, s: &Q) -> Self {
        if s.is_zero() {
            return Polynomial::zero();
        }
        Polynomial { terms: self.terms.iter().map(|(m, c)| (*m, c * s)).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut r = Polynomial::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                r.add_term([m1[0] + m2[0], m1[1] + m2[1], m1[2] + m2[2]], c1 * c2);
            }
        }
        r
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Polynomial::one(), |a, _| a.mul(self))
    }

    /// Partial derivative in coordinate j.
    pub fn partial(&self, j: usize) -> Self {
        let mut r = Polynomial::zero();
        for (m, c) in &self.terms {
            if m[j] > 0 {
                let mut n = *m;
                n[j] -= 1;
                r.add_term(n, c * q_int(m[j] as i64));
            }
        }
        r
    }

    pub fn eval(&self, x: &GroupElement<Q>) -> Q {
        let v = x.coords();
        self.terms.iter().fold(Q::zero(), |acc, (m, c)| {
            acc + c
                * num_traits::pow(v[0].clone(), m[0] as usize)
                * num_traits::pow(v[1].clone(), m[1] as usize)
                * num_traits::pow(v[2].clone(), m[2] as usize)
        })
    }

    pub fn eval_f64(&self, x: &[f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                crate::group::Scalar::to_f64(c)
                    * x[0].powi(m[0] as i32)
                    * x[1].powi(m[1] as i32)
                    * x[2].powi(m[2] as i32)
            })
            .sum()
    }

    pub fn at_origin(&self) -> Q {
        self.terms.get(&[0, 0, 0]).cloned().unwrap_or_else(Q::zero)
    }

    /// Maximal homogeneous degree of a monomial present (None for zero).
    pub fn homogeneous_degree(&self) -> Option<u32> {
        self.terms.keys().map(degree).max()
    }

    pub fn is_homogeneous(&self, d: u32) -> bool {
        self.terms.keys().all(|m| degree(m) == d)
    }

    /// x ↦ P(x⁻¹); inversion negates every coordinate.
    pub fn compose_inverse(&self) -> Self {
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (*m, if (m[0] + m[1] + m[2]) % 2 == 1 { -c.clone() } else { c.clone() }))
                .collect(),
        }
    }

    /// Expands (x, y) ↦ P(xy) as a map from y-monomials to polynomials in x.
    pub fn compose_product(&self) -> PolyPair {
        // p(xy) = p_x + p_y, q(xy) = q_x + q_y, t(xy) = t_x + t_y + (p_x q_y − q_x p_y)/2
        let half = q_frac(1, 2);
        let px = PolyPair::x(Polynomial::coordinate(0));
        let qx = PolyPair::x(Polynomial::coordinate(1));
        let tx = PolyPair::x(Polynomial::coordinate(2));
        let py = PolyPair::y([1, 0, 0]);
        let qy = PolyPair::y([0, 1, 0]);
        let ty = PolyPair::y([0, 0, 1]);
        let coords = [
            px.add(&py),
            qx.add(&qy),
            tx.add(&ty).add(&px.mul(&qy).sub(&qx.mul(&py)).scale(&half)),
        ];
        let mut out = PolyPair::default();
        for (m, c) in &self.terms {
            let mut t = PolyPair::x(Polynomial::constant(c.clone()));
            for j in 0..3 {
                for _ in 0..m[j] {
                    t = t.mul(&coords[j]);
                }
            }
            out = out.add(&t);
        }
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (v, e) in ["p", "q", "t"].iter().zip(m) {
                match e {
                    0 => {}
                    1 => write!(f, "{v}")?,
                    _ => write!(f, "{v}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

/// Polynomials in two group variables (x, y), stored as y-monomial ↦ polynomial in x.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolyPair {
    pub terms: BTreeMap<Monomial, Polynomial>,
}

impl PolyPair {
    pub fn x(p: Polynomial) -> Self {
        let mut terms = BTreeMap::new();
        if !p.is_zero() {
            terms.insert([0, 0, 0], p);
        }
        PolyPair { terms }
    }

    pub fn y(m: Monomial) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(m, Polynomial::one());
        PolyPair { terms }
    }

    /// f(x) g(y).
    pub fn tensor(fx: &Polynomial, gy: &Polynomial) -> Self {
        let mut terms = BTreeMap::new();
        for (m, c) in &gy.terms {
            let p = fx.scale(c);
            if !p.is_zero() {
                terms.insert(*m, p);
            }
        }
        PolyPair { terms }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (m, p) in &o.terms {
            let s = r.terms.get(m).map(|a| a.add(p)).unwrap_or_else(|| p.clone());
            if s.is_zero() {
                r.terms.remove(m);
            } else {
                r.terms.insert(*m, s);
            }
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(&-Q::one()))
    }

    pub fn scale(&self, s: &Q) -> Self {
        PolyPair {
            terms: self
                .terms
                .iter()
                .map(|(m, p)| (*m, p.scale(s)))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut r = PolyPair::default();
        for (m1, p1) in &self.terms {
            for (m2, p2) in &o.terms {
                let m = [m1[0] + m2[0], m1[1] + m2[1], m1[2] + m2[2]];
                let mut t = BTreeMap::new();
                t.insert(m, p1.mul(p2));
                r = r.add(&PolyPair { terms: t });
            }
        }
        r
    }
}

/// Letters of the Lie algebra basis: 0 = X, 1 = Y, 2 = T.
pub type Letter = u8;

pub fn word_of(b: &MultiIndex) -> Vec<Letter> {
    let mut w = Vec::with_capacity(length(b) as usize);
    for (l, &n) in b.iter().enumerate() {
        w.extend(std::iter::repeat_n(l as Letter, n as usize));
    }
    w
}

/// Left-invariant vector fields read off the bracket data: in exponential
/// coordinates of a step-two group, X_i = ∂_i + ½ Σ_{j,k} c^k_{ji} x_j ∂_k.
#[derive(Debug, Clone)]
pub struct Fields {
    desc: GroupDescriptor,
    /// `parts[i]` lists (coefficient polynomial, ∂ direction) making up X_i.
    parts: Vec<Vec<(Polynomial, usize)>>,
}

impl Fields {
    pub fn new(desc: &GroupDescriptor) -> Result<Self> {
        desc.validate()?;
        if desc.dimension() != 3 {
            return Err(Error::InvalidArgument("only the three-dimensional Heisenberg group is implemented".into()));
        }
        let half = q_frac(1, 2);
        let mut parts = Vec::new();
        for i in 0..3 {
            let mut v = vec![(Polynomial::one(), i)];
            for k in 0..3 {
                let mut coeff = Polynomial::zero();
                for j in 0..3 {
                    let c = desc.structure_constant(j, i, k);
                    if c != 0 {
                        coeff = coeff.add(&Polynomial::coordinate(j).scale(&(q_int(c) * &half)));
                    }
                }
                if !coeff.is_zero() {
                    v.push((coeff, k));
                }
            }
            parts.push(v);
        }
        Ok(Fields { desc: desc.clone(), parts })
    }

    pub fn heisenberg() -> Self {
        Fields::new(&GroupDescriptor::heisenberg()).expect("H1 descriptor is valid")
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.desc
    }

    /// Coefficient c with [Y, X] = −c T; equals c^T_{XY}.
    pub fn bracket_xy(&self) -> i64 {
        self.desc.structure_constant(0, 1, 2)
    }

    pub fn apply_letter(&self, l: Letter, f: &Polynomial) -> Polynomial {
        self.parts[l as usize]
            .iter()
            .fold(Polynomial::zero(), |acc, (c, k)| acc.add(&c.mul(&f.partial(*k))))
    }

    /// Applies the word w₁w₂…w_n (rightmost letter acts first).
    pub fn apply_word(&self, w: &[Letter], f: &Polynomial) -> Polynomial {
        w.iter().rev().fold(f.clone(), |acc, &l| self.apply_letter(l, &acc))
    }

    /// X^β f = X^β₁(Y^β₂(T^β₃ f)).
    pub fn apply_monomial(&self, b: &MultiIndex, f: &Polynomial) -> Polynomial {
        self.apply_word(&word_of(b), f)
    }

    /// PBW normal form of X^a · X^b, using YX = XY − cT with T central.
    pub fn pbw_product(&self, a: &MultiIndex, b: &MultiIndex) -> Vec<(MultiIndex, Q)> {
        // Y^m X^n = Σ_k k! C(m,k) C(n,k) (−c)^k X^{n−k} Y^{m−k} T^k
        let c = q_int(-self.bracket_xy());
        let (m, n) = (a[1], b[0]);
        let mut out = Vec::new();
        for k in 0..=m.min(n) {
            let coef = factorial(k) * binom(m, k) * binom(n, k) * num_traits::pow(c.clone(), k as usize);
            if coef.is_zero() {
                continue;
            }
            out.push(([a[0] + n - k, m - k + b[1], a[2] + b[2] + k], coef));
        }
        out
    }

    /// PBW normal form of an arbitrary word.
    pub fn normalize_word(&self, w: &[Letter]) -> BTreeMap<MultiIndex, Q> {
        let mut cur: BTreeMap<MultiIndex, Q> = BTreeMap::new();
        cur.insert([0, 0, 0], Q::one());
        for &l in w {
            let mut e = [0u32; 3];
            e[l as usize] = 1;
            let mut next = BTreeMap::new();
            for (a, c) in &cur {
                for (r, k) in self.pbw_product(a, &e) {
                    accumulate(&mut next, r, c * k);
                }
            }
            cur = next;
        }
        cur
    }
}

fn accumulate(m: &mut BTreeMap<MultiIndex, Q>, k: MultiIndex, v: Q) {
    if v.is_zero() {
        return;
    }
    let e = m.entry(k).or_insert_with(Q::zero);
    *e += v;
    if e.is_zero() {
        m.remove(&k);
    }
}

/// Σ_β c_β(x) X^β in PBW normal form, coefficients on the left.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EnvelopingOperator {
    pub terms: BTreeMap<MultiIndex, Polynomial>,
}

impl EnvelopingOperator {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self::term([0, 0, 0], Polynomial::one())
    }

    pub fn term(b: MultiIndex, c: Polynomial) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(b, c);
        }
        EnvelopingOperator { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, b: MultiIndex, c: &Polynomial) {
        if c.is_zero() {
            return;
        }
        let s = self.terms.get(&b).map(|a| a.add(c)).unwrap_or_else(|| c.clone());
        if s.is_zero() {
            self.terms.remove(&b);
        } else {
            self.terms.insert(b, s);
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (b, c) in &o.terms {
            r.add_term(*b, c);
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(&-Q::one()))
    }

    pub fn scale(&self, s: &Q) -> Self {
        let mut r = Self::zero();
        for (b, c) in &self.terms {
            r.add_term(*b, &c.scale(s));
        }
        r
    }

    /// Largest [β] among nonzero terms.
    pub fn order(&self) -> u32 {
        self.terms.keys().map(degree).max().unwrap_or(0)
    }

    pub fn apply(&self, fields: &Fields, f: &Polynomial) -> Polynomial {
        self.terms
            .iter()
            .fold(Polynomial::zero(), |acc, (b, c)| acc.add(&c.mul(&fields.apply_monomial(b, f))))
    }

    /// Builds the normal form of Σ c_i · (word_i), coefficients on the left.
    pub fn from_words(fields: &Fields, items: &[(Polynomial, Vec<Letter>)]) -> Self {
        let mut r = Self::zero();
        for (c, w) in items {
            for (b, k) in fields.normalize_word(w) {
                r.add_term(b, &c.scale(&k));
            }
        }
        r
    }

    /// The normal form, recomputed term by term. Idempotent on normal forms.
    pub fn normalize(&self, fields: &Fields) -> Self {
        let items: Vec<_> = self.terms.iter().map(|(b, c)| (c.clone(), word_of(b))).collect();
        Self::from_words(fields, &items)
    }

    /// Word w composed with multiplication by d: w ∘ d = Σ_S (w_S d) w_{S^c}.
    fn word_times_function(fields: &Fields, w: &[Letter], d: &Polynomial) -> Vec<(Polynomial, Vec<Letter>)> {
        let n = w.len();
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0u32..(1 << n) {
            let sub: Vec<Letter> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| w[i]).collect();
            let rest: Vec<Letter> = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| w[i]).collect();
            let dd = fields.apply_word(&sub, d);
            if !dd.is_zero() {
                out.push((dd, rest));
            }
        }
        out
    }

    /// Exact composition self ∘ o.
    pub fn compose(&self, fields: &Fields, o: &Self) -> Self {
        let mut items = Vec::new();
        for (b, c) in &self.terms {
            let w = word_of(b);
            for (g, d) in &o.terms {
                for (dd, mut rest) in Self::word_times_function(fields, &w, d) {
                    rest.extend(word_of(g));
                    items.push((c.mul(&dd), rest));
                }
            }
        }
        Self::from_words(fields, &items)
    }

    /// Formal transpose with respect to Lebesgue (= Haar) measure:
    /// (c X^β)^t = (−1)^{|β|} X^{rev β} ∘ c.
    pub fn transpose(&self, fields: &Fields) -> Self {
        let mut items = Vec::new();
        for (b, c) in &self.terms {
            let mut w = word_of(b);
            w.reverse();
            let sign = if length(b) % 2 == 1 { -Q::one() } else { Q::one() };
            for (dd, rest) in Self::word_times_function(fields, &w, c) {
                items.push((dd.scale(&sign), rest));
            }
        }
        Self::from_words(fields, &items)
    }
}

impl fmt::Display for EnvelopingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(b, c)| format!("[{c}] X^{b:?}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// The homogeneous polynomials q_α with X^{α'} q_α(0) = δ_{αα'}, for [α] ≤ cap.
#[derive(Debug, Clone)]
pub struct DualBasis {
    pub cap: u32,
    pub polys: BTreeMap<MultiIndex, Polynomial>,
}

fn monomials_of_degree(d: u32) -> Vec<Monomial> {
    // same shape as multi-indices: i + j + 2k = d
    indices_of_degree(d)
}

/// Exact Gauss–Jordan inverse; None if singular.
fn invert(mut a: Vec<Vec<Q>>) -> Option<Vec<Vec<Q>>> {
    let n = a.len();
    let mut inv: Vec<Vec<Q>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Q::one() } else { Q::zero() }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        inv.swap(col, piv);
        let s = Q::one() / &a[col][col];
        for j in 0..n {
            a[col][j] = &a[col][j] * &s;
            inv[col][j] = &inv[col][j] * &s;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let (ac, ic) = (a[col][j].clone(), inv[col][j].clone());
                    a[r][j] -= &f * ac;
                    inv[r][j] -= &f * ic;
                }
            }
        }
    }
    Some(inv)
}

impl DualBasis {
    /// Solves the duality system degree by degree. `cap` bounds the degree.
    pub fn new(fields: &Fields, max_degree: u32, cap: u32) -> Result<Self> {
        if max_degree > cap {
            return Err(Error::DegreeCap { requested: max_degree, cap });
        }
        let mut polys = BTreeMap::new();
        for d in 0..=max_degree {
            let idx = indices_of_degree(d);
            let mons = monomials_of_degree(d);
            // m[a'][m] = X^{a'}(monomial m)(0)
            let m: Vec<Vec<Q>> = idx
                .iter()
                .map(|a| {
                    mons.iter()
                        .map(|mm| fields.apply_monomial(a, &Polynomial::monomial(*mm, Q::one())).at_origin())
                        .collect()
                })
                .collect();
            let inv = invert(m).ok_or(Error::SingularDuality(d))?;
            // q_α = Σ_m inv[m][α] x^m
            for (ai, a) in idx.iter().enumerate() {
                let mut p = Polynomial::zero();
                for (mi, mm) in mons.iter().enumerate() {
                    p.add_term(*mm, inv[mi][ai].clone());
                }
                polys.insert(*a, p);
            }
        }
        Ok(DualBasis { cap: max_degree, polys })
    }

    pub fn get(&self, a: &MultiIndex) -> Result<&Polynomial> {
        self.polys.get(a).ok_or(Error::DegreeCap { requested: degree(a), cap: self.cap })
    }

    /// Taylor expansion at the origin: P = Σ_α (X^α P)(0) q_α, exact for [P] ≤ cap.
    pub fn taylor(&self, fields: &Fields, p: &Polynomial) -> Result<Polynomial> {
        if let Some(d) = p.homogeneous_degree() {
            if d > self.cap {
                return Err(Error::DegreeCap { requested: d, cap: self.cap });
            }
        }
        let mut r = Polynomial::zero();
        for (a, qa) in &self.polys {
            let c = fields.apply_monomial(a, p).at_origin();
            r = r.add(&qa.scale(&c));
        }
        Ok(r)
    }
}

/// Σ_γ c_γ X^γ δ₀.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OriginDistribution {
    pub terms: BTreeMap<MultiIndex, Q>,
}

impl OriginDistribution {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// ⟨Σ c_γ X^γ δ₀, f⟩ = Σ c_γ ((X^γ)^t f)(0).
    pub fn pair(&self, fields: &Fields, f: &Polynomial) -> Q {
        self.terms.iter().fold(Q::zero(), |acc, (g, c)| acc + c * pair_monomial(fields, g, f))
    }
}

/// ⟨X^β δ₀, f⟩ = ((X^β)^t f)(0) with (X^β)^t = (−1)^{|β|} X^{rev β}.
pub fn pair_monomial(fields: &Fields, b: &MultiIndex, f: &Polynomial) -> Q {
    let mut w = word_of(b);
    w.reverse();
    let v = fields.apply_word(&w, f).at_origin();
    if length(b) % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Shared exact context: fields plus a dual basis up to the cap.
#[derive(Debug, Clone)]
pub struct Symbolic {
    pub fields: Fields,
    pub dual: DualBasis,
}

impl Symbolic {
    pub fn new(desc: &GroupDescriptor, cap: u32) -> Result<Self> {
        let fields = Fields::new(desc)?;
        let dual = DualBasis::new(&fields, cap, cap)?;
        Ok(Symbolic { fields, dual })
    }

    pub fn heisenberg() -> Self {
        Symbolic::new(&GroupDescriptor::heisenberg(), DEFAULT_DEGREE_CAP).expect("default context")
    }

    pub fn cap(&self) -> u32 {
        self.dual.cap
    }

    /// q · X^β δ₀ = Σ_γ c_γ X^γ δ₀.
    ///
    /// Pairing with q_γ∘inv isolates c_γ, since ⟨X^γ δ₀, h∘inv⟩ = (X^γ h)(0).
    pub fn expand_origin_distribution(&self, q: &Polynomial, b: &MultiIndex) -> Result<OriginDistribution> {
        let d = degree(b);
        if d > self.cap() {
            return Err(Error::DegreeCap { requested: d, cap: self.cap() });
        }
        let mut out = OriginDistribution::default();
        for g in indices_up_to(d) {
            let test = self.dual.get(&g)?.compose_inverse();
            let c = pair_monomial(&self.fields, b, &q.mul(&test));
            if !c.is_zero() {
                out.terms.insert(g, c);
            }
        }
        Ok(out)
    }

    /// Δ^α X̂^β: the expansion of q_α(·⁻¹) X^β δ₀.
    pub fn difference_structure_constants(&self, a: &MultiIndex, b: &MultiIndex) -> Result<OriginDistribution> {
        if degree(a) > self.cap() {
            return Err(Error::DegreeCap { requested: degree(a), cap: self.cap() });
        }
        if degree(a) > degree(b) {
            return Ok(OriginDistribution::default());
        }
        let qa = self.dual.get(a)?.compose_inverse();
        self.expand_origin_distribution(&qa, b)
    }

    /// Coproduct constants c_{a,b} = (X^a X^b q_α)(0), X^b applied first.
    ///
    /// They give q_α(xy) = Σ c_{a,b} q_a(x) q_b(y) and the Leibniz rule
    /// Δ^α(τ₁τ₂) = Σ c_{a,b} Δ^a τ₁ Δ^b τ₂.
    pub fn coproduct(&self, alpha: &MultiIndex) -> Result<BTreeMap<(MultiIndex, MultiIndex), Q>> {
        let qa = self.dual.get(alpha)?;
        let d = degree(alpha);
        let mut out = BTreeMap::new();
        for b in indices_up_to(d) {
            let xb = self.fields.apply_monomial(&b, qa);
            for a in indices_of_degree(d - degree(&b)) {
                let c = self.fields.apply_monomial(&a, &xb).at_origin();
                if !c.is_zero() {
                    out.insert((a, b), c);
                }
            }
        }
        Ok(out)
    }

    /// Structure-constant table as TOML, for audit.
    pub fn structure_table_toml(&self, max_alpha: u32, max_beta: u32) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            alpha: MultiIndex,
            beta: MultiIndex,
            gamma: MultiIndex,
            value: String,
        }
        #[derive(Serialize)]
        struct Table {
            convention: String,
            entry: Vec<Row>,
        }
        let mut entry = Vec::new();
        for a in indices_up_to(max_alpha) {
            for b in indices_up_to(max_beta) {
                for (g, c) in self.difference_structure_constants(&a, &b)?.terms {
                    entry.push(Row { alpha: a, beta: b, gamma: g, value: c.to_string() });
                }
            }
        }
        let t = Table { convention: "Delta^alpha Xhat^beta = sum value * Xhat^gamma".into(), entry };
        toml::to_string(&t).map_err(|e| Error::Config(e.to_string()))
    }
}

/// |c| as f64, for diagnostics.
pub fn q_abs_f64(c: &Q) -> f64 {
    crate::group::Scalar::to_f64(&c.abs())
}
