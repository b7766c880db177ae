//! Differential symbols Σ c_β(x) X̂^β: exact algebra (composition, the finite
//! semiclassical product and adjoint expansions, dilation), numeric coefficients
//! with left-derivative jets, evaluation on representation slices and seminorm
//! estimates.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupElement, Scalar};
use crate::jet::Jet;
use crate::poly::{
    degree, indices_of_degree, indices_up_to, length, q_frac, q_int, word_of, EnvelopingOperator, Fields, Monomial,
    MultiIndex, Polynomial, Symbolic, Q,
};
use crate::rep::{c, hermitian_eigen, hermitian_function, CMat, RepresentationSlice, C64};

// ---------------------------------------------------------------------------
// Exact algebra.

/// X^γ applied to every coefficient of σ.
pub fn left_derivative_exact(fields: &Fields, g: &MultiIndex, s: &EnvelopingOperator) -> EnvelopingOperator {
    let mut r = EnvelopingOperator::zero();
    for (b, cf) in &s.terms {
        r.add_term(*b, &fields.apply_monomial(g, cf));
    }
    r
}

/// Δ^α σ, termwise from the structure constants (coefficients pass through).
pub fn difference_exact(sym: &Symbolic, a: &MultiIndex, s: &EnvelopingOperator) -> Result<EnvelopingOperator> {
    let mut r = EnvelopingOperator::zero();
    for (b, cf) in &s.terms {
        for (g, k) in sym.difference_structure_constants(a, b)?.terms {
            r.add_term(g, &cf.scale(&k));
        }
    }
    Ok(r)
}

/// Pointwise product σ₁(x, π) σ₂(x, π).
pub fn pointwise_product_exact(fields: &Fields, s1: &EnvelopingOperator, s2: &EnvelopingOperator) -> EnvelopingOperator {
    let mut r = EnvelopingOperator::zero();
    for (b, c1) in &s1.terms {
        for (g, c2) in &s2.terms {
            let cc = c1.mul(c2);
            for (d, k) in fields.pbw_product(b, g) {
                r.add_term(d, &cc.scale(&k));
            }
        }
    }
    r
}

/// Pointwise adjoint σ(x, π)* for real coefficients: π(X)^β* = (−1)^{|β|} π(X)^{rev β}.
pub fn pointwise_adjoint_exact(fields: &Fields, s: &EnvelopingOperator) -> EnvelopingOperator {
    let items: Vec<(Polynomial, Vec<u8>)> = s
        .terms
        .iter()
        .map(|(b, cf)| {
            let mut w = word_of(b);
            w.reverse();
            let sign = if length(b) % 2 == 1 { -Q::one() } else { Q::one() };
            (cf.scale(&sign), w)
        })
        .collect();
    EnvelopingOperator::from_words(fields, &items)
}

/// Σ_{[α]=d} Δ^α σ₁ · X^α σ₂ for d = 0..=n. For differential symbols the
/// family Σ ε^d term_d is the exact ⋄_ε product.
pub fn semiclassical_composition_terms(
    sym: &Symbolic,
    s1: &EnvelopingOperator,
    s2: &EnvelopingOperator,
    n: u32,
) -> Result<Vec<EnvelopingOperator>> {
    if n > sym.cap() {
        return Err(Error::DegreeCap { requested: n, cap: sym.cap() });
    }
    let mut out = Vec::with_capacity(n as usize + 1);
    for d in 0..=n {
        let mut acc = EnvelopingOperator::zero();
        for a in indices_of_degree(d) {
            let da = difference_exact(sym, &a, s1)?;
            if da.is_zero() {
                continue;
            }
            let xa = left_derivative_exact(&sym.fields, &a, s2);
            acc = acc.add(&pointwise_product_exact(&sym.fields, &da, &xa));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Σ_{[α]=d} Δ^α X^α σ* for d = 0..=n.
pub fn adjoint_terms(sym: &Symbolic, s: &EnvelopingOperator, n: u32) -> Result<Vec<EnvelopingOperator>> {
    if n > sym.cap() {
        return Err(Error::DegreeCap { requested: n, cap: sym.cap() });
    }
    let star = pointwise_adjoint_exact(&sym.fields, s);
    let mut out = Vec::with_capacity(n as usize + 1);
    for d in 0..=n {
        let mut acc = EnvelopingOperator::zero();
        for a in indices_of_degree(d) {
            let xa = left_derivative_exact(&sym.fields, &a, &star);
            acc = acc.add(&difference_exact(sym, &a, &xa)?);
        }
        out.push(acc);
    }
    Ok(out)
}

/// σ^{(ε)} for a rational ε: each β-term scaled by ε^{[β]}.
pub fn dilate_exact(s: &EnvelopingOperator, eps: &Q) -> EnvelopingOperator {
    let mut r = EnvelopingOperator::zero();
    for (b, cf) in &s.terms {
        r.add_term(*b, &cf.scale(&num_traits::pow(eps.clone(), degree(b) as usize)));
    }
    r
}

/// Σ_k ε^k σ_k with exact coefficients; a polynomial in a formal ε.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EpsSymbol {
    pub powers: BTreeMap<u32, EnvelopingOperator>,
}

impl EpsSymbol {
    /// σ^{(ε)} with ε formal.
    pub fn dilated(s: &EnvelopingOperator) -> Self {
        let mut r = Self::default();
        for (b, cf) in &s.terms {
            r.add_term(degree(b), &EnvelopingOperator::term(*b, cf.clone()));
        }
        r
    }

    /// Σ_d ε^d terms[d].
    pub fn from_series(terms: &[EnvelopingOperator]) -> Self {
        let mut r = Self::default();
        for (d, t) in terms.iter().enumerate() {
            r.add_term(d as u32, t);
        }
        r
    }

    fn add_term(&mut self, k: u32, op: &EnvelopingOperator) {
        let s = self.powers.get(&k).map(|a| a.add(op)).unwrap_or_else(|| op.clone());
        if s.is_zero() {
            self.powers.remove(&k);
        } else {
            self.powers.insert(k, s);
        }
    }

    pub fn compose(&self, fields: &Fields, o: &Self) -> Self {
        let mut r = Self::default();
        for (i, a) in &self.powers {
            for (j, b) in &o.powers {
                r.add_term(i + j, &a.compose(fields, b));
            }
        }
        r
    }

    pub fn transpose(&self, fields: &Fields) -> Self {
        let mut r = Self::default();
        for (k, a) in &self.powers {
            r.add_term(*k, &a.transpose(fields));
        }
        r
    }

    /// Inverse of the dilation on operators: the term ε^k c X^β becomes ε^{k−[β]} c X̂^β.
    /// Fails if a negative power would appear.
    pub fn undilate(&self) -> Result<Self> {
        let mut r = Self::default();
        for (k, a) in &self.powers {
            for (b, cf) in &a.terms {
                let d = degree(b);
                if d > *k {
                    return Err(Error::InvalidArgument(format!("term ε^{k} X^{b:?} has no symbol expansion")));
                }
                r.add_term(k - d, &EnvelopingOperator::term(*b, cf.clone()));
            }
        }
        Ok(r)
    }

    pub fn at(&self, eps: &Q) -> EnvelopingOperator {
        self.powers.iter().fold(EnvelopingOperator::zero(), |acc, (k, a)| {
            acc.add(&a.scale(&num_traits::pow(eps.clone(), *k as usize)))
        })
    }
}

/// Oracle for the product expansion: the symbol of Op(σ₁^{(ε)}) Op(σ₂^{(ε)}) as a polynomial in ε.
pub fn semiclassical_product_oracle(fields: &Fields, s1: &EnvelopingOperator, s2: &EnvelopingOperator) -> Result<EpsSymbol> {
    EpsSymbol::dilated(s1).compose(fields, &EpsSymbol::dilated(s2)).undilate()
}

/// Oracle for the adjoint expansion: the symbol of Op(σ^{(ε)})^t.
pub fn semiclassical_adjoint_oracle(fields: &Fields, s: &EnvelopingOperator) -> Result<EpsSymbol> {
    EpsSymbol::dilated(s).transpose(fields).undilate()
}

/// Random differential symbol with [β] ≤ order and integer coefficients of degree ≤ coef_degree.
pub fn random_exact_symbol(rng: &mut impl Rng, order: u32, coef_degree: u32) -> EnvelopingOperator {
    let mut s = EnvelopingOperator::zero();
    for b in indices_up_to(order) {
        if rng.random_bool(0.3) {
            continue;
        }
        let mut cf = Polynomial::zero();
        for m in indices_up_to(coef_degree) {
            // plain total degree bound on monomials
            if m[0] + m[1] + m[2] > coef_degree || rng.random_bool(0.6) {
                continue;
            }
            cf = cf.add(&Polynomial::monomial(m, q_frac(rng.random_range(-4..=4), rng.random_range(1..=3))));
        }
        s.add_term(b, &cf);
    }
    s
}

// ---------------------------------------------------------------------------
// Left-derivative jets of coefficient functions.

/// (X^γ c)(x) for [γ] ≤ order.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftJet {
    pub order: u32,
    pub values: BTreeMap<MultiIndex, f64>,
}

impl LeftJet {
    pub fn constant(order: u32, v: f64) -> Self {
        let mut values: BTreeMap<MultiIndex, f64> = indices_up_to(order).into_iter().map(|g| (g, 0.0)).collect();
        values.insert([0, 0, 0], v);
        LeftJet { order, values }
    }

    pub fn value(&self) -> f64 {
        self.values[&[0, 0, 0]]
    }

    pub fn get(&self, g: &MultiIndex) -> f64 {
        self.values.get(g).copied().unwrap_or(0.0)
    }

    fn zip(&self, o: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let order = self.order.min(o.order);
        let values = indices_up_to(order).into_iter().map(|g| (g, f(self.get(&g), o.get(&g)))).collect();
        LeftJet { order, values }
    }

    /// Leibniz over the PBW word: X^γ(fg) = Σ_{s≤γ} C(γ,s) X^s f X^{γ−s} g.
    pub fn mul(&self, o: &Self) -> Self {
        let order = self.order.min(o.order);
        let mut values = BTreeMap::new();
        for g in indices_up_to(order) {
            let mut v = 0.0;
            for s in sub_indices(&g) {
                let r = [g[0] - s[0], g[1] - s[1], g[2] - s[2]];
                v += binom_f(&g, &s) * self.get(&s) * o.get(&r);
            }
            values.insert(g, v);
        }
        LeftJet { order, values }
    }
}

/// All s ≤ g componentwise.
pub fn sub_indices(g: &MultiIndex) -> Vec<MultiIndex> {
    let mut v = Vec::new();
    for i in 0..=g[0] {
        for j in 0..=g[1] {
            for k in 0..=g[2] {
                v.push([i, j, k]);
            }
        }
    }
    v
}

/// Π C(g_i, s_i).
pub fn binom_f(g: &MultiIndex, s: &MultiIndex) -> f64 {
    (0..3).map(|i| binom1(g[i], s[i])).product()
}

fn binom1(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

type LeftTable = Vec<(MultiIndex, Vec<(usize, f64)>)>;

thread_local! {
    static LEFT_TABLES: RefCell<HashMap<u32, Rc<LeftTable>>> = RefCell::new(HashMap::new());
    static WORD_TABLES: RefCell<HashMap<(MultiIndex, MultiIndex), Rc<Vec<(MultiIndex, f64)>>>> = RefCell::new(HashMap::new());
}

/// For each γ with [γ] ≤ k: the nonzero (X^γ y^m)(0) over the slots of a 3-variable jet of order k.
fn left_table(k: u32) -> Rc<LeftTable> {
    LEFT_TABLES.with(|t| {
        t.borrow_mut()
            .entry(k)
            .or_insert_with(|| {
                let fields = Fields::heisenberg();
                let mons = Jet::constant(3, k as usize, 0.0).monomials();
                let table = indices_up_to(k)
                    .into_iter()
                    .map(|g| {
                        let row = mons
                            .iter()
                            .enumerate()
                            .filter_map(|(i, m)| {
                                let mm: Monomial = [m[0], m[1], m[2]];
                                let v = fields.apply_monomial(&g, &Polynomial::monomial(mm, Q::one())).at_origin();
                                (!v.is_zero()).then(|| (i, v.to_f64()))
                            })
                            .collect();
                        (g, row)
                    })
                    .collect();
                Rc::new(table)
            })
            .clone()
    })
}

/// PBW normal form of X^γ X^β as f64 pairs.
fn word_product(g: &MultiIndex, b: &MultiIndex) -> Rc<Vec<(MultiIndex, f64)>> {
    WORD_TABLES.with(|t| {
        t.borrow_mut()
            .entry((*g, *b))
            .or_insert_with(|| {
                let fields = Fields::heisenberg();
                Rc::new(fields.pbw_product(g, b).into_iter().map(|(d, k)| (d, k.to_f64())).collect())
            })
            .clone()
    })
}

/// Registered coefficient families, addressable from configs.
pub const REGISTERED: &[(&str, usize, &str)] = &[
    ("const", 1, "c"),
    ("linear", 4, "c0 + cp p + cq q + ct t"),
    ("cos", 5, "a + b cos(2π(kp p + kq q + kt t))"),
    ("sin", 5, "a + b sin(2π(kp p + kq q + kt t))"),
    ("gauss", 3, "a + b exp(−w (p² + q² + t²))"),
];

fn named_jet(name: &str, prm: &[f64], v: &[Jet; 3]) -> Jet {
    let phase = |k: &[f64]| {
        v[0].scale(k[0]).add(&v[1].scale(k[1])).add(&v[2].scale(k[2])).scale(2.0 * std::f64::consts::PI)
    };
    match name {
        "const" => Jet::constant(3, v[0].order, prm[0]),
        "linear" => v[0].scale(prm[1]).add(&v[1].scale(prm[2])).add(&v[2].scale(prm[3])).add_const(prm[0]),
        "cos" => phase(&prm[2..5]).cos().scale(prm[1]).add_const(prm[0]),
        "sin" => phase(&prm[2..5]).sin().scale(prm[1]).add_const(prm[0]),
        "gauss" => {
            let r2 = v[0].mul(&v[0]).add(&v[1].mul(&v[1])).add(&v[2].mul(&v[2]));
            r2.scale(-prm[2]).exp().scale(prm[1]).add_const(prm[0])
        }
        _ => unreachable!("validated at construction"),
    }
}

/// User-supplied smooth function of (p, q, t) acting on jets, with the
/// derivative order the caller vouches for.
pub struct CustomFn {
    pub name: String,
    pub order: u32,
    pub f: Box<dyn Fn(&[Jet; 3]) -> Jet + Send + Sync>,
}

/// A coefficient c(x): exact polynomial, registered function, or an expression in those.
#[derive(Clone)]
pub enum Coefficient {
    Const(f64),
    Poly(Polynomial),
    Named { name: String, params: Vec<f64> },
    Custom(Arc<CustomFn>),
    Sum(Vec<(f64, Coefficient)>),
    Prod(Box<Coefficient>, Box<Coefficient>),
    /// X^β applied to the inner coefficient.
    Deriv(MultiIndex, Box<Coefficient>),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(v) => write!(f, "{v}"),
            Coefficient::Poly(p) => write!(f, "({p})"),
            Coefficient::Named { name, params } => write!(f, "{name}{params:?}"),
            Coefficient::Custom(c) => write!(f, "{}", c.name),
            Coefficient::Sum(v) => {
                let parts: Vec<String> = v.iter().map(|(k, c)| format!("{k}*{c:?}")).collect();
                write!(f, "({})", parts.join(" + "))
            }
            Coefficient::Prod(a, b) => write!(f, "{a:?}*{b:?}"),
            Coefficient::Deriv(b, c) => write!(f, "X^{b:?}[{c:?}]"),
        }
    }
}

impl Coefficient {
    pub fn named(name: &str, params: &[f64]) -> Result<Self> {
        let (_, n, _) = REGISTERED
            .iter()
            .find(|(k, _, _)| *k == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown coefficient function '{name}'")))?;
        if params.len() != *n {
            return Err(Error::InvalidArgument(format!("coefficient '{name}' takes {n} parameters, got {}", params.len())));
        }
        Ok(Coefficient::Named { name: name.into(), params: params.to_vec() })
    }

    pub fn custom(name: &str, order: u32, f: impl Fn(&[Jet; 3]) -> Jet + Send + Sync + 'static) -> Self {
        Coefficient::Custom(Arc::new(CustomFn { name: name.into(), order, f: Box::new(f) }))
    }

    /// Left-derivative order the coefficient supports (u32::MAX when unlimited).
    pub fn derivative_order(&self) -> u32 {
        match self {
            Coefficient::Const(_) | Coefficient::Poly(_) | Coefficient::Named { .. } => u32::MAX,
            Coefficient::Custom(c) => c.order,
            Coefficient::Sum(v) => v.iter().map(|(_, c)| c.derivative_order()).min().unwrap_or(u32::MAX),
            Coefficient::Prod(a, b) => a.derivative_order().min(b.derivative_order()),
            Coefficient::Deriv(b, c) => c.derivative_order().saturating_sub(degree(b)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Const(v) => *v == 0.0,
            Coefficient::Poly(p) => p.is_zero(),
            Coefficient::Sum(v) => v.iter().all(|(k, c)| *k == 0.0 || c.is_zero()),
            Coefficient::Prod(a, b) => a.is_zero() || b.is_zero(),
            Coefficient::Deriv(_, c) => c.is_zero(),
            _ => false,
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        match self {
            Coefficient::Const(v) => Coefficient::Const(k * v),
            Coefficient::Poly(p) => match Q::from_float(k) {
                Some(q) => Coefficient::Poly(p.scale(&q)),
                None => Coefficient::Sum(vec![(k, Coefficient::Poly(p))]),
            },
            other => Coefficient::Sum(vec![(k, other)]),
        }
    }

    pub fn times(self, o: Coefficient) -> Self {
        match (self, o) {
            (Coefficient::Const(a), Coefficient::Const(b)) => Coefficient::Const(a * b),
            (Coefficient::Const(a), x) | (x, Coefficient::Const(a)) => x.scaled(a),
            (Coefficient::Poly(a), Coefficient::Poly(b)) => Coefficient::Poly(a.mul(&b)),
            (a, b) => Coefficient::Prod(Box::new(a), Box::new(b)),
        }
    }

    pub fn derive(self, b: MultiIndex) -> Self {
        if b == [0, 0, 0] {
            return self;
        }
        match self {
            Coefficient::Const(_) => Coefficient::Const(0.0),
            Coefficient::Poly(p) => Coefficient::Poly(Fields::heisenberg().apply_monomial(&b, &p)),
            other => Coefficient::Deriv(b, Box::new(other)),
        }
    }

    pub fn as_poly(&self) -> Option<Polynomial> {
        match self {
            Coefficient::Poly(p) => Some(p.clone()),
            Coefficient::Const(v) if *v == 0.0 => Some(Polynomial::zero()),
            _ => None,
        }
    }

    /// (X^γ c)(x) for [γ] ≤ order.
    pub fn left_jet(&self, x: &[f64; 3], order: u32) -> Result<LeftJet> {
        if order > self.derivative_order() {
            return Err(Error::DerivativeOrder { have: self.derivative_order(), need: order });
        }
        Ok(self.left_jet_unchecked(x, order))
    }

    fn left_jet_unchecked(&self, x: &[f64; 3], order: u32) -> LeftJet {
        match self {
            Coefficient::Const(v) => LeftJet::constant(order, *v),
            Coefficient::Poly(_) | Coefficient::Named { .. } | Coefficient::Custom(_) => {
                let k = order as usize;
                // c(x·y) as a jet in y: x·y = (x_p + y_p, x_q + y_q, x_t + y_t + (x_p y_q − x_q y_p)/2)
                let yp = Jet::variable(3, k, 0, 0.0);
                let yq = Jet::variable(3, k, 1, 0.0);
                let yt = Jet::variable(3, k, 2, 0.0);
                let vars = [
                    yp.add_const(x[0]),
                    yq.add_const(x[1]),
                    yt.add(&yq.scale(0.5 * x[0])).sub(&yp.scale(0.5 * x[1])).add_const(x[2]),
                ];
                let jet = match self {
                    Coefficient::Poly(p) => poly_jet(p, &vars),
                    Coefficient::Named { name, params } => named_jet(name, params, &vars),
                    Coefficient::Custom(c) => (c.f)(&vars),
                    _ => unreachable!(),
                };
                let values = left_table(order)
                    .iter()
                    .map(|(g, row)| (*g, row.iter().map(|(i, w)| w * jet.c[*i]).sum()))
                    .collect();
                LeftJet { order, values }
            }
            Coefficient::Sum(v) => {
                let mut acc = LeftJet::constant(order, 0.0);
                for (k, cf) in v {
                    let j = cf.left_jet_unchecked(x, order);
                    acc = acc.zip(&j, |a, b| a + k * b);
                }
                acc
            }
            Coefficient::Prod(a, b) => a.left_jet_unchecked(x, order).mul(&b.left_jet_unchecked(x, order)),
            Coefficient::Deriv(b, cf) => {
                let inner = cf.left_jet_unchecked(x, order + degree(b));
                let values = indices_up_to(order)
                    .into_iter()
                    .map(|g| (g, word_product(&g, b).iter().map(|(d, k)| k * inner.get(d)).sum()))
                    .collect();
                LeftJet { order, values }
            }
        }
    }

    pub fn value(&self, x: &[f64; 3]) -> f64 {
        self.left_jet_unchecked(x, 0).value()
    }
}

fn poly_jet(p: &Polynomial, v: &[Jet; 3]) -> Jet {
    let k = v[0].order;
    let mut acc = Jet::constant(3, k, 0.0);
    for (m, cf) in &p.terms {
        let mut t = Jet::constant(3, k, cf.to_f64());
        for (j, &e) in m.iter().enumerate() {
            for _ in 0..e {
                t = t.mul(&v[j]);
            }
        }
        acc = acc.add(&t);
    }
    acc
}

// ---------------------------------------------------------------------------
// Matrix-valued jets.

/// X^γ M(x) for [γ] ≤ order, with M a matrix-valued function of x.
#[derive(Debug, Clone)]
pub struct MatJet {
    pub order: u32,
    pub m: BTreeMap<MultiIndex, CMat>,
}

impl MatJet {
    pub fn constant(order: u32, v: CMat) -> Self {
        let n = v.nrows();
        let mut m: BTreeMap<MultiIndex, CMat> = indices_up_to(order).into_iter().map(|g| (g, CMat::zeros(n, n))).collect();
        m.insert([0, 0, 0], v);
        MatJet { order, m }
    }

    pub fn value(&self) -> &CMat {
        &self.m[&[0, 0, 0]]
    }

    pub fn dim(&self) -> usize {
        self.value().nrows()
    }

    pub fn truncate(&self, order: u32) -> Self {
        let order = order.min(self.order);
        MatJet { order, m: self.m.iter().filter(|(g, _)| degree(g) <= order).map(|(g, v)| (*g, v.clone())).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        let order = self.order.min(o.order);
        MatJet { order, m: indices_up_to(order).into_iter().map(|g| (g, &self.m[&g] + &o.m[&g])).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(c(-1.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        MatJet { order: self.order, m: self.m.iter().map(|(g, v)| (*g, v * s)).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let order = self.order.min(o.order);
        let n = self.dim();
        let mut m = BTreeMap::new();
        for g in indices_up_to(order) {
            let mut acc = CMat::zeros(n, n);
            for s in sub_indices(&g) {
                let r = [g[0] - s[0], g[1] - s[1], g[2] - s[2]];
                acc += (&self.m[&s] * &o.m[&r]) * c(binom_f(&g, &s));
            }
            m.insert(g, acc);
        }
        MatJet { order, m }
    }

    /// Jet of M^{−1} from the jet of M, given M(x)^{−1}.
    pub fn inverse_with(&self, inv0: CMat) -> Self {
        let n = self.dim();
        let mut m: BTreeMap<MultiIndex, CMat> = BTreeMap::new();
        m.insert([0, 0, 0], inv0.clone());
        for g in indices_up_to(self.order).into_iter().skip(1) {
            // Σ_{s≤γ} C(γ,s) R_s A_{γ−s} = 0
            let mut acc = CMat::zeros(n, n);
            for s in sub_indices(&g) {
                if s == g {
                    continue;
                }
                let r = [g[0] - s[0], g[1] - s[1], g[2] - s[2]];
                acc += (&m[&s] * &self.m[&r]) * c(binom_f(&g, &s));
            }
            m.insert(g, -(acc * &inv0));
        }
        MatJet { order: self.order, m }
    }

    /// Jet of X^α M, of order self.order − [α].
    pub fn left_derivative(&self, a: &MultiIndex) -> Result<Self> {
        let d = degree(a);
        if d > self.order {
            return Err(Error::DerivativeOrder { have: self.order, need: d });
        }
        let order = self.order - d;
        let n = self.dim();
        let m = indices_up_to(order)
            .into_iter()
            .map(|g| {
                let mut acc = CMat::zeros(n, n);
                for (dd, k) in word_product(&g, a).iter() {
                    acc += &self.m[dd] * c(*k);
                }
                (g, acc)
            })
            .collect();
        Ok(MatJet { order, m })
    }
}

// ---------------------------------------------------------------------------
// Symbols with general coefficients.

/// Σ_β c_β(x) X̂^β with declared order m.
#[derive(Debug, Clone)]
pub struct DifferentialSymbol {
    pub terms: BTreeMap<MultiIndex, Coefficient>,
    pub order: u32,
}

/// σ(x, π_λ) on the certified interior block.
#[derive(Debug, Clone)]
pub struct SymbolSample {
    pub x: [f64; 3],
    pub lambda: f64,
    pub matrix: CMat,
    pub n: usize,
    pub guard: usize,
    pub label: String,
}

impl SymbolSample {
    pub fn hermitian_defect(&self) -> f64 {
        crate::rep::hermitian_defect(&self.matrix)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.matrix).0.first().copied().unwrap_or(0.0)
    }

    /// Checks Hermitian and PSD to `tol`.
    pub fn check_psd(&self, tol: f64) -> Result<()> {
        let d = self.hermitian_defect();
        if d > tol {
            return Err(Error::NotHermitian(d));
        }
        let lo = self.min_eigenvalue();
        if lo < -tol {
            return Err(Error::NotPsd(lo));
        }
        Ok(())
    }
}

impl DifferentialSymbol {
    pub fn zero() -> Self {
        DifferentialSymbol { terms: BTreeMap::new(), order: 0 }
    }

    pub fn identity() -> Self {
        Self::term([0, 0, 0], Coefficient::Const(1.0))
    }

    pub fn term(b: MultiIndex, cf: Coefficient) -> Self {
        let mut s = Self::zero();
        s.add_term(b, cf);
        s
    }

    pub fn from_exact(op: &EnvelopingOperator) -> Self {
        let terms: BTreeMap<_, _> = op.terms.iter().map(|(b, cf)| (*b, Coefficient::Poly(cf.clone()))).collect();
        DifferentialSymbol { order: op.order(), terms }
    }

    /// The exact form, when every coefficient is a polynomial.
    pub fn to_exact(&self) -> Option<EnvelopingOperator> {
        let mut r = EnvelopingOperator::zero();
        for (b, cf) in &self.terms {
            r.add_term(*b, &cf.as_poly()?);
        }
        Some(r)
    }

    pub fn with_order(mut self, m: u32) -> Result<Self> {
        let need = self.terms.keys().map(degree).max().unwrap_or(0);
        if m < need {
            return Err(Error::InvalidArgument(format!("declared order {m} is below the top term degree {need}")));
        }
        self.order = m;
        Ok(self)
    }

    pub fn add_term(&mut self, b: MultiIndex, cf: Coefficient) {
        if cf.is_zero() {
            return;
        }
        let merged = match self.terms.remove(&b) {
            None => cf,
            Some(Coefficient::Poly(p)) if matches!(cf, Coefficient::Poly(_)) => {
                Coefficient::Poly(p.add(&cf.as_poly().unwrap()))
            }
            Some(Coefficient::Sum(mut v)) => {
                v.push((1.0, cf));
                Coefficient::Sum(v)
            }
            Some(old) => Coefficient::Sum(vec![(1.0, old), (1.0, cf)]),
        };
        if !merged.is_zero() {
            self.terms.insert(b, merged);
        }
        self.order = self.order.max(degree(&b));
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (b, cf) in &o.terms {
            r.add_term(*b, cf.clone());
        }
        r.order = self.order.max(o.order);
        r
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut r = Self::zero();
        for (b, cf) in &self.terms {
            r.add_term(*b, cf.clone().scaled(k));
        }
        r.order = self.order;
        r
    }

    pub fn max_length(&self) -> u32 {
        self.terms.keys().map(length).max().unwrap_or(0)
    }

    /// Smallest declared derivative order among the coefficients.
    pub fn derivative_order(&self) -> u32 {
        self.terms.values().map(Coefficient::derivative_order).min().unwrap_or(u32::MAX)
    }

    /// σ^{(ε)}: each β-term scaled by ε^{[β]}.
    pub fn dilate(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("dilation parameter ε = {eps} outside (0, 1]")));
        }
        if let Some(op) = self.to_exact() {
            // keep exact coefficients exact when ε is a dyadic rational
            if let Some(q) = dyadic(eps) {
                let mut r = Self::from_exact(&dilate_exact(&op, &q));
                r.order = self.order;
                return Ok(r);
            }
        }
        let mut r = Self::zero();
        for (b, cf) in &self.terms {
            r.add_term(*b, cf.clone().scaled(eps.powi(degree(b) as i32)));
        }
        r.order = self.order;
        Ok(r)
    }

    /// X^γ σ (coefficients differentiated).
    pub fn left_derivative(&self, g: &MultiIndex) -> Self {
        let mut r = Self::zero();
        for (b, cf) in &self.terms {
            r.add_term(*b, cf.clone().derive(*g));
        }
        r.order = self.order;
        r
    }

    /// Δ^α σ; lowers the order by [α].
    pub fn difference(&self, sym: &Symbolic, a: &MultiIndex) -> Result<Self> {
        let mut r = Self::zero();
        for (b, cf) in &self.terms {
            for (g, k) in sym.difference_structure_constants(a, b)?.terms {
                r.add_term(g, cf.clone().scaled(k.to_f64()));
            }
        }
        r.order = self.order.saturating_sub(degree(a));
        Ok(r)
    }

    /// Op(self) ∘ Op(o), by commuting X^β past the coefficients of o.
    pub fn compose(&self, fields: &Fields, o: &Self) -> Result<Self> {
        if let (Some(a), Some(b)) = (self.to_exact(), o.to_exact()) {
            let mut r = Self::from_exact(&a.compose(fields, &b));
            r.order = self.order + o.order;
            return Ok(r);
        }
        let need = self.terms.keys().map(degree).max().unwrap_or(0);
        let have = o.derivative_order();
        if have < need {
            return Err(Error::DerivativeOrder { have, need });
        }
        let mut r = Self::zero();
        for (b, c1) in &self.terms {
            for (g, c2) in &o.terms {
                // c1 X^β ∘ c2 X^γ = Σ_{s≤β} C(β,s) c1 (X^s c2) X^{β−s} X^γ
                for s in sub_indices(b) {
                    let rest = [b[0] - s[0], b[1] - s[1], b[2] - s[2]];
                    let cf = c1.clone().times(c2.clone().derive(s)).scaled(binom_f(b, &s));
                    for (d, k) in fields.pbw_product(&rest, g) {
                        r.add_term(d, cf.clone().scaled(k.to_f64()));
                    }
                }
            }
        }
        r.order = self.order + o.order;
        Ok(r)
    }

    /// Pointwise product σ₁(x, π) σ₂(x, π).
    pub fn pointwise_product(&self, fields: &Fields, o: &Self) -> Self {
        let mut r = Self::zero();
        for (b, c1) in &self.terms {
            for (g, c2) in &o.terms {
                let cf = c1.clone().times(c2.clone());
                for (d, k) in fields.pbw_product(b, g) {
                    r.add_term(d, cf.clone().scaled(k.to_f64()));
                }
            }
        }
        r.order = self.order + o.order;
        r
    }

    /// Σ_β c_β(x) π_λ(X)^β on the certified block.
    pub fn evaluate(&self, x: &GroupElement<f64>, slice: &RepresentationSlice) -> Result<SymbolSample> {
        let xs = x.coords();
        let mut m = CMat::zeros(slice.n, slice.n);
        for (b, cf) in &self.terms {
            m += slice.monomial_matrix(b)? * c(cf.value(&xs));
        }
        Ok(SymbolSample { x: xs, lambda: slice.lambda, matrix: m, n: slice.n, guard: slice.guard, label: String::new() })
    }

    /// Jet of x ↦ σ(x, π_λ), order k.
    pub fn jet(&self, x: &[f64; 3], slice: &RepresentationSlice, k: u32) -> Result<MatJet> {
        let mut jet = MatJet::constant(k, CMat::zeros(slice.n, slice.n));
        for (b, cf) in &self.terms {
            let mb = slice.monomial_matrix(b)?;
            let lj = cf.left_jet(x, k)?;
            for (g, v) in jet.m.iter_mut() {
                let d = lj.get(g);
                if d != 0.0 {
                    *v += &mb * c(d);
                }
            }
        }
        Ok(jet)
    }
}

/// ε as an exact rational when it is k / 2^j.
fn dyadic(eps: f64) -> Option<Q> {
    for j in 0..40 {
        let s = eps * (1u64 << j) as f64;
        if s.fract() == 0.0 {
            return Some(q_frac(s as i64, 1i64 << j));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Divergence-form sub-Laplacians.

/// Symmetric coefficient matrix A(x) and potential V(x) of L_A = −Σ X_i a_ij X_j + V.
#[derive(Debug, Clone)]
pub struct DivergenceForm {
    pub a11: Coefficient,
    pub a12: Coefficient,
    pub a22: Coefficient,
    pub v: Coefficient,
}

impl DivergenceForm {
    pub fn constant(a: [[f64; 2]; 2], v: f64) -> Self {
        DivergenceForm {
            a11: Coefficient::Const(a[0][0]),
            a12: Coefficient::Const(0.5 * (a[0][1] + a[1][0])),
            a22: Coefficient::Const(a[1][1]),
            v: Coefficient::Const(v),
        }
    }

    /// Variable-coefficient test family: A(x) uniformly positive, periodic in each coordinate.
    pub fn test_family() -> Self {
        DivergenceForm {
            a11: Coefficient::named("cos", &[1.0, 0.3, 1.0, 0.0, 0.0]).unwrap(),
            a12: Coefficient::named("sin", &[0.0, 0.2, 0.0, 1.0, 0.0]).unwrap(),
            a22: Coefficient::named("cos", &[1.0, 0.25, 0.0, 0.0, 1.0]).unwrap(),
            v: Coefficient::named("cos", &[0.5, 0.5, 1.0, 1.0, 0.0]).unwrap(),
        }
    }

    fn entry(&self, i: usize, j: usize) -> &Coefficient {
        match (i, j) {
            (0, 0) => &self.a11,
            (1, 1) => &self.a22,
            _ => &self.a12,
        }
    }

    /// (σ₀, σ₁) with ε²L_A + V = Op^{(ε)}(σ₀ + ε σ₁):
    /// σ₀ = −Σ a_ij X̂_i X̂_j + V, σ₁ = −Σ (X_i a_ij) X̂_j.
    pub fn symbols(&self, fields: &Fields) -> (DifferentialSymbol, DifferentialSymbol) {
        let mut s0 = DifferentialSymbol::term([0, 0, 0], self.v.clone());
        let mut s1 = DifferentialSymbol::zero();
        for i in 0..2 {
            for j in 0..2 {
                let a = self.entry(i, j).clone();
                for (b, k) in fields.normalize_word(&[i as u8, j as u8]) {
                    s0.add_term(b, a.clone().scaled(-k.to_f64()));
                }
                let mut ei = [0u32; 3];
                ei[i] = 1;
                let mut ej = [0u32; 3];
                ej[j] = 1;
                s1.add_term(ej, a.derive(ei).scaled(-1.0));
            }
        }
        s0.order = 2;
        s1.order = 1;
        (s0, s1)
    }
}

// ---------------------------------------------------------------------------
// Seminorm estimates.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub x: [f64; 3],
    pub lambda: f64,
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub gamma: i32,
}

/// Operator norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// sup over samples of ‖W^{([α]+γ−m)/2} X^β Δ^α σ W^{−γ/2}‖, W = I + π_λ(L),
/// for [α] ≤ a, [β] ≤ b, |γ| ≤ c. A lower bound for the true seminorm.
#[allow(clippy::too_many_arguments)]
pub fn seminorm_estimate(
    sym: &Symbolic,
    s: &DifferentialSymbol,
    m: f64,
    a: u32,
    b: u32,
    cc: u32,
    samples: &[([f64; 3], f64)],
    n: usize,
) -> Result<SeminormEstimate> {
    if a > sym.cap() {
        return Err(Error::DegreeCap { requested: a, cap: sym.cap() });
    }
    let guard = 2 * s.max_length() as usize + 2;
    let mut best = SeminormEstimate { value: 0.0, x: [0.0; 3], lambda: 0.0, alpha: [0; 3], beta: [0; 3], gamma: 0 };
    let diffs: Vec<(MultiIndex, DifferentialSymbol)> =
        indices_up_to(a).into_iter().map(|al| Ok((al, s.difference(sym, &al)?))).collect::<Result<_>>()?;
    for (x, lambda) in samples {
        let slice = RepresentationSlice::new(*lambda, n, guard)?;
        let l = slice.sublaplacian();
        let w = |p: f64| hermitian_function(&l, |v| (1.0 + v).powf(p));
        for (al, d) in &diffs {
            let jet = d.jet(x, &slice, b)?;
            for be in indices_up_to(b) {
                let core = &jet.m[&be];
                for g in -(cc as i32)..=(cc as i32) {
                    let left = w((degree(al) as f64 + g as f64 - m) / 2.0);
                    let right = w(-(g as f64) / 2.0);
                    let v = op_norm(&(left * core * right));
                    if v > best.value {
                        best = SeminormEstimate { value: v, x: *x, lambda: *lambda, alpha: *al, beta: be, gamma: g };
                    }
                }
            }
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Structured-text form.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialSpec {
    pub exp: Monomial,
    /// Rational as "n" or "n/d".
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CoefficientSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<MonomialSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub beta: MultiIndex,
    pub coeff: CoefficientSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SymbolSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default)]
    pub term: Vec<TermSpec>,
}

fn parse_q(s: &str) -> Result<Q> {
    let bad = || Error::Config(format!("'{s}' is not a rational number"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(q_frac(n, d))
        }
        None => Ok(q_int(s.trim().parse().map_err(|_| bad())?)),
    }
}

impl CoefficientSpec {
    pub fn to_coefficient(&self) -> Result<Coefficient> {
        match (self.constant, &self.poly, &self.function) {
            (Some(v), None, None) => Ok(Coefficient::Const(v)),
            (None, Some(p), None) => {
                let mut r = Polynomial::zero();
                for m in p {
                    r = r.add(&Polynomial::monomial(m.exp, parse_q(&m.value)?));
                }
                Ok(Coefficient::Poly(r))
            }
            (None, None, Some(f)) => Coefficient::named(f, self.params.as_deref().unwrap_or(&[])),
            _ => Err(Error::Config("a coefficient needs exactly one of 'constant', 'poly', 'function'".into())),
        }
    }

    pub fn from_coefficient(cf: &Coefficient) -> Result<Self> {
        match cf {
            Coefficient::Const(v) => Ok(CoefficientSpec { constant: Some(*v), ..Default::default() }),
            Coefficient::Poly(p) => Ok(CoefficientSpec {
                poly: Some(p.terms.iter().map(|(m, v)| MonomialSpec { exp: *m, value: v.to_string() }).collect()),
                ..Default::default()
            }),
            Coefficient::Named { name, params } => {
                Ok(CoefficientSpec { function: Some(name.clone()), params: Some(params.clone()), ..Default::default() })
            }
            other => Err(Error::Config(format!("coefficient {other:?} has no structured-text form"))),
        }
    }
}

impl SymbolSpec {
    pub fn to_symbol(&self) -> Result<DifferentialSymbol> {
        let mut s = DifferentialSymbol::zero();
        for t in &self.term {
            s.add_term(t.beta, t.coeff.to_coefficient()?);
        }
        match self.order {
            Some(m) => s.with_order(m),
            None => Ok(s),
        }
    }

    pub fn from_symbol(s: &DifferentialSymbol) -> Result<Self> {
        let term = s
            .terms
            .iter()
            .map(|(b, cf)| Ok(TermSpec { beta: *b, coeff: CoefficientSpec::from_coefficient(cf)? }))
            .collect::<Result<_>>()?;
        Ok(SymbolSpec { order: Some(s.order), term })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{composite, GaussLegendre};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym() -> Symbolic {
        Symbolic::heisenberg()
    }

    fn xhat() -> EnvelopingOperator {
        EnvelopingOperator::term([1, 0, 0], Polynomial::one())
    }

    fn yhat() -> EnvelopingOperator {
        EnvelopingOperator::term([0, 1, 0], Polynomial::one())
    }

    fn p() -> Polynomial {
        Polynomial::coordinate(0)
    }

    #[test]
    fn bracket_and_identity() {
        let f = Fields::heisenberg();
        let s = random_exact_symbol(&mut ChaCha8Rng::seed_from_u64(1), 2, 2);
        assert_eq!(EnvelopingOperator::identity().compose(&f, &s), s);
        let comm = xhat().compose(&f, &yhat()).sub(&yhat().compose(&f, &xhat()));
        assert_eq!(comm, EnvelopingOperator::term([0, 0, 1], Polynomial::one()));
    }

    #[test]
    fn composition_expansion_exact() {
        let s = sym();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_exact_symbol(&mut rng, 2, 3);
            let b = random_exact_symbol(&mut rng, 2, 3);
            let terms = semiclassical_composition_terms(&s, &a, &b, 2).unwrap();
            let oracle = semiclassical_product_oracle(&s.fields, &a, &b).unwrap();
            assert_eq!(EpsSymbol::from_series(&terms), oracle);
        }
    }

    #[test]
    fn composition_first_order_commutator() {
        // X̂ ⋄ f: the ε-term is (X f)
        let s = sym();
        let f = p().mul(&Polynomial::coordinate(1)).add(&Polynomial::coordinate(2));
        let fo = EnvelopingOperator::term([0, 0, 0], f.clone());
        let terms = semiclassical_composition_terms(&s, &xhat(), &fo, 2).unwrap();
        assert_eq!(terms[0], EnvelopingOperator::term([1, 0, 0], f.clone()));
        assert_eq!(terms[1], EnvelopingOperator::term([0, 0, 0], s.fields.apply_letter(0, &f)));
        assert!(terms[2].is_zero());
        // invariant order-0 left factor: only α = 0
        let k = EnvelopingOperator::term([0, 0, 0], Polynomial::constant(q_int(3)));
        let t = semiclassical_composition_terms(&s, &k, &fo, 3).unwrap();
        assert!(t[1..].iter().all(|x| x.is_zero()));
    }

    #[test]
    fn adjoint_expansion_exact() {
        let s = sym();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_exact_symbol(&mut rng, 2, 3);
            let terms = adjoint_terms(&s, &a, 2).unwrap();
            assert_eq!(EpsSymbol::from_series(&terms), semiclassical_adjoint_oracle(&s.fields, &a).unwrap());
        }
        // X̂* = −X̂; real multiplier is self-adjoint
        let t = adjoint_terms(&s, &xhat(), 2).unwrap();
        assert_eq!(t[0], xhat().scale(&-Q::one()));
        let f = EnvelopingOperator::term([0, 0, 0], p().mul(&p()));
        assert_eq!(EpsSymbol::from_series(&adjoint_terms(&s, &f, 2).unwrap()), EpsSymbol::dilated(&f));
    }

    #[test]
    fn dilation_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_exact_symbol(&mut rng, 3, 2);
        let (e1, e2) = (q_frac(1, 3), q_frac(5, 7));
        assert_eq!(dilate_exact(&dilate_exact(&s, &e2), &e1), dilate_exact(&s, &(e1 * e2)));
        assert_eq!(dilate_exact(&xhat(), &q_frac(1, 2)), xhat().scale(&q_frac(1, 2)));
    }

    #[test]
    fn dilated_evaluation_matches_rescaled_slice() {
        // σ(x, ε·π_λ) = σ(x, π_{ε²λ}) in the Hermite model
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = DifferentialSymbol::from_exact(&random_exact_symbol(&mut rng, 3, 2));
        for (eps, lambda) in [(0.5, 1.3), (0.25, -2.0), (0.8, 0.7)] {
            let x = GroupElement::new(0.3, -0.2, 0.7);
            let a = s.dilate(eps).unwrap().evaluate(&x, &RepresentationSlice::new(lambda, 12, 8).unwrap()).unwrap();
            let b = s.evaluate(&x, &RepresentationSlice::new(eps * eps * lambda, 12, 8).unwrap()).unwrap();
            assert!(crate::rep::max_abs(&(a.matrix - b.matrix)) < 1e-10);
        }
    }

    #[test]
    fn left_jets_match_exact_derivatives() {
        let f = Fields::heisenberg();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let poly = crate::poly::tests::random_poly(&mut rng, 4);
        let cf = Coefficient::Poly(poly.clone());
        let x = [0.4, -1.1, 0.3];
        let jet = cf.left_jet(&x, 4).unwrap();
        for g in indices_up_to(4) {
            let exact = f.apply_monomial(&g, &poly).eval_f64(&x);
            assert!((jet.get(&g) - exact).abs() < 1e-9 * (1.0 + exact.abs()), "{g:?}");
        }
        // Deriv and Prod against exact algebra
        let q2 = crate::poly::tests::random_poly(&mut rng, 3);
        let prod = Coefficient::Prod(Box::new(cf.clone()), Box::new(Coefficient::Poly(q2.clone())));
        let d = Coefficient::Deriv([0, 1, 0], Box::new(prod));
        let exact = f.apply_monomial(&[0, 1, 0], &poly.mul(&q2));
        let j = d.left_jet(&x, 2).unwrap();
        for g in indices_up_to(2) {
            let e = f.apply_monomial(&g, &exact).eval_f64(&x);
            assert!((j.get(&g) - e).abs() < 1e-8 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn named_jet_derivatives() {
        // X cos(2π p) = −2π sin(2π p); Y of it vanishes (no q dependence, ∂t = 0)
        let cf = Coefficient::named("cos", &[0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let x = [0.1, 0.2, 0.3];
        let j = cf.left_jet(&x, 2).unwrap();
        let tp = 2.0 * std::f64::consts::PI;
        assert!((j.get(&[1, 0, 0]) + tp * (tp * 0.1).sin()).abs() < 1e-12);
        assert!(j.get(&[0, 1, 0]).abs() < 1e-12);
        // t-dependence: X sin(2π t) = −(q/2)·2π cos(2π t)
        let st = Coefficient::named("sin", &[0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let j = st.left_jet(&x, 1).unwrap();
        assert!((j.get(&[1, 0, 0]) + 0.1 * tp * (tp * 0.3).cos()).abs() < 1e-12);
    }

    #[test]
    fn numeric_compose_matches_exact() {
        let f = Fields::heisenberg();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_exact_symbol(&mut rng, 2, 2);
        let b = random_exact_symbol(&mut rng, 2, 2);
        let exact = DifferentialSymbol::from_exact(&a.compose(&f, &b));
        // force the numeric path by wrapping coefficients
        let wrap = |op: &EnvelopingOperator| {
            let mut s = DifferentialSymbol::zero();
            for (b, cf) in &op.terms {
                s.add_term(*b, Coefficient::Sum(vec![(1.0, Coefficient::Poly(cf.clone()))]));
            }
            s
        };
        let num = wrap(&a).compose(&f, &wrap(&b)).unwrap();
        let slice = RepresentationSlice::new(0.9, 10, 10).unwrap();
        let x = GroupElement::new(-0.3, 0.5, 0.2);
        let d = exact.evaluate(&x, &slice).unwrap().matrix - num.evaluate(&x, &slice).unwrap().matrix;
        assert!(crate::rep::max_abs(&d) < 1e-9);
    }

    #[test]
    fn composition_acts_like_operators() {
        // (p X̂)∘(p Ŷ) applied to random polynomials equals the two applications in turn
        let f = Fields::heisenberg();
        let a = EnvelopingOperator::term([1, 0, 0], p());
        let b = EnvelopingOperator::term([0, 1, 0], p());
        let comp = a.compose(&f, &b);
        assert!(comp.terms.contains_key(&[0, 1, 0]));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let u = crate::poly::tests::random_poly(&mut rng, 4);
            assert_eq!(comp.apply(&f, &u), a.apply(&f, &b.apply(&f, &u)));
        }
    }

    #[test]
    fn divergence_form_symbols_match_exact_composition() {
        // polynomial A: −Σ X_i ∘ a_ij ∘ X_j = Op(σ₀ + σ₁) with V = 0
        let f = Fields::heisenberg();
        let a11 = Polynomial::one().add(&p().mul(&p()));
        let a12 = Polynomial::coordinate(1).scale(&q_frac(1, 2));
        let a22 = Polynomial::constant(q_int(2)).add(&Polynomial::coordinate(2));
        let form = DivergenceForm {
            a11: Coefficient::Poly(a11.clone()),
            a12: Coefficient::Poly(a12.clone()),
            a22: Coefficient::Poly(a22.clone()),
            v: Coefficient::Const(0.0),
        };
        let (s0, s1) = form.symbols(&f);
        let lhs = s0.add(&s1).to_exact().unwrap();
        let mut rhs = EnvelopingOperator::zero();
        let entries = [[&a11, &a12], [&a12, &a22]];
        for i in 0..2 {
            for j in 0..2 {
                let mut ei = [0; 3];
                ei[i] = 1;
                let mut ej = [0; 3];
                ej[j] = 1;
                let xi = EnvelopingOperator::term(ei, Polynomial::one());
                let mid = EnvelopingOperator::term(ej, entries[i][j].clone());
                rhs = rhs.sub(&xi.compose(&f, &mid));
            }
        }
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn principal_symbol_is_psd() {
        let f = Fields::heisenberg();
        let (s0, _) = DivergenceForm::test_family().symbols(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = GroupElement::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let lambda = rng.random_range(0.2..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let sm = s0.evaluate(&x, &RepresentationSlice::new(lambda, 16, 6).unwrap()).unwrap();
            sm.check_psd(1e-10).unwrap();
        }
        // diagonal A: −(a A_X² + b A_Y²)
        let form = DivergenceForm::constant([[2.0, 0.0], [0.0, 3.0]], 0.0);
        let (s0, _) = form.symbols(&f);
        let sl = RepresentationSlice::new(1.5, 10, 6).unwrap();
        let m = s0.evaluate(&GroupElement::identity(), &sl).unwrap().matrix;
        let ax2 = sl.monomial_matrix(&[2, 0, 0]).unwrap();
        let ay2 = sl.monomial_matrix(&[0, 2, 0]).unwrap();
        assert!(crate::rep::max_abs(&(m + ax2 * c(2.0) + ay2 * c(3.0))) < 1e-12);
    }

    #[test]
    fn adjoint_by_integration_by_parts() {
        // σ = f X̂: ⟨f X u, v⟩ = ⟨u, (−f X − X f) v⟩ by 3-D quadrature
        let f = Coefficient::named("cos", &[1.0, 0.5, 0.3, 0.2, 0.1]).unwrap();
        let u = Coefficient::named("gauss", &[0.0, 1.0, 0.7]).unwrap();
        let v = Coefficient::Prod(
            Box::new(Coefficient::named("gauss", &[0.0, 1.0, 0.9]).unwrap()),
            Box::new(Coefficient::named("linear", &[1.0, 0.4, -0.3, 0.2]).unwrap()),
        );
        let s = sym();
        let sig = EnvelopingOperator::term([1, 0, 0], Polynomial::one());
        let adj = adjoint_terms(&s, &sig, 1).unwrap();
        assert_eq!(adj[0], sig.scale(&-Q::one()));
        let breaks: Vec<f64> = (0..=8).map(|k| -6.0 + 1.5 * k as f64).collect();
        let nodes = composite(&GaussLegendre::new(10), &breaks);
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for &(x0, w0) in &nodes {
            for &(x1, w1) in &nodes {
                for &(x2, w2) in &nodes {
                    let x = [x0, x1, x2];
                    let w = w0 * w1 * w2;
                    let ju = u.left_jet(&x, 1).unwrap();
                    let jv = v.left_jet(&x, 1).unwrap();
                    let jf = f.left_jet(&x, 1).unwrap();
                    lhs += w * jf.value() * ju.get(&[1, 0, 0]) * jv.value();
                    rhs += w * ju.value() * (-jf.value() * jv.get(&[1, 0, 0]) - jf.get(&[1, 0, 0]) * jv.value());
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "{lhs} {rhs}");
    }

    #[test]
    fn seminorms() {
        let s = sym();
        let samples: Vec<([f64; 3], f64)> = vec![([0.0; 3], 1.0)];
        let z = seminorm_estimate(&s, &DifferentialSymbol::zero(), 0.0, 0, 0, 0, &samples, 8).unwrap();
        assert_eq!(z.value, 0.0);
        let id = seminorm_estimate(&s, &DifferentialSymbol::identity(), 0.0, 0, 0, 0, &samples, 8).unwrap();
        assert!((id.value - 1.0).abs() < 1e-12);
        let xs = DifferentialSymbol::from_exact(&xhat());
        let mut vals = Vec::new();
        for l in [1e-2, 1e-1, 1.0, 10.0, 100.0] {
            vals.push(seminorm_estimate(&s, &xs, 1.0, 1, 0, 1, &[([0.0; 3], l)], 24).unwrap().value);
        }
        assert!(vals.iter().all(|v| *v < 2.0), "{vals:?}");
    }

    #[test]
    fn spec_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = DifferentialSymbol::from_exact(&random_exact_symbol(&mut rng, 2, 3));
        let txt = SymbolSpec::from_symbol(&s).unwrap().to_toml().unwrap();
        let back = SymbolSpec::from_toml(&txt).unwrap().to_symbol().unwrap();
        assert_eq!(back.to_exact(), s.to_exact());
        let named = DifferentialSymbol::term([1, 0, 0], Coefficient::named("gauss", &[1.0, 2.0, 0.5]).unwrap());
        let txt = SymbolSpec::from_symbol(&named).unwrap().to_toml().unwrap();
        assert!(txt.contains("gauss"));
        assert!(Coefficient::named("nope", &[]).is_err());
    }
}
