//! Truncated Taylor series in one or three variables (forward-mode jets).

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

/// Monomial tables for (variable count, order).
struct Tables {
    /// exponents of each slot
    mons: Vec<Vec<u32>>,
    /// (i, j, k): slot i times slot j lands in slot k (total degree ≤ order)
    products: Vec<(usize, usize, usize)>,
}

thread_local! {
    static TABLES: RefCell<HashMap<(usize, usize), Rc<Tables>>> = RefCell::new(HashMap::new());
}

fn tables(nv: usize, order: usize) -> Rc<Tables> {
    TABLES.with(|t| {
        t.borrow_mut()
            .entry((nv, order))
            .or_insert_with(|| {
                let mut mons = Vec::new();
                for d in 0..=order as u32 {
                    push_degree(nv, d, &mut vec![], &mut mons);
                }
                let index: HashMap<Vec<u32>, usize> = mons.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
                let mut products = Vec::new();
                for (i, a) in mons.iter().enumerate() {
                    for (j, b) in mons.iter().enumerate() {
                        let s: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                        if let Some(&k) = index.get(&s) {
                            products.push((i, j, k));
                        }
                    }
                }
                Rc::new(Tables { mons, products })
            })
            .clone()
    })
}

fn push_degree(nv: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == nv {
        let mut m = prefix.clone();
        m.push(d);
        out.push(m);
        return;
    }
    for k in (0..=d).rev() {
        prefix.push(k);
        push_degree(nv, d - k, prefix, out);
        prefix.pop();
    }
}

/// Σ c_m u^m over monomials of total degree ≤ order.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub nv: usize,
    pub order: usize,
    pub c: Vec<f64>,
}

impl Jet {
    fn slots(nv: usize, order: usize) -> usize {
        if nv == 1 {
            order + 1
        } else {
            tables(nv, order).mons.len()
        }
    }

    pub fn constant(nv: usize, order: usize, v: f64) -> Self {
        let mut c = vec![0.0; Self::slots(nv, order)];
        c[0] = v;
        Jet { nv, order, c }
    }

    /// a + u_j.
    pub fn variable(nv: usize, order: usize, j: usize, a: f64) -> Self {
        let mut r = Self::constant(nv, order, a);
        if order >= 1 {
            r.c[1 + j] = 1.0;
        }
        r
    }

    /// Univariate a + u.
    pub fn var1(order: usize, a: f64) -> Self {
        Self::variable(1, order, 0, a)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Exponents of every slot.
    pub fn monomials(&self) -> Vec<Vec<u32>> {
        if self.nv == 1 {
            (0..=self.order as u32).map(|k| vec![k]).collect()
        } else {
            tables(self.nv, self.order).mons.clone()
        }
    }

    /// k-th derivative of a univariate jet.
    pub fn derivative(&self, k: usize) -> f64 {
        debug_assert_eq!(self.nv, 1);
        if k > self.order {
            return 0.0;
        }
        self.c[k] * (1..=k).map(|i| i as f64).product::<f64>()
    }

    pub fn scale(&self, s: f64) -> Self {
        Jet { nv: self.nv, order: self.order, c: self.c.iter().map(|x| x * s).collect() }
    }

    pub fn add_const(&self, s: f64) -> Self {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    pub fn add(&self, o: &Self) -> Self {
        Jet { nv: self.nv, order: self.order, c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Jet { nv: self.nv, order: self.order, c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut c = vec![0.0; self.c.len()];
        if self.nv == 1 {
            for i in 0..=self.order {
                if self.c[i] == 0.0 {
                    continue;
                }
                for j in 0..=self.order - i {
                    c[i + j] += self.c[i] * o.c[j];
                }
            }
        } else {
            for &(i, j, k) in &tables(self.nv, self.order).products {
                c[k] += self.c[i] * o.c[j];
            }
        }
        Jet { nv: self.nv, order: self.order, c }
    }

    /// f(self) given f^{(k)}(a), k = 0..=order, at a = self.value().
    pub fn compose(&self, derivs: &[f64]) -> Self {
        let mut u = self.clone();
        u.c[0] = 0.0;
        let mut r = Self::constant(self.nv, self.order, derivs[0]);
        let mut pw = Self::constant(self.nv, self.order, 1.0);
        let mut fact = 1.0;
        for (k, d) in derivs.iter().enumerate().take(self.order + 1).skip(1) {
            pw = pw.mul(&u);
            fact *= k as f64;
            r = r.add(&pw.scale(d / fact));
        }
        r
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose(&vec![e; self.order + 1])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let d: Vec<f64> = (0..=self.order).map(|k| [s, c, -s, -c][k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let d: Vec<f64> = (0..=self.order).map(|k| [c, -s, -c, s][k % 4]).collect();
        self.compose(&d)
    }

    /// self^r for real r (value must be positive unless r is a nonnegative integer).
    pub fn powf(&self, r: f64) -> Self {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut coef = 1.0;
        for k in 0..=self.order {
            d.push(if coef == 0.0 { 0.0 } else { coef * a.powf(r - k as f64) });
            coef *= r - k as f64;
        }
        self.compose(&d)
    }

    /// self^n for integer n (any nonzero value when n < 0).
    pub fn powi(&self, n: i32) -> Self {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut coef = 1.0;
        for k in 0..=self.order {
            d.push(if coef == 0.0 { 0.0 } else { coef * a.powi(n - k as i32) });
            coef *= (n - k as i32) as f64;
        }
        self.compose(&d)
    }

    pub fn recip(&self) -> Self {
        self.powi(-1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn univariate_derivatives() {
        // ψ(λ) = (1+λ²)^{−2}; ψ'(λ) = −4λ(1+λ²)^{−3}
        let x = Jet::var1(6, 0.7);
        let psi = x.mul(&x).add_const(1.0).powi(-2);
        assert!((psi.derivative(0) - (1.0f64 + 0.49).powi(-2)).abs() < 1e-15);
        assert!((psi.derivative(1) + 4.0 * 0.7 * (1.49f64).powi(-3)).abs() < 1e-14);
        let e = Jet::var1(8, 0.3).exp();
        for k in 0..=8 {
            assert!((e.derivative(k) - 0.3f64.exp()).abs() < 1e-13);
        }
        let s = Jet::var1(5, 1.1).sin();
        assert!((s.derivative(3) + 1.1f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn multivariate_product_rule() {
        let x = Jet::variable(3, 4, 0, 0.5);
        let y = Jet::variable(3, 4, 1, -0.2);
        let f = x.mul(&y).sin();
        // ∂x∂y sin(xy) = cos(xy) − xy sin(xy)
        let mons = f.monomials();
        let k = mons.iter().position(|m| m == &vec![1, 1, 0]).unwrap();
        let xy: f64 = -0.1;
        assert!((f.c[k] - (xy.cos() - xy * xy.sin())).abs() < 1e-14);
    }
}
