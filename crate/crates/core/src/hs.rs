//! Helffer–Sjöstrand functional calculus ψ(H) = (1/π) ∫ ∂̄ψ̃(z) (H − z)^{−1} dA(z).
//!
//! Each extension piece carries a node table (z, w·∂̄φ(z)/π) in its scaled
//! variable. Tables are built once and reused for every matrix and every
//! eigenvalue. The strip |Im z| < y_min is dropped after certifying, from the
//! decay of ∂̄φ, that it contributes less than a tenth of the tolerance.

use std::f64::consts::PI;

use serde::Serialize;

use crate::almost_analytic::{AlmostAnalyticExtension, Piece, CHI1};
use crate::error::{Error, Result};
use crate::quad::{geometric_breaks, GaussLegendre};
use crate::rep::{hermitian_defect, hermitian_eigen, max_abs, CMat, C64};
use crate::smooth::{plateau, plateau_derivs, smoothstep_knots};
use rustfft::FftPlanner;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HsParams {
    /// Gauss–Legendre nodes per x panel.
    pub n_gl: usize,
    /// Nodes per y panel.
    pub n_y: usize,
    /// Nodes per spline-knot panel of the χ₂ ramps.
    pub n_knot: usize,
    /// Ratio of consecutive y breakpoints below y = 1.
    pub y_ratio: f64,
    /// Absolute tolerance per piece for the dropped strip.
    pub tol: f64,
    /// First trial strip half-width (scaled variable).
    pub y_start: f64,
    pub max_halvings: u32,
}

impl Default for HsParams {
    fn default() -> Self {
        HsParams { n_gl: 20, n_y: 16, n_knot: 8, y_ratio: 1.25, tol: 1e-9, y_start: 0.1, max_halvings: 12 }
    }
}

/// Quadrature nodes of one piece: (x, y, w·∂̄φ(x+iy)/π).
#[derive(Debug, Clone)]
pub struct NodeTable {
    pub y_min: f64,
    pub strip_bound: f64,
    pub nodes: Vec<(f64, f64, C64)>,
}

/// Nodes (x, w_x, ∂̄φ(x + iy)) of one row. Ramp knot panels and the final partial
/// panel are summed directly; the interior uses lattice panels of width L/m.
fn row(p: &Piece, y: f64, par: &HsParams, planner: &mut FftPlanner<f64>) -> Result<Vec<(f64, f64, C64)>> {
    let c1 = plateau(y, CHI1.0, CHI1.1);
    let dc1 = plateau_derivs(y, CHI1.0, CHI1.1, 1)[1];
    if c1 == 0.0 && dc1 == 0.0 {
        return Ok(vec![]);
    }
    let gl = GaussLegendre::new(par.n_gl);
    let gk = GaussLegendre::new(par.n_knot);
    let (lk, hk) = p.window.knots();
    let mut out: Vec<(f64, f64, C64)> = Vec::new();
    let core_c = if c1 != 0.0 { p.core_coefs(y)? } else { vec![] };
    let tilde_c = [p.tilde_coefs(y)?];
    for ramp in [&lk, &hk] {
        let nodes: Vec<(f64, f64)> = ramp.windows(2).flat_map(|k| gk.on(k[0], k[1]).collect::<Vec<_>>()).collect();
        let xs: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let center = 0.5 * (ramp[0] + ramp[ramp.len() - 1]);
        let core = p.taylor_sum(&core_c, center, &xs);
        let tl = p.taylor_sum(&tilde_c, center, &xs);
        for (k, (x, w)) in nodes.iter().enumerate() {
            let (c2, dc2) = p.window.eval(*x);
            let d = core[k] * (c1 * c2) + tl[k] * (0.5 * dc2 * c1) + tl[k] * C64::new(0.0, 0.5 * dc1 * c2);
            out.push((*x, *w, d));
        }
    }
    let (a, b) = (lk[lk.len() - 1], hk[0]);
    let m = ((p.period / y.abs().min(0.5)).ceil() as usize).next_power_of_two();
    let h = p.period / m as f64;
    let panels = ((b - a) / h).floor() as usize;
    let tail = a + panels as f64 * h;
    if b - tail > 1e-12 {
        let nodes: Vec<(f64, f64)> = gl.on(tail, b).collect();
        let xs: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        out.extend(nodes.iter().zip(p.dbar_row(&xs, y)?).map(|(n, d)| (n.0, n.1, d)));
    }
    if panels > 0 {
        let offs: Vec<(f64, f64)> = gl.on(0.0, h).collect();
        let t: Vec<f64> = offs.iter().map(|o| o.0).collect();
        let zero = vec![C64::new(0.0, 0.0); panels * t.len()];
        let core = if c1 != 0.0 { p.lattice_sum(&core_c, a, m, panels, &t, planner) } else { zero.clone() };
        let tl = if dc1 != 0.0 { p.lattice_sum(&tilde_c, a, m, panels, &t, planner) } else { zero };
        for i in 0..panels {
            for (k, o) in offs.iter().enumerate() {
                let j = i * t.len() + k;
                // χ₂ = 1 on the interior
                out.push((a + i as f64 * h + o.0, o.1, core[j] * c1 + tl[j] * C64::new(0.0, 0.5 * dc1)));
            }
        }
    }
    Ok(out)
}

fn y_breaks(y_min: f64, ratio: f64) -> Vec<f64> {
    let mut v = geometric_breaks(y_min, CHI1.0, ratio);
    v.extend(smoothstep_knots(CHI1.0, CHI1.1 - CHI1.0).into_iter().skip(1));
    v
}

impl NodeTable {
    /// Sup of |∂̄φ| along Im z = ±y.
    fn row_sup(p: &Piece, y: f64, par: &HsParams, planner: &mut FftPlanner<f64>) -> Result<f64> {
        let mut s: f64 = 0.0;
        for sy in [y, -y] {
            s = row(p, sy, par, planner)?.iter().fold(s, |a, v| a.max(v.2.norm()));
        }
        Ok(s)
    }

    pub fn build(p: &Piece, decay_target: u32, par: &HsParams) -> Result<Self> {
        let (lo, hi) = p.window.outer();
        let width = hi - lo;
        let n = decay_target.max(1) as f64;
        let mut y_min = par.y_start;
        let mut bound = f64::INFINITY;
        let mut planner = FftPlanner::new();
        for _ in 0..=par.max_halvings {
            // ∫_{|y|<y_min} |∂̄φ|/|μ − z| ≤ 2·width·S(y_min)/N when S(y) ≤ S(y_min)(y/y_min)^N
            bound = p.amp * 2.0 * width * Self::row_sup(p, y_min, par, &mut planner)? / (n * PI);
            if bound < par.tol / 10.0 {
                break;
            }
            y_min *= 0.5;
        }
        if bound >= par.tol / 10.0 {
            return Err(Error::Quadrature(format!(
                "piece {}: strip bound {bound:.2e} above tolerance after {} halvings",
                p.label, par.max_halvings
            )));
        }
        let gy = GaussLegendre::new(par.n_y);
        let mut nodes = Vec::new();
        for w in y_breaks(y_min, par.y_ratio).windows(2) {
            for (yv, wy) in gy.on(w[0], w[1]) {
                for sy in [yv, -yv] {
                    for (x, wx, dv) in row(p, sy, par, &mut planner)? {
                        if dv != C64::new(0.0, 0.0) {
                            nodes.push((x, sy, dv * (wx * wy / PI)));
                        }
                    }
                }
            }
        }
        Ok(NodeTable { y_min, strip_bound: bound, nodes })
    }

    /// (1/π) ∫ ∂̄φ(z) / (μ − z) dA over the table.
    pub fn cauchy(&self, mu: f64) -> C64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for &(x, y, w) in &self.nodes {
            let dx = mu - x;
            let d2 = dx * dx + y * y;
            // w / (dx − iy) = w (dx + iy) / d2
            re += (w.re * dx - w.im * y) / d2;
            im += (w.re * y + w.im * dx) / d2;
        }
        C64::new(re, im)
    }
}

impl AlmostAnalyticExtension {
    /// Cached node table of piece k, built with `self.quadrature`.
    pub fn table(&self, k: usize) -> Result<&NodeTable> {
        let p = &self.pieces[k];
        p.table
            .get_or_init(|| NodeTable::build(p, self.params.decay_target, &self.quadrature))
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn check_spectrum(&self, mu: f64) -> Result<()> {
        if self.depth > 0 && mu.abs() > self.params.window {
            return Err(Error::InvalidArgument(format!(
                "spectral point {mu:.4} outside the extension window {}",
                self.params.window
            )));
        }
        Ok(())
    }

    /// Indices of pieces whose window contains the physical point μ.
    pub fn active_pieces(&self, mu: f64) -> Vec<usize> {
        (0..self.pieces.len())
            .filter(|&k| {
                let p = &self.pieces[k];
                let (a, b) = p.window.outer();
                mu / p.scale > a && mu / p.scale < b
            })
            .collect()
    }

    /// h(μ) = (1/π) ∫ ∂̄ψ̃(z)/(μ − z) dA. Pieces whose window misses μ integrate a
    /// holomorphic function against ∂̄ of a compactly supported one and are skipped.
    pub fn hs_scalar(&self, mu: f64) -> Result<C64> {
        self.check_spectrum(mu)?;
        let mut h = C64::new(0.0, 0.0);
        for k in self.active_pieces(mu) {
            let p = &self.pieces[k];
            h += self.table(k)?.cauchy(mu / p.scale) * p.amp;
        }
        Ok(h)
    }

    /// (1/π) ∫ ∂̄ψ̃(z) a(z) dA(z) for an a(z) holomorphic off the real points `poles`.
    pub fn hs_integral(&self, poles: &[f64], a: impl Fn(C64) -> Result<CMat>) -> Result<CMat> {
        let mut used: Vec<usize> = Vec::new();
        for &mu in poles {
            self.check_spectrum(mu)?;
            for k in self.active_pieces(mu) {
                if !used.contains(&k) {
                    used.push(k);
                }
            }
        }
        let mut acc: Option<CMat> = None;
        for k in used {
            let p = &self.pieces[k];
            let t = self.table(k)?;
            for &(x, y, w) in &t.nodes {
                let m = a(C64::new(x, y) * p.scale)? * (w * (p.amp * p.scale));
                acc = Some(match acc {
                    Some(s) => s + m,
                    None => m,
                });
            }
        }
        match acc {
            Some(s) => Ok(s),
            // no piece meets the poles: the integrand is holomorphic on every support
            None if !poles.is_empty() => Ok(a(C64::new(0.0, 1.0))? * C64::new(0.0, 0.0)),
            None => Err(Error::InvalidArgument("no poles given".into())),
        }
    }
}

fn check_hermitian(h: &CMat) -> Result<()> {
    let d = hermitian_defect(h);
    if d > 1e-10 * max_abs(h).max(1.0) {
        return Err(Error::NotHermitian(d));
    }
    Ok(())
}

/// ψ(H) through the eigenbasis: U diag(h(μ_i)) U*.
pub fn hs_apply(ext: &AlmostAnalyticExtension, h: &CMat) -> Result<CMat> {
    check_hermitian(h)?;
    let (mu, u) = hermitian_eigen(h);
    let n = mu.len();
    let mut d = CMat::zeros(n, n);
    for (i, &m) in mu.iter().enumerate() {
        d[(i, i)] = ext.hs_scalar(m)?;
    }
    Ok(&u * d * u.adjoint())
}

/// ψ(H) by summing resolvents (H − z)^{−1} over every node; for small matrices.
pub fn hs_apply_direct(ext: &AlmostAnalyticExtension, h: &CMat) -> Result<CMat> {
    check_hermitian(h)?;
    let (mu, _) = hermitian_eigen(h);
    let n = h.nrows();
    let id = CMat::identity(n, n);
    let (lo, hi) = (mu[0], mu[n - 1]);
    ext.check_spectrum(lo)?;
    ext.check_spectrum(hi)?;
    let mut acc = CMat::zeros(n, n);
    for (k, p) in ext.pieces.iter().enumerate() {
        let (a, b) = p.window.outer();
        if b * p.scale < lo || a * p.scale > hi {
            continue;
        }
        let t = ext.table(k)?;
        let hs = h / C64::new(p.scale, 0.0);
        for &(x, y, w) in &t.nodes {
            let r = (&hs - &id * C64::new(x, y))
                .try_inverse()
                .ok_or(Error::SingularResolvent(y.abs()))?;
            acc += r * (w * p.amp);
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub n: u32,
    pub value: f64,
    pub refined: f64,
    pub rel_change: f64,
}

/// Σ_pieces ∫ |∂̄φ_j| ((1 + |z|)/|Im z|)^N dA (physical variable), at the given
/// rule and with doubled node counts.
pub fn moments(ext: &AlmostAnalyticExtension, orders: &[u32], par: &HsParams) -> Result<Vec<MomentRow>> {
    let fine = HsParams { n_gl: 2 * par.n_gl, n_y: 2 * par.n_y, n_knot: 2 * par.n_knot, ..par.clone() };
    let mut vals = Vec::new();
    for q in [par, &fine] {
        let mut sums = vec![0.0; orders.len()];
        for p in &ext.pieces {
            let t = NodeTable::build(p, ext.params.decay_target, q)?;
            for &(x, y, w) in &t.nodes {
                let z = C64::new(x, y) * p.scale;
                let r = (1.0 + z.norm()) / z.im.abs();
                for (s, &n) in sums.iter_mut().zip(orders) {
                    *s += PI * w.norm() * p.amp * p.scale * r.powi(n as i32);
                }
            }
        }
        vals.push(sums);
    }
    Ok(orders
        .iter()
        .enumerate()
        .map(|(i, &n)| MomentRow {
            n,
            value: vals[0][i],
            refined: vals[1][i],
            rel_change: (vals[1][i] - vals[0][i]).abs() / vals[1][i].abs(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::almost_analytic::ExtensionParams;
    use crate::rep::hermitian_function;
    use crate::smooth::GrowthClassFunction;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ext(name: &str, p: &[f64]) -> AlmostAnalyticExtension {
        let psi = GrowthClassFunction::registered(name, p).unwrap();
        AlmostAnalyticExtension::build(&psi, 3, ExtensionParams::default()).unwrap()
    }

    #[test]
    fn two_by_two_resolvent() {
        let e = ext("resolvent", &[]);
        let h = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]));
        let r = hs_apply(&e, &h).unwrap();
        assert!((r[(0, 0)] - 1.0).norm() < 1e-8 && (r[(1, 1)] - 0.5).norm() < 1e-8, "{r}");
        let d = hs_apply_direct(&e, &h).unwrap();
        assert!(max_abs(&(d - r)) < 1e-8);
    }

    #[test]
    fn scalar_values_and_skipping() {
        for (name, p) in [("resolvent2", vec![]), ("gaussian", vec![1.5]), ("window", vec![-1.0, 1.0, 0.5])] {
            let e = ext(name, &p);
            for mu in [-6.3, -2.0, -0.7, 0.0, 0.4, 1.0, 3.3, 7.9] {
                let h = e.hs_scalar(mu).unwrap();
                assert!((h - e.psi.eval(mu)).norm() < 1e-7, "{name} {mu}: {h}");
            }
        }
    }

    #[test]
    fn random_hermitian_agrees_with_diagonalization() {
        let e = ext("odd_gaussian", &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 8] {
            let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
            let want = hermitian_function(&h, |x| e.psi.eval(x));
            let err = max_abs(&(hs_apply(&e, &h).unwrap() - &want));
            assert!(err < 1e-7, "{n}: {err:.3e}");
            if n == 3 {
                assert!(max_abs(&(hs_apply_direct(&e, &h).unwrap() - &want)) < 1e-7);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let e = ext("resolvent", &[]);
        let mut h = CMat::identity(2, 2);
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(hs_apply(&e, &h), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn zero_function_gives_zero() {
        let e = ext("zero", &[]);
        let h = CMat::from_fn(3, 3, |i, j| C64::new((i + j) as f64, 0.0));
        assert_eq!(max_abs(&hs_apply(&e, &h).unwrap()), 0.0);
    }

    #[test]
    fn independent_of_the_extension_parameters() {
        let psi = GrowthClassFunction::registered("resolvent2", &[]).unwrap();
        let a = AlmostAnalyticExtension::build(&psi, 3, ExtensionParams::default()).unwrap();
        let other = ExtensionParams { eps1: 2e-3, period: 40.0, window: 10.0, ..Default::default() };
        let b = AlmostAnalyticExtension::build(&psi, 4, other).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DMatrix::from_fn(6, 6, |_, _| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let err = max_abs(&(hs_apply(&a, &h).unwrap() - hs_apply(&b, &h).unwrap()));
        assert!(err < 1e-6, "{err:.3e}");
    }

    static GAUSS: std::sync::LazyLock<AlmostAnalyticExtension> = std::sync::LazyLock::new(|| ext("gaussian", &[1.5]));

    fn unitary(n: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        a.qr().q()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn unitary_covariance(n in 2usize..9, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let m = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
            let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
            let u = unitary(n, seed);
            let lhs = hs_apply(&GAUSS, &(&u * &h * u.adjoint())).unwrap();
            let rhs = &u * hs_apply(&GAUSS, &h).unwrap() * u.adjoint();
            proptest::prop_assert!(max_abs(&(lhs - rhs)) < 1e-10);
        }
    }
}
