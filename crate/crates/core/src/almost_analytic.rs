//! Almost-analytic extensions ψ̃ of growth-class functions.
//!
//! ψ is split as ψρ + Σ_{j≥1} ψ(·)η₀(2^{−j}·), with ρ a plateau on [−1, 1]
//! (zero outside [−2, 2]) and η₀(s) = ρ(s) − ρ(2s). Each piece is rescaled to
//! ψ_j(s) = 2^{−jm'} ψ(2^j s) η₀(s) (one piece per sign), extended by
//! ψ̃_j(z) = ∫ e^{2πizξ} χ(yξ) ψ̂_j(ξ) dξ, and windowed by χ₁(y) χ₂(x).
//! The extension of ψ is Σ_j 2^{jm'} (χ₁χ₂ψ̃_j)(2^{−j} z).

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hs::HsParams;
use crate::jet::Jet;
use crate::rep::C64;
use crate::smooth::{plateau, plateau_derivs, plateau_jet, GrowthClassFunction, Window};

/// Construction parameters. Defaults follow the recorded profiles:
/// χ = 1 on [−2, 2], 0 outside [−4, 4]; χ₁ = 1 on [−1, 1], 0 outside [−2, 2]; ε₁ = 0.001.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionParams {
    /// Decay target N: ψ̂ is computed with M = N + 2 integrations by parts for |ξ| > 1.
    pub decay_target: u32,
    pub eps1: f64,
    /// Period L of the sampling grid for the numeric Fourier transform (scaled variable).
    pub period: f64,
    /// Largest |ξ| the ψ̂ table of every piece must reach, in its scaled variable.
    pub xi_max: f64,
    /// Multiply the reach by the piece scale (ξ in physical units).
    pub physical_xi: bool,
    /// Evaluation window W: the dyadic depth is J = ⌈log₂ W⌉ + 2.
    pub window: f64,
}

impl Default for ExtensionParams {
    fn default() -> Self {
        ExtensionParams { decay_target: 3, eps1: 1e-3, period: 32.0, xi_max: 2048.0, physical_xi: false, window: 8.0 }
    }
}

pub const CHI: (f64, f64) = (2.0, 4.0);
pub const CHI1: (f64, f64) = (1.0, 2.0);
pub const RHO: (f64, f64) = (1.0, 2.0);

type BaseFn = dyn Fn(&Jet) -> Jet + Send + Sync;

/// One rescaled piece ψ_j with its sampled Fourier transform.
pub struct Piece {
    pub label: String,
    /// Physical variable = scale · scaled variable.
    pub scale: f64,
    /// Amplitude 2^{jm'}.
    pub amp: f64,
    /// Support of ψ_j in the scaled variable.
    pub support: (f64, f64),
    pub window: Window,
    pub period: f64,
    n: usize,
    m_ibp: usize,
    hat: OnceLock<Vec<C64>>,
    base: Arc<BaseFn>,
    pub(crate) table: OnceLock<Result<crate::hs::NodeTable>>,
}

impl std::fmt::Debug for Piece {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Piece({}, scale {}, amp {}, n {})", self.label, self.scale, self.amp, self.n)
    }
}

impl Piece {
    pub fn n(&self) -> usize {
        self.n
    }

    /// ψ̂_j(l / L) at index l mod n, computed on first use. For |ξ| > 1 it is
    /// the transform of ψ_j^{(M)} divided by (2πiξ)^M.
    pub fn hat(&self) -> &[C64] {
        self.hat.get_or_init(|| {
            let (n, m) = (self.n, self.m_ibp);
            let plain = sampled_transform(&*self.base, self.support, self.period, n, 0);
            let ibp = sampled_transform(&*self.base, self.support, self.period, n, m);
            (0..n)
                .map(|idx| {
                    let l = if idx < n / 2 { idx as i64 } else { idx as i64 - n as i64 };
                    let xi = l as f64 / self.period;
                    if xi.abs() <= 1.0 {
                        plain[idx]
                    } else {
                        ibp[idx] / C64::new(0.0, 2.0 * PI * xi).powi(m as i32)
                    }
                })
                .collect()
        })
    }

    pub fn dxi(&self) -> f64 {
        1.0 / self.period
    }

    /// Largest frequency index available.
    pub fn l_max(&self) -> i64 {
        self.n() as i64 / 2 - 1
    }

    pub fn hat_at(&self, l: i64) -> C64 {
        self.hat()[l.rem_euclid(self.n as i64) as usize]
    }

    /// ψ_j^{(k)}(s), k = 0..=order.
    pub fn base_derivs(&self, s: f64, order: usize) -> Vec<f64> {
        if s < self.support.0 || s > self.support.1 {
            return vec![0.0; order + 1];
        }
        let j = (self.base)(&Jet::var1(order, s));
        (0..=order).map(|k| j.derivative(k)).collect()
    }

    /// Frequency range [l_lo, l_hi] with |ξ| ≤ 4/|y| (the support of χ(yξ)).
    fn band(&self, y: f64) -> Result<(i64, i64)> {
        if y == 0.0 {
            return Ok((-self.l_max(), self.l_max()));
        }
        // the endpoint |yξ| = 4 carries χ = χ' = 0
        let l = (CHI.1 / y.abs() * self.period).ceil() as i64 - 1;
        if l > self.l_max() {
            return Err(Error::Quadrature(format!(
                "ψ̂ table of {} reaches |ξ| = {:.1}; y = {y:.3e} needs {:.1}",
                self.label,
                self.l_max() as f64 / self.period,
                CHI.1 / y.abs()
            )));
        }
        Ok((-l, l))
    }

    /// Σ_l c_l e^{2πixξ_l} for each x, using a phase recurrence re-seeded every 512 steps.
    fn sum_at(&self, xs: &[f64], lo: i64, coef: &[C64]) -> Vec<C64> {
        let dxi = self.dxi();
        xs.iter()
            .map(|&x| {
                let step = C64::from_polar(1.0, 2.0 * PI * x * dxi);
                let mut acc = C64::new(0.0, 0.0);
                let mut ph = C64::new(0.0, 0.0);
                for (k, c) in coef.iter().enumerate() {
                    if k % 512 == 0 {
                        ph = C64::from_polar(1.0, 2.0 * PI * x * (lo + k as i64) as f64 * dxi);
                    }
                    acc += c * ph;
                    ph *= step;
                }
                acc
            })
            .collect()
    }

    /// Coefficients c_l dξ of the ψ̃ sum, as (first index, values).
    pub(crate) fn tilde_coefs(&self, y: f64) -> Result<(i64, Vec<C64>)> {
        let (lo, hi) = self.band(y)?;
        let dxi = self.dxi();
        let coef = (lo..=hi)
            .map(|l| {
                let xi = l as f64 * dxi;
                let w = if y == 0.0 { 1.0 } else { (-2.0 * PI * y * xi).exp() * plateau(y * xi, CHI.0, CHI.1) };
                self.hat_at(l) * (w * dxi)
            })
            .collect();
        Ok((lo, coef))
    }

    /// Coefficients of the ∂̄ψ̃ sum on the two bands 2 ≤ |yξ| ≤ 4.
    pub(crate) fn core_coefs(&self, y: f64) -> Result<Vec<(i64, Vec<C64>)>> {
        if y == 0.0 {
            return Ok(vec![]);
        }
        let (lo, hi) = self.band(y)?;
        let inner = (CHI.0 / y.abs() * self.period).ceil() as i64;
        let dxi = self.dxi();
        Ok([(lo, -inner), (inner, hi)]
            .into_iter()
            .filter(|(a, b)| b >= a)
            .map(|(a, b)| {
                let coef = (a..=b)
                    .map(|l| {
                        let xi = l as f64 * dxi;
                        let d = plateau_derivs(y * xi, CHI.0, CHI.1, 1)[1];
                        self.hat_at(l) * C64::new(0.0, 0.5 * xi * d * (-2.0 * PI * y * xi).exp() * dxi)
                    })
                    .collect();
                (a, coef)
            })
            .collect())
    }

    /// Unwindowed ψ̃_j(x + iy) at each x.
    pub fn tilde(&self, xs: &[f64], y: f64) -> Result<Vec<C64>> {
        let (lo, coef) = self.tilde_coefs(y)?;
        Ok(self.sum_at(xs, lo, &coef))
    }

    /// Unwindowed ∂̄ψ̃_j(x + iy) = (i/2) ∫ e^{2πizξ} ξ χ'(yξ) ψ̂_j(ξ) dξ, band 2 ≤ |yξ| ≤ 4.
    pub fn dbar_core(&self, xs: &[f64], y: f64) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); xs.len()];
        for (a, coef) in self.core_coefs(y)? {
            for (o, v) in out.iter_mut().zip(self.sum_at(xs, a, &coef)) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Σ_l c_l e^{2πixξ_l} for x close to `center`, through the moments
    /// Σ_l c_l e^{2πi·center·ξ_l} (2πiξ_l)^k / k!.
    pub(crate) fn taylor_sum(&self, segs: &[(i64, Vec<C64>)], center: f64, xs: &[f64]) -> Vec<C64> {
        let dxi = self.dxi();
        let dmax = xs.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
        let xi_max = segs
            .iter()
            .flat_map(|(lo, c)| [*lo as f64, (*lo + c.len() as i64) as f64])
            .map(|l| (l * dxi).abs())
            .fold(0.0, f64::max);
        let r = 2.0 * PI * xi_max * dmax;
        let mut kmax = 1;
        let mut t = r;
        while t > 1e-18 && kmax < 200 {
            kmax += 1;
            t *= r / kmax as f64;
        }
        let mut mom = vec![C64::new(0.0, 0.0); kmax + 1];
        for (lo, coef) in segs {
            let step = C64::from_polar(1.0, 2.0 * PI * center * dxi);
            let mut ph = C64::new(0.0, 0.0);
            for (j, c) in coef.iter().enumerate() {
                let l = lo + j as i64;
                if j % 512 == 0 {
                    ph = C64::from_polar(1.0, 2.0 * PI * center * l as f64 * dxi);
                }
                let d = C64::new(0.0, 2.0 * PI * l as f64 * dxi);
                let mut term = c * ph;
                for (k, m) in mom.iter_mut().enumerate() {
                    *m += term;
                    term *= d / (k + 1) as f64;
                }
                ph *= step;
            }
        }
        xs.iter()
            .map(|&x| {
                let dx = x - center;
                mom.iter().rev().fold(C64::new(0.0, 0.0), |acc, m| acc * dx + m)
            })
            .collect()
    }

    /// Σ_l c_l e^{2πixξ_l} at x = x0 + i·L/m + t_k for i < panels, all k (panel-major).
    /// The lattice step L/m makes the panel index a length-m DFT after folding l mod m.
    pub(crate) fn lattice_sum(
        &self,
        segs: &[(i64, Vec<C64>)],
        x0: f64,
        m: usize,
        panels: usize,
        offsets: &[f64],
        planner: &mut FftPlanner<f64>,
    ) -> Vec<C64> {
        let fft = planner.plan_fft_inverse(m);
        let dxi = self.dxi();
        let mut out = vec![C64::new(0.0, 0.0); panels * offsets.len()];
        let mut buf = vec![C64::new(0.0, 0.0); m];
        for (k, &t) in offsets.iter().enumerate() {
            buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            let x = x0 + t;
            for (lo, coef) in segs {
                let step = C64::from_polar(1.0, 2.0 * PI * x * dxi);
                let mut ph = C64::new(0.0, 0.0);
                for (j, c) in coef.iter().enumerate() {
                    let l = lo + j as i64;
                    if j % 512 == 0 {
                        ph = C64::from_polar(1.0, 2.0 * PI * x * l as f64 * dxi);
                    }
                    buf[l.rem_euclid(m as i64) as usize] += c * ph;
                    ph *= step;
                }
            }
            fft.process(&mut buf);
            for i in 0..panels {
                out[i * offsets.len() + k] = buf[i];
            }
        }
        out
    }

    /// Windowed φ = χ₁(y)χ₂(x)ψ̃ and ∂̄φ at x + iy for each x (scaled variable).
    pub fn phi_dbar(&self, xs: &[f64], y: f64) -> Result<(Vec<C64>, Vec<C64>)> {
        self.windowed(xs, y, true)
    }

    /// ∂̄φ only; ψ̃ is evaluated just where a cutoff derivative is nonzero.
    pub fn dbar_row(&self, xs: &[f64], y: f64) -> Result<Vec<C64>> {
        Ok(self.windowed(xs, y, false)?.1)
    }

    fn windowed(&self, xs: &[f64], y: f64, want_phi: bool) -> Result<(Vec<C64>, Vec<C64>)> {
        let c1 = plateau(y, CHI1.0, CHI1.1);
        let dc1 = plateau_derivs(y, CHI1.0, CHI1.1, 1)[1];
        let zero = C64::new(0.0, 0.0);
        let mut phi = vec![zero; if want_phi { xs.len() } else { 0 }];
        let mut db = vec![zero; xs.len()];
        if c1 == 0.0 && dc1 == 0.0 {
            return Ok((phi, db));
        }
        let (o_lo, o_hi) = self.window.outer();
        let inside: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] > o_lo && xs[i] < o_hi).collect();
        let cut: Vec<(f64, f64)> = inside.iter().map(|&i| self.window.eval(xs[i])).collect();
        let xin: Vec<f64> = inside.iter().map(|&i| xs[i]).collect();
        let need: Vec<usize> =
            (0..inside.len()).filter(|&k| want_phi || dc1 != 0.0 || cut[k].1 != 0.0).collect();
        let tl_need = self.tilde(&need.iter().map(|&k| xin[k]).collect::<Vec<_>>(), y)?;
        let mut tl = vec![zero; inside.len()];
        for (k, v) in need.iter().zip(tl_need) {
            tl[*k] = v;
        }
        let core = if c1 != 0.0 { self.dbar_core(&xin, y)? } else { vec![zero; xin.len()] };
        for (k, &i) in inside.iter().enumerate() {
            let (c2, dc2) = cut[k];
            if want_phi {
                phi[i] = tl[k] * (c1 * c2);
            }
            // ∂̄ = ½(∂x + i∂y)
            db[i] = core[k] * (c1 * c2) + tl[k] * (0.5 * dc2 * c1) + tl[k] * C64::new(0.0, 0.5 * dc1 * c2);
        }
        Ok((phi, db))
    }
}

/// ψ̃ assembled from its pieces, plus construction records.
pub struct AlmostAnalyticExtension {
    pub psi: GrowthClassFunction,
    pub params: ExtensionParams,
    /// Dyadic depth J (0 when ψ has compact support and the dyadic sum is bypassed).
    pub depth: u32,
    pub pieces: Vec<Piece>,
    /// Rule used for the node tables of the pieces.
    pub quadrature: HsParams,
}

impl std::fmt::Debug for AlmostAnalyticExtension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlmostAnalyticExtension")
            .field("psi", &self.psi)
            .field("depth", &self.depth)
            .field("pieces", &self.pieces)
            .finish()
    }
}

fn next_pow2(x: f64) -> usize {
    let mut n = 1usize;
    while (n as f64) < x {
        n <<= 1;
    }
    n
}

/// Samples ψ_j^{(m)} on the grid s_k = −L/2 + kL/n and returns its FFT-based transform at l/L.
fn sampled_transform(base: &BaseFn, support: (f64, f64), period: f64, n: usize, m: usize) -> Vec<C64> {
    let h = period / n as f64;
    let mut buf: Vec<C64> = (0..n)
        .map(|k| {
            let s = -0.5 * period + k as f64 * h;
            if s <= support.0 || s >= support.1 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(base(&Jet::var1(m, s)).derivative(m), 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    // e^{−2πi s_k ξ_l} = (−1)^l e^{−2πikl/n}
    for (idx, v) in buf.iter_mut().enumerate() {
        let l = if idx < n / 2 { idx as i64 } else { idx as i64 - n as i64 };
        let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        *v *= h * sign;
    }
    buf
}

impl AlmostAnalyticExtension {
    /// Builds ψ̃ with decay target N on the window |Re z| ≤ params.window.
    pub fn build(psi: &GrowthClassFunction, decay_target: u32, mut params: ExtensionParams) -> Result<Self> {
        params.decay_target = decay_target;
        let m_ibp = decay_target as usize + 2;
        if m_ibp > psi.max_order {
            return Err(Error::DerivativeOrder { have: psi.max_order as u32, need: m_ibp as u32 });
        }
        if !(params.window > 0.0 && params.period >= 8.0 && params.eps1 > 0.0 && params.xi_max > 0.0) {
            return Err(Error::InvalidArgument("extension parameters must be positive (period ≥ 8)".into()));
        }
        let mp = psi.growth;
        let mut specs: Vec<(String, f64, f64, (f64, f64), Arc<BaseFn>)> = Vec::new();
        let depth;
        if let Some((a, b)) = psi.support {
            if b - a > 0.5 * params.period - 1.0 {
                return Err(Error::InvalidArgument("support too wide for the sampling period".into()));
            }
            let p = psi.clone();
            specs.push(("compact".into(), 1.0, 1.0, (a, b), Arc::new(move |x: &Jet| p.jet(x))));
            depth = 0;
        } else {
            if mp >= -1.0 {
                return Err(Error::GrowthOrder(mp));
            }
            depth = (params.window.log2().ceil().max(0.0) as u32) + 2;
            let p = psi.clone();
            specs.push((
                "j0".into(),
                1.0,
                1.0,
                (-RHO.1, RHO.1),
                Arc::new(move |x: &Jet| p.jet(x).mul(&plateau_jet(x, RHO.0, RHO.1))),
            ));
            for j in 1..=depth {
                let s = 2f64.powi(j as i32);
                for sign in [1.0, -1.0] {
                    let p = psi.clone();
                    let f = move |x: &Jet| {
                        let eta = plateau_jet(x, RHO.0, RHO.1).sub(&plateau_jet(&x.scale(2.0), RHO.0, RHO.1));
                        p.jet(&x.scale(s)).scale(s.powf(-mp)).mul(&eta)
                    };
                    let sup = if sign > 0.0 { (0.5, 2.0) } else { (-2.0, -0.5) };
                    let label = format!("j{}{}", j, if sign > 0.0 { "+" } else { "-" });
                    specs.push((label, s, s.powf(mp), sup, Arc::new(f)));
                }
            }
        }
        let mut pieces = Vec::with_capacity(specs.len());
        for (label, scale, amp, support, base) in specs {
            let reach = if params.physical_xi { params.xi_max * scale } else { params.xi_max };
            let n = next_pow2(2.0 * params.period * reach).max(1024);
            let window = Window { lo: support.0, hi: support.1, w: params.eps1 };
            pieces.push(Piece {
                label,
                scale,
                amp,
                support,
                window,
                period: params.period,
                n,
                m_ibp,
                hat: OnceLock::new(),
                base,
                table: OnceLock::new(),
            });
        }
        Ok(AlmostAnalyticExtension { psi: psi.clone(), params, depth, pieces, quadrature: HsParams::default() })
    }

    /// Replaces the quadrature rule and drops any node tables built with the old one.
    pub fn with_quadrature(mut self, par: HsParams) -> Self {
        for p in &mut self.pieces {
            p.table = OnceLock::new();
        }
        self.quadrature = par;
        self
    }

    /// Largest |Re z| covered by the pieces.
    pub fn reach(&self) -> f64 {
        self.pieces.iter().map(|p| p.scale * p.window.outer().1.abs().max(p.window.outer().0.abs())).fold(0.0, f64::max)
    }

    fn check_window(&self, x: f64) -> Result<()> {
        if self.depth > 0 && x.abs() > self.params.window {
            return Err(Error::InvalidArgument(format!(
                "Re z = {x} outside the evaluation window {} of this extension",
                self.params.window
            )));
        }
        Ok(())
    }

    /// Pieces whose window contains the physical point x.
    pub fn pieces_at(&self, x: f64) -> impl Iterator<Item = &Piece> {
        self.pieces.iter().filter(move |p| {
            let (a, b) = p.window.outer();
            let s = x / p.scale;
            s > a && s < b
        })
    }

    /// (ψ̃(z), ∂̄ψ̃(z)).
    pub fn eval(&self, z: C64) -> Result<(C64, C64)> {
        self.check_window(z.re)?;
        let mut v = C64::new(0.0, 0.0);
        let mut d = C64::new(0.0, 0.0);
        for p in self.pieces_at(z.re) {
            let (phi, db) = p.phi_dbar(&[z.re / p.scale], z.im / p.scale)?;
            v += phi[0] * p.amp;
            d += db[0] * (p.amp / p.scale);
        }
        Ok((v, d))
    }

    pub fn tilde(&self, z: C64) -> Result<C64> {
        Ok(self.eval(z)?.0)
    }

    pub fn dbar(&self, z: C64) -> Result<C64> {
        Ok(self.eval(z)?.1)
    }
}

// ---------------------------------------------------------------------------
// Audits.

#[derive(Debug, Clone, Serialize)]
pub struct SupportAudit {
    pub samples: usize,
    pub violations: usize,
    pub max_abs: f64,
}

/// ψ̃ must vanish when |Im z| > 10(1 + |Re z|) or Re z is more than 1 away from supp ψ.
pub fn support_audit(ext: &AlmostAnalyticExtension, samples: usize, rng: &mut impl rand::Rng) -> Result<SupportAudit> {
    let w = if ext.depth > 0 { ext.params.window } else { ext.reach() + 2.0 };
    let mut violations = 0;
    let mut max_abs: f64 = 0.0;
    for k in 0..samples {
        let z = if let Some((a, b)) = ext.psi.support.filter(|_| k % 2 == 1) {
            let d = 1.0 + rng.random_range(1e-9..3.0);
            let x = if rng.random_bool(0.5) { a - d } else { b + d };
            C64::new(x, rng.random_range(-3.0..3.0))
        } else {
            let x: f64 = rng.random_range(-w..w);
            let y = 10.0 * (1.0 + x.abs()) + rng.random_range(1e-9..50.0);
            C64::new(x, if rng.random_bool(0.5) { y } else { -y })
        };
        let v = ext.tilde(z)?;
        if v != C64::new(0.0, 0.0) {
            violations += 1;
            max_abs = max_abs.max(v.norm());
        }
    }
    Ok(SupportAudit { samples, violations, max_abs })
}

/// max |ψ̃(x) − ψ(x)| over the given real points.
pub fn axis_audit(ext: &AlmostAnalyticExtension, xs: &[f64]) -> Result<f64> {
    let mut err: f64 = 0.0;
    for &x in xs {
        let v = ext.tilde(C64::new(x, 0.0))?;
        err = err.max((v - ext.psi.eval(x)).norm());
    }
    Ok(err)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub y: f64,
    pub sup_dbar: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayAudit {
    pub decay_target: u32,
    pub window: f64,
    pub rows: Vec<DecayRow>,
    pub slope: f64,
}

/// Σ_{k<m} v^k/k!.
pub fn exp_taylor(v: f64, m: usize) -> f64 {
    (0..m).rev().fold(0.0, |acc, k| 1.0 + acc * v / (k + 1) as f64)
}

/// e^v − Σ_{k<m} v^k/k!, summed from the k = m term when |v| ≤ 4 so no cancellation occurs.
pub fn exp_remainder(v: f64, m: usize) -> f64 {
    if v.abs() > 4.0 {
        return v.exp() - exp_taylor(v, m);
    }
    let mut t = (1..=m).fold(1.0f64, |a, k| a * v / k as f64);
    let mut s = 0.0f64;
    let mut k = m;
    while t.abs() > 1e-17 * s.abs() || k < m + 2 {
        s += t;
        k += 1;
        t *= v / k as f64;
        if k > m + 200 {
            break;
        }
    }
    s
}

/// Least-squares slope of log v against log y.
pub fn loglog_slope(ys: &[f64], vs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ys.iter().zip(vs).filter(|(_, v)| **v > 0.0).map(|(y, v)| (y.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// sup over |x| ≤ W of |∂̄ψ̃(x ± iy)| for each y, on the FFT grid of the pieces.
///
/// The extension is rebuilt with the given decay target and ψ̂ tables long enough
/// for the smallest y. Near the axis ψ̃ (needed on the χ₂ ramps, where ψ_j and all
/// its derivatives vanish) is evaluated as Σ_ξ e^{2πixξ}[e^{−2πyξ}χ(yξ) − T_M(yξ)]ψ̂(ξ),
/// T_M the degree M−1 Taylor polynomial of e^{−2πu}: the subtracted part equals
/// Σ_{k<M} ψ_j^{(k)}(x)(iy)^k/k!, which is zero there.
pub fn decay_audit(psi: &GrowthClassFunction, decay_target: u32, ys: &[f64], window: f64) -> Result<DecayAudit> {
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(y_min > 0.0 && y_min < 1.0) {
        return Err(Error::InvalidArgument("decay audit needs 0 < y < 1".into()));
    }
    let params = ExtensionParams { period: 16.0, xi_max: CHI.1 / y_min, physical_xi: true, window, ..Default::default() };
    let ext = AlmostAnalyticExtension::build(psi, decay_target, params)?;
    let m = decay_target as usize + 2;
    let active: Vec<&Piece> = ext
        .pieces
        .iter()
        .filter(|p| {
            let (a, b) = p.window.outer();
            a * p.scale < window && b * p.scale > -window
        })
        .collect();
    let mut rows = Vec::with_capacity(ys.len());
    let mut planner = FftPlanner::new();
    // ψ real: ∂̄ψ̃(z̄) is the conjugate of ∂̄ψ̃(z), so y > 0 suffices
    for &y in ys {
        // grid of the unscaled piece: resolves the ramps (2^18 points) and the band |ξ| ≤ 4/y
        let base = next_pow2(2.0 * ext.params.period * CHI.1 / y).max(1 << 18);
        let h = ext.params.period / base as f64;
        let cells = (2.0 * window / h).round() as usize + 1;
        let mut acc = vec![C64::new(0.0, 0.0); cells];
        for p in &active {
            let n = (base * p.scale as usize).min(p.n());
            let yp = y / p.scale;
            let (lo, hi) = p.band(yp)?;
            let dxi = p.dxi();
            let inner = CHI.0 / yp;
            let mut core = vec![C64::new(0.0, 0.0); n];
            let mut rem = vec![C64::new(0.0, 0.0); n];
            let table = p.hat();
            for l in -(n as i64 / 2)..(n as i64 / 2) {
                let xi = l as f64 * dxi;
                let u = yp * xi;
                let idx = l.rem_euclid(n as i64) as usize;
                let hat = table[l.rem_euclid(p.n() as i64) as usize] * dxi;
                let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let r = if u.abs() <= CHI.0 {
                    exp_remainder(-2.0 * PI * u, m)
                } else {
                    let chi = if l >= lo && l <= hi {
                        let e = (-2.0 * PI * u).exp();
                        if xi.abs() >= inner {
                            let d = plateau_derivs(u, CHI.0, CHI.1, 1)[1];
                            core[idx] = hat * C64::new(0.0, 0.5 * xi * d * e) * sign;
                        }
                        e * plateau(u, CHI.0, CHI.1)
                    } else {
                        0.0
                    };
                    chi - exp_taylor(-2.0 * PI * u, m)
                };
                rem[idx] = hat * (r * sign);
            }
            let ifft = planner.plan_fft_inverse(n);
            ifft.process(&mut core);
            ifft.process(&mut rem);
            let hp = p.period / n as f64;
            for k in 0..n {
                let s = -0.5 * p.period + k as f64 * hp;
                let x = s * p.scale;
                if x.abs() > window {
                    continue;
                }
                let (c2, dc2) = p.window.eval(s);
                if c2 == 0.0 && dc2 == 0.0 {
                    continue;
                }
                let v = core[k] * c2 + rem[k] * (0.5 * dc2);
                let cell = ((x + window) / h).round() as usize;
                acc[cell.min(cells - 1)] += v * (p.amp / p.scale);
            }
        }
        let sup = acc.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        rows.push(DecayRow { y, sup_dbar: sup });
    }
    let slope = loglog_slope(&rows.iter().map(|r| r.y).collect::<Vec<_>>(), &rows.iter().map(|r| r.sup_dbar).collect::<Vec<_>>());
    Ok(DecayAudit { decay_target, window, rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn psi2() -> GrowthClassFunction {
        GrowthClassFunction::registered("resolvent2", &[]).unwrap()
    }

    #[test]
    fn restricts_to_psi_on_the_axis() {
        let ext = AlmostAnalyticExtension::build(&psi2(), 3, ExtensionParams::default()).unwrap();
        let xs: Vec<f64> = (0..200).map(|k| -7.5 + 15.0 * k as f64 / 199.0).collect();
        let err = axis_audit(&ext, &xs).unwrap();
        assert!(err < 1e-12, "{err}");
        let bump = GrowthClassFunction::registered("bump", &[-1.0, 2.0]).unwrap();
        let ext = AlmostAnalyticExtension::build(&bump, 3, ExtensionParams::default()).unwrap();
        assert_eq!(ext.depth, 0);
        assert!(axis_audit(&ext, &xs.iter().map(|x| x / 3.0).collect::<Vec<_>>()).unwrap() < 1e-12);
    }

    #[test]
    fn vanishes_outside_the_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ext = AlmostAnalyticExtension::build(&psi2(), 3, ExtensionParams::default()).unwrap();
        let a = support_audit(&ext, 2000, &mut rng).unwrap();
        assert_eq!(a.violations, 0);
        let bump = GrowthClassFunction::registered("bump", &[0.0, 1.0]).unwrap();
        let ext = AlmostAnalyticExtension::build(&bump, 3, ExtensionParams::default()).unwrap();
        assert_eq!(support_audit(&ext, 2000, &mut rng).unwrap().violations, 0);
    }

    #[test]
    fn rejects_slow_growth_without_support() {
        let slow = GrowthClassFunction::new("slow", -0.5, None, |x| x.mul(x).add_const(1.0).powf(-0.25));
        assert!(matches!(AlmostAnalyticExtension::build(&slow, 2, ExtensionParams::default()), Err(Error::GrowthOrder(_))));
    }

    #[test]
    fn dbar_matches_finite_differences() {
        let ext = AlmostAnalyticExtension::build(&psi2(), 3, ExtensionParams::default()).unwrap();
        for z in [C64::new(0.7, 0.3), C64::new(-2.5, 1.4), C64::new(1.2, -0.6), C64::new(3.1, 2.5)] {
            let h = 3e-4;
            let f = |w: C64| ext.tilde(w).unwrap();
            let d5 = |e: C64| (f(z - e * 2.0) - f(z - e) * 8.0 + f(z + e) * 8.0 - f(z + e * 2.0)) / (12.0 * h);
            let dx = d5(C64::new(h, 0.0));
            let dy = d5(C64::new(0.0, h));
            let fd = (dx + C64::new(0.0, 1.0) * dy) * 0.5;
            let d = ext.dbar(z).unwrap();
            assert!((fd - d).norm() < 1e-6 * d.norm().max(1.0), "{z}: {fd} vs {d}");
        }
    }

    #[test]
    fn remainders() {
        for v in [-3.9f64, -0.5, 1e-3, 2.0, 7.0] {
            for m in 0..6 {
                let r = exp_remainder(v, m) + exp_taylor(v, m);
                assert!((r - v.exp()).abs() < 1e-13 * v.exp().max(1.0), "{v} {m}");
            }
        }
    }
    #[test]
    fn dbar_decays_at_the_target_rate() {
        let ys: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
        let a = decay_audit(&psi2(), 2, &ys, 1.9).unwrap();
        assert!(a.slope >= 1.9, "{a:?}");
        assert!(a.rows.windows(2).all(|w| w[1].sup_dbar < w[0].sup_dbar));
    }

    #[test]
    fn moments_are_stable_under_refinement() {
        let bump = GrowthClassFunction::registered("bump", &[-1.0, 1.0]).unwrap();
        let ext = AlmostAnalyticExtension::build(&bump, 4, ExtensionParams::default()).unwrap();
        let rows = crate::hs::moments(&ext, &[0, 2, 4], &crate::hs::HsParams::default()).unwrap();
        for r in rows {
            assert!(r.value.is_finite() && r.rel_change < 0.01, "{r:?}");
        }
    }
}
