//! Functional calculus of symbols: ψ(σ₀) on certified blocks, the left parametrix
//! of z − σ, the contour terms τ_k and resolvent seminorm audits.

use serde::Serialize;

use crate::almost_analytic::{loglog_slope, AlmostAnalyticExtension};
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::hs::hs_apply;
use crate::poly::{degree, indices_up_to, MultiIndex, Symbolic};
use crate::rep::{c, hermitian_eigen, hermitian_function, max_abs, CMat, RepresentationSlice, C64};
use crate::smooth::GrowthClassFunction;
use crate::symbol::{op_norm, DifferentialSymbol, MatJet, SymbolSample};

/// Relative tolerance for the Hermitian/PSD hypothesis on σ₀ samples.
pub const PSD_TOL: f64 = 1e-10;

fn point(x: &[f64; 3]) -> GroupElement<f64> {
    GroupElement::new(x[0], x[1], x[2])
}

pub(crate) fn sample_psd(s0: &DifferentialSymbol, x: &[f64; 3], slice: &RepresentationSlice) -> Result<SymbolSample> {
    let s = s0.evaluate(&point(x), slice)?;
    s.check_psd(PSD_TOL * max_abs(&s.matrix).max(1.0))?;
    Ok(s)
}

/// ψ(σ₀(x, π_λ)) on the certified block, by eigendecomposition.
pub fn psi_of_symbol(
    s0: &DifferentialSymbol,
    psi: &GrowthClassFunction,
    x: &[f64; 3],
    slice: &RepresentationSlice,
) -> Result<SymbolSample> {
    let mut s = sample_psd(s0, x, slice)?;
    s.matrix = hermitian_function(&s.matrix, |v| psi.eval(v));
    s.label = format!("{}(sigma0)", psi.name);
    Ok(s)
}

/// (z − H)^{−1} from an eigendecomposition H = U diag(μ) U*.
fn resolvent_from_eigen(mu: &[f64], u: &CMat, z: C64) -> Result<CMat> {
    if z.im == 0.0 {
        return Err(Error::RealSpectralParameter { re: z.re, im: z.im });
    }
    let dist = mu.iter().map(|&m| (z - m).norm()).fold(f64::INFINITY, f64::min);
    if dist <= 1e-12 * (1.0 + z.norm()) {
        return Err(Error::SingularResolvent(dist));
    }
    let n = mu.len();
    let d = CMat::from_fn(n, n, |i, j| if i == j { (z - mu[i]).inv() } else { c(0.0) });
    Ok(u * d * u.adjoint())
}

// ---------------------------------------------------------------------------
// Parametrix.

/// Left parametrix of z − Σ_j ε^j σ_j:
/// b₀ = (z − σ₀)^{−1}, b_k = (z − σ₀)^{−1} d_k, d_k = Σ_{j+[α]+l=k, l<k} Δ^α σ_j · X^α b_l.
#[derive(Debug, Clone)]
pub struct ParametrixExpansion {
    sym: Symbolic,
    pub family: Vec<DifferentialSymbol>,
    /// Number of correction terms K.
    pub order: usize,
    /// Largest [α] with Δ^α σ_j ≠ 0 that the recursion or the remainder needs.
    pub reach: u32,
    guard: usize,
    /// (α, Δ^α σ_j) for each j.
    diffs: Vec<Vec<(MultiIndex, DifferentialSymbol)>>,
}

/// σ₀ and the jets of every Δ^α σ_j at one (x, λ), reused for every z.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub x: [f64; 3],
    pub lambda: f64,
    pub n: usize,
    /// Jet order carried by b_K.
    pub extra: u32,
    pub sigma0: CMat,
    pub spectrum: Vec<f64>,
    eigvecs: CMat,
    jets: Vec<Vec<(MultiIndex, MatJet)>>,
}

/// b_k and d_k (d₀ = I) at one z, as jets of order extra + K − k.
#[derive(Debug, Clone)]
pub struct ParametrixSample {
    pub z: C64,
    pub b: Vec<MatJet>,
    pub d: Vec<MatJet>,
}

pub fn parametrix_terms(sym: &Symbolic, family: &[DifferentialSymbol], k: usize) -> Result<ParametrixExpansion> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("the symbol family needs at least σ₀".into()));
    }
    let top = family.iter().flat_map(|s| s.terms.keys().map(degree)).max().unwrap_or(0);
    let reach = top.max(k as u32);
    if reach > sym.cap() {
        return Err(Error::DegreeCap { requested: reach, cap: sym.cap() });
    }
    let mut diffs = Vec::with_capacity(family.len());
    for s in family {
        let mut v = Vec::new();
        for a in indices_up_to(reach) {
            let d = s.difference(sym, &a)?;
            if !d.terms.is_empty() || a == [0, 0, 0] {
                v.push((a, d));
            }
        }
        diffs.push(v);
    }
    let guard = 2 * family.iter().map(|s| s.max_length()).max().unwrap_or(0) as usize + 2;
    Ok(ParametrixExpansion { sym: sym.clone(), family: family.to_vec(), order: k, reach, guard, diffs })
}

impl ParametrixExpansion {
    pub fn guard(&self) -> usize {
        self.guard
    }

    /// Jets of Δ^α σ_j of order extra + K at (x, π_λ) on an n-block.
    pub fn prepare(&self, x: &[f64; 3], lambda: f64, n: usize, extra: u32) -> Result<PreparedSample> {
        let slice = RepresentationSlice::new(lambda, n, self.guard)?;
        let sigma0 = sample_psd(&self.family[0], x, &slice)?.matrix;
        let (spectrum, eigvecs) = hermitian_eigen(&sigma0);
        let top = extra + self.order as u32;
        let jets = self
            .diffs
            .iter()
            .map(|v| v.iter().map(|(a, d)| Ok((*a, d.jet(x, &slice, top)?))).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedSample { x: *x, lambda, n, extra, sigma0, spectrum, eigvecs, jets })
    }

    fn z_minus_sigma0(&self, p: &PreparedSample, z: C64) -> MatJet {
        let top = p.extra + self.order as u32;
        MatJet::constant(top, CMat::identity(p.n, p.n) * z).sub(&p.jets[0][0].1)
    }

    pub fn at(&self, p: &PreparedSample, z: C64) -> Result<ParametrixSample> {
        let top = p.extra + self.order as u32;
        let inv0 = resolvent_from_eigen(&p.spectrum, &p.eigvecs, z)?;
        let b0 = self.z_minus_sigma0(p, z).inverse_with(inv0);
        let mut b = vec![b0];
        let mut d = vec![MatJet::constant(top, CMat::identity(p.n, p.n))];
        for k in 1..=self.order {
            let jk = top - k as u32;
            let mut dk = MatJet::constant(jk, CMat::zeros(p.n, p.n));
            for (j, jets) in p.jets.iter().enumerate().take(k + 1) {
                for (a, dj) in jets {
                    let da = degree(a) as usize;
                    if j + da > k || (j == 0 && da == 0) {
                        continue;
                    }
                    let xb = b[k - j - da].left_derivative(a)?;
                    dk = dk.add(&dj.truncate(jk).mul(&xb.truncate(jk)));
                }
            }
            b.push(b[0].truncate(jk).mul(&dk));
            d.push(dk);
        }
        Ok(ParametrixSample { z, b, d })
    }

    pub fn evaluate(&self, x: &[f64; 3], lambda: f64, z: C64, n: usize, extra: u32) -> Result<ParametrixSample> {
        self.at(&self.prepare(x, lambda, n, extra)?, z)
    }

    /// max_k of the largest entry of (z − σ₀)·b_k − d_k over all jet coefficients,
    /// relative to |z − σ₀|·|b_k| + |d_k| (largest entries over the jets).
    pub fn recursion_residual(&self, p: &PreparedSample, s: &ParametrixSample) -> f64 {
        let a = self.z_minus_sigma0(p, s.z);
        let mut worst: f64 = 0.0;
        for (bk, dk) in s.b.iter().zip(&s.d) {
            let at = a.truncate(bk.order);
            let r = at.mul(bk).sub(dk);
            let size = |j: &MatJet| j.m.values().map(max_abs).fold(0.0, f64::max);
            let scale = (size(&at) * size(bk) + size(dk)).max(f64::MIN_POSITIVE);
            for v in r.m.values() {
                worst = worst.max(max_abs(v) / scale);
            }
        }
        worst
    }

    /// ‖Σ_α Δ^α(z − σ^{(ε)})(x, π_λ) · X^α[Σ_{k≤N} ε^k b_k(x, π_{ε²λ})] − I‖.
    ///
    /// The left factor is the dilated symbol differenced at π_λ; the parametrix terms are
    /// taken at π_{ε²λ}, which carries the same block matrices as the dilation.
    pub fn eps_residual(&self, x: &[f64; 3], lambda: f64, z: C64, n: usize, nn: usize, eps: f64) -> Result<f64> {
        if nn > self.order {
            return Err(Error::InvalidArgument(format!("remainder order {nn} exceeds K = {}", self.order)));
        }
        let reach = self.reach;
        let p = self.prepare(x, eps * eps * lambda, n, reach)?;
        let s = self.at(&p, z)?;
        let mut bsum = MatJet::constant(reach, CMat::zeros(n, n));
        for (k, bk) in s.b.iter().enumerate().take(nn + 1) {
            bsum = bsum.add(&bk.truncate(reach).scale(c(eps.powi(k as i32))));
        }
        let slice = RepresentationSlice::new(lambda, n, self.guard)?;
        let x0 = point(x);
        let mut res = bsum.value() * z - CMat::identity(n, n);
        for (j, sj) in self.family.iter().enumerate() {
            let dil = sj.dilate(eps)?;
            let w = c(eps.powi(j as i32));
            for a in indices_up_to(reach) {
                let da = dil.difference(&self.sym, &a)?;
                if da.terms.is_empty() {
                    continue;
                }
                let m = da.evaluate(&x0, &slice)?.matrix;
                res -= m * bsum.left_derivative(&a)?.value() * w;
            }
        }
        Ok(op_norm(&res))
    }

    /// Remainder norms over an ε list and their log–log slope.
    pub fn eps_study(&self, x: &[f64; 3], lambda: f64, z: C64, n: usize, nn: usize, eps: &[f64]) -> Result<EpsStudy> {
        let residuals = eps.iter().map(|&e| self.eps_residual(x, lambda, z, n, nn, e)).collect::<Result<Vec<_>>>()?;
        let slope = loglog_slope(eps, &residuals);
        Ok(EpsStudy { n: nn, eps: eps.to_vec(), residuals, slope })
    }

    /// τ_k = τ(b_k, ψ) through the generic node sum; b_k is rebuilt at every node.
    pub fn tau_term(&self, ext: &AlmostAnalyticExtension, p: &PreparedSample, k: usize) -> Result<CMat> {
        if k > self.order {
            return Err(Error::InvalidArgument(format!("τ_{k} needs K ≥ {k}")));
        }
        tau_integral(ext, &p.spectrum, |z| Ok(self.at(p, z)?.b[k].value().clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsStudy {
    pub n: usize,
    pub eps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
}

// ---------------------------------------------------------------------------
// Contour terms.

/// τ(a, ψ) = −(1/π) ∫ ∂̄ψ̃(z) a(z) dA(z), normalised so that τ(b₀, ψ) = ψ(σ₀).
/// `poles` are the real singularities of a.
pub fn tau_integral(ext: &AlmostAnalyticExtension, poles: &[f64], a: impl Fn(C64) -> Result<CMat>) -> Result<CMat> {
    Ok(-ext.hs_integral(poles, a)?)
}

/// τ₀ = τ(b₀, ψ) in the eigenbasis of σ₀: one scalar contour integral per eigenvalue.
pub fn tau_principal(ext: &AlmostAnalyticExtension, p: &PreparedSample) -> Result<CMat> {
    hs_apply(ext, &p.sigma0)
}

// ---------------------------------------------------------------------------
// Resolvent bounds.

/// Weights of the sampled seminorm ‖W^{([α]−m)/2} X^β Δ^α (z − σ₀)^{−1}‖, [α] ≤ a, [β] ≤ b.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventWeights {
    pub m: f64,
    pub a: u32,
    pub b: u32,
}

impl Default for ResolventWeights {
    fn default() -> Self {
        ResolventWeights { m: -2.0, a: 1, b: 1 }
    }
}

/// Jets of Δ^α (z − σ₀)^{−1} for [α] ≤ a, from Δ^α(a·r) = 0 and the coproduct:
/// Δ^α r = −r · Σ_{(α₁,α₂) ≠ (0,α)} c Δ^{α₁}(z − σ₀) Δ^{α₂} r.
pub fn resolvent_differences(
    sym: &Symbolic,
    diffs: &[(MultiIndex, MatJet)],
    inv0: CMat,
    z: C64,
) -> Result<Vec<(MultiIndex, MatJet)>> {
    let s0 = &diffs[0].1;
    let n = s0.dim();
    let amat = |a: &MultiIndex| -> Option<MatJet> {
        if *a == [0, 0, 0] {
            return Some(MatJet::constant(s0.order, CMat::identity(n, n) * z).sub(s0));
        }
        diffs.iter().find(|(b, _)| b == a).map(|(_, j)| j.scale(c(-1.0)))
    };
    let r0 = amat(&[0, 0, 0]).expect("α = 0 present").inverse_with(inv0);
    let mut out: Vec<(MultiIndex, MatJet)> = vec![([0, 0, 0], r0.clone())];
    let top = diffs.iter().map(|(a, _)| degree(a)).max().unwrap_or(0);
    for al in indices_up_to(top).into_iter().skip(1) {
        let mut acc = MatJet::constant(s0.order, CMat::zeros(n, n));
        let mut lead = None;
        for ((a1, a2), k) in sym.coproduct(&al)? {
            let k = num_traits::ToPrimitive::to_f64(&k).unwrap_or(0.0);
            if a1 == [0, 0, 0] && a2 == al {
                lead = Some(k);
                continue;
            }
            let (Some(da), Some(dr)) = (amat(&a1), out.iter().find(|(b, _)| *b == a2).map(|(_, j)| j)) else {
                continue;
            };
            acc = acc.add(&da.mul(dr).scale(c(k)));
        }
        let lead = lead.filter(|v| *v != 0.0).ok_or_else(|| Error::InvalidArgument("coproduct lacks the (0, α) term".into()))?;
        out.push((al, r0.mul(&acc).scale(c(-1.0 / lead))));
    }
    Ok(out)
}

/// Sampled seminorm of (z − σ₀)^{−1} for each z; sup over samples and indices.
pub fn resolvent_seminorms(
    sym: &Symbolic,
    s0: &DifferentialSymbol,
    zs: &[C64],
    samples: &[([f64; 3], f64)],
    n: usize,
    w: &ResolventWeights,
) -> Result<Vec<f64>> {
    if w.a > sym.cap() {
        return Err(Error::DegreeCap { requested: w.a, cap: sym.cap() });
    }
    if let Some(z) = zs.iter().find(|z| z.im == 0.0) {
        return Err(Error::RealSpectralParameter { re: z.re, im: z.im });
    }
    let guard = 2 * s0.max_length() as usize + 2;
    let alphas: Vec<(MultiIndex, DifferentialSymbol)> =
        indices_up_to(w.a).into_iter().map(|a| Ok((a, s0.difference(sym, &a)?))).collect::<Result<_>>()?;
    let mut out = vec![0.0f64; zs.len()];
    for (x, lambda) in samples {
        let slice = RepresentationSlice::new(*lambda, n, guard)?;
        let sigma0 = sample_psd(s0, x, &slice)?.matrix;
        let (mu, u) = hermitian_eigen(&sigma0);
        let diffs: Vec<(MultiIndex, MatJet)> =
            alphas.iter().map(|(a, d)| Ok((*a, d.jet(x, &slice, w.b)?))).collect::<Result<_>>()?;
        let l = slice.sublaplacian();
        let weights: Vec<CMat> =
            (0..=w.a).map(|d| hermitian_function(&l, |v| (1.0 + v).powf((d as f64 - w.m) / 2.0))).collect();
        for (zi, &z) in zs.iter().enumerate() {
            let inv0 = resolvent_from_eigen(&mu, &u, z)?;
            for (a, jet) in resolvent_differences(sym, &diffs, inv0, z)? {
                let wl = &weights[degree(&a) as usize];
                for be in indices_up_to(w.b) {
                    out[zi] = out[zi].max(op_norm(&(wl * &jet.m[&be])));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventRow {
    pub re: f64,
    pub im: f64,
    /// 1 + (1 + |z|)/|Im z|
    pub base: f64,
    pub value: f64,
    pub bound: f64,
    pub holdout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventAudit {
    pub weights: ResolventWeights,
    /// Least-squares exponent of log value against log base on the training grid.
    pub p: f64,
    /// Exponent used in the bound, max(p, 0).
    pub p_bound: f64,
    /// Smallest C with value(z) ≤ C·base(z')^p for every training z and the next
    /// training z' above it in |Im z| (same Re z).
    pub c: f64,
    /// Largest |log value − fit| on the training grid.
    pub max_residual: f64,
    /// Rows (training and holdout) above the bound.
    pub violations: usize,
    pub rows: Vec<ResolventRow>,
}

impl ResolventAudit {
    pub fn dominated(&self) -> bool {
        self.violations == 0
    }
}

pub fn resolvent_base(z: C64) -> f64 {
    1.0 + (1.0 + z.norm()) / z.im.abs()
}

/// Fits C(1 + (1+|z|)/|Im z|)^p on `train` and checks the bound on `train` and `holdout`
/// (`holdout` is meant to interleave the training levels of |Im z|, see [`z_grid`]).
pub fn resolvent_bound_audit(
    sym: &Symbolic,
    s0: &DifferentialSymbol,
    train: &[C64],
    holdout: &[C64],
    samples: &[([f64; 3], f64)],
    n: usize,
    w: &ResolventWeights,
) -> Result<ResolventAudit> {
    if train.len() < 2 {
        return Err(Error::InvalidArgument("the training grid needs at least two points".into()));
    }
    let zs: Vec<C64> = train.iter().chain(holdout).copied().collect();
    let values = resolvent_seminorms(sym, s0, &zs, samples, n, w)?;
    let xs: Vec<f64> = train.iter().map(|&z| resolvent_base(z).ln()).collect();
    let ys: Vec<f64> = values[..train.len()].iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let p_fit = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - p_fit * mx;
    let max_residual = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - p_fit * x).abs()).fold(0.0, f64::max);
    // a growth exponent; a negative fit (values saturating away from the spectrum) bounds with p = 0
    let p = p_fit.max(0.0);
    // The sampled norm decreases in |Im z| at fixed Re z while the base does too, so on
    // each segment between consecutive training levels value ≤ value(lower level) and
    // base ≥ base(upper level); C covers every segment, not only the grid points.
    let mut log_c = f64::NEG_INFINITY;
    for (i, z) in train.iter().enumerate() {
        let upper = train
            .iter()
            .filter(|w| w.re == z.re && w.im.signum() == z.im.signum() && w.im.abs() > z.im.abs())
            .min_by(|a, b| a.im.abs().total_cmp(&b.im.abs()))
            .copied()
            .unwrap_or(*z);
        log_c = log_c.max(ys[i] - p * resolvent_base(upper).ln());
    }
    let cc = log_c.exp();
    let rows: Vec<ResolventRow> = zs
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(i, (&z, &v))| {
            let base = resolvent_base(z);
            ResolventRow { re: z.re, im: z.im, base, value: v, bound: cc * base.powf(p), holdout: i >= train.len() }
        })
        .collect();
    let violations = rows.iter().filter(|r| r.value > r.bound * (1.0 + 1e-12)).count();
    Ok(ResolventAudit { weights: w.clone(), p: p_fit, p_bound: p, c: cc, max_residual, violations, rows })
}

/// Grid of z with Re z on `n_re` equispaced points of [−re_max, re_max] and |Im z| on `n_im`
/// geometric points of [im_lo, im_hi], both signs. With `interleaved` the |Im z| levels are
/// the geometric midpoints of the plain grid and Re z is unchanged.
pub fn z_grid(re_max: f64, im_lo: f64, im_hi: f64, n_re: usize, n_im: usize, interleaved: bool) -> Vec<C64> {
    let (n_re, n_im) = (n_re.max(2), n_im.max(2));
    let h = 2.0 * re_max / (n_re - 1) as f64;
    let r = (im_hi / im_lo).ln() / (n_im - 1) as f64;
    let (k_im, off) = if interleaved { (n_im - 1, 0.5) } else { (n_im, 0.0) };
    let mut out = Vec::with_capacity(2 * n_re * k_im);
    for i in 0..n_re {
        let re = -re_max + i as f64 * h;
        for j in 0..k_im {
            let im = im_lo * ((j as f64 + off) * r).exp();
            out.push(C64::new(re, im));
            out.push(C64::new(re, -im));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::almost_analytic::ExtensionParams;
    use crate::hs::HsParams;
    use crate::symbol::{Coefficient, DivergenceForm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn family() -> (Symbolic, Vec<DifferentialSymbol>) {
        let sym = Symbolic::heisenberg();
        let (s0, s1) = DivergenceForm::test_family().symbols(&sym.fields);
        (sym, vec![s0, s1])
    }

    fn random_point(rng: &mut impl Rng) -> ([f64; 3], f64, C64) {
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let lambda = rng.random_range(0.2..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let z = C64::new(rng.random_range(-2.0..6.0), rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        (x, lambda, z)
    }

    #[test]
    fn psi_of_symbol_trivial_cases() {
        let (_, f) = family();
        let slice = RepresentationSlice::new(0.7, 6, 6).unwrap();
        let x = [0.3, 0.1, 0.8];
        let raw = f[0].evaluate(&point(&x), &slice).unwrap().matrix;
        let id = GrowthClassFunction::new("id", 1.0, None, |j| j.clone());
        let s = psi_of_symbol(&f[0], &id, &x, &slice).unwrap();
        assert!(max_abs(&(&s.matrix - &raw)) < 1e-12 * max_abs(&raw));
        let one = GrowthClassFunction::new("one", 0.0, None, |j| crate::jet::Jet::constant(1, j.order, 1.0));
        let s = psi_of_symbol(&f[0], &one, &x, &slice).unwrap();
        assert!(max_abs(&(&s.matrix - CMat::identity(6, 6))) < 1e-12);
    }

    #[test]
    fn smoothed_indicator_counts_eigenvalues() {
        let (_, f) = family();
        let slice = RepresentationSlice::new(0.9, 8, 6).unwrap();
        let x = [0.6, 0.2, 0.4];
        let (mu, _) = hermitian_eigen(&f[0].evaluate(&point(&x), &slice).unwrap().matrix);
        let (a, b, d) = (1.0, 6.0, 0.05);
        // no eigenvalue inside a ramp, so the count is exact
        assert!(mu.iter().all(|&m| (m - a).abs() > d && (m - b).abs() > d));
        let psi = GrowthClassFunction::registered("window", &[a, b, d]).unwrap();
        let s = psi_of_symbol(&f[0], &psi, &x, &slice).unwrap();
        let tr: f64 = (0..8).map(|i| s.matrix[(i, i)].re).sum();
        let count = mu.iter().filter(|&&m| m > a && m < b).count() as f64;
        assert!((tr - count).abs() < 1e-10, "{tr} vs {count}");
    }

    #[test]
    fn rejects_indefinite_symbols() {
        let sym = Symbolic::heisenberg();
        let s = DifferentialSymbol::term([0, 0, 0], Coefficient::Const(-1.0));
        let slice = RepresentationSlice::new(1.0, 4, 2).unwrap();
        let psi = GrowthClassFunction::registered("resolvent", &[]).unwrap();
        assert!(matches!(psi_of_symbol(&s, &psi, &[0.0; 3], &slice), Err(Error::NotPsd(_))));
        let p = parametrix_terms(&sym, &[DifferentialSymbol::identity()], 0).unwrap();
        let e = p.evaluate(&[0.0; 3], 1.0, C64::new(2.0, 0.0), 4, 0);
        assert!(matches!(e, Err(Error::RealSpectralParameter { .. })));
        let e = p.evaluate(&[0.0; 3], 1.0, C64::new(1.0, 1e-14), 4, 0);
        assert!(matches!(e, Err(Error::SingularResolvent(_))));
    }

    #[test]
    fn recursion_holds_at_random_points() {
        let (sym, f) = family();
        let p = parametrix_terms(&sym, &f, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let (x, lambda, z) = random_point(&mut rng);
            let prep = p.prepare(&x, lambda, 6, 2).unwrap();
            let s = p.at(&prep, z).unwrap();
            let r = p.recursion_residual(&prep, &s);
            assert!(r < 1e-10, "residual {r}");
            let b0 = s.b[0].value();
            let lhs = (CMat::identity(6, 6) * z - &prep.sigma0) * b0;
            assert!(max_abs(&(lhs - CMat::identity(6, 6))) < 1e-10);
        }
    }

    /// σ₁ b₀ + Σ_{[α]=1} (Δ^α σ₀) b₀ (X^α σ₀) b₀, with Δ^α σ₀ read from the structure
    /// constants term by term and b₀ from a dense inverse.
    fn d1_by_hand(sym: &Symbolic, f: &[DifferentialSymbol], x: &[f64; 3], lambda: f64, z: C64, n: usize) -> CMat {
        let slice = RepresentationSlice::new(lambda, n, 6).unwrap();
        let eval = |terms: &mut dyn Iterator<Item = (MultiIndex, f64)>| {
            let mut m = CMat::zeros(n, n);
            for (g, v) in terms {
                m += slice.monomial_matrix(&g).unwrap() * c(v);
            }
            m
        };
        let s0 = eval(&mut f[0].terms.iter().map(|(b, cf)| (*b, cf.value(x))));
        let s1 = eval(&mut f[1].terms.iter().map(|(b, cf)| (*b, cf.value(x))));
        let b0 = (CMat::identity(n, n) * z - &s0).try_inverse().unwrap();
        let mut d1 = &s1 * &b0;
        for al in [[1, 0, 0], [0, 1, 0]] {
            let mut diff = Vec::new();
            for (b, cf) in &f[0].terms {
                for (g, k) in sym.difference_structure_constants(&al, b).unwrap().terms {
                    diff.push((g, num_traits::ToPrimitive::to_f64(&k).unwrap() * cf.value(x)));
                }
            }
            let ds0 = eval(&mut diff.into_iter());
            let xs0 = eval(&mut f[0].terms.iter().map(|(b, cf)| (*b, cf.left_jet(x, 1).unwrap().get(&al))));
            d1 += ds0 * &b0 * xs0 * &b0;
        }
        d1
    }

    #[test]
    fn first_correction_matches_direct_assembly() {
        let (sym, f) = family();
        let p = parametrix_terms(&sym, &f, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (x, lambda, z) = random_point(&mut rng);
            let s = p.evaluate(&x, lambda, z, 6, 0).unwrap();
            let hand = d1_by_hand(&sym, &f, &x, lambda, z, 6);
            let err = max_abs(&(s.d[1].value() - &hand));
            assert!(err < 1e-10 * max_abs(&hand).max(1.0), "d1 mismatch {err}");
        }
    }

    #[test]
    fn remainder_slopes() {
        let (sym, f) = family();
        let p = parametrix_terms(&sym, &f, 2).unwrap();
        let eps: Vec<f64> = (3..=9).map(|k| 0.5f64.powi(k)).collect();
        for nn in 0..=2 {
            let st = p.eps_study(&[0.3, 0.7, 0.2], 0.8, C64::new(1.5, 0.5), 6, nn, &eps).unwrap();
            assert!(st.slope >= nn as f64 + 0.9, "N = {nn}: slope {} ({:?})", st.slope, st.residuals);
        }
    }

    #[test]
    fn remainder_of_an_invariant_symbol_vanishes_beyond_order_zero() {
        // constant coefficients: b₀ alone inverts z − σ₀ exactly up to the Δ terms
        let sym = Symbolic::heisenberg();
        let (s0, s1) = DivergenceForm::constant([[1.0, 0.0], [0.0, 1.0]], 0.0).symbols(&sym.fields);
        assert!(s1.terms.is_empty());
        let p = parametrix_terms(&sym, &[s0], 2).unwrap();
        let s = p.evaluate(&[0.1, 0.2, 0.3], 0.6, C64::new(1.0, 0.3), 6, 0).unwrap();
        // X-derivatives vanish, so every d_k with k ≥ 1 is zero
        for k in 1..=2 {
            assert!(max_abs(s.d[k].value()) < 1e-13);
        }
    }

    fn resolvent_ext(name: &str, params: &[f64]) -> AlmostAnalyticExtension {
        let psi = GrowthClassFunction::registered(name, params).unwrap();
        AlmostAnalyticExtension::build(&psi, 3, ExtensionParams { window: 16.0, ..Default::default() }).unwrap()
    }

    #[test]
    fn principal_term_paths_agree() {
        let (sym, f) = family();
        let p = parametrix_terms(&sym, &f, 1).unwrap();
        let ext = resolvent_ext("resolvent2", &[]);
        let psi = GrowthClassFunction::registered("resolvent2", &[]).unwrap();
        let prep = p.prepare(&[0.2, 0.5, 0.9], 0.5, 3, 0).unwrap();
        let fast = tau_principal(&ext, &prep).unwrap();
        let slice = RepresentationSlice::new(0.5, 3, p.guard()).unwrap();
        let oracle = psi_of_symbol(&f[0], &psi, &[0.2, 0.5, 0.9], &slice).unwrap().matrix;
        assert!(max_abs(&(&fast - &oracle)) < 1e-8);
        let generic = p.tau_term(&ext, &prep, 0).unwrap();
        assert!(max_abs(&(&generic - &oracle)) < 1e-8, "{}", max_abs(&(&generic - &oracle)));
    }

    /// Coarser rule for the node-by-node τ_k sums.
    fn coarse() -> HsParams {
        HsParams { n_gl: 10, n_y: 8, n_knot: 6, y_ratio: 1.6, tol: 1e-7, ..Default::default() }
    }

    #[test]
    fn tau_terms_are_linear_and_vanish_for_zero() {
        let (sym, f) = family();
        let p = parametrix_terms(&sym, &f, 1).unwrap();
        let prep = p.prepare(&[0.4, 0.1, 0.3], 0.6, 3, 0).unwrap();
        let zero = resolvent_ext("zero", &[]);
        for k in 0..=1 {
            assert!(max_abs(&p.tau_term(&zero, &prep, k).unwrap()) == 0.0);
        }
        let g1 = GrowthClassFunction::registered("resolvent2", &[]).unwrap();
        let g2 = GrowthClassFunction::registered("gaussian", &[1.5]).unwrap();
        let par = ExtensionParams { window: 16.0, ..Default::default() };
        let build = |g: &GrowthClassFunction| AlmostAnalyticExtension::build(g, 3, par.clone()).unwrap().with_quadrature(coarse());
        let (e1, e2, e12) = (build(&g1), build(&g2), build(&g1.add(&g2)));
        let t1 = p.tau_term(&e1, &prep, 1).unwrap();
        let t2 = p.tau_term(&e2, &prep, 1).unwrap();
        let t12 = p.tau_term(&e12, &prep, 1).unwrap();
        let err = max_abs(&(&t12 - &t1 - &t2));
        assert!(err < 1e-6 * max_abs(&t12).max(1.0), "linearity {err}");
        // ψ real: τ(a, ψ)* = τ(z ↦ a(z̄)*, ψ)
        let adj = tau_integral(&e1, &prep.spectrum, |z| Ok(p.at(&prep, z.conj())?.b[1].value().adjoint())).unwrap();
        assert!(max_abs(&(adj - t1.adjoint())) < 1e-9);
    }

    #[test]
    fn scalar_resolvent_norms() {
        let sym = Symbolic::heisenberg();
        let cst = 0.7;
        let s0 = DifferentialSymbol::term([0, 0, 0], Coefficient::Const(cst));
        let zs = z_grid(10.0, 1e-3, 1.0, 5, 7, false);
        let w = ResolventWeights { m: 0.0, a: 1, b: 1 };
        let v = resolvent_seminorms(&sym, &s0, &zs, &[([0.1, 0.2, 0.3], 0.8)], 4, &w).unwrap();
        for (z, v) in zs.iter().zip(&v) {
            assert!((v - 1.0 / (z - cst).norm()).abs() < 1e-12 * v);
        }
        let train = z_grid(10.0, 1e-3, 1.0, 11, 9, false);
        let hold = z_grid(10.0, 1e-3, 1.0, 11, 9, true);
        let a = resolvent_bound_audit(&sym, &s0, &train, &hold, &[([0.0; 3], 1.0)], 4, &ResolventWeights::default()).unwrap();
        assert!(a.p <= 1.1, "p = {}", a.p);
        assert!(a.dominated());
    }

    #[test]
    fn resolvent_differences_agree_from_both_sides() {
        let (sym, f) = family();
        let x = [0.3, 0.6, 0.1];
        let slice = RepresentationSlice::new(0.9, 5, 6).unwrap();
        let z = C64::new(2.0, 0.4);
        let diffs: Vec<(MultiIndex, MatJet)> = indices_up_to(2)
            .into_iter()
            .map(|a| (a, f[0].difference(&sym, &a).unwrap().jet(&x, &slice, 1).unwrap()))
            .collect();
        let a0 = MatJet::constant(1, CMat::identity(5, 5) * z).sub(&diffs[0].1);
        let inv0 = a0.value().clone().try_inverse().unwrap();
        let left = resolvent_differences(&sym, &diffs, inv0, z).unwrap();
        // right route: Δ^α(r·a) = 0 solved for Δ^α r on the left of a
        let amat = |a: &MultiIndex| if *a == [0, 0, 0] { a0.clone() } else { diffs.iter().find(|(b, _)| b == a).unwrap().1.scale(c(-1.0)) };
        let mut right: Vec<(MultiIndex, MatJet)> = vec![left[0].clone()];
        for al in indices_up_to(2).into_iter().skip(1) {
            let mut acc = MatJet::constant(1, CMat::zeros(5, 5));
            for ((a1, a2), k) in sym.coproduct(&al).unwrap() {
                if a2 == [0, 0, 0] && a1 == al {
                    continue;
                }
                let r1 = right.iter().find(|(b, _)| *b == a1).unwrap().1.clone();
                acc = acc.add(&r1.mul(&amat(&a2)).scale(c(num_traits::ToPrimitive::to_f64(&k).unwrap())));
            }
            right.push((al, acc.mul(&left[0].1).scale(c(-1.0))));
        }
        for ((a, l), (_, r)) in left.iter().zip(&right) {
            for (g, m) in &l.m {
                assert!(max_abs(&(m - &r.m[g])) < 1e-10, "α = {a:?}, γ = {g:?}");
            }
        }
    }

    #[test]
    fn resolvent_norm_decreases_away_from_the_axis() {
        let (_, f) = family();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (x, lambda, _) = random_point(&mut rng);
            let slice = RepresentationSlice::new(lambda, 6, 6).unwrap();
            let (mu, u) = hermitian_eigen(&f[0].evaluate(&point(&x), &slice).unwrap().matrix);
            for re in [-1.0, 0.5, 2.0, 7.0] {
                let mut prev = f64::INFINITY;
                let mut im = 1e-3;
                while im < 2.0 {
                    let v = op_norm(&resolvent_from_eigen(&mu, &u, C64::new(re, im)).unwrap());
                    assert!(v <= prev * (1.0 + 1e-12));
                    prev = v;
                    im *= 2.0;
                }
            }
        }
    }

    #[test]
    fn resolvent_bound_dominates_for_the_test_family() {
        let (sym, f) = family();
        let train = z_grid(10.0, 1e-3, 1.0, 9, 7, false);
        let hold = z_grid(10.0, 1e-3, 1.0, 9, 7, true);
        let samples = [([0.1, 0.4, 0.7], 0.5), ([0.8, 0.3, 0.2], -1.0)];
        let a = resolvent_bound_audit(&sym, &f[0], &train, &hold, &samples, 6, &ResolventWeights::default()).unwrap();
        assert!(a.p.is_finite() && a.p > 0.0);
        assert!(a.dominated(), "p = {}, violations {}", a.p, a.violations);
    }
}
