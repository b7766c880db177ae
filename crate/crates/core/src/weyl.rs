//! Weyl-law quantities: phase-space volumes of sublevel sets of σ₀, exact spectra of
//! invariant operators on the standard nilmanifold, counting functions and the
//! trace identities that tie both sides together.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fc::sample_psd;
use crate::poly::Fields;
use crate::quad::{composite, GaussLegendre};
use crate::rep::{certified_oscillator_spectrum, hermitian_eigen, PlancherelQuadrature, RepresentationSlice};
use crate::smooth::GrowthClassFunction;
use crate::symbol::{DifferentialSymbol, DivergenceForm};

/// Homogeneous dimension of H₁.
pub const Q_DIM: i32 = 4;

/// Eigenvalues within this distance of an interval endpoint are counted in and flagged.
pub const TIE_TOL: f64 = 1e-9;

/// Relative agreement required of oscillator eigenvalues under truncation doubling.
const SPECTRUM_TOL: f64 = 1e-11;

/// Largest truncation the dense path will try before giving up.
const DENSE_CAP: usize = 1024;

// ---------------------------------------------------------------------------
// x-quadrature.

/// Tensor midpoint rule over a box in exponential coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct XQuadrature {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub label: String,
}

impl XQuadrature {
    pub fn uniform(lo: [f64; 3], hi: [f64; 3], n: [usize; 3]) -> Result<Self> {
        if n.contains(&0) || (0..3).any(|i| hi[i] <= lo[i]) {
            return Err(Error::InvalidArgument("x-window needs lo < hi and at least one node per axis".into()));
        }
        let h: Vec<f64> = (0..3).map(|i| (hi[i] - lo[i]) / n[i] as f64).collect();
        let w = h.iter().product::<f64>();
        let mut nodes = Vec::with_capacity(n[0] * n[1] * n[2]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    nodes.push([
                        lo[0] + (i as f64 + 0.5) * h[0],
                        lo[1] + (j as f64 + 0.5) * h[1],
                        lo[2] + (k as f64 + 0.5) * h[2],
                    ]);
                }
            }
        }
        let weights = vec![w; nodes.len()];
        Ok(XQuadrature { nodes, weights, label: format!("box {lo:?}..{hi:?} x {n:?}") })
    }

    /// Unit-volume fundamental domain [0,1)³ of the standard lattice.
    pub fn nilmanifold(n: usize) -> Result<Self> {
        let mut q = Self::uniform([0.0; 3], [1.0; 3], [n; 3])?;
        q.label = format!("nilmanifold [0,1)^3 x {n}^3");
        Ok(q)
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Frozen-coefficient quadratic symbols.

/// σ₀(x, ·) = −(a₁₁X̂² + a₁₂(X̂Ŷ + ŶX̂) + a₂₂Ŷ²) + V at one x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrozenQuadratic {
    pub a: [[f64; 2]; 2],
    pub v: f64,
}

impl FrozenQuadratic {
    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    /// Extreme eigenvalues of A.
    pub fn a_range(&self) -> (f64, f64) {
        let m = 0.5 * (self.a[0][0] + self.a[1][1]);
        let r = (0.25 * (self.a[0][0] - self.a[1][1]).powi(2) + self.a[0][1].powi(2)).sqrt();
        (m - r, m + r)
    }

    /// Ground level of the A-weighted oscillator at |λ| = 1.
    pub fn ground(&self) -> f64 {
        self.det().max(0.0).sqrt()
    }
}

/// Reads A(x), V(x) off σ₀ when it has the divergence-form shape; `None` otherwise.
/// Uses X̂Ŷ + ŶX̂ = 2X̂Ŷ − T̂ in PBW order.
pub fn frozen_quadratic(s0: &DifferentialSymbol, x: &[f64; 3]) -> Option<FrozenQuadratic> {
    let (mut a11, mut a22, mut xy, mut t, mut v) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (b, cf) in &s0.terms {
        let val = cf.value(x);
        match b {
            [0, 0, 0] => v = val,
            [2, 0, 0] => a11 = -val,
            [0, 2, 0] => a22 = -val,
            [1, 1, 0] => xy = -val,
            [0, 0, 1] => t = val,
            _ => return None,
        }
    }
    let a12 = 0.5 * xy;
    if (t - a12).abs() > 1e-12 * (1.0 + a12.abs()) {
        return None;
    }
    let f = FrozenQuadratic { a: [[a11, a12], [a12, a22]], v };
    (f.a_range().0 >= -1e-12 && f.det() > 0.0).then_some(f)
}

/// Oscillator levels μ_k of σ_A(π_{±1}) up to `upper`, for both signs of λ.
#[derive(Debug, Clone)]
struct Levels {
    v: f64,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl Levels {
    fn new(f: &FrozenQuadratic, upper: f64) -> Result<Self> {
        let get = |s: f64| -> Result<Vec<f64>> {
            if upper < 0.0 {
                return Ok(Vec::new());
            }
            Ok(certified_oscillator_spectrum(s, f.a, upper, SPECTRUM_TOL)?.values)
        };
        Ok(Levels { v: f.v, plus: get(1.0)?, minus: get(-1.0)? })
    }

    fn at(&self, lambda: f64) -> &[f64] {
        if lambda > 0.0 {
            &self.plus
        } else {
            &self.minus
        }
    }
}

/// (count, ties) of |λ|μ_k + V in [a, b]; σ₀(x, π_λ) ≅ |λ|σ_A(π_{sgn λ}) + V by homogeneity.
fn count_levels(levels: &Levels, lambda: f64, a: f64, b: f64) -> (usize, usize) {
    let l = lambda.abs();
    let mut n = 0;
    let mut ties = 0;
    for &mu in levels.at(lambda) {
        let e = l * mu + levels.v;
        if e > b + TIE_TOL {
            break;
        }
        if e >= a - TIE_TOL {
            n += 1;
            if (e - a).abs() <= TIE_TOL || (e - b).abs() <= TIE_TOL {
                ties += 1;
            }
        }
    }
    (n, ties)
}

/// Dense fallback: eigenvalues of the certified block, accepted once the count is stable under doubling.
fn dense_count(s0: &DifferentialSymbol, x: &[f64; 3], lambda: f64, n0: usize, a: f64, b: f64) -> Result<(usize, usize)> {
    let guard = 2 * s0.max_length() as usize + 2;
    let count = |n: usize| -> Result<(usize, usize)> {
        let slice = RepresentationSlice::new(lambda, n, guard)?;
        let s = sample_psd(s0, x, &slice)?;
        let ev = hermitian_eigen(&s.matrix).0;
        let inside = ev.iter().filter(|&&e| e >= a - TIE_TOL && e <= b + TIE_TOL);
        let ties = inside.clone().filter(|&&e| (e - a).abs() <= TIE_TOL || (e - b).abs() <= TIE_TOL).count();
        Ok((inside.count(), ties))
    };
    let mut n = n0.max(8);
    let mut prev = count(n)?;
    while 2 * n <= DENSE_CAP {
        n *= 2;
        let next = count(n)?;
        if next == prev {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::CapInsufficient(format!("eigenvalue count of sigma0 at x = {x:?}, lambda = {lambda} not stable up to truncation {DENSE_CAP}")))
}

// ---------------------------------------------------------------------------
// Phase-space volume.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeylPath {
    /// Frozen-coefficient oscillator spectra, exact homogeneity in λ.
    Quadratic,
    /// Dense certified blocks per node.
    Dense,
}

/// ∫∫ Tr 1_{[a,b]}(σ₀(x, π)) dx dμ(π) by tensor quadrature.
#[derive(Debug, Clone, Serialize)]
pub struct WeylIntegral {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    /// Same sum on the rule with every λ-panel halved.
    pub refined: f64,
    pub error: f64,
    /// Estimate of the strip |λ| < λ_min, not included in `value`.
    pub tail: f64,
    pub x_nodes: usize,
    pub lambda_nodes: usize,
    pub lambda_min: f64,
    pub cutoff: f64,
    pub ties: usize,
    pub path: WeylPath,
}

enum NodeCounter<'a> {
    Quadratic(Vec<Levels>),
    Dense(&'a DifferentialSymbol),
}

impl NodeCounter<'_> {
    fn count(&self, ix: usize, x: &[f64; 3], lambda: f64, trunc: usize, a: f64, b: f64) -> Result<(usize, usize)> {
        match self {
            NodeCounter::Quadratic(levels) => Ok(count_levels(&levels[ix], lambda, a, b)),
            NodeCounter::Dense(s0) => {
                let n0 = if trunc > 0 { trunc } else { (b.max(1.0) / lambda.abs()).ceil() as usize + 8 };
                dense_count(s0, x, lambda, n0.min(DENSE_CAP), a, b)
            }
        }
    }
}

/// Frozen forms at every x-node when σ₀ has the divergence-form shape everywhere.
fn frozen_all(s0: &DifferentialSymbol, xq: &XQuadrature) -> Option<Vec<FrozenQuadratic>> {
    xq.nodes.iter().map(|x| frozen_quadratic(s0, x)).collect()
}

pub fn weyl_integral(
    s0: &DifferentialSymbol,
    a: f64,
    b: f64,
    xq: &XQuadrature,
    pl: &PlancherelQuadrature,
) -> Result<WeylIntegral> {
    let mut out = WeylIntegral {
        a,
        b,
        value: 0.0,
        refined: 0.0,
        error: 0.0,
        tail: 0.0,
        x_nodes: xq.nodes.len(),
        lambda_nodes: pl.nodes.len(),
        lambda_min: pl.lambda_min,
        cutoff: pl.cutoff,
        ties: 0,
        path: WeylPath::Dense,
    };
    if a > b {
        out.path = frozen_all(s0, xq).map_or(WeylPath::Dense, |_| WeylPath::Quadratic);
        return Ok(out);
    }
    let counter = match frozen_all(s0, xq) {
        Some(forms) => {
            // every level with |λ_min| μ + V ≤ b is resolved; μ beyond that cannot enter at any node
            for f in &forms {
                if f.v <= b && (b - f.v) / f.ground() > pl.cutoff * (1.0 + 1e-12) {
                    return Err(Error::CapInsufficient(format!(
                        "Plancherel cutoff {} is below the last nonzero count at {:.6e}",
                        pl.cutoff,
                        (b - f.v) / f.ground()
                    )));
                }
            }
            let levels = forms.iter().map(|f| Levels::new(f, (b - f.v) / pl.lambda_min)).collect::<Result<Vec<_>>>()?;
            out.path = WeylPath::Quadratic;
            NodeCounter::Quadratic(levels)
        }
        None => {
            for x in &xq.nodes {
                sample_psd(s0, x, &RepresentationSlice::new(1.0, 8, 2 * s0.max_length() as usize + 2)?)?;
            }
            NodeCounter::Dense(s0)
        }
    };
    let sum = |rule: &PlancherelQuadrature| -> Result<(f64, usize)> {
        let mut total = 0.0;
        let mut ties = 0;
        for (ix, (x, wx)) in xq.nodes.iter().zip(&xq.weights).enumerate() {
            let mut inner = 0.0;
            for (i, (l, wl)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                let (n, t) = counter.count(ix, x, *l, rule.truncation[i], a, b)?;
                inner += wl * n as f64;
                ties += t;
            }
            total += wx * inner;
        }
        Ok((total, ties))
    };
    let (value, ties) = sum(pl)?;
    let (refined, _) = sum(&pl.refine()?)?;
    let lm = pl.lambda_min;
    let mut tail = 0.0;
    for (ix, (x, wx)) in xq.nodes.iter().zip(&xq.weights).enumerate() {
        let edge = counter.count(ix, x, lm, 0, a, b)?.0 + counter.count(ix, x, -lm, 0, a, b)?.0;
        tail += wx * inverse_tail(pl.c_pl, lm, edge as f64);
    }
    out.value = value;
    out.refined = refined;
    out.error = (refined - value).abs();
    out.tail = tail;
    out.ties = ties;
    Ok(out)
}

/// ∫_{|λ|<λ_m} c|λ| g(λ) dλ for g ~ K/|λ| near 0, from g(±λ_m) summed into `edge`.
fn inverse_tail(c_pl: f64, lm: f64, edge: f64) -> f64 {
    c_pl * lm * lm * edge
}

/// Jumps of λ ↦ #{spec σ₀(x, π_λ) ∩ [a, b]} in [λ_min, ∞), over all x-nodes (quadratic path only).
pub fn weyl_breaks(s0: &DifferentialSymbol, a: f64, b: f64, xq: &XQuadrature, lambda_min: f64) -> Result<Vec<f64>> {
    let Some(forms) = frozen_all(s0, xq) else { return Ok(Vec::new()) };
    let mut out = Vec::new();
    for f in &forms {
        let lv = Levels::new(f, (b - f.v) / lambda_min)?;
        for mu in lv.plus.iter().chain(&lv.minus) {
            for e in [a, b] {
                let l = (e - f.v) / mu;
                if l >= lambda_min {
                    out.push(l);
                }
            }
        }
    }
    out.sort_by(|p, q| p.partial_cmp(q).unwrap());
    out.dedup();
    Ok(out)
}

/// Plancherel rule for [a, b] whose panels end at every jump of the count, so Gauss
/// nodes only see piecewise c|λ|·const integrands.
pub fn aligned_plancherel(
    s0: &DifferentialSymbol,
    a: f64,
    b: f64,
    xq: &XQuadrature,
    c_pl: f64,
    lambda_min: f64,
    order: usize,
) -> Result<PlancherelQuadrature> {
    let forms = frozen_all(s0, xq)
        .ok_or_else(|| Error::InvalidArgument("aligned Plancherel rule needs a divergence-form sigma0".into()))?;
    let cutoff = forms.iter().map(|f| (b - f.v) / f.ground()).fold(lambda_min, f64::max) * 1.25;
    let base = PlancherelQuadrature::geometric(c_pl, cutoff, lambda_min, 2.0, order)?;
    base.with_breaks(&weyl_breaks(s0, a, b, xq, lambda_min)?)
}

// ---------------------------------------------------------------------------
// Invariant operators on the nilmanifold.

/// Enumeration limits: sectors 1 ≤ |n| ≤ n_max, levels k ≤ k_max, torus modes |m|_∞ ≤ torus,
/// and only eigenvalues ≤ upper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralCaps {
    pub n_max: u64,
    pub k_max: usize,
    pub torus: i64,
    pub upper: f64,
}

impl SpectralCaps {
    /// Caps that never bind below `upper`.
    pub fn covering(a: [[f64; 2]; 2], v: f64, eps: f64, upper: f64) -> Self {
        let f = FrozenQuadratic { a, v };
        let (lo, _) = f.a_range();
        let room = ((upper - v) / (eps * eps)).max(0.0);
        SpectralCaps {
            n_max: (room / (2.0 * PI * f.ground())).floor() as u64 + 1,
            k_max: ((room / (2.0 * PI * lo) - 1.0) / 2.0).max(0.0).floor() as usize + 1,
            torus: (room / (4.0 * PI * PI * lo)).sqrt().floor() as i64 + 1,
            upper,
        }
    }

    pub fn doubled(&self) -> Self {
        SpectralCaps { n_max: 2 * self.n_max, k_max: 2 * self.k_max + 1, torus: 2 * self.torus, upper: self.upper }
    }
}

/// Lower bounds on every omitted eigenvalue, by source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapCertificate {
    /// Sectors beyond n_max: ε²·2π(n_max+1)√det A + V.
    pub sector_bound: f64,
    /// Levels beyond k_max: ε²·λ_min(A)·2π|n|(2k_max+3) + V at the smallest capped |n|.
    pub level_bound: f64,
    /// Torus modes beyond the box: ε²(2π)²λ_min(A)(cap+1)² + V.
    pub torus_bound: f64,
    /// Every eigenvalue below this is listed.
    pub complete_below: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralLevel {
    pub value: f64,
    pub multiplicity: u64,
    /// n of the sector π_{2πn}; 0 for the torus characters.
    pub sector: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralCount {
    pub eps: f64,
    pub a: [[f64; 2]; 2],
    pub v: f64,
    pub caps: SpectralCaps,
    /// Sorted by value.
    pub levels: Vec<SpectralLevel>,
    pub certificate: CapCertificate,
}

/// Spectrum of ε²L_A + V on Γ\H₁ for the lattice generated by exp X, exp Y (central
/// subgroup exp ℤT): sectors λ_n = 2πn with multiplicity |n|, plus the torus characters.
pub fn invariant_spectrum(a: [[f64; 2]; 2], v: f64, eps: f64, caps: SpectralCaps) -> Result<SpectralCount> {
    let f = FrozenQuadratic { a: [[a[0][0], 0.5 * (a[0][1] + a[1][0])], [0.5 * (a[0][1] + a[1][0]), a[1][1]]], v };
    let (lo, _) = f.a_range();
    if !(lo > 0.0) || v < 0.0 || !(eps > 0.0) {
        return Err(Error::InvalidArgument("invariant spectrum needs A positive definite, V >= 0 and eps > 0".into()));
    }
    let e2 = eps * eps;
    let room = (caps.upper - v) / e2;
    let mut levels = Vec::new();
    let mut level_bound = f64::INFINITY;
    let mut n_last = 0;
    for n in 1..=caps.n_max {
        let lam = 2.0 * PI * n as f64;
        if lam * f.ground() > room {
            break;
        }
        n_last = n;
        for s in [1.0, -1.0] {
            let spec = certified_oscillator_spectrum(s * lam, f.a, room, SPECTRUM_TOL)?;
            if spec.values.len() > caps.k_max + 1 {
                level_bound = level_bound.min(e2 * lo * lam * (2 * caps.k_max + 3) as f64 + v);
            }
            for &mu in spec.values.iter().take(caps.k_max + 1) {
                levels.push(SpectralLevel { value: e2 * mu + v, multiplicity: n, sector: (s * n as f64) as i64 });
            }
        }
    }
    let sector_bound = if n_last == caps.n_max {
        e2 * 2.0 * PI * (caps.n_max + 1) as f64 * f.ground() + v
    } else {
        f64::INFINITY
    };
    let t = caps.torus;
    for m1 in -t..=t {
        for m2 in -t..=t {
            let (p, q) = (m1 as f64, m2 as f64);
            let form = f.a[0][0] * p * p + 2.0 * f.a[0][1] * p * q + f.a[1][1] * q * q;
            let val = e2 * 4.0 * PI * PI * form + v;
            if val <= caps.upper {
                levels.push(SpectralLevel { value: val, multiplicity: 1, sector: 0 });
            }
        }
    }
    let torus_bound = e2 * 4.0 * PI * PI * lo * ((t + 1) as f64).powi(2) + v;
    levels.sort_by(|p, q| p.value.partial_cmp(&q.value).unwrap().then(p.sector.cmp(&q.sector)));
    let complete_below = caps.upper.min(sector_bound).min(level_bound).min(torus_bound);
    Ok(SpectralCount {
        eps,
        a: f.a,
        v,
        caps,
        levels,
        certificate: CapCertificate { sector_bound, level_bound, torus_bound, complete_below },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Count {
    pub count: u64,
    /// Eigenvalues (with multiplicity) within TIE_TOL of an endpoint; included in `count`.
    pub ties: u64,
}

/// N on the closed interval [a, b]; fails unless the cap certificate covers b.
pub fn counting_function(spec: &SpectralCount, a: f64, b: f64) -> Result<Count> {
    if a > b {
        return Ok(Count { count: 0, ties: 0 });
    }
    let cert = spec.certificate.complete_below;
    let covered = if cert == spec.caps.upper { b + TIE_TOL <= cert } else { b + TIE_TOL < cert };
    if !covered {
        return Err(Error::CapInsufficient(format!(
            "enumeration is complete only below {cert}; interval end b = {b} needs more"
        )));
    }
    let mut out = Count { count: 0, ties: 0 };
    for l in &spec.levels {
        if l.value > b + TIE_TOL {
            break;
        }
        if l.value >= a - TIE_TOL {
            out.count += l.multiplicity;
            if (l.value - a).abs() <= TIE_TOL || (l.value - b).abs() <= TIE_TOL {
                out.ties += l.multiplicity;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Convergence of ε^Q N(ε).

#[derive(Debug, Clone, Serialize)]
pub struct WeylSetup {
    pub a: [[f64; 2]; 2],
    pub v: f64,
    pub interval: (f64, f64),
    pub c_pl: f64,
    pub lambda_min: f64,
    pub order: usize,
}

impl WeylSetup {
    /// A = I, V = 0 on [0, 1].
    pub fn standard(c_pl: f64) -> Self {
        WeylSetup { a: [[1.0, 0.0], [0.0, 1.0]], v: 0.0, interval: (0.0, 1.0), c_pl, lambda_min: 1e-4, order: 2 }
    }

    pub fn symbol(&self) -> DifferentialSymbol {
        DivergenceForm::constant(self.a, self.v).symbols(&Fields::heisenberg()).0
    }

    pub fn integral(&self) -> Result<WeylIntegral> {
        let s0 = self.symbol();
        let xq = XQuadrature::nilmanifold(1)?;
        let (a, b) = self.interval;
        let pl = aligned_plancherel(&s0, a, b, &xq, self.c_pl, self.lambda_min, self.order)?;
        weyl_integral(&s0, a, b, &xq, &pl)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub count: u64,
    /// Count after doubling every cap.
    pub doubled_count: u64,
    pub scaled: f64,
    pub weyl: f64,
    pub deviation: f64,
    pub complete_below: f64,
    pub ties: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub weyl: WeylIntegral,
    /// Sorted by ε descending.
    pub rows: Vec<ConvergenceRow>,
    /// Deviation strictly decreasing over the last three rows.
    pub tail_decreasing: bool,
    /// max_ε ε^Q N(ε).
    pub uniform_bound: f64,
    pub caps_stable: bool,
}

pub fn convergence_study(setup: &WeylSetup, eps_grid: &[f64]) -> Result<ConvergenceStudy> {
    let weyl = setup.integral()?;
    let (a, b) = setup.interval;
    let mut grid = eps_grid.to_vec();
    grid.sort_by(|p, q| q.partial_cmp(p).unwrap());
    let mut rows = Vec::with_capacity(grid.len());
    for &eps in &grid {
        let caps = SpectralCaps::covering(setup.a, setup.v, eps, b + 1e-6);
        let spec = invariant_spectrum(setup.a, setup.v, eps, caps)?;
        let n = counting_function(&spec, a, b)?;
        let n2 = counting_function(&invariant_spectrum(setup.a, setup.v, eps, caps.doubled())?, a, b)?;
        let scaled = eps.powi(Q_DIM) * n.count as f64;
        rows.push(ConvergenceRow {
            eps,
            count: n.count,
            doubled_count: n2.count,
            scaled,
            weyl: weyl.value,
            deviation: (scaled - weyl.value).abs() / weyl.value,
            complete_below: spec.certificate.complete_below,
            ties: n.ties,
        });
    }
    let k = rows.len();
    let tail_decreasing = k >= 3 && rows[k - 3].deviation > rows[k - 2].deviation && rows[k - 2].deviation > rows[k - 1].deviation;
    let uniform_bound = rows.iter().map(|r| r.scaled).fold(0.0, f64::max);
    let caps_stable = rows.iter().all(|r| r.count == r.doubled_count);
    Ok(ConvergenceStudy { weyl, rows, tail_decreasing, uniform_bound, caps_stable })
}

// ---------------------------------------------------------------------------
// Christ's identity for L.

/// Spectral multiplier ψ on [0, ∞).
#[derive(Clone)]
pub struct Multiplier {
    pub name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Multiplier({})", self.name)
    }
}

impl Multiplier {
    pub fn new(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Multiplier { name: name.into(), f: Arc::new(f) }
    }

    /// "exp" [s]: e^{−sλ}; "lin_exp" [s]: λe^{−sλ}; "gaussian" [s]: e^{−λ²/s²}; "zero".
    pub fn registered(name: &str, params: &[f64]) -> Result<Self> {
        let need = match name {
            "exp" | "lin_exp" | "gaussian" => 1,
            "zero" => 0,
            _ => return Err(Error::InvalidArgument(format!("unknown multiplier '{name}'"))),
        };
        if params.len() != need {
            return Err(Error::InvalidArgument(format!("'{name}' takes {need} parameters, got {}", params.len())));
        }
        let label = if need == 1 { format!("{name}({})", params[0]) } else { name.to_string() };
        Ok(match name {
            "exp" => {
                let s = params[0];
                Self::new(&label, move |l| (-s * l).exp())
            }
            "lin_exp" => {
                let s = params[0];
                Self::new(&label, move |l| l * (-s * l).exp())
            }
            "gaussian" => {
                let s = params[0];
                Self::new(&label, move |l| (-(l * l) / (s * s)).exp())
            }
            _ => Self::new(&label, |_| 0.0),
        })
    }

    pub fn eval(&self, l: f64) -> f64 {
        (self.f)(l)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChristParams {
    pub lambda_min: f64,
    /// Spectral cutoff: ψ² is negligible beyond it, and λ-nodes stop there.
    pub cutoff: f64,
    pub ratio: f64,
    pub order: usize,
}

impl Default for ChristParams {
    fn default() -> Self {
        ChristParams { lambda_min: 1e-2, cutoff: 48.0, ratio: 1.5, order: 16 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChristRow {
    pub name: String,
    /// ∫ ‖ψ(π_λ(L))‖²_HS dμ(λ).
    pub lhs: f64,
    /// ∫₀^∞ |ψ(λ)|² λ dλ.
    pub rhs: f64,
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChristCheck {
    pub rows: Vec<ChristRow>,
    pub mean: f64,
    /// (max − min)/mean over rows with a defined c₀.
    pub spread: f64,
}

pub fn christ_identity_check(psis: &[Multiplier], c_pl: f64, par: &ChristParams) -> Result<ChristCheck> {
    let pl = PlancherelQuadrature::geometric(c_pl, par.cutoff, par.lambda_min, par.ratio, par.order)?;
    let id = [[1.0, 0.0], [0.0, 1.0]];
    // spectra of π_λ(L) are shared by every ψ
    let spectra = |l: f64| certified_oscillator_spectrum(l, id, par.cutoff, SPECTRUM_TOL).map(|s| s.values);
    let nodes: Vec<Vec<f64>> = pl.nodes.iter().map(|&l| spectra(l)).collect::<Result<_>>()?;
    let edges = [spectra(pl.lambda_min)?, spectra(-pl.lambda_min)?];
    let gl = GaussLegendre::new(par.order);
    let br: Vec<f64> = (0..=96).map(|i| par.cutoff * i as f64 / 96.0).collect();
    let line = composite(&gl, &br);
    let mut rows = Vec::with_capacity(psis.len());
    for psi in psis {
        let hs = |spec: &[f64]| spec.iter().map(|&m| psi.eval(m).powi(2)).sum::<f64>();
        let body: f64 = nodes.iter().zip(&pl.weights).map(|(s, w)| w * hs(s)).sum();
        let tail = inverse_tail(c_pl, pl.lambda_min, hs(&edges[0]) + hs(&edges[1]));
        let lhs = body + tail;
        let rhs: f64 = line.iter().map(|&(l, w)| w * psi.eval(l).powi(2) * l).sum();
        let c0 = (rhs > 0.0).then(|| lhs / rhs);
        rows.push(ChristRow { name: psi.name.clone(), lhs, rhs, c0 });
    }
    let cs: Vec<f64> = rows.iter().filter_map(|r| r.c0).collect();
    let (mean, spread) = if cs.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = cs.iter().sum::<f64>() / cs.len() as f64;
        let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
        (mean, (hi - lo) / mean)
    };
    Ok(ChristCheck { rows, mean, spread })
}

// ---------------------------------------------------------------------------
// Hilbert–Schmidt scaling.

#[derive(Debug, Clone, Serialize)]
pub struct HsScalingRow {
    pub eps: f64,
    /// Σ w ‖f(σ₀(x, π_{ε²λ_i}))‖²_HS with the undilated weights.
    pub dilated_nodes: f64,
    /// The same field integrated on the rule dilated by ε².
    pub dilated_rule: f64,
    pub ratio: f64,
    /// ratio·ε^Q.
    pub compensated: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HsScaling {
    pub rows: Vec<HsScalingRow>,
    /// ∫∫ ‖f(σ₀)‖²_HS dx dμ on the given rule.
    pub value: f64,
    /// The same on the refined rule.
    pub refined: f64,
    pub max_deviation: f64,
}

/// ‖f(σ₀(x, π_λ))‖²_HS on the quadratic path.
fn hs_sq(levels: &Levels, f: &GrowthClassFunction, lambda: f64) -> f64 {
    levels.at(lambda).iter().map(|&mu| f.eval(lambda.abs() * mu + levels.v).powi(2)).sum()
}

pub fn hs_scaling_check(
    f: &GrowthClassFunction,
    s0: &DifferentialSymbol,
    xq: &XQuadrature,
    pl: &PlancherelQuadrature,
    eps_grid: &[f64],
) -> Result<HsScaling> {
    let (_, hi) = f
        .support
        .ok_or_else(|| Error::InvalidArgument(format!("HS scaling needs a compactly supported f, got {}", f.name)))?;
    let forms = frozen_all(s0, xq)
        .ok_or_else(|| Error::InvalidArgument("HS scaling is implemented for divergence-form sigma0".into()))?;
    let e_min = eps_grid.iter().copied().fold(1.0, f64::min);
    if !(e_min > 0.0) {
        return Err(Error::InvalidArgument("eps grid must be positive".into()));
    }
    let lm = pl.lambda_min * e_min * e_min;
    let levels: Vec<Levels> = forms.iter().map(|fq| Levels::new(fq, (hi - fq.v) / lm)).collect::<Result<_>>()?;
    let field = |nodes: &[f64], weights: &[f64], scale: f64| -> f64 {
        let mut total = 0.0;
        for (lv, wx) in levels.iter().zip(&xq.weights) {
            let inner: f64 = nodes.iter().zip(weights).map(|(l, w)| w * hs_sq(lv, f, scale * l)).sum();
            total += wx * inner;
        }
        total
    };
    let value = field(&pl.nodes, &pl.weights, 1.0);
    let fine = pl.refine()?;
    let refined = field(&fine.nodes, &fine.weights, 1.0);
    let mut rows = Vec::with_capacity(eps_grid.len());
    let mut max_deviation: f64 = 0.0;
    for &eps in eps_grid {
        let e2 = eps * eps;
        let dn = field(&pl.nodes, &pl.weights, e2);
        let dr = pl.dilate(e2);
        let drv = field(&dr.nodes, &dr.weights, 1.0);
        let ratio = dn / drv;
        let compensated = ratio * eps.powi(Q_DIM);
        max_deviation = max_deviation.max((compensated - 1.0).abs());
        rows.push(HsScalingRow { eps, dilated_nodes: dn, dilated_rule: drv, ratio, compensated });
    }
    Ok(HsScaling { rows, value, refined, max_deviation })
}
