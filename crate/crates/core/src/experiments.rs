//! Configured runs of every audit and study. Each run returns a [`Report`]: named
//! checks against thresholds, scalar values and numeric tables. The command-line
//! driver and the acceptance harness both go through these functions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::almost_analytic::{axis_audit, decay_audit, support_audit, AlmostAnalyticExtension, ExtensionParams};
use crate::error::{Error, Result};
use crate::fc::{parametrix_terms, psi_of_symbol, resolvent_bound_audit, tau_principal, z_grid, ResolventWeights};
use crate::hs::{hs_apply, moments, HsParams};
use crate::group::GroupDescriptor;
use crate::poly::{degree, EnvelopingOperator, Symbolic, DEFAULT_DEGREE_CAP};
use crate::rep::{calibrate_plancherel_constant, hermitian_function, max_abs, Calibrator, Gaussian3, PlancherelQuadrature};
use crate::rep::{CMat, RepresentationSlice, C64};
use crate::smooth::GrowthClassFunction;
use crate::symbol::{
    adjoint_terms, random_exact_symbol, semiclassical_adjoint_oracle, semiclassical_composition_terms,
    semiclassical_product_oracle, CoefficientSpec, DifferentialSymbol, DivergenceForm, EpsSymbol, MonomialSpec, SymbolSpec,
    TermSpec,
};
use crate::weyl::{
    christ_identity_check, convergence_study, hs_scaling_check, ChristParams, Multiplier, WeylSetup, XQuadrature, Q_DIM,
    TIE_TOL,
};

/// Names of the experiments, in the order the acceptance criteria list them.
pub const EXPERIMENTS: [&str; 11] = [
    "plancherel-calibrate",
    "compose-check",
    "adjoint-check",
    "extension-audit",
    "hs-compare",
    "parametrix-audit",
    "tau-principal-check",
    "resolvent-audit",
    "weyl-verify",
    "christ-check",
    "hs-scaling",
];

// ---------------------------------------------------------------------------
// Reports.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

/// One thresholded quantity. NaN never passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, bound: Bound::AtMost, threshold, pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, bound: Bound::AtLeast, threshold, pass: value >= threshold }
    }
}

/// Plain numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table '{}'", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name).ok_or_else(|| Error::UnknownColumn(name.into()))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// The named columns in the given order; rows keep their order.
    pub fn project(&self, columns: &[&str]) -> Result<Table> {
        let idx = columns
            .iter()
            .map(|c| self.columns.iter().position(|x| x == c).ok_or_else(|| Error::UnknownColumn(c.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Table {
            name: self.name.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }

    /// Tab-separated text: one header line, then one line per row. Numbers use the
    /// shortest representation that reads back to the same f64.
    pub fn to_tsv(&self) -> String {
        let mut s = self.columns.join("\t");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join("\t"));
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Table::to_tsv`]. An empty text is a table without columns.
    pub fn from_tsv(name: &str, text: &str) -> Result<Table> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let Some(head) = lines.next() else {
            return Ok(Table { name: name.into(), ..Default::default() });
        };
        let columns: Vec<String> = head.split('\t').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (k, l) in lines.enumerate() {
            let row = l
                .split('\t')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("{name}: line {}: '{v}' is not a number", k + 2))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(Error::Config(format!("{name}: line {}: {} fields, header has {}", k + 2, row.len(), columns.len())));
            }
            rows.push(row);
        }
        Ok(Table { name: name.into(), columns, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    /// Human-readable result lines.
    pub summary: Vec<String>,
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(experiment: &str) -> Self {
        Report { experiment: experiment.into(), summary: Vec::new(), values: BTreeMap::new(), checks: Vec::new(), tables: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.into(), v);
    }

    fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }
}

// ---------------------------------------------------------------------------
// Shared configuration pieces.

/// A registered function by name and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl FunctionSpec {
    pub fn new(name: &str, params: &[f64]) -> Self {
        FunctionSpec { name: name.into(), params: params.to_vec() }
    }

    pub fn psi(&self) -> Result<GrowthClassFunction> {
        GrowthClassFunction::registered(&self.name, &self.params)
    }

    pub fn multiplier(&self) -> Result<Multiplier> {
        Multiplier::registered(&self.name, &self.params)
    }
}

/// Coefficients of the operator ε²L_A + V, L_A = −Σ X_i a_ij X_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub a11: CoefficientSpec,
    pub a12: CoefficientSpec,
    pub a22: CoefficientSpec,
    pub v: CoefficientSpec,
}

impl OperatorSpec {
    pub fn from_form(f: &DivergenceForm) -> Result<Self> {
        Ok(OperatorSpec {
            a11: CoefficientSpec::from_coefficient(&f.a11)?,
            a12: CoefficientSpec::from_coefficient(&f.a12)?,
            a22: CoefficientSpec::from_coefficient(&f.a22)?,
            v: CoefficientSpec::from_coefficient(&f.v)?,
        })
    }

    /// The variable-coefficient family used by the functional-calculus audits.
    pub fn test_family() -> Self {
        Self::from_form(&DivergenceForm::test_family()).expect("registered coefficients")
    }

    pub fn constant(a: [[f64; 2]; 2], v: f64) -> Self {
        Self::from_form(&DivergenceForm::constant(a, v)).expect("constant coefficients")
    }

    pub fn form(&self) -> Result<DivergenceForm> {
        Ok(DivergenceForm {
            a11: self.a11.to_coefficient()?,
            a12: self.a12.to_coefficient()?,
            a22: self.a22.to_coefficient()?,
            v: self.v.to_coefficient()?,
        })
    }

    /// [σ₀, σ₁].
    pub fn family(&self, sym: &Symbolic) -> Result<Vec<DifferentialSymbol>> {
        let (s0, s1) = self.form()?.symbols(&sym.fields);
        Ok(vec![s0, s1])
    }
}

fn symbolic(cap: u32) -> Result<Symbolic> {
    Symbolic::new(&GroupDescriptor::heisenberg(), cap)
}

fn plancherel_constant(c: Option<f64>) -> Result<f64> {
    match c {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(Error::Config(format!("c_pl = {v} must be positive"))),
        None => Ok(calibrate_plancherel_constant()?.c_pl),
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn signed(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let v = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

fn dyadic(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 0.5f64.powi(k)).collect()
}

// ---------------------------------------------------------------------------
// plancherel-calibrate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlancherelConfig {
    /// (a, b, c) of exp(−ap² − bq² − ct²) used to fit the constant.
    pub primary: [f64; 3],
    /// Independent Gaussian for the cross-check.
    pub secondary: [f64; 3],
    pub max_cross_residual: f64,
    pub max_inversion_error: f64,
}

impl Default for PlancherelConfig {
    fn default() -> Self {
        PlancherelConfig {
            primary: [1.0, 1.0, 1.0],
            secondary: [0.7, 1.9, 0.45],
            max_cross_residual: 1e-5,
            max_inversion_error: 1e-4,
        }
    }
}

pub fn plancherel_calibrate(cfg: &PlancherelConfig) -> Result<Report> {
    let g = |v: [f64; 3]| Gaussian3 { a: v[0], b: v[1], c: v[2] };
    let r = Calibrator::default().calibrate(g(cfg.primary), g(cfg.secondary))?;
    let reference = 1.0 / (4.0 * PI * PI);
    let mut rep = Report::new("plancherel-calibrate");
    rep.line(format!("c_pl = {:.15e} (1/(4 pi^2) = {:.15e})", r.c_pl, reference));
    rep.value("c_pl", r.c_pl);
    rep.value("relative_gap_to_reference", (r.c_pl - reference).abs() / reference);
    rep.value("lambda_nodes", r.lambda_nodes as f64);
    rep.checks.push(Check::at_most("cross_residual", r.cross_residual, cfg.max_cross_residual));
    rep.checks.push(Check::at_most("inversion_error", r.inversion_error, cfg.max_inversion_error));
    let mut t = Table::new("calibration", &["c_pl", "reference", "cross_residual", "inversion_error", "lambda_nodes"]);
    t.push(vec![r.c_pl, reference, r.cross_residual, r.inversion_error, r.lambda_nodes as f64]);
    rep.tables.push(t);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// compose-check, adjoint-check

/// Random suite plus explicitly listed exact symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactSuiteConfig {
    pub seed: u64,
    /// Random cases (pairs for composition, single symbols for the adjoint).
    pub random_cases: usize,
    /// Largest homogeneous degree [β] of the random symbols.
    pub order: u32,
    /// Largest total degree of their polynomial coefficients.
    pub coef_degree: u32,
    pub degree_cap: u32,
    /// Listed symbols; compose-check runs every ordered pair of them.
    pub symbols: Vec<SymbolSpec>,
    pub max_mismatches: f64,
}

fn mono(exp: [u32; 3], value: &str) -> MonomialSpec {
    MonomialSpec { exp, value: value.into() }
}

fn poly_term(beta: [u32; 3], monos: Vec<MonomialSpec>) -> TermSpec {
    TermSpec { beta, coeff: CoefficientSpec { poly: Some(monos), ..Default::default() } }
}

/// The bundled order-2 pair: (1 + q²)X² + pT − 2Y and (pq/2)XY + 3T + tX.
pub fn bundled_symbols() -> Vec<SymbolSpec> {
    vec![
        SymbolSpec {
            order: Some(2),
            term: vec![
                poly_term([2, 0, 0], vec![mono([0, 0, 0], "1"), mono([0, 2, 0], "1")]),
                poly_term([0, 0, 1], vec![mono([1, 0, 0], "1")]),
                poly_term([0, 1, 0], vec![mono([0, 0, 0], "-2")]),
            ],
        },
        SymbolSpec {
            order: Some(2),
            term: vec![
                poly_term([1, 1, 0], vec![mono([1, 1, 0], "1/2")]),
                poly_term([0, 0, 1], vec![mono([0, 0, 0], "3")]),
                poly_term([1, 0, 0], vec![mono([0, 0, 1], "1")]),
            ],
        },
    ]
}

impl Default for ExactSuiteConfig {
    fn default() -> Self {
        ExactSuiteConfig {
            seed: 7,
            random_cases: 24,
            order: 2,
            coef_degree: 3,
            degree_cap: DEFAULT_DEGREE_CAP,
            symbols: bundled_symbols(),
            max_mismatches: 0.0,
        }
    }
}

fn exact_symbol(s: &SymbolSpec) -> Result<EnvelopingOperator> {
    s.to_symbol()?
        .to_exact()
        .ok_or_else(|| Error::Config("exact checks need polynomial coefficients in every listed symbol".into()))
}

fn top_degree(s: &EnvelopingOperator) -> u32 {
    s.terms.keys().map(degree).max().unwrap_or(0)
}

fn eps_degree(s: &EpsSymbol) -> f64 {
    s.powers.keys().max().map_or(0.0, |&k| k as f64)
}

fn exact_report(name: &str, what: &str, table: Table, mismatches: usize, cfg: &ExactSuiteConfig) -> Report {
    let mut rep = Report::new(name);
    let n = table.rows.len();
    rep.line(if mismatches == 0 {
        format!("exact: identical in ε ({n} cases, {what})")
    } else {
        format!("mismatch: {mismatches} of {n} cases differ from the {what}")
    });
    rep.value("cases", n as f64);
    rep.checks.push(Check::at_most("mismatches", mismatches as f64, cfg.max_mismatches));
    rep.tables.push(table);
    rep
}

pub fn compose_check(cfg: &ExactSuiteConfig) -> Result<Report> {
    let sym = symbolic(cfg.degree_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases: Vec<(f64, EnvelopingOperator, EnvelopingOperator)> = Vec::new();
    let listed = cfg.symbols.iter().map(exact_symbol).collect::<Result<Vec<_>>>()?;
    for a in &listed {
        for b in &listed {
            cases.push((1.0, a.clone(), b.clone()));
        }
    }
    for _ in 0..cfg.random_cases {
        let a = random_exact_symbol(&mut rng, cfg.order, cfg.coef_degree);
        let b = random_exact_symbol(&mut rng, cfg.order, cfg.coef_degree);
        cases.push((0.0, a, b));
    }
    let mut t = Table::new("cases", &["case", "listed", "eps_degree", "identical"]);
    let mut bad = 0;
    for (k, (src, a, b)) in cases.iter().enumerate() {
        let terms = semiclassical_composition_terms(&sym, a, b, top_degree(a))?;
        let series = EpsSymbol::from_series(&terms);
        let oracle = semiclassical_product_oracle(&sym.fields, a, b)?;
        let same = series == oracle;
        bad += usize::from(!same);
        t.push(vec![k as f64, *src, eps_degree(&oracle), flag(same)]);
    }
    Ok(exact_report("compose-check", "product of the dilated operators", t, bad, cfg))
}

pub fn adjoint_check(cfg: &ExactSuiteConfig) -> Result<Report> {
    let sym = symbolic(cfg.degree_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases: Vec<(f64, EnvelopingOperator)> =
        cfg.symbols.iter().map(|s| Ok((1.0, exact_symbol(s)?))).collect::<Result<_>>()?;
    for _ in 0..cfg.random_cases {
        cases.push((0.0, random_exact_symbol(&mut rng, cfg.order, cfg.coef_degree)));
    }
    let mut t = Table::new("cases", &["case", "listed", "eps_degree", "identical"]);
    let mut bad = 0;
    for (k, (src, a)) in cases.iter().enumerate() {
        let terms = adjoint_terms(&sym, a, top_degree(a))?;
        let oracle = semiclassical_adjoint_oracle(&sym.fields, a)?;
        let same = EpsSymbol::from_series(&terms) == oracle;
        bad += usize::from(!same);
        t.push(vec![k as f64, *src, eps_degree(&oracle), flag(same)]);
    }
    Ok(exact_report("adjoint-check", "formal transpose", t, bad, cfg))
}

// ---------------------------------------------------------------------------
// extension-audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionConfig {
    pub seed: u64,
    /// Functions for the axis and support audits.
    pub functions: Vec<FunctionSpec>,
    pub decay_target: u32,
    pub window: f64,
    pub axis_points: usize,
    /// Axis samples cover [−w, w], or the support widened by 1 for compact ψ.
    pub axis_half_width: f64,
    pub support_samples: usize,
    pub decay_function: FunctionSpec,
    pub decay_orders: Vec<u32>,
    pub decay_ys: Vec<f64>,
    pub decay_window: f64,
    /// The ∂̄ slope must reach N − margin.
    pub slope_margin: f64,
    pub moment_function: FunctionSpec,
    pub moment_target: u32,
    pub moment_orders: Vec<u32>,
    pub max_axis_error: f64,
    pub max_support_violations: f64,
    pub max_moment_change: f64,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            seed: 1,
            functions: vec![FunctionSpec::new("resolvent2", &[]), FunctionSpec::new("bump", &[-1.0, 1.0])],
            decay_target: 3,
            window: 8.0,
            axis_points: 200,
            axis_half_width: 7.5,
            support_samples: 10_000,
            decay_function: FunctionSpec::new("resolvent2", &[]),
            decay_orders: vec![1, 2, 3, 4],
            decay_ys: dyadic(4, 9),
            decay_window: 1.9,
            slope_margin: 0.1,
            moment_function: FunctionSpec::new("bump", &[-1.0, 1.0]),
            moment_target: 4,
            moment_orders: vec![0, 1, 2, 3, 4],
            max_axis_error: 1e-12,
            max_support_violations: 0.0,
            max_moment_change: 0.01,
        }
    }
}

pub fn extension_audit(cfg: &ExtensionConfig) -> Result<Report> {
    let mut rep = Report::new("extension-audit");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = ExtensionParams { window: cfg.window, ..Default::default() };
    let mut axis = Table::new("axis", &["function", "points", "max_error"]);
    let mut support = Table::new("support", &["function", "samples", "violations", "max_abs"]);
    let (mut axis_err, mut violations) = (0.0f64, 0usize);
    for (k, f) in cfg.functions.iter().enumerate() {
        let psi = f.psi()?;
        let ext = AlmostAnalyticExtension::build(&psi, cfg.decay_target, params.clone())?;
        let (lo, hi) = match psi.support {
            Some((a, b)) => (a - 1.0, b + 1.0),
            None => (-cfg.axis_half_width, cfg.axis_half_width),
        };
        let n = cfg.axis_points.max(2);
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let e = axis_audit(&ext, &xs)?;
        axis_err = axis_err.max(e);
        axis.push(vec![k as f64, n as f64, e]);
        let s = support_audit(&ext, cfg.support_samples, &mut rng)?;
        violations += s.violations;
        support.push(vec![k as f64, s.samples as f64, s.violations as f64, s.max_abs]);
        rep.line(format!("{}: axis error {e:.3e}, {} of {} exterior samples nonzero", psi.name, s.violations, s.samples));
    }
    rep.checks.push(Check::at_most("axis_error", axis_err, cfg.max_axis_error));
    rep.checks.push(Check::at_most("support_violations", violations as f64, cfg.max_support_violations));
    rep.tables.push(axis);
    rep.tables.push(support);

    let dpsi = cfg.decay_function.psi()?;
    let mut slopes = Table::new("decay_slopes", &["target", "slope", "threshold"]);
    for &n in &cfg.decay_orders {
        let a = decay_audit(&dpsi, n, &cfg.decay_ys, cfg.decay_window)?;
        let mut t = Table::new(&format!("decay_n{n}"), &["y", "sup_dbar"]);
        for r in &a.rows {
            t.push(vec![r.y, r.sup_dbar]);
        }
        let thr = n as f64 - cfg.slope_margin;
        slopes.push(vec![n as f64, a.slope, thr]);
        rep.checks.push(Check::at_least(&format!("dbar_slope_n{n}"), a.slope, thr));
        rep.tables.push(t);
    }
    rep.tables.push(slopes);

    let mpsi = cfg.moment_function.psi()?;
    let ext = AlmostAnalyticExtension::build(&mpsi, cfg.moment_target, params)?;
    let rows = moments(&ext, &cfg.moment_orders, &HsParams::default())?;
    let mut t = Table::new("moments", &["n", "value", "refined", "rel_change"]);
    let mut worst = 0.0f64;
    for r in &rows {
        // a non-finite moment must fail the check
        let change = if r.value.is_finite() && r.refined.is_finite() { r.rel_change } else { f64::INFINITY };
        worst = worst.max(change);
        t.push(vec![r.n as f64, r.value, r.refined, r.rel_change]);
    }
    rep.checks.push(Check::at_most("moment_change", worst, cfg.max_moment_change));
    rep.tables.push(t);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// hs-compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsCompareConfig {
    pub seed: u64,
    pub matrices: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    /// Real and imaginary parts of the raw entries are uniform on [−s, s].
    pub entry_scale: f64,
    pub functions: Vec<FunctionSpec>,
    pub decay_target: u32,
    pub window: f64,
    pub max_rel_error: f64,
}

impl Default for HsCompareConfig {
    fn default() -> Self {
        HsCompareConfig {
            seed: 5,
            matrices: 100,
            min_dim: 2,
            max_dim: 8,
            entry_scale: 1.0,
            functions: vec![
                FunctionSpec::new("resolvent", &[]),
                FunctionSpec::new("resolvent2", &[]),
                FunctionSpec::new("gaussian", &[1.5]),
                FunctionSpec::new("odd_gaussian", &[]),
                FunctionSpec::new("window", &[-1.0, 1.0, 0.5]),
            ],
            decay_target: 3,
            window: 8.0,
            max_rel_error: 1e-6,
        }
    }
}

fn random_hermitian(rng: &mut impl Rng, n: usize, s: f64) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-s..s), rng.random_range(-s..s)));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

fn rel_frobenius(got: &CMat, want: &CMat) -> f64 {
    let d = (got - want).norm();
    let scale = want.norm().max(got.norm());
    if scale == 0.0 {
        0.0
    } else {
        d / scale
    }
}

pub fn hs_compare(cfg: &HsCompareConfig) -> Result<Report> {
    if cfg.min_dim == 0 || cfg.max_dim < cfg.min_dim {
        return Err(Error::Config("hs-compare needs 1 ≤ min_dim ≤ max_dim".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hs: Vec<CMat> = (0..cfg.matrices)
        .map(|_| {
            let n = rng.random_range(cfg.min_dim..=cfg.max_dim);
            random_hermitian(&mut rng, n, cfg.entry_scale)
        })
        .collect();
    let params = ExtensionParams { window: cfg.window, ..Default::default() };
    let mut t = Table::new("errors", &["matrix", "dim", "function", "rel_error"]);
    let mut worst = 0.0f64;
    for (k, f) in cfg.functions.iter().enumerate() {
        let psi = f.psi()?;
        let ext = AlmostAnalyticExtension::build(&psi, cfg.decay_target, params.clone())?;
        let mut fw = 0.0f64;
        for (i, h) in hs.iter().enumerate() {
            let e = rel_frobenius(&hs_apply(&ext, h)?, &hermitian_function(h, |x| psi.eval(x)));
            fw = fw.max(e);
            t.push(vec![i as f64, h.nrows() as f64, k as f64, e]);
        }
        worst = worst.max(fw);
    }
    let mut rep = Report::new("hs-compare");
    for (k, f) in cfg.functions.iter().enumerate() {
        let e = t.rows.iter().filter(|r| r[2] == k as f64).map(|r| r[3]).fold(0.0, f64::max);
        rep.line(format!("{}{:?}: max relative Frobenius error {e:.3e}", f.name, f.params));
    }
    rep.value("comparisons", t.rows.len() as f64);
    rep.checks.push(Check::at_most("max_rel_frobenius_error", worst, cfg.max_rel_error));
    rep.tables.push(t);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// parametrix-audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParametrixConfig {
    pub operator: OperatorSpec,
    pub degree_cap: u32,
    pub seed: u64,
    /// Random (x, λ, z) points for the recursion residual.
    pub points: usize,
    /// Number of correction terms K.
    pub order: usize,
    /// Truncation of π_λ.
    pub block: usize,
    /// Extra jet order carried by b_K.
    pub extra: u32,
    pub max_residual: f64,
    pub study_x: [f64; 3],
    pub study_lambda: f64,
    /// Re z and Im z of the remainder study.
    pub study_z: [f64; 2],
    pub study_orders: Vec<usize>,
    pub eps_grid: Vec<f64>,
    /// The remainder slope must reach N + 1 − margin.
    pub slope_margin: f64,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        ParametrixConfig {
            operator: OperatorSpec::test_family(),
            degree_cap: DEFAULT_DEGREE_CAP,
            seed: 11,
            points: 10,
            order: 3,
            block: 6,
            extra: 2,
            max_residual: 1e-10,
            study_x: [0.3, 0.7, 0.2],
            study_lambda: 0.8,
            study_z: [1.5, 0.5],
            study_orders: vec![0, 1, 2],
            eps_grid: dyadic(3, 9),
            slope_margin: 0.1,
        }
    }
}

pub fn parametrix_audit(cfg: &ParametrixConfig) -> Result<Report> {
    let sym = symbolic(cfg.degree_cap)?;
    let family = cfg.operator.family(&sym)?;
    let mut rep = Report::new("parametrix-audit");
    let p = parametrix_terms(&sym, &family, cfg.order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Table::new("recursion", &["point", "x0", "x1", "x2", "lambda", "re_z", "im_z", "residual"]);
    let mut worst = 0.0f64;
    for k in 0..cfg.points {
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let lambda = signed(&mut rng, 0.2, 1.5);
        let z = C64::new(rng.random_range(-2.0..6.0), signed(&mut rng, 0.2, 2.0));
        let prep = p.prepare(&x, lambda, cfg.block, cfg.extra)?;
        let r = p.recursion_residual(&prep, &p.at(&prep, z)?);
        worst = worst.max(r);
        t.push(vec![k as f64, x[0], x[1], x[2], lambda, z.re, z.im, r]);
    }
    rep.line(format!("recursion residual ≤ {worst:.3e} over {} points (K = {})", cfg.points, cfg.order));
    rep.checks.push(Check::at_most("recursion_residual", worst, cfg.max_residual));
    rep.tables.push(t);

    let top = cfg.study_orders.iter().copied().max().unwrap_or(0);
    let ps = parametrix_terms(&sym, &family, top)?;
    let z = C64::new(cfg.study_z[0], cfg.study_z[1]);
    let mut slopes = Table::new("slopes", &["n", "slope", "threshold"]);
    let mut rem = Table::new("remainder", &["n", "eps", "residual"]);
    for &n in &cfg.study_orders {
        let st = ps.eps_study(&cfg.study_x, cfg.study_lambda, z, cfg.block, n, &cfg.eps_grid)?;
        for (e, r) in st.eps.iter().zip(&st.residuals) {
            rem.push(vec![n as f64, *e, *r]);
        }
        let thr = n as f64 + 1.0 - cfg.slope_margin;
        slopes.push(vec![n as f64, st.slope, thr]);
        rep.line(format!("N = {n}: remainder slope {:.3}", st.slope));
        rep.checks.push(Check::at_least(&format!("remainder_slope_n{n}"), st.slope, thr));
    }
    rep.tables.push(rem);
    rep.tables.push(slopes);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// tau-principal-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauConfig {
    pub operator: OperatorSpec,
    pub degree_cap: u32,
    pub seed: u64,
    pub samples: usize,
    pub block: usize,
    /// |λ| is drawn uniformly from this range, with a random sign.
    pub lambda_range: [f64; 2],
    pub functions: Vec<FunctionSpec>,
    pub decay_target: u32,
    pub window: f64,
    /// Samples also checked through the node-by-node contour sum.
    pub node_sum_samples: usize,
    pub max_error: f64,
}

impl Default for TauConfig {
    fn default() -> Self {
        TauConfig {
            operator: OperatorSpec::test_family(),
            degree_cap: DEFAULT_DEGREE_CAP,
            seed: 13,
            samples: 10,
            block: 4,
            lambda_range: [0.2, 1.0],
            functions: vec![
                FunctionSpec::new("resolvent", &[]),
                FunctionSpec::new("resolvent2", &[]),
                FunctionSpec::new("gaussian", &[1.5]),
            ],
            decay_target: 3,
            window: 16.0,
            node_sum_samples: 1,
            max_error: 1e-6,
        }
    }
}

fn rel_max(got: &CMat, want: &CMat) -> f64 {
    max_abs(&(got - want)) / max_abs(want).max(1.0)
}

pub fn tau_principal_check(cfg: &TauConfig) -> Result<Report> {
    let sym = symbolic(cfg.degree_cap)?;
    let family = cfg.operator.family(&sym)?;
    let p = parametrix_terms(&sym, &family, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts: Vec<([f64; 3], f64)> = (0..cfg.samples)
        .map(|_| {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            (x, signed(&mut rng, cfg.lambda_range[0], cfg.lambda_range[1]))
        })
        .collect();
    let preps = pts.iter().map(|(x, l)| p.prepare(x, *l, cfg.block, 0)).collect::<Result<Vec<_>>>()?;
    let params = ExtensionParams { window: cfg.window, ..Default::default() };
    let mut rep = Report::new("tau-principal-check");
    let mut t = Table::new("samples", &["sample", "function", "lambda", "error"]);
    let mut g = Table::new("node_sum", &["sample", "function", "error"]);
    let (mut worst, mut worst_nodes) = (0.0f64, 0.0f64);
    for (k, f) in cfg.functions.iter().enumerate() {
        let psi = f.psi()?;
        let ext = AlmostAnalyticExtension::build(&psi, cfg.decay_target, params.clone())?;
        let mut fw = 0.0f64;
        for (i, ((x, l), prep)) in pts.iter().zip(&preps).enumerate() {
            let slice = RepresentationSlice::new(*l, cfg.block, p.guard())?;
            let oracle = psi_of_symbol(&family[0], &psi, x, &slice)?.matrix;
            let e = rel_max(&tau_principal(&ext, prep)?, &oracle);
            fw = fw.max(e);
            t.push(vec![i as f64, k as f64, *l, e]);
            if i < cfg.node_sum_samples {
                let e = rel_max(&p.tau_term(&ext, prep, 0)?, &oracle);
                worst_nodes = worst_nodes.max(e);
                g.push(vec![i as f64, k as f64, e]);
            }
        }
        worst = worst.max(fw);
        rep.line(format!("{}{:?}: max error {fw:.3e} over {} samples", f.name, f.params, pts.len()));
    }
    rep.checks.push(Check::at_most("principal_error", worst, cfg.max_error));
    if cfg.node_sum_samples > 0 {
        rep.checks.push(Check::at_most("node_sum_error", worst_nodes, cfg.max_error));
    }
    rep.tables.push(t);
    rep.tables.push(g);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// resolvent-audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventConfig {
    pub operator: OperatorSpec,
    pub degree_cap: u32,
    pub re_max: f64,
    pub im_range: [f64; 2],
    pub n_re: usize,
    pub n_im: usize,
    /// (x₀, x₁, x₂, λ) sample points.
    pub samples: Vec<[f64; 4]>,
    pub block: usize,
    /// Weight exponent m and the largest [α], [β] of the seminorm.
    pub weight_m: f64,
    pub weight_a: u32,
    pub weight_b: u32,
    pub max_violations: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        let w = ResolventWeights::default();
        ResolventConfig {
            operator: OperatorSpec::test_family(),
            degree_cap: DEFAULT_DEGREE_CAP,
            re_max: 10.0,
            im_range: [1e-3, 1.0],
            n_re: 9,
            n_im: 7,
            samples: vec![[0.1, 0.4, 0.7, 0.5], [0.8, 0.3, 0.2, -1.0]],
            block: 6,
            weight_m: w.m,
            weight_a: w.a,
            weight_b: w.b,
            max_violations: 0.0,
        }
    }
}

pub fn resolvent_audit(cfg: &ResolventConfig) -> Result<Report> {
    let sym = symbolic(cfg.degree_cap)?;
    let family = cfg.operator.family(&sym)?;
    let [lo, hi] = cfg.im_range;
    let train = z_grid(cfg.re_max, lo, hi, cfg.n_re, cfg.n_im, false);
    let hold = z_grid(cfg.re_max, lo, hi, cfg.n_re, cfg.n_im, true);
    let samples: Vec<([f64; 3], f64)> = cfg.samples.iter().map(|s| ([s[0], s[1], s[2]], s[3])).collect();
    let w = ResolventWeights { m: cfg.weight_m, a: cfg.weight_a, b: cfg.weight_b };
    let a = resolvent_bound_audit(&sym, &family[0], &train, &hold, &samples, cfg.block, &w)?;
    let mut rep = Report::new("resolvent-audit");
    rep.line(format!(
        "bound {:.4e}·(1 + (1+|z|)/|Im z|)^{:.4} over {} points; {} above it",
        a.c,
        a.p_bound,
        a.rows.len(),
        a.violations
    ));
    rep.value("c", a.c);
    rep.value("p_fit", a.p);
    rep.value("p_bound", a.p_bound);
    rep.value("max_log_residual", a.max_residual);
    rep.checks.push(Check::at_most("violations", a.violations as f64, cfg.max_violations));
    let mut t = Table::new("rows", &["re", "im", "base", "value", "bound", "holdout"]);
    for r in &a.rows {
        t.push(vec![r.re, r.im, r.base, r.value, r.bound, flag(r.holdout)]);
    }
    rep.tables.push(t);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// weyl-verify

fn default_lambda_min() -> f64 {
    1e-4
}
fn default_order() -> usize {
    2
}
fn default_max_deviation() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

/// The operator, interval and ε-grid are required; numerical knobs have defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylConfig {
    pub a: [[f64; 2]; 2],
    pub v: f64,
    pub interval: [f64; 2],
    pub eps_grid: Vec<f64>,
    /// Calibrated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_pl: Option<f64>,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_max_deviation")]
    pub max_final_deviation: f64,
    #[serde(default = "default_true")]
    pub require_decreasing_tail: bool,
}

impl Default for WeylConfig {
    fn default() -> Self {
        WeylConfig {
            a: [[1.0, 0.0], [0.0, 1.0]],
            v: 0.0,
            interval: [0.0, 1.0],
            eps_grid: dyadic(3, 6),
            c_pl: None,
            lambda_min: default_lambda_min(),
            order: default_order(),
            max_final_deviation: default_max_deviation(),
            require_decreasing_tail: true,
        }
    }
}

pub fn weyl_verify(cfg: &WeylConfig) -> Result<Report> {
    if cfg.eps_grid.is_empty() || cfg.eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("eps_grid needs at least one positive ε".into()));
    }
    let setup = WeylSetup {
        a: cfg.a,
        v: cfg.v,
        interval: (cfg.interval[0], cfg.interval[1]),
        c_pl: plancherel_constant(cfg.c_pl)?,
        lambda_min: cfg.lambda_min,
        order: cfg.order,
    };
    let st = convergence_study(&setup, &cfg.eps_grid)?;
    let mut rep = Report::new("weyl-verify");
    let w = &st.weyl;
    rep.line(format!(
        "Weyl integral {:.10e} (refined {:.10e}, inverse-λ tail {:.3e}, {} λ-nodes)",
        w.value, w.refined, w.tail, w.lambda_nodes
    ));
    let mut t = Table::new(
        "convergence",
        &["eps", "count", "doubled_count", "scaled", "weyl", "deviation", "complete_below", "ties"],
    );
    for r in &st.rows {
        t.push(vec![
            r.eps,
            r.count as f64,
            r.doubled_count as f64,
            r.scaled,
            r.weyl,
            r.deviation,
            r.complete_below,
            r.ties as f64,
        ]);
        rep.line(format!("ε = {}: N = {}, ε^{Q_DIM} N = {:.6e}, deviation {:.3e}", r.eps, r.count, r.scaled, r.deviation));
    }
    let last = st.rows.last().expect("non-empty grid");
    rep.value("weyl_integral", w.value);
    rep.value("weyl_refined", w.refined);
    rep.value("weyl_tail", w.tail);
    rep.value("uniform_bound", st.uniform_bound);
    rep.value("c_pl", setup.c_pl);
    rep.checks.push(Check::at_most("final_deviation", last.deviation, cfg.max_final_deviation));
    if cfg.require_decreasing_tail {
        rep.checks.push(Check::at_least("deviation_decreasing_over_last_three", flag(st.tail_decreasing), 1.0));
    }
    let b = setup.interval.1;
    let uncertified = st.rows.iter().filter(|r| !(r.complete_below >= b + TIE_TOL)).count();
    rep.checks.push(Check::at_most("rows_without_cap_certificate", uncertified as f64, 0.0));
    let changed = st.rows.iter().filter(|r| r.count != r.doubled_count).count();
    rep.checks.push(Check::at_most("counts_changed_by_cap_doubling", changed as f64, 0.0));
    rep.tables.push(t);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// christ-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChristConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_pl: Option<f64>,
    pub multipliers: Vec<FunctionSpec>,
    pub lambda_min: f64,
    pub cutoff: f64,
    pub ratio: f64,
    pub order: usize,
    pub max_spread: f64,
}

impl Default for ChristConfig {
    fn default() -> Self {
        let p = ChristParams::default();
        ChristConfig {
            c_pl: None,
            multipliers: vec![
                FunctionSpec::new("exp", &[1.0]),
                FunctionSpec::new("exp", &[2.0]),
                FunctionSpec::new("lin_exp", &[1.0]),
            ],
            lambda_min: p.lambda_min,
            cutoff: p.cutoff,
            ratio: p.ratio,
            order: p.order,
            max_spread: 1e-4,
        }
    }
}

pub fn christ_check(cfg: &ChristConfig) -> Result<Report> {
    let c_pl = plancherel_constant(cfg.c_pl)?;
    let psis = cfg.multipliers.iter().map(FunctionSpec::multiplier).collect::<Result<Vec<_>>>()?;
    let par = ChristParams { lambda_min: cfg.lambda_min, cutoff: cfg.cutoff, ratio: cfg.ratio, order: cfg.order };
    let ch = christ_identity_check(&psis, c_pl, &par)?;
    let fitted = ch.rows.iter().filter(|r| r.c0.is_some()).count();
    if fitted < 2 {
        return Err(Error::Config("christ-check needs at least two nonzero multipliers".into()));
    }
    let mut rep = Report::new("christ-check");
    let mut t = Table::new("multipliers", &["multiplier", "lhs", "rhs", "c0"]);
    for (k, r) in ch.rows.iter().enumerate() {
        t.push(vec![k as f64, r.lhs, r.rhs, r.c0.unwrap_or(f64::NAN)]);
        match r.c0 {
            Some(c) => rep.line(format!("{}: c0 = {c:.10e}", r.name)),
            None => rep.line(format!("{}: both sides vanish", r.name)),
        }
    }
    rep.value("c0_mean", ch.mean);
    rep.value("c_pl", c_pl);
    rep.checks.push(Check::at_most("c0_spread", ch.spread, cfg.max_spread));
    rep.tables.push(t);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// hs-scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsScalingConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_pl: Option<f64>,
    pub operator: OperatorSpec,
    pub function: FunctionSpec,
    /// Midpoint nodes per axis on the fundamental domain.
    pub x_nodes: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub ratio: f64,
    pub order: usize,
    pub eps_grid: Vec<f64>,
    pub max_deviation: f64,
}

impl Default for HsScalingConfig {
    fn default() -> Self {
        HsScalingConfig {
            c_pl: None,
            operator: OperatorSpec::constant([[1.0, 0.0], [0.0, 1.0]], 0.0),
            function: FunctionSpec::new("window", &[0.5, 1.0, 0.25]),
            x_nodes: 1,
            lambda_max: 4.0,
            lambda_min: 1e-2,
            ratio: 1.5,
            order: 12,
            eps_grid: dyadic(0, 3),
            max_deviation: 1e-8,
        }
    }
}

pub fn hs_scaling(cfg: &HsScalingConfig) -> Result<Report> {
    let c_pl = plancherel_constant(cfg.c_pl)?;
    let sym = symbolic(DEFAULT_DEGREE_CAP)?;
    let s0 = cfg.operator.family(&sym)?.swap_remove(0);
    let f = cfg.function.psi()?;
    let xq = XQuadrature::nilmanifold(cfg.x_nodes)?;
    let pl = PlancherelQuadrature::geometric(c_pl, cfg.lambda_max, cfg.lambda_min, cfg.ratio, cfg.order)?;
    let r = hs_scaling_check(&f, &s0, &xq, &pl, &cfg.eps_grid)?;
    let mut rep = Report::new("hs-scaling");
    rep.line(format!("∫∫ Tr f(σ₀) = {:.10e} (refined {:.10e})", r.value, r.refined));
    rep.line(format!("max |ε^{Q_DIM}·ratio − 1| = {:.3e} over {} ε", r.max_deviation, r.rows.len()));
    rep.value("value", r.value);
    rep.value("refined", r.refined);
    rep.value("c_pl", c_pl);
    rep.checks.push(Check::at_most("compensated_deviation", r.max_deviation, cfg.max_deviation));
    let mut t = Table::new("scaling", &["eps", "dilated_nodes", "dilated_rule", "ratio", "compensated"]);
    for row in &r.rows {
        t.push(vec![row.eps, row.dilated_nodes, row.dilated_rule, row.ratio, row.compensated]);
    }
    rep.tables.push(t);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Dispatch by name.

fn parse_params<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> Result<T> {
    match text {
        None => Ok(T::default()),
        Some(s) => toml::from_str(s).map_err(|e| Error::Config(e.message().trim().to_string())),
    }
}

/// Runs experiment `name` with parameters given as the body of a [params] table
/// (defaults when `None`).
pub fn run_named(name: &str, params: Option<&str>) -> Result<Report> {
    match name {
        "plancherel-calibrate" => plancherel_calibrate(&parse_params(params)?),
        "compose-check" => compose_check(&parse_params(params)?),
        "adjoint-check" => adjoint_check(&parse_params(params)?),
        "extension-audit" => extension_audit(&parse_params(params)?),
        "hs-compare" => hs_compare(&parse_params(params)?),
        "parametrix-audit" => parametrix_audit(&parse_params(params)?),
        "tau-principal-check" => tau_principal_check(&parse_params(params)?),
        "resolvent-audit" => resolvent_audit(&parse_params(params)?),
        "weyl-verify" => weyl_verify(&parse_params(params)?),
        "christ-check" => christ_check(&parse_params(params)?),
        "hs-scaling" => hs_scaling(&parse_params(params)?),
        _ => Err(Error::Config(format!("unknown experiment '{name}'"))),
    }
}

/// Default parameters of experiment `name` as TOML.
pub fn default_params(name: &str) -> Result<String> {
    fn render<T: Serialize + Default>() -> Result<String> {
        toml::to_string(&T::default()).map_err(|e| Error::Config(e.to_string()))
    }
    match name {
        "plancherel-calibrate" => render::<PlancherelConfig>(),
        "compose-check" | "adjoint-check" => render::<ExactSuiteConfig>(),
        "extension-audit" => render::<ExtensionConfig>(),
        "hs-compare" => render::<HsCompareConfig>(),
        "parametrix-audit" => render::<ParametrixConfig>(),
        "tau-principal-check" => render::<TauConfig>(),
        "resolvent-audit" => render::<ResolventConfig>(),
        "weyl-verify" => render::<WeylConfig>(),
        "christ-check" => render::<ChristConfig>(),
        "hs-scaling" => render::<HsScalingConfig>(),
        _ => Err(Error::Config(format!("unknown experiment '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatch_by_name() {
        for name in EXPERIMENTS {
            assert!(default_params(name).is_ok(), "{name}");
        }
        assert!(matches!(run_named("nope", None), Err(Error::Config(_))));
        let r = run_named("compose-check", Some("random_cases = 2\nsymbols = []\n")).unwrap();
        assert_eq!(r.values["cases"], 2.0);
        let e = run_named("weyl-verify", Some("a = [[1.0, 0.0], [0.0, 1.0]]\nv = 0.0\neps_grid = [0.5]\n")).unwrap_err();
        assert!(e.to_string().contains("interval"), "{e}");
    }

    #[test]
    fn table_round_trip_and_projection() {
        let mut t = Table::new("t", &["eps", "count", "scaled"]);
        t.push(vec![0.125, 137.0, 0.1 + 0.2]);
        t.push(vec![0.0625, 2048.0, f64::NAN]);
        let back = Table::from_tsv("t", &t.to_tsv()).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.rows[0], t.rows[0]);
        assert!(back.rows[1][2].is_nan());
        let p = t.project(&["scaled", "eps"]).unwrap();
        assert_eq!(p.to_tsv().lines().next(), Some("scaled\teps"));
        assert_eq!(p.rows[0][1], 0.125);
        assert_eq!(t.project(&["nope"]), Err(Error::UnknownColumn("nope".into())));
        let empty = Table::from_tsv("e", "").unwrap();
        assert!(empty.columns.is_empty() && empty.rows.is_empty());
    }

    #[test]
    fn checks_reject_nan() {
        assert!(!Check::at_most("x", f64::NAN, 1.0).pass);
        assert!(!Check::at_least("x", f64::NAN, 1.0).pass);
        assert!(Check::at_least("x", 1.0, 1.0).pass);
    }

    #[test]
    fn operator_spec_round_trips_the_test_family() {
        let spec = OperatorSpec::test_family();
        let text = toml::to_string(&spec).unwrap();
        let back: OperatorSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let sym = Symbolic::heisenberg();
        let a = back.family(&sym).unwrap();
        let b = DivergenceForm::test_family().symbols(&sym.fields);
        let x = [0.3, 0.2, 0.9];
        for (s, t) in a.iter().zip([b.0, b.1]) {
            for (beta, cf) in &t.terms {
                assert_eq!(s.terms[beta].value(&x), cf.value(&x));
            }
        }
    }

    #[test]
    fn exact_suites_pass_and_reject_numeric_coefficients() {
        let cfg = ExactSuiteConfig { random_cases: 3, ..Default::default() };
        let r = compose_check(&cfg).unwrap();
        assert!(r.passed());
        assert!(r.summary[0].starts_with("exact: identical in ε"));
        assert_eq!(r.table("cases").unwrap().rows.len(), 4 + 3);
        let r = adjoint_check(&cfg).unwrap();
        assert!(r.passed());
        // a numeric coefficient has no exact form
        let mut bad = cfg.clone();
        bad.symbols[0].term[0].coeff = CoefficientSpec { function: Some("cos".into()), params: Some(vec![1.0, 0.3, 1.0, 0.0, 0.0]), ..Default::default() };
        assert!(matches!(compose_check(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn weyl_config_requires_the_interval() {
        let text = "a = [[1.0, 0.0], [0.0, 1.0]]\nv = 0.0\neps_grid = [0.125]\n";
        let e = toml::from_str::<WeylConfig>(text).unwrap_err();
        assert!(e.message().contains("interval"), "{}", e.message());
        let full: WeylConfig = toml::from_str(&format!("{text}interval = [0.0, 1.0]\n")).unwrap();
        assert_eq!(full.lambda_min, 1e-4);
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        fn rt<T: Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug + Default>() {
            let d = T::default();
            let back: T = toml::from_str(&toml::to_string(&d).unwrap()).unwrap();
            assert_eq!(back, d);
        }
        rt::<PlancherelConfig>();
        rt::<ExactSuiteConfig>();
        rt::<ExtensionConfig>();
        rt::<HsCompareConfig>();
        rt::<ParametrixConfig>();
        rt::<TauConfig>();
        rt::<ResolventConfig>();
        rt::<WeylConfig>();
        rt::<ChristConfig>();
        rt::<HsScalingConfig>();
    }
}
