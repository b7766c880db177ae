//! Acceptance run: one PASS/FAIL line per criterion. Tolerances and runtime budgets
//! are pinned here and applied to the raw report values, independently of the
//! thresholds carried by the experiment configs.

use std::process::ExitCode;
use std::time::Instant;

use nilcalc::experiments::{self as ex, Report};

struct Verdict {
    ok: bool,
    detail: String,
}

fn value(r: &Report, check: &str) -> f64 {
    r.check(check).map_or(f64::NAN, |c| c.value)
}

fn at_most(r: &Report, check: &str, tol: f64) -> Verdict {
    let v = value(r, check);
    Verdict { ok: v <= tol, detail: format!("{check} {v:.3e} ≤ {tol:.0e}") }
}

fn at_least(r: &Report, check: &str, tol: f64) -> Verdict {
    let v = value(r, check);
    Verdict { ok: v >= tol, detail: format!("{check} {v:.4} ≥ {tol}") }
}

fn all(parts: Vec<Verdict>) -> Verdict {
    Verdict { ok: parts.iter().all(|p| p.ok), detail: parts.into_iter().map(|p| p.detail).collect::<Vec<_>>().join("; ") }
}

fn criterion(id: usize, title: &str, budget: f64, body: impl FnOnce() -> nilcalc::Result<Verdict>) -> bool {
    let start = Instant::now();
    let out = body();
    let secs = start.elapsed().as_secs_f64();
    let (ok, detail) = match out {
        Ok(v) => (v.ok && secs <= budget, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("{tag} [{id:>2}] {title}: {detail} ({secs:.1} s, budget {budget:.0} s)");
    ok
}

fn main() -> ExitCode {
    let mut c_pl = None;
    let mut results = Vec::new();

    results.push(criterion(1, "Plancherel calibration", 60.0, || {
        let r = ex::plancherel_calibrate(&ex::PlancherelConfig::default())?;
        c_pl = r.values.get("c_pl").copied();
        Ok(all(vec![at_most(&r, "cross_residual", 1e-5), at_most(&r, "inversion_error", 1e-4)]))
    }));

    let suite = ex::ExactSuiteConfig { random_cases: 24, order: 2, coef_degree: 3, ..Default::default() };
    results.push(criterion(2, "composition exactness", 30.0, || {
        let r = ex::compose_check(&suite)?;
        let cases = r.values["cases"];
        let mut v = at_most(&r, "mismatches", 0.0);
        v.detail = format!("{} of {cases} cases identical in ε", cases - value(&r, "mismatches"));
        Ok(v)
    }));
    results.push(criterion(3, "adjoint exactness", 30.0, || {
        let r = ex::adjoint_check(&suite)?;
        let cases = r.values["cases"];
        let mut v = at_most(&r, "mismatches", 0.0);
        v.detail = format!("{} of {cases} cases identical in ε", cases - value(&r, "mismatches"));
        Ok(v)
    }));

    results.push(criterion(4, "almost-analytic extension", 120.0, || {
        let cfg = ex::ExtensionConfig { support_samples: 10_000, decay_orders: vec![1, 2, 3, 4], ..Default::default() };
        let r = ex::extension_audit(&cfg)?;
        let mut parts = vec![at_most(&r, "axis_error", 1e-12), at_most(&r, "support_violations", 0.0)];
        for n in 1..=4 {
            parts.push(at_least(&r, &format!("dbar_slope_n{n}"), n as f64 - 0.1));
        }
        parts.push(at_most(&r, "moment_change", 0.01));
        Ok(all(parts))
    }));

    results.push(criterion(5, "Helffer–Sjöstrand vs diagonalisation", 120.0, || {
        let cfg = ex::HsCompareConfig::default();
        assert_eq!((cfg.matrices, cfg.functions.len()), (100, 5));
        let r = ex::hs_compare(&cfg)?;
        Ok(at_most(&r, "max_rel_frobenius_error", 1e-6))
    }));

    results.push(criterion(6, "parametrix", 180.0, || {
        let r = ex::parametrix_audit(&ex::ParametrixConfig::default())?;
        let mut parts = vec![at_most(&r, "recursion_residual", 1e-10)];
        for n in 0..=2 {
            parts.push(at_least(&r, &format!("remainder_slope_n{n}"), n as f64 + 1.0 - 0.1));
        }
        Ok(all(parts))
    }));

    results.push(criterion(7, "principal symbol of ψ(T)", 120.0, || {
        let cfg = ex::TauConfig::default();
        assert_eq!((cfg.samples, cfg.functions.len()), (10, 3));
        let r = ex::tau_principal_check(&cfg)?;
        Ok(all(vec![at_most(&r, "principal_error", 1e-6), at_most(&r, "node_sum_error", 1e-6)]))
    }));

    results.push(criterion(8, "Weyl law", 300.0, || {
        let cfg = ex::WeylConfig { c_pl, ..Default::default() };
        let r = ex::weyl_verify(&cfg)?;
        Ok(all(vec![
            at_most(&r, "final_deviation", 0.05),
            at_least(&r, "deviation_decreasing_over_last_three", 1.0),
            at_most(&r, "rows_without_cap_certificate", 0.0),
            at_most(&r, "counts_changed_by_cap_doubling", 0.0),
        ]))
    }));

    results.push(criterion(9, "Christ identity", 60.0, || {
        let r = ex::christ_check(&ex::ChristConfig { c_pl, ..Default::default() })?;
        Ok(at_most(&r, "c0_spread", 1e-4))
    }));

    results.push(criterion(10, "HS scaling", 30.0, || {
        let r = ex::hs_scaling(&ex::HsScalingConfig { c_pl, ..Default::default() })?;
        Ok(at_most(&r, "compensated_deviation", 1e-8))
    }));

    results.push(criterion(11, "resolvent-bound audit", 120.0, || {
        let cfg = ex::ResolventConfig::default();
        assert!(cfg.im_range == [1e-3, 1.0] && cfg.re_max == 10.0);
        let r = ex::resolvent_audit(&cfg)?;
        let mut v = at_most(&r, "violations", 0.0);
        v.detail = format!("{} (fitted exponent {:.3})", v.detail, r.values["p_fit"]);
        Ok(v)
    }));

    let passed = results.iter().filter(|&&b| b).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
