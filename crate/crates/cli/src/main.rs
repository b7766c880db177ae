//! `nilcalc`: runs the audits and studies of the library from config files and
//! writes machine-readable reports.
//!
//! Exit status: 0 when every check passes, 1 when a threshold fails, 2 on a
//! config or runtime error.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nilcalc::experiments::{self as ex, Bound, Report};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "nilcalc", version, about = "Semiclassical calculus on the Heisenberg group: audits and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; the built-in defaults when absent.
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir; default nilcalc-out/<experiment>).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print the default config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Report directory or its report.toml.
    report: PathBuf,
    /// Comma-separated column names, in output order.
    #[arg(long, short, value_delimiter = ',', required = true)]
    columns: Vec<String>,
    /// Table to read; by default the one holding every requested column.
    #[arg(long, short)]
    table: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Plancherel constant on one Gaussian and cross-check it on another.
    PlancherelCalibrate(RunArgs),
    /// Exact check of the ε-expansion of compositions.
    ComposeCheck(RunArgs),
    /// Exact check of the ε-expansion of adjoints.
    AdjointCheck(RunArgs),
    /// Axis, support, ∂̄-decay and moment audits of almost-analytic extensions.
    ExtensionAudit(RunArgs),
    /// Helffer–Sjöstrand functional calculus against diagonalisation.
    HsCompare(RunArgs),
    /// Parametrix recursion residuals and remainder ε-slopes.
    ParametrixAudit(RunArgs),
    /// Principal term of ψ(T) against ψ(σ₀).
    TauPrincipalCheck(RunArgs),
    /// Polynomial bound on resolvent seminorms.
    ResolventAudit(RunArgs),
    /// Eigenvalue counts on the nilmanifold against the Weyl integral.
    WeylVerify(RunArgs),
    /// Multiplier independence of the constant in Christ's identity.
    ChristCheck(RunArgs),
    /// ε-scaling of the phase-space integral of f(σ₀).
    HsScaling(RunArgs),
    /// Project report columns into a plain table for plotting.
    Plot(PlotArgs),
}

fn print_report(rep: &Report) {
    for l in &rep.summary {
        println!("{l}");
    }
    for c in &rep.checks {
        let rel = match c.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        let tag = if c.pass { "pass" } else { "FAIL" };
        println!("{tag} {}: {:e} {rel} {:e}", c.name, c.value, c.threshold);
    }
}

fn run<T>(name: &str, required: bool, args: &RunArgs, f: fn(&T) -> nilcalc::Result<Report>) -> Result<bool>
where
    T: Serialize + DeserializeOwned + Default,
{
    if args.print_config {
        print!("{}", config::render(name, &T::default())?);
        return Ok(true);
    }
    let loaded = match &args.config {
        Some(p) => config::load::<T>(name, p, required)?,
        None => config::Loaded {
            params: T::default(),
            group: config::GroupEcho::default(),
            out_dir: None,
            source: "defaults".into(),
        },
    };
    let rep = f(&loaded.params)?;
    let dir = args.out.clone().or_else(|| loaded.out_dir.clone()).unwrap_or_else(|| PathBuf::from("nilcalc-out").join(name));
    let path = output::write_report(&dir, &rep, &loaded)?;
    print_report(&rep);
    println!("report: {}", path.display());
    Ok(rep.passed())
}

fn plot(args: &PlotArgs) -> Result<bool> {
    let t = output::emit_plot_data(&args.report, args.table.as_deref(), &args.columns)?;
    match &args.output {
        Some(p) => std::fs::write(p, t.to_tsv()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", t.to_tsv()),
    }
    Ok(true)
}

fn dispatch(cmd: &Command) -> Result<bool> {
    match cmd {
        Command::PlancherelCalibrate(a) => run("plancherel-calibrate", false, a, ex::plancherel_calibrate),
        Command::ComposeCheck(a) => run("compose-check", false, a, ex::compose_check),
        Command::AdjointCheck(a) => run("adjoint-check", false, a, ex::adjoint_check),
        Command::ExtensionAudit(a) => run("extension-audit", false, a, ex::extension_audit),
        Command::HsCompare(a) => run("hs-compare", false, a, ex::hs_compare),
        Command::ParametrixAudit(a) => run("parametrix-audit", false, a, ex::parametrix_audit),
        Command::TauPrincipalCheck(a) => run("tau-principal-check", false, a, ex::tau_principal_check),
        Command::ResolventAudit(a) => run("resolvent-audit", false, a, ex::resolvent_audit),
        Command::WeylVerify(a) => run("weyl-verify", true, a, ex::weyl_verify),
        Command::ChristCheck(a) => run("christ-check", false, a, ex::christ_check),
        Command::HsScaling(a) => run("hs-scaling", false, a, ex::hs_scaling),
        Command::Plot(a) => plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn every_experiment_has_a_subcommand() {
        let cmd = Cli::command();
        for name in ex::EXPERIMENTS {
            assert!(cmd.find_subcommand(name).is_some(), "{name}");
        }
        cmd.debug_assert();
    }

    fn matches_default<T: DeserializeOwned + Default + PartialEq + std::fmt::Debug>(name: &str) {
        let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"));
        let loaded = config::load::<T>(name, &path, true).unwrap();
        assert_eq!(loaded.params, T::default(), "{name}");
    }

    #[test]
    fn shipped_configs_are_the_defaults() {
        matches_default::<ex::PlancherelConfig>("plancherel-calibrate");
        matches_default::<ex::ExactSuiteConfig>("compose-check");
        matches_default::<ex::ExactSuiteConfig>("adjoint-check");
        matches_default::<ex::ExtensionConfig>("extension-audit");
        matches_default::<ex::HsCompareConfig>("hs-compare");
        matches_default::<ex::ParametrixConfig>("parametrix-audit");
        matches_default::<ex::TauConfig>("tau-principal-check");
        matches_default::<ex::ResolventConfig>("resolvent-audit");
        matches_default::<ex::WeylConfig>("weyl-verify");
        matches_default::<ex::ChristConfig>("christ-check");
        matches_default::<ex::HsScalingConfig>("hs-scaling");
    }
}
