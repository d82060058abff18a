//! Command-line front end: single-point rates, grid sweeps, power
//! allocation, derivative-identity checks and regime queries.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use afnet::immse::{awgn_mmse, fd_identity_check, EstimationScheme, Scenario, SicOrder};
use afnet::powalloc::{
    mercury_waterfill, water_level_solve, water_level_solve_fixed_point, waterfill_p1,
    waterfill_p2, AllocationResult,
};
use afnet::sweep::{emit_csv, emit_plot_data, run_sweep, ScenarioConfig};
use afnet::{equivalent_channel, classify_regime, rate_report, Sink, NATS_TO_BITS};

/// Seed override applied to every Monte-Carlo command.
const SEED_ENV: &str = "AFNET_SEED";

#[derive(Parser)]
#[command(
    name = "afnet",
    about = "Two-source, two-relay amplify-and-forward network analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form rate report at a single (p1, p2) point.
    Rates {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        p1: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
        /// Sink node (5 or 6).
        #[arg(long, default_value_t = 5)]
        sink: u8,
        /// Print rates in bits instead of nats.
        #[arg(long)]
        bits: bool,
    },
    /// Evaluate the configured (p1, p2) grid and write a CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Output CSV path (overrides the config's `output.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also emit plot triplets of this column.
        #[arg(long)]
        plot_column: Option<String>,
        /// Plot-data output path.
        #[arg(long)]
        plot_out: Option<PathBuf>,
    },
    /// Waterfilling / mercury-waterfilling power allocation.
    Alloc {
        #[command(flatten)]
        config: ConfigArg,
        /// Allocate at a fixed water level (eta).
        #[arg(long, conflicts_with = "budget")]
        eta: Option<f64>,
        /// Allocate a shared power budget across both inputs.
        #[arg(long)]
        budget: Option<f64>,
        /// Re-derive the equivalent channel from the allocated powers until
        /// they settle (budget mode only).
        #[arg(long, requires = "budget")]
        fixed_point: bool,
        /// Interference power assumed for input 1 in eta mode; defaults to
        /// input 2's own allocation at the same eta.
        #[arg(long)]
        p2: Option<f64>,
    },
    /// Finite-difference check of the derivative identity; exits nonzero on
    /// failure.
    ImmseCheck {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Central-difference step in the normalized-snr variable.
        #[arg(long)]
        step: f64,
        /// Residual tolerance for the deterministic (Gaussian) branch.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long)]
        p1: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
    },
    /// Operating-regime label of a (p1, p2) point.
    Regime {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        p2: f64,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
}

impl ConfigArg {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut config = ScenarioConfig::from_path(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            config.seed = seed
                .parse()
                .with_context(|| format!("parsing {SEED_ENV}={seed}"))?;
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Joint,
    Sic,
}

fn parse_sink(sink: u8) -> Result<Sink> {
    Sink::from_node_id(sink).ok_or_else(|| anyhow::anyhow!("sink must be 5 or 6, got {sink}"))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Rates {
            config,
            p1,
            p2,
            sink,
            bits,
        } => {
            let config = config.load()?;
            let sink = parse_sink(sink)?;
            let powers = config.source_powers(p1, p2)?;
            let report =
                rate_report(&config.topology, &powers, &config.snr, sink, &config.thresholds)?;
            let (scale, unit) = if bits { (NATS_TO_BITS, "bits") } else { (1.0, "nats") };
            println!("sink          {}", report.sink);
            println!("p1            {}", powers.p1);
            println!("p2            {}", powers.p2);
            println!("r1_tin        {:.9} {unit}", report.r1_tin * scale);
            println!("r2_sic        {:.9} {unit}", report.r2_sic * scale);
            println!("joint         {:.9} {unit}", report.joint * scale);
            println!("cutset        {:.9} {unit}", report.cutset * scale);
            println!("gap_cutset    {:.9} {unit}", report.gap_cutset * scale);
            println!("psi_integral  {:.9} {unit}", report.psi_integral * scale);
            println!("regime        {}", report.regime);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            out,
            plot_column,
            plot_out,
        } => {
            let config = config.load()?;
            let records = run_sweep(&config)?;
            let out = out
                .or_else(|| config.output_csv.clone())
                .context("no output path: pass --out or set output.csv")?;
            emit_csv(&records, &out)?;
            println!("{} records -> {}", records.len(), out.display());

            let plot_column = plot_column.or_else(|| config.output_plot_column.clone());
            if let Some(column) = plot_column {
                let plot_out = plot_out
                    .or_else(|| config.output_plot.clone())
                    .context("no plot path: pass --plot-out or set output.plot")?;
                emit_plot_data(&records, &column, &plot_out)?;
                println!("plot data ({column}) -> {}", plot_out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Alloc {
            config,
            eta,
            budget,
            fixed_point,
            p2,
        } => {
            let config = config.load()?;
            run_alloc(&config, eta, budget, fixed_point, p2)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ImmseCheck {
            config,
            scheme,
            step,
            tolerance,
            p1,
            p2,
        } => {
            let config = config.load()?;
            let powers = config.source_powers(p1, p2)?;
            let equiv = equivalent_channel(&config.topology, &powers, &config.snr, Sink::Node5)?;
            let scheme = match scheme {
                SchemeArg::Joint => EstimationScheme::Joint,
                SchemeArg::Sic => match config.scheme {
                    EstimationScheme::Sic(order) => EstimationScheme::Sic(order),
                    EstimationScheme::Joint => EstimationScheme::Sic(SicOrder::FirstThenSecond),
                },
            };
            let scenario = Scenario {
                equiv,
                powers,
                snr: config.snr,
                dist1: config.dist1.clone(),
                dist2: config.dist2.clone(),
                samples: config.samples,
                seed: config.seed,
            };
            let check = fd_identity_check(&scenario, scheme, step, tolerance)?;
            println!(
                "branch             {}",
                if check.monte_carlo { "monte-carlo" } else { "closed-form" }
            );
            println!("derivative         {:.12e}", check.derivative);
            println!("finite_difference  {:.12e}", check.finite_difference);
            println!("residual           {:.12e}", check.residual);
            println!("threshold          {:.12e}", check.threshold);
            println!("status             {}", if check.passed { "pass" } else { "FAIL" });
            Ok(if check.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Regime { config, p1, p2 } => {
            let config = config.load()?;
            let powers = config.source_powers(Some(p1), Some(p2))?;
            let equiv = equivalent_channel(&config.topology, &powers, &config.snr, Sink::Node5)?;
            println!("{}", classify_regime(&powers, &equiv, &config.thresholds));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_allocation(name: &str, result: &AllocationResult) {
    println!(
        "{name}  p* = {:.9}  eta = {:.9}  active = {}  residual = {:.3e}",
        result.p_star, result.eta, result.active, result.residual
    );
}

fn run_alloc(
    config: &ScenarioConfig,
    eta: Option<f64>,
    budget: Option<f64>,
    fixed_point: bool,
    p2_override: Option<f64>,
) -> Result<()> {
    // snapshot channel at the configured source powers (0 if unset)
    let powers = afnet::PowerProfile::new(
        config.source_p1.unwrap_or(0.0),
        config.source_p2.unwrap_or(0.0),
        config.relay_p3,
        config.relay_p4,
    );
    let equiv = equivalent_channel(&config.topology, &powers, &config.snr, Sink::Node5)?;
    let mmse1 = |s: f64| awgn_mmse(&config.dist1, s);
    let mmse2 = |s: f64| awgn_mmse(&config.dist2, s);
    let gaussian = config.dist1.is_gaussian() && config.dist2.is_gaussian();

    match (eta, budget) {
        (Some(eta), None) => {
            let p2_result = if gaussian {
                waterfill_p2(eta, &equiv, &config.snr)?
            } else {
                mercury_waterfill(
                    mmse2,
                    eta,
                    equiv.h2eq * equiv.h2eq * config.snr.s2,
                    equiv.sigma_zeq,
                    &config.snr,
                )?
            };
            let interference = p2_override.unwrap_or(p2_result.p_star);
            let p1_result = if gaussian {
                waterfill_p1(eta, interference, &equiv, &config.snr)?
            } else {
                let noise = equiv.sigma_zeq
                    + equiv.h2eq * equiv.h2eq * config.snr.s2 * interference * config.snr.snr;
                mercury_waterfill(
                    mmse1,
                    eta,
                    equiv.h1eq * equiv.h1eq * config.snr.s1,
                    noise,
                    &config.snr,
                )?
            };
            print_allocation("p1", &p1_result);
            print_allocation("p2", &p2_result);
        }
        (None, Some(budget)) => {
            if fixed_point {
                let fp = water_level_solve_fixed_point(
                    &config.topology,
                    (config.relay_p3, config.relay_p4),
                    &config.snr,
                    Sink::Node5,
                    budget,
                    mmse1,
                    mmse2,
                )?;
                println!(
                    "fixed point: {} iterations, converged = {}",
                    fp.iterations, fp.converged
                );
                println!("eta = {:.9}  (water level {:.9})", fp.solution.eta, 1.0 / fp.solution.eta);
                print_allocation("p1", &fp.solution.p1);
                print_allocation("p2", &fp.solution.p2);
                println!("budget residual    {:.3e}", fp.solution.budget_residual);
                println!("piggyback ordered  {}", fp.solution.piggyback_ordered);
            } else {
                let sol = water_level_solve(budget, &equiv, &config.snr, mmse1, mmse2)?;
                println!("eta = {:.9}  (water level {:.9})", sol.eta, 1.0 / sol.eta);
                print_allocation("p1", &sol.p1);
                print_allocation("p2", &sol.p2);
                println!("budget residual    {:.3e}", sol.budget_residual);
                println!("piggyback ordered  {}", sol.piggyback_ordered);
            }
        }
        _ => bail!("pass exactly one of --eta or --budget"),
    }
    Ok(())
}
