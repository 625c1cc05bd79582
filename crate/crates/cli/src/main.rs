//! `shrinkage`: simulate store traces, estimate sale and loss rates, filter
//! the hidden inventory, and export plot data.
//!
//! Exit codes: 0 success, 1 bad flags or unreadable input, 2 data the model
//! cannot explain.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use shrinkage::em::{run_em, EMOptions, EMResult};
use shrinkage::filter::{belief_update, run_filter, BeliefSeries};
use shrinkage::io::{
    read_trace_csv, write_beliefs_csv, write_filter_csv, write_plot_csv, write_trace_csv, write_truth_csv,
    EstimateReport,
};
use shrinkage::mstep::MStepOptions;
use shrinkage::oracle::{brute_force_mle, EnumerationLimit};
use shrinkage::sim::{simulate, SimConfig};
use shrinkage::{ObservedTrace, Params, Units};

#[derive(Debug, Parser)]
#[command(name = "shrinkage", version, about = "Inventory shrinkage estimation from sales and delivery records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a store and write the observed trace and the ground truth.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value = "trace.csv")]
        trace_out: PathBuf,
        #[arg(long, default_value = "truth.csv")]
        truth_out: PathBuf,
    },
    /// Fit the sale rate and loss rate to a trace with hard EM.
    Estimate {
        #[arg(long)]
        trace: PathBuf,
        /// Starting inventory, which the trace file does not record.
        #[arg(long)]
        initial: Units,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long, default_value = "estimate.json")]
        out: PathBuf,
        /// Add the filtered per-period inventory at the fitted parameters.
        #[arg(long)]
        mmle: bool,
        /// Filter used with --mmle.
        #[arg(long, default_value = "bayes")]
        mode: String,
        /// Cross-check the final trajectory against exhaustive enumeration
        /// (short traces only).
        #[arg(long)]
        verify: bool,
    },
    /// Track the belief over the hidden inventory for fixed parameters.
    Filter {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        initial: Units,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value = "bayes")]
        mode: String,
        #[arg(long, default_value = "filter.csv")]
        out: PathBuf,
        /// Also write every belief in long format.
        #[arg(long)]
        beliefs: Option<PathBuf>,
    },
    /// Simulate, estimate and filter in one go, writing long-format plot data.
    ReplicateFigure {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long, default_value = "bayes")]
        mode: String,
        #[arg(long, default_value = "figure.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 60)]
    horizon: usize,
    #[arg(long, default_value_t = 5.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.25)]
    lambda: f64,
    #[arg(long, default_value_t = 15)]
    initial: Units,
    #[arg(long, default_value_t = 20)]
    order_qty: Units,
    #[arg(long, default_value_t = 10)]
    reorder_point: Units,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            initial_inventory: self.initial,
            sigma_true: self.sigma,
            lambda_true: self.lambda,
            horizon: self.horizon,
            order_qty: self.order_qty,
            reorder_point: self.reorder_point,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct EmArgs {
    /// Starting sale rate; defaults to the mean observed sales.
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    lambda0: f64,
    /// Stop when both parameters move less than this.
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// M-step: robust or gradient20.
    #[arg(long, default_value = "robust")]
    mstep: String,
}

impl EmArgs {
    fn options(&self) -> Result<EMOptions> {
        let opts = EMOptions {
            sigma0: self.sigma0,
            lambda0: self.lambda0,
            tol_sigma: self.tol,
            tol_lambda: self.tol,
            max_iters: self.max_iters,
            mstep: MStepOptions::with_strategy(&self.mstep)?,
        };
        opts.validate()?;
        Ok(opts)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_trace(path: &Path, initial: Units) -> Result<ObservedTrace> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let trace = read_trace_csv(BufReader::new(file), initial).with_context(|| format!("reading {}", path.display()))?;
    Ok(trace)
}

fn filter_series(trace: &ObservedTrace, params: &Params, mode: &str) -> Result<BeliefSeries> {
    Ok(run_filter(trace, params, belief_update(mode)?)?)
}

fn verify(trace: &ObservedTrace, result: &EMResult) -> Result<()> {
    match brute_force_mle(trace, &result.params(), EnumerationLimit::default()) {
        Ok((best, _)) if best == result.trajectory => {
            eprintln!("verify: trajectory matches exhaustive enumeration");
            Ok(())
        }
        Ok(_) => bail!("verify: trajectory differs from exhaustive enumeration"),
        Err(shrinkage::Error::EnumerationLimit(_)) => {
            eprintln!("verify: skipped, trace too long to enumerate");
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_simulate(sim: &SimArgs, trace_out: &Path, truth_out: &Path) -> Result<()> {
    let outcome = simulate(&sim.config())?;
    let mut w = create(trace_out)?;
    write_trace_csv(&mut w, &outcome.observed_trace())?;
    w.flush()?;
    let mut w = create(truth_out)?;
    write_truth_csv(&mut w, &outcome)?;
    w.flush()?;
    let lost: Units = outcome.losses.iter().sum();
    let freeze = match outcome.freeze_period {
        Some(t) => format!("froze at period {t}"),
        None => "no freeze".to_string(),
    };
    println!(
        "simulated {} periods (seed {}): {} units lost, {freeze}",
        outcome.horizon(),
        sim.seed,
        lost
    );
    Ok(())
}

fn cmd_estimate(
    trace_path: &Path,
    initial: Units,
    em: &EmArgs,
    out: &Path,
    mmle: bool,
    mode: &str,
    check: bool,
) -> Result<()> {
    let opts = em.options()?;
    let filter = belief_update(mode)?;
    let trace = load_trace(trace_path, initial)?;
    let result = run_em(&trace, &opts)?;
    if !result.converged {
        eprintln!("warning: no convergence after {} iterations", result.iterations);
    }
    if check {
        verify(&trace, &result)?;
    }
    let path = if mmle {
        Some(run_filter(&trace, &result.params(), filter)?.mmle_path)
    } else {
        None
    };
    let report = EstimateReport::new(&result, path);
    let mut w = create(out)?;
    writeln!(w, "{}", report.to_json())?;
    w.flush()?;
    println!(
        "sigma*={:.4} lambda*={:.4} iterations={} converged={}",
        result.sigma_star, result.lambda_star, result.iterations, result.converged
    );
    Ok(())
}

fn cmd_filter(
    trace_path: &Path,
    initial: Units,
    params: Params,
    mode: &str,
    out: &Path,
    beliefs: Option<&Path>,
) -> Result<()> {
    belief_update(mode)?;
    let trace = load_trace(trace_path, initial)?;
    let series = filter_series(&trace, &params, mode)?;
    let mut w = create(out)?;
    write_filter_csv(&mut w, &series)?;
    w.flush()?;
    if let Some(path) = beliefs {
        let mut w = create(path)?;
        write_beliefs_csv(&mut w, &series)?;
        w.flush()?;
    }
    let last = series.mmle_path.last().copied().unwrap_or(initial);
    println!("filtered {} periods ({mode}): final mmle={last}", trace.horizon());
    Ok(())
}

fn cmd_replicate_figure(sim: &SimArgs, em: &EmArgs, mode: &str, out: &Path) -> Result<()> {
    let opts = em.options()?;
    belief_update(mode)?;
    let outcome = simulate(&sim.config())?;
    let trace = outcome.observed_trace();
    let result = run_em(&trace, &opts)?;
    let series = filter_series(&trace, &result.params(), mode)?;
    let mut w = create(out)?;
    write_plot_csv(&mut w, &outcome, &series.mmle_path)?;
    w.flush()?;
    println!(
        "sigma0={:.2} lambda0={:.2} sigma*={:.2} lambda*={:.2} iterations={}",
        result.initial.sigma(),
        result.initial.lambda(),
        result.sigma_star,
        result.lambda_star,
        result.iterations
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { sim, trace_out, truth_out } => cmd_simulate(&sim, &trace_out, &truth_out),
        Command::Estimate { trace, initial, em, out, mmle, mode, verify } => {
            cmd_estimate(&trace, initial, &em, &out, mmle, &mode, verify)
        }
        Command::Filter { trace, initial, sigma, lambda, mode, out, beliefs } => {
            let params = Params::new(sigma, lambda)?;
            cmd_filter(&trace, initial, params, &mode, &out, beliefs.as_deref())
        }
        Command::ReplicateFigure { sim, em, mode, out } => cmd_replicate_figure(&sim, &em, &mode, &out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<shrinkage::Error>() {
        Some(e) if e.is_model_infeasible() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
