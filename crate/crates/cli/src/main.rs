use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wec_sim::commands::{cmd_benchmark, cmd_design, cmd_flops, cmd_simulate};
use wec_sim::{CliError, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "wecsim",
    version,
    about = "Single-iteration MPC experiments for a wave energy converter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the solver gains of every controller and report them.
    Design(Common),
    /// Simulate every controller; write CSV logs, summaries and a comparison.
    Simulate(Common),
    /// Simulate every controller over the configured period sweep.
    Benchmark(Common),
    /// Per-step FLOP ledger and minimum sampling periods.
    Flops(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            duration: self.duration,
            output_dir: self.out.clone(),
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design(args) => {
            for r in cmd_design(&args.load()?)? {
                println!(
                    "{}: N={} n={} r={:.6e} margin={:.6e} kp={:.6e} ki={:.6e} tau={:.6e} rho_bound={:.9} \
                     sizes G1={:?} G2={:?} G3={:?} G4={:?}",
                    r.label,
                    r.horizon,
                    r.state_dim,
                    r.r,
                    r.convexity_margin,
                    r.kp,
                    r.ki,
                    r.tau,
                    r.rho_bound,
                    r.sizes[0],
                    r.sizes[1],
                    r.sizes[2],
                    r.sizes[3]
                );
            }
        }
        Command::Simulate(args) => print_comparison(&cmd_simulate(&args.load()?)?),
        Command::Benchmark(args) => print_comparison(&cmd_benchmark(&args.load()?)?),
        Command::Flops(args) => {
            let r = cmd_flops(&args.load()?)?;
            println!(
                "OP = {:e} FLOP/s, T_p = {} s, n_i = {}",
                r.flop_rate, r.prediction_window, r.ipm_iterations
            );
            println!("real-time minimum period   {:.6} ms", r.rt_min_period * 1e3);
            println!(
                "interior-point min period  {:.6} ms",
                r.ipm_min_period * 1e3
            );
            println!("  note: {}", r.ipm_discrepancy);
            println!(
                "{:>10} {:>6} {:>14} {:>12} {:>12}",
                "T [ms]", "N", "FLOPs/step", "step [s]", "ipm [s]"
            );
            for row in &r.rows {
                println!(
                    "{:>10} {:>6} {:>14} {:>12.4e} {:>12.4e}",
                    row.period * 1e3,
                    row.horizon,
                    row.ledger.total,
                    row.step_time,
                    row.ipm_delay
                );
            }
        }
    }
    Ok(())
}

fn print_comparison(report: &wec_mpc::sim::ComparisonReport) {
    for run in &report.runs {
        println!(
            "{:>28}  N={:<5} E={:.6e} J  peak|u|={:.4}  violations p={} v={}",
            run.label,
            run.horizon,
            run.final_energy,
            run.peak_abs_u,
            run.violations.p,
            run.violations.v
        );
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wecsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
