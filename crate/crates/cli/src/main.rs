use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use fpphe_cli::{
    cmd_classify, cmd_estimate, cmd_render, cmd_replay, cmd_simulate, cmd_sweep, resolve_out_dir,
    ClassifyArgs, CliError, EstimateArgs,
};
use fpphe_core::engine::ProcessFilter;
use std::path::PathBuf;
use std::process::ExitCode;

/// Discrete-event simulator for two competing first-passage-percolation
/// processes on finite lattice windows, with multi-scale box analysis.
#[derive(Parser)]
#[command(name = "fpphe", version, about)]
struct Cli {
    /// Number of worker threads for replica-level parallelism.
    #[arg(long, global = true)]
    parallel: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StopFlags {
    /// Stop when the event queue empties.
    #[arg(long)]
    stop_quiescence: bool,
    /// Stop before processing any event after this time.
    #[arg(long)]
    stop_horizon: Option<f64>,
    /// Stop once this many sites are occupied.
    #[arg(long)]
    stop_max_occupied: Option<usize>,
    /// Stop at the first boundary hit by this process (fpp1|fpplambda|either).
    #[arg(long)]
    stop_boundary: Option<String>,
}

impl StopFlags {
    fn apply(
        &self,
        stop: &mut fpphe_core::engine::StopCondition,
    ) -> Result<(), CliError> {
        if self.stop_quiescence {
            stop.quiescence = true;
        }
        if let Some(t) = self.stop_horizon {
            stop.time_horizon = Some(t);
        }
        if let Some(n) = self.stop_max_occupied {
            stop.max_occupied = Some(n);
        }
        if let Some(b) = &self.stop_boundary {
            stop.first_boundary_hit_by = Some(match b.as_str() {
                "fpp1" => ProcessFilter::Fpp1,
                "fpplambda" => ProcessFilter::FppLambda,
                "either" => ProcessFilter::Either,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown boundary process {other:?}"
                    )))
                }
            });
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write snapshot, CSV and manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the configured world seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        stop: StopFlags,
    },
    /// Sweep a (p, lambda) grid with per-cell resumability.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Classify a snapshot into box reports and property violations.
    Classify {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        params_l1: i64,
        #[arg(long, default_value_t = 1)]
        params_k_max: usize,
        #[arg(long, default_value_t = 0.1)]
        params_eps: f64,
        #[arg(long, default_value_t = 5.0)]
        params_c1: f64,
        #[arg(long, default_value_t = 5.0)]
        params_c2: f64,
        #[arg(long, default_value_t = 3)]
        params_big_a: u32,
        #[arg(long, default_value_t = 1.0)]
        params_big_c: f64,
        #[arg(long)]
        params_lambda_bar: Option<f64>,
        #[arg(long)]
        params_sigma: Option<u32>,
        #[arg(long)]
        params_enable_e6: bool,
        /// Replicas for the density estimate feeding the crossing event.
        #[arg(long, default_value_t = 400)]
        theta_reps: usize,
        #[arg(long, default_value_t = 100)]
        theta_half_window: i64,
    },
    /// Monte Carlo estimators over seed fields.
    Estimate {
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        p: Option<f64>,
        /// Window side for the filled-seed reach event (even).
        #[arg(long)]
        m: Option<i64>,
        #[arg(long, default_value_t = 100)]
        half_window: i64,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 14)]
        bisection_iters: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render a 2-d snapshot as a binary pixmap.
    Render {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        bands: u32,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Re-execute a manifest and verify byte-identical outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.parallel {
        // Best effort: the global pool can only be initialized once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match cli.command {
        Command::Simulate {
            config,
            out_dir,
            seed,
            stop,
        } => {
            let mut cfg = fpphe_cli::config::SimulateConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.world_seed = seed;
            }
            stop.apply(&mut cfg.stop)?;
            let out = resolve_out_dir(out_dir);
            let manifest = cmd_simulate(&cfg, &out)?;
            println!(
                "simulate: wrote {} outputs to {}",
                manifest.outputs.len(),
                out.display()
            );
            Ok(())
        }
        Command::Sweep { config, out_dir } => {
            let cfg = fpphe_cli::config::SweepConfig::load(&config)?;
            let out = resolve_out_dir(out_dir);
            let path = cmd_sweep(&cfg, &out)?;
            println!("sweep: aggregate written to {}", path.display());
            Ok(())
        }
        Command::Classify {
            snapshot,
            out_dir,
            params_l1,
            params_k_max,
            params_eps,
            params_c1,
            params_c2,
            params_big_a,
            params_big_c,
            params_lambda_bar,
            params_sigma,
            params_enable_e6,
            theta_reps,
            theta_half_window,
        } => {
            let mut args = ClassifyArgs::new(params_l1, params_k_max);
            args.spec.eps = params_eps;
            args.spec.c1 = params_c1;
            args.spec.c2 = params_c2;
            args.spec.big_a = params_big_a;
            args.spec.big_c = params_big_c;
            if let Some(lb) = params_lambda_bar {
                args.spec.lambda_bar = lb;
            }
            args.spec.sigma_override = params_sigma;
            args.spec.enable_e6 = params_enable_e6;
            args.spec.theta_reps = theta_reps;
            args.spec.theta_half_window = theta_half_window;
            let out = resolve_out_dir(out_dir);
            let manifest = cmd_classify(&snapshot, &args, &out)?;
            println!(
                "classify: wrote {} outputs to {}",
                manifest.outputs.len(),
                out.display()
            );
            Ok(())
        }
        Command::Estimate {
            estimator,
            p,
            m,
            half_window,
            reps,
            seed,
            bisection_iters,
            out_dir,
        } => {
            let args = EstimateArgs {
                estimator: estimator.parse()?,
                p,
                m,
                half_window,
                reps,
                seed,
                bisection_iters,
            };
            let out = resolve_out_dir(out_dir);
            let path = cmd_estimate(&args, &out)?;
            let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
            print!("{text}");
            Ok(())
        }
        Command::Render {
            snapshot,
            out,
            bands,
            out_dir,
        } => {
            let out_path = match out {
                Some(p) => p,
                None => resolve_out_dir(out_dir).join("render.ppm"),
            };
            cmd_render(&snapshot, bands, &out_path)?;
            println!("render: wrote {}", out_path.display());
            Ok(())
        }
        Command::Replay { manifest, out_dir } => {
            let out = resolve_out_dir(out_dir);
            cmd_replay(&manifest, &out)?;
            println!("replay: all outputs reproduced byte-exactly");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
