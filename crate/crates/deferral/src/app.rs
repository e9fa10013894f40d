use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use deferral_core::bellman::{DEFAULT_GRID_SIZE, DEFAULT_MAX_ROUNDS, DEFAULT_ROUND_TOL};
use deferral_core::sim::TrajectoryConfig;
use deferral_core::{GeneralModelParams, ModelParams};

use crate::config::{pick, require, FileConfig};
use crate::error::CliError;
use crate::report::{self, PolicyKind};
use crate::table::{emit, Dataset, Format};

pub const OUT_DIR_ENV: &str = "DEFERRAL_OUT_DIR";

const DEFAULT_PSI: f64 = 2.0;
const DEFAULT_D: f64 = 1.0;
const DEFAULT_POINTS: usize = 201;
const DEFAULT_VI_TOL: f64 = 1e-9;
const DEFAULT_VI_ITER: usize = 100_000;
const DEFAULT_SWEEP_STEPS: usize = 100;

#[derive(Debug, Parser)]
#[command(
    name = "deferral",
    version,
    about = "Service-deferral policies for slotted systems with a two-slot deadline"
)]
pub struct Cli {
    /// Output format; JSON by default, CSV for `figures`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Flat TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Arrival probability per slot.
    #[arg(long)]
    pub p: Option<f64>,
    /// Service demand of each request.
    #[arg(long)]
    pub psi: Option<f64>,
    /// Waiting-cost weight.
    #[arg(long)]
    pub d: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ClassArgs {
    /// Comma-separated demand per class, increasing.
    #[arg(long, value_delimiter = ',')]
    pub demands: Option<Vec<f64>>,
    /// Comma-separated arrival probability per class.
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    /// Waiting-cost weight.
    #[arg(long)]
    pub d: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal affine policy with its cost table.
    Policy {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Symmetric Nash equilibrium policy with its cost table.
    Nash {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Piecewise-affine policy for categorical demands.
    General {
        #[command(flatten)]
        classes: ClassArgs,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Grid value iteration; uses --demands/--probs when given, else --p/--psi.
    Oracle {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        psi: Option<f64>,
        #[command(flatten)]
        classes: ClassArgs,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Monte Carlo run; CSV output is the pending-service histogram.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = PolicyKind::Optimal)]
        policy: PolicyKind,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        warmup: Option<u64>,
        #[arg(long)]
        batches: Option<usize>,
    },
    /// Average costs over p = 0, 1/steps, ..., 1.
    Sweep {
        #[arg(long)]
        psi: Option<f64>,
        #[arg(long)]
        d: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SWEEP_STEPS)]
        steps: usize,
    },
    /// Estimate p from an arrival trace (one 0/1 per line).
    Estimate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        /// Target confidence level.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        psi: Option<f64>,
        #[arg(long)]
        d: Option<f64>,
    },
    /// Cost-gap bound for a plug-in policy.
    Bound {
        #[arg(long)]
        p_hat: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        psi: Option<f64>,
        #[arg(long)]
        d: Option<f64>,
    },
    /// Write every dataset behind a figure into a directory.
    Figures {
        #[arg(long, value_enum, default_value_t = FigureSet::All)]
        set: FigureSet,
        #[arg(long, env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureSet {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    All,
}

fn model(args: &ModelArgs, cfg: &FileConfig) -> Result<ModelParams, CliError> {
    ModelParams::new(
        require(args.p, cfg.p, "p")?,
        pick(args.psi, cfg.psi, DEFAULT_PSI),
        pick(args.d, cfg.d, DEFAULT_D),
    )
    .map_err(CliError::Invalid)
}

fn classes(args: &ClassArgs, cfg: &FileConfig) -> Result<GeneralModelParams, CliError> {
    GeneralModelParams::new(
        require(args.demands.clone(), cfg.demands.clone(), "demands")?,
        require(args.probs.clone(), cfg.probs.clone(), "probs")?,
        pick(args.d, cfg.d, DEFAULT_D),
    )
    .map_err(CliError::Invalid)
}

fn probability(name: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::Parse(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Parse(format!("{name} must be positive, got {v}")))
    }
}

fn write_dataset<D: Dataset>(
    data: &D,
    format: Format,
    output: Option<&Path>,
) -> Result<(), CliError> {
    match output {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut out = BufWriter::new(file);
            emit(data, format, &mut out)?;
            out.flush().map_err(|e| CliError::io(path, e))
        }
        None => emit(data, format, io::stdout().lock()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let format = pick(cli.format, cfg.format, Format::Json);
    let output = cli.output.as_deref();
    match &cli.command {
        Command::Policy { model: m, points } | Command::Nash { model: m, points } => {
            let kind = match cli.command {
                Command::Policy { .. } => PolicyKind::Optimal,
                _ => PolicyKind::Nash,
            };
            let params = model(m, &cfg)?;
            let data =
                report::policy_report(kind, &params, pick(*points, cfg.points, DEFAULT_POINTS))?;
            write_dataset(&data, format, output)
        }
        Command::General {
            classes: c,
            points,
            tol,
            max_iter,
        } => {
            let params = classes(c, &cfg)?;
            let tol = positive("tol", pick(*tol, cfg.tol, DEFAULT_ROUND_TOL))?;
            let data = report::general_report(
                &params,
                tol,
                pick(*max_iter, cfg.max_iter, DEFAULT_MAX_ROUNDS),
                pick(*points, cfg.points, DEFAULT_POINTS),
            )?;
            write_dataset(&data, format, output)
        }
        Command::Oracle {
            p,
            psi,
            classes: c,
            grid,
            tol,
            max_iter,
        } => {
            let params = if c.demands.is_some() || (p.is_none() && cfg.demands.is_some()) {
                classes(c, &cfg)?
            } else {
                let m = ModelArgs {
                    p: *p,
                    psi: *psi,
                    d: c.d,
                };
                model(&m, &cfg)?.into()
            };
            let tol = positive("tol", pick(*tol, cfg.tol, DEFAULT_VI_TOL))?;
            let data = report::oracle_report(
                &params,
                pick(*grid, cfg.grid, DEFAULT_GRID_SIZE),
                tol,
                pick(*max_iter, cfg.max_iter, DEFAULT_VI_ITER),
            )?;
            write_dataset(&data, format, output)
        }
        Command::Simulate {
            model: m,
            policy,
            horizon,
            seed,
            warmup,
            batches,
        } => {
            let params = model(m, &cfg)?;
            let defaults = TrajectoryConfig::default();
            let config = TrajectoryConfig {
                horizon: pick(*horizon, cfg.horizon, defaults.horizon),
                seed: pick(*seed, cfg.seed, defaults.seed),
                warmup: pick(*warmup, cfg.warmup, defaults.warmup),
                batches: pick(*batches, cfg.batches, defaults.batches),
            };
            let data = report::simulation_report(*policy, &params, &config)?;
            write_dataset(&data, format, output)
        }
        Command::Sweep { psi, d, steps } => {
            let data = report::sweep_report(
                pick(*psi, cfg.psi, DEFAULT_PSI),
                pick(*d, cfg.d, DEFAULT_D),
                *steps,
            )?;
            write_dataset(&data, format, output)
        }
        Command::Estimate {
            trace,
            eps,
            h,
            psi,
            d,
        } => {
            let text = fs::read_to_string(trace).map_err(|e| CliError::io(trace, e))?;
            let state = report::parse_trace(&text)?;
            let eps = positive("eps", require(*eps, cfg.eps, "eps")?)?;
            let h = probability("h", require(*h, cfg.h, "h")?)?;
            let psi = pick(*psi, cfg.psi, DEFAULT_PSI);
            let d = pick(*d, cfg.d, DEFAULT_D);
            let data = report::estimate_report(state, eps, h, psi, d)?;
            write_dataset(&data, format, output)
        }
        Command::Bound { p_hat, eps, psi, d } => {
            let p_hat = probability("p_hat", require(*p_hat, cfg.p_hat, "p_hat")?)?;
            let eps = positive("eps", require(*eps, cfg.eps, "eps")?)?;
            let psi = pick(*psi, cfg.psi, DEFAULT_PSI);
            let d = pick(*d, cfg.d, DEFAULT_D);
            ModelParams::new(p_hat, psi, d).map_err(CliError::Invalid)?;
            let data = report::bound_report(p_hat, eps, psi, d)?;
            write_dataset(&data, format, output)
        }
        Command::Figures {
            set,
            out_dir,
            seed,
            horizon,
        } => {
            let dir = out_dir
                .clone()
                .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("figures"));
            let format = pick(cli.format, cfg.format, Format::Csv);
            let defaults = TrajectoryConfig::default();
            let sim = TrajectoryConfig {
                horizon: pick(*horizon, cfg.horizon, defaults.horizon),
                seed: pick(*seed, cfg.seed, defaults.seed),
                ..defaults
            };
            let written = crate::figures::write_figures(*set, &dir, format, &sim)?;
            let mut stdout = io::stdout().lock();
            for path in written {
                writeln!(stdout, "{}", path.display())?;
            }
            Ok(())
        }
    }
}
