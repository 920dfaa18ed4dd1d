//! `crackscat` command-line interface.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "crackscat",
    version,
    about = "Crack identification from scattered-field data"
)]
struct Cli {
    /// Configuration file with `key=value` lines; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Physical constants and discretization sizes.
#[derive(Args, Debug, Clone, Default)]
pub struct PhysicsArgs {
    /// Wavenumber k [default: 1.5]
    #[arg(long)]
    pub wavenumber: Option<f64>,
    /// Radius of the observation circle [default: 4]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Number of observation points [default: 40]
    #[arg(long)]
    pub n_obs: Option<usize>,
    /// Quadrature nodes of the coarse operator [default: 10]
    #[arg(long)]
    pub n_quad: Option<usize>,
    /// Dimension of the leading singular subspace [default: 5]
    #[arg(long)]
    pub n_modes: Option<usize>,
    /// Bound on the crack offset [default: 1]
    #[arg(long)]
    pub a_max: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetArg {
    #[value(alias = "N1")]
    N1,
    #[value(alias = "N2")]
    N2,
    #[value(alias = "N3")]
    N3,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyArg {
    Crack,
    Example1,
    Example2,
    Broken,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a training dataset file.
    GenData {
        /// Number of samples [default: 100000]
        #[arg(long)]
        count: Option<usize>,
        /// Output dataset path.
        #[arg(long)]
        out: PathBuf,
        /// Master seed [default: 1]
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        physics: PhysicsArgs,
    },
    /// Train one of the three networks on a dataset.
    Train {
        /// Dataset produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Network role: n1 (sign of theta), n2 (theta < 0) or n3 (theta >= 0).
        #[arg(long, value_enum)]
        net: NetArg,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV [default: <out>.log.csv]
        #[arg(long)]
        log: Option<PathBuf>,
        /// Maximum number of epochs [default: 300]
        #[arg(long)]
        epochs: Option<usize>,
        /// ADAM learning rate [default: 0.001]
        #[arg(long)]
        lr: Option<f64>,
        /// Minibatch size [default: 256]
        #[arg(long)]
        batch_size: Option<usize>,
        /// Epochs without validation improvement before stopping [default: 10]
        #[arg(long)]
        patience: Option<usize>,
        /// Fraction of samples held out for validation [default: 0.05]
        #[arg(long)]
        val_fraction: Option<f64>,
        /// Factor applied to inputs before the first layer [default: sqrt(input dimension)]
        #[arg(long)]
        input_scale: Option<f64>,
        /// Seed for initialization and shuffling [default: 1]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate trained networks on randomly generated excitations.
    Eval {
        /// Directory holding n1.crkm, n2.crkm and n3.crkm.
        #[arg(long)]
        models: PathBuf,
        /// Number of trials [default: 1000]
        #[arg(long)]
        trials: Option<usize>,
        /// Noise amplitude relative to the sup norm; 0 disables the noisy pass [default: 0.2]
        #[arg(long)]
        noise: Option<f64>,
        /// Seed for trial generation [default: 2]
        #[arg(long)]
        seed: Option<u64>,
        /// Per-trial CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Sorted-error CSV [default: <out> with extension .sorted.csv]
        #[arg(long)]
        sorted_out: Option<PathBuf>,
        /// Nodes of the dense boundary grid [default: 256]
        #[arg(long)]
        n_dense: Option<usize>,
        #[command(flatten)]
        physics: PhysicsArgs,
    },
    /// Monte-Carlo estimate of the stability constant and derivative margins.
    VerifyStability {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Subspace dimension [default: 5 (crack), n (example1), 5 (example2), 3 (broken)]
        #[arg(long = "N")]
        subspace_dim: Option<usize>,
        /// Number of Monte-Carlo samples [default: 10000]
        #[arg(long)]
        samples: Option<usize>,
        /// Seed [default: 1]
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; CSVs are written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Largest subspace dimension of the sweep [default: 8]
        #[arg(long)]
        sweep_max: Option<usize>,
        /// Size n of example1 or truncation n_max of example2 [default: 4 / 50]
        #[arg(long)]
        size: Option<usize>,
        #[command(flatten)]
        physics: PhysicsArgs,
    },
    /// Total field on a rectangular grid.
    FieldGrid {
        /// Excitation: 1 plane wave, 2 near source, 3 far source, 4 prescribed density.
        #[arg(long)]
        case: u8,
        /// Plane-wave direction angle in radians [default: 0]
        #[arg(long)]
        eta_angle: Option<f64>,
        /// Source x coordinate [default: 3.25 (case 2), 6 (case 3)]
        #[arg(long, allow_negative_numbers = true)]
        source_x: Option<f64>,
        /// Source y coordinate [default: 0]
        #[arg(long, allow_negative_numbers = true)]
        source_y: Option<f64>,
        /// Crack angle [default: 0]
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        /// Crack offset [default: 0]
        #[arg(long, allow_negative_numbers = true)]
        a: Option<f64>,
        /// Support center [default: 0]
        #[arg(long, allow_negative_numbers = true)]
        o: Option<f64>,
        /// Support length [default: 2]
        #[arg(long)]
        l: Option<f64>,
        /// Half width of the square window [default: 6]
        #[arg(long)]
        extent: Option<f64>,
        /// Points per side [default: 121]
        #[arg(long)]
        res: Option<usize>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Nodes of the dense boundary grid [default: 256]
        #[arg(long)]
        n_dense: Option<usize>,
        #[command(flatten)]
        physics: PhysicsArgs,
    },
    /// Print the header of a dataset or model file.
    Info {
        /// Dataset file.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        data: Option<PathBuf>,
        /// Model checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(text) = std::env::var("CRACKSCAT_THREADS") else {
        return Ok(());
    };
    let threads: usize = text.trim().parse().map_err(|_| {
        crackscat::Error::Config(format!("CRACKSCAT_THREADS must be a number, got {text:?}"))
    })?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let file = match &cli.config {
        Some(path) => settings::ConfigFile::load(path)?,
        None => settings::ConfigFile::default(),
    };
    let resolver = settings::Resolver::new(file);
    match cli.command {
        Command::GenData {
            count,
            out,
            seed,
            physics,
        } => commands::gen_data(resolver, count, &out, seed, &physics),
        Command::Train {
            data,
            net,
            out,
            log,
            epochs,
            lr,
            batch_size,
            patience,
            val_fraction,
            input_scale,
            seed,
        } => commands::train(
            resolver,
            &data,
            net,
            &out,
            log,
            commands::TrainFlags {
                epochs,
                lr,
                batch_size,
                patience,
                val_fraction,
                input_scale,
                seed,
            },
        ),
        Command::Eval {
            models,
            trials,
            noise,
            seed,
            out,
            sorted_out,
            n_dense,
            physics,
        } => commands::eval(
            resolver, &models, trials, noise, seed, &out, sorted_out, n_dense, &physics,
        ),
        Command::VerifyStability {
            family,
            subspace_dim,
            samples,
            seed,
            out,
            sweep_max,
            size,
            physics,
        } => commands::verify_stability(
            resolver,
            family,
            subspace_dim,
            samples,
            seed,
            &out,
            sweep_max,
            size,
            &physics,
        ),
        Command::FieldGrid {
            case,
            eta_angle,
            source_x,
            source_y,
            theta,
            a,
            o,
            l,
            extent,
            res,
            out,
            n_dense,
            physics,
        } => commands::field_grid(
            resolver,
            commands::FieldFlags {
                case,
                eta_angle,
                source_x,
                source_y,
                theta,
                a,
                o,
                l,
                extent,
                res,
                n_dense,
            },
            &out,
            &physics,
        ),
        Command::Info { data, model } => {
            commands::info(data.as_deref().or(model.as_deref()).unwrap())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = matches!(
                err.downcast_ref::<crackscat::Error>(),
                Some(crackscat::Error::Config(_))
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
