use clap::{Args, Parser, Subcommand};
use oss_cli::config::{self, ExperimentKind, Formats, RunConfig};
use oss_cli::error::CliError;
use oss_cli::figures::{self, FigureId};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulations of origami-templated spin arrays read out by NV centers.
///
/// Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 I/O error.
#[derive(Parser)]
#[command(name = "oss", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean 1/T1 versus engineered Gd density, with a linear fit.
    RelaxometrySweep(RunArgs),
    /// Fit the Gd correlation time to the slope of a density sweep.
    FitTauC(RunArgs),
    /// Fit stretched exponentials to pristine and labeled T1 decays.
    DecayFit(RunArgs),
    /// Spin-squeezing dynamics of ordered, disordered and random arrays.
    DtwaStudy(RunArgs),
    /// Detection time versus protein concentration and affinity.
    AssaySweep(RunArgs),
    /// Export one realized spin layout.
    LayoutExport(RunArgs),
    /// Assemble plot-ready data for a figure from a finished run.
    Figure {
        #[arg(long, value_enum)]
        figure: FigureId,
        /// Output directory of the source run.
        #[arg(long)]
        run: PathBuf,
    },
    /// Print the fully defaulted configuration for an experiment.
    Defaults {
        #[arg(value_enum)]
        experiment: ExperimentKind,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "config_json")]
    config: Option<PathBuf>,
    /// Inline JSON configuration.
    #[arg(long)]
    config_json: Option<String>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Encoding of tabular outputs (overrides the config).
    #[arg(long, value_enum)]
    format: Option<Formats>,
}

fn resolve(kind: ExperimentKind, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match (&args.config, &args.config_json) {
        (Some(path), _) => config::parse_config_file(path)?,
        (None, Some(text)) => config::parse_config_str(text)?,
        (None, None) => RunConfig::default(),
    };
    cfg = config::apply_env(cfg, std::env::vars())?;
    match cfg.experiment {
        Some(k) if k != kind => {
            return Err(CliError::Config(format!(
                "experiment: config names {} but the subcommand is {}",
                k.name(),
                kind.name()
            )))
        }
        _ => cfg.experiment = Some(kind),
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    if let Some(f) = args.format {
        cfg.formats = f;
    }
    Ok(cfg)
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve(kind, args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads: must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    let manifest = pool.install(|| oss_cli::run(&cfg))?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, o.file);
    }
    log::info!("wrote {} outputs to {}", manifest.outputs.len(), cfg.output_dir);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RelaxometrySweep(a) => execute(ExperimentKind::RelaxometrySweep, a),
        Command::FitTauC(a) => execute(ExperimentKind::FitTauC, a),
        Command::DecayFit(a) => execute(ExperimentKind::DecayFit, a),
        Command::DtwaStudy(a) => execute(ExperimentKind::DtwaStudy, a),
        Command::AssaySweep(a) => execute(ExperimentKind::AssaySweep, a),
        Command::LayoutExport(a) => execute(ExperimentKind::LayoutExport, a),
        Command::Figure { figure, run } => figures::emit_figure_data(run, *figure).map(|p| println!("{}", p.display())),
        Command::Defaults { experiment } => {
            let cfg = RunConfig { experiment: Some(*experiment), ..RunConfig::default() };
            print!("{}", cfg.to_json());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
