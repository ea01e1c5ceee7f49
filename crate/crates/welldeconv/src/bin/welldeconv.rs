use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use welldeconv::cli::{
    generate_synthetic, load_data, run_inference, default_channel_config, write_data,
    RunConfig, SyntheticConfig, SyntheticTruth,
};
use welldeconv::Error;

#[derive(Parser)]
#[command(name = "welldeconv", about = "Bayesian well-test deconvolution", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Pressure CSV with header `time,pressure`.
    #[arg(long)]
    pressure: PathBuf,
    /// Rate CSV with header `start,end,rate`.
    #[arg(long)]
    rates: PathBuf,
    /// Directly observed initial pressure.
    #[arg(long)]
    p0: f64,
    /// Synthetic truth record (from `synth`) for residuals against truth.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct OverrideArgs {
    /// JSON run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    /// Comma-separated transition counts to fit, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    transitions: Option<Vec<usize>>,
    /// Use broad vague priors instead of the informative defaults.
    #[arg(long)]
    vague: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run inference and write all artifacts.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Generate a synthetic dataset (default: the 320 h channel design).
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        /// Full synthetic configuration JSON overriding the channel default.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Print the score table of a finished run directory.
    Score {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Validate a configuration and optionally a dataset, then exit.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pressure: Option<PathBuf>,
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long)]
        p0: Option<f64>,
    },
}

fn build_config(overrides: &OverrideArgs) -> Result<RunConfig, Error> {
    let mut config = match &overrides.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        config.seed = Some(seed);
    }
    if let Some(output) = &overrides.output {
        config.output_dir = output.clone();
    }
    if let Some(iterations) = overrides.iterations {
        config.iterations = iterations;
    }
    if let Some(burn_in) = overrides.burn_in {
        config.burn_in = burn_in;
    }
    if let Some(thinning) = overrides.thinning {
        config.thinning = thinning;
    }
    if let Some(transitions) = &overrides.transitions {
        config.transition_counts = transitions.clone();
    }
    if overrides.vague {
        config.vague_priors = true;
    }
    if config.seed.is_none() {
        return Err(Error::invalid("--seed is required for run"));
    }
    Ok(config)
}

fn real_main() -> Result<i32, Error> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { data, overrides } => {
            let config = build_config(&overrides)?;
            let well_data = load_data(&data.pressure, &data.rates, data.p0)?;
            let truth: Option<SyntheticTruth> = match &data.truth {
                Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
                None => None,
            };
            let report = run_inference(&config, &well_data, truth.as_ref())?;
            for model in &report.models {
                println!(
                    "model {}: {} draws, acceptance {:.3}, R-hat max {}, AIC {:.2}, BIC {:.2}, DIC {:.2}",
                    model.transitions,
                    model.retained_draws,
                    model.accept_rate,
                    model
                        .rhat_max
                        .map_or("n/a".to_string(), |r| format!("{r:.4}")),
                    model.score.criteria.aic,
                    model.score.criteria.bic,
                    model.score.criteria.dic,
                );
            }
            if !report.converged {
                eprintln!("warning: R-hat exceeded 1.1; artifacts written anyway");
                return Ok(4);
            }
            Ok(0)
        }
        Command::Synth { seed, output, truth } => {
            let config: SyntheticConfig = match truth {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => default_channel_config(seed),
            };
            let config = SyntheticConfig { seed, ..config };
            let (data, truth) = generate_synthetic(&config)?;
            let (p, r) = write_data(&output, &data)?;
            std::fs::write(
                output.join("truth.json"),
                serde_json::to_string_pretty(&truth)? + "\n",
            )?;
            println!(
                "wrote {} and {} ({} observations), truth.json",
                p.display(),
                r.display(),
                data.m()
            );
            Ok(0)
        }
        Command::Score { run_dir } => {
            let scores = std::fs::read_to_string(run_dir.join("scores.csv"))?;
            print!("{scores}");
            Ok(0)
        }
        Command::Validate { config, pressure, rates, p0 } => {
            let mut run_config = RunConfig::from_file(&config)?;
            if run_config.seed.is_none() {
                // Validation checks everything else even without a seed.
                run_config.seed = Some(0);
            }
            run_config.validate()?;
            match (pressure, rates, p0) {
                (Some(p), Some(r), Some(p0)) => {
                    let data = load_data(&p, &r, p0)?;
                    println!(
                        "ok: config valid; {} pressures, {} rate periods over [{}, {}] h",
                        data.m(),
                        data.n_rates(),
                        data.schedule.start(),
                        data.schedule.end()
                    );
                }
                (None, None, None) => println!("ok: config valid"),
                _ => {
                    return Err(Error::invalid(
                        "provide all of --pressure, --rates, --p0 or none",
                    ))
                }
            }
            Ok(0)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 2,
        Error::Numeric(_)
        | Error::SingularTransition { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::BridgeDiverged(_) => 3,
    }
}

fn main() {
    match real_main() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}
