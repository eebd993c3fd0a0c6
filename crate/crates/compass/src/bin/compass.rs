//! Command-line front end: full pipeline runs from a config file plus
//! direct single-module commands.
//!
//! Exit codes: 0 success, 1 validation/config error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use compass::attacks::{self, AttackConfig, AttackMethod};
use compass::data::{LabeledDataset, MutationKind, MutationSpec};
use compass::metrics;
use compass::model::Model;
use compass::pruning::{self, ImportanceMethod, SweepExtras};
use compass::report::{self, AttributionConfig, AttributionMethodSel, RunConfig};

#[derive(Parser)]
#[command(name = "compass", version, about = "Evaluation toolkit for small differentiable classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a config file.
    Run(RunArgs),
    /// Alias of `run` (report generation is the pipeline).
    Report(RunArgs),
    /// Classification report for one model over one dataset.
    Metrics {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one mutation operator and save the mutated dataset.
    Mutate {
        #[arg(long)]
        kind: String,
        /// Intensity parameter; defaults to the operator's conventional value.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// White-box attack on a model, optionally transferred to targets.
    Attack {
        #[arg(long)]
        method: String,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated target model paths for transfer evaluation.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attribution maps plus insertion/deletion curves.
    Attribute {
        #[arg(long)]
        method: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory for the CSV (and heatmaps if requested).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        heatmaps: bool,
        /// Cap on scored samples (0 = all).
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Importance-based pruning sweep.
    Prune {
        #[arg(long)]
        method: String,
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (JSON). `run CONFIG` and `run --config CONFIG` both work.
    #[arg(long, value_name = "CONFIG", conflicts_with = "config_pos")]
    config: Option<PathBuf>,
    #[arg(value_name = "CONFIG", required_unless_present = "config")]
    config_pos: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// 1 = validation error, 2 = runtime error.
struct CliError {
    code: u8,
    message: String,
}

fn validation(message: impl ToString) -> CliError {
    CliError {
        code: 1,
        message: message.to_string(),
    }
}

fn runtime(message: impl ToString) -> CliError {
    CliError {
        code: 2,
        message: message.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) | Command::Report(args) => run_from_config(args),
        Command::Metrics { model, data, out } => {
            let model = Model::load(&model).map_err(validation)?;
            let data = LabeledDataset::load(&data).map_err(validation)?;
            let report = metrics::classification_report(&model, &data).map_err(runtime)?;
            std::fs::write(&out, metrics::report_to_csv(&report)).map_err(runtime)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Mutate {
            kind,
            p,
            seed,
            data,
            out,
        } => {
            let kind = parse_kebab::<MutationKind>(&kind, "mutation kind")?;
            let data = LabeledDataset::load(&data).map_err(validation)?;
            let spec = MutationSpec::new(kind, p.unwrap_or_else(|| kind.default_intensity()), seed);
            spec.validate().map_err(validation)?;
            let mutated = compass::data::mutate(&data, &spec).map_err(runtime)?;
            mutated.save(&out).map_err(runtime)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Attack {
            method,
            eps,
            alpha,
            steps,
            seed,
            model,
            targets,
            data,
            out,
        } => {
            let method = parse_kebab::<AttackMethod>(&method, "attack method")?;
            let source = Model::load(&model).map_err(validation)?;
            let target_models: Vec<Model> = targets
                .iter()
                .map(|p| Model::load(p))
                .collect::<Result<_, _>>()
                .map_err(validation)?;
            let data = LabeledDataset::load(&data).map_err(validation)?;
            let mut config = AttackConfig::new(method).with_seed(seed);
            if let Some(eps) = eps {
                config.epsilon = eps;
            }
            if let Some(alpha) = alpha {
                config.alpha = alpha;
            }
            if let Some(steps) = steps {
                config.steps = steps;
            }
            config.validate().map_err(validation)?;
            let target_refs: Vec<&Model> = target_models.iter().collect();
            let result = attacks::evaluate_transfer(&source, &target_refs, &data, &[config])
                .map_err(runtime)?;
            std::fs::write(&out, result.to_csv()).map_err(runtime)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Attribute {
            method,
            model,
            data,
            out,
            heatmaps,
            samples,
            seed,
        } => {
            let method = parse_kebab::<AttributionMethodSel>(&method, "attribution method")?;
            // reuse the pipeline's attribution module for a single model
            let config = RunConfig {
                version: report::CONFIG_VERSION,
                seed,
                models: vec![model],
                dataset: data,
                output_dir: out.clone(),
                metrics: None,
                mutants: None,
                attacks: None,
                attribution: Some(AttributionConfig {
                    methods: vec![method],
                    ig_steps: 50,
                    curve_steps: 100,
                    max_samples: samples,
                    heatmaps,
                }),
                pruning: None,
            };
            config.validate().map_err(validation)?;
            report::run_pipeline(&config).map_err(runtime)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Prune {
            method,
            rates,
            model,
            data,
            out,
        } => {
            let method = parse_kebab::<ImportanceMethod>(&method, "pruning method")?;
            if rates.is_empty() {
                return Err(validation("at least one --rates value required"));
            }
            let model = Model::load(&model).map_err(validation)?;
            let data = LabeledDataset::load(&data).map_err(validation)?;
            let sweep = pruning::prune_and_evaluate(
                &model,
                &data,
                &[method],
                &rates,
                &SweepExtras::default(),
            )
            .map_err(|e| match e {
                pruning::PruningError::RateOutOfRange(_) => validation(e),
                other => runtime(other),
            })?;
            std::fs::write(&out, sweep.to_csv()).map_err(runtime)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn run_from_config(args: RunArgs) -> Result<(), CliError> {
    let path = args
        .config
        .or(args.config_pos)
        .expect("clap enforces one config source");
    let mut config = RunConfig::load(&path).map_err(validation)?;
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    report::run_pipeline(&config).map_err(|e| match e {
        report::PipelineError::Config(c) => validation(c),
        other => runtime(other),
    })?;
    println!("wrote {}", config.output_dir.display());
    Ok(())
}

/// Parse a kebab-case identifier through the same serde names the config
/// file uses, so CLI and config accept identical spellings.
fn parse_kebab<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| validation(format!("unknown {what}: {text}")))
}
