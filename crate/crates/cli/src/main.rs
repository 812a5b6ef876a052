use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};

use usability_core::pipeline::{self, DatasetSpec, PipelineConfig};
use usability_core::survey::polarity_table;
use usability_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(
    name = "usability",
    version,
    about = "Survey-driven usability assessment: scores features with a GA, \
             selects them for an SVM, and reports verdicts against benchmarks"
)]
struct Cli {
    /// JSON pipeline config; omit to use the built-in synthetic setup
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for emitted artifacts
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load (or generate) the dataset and write its normalized CSV forms
    Ingest,
    /// Generate the synthetic dataset from the config's polarity counts
    Synth,
    /// Rank features by GA-searched weights
    Score,
    /// Search SVM hyperparameters
    Tune,
    /// Evolve the feature mask against the SVM
    Select,
    /// Cross-validate the SVM on the selected features
    Evaluate,
    /// Cross-validate the SVM against the baseline models
    Compare,
    /// Build the benchmark comparison report
    Report,
    /// Run the whole pipeline and emit every artifact
    Run,
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(Error::from)
                .with_context(|| format!("reading config {}", path.display()))?;
            PipelineConfig::from_json(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => PipelineConfig::bundled(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_text(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(Error::from)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    let out = cli.out.as_path();

    match cli.command {
        Command::Ingest => {
            let dataset = pipeline::ingest(&config)?;
            write_text(out, "survey.csv", &dataset.to_csv_string())?;
            write_text(out, "polarity.csv", &polarity_table(&dataset).to_csv_string())?;
            println!(
                "ingested {} respondents across {} features",
                dataset.respondents.len(),
                dataset.features().len()
            );
        }
        Command::Synth => {
            if !matches!(config.dataset, DatasetSpec::Synthetic { .. }) {
                return Err(Error::Config {
                    message: "synth needs a synthetic dataset spec in the config".into(),
                }
                .into());
            }
            let dataset = pipeline::ingest(&config)?;
            write_text(out, "survey.csv", &dataset.to_csv_string())?;
            write_text(out, "polarity.csv", &polarity_table(&dataset).to_csv_string())?;
            println!("generated {} synthetic respondents", dataset.respondents.len());
        }
        Command::Score => {
            let dataset = pipeline::ingest(&config)?;
            let fm = pipeline::labeled_matrix(&config, &dataset);
            let scores = pipeline::score(&config, &fm)?;
            write_text(out, "scores.csv", &scores.to_csv_string())?;
            print!("{}", scores.to_csv_string());
        }
        Command::Tune => {
            let dataset = pipeline::ingest(&config)?;
            let fm = pipeline::labeled_matrix(&config, &dataset);
            let (svm_config, entries) = pipeline::tune(&config, &fm)?;
            write_json(
                out,
                "tune.json",
                &serde_json::json!({ "config": svm_config, "entries": entries }),
            )?;
            println!("chose {}", serde_json::to_string(&svm_config).map_err(Error::from)?);
        }
        Command::Select => {
            let dataset = pipeline::ingest(&config)?;
            let fm = pipeline::labeled_matrix(&config, &dataset);
            let (svm_config, _) = pipeline::tune(&config, &fm)?;
            let selection = pipeline::select(&config, &fm, &svm_config)?;
            write_json(out, "selection.json", &selection)?;
            write_text(out, "trace.csv", &selection.trace.to_csv_string())?;
            let kept: Vec<&str> = selection
                .feature_names
                .iter()
                .zip(&selection.best_mask.bits)
                .filter(|(_, &b)| b)
                .map(|(n, _)| n.as_str())
                .collect();
            println!(
                "selected {} of {} features (cv accuracy {:.4}): {}",
                kept.len(),
                fm.n_features(),
                selection.cv_accuracy,
                kept.join(", ")
            );
        }
        Command::Evaluate => {
            let dataset = pipeline::ingest(&config)?;
            let fm = pipeline::labeled_matrix(&config, &dataset);
            let (svm_config, _) = pipeline::tune(&config, &fm)?;
            let selection = pipeline::select(&config, &fm, &svm_config)?;
            let (metrics, confusion) = pipeline::evaluate(&config, &fm, &svm_config, &selection)?;
            write_json(out, "metrics.json", &metrics)?;
            write_text(out, "confusion.csv", &confusion.to_csv_string())?;
            println!(
                "accuracy {:.4}, threshold {}",
                metrics.accuracy,
                if metrics.meets_threshold { "met" } else { "not met" }
            );
        }
        Command::Compare => {
            let dataset = pipeline::ingest(&config)?;
            let fm = pipeline::labeled_matrix(&config, &dataset);
            let (svm_config, _) = pipeline::tune(&config, &fm)?;
            let selection = pipeline::select(&config, &fm, &svm_config)?;
            let comparison = pipeline::compare(&config, &fm, &svm_config, &selection)?;
            write_text(out, "comparison.csv", &comparison.to_csv_string())?;
            print!("{}", comparison.to_csv_string());
        }
        Command::Report => {
            let dataset = pipeline::ingest(&config)?;
            let fm = pipeline::labeled_matrix(&config, &dataset);
            let scores = pipeline::score(&config, &fm)?;
            let (svm_config, _) = pipeline::tune(&config, &fm)?;
            let selection = pipeline::select(&config, &fm, &svm_config)?;
            let (metrics, _) = pipeline::evaluate(&config, &fm, &svm_config, &selection)?;
            let report = pipeline::assemble_report(
                &config,
                &scores,
                &metrics,
                pipeline::dataset_digest(&dataset),
            )?;
            write_json(out, "report.json", &report)?;
            write_text(out, "report.csv", &report.to_csv_string())?;
            print_report_rows(&report);
        }
        Command::Run => {
            let report = pipeline::run_pipeline(&config, out)?;
            print_report_rows(&report);
            println!("artifacts in {}", out.display());
        }
    }
    Ok(())
}

fn print_report_rows(report: &usability_core::report::UsabilityReport) {
    for row in &report.rows {
        println!(
            "{:<14} score {:>6.3}  benchmark {:>4.1}  delta {:>+6.3}  {}",
            row.feature, row.score, row.benchmark, row.delta, row.verdict
        );
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.class() == ErrorClass::Internal => 3,
        _ => 2,
    }
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
