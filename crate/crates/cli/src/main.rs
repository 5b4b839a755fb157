use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sparse_anomaly::data::{synth_generate, write_csv, CsvSchema, SynthConfig};
use sparse_anomaly::eval::{sweep_percentiles, MetricsReport, OperatingPoint};
use sparse_anomaly::runner::{
    emit_report, load_report, render_report, run_experiment, slug, validate_config,
};
use sparse_anomaly::Error;

#[derive(Parser)]
#[command(
    name = "sparse-anomaly",
    version,
    about = "Semi-supervised VAE anomaly detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report.
    Run {
        config: PathBuf,
        /// Base seed; repeat i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Output directory (default: the config's `output_dir`, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Also score the best models on the mixed series before splitting.
        #[arg(long)]
        check_unduplicated: bool,
    },
    /// Generate a synthetic dataset as CSV files plus schema.
    GenerateData {
        /// TOML synthetic-data config; an empty file gives the defaults.
        synth_config: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        force: bool,
    },
    /// Percentile sweep of precomputed scores against labels.
    Evaluate {
        /// CSV with a `score` column and an optional `split` column
        /// (`validation` rows set the thresholds, all others are test rows).
        scores: PathBuf,
        /// CSV with a 0/1 `label` column, one row per test score.
        labels: PathBuf,
    },
    /// Print the tables and tests of a finished run.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            config,
            seed,
            repeats,
            out,
            force,
            check_unduplicated,
        } => {
            let mut cfg = validate_config(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            cfg.check_unduplicated |= check_unduplicated;
            cfg.validate()?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| Path::new("runs").join(slug(&cfg.name)));
            check_output(&out, force)?;
            let report = run_experiment(&cfg)?;
            let files = emit_report(&report, &out, force)?;
            print!("{}", render_report(&report));
            eprintln!("wrote {} files to {}", files.len(), out.display());
            Ok(())
        }
        Command::GenerateData {
            synth_config,
            out,
            seed,
            force,
        } => generate(&synth_config, &out, seed, force),
        Command::Evaluate { scores, labels } => evaluate(&scores, &labels),
        Command::Report { run_dir } => {
            print!("{}", render_report(&load_report(&run_dir)?));
            Ok(())
        }
    }
}

/// Fails early, before any training, when the output would be refused.
fn check_output(out: &Path, force: bool) -> Result<(), Error> {
    if !force && out.exists() && fs::read_dir(out)?.next().is_some() {
        return Err(Error::Output(format!(
            "`{}` already exists and is not empty; pass --force to overwrite",
            out.display()
        )));
    }
    Ok(())
}

fn generate(config: &Path, out: &Path, seed: u64, force: bool) -> Result<(), Error> {
    let text = fs::read_to_string(config)?;
    let cfg: SynthConfig = toml::from_str(&text).map_err(|e| Error::Config(vec![e.to_string()]))?;
    check_output(out, force)?;
    let generated = synth_generate(&cfg, seed)?;
    fs::create_dir_all(out)?;
    let b = &generated.bundle;
    let schema = CsvSchema::for_dataset(&b.mixed);
    schema.save(&out.join("schema.json"))?;
    for (file, ds) in [
        ("train.csv", &b.unsupervised_train),
        ("validation.csv", &b.validation),
        ("mixed.csv", &b.mixed),
    ] {
        write_csv(&out.join(file), ds, &schema)?;
    }
    fs::write(
        out.join("segments.json"),
        serde_json::to_string_pretty(&generated.segments)? + "\n",
    )?;
    eprintln!("wrote {} to {}", cfg.name, out.display());
    Ok(())
}

#[derive(Serialize)]
struct Evaluation<'a> {
    schema_version: u32,
    test_rows: usize,
    anomalous_rows: usize,
    /// Which scores set the percentile thresholds.
    threshold_reference: &'static str,
    auc: Option<f64>,
    best: &'a OperatingPoint,
    label_free: Option<&'a OperatingPoint>,
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, Error> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Output(format!("{}: missing `{name}` column", path.display())))
}

fn parse_cell<T: std::str::FromStr>(v: &str, path: &Path, row: usize) -> Result<T, Error>
where
    T::Err: std::fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| Error::Output(format!("{} row {row}: `{v}`: {e}", path.display())))
}

fn evaluate(scores_path: &Path, labels_path: &Path) -> Result<(), Error> {
    let mut r = csv::Reader::from_path(scores_path)?;
    let headers = r.headers()?.clone();
    let score_col = column_index(&headers, "score", scores_path)?;
    let split_col = headers.iter().position(|h| h == "split");
    let (mut validation, mut test) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let s: f64 = parse_cell(rec.get(score_col).unwrap_or_default(), scores_path, i + 1)?;
        match split_col.and_then(|c| rec.get(c)) {
            Some("validation") => validation.push(s),
            _ => test.push(s),
        }
    }
    let mut r = csv::Reader::from_path(labels_path)?;
    let label_col = column_index(&r.headers()?.clone(), "label", labels_path)?;
    let truth = r
        .records()
        .enumerate()
        .map(|(i, rec)| {
            parse_cell::<u8>(rec?.get(label_col).unwrap_or_default(), labels_path, i + 1)
        })
        .collect::<Result<Vec<u8>, Error>>()?;
    let threshold_reference = if validation.is_empty() {
        // without validation scores the test scores set their own percentiles
        validation = test.clone();
        "test"
    } else {
        "validation"
    };
    let report: MetricsReport = sweep_percentiles(&test, &truth, &validation)?;
    let out = Evaluation {
        schema_version: 1,
        test_rows: test.len(),
        anomalous_rows: truth.iter().filter(|&&t| t == 1).count(),
        threshold_reference,
        auc: report.auc,
        best: report.best(),
        label_free: report.label_free.map(|i| &report.points[i]),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
