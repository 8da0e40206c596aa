//! Command-line front end: `gen-data`, `train`, `verify`, `report`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 numeric failure during training.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::analysis::divergence_report;
use crate::config::{Entries, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{HiddenLabelEvaluator, TargetEvaluator};
use crate::models::ModelShape;
use crate::report::{
    read_metrics, read_verify_report, summarize, text_table, verify_table, write_csv,
};
use crate::synthdata::{
    generate, load_hidden_labels, load_source, load_target, save_hidden_labels, save_source,
    save_target, HiddenLabels, SourceScene, TargetScene,
};
use crate::trainer::{run, save_params, write_metrics_jsonl, TrainConfig};
use crate::verify::{run_suite, VerifyOptions};

pub const SOURCE_FILE: &str = "source.csv";
pub const TARGET_FILE: &str = "target.csv";
pub const HIDDEN_LABELS_FILE: &str = "hidden_labels.csv";

#[derive(Debug, Parser)]
#[command(
    name = "fbc",
    version,
    about = "Forward-backward cyclic domain adaptation on synthetic scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled source set, an unlabelled target set and the
    /// target's hidden labels.
    GenData(GenDataArgs),
    /// Train on a dataset and write per-episode metrics and final parameters.
    Train(Box<TrainArgs>),
    /// Run the numerical verification suite.
    Verify(VerifyArgs),
    /// Aggregate metrics files and verification reports into a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    hidden_labels: Option<PathBuf>,
    /// JSON-lines metrics output (stdout when absent).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Final parameters as `segment,index,value` CSV.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Divergence diagnostics of the final model as JSON; needs hidden labels.
    #[arg(long)]
    divergence_report: Option<PathBuf>,
    /// Plain SGD on source cross entropy.
    #[arg(long)]
    source_only: bool,
    /// Disable the adversarial local alignment term.
    #[arg(long)]
    no_adv: bool,
    /// Disable the entropy (diversity) terms.
    #[arg(long)]
    no_diversity: bool,
    /// Replace the cyclic schedule with simultaneous joint SGD.
    #[arg(long)]
    no_gradient_alignment: bool,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_adv: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Compute the proxy A-distance every N episodes.
    #[arg(long)]
    pad_every: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// JSON report output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Fault injection: drop the gradient reversal in the sign checks.
    #[arg(long)]
    perturb_grl: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Metrics files, one table row each.
    metrics: Vec<PathBuf>,
    /// Verification report to list; repeatable.
    #[arg(long)]
    verify: Vec<PathBuf>,
    /// Also write the run table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(*a),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn entries(common: &Common, flags: &[(&str, Option<String>)]) -> Result<Entries> {
    let file = match &common.config {
        Some(p) => Entries::load(p)?,
        None => Entries::new(),
    };
    let mut cli = Entries::new();
    for pair in &common.set {
        cli.set_pair(pair)?;
    }
    if let Some(s) = &common.scenario {
        cli.set("scenario", s.clone())?;
    }
    if let Some(s) = common.seed {
        cli.set("seed", s.to_string())?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cli.set(key, v.clone())?;
        }
    }
    Ok(cli.over(&file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Data(e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn gen_data(args: GenDataArgs) -> Result<u8> {
    let cfg = RunConfig::resolve(&entries(&args.common, &[])?)?;
    let data = generate(&cfg.spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_source(args.out.join(SOURCE_FILE), &data.source)?;
    save_target(args.out.join(TARGET_FILE), &data.target)?;
    save_hidden_labels(args.out.join(HIDDEN_LABELS_FILE), &data.hidden)?;
    eprintln!(
        "wrote {} source and {} target scenes ({}) to {}",
        data.source.len(),
        data.target.len(),
        cfg.spec.scenario,
        args.out.display()
    );
    Ok(0)
}

struct Loaded {
    source: Vec<SourceScene>,
    target: Vec<TargetScene>,
    hidden: Option<HiddenLabels>,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    match (&cfg.source, &cfg.target) {
        (Some(s), Some(t)) => Ok(Loaded {
            source: load_source(s)?,
            target: load_target(t)?,
            hidden: cfg
                .hidden_labels
                .as_ref()
                .map(load_hidden_labels)
                .transpose()?,
        }),
        _ => {
            let data = generate(&cfg.spec)?;
            Ok(Loaded {
                source: data.source,
                target: data.target,
                hidden: Some(data.hidden),
            })
        }
    }
}

fn train(args: TrainArgs) -> Result<u8> {
    let text = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let on = |b: bool, v: &str| b.then(|| v.to_owned());
    let flags = [
        ("source", text(&args.source)),
        ("target", text(&args.target)),
        ("hidden_labels", text(&args.hidden_labels)),
        ("metrics", text(&args.metrics)),
        ("params", text(&args.params)),
        ("divergence_report", text(&args.divergence_report)),
        ("source_only", on(args.source_only, "true")),
        ("enable_adv", on(args.no_adv, "false")),
        ("enable_diversity", on(args.no_diversity, "false")),
        (
            "enable_gradient_alignment",
            on(args.no_gradient_alignment, "false"),
        ),
        ("episodes", args.episodes.map(|v| v.to_string())),
        ("alpha", args.alpha.map(|v| v.to_string())),
        ("beta", args.beta.map(|v| v.to_string())),
        ("gamma", args.gamma.map(|v| v.to_string())),
        ("lambda_adv", args.lambda_adv.map(|v| v.to_string())),
        ("tau", args.tau.map(|v| v.to_string())),
        ("pad_every", args.pad_every.map(|v| v.to_string())),
    ];
    let cfg = RunConfig::resolve(&entries(&args.common, &flags)?)?;
    if cfg.divergence_report.is_some() && cfg.source.is_some() && cfg.hidden_labels.is_none() {
        return Err(Error::config(
            "divergence_report",
            "needs hidden target labels",
        ));
    }
    let data = load_data(&cfg)?;
    let d_in = data.source.first().map_or(0, |s| s.features.cols());
    let shape = ModelShape {
        d_in,
        categories: cfg.spec.categories,
        ..ModelShape::default()
    };
    let evaluator = data
        .hidden
        .clone()
        .map(|h| HiddenLabelEvaluator::new(data.target.clone(), h))
        .transpose()?;
    let train_cfg = TrainConfig {
        shape,
        hp: cfg.effective_hyperparams(),
        schedule: cfg.schedule(),
        seed: cfg.seed,
        pad_every: cfg.pad_every,
    };
    let outcome = run(
        &train_cfg,
        &data.source,
        &data.target,
        evaluator.as_ref().map(|e| e as &dyn TargetEvaluator),
    )?;

    match &cfg.metrics {
        Some(p) => {
            let mut w = create(p)?;
            write_metrics_jsonl(&mut w, &outcome.metrics).map_err(|e| Error::io(p, e))?;
        }
        None => write_metrics_jsonl(std::io::stdout().lock(), &outcome.metrics)
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    if let Some(p) = &cfg.params {
        save_params(p, &outcome.params)?;
    }
    if let Some(e) = outcome.failure {
        eprintln!(
            "training aborted after {} completed episodes",
            outcome.metrics.len()
        );
        return Err(e);
    }
    if let (Some(p), Some(ev)) = (&cfg.divergence_report, &evaluator) {
        let report = divergence_report(
            &shape,
            &outcome.params,
            &data.source,
            &ev.labelled_scenes(),
            &train_cfg.hp,
            cfg.seed,
        )?;
        write_json(p, &report)?;
    }
    if let Some(m) = outcome.metrics.last() {
        let acc = m
            .target_accuracy
            .map_or_else(|| "n/a".to_owned(), |a| format!("{a:.4}"));
        eprintln!(
            "{} episodes, final source loss {:.4}, target accuracy {acc}",
            outcome.metrics.len(),
            m.source_loss
        );
    }
    Ok(0)
}

fn verify(args: VerifyArgs) -> Result<u8> {
    let report = run_suite(VerifyOptions {
        perturb_grl: args.perturb_grl,
    });
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    print!("{}", verify_table("verify", &report));
    Ok(if report.passed { 0 } else { 1 })
}

fn report(args: ReportArgs) -> Result<u8> {
    if args.metrics.is_empty() && args.verify.is_empty() {
        return Err(Error::config(
            "report",
            "give at least one metrics file or --verify report",
        ));
    }
    let mut rows = Vec::with_capacity(args.metrics.len());
    for p in &args.metrics {
        rows.push(summarize(&p.display().to_string(), &read_metrics(p)?));
    }
    let verifies = args
        .verify
        .iter()
        .map(|p| read_verify_report(p).map(|r| (p, r)))
        .collect::<Result<Vec<_>>>()?;
    if !rows.is_empty() {
        print!("{}", text_table(&rows));
    }
    for (p, r) in &verifies {
        print!("{}", verify_table(&p.display().to_string(), r));
    }
    if let Some(p) = &args.csv {
        let mut w = create(p)?;
        write_csv(&mut w, &rows)?;
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(0)
}
