//! The `autoeval` command line.
//!
//! Every run prints its fully resolved configuration to stderr before doing
//! any work. Machine-readable results go to stdout as JSON or CSV. Settings
//! resolve as built-in defaults, then the `--config` file, then flags.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::featureset;
use crate::harness::{self, ExperimentConfig, ExperimentReport, Method};
use crate::io_util::{read_json, write_atomic, write_json};
use crate::metaset::{self, Manifest, Split, SynthConfig};
use crate::regress::{self, Pair, TrainConfig};
use crate::represent::{self, DatasetRepresentation, ReferenceFrame, RepresentationOptions};

pub const FRAME_FILE: &str = "frame.json";
pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Parser)]
#[command(
    name = "autoeval",
    version,
    about = "Label-free accuracy estimation from dataset representations"
)]
pub struct Cli {
    /// Seed for synthesis and regressor training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Workspace directory.
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,
    /// JSON file overriding built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy classifier and write a meta-set workspace.
    Synth(SynthArgs),
    /// Build a dataset representation from a feature-set file.
    Extract(ExtractArgs),
    /// Fit the accuracy regressor on a workspace's TRAIN_META sets.
    Train(TrainArgs),
    /// Predict accuracy from a representation file.
    Predict(PredictArgs),
    /// Run an experiment and write report.json, report.csv and ablation.csv.
    Evaluate(EvaluateArgs),
    /// Compute the leave-one-out table from an existing report.
    Ablate(AblateArgs),
    /// Check a feature-set file against every format rule.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Rows per generated set.
    #[arg(long)]
    pub set_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Reference frame JSON; defaults to the workspace frame.
    #[arg(long)]
    pub frame: Option<PathBuf>,
    /// Representation options, inline JSON or a path to a JSON file.
    #[arg(long)]
    pub options: Option<String>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Reference frame JSON; defaults to the workspace frame.
    #[arg(long)]
    pub frame: Option<PathBuf>,
    /// Representation options, inline JSON or a path to a JSON file.
    #[arg(long)]
    pub options: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Model JSON; defaults to `model.json` in the workspace.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Representation JSON written by `extract`.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Comma-separated method names, e.g. `OURS,FD_ONLY,PRED_SCORE(0.9)`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated experiment seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Directory for the report files; defaults to the workspace.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Report JSON; defaults to `report.json` in the workspace.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub random_draws: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        ExperimentSection {
            methods: d.methods,
            seeds: d.seeds,
            random_draws: d.random_draws,
        }
    }
}

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub workspace: Option<PathBuf>,
    pub synth: SynthConfig,
    pub representation: RepresentationOptions,
    pub train: TrainConfig,
    pub experiment: ExperimentSection,
}

fn as_config_error(e: Error) -> Error {
    match e {
        Error::Format(m) => Error::Config(m),
        other => other,
    }
}

fn parse_options(arg: &str) -> Result<RepresentationOptions> {
    if arg.trim_start().starts_with('{') {
        serde_json::from_str(arg).map_err(|e| Error::Config(format!("bad --options: {e}")))
    } else {
        read_json(Path::new(arg)).map_err(as_config_error)
    }
}

struct Resolved {
    workspace: PathBuf,
    config: CliConfig,
}

impl Resolved {
    fn load(cli: &Cli) -> Result<Self> {
        let mut config: CliConfig = match &cli.config {
            Some(path) => read_json(path).map_err(as_config_error)?,
            None => CliConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.synth.seed = seed;
            config.train.seed = seed;
        }
        let workspace = cli
            .workspace
            .clone()
            .or_else(|| config.workspace.clone())
            .unwrap_or_else(|| PathBuf::from("workspace"));
        config.workspace = Some(workspace.clone());
        Ok(Resolved { workspace, config })
    }

    fn frame_path(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.workspace.join(FRAME_FILE))
    }
}

fn echo(command: &str, resolved: &impl Serialize) {
    let text = serde_json::to_string(&json!({ "command": command, "resolved": resolved }))
        .unwrap_or_else(|e| format!("<unprintable config: {e}>"));
    eprintln!("resolved config: {text}");
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn synth(r: Resolved, args: SynthArgs) -> Result<()> {
    let mut cfg = r.config.synth.clone();
    if let Some(n) = args.n_train {
        cfg.n_train_meta = n;
    }
    if let Some(n) = args.n_val {
        cfg.n_val_meta = n;
    }
    if let Some(n) = args.n_test {
        cfg.n_test_meta = n;
    }
    if let Some(n) = args.set_size {
        cfg.set_size = n;
    }
    echo(
        "synth",
        &json!({ "workspace": r.workspace, "synth": cfg, "representation": r.config.representation }),
    );
    cfg.validate()?;
    r.config.representation.validate()?;
    let manifest = metaset::synthesize(&r.workspace, &cfg)?;
    let source = featureset::load(manifest.source_path(&r.workspace))?;
    let frame = represent::build_reference_frame(&source, &r.config.representation)?;
    write_json(&r.workspace.join(FRAME_FILE), &frame)?;
    eprintln!(
        "wrote {} sets to {} (clean accuracy {:.4})",
        manifest.records.len(),
        r.workspace.display(),
        manifest.clean_accuracy
    );
    print_json(&json!({
        "workspace": r.workspace,
        "records": manifest.records.len(),
        "clean_accuracy": manifest.clean_accuracy,
    }));
    Ok(())
}

fn resolve_options(r: &Resolved, flag: &Option<String>) -> Result<RepresentationOptions> {
    let opts = match flag {
        Some(arg) => parse_options(arg)?,
        None => r.config.representation.clone(),
    };
    opts.validate()?;
    Ok(opts)
}

fn extract(r: Resolved, args: ExtractArgs) -> Result<()> {
    let opts = resolve_options(&r, &args.options)?;
    let frame_path = r.frame_path(&args.frame);
    echo(
        "extract",
        &json!({ "input": args.input, "frame": frame_path, "options": opts, "output": args.output }),
    );
    let frame: ReferenceFrame = read_json(&frame_path)?;
    frame.validate()?;
    let set = featureset::load(&args.input)?;
    let rep = represent::assemble(&set, &frame, &opts)?;
    write_json(&args.output, &rep)?;
    print_json(&json!({ "output": args.output, "flat_len": rep.flat.len() }));
    Ok(())
}

fn train(r: Resolved, args: TrainArgs) -> Result<()> {
    let opts = resolve_options(&r, &args.options)?;
    let mut cfg = r.config.train.clone();
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    let frame_path = r.frame_path(&args.frame);
    let output = args.output.clone().unwrap_or_else(|| r.workspace.join(MODEL_FILE));
    echo(
        "train",
        &json!({ "workspace": r.workspace, "frame": frame_path, "options": opts, "train": cfg, "output": output }),
    );
    cfg.validate()?;
    let manifest = Manifest::load(&r.workspace)?;
    let frame: ReferenceFrame = read_json(&frame_path)?;
    frame.validate()?;
    let mut train_pairs = Vec::new();
    let mut val_pairs = Vec::new();
    for record in &manifest.records {
        let target = match record.split {
            Split::TrainMeta => &mut train_pairs,
            Split::ValMeta => &mut val_pairs,
            Split::TestMeta => continue,
        };
        let set = featureset::load(r.workspace.join(&record.path))?;
        let rep = represent::assemble(&set, &frame, &opts)?;
        target.push(Pair::new(rep.flat, record.accuracy));
    }
    let outcome = if val_pairs.is_empty() {
        regress::fit(&train_pairs, &cfg)?
    } else {
        regress::fit_with_validation(&train_pairs, &val_pairs, &cfg)?
    };
    regress::save_model(&outcome.model, &output)?;
    let best = &outcome.history[outcome.best_epoch - 1];
    eprintln!("best epoch {} of {}", outcome.best_epoch, cfg.epochs);
    print_json(&json!({
        "model": output,
        "best_epoch": outcome.best_epoch,
        "train_rmse_percent": 100.0 * best.train.sqrt(),
        "validation_rmse_percent": 100.0 * best.validation.sqrt(),
    }));
    Ok(())
}

fn predict(r: Resolved, args: PredictArgs) -> Result<()> {
    echo(
        "predict",
        &json!({ "workspace": r.workspace, "model": args.model, "input": args.input }),
    );
    let model = regress::load_model(&args.model)?;
    let rep: DatasetRepresentation = read_json(&args.input)?;
    let estimate = model.predict(&rep.flat)?;
    print_json(&json!({ "source_id": rep.source_id, "predicted_accuracy": estimate }));
    Ok(())
}

fn evaluate(r: Resolved, args: EvaluateArgs) -> Result<()> {
    let section = &r.config.experiment;
    let methods = match &args.methods {
        Some(names) => names.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?,
        None => section.methods.clone(),
    };
    let mut train = r.config.train.clone();
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    let cfg = ExperimentConfig {
        workspace: r.workspace.clone(),
        representation: r.config.representation.clone(),
        methods,
        train,
        seeds: args.seeds.clone().unwrap_or_else(|| section.seeds.clone()),
        random_draws: section.random_draws,
    };
    let out_dir = args.output.clone().unwrap_or_else(|| r.workspace.clone());
    echo("evaluate", &json!({ "experiment": cfg, "output": out_dir }));
    let report = harness::run_experiment(&cfg)?;
    harness::write_reports(&out_dir, &report)?;
    eprintln!("evaluation took {:.1}s", report.metadata.total_seconds);
    print!("{}", report.to_csv());
    Ok(())
}

fn ablate(r: Resolved, args: AblateArgs) -> Result<()> {
    let path = args
        .report
        .clone()
        .unwrap_or_else(|| r.workspace.join(harness::REPORT_JSON));
    echo("ablate", &json!({ "workspace": r.workspace, "report": path }));
    let report: ExperimentReport = read_json(&path)?;
    let table = harness::ablation_table(&report)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    write_atomic(&dir.join(harness::ABLATION_CSV), table.to_csv().as_bytes())?;
    print!("{}", table.to_csv());
    Ok(())
}

fn validate(r: Resolved, args: ValidateArgs) -> Result<()> {
    echo("validate", &json!({ "workspace": r.workspace, "input": args.input }));
    let set = featureset::load_unvalidated(&args.input)?;
    let violations = set.validate();
    let listing: Vec<String> = violations.iter().map(ToString::to_string).collect();
    print_json(&json!({ "input": args.input, "n": set.n, "d": set.d, "violations": listing }));
    if violations.is_empty() {
        return Ok(());
    }
    for v in &listing {
        eprintln!("violation: {v}");
    }
    Err(Error::Validation(format!(
        "{} violation(s) in {}",
        violations.len(),
        args.input.display()
    )))
}

pub fn execute(cli: Cli) -> Result<()> {
    let resolved = Resolved::load(&cli)?;
    match cli.command {
        Command::Synth(a) => synth(resolved, a),
        Command::Extract(a) => extract(resolved, a),
        Command::Train(a) => train(resolved, a),
        Command::Predict(a) => predict(resolved, a),
        Command::Evaluate(a) => evaluate(resolved, a),
        Command::Ablate(a) => ablate(resolved, a),
        Command::Validate(a) => validate(resolved, a),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
