//! Command implementations behind the `drivechar` binary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use drivechar_core::cohortgen::{self, CohortConfig, CohortError};
use drivechar_core::evaluation::{
    run_experiment, scatter_svg, Cohort, EvalError, EvalReport, ExperimentConfig, Variant, Workbench,
};
use drivechar_core::features::{FeatureError, RoadScope};
use drivechar_core::importance::{compute_importance, ImportanceError};
use drivechar_core::models::{ModelError, ModelKind, DEFAULT_TREES};
use drivechar_core::segmentation::{SegmentConfig, SegmentError};
use drivechar_core::signals::{SignalError, Target};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Parser)]
#[command(name = "drivechar", version, about = "Driver-trait estimation from driving telemetry")]
pub struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort directory.
    Gen(GenArgs),
    /// Write feature matrices for a cohort.
    Featurize(FeaturizeArgs),
    /// Run the leave-one-driver-out evaluation.
    Eval(EvalArgs),
    /// Coefficient importance for the linear regressors of an evaluation.
    Importance(ImportanceArgs),
    /// Generate, evaluate every variant and target, and analyse importance.
    Repro(ReproArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Cohort config JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Cohort directory with sessions.csv, traits.csv and telemetry/.
    #[arg(long)]
    pub data: PathBuf,
    /// Route map JSON; defaults to <data>/route.json.
    #[arg(long)]
    pub route: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "i")]
    pub variant: Variant,
    /// Road scope; every scope of the variant when omitted.
    #[arg(long)]
    pub road: Option<RoadScope>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub road: Option<RoadScope>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Directory written by `eval` (or the eval.json inside it).
    #[arg(long)]
    pub eval: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// Repro config JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use an existing cohort instead of generating one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Machine-readable failure, also written as `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl CliError {
    fn new(kind: &str, message: impl Into<String>, path: Option<PathBuf>) -> Self {
        CliError {
            kind: kind.into(),
            message: message.into(),
            path,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        let path = match &e {
            SignalError::Io { path, .. }
            | SignalError::Parse { path, .. }
            | SignalError::MissingColumn { path, .. }
            | SignalError::NonMonotoneTimestamp { path, .. }
            | SignalError::EmptyTable(path) => Some(path.clone()),
            _ => None,
        };
        CliError::new("signals", e.to_string(), path)
    }
}

impl From<SegmentError> for CliError {
    fn from(e: SegmentError) -> Self {
        let path = match &e {
            SegmentError::RouteFile { path, .. } => Some(path.clone()),
            _ => None,
        };
        CliError::new("segmentation", e.to_string(), path)
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        let path = match &e {
            FeatureError::Csv { path, .. } => Some(path.clone()),
            _ => None,
        };
        CliError::new("features", e.to_string(), path)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::new("models", e.to_string(), None)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Features(e) => e.into(),
            EvalError::Segments(e) => e.into(),
            EvalError::Signals(e) => e.into(),
            e => CliError::new("evaluation", e.to_string(), None),
        }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::Signals(e) => e.into(),
            CohortError::Segments(e) => e.into(),
            CohortError::File { path, message } => CliError::new("cohort", message, Some(path)),
            e => CliError::new("cohort", e.to_string(), None),
        }
    }
}

impl From<ImportanceError> for CliError {
    fn from(e: ImportanceError) -> Self {
        match e {
            ImportanceError::Eval(e) => e.into(),
            e => CliError::new("importance", e.to_string(), None),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
}

impl RunManifest {
    fn new(subcommand: &str, config: Option<&Path>, seed: Option<u64>, inputs: Vec<PathBuf>, out: &Path) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config: config.map(Path::to_path_buf),
            seed,
            inputs,
            out: out.to_path_buf(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("io", e.to_string(), Some(path.to_path_buf()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("config", e.to_string(), Some(path.to_path_buf())))
}

fn write_manifest(manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(&manifest.out.join(MANIFEST_FILE), text + "\n")
}

/// Stage seed derived from the master seed (splitmix64 step).
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed.wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STAGE_MODELS: u64 = 2;

fn open_workbench(cohort: Cohort) -> Result<Workbench> {
    let bench = Workbench::new(cohort, &SegmentConfig::default())?;
    for seg in bench.segments() {
        for w in &seg.warnings {
            eprintln!("warning: {w}");
        }
    }
    let sessions = bench.cohort().sessions.len();
    let durations: f64 = bench.cohort().sessions.iter().map(|s| s.duration()).sum();
    eprintln!(
        "cohort: {} drivers, {sessions} sessions, mean drive {:.1} s, mean arterial {:.1} s",
        bench.drivers().len(),
        durations / sessions as f64,
        bench.mean_arterial()
    );
    Ok(bench)
}

fn load_data(data: &DataArgs) -> Result<Workbench> {
    open_workbench(cohortgen::load_cohort(&data.data, data.route.as_deref())?)
}

fn data_inputs(data: &DataArgs) -> Vec<PathBuf> {
    let mut v = vec![data.data.clone()];
    v.extend(data.route.clone());
    v
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mut cfg: CohortConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => CohortConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    ensure_dir(&args.out)?;
    let generated = cohortgen::gen_cohort(&cfg)?;
    cohortgen::write_cohort(&generated, &args.out)?;
    eprintln!(
        "generated {} drivers, {} sessions",
        generated.cohort.traits.len(),
        generated.cohort.sessions.len()
    );
    write_manifest(&RunManifest::new("gen", args.config.as_deref(), Some(cfg.seed), Vec::new(), &args.out))
}

pub fn feature_file_name(variant: Variant, scope: RoadScope) -> String {
    format!("features_{variant}_{scope}.csv")
}

pub fn cmd_featurize(args: &FeaturizeArgs) -> Result<()> {
    let bench = load_data(&args.data)?;
    let scopes: Vec<RoadScope> = match args.road {
        Some(r) => vec![r],
        None => args.variant.road_scopes().to_vec(),
    };
    ensure_dir(&args.out)?;
    for scope in scopes {
        let m = bench.raw_features(args.variant, scope, true)?;
        let path = args.out.join(feature_file_name(args.variant, scope));
        write_file(&path, m.to_csv_string())?;
        eprintln!("{}: {} sessions x {} features", path.display(), m.n_rows(), m.n_cols());
    }
    write_manifest(&RunManifest::new("featurize", None, None, data_inputs(&args.data), &args.out))
}

fn write_eval_outputs(report: &EvalReport, out: &Path, plots: bool) -> Result<()> {
    write_file(&out.join("eval.json"), report.to_json() + "\n")?;
    write_file(&out.join("eval.csv"), report.to_csv())?;
    if plots {
        let dir = out.join("plots");
        ensure_dir(&dir)?;
        for e in &report.entries {
            let name = format!("{}_{}_{}_{}.svg", e.target, e.model, e.variant, e.road_scope);
            write_file(&dir.join(name), scatter_svg(e))?;
        }
    }
    Ok(())
}

fn log_report(report: &EvalReport) {
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    for e in &report.entries {
        let metric = match (e.evaluation.pearson_r, e.evaluation.macro_f1) {
            (Some(r), _) => format!("r={r:.3}"),
            (None, Some(f)) => format!("f1={f:.3}"),
            _ => "undefined".into(),
        };
        eprintln!("{} {} {} {}: {metric}", e.target, e.model, e.variant, e.road_scope);
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(&args.config)?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(r) = args.road {
        cfg.road_scope = Some(r);
    }
    if let Some(s) = args.seed {
        cfg.seed = sub_seed(s, STAGE_MODELS);
    }
    cfg.validate()?;
    let bench = load_data(&args.data)?;
    let report = run_experiment(&cfg, &bench)?;
    log_report(&report);
    ensure_dir(&args.out)?;
    write_file(
        &args.out.join("experiment.json"),
        serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n",
    )?;
    write_eval_outputs(&report, &args.out, true)?;
    write_manifest(&RunManifest::new(
        "eval",
        Some(&args.config),
        args.seed,
        data_inputs(&args.data),
        &args.out,
    ))
}

fn write_importance(bench: &Workbench, report: &EvalReport, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let imp = compute_importance(bench, report, cfg.corr_threshold, cfg.include_whole_pass)?;
    for n in &imp.notes {
        eprintln!("note: {n}");
    }
    write_file(&out.join("importance.json"), imp.to_json() + "\n")?;
    write_file(&out.join("importance_sensors.csv"), imp.sensors_csv(3))?;
    write_file(&out.join("importance_durations.csv"), imp.durations_csv())
}

pub fn cmd_importance(args: &ImportanceArgs) -> Result<()> {
    let (eval_json, eval_dir) = if args.eval.is_dir() {
        (args.eval.join("eval.json"), args.eval.clone())
    } else {
        (args.eval.clone(), args.eval.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let text = fs::read_to_string(&eval_json).map_err(io_err(&eval_json))?;
    let report =
        EvalReport::from_json(&text).map_err(|e| CliError::new("eval-report", e.to_string(), Some(eval_json.clone())))?;
    let cfg_path = eval_dir.join("experiment.json");
    let cfg: ExperimentConfig = if cfg_path.exists() {
        read_json(&cfg_path)?
    } else {
        ExperimentConfig::new(vec![Target::TmtB], Variant::I, RoadScope::Arterial, vec![ModelKind::Ridge])
    };
    let bench = load_data(&args.data)?;
    ensure_dir(&args.out)?;
    write_importance(&bench, &report, &cfg, &args.out)?;
    let mut inputs = vec![eval_json];
    inputs.extend(data_inputs(&args.data));
    write_manifest(&RunManifest::new("importance", None, None, inputs, &args.out))
}

fn all_targets() -> Vec<Target> {
    Target::all()
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_trees() -> usize {
    DEFAULT_TREES
}

fn default_threshold() -> f64 {
    drivechar_core::evaluation::DEFAULT_CORR_THRESHOLD
}

/// Everything `repro` runs: the cohort and the full comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproConfig {
    #[serde(default)]
    pub cohort: CohortConfig,
    #[serde(default = "all_targets")]
    pub targets: Vec<Target>,
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub grids: BTreeMap<ModelKind, Vec<f64>>,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default = "default_threshold")]
    pub corr_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ReproConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ReproConfig {
    /// One experiment per (variant, road scope) pair.
    pub fn experiments(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for variant in Variant::ALL {
            for &scope in variant.road_scopes() {
                let mut e = ExperimentConfig::new(self.targets.clone(), variant, scope, self.models.clone());
                e.grids = self.grids.clone();
                e.n_trees = self.n_trees;
                e.corr_threshold = self.corr_threshold;
                e.seed = sub_seed(self.seed, STAGE_MODELS);
                out.push(e);
            }
        }
        out
    }
}

pub fn cmd_repro(args: &ReproArgs) -> Result<()> {
    let mut cfg: ReproConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ReproConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    ensure_dir(&args.out)?;
    let cohort = match &args.data {
        Some(dir) => cohortgen::load_cohort(dir, None)?,
        None => {
            cfg.cohort.seed = cfg.seed;
            let generated = cohortgen::gen_cohort(&cfg.cohort)?;
            let dir = args.out.join("cohort");
            ensure_dir(&dir)?;
            cohortgen::write_cohort(&generated, &dir)?;
            generated.cohort
        }
    };
    let bench = open_workbench(cohort)?;
    let mut report = EvalReport::default();
    let mut linear = EvalReport::default();
    for exp in cfg.experiments() {
        let r = run_experiment(&exp, &bench)?;
        log_report(&r);
        report.merge(r.clone());
        linear.merge(r);
    }
    write_eval_outputs(&report, &args.out, false)?;
    let threshold_cfg = ExperimentConfig {
        corr_threshold: cfg.corr_threshold,
        ..cfg.experiments().remove(0)
    };
    write_importance(&bench, &linear, &threshold_cfg, &args.out)?;
    write_file(
        &args.out.join("repro_config.json"),
        serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n",
    )?;
    let inputs = args.data.iter().cloned().collect();
    write_manifest(&RunManifest::new("repro", args.config.as_deref(), Some(cfg.seed), inputs, &args.out))
}

fn out_dir(cmd: &Command) -> &Path {
    match cmd {
        Command::Gen(a) => &a.out,
        Command::Featurize(a) => &a.out,
        Command::Eval(a) => &a.out,
        Command::Importance(a) => &a.out,
        Command::Repro(a) => &a.out,
    }
}

/// Runs one parsed command line; on failure writes `error.json` into the
/// output directory when it can.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::new("jobs", e.to_string(), None))?;
    }
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Importance(a) => cmd_importance(a),
        Command::Repro(a) => cmd_repro(a),
    };
    if let Err(e) = &result {
        let out = out_dir(&cli.command);
        if fs::create_dir_all(out).is_ok() {
            let _ = fs::write(out.join(ERROR_FILE), e.to_json() + "\n");
        }
    }
    result
}
