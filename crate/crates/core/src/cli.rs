//! `elicitd` command-line interface.
//!
//! Every invocation reads one JSON [`RunConfig`]; `--seed`, `--out` and `--T`
//! override the file. All randomness derives from the top-level seed. Exit
//! codes: 0 success, 1 config/schema/data error, 2 IO error, 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::datasets::{
    load_images, load_tabular, split, write_records_csv, DatasetManifest, DecisionRecord,
    NormalizeMode, SourceKind, Standardizer, TabularSchema, DEFAULT_PANEL_SIZE,
};
use crate::diagnostics::{
    ci_correct, histogram_csv, point_prediction, sample_mode, summarize, to_canonical_json,
    DiagnosticOptions, DiagnosticsReport, Statistic,
};
use crate::elicitation::{
    beta_pdf, distribution_entropy, fit_beta_mom, mc_sample, point_entropy, DEFAULT_SAMPLES,
};
use crate::error::{Error, Result};
use crate::net::{train, NetworkParams, NetworkSpec, TrainConfig, DEFAULT_DROPOUT};
use crate::pipeline::elicit_records;
use crate::synthetic::{
    generate, oracle_validate, GroundTruth, PanelConfig, DEFAULT_VALIDATION_BINS,
};

pub const OUT_ENV: &str = "ELICITD_OUT";
pub const DEFAULT_OUT_DIR: &str = "elicitd-out";
/// Grid points in the Beta density curves written by `report`.
pub const DENSITY_POINTS: usize = 512;

#[derive(Debug, Parser)]
#[command(
    name = "elicitd",
    version,
    about = "Elicit expert uncertainty as Beta distributions from decision records"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config and ELICITD_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte-Carlo passes per input; overrides the config.
    #[arg(long = "T", global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panel dataset with its ground truth.
    Synth,
    /// Train a network on the configured dataset.
    Train,
    /// Elicit a Beta distribution for one input.
    Elicit(ElicitArgs),
    /// Elicit every test record and write the diagnostics report.
    Evaluate,
    /// Turn a report into plot-ready CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    /// Record id from the configured dataset.
    #[arg(long)]
    pub input: Option<String>,
    /// File holding one normalized feature vector (comma or whitespace separated).
    #[arg(long)]
    pub input_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report bundle to read (default: <out>/report.json).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Record ids whose Beta density curves should be written.
    #[arg(long = "record")]
    pub records: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Tabular {
        path: PathBuf,
        #[serde(flatten)]
        schema: TabularSchema,
        /// Fit the standardization on the training split only.
        #[serde(default)]
        train_only_normalization: bool,
    },
    Images {
        dir: PathBuf,
        labels: PathBuf,
        side: usize,
        #[serde(default = "default_panel")]
        panel_size: u32,
    },
}

fn default_panel() -> u32 {
    DEFAULT_PANEL_SIZE
}

/// Either an explicit architecture or the dense residual preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkConfig {
    Spec(NetworkSpec),
    Preset {
        hidden: usize,
        blocks: usize,
        #[serde(default = "default_dropout")]
        dropout: f64,
    },
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::Preset {
            hidden: 32,
            blocks: 2,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

impl NetworkConfig {
    fn build(&self, input_shape: &[usize]) -> Result<NetworkSpec> {
        let spec = match self {
            NetworkConfig::Spec(spec) => spec.clone(),
            NetworkConfig::Preset {
                hidden,
                blocks,
                dropout,
            } => {
                let mut spec = NetworkSpec::residual_mlp(
                    input_shape.iter().product(),
                    *hidden,
                    *blocks,
                    *dropout,
                );
                spec.input_shape = input_shape.to_vec();
                spec
            }
        };
        spec.validate()?;
        if spec.input_shape != input_shape {
            return Err(Error::Shape(format!(
                "network expects input {:?} but the dataset provides {:?}",
                spec.input_shape, input_shape
            )));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Held-out fraction; `None` trains and evaluates on everything.
    pub test_fraction: Option<f64>,
    /// Repeated train/evaluate runs averaged by `evaluate`.
    pub splits: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: None,
            splits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub panel: Option<PanelConfig>,
    pub dataset: Option<DatasetConfig>,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    #[serde(rename = "T")]
    pub samples: usize,
    pub diagnostics: DiagnosticOptions,
    pub split: SplitConfig,
    pub params: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub report_records: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: None,
            panel: None,
            dataset: None,
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            samples: DEFAULT_SAMPLES,
            diagnostics: DiagnosticOptions::default(),
            split: SplitConfig::default(),
            params: None,
            truth: None,
            report_records: Vec::new(),
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.samples < 2 {
            return Err(Error::Config(format!(
                "T = {} but at least 2 passes are needed",
                self.samples
            )));
        }
        if self.split.splits < 1 {
            return Err(Error::Config("splits must be at least 1".into()));
        }
        if let Some(p) = &self.panel {
            p.validate()?;
        }
        Ok(())
    }

    /// Rebases relative paths onto the config file's directory.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.output_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.params.as_mut() {
            fix(p);
        }
        if let Some(p) = self.truth.as_mut() {
            fix(p);
        }
        match self.dataset.as_mut() {
            Some(DatasetConfig::Tabular { path, .. }) => fix(path),
            Some(DatasetConfig::Images { dir, labels, .. }) => {
                fix(dir);
                fix(labels);
            }
            None => {}
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn warn(&self, msg: impl AsRef<str>) {
        eprintln!("warning: {}", msg.as_ref());
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }

    fn params_path(&self) -> PathBuf {
        self.cfg
            .params
            .clone()
            .unwrap_or_else(|| self.out.join("params.elnd"))
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 2,
        Error::Numerics { .. } => 3,
        _ => 1,
    }
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let mut cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.rebase(path.parent().unwrap_or(Path::new(".")));
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.samples {
        cfg.samples = t;
    }
    if let Some(panel) = cfg.panel.as_mut() {
        panel.seed = cfg.seed;
    }
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&out)?;
    let ctx = Ctx {
        cfg,
        out,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Synth => cmd_synth(&ctx),
        Command::Train => cmd_train(&ctx),
        Command::Elicit(args) => cmd_elicit(&ctx, args),
        Command::Evaluate => cmd_evaluate(&ctx),
        Command::Report(args) => cmd_report(&ctx, args),
    }
}

fn cmd_synth(ctx: &Ctx) -> Result<()> {
    let panel = ctx
        .cfg
        .panel
        .as_ref()
        .ok_or_else(|| Error::Config("synth needs a `panel` section".into()))?;
    let (records, truth) = generate(panel)?;
    let names = panel.feature_names();
    let mut buf = Vec::new();
    write_records_csv(&records, &names, &mut buf)?;
    ctx.write("records.csv", buf)?;
    let positives = records.iter().filter(|r| r.label == 1).count();
    let manifest = DatasetManifest {
        source: SourceKind::Tabular,
        panel_size: panel.panel_size,
        input_shape: vec![names.len()],
        feature_names: names,
        dropped_features: Vec::new(),
        normalization: crate::datasets::Normalization::None,
        record_count: records.len(),
        class_counts: [records.len() - positives, positives],
        warnings: Vec::new(),
    };
    ctx.write("manifest.json", to_canonical_json(&manifest)?)?;
    ctx.write("truth.csv", truth.to_csv())?;
    ctx.say(format!(
        "wrote {} records ({} positive) to {}",
        records.len(),
        positives,
        ctx.out.display()
    ));
    Ok(())
}

/// Loads the configured dataset, or generates the configured panel in memory.
fn load_dataset(ctx: &Ctx) -> Result<(Vec<DecisionRecord>, DatasetManifest)> {
    match (&ctx.cfg.dataset, &ctx.cfg.panel) {
        (
            Some(DatasetConfig::Tabular {
                path,
                schema,
                train_only_normalization,
            }),
            _,
        ) => {
            let mut schema = schema.clone();
            if *train_only_normalization {
                schema.normalize = NormalizeMode::None;
            }
            load_tabular(path, &schema)
        }
        (
            Some(DatasetConfig::Images {
                dir,
                labels,
                side,
                panel_size,
            }),
            _,
        ) => load_images(dir, labels, *side, *panel_size),
        (None, Some(panel)) => {
            let (records, _) = generate(panel)?;
            let names = panel.feature_names();
            let positives = records.iter().filter(|r| r.label == 1).count();
            let manifest = DatasetManifest {
                source: SourceKind::Tabular,
                panel_size: panel.panel_size,
                input_shape: vec![names.len()],
                feature_names: names,
                dropped_features: Vec::new(),
                normalization: crate::datasets::Normalization::None,
                record_count: records.len(),
                class_counts: [records.len() - positives, positives],
                warnings: Vec::new(),
            };
            Ok((records, manifest))
        }
        (None, None) => Err(Error::Config(
            "no `dataset` or `panel` section configured".into(),
        )),
    }
}

fn train_only(ctx: &Ctx) -> bool {
    matches!(
        ctx.cfg.dataset,
        Some(DatasetConfig::Tabular {
            train_only_normalization: true,
            ..
        })
    )
}

struct Prepared {
    all: Vec<DecisionRecord>,
    train: Vec<DecisionRecord>,
    test: Vec<DecisionRecord>,
    manifest: DatasetManifest,
}

/// Dataset, split `index` and (optionally) train-only standardization.
fn prepare(ctx: &Ctx, index: u32) -> Result<Prepared> {
    let (mut all, manifest) = load_dataset(ctx)?;
    for w in &manifest.warnings {
        ctx.warn(w);
    }
    let (mut train, mut test) = match ctx.cfg.split.test_fraction {
        Some(f) => split(&all, f, ctx.cfg.seed, index)?,
        None => (all.clone(), all.clone()),
    };
    if train_only(ctx) {
        let st = Standardizer::fit(&train)?;
        st.apply(&mut train);
        st.apply(&mut test);
        st.apply(&mut all);
    }
    Ok(Prepared {
        all,
        train,
        test,
        manifest,
    })
}

fn train_config(ctx: &Ctx, index: u32) -> TrainConfig {
    TrainConfig {
        seed: ctx.cfg.seed.wrapping_add(u64::from(index)),
        ..ctx.cfg.train.clone()
    }
}

#[derive(Serialize)]
struct SplitIds<'a> {
    train: Vec<&'a str>,
    test: Vec<&'a str>,
}

fn cmd_train(ctx: &Ctx) -> Result<()> {
    let data = prepare(ctx, 0)?;
    let spec = ctx.cfg.network.build(&data.manifest.input_shape)?;
    let (params, history) = train(&spec, &data.train, &train_config(ctx, 0))?;
    fs::write(ctx.params_path(), params.to_bytes())?;
    ctx.write("network.json", to_canonical_json(&spec)?)?;
    ctx.write("history.csv", history.to_csv())?;
    ctx.write("manifest.json", to_canonical_json(&data.manifest)?)?;
    if ctx.cfg.split.test_fraction.is_some() {
        let ids = SplitIds {
            train: data.train.iter().map(|r| r.id.as_str()).collect(),
            test: data.test.iter().map(|r| r.id.as_str()).collect(),
        };
        ctx.write("split.json", to_canonical_json(&ids)?)?;
    }
    ctx.say(format!(
        "trained {} epochs on {} records; final mean loss {:.6}",
        history.mean_loss.len(),
        data.train.len(),
        history.mean_loss.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

fn load_network(ctx: &Ctx, input_shape: &[usize]) -> Result<(NetworkSpec, NetworkParams)> {
    let net_file = ctx.out.join("network.json");
    let spec = if net_file.exists() {
        let spec: NetworkSpec = serde_json::from_str(&fs::read_to_string(&net_file)?)
            .map_err(|e| Error::Config(format!("{}: {e}", net_file.display())))?;
        spec.validate()?;
        spec
    } else {
        ctx.cfg.network.build(input_shape)?
    };
    let params = NetworkParams::from_bytes(&fs::read(ctx.params_path())?)?;
    params.check_matches(&spec)?;
    Ok((spec, params))
}

fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Data(format!("input value `{s}` is not a number")))
        })
        .collect()
}

fn cmd_elicit(ctx: &Ctx, args: &ElicitArgs) -> Result<()> {
    let (id, features, shape) = match (&args.input, &args.input_file) {
        (Some(id), None) => {
            let data = prepare(ctx, 0)?;
            let record = data
                .all
                .into_iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Error::Config(format!("no record with id `{id}`")))?;
            (record.id, record.features, data.manifest.input_shape)
        }
        (None, Some(path)) => {
            let features = parse_vector(&fs::read_to_string(path)?)?;
            let shape = vec![features.len()];
            (
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                features,
                shape,
            )
        }
        _ => {
            return Err(Error::Config(
                "elicit needs exactly one of --input or --input-file".into(),
            ))
        }
    };
    let (spec, params) = load_network(ctx, &shape)?;
    let sample = mc_sample(&spec, &params, &features, ctx.cfg.samples, ctx.cfg.seed, 0)?;
    let dist = fit_beta_mom(&sample)?;
    if dist.degenerate {
        ctx.warn(format!(
            "degenerate fit for `{id}` (sample variance {}); reporting a capped surrogate",
            dist.sample_var
        ));
    }
    ctx.write("elicited.json", to_canonical_json(&dist)?)?;
    ctx.write("sample.txt", sample.to_text())?;
    ctx.say(format!(
        "{id}: Beta({:.3}, {:.3}); 95% CI [{:.4}, {:.4}]",
        dist.alpha, dist.beta, dist.ci95.0, dist.ci95.1
    ));
    Ok(())
}

/// Per-record row of an evaluation bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub split: u32,
    pub id: String,
    pub label: u8,
    pub agreement: Option<u32>,
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub alpha: f64,
    pub beta: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub degenerate: bool,
    pub distribution_entropy: f64,
    pub point_entropy: f64,
    pub predicted: u8,
    pub ci_correct: bool,
    pub ci_centered: bool,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub splits: usize,
    /// Architecture used for every split; records dropout rates and placement.
    pub network: NetworkSpec,
    #[serde(rename = "T")]
    pub samples: usize,
    pub panel_size: u32,
    pub report: DiagnosticsReport,
    pub records: Vec<RecordSummary>,
}

fn cmd_evaluate(ctx: &Ctx) -> Result<()> {
    let opts = &ctx.cfg.diagnostics;
    let splits = ctx.cfg.split.splits;
    let mut reports = Vec::with_capacity(splits);
    let mut summaries = Vec::new();
    let mut validations = Vec::new();
    let mut network = None;
    let truth = match &ctx.cfg.truth {
        Some(p) => Some(GroundTruth::from_csv(&fs::read_to_string(p)?)?),
        None => None,
    };
    for j in 0..splits {
        let index = u32::try_from(j).map_err(|_| Error::Config("too many splits".into()))?;
        let data = prepare(ctx, index)?;
        let (spec, params) = if splits == 1 && ctx.params_path().exists() {
            load_network(ctx, &data.manifest.input_shape)?
        } else {
            let spec = ctx.cfg.network.build(&data.manifest.input_shape)?;
            let (params, _) = train(&spec, &data.train, &train_config(ctx, index))?;
            (spec, params)
        };
        let evaluated = elicit_records(&spec, &params, &data.test, ctx.cfg.samples, ctx.cfg.seed)?;
        network.get_or_insert_with(|| spec.clone());
        let report = summarize(&evaluated, opts)?;
        for w in &report.warnings {
            ctx.warn(w);
        }
        for e in &evaluated {
            let outcome = ci_correct(e);
            summaries.push(RecordSummary {
                split: index,
                id: e.id.clone(),
                label: e.label,
                agreement: e.agreement,
                mean: e.sample.mean(),
                median: e.sample.median(),
                mode: sample_mode(&e.sample),
                alpha: e.dist.alpha,
                beta: e.dist.beta,
                ci_lo: e.dist.ci95.0,
                ci_hi: e.dist.ci95.1,
                degenerate: e.dist.degenerate,
                distribution_entropy: distribution_entropy(&e.sample, opts.entropy_bins)?,
                point_entropy: point_entropy(e.sample.mean().clamp(0.0, 1.0))?,
                predicted: point_prediction(e, Statistic::Mean),
                ci_correct: outcome.correct,
                ci_centered: outcome.centered,
            });
        }
        if let Some(truth) = &truth {
            let aligned = align_truth(truth, &evaluated)?;
            validations.push(oracle_validate(
                &evaluated,
                &aligned,
                DEFAULT_VALIDATION_BINS,
                opts.panel_size,
            )?);
        }
        reports.push(report);
    }
    let report = DiagnosticsReport::average(&reports)?;
    report.write_csvs(&ctx.out)?;
    let bundle = EvaluationBundle {
        splits,
        network: network.expect("at least one split"),
        samples: ctx.cfg.samples,
        panel_size: opts.panel_size,
        report,
        records: summaries,
    };
    ctx.write("report.json", to_canonical_json(&bundle)?)?;
    if !validations.is_empty() {
        ctx.write("validation.json", to_canonical_json(&validations)?)?;
    }
    let r = &bundle.report;
    ctx.say(format!(
        "mean {:.2}% | mode {:.2}% | median {:.2}% | auc {:.2}% | 95% CI {:.2}% ({:.2}% centred) | F {:.3}",
        r.mean_accuracy,
        r.mode_accuracy,
        r.median_accuracy,
        r.auc_accuracy,
        r.ci95_accuracy,
        r.pct_ci_correct_containing_half,
        r.f_score
    ));
    Ok(())
}

fn align_truth(
    truth: &GroundTruth,
    records: &[crate::diagnostics::EvaluatedRecord],
) -> Result<GroundTruth> {
    let lookup: std::collections::HashMap<&str, f64> = truth
        .ids
        .iter()
        .map(String::as_str)
        .zip(truth.p_true.iter().copied())
        .collect();
    let p_true = records
        .iter()
        .map(|r| {
            lookup
                .get(r.id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("no ground truth for record `{}`", r.id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GroundTruth {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        p_true,
    })
}

/// Beta density at the midpoints of `DENSITY_POINTS` equal cells of `[0, 1]`.
pub fn density_csv(alpha: f64, beta: f64) -> Result<String> {
    let mut out = String::from("x,density\n");
    for i in 0..DENSITY_POINTS {
        let x = (i as f64 + 0.5) / DENSITY_POINTS as f64;
        out.push_str(&format!("{},{}\n", x, beta_pdf(alpha, beta, x)?));
    }
    Ok(out)
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_report(ctx: &Ctx, args: &ReportArgs) -> Result<()> {
    let path = args
        .report
        .clone()
        .unwrap_or_else(|| ctx.out.join("report.json"));
    let bundle: EvaluationBundle = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let dir = ctx.out.join("plots");
    fs::create_dir_all(&dir)?;
    let h = &bundle.report.entropy_histograms;
    fs::write(dir.join("entropy_all.csv"), histogram_csv(&h.all))?;
    fs::write(dir.join("entropy_correct.csv"), histogram_csv(&h.correct))?;
    fs::write(
        dir.join("entropy_incorrect.csv"),
        histogram_csv(&h.incorrect),
    )?;
    fs::write(dir.join("calibration.csv"), bundle.report.calibration_csv())?;

    let mut violin = String::from("level,opposing,split,id,distribution_entropy,point_entropy\n");
    for r in &bundle.records {
        if let Some(a) = r.agreement {
            let opposing = bundle.panel_size.saturating_sub(a);
            violin.push_str(&format!(
                "{},{},{},{},{},{}\n",
                crate::diagnostics::agreement_level_name(opposing),
                opposing,
                r.split,
                r.id,
                r.distribution_entropy,
                r.point_entropy
            ));
        }
    }
    fs::write(dir.join("agreement_violin.csv"), violin)?;

    let mut wanted = ctx.cfg.report_records.clone();
    wanted.extend(args.records.iter().cloned());
    for id in &wanted {
        let r = bundle.records.iter().find(|r| &r.id == id).ok_or_else(|| {
            Error::Config(format!("no record with id `{id}` in {}", path.display()))
        })?;
        fs::write(
            dir.join(format!("density_{}.csv", file_safe(id))),
            density_csv(r.alpha, r.beta)?,
        )?;
    }
    ctx.say(format!("wrote plot data to {}", dir.display()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_of_uniform_is_flat() {
        let csv = density_csv(1.0, 1.0).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), DENSITY_POINTS);
        for r in rows {
            let d: f64 = r.split_once(',').unwrap().1.parse().unwrap();
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_peak_at_analytic_mode() {
        let (a, b) = (15.718, 2.502);
        let csv = density_csv(a, b).unwrap();
        let (mut best_x, mut best) = (0.0, f64::MIN);
        for row in csv.lines().skip(1) {
            let (x, d) = row.split_once(',').unwrap();
            let (x, d): (f64, f64) = (x.parse().unwrap(), d.parse().unwrap());
            if d > best {
                best = d;
                best_x = x;
            }
        }
        let mode = (a - 1.0) / (a + b - 2.0);
        let nearest = ((mode * DENSITY_POINTS as f64 - 0.5).round() + 0.5) / DENSITY_POINTS as f64;
        assert_eq!(best_x, nearest);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Schema("x".into())), 1);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 2);
        assert_eq!(exit_code(&Error::numerics("x")), 3);
    }

    #[test]
    fn config_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.samples, 100);
        assert_eq!(cfg.train.batch_size, 32);
        let cfg: RunConfig = serde_json::from_str(
            r#"{"dataset": {"kind": "tabular", "path": "d.csv", "label_column": "y", "agreement_column": null}}"#,
        )
        .unwrap();
        match cfg.dataset.unwrap() {
            DatasetConfig::Tabular { schema, .. } => {
                assert_eq!(schema.label_column, "y");
                assert_eq!(schema.agreement_column, None);
            }
            other => panic!("{other:?}"),
        }
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn preset_network_matches_shape() {
        let spec = NetworkConfig::default().build(&[5]).unwrap();
        assert_eq!(spec.input_shape, vec![5]);
        assert!(NetworkConfig::Spec(NetworkSpec::residual_mlp(3, 4, 1, 0.2))
            .build(&[5])
            .is_err());
    }
}
