//! The `stresswatch` command line.
//!
//! Settings resolve in this order, later winning: built-in defaults, the
//! `--config` TOML file, `--set key.path=value` overrides, then dedicated
//! flags (each of which also reads a `STRESSWATCH_*` environment variable).
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    corpus_stats, load_labeled_csv, load_posts_jsonl, split, write_labeled_csv, write_posts_jsonl, CsvSchema,
    LabeledPost, Post,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_models, evaluate, kfold_cv, pct, render_cv, render_leaderboard, render_metrics, MetricsReport, ReportFormat,
};
use crate::features::{fit_pipeline, FeatureConfig, FeaturePipeline};
use crate::ingest::{pump, synth_generate, Rate, ReplaySource, VecSource};
use crate::models::{fit_artifact, load_model, save_model, train_model, HyperParams, ModelArtifact, ModelKind};
use crate::mqlog::{FlushPolicy, LogDir, TopicConfig, DEFAULT_SEGMENT_BYTES};
use crate::orchestrator::{render_status, run_dag, status, validate_dag, DagSpec, DefaultRunner};
use crate::stream::{
    dedup_predictions, read_predictions, render_stress_summary, run_stream_job, stress_summary, StreamJob,
    StreamJobConfig,
};
use crate::textprep::{preprocess, StopwordList};
use crate::util::{derive_seed, now_millis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlushMode {
    EveryRecord,
    Batched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicSettings {
    pub segment_max_bytes: u64,
    pub flush: FlushMode,
    pub flush_max_records: usize,
    pub flush_max_delay_ms: u64,
}

impl Default for TopicSettings {
    fn default() -> Self {
        TopicSettings {
            segment_max_bytes: DEFAULT_SEGMENT_BYTES,
            flush: FlushMode::EveryRecord,
            flush_max_records: 256,
            flush_max_delay_ms: 100,
        }
    }
}

impl TopicSettings {
    pub fn topic_config(&self) -> TopicConfig {
        TopicConfig {
            segment_max_bytes: self.segment_max_bytes,
            flush: match self.flush {
                FlushMode::EveryRecord => FlushPolicy::EveryRecord,
                FlushMode::Batched => FlushPolicy::Batched {
                    max_records: self.flush_max_records,
                    max_delay: Duration::from_millis(self.flush_max_delay_ms),
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub schema: CsvSchema,
}

/// Everything the CLI can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: u64,
    /// Pins artifact timestamps (unix millis) for reproducible output.
    pub created_at: Option<i64>,
    pub format: Format,
    pub topics_dir: PathBuf,
    pub model_dir: PathBuf,
    pub runs_dir: PathBuf,
    /// Stopword file; the built-in list when absent.
    pub stopwords: Option<PathBuf>,
    pub split_ratio: f64,
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub hyperparams: HyperParams,
    pub stream: StreamJobConfig,
    pub topic: TopicSettings,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            seed: 42,
            created_at: None,
            format: Format::Text,
            topics_dir: PathBuf::from("topics"),
            model_dir: PathBuf::from("models"),
            runs_dir: PathBuf::from("runs"),
            stopwords: None,
            split_ratio: 0.8,
            data: DataConfig::default(),
            features: FeatureConfig::default(),
            hyperparams: HyperParams::default(),
            stream: StreamJobConfig::default(),
            topic: TopicSettings::default(),
        }
    }
}

impl GlobalConfig {
    /// Defaults, then `path`, then `key.path=value` overrides.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text =
                    fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("`--set {s}` is not KEY=VALUE")))?;
            set_path(&mut root, key.trim(), parse_toml_value(raw.trim()))?;
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    fn created_at(&self) -> i64 {
        self.created_at.unwrap_or_else(|| now_millis() as i64)
    }

    /// Feature settings seeded by `seed`, with the configured stopwords.
    fn features_for(&self, seed: u64) -> Result<FeatureConfig> {
        let mut f = self.features.clone();
        f.w2v.seed = seed;
        if let Some(p) = &self.stopwords {
            f.stopwords = StopwordList::from_file(p)?;
        }
        Ok(f)
    }

    fn hyperparams_for(&self, seed: u64) -> HyperParams {
        self.hyperparams.clone().with_seed(seed)
    }

    fn log_dir(&self) -> Result<LogDir> {
        LogDir::new(&self.topics_dir, self.topic.topic_config())
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad config key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry((*p).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "stresswatch",
    version,
    about = "Stress detection for social-media posts, offline and streaming"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "STRESSWATCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set hyperparams.logreg.max_iters=500`.
    #[arg(
        long = "set",
        global = true,
        value_name = "KEY=VALUE",
        env = "STRESSWATCH_SET",
        value_delimiter = ';'
    )]
    pub sets: Vec<String>,
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "STRESSWATCH_SEED")]
    pub seed: Option<u64>,
    /// Pin artifact `created_at` (unix millis).
    #[arg(long, global = true, env = "STRESSWATCH_CREATED_AT", allow_negative_numbers = true)]
    pub created_at: Option<i64>,
    #[arg(long, global = true, value_enum, env = "STRESSWATCH_FORMAT")]
    pub format: Option<Format>,
    #[arg(long, global = true, env = "STRESSWATCH_TOPICS_DIR")]
    pub topics_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "STRESSWATCH_MODEL_DIR")]
    pub model_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "STRESSWATCH_RUNS_DIR")]
    pub runs_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "STRESSWATCH_STOPWORDS")]
    pub stopwords: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn parse_rate(s: &str) -> std::result::Result<Rate, String> {
    if s.eq_ignore_ascii_case("unthrottled") {
        return Ok(Rate::Unthrottled);
    }
    let r: f64 = s
        .parse()
        .map_err(|_| format!("`{s}` is neither a number nor `unthrottled`"))?;
    Rate::PerSecond(r).validate().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Labeled CSV (training data, or the whole set when `--test` is absent).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out labeled CSV; without it `--data` is split by `split_ratio`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
}

/// Model type, given positionally (`train logreg`) or as `--model`.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelArg {
    #[arg(value_parser = parse_kind, value_name = "MODEL")]
    positional: Option<ModelKind>,
    #[arg(long = "model", value_parser = parse_kind, value_name = "MODEL")]
    flag: Option<ModelKind>,
}

impl ModelArg {
    pub fn kind(&self) -> ModelKind {
        self.positional.or(self.flag).expect("clap requires exactly one")
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit features and a model, evaluate it, save the artifact.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArg,
        /// Artifact path; defaults to `<model_dir>/<model>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse a pipeline written by `fit-features` instead of fitting one.
        #[arg(long)]
        pipeline: Option<PathBuf>,
    },
    /// k-fold cross-validation.
    Crossval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Score a saved artifact on a labeled CSV.
    Evaluate {
        #[arg(long)]
        model_path: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train several models on the same split and rank them.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated model types; all five by default.
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        models: Vec<ModelKind>,
        /// Rank by k-fold means instead of a single split.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Corpus statistics after preprocessing.
    Stats {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Append posts from a JSONL file to a topic.
    Replay {
        #[arg(long)]
        file: PathBuf,
        /// Posts per second, or `unthrottled`.
        #[arg(long, default_value = "unthrottled", value_parser = parse_rate)]
        rate: Rate,
        #[arg(long)]
        topic: Option<String>,
        #[arg(long = "loop")]
        looping: bool,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Generate synthetic posts into a topic and/or files.
    Produce {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        stress_ratio: f64,
        #[arg(long)]
        topic: Option<String>,
        /// Do not append to any topic.
        #[arg(long)]
        no_topic: bool,
        /// Also write the posts as JSONL.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        /// Also write the labeled posts as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "unthrottled", value_parser = parse_rate)]
        rate: Rate,
    },
    /// Run the micro-batch scoring job.
    ServeStream(ServeArgs),
    /// Deduplicate prediction records by (post_id, model_id).
    Dedup {
        #[arg(long, conflicts_with = "input")]
        topic: Option<String>,
        /// JSONL file of prediction records instead of a topic.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate, run or inspect workflow DAGs.
    Dag {
        #[command(subcommand)]
        action: DagCommand,
    },
    /// Synthetic posts → topic → stream job → dedup → stress summary.
    PipelineDemo {
        #[arg(long)]
        model_path: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Replay this JSONL file instead of synthetic posts.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, default_value = "unthrottled", value_parser = parse_rate)]
        rate: Rate,
        #[arg(long, default_value_t = 0.5)]
        stress_ratio: f64,
        /// Topic root for the demo; must be empty or absent. A temporary
        /// directory (removed afterwards) by default.
        #[arg(long)]
        workdir: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        trigger_interval_ms: u64,
        /// Bucket width of the stress-rate summary, in seconds.
        #[arg(long, default_value_t = 3600)]
        bucket_secs: i64,
    },
    /// Write a labeled CSV with each text replaced by its tokens.
    Preprocess {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the feature pipeline on a labeled CSV and save it as JSON.
    FitFeatures {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an artifact and copy it atomically to its published path.
    PublishModel {
        #[arg(long)]
        model_path: PathBuf,
        /// Defaults to `<model_dir>/published.json`.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub input_topic: Option<String>,
    #[arg(long)]
    pub output_topic: Option<String>,
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    #[arg(long)]
    pub trigger_interval_ms: Option<u64>,
    #[arg(long)]
    pub max_batch: Option<usize>,
    #[arg(long)]
    pub stop_on_idle_ms: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum DagCommand {
    Validate {
        file: PathBuf,
    },
    Run {
        file: PathBuf,
        /// Defaults to `<dag_id>-<unix millis>`.
        #[arg(long)]
        run_id: Option<String>,
    },
    Status {
        run_id: String,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// writing reports to `out` and diagnostics to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<GlobalConfig> {
    let mut cfg = GlobalConfig::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(c) = cli.created_at {
        cfg.created_at = Some(c);
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(d) = &cli.topics_dir {
        cfg.topics_dir = d.clone();
    }
    if let Some(d) = &cli.model_dir {
        cfg.model_dir = d.clone();
    }
    if let Some(d) = &cli.runs_dir {
        cfg.runs_dir = d.clone();
    }
    if let Some(p) = &cli.stopwords {
        cfg.stopwords = Some(p.clone());
    }
    if let Some(p) = &cfg.stopwords {
        if !p.is_file() {
            return Err(Error::Config(format!("stopword file {} does not exist", p.display())));
        }
    }
    cfg.stream.log_dir = cfg.topics_dir.clone();
    Ok(cfg)
}

fn load_data(cfg: &GlobalConfig, path: Option<&Path>) -> Result<Vec<LabeledPost>> {
    let path = path
        .or(cfg.data.train.as_deref())
        .ok_or_else(|| Error::Config("no dataset given (use --data or data.train)".into()))?;
    let data =
        load_labeled_csv(path, &cfg.data.schema).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if data.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no rows", path.display())));
    }
    Ok(data)
}

fn train_test(cfg: &GlobalConfig, args: &DataArgs) -> Result<(Vec<LabeledPost>, Vec<LabeledPost>)> {
    let data = load_data(cfg, args.data.as_deref())?;
    match args.test.as_deref().or(cfg.data.test.as_deref()) {
        Some(t) => Ok((data, load_data(cfg, Some(t))?)),
        None => {
            let s = split(&data, args.split_ratio.unwrap_or(cfg.split_ratio), cfg.seed)?;
            Ok((s.train, s.test))
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve_config(&cli)?;
    let fmt: ReportFormat = cfg.format.into();
    match &cli.command {
        Command::Train {
            data,
            model,
            out: path,
            pipeline,
        } => {
            let model = &model.kind();
            let (train, test) = train_test(&cfg, data)?;
            let hp = cfg.hyperparams_for(cfg.seed);
            let art = match pipeline {
                Some(p) => {
                    let pipeline: FeaturePipeline = serde_json::from_str(&fs::read_to_string(p)?)?;
                    pipeline.validate()?;
                    let rows = train
                        .iter()
                        .map(|lp| pipeline.transform(&lp.post))
                        .collect::<Result<Vec<_>>>()?;
                    let y: Vec<u8> = train.iter().map(|lp| lp.label).collect();
                    let m = train_model(*model, &rows, &y, &hp)?;
                    ModelArtifact::new(m, pipeline, &hp, cfg.created_at())
                }
                None => fit_artifact(&train, *model, &cfg.features_for(cfg.seed)?, &hp, cfg.created_at())?,
            };
            let (cm, report) = evaluate(&art, &test)?;
            let path = path
                .clone()
                .unwrap_or_else(|| cfg.model_dir.join(format!("{}.json", model.as_str())));
            save_model(&art, &path)?;
            eprintln!("saved {} to {}", art.model_id, path.display());
            write!(out, "{}", render_metrics(model.display_name(), &report, Some(&cm), fmt))?;
        }
        Command::Crossval { data, model, k } => {
            let model = &model.kind();
            let data = load_data(&cfg, data.as_deref())?;
            let cv = crossval(&cfg, &data, *model, *k, cfg.seed)?;
            write!(out, "{}", render_cv(model.display_name(), &cv, fmt))?;
        }
        Command::Evaluate { model_path, data } => {
            let art = load_model(model_path)?;
            let data = load_data(&cfg, Some(data))?;
            let (cm, report) = evaluate(&art, &data)?;
            write!(
                out,
                "{}",
                render_metrics(art.model_type().display_name(), &report, Some(&cm), fmt)
            )?;
        }
        Command::Compare { data, models, k } => {
            let kinds = if models.is_empty() {
                ModelKind::ALL.to_vec()
            } else {
                models.clone()
            };
            let mut rows: Vec<(String, MetricsReport)> = Vec::new();
            match k {
                Some(k) => {
                    let all = load_data(&cfg, data.data.as_deref())?;
                    for kind in kinds {
                        let cv = crossval(&cfg, &all, kind, *k, cfg.seed)?;
                        rows.push((kind.display_name().into(), cv.mean));
                    }
                }
                None => {
                    let (train, test) = train_test(&cfg, data)?;
                    let features = cfg.features_for(cfg.seed)?;
                    let hp = cfg.hyperparams_for(cfg.seed);
                    for kind in kinds {
                        let art = fit_artifact(&train, kind, &features, &hp, cfg.created_at())?;
                        rows.push((kind.display_name().into(), evaluate(&art, &test)?.1));
                    }
                }
            }
            write!(out, "{}", render_leaderboard(&compare_models(rows), fmt))?;
        }
        Command::Stats { data } => {
            let data = load_data(&cfg, data.as_deref())?;
            let sw = cfg.features_for(cfg.seed)?.stopwords;
            let s = corpus_stats(&data, |t| preprocess(t, &sw))?;
            let mut rows: Vec<(String, String)> = vec![
                ("n_posts".into(), s.n_posts.to_string()),
                ("stress_ratio".into(), pct(s.label1_ratio)),
                ("min_tokens".into(), s.min_len.to_string()),
                ("max_tokens".into(), s.max_len.to_string()),
                ("mean_tokens".into(), format!("{:.2}", s.mean_len)),
                ("vocab_size".into(), s.vocab_size.to_string()),
                ("empty_bodies".into(), s.empty_bodies.to_string()),
            ];
            for (d, n) in &s.per_domain_counts {
                rows.push((format!("domain:{d}"), n.to_string()));
            }
            match fmt {
                ReportFormat::Text => {
                    for (k, v) in rows {
                        writeln!(out, "{k:<24} {v}")?;
                    }
                }
                ReportFormat::Csv => {
                    writeln!(out, "metric,value")?;
                    for (k, v) in rows {
                        writeln!(out, "{k},{v}")?;
                    }
                }
            }
        }
        Command::Replay {
            file,
            rate,
            topic,
            looping,
            limit,
        } => {
            let log = cfg.log_dir()?;
            let topic = log.topic(topic.as_deref().unwrap_or(&cfg.stream.input_topic))?;
            let mut src = ReplaySource::open(file, *looping)?;
            if *looping && limit.is_none() {
                eprintln!("warning: --loop without --limit runs until interrupted");
            }
            let s = pump(&mut src, &topic, *rate, *limit, None)?;
            topic.flush()?;
            writeln!(
                out,
                "appended {} posts to {} ({} malformed skipped)",
                s.appended,
                topic.name(),
                s.malformed
            )?;
        }
        Command::Produce {
            count,
            stress_ratio,
            topic,
            no_topic,
            jsonl,
            csv,
            rate,
        } => {
            if !(0.0..=1.0).contains(stress_ratio) {
                return Err(Error::InvalidArgument(format!(
                    "stress ratio {stress_ratio} not in [0,1]"
                )));
            }
            let labeled = synth_generate(*count, cfg.seed, *stress_ratio);
            let posts: Vec<Post> = labeled.iter().map(|lp| lp.post.clone()).collect();
            if let Some(p) = jsonl {
                write_posts_jsonl(io::BufWriter::new(create_file(p)?), &posts)?;
            }
            if let Some(p) = csv {
                write_labeled_csv(io::BufWriter::new(create_file(p)?), &labeled)?;
            }
            if !*no_topic {
                let log = cfg.log_dir()?;
                let topic = log.topic(topic.as_deref().unwrap_or(&cfg.stream.input_topic))?;
                let s = pump(&mut VecSource::new(posts), &topic, *rate, None, None)?;
                topic.flush()?;
                writeln!(out, "appended {} synthetic posts to {}", s.appended, topic.name())?;
            } else {
                writeln!(out, "generated {count} synthetic posts")?;
            }
        }
        Command::ServeStream(args) => {
            let mut sc = cfg.stream.clone();
            if let Some(v) = &args.input_topic {
                sc.input_topic = v.clone();
            }
            if let Some(v) = &args.output_topic {
                sc.output_topic = v.clone();
            }
            if let Some(v) = &args.group {
                sc.group = v.clone();
            }
            if let Some(v) = &args.model_path {
                sc.model_path = v.clone();
            }
            if let Some(v) = args.trigger_interval_ms {
                sc.trigger_interval_ms = v;
            }
            if let Some(v) = args.max_batch {
                sc.max_batch = v;
            }
            if args.stop_on_idle_ms.is_some() {
                sc.stop_on_idle_ms = args.stop_on_idle_ms;
            }
            let stop = AtomicBool::new(false);
            let s = run_stream_job(&sc, cfg.topic.topic_config(), &stop)?;
            writeln!(
                out,
                "batches={} records_ok={} records_dead={} committed_offset={} stopped={:?}",
                s.batches, s.records_ok, s.records_dead, s.committed_offset, s.stopped_reason
            )?;
        }
        Command::Dedup {
            topic,
            input,
            out: dest,
        } => {
            let records = match input {
                Some(p) => {
                    let text = fs::read_to_string(p)?;
                    text.lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| crate::stream::PredictionRecord::from_json(l.as_bytes()))
                        .collect::<Result<Vec<_>>>()?
                }
                None => {
                    let log = cfg.log_dir()?;
                    read_predictions(&*log.topic(topic.as_deref().unwrap_or(&cfg.stream.output_topic))?)?
                }
            };
            let before = records.len();
            let kept = dedup_predictions(records);
            let mut body = String::new();
            for r in &kept {
                body.push_str(&r.to_json());
                body.push('\n');
            }
            match dest {
                Some(p) => {
                    create_file(p)?.write_all(body.as_bytes())?;
                    eprintln!("kept {} of {before} records", kept.len());
                }
                None => out.write_all(body.as_bytes())?,
            }
        }
        Command::Dag { action } => return dag(&cli, &cfg, action, out),
        Command::PipelineDemo {
            model_path,
            count,
            file,
            rate,
            stress_ratio,
            workdir,
            trigger_interval_ms,
            bucket_secs,
        } => {
            let model_path = model_path.clone().unwrap_or_else(|| cfg.stream.model_path.clone());
            let demo = DemoArgs {
                model_path,
                count: *count,
                file: file.clone(),
                rate: *rate,
                stress_ratio: *stress_ratio,
                workdir: workdir.clone(),
                trigger_interval_ms: *trigger_interval_ms,
                bucket_secs: *bucket_secs,
            };
            let (report, ok) = pipeline_demo(&cfg, &demo)?;
            write!(out, "{report}")?;
            return Ok(if ok { 0 } else { 1 });
        }
        Command::Preprocess { data, out: dest } => {
            let data = load_data(&cfg, data.as_deref())?;
            let sw = cfg.features_for(cfg.seed)?.stopwords;
            let cleaned: Vec<LabeledPost> = data
                .into_iter()
                .map(|mut lp| {
                    lp.post.body = preprocess(&lp.post.body, &sw).to_string();
                    lp
                })
                .collect();
            write_labeled_csv(io::BufWriter::new(create_file(dest)?), &cleaned)?;
            writeln!(out, "wrote {} preprocessed rows to {}", cleaned.len(), dest.display())?;
        }
        Command::FitFeatures { data, out: dest } => {
            let data = load_data(&cfg, data.as_deref())?;
            let p = fit_pipeline(&data, &cfg.features_for(cfg.seed)?)?;
            let mut text = serde_json::to_string_pretty(&p)?;
            text.push('\n');
            write_atomic(dest, text.as_bytes())?;
            writeln!(
                out,
                "fitted pipeline: vocab {} words, output dim {}",
                p.w2v.vocab_size(),
                p.output_dim
            )?;
        }
        Command::PublishModel { model_path, dest } => {
            let art = load_model(model_path)?;
            let dest = dest.clone().unwrap_or_else(|| cfg.model_dir.join("published.json"));
            save_model(&art, &dest)?;
            writeln!(out, "published {} to {}", art.model_id, dest.display())?;
        }
    }
    Ok(0)
}

fn create_file(p: &Path) -> Result<fs::File> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(fs::File::create(p)?)
}

fn write_atomic(p: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = p.with_extension("tmp");
    {
        let mut f = create_file(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, p)?;
    Ok(())
}

/// Cross-validation where each fold refits features and model from a
/// fold seed.
fn crossval(
    cfg: &GlobalConfig,
    data: &[LabeledPost],
    kind: ModelKind,
    k: usize,
    seed: u64,
) -> Result<crate::eval::CVResult> {
    let created_at = cfg.created_at();
    kfold_cv(data, k, seed, |train, fold_seed| {
        fit_artifact(
            train,
            kind,
            &cfg.features_for(fold_seed)?,
            &cfg.hyperparams_for(fold_seed),
            created_at,
        )
    })
}

fn dag(cli: &Cli, cfg: &GlobalConfig, action: &DagCommand, out: &mut dyn Write) -> Result<i32> {
    match action {
        DagCommand::Validate { file } => {
            let report = validate_dag(&DagSpec::load(file)?);
            writeln!(out, "{report}")?;
            Ok(if report.is_ok() { 0 } else { 1 })
        }
        DagCommand::Run { file, run_id } => {
            let spec = DagSpec::load(file)?;
            let run_id = run_id
                .clone()
                .unwrap_or_else(|| format!("{}-{}", spec.dag_id, now_millis()));
            // Built-ins run in-process with this invocation's global settings.
            let mut prefix: Vec<OsString> = vec!["stresswatch".into()];
            if let Some(c) = &cli.config {
                prefix.extend(["--config".into(), c.clone().into_os_string()]);
            }
            for s in &cli.sets {
                prefix.extend(["--set".into(), s.into()]);
            }
            prefix.extend(["--seed".into(), cfg.seed.to_string().into()]);
            if let Some(c) = cfg.created_at {
                prefix.extend(["--created-at".into(), c.to_string().into()]);
            }
            for (flag, dir) in [
                ("--topics-dir", &cfg.topics_dir),
                ("--model-dir", &cfg.model_dir),
                ("--runs-dir", &cfg.runs_dir),
            ] {
                prefix.extend([flag.into(), dir.clone().into_os_string()]);
            }
            if let Some(p) = &cfg.stopwords {
                prefix.extend(["--stopwords".into(), p.clone().into_os_string()]);
            }
            let mut runner = DefaultRunner {
                builtin: |action: &str, args: &[String]| {
                    let mut argv = prefix.clone();
                    argv.push(action.into());
                    argv.extend(args.iter().map(OsString::from));
                    let mut stderr = io::stderr();
                    run(argv, &mut stderr)
                },
            };
            let state = run_dag(&spec, &mut runner, &cfg.runs_dir, &run_id)?;
            write!(out, "{}", render_status(&state))?;
            Ok(if state.status == crate::orchestrator::TaskStatus::Success {
                0
            } else {
                1
            })
        }
        DagCommand::Status { run_id } => {
            write!(out, "{}", status(&cfg.runs_dir, run_id)?)?;
            Ok(0)
        }
    }
}

struct DemoArgs {
    model_path: PathBuf,
    count: usize,
    file: Option<PathBuf>,
    rate: Rate,
    stress_ratio: f64,
    workdir: Option<PathBuf>,
    trigger_interval_ms: u64,
    bucket_secs: i64,
}

/// Removes a directory on drop unless disarmed.
struct TempDir(Option<PathBuf>);

impl Drop for TempDir {
    fn drop(&mut self) {
        if let Some(p) = self.0.take() {
            let _ = fs::remove_dir_all(p);
        }
    }
}

/// Returns the report and whether every post was scored and agreed with
/// offline scoring.
fn pipeline_demo(cfg: &GlobalConfig, a: &DemoArgs) -> Result<(String, bool)> {
    let model = load_model(&a.model_path)
        .map_err(|e| Error::Config(format!("cannot load model {}: {e}", a.model_path.display())))?;
    let posts: Vec<Post> = match &a.file {
        Some(f) => load_posts_jsonl(f)?,
        None => synth_generate(a.count, cfg.seed, a.stress_ratio)
            .into_iter()
            .map(|lp| lp.post)
            .collect(),
    };

    let (root, _cleanup) = match &a.workdir {
        Some(d) => {
            if d.exists() && fs::read_dir(d)?.next().is_some() {
                return Err(Error::Config(format!("workdir {} is not empty", d.display())));
            }
            (d.clone(), TempDir(None))
        }
        None => {
            let d = std::env::temp_dir().join(format!(
                "stresswatch-demo-{}-{}",
                std::process::id(),
                derive_seed(now_millis(), cfg.seed)
            ));
            (d.clone(), TempDir(Some(d)))
        }
    };
    let log = LogDir::new(&root, cfg.topic.topic_config())?;
    let job_cfg = StreamJobConfig {
        log_dir: root.clone(),
        model_path: a.model_path.clone(),
        trigger_interval_ms: a.trigger_interval_ms,
        stop_on_idle_ms: None,
        ..cfg.stream.clone()
    };
    let job = StreamJob::with_model(job_cfg.clone(), model.clone(), &log)?;
    let input = log.topic(&job_cfg.input_topic)?;
    let output = log.topic(&job_cfg.output_topic)?;
    let stop = Arc::new(AtomicBool::new(false));

    let started = Instant::now();
    let summary = std::thread::scope(|s| -> Result<_> {
        let handle = s.spawn(|| job.run(&stop));
        let pumped = pump(&mut VecSource::new(posts.clone()), &input, a.rate, None, None);
        let finished = pumped.and_then(|_| {
            input.flush()?;
            let target = input.next_offset();
            let deadline = Instant::now() + Duration::from_secs(120);
            while input.committed(&job_cfg.group)? < target {
                if Instant::now() > deadline || handle.is_finished() {
                    return Err(Error::InvalidArgument("stream job did not catch up".into()));
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Ok(())
        });
        stop.store(true, Ordering::Relaxed);
        let summary = handle.join().expect("stream job thread panicked")?;
        finished?;
        Ok(summary)
    })?;
    let elapsed = started.elapsed().as_secs_f64();

    let preds = dedup_predictions(read_predictions(&output)?);
    let mut agree = 0usize;
    for p in &preds {
        if let Some(post) = posts.iter().find(|q| q.post_id == p.post_id) {
            let offline = model.predict_post(post)?;
            if offline.label == p.predicted_label && offline.score.to_bits() == p.score.to_bits() {
                agree += 1;
            }
        }
    }
    eprintln!(
        "processed {} posts in {:.3} s ({:.1} posts/s, {} batches)",
        posts.len(),
        elapsed,
        posts.len() as f64 / elapsed.max(1e-9),
        summary.batches
    );
    let stress = stress_summary(&preds, &posts, a.bucket_secs);
    let fmt: ReportFormat = cfg.format.into();
    let mut report = String::new();
    if fmt == ReportFormat::Text {
        report.push_str(&format!(
            "model: {}\nposts: {}\npredictions: {}\ndead letters: {}\nbatch agreement: {}/{}\n",
            model.model_id,
            posts.len(),
            preds.len(),
            summary.records_dead,
            agree,
            posts.len()
        ));
    }
    report.push_str(&render_stress_summary(&stress, fmt));
    let ok = preds.len() == posts.len() && agree == posts.len();
    if !ok {
        eprintln!(
            "error: {} predictions, {agree} agreeing, for {} posts",
            preds.len(),
            posts.len()
        );
    }
    Ok((report, ok))
}
