//! Micro-batch scoring loop: `posts` topic → model → `predictions` topic.
//!
//! Delivery is at-least-once. Each batch's predictions are appended and
//! flushed before the input offset is committed, so a crash between the
//! two replays the batch on restart and [`dedup_predictions`] removes the
//! repeats.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::eval::{pct, ReportFormat};
use crate::models::{load_model, ModelArtifact};
use crate::mqlog::{validate_name, LogDir, Record, Topic, TopicConfig};
use crate::util::now_millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamJobConfig {
    pub log_dir: PathBuf,
    pub input_topic: String,
    pub output_topic: String,
    pub group: String,
    pub model_path: PathBuf,
    pub trigger_interval_ms: u64,
    pub max_batch: usize,
    /// Exit after the input has been caught up for this long.
    pub stop_on_idle_ms: Option<u64>,
}

impl Default for StreamJobConfig {
    fn default() -> Self {
        StreamJobConfig {
            log_dir: PathBuf::from("topics"),
            input_topic: "posts".into(),
            output_topic: "predictions".into(),
            group: "stream".into(),
            model_path: PathBuf::from("model.json"),
            trigger_interval_ms: 1000,
            max_batch: 512,
            stop_on_idle_ms: None,
        }
    }
}

impl StreamJobConfig {
    pub fn validate(&self) -> Result<()> {
        validate_name(&self.input_topic)?;
        validate_name(&self.output_topic)?;
        validate_name(&self.group)?;
        if self.trigger_interval_ms == 0 {
            return Err(Error::Config("trigger_interval_ms must be at least 1".into()));
        }
        if self.max_batch == 0 {
            return Err(Error::Config("max_batch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroBatch {
    pub batch_id: u64,
    pub records: Vec<Record>,
    pub first_offset: u64,
    pub last_offset: u64,
}

/// One scored post, stored as a JSON object on the output topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub post_id: String,
    pub predicted_label: u8,
    pub score: f64,
    pub model_id: String,
    pub processed_at: i64,
}

impl PredictionRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prediction serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// An input record that could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadLetter {
    pub offset: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutput {
    pub predictions: Vec<PredictionRecord>,
    pub dead_letters: Vec<DeadLetter>,
}

/// Scores every record in order. Records that do not decode as posts, or
/// that the pipeline rejects, become dead letters.
pub fn process_batch(batch: &MicroBatch, model: &ModelArtifact, processed_at: i64) -> BatchOutput {
    let mut out = BatchOutput::default();
    for rec in &batch.records {
        let scored = std::str::from_utf8(&rec.payload)
            .map_err(|e| Error::InvalidArgument(format!("payload is not UTF-8: {e}")))
            .and_then(Post::from_json)
            .and_then(|post| model.predict_post(&post).map(|p| (post, p)));
        match scored {
            Ok((post, p)) => out.predictions.push(PredictionRecord {
                post_id: post.post_id,
                predicted_label: p.label,
                score: p.score,
                model_id: model.model_id.clone(),
                processed_at,
            }),
            Err(e) => out.dead_letters.push(DeadLetter {
                offset: rec.offset,
                reason: e.to_string(),
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Idle,
    Signal,
    /// Fault injection fired; see [`RunOptions::crash_before_commit`].
    InjectedCrash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub batches: u64,
    pub records_ok: u64,
    pub records_dead: u64,
    pub committed_offset: u64,
    pub stopped_reason: StopReason,
}

/// Knobs for tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Return right after batch `n`'s outputs are durable but before its
    /// input offset is committed, as if the process died there.
    pub crash_before_commit: Option<u64>,
}

pub struct StreamJob {
    cfg: StreamJobConfig,
    model: ModelArtifact,
    input: Arc<Topic>,
    output: Arc<Topic>,
}

impl StreamJob {
    /// Loads the model named in `cfg` and opens both topics.
    pub fn start(cfg: StreamJobConfig, log: &LogDir) -> Result<Self> {
        let model = load_model(&cfg.model_path)?;
        Self::with_model(cfg, model, log)
    }

    pub fn with_model(cfg: StreamJobConfig, model: ModelArtifact, log: &LogDir) -> Result<Self> {
        cfg.validate()?;
        let input = log.topic(&cfg.input_topic)?;
        let output = log.topic(&cfg.output_topic)?;
        Ok(StreamJob {
            cfg,
            model,
            input,
            output,
        })
    }

    pub fn model(&self) -> &ModelArtifact {
        &self.model
    }

    pub fn run(&self, stop: &AtomicBool) -> Result<RunSummary> {
        self.run_with(stop, RunOptions::default())
    }

    pub fn run_with(&self, stop: &AtomicBool, opts: RunOptions) -> Result<RunSummary> {
        let cfg = &self.cfg;
        let mut next = self.input.committed(&cfg.group)?;
        let mut summary = RunSummary {
            batches: 0,
            records_ok: 0,
            records_dead: 0,
            committed_offset: next,
            stopped_reason: StopReason::Signal,
        };
        let trigger = Duration::from_millis(cfg.trigger_interval_ms);
        let mut idle_since: Option<Instant> = None;
        loop {
            if stop.load(Ordering::Relaxed) {
                summary.stopped_reason = StopReason::Signal;
                return Ok(summary);
            }
            let records = self.input.read(next, cfg.max_batch)?;
            if records.is_empty() {
                let since = *idle_since.get_or_insert_with(Instant::now);
                if let Some(idle) = cfg.stop_on_idle_ms {
                    if since.elapsed() >= Duration::from_millis(idle) {
                        summary.stopped_reason = StopReason::Idle;
                        return Ok(summary);
                    }
                }
                sleep_unless_stopped(trigger, stop);
                continue;
            }
            idle_since = None;
            let batch = MicroBatch {
                batch_id: summary.batches,
                first_offset: records[0].offset,
                last_offset: records[records.len() - 1].offset,
                records,
            };
            let out = process_batch(&batch, &self.model, now_millis() as i64);
            for dl in &out.dead_letters {
                log::warn!("{}@{}: dead letter: {}", cfg.input_topic, dl.offset, dl.reason);
            }
            for p in &out.predictions {
                self.output
                    .append_keyed(Some(p.post_id.as_bytes()), p.to_json().as_bytes())?;
            }
            self.output.flush()?;
            summary.records_ok += out.predictions.len() as u64;
            summary.records_dead += out.dead_letters.len() as u64;
            if opts.crash_before_commit == Some(batch.batch_id) {
                summary.batches += 1;
                summary.stopped_reason = StopReason::InjectedCrash;
                return Ok(summary);
            }
            next = batch.last_offset + 1;
            self.input.commit(&cfg.group, next)?;
            summary.committed_offset = next;
            summary.batches += 1;
            log::debug!(
                "batch {} offsets {}..={}: {} ok, {} dead",
                batch.batch_id,
                batch.first_offset,
                batch.last_offset,
                out.predictions.len(),
                out.dead_letters.len()
            );
        }
    }
}

fn sleep_unless_stopped(total: Duration, stop: &AtomicBool) {
    let deadline = Instant::now() + total;
    let slice = Duration::from_millis(10);
    loop {
        let now = Instant::now();
        if now >= deadline || stop.load(Ordering::Relaxed) {
            return;
        }
        std::thread::sleep((deadline - now).min(slice));
    }
}

/// Opens `cfg.log_dir`, loads the model and runs until stopped or idle.
pub fn run_stream_job(cfg: &StreamJobConfig, topics: TopicConfig, stop: &AtomicBool) -> Result<RunSummary> {
    let log = LogDir::new(&cfg.log_dir, topics)?;
    StreamJob::start(cfg.clone(), &log)?.run(stop)
}

/// Every prediction on `topic`, in offset order.
pub fn read_predictions(topic: &Topic) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    let mut at = 0;
    loop {
        let recs = topic.read(at, 4096)?;
        if recs.is_empty() {
            return Ok(out);
        }
        at = recs[recs.len() - 1].offset + 1;
        for r in recs {
            out.push(PredictionRecord::from_json(&r.payload).map_err(|e| Error::Line {
                line: r.offset as usize,
                message: format!("bad prediction record: {e}"),
            })?);
        }
    }
}

/// Keeps the first record per `(post_id, model_id)`. A later duplicate
/// whose label or score differs is dropped with a warning.
pub fn dedup_predictions(records: Vec<PredictionRecord>) -> Vec<PredictionRecord> {
    let mut seen: HashMap<(String, String), (u8, f64)> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let key = (r.post_id.clone(), r.model_id.clone());
        match seen.get(&key) {
            Some(&(label, score)) => {
                if label != r.predicted_label || score.to_bits() != r.score.to_bits() {
                    log::warn!(
                        "duplicate prediction for {} under {} differs ({label}, {score}) vs ({}, {}); keeping the first",
                        r.post_id,
                        r.model_id,
                        r.predicted_label,
                        r.score
                    );
                }
            }
            None => {
                seen.insert(key, (r.predicted_label, r.score));
                out.push(r);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressBucket {
    /// Bucket start, seconds since the epoch (post creation time).
    pub start: i64,
    pub total: usize,
    pub stressed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressSummary {
    pub total: usize,
    pub stressed: usize,
    pub buckets: Vec<StressBucket>,
    /// Predictions whose post was not among `posts`.
    pub unmatched: usize,
}

impl StressSummary {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.stressed as f64 / self.total as f64
        }
    }
}

/// Share of posts predicted as stress, overall and per `bucket_secs`
/// window of post creation time.
pub fn stress_summary(preds: &[PredictionRecord], posts: &[Post], bucket_secs: i64) -> StressSummary {
    let bucket_secs = bucket_secs.max(1);
    let created: HashMap<&str, i64> = posts.iter().map(|p| (p.post_id.as_str(), p.created_at)).collect();
    let mut buckets: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    let mut unmatched = 0;
    for p in preds {
        match created.get(p.post_id.as_str()) {
            Some(&t) => {
                let e = buckets.entry(t.div_euclid(bucket_secs) * bucket_secs).or_default();
                e.0 += 1;
                e.1 += usize::from(p.predicted_label == 1);
            }
            None => unmatched += 1,
        }
    }
    StressSummary {
        total: preds.len(),
        stressed: preds.iter().filter(|p| p.predicted_label == 1).count(),
        buckets: buckets
            .into_iter()
            .map(|(start, (total, stressed))| StressBucket { start, total, stressed })
            .collect(),
        unmatched,
    }
}

pub fn render_stress_summary(s: &StressSummary, format: ReportFormat) -> String {
    let rate = |st: usize, t: usize| if t == 0 { 0.0 } else { st as f64 / t as f64 };
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            let _ = writeln!(
                out,
                "predictions: {}  stress: {}  stress rate: {}%",
                s.total,
                s.stressed,
                pct(s.rate())
            );
            let _ = writeln!(
                out,
                "{:>12}  {:>6}  {:>6}  {:>7}",
                "bucket_start", "posts", "stress", "rate%"
            );
            for b in &s.buckets {
                let _ = writeln!(
                    out,
                    "{:>12}  {:>6}  {:>6}  {:>7}",
                    b.start,
                    b.total,
                    b.stressed,
                    pct(rate(b.stressed, b.total))
                );
            }
            if s.unmatched > 0 {
                let _ = writeln!(out, "unmatched predictions: {}", s.unmatched);
            }
        }
        ReportFormat::Csv => {
            out.push_str("bucket_start,posts,stress,stress_rate\n");
            for b in &s.buckets {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    b.start,
                    b.total,
                    b.stressed,
                    pct(rate(b.stressed, b.total))
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, label: u8, score: f64) -> PredictionRecord {
        PredictionRecord {
            post_id: id.into(),
            predicted_label: label,
            score,
            model_id: "m".into(),
            processed_at: 0,
        }
    }

    #[test]
    fn dedup_keeps_first() {
        let v = vec![pred("a", 1, 0.9), pred("b", 0, 0.1)];
        assert_eq!(dedup_predictions(v.clone()), v);
        let d = dedup_predictions(vec![pred("a", 1, 0.9), pred("a", 1, 0.9), pred("b", 0, 0.2)]);
        assert_eq!(d.iter().map(|p| p.post_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        let d = dedup_predictions(vec![pred("a", 1, 0.9), pred("a", 0, 0.2)]);
        assert_eq!(d, vec![pred("a", 1, 0.9)]);
        let mut other_model = pred("a", 1, 0.9);
        other_model.model_id = "n".into();
        assert_eq!(dedup_predictions(vec![pred("a", 1, 0.9), other_model]).len(), 2);
    }

    #[test]
    fn wire_format_keys() {
        let v: serde_json::Value = serde_json::from_str(&pred("x", 1, 0.5).to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["post_id", "predicted_label", "score", "model_id", "processed_at"]
        );
    }

    #[test]
    fn summary_buckets() {
        let mut posts = Vec::new();
        for (i, t) in [0i64, 30, 61, 125].iter().enumerate() {
            let mut p = Post::new(format!("p{i}"), "d", "x");
            p.created_at = *t;
            posts.push(p);
        }
        let preds = vec![
            pred("p0", 1, 1.0),
            pred("p1", 0, 0.0),
            pred("p2", 1, 1.0),
            pred("p3", 1, 1.0),
            pred("zz", 0, 0.0),
        ];
        let s = stress_summary(&preds, &posts, 60);
        assert_eq!((s.total, s.stressed, s.unmatched), (5, 3, 1));
        let b: Vec<(i64, usize, usize)> = s.buckets.iter().map(|b| (b.start, b.total, b.stressed)).collect();
        assert_eq!(b, [(0, 2, 1), (60, 1, 1), (120, 1, 1)]);
    }

    #[test]
    fn config_validation() {
        assert!(StreamJobConfig::default().validate().is_ok());
        let bad = StreamJobConfig {
            max_batch: 0,
            ..StreamJobConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = StreamJobConfig {
            trigger_interval_ms: 0,
            ..StreamJobConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
