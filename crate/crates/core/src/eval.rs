//! Accuracy, per-class F1, k-fold cross-validation and leaderboards.
//!
//! Class 1 (stress) is the positive class. Metrics are stored as fractions
//! and rendered ×100 with two decimals.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::corpus::{LabeledPost, Post};
use crate::error::{Error, Result};
use crate::models::ModelArtifact;
use crate::util::{derive_seed, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// F1 of the stress class.
    pub f1_pos: f64,
    /// F1 of the non-stress class.
    pub f1_neg: f64,
    pub f1_macro: f64,
}

pub fn confusion(preds: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truth) {
        match (p, t) {
            (1, 1) => cm.true_pos += 1,
            (1, 0) => cm.false_pos += 1,
            (0, 1) => cm.false_neg += 1,
            (0, 0) => cm.true_neg += 1,
            _ => return Err(Error::InvalidArgument(format!("label pair ({p}, {t}) is not binary"))),
        }
    }
    Ok(cm)
}

/// `2·tp / (2·tp + fp + fn)`, which equals `2PR/(P+R)`; 0 when the
/// denominator is 0.
fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let total = cm.total();
    let accuracy = if total == 0 {
        0.0
    } else {
        (cm.true_pos + cm.true_neg) as f64 / total as f64
    };
    let f1_pos = f1(cm.true_pos, cm.false_pos, cm.false_neg);
    let f1_neg = f1(cm.true_neg, cm.false_neg, cm.false_pos);
    MetricsReport {
        accuracy,
        f1_pos,
        f1_neg,
        f1_macro: (f1_pos + f1_neg) / 2.0,
    }
}

/// Anything that labels a post.
pub trait PostClassifier {
    fn classify(&self, post: &Post) -> Result<u8>;
}

impl PostClassifier for ModelArtifact {
    fn classify(&self, post: &Post) -> Result<u8> {
        Ok(self.predict_post(post)?.label)
    }
}

impl<F: Fn(&Post) -> Result<u8>> PostClassifier for F {
    fn classify(&self, post: &Post) -> Result<u8> {
        self(post)
    }
}

/// Scores `data` with `model`; returns the confusion matrix and its metrics.
pub fn evaluate<C: PostClassifier + ?Sized>(
    model: &C,
    data: &[LabeledPost],
) -> Result<(ConfusionMatrix, MetricsReport)> {
    let preds = data
        .iter()
        .map(|lp| model.classify(&lp.post))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<u8> = data.iter().map(|lp| lp.label).collect();
    let cm = confusion(&preds, &truth)?;
    Ok((cm, metrics(&cm)))
}

/// Row indices of each fold: a seeded shuffle cut into `k` contiguous
/// blocks, the first `n mod k` of which hold one extra row.
pub fn fold_assignments(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("cannot make {k} folds from {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CVResult {
    pub k: usize,
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    pub per_fold: Vec<MetricsReport>,
    /// Unweighted mean over folds.
    pub mean: MetricsReport,
    /// Sample standard deviation over folds.
    pub std: MetricsReport,
}

/// For each fold, `trainer` sees only the other `k−1` folds (plus a
/// per-fold seed derived from `seed`) and its model is scored on the
/// held-out fold.
pub fn kfold_cv<C, F>(data: &[LabeledPost], k: usize, seed: u64, mut trainer: F) -> Result<CVResult>
where
    C: PostClassifier,
    F: FnMut(&[LabeledPost], u64) -> Result<C>,
{
    let folds = fold_assignments(data.len(), k, seed)?;
    let mut per_fold = Vec::with_capacity(k);
    for (i, held_out) in folds.iter().enumerate() {
        let mut is_test = vec![false; data.len()];
        for &r in held_out {
            is_test[r] = true;
        }
        let train: Vec<LabeledPost> = data
            .iter()
            .zip(&is_test)
            .filter(|(_, &t)| !t)
            .map(|(lp, _)| lp.clone())
            .collect();
        let test: Vec<LabeledPost> = held_out.iter().map(|&r| data[r].clone()).collect();
        let model = trainer(&train, derive_seed(seed, i as u64))?;
        per_fold.push(evaluate(&model, &test)?.1);
    }
    let (mean, std) = aggregate(&per_fold);
    Ok(CVResult {
        k,
        seed,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        per_fold,
        mean,
        std,
    })
}

fn aggregate(reports: &[MetricsReport]) -> (MetricsReport, MetricsReport) {
    let fields: [fn(&MetricsReport) -> f64; 4] = [|r| r.accuracy, |r| r.f1_pos, |r| r.f1_neg, |r| r.f1_macro];
    let n = reports.len() as f64;
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for (j, get) in fields.iter().enumerate() {
        let m = reports.iter().map(get).sum::<f64>() / n;
        let var = if reports.len() > 1 {
            reports.iter().map(|r| (get(r) - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean[j] = m;
        std[j] = var.sqrt();
    }
    let build = |v: [f64; 4]| MetricsReport {
        accuracy: v[0],
        f1_pos: v[1],
        f1_neg: v[2],
        f1_macro: v[3],
    };
    (build(mean), build(std))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
}

/// A fraction as a percentage with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// Entries sorted by accuracy, then F1-macro, both descending; the sort is
/// stable so exact ties keep their input order.
pub fn compare_models(reports: Vec<(String, MetricsReport)>) -> Vec<(String, MetricsReport)> {
    let mut rows = reports;
    rows.sort_by(|a, b| {
        b.1.accuracy
            .total_cmp(&a.1.accuracy)
            .then(b.1.f1_macro.total_cmp(&a.1.f1_macro))
    });
    rows
}

const CSV_HEADER: [&str; 5] = ["model", "accuracy", "f1_macro", "f1_stress", "f1_nonstress"];

fn csv_rows<'a>(rows: impl IntoIterator<Item = (&'a str, &'a MetricsReport)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for (name, r) in rows {
        w.write_record([
            name.to_owned(),
            pct(r.accuracy),
            pct(r.f1_macro),
            pct(r.f1_pos),
            pct(r.f1_neg),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

fn text_rows<'a>(rows: impl IntoIterator<Item = (&'a str, &'a MetricsReport)>) -> String {
    let rows: Vec<_> = rows.into_iter().collect();
    let width = rows.iter().map(|(n, _)| n.len()).chain([5]).max().unwrap_or(5);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>9}  {:>12}\n",
        "Model", "Accuracy", "F1-macro", "F1-stress", "F1-nonstress"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>9}  {:>12}",
            name,
            pct(r.accuracy),
            pct(r.f1_macro),
            pct(r.f1_pos),
            pct(r.f1_neg)
        );
    }
    out
}

pub fn render_leaderboard(rows: &[(String, MetricsReport)], format: ReportFormat) -> String {
    let it = rows.iter().map(|(n, r)| (n.as_str(), r));
    match format {
        ReportFormat::Text => text_rows(it),
        ReportFormat::Csv => csv_rows(it),
    }
}

pub fn render_metrics(
    name: &str,
    report: &MetricsReport,
    cm: Option<&ConfusionMatrix>,
    format: ReportFormat,
) -> String {
    let mut out = render_leaderboard(&[(name.to_owned(), *report)], format);
    if let (Some(cm), ReportFormat::Text) = (cm, format) {
        let _ = writeln!(
            out,
            "confusion: tp={} fp={} fn={} tn={}",
            cm.true_pos, cm.false_pos, cm.false_neg, cm.true_neg
        );
    }
    out
}

/// One row per fold, then `mean` and `std` rows.
pub fn render_cv(name: &str, cv: &CVResult, format: ReportFormat) -> String {
    let mut rows: Vec<(String, MetricsReport)> = cv
        .per_fold
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("{name} fold {}", i + 1), *r))
        .collect();
    rows.push((format!("{name} mean"), cv.mean));
    rows.push((format!("{name} std"), cv.std));
    render_leaderboard(&rows, format)
}
