//! Labeled and unlabeled post datasets: loading, splitting, statistics and
//! majority-vote ground truth.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::TokenizedDoc;
use crate::util::seeded_rng;

/// A social-media post.
#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub post_id: String,
    /// Subreddit or category name.
    pub domain: String,
    pub body: String,
    /// Seconds since the Unix epoch.
    pub created_at: i64,
    /// Precomputed numeric columns, in declaration order.
    pub aux_features: Vec<(String, f64)>,
}

impl Post {
    pub fn new(post_id: impl Into<String>, domain: impl Into<String>, body: impl Into<String>) -> Self {
        Post {
            post_id: post_id.into(),
            domain: domain.into(),
            body: body.into(),
            created_at: 0,
            aux_features: Vec::new(),
        }
    }

    pub fn aux(&self, name: &str) -> Option<f64> {
        self.aux_features.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.post_id.is_empty() {
            return Err(Error::InvalidArgument("post_id must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for (name, _) in &self.aux_features {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "post {}: duplicate aux feature `{name}`",
                    self.post_id
                )));
            }
        }
        Ok(())
    }

    /// One-line JSON form used by replay files and the `posts` topic.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("post serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Post> {
        let post: Post = serde_json::from_str(text)?;
        post.validate()?;
        Ok(post)
    }
}

impl Serialize for Post {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = if self.aux_features.is_empty() { 4 } else { 5 };
        let mut s = serializer.serialize_struct("Post", n)?;
        s.serialize_field("post_id", &self.post_id)?;
        s.serialize_field("domain", &self.domain)?;
        s.serialize_field("body", &self.body)?;
        s.serialize_field("created_at", &self.created_at)?;
        if !self.aux_features.is_empty() {
            let aux: serde_json::Map<String, serde_json::Value> = self
                .aux_features
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::from(*v)))
                .collect();
            s.serialize_field("aux", &aux)?;
        }
        s.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PostWire {
    post_id: String,
    domain: String,
    body: String,
    created_at: i64,
    #[serde(default)]
    aux: Option<serde_json::Map<String, serde_json::Value>>,
}

impl<'de> Deserialize<'de> for Post {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = PostWire::deserialize(deserializer)?;
        let mut aux_features = Vec::new();
        for (name, value) in wire.aux.unwrap_or_default() {
            let v = value
                .as_f64()
                .ok_or_else(|| de::Error::custom(format!("aux `{name}` is not a number")))?;
            aux_features.push((name, v));
        }
        Ok(Post {
            post_id: wire.post_id,
            domain: wire.domain,
            body: wire.body,
            created_at: wire.created_at,
            aux_features,
        })
    }
}

/// A post with its binary stress label (1 = stress).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPost {
    pub post: Post,
    pub label: u8,
    /// Annotator confidence; loaded but never used for training.
    pub confidence: Option<f64>,
}

impl LabeledPost {
    pub fn new(post: Post, label: u8) -> Self {
        LabeledPost {
            post,
            label,
            confidence: None,
        }
    }
}

/// Which numeric columns become aux features.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxColumns {
    #[default]
    None,
    Named(Vec<String>),
    /// Every column not claimed by another role whose values all parse as numbers.
    AllNumeric,
}

/// Column-name configuration for labeled CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub text: String,
    pub label: String,
    pub id: Option<String>,
    pub domain: Option<String>,
    pub timestamp: Option<String>,
    pub confidence: Option<String>,
    pub aux: AuxColumns,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema::dreaddit()
    }
}

impl CsvSchema {
    pub fn minimal(text: &str, label: &str) -> Self {
        CsvSchema {
            text: text.into(),
            label: label.into(),
            id: None,
            domain: None,
            timestamp: None,
            confidence: None,
            aux: AuxColumns::None,
        }
    }

    /// Column names of the public Dreaddit release.
    pub fn dreaddit() -> Self {
        CsvSchema {
            text: "text".into(),
            label: "label".into(),
            id: Some("id".into()),
            domain: Some("subreddit".into()),
            timestamp: Some("social_timestamp".into()),
            confidence: Some("confidence".into()),
            aux: AuxColumns::None,
        }
    }

    /// Optional columns that are absent from the header are ignored, so the
    /// Dreaddit defaults also load minimal files.
    fn resolve(&self, headers: &csv::StringRecord) -> Result<ResolvedSchema> {
        let find = |name: &str| headers.iter().position(|h| h == name);
        let require = |name: &str| {
            find(name).ok_or_else(|| Error::MissingColumn {
                column: name.to_owned(),
            })
        };
        let text = require(&self.text)?;
        let label = require(&self.label)?;
        let id = self.id.as_deref().and_then(find);
        let domain = self.domain.as_deref().and_then(find);
        let timestamp = self.timestamp.as_deref().and_then(find);
        let confidence = self.confidence.as_deref().and_then(find);
        let aux = match &self.aux {
            AuxColumns::None => Vec::new(),
            AuxColumns::Named(names) => {
                let mut seen = HashSet::new();
                let mut cols = Vec::new();
                for n in names {
                    if !seen.insert(n.as_str()) {
                        return Err(Error::Schema(format!("aux column `{n}` listed twice")));
                    }
                    cols.push((n.clone(), require(n)?));
                }
                cols
            }
            AuxColumns::AllNumeric => Vec::new(),
        };
        Ok(ResolvedSchema {
            text,
            label,
            id,
            domain,
            timestamp,
            confidence,
            aux,
        })
    }
}

struct ResolvedSchema {
    text: usize,
    label: usize,
    id: Option<usize>,
    domain: Option<usize>,
    timestamp: Option<usize>,
    confidence: Option<usize>,
    aux: Vec<(String, usize)>,
}

impl ResolvedSchema {
    fn claimed(&self) -> BTreeSet<usize> {
        let mut set: BTreeSet<usize> = [self.text, self.label].into_iter().collect();
        set.extend(self.id);
        set.extend(self.domain);
        set.extend(self.timestamp);
        set.extend(self.confidence);
        set
    }
}

/// Loads labeled posts from an RFC-4180 CSV with a header row.
pub fn load_labeled_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<LabeledPost>> {
    let file = File::open(path.as_ref())?;
    read_labeled_csv(file, schema)
}

pub fn read_labeled_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Vec<LabeledPost>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) if is_empty_input(&e) => return Err(Error::EmptyDataset("CSV file is empty".into())),
        Err(e) => return Err(e.into()),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyDataset("CSV file is empty".into()));
    }
    let mut resolved = schema.resolve(&headers)?;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset("CSV file has a header but no rows".into()));
    }

    if schema.aux == AuxColumns::AllNumeric {
        let claimed = resolved.claimed();
        resolved.aux = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !claimed.contains(i))
            .filter(|(i, _)| {
                rows.iter()
                    .all(|(_, r)| r.get(*i).is_some_and(|v| v.trim().parse::<f64>().is_ok()))
            })
            .map(|(i, h)| (h.to_owned(), i))
            .collect();
        let mut seen = HashSet::new();
        if let Some((dup, _)) = resolved.aux.iter().find(|(n, _)| !seen.insert(n.as_str())) {
            return Err(Error::Schema(format!("duplicate numeric column `{dup}`")));
        }
    }

    rows.iter()
        .enumerate()
        .map(|(idx, (line, rec))| parse_row(idx, *line, rec, &resolved))
        .collect()
}

fn is_empty_input(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof)
}

fn parse_row(idx: usize, line: u64, rec: &csv::StringRecord, s: &ResolvedSchema) -> Result<LabeledPost> {
    let row_err = |message: String| Error::Row { row: line, message };
    let field = |col: usize| rec.get(col).unwrap_or("");

    let label = match field(s.label).trim() {
        "0" => 0,
        "1" => 1,
        other => return Err(row_err(format!("label `{other}` is not 0 or 1"))),
    };
    let post_id = match s.id.map(field) {
        Some(id) if !id.trim().is_empty() => id.trim().to_owned(),
        _ => idx.to_string(),
    };
    let created_at = match s.timestamp.map(field).map(str::trim) {
        None | Some("") => 0,
        Some(ts) => parse_timestamp(ts).ok_or_else(|| row_err(format!("timestamp `{ts}` is not an integer")))?,
    };
    let confidence = match s.confidence.map(field).map(str::trim) {
        None | Some("") => None,
        Some(c) => Some(
            c.parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| row_err(format!("confidence `{c}` is not a real in [0,1]")))?,
        ),
    };
    let mut aux_features = Vec::with_capacity(s.aux.len());
    for (name, col) in &s.aux {
        let raw = field(*col).trim();
        let v = raw
            .parse::<f64>()
            .map_err(|_| row_err(format!("aux column `{name}` value `{raw}` is not numeric")))?;
        aux_features.push((name.clone(), v));
    }
    Ok(LabeledPost {
        post: Post {
            post_id,
            domain: s.domain.map(field).unwrap_or("").to_owned(),
            body: field(s.text).to_owned(),
            created_at,
            aux_features,
        },
        label,
        confidence,
    })
}

fn parse_timestamp(ts: &str) -> Option<i64> {
    if let Ok(v) = ts.parse::<i64>() {
        return Some(v);
    }
    // Some exports write integral timestamps as floats ("1521614353.0").
    let f = ts.parse::<f64>().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

/// Writes labeled posts with columns `id, subreddit, social_timestamp,
/// confidence, text, label` followed by the first post's aux names.
pub fn write_labeled_csv<W: Write>(writer: W, data: &[LabeledPost]) -> Result<()> {
    let aux_names: Vec<String> = data
        .first()
        .map(|lp| lp.post.aux_features.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "subreddit", "social_timestamp", "confidence", "text", "label"];
    header.extend(aux_names.iter().map(String::as_str));
    wtr.write_record(&header)?;
    for lp in data {
        let p = &lp.post;
        let mut rec = vec![
            p.post_id.clone(),
            p.domain.clone(),
            p.created_at.to_string(),
            lp.confidence.map(|c| c.to_string()).unwrap_or_default(),
            p.body.clone(),
            lp.label.to_string(),
        ];
        for name in &aux_names {
            let v = p
                .aux(name)
                .ok_or_else(|| Error::InvalidArgument(format!("post {} lacks aux feature `{name}`", p.post_id)))?;
            rec.push(v.to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Loads posts from JSON Lines, skipping blank lines.
pub fn load_posts_jsonl(path: impl AsRef<Path>) -> Result<Vec<Post>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut posts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let post = Post::from_json(&line).map_err(|e| Error::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        posts.push(post);
    }
    Ok(posts)
}

pub fn write_posts_jsonl<W: Write>(mut writer: W, posts: &[Post]) -> Result<()> {
    for p in posts {
        writeln!(writer, "{}", p.to_json_line())?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPost>,
    pub test: Vec<LabeledPost>,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of training rows for a split: `ratio·n` rounded to nearest,
/// clamped so both sides are non-empty.
pub fn train_size(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n - 1)
}

/// Seeded shuffle, then the first `train_size(n, ratio)` rows go to train.
pub fn split(data: &[LabeledPost], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} not in (0,1)")));
    }
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "split needs at least 2 rows, got {}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let cut = train_size(data.len(), ratio);
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..cut]),
        test: pick(&order[cut..]),
        seed,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub n_posts: usize,
    pub label1_ratio: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
    pub vocab_size: usize,
    pub per_domain_counts: BTreeMap<String, usize>,
    /// Posts whose raw body is empty or whitespace. They are kept, not dropped.
    pub empty_bodies: usize,
}

/// Token-length and vocabulary statistics, measured after `tokenizer`.
pub fn corpus_stats<F>(data: &[LabeledPost], tokenizer: F) -> Result<CorpusStats>
where
    F: Fn(&str) -> TokenizedDoc,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset("corpus_stats needs at least one post".into()));
    }
    let mut vocab = HashSet::new();
    let mut per_domain_counts = BTreeMap::new();
    let (mut min_len, mut max_len, mut total_len) = (usize::MAX, 0, 0usize);
    let mut positives = 0;
    let mut empty_bodies = 0;
    for lp in data {
        let doc = tokenizer(&lp.post.body);
        min_len = min_len.min(doc.len());
        max_len = max_len.max(doc.len());
        total_len += doc.len();
        vocab.extend(doc.tokens);
        *per_domain_counts.entry(lp.post.domain.clone()).or_insert(0) += 1;
        positives += usize::from(lp.label == 1);
        empty_bodies += usize::from(lp.post.body.trim().is_empty());
    }
    let n = data.len();
    Ok(CorpusStats {
        n_posts: n,
        label1_ratio: positives as f64 / n as f64,
        min_len,
        max_len,
        mean_len: total_len as f64 / n as f64,
        vocab_size: vocab.len(),
        per_domain_counts,
        empty_bodies,
    })
}

/// Independent labels for one post from an odd number (≥ 3) of raters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub post_id: String,
    pub rater_labels: Vec<u8>,
}

pub fn majority_label(ann: &AnnotationSet) -> Result<u8> {
    let n = ann.rater_labels.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "post {}: need an odd number of raters >= 3, got {n}",
            ann.post_id
        )));
    }
    if let Some(bad) = ann.rater_labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!(
            "post {}: rater label {bad} is not 0 or 1",
            ann.post_id
        )));
    }
    let ones = ann.rater_labels.iter().filter(|&&l| l == 1).count();
    Ok(u8::from(ones * 2 > n))
}

/// Reads `post_id, <rater columns...>` rows; every non-id column is a rater.
pub fn load_annotations_csv(path: impl AsRef<Path>) -> Result<Vec<AnnotationSet>> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "post_id")
        .ok_or_else(|| Error::MissingColumn {
            column: "post_id".into(),
        })?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut labels = Vec::new();
        for (i, v) in rec.iter().enumerate() {
            if i == id_col {
                continue;
            }
            labels.push(match v.trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Row {
                        row: line,
                        message: format!("rater label `{other}` is not 0 or 1"),
                    })
                }
            });
        }
        out.push(AnnotationSet {
            post_id: rec[id_col].to_owned(),
            rater_labels: labels,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{preprocess, StopwordList};
    use proptest::prelude::*;

    fn lp(id: &str, label: u8) -> LabeledPost {
        LabeledPost::new(Post::new(id, "anxiety", format!("body of {id}")), label)
    }

    #[test]
    fn five_row_csv() {
        let csv = "text,label\na b c,1\nd e,0\nf,1\ng,1\nh,0\n";
        let data = read_labeled_csv(csv.as_bytes(), &CsvSchema::minimal("text", "label")).unwrap();
        assert_eq!(data.len(), 5);
        assert_eq!(data[0].post.post_id, "0");
        assert_eq!(data[4].post.post_id, "4");
        let stats = corpus_stats(&data, crate::textprep::tokenize).unwrap();
        assert!((stats.label1_ratio - 0.6).abs() < 1e-12);
    }

    #[test]
    fn missing_label_column() {
        let csv = "text,other\nhello,1\n";
        match read_labeled_csv(csv.as_bytes(), &CsvSchema::minimal("text", "label")) {
            Err(Error::MissingColumn { column }) => assert_eq!(column, "label"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_label_reports_row() {
        let csv = "text,label\nok,1\nbad,2\n";
        match read_labeled_csv(csv.as_bytes(), &CsvSchema::minimal("text", "label")) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let schema = CsvSchema::minimal("text", "label");
        assert!(matches!(
            read_labeled_csv("".as_bytes(), &schema),
            Err(Error::EmptyDataset(_))
        ));
        assert!(matches!(
            read_labeled_csv("text,label\n".as_bytes(), &schema),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn all_numeric_aux_columns() {
        let csv = "id,subreddit,text,label,confidence,lex_a,note,lex_b\n\
                   x1,ptsd,hi there,1,0.8,1.5,n/a,2\n\
                   x2,anxiety,yo,0,,2.5,hmm,-1e3\n";
        let mut schema = CsvSchema::dreaddit();
        schema.aux = AuxColumns::AllNumeric;
        let data = read_labeled_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(
            data[0].post.aux_features,
            vec![("lex_a".to_string(), 1.5), ("lex_b".to_string(), 2.0)]
        );
        assert_eq!(data[1].post.aux("lex_b"), Some(-1000.0));
        assert_eq!(data[0].confidence, Some(0.8));
        assert_eq!(data[1].confidence, None);
        assert_eq!(data[1].post.domain, "anxiety");
    }

    #[test]
    fn empty_body_is_kept_and_flagged() {
        let csv = "text,label\n,1\nsome words here,0\n";
        let data = read_labeled_csv(csv.as_bytes(), &CsvSchema::minimal("text", "label")).unwrap();
        assert_eq!(data.len(), 2);
        let stats = corpus_stats(&data, crate::textprep::tokenize).unwrap();
        assert_eq!(stats.empty_bodies, 1);
        assert_eq!(stats.min_len, 0);
    }

    #[test]
    fn jsonl_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"post_id":"a","domain":"ptsd","body":"x","created_at":1}"#,
                "\n",
                "\n",
                r#"{"post_id":"b","domain":"ptsd","body":"y","created_at":2,"aux":{"z":1.5,"a":2}}"#,
                "\n",
                r#"{"post_id":"c","domain":"ptsd","body":"z","created_at":3}"#,
                "\n",
            ),
        )
        .unwrap();
        let posts = load_posts_jsonl(&path).unwrap();
        assert_eq!(posts.len(), 3);
        assert_eq!(posts[1].aux_features, vec![("z".into(), 1.5), ("a".into(), 2.0)]);

        std::fs::write(&path, "").unwrap();
        assert!(load_posts_jsonl(&path).unwrap().is_empty());

        std::fs::write(
            &path,
            concat!(
                r#"{"post_id":"a","domain":"d","body":"x","created_at":1}"#,
                "\n",
                "{not json\n"
            ),
        )
        .unwrap();
        match load_posts_jsonl(&path) {
            Err(Error::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let data: Vec<_> = (0..10).map(|i| lp(&format!("p{i}"), (i % 2) as u8)).collect();
        let a = split(&data, 0.8, 7).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        let b = split(&data, 0.8, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(train_size(3553, 0.8), 2842);
        assert!(split(&data[..1], 0.8, 1).is_err());
        assert!(split(&data, 1.0, 1).is_err());
    }

    #[test]
    fn stats_single_post() {
        let data = vec![LabeledPost::new(Post::new("1", "d", "a a b"), 1)];
        let stats = corpus_stats(&data, |t| {
            crate::textprep::TokenizedDoc::new(t.split_whitespace().map(str::to_owned).collect())
        })
        .unwrap();
        assert_eq!((stats.n_posts, stats.max_len, stats.vocab_size), (1, 3, 2));
        assert!(corpus_stats(&[], crate::textprep::tokenize).is_err());
    }

    #[test]
    fn majority_votes() {
        let ann = |v: &[u8]| AnnotationSet {
            post_id: "p".into(),
            rater_labels: v.to_vec(),
        };
        assert_eq!(majority_label(&ann(&[1, 1, 0])).unwrap(), 1);
        assert_eq!(majority_label(&ann(&[0, 0, 0])).unwrap(), 0);
        assert!(majority_label(&ann(&[1, 0, 1, 0])).is_err());
        assert!(majority_label(&ann(&[1, 0])).is_err());
    }

    fn arb_labeled() -> impl Strategy<Value = Vec<LabeledPost>> {
        let row = (
            "[a-z0-9]{1,8}",
            "[a-z]{0,6}",
            "\\PC{0,40}",
            any::<i32>(),
            proptest::option::of(0.0f64..=1.0),
            any::<bool>(),
            -1e6f64..1e6,
            -1e6f64..1e6,
        );
        proptest::collection::vec(row, 1..12).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (id, dom, body, ts, conf, label, a, b))| LabeledPost {
                    post: Post {
                        post_id: format!("{id}{i}"),
                        domain: dom,
                        body,
                        created_at: ts as i64,
                        aux_features: vec![("liwc_a".into(), a), ("liwc_b".into(), b)],
                    },
                    label: u8::from(label),
                    confidence: conf,
                })
                .collect()
        })
    }

    fn brute_force_vocab(data: &[LabeledPost], sw: &StopwordList) -> usize {
        let mut all: Vec<String> = Vec::new();
        for lp in data {
            for t in preprocess(&lp.post.body, sw).tokens {
                if !all.contains(&t) {
                    all.push(t);
                }
            }
        }
        all.len()
    }

    proptest! {
        #[test]
        fn csv_round_trip(data in arb_labeled()) {
            let mut buf = Vec::new();
            write_labeled_csv(&mut buf, &data).unwrap();
            let mut schema = CsvSchema::dreaddit();
            schema.aux = AuxColumns::Named(vec!["liwc_a".into(), "liwc_b".into()]);
            let back = read_labeled_csv(buf.as_slice(), &schema).unwrap();
            prop_assert_eq!(back, data);
        }

        #[test]
        fn split_partitions_input(n in 2usize..60, ratio in 0.05f64..0.95, seed in any::<u64>()) {
            let data: Vec<_> = (0..n).map(|i| lp(&format!("p{i}"), (i % 2) as u8)).collect();
            let s = split(&data, ratio, seed).unwrap();
            let train: HashSet<_> = s.train.iter().map(|p| p.post.post_id.clone()).collect();
            let test: HashSet<_> = s.test.iter().map(|p| p.post.post_id.clone()).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), n);
            let frac = s.train.len() as f64 / n as f64;
            prop_assert!((frac - ratio).abs() <= 1.0 / n as f64 + 1e-12);
        }

        #[test]
        fn majority_is_permutation_invariant(labels in proptest::collection::vec(0u8..2, 1..5usize), seed in any::<u64>()) {
            let mut labels = labels;
            if labels.len() % 2 == 0 { labels.push(1); }
            if labels.len() < 3 { labels.extend([0, 1]); }
            let a = AnnotationSet { post_id: "p".into(), rater_labels: labels.clone() };
            let mut shuffled = labels;
            shuffled.shuffle(&mut seeded_rng(seed));
            let b = AnnotationSet { post_id: "p".into(), rater_labels: shuffled };
            prop_assert_eq!(majority_label(&a).unwrap(), majority_label(&b).unwrap());
        }

        #[test]
        fn vocab_matches_brute_force(bodies in proptest::collection::vec("[a-zA-Z ]{0,60}", 1..40)) {
            let sw = StopwordList::builtin();
            let data: Vec<_> = bodies
                .into_iter()
                .enumerate()
                .map(|(i, b)| LabeledPost::new(Post::new(i.to_string(), "d", b), 0))
                .collect();
            let stats = corpus_stats(&data, |t| preprocess(t, &sw)).unwrap();
            prop_assert_eq!(stats.vocab_size, brute_force_vocab(&data, &sw));
        }
    }
}
