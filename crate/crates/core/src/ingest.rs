//! Post sources feeding the `posts` topic: JSONL replay, in-memory and
//! synthetic posts, and a placeholder for a live Reddit poller.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{LabeledPost, Post};
use crate::error::{Error, Result};
use crate::mqlog::Topic;
use crate::util::seeded_rng;

/// A pull-based stream of posts. Once `is_exhausted` is true, `next_post`
/// returns `None` forever. Implementations must not block indefinitely.
pub trait SourceAdapter {
    fn next_post(&mut self) -> Option<Post>;
    fn is_exhausted(&self) -> bool;
    /// Input items skipped because they did not parse.
    fn malformed(&self) -> usize {
        0
    }
}

/// Posts from a JSONL file, one per line. Blank lines are ignored;
/// lines that fail to parse are skipped, logged and counted.
#[derive(Debug)]
pub struct ReplaySource {
    path: PathBuf,
    lines: Option<std::io::Lines<BufReader<File>>>,
    line_no: usize,
    looping: bool,
    yielded_this_pass: usize,
    malformed: usize,
    exhausted: bool,
}

impl ReplaySource {
    /// With `looping`, the file restarts at EOF; a pass that yields no
    /// post ends the source.
    pub fn open(path: impl AsRef<Path>, looping: bool) -> Result<Self> {
        let path = path.as_ref().to_owned();
        let lines = BufReader::new(File::open(&path)?).lines();
        Ok(ReplaySource {
            path,
            lines: Some(lines),
            line_no: 0,
            looping,
            yielded_this_pass: 0,
            malformed: 0,
            exhausted: false,
        })
    }
}

impl SourceAdapter for ReplaySource {
    fn next_post(&mut self) -> Option<Post> {
        while !self.exhausted {
            let Some(lines) = self.lines.as_mut() else {
                self.exhausted = true;
                break;
            };
            match lines.next() {
                Some(Ok(line)) => {
                    self.line_no += 1;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match Post::from_json(&line) {
                        Ok(post) => {
                            self.yielded_this_pass += 1;
                            return Some(post);
                        }
                        Err(e) => {
                            self.malformed += 1;
                            log::warn!("{}:{}: skipping malformed post: {e}", self.path.display(), self.line_no);
                        }
                    }
                }
                Some(Err(e)) => {
                    log::warn!("{}: read error, stopping replay: {e}", self.path.display());
                    self.exhausted = true;
                }
                None => {
                    if self.looping && self.yielded_this_pass > 0 {
                        self.yielded_this_pass = 0;
                        self.line_no = 0;
                        self.lines = File::open(&self.path).ok().map(|f| BufReader::new(f).lines());
                    } else {
                        self.exhausted = true;
                    }
                }
            }
        }
        None
    }

    fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    fn malformed(&self) -> usize {
        self.malformed
    }
}

/// Posts held in memory.
#[derive(Debug, Clone, Default)]
pub struct VecSource {
    posts: VecDeque<Post>,
}

impl VecSource {
    pub fn new(posts: impl IntoIterator<Item = Post>) -> Self {
        VecSource {
            posts: posts.into_iter().collect(),
        }
    }
}

impl SourceAdapter for VecSource {
    fn next_post(&mut self) -> Option<Post> {
        self.posts.pop_front()
    }

    fn is_exhausted(&self) -> bool {
        self.posts.is_empty()
    }
}

/// Stand-in for a live Reddit API poller.
///
/// A real adapter would poll the listing endpoint of each configured
/// subreddit, map every new submission to a [`Post`] (id, subreddit,
/// title + selftext, `created_utc`) and remember the newest id seen so
/// polls do not repeat. Network access is deliberately left out of this
/// crate; this stub is exhausted from the start.
#[derive(Debug, Clone, Default)]
pub struct RedditStub {
    pub subreddits: Vec<String>,
}

impl SourceAdapter for RedditStub {
    fn next_post(&mut self) -> Option<Post> {
        None
    }

    fn is_exhausted(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Unthrottled,
    /// Post `i` is appended `i / rate` seconds after the first.
    PerSecond(f64),
}

impl Rate {
    pub fn validate(self) -> Result<Self> {
        match self {
            Rate::PerSecond(r) if !(r.is_finite() && r > 0.0) => {
                Err(Error::InvalidArgument(format!("rate must be positive, got {r}")))
            }
            ok => Ok(ok),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub path: PathBuf,
    pub rate: Rate,
    pub looping: bool,
    /// Stop after this many posts; required in practice when looping.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplaySummary {
    pub appended: usize,
    pub malformed: usize,
}

/// Appends every post from `source` to `topic` (key = post id), paced by
/// `rate`, until the source is exhausted, `limit` is reached or `stop` is set.
pub fn pump<S: SourceAdapter + ?Sized>(
    source: &mut S,
    topic: &Topic,
    rate: Rate,
    limit: Option<usize>,
    stop: Option<&AtomicBool>,
) -> Result<ReplaySummary> {
    let rate = rate.validate()?;
    let start = Instant::now();
    let mut appended = 0usize;
    while limit.is_none_or(|l| appended < l) {
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            break;
        }
        let Some(post) = source.next_post() else {
            break;
        };
        if let Rate::PerSecond(r) = rate {
            let due = start + Duration::from_secs_f64(appended as f64 / r);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        topic.append_keyed(Some(post.post_id.as_bytes()), post.to_json_line().as_bytes())?;
        appended += 1;
    }
    Ok(ReplaySummary {
        appended,
        malformed: source.malformed(),
    })
}

pub fn replay(cfg: &ReplayConfig, topic: &Topic) -> Result<ReplaySummary> {
    let mut source = ReplaySource::open(&cfg.path, cfg.looping)?;
    pump(&mut source, topic, cfg.rate, cfg.limit, None)
}

const STRESS_WORDS: &[&str] = &[
    "anxious",
    "panic",
    "scared",
    "overwhelmed",
    "terrified",
    "hopeless",
    "exhausted",
    "worried",
    "nightmare",
    "crying",
    "afraid",
    "trapped",
    "desperate",
    "broke",
    "debt",
    "evicted",
    "abusive",
    "threatened",
    "insomnia",
    "flashbacks",
    "trauma",
    "shaking",
    "helpless",
    "lonely",
    "alone",
    "angry",
    "pressure",
    "deadline",
    "fired",
    "bills",
    "screaming",
    "hurt",
    "sick",
    "failing",
    "struggling",
    "dread",
    "tense",
    "miserable",
    "ashamed",
    "numb",
];

const CALM_WORDS: &[&str] = &[
    "grateful",
    "relaxed",
    "happy",
    "peaceful",
    "excited",
    "proud",
    "thankful",
    "sunny",
    "garden",
    "recipe",
    "hiking",
    "vacation",
    "celebrate",
    "cozy",
    "laughing",
    "friendly",
    "enjoyed",
    "calm",
    "wonderful",
    "healthy",
    "rested",
    "promotion",
    "savings",
    "beach",
    "puppy",
    "music",
    "painting",
    "festival",
    "smiling",
    "delicious",
    "comfortable",
    "hopeful",
    "cheerful",
    "content",
    "playful",
    "bright",
    "lovely",
    "gentle",
    "kind",
    "blessed",
];

const NEUTRAL_WORDS: &[&str] = &[
    "today", "work", "week", "people", "friend", "family", "house", "time", "school", "morning", "night", "money",
    "car", "phone", "dinner", "weekend", "city", "told", "went", "year",
];

const DOMAINS: &[&str] = &["anxiety", "ptsd", "relationships", "domesticviolence", "almosthomeless"];

/// `n` labeled posts with ids `synth-0 … synth-(n−1)`. Exactly
/// `round(n·stress_ratio)` are stress posts, at seeded positions. Stress
/// and calm posts draw their signal words from disjoint pools, mixed with
/// shared neutral words.
pub fn synth_generate(n: usize, seed: u64, stress_ratio: f64) -> Vec<LabeledPost> {
    let ratio = stress_ratio.clamp(0.0, 1.0);
    let mut rng = seeded_rng(seed);
    let n_stress = ((n as f64) * ratio).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_stress)).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let pool = if label == 1 { STRESS_WORDS } else { CALM_WORDS };
            let len = rng.gen_range(8..=20);
            let mut words = Vec::with_capacity(len + 2);
            for _ in 0..len {
                let w = if rng.gen_bool(0.6) {
                    pool.choose(&mut rng)
                } else {
                    NEUTRAL_WORDS.choose(&mut rng)
                };
                words.push(*w.expect("non-empty pool"));
            }
            let mut body = words.join(" ");
            if rng.gen_bool(0.2) {
                body.push_str("!!");
            }
            if rng.gen_bool(0.1) {
                body.push_str(" https://example.com/x");
            }
            let domain = DOMAINS.choose(&mut rng).expect("non-empty");
            let mut post = Post::new(format!("synth-{i}"), *domain, body);
            post.created_at = 1_500_000_000 + 60 * i as i64;
            LabeledPost::new(post, label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn synth_properties() {
        assert!(synth_generate(0, 1, 0.5).is_empty());
        let a = synth_generate(1000, 7, 0.5);
        assert_eq!(a, synth_generate(1000, 7, 0.5));
        assert_ne!(a, synth_generate(1000, 8, 0.5));
        let stress = a.iter().filter(|p| p.label == 1).count();
        assert!((450..=550).contains(&stress));
        assert_eq!(a[999].post.post_id, "synth-999");
        for lp in &a {
            let foreign = if lp.label == 1 { CALM_WORDS } else { STRESS_WORDS };
            assert!(lp.post.body.split_whitespace().all(|w| !foreign.contains(&w)));
        }
    }

    #[test]
    fn pools_are_disjoint() {
        for w in STRESS_WORDS {
            assert!(!CALM_WORDS.contains(w) && !NEUTRAL_WORDS.contains(w), "{w}");
        }
        for w in CALM_WORDS {
            assert!(!NEUTRAL_WORDS.contains(w), "{w}");
        }
    }

    #[test]
    fn replay_skips_malformed_and_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posts.jsonl");
        let mut f = File::create(&path).unwrap();
        for i in 0..5 {
            writeln!(f, "{}", Post::new(format!("p{i}"), "d", "body text").to_json_line()).unwrap();
            if i == 2 {
                writeln!(f, "{{not json").unwrap();
                writeln!(f).unwrap();
            }
        }
        drop(f);
        let topic = crate::mqlog::open_topic(dir.path(), "posts").unwrap();
        let cfg = ReplayConfig {
            path: path.clone(),
            rate: Rate::Unthrottled,
            looping: false,
            limit: None,
        };
        let s = replay(&cfg, &topic).unwrap();
        assert_eq!(
            s,
            ReplaySummary {
                appended: 5,
                malformed: 1
            }
        );
        let recs = topic.read(0, 10).unwrap();
        let ids: Vec<String> = recs
            .iter()
            .map(|r| {
                Post::from_json(std::str::from_utf8(&r.payload).unwrap())
                    .unwrap()
                    .post_id
            })
            .collect();
        assert_eq!(ids, ["p0", "p1", "p2", "p3", "p4"]);
        assert_eq!(recs[0].key.as_deref(), Some(&b"p0"[..]));

        let looped = ReplayConfig {
            looping: true,
            limit: Some(12),
            ..cfg
        };
        assert_eq!(replay(&looped, &topic).unwrap().appended, 12);
    }

    #[test]
    fn empty_file_and_stub() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        File::create(&path).unwrap();
        let topic = crate::mqlog::open_topic(dir.path(), "posts").unwrap();
        let cfg = ReplayConfig {
            path,
            rate: Rate::Unthrottled,
            looping: true,
            limit: None,
        };
        assert_eq!(replay(&cfg, &topic).unwrap().appended, 0);
        let mut stub = RedditStub::default();
        assert!(stub.is_exhausted());
        assert!(stub.next_post().is_none());
    }

    #[test]
    fn throttled_spacing() {
        let dir = tempfile::tempdir().unwrap();
        let topic = crate::mqlog::open_topic(dir.path(), "posts").unwrap();
        let mut src = VecSource::new((0..6).map(|i| Post::new(format!("p{i}"), "d", "x y")));
        let t0 = Instant::now();
        pump(&mut src, &topic, Rate::PerSecond(50.0), None, None).unwrap();
        let el = t0.elapsed().as_secs_f64();
        assert!((0.09..0.3).contains(&el), "{el}");
        assert!(Rate::PerSecond(0.0).validate().is_err());
    }
}
