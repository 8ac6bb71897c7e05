//! Embedded append-only topic log with committed consumer offsets.
//!
//! On-disk layout, little-endian throughout:
//!
//! ```text
//! <root>/<topic>/<base offset, 20 digits>.log
//!     frame* where frame = u32 payload_len | u32 crc32(payload) | u8 key_flag
//!                          | [u32 key_len | key]  (only if key_flag = 1)
//!                          | payload
//! <root>/<topic>/groups/<group>.offset     ASCII decimal + "\n"
//! ```
//!
//! One topic is one partition. Appends serialize on a mutex; reads take a
//! short read lock to locate frames and then read without holding it.
//! A topic directory must be owned by one process at a time.
//!
//! `appended_at` is not part of the frame. Records appended by this
//! process carry their append time; records recovered on open carry the
//! segment file's modification time.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::util::now_millis;

pub const MAX_PAYLOAD: usize = 1 << 20;
pub const DEFAULT_SEGMENT_BYTES: u64 = 64 << 20;
const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub offset: u64,
    pub appended_at: i64,
    pub key: Option<Vec<u8>>,
    pub payload: Vec<u8>,
}

/// When appended frames are forced to stable storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushPolicy {
    /// `fsync` before every append returns.
    EveryRecord,
    /// `fsync` once `max_records` are pending or `max_delay` has passed
    /// since the last flush. A crash may lose everything after the last flush.
    Batched { max_records: usize, max_delay: Duration },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopicConfig {
    pub segment_max_bytes: u64,
    pub flush: FlushPolicy,
}

impl Default for TopicConfig {
    fn default() -> Self {
        TopicConfig {
            segment_max_bytes: DEFAULT_SEGMENT_BYTES,
            flush: FlushPolicy::EveryRecord,
        }
    }
}

/// Topic and group names: `[a-z0-9_-]{1,64}`.
pub fn validate_name(name: &str) -> Result<()> {
    let ok = (1..=64).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidName(name.to_owned()))
    }
}

fn segment_path(dir: &Path, base: u64) -> PathBuf {
    dir.join(format!("{base:020}.log"))
}

pub fn encode_frame(key: Option<&[u8]>, payload: &[u8]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 + key.map_or(0, <[u8]>::len) + payload.len());
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    match key {
        Some(k) => {
            buf.push(1);
            buf.extend_from_slice(&(k.len() as u32).to_le_bytes());
            buf.extend_from_slice(k);
        }
        None => buf.push(0),
    }
    buf.extend_from_slice(payload);
    buf
}

/// A frame decoded from the front of `buf`: `(key, payload, frame_len)`.
type Decoded<'a> = (Option<&'a [u8]>, &'a [u8], usize);

/// Why a frame could not be decoded.
enum FrameFault {
    /// Fewer bytes than the frame declares.
    Short,
    Invalid(String),
}

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().expect("4 bytes"))
}

fn decode_frame(buf: &[u8]) -> std::result::Result<Decoded<'_>, FrameFault> {
    if buf.len() < HEADER_LEN {
        return Err(FrameFault::Short);
    }
    let len = u32_at(buf, 0) as usize;
    let crc = u32_at(buf, 4);
    if len > MAX_PAYLOAD {
        return Err(FrameFault::Invalid(format!("payload length {len} exceeds limit")));
    }
    let (key, body_at) = match buf[8] {
        0 => (None, HEADER_LEN),
        1 => {
            if buf.len() < HEADER_LEN + 4 {
                return Err(FrameFault::Short);
            }
            let klen = u32_at(buf, HEADER_LEN) as usize;
            let start = HEADER_LEN + 4;
            if buf.len() < start + klen {
                return Err(FrameFault::Short);
            }
            (Some(&buf[start..start + klen]), start + klen)
        }
        f => return Err(FrameFault::Invalid(format!("bad key flag {f}"))),
    };
    if buf.len() < body_at + len {
        return Err(FrameFault::Short);
    }
    let payload = &buf[body_at..body_at + len];
    if crc32fast::hash(payload) != crc {
        return Err(FrameFault::Invalid("payload CRC mismatch".into()));
    }
    Ok((key, payload, body_at + len))
}

#[derive(Debug)]
struct Segment {
    base: u64,
    path: PathBuf,
    file: Arc<File>,
    /// Byte position of each frame.
    positions: Vec<u64>,
    size: u64,
}

#[derive(Debug, Default)]
struct Index {
    segments: Vec<Segment>,
    appended_at: Vec<i64>,
    next_offset: u64,
}

#[derive(Debug)]
struct Writer {
    file: File,
    pending: usize,
    last_flush: Instant,
}

#[derive(Debug)]
pub struct Topic {
    name: String,
    dir: PathBuf,
    config: TopicConfig,
    index: RwLock<Index>,
    writer: Mutex<Writer>,
}

pub fn open_topic(root: impl AsRef<Path>, name: &str) -> Result<Topic> {
    Topic::open(root, name, TopicConfig::default())
}

impl Topic {
    /// Opens or creates `<root>/<name>`, validating every frame. A damaged
    /// final frame of the last segment is truncated away; damage anywhere
    /// else is an error.
    pub fn open(root: impl AsRef<Path>, name: &str, config: TopicConfig) -> Result<Topic> {
        validate_name(name)?;
        if config.segment_max_bytes == 0 {
            return Err(Error::InvalidArgument("segment_max_bytes must be positive".into()));
        }
        let dir = root.as_ref().join(name);
        fs::create_dir_all(dir.join("groups"))?;

        let mut bases = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if path.extension().and_then(|e| e.to_str()) == Some("log") && stem.len() == 20 {
                if let Ok(base) = stem.parse::<u64>() {
                    bases.push(base);
                }
            }
        }
        bases.sort_unstable();

        let mut index = Index::default();
        let last = bases.len().checked_sub(1);
        for (i, &base) in bases.iter().enumerate() {
            let path = segment_path(&dir, base);
            if base != index.next_offset {
                return Err(Error::CorruptSegment {
                    segment: path,
                    position: 0,
                    message: format!("base offset {base} but {} records precede it", index.next_offset),
                });
            }
            let seg = recover_segment(&path, base, Some(i) == last)?;
            let mtime = fs::metadata(&path)?
                .modified()
                .ok()
                .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
                .map_or(0, |d| d.as_millis() as i64);
            index.next_offset += seg.positions.len() as u64;
            index
                .appended_at
                .extend(std::iter::repeat_n(mtime, seg.positions.len()));
            index.segments.push(seg);
        }
        if index.segments.is_empty() {
            index.segments.push(create_segment(&dir, 0)?);
        }
        let active = &index.segments[index.segments.len() - 1];
        let file = OpenOptions::new().append(true).open(&active.path)?;
        Ok(Topic {
            name: name.to_owned(),
            dir,
            config,
            index: RwLock::new(index),
            writer: Mutex::new(Writer {
                file,
                pending: 0,
                last_flush: Instant::now(),
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn next_offset(&self) -> u64 {
        self.index.read().expect("index lock").next_offset
    }

    pub fn segment_paths(&self) -> Vec<PathBuf> {
        let index = self.index.read().expect("index lock");
        index.segments.iter().map(|s| s.path.clone()).collect()
    }

    pub fn append(&self, payload: &[u8]) -> Result<u64> {
        self.append_keyed(None, payload)
    }

    /// Appends one record and returns its offset. Under
    /// [`FlushPolicy::EveryRecord`] the record is on stable storage when
    /// this returns.
    pub fn append_keyed(&self, key: Option<&[u8]>, payload: &[u8]) -> Result<u64> {
        if payload.len() > MAX_PAYLOAD {
            return Err(Error::Oversize {
                len: payload.len(),
                max: MAX_PAYLOAD,
            });
        }
        if key.is_some_and(|k| k.len() > MAX_PAYLOAD) {
            return Err(Error::Oversize {
                len: key.map_or(0, <[u8]>::len),
                max: MAX_PAYLOAD,
            });
        }
        let frame = encode_frame(key, payload);
        let mut writer = self.writer.lock().expect("writer lock");

        let (active_size, next_offset) = {
            let index = self.index.read().expect("index lock");
            (index.segments.last().expect("active segment").size, index.next_offset)
        };
        if active_size > 0 && active_size + frame.len() as u64 > self.config.segment_max_bytes {
            self.sync(&mut writer)?;
            let seg = create_segment(&self.dir, next_offset)?;
            writer.file = OpenOptions::new().append(true).open(&seg.path)?;
            self.index.write().expect("index lock").segments.push(seg);
        }
        let position = self
            .index
            .read()
            .expect("index lock")
            .segments
            .last()
            .expect("active")
            .size;

        if let Err(e) = writer.file.write_all(&frame) {
            // Drop any partial frame so later appends stay aligned.
            let _ = writer.file.set_len(position);
            return Err(e.into());
        }
        writer.pending += 1;
        let due = match self.config.flush {
            FlushPolicy::EveryRecord => true,
            FlushPolicy::Batched { max_records, max_delay } => {
                writer.pending >= max_records.max(1) || writer.last_flush.elapsed() >= max_delay
            }
        };
        if due {
            if let Err(e) = self.sync(&mut writer) {
                let _ = writer.file.set_len(position);
                return Err(e);
            }
        }

        let mut index = self.index.write().expect("index lock");
        let seg = index.segments.last_mut().expect("active segment");
        seg.positions.push(position);
        seg.size = position + frame.len() as u64;
        index.appended_at.push(now_millis() as i64);
        let offset = index.next_offset;
        index.next_offset += 1;
        Ok(offset)
    }

    fn sync(&self, writer: &mut Writer) -> Result<()> {
        if writer.pending > 0 {
            writer.file.sync_data()?;
            writer.pending = 0;
        }
        writer.last_flush = Instant::now();
        Ok(())
    }

    /// Forces pending appends to stable storage.
    pub fn flush(&self) -> Result<()> {
        let mut writer = self.writer.lock().expect("writer lock");
        self.sync(&mut writer)
    }

    /// Up to `max_records` records starting at `from`. Reading at
    /// `next_offset` yields an empty list.
    pub fn read(&self, from: u64, max_records: usize) -> Result<Vec<Record>> {
        struct Span {
            file: Arc<File>,
            path: PathBuf,
            start: u64,
            end: u64,
            offset: u64,
            appended_at: i64,
        }
        let spans = {
            let index = self.index.read().expect("index lock");
            if from > index.next_offset {
                return Err(Error::OffsetOutOfRange {
                    offset: from,
                    next: index.next_offset,
                });
            }
            let end = index.next_offset.min(from.saturating_add(max_records as u64));
            let mut spans = Vec::with_capacity((end - from) as usize);
            let mut seg_i = index.segments.partition_point(|s| s.base <= from).saturating_sub(1);
            for offset in from..end {
                while offset >= index.segments[seg_i].base + index.segments[seg_i].positions.len() as u64 {
                    seg_i += 1;
                }
                let seg = &index.segments[seg_i];
                let local = (offset - seg.base) as usize;
                let start = seg.positions[local];
                let stop = seg.positions.get(local + 1).copied().unwrap_or(seg.size);
                spans.push(Span {
                    file: Arc::clone(&seg.file),
                    path: seg.path.clone(),
                    start,
                    end: stop,
                    offset,
                    appended_at: index.appended_at[offset as usize],
                });
            }
            spans
        };
        spans
            .into_iter()
            .map(|s| {
                let mut buf = vec![0u8; (s.end - s.start) as usize];
                read_exact_at(&s.file, &mut buf, s.start)?;
                let (key, payload, _) = decode_frame(&buf).map_err(|f| Error::CorruptSegment {
                    segment: s.path.clone(),
                    position: s.start,
                    message: match f {
                        FrameFault::Short => "frame shorter than declared".into(),
                        FrameFault::Invalid(m) => m,
                    },
                })?;
                Ok(Record {
                    offset: s.offset,
                    appended_at: s.appended_at,
                    key: key.map(<[u8]>::to_vec),
                    payload: payload.to_vec(),
                })
            })
            .collect()
    }

    fn offset_path(&self, group: &str) -> PathBuf {
        self.dir.join("groups").join(format!("{group}.offset"))
    }

    /// Durably records `offset` as the next offset `group` will read.
    pub fn commit(&self, group: &str, offset: u64) -> Result<()> {
        validate_name(group)?;
        let next = self.next_offset();
        if offset > next {
            return Err(Error::OffsetOutOfRange { offset, next });
        }
        let path = self.offset_path(group);
        let tmp = path.with_extension("offset.tmp");
        {
            let mut f = File::create(&tmp)?;
            writeln!(f, "{offset}")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        sync_dir(&self.dir.join("groups"));
        Ok(())
    }

    /// Last committed offset for `group`; 0 if it never committed.
    pub fn committed(&self, group: &str) -> Result<u64> {
        validate_name(group)?;
        let path = self.offset_path(group);
        match fs::read_to_string(&path) {
            Ok(text) => text.trim().parse().map_err(|_| Error::CorruptSegment {
                segment: path,
                position: 0,
                message: format!("offset file holds `{}`", text.trim()),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Topic {
    fn drop(&mut self) {
        if let Ok(mut w) = self.writer.lock() {
            let _ = self.sync(&mut w);
        }
    }
}

fn create_segment(dir: &Path, base: u64) -> Result<Segment> {
    let path = segment_path(dir, base);
    OpenOptions::new().create(true).append(true).open(&path)?;
    sync_dir(dir);
    Ok(Segment {
        base,
        file: Arc::new(File::open(&path)?),
        path,
        positions: Vec::new(),
        size: 0,
    })
}

fn recover_segment(path: &Path, base: u64, is_last: bool) -> Result<Segment> {
    let bytes = fs::read(path)?;
    let mut positions = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        match decode_frame(&bytes[pos..]) {
            Ok((_, _, len)) => {
                positions.push(pos as u64);
                pos += len;
            }
            Err(fault) => {
                // Damage is a torn tail only if nothing follows the frame.
                let reaches_end = match &fault {
                    FrameFault::Short => true,
                    FrameFault::Invalid(_) => declared_end(&bytes[pos..]).is_none_or(|e| pos + e >= bytes.len()),
                };
                if !(is_last && reaches_end) {
                    return Err(Error::CorruptSegment {
                        segment: path.to_owned(),
                        position: pos as u64,
                        message: match fault {
                            FrameFault::Short => "frame shorter than declared".into(),
                            FrameFault::Invalid(m) => m,
                        },
                    });
                }
                log::warn!(
                    "{}: truncating damaged final frame at byte {pos} ({} bytes dropped)",
                    path.display(),
                    bytes.len() - pos
                );
                let f = OpenOptions::new().write(true).open(path)?;
                f.set_len(pos as u64)?;
                f.sync_all()?;
                break;
            }
        }
    }
    Ok(Segment {
        base,
        path: path.to_owned(),
        file: Arc::new(File::open(path)?),
        positions,
        size: pos.min(bytes.len()) as u64,
    })
}

/// Frame length implied by the header alone, if the header is readable.
fn declared_end(buf: &[u8]) -> Option<usize> {
    if buf.len() < HEADER_LEN {
        return None;
    }
    let len = u32_at(buf, 0) as usize;
    match buf[8] {
        0 => Some(HEADER_LEN + len),
        1 if buf.len() >= HEADER_LEN + 4 => Some(HEADER_LEN + 4 + u32_at(buf, HEADER_LEN) as usize + len),
        _ => None,
    }
}

fn sync_dir(dir: &Path) {
    #[cfg(unix)]
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    #[cfg(not(unix))]
    let _ = dir;
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], at: u64) -> io::Result<()> {
    std::os::unix::fs::FileExt::read_exact_at(file, buf, at)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut at: u64) -> io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, at)? {
            0 => return Err(io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                at += n as u64;
            }
        }
    }
    Ok(())
}

/// A root directory of topics, each opened once and shared.
#[derive(Debug)]
pub struct LogDir {
    root: PathBuf,
    config: TopicConfig,
    topics: Mutex<HashMap<String, Arc<Topic>>>,
}

impl LogDir {
    pub fn new(root: impl Into<PathBuf>, config: TopicConfig) -> Result<LogDir> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(LogDir {
            root,
            config,
            topics: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn topic(&self, name: &str) -> Result<Arc<Topic>> {
        let mut topics = self.topics.lock().expect("topics lock");
        if let Some(t) = topics.get(name) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(Topic::open(&self.root, name, self.config)?);
        topics.insert(name.to_owned(), Arc::clone(&t));
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert!(validate_name("posts").is_ok());
        assert!(validate_name("a_b-9").is_ok());
        assert!(validate_name("").is_err());
        assert!(validate_name("Posts").is_err());
        assert!(validate_name("../x").is_err());
        assert!(validate_name(&"a".repeat(65)).is_err());
    }

    #[test]
    fn frame_layout() {
        let f = encode_frame(None, b"hi");
        assert_eq!(&f[..4], &2u32.to_le_bytes());
        assert_eq!(&f[4..8], &crc32fast::hash(b"hi").to_le_bytes());
        assert_eq!(f[8], 0);
        assert_eq!(&f[9..], b"hi");
        let k = encode_frame(Some(b"id"), b"x");
        assert_eq!(k[8], 1);
        assert_eq!(&k[9..13], &2u32.to_le_bytes());
        assert_eq!(&k[13..], b"idx");
    }

    #[test]
    fn append_read_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let t = open_topic(dir.path(), "posts").unwrap();
            assert_eq!(t.next_offset(), 0);
            for (i, p) in [b"p0", b"p1", b"p2"].iter().enumerate() {
                assert_eq!(t.append(*p).unwrap(), i as u64);
            }
            let r = t.read(1, 10).unwrap();
            assert_eq!(
                r.iter().map(|r| r.payload.clone()).collect::<Vec<_>>(),
                vec![b"p1".to_vec(), b"p2".to_vec()]
            );
            assert!(t.read(3, 5).unwrap().is_empty());
            assert!(matches!(t.read(4, 1), Err(Error::OffsetOutOfRange { .. })));
        }
        let t = open_topic(dir.path(), "posts").unwrap();
        assert_eq!(t.next_offset(), 3);
        assert_eq!(t.append_keyed(Some(b"k"), b"p3").unwrap(), 3);
        let all = t.read(0, 10).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[3].key.as_deref(), Some(&b"k"[..]));
        let mut paged = t.read(0, 2).unwrap();
        paged.extend(t.read(2, 2).unwrap());
        assert_eq!(paged, all);
    }

    #[test]
    fn oversize_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = open_topic(dir.path(), "big").unwrap();
        assert!(t.append(&vec![0; MAX_PAYLOAD]).is_ok());
        assert!(matches!(
            t.append(&vec![0; MAX_PAYLOAD + 1]),
            Err(Error::Oversize { .. })
        ));
        assert_eq!(t.next_offset(), 1);
    }

    #[test]
    fn segments_roll_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TopicConfig {
            segment_max_bytes: 64,
            ..TopicConfig::default()
        };
        {
            let t = Topic::open(dir.path(), "roll", cfg).unwrap();
            for i in 0..20u32 {
                t.append(format!("record-{i:04}").as_bytes()).unwrap();
            }
            assert!(t.segment_paths().len() > 1);
        }
        let t = Topic::open(dir.path(), "roll", cfg).unwrap();
        assert_eq!(t.next_offset(), 20);
        let recs = t.read(0, 100).unwrap();
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.offset, i as u64);
            assert_eq!(r.payload, format!("record-{i:04}").into_bytes());
        }
        let names: Vec<String> = t
            .segment_paths()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names[0], "00000000000000000000.log");
    }

    #[test]
    fn torn_tail_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let seg = {
            let t = open_topic(dir.path(), "t").unwrap();
            for p in [b"aaa", b"bbb", b"ccc"] {
                t.append(p).unwrap();
            }
            t.segment_paths()[0].clone()
        };
        let mut bytes = fs::read(&seg).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        fs::write(&seg, &bytes).unwrap();
        let t = open_topic(dir.path(), "t").unwrap();
        assert_eq!(t.next_offset(), 2);
        assert_eq!(t.append(b"ddd").unwrap(), 2);
    }

    #[test]
    fn partial_write_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let seg = {
            let t = open_topic(dir.path(), "t").unwrap();
            t.append(b"whole").unwrap();
            t.segment_paths()[0].clone()
        };
        let mut f = OpenOptions::new().append(true).open(&seg).unwrap();
        f.write_all(&encode_frame(None, b"half-written")[..7]).unwrap();
        drop(f);
        let t = open_topic(dir.path(), "t").unwrap();
        assert_eq!(t.next_offset(), 1);
    }

    #[test]
    fn mid_file_corruption_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let seg = {
            let t = open_topic(dir.path(), "t").unwrap();
            for p in [b"aaa", b"bbb", b"ccc"] {
                t.append(p).unwrap();
            }
            t.segment_paths()[0].clone()
        };
        let mut bytes = fs::read(&seg).unwrap();
        bytes[HEADER_LEN] ^= 0xff;
        fs::write(&seg, &bytes).unwrap();
        match open_topic(dir.path(), "t") {
            Err(Error::CorruptSegment { segment, position, .. }) => {
                assert_eq!(segment, seg);
                assert_eq!(position, 0);
            }
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn commits() {
        let dir = tempfile::tempdir().unwrap();
        {
            let t = open_topic(dir.path(), "t").unwrap();
            for _ in 0..6 {
                t.append(b"x").unwrap();
            }
            assert_eq!(t.committed("g").unwrap(), 0);
            t.commit("g", 5).unwrap();
            assert!(t.commit("g", 7).is_err());
        }
        let t = open_topic(dir.path(), "t").unwrap();
        assert_eq!(t.committed("g").unwrap(), 5);
        t.commit("g", 3).unwrap();
        t.commit("g", 2).unwrap();
        assert_eq!(t.committed("g").unwrap(), 2);
        assert_eq!(fs::read_to_string(dir.path().join("t/groups/g.offset")).unwrap(), "2\n");
    }

    #[test]
    fn concurrent_appenders_share_one_order() {
        let dir = tempfile::tempdir().unwrap();
        let t = Arc::new(
            Topic::open(
                dir.path(),
                "c",
                TopicConfig {
                    segment_max_bytes: 256,
                    flush: FlushPolicy::Batched {
                        max_records: 50,
                        max_delay: Duration::from_millis(10),
                    },
                },
            )
            .unwrap(),
        );
        let handles: Vec<_> = (0..4)
            .map(|w| {
                let t = Arc::clone(&t);
                std::thread::spawn(move || {
                    for i in 0..50 {
                        let off = t.append(format!("{w}:{i}").as_bytes()).unwrap();
                        let r = t.read(off, 1).unwrap();
                        assert_eq!(r[0].payload, format!("{w}:{i}").into_bytes());
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let a = t.read(0, 1000).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a, t.read(0, 1000).unwrap());
        for w in 0..4 {
            let seq: Vec<usize> = a
                .iter()
                .filter_map(|r| {
                    let s = String::from_utf8(r.payload.clone()).unwrap();
                    let (ww, i) = s.split_once(':').unwrap();
                    (ww == w.to_string()).then(|| i.parse().unwrap())
                })
                .collect();
            assert_eq!(seq, (0..50).collect::<Vec<_>>());
        }
    }
}
