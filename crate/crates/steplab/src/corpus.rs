//! Corpus data model and on-disk formats.
//!
//! A corpus is a manifest JSON mapping video ids to per-video files:
//! embedding matrices in the `EMB1` binary format (one per encoder id),
//! a narration track, and an optional step track, both as JSON lines.
//! Embeddings arrive precomputed; nothing here touches raw video.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::DenseMatrix;

/// Videos longer than this many one-second segments are truncated at load.
pub const MAX_SEGMENTS: usize = 1024;

const EMB_MAGIC: [u8; 4] = *b"EMB1";
/// Upper bound on declared element count; anything above is a corrupt header.
const EMB_MAX_ELEMS: u64 = 1 << 31;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("bad magic bytes in {path}: expected EMB1")]
    MagicMismatch { path: String },
    #[error("truncated embedding file {path}: expected {expected} payload bytes, found {found}")]
    Truncated {
        path: String,
        expected: u64,
        found: u64,
    },
    #[error("embedding shape {rows}x{cols} in {path} overflows the supported size")]
    ShapeOverflow {
        path: String,
        rows: u64,
        cols: u64,
    },
    #[error("trailing bytes after payload in {path}")]
    TrailingData { path: String },
    #[error("empty matrix cannot be saved")]
    EmptyMatrix,
    #[error("{path}: {msg}")]
    InvalidTrack { path: String, msg: String },
    #[error("invalid time span: start {start} >= end {end}")]
    InvalidSpan { start: f64, end: f64 },
    #[error("corpus validation failed for {video_id}: {msg}")]
    Validation { video_id: String, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One narration sentence or procedure step.
///
/// Narrations always carry `start_sec`/`end_sec`; LLM-steps usually carry
/// neither. `gt_start_sec`/`gt_end_sec` hold evaluation-only boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub text: String,
    #[serde(rename = "start")]
    pub start_sec: Option<f64>,
    #[serde(rename = "end")]
    pub end_sec: Option<f64>,
    #[serde(rename = "gt_start", default, skip_serializing_if = "Option::is_none")]
    pub gt_start_sec: Option<f64>,
    #[serde(rename = "gt_end", default, skip_serializing_if = "Option::is_none")]
    pub gt_end_sec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

impl StepRecord {
    pub fn from_text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            start_sec: None,
            end_sec: None,
            gt_start_sec: None,
            gt_end_sec: None,
            task_id: None,
        }
    }

    fn validate(&self, path: &Path, line: usize) -> Result<(), CorpusError> {
        if let (Some(s), Some(e)) = (self.start_sec, self.end_sec) {
            if !(s < e) {
                return Err(CorpusError::InvalidTrack {
                    path: path.display().to_string(),
                    msg: format!("line {}: start {} is not before end {}", line, s, e),
                });
            }
        }
        Ok(())
    }
}

/// Timestamped narration sentences, ordered by start time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NarrationTrack {
    pub items: Vec<StepRecord>,
}

impl NarrationTrack {
    pub fn new(mut items: Vec<StepRecord>) -> Result<Self, CorpusError> {
        for it in &items {
            let (s, e) = match (it.start_sec, it.end_sec) {
                (Some(s), Some(e)) => (s, e),
                _ => {
                    return Err(CorpusError::InvalidSpan {
                        start: f64::NAN,
                        end: f64::NAN,
                    })
                }
            };
            if !(s >= 0.0 && s < e) {
                return Err(CorpusError::InvalidSpan { start: s, end: e });
            }
        }
        items.sort_by(|a, b| {
            a.start_sec
                .partial_cmp(&b.start_sec)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// One video with everything the alignment pathways and the model need.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub video_id: String,
    /// Number of one-second segments T.
    pub num_segments: usize,
    /// Encoder id -> T x D segment embeddings.
    pub segment_embeddings: BTreeMap<String, DenseMatrix>,
    pub narrations: NarrationTrack,
    pub steps: Vec<StepRecord>,
    /// Encoder id -> L x D step embeddings.
    pub step_embeddings: BTreeMap<String, DenseMatrix>,
    /// Encoder id -> K x D narration embeddings.
    pub narration_embeddings: BTreeMap<String, DenseMatrix>,
}

impl CorpusEntry {
    /// Checks the shape invariants and that every required encoder is present.
    pub fn validate(&self, required_encoders: &[&str]) -> Result<(), CorpusError> {
        let fail = |msg: String| {
            Err(CorpusError::Validation {
                video_id: self.video_id.clone(),
                msg,
            })
        };
        for (enc, m) in &self.segment_embeddings {
            if m.rows() != self.num_segments {
                return fail(format!(
                    "segment embeddings '{}' have {} rows, expected T={}",
                    enc,
                    m.rows(),
                    self.num_segments
                ));
            }
        }
        for (enc, m) in &self.step_embeddings {
            if m.rows() != self.steps.len() {
                return fail(format!(
                    "step embeddings '{}' have {} rows, expected L={}",
                    enc,
                    m.rows(),
                    self.steps.len()
                ));
            }
        }
        for (enc, m) in &self.narration_embeddings {
            if m.rows() != self.narrations.len() {
                return fail(format!(
                    "narration embeddings '{}' have {} rows, expected K={}",
                    enc,
                    m.rows(),
                    self.narrations.len()
                ));
            }
        }
        if self.num_segments > MAX_SEGMENTS {
            return fail(format!(
                "T={} exceeds the {}-segment cap",
                self.num_segments, MAX_SEGMENTS
            ));
        }
        for enc in required_encoders {
            if !self.segment_embeddings.contains_key(*enc)
                && !self.step_embeddings.contains_key(*enc)
                && !self.narration_embeddings.contains_key(*enc)
            {
                return fail(format!("missing embeddings for encoder '{}'", enc));
            }
        }
        Ok(())
    }
}

/// Writes a matrix as EMB1: magic, u32 rows, u32 cols, f32 row-major, all little-endian.
pub fn save_embedding_matrix(m: &DenseMatrix, path: &Path) -> Result<(), CorpusError> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(CorpusError::EmptyMatrix);
    }
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&EMB_MAGIC).map_err(|e| io_err(path, e))?;
    w.write_all(&(m.rows() as u32).to_le_bytes())
        .map_err(|e| io_err(path, e))?;
    w.write_all(&(m.cols() as u32).to_le_bytes())
        .map_err(|e| io_err(path, e))?;
    for v in m.data() {
        w.write_all(&(*v as f32).to_le_bytes())
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads an EMB1 file, widening the stored f32 values to f64 bit-exactly.
pub fn load_embedding_matrix(path: &Path) -> Result<DenseMatrix, CorpusError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(f);
    let pstr = path.display().to_string();

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if magic != EMB_MAGIC {
        return Err(CorpusError::MagicMismatch { path: pstr });
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|e| io_err(path, e))?;
    let rows = u32::from_le_bytes(b4) as u64;
    r.read_exact(&mut b4).map_err(|e| io_err(path, e))?;
    let cols = u32::from_le_bytes(b4) as u64;

    let elems = rows.checked_mul(cols).filter(|n| *n <= EMB_MAX_ELEMS);
    let elems = match elems {
        Some(n) => n,
        None => {
            return Err(CorpusError::ShapeOverflow {
                path: pstr,
                rows,
                cols,
            })
        }
    };

    let expected = elems * 4;
    let mut payload = Vec::with_capacity(expected as usize);
    let found = r
        .by_ref()
        .take(expected)
        .read_to_end(&mut payload)
        .map_err(|e| io_err(path, e))? as u64;
    if found < expected {
        return Err(CorpusError::Truncated {
            path: pstr,
            expected,
            found,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| io_err(path, e))? != 0 {
        return Err(CorpusError::TrailingData { path: pstr });
    }

    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect::<Vec<_>>();
    DenseMatrix::from_vec(rows as usize, cols as usize, data).map_err(|_| {
        CorpusError::InvalidTrack {
            path: path.display().to_string(),
            msg: "non-finite values in stored matrix".into(),
        }
    })
}

/// Reads a JSONL track of `StepRecord`s.
pub fn load_track(path: &Path) -> Result<Vec<StepRecord>, CorpusError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        rec.validate(path, i + 1)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_track(records: &[StepRecord], path: &Path) -> Result<(), CorpusError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| CorpusError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        writeln!(w, "{}", line).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Per-video file references inside a manifest. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub segment_embeddings: BTreeMap<String, String>,
    #[serde(default)]
    pub step_embeddings: BTreeMap<String, String>,
    #[serde(default)]
    pub narration_embeddings: BTreeMap<String, String>,
    pub narrations: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<String>,
}

/// Corpus manifest: video id -> file locations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub videos: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let f = File::open(path).map_err(|e| io_err(path, e))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| CorpusError::Json {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| CorpusError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        w.flush().map_err(|e| io_err(path, e))
    }
}

/// Loads one video from a manifest entry, truncating videos past the segment cap.
pub fn load_entry(
    manifest_dir: &Path,
    video_id: &str,
    entry: &ManifestEntry,
) -> Result<CorpusEntry, CorpusError> {
    let resolve = |rel: &str| -> PathBuf { manifest_dir.join(rel) };

    let mut segment_embeddings = BTreeMap::new();
    let mut num_segments = None;
    for (enc, rel) in &entry.segment_embeddings {
        let mut m = load_embedding_matrix(&resolve(rel))?;
        if m.rows() > MAX_SEGMENTS {
            log::warn!(
                "{}: truncating '{}' segment embeddings from {} to {} rows",
                video_id,
                enc,
                m.rows(),
                MAX_SEGMENTS
            );
            m = m.split_rows(MAX_SEGMENTS).0;
        }
        match num_segments {
            None => num_segments = Some(m.rows()),
            Some(t) if t != m.rows() => {
                return Err(CorpusError::Validation {
                    video_id: video_id.to_string(),
                    msg: format!(
                        "segment embedding row counts disagree: {} vs {} ('{}')",
                        t,
                        m.rows(),
                        enc
                    ),
                })
            }
            _ => {}
        }
        segment_embeddings.insert(enc.clone(), m);
    }
    let num_segments = num_segments.ok_or_else(|| CorpusError::Validation {
        video_id: video_id.to_string(),
        msg: "no segment embeddings listed".into(),
    })?;

    let narrations = NarrationTrack::new(load_track(&resolve(&entry.narrations))?)?;
    let steps = match &entry.steps {
        Some(rel) => load_track(&resolve(rel))?,
        None => Vec::new(),
    };

    let mut step_embeddings = BTreeMap::new();
    for (enc, rel) in &entry.step_embeddings {
        step_embeddings.insert(enc.clone(), load_embedding_matrix(&resolve(rel))?);
    }
    let mut narration_embeddings = BTreeMap::new();
    for (enc, rel) in &entry.narration_embeddings {
        narration_embeddings.insert(enc.clone(), load_embedding_matrix(&resolve(rel))?);
    }

    let out = CorpusEntry {
        video_id: video_id.to_string(),
        num_segments,
        segment_embeddings,
        narrations,
        steps,
        step_embeddings,
        narration_embeddings,
    };
    out.validate(&[])?;
    Ok(out)
}

/// Loads every video in a manifest, in manifest (sorted) order.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .videos
        .iter()
        .map(|(id, entry)| load_entry(dir, id, entry))
        .collect()
}

/// Segment indices in `[0, T)` whose one-second interval `[t, t+1)` overlaps
/// `[start_sec, end_sec)` with positive measure. A touch at a boundary alone
/// does not count.
pub fn timestamps_to_segment_span(
    start_sec: f64,
    end_sec: f64,
    num_segments: usize,
) -> Result<std::ops::Range<usize>, CorpusError> {
    if !(start_sec >= 0.0 && start_sec < end_sec) {
        return Err(CorpusError::InvalidSpan {
            start: start_sec,
            end: end_sec,
        });
    }
    let first = start_sec.floor() as usize;
    if first >= num_segments {
        return Ok(num_segments..num_segments);
    }
    // Last overlapped segment starts strictly before end_sec.
    let last_excl = (end_sec.ceil() as usize).min(num_segments);
    Ok(first..last_excl)
}
