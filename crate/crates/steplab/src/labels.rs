//! Pseudo-label matrices.
//!
//! Two producers: narration timestamps give the narration-video matrix, and
//! fused alignment scores give the step-video matrix via argmax, a symmetric
//! window of size W, and a confidence threshold gamma that drops
//! low-scoring steps entirely.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{timestamps_to_segment_span, CorpusError, NarrationTrack};
use crate::mat::DenseMatrix;
use crate::pathways::{Pathway, ScoreMatrix};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("expected a fused score matrix, got {0:?}")]
    NotFused(Pathway),
    #[error("label matrix is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
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

/// Binary match matrix with a per-row keep flag.
///
/// Kept rows have at least one positive entry; dropped rows are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    m: DenseMatrix,
    kept: Vec<bool>,
    pub gamma: Option<f64>,
    pub window: Option<usize>,
}

impl LabelMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, gamma: Option<f64>, window: Option<usize>) -> Result<Self, LabelError> {
        let kept = rows
            .iter()
            .map(|r| r.iter().any(|v| *v != 0.0))
            .collect::<Vec<_>>();
        let m = DenseMatrix::from_rows(&rows)
            .map_err(|e| LabelError::Inconsistent(e.to_string()))?;
        let out = Self { m, kept, gamma, window };
        out.validate()?;
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.m.rows()
    }

    pub fn num_segments(&self) -> usize {
        self.m.cols()
    }

    pub fn kept(&self, row: usize) -> bool {
        self.kept[row]
    }

    pub fn kept_flags(&self) -> &[bool] {
        &self.kept
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|k| **k).count()
    }

    pub fn is_positive(&self, row: usize, col: usize) -> bool {
        self.m.get(row, col) == 1.0
    }

    /// The underlying 0/1 matrix, usable directly in matrix products.
    pub fn as_dense(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        if self.kept.len() != self.m.rows() {
            return Err(LabelError::Inconsistent(format!(
                "{} keep flags for {} rows",
                self.kept.len(),
                self.m.rows()
            )));
        }
        for r in 0..self.m.rows() {
            let mut positives = 0usize;
            for c in 0..self.m.cols() {
                let v = self.m.get(r, c);
                if v != 0.0 && v != 1.0 {
                    return Err(LabelError::Inconsistent(format!(
                        "non-binary entry {} at ({}, {})",
                        v, r, c
                    )));
                }
                positives += (v == 1.0) as usize;
            }
            if self.kept[r] && positives == 0 {
                return Err(LabelError::Inconsistent(format!("kept row {} is empty", r)));
            }
            if !self.kept[r] && positives != 0 {
                return Err(LabelError::Inconsistent(format!(
                    "dropped row {} has {} positives",
                    r, positives
                )));
            }
        }
        Ok(())
    }
}

/// Narration-video matrix from timestamps: row k marks every segment whose
/// interval overlaps narration k. Narrations entirely past the video end
/// yield an empty, dropped row.
pub fn build_nv_matrix(track: &NarrationTrack, num_segments: usize) -> Result<LabelMatrix, LabelError> {
    let mut rows = Vec::with_capacity(track.len());
    for item in &track.items {
        let (start, end) = (
            item.start_sec.unwrap_or(f64::NAN),
            item.end_sec.unwrap_or(f64::NAN),
        );
        let span = timestamps_to_segment_span(start, end, num_segments)?;
        let mut row = vec![0.0; num_segments];
        for t in span {
            row[t] = 1.0;
        }
        rows.push(row);
    }
    LabelMatrix::from_rows(rows, None, None)
}

/// Step-video matrix from fused scores.
///
/// Per row: find the argmax segment (smallest index on ties). If its score is
/// below `gamma` the step is dropped; otherwise every segment within `window`
/// of the argmax, clipped to the video, is marked matched.
pub fn build_sv_labels(
    fused: &ScoreMatrix,
    gamma: f64,
    window: usize,
) -> Result<LabelMatrix, LabelError> {
    if fused.pathway != Pathway::Fused {
        return Err(LabelError::NotFused(fused.pathway));
    }
    let m = &fused.m;
    let t_total = m.cols();
    let mut rows = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let row = m.row(r);
        let (mut best_idx, mut best) = (0usize, f64::NEG_INFINITY);
        for (t, &v) in row.iter().enumerate() {
            if v > best {
                best = v;
                best_idx = t;
            }
        }
        let mut out = vec![0.0; t_total];
        if best >= gamma {
            let lo = best_idx.saturating_sub(window);
            let hi = (best_idx + window).min(t_total - 1);
            for cell in &mut out[lo..=hi] {
                *cell = 1.0;
            }
        }
        rows.push(out);
    }
    LabelMatrix::from_rows(rows, Some(gamma), Some(window))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelStats {
    pub total_rows: usize,
    pub kept_rows: usize,
    pub kept_ratio: f64,
    pub mean_positive_width: f64,
}

/// Kept-row ratio and mean positive-run width over kept rows.
pub fn label_stats(labels: &LabelMatrix) -> LabelStats {
    let total_rows = labels.rows();
    let kept_rows = labels.kept_count();
    let mut width_sum = 0usize;
    for r in 0..total_rows {
        if labels.kept(r) {
            width_sum += (0..labels.num_segments())
                .filter(|&c| labels.is_positive(r, c))
                .count();
        }
    }
    LabelStats {
        total_rows,
        kept_rows,
        kept_ratio: if total_rows == 0 {
            0.0
        } else {
            kept_rows as f64 / total_rows as f64
        },
        mean_positive_width: if kept_rows == 0 {
            0.0
        } else {
            width_sum as f64 / kept_rows as f64
        },
    }
}

/// Cell-level agreement between a predicted and a reference label matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelAgreement {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn label_agreement(pred: &LabelMatrix, reference: &LabelMatrix) -> Result<LabelAgreement, LabelError> {
    if pred.rows() != reference.rows() || pred.num_segments() != reference.num_segments() {
        return Err(LabelError::Inconsistent(format!(
            "shape mismatch: {}x{} vs {}x{}",
            pred.rows(),
            pred.num_segments(),
            reference.rows(),
            reference.num_segments()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for r in 0..pred.rows() {
        for c in 0..pred.num_segments() {
            match (pred.is_positive(r, c), reference.is_positive(r, c)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(LabelAgreement { precision, recall, f1 })
}

/// Row entry in the on-disk label file. `end_idx` is exclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRowSpan {
    pub kept: bool,
    pub start_idx: Option<usize>,
    pub end_idx: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelFile {
    pub video_id: String,
    pub gamma: Option<f64>,
    pub window: Option<usize>,
    pub num_segments: usize,
    pub rows: Vec<LabelRowSpan>,
}

impl LabelFile {
    /// Captures a label matrix whose kept rows are single contiguous runs,
    /// which both producers in this module guarantee.
    pub fn from_matrix(video_id: &str, labels: &LabelMatrix) -> Result<Self, LabelError> {
        let mut rows = Vec::with_capacity(labels.rows());
        for r in 0..labels.rows() {
            if !labels.kept(r) {
                rows.push(LabelRowSpan {
                    kept: false,
                    start_idx: None,
                    end_idx: None,
                });
                continue;
            }
            let positives: Vec<usize> = (0..labels.num_segments())
                .filter(|&c| labels.is_positive(r, c))
                .collect();
            let start = positives[0];
            let end = positives[positives.len() - 1] + 1;
            if positives.len() != end - start {
                return Err(LabelError::Inconsistent(format!(
                    "row {} positives are not contiguous",
                    r
                )));
            }
            rows.push(LabelRowSpan {
                kept: true,
                start_idx: Some(start),
                end_idx: Some(end),
            });
        }
        Ok(Self {
            video_id: video_id.to_string(),
            gamma: labels.gamma,
            window: labels.window,
            num_segments: labels.num_segments(),
            rows,
        })
    }

    pub fn to_matrix(&self) -> Result<LabelMatrix, LabelError> {
        let mut rows = Vec::with_capacity(self.rows.len());
        for span in &self.rows {
            let mut row = vec![0.0; self.num_segments];
            if span.kept {
                let (s, e) = match (span.start_idx, span.end_idx) {
                    (Some(s), Some(e)) if s < e && e <= self.num_segments => (s, e),
                    _ => {
                        return Err(LabelError::Inconsistent(
                            "kept row without a valid span".into(),
                        ))
                    }
                };
                for cell in &mut row[s..e] {
                    *cell = 1.0;
                }
            }
            rows.push(row);
        }
        LabelMatrix::from_rows(rows, self.gamma, self.window)
    }

    pub fn save(&self, path: &Path) -> Result<(), LabelError> {
        let f = File::create(path).map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| LabelError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        writeln!(w).map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        w.flush().map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let f = File::open(path).map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| LabelError::Json {
            path: path.display().to_string(),
            source: e,
        })
    }
}
