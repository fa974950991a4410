//! Alignment score matrices between steps and video segments.
//!
//! Three pathways: step-narration-video routes similarity through narration
//! timestamps, while the long- and short-range direct pathways compare step
//! and segment embeddings from their respective encoder pairs. Pathway
//! matrices live on different scales, so fusion min-max normalizes each row
//! before mean pooling (the `harmonize` flag); that mapping keeps every
//! per-row argmax in place.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusEntry, CorpusError};
use crate::labels::{self, LabelError, LabelMatrix};
use crate::mat::{
    cosine_similarity_matrix, mean_pool_matrices, row_minmax_normalize, row_softmax, DenseMatrix,
    MatError,
};

#[derive(Debug, Error)]
pub enum PathwayError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("pathway {0:?} is not a direct step-video pathway")]
    NotDirect(Pathway),
    #[error("no pathways to fuse")]
    EmptyFusion,
    #[error("entry '{video_id}' lacks embeddings for encoder '{encoder}'")]
    MissingEncoder { video_id: String, encoder: String },
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Label(#[from] LabelError),
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pathway {
    #[serde(rename = "SNV")]
    Snv,
    #[serde(rename = "SV_LONG")]
    SvLong,
    #[serde(rename = "SV_SHORT")]
    SvShort,
    #[serde(rename = "FUSED")]
    Fused,
}

impl std::fmt::Display for Pathway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Pathway::Snv => "SNV",
            Pathway::SvLong => "SV_LONG",
            Pathway::SvShort => "SV_SHORT",
            Pathway::Fused => "FUSED",
        };
        f.write_str(s)
    }
}

/// A steps-by-segments score matrix tagged with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub pathway: Pathway,
    pub m: DenseMatrix,
}

/// Which encoders feed each pathway and how fusion behaves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathwayConfig {
    /// Softmax temperature for the step-narration similarity distribution.
    pub tau: f64,
    /// Min-max normalize each pathway row before mean pooling.
    pub harmonize: bool,
    /// Pathways included in fusion; any non-empty subset works, which is how
    /// ablation grids are run.
    pub enabled: Vec<Pathway>,
    pub nv_text_encoder: String,
    pub long_text_encoder: String,
    pub long_video_encoder: String,
    pub short_text_encoder: String,
    pub short_video_encoder: String,
}

impl Default for PathwayConfig {
    fn default() -> Self {
        Self {
            tau: 0.07,
            harmonize: true,
            enabled: vec![Pathway::Snv, Pathway::SvLong, Pathway::SvShort],
            nv_text_encoder: "nv_text".into(),
            long_text_encoder: "long_text".into(),
            long_video_encoder: "long_video".into(),
            short_text_encoder: "short_text".into(),
            short_video_encoder: "short_video".into(),
        }
    }
}

/// Step-narration-video pathway: a temperature softmax over narrations per
/// step, pushed through the narration-video timestamp matrix.
pub fn compute_snv(
    step_emb: &DenseMatrix,
    narr_emb: &DenseMatrix,
    y_nv: &LabelMatrix,
    tau: f64,
) -> Result<ScoreMatrix, PathwayError> {
    if narr_emb.rows() != y_nv.rows() {
        return Err(PathwayError::ShapeMismatch(format!(
            "{} narration embeddings vs {} narration-video rows",
            narr_emb.rows(),
            y_nv.rows()
        )));
    }
    let sim = cosine_similarity_matrix(step_emb, narr_emb)?;
    let a_sn = row_softmax(&sim, tau)?;
    Ok(ScoreMatrix {
        pathway: Pathway::Snv,
        m: a_sn.matmul(y_nv.as_dense()),
    })
}

/// Direct step-video pathway: plain cosine similarity between step and
/// segment embeddings of one encoder pair.
pub fn compute_sv_direct(
    step_emb: &DenseMatrix,
    seg_emb: &DenseMatrix,
    pathway: Pathway,
) -> Result<ScoreMatrix, PathwayError> {
    if pathway != Pathway::SvLong && pathway != Pathway::SvShort {
        return Err(PathwayError::NotDirect(pathway));
    }
    Ok(ScoreMatrix {
        pathway,
        m: cosine_similarity_matrix(step_emb, seg_emb)?,
    })
}

/// Mean-pools pathway matrices into the fused matrix, harmonizing scales
/// first when configured.
pub fn fuse_pathways(
    scores: &[ScoreMatrix],
    config: &PathwayConfig,
) -> Result<ScoreMatrix, PathwayError> {
    if scores.is_empty() {
        return Err(PathwayError::EmptyFusion);
    }
    let prepared: Vec<DenseMatrix> = scores
        .iter()
        .map(|s| {
            if config.harmonize {
                row_minmax_normalize(&s.m)
            } else {
                s.m.clone()
            }
        })
        .collect();
    Ok(ScoreMatrix {
        pathway: Pathway::Fused,
        m: mean_pool_matrices(&prepared)?,
    })
}

fn step_embedding<'a>(
    entry: &'a CorpusEntry,
    encoder: &str,
) -> Result<&'a DenseMatrix, PathwayError> {
    entry
        .step_embeddings
        .get(encoder)
        .ok_or_else(|| PathwayError::MissingEncoder {
            video_id: entry.video_id.clone(),
            encoder: encoder.to_string(),
        })
}

fn segment_embedding<'a>(
    entry: &'a CorpusEntry,
    encoder: &str,
) -> Result<&'a DenseMatrix, PathwayError> {
    entry
        .segment_embeddings
        .get(encoder)
        .ok_or_else(|| PathwayError::MissingEncoder {
            video_id: entry.video_id.clone(),
            encoder: encoder.to_string(),
        })
}

/// Computes every enabled pathway for one video. The S-N-V pathway reads
/// step and narration embeddings under the same text encoder id.
pub fn compute_enabled(
    entry: &CorpusEntry,
    config: &PathwayConfig,
) -> Result<Vec<ScoreMatrix>, PathwayError> {
    let mut out = Vec::new();
    for pathway in &config.enabled {
        let score = match pathway {
            Pathway::Snv => {
                let step_emb = step_embedding(entry, &config.nv_text_encoder)?;
                let narr_emb = entry
                    .narration_embeddings
                    .get(&config.nv_text_encoder)
                    .ok_or_else(|| PathwayError::MissingEncoder {
                        video_id: entry.video_id.clone(),
                        encoder: config.nv_text_encoder.clone(),
                    })?;
                let y_nv = labels::build_nv_matrix(&entry.narrations, entry.num_segments)?;
                compute_snv(step_emb, narr_emb, &y_nv, config.tau)?
            }
            Pathway::SvLong => compute_sv_direct(
                step_embedding(entry, &config.long_text_encoder)?,
                segment_embedding(entry, &config.long_video_encoder)?,
                Pathway::SvLong,
            )?,
            Pathway::SvShort => compute_sv_direct(
                step_embedding(entry, &config.short_text_encoder)?,
                segment_embedding(entry, &config.short_video_encoder)?,
                Pathway::SvShort,
            )?,
            Pathway::Fused => continue,
        };
        out.push(score);
    }
    Ok(out)
}

/// Computes enabled pathways and fuses them for one video.
pub fn compute_fused(
    entry: &CorpusEntry,
    config: &PathwayConfig,
) -> Result<ScoreMatrix, PathwayError> {
    let scores = compute_enabled(entry, config)?;
    fuse_pathways(&scores, config)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSidecar {
    pub video_id: String,
    pub pathway: Pathway,
}

/// Writes a score matrix as an embedding file plus a sidecar JSON naming the
/// pathway. The sidecar path is the matrix path with `.json` appended.
pub fn save_score_matrix(
    score: &ScoreMatrix,
    video_id: &str,
    path: &Path,
) -> Result<(), PathwayError> {
    crate::corpus::save_embedding_matrix(&score.m, path)?;
    let sidecar = ScoreSidecar {
        video_id: video_id.to_string(),
        pathway: score.pathway,
    };
    let spath = sidecar_path(path);
    let f = File::create(&spath).map_err(|e| PathwayError::Io {
        path: spath.display().to_string(),
        source: e,
    })?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &sidecar).map_err(|e| PathwayError::Json {
        path: spath.display().to_string(),
        source: e,
    })?;
    writeln!(w).map_err(|e| PathwayError::Io {
        path: spath.display().to_string(),
        source: e,
    })?;
    w.flush().map_err(|e| PathwayError::Io {
        path: spath.display().to_string(),
        source: e,
    })
}

pub fn load_score_matrix(path: &Path) -> Result<(ScoreMatrix, String), PathwayError> {
    let m = crate::corpus::load_embedding_matrix(path)?;
    let spath = sidecar_path(path);
    let f = File::open(&spath).map_err(|e| PathwayError::Io {
        path: spath.display().to_string(),
        source: e,
    })?;
    let sidecar: ScoreSidecar =
        serde_json::from_reader(BufReader::new(f)).map_err(|e| PathwayError::Json {
            path: spath.display().to_string(),
            source: e,
        })?;
    Ok((
        ScoreMatrix {
            pathway: sidecar.pathway,
            m,
        },
        sidecar.video_id,
    ))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}
