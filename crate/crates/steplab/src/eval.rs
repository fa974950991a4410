//! Grounding inference and recall metrics.
//!
//! A step is recalled when its top-scoring segment's one-second interval
//! overlaps the ground-truth span with positive measure, the same overlap
//! rule the corpus uses for narration timestamps.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::mat::DenseMatrix;
use crate::model::{forward, ModelConfig, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no grounding results to score")]
    Empty,
    #[error("step {index} of '{video_id}' lacks a task id")]
    MissingTaskId { video_id: String, index: usize },
    #[error("video '{video_id}' lacks embeddings for encoder '{encoder}'")]
    MissingEncoder { video_id: String, encoder: String },
    #[error(transparent)]
    Model(#[from] ModelError),
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

/// One grounded step with its ground-truth span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingResult {
    pub video_id: String,
    pub predicted_index: usize,
    pub score: f64,
    pub gt_start_sec: f64,
    pub gt_end_sec: f64,
    pub task_id: Option<String>,
}

impl GroundingResult {
    pub fn recalled(&self) -> bool {
        let t = self.predicted_index as f64;
        t.max(self.gt_start_sec) < (t + 1.0).min(self.gt_end_sec)
    }
}

/// Per-row argmax segment (smallest index on ties).
pub fn ground_steps(a_hat: &DenseMatrix) -> Vec<usize> {
    (0..a_hat.rows())
        .map(|r| {
            let row = a_hat.row(r);
            let mut best = 0usize;
            for (t, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = t;
                }
            }
            best
        })
        .collect()
}

/// Fraction of steps whose predicted segment overlaps the ground truth.
pub fn recall_at_1(results: &[GroundingResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let recalled = results.iter().filter(|r| r.recalled()).count();
    Ok(recalled as f64 / results.len() as f64)
}

/// Unweighted mean of per-task recall; every step must carry a task id.
pub fn avg_recall_by_task(results: &[GroundingResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_task = recall_by_group(results, |r| match &r.task_id {
        Some(id) => Ok(id.clone()),
        None => Err(EvalError::MissingTaskId {
            video_id: r.video_id.clone(),
            index: 0,
        }),
    })?;
    Ok(per_task.values().sum::<f64>() / per_task.len() as f64)
}

fn recall_by_group(
    results: &[GroundingResult],
    key: impl Fn(&GroundingResult) -> Result<String, EvalError>,
) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut groups: BTreeMap<String, Vec<&GroundingResult>> = BTreeMap::new();
    for r in results {
        groups.entry(key(r)?).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(k, rs)| {
            let recalled = rs.iter().filter(|r| r.recalled()).count();
            (k, recalled as f64 / rs.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    RecallAt1,
    TaskAveragedRecallAt1,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::RecallAt1 => "R@1",
            MetricKind::TaskAveragedRecallAt1 => "Avg. R@1",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub metric: String,
    pub value: f64,
    pub per_task: BTreeMap<String, f64>,
    pub per_video: BTreeMap<String, f64>,
}

/// Scores grounded results into a report. `per_task` stays empty unless
/// every step carries a task id.
pub fn build_report(
    dataset_id: &str,
    metric: MetricKind,
    results: &[GroundingResult],
) -> Result<EvalReport, EvalError> {
    let per_video = recall_by_group(results, |r| Ok(r.video_id.clone()))?;
    let all_tasked = results.iter().all(|r| r.task_id.is_some());
    let per_task = if all_tasked {
        recall_by_group(results, |r| Ok(r.task_id.clone().unwrap()))?
    } else {
        BTreeMap::new()
    };
    let value = match metric {
        MetricKind::RecallAt1 => recall_at_1(results)?,
        MetricKind::TaskAveragedRecallAt1 => avg_recall_by_task(results)?,
    };
    Ok(EvalReport {
        dataset_id: dataset_id.to_string(),
        metric: metric.name().to_string(),
        value,
        per_task,
        per_video,
    })
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let f = File::create(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| EvalError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        writeln!(w).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        w.flush().map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Grounds one corpus entry with the trained model. Steps without
/// ground-truth boundaries are excluded from scoring.
pub fn ground_entry(
    entry: &CorpusEntry,
    model_config: &ModelConfig,
    params: &ModelParams,
    video_encoder: &str,
    text_encoder: &str,
) -> Result<Vec<GroundingResult>, EvalError> {
    let seg = entry
        .segment_embeddings
        .get(video_encoder)
        .ok_or_else(|| EvalError::MissingEncoder {
            video_id: entry.video_id.clone(),
            encoder: video_encoder.to_string(),
        })?;
    let step_emb = entry
        .step_embeddings
        .get(text_encoder)
        .ok_or_else(|| EvalError::MissingEncoder {
            video_id: entry.video_id.clone(),
            encoder: text_encoder.to_string(),
        })?;
    let (a_hat, _) = forward(model_config, params, seg, step_emb)?;
    let predictions = ground_steps(&a_hat);

    let mut out = Vec::new();
    for (i, step) in entry.steps.iter().enumerate() {
        let (gt_start, gt_end) = match (step.gt_start_sec, step.gt_end_sec) {
            (Some(s), Some(e)) => (s, e),
            _ => continue,
        };
        out.push(GroundingResult {
            video_id: entry.video_id.clone(),
            predicted_index: predictions[i],
            score: a_hat.get(i, predictions[i]),
            gt_start_sec: gt_start,
            gt_end_sec: gt_end,
            task_id: step.task_id.clone(),
        });
    }
    Ok(out)
}
