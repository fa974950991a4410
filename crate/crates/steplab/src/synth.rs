//! Synthetic narrated-video corpora with known ground truth.
//!
//! Each video places latent unit-vector step prototypes on disjoint spans of
//! the one-second grid. Four encoder families then view that latent script
//! independently: segment embeddings are the active prototype (or a random
//! background vector) plus per-family Gaussian noise, step embeddings are
//! the clean prototypes, and narrations are prototypes with jittered
//! timestamps, diluted by distractor narrations drawn from an independent
//! pool. Independent noise per family is what makes pathway fusion
//! measurably better than any single pathway here, and the two noise knobs
//! (jitter, irrelevant ratio) target the narration pathway specifically.
//!
//! Everything is a pure function of the seed; per-video streams are derived
//! so videos can be generated in any order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    save_embedding_matrix, save_track, CorpusEntry, CorpusError, Manifest, ManifestEntry,
    NarrationTrack, StepRecord,
};
use crate::labels::{LabelError, LabelFile, LabelMatrix};
use crate::mat::DenseMatrix;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("cannot fit {steps} spans of at least {min_span}s into {segments} segments")]
    InfeasiblePacking {
        steps: usize,
        min_span: usize,
        segments: usize,
    },
    #[error("invalid synth config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// One encoder family: embedding width and the per-coordinate noise scale
/// applied to its segment embeddings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub dim: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_videos: usize,
    /// T, one-second segments per video.
    pub segments_per_video: usize,
    /// L, procedure steps per video.
    pub steps_per_video: usize,
    /// Ground-truth span length bounds, in seconds.
    pub min_span_sec: usize,
    pub max_span_sec: usize,
    /// Narration timestamps shift by up to this much in either direction.
    pub timestamp_jitter_sec: f64,
    /// Fraction of the narration track replaced by task-irrelevant chatter.
    pub irrelevant_narration_ratio: f64,
    /// Probability that a step's content also shows up briefly outside its
    /// span (the demonstrator previews or revisits it). Echo segments look
    /// like the step to every video encoder but carry no narration, so they
    /// confuse the direct pathways in a correlated way.
    pub step_echo_rate: f64,
    /// Model-input encoders (`video_backbone` / `text_backbone`).
    pub backbone: FamilyConfig,
    /// Narration-pathway text encoder (`nv_text`).
    pub nv: FamilyConfig,
    /// Long-range direct pathway pair (`long_text` / `long_video`).
    pub long: FamilyConfig,
    /// Short-range direct pathway pair (`short_text` / `short_video`).
    pub short: FamilyConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_videos: 8,
            segments_per_video: 64,
            steps_per_video: 6,
            min_span_sec: 2,
            max_span_sec: 6,
            timestamp_jitter_sec: 1.0,
            irrelevant_narration_ratio: 0.0,
            step_echo_rate: 0.0,
            backbone: FamilyConfig { dim: 32, noise_sigma: 0.1 },
            nv: FamilyConfig { dim: 16, noise_sigma: 0.0 },
            long: FamilyConfig { dim: 16, noise_sigma: 0.2 },
            short: FamilyConfig { dim: 16, noise_sigma: 0.2 },
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.num_videos == 0 || self.steps_per_video == 0 || self.segments_per_video == 0 {
            return Err(SynthError::BadConfig(
                "num_videos, steps_per_video, segments_per_video must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.irrelevant_narration_ratio) {
            return Err(SynthError::BadConfig(format!(
                "irrelevant_narration_ratio {} outside [0, 1]",
                self.irrelevant_narration_ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.step_echo_rate) {
            return Err(SynthError::BadConfig(format!(
                "step_echo_rate {} outside [0, 1]",
                self.step_echo_rate
            )));
        }
        if self.timestamp_jitter_sec < 0.0 {
            return Err(SynthError::BadConfig("negative jitter".into()));
        }
        if self.min_span_sec == 0 || self.max_span_sec < self.min_span_sec {
            return Err(SynthError::BadConfig(format!(
                "bad span bounds [{}, {}]",
                self.min_span_sec, self.max_span_sec
            )));
        }
        for (name, f) in [
            ("backbone", &self.backbone),
            ("nv", &self.nv),
            ("long", &self.long),
            ("short", &self.short),
        ] {
            if f.dim == 0 {
                return Err(SynthError::BadConfig(format!("{} dim is zero", name)));
            }
            if f.noise_sigma < 0.0 {
                return Err(SynthError::BadConfig(format!("{} sigma negative", name)));
            }
        }
        if self.steps_per_video * self.min_span_sec > self.segments_per_video {
            return Err(SynthError::InfeasiblePacking {
                steps: self.steps_per_video,
                min_span: self.min_span_sec,
                segments: self.segments_per_video,
            });
        }
        Ok(())
    }
}

pub struct SynthCorpus {
    pub entries: Vec<CorpusEntry>,
    /// Ground-truth step-segment matrix per video, same order as `entries`.
    pub gt_labels: Vec<LabelMatrix>,
}

fn video_rng(seed: u64, video_idx: usize) -> ChaCha8Rng {
    let mixed = seed ^ (video_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn add_noise(rng: &mut ChaCha8Rng, v: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Disjoint sorted spans: lengths drawn in the configured bounds, leftover
/// spread over the gaps by stars-and-bars.
fn place_spans(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
) -> Result<Vec<(usize, usize)>, SynthError> {
    let t = config.segments_per_video;
    let l = config.steps_per_video;
    let mut lengths: Vec<usize> = (0..l)
        .map(|_| rng.gen_range(config.min_span_sec..=config.max_span_sec))
        .collect();
    let mut total: usize = lengths.iter().sum();
    // shrink uniformly if the draw does not fit
    while total > t {
        let widest = (0..l).max_by_key(|&i| lengths[i]).unwrap();
        if lengths[widest] <= config.min_span_sec {
            return Err(SynthError::InfeasiblePacking {
                steps: l,
                min_span: config.min_span_sec,
                segments: t,
            });
        }
        lengths[widest] -= 1;
        total -= 1;
    }
    let leftover = t - total;
    let mut cuts: Vec<usize> = (0..l).map(|_| rng.gen_range(0..=leftover)).collect();
    cuts.sort_unstable();
    let mut spans = Vec::with_capacity(l);
    let mut cursor = 0;
    let mut prev_cut = 0;
    for (len, cut) in lengths.iter().zip(cuts) {
        cursor += cut - prev_cut;
        prev_cut = cut;
        spans.push((cursor, cursor + len));
        cursor += len;
    }
    Ok(spans)
}

struct FamilyDraw {
    /// L x dim clean prototypes.
    prototypes: Vec<Vec<f64>>,
    /// T x dim segment embeddings (noisy prototypes wherever a step's
    /// content shows, noisy background elsewhere).
    segments: Vec<Vec<f64>>,
}

fn draw_family(
    rng: &mut ChaCha8Rng,
    family: &FamilyConfig,
    content: &[Option<usize>],
    num_steps: usize,
) -> FamilyDraw {
    let prototypes: Vec<Vec<f64>> = (0..num_steps).map(|_| unit_vector(rng, family.dim)).collect();
    let segments: Vec<Vec<f64>> = content
        .iter()
        .map(|slot| {
            let base = match slot {
                Some(i) => prototypes[*i].clone(),
                None => unit_vector(rng, family.dim),
            };
            add_noise(rng, &base, family.noise_sigma)
        })
        .collect();
    FamilyDraw {
        prototypes,
        segments,
    }
}

/// Marks `content` cells for each step's span, then sprinkles echo runs of
/// one or two segments into free background for a random subset of steps.
fn content_map(
    rng: &mut ChaCha8Rng,
    spans: &[(usize, usize)],
    t: usize,
    echo_rate: f64,
) -> Vec<Option<usize>> {
    let mut content: Vec<Option<usize>> = vec![None; t];
    for (i, (s, e)) in spans.iter().enumerate() {
        for cell in content.iter_mut().take(*e).skip(*s) {
            *cell = Some(i);
        }
    }
    for i in 0..spans.len() {
        if echo_rate == 0.0 || !rng.gen_bool(echo_rate) {
            continue;
        }
        let len = rng.gen_range(1..=2usize);
        let starts: Vec<usize> = (0..t.saturating_sub(len - 1))
            .filter(|&p| (p..p + len).all(|c| content[c].is_none()))
            .collect();
        if starts.is_empty() {
            continue;
        }
        let p = starts[rng.gen_range(0..starts.len())];
        for cell in content.iter_mut().take(p + len).skip(p) {
            *cell = Some(i);
        }
    }
    content
}

fn jittered_span(rng: &mut ChaCha8Rng, span: (usize, usize), jitter: f64, t: usize) -> (f64, f64) {
    let len = (span.1 - span.0) as f64;
    let shift = if jitter > 0.0 {
        rng.gen_range(-jitter..=jitter)
    } else {
        0.0
    };
    let mut start = span.0 as f64 + shift;
    let t = t as f64;
    if start < 0.0 {
        start = 0.0;
    }
    if start + len > t {
        start = (t - len).max(0.0);
    }
    (start, (start + len).min(t).max(start + 0.5))
}

fn generate_video(config: &SynthConfig, video_idx: usize) -> Result<(CorpusEntry, LabelMatrix), SynthError> {
    let mut rng = video_rng(config.seed, video_idx);
    let t = config.segments_per_video;
    let l = config.steps_per_video;
    let video_id = format!("synth{:04}", video_idx);
    let spans = place_spans(&mut rng, config)?;
    let content = content_map(&mut rng, &spans, t, config.step_echo_rate);

    let backbone = draw_family(&mut rng, &config.backbone, &content, l);
    let nv = draw_family(&mut rng, &config.nv, &content, l);
    let long = draw_family(&mut rng, &config.long, &content, l);
    let short = draw_family(&mut rng, &config.short, &content, l);

    // steps: clean prototypes with ground-truth boundaries
    let steps: Vec<StepRecord> = spans
        .iter()
        .enumerate()
        .map(|(i, (s, e))| StepRecord {
            text: format!("perform step {} of {}", i + 1, video_id),
            start_sec: None,
            end_sec: None,
            gt_start_sec: Some(*s as f64),
            gt_end_sec: Some(*e as f64),
            task_id: Some(video_id.clone()),
        })
        .collect();

    // narration track: one slot per step, a seeded subset replaced by
    // distractors from an independent pool
    let n_irrelevant =
        ((config.irrelevant_narration_ratio * l as f64).round() as usize).min(l);
    let mut slots: Vec<usize> = (0..l).collect();
    for i in (1..slots.len()).rev() {
        let j = rng.gen_range(0..=i);
        slots.swap(i, j);
    }
    let irrelevant: std::collections::BTreeSet<usize> =
        slots.into_iter().take(n_irrelevant).collect();

    let mut narr_records = Vec::with_capacity(l);
    let mut narr_embs: Vec<Vec<f64>> = Vec::with_capacity(l);
    for (i, span) in spans.iter().enumerate() {
        if irrelevant.contains(&i) {
            let len = rng.gen_range(1..=config.max_span_sec) as f64;
            let start = rng.gen_range(0.0..(t as f64 - len).max(0.5));
            narr_records.push(StepRecord {
                text: format!("off-topic chatter {} in {}", i + 1, video_id),
                start_sec: Some(start),
                end_sec: Some(start + len),
                gt_start_sec: None,
                gt_end_sec: None,
                task_id: None,
            });
            narr_embs.push(unit_vector(&mut rng, config.nv.dim));
        } else {
            let (start, end) = jittered_span(&mut rng, *span, config.timestamp_jitter_sec, t);
            narr_records.push(StepRecord {
                text: format!("now I {}", steps[i].text),
                start_sec: Some(start),
                end_sec: Some(end),
                gt_start_sec: None,
                gt_end_sec: None,
                task_id: None,
            });
            narr_embs.push(nv.prototypes[i].clone());
        }
    }
    // keep narration embeddings aligned with the track's start-time order
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| {
        narr_records[a]
            .start_sec
            .partial_cmp(&narr_records[b].start_sec)
            .unwrap()
            .then(a.cmp(&b))
    });
    let narr_records: Vec<StepRecord> = order.iter().map(|&i| narr_records[i].clone()).collect();
    let narr_embs: Vec<Vec<f64>> = order.iter().map(|&i| narr_embs[i].clone()).collect();
    let narrations = NarrationTrack::new(narr_records)?;

    let to_mat = |rows: &[Vec<f64>]| DenseMatrix::from_rows(rows).expect("finite synth data");
    let mut segment_embeddings = BTreeMap::new();
    segment_embeddings.insert("video_backbone".to_string(), to_mat(&backbone.segments));
    segment_embeddings.insert("long_video".to_string(), to_mat(&long.segments));
    segment_embeddings.insert("short_video".to_string(), to_mat(&short.segments));
    let mut step_embeddings = BTreeMap::new();
    step_embeddings.insert("text_backbone".to_string(), to_mat(&backbone.prototypes));
    step_embeddings.insert("nv_text".to_string(), to_mat(&nv.prototypes));
    step_embeddings.insert("long_text".to_string(), to_mat(&long.prototypes));
    step_embeddings.insert("short_text".to_string(), to_mat(&short.prototypes));
    let mut narration_embeddings = BTreeMap::new();
    narration_embeddings.insert("nv_text".to_string(), to_mat(&narr_embs));

    let entry = CorpusEntry {
        video_id,
        num_segments: t,
        segment_embeddings,
        narrations,
        steps,
        step_embeddings,
        narration_embeddings,
    };
    entry.validate(&[])?;

    let gt_rows: Vec<Vec<f64>> = spans
        .iter()
        .map(|(s, e)| {
            let mut row = vec![0.0; t];
            for cell in row.iter_mut().take(*e).skip(*s) {
                *cell = 1.0;
            }
            row
        })
        .collect();
    let gt = LabelMatrix::from_rows(gt_rows, None, None)?;
    Ok((entry, gt))
}

/// Generates the whole corpus in memory.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let mut entries = Vec::with_capacity(config.num_videos);
    let mut gt_labels = Vec::with_capacity(config.num_videos);
    for idx in 0..config.num_videos {
        let (entry, gt) = generate_video(config, idx)?;
        entries.push(entry);
        gt_labels.push(gt);
    }
    Ok(SynthCorpus { entries, gt_labels })
}

/// Writes a generated corpus as a standard manifest plus per-video files,
/// with ground-truth labels under `gt_labels/`. Returns the manifest path.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<PathBuf, SynthError> {
    std::fs::create_dir_all(dir.join("gt_labels")).map_err(|e| {
        SynthError::Corpus(CorpusError::Io {
            path: dir.display().to_string(),
            source: e,
        })
    })?;
    let mut manifest = Manifest::default();
    for (entry, gt) in corpus.entries.iter().zip(&corpus.gt_labels) {
        let vid = &entry.video_id;
        let mut m_entry = ManifestEntry {
            narrations: format!("{}.narrations.jsonl", vid),
            steps: Some(format!("{}.steps.jsonl", vid)),
            ..Default::default()
        };
        for (enc, m) in &entry.segment_embeddings {
            let rel = format!("{}.{}.segments.emb", vid, enc);
            save_embedding_matrix(m, &dir.join(&rel))?;
            m_entry.segment_embeddings.insert(enc.clone(), rel);
        }
        for (enc, m) in &entry.step_embeddings {
            let rel = format!("{}.{}.steps.emb", vid, enc);
            save_embedding_matrix(m, &dir.join(&rel))?;
            m_entry.step_embeddings.insert(enc.clone(), rel);
        }
        for (enc, m) in &entry.narration_embeddings {
            let rel = format!("{}.{}.narrations.emb", vid, enc);
            save_embedding_matrix(m, &dir.join(&rel))?;
            m_entry.narration_embeddings.insert(enc.clone(), rel);
        }
        save_track(&entry.narrations.items, &dir.join(&m_entry.narrations))?;
        save_track(&entry.steps, &dir.join(m_entry.steps.as_ref().unwrap()))?;
        LabelFile::from_matrix(vid, gt)?.save(&dir.join(format!("gt_labels/{}.labels.json", vid)))?;
        manifest.videos.insert(vid.clone(), m_entry);
    }
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::build_sv_labels;
    use crate::pathways::{compute_fused, PathwayConfig};

    fn noiseless_config() -> SynthConfig {
        SynthConfig {
            seed: 5,
            num_videos: 4,
            segments_per_video: 32,
            steps_per_video: 4,
            timestamp_jitter_sec: 0.0,
            irrelevant_narration_ratio: 0.0,
            backbone: FamilyConfig { dim: 16, noise_sigma: 0.0 },
            nv: FamilyConfig { dim: 16, noise_sigma: 0.0 },
            long: FamilyConfig { dim: 16, noise_sigma: 0.0 },
            short: FamilyConfig { dim: 16, noise_sigma: 0.0 },
            ..Default::default()
        }
    }

    fn gt_span(gt: &LabelMatrix, row: usize) -> (usize, usize) {
        let cells: Vec<usize> = (0..gt.num_segments())
            .filter(|&c| gt.is_positive(row, c))
            .collect();
        (cells[0], cells[cells.len() - 1] + 1)
    }

    #[test]
    fn spans_are_disjoint_sorted_and_sized() {
        for seed in 0..20 {
            let config = SynthConfig { seed, ..Default::default() };
            let corpus = generate(&config).unwrap();
            for gt in &corpus.gt_labels {
                let mut prev_end = 0;
                for r in 0..gt.rows() {
                    let (s, e) = gt_span(gt, r);
                    assert!(s >= prev_end, "seed {} row {} overlaps", seed, r);
                    let len = e - s;
                    assert!(len >= config.min_span_sec && len <= config.max_span_sec);
                    prev_end = e;
                }
            }
        }
    }

    #[test]
    fn noiseless_fused_argmax_recovers_every_step() {
        let corpus = generate(&noiseless_config()).unwrap();
        let pw = PathwayConfig::default();
        for (entry, gt) in corpus.entries.iter().zip(&corpus.gt_labels) {
            let fused = compute_fused(entry, &pw).unwrap();
            for r in 0..fused.m.rows() {
                let row = fused.m.row(r);
                let argmax = (0..row.len())
                    .max_by(|a, b| row[*a].partial_cmp(&row[*b]).unwrap())
                    .unwrap();
                let (s, e) = gt_span(gt, r);
                assert!(argmax >= s && argmax < e, "row {} argmax {} outside [{}, {})", r, argmax, s, e);
            }
        }
    }

    #[test]
    fn noiseless_labels_have_perfect_placement_at_zero_window() {
        let corpus = generate(&noiseless_config()).unwrap();
        let pw = PathwayConfig::default();
        for (entry, gt) in corpus.entries.iter().zip(&corpus.gt_labels) {
            let fused = compute_fused(entry, &pw).unwrap();
            let labels = build_sv_labels(&fused, 0.65, 0).unwrap();
            for r in 0..labels.rows() {
                // every step survives the filter
                assert!(labels.kept(r));
                let (s, e) = gt_span(gt, r);
                // and its single labeled cell sits inside the true span
                let cells: Vec<usize> = (0..labels.num_segments())
                    .filter(|&c| labels.is_positive(r, c))
                    .collect();
                assert_eq!(cells.len(), 1);
                assert!(cells[0] >= s && cells[0] < e);
            }
        }
    }

    #[test]
    fn all_irrelevant_narrations_still_recovered_by_direct_pathways() {
        // wide-enough encoders keep harmonized background similarities well
        // below the two agreeing direct pathways
        let config = SynthConfig {
            irrelevant_narration_ratio: 1.0,
            nv: FamilyConfig { dim: 64, noise_sigma: 0.0 },
            long: FamilyConfig { dim: 64, noise_sigma: 0.0 },
            short: FamilyConfig { dim: 64, noise_sigma: 0.0 },
            ..noiseless_config()
        };
        let corpus = generate(&config).unwrap();
        // no narration carries a step prototype any more
        let pw = PathwayConfig::default();
        for (entry, gt) in corpus.entries.iter().zip(&corpus.gt_labels) {
            let fused = compute_fused(entry, &pw).unwrap();
            for r in 0..fused.m.rows() {
                let row = fused.m.row(r);
                let argmax = (0..row.len())
                    .max_by(|a, b| row[*a].partial_cmp(&row[*b]).unwrap())
                    .unwrap();
                let (s, e) = gt_span(gt, r);
                assert!(argmax >= s && argmax < e);
            }
        }
    }

    #[test]
    fn irrelevant_ratio_one_means_zero_real_narrations() {
        let config = SynthConfig {
            irrelevant_narration_ratio: 1.0,
            ..noiseless_config()
        };
        let corpus = generate(&config).unwrap();
        for entry in &corpus.entries {
            for item in &entry.narrations.items {
                assert!(item.text.contains("off-topic"));
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let config = SynthConfig {
            num_videos: 2,
            ..Default::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_corpus(&generate(&config).unwrap(), d1.path()).unwrap();
        write_corpus(&generate(&config).unwrap(), d2.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(d1.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(names.len() > 5);
        for name in names {
            let p1 = d1.path().join(&name);
            if p1.is_dir() {
                continue;
            }
            let b1 = std::fs::read(&p1).unwrap();
            let b2 = std::fs::read(d2.path().join(&name)).unwrap();
            assert_eq!(b1, b2, "file {} differs", name);
        }
    }

    #[test]
    fn written_corpus_loads_back() {
        let config = SynthConfig {
            num_videos: 2,
            segments_per_video: 16,
            steps_per_video: 3,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&config).unwrap();
        let manifest = write_corpus(&corpus, dir.path()).unwrap();
        let loaded = crate::corpus::load_corpus(&manifest).unwrap();
        assert_eq!(loaded.len(), 2);
        for (mem, disk) in corpus.entries.iter().zip(&loaded) {
            assert_eq!(mem.video_id, disk.video_id);
            assert_eq!(mem.num_segments, disk.num_segments);
            assert_eq!(mem.steps.len(), disk.steps.len());
            assert_eq!(mem.narrations.len(), disk.narrations.len());
            // embeddings round-trip within f32
            let a = &mem.segment_embeddings["video_backbone"];
            let b = &disk.segment_embeddings["video_backbone"];
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn infeasible_packing_rejected() {
        let config = SynthConfig {
            segments_per_video: 8,
            steps_per_video: 5,
            min_span_sec: 2,
            ..Default::default()
        };
        assert!(matches!(
            generate(&config),
            Err(SynthError::InfeasiblePacking { .. })
        ));
    }
}
