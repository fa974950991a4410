//! Scratch probe for tuning synth defaults. Deleted before release.

use steplab::labels::{build_sv_labels, label_agreement, LabelMatrix};
use steplab::pathways::{compute_enabled, fuse_pathways, Pathway, PathwayConfig};
use steplab::synth::{generate, FamilyConfig, SynthConfig};

fn corpus_f1(
    entries: &[steplab::corpus::CorpusEntry],
    gts: &[LabelMatrix],
    enabled: Vec<Pathway>,
    gamma: f64,
    window: usize,
) -> (f64, f64) {
    let pw = PathwayConfig {
        enabled,
        ..Default::default()
    };
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut kept = 0usize;
    let mut total = 0usize;
    for (entry, gt) in entries.iter().zip(gts) {
        let scores = compute_enabled(entry, &pw).unwrap();
        let fused = fuse_pathways(&scores, &pw).unwrap();
        let labels = build_sv_labels(&fused, gamma, window).unwrap();
        kept += labels.kept_count();
        total += labels.rows();
        let ag = label_agreement(&labels, gt).unwrap();
        // accumulate via counts: recompute raw counts
        for r in 0..labels.rows() {
            for c in 0..labels.num_segments() {
                match (labels.is_positive(r, c), gt.is_positive(r, c)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
        }
        let _ = ag;
    }
    let p = tp as f64 / (tp + fp).max(1) as f64;
    let r = tp as f64 / (tp + fn_).max(1) as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (f1, kept as f64 / total as f64)
}

#[test]
#[ignore]
fn probe_fusion_trend() {
    for (dim, echo, min_span, max_span) in [
        (16usize, 0.6, 4usize, 8usize),
        (16, 0.8, 4, 8),
        (16, 1.0, 4, 8),
        (24, 0.8, 4, 8),
        (24, 1.0, 4, 8),
        (32, 0.8, 4, 8),
        (32, 1.0, 4, 8),
        (24, 0.8, 5, 9),
    ] {
        let mut sums = std::collections::BTreeMap::new();
        for seed in 0..5u64 {
            let config = SynthConfig {
                seed,
                num_videos: 50,
                segments_per_video: 64,
                steps_per_video: 6,
                min_span_sec: min_span,
                max_span_sec: max_span,
                timestamp_jitter_sec: 3.0,
                irrelevant_narration_ratio: 0.3,
                step_echo_rate: echo,
                nv: FamilyConfig { dim, noise_sigma: 0.0 },
                long: FamilyConfig { dim, noise_sigma: 0.4 },
                short: FamilyConfig { dim, noise_sigma: 0.4 },
                ..Default::default()
            };
            let corpus = generate(&config).unwrap();
            use Pathway::*;
            let combos: Vec<(&str, Vec<Pathway>)> = vec![
                ("snv", vec![Snv]),
                ("long", vec![SvLong]),
                ("short", vec![SvShort]),
                ("snv+long", vec![Snv, SvLong]),
                ("snv+short", vec![Snv, SvShort]),
                ("long+short", vec![SvLong, SvShort]),
                ("all", vec![Snv, SvLong, SvShort]),
            ];
            for (name, combo) in combos {
                let (f1, _) = corpus_f1(&corpus.entries, &corpus.gt_labels, combo, 0.65, 2);
                *sums.entry(name).or_insert(0.0) += f1 / 5.0;
            }
        }
        println!("dim={} span={}..{}: {:?}", dim, min_span, max_span, sums);
    }
}

#[test]
#[ignore]
fn probe_gamma_monotonicity() {
    for dim in [12usize, 16] {
        for seed in 0..3u64 {
            let config = SynthConfig {
                seed,
                num_videos: 50,
                segments_per_video: 64,
                steps_per_video: 6,
                timestamp_jitter_sec: 3.0,
                irrelevant_narration_ratio: 0.3,
                nv: FamilyConfig { dim, noise_sigma: 0.0 },
                long: FamilyConfig { dim, noise_sigma: 0.4 },
                short: FamilyConfig { dim, noise_sigma: 0.4 },
                ..Default::default()
            };
            let corpus = generate(&config).unwrap();
            use Pathway::*;
            let mut ratios = Vec::new();
            for gamma in [0.60, 0.65, 0.70] {
                let (_, kept) = corpus_f1(
                    &corpus.entries,
                    &corpus.gt_labels,
                    vec![Snv, SvLong, SvShort],
                    gamma,
                    2,
                );
                ratios.push(kept);
            }
            println!("dim={} seed={} kept ratios: {:?}", dim, seed, ratios);
        }
    }
}
