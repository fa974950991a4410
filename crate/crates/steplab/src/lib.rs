//! Weakly supervised step grounding for narrated instructional videos.
//!
//! The pipeline: summarize narrations into procedure steps through an LLM
//! endpoint, score step-segment alignment along multiple pathways, fuse the
//! pathways into pseudo-labels, train a small two-stream transformer with a
//! multiple-instance contrastive loss, and report grounding recall.

pub mod corpus;
pub mod eval;
pub mod labels;
pub mod mat;
pub mod model;
pub mod pathways;
pub mod steps;
pub mod synth;
pub mod train;
