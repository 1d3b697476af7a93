//! Cluster-overlap reward for generated reports in the
//! `<think> findings </think><answer> impression </answer>` format:
//! set-F1 between ground-truth and generated finding clusters plus an
//! exact-match indicator on the impression.

use crate::clustering::ClusterAssignment;
use crate::corpus::{split_sentences, SentenceTable, SplitConfig};
use crate::embedding::{fallback_embed, nearest_clustered_sentence, EmbeddingMatrix};
use crate::ids::ClusterId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("ground-truth cluster set is empty")]
    EmptyGroundTruth,
}

pub const DEFAULT_SIM_THRESHOLD: f32 = 0.8;

/// One parsed generation. `parse_ok` is false when either tag pair is
/// missing or malformed; reward for such generations is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRecord {
    pub raw_text: String,
    pub findings_part: String,
    pub impression_part: String,
    pub gen_clusters: BTreeSet<ClusterId>,
    pub parse_ok: bool,
}

/// Extract the first `<think>...</think>` span and the first subsequent
/// `<answer>...</answer>` span. Never fails; failure is encoded in
/// `parse_ok`.
pub fn parse_generation(text: &str) -> GenerationRecord {
    let failed = || GenerationRecord {
        raw_text: text.to_string(),
        findings_part: String::new(),
        impression_part: String::new(),
        gen_clusters: BTreeSet::new(),
        parse_ok: false,
    };
    let Some(think_open) = text.find("<think>") else {
        return failed();
    };
    let think_body_start = think_open + "<think>".len();
    let Some(think_close_rel) = text[think_body_start..].find("</think>") else {
        return failed();
    };
    let findings = &text[think_body_start..think_body_start + think_close_rel];
    let after_think = think_body_start + think_close_rel + "</think>".len();

    let Some(answer_open_rel) = text[after_think..].find("<answer>") else {
        return failed();
    };
    let answer_body_start = after_think + answer_open_rel + "<answer>".len();
    let Some(answer_close_rel) = text[answer_body_start..].find("</answer>") else {
        return failed();
    };
    let impression = &text[answer_body_start..answer_body_start + answer_close_rel];

    GenerationRecord {
        raw_text: text.to_string(),
        findings_part: findings.trim().to_string(),
        impression_part: impression.trim().to_string(),
        gen_clusters: BTreeSet::new(),
        parse_ok: true,
    }
}

/// How out-of-corpus sentences get embedded for nearest-neighbor mapping.
/// `ExactOnly` is for corpora whose embeddings came from an external
/// encoder the scorer cannot run; novel sentences then stay unassigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "embedder", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Fallback { dim: usize, seed: u64 },
    ExactOnly,
}

/// Per generated sentence: an exact normalized-text match reuses that
/// sentence's cluster; otherwise embed and take the nearest clustered
/// training sentence's cluster when cosine clears the threshold.
pub fn map_generation_to_clusters(
    findings_part: &str,
    matrix: &EmbeddingMatrix,
    assignment: &ClusterAssignment,
    table: &SentenceTable,
    embedder: &EmbedderConfig,
    sim_threshold: f32,
) -> BTreeSet<ClusterId> {
    let mut clusters = BTreeSet::new();
    if findings_part.trim().is_empty() {
        return clusters;
    }
    let mask = assignment.clustered_mask();
    let any_clustered = mask.iter().any(|&b| b);
    for sentence in split_sentences(findings_part, SplitConfig::default()) {
        if let Some(id) = table.lookup(&sentence) {
            if let Some(c) = assignment.label(id) {
                clusters.insert(c);
            }
            continue;
        }
        let EmbedderConfig::Fallback { dim, seed } = embedder else {
            continue;
        };
        if !any_clustered || *dim != matrix.dim() {
            continue;
        }
        let Ok(query) = fallback_embed(&sentence, *dim, *seed) else {
            continue;
        };
        if let Ok((nearest, cos)) = nearest_clustered_sentence(&query, matrix, &mask) {
            if cos >= sim_threshold {
                if let Some(c) = assignment.label(nearest) {
                    clusters.insert(c);
                }
            }
        }
    }
    clusters
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScore {
    pub f1: f64,
    pub exact: u8,
    pub total: f64,
}

impl RewardScore {
    pub fn zero() -> Self {
        Self {
            f1: 0.0,
            exact: 0,
            total: 0.0,
        }
    }
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// f1 = 2|gt ∩ gen| / (|gt| + |gen|); exact = 1 iff the
/// whitespace-collapsed, case-preserved impressions are equal;
/// total = f1 + exact.
pub fn score(
    gt_clusters: &BTreeSet<ClusterId>,
    gen_clusters: &BTreeSet<ClusterId>,
    gt_impression: &str,
    gen_impression: &str,
) -> Result<RewardScore, RewardError> {
    if gt_clusters.is_empty() {
        return Err(RewardError::EmptyGroundTruth);
    }
    let intersection = gt_clusters.intersection(gen_clusters).count();
    let f1 = 2.0 * intersection as f64 / (gt_clusters.len() + gen_clusters.len()) as f64;
    let exact = u8::from(collapse_whitespace(gt_impression) == collapse_whitespace(gen_impression));
    Ok(RewardScore {
        f1,
        exact,
        total: f1 + exact as f64,
    })
}

/// Everything a scorer needs from the training corpus side.
pub struct ScoringContext<'a> {
    pub matrix: &'a EmbeddingMatrix,
    pub assignment: &'a ClusterAssignment,
    pub table: &'a SentenceTable,
    pub embedder: EmbedderConfig,
    pub sim_threshold: f32,
}

/// Full scoring path for one generated text against a report's ground
/// truth. Unparseable generations earn zero: format compliance is part of
/// the contract.
pub fn evaluate_generation(
    text: &str,
    gt_clusters: &BTreeSet<ClusterId>,
    gt_impression: &str,
    ctx: &ScoringContext<'_>,
) -> Result<(GenerationRecord, RewardScore), RewardError> {
    if gt_clusters.is_empty() {
        return Err(RewardError::EmptyGroundTruth);
    }
    let mut record = parse_generation(text);
    if !record.parse_ok {
        return Ok((record, RewardScore::zero()));
    }
    record.gen_clusters = map_generation_to_clusters(
        &record.findings_part,
        ctx.matrix,
        ctx.assignment,
        ctx.table,
        &ctx.embedder,
        ctx.sim_threshold,
    );
    let score = score(
        gt_clusters,
        &record.gen_clusters,
        gt_impression,
        &record.impression_part,
    )?;
    Ok((record, score))
}
