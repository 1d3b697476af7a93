//! Cluster sign determination: each cluster gets +1 (normal/healthy finding)
//! or -1 (abnormal/suspicious) from one randomly chosen representative
//! sentence, classified by an external LLM or by an offline rule cascade.
//!
//! Sign is decided from a single representative per cluster, not a majority
//! vote over members.

pub mod llm;

use crate::clustering::ClusterAssignment;
use crate::corpus::SentenceTable;
use crate::ids::{ClusterId, SentenceId};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignError {
    #[error("cannot classify an empty sentence")]
    EmptySentence,
    #[error("no parsable positive/negative token after {attempts} attempts; last response: {raw:?}")]
    Unparsable { attempts: u32, raw: String },
    #[error("llm transport failed after {attempts} attempts: {msg}")]
    Transport { attempts: u32, msg: String },
    #[error("llm configuration: {0}")]
    Config(String),
    #[error("cluster {cluster}: {source}")]
    Cluster {
        cluster: ClusterId,
        #[source]
        source: Box<SignError>,
    },
    #[error("sentence {0} missing from table")]
    UnknownSentence(SentenceId),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            1 => Some(Sign::Positive),
            -1 => Some(Sign::Negative),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Sign::Positive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Llm,
    Fallback,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignEntry {
    pub sign: Sign,
    pub provenance: Provenance,
    pub representative: SentenceId,
}

/// Total map over the non-noise clusters of one assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignMap {
    entries: BTreeMap<ClusterId, SignEntry>,
}

impl SignMap {
    pub fn insert(&mut self, cluster: ClusterId, entry: SignEntry) {
        self.entries.insert(cluster, entry);
    }

    pub fn get(&self, cluster: ClusterId) -> Option<&SignEntry> {
        self.entries.get(&cluster)
    }

    pub fn sign(&self, cluster: ClusterId) -> Option<Sign> {
        self.entries.get(&cluster).map(|e| e.sign)
    }

    pub fn is_positive(&self, cluster: ClusterId) -> bool {
        self.sign(cluster).map(Sign::is_positive).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClusterId, &SignEntry)> {
        self.entries.iter().map(|(c, e)| (*c, e))
    }
}

/// Uniform pick per cluster under a per-cluster stream seeded with
/// seed XOR cluster id; deterministic for a fixed seed.
pub fn pick_representative(
    assignment: &ClusterAssignment,
    seed: u64,
) -> BTreeMap<ClusterId, SentenceId> {
    assignment
        .members()
        .iter()
        .map(|(c, members)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ c.0 as u64);
            let idx = rng.gen_range(0..members.len());
            (*c, members[idx])
        })
        .collect()
}

const NEGATORS: [&str; 4] = ["no", "without", "free", "denies"];
const NORMAL_MARKERS: [&str; 6] = ["unremarkable", "normal", "clear", "intact", "midline", "patent"];
const NORMAL_PHRASES: [&str; 2] = ["within normal limits", "free of"];
// token stems so plurals and inflections match
const PATHOLOGY_STEMS: [&str; 20] = [
    "mass",
    "effusion",
    "opacit",
    "fractur",
    "cardiomegaly",
    "infiltrat",
    "pneumothora",
    "edema",
    "consolidat",
    "atelectas",
    "nodul",
    "granulom",
    "lesion",
    "pneumonia",
    "abnormalit",
    "deformit",
    "osteopenia",
    "degenerat",
    "emphysema",
    "hernia",
];

/// Offline rule cascade: negated pathology or normality wording is positive,
/// an un-negated pathology keyword is negative, and anything unrecognized is
/// negative so uncertain material never feeds enrichment.
pub fn classify_sign_fallback(sentence: &str) -> Result<Sign, SignError> {
    let normalized = crate::corpus::normalize_sentence(sentence, Default::default());
    if normalized.is_empty() {
        return Err(SignError::EmptySentence);
    }
    let tokens: Vec<&str> = normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();

    let mut negator_seen = false;
    let mut unnegated_pathology = false;
    for token in &tokens {
        if NEGATORS.contains(token) {
            negator_seen = true;
            continue;
        }
        if PATHOLOGY_STEMS.iter().any(|stem| token.starts_with(stem)) && !negator_seen {
            unnegated_pathology = true;
        }
    }
    if unnegated_pathology {
        return Ok(Sign::Negative);
    }
    let marker = tokens.iter().any(|t| NORMAL_MARKERS.contains(t))
        || NORMAL_PHRASES.iter().any(|p| normalized.contains(p))
        || negator_seen;
    if marker {
        Ok(Sign::Positive)
    } else {
        Ok(Sign::Negative)
    }
}

/// Anything that can turn a representative sentence into a sign.
pub trait SignClassifier {
    fn classify(&self, sentence: &str) -> Result<Sign, SignError>;
    fn provenance(&self) -> Provenance;
}

pub struct FallbackClassifier;

impl SignClassifier for FallbackClassifier {
    fn classify(&self, sentence: &str) -> Result<Sign, SignError> {
        classify_sign_fallback(sentence)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Fallback
    }
}

/// Pick one representative per cluster and classify it. Classifier errors
/// propagate with the cluster id attached.
pub fn sign_all_clusters(
    assignment: &ClusterAssignment,
    table: &SentenceTable,
    classifier: &dyn SignClassifier,
    seed: u64,
) -> Result<SignMap, SignError> {
    let reps = pick_representative(assignment, seed);
    let mut map = SignMap::default();
    for (cluster, rep) in reps {
        let sentence = table
            .get(rep)
            .ok_or(SignError::UnknownSentence(rep))?;
        let sign = classifier.classify(sentence).map_err(|e| SignError::Cluster {
            cluster,
            source: Box::new(e),
        })?;
        map.insert(
            cluster,
            SignEntry {
                sign,
                provenance: classifier.provenance(),
                representative: rep,
            },
        );
    }
    Ok(map)
}

#[derive(Serialize, Deserialize)]
struct SignRow {
    cluster_id: u32,
    sign: i8,
    provenance: Provenance,
    representative_sentence_id: u32,
}

pub fn write_signs(path: &Path, map: &SignMap) -> Result<(), SignError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (cluster, entry) in map.iter() {
        let row = SignRow {
            cluster_id: cluster.0,
            sign: entry.sign.value(),
            provenance: entry.provenance,
            representative_sentence_id: entry.representative.0,
        };
        serde_json::to_writer(&mut w, &row)
            .map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_signs(path: &Path) -> Result<SignMap, SignError> {
    let reader = BufReader::new(File::open(path)?);
    let mut map = SignMap::default();
    for line in reader.lines() {
        let row: SignRow = serde_json::from_str(&line?)
            .map_err(std::io::Error::other)?;
        let sign = Sign::from_value(row.sign).ok_or_else(|| {
            SignError::Config(format!("bad sign value {} in signs file", row.sign))
        })?;
        map.insert(
            ClusterId(row.cluster_id),
            SignEntry {
                sign,
                provenance: row.provenance,
                representative: SentenceId(row.representative_sentence_id),
            },
        );
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Method;

    fn assignment(members: &[&[u32]]) -> ClusterAssignment {
        let total: u32 = members.iter().map(|m| m.len() as u32).sum();
        let mut labels = vec![None; total as usize];
        for (c, cluster) in members.iter().enumerate() {
            for &s in cluster.iter() {
                labels[s as usize] = Some(ClusterId(c as u32));
            }
        }
        ClusterAssignment::from_labels(Method::Kmeans { k: members.len() }, labels)
    }

    #[test]
    fn singleton_cluster_is_forced() {
        let a = assignment(&[&[0]]);
        let reps = pick_representative(&a, 123);
        assert_eq!(reps[&ClusterId(0)], SentenceId(0));
    }

    #[test]
    fn representative_is_deterministic() {
        let a = assignment(&[&[0, 1, 2, 3], &[4, 5]]);
        assert_eq!(pick_representative(&a, 9), pick_representative(&a, 9));
    }

    #[test]
    fn representative_is_uniform_over_seeds() {
        let a = assignment(&[&[0, 1, 2, 3]]);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for seed in 0..draws {
            let rep = pick_representative(&a, seed as u64)[&ClusterId(0)];
            counts[rep.index()] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - 0.25).abs() <= 0.02,
                "member {i} frequency {freq} outside 0.25 +/- 0.02"
            );
        }
    }

    #[test]
    fn fallback_negated_pathology_is_positive() {
        assert_eq!(
            classify_sign_fallback("there is no pneumothorax").unwrap(),
            Sign::Positive
        );
        assert_eq!(
            classify_sign_fallback("no pleural effusion").unwrap(),
            Sign::Positive
        );
        assert_eq!(
            classify_sign_fallback("lungs are clear without effusion").unwrap(),
            Sign::Positive
        );
        assert_eq!(
            classify_sign_fallback("heart size within normal limits").unwrap(),
            Sign::Positive
        );
    }

    #[test]
    fn fallback_unnegated_pathology_is_negative() {
        assert_eq!(
            classify_sign_fallback("moderate cardiomegaly").unwrap(),
            Sign::Negative
        );
        assert_eq!(
            classify_sign_fallback("right hilar mass is suspected").unwrap(),
            Sign::Negative
        );
        // pathology before the negator stays negative
        assert_eq!(
            classify_sign_fallback("cardiomegaly without effusion").unwrap(),
            Sign::Negative
        );
        // "abnormality" must not read as the marker "normal"
        assert_eq!(
            classify_sign_fallback("there is an acute abnormality").unwrap(),
            Sign::Negative
        );
    }

    #[test]
    fn fallback_defaults_to_negative() {
        assert_eq!(classify_sign_fallback("xyzzy qwerty").unwrap(), Sign::Negative);
    }

    #[test]
    fn fallback_rejects_empty() {
        assert!(matches!(
            classify_sign_fallback("  "),
            Err(SignError::EmptySentence)
        ));
    }

    #[test]
    fn fallback_is_pure() {
        for s in ["no effusion", "large mass", "word salad here"] {
            assert_eq!(
                classify_sign_fallback(s).unwrap(),
                classify_sign_fallback(s).unwrap()
            );
        }
    }

    #[test]
    fn sign_all_composes_and_is_total() {
        let mut table = SentenceTable::new();
        let s0 = table.intern("no pleural effusion");
        let s1 = table.intern("moderate cardiomegaly");
        let s2 = table.intern("the lungs are clear");
        let a = assignment(&[&[s0.0], &[s1.0], &[s2.0]]);
        let map = sign_all_clusters(&a, &table, &FallbackClassifier, 7).unwrap();
        assert_eq!(map.len(), 3);
        for (_, entry) in map.iter() {
            assert_eq!(entry.provenance, Provenance::Fallback);
        }
        assert_eq!(map.sign(ClusterId(0)), Some(Sign::Positive));
        assert_eq!(map.sign(ClusterId(1)), Some(Sign::Negative));
        assert_eq!(map.sign(ClusterId(2)), Some(Sign::Positive));
        // representative is a member of its cluster
        for (c, entry) in map.iter() {
            assert!(a.members()[&c].contains(&entry.representative));
        }
    }

    #[test]
    fn signs_file_roundtrip() {
        let mut map = SignMap::default();
        map.insert(
            ClusterId(0),
            SignEntry {
                sign: Sign::Positive,
                provenance: Provenance::Fallback,
                representative: SentenceId(4),
            },
        );
        map.insert(
            ClusterId(3),
            SignEntry {
                sign: Sign::Negative,
                provenance: Provenance::Llm,
                representative: SentenceId(1),
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("signs.jsonl");
        write_signs(&path, &map).unwrap();
        assert_eq!(read_signs(&path).unwrap(), map);
    }
}
