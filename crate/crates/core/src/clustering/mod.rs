//! Semantic clustering of sentence embeddings: K-means, DBSCAN and HDBSCAN
//! over Euclidean distance on unit vectors, plus cluster statistics.

mod dbscan;
mod hdbscan;
mod kmeans;

pub use dbscan::dbscan;
pub use hdbscan::hdbscan;
pub use kmeans::kmeans;

use crate::ids::{ClusterId, SentenceId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Pinned defaults for the density methods. These are configuration: every
/// entry point takes them as parameters and the CLI exposes flags.
pub const DEFAULT_DBSCAN_EPS: f64 = 0.35;
pub const DEFAULT_DBSCAN_MIN_PTS: usize = 5;
pub const DEFAULT_HDBSCAN_MIN_CLUSTER_SIZE: usize = 5;
pub const DEFAULT_KMEANS_MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k must be positive")]
    ZeroK,
    #[error("k = {k} exceeds the number of points {n}")]
    KExceedsN { k: usize, n: usize },
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("min_pts must be positive")]
    ZeroMinPts,
    #[error("min_cluster_size must be >= 2, got {0}")]
    BadMinClusterSize(usize),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("assignment has no clusters")]
    NoClusters,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad clusters file at line {line}: {msg}")]
    BadClustersFile { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Kmeans { k: usize },
    Dbscan { eps: f64, min_pts: usize },
    Hdbscan { min_cluster_size: usize },
}

/// Sentence -> cluster map plus its exact inverse. Noise (density methods
/// only) is `None`; K-means assigns every sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub method: Method,
    labels: Vec<Option<ClusterId>>,
    members: BTreeMap<ClusterId, Vec<SentenceId>>,
}

impl ClusterAssignment {
    pub fn from_labels(method: Method, labels: Vec<Option<ClusterId>>) -> Self {
        let mut members: BTreeMap<ClusterId, Vec<SentenceId>> = BTreeMap::new();
        for (i, label) in labels.iter().enumerate() {
            if let Some(c) = label {
                members.entry(*c).or_default().push(SentenceId(i as u32));
            }
        }
        Self {
            method,
            labels,
            members,
        }
    }

    pub fn label(&self, id: SentenceId) -> Option<ClusterId> {
        self.labels.get(id.index()).copied().flatten()
    }

    pub fn labels(&self) -> &[Option<ClusterId>] {
        &self.labels
    }

    pub fn members(&self) -> &BTreeMap<ClusterId, Vec<SentenceId>> {
        &self.members
    }

    pub fn cluster_ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.members.keys().copied()
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn num_points(&self) -> usize {
        self.labels.len()
    }

    /// Bit per sentence: true when the sentence belongs to a cluster.
    pub fn clustered_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_some()).collect()
    }

    /// The distinct, sorted cluster ids of one report's sentences; noise
    /// sentences are skipped.
    pub fn cluster_set_of(&self, sentence_ids: &[SentenceId]) -> Vec<ClusterId> {
        let mut set: Vec<ClusterId> = sentence_ids
            .iter()
            .filter_map(|s| self.label(*s))
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    }
}

/// Statistics over non-noise clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStats {
    pub total_sentences_clustered: usize,
    pub total_clusters: usize,
    pub mean_size: f64,
    pub median_size: f64,
    pub min_size: usize,
    pub max_size: usize,
}

pub fn compute_stats(assignment: &ClusterAssignment) -> Result<ClusterStats, ClusterError> {
    let mut sizes: Vec<usize> = assignment.members.values().map(|m| m.len()).collect();
    if sizes.is_empty() {
        return Err(ClusterError::NoClusters);
    }
    sizes.sort_unstable();
    let total: usize = sizes.iter().sum();
    let n = sizes.len();
    let median = if n % 2 == 1 {
        sizes[n / 2] as f64
    } else {
        (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0
    };
    Ok(ClusterStats {
        total_sentences_clustered: total,
        total_clusters: n,
        mean_size: total as f64 / n as f64,
        median_size: median,
        min_size: sizes[0],
        max_size: sizes[n - 1],
    })
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Aligned two-column table with the conventional statistic names.
pub fn render_stats_table(stats: &ClusterStats) -> String {
    let rows = [
        ("Total Sentences", group_thousands(stats.total_sentences_clustered)),
        ("Total Clusters", group_thousands(stats.total_clusters)),
        ("Average Cluster Size", format!("{:.2}", stats.mean_size)),
        ("Median Cluster Size", format!("{:.1}", stats.median_size)),
        ("Min Cluster Size", group_thousands(stats.min_size)),
        ("Max Cluster Size", group_thousands(stats.max_size)),
    ];
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap();
    let mut out = format!("{:<name_width$}  Value\n", "Statistic");
    for (name, value) in rows {
        out.push_str(&format!("{name:<name_width$}  {value}\n"));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    sentence_id: u32,
    label: i64,
}

/// Write clusters.jsonl: one `{sentence_id, label}` record per sentence,
/// label -1 for noise.
pub fn write_clusters(path: &Path, assignment: &ClusterAssignment) -> Result<(), ClusterError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, label) in assignment.labels.iter().enumerate() {
        let row = LabelRow {
            sentence_id: i as u32,
            label: label.map(|c| c.0 as i64).unwrap_or(-1),
        };
        serde_json::to_writer(&mut w, &row)
            .map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_clusters(path: &Path, method: Method) -> Result<ClusterAssignment, ClusterError> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row: LabelRow =
            serde_json::from_str(&line?).map_err(|e| ClusterError::BadClustersFile {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if row.sentence_id as usize != i {
            return Err(ClusterError::BadClustersFile {
                line: i + 1,
                msg: format!("out-of-order sentence_id {}", row.sentence_id),
            });
        }
        labels.push(if row.label < 0 {
            None
        } else {
            Some(ClusterId(row.label as u32))
        });
    }
    Ok(ClusterAssignment::from_labels(method, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignment_with_sizes(sizes: &[usize]) -> ClusterAssignment {
        let mut labels = Vec::new();
        for (c, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                labels.push(Some(ClusterId(c as u32)));
            }
        }
        ClusterAssignment::from_labels(Method::Kmeans { k: sizes.len() }, labels)
    }

    #[test]
    fn stats_hand_case() {
        let stats = compute_stats(&assignment_with_sizes(&[5, 11, 20])).unwrap();
        assert_eq!(stats.total_sentences_clustered, 36);
        assert_eq!(stats.total_clusters, 3);
        assert_eq!(format!("{:.2}", stats.mean_size), "12.00");
        assert_eq!(format!("{:.1}", stats.median_size), "11.0");
        assert_eq!(stats.min_size, 5);
        assert_eq!(stats.max_size, 20);
    }

    #[test]
    fn stats_reference_arithmetic() {
        // 184,535 sentences over 5,000 clusters: mean prints as 36.91
        let mut sizes = vec![37usize; 4535];
        sizes.extend(vec![36usize; 465]);
        let stats = compute_stats(&assignment_with_sizes(&sizes)).unwrap();
        assert_eq!(stats.total_sentences_clustered, 184_535);
        assert_eq!(stats.total_clusters, 5_000);
        assert_eq!(format!("{:.2}", stats.mean_size), "36.91");
    }

    #[test]
    fn stats_singleton_cluster() {
        let stats = compute_stats(&assignment_with_sizes(&[7])).unwrap();
        assert_eq!(stats.mean_size, 7.0);
        assert_eq!(stats.median_size, 7.0);
        assert_eq!(stats.min_size, 7);
        assert_eq!(stats.max_size, 7);
    }

    #[test]
    fn stats_zero_clusters_is_an_error() {
        let a = ClusterAssignment::from_labels(
            Method::Dbscan { eps: 0.35, min_pts: 5 },
            vec![None, None],
        );
        assert!(matches!(compute_stats(&a), Err(ClusterError::NoClusters)));
    }

    #[test]
    fn stats_table_is_aligned() {
        let stats = compute_stats(&assignment_with_sizes(&[5, 11, 20])).unwrap();
        let table = render_stats_table(&stats);
        assert!(table.contains("Average Cluster Size  12.00"));
        assert!(table.contains("Median Cluster Size   11.0"));
    }

    #[test]
    fn thousands_grouping() {
        assert_eq!(group_thousands(5), "5");
        assert_eq!(group_thousands(1522), "1,522");
        assert_eq!(group_thousands(184535), "184,535");
    }

    #[test]
    fn pinned_density_defaults() {
        assert_eq!(DEFAULT_HDBSCAN_MIN_CLUSTER_SIZE, 5);
        assert_eq!(DEFAULT_DBSCAN_MIN_PTS, 5);
        assert_eq!(DEFAULT_DBSCAN_EPS, 0.35);
    }

    #[test]
    fn clusters_file_roundtrip() {
        let labels = vec![Some(ClusterId(1)), None, Some(ClusterId(0))];
        let a = ClusterAssignment::from_labels(Method::Hdbscan { min_cluster_size: 5 }, labels);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clusters.jsonl");
        write_clusters(&path, &a).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(r#""label":-1"#));
        let b = read_clusters(&path, a.method).unwrap();
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // members is the exact inverse of labels
            #[test]
            fn members_inverts_labels(raw in proptest::collection::vec(-1i64..6, 0..60)) {
                let labels: Vec<Option<ClusterId>> = raw
                    .iter()
                    .map(|&l| if l < 0 { None } else { Some(ClusterId(l as u32)) })
                    .collect();
                let a = ClusterAssignment::from_labels(
                    Method::Dbscan { eps: 0.3, min_pts: 2 },
                    labels.clone(),
                );
                for (c, members) in a.members() {
                    for s in members {
                        prop_assert_eq!(labels[s.index()], Some(*c));
                    }
                }
                let member_total: usize = a.members().values().map(|v| v.len()).sum();
                let labeled = labels.iter().filter(|l| l.is_some()).count();
                prop_assert_eq!(member_total, labeled);
            }
        }
    }
}
