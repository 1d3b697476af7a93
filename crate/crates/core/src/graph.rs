//! Cluster compatibility graph: symmetric co-occurrence counts over report
//! cluster sets, row-normalized weights, and the directional boolean
//! addability relation B[i,j] = [Ã[i,j] > tau_norm and A[i,j] > tau_count
//! and sign(j) = +1]. Thresholds are strict inequalities.

use crate::clustering::ClusterAssignment;
use crate::corpus::Report;
use crate::ids::ClusterId;
use crate::signing::SignMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no co-occurrence signal: every report has an empty cluster set")]
    NoSignal,
    #[error("missing sign for cluster {0} with nonzero co-occurrence row")]
    MissingSign(ClusterId),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad graph file: {0}")]
    BadFile(String),
}

/// Sparse symmetric co-occurrence counts with a zero diagonal; pairs are of
/// distinct cluster ids and each report contributes at most one count per
/// unordered pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    k: usize,
    counts: BTreeMap<(u32, u32), u32>, // keyed i < j
}

impl CooccurrenceMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: BTreeMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn increment(&mut self, a: ClusterId, b: ClusterId) {
        if a == b {
            return;
        }
        let key = (a.0.min(b.0), a.0.max(b.0));
        *self.counts.entry(key).or_insert(0) += 1;
    }

    pub fn count(&self, a: ClusterId, b: ClusterId) -> u32 {
        if a == b {
            return 0;
        }
        let key = (a.0.min(b.0), a.0.max(b.0));
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn row_sum(&self, a: ClusterId) -> u64 {
        (0..self.k as u32)
            .map(|j| self.count(a, ClusterId(j)) as u64)
            .sum()
    }

    /// Row-normalized weight; all-zero rows stay all-zero.
    pub fn normalized(&self, a: ClusterId, b: ClusterId) -> f64 {
        let sum = self.row_sum(a);
        if sum == 0 {
            return 0.0;
        }
        self.count(a, b) as f64 / sum as f64
    }

    /// Upper-triangle entries (i < j) with nonzero counts.
    pub fn pairs(&self) -> impl Iterator<Item = (ClusterId, ClusterId, u32)> + '_ {
        self.counts
            .iter()
            .map(|(&(i, j), &c)| (ClusterId(i), ClusterId(j), c))
    }

    pub fn is_all_zero(&self) -> bool {
        self.counts.is_empty()
    }
}

/// For each report, every unordered pair of distinct cluster ids in its
/// deduplicated cluster set counts once. Noise sentences are skipped.
pub fn build_cooccurrence(
    reports: &[Report],
    assignment: &ClusterAssignment,
) -> Result<CooccurrenceMatrix, GraphError> {
    let k = assignment
        .cluster_ids()
        .map(|c| c.0 as usize + 1)
        .max()
        .unwrap_or(0);
    let mut matrix = CooccurrenceMatrix::new(k);
    let mut any_nonempty = false;
    for report in reports {
        let set = assignment.cluster_set_of(&report.findings_sentences);
        if !set.is_empty() {
            any_nonempty = true;
        }
        for (idx, &a) in set.iter().enumerate() {
            for &b in &set[idx + 1..] {
                matrix.increment(a, b);
            }
        }
    }
    if !any_nonempty {
        return Err(GraphError::NoSignal);
    }
    Ok(matrix)
}

/// Directional addability bits. Columns of negative-signed clusters are
/// all-zero by construction; B is generally not symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct AddabilityMatrix {
    k: usize,
    tau_norm: f64,
    tau_count: u32,
    rows: Vec<Vec<u32>>, // sorted addable targets per source cluster
}

impl AddabilityMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tau_norm(&self) -> f64 {
        self.tau_norm
    }

    pub fn tau_count(&self) -> u32 {
        self.tau_count
    }

    pub fn is_addable(&self, from: ClusterId, to: ClusterId) -> bool {
        self.rows
            .get(from.index())
            .map(|r| r.binary_search(&to.0).is_ok())
            .unwrap_or(false)
    }

    /// Sorted targets j with B[from, j] = 1.
    pub fn addable_from(&self, from: ClusterId) -> &[u32] {
        self.rows
            .get(from.index())
            .map(|r| r.as_slice())
            .unwrap_or(&[])
    }

    pub fn set_bits(&self) -> impl Iterator<Item = (ClusterId, ClusterId)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| (ClusterId(i as u32), ClusterId(j))))
    }
}

pub fn build_addability(
    counts: &CooccurrenceMatrix,
    signs: &SignMap,
    tau_norm: f64,
    tau_count: u32,
) -> Result<AddabilityMatrix, GraphError> {
    let k = counts.k();
    for i in 0..k as u32 {
        let c = ClusterId(i);
        if counts.row_sum(c) > 0 && signs.get(c).is_none() {
            return Err(GraphError::MissingSign(c));
        }
    }
    let mut rows = vec![Vec::new(); k];
    for i in 0..k as u32 {
        let from = ClusterId(i);
        let sum = counts.row_sum(from);
        if sum == 0 {
            continue;
        }
        for j in 0..k as u32 {
            if i == j {
                continue;
            }
            let to = ClusterId(j);
            let count = counts.count(from, to);
            if count == 0 {
                continue;
            }
            let normalized = count as f64 / sum as f64;
            if normalized > tau_norm && count > tau_count && signs.is_positive(to) {
                rows[from.index()].push(j);
            }
        }
    }
    Ok(AddabilityMatrix {
        k,
        tau_norm,
        tau_count,
        rows,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphHeader {
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_count: Option<u32>,
    corpus_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    i: u32,
    j: u32,
    count: u32,
}

#[derive(Serialize, Deserialize)]
struct BitRow {
    i: u32,
    j: u32,
}

pub fn write_cooccurrence(
    path: &Path,
    matrix: &CooccurrenceMatrix,
    corpus_hash: &str,
) -> Result<(), GraphError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = GraphHeader {
        k: matrix.k(),
        tau_norm: None,
        tau_count: None,
        corpus_hash: corpus_hash.to_string(),
    };
    write_json_line(&mut w, &header)?;
    for (i, j, count) in matrix.pairs() {
        write_json_line(&mut w, &CountRow { i: i.0, j: j.0, count })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cooccurrence(path: &Path) -> Result<(CooccurrenceMatrix, String), GraphError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header: GraphHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?).map_err(|e| GraphError::BadFile(e.to_string()))?,
        None => return Err(GraphError::BadFile("empty cooccurrence file".to_string())),
    };
    let mut matrix = CooccurrenceMatrix::new(header.k);
    for line in lines {
        let row: CountRow =
            serde_json::from_str(&line?).map_err(|e| GraphError::BadFile(e.to_string()))?;
        matrix.counts.insert((row.i.min(row.j), row.i.max(row.j)), row.count);
    }
    Ok((matrix, header.corpus_hash))
}

pub fn write_addability(
    path: &Path,
    matrix: &AddabilityMatrix,
    corpus_hash: &str,
) -> Result<(), GraphError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = GraphHeader {
        k: matrix.k(),
        tau_norm: Some(matrix.tau_norm()),
        tau_count: Some(matrix.tau_count()),
        corpus_hash: corpus_hash.to_string(),
    };
    write_json_line(&mut w, &header)?;
    for (i, j) in matrix.set_bits() {
        write_json_line(&mut w, &BitRow { i: i.0, j: j.0 })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_addability(path: &Path) -> Result<(AddabilityMatrix, String), GraphError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header: GraphHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?).map_err(|e| GraphError::BadFile(e.to_string()))?,
        None => return Err(GraphError::BadFile("empty addability file".to_string())),
    };
    let mut rows = vec![Vec::new(); header.k];
    for line in lines {
        let row: BitRow =
            serde_json::from_str(&line?).map_err(|e| GraphError::BadFile(e.to_string()))?;
        if row.i as usize >= header.k || row.j as usize >= header.k {
            return Err(GraphError::BadFile(format!(
                "bit ({}, {}) outside k = {}",
                row.i, row.j, header.k
            )));
        }
        rows[row.i as usize].push(row.j);
    }
    for row in rows.iter_mut() {
        row.sort_unstable();
        row.dedup();
    }
    let matrix = AddabilityMatrix {
        k: header.k,
        tau_norm: header.tau_norm.unwrap_or(0.0),
        tau_count: header.tau_count.unwrap_or(0),
        rows,
    };
    Ok((matrix, header.corpus_hash))
}

fn write_json_line<T: Serialize>(w: &mut impl Write, value: &T) -> Result<(), GraphError> {
    serde_json::to_writer(&mut *w, value)
        .map_err(|e| GraphError::Io(std::io::Error::other(e)))?;
    w.write_all(b"\n")?;
    Ok(())
}
