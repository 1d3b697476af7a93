//! Unit-normalized sentence embeddings: binary/JSONL ingestion, a
//! deterministic hashing fallback encoder, and linear-scan nearest-neighbor
//! lookup for out-of-corpus sentences.
//!
//! Embeddings are ingested, not computed: the external encoder runs
//! elsewhere and this module normalizes and serves its output. The fallback
//! encoder exists so offline pipelines and tests have a deterministic
//! substitute in the same interface.

use crate::corpus::{normalize_sentence, SentenceTable, SplitConfig};
use crate::ids::SentenceId;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad embeddings header: {0}")]
    BadHeader(String),
    #[error("row count mismatch: file has {found} rows, sentence table has {expected}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("row {0} has inconsistent dimension")]
    DimMismatch(SentenceId),
    #[error("zero vector at row {0}: normalization undefined")]
    ZeroVector(SentenceId),
    #[error("embedding dimension must be >= 2, got {0}")]
    DimTooSmall(usize),
    #[error("cannot embed an empty sentence")]
    EmptySentence,
    #[error("clustered mask has no set bits")]
    EmptyMask,
    #[error("bad json row {row}: {msg}")]
    BadJsonRow { row: usize, msg: String },
}

/// Row-major matrix of unit-length vectors; row i belongs to `SentenceId(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

pub const UNIT_NORM_TOLERANCE: f32 = 1e-6;

impl EmbeddingMatrix {
    /// Build from raw rows, normalizing each to unit length. A zero row
    /// signals upstream corruption and aborts with the offending id.
    pub fn from_rows(dim: usize, rows: Vec<Vec<f32>>) -> Result<Self, EmbeddingError> {
        if dim < 2 {
            return Err(EmbeddingError::DimTooSmall(dim));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, mut row) in rows.into_iter().enumerate() {
            let id = SentenceId(i as u32);
            if row.len() != dim {
                return Err(EmbeddingError::DimMismatch(id));
            }
            normalize_in_place(&mut row).ok_or(EmbeddingError::ZeroVector(id))?;
            data.extend_from_slice(&row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, id: SentenceId) -> &[f32] {
        let start = id.index() * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (SentenceId, &[f32])> {
        self.data
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, r)| (SentenceId(i as u32), r))
    }
}

fn normalize_in_place(row: &mut [f32]) -> Option<()> {
    let norm = row.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    for x in row.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Some(())
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum::<f64>() as f32
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Load embeddings.bin: 8-byte header (u32 N, u32 dim, little-endian) then
/// N*dim little-endian f32, row-major. Rows are re-normalized on load;
/// original magnitudes are discarded.
pub fn load_embeddings(path: &Path, table: &SentenceTable) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = [0u8; 8];
    reader.read_exact(&mut header).map_err(|_| {
        EmbeddingError::BadHeader("file shorter than the 8-byte header".to_string())
    })?;
    let n = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    if n != table.len() {
        return Err(EmbeddingError::RowCountMismatch {
            expected: table.len(),
            found: n,
        });
    }
    if dim < 2 {
        return Err(EmbeddingError::DimTooSmall(dim));
    }
    let mut payload = vec![0u8; n * dim * 4];
    reader.read_exact(&mut payload).map_err(|_| {
        EmbeddingError::BadHeader(format!("payload shorter than {n} x {dim} f32 rows"))
    })?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(dim);
        for j in 0..dim {
            let off = (i * dim + j) * 4;
            row.push(f32::from_le_bytes(payload[off..off + 4].try_into().unwrap()));
        }
        rows.push(row);
    }
    EmbeddingMatrix::from_rows(dim, rows)
}

/// Alternative JSON-lines input: one float array per line, row i for
/// sentence i. Same normalization and checks as the binary path.
pub fn load_embeddings_jsonl(
    path: &Path,
    table: &SentenceTable,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (i, line) in std::io::BufRead::lines(reader).enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f32> = serde_json::from_str(&line).map_err(|e| EmbeddingError::BadJsonRow {
            row: i,
            msg: e.to_string(),
        })?;
        rows.push(row);
    }
    if rows.len() != table.len() {
        return Err(EmbeddingError::RowCountMismatch {
            expected: table.len(),
            found: rows.len(),
        });
    }
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    EmbeddingMatrix::from_rows(dim, rows)
}

/// Persist in the binary layout accepted by [`load_embeddings`].
pub fn write_embeddings(path: &Path, matrix: &EmbeddingMatrix) -> Result<(), EmbeddingError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(matrix.len() as u32).to_le_bytes())?;
    w.write_all(&(matrix.dim() as u32).to_le_bytes())?;
    for (_, row) in matrix.rows() {
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Deterministic hash-of-token-ngrams embedding: unigrams weight 1.0,
/// bigrams weight 0.5, each feature hashed into a signed bucket, then
/// unit-normalized. Identical sentences map to identical vectors; shared
/// token sets yield high cosine similarity.
pub fn fallback_embed(sentence: &str, dim: usize, seed: u64) -> Result<Vec<f32>, EmbeddingError> {
    if dim < 2 {
        return Err(EmbeddingError::DimTooSmall(dim));
    }
    let normalized = normalize_sentence(sentence, SplitConfig::default());
    let tokens: Vec<&str> = normalized.split(' ').filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        return Err(EmbeddingError::EmptySentence);
    }
    let mut acc = vec![0.0f32; dim];
    let mut add = |feature: &str, weight: f32| {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(feature.as_bytes());
        let digest = hasher.finalize();
        let h = u64::from_le_bytes(digest[0..8].try_into().unwrap());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign * weight;
    };
    for t in &tokens {
        add(t, 1.0);
    }
    for pair in tokens.windows(2) {
        add(&format!("{} {}", pair[0], pair[1]), 0.5);
    }
    normalize_in_place(&mut acc).ok_or(EmbeddingError::EmptySentence)?;
    Ok(acc)
}

/// Embed every table sentence with the fallback encoder.
pub fn fallback_embed_table(
    table: &SentenceTable,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut rows = Vec::with_capacity(table.len());
    for (_, text) in table.iter() {
        rows.push(fallback_embed(text, dim, seed)?);
    }
    EmbeddingMatrix::from_rows(dim, rows)
}

/// Linear scan for the masked row with maximal dot product against a
/// unit-normalized query. Ties break toward the smallest `SentenceId`.
pub fn nearest_clustered_sentence(
    query: &[f32],
    matrix: &EmbeddingMatrix,
    clustered_mask: &[bool],
) -> Result<(SentenceId, f32), EmbeddingError> {
    let mut best: Option<(SentenceId, f32)> = None;
    for (id, row) in matrix.rows() {
        if !clustered_mask.get(id.index()).copied().unwrap_or(false) {
            continue;
        }
        let cos = dot(query, row);
        match best {
            Some((_, b)) if cos <= b => {}
            _ => best = Some((id, cos)),
        }
    }
    best.ok_or(EmbeddingError::EmptyMask)
}
