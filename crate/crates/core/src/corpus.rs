//! Corpus ingestion: sentence splitting, normalization, deduplication and the
//! persisted archive (sentences.jsonl + reports.jsonl).
//!
//! The input is a JSON-lines file with one object per report, keys
//! `report_id`, `findings`, `impression`. Ingestion is deterministic for a
//! fixed input file and config; the resulting `Report` list and
//! `SentenceTable` are immutable afterwards.

use crate::ids::SentenceId;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {msg}")]
    MalformedRecord { line: usize, msg: String },
    #[error("line {line}: report {report_id}: findings empty after splitting")]
    EmptyFindings { line: usize, report_id: String },
    #[error("line {line}: duplicate report_id {report_id}")]
    DuplicateReportId { line: usize, report_id: String },
    #[error("archive corrupt: {0}")]
    BadArchive(String),
}

/// One patient study: ordered findings sentences plus the impression text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub findings_text: String,
    pub impression_text: String,
    /// Filled after splitting; ordered, may repeat an id if the report
    /// repeats a sentence.
    pub findings_sentences: Vec<SentenceId>,
}

/// Corpus-wide table of unique normalized sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceTable {
    sentences: Vec<String>,
    reverse: HashMap<String, SentenceId>,
}

impl SentenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: SentenceId) -> Option<&str> {
        self.sentences.get(id.index()).map(|s| s.as_str())
    }

    pub fn lookup(&self, normalized: &str) -> Option<SentenceId> {
        self.reverse.get(normalized).copied()
    }

    /// Returns the existing id for an already-seen sentence, otherwise
    /// appends it. Callers must pass normalized text.
    pub fn intern(&mut self, normalized: &str) -> SentenceId {
        if let Some(id) = self.reverse.get(normalized) {
            return *id;
        }
        let id = SentenceId(self.sentences.len() as u32);
        self.sentences.push(normalized.to_string());
        self.reverse.insert(normalized.to_string(), id);
        id
    }

    pub fn iter(&self) -> impl Iterator<Item = (SentenceId, &str)> {
        self.sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (SentenceId(i as u32), s.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitConfig {
    /// Lowercase sentences during normalization. Cluster examples in report
    /// corpora mix casing, so matching defaults to case-insensitive.
    pub lowercase: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

/// What to do with a bad input record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMode {
    /// Record the diagnostic and continue.
    #[default]
    Skip,
    /// Fail the whole ingestion on the first bad record.
    Abort,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestConfig {
    pub split: SplitConfig,
    pub on_error: ErrorMode,
}

/// Ingestion result: the corpus plus diagnostics for skipped records.
#[derive(Debug)]
pub struct Corpus {
    pub reports: Vec<Report>,
    pub table: SentenceTable,
    pub skipped: Vec<CorpusError>,
}

/// Collapse runs of whitespace to single spaces and trim; lowercases when the
/// config says so. Applied before dedup so the table is keyed consistently.
pub fn normalize_sentence(raw: &str, config: SplitConfig) -> String {
    let collapsed: Vec<&str> = raw.split_whitespace().collect();
    let joined = collapsed.join(" ");
    if config.lowercase {
        joined.to_lowercase()
    } else {
        joined
    }
}

/// Split on '.', '!' or '?' followed by whitespace or end-of-text. The
/// terminal character is dropped, fragments are normalized, empties removed,
/// order preserved. Total function: never fails.
pub fn split_sentences(text: &str, config: SplitConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        if matches!(ch, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some(next) => next.is_whitespace(),
            };
            if at_boundary {
                let sentence = normalize_sentence(&current, config);
                if !sentence.is_empty() {
                    out.push(sentence);
                }
                current.clear();
                continue;
            }
        }
        current.push(ch);
    }
    let tail = normalize_sentence(&current, config);
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[derive(Deserialize)]
struct RawRecord {
    report_id: String,
    findings: String,
    impression: String,
}

/// Read a JSON-lines report file, split findings into sentences and intern
/// them in a shared table. Deterministic for a fixed input file and config.
pub fn ingest_corpus(path: &Path, config: IngestConfig) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut reports = Vec::new();
    let mut table = SentenceTable::new();
    let mut skipped = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let err = CorpusError::MalformedRecord {
                    line: lineno,
                    msg: e.to_string(),
                };
                match config.on_error {
                    ErrorMode::Abort => return Err(err),
                    ErrorMode::Skip => {
                        skipped.push(err);
                        continue;
                    }
                }
            }
        };
        if seen_ids.contains_key(&record.report_id) {
            let err = CorpusError::DuplicateReportId {
                line: lineno,
                report_id: record.report_id,
            };
            match config.on_error {
                ErrorMode::Abort => return Err(err),
                ErrorMode::Skip => {
                    skipped.push(err);
                    continue;
                }
            }
        }
        let sentences = split_sentences(&record.findings, config.split);
        if sentences.is_empty() {
            let err = CorpusError::EmptyFindings {
                line: lineno,
                report_id: record.report_id,
            };
            match config.on_error {
                ErrorMode::Abort => return Err(err),
                ErrorMode::Skip => {
                    skipped.push(err);
                    continue;
                }
            }
        }
        let ids = sentences.iter().map(|s| table.intern(s)).collect();
        seen_ids.insert(record.report_id.clone(), reports.len());
        reports.push(Report {
            report_id: record.report_id,
            findings_text: record.findings,
            impression_text: record.impression,
            findings_sentences: ids,
        });
    }
    Ok(Corpus {
        reports,
        table,
        skipped,
    })
}

#[derive(Serialize, Deserialize)]
struct SentenceRow {
    index: u32,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct ReportRow {
    report_id: String,
    sentence_ids: Vec<u32>,
    impression: String,
}

/// Write the corpus archive: sentences.jsonl and reports.jsonl under `dir`.
/// Re-ingesting the same input yields byte-identical archives.
pub fn write_archive(dir: &Path, reports: &[Report], table: &SentenceTable) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir)?;
    let mut sf = BufWriter::new(File::create(dir.join("sentences.jsonl"))?);
    for (id, text) in table.iter() {
        let row = SentenceRow {
            index: id.0,
            text: text.to_string(),
        };
        serde_json::to_writer(&mut sf, &row).map_err(io_err)?;
        sf.write_all(b"\n")?;
    }
    sf.flush()?;

    let mut rf = BufWriter::new(File::create(dir.join("reports.jsonl"))?);
    for report in reports {
        let row = ReportRow {
            report_id: report.report_id.clone(),
            sentence_ids: report.findings_sentences.iter().map(|s| s.0).collect(),
            impression: report.impression_text.clone(),
        };
        serde_json::to_writer(&mut rf, &row).map_err(io_err)?;
        rf.write_all(b"\n")?;
    }
    rf.flush()?;
    Ok(())
}

/// Reload a persisted archive. Findings text is not stored; reloaded reports
/// carry the reconstructed sentence join instead.
pub fn read_archive(dir: &Path) -> Result<(Vec<Report>, SentenceTable), CorpusError> {
    let mut table = SentenceTable::new();
    let sf = BufReader::new(File::open(dir.join("sentences.jsonl"))?);
    for (i, line) in sf.lines().filter(|l| !matches!(l, Ok(s) if s.trim().is_empty())).enumerate() {
        let row: SentenceRow =
            serde_json::from_str(&line?).map_err(|e| CorpusError::BadArchive(e.to_string()))?;
        if row.index as usize != i {
            return Err(CorpusError::BadArchive(format!(
                "sentence index {} at row {}",
                row.index, i
            )));
        }
        let id = table.intern(&row.text);
        if id.index() != i {
            return Err(CorpusError::BadArchive(format!(
                "duplicate sentence text at row {i}"
            )));
        }
    }

    let rf = BufReader::new(File::open(dir.join("reports.jsonl"))?);
    let mut reports = Vec::new();
    for line in rf.lines() {
        let row: ReportRow =
            serde_json::from_str(&line?).map_err(|e| CorpusError::BadArchive(e.to_string()))?;
        let ids: Vec<SentenceId> = row.sentence_ids.iter().map(|&i| SentenceId(i)).collect();
        for id in &ids {
            if table.get(*id).is_none() {
                return Err(CorpusError::BadArchive(format!(
                    "report {} references unknown sentence {}",
                    row.report_id, id
                )));
            }
        }
        let findings_text = ids
            .iter()
            .map(|id| table.get(*id).unwrap())
            .collect::<Vec<_>>()
            .join(". ");
        reports.push(Report {
            report_id: row.report_id,
            findings_text,
            impression_text: row.impression,
            findings_sentences: ids,
        });
    }
    Ok((reports, table))
}

fn io_err(e: serde_json::Error) -> CorpusError {
    CorpusError::Io(std::io::Error::other(e))
}
