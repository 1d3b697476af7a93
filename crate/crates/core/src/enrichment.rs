//! Findings enrichment: for a report's cluster set, enumerate every largest
//! valid enrichment (a maximal clique over the candidate compatibility
//! graph), then sample one per training instance and render the enriched
//! findings text.
//!
//! Compatibility between two positive clusters requires the addability bit
//! in both directions; the `strict_one_directional` switch reproduces the
//! single-direction check of the precomputation recursion instead. Pairs
//! inside the base finding set are exempt either way: they co-occurred in a
//! real report.

use crate::clustering::ClusterAssignment;
use crate::corpus::{Report, SentenceTable};
use crate::graph::AddabilityMatrix;
use crate::ids::{ClusterId, SentenceId};
use crate::signing::SignMap;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("finding set is empty")]
    EmptyFindingSet,
    #[error("unknown cluster id {0}")]
    UnknownCluster(ClusterId),
    #[error("candidate explosion for {finding_set:?}: {candidates} candidates exceed the bound {bound}")]
    CandidateExplosion {
        finding_set: Vec<u32>,
        candidates: usize,
        bound: usize,
    },
    #[error("finding set {0:?} absent from catalog")]
    MissingEntry(Vec<u32>),
    #[error("cluster {0} has no member sentences")]
    EmptyClusterMembers(ClusterId),
    #[error("sentence {0} missing from table")]
    UnknownSentence(SentenceId),
    #[error("reports {report_ids:?}: {source}")]
    Report {
        report_ids: Vec<String>,
        #[source]
        source: Box<EnrichError>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad catalog file: {0}")]
    BadFile(String),
}

/// Sorted, deduplicated, non-empty cluster ids of one report's findings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FindingSet(Vec<ClusterId>);

impl FindingSet {
    pub fn new(mut ids: Vec<ClusterId>) -> Result<Self, EnrichError> {
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(EnrichError::EmptyFindingSet);
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[ClusterId] {
        &self.0
    }

    pub fn contains(&self, c: ClusterId) -> bool {
        self.0.binary_search(&c).is_ok()
    }

    pub fn raw(&self) -> Vec<u32> {
        self.0.iter().map(|c| c.0).collect()
    }
}

/// A sorted set of positive cluster ids added to a report. Empty means the
/// report is already maximal.
pub type ExpansionSet = Vec<ClusterId>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrichConfig {
    /// Reproduce the one-directional addability check of the precomputation
    /// recursion instead of symmetric pair compatibility.
    pub strict_one_directional: bool,
    /// Enumeration refuses candidate sets larger than this: maximal-clique
    /// counts grow as 3^(n/3), so silent truncation would bias enrichment.
    pub max_candidates: usize,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self {
            strict_one_directional: false,
            max_candidates: 64,
        }
    }
}

fn check_known(c: ClusterId, b: &AddabilityMatrix, signs: &SignMap) -> Result<(), EnrichError> {
    if c.index() >= b.k() || signs.get(c).is_none() {
        return Err(EnrichError::UnknownCluster(c));
    }
    Ok(())
}

/// Positive clusters addable from every member of `f`, minus `f` itself.
pub fn candidate_neighborhood(f: &FindingSet, b: &AddabilityMatrix) -> Vec<ClusterId> {
    let mut iter = f.ids().iter();
    let first = iter.next().expect("finding sets are non-empty");
    let mut acc: Vec<u32> = b.addable_from(*first).to_vec();
    for c in iter {
        let row = b.addable_from(*c);
        acc.retain(|j| row.binary_search(j).is_ok());
    }
    acc.retain(|j| !f.contains(ClusterId(*j)));
    acc.into_iter().map(ClusterId).collect()
}

/// Unordered pair compatibility: B[x,y] must be set when sign(y) is
/// positive, B[y,x] when sign(x) is positive, hence both directions for two
/// positive clusters.
fn compatible_pair(x: ClusterId, y: ClusterId, b: &AddabilityMatrix, signs: &SignMap) -> bool {
    if signs.is_positive(y) && !b.is_addable(x, y) {
        return false;
    }
    if signs.is_positive(x) && !b.is_addable(y, x) {
        return false;
    }
    true
}

/// The three validity conditions: disjointness, pairwise compatibility over
/// F union E with F-internal pairs exempt, and a positive sign for every
/// expansion cluster.
pub fn is_valid_enrichment(
    f: &FindingSet,
    e: &[ClusterId],
    b: &AddabilityMatrix,
    signs: &SignMap,
) -> Result<bool, EnrichError> {
    for c in f.ids() {
        check_known(*c, b, signs)?;
    }
    for c in e {
        check_known(*c, b, signs)?;
    }
    // (i) disjoint
    if e.iter().any(|c| f.contains(*c)) {
        return Ok(false);
    }
    // (iii) expansion clusters are positive
    if e.iter().any(|c| !signs.is_positive(*c)) {
        return Ok(false);
    }
    // (ii) pairwise compatibility, base-internal pairs exempt
    for (i, &x) in e.iter().enumerate() {
        for &y in &e[i + 1..] {
            if !compatible_pair(x, y, b, signs) {
                return Ok(false);
            }
        }
    }
    for &x in f.ids() {
        for &y in e {
            if !compatible_pair(x, y, b, signs) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// All largest valid enrichments of `f`: subset-maximal cliques over the
/// candidate compatibility graph, sorted lexicographically. An empty
/// candidate set yields the single empty expansion so sampling stays total.
pub fn enumerate_largest(
    f: &FindingSet,
    b: &AddabilityMatrix,
    signs: &SignMap,
    config: &EnrichConfig,
) -> Result<Vec<ExpansionSet>, EnrichError> {
    for c in f.ids() {
        check_known(*c, b, signs)?;
    }
    let candidates = candidate_neighborhood(f, b);
    if candidates.len() > config.max_candidates {
        return Err(EnrichError::CandidateExplosion {
            finding_set: f.raw(),
            candidates: candidates.len(),
            bound: config.max_candidates,
        });
    }

    let mut expansions = if config.strict_one_directional {
        enumerate_strict(f, &candidates, b)
    } else {
        enumerate_symmetric(f, &candidates, b, signs)
    };

    for e in expansions.iter_mut() {
        e.sort_unstable();
    }
    expansions.sort();
    expansions.dedup();
    remove_dominated(&mut expansions);
    if expansions.is_empty() {
        expansions.push(Vec::new());
    }
    Ok(expansions)
}

/// Symmetric mode: filter candidates to those compatible with every base
/// cluster, then run pivoted maximal-clique search over mutual addability.
fn enumerate_symmetric(
    f: &FindingSet,
    candidates: &[ClusterId],
    b: &AddabilityMatrix,
    signs: &SignMap,
) -> Vec<ExpansionSet> {
    let vertices: Vec<ClusterId> = candidates
        .iter()
        .copied()
        .filter(|&v| f.ids().iter().all(|&x| compatible_pair(x, v, b, signs)))
        .collect();
    let m = vertices.len();
    if m == 0 {
        return Vec::new();
    }
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let ok = b.is_addable(vertices[i], vertices[j]) && b.is_addable(vertices[j], vertices[i]);
            adj[i][j] = ok;
            adj[j][i] = ok;
        }
    }
    let mut cliques = Vec::new();
    bron_kerbosch(
        &adj,
        &mut Vec::new(),
        (0..m).collect(),
        Vec::new(),
        &mut cliques,
    );
    cliques
        .into_iter()
        .map(|c| c.into_iter().map(|i| vertices[i]).collect())
        .collect()
}

fn bron_kerbosch(
    adj: &[Vec<bool>],
    r: &mut Vec<usize>,
    p: Vec<usize>,
    x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r.clone());
        return;
    }
    // pivot: the vertex of P union X covering most of P
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count())
        .unwrap();
    let todo: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
    let mut p = p;
    let mut x = x;
    for v in todo {
        let np: Vec<usize> = p.iter().copied().filter(|&w| adj[v][w]).collect();
        let nx: Vec<usize> = x.iter().copied().filter(|&w| adj[v][w]).collect();
        r.push(v);
        bron_kerbosch(adj, r, np, nx, out);
        r.pop();
        p.retain(|&w| w != v);
        x.push(v);
    }
}

/// Strict mode: the literal expansion recursion, where a candidate joins
/// when every member of the current set points at it, followed by the
/// subset-maximality prune.
fn enumerate_strict(
    f: &FindingSet,
    candidates: &[ClusterId],
    b: &AddabilityMatrix,
) -> Vec<ExpansionSet> {
    let mut current: Vec<ClusterId> = f.ids().to_vec();
    let base_len = current.len();
    let mut out = Vec::new();
    expand_strict(&mut current, base_len, candidates, 0, b, &mut out);
    out
}

fn expand_strict(
    current: &mut Vec<ClusterId>,
    base_len: usize,
    candidates: &[ClusterId],
    start: usize,
    b: &AddabilityMatrix,
    out: &mut Vec<ExpansionSet>,
) {
    let mut expanded = false;
    for i in start..candidates.len() {
        let cand = candidates[i];
        if current.iter().all(|&c| b.is_addable(c, cand)) {
            current.push(cand);
            expand_strict(current, base_len, candidates, i + 1, b, out);
            current.pop();
            expanded = true;
        }
    }
    if !expanded {
        out.push(current[base_len..].to_vec());
    }
}

/// Drop any set that is a strict subset of another (inputs sorted).
fn remove_dominated(sets: &mut Vec<ExpansionSet>) {
    let snapshot = sets.clone();
    sets.retain(|s| {
        !snapshot
            .iter()
            .any(|other| other.len() > s.len() && s.iter().all(|c| other.binary_search(c).is_ok()))
    });
}

/// Per unique finding set, every largest valid enrichment. Reports with
/// identical cluster sets share one entry; reports whose sentences are all
/// noise have no entry and pass through enrichment unchanged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnrichmentCatalog {
    entries: BTreeMap<FindingSet, Vec<ExpansionSet>>,
}

impl EnrichmentCatalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, f: &FindingSet) -> Option<&[ExpansionSet]> {
        self.entries.get(f).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FindingSet, &Vec<ExpansionSet>)> {
        self.entries.iter()
    }

    pub fn insert(&mut self, f: FindingSet, expansions: Vec<ExpansionSet>) {
        self.entries.insert(f, expansions);
    }
}

pub fn build_catalog(
    reports: &[Report],
    assignment: &ClusterAssignment,
    b: &AddabilityMatrix,
    signs: &SignMap,
    config: &EnrichConfig,
) -> Result<EnrichmentCatalog, EnrichError> {
    let mut sets: BTreeMap<FindingSet, Vec<String>> = BTreeMap::new();
    for report in reports {
        let ids = assignment.cluster_set_of(&report.findings_sentences);
        if ids.is_empty() {
            continue;
        }
        sets.entry(FindingSet::new(ids)?)
            .or_default()
            .push(report.report_id.clone());
    }
    let mut catalog = EnrichmentCatalog::default();
    for (f, report_ids) in sets {
        let expansions = enumerate_largest(&f, b, signs, config).map_err(|e| EnrichError::Report {
            report_ids,
            source: Box::new(e),
        })?;
        catalog.insert(f, expansions);
    }
    Ok(catalog)
}

/// Uniform pick among an entry's expansions; deterministic per
/// (seed, draw index).
pub fn sample_enrichment<'a>(
    catalog: &'a EnrichmentCatalog,
    f: &FindingSet,
    seed: u64,
    draw: u64,
) -> Result<&'a ExpansionSet, EnrichError> {
    let entry = catalog
        .get(f)
        .ok_or_else(|| EnrichError::MissingEntry(f.raw()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    Ok(&entry[rng.gen_range(0..entry.len())])
}

fn stable_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[0..8].try_into().unwrap())
}

/// Original findings sentences in order, then one uniformly drawn member
/// sentence per expansion cluster in ascending cluster order, joined with
/// ". " and a normalized terminal period.
pub fn render_enriched(
    report: &Report,
    expansion: &[ClusterId],
    assignment: &ClusterAssignment,
    table: &SentenceTable,
    seed: u64,
) -> Result<String, EnrichError> {
    let mut pieces: Vec<String> = Vec::with_capacity(report.findings_sentences.len() + expansion.len());
    for id in &report.findings_sentences {
        let text = table.get(*id).ok_or(EnrichError::UnknownSentence(*id))?;
        pieces.push(text.trim_end_matches(['.', '!', '?']).to_string());
    }
    let report_stream = stable_hash(&report.report_id);
    let mut ordered: Vec<ClusterId> = expansion.to_vec();
    ordered.sort_unstable();
    for cluster in ordered {
        let members = assignment
            .members()
            .get(&cluster)
            .filter(|m| !m.is_empty())
            .ok_or(EnrichError::EmptyClusterMembers(cluster))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ cluster.0 as u64);
        rng.set_stream(report_stream);
        let pick = members[rng.gen_range(0..members.len())];
        let text = table.get(pick).ok_or(EnrichError::UnknownSentence(pick))?;
        pieces.push(text.trim_end_matches(['.', '!', '?']).to_string());
    }
    Ok(format!("{}.", pieces.join(". ")))
}

#[derive(Serialize, Deserialize)]
struct CatalogRow {
    finding_set: Vec<u32>,
    expansions: Vec<Vec<u32>>,
}

pub fn write_catalog(path: &Path, catalog: &EnrichmentCatalog) -> Result<(), EnrichError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (f, expansions) in catalog.iter() {
        let row = CatalogRow {
            finding_set: f.raw(),
            expansions: expansions
                .iter()
                .map(|e| e.iter().map(|c| c.0).collect())
                .collect(),
        };
        serde_json::to_writer(&mut w, &row)
            .map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_catalog(path: &Path) -> Result<EnrichmentCatalog, EnrichError> {
    let reader = BufReader::new(File::open(path)?);
    let mut catalog = EnrichmentCatalog::default();
    for line in reader.lines() {
        let row: CatalogRow =
            serde_json::from_str(&line?).map_err(|e| EnrichError::BadFile(e.to_string()))?;
        let f = FindingSet::new(row.finding_set.into_iter().map(ClusterId).collect())?;
        let expansions = row
            .expansions
            .into_iter()
            .map(|e| e.into_iter().map(ClusterId).collect())
            .collect();
        catalog.insert(f, expansions);
    }
    Ok(catalog)
}
