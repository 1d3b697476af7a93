//! Stage implementations. Each stage verifies its upstream artifacts
//! against the manifest, writes its outputs atomically, and records
//! parameters plus input/output hashes.

use crate::manifest::{
    atomic_file, domain_err, sha256_file, PipelineManifest, StageError, StageRecord, WorkdirLock,
};
use enrich_core::clustering::{
    compute_stats, dbscan, hdbscan, kmeans, read_clusters, render_stats_table,
    write_clusters, ClusterAssignment, Method,
};
use enrich_core::corpus::{ingest_corpus, read_archive, write_archive, ErrorMode, IngestConfig};
use enrich_core::embedding::{
    fallback_embed_table, load_embeddings, load_embeddings_jsonl, write_embeddings,
    EmbeddingMatrix,
};
use enrich_core::enrichment::{
    build_catalog, read_catalog, render_enriched, sample_enrichment, write_catalog, EnrichConfig,
    FindingSet,
};
use enrich_core::graph::{
    build_addability, build_cooccurrence, read_addability, write_addability, write_cooccurrence,
};
use enrich_core::reward::{evaluate_generation, EmbedderConfig, RewardScore, ScoringContext};
use enrich_core::signing::llm::{HttpChatTransport, LlmClient, ResponseCache};
use enrich_core::signing::{
    read_signs, sign_all_clusters, write_signs, FallbackClassifier, SignClassifier,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub const ENV_LLM_URL: &str = "ENRICH_LLM_URL";
pub const ENV_LLM_MODEL: &str = "ENRICH_LLM_MODEL";
pub const ENV_LLM_TOKEN: &str = "ENRICH_LLM_TOKEN";

pub struct Pipeline {
    workdir: PathBuf,
    force: bool,
    manifest: PipelineManifest,
    _lock: WorkdirLock,
}

impl Pipeline {
    pub fn open(workdir: &Path, force: bool) -> Result<Self, StageError> {
        std::fs::create_dir_all(workdir).map_err(|e| domain_err("open", e))?;
        let lock = WorkdirLock::acquire(workdir)?;
        let manifest =
            PipelineManifest::load(workdir).map_err(|e| domain_err("open", e))?;
        Ok(Self {
            workdir: workdir.to_path_buf(),
            force,
            manifest,
            _lock: lock,
        })
    }

    fn path(&self, artifact: &str) -> PathBuf {
        self.workdir.join(artifact)
    }

    /// Resolve an upstream artifact: it must exist, its producing stage must
    /// be recorded, and its bytes must match the recorded hash (unless
    /// --force).
    fn require(
        &self,
        stage: &str,
        producer: &str,
        artifact: &str,
    ) -> Result<(PathBuf, String), StageError> {
        let path = self.path(artifact);
        let recorded = self.manifest.recorded_output(producer, artifact);
        if !path.exists() || recorded.is_none() {
            return Err(StageError::MissingArtifact {
                stage: stage.to_string(),
                artifact: artifact.to_string(),
            });
        }
        let actual = sha256_file(&path).map_err(|e| domain_err(stage, e))?;
        if !self.force && recorded != Some(actual.as_str()) {
            return Err(StageError::HashMismatch {
                stage: stage.to_string(),
                artifact: artifact.to_string(),
            });
        }
        Ok((path, actual))
    }

    fn finish(
        &mut self,
        stage: &str,
        params: BTreeMap<String, serde_json::Value>,
        inputs: BTreeMap<String, String>,
        outputs: &[&str],
    ) -> Result<(), StageError> {
        let mut out_hashes = BTreeMap::new();
        for artifact in outputs {
            let hash =
                sha256_file(&self.path(artifact)).map_err(|e| domain_err(stage, e))?;
            out_hashes.insert(artifact.to_string(), hash);
        }
        self.manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                params,
                inputs,
                outputs: out_hashes,
            },
        );
        self.manifest
            .save(&self.workdir)
            .map_err(|e| domain_err(stage, e))
    }

    fn cluster_method(&self, stage: &str) -> Result<Method, StageError> {
        let rec = self
            .manifest
            .stages
            .get("cluster")
            .ok_or_else(|| StageError::MissingArtifact {
                stage: stage.to_string(),
                artifact: "clusters.jsonl".to_string(),
            })?;
        let get_usize = |key: &str| {
            rec.params
                .get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| domain_err(stage, anyhow::anyhow!("manifest cluster params missing {key}")))
        };
        match rec.params.get("method").and_then(|v| v.as_str()) {
            Some("kmeans") => Ok(Method::Kmeans { k: get_usize("k")? }),
            Some("dbscan") => Ok(Method::Dbscan {
                eps: rec
                    .params
                    .get("eps")
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| domain_err(stage, anyhow::anyhow!("manifest cluster params missing eps")))?,
                min_pts: get_usize("min_pts")?,
            }),
            Some("hdbscan") => Ok(Method::Hdbscan {
                min_cluster_size: get_usize("min_cluster_size")?,
            }),
            other => Err(domain_err(
                stage,
                anyhow::anyhow!("manifest cluster method unreadable: {other:?}"),
            )),
        }
    }

    fn corpus_hash(&self, stage: &str) -> Result<String, StageError> {
        self.manifest
            .corpus_hash
            .clone()
            .ok_or_else(|| StageError::MissingArtifact {
                stage: stage.to_string(),
                artifact: "sentences.jsonl".to_string(),
            })
    }

    fn load_assignment(&self, stage: &str) -> Result<ClusterAssignment, StageError> {
        let (clusters_path, _) = self.require(stage, "cluster", "clusters.jsonl")?;
        let method = self.cluster_method(stage)?;
        read_clusters(&clusters_path, method).map_err(|e| domain_err(stage, e))
    }
}

pub fn cmd_ingest(
    pipeline: &mut Pipeline,
    corpus: &Path,
    abort_on_error: bool,
    keep_case: bool,
) -> Result<(), StageError> {
    const STAGE: &str = "ingest";
    let config = IngestConfig {
        split: enrich_core::corpus::SplitConfig {
            lowercase: !keep_case,
        },
        on_error: if abort_on_error {
            ErrorMode::Abort
        } else {
            ErrorMode::Skip
        },
    };
    let corpus_hash = sha256_file(corpus).map_err(|e| domain_err(STAGE, e))?;
    let result = ingest_corpus(corpus, config).map_err(|e| domain_err(STAGE, e))?;
    for err in &result.skipped {
        eprintln!("ingest: skipped record: {err}");
    }

    let workdir = pipeline.workdir.clone();
    let staging = workdir.join(".ingest-tmp");
    std::fs::create_dir_all(&staging).map_err(|e| domain_err(STAGE, e))?;
    write_archive(&staging, &result.reports, &result.table).map_err(|e| domain_err(STAGE, e))?;
    for name in ["sentences.jsonl", "reports.jsonl"] {
        std::fs::rename(staging.join(name), workdir.join(name))
            .map_err(|e| domain_err(STAGE, e))?;
    }
    let _ = std::fs::remove_dir(&staging);

    pipeline.manifest.corpus_hash = Some(corpus_hash.clone());
    pipeline.finish(
        STAGE,
        BTreeMap::from([
            ("abort_on_error".to_string(), json!(abort_on_error)),
            ("lowercase".to_string(), json!(!keep_case)),
        ]),
        BTreeMap::from([("corpus".to_string(), corpus_hash)]),
        &["sentences.jsonl", "reports.jsonl"],
    )?;
    println!(
        "ingested {} reports, {} unique sentences, {} skipped",
        result.reports.len(),
        result.table.len(),
        result.skipped.len()
    );
    Ok(())
}

pub enum EmbedSource {
    File { path: PathBuf, json: bool },
    Fallback { dim: usize, seed: u64 },
}

pub fn cmd_embed(pipeline: &mut Pipeline, source: EmbedSource) -> Result<(), StageError> {
    const STAGE: &str = "embed";
    let mut inputs = BTreeMap::new();
    let (sentences_path, sentences_hash) = pipeline.require(STAGE, "ingest", "sentences.jsonl")?;
    inputs.insert("sentences.jsonl".to_string(), sentences_hash);
    let (_, reports_hash) = pipeline.require(STAGE, "ingest", "reports.jsonl")?;
    inputs.insert("reports.jsonl".to_string(), reports_hash);
    let (_, table) = read_archive(sentences_path.parent().unwrap())
        .map_err(|e| domain_err(STAGE, e))?;

    let (matrix, params) = match &source {
        EmbedSource::File { path, json } => {
            inputs.insert(
                "source".to_string(),
                sha256_file(path).map_err(|e| domain_err(STAGE, e))?,
            );
            let matrix = if *json {
                load_embeddings_jsonl(path, &table)
            } else {
                load_embeddings(path, &table)
            }
            .map_err(|e| domain_err(STAGE, e))?;
            (
                matrix,
                BTreeMap::from([
                    ("mode".to_string(), json!("file")),
                    ("json".to_string(), json!(*json)),
                ]),
            )
        }
        EmbedSource::Fallback { dim, seed } => {
            let matrix =
                fallback_embed_table(&table, *dim, *seed).map_err(|e| domain_err(STAGE, e))?;
            (
                matrix,
                BTreeMap::from([
                    ("mode".to_string(), json!("fallback")),
                    ("dim".to_string(), json!(*dim)),
                    ("seed".to_string(), json!(*seed)),
                ]),
            )
        }
    };

    atomic_file(&pipeline.path("embeddings.bin"), |p| write_embeddings(p, &matrix))
        .map_err(|e| domain_err(STAGE, e))?;
    let dim = matrix.dim();
    let n = matrix.len();
    let mut params = params;
    params.insert("rows".to_string(), json!(n));
    params.insert("dim_actual".to_string(), json!(dim));
    pipeline.finish(STAGE, params, inputs, &["embeddings.bin"])?;
    println!("embedded {n} sentences at dim {dim}");
    Ok(())
}

pub struct ClusterParams {
    pub method: String,
    pub k: Option<usize>,
    pub eps: f64,
    pub min_pts: usize,
    pub min_cluster_size: usize,
    pub seed: u64,
    pub max_iter: usize,
}

pub fn cmd_cluster(pipeline: &mut Pipeline, params: ClusterParams) -> Result<(), StageError> {
    const STAGE: &str = "cluster";
    let mut inputs = BTreeMap::new();
    let (sentences_path, h) = pipeline.require(STAGE, "ingest", "sentences.jsonl")?;
    inputs.insert("sentences.jsonl".to_string(), h);
    let (embeddings_path, h) = pipeline.require(STAGE, "embed", "embeddings.bin")?;
    inputs.insert("embeddings.bin".to_string(), h);
    let (_, table) = read_archive(sentences_path.parent().unwrap())
        .map_err(|e| domain_err(STAGE, e))?;
    let matrix = load_embeddings(&embeddings_path, &table).map_err(|e| domain_err(STAGE, e))?;

    let (assignment, recorded) = match params.method.as_str() {
        "kmeans" => {
            let k = params.k.ok_or_else(|| {
                domain_err(STAGE, anyhow::anyhow!("--k is required for --method kmeans"))
            })?;
            let a = kmeans(&matrix, k, params.seed, params.max_iter)
                .map_err(|e| domain_err(STAGE, e))?;
            let p = BTreeMap::from([
                ("method".to_string(), json!("kmeans")),
                ("k".to_string(), json!(k)),
                ("seed".to_string(), json!(params.seed)),
                ("max_iter".to_string(), json!(params.max_iter)),
            ]);
            (a, p)
        }
        "dbscan" => {
            let a = dbscan(&matrix, params.eps, params.min_pts)
                .map_err(|e| domain_err(STAGE, e))?;
            let p = BTreeMap::from([
                ("method".to_string(), json!("dbscan")),
                ("eps".to_string(), json!(params.eps)),
                ("min_pts".to_string(), json!(params.min_pts)),
            ]);
            (a, p)
        }
        "hdbscan" => {
            let a = hdbscan(&matrix, params.min_cluster_size)
                .map_err(|e| domain_err(STAGE, e))?;
            let p = BTreeMap::from([
                ("method".to_string(), json!("hdbscan")),
                ("min_cluster_size".to_string(), json!(params.min_cluster_size)),
            ]);
            (a, p)
        }
        other => {
            return Err(domain_err(
                STAGE,
                anyhow::anyhow!("unknown clustering method {other}"),
            ))
        }
    };

    atomic_file(&pipeline.path("clusters.jsonl"), |p| write_clusters(p, &assignment))
        .map_err(|e| domain_err(STAGE, e))?;
    pipeline.finish(STAGE, recorded, inputs, &["clusters.jsonl"])?;
    match compute_stats(&assignment) {
        Ok(stats) => print!("{}", render_stats_table(&stats)),
        Err(_) => println!("no clusters formed (all points noise)"),
    }
    Ok(())
}

pub fn cmd_sign(pipeline: &mut Pipeline, mode: &str, seed: u64) -> Result<(), StageError> {
    const STAGE: &str = "sign";
    let mut inputs = BTreeMap::new();
    let (sentences_path, h) = pipeline.require(STAGE, "ingest", "sentences.jsonl")?;
    inputs.insert("sentences.jsonl".to_string(), h);
    let (_, h) = pipeline.require(STAGE, "cluster", "clusters.jsonl")?;
    inputs.insert("clusters.jsonl".to_string(), h);
    let assignment = pipeline.load_assignment(STAGE)?;
    let (_, table) = read_archive(sentences_path.parent().unwrap())
        .map_err(|e| domain_err(STAGE, e))?;

    let map = match mode {
        "fallback" => sign_all_clusters(&assignment, &table, &FallbackClassifier, seed)
            .map_err(|e| domain_err(STAGE, e))?,
        "llm" => {
            let url = std::env::var(ENV_LLM_URL).map_err(|_| {
                domain_err(STAGE, anyhow::anyhow!("{ENV_LLM_URL} must be set for --sign-mode llm"))
            })?;
            let model = std::env::var(ENV_LLM_MODEL).map_err(|_| {
                domain_err(STAGE, anyhow::anyhow!("{ENV_LLM_MODEL} must be set for --sign-mode llm"))
            })?;
            let token = std::env::var(ENV_LLM_TOKEN).ok();
            let transport =
                HttpChatTransport::new(url, model, token).map_err(|e| domain_err(STAGE, e))?;
            let cache = ResponseCache::load(pipeline.path("signs_cache.jsonl"))
                .map_err(|e| domain_err(STAGE, e))?;
            let client = LlmClient::new(Box::new(transport), cache);
            let classifier: &dyn SignClassifier = &client;
            sign_all_clusters(&assignment, &table, classifier, seed)
                .map_err(|e| domain_err(STAGE, e))?
        }
        other => {
            return Err(domain_err(STAGE, anyhow::anyhow!("unknown sign mode {other}")));
        }
    };

    atomic_file(&pipeline.path("signs.jsonl"), |p| write_signs(p, &map))
        .map_err(|e| domain_err(STAGE, e))?;
    pipeline.finish(
        STAGE,
        BTreeMap::from([
            ("mode".to_string(), json!(mode)),
            ("seed".to_string(), json!(seed)),
        ]),
        inputs,
        &["signs.jsonl"],
    )?;
    let positives = map.iter().filter(|(_, e)| e.sign.is_positive()).count();
    println!("signed {} clusters ({} positive)", map.len(), positives);
    Ok(())
}

pub fn cmd_graph(pipeline: &mut Pipeline, tau_norm: f64, tau_count: u32) -> Result<(), StageError> {
    const STAGE: &str = "graph";
    let mut inputs = BTreeMap::new();
    let (reports_path, h) = pipeline.require(STAGE, "ingest", "reports.jsonl")?;
    inputs.insert("reports.jsonl".to_string(), h);
    let (_, h) = pipeline.require(STAGE, "cluster", "clusters.jsonl")?;
    inputs.insert("clusters.jsonl".to_string(), h);
    let (signs_path, h) = pipeline.require(STAGE, "sign", "signs.jsonl")?;
    inputs.insert("signs.jsonl".to_string(), h);

    let (reports, _) = read_archive(reports_path.parent().unwrap())
        .map_err(|e| domain_err(STAGE, e))?;
    let assignment = pipeline.load_assignment(STAGE)?;
    let signs = read_signs(&signs_path).map_err(|e| domain_err(STAGE, e))?;
    let corpus_hash = pipeline.corpus_hash(STAGE)?;

    let counts = build_cooccurrence(&reports, &assignment).map_err(|e| domain_err(STAGE, e))?;
    let addability =
        build_addability(&counts, &signs, tau_norm, tau_count).map_err(|e| domain_err(STAGE, e))?;

    atomic_file(&pipeline.path("cooccurrence.jsonl"), |p| {
        write_cooccurrence(p, &counts, &corpus_hash)
    })
    .map_err(|e| domain_err(STAGE, e))?;
    atomic_file(&pipeline.path("addability.jsonl"), |p| {
        write_addability(p, &addability, &corpus_hash)
    })
    .map_err(|e| domain_err(STAGE, e))?;

    pipeline.finish(
        STAGE,
        BTreeMap::from([
            ("tau_norm".to_string(), json!(tau_norm)),
            ("tau_count".to_string(), json!(tau_count)),
        ]),
        inputs,
        &["cooccurrence.jsonl", "addability.jsonl"],
    )?;
    println!(
        "graph over {} clusters: {} co-occurring pairs, {} addability bits",
        counts.k(),
        counts.pairs().count(),
        addability.set_bits().count()
    );
    Ok(())
}

pub fn cmd_catalog(
    pipeline: &mut Pipeline,
    strict_algorithm1: bool,
    max_candidates: usize,
) -> Result<(), StageError> {
    const STAGE: &str = "catalog";
    let mut inputs = BTreeMap::new();
    let (reports_path, h) = pipeline.require(STAGE, "ingest", "reports.jsonl")?;
    inputs.insert("reports.jsonl".to_string(), h);
    let (_, h) = pipeline.require(STAGE, "cluster", "clusters.jsonl")?;
    inputs.insert("clusters.jsonl".to_string(), h);
    let (signs_path, h) = pipeline.require(STAGE, "sign", "signs.jsonl")?;
    inputs.insert("signs.jsonl".to_string(), h);
    let (addability_path, h) = pipeline.require(STAGE, "graph", "addability.jsonl")?;
    inputs.insert("addability.jsonl".to_string(), h);

    let (reports, _) = read_archive(reports_path.parent().unwrap())
        .map_err(|e| domain_err(STAGE, e))?;
    let assignment = pipeline.load_assignment(STAGE)?;
    let signs = read_signs(&signs_path).map_err(|e| domain_err(STAGE, e))?;
    let (addability, graph_corpus_hash) =
        read_addability(&addability_path).map_err(|e| domain_err(STAGE, e))?;
    let corpus_hash = pipeline.corpus_hash(STAGE)?;
    if graph_corpus_hash != corpus_hash && !pipeline.force {
        return Err(StageError::HashMismatch {
            stage: STAGE.to_string(),
            artifact: "addability.jsonl".to_string(),
        });
    }

    let config = EnrichConfig {
        strict_one_directional: strict_algorithm1,
        max_candidates,
    };
    let catalog = build_catalog(&reports, &assignment, &addability, &signs, &config)
        .map_err(|e| domain_err(STAGE, e))?;

    atomic_file(&pipeline.path("catalog.jsonl"), |p| write_catalog(p, &catalog))
        .map_err(|e| domain_err(STAGE, e))?;
    pipeline.finish(
        STAGE,
        BTreeMap::from([
            ("strict_algorithm1".to_string(), json!(strict_algorithm1)),
            ("max_candidates".to_string(), json!(max_candidates)),
        ]),
        inputs,
        &["catalog.jsonl"],
    )?;
    let nonempty = catalog
        .iter()
        .filter(|(_, exps)| exps.iter().any(|e| !e.is_empty()))
        .count();
    println!(
        "catalog holds {} unique finding sets ({} with non-empty expansions)",
        catalog.len(),
        nonempty
    );
    Ok(())
}

#[derive(Serialize)]
struct EnrichedRow<'a> {
    report_id: &'a str,
    findings: String,
    impression: &'a str,
    expansion_cluster_ids: Vec<u32>,
}

pub fn cmd_enrich(pipeline: &mut Pipeline, seed: u64) -> Result<(), StageError> {
    const STAGE: &str = "enrich";
    let mut inputs = BTreeMap::new();
    let (reports_path, h) = pipeline.require(STAGE, "ingest", "reports.jsonl")?;
    inputs.insert("reports.jsonl".to_string(), h);
    let (_, h) = pipeline.require(STAGE, "ingest", "sentences.jsonl")?;
    inputs.insert("sentences.jsonl".to_string(), h);
    let (_, h) = pipeline.require(STAGE, "cluster", "clusters.jsonl")?;
    inputs.insert("clusters.jsonl".to_string(), h);
    let (catalog_path, h) = pipeline.require(STAGE, "catalog", "catalog.jsonl")?;
    inputs.insert("catalog.jsonl".to_string(), h);

    let (reports, table) = read_archive(reports_path.parent().unwrap())
        .map_err(|e| domain_err(STAGE, e))?;
    let assignment = pipeline.load_assignment(STAGE)?;
    let catalog = read_catalog(&catalog_path).map_err(|e| domain_err(STAGE, e))?;

    let mut rows = Vec::with_capacity(reports.len());
    let mut enriched_count = 0usize;
    for (draw, report) in reports.iter().enumerate() {
        let cluster_set = assignment.cluster_set_of(&report.findings_sentences);
        let expansion = if cluster_set.is_empty() {
            Vec::new()
        } else {
            let f = FindingSet::new(cluster_set).map_err(|e| domain_err(STAGE, e))?;
            match catalog.get(&f) {
                Some(_) => sample_enrichment(&catalog, &f, seed, draw as u64)
                    .map_err(|e| domain_err(STAGE, e))?
                    .clone(),
                None => Vec::new(),
            }
        };
        if !expansion.is_empty() {
            enriched_count += 1;
        }
        let findings = render_enriched(report, &expansion, &assignment, &table, seed)
            .map_err(|e| domain_err(STAGE, e))?;
        rows.push(EnrichedRow {
            report_id: &report.report_id,
            findings,
            impression: &report.impression_text,
            expansion_cluster_ids: expansion.iter().map(|c| c.0).collect(),
        });
    }

    atomic_file(&pipeline.path("enriched.jsonl"), |p| -> anyhow::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
        for row in &rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    })
    .map_err(|e| domain_err(STAGE, e))?;

    pipeline.finish(
        STAGE,
        BTreeMap::from([("seed".to_string(), json!(seed))]),
        inputs,
        &["enriched.jsonl"],
    )?;
    println!(
        "enriched corpus written: {} reports ({} expanded)",
        rows.len(),
        enriched_count
    );
    Ok(())
}

#[derive(Deserialize)]
struct GenerationRow {
    report_id: String,
    text: String,
}

#[derive(Serialize)]
struct RewardRow<'a> {
    report_id: &'a str,
    f1: f64,
    exact: u8,
    total: f64,
}

#[derive(Serialize)]
struct RewardErrorRow<'a> {
    report_id: &'a str,
    error: String,
}

struct RewardContext {
    table: enrich_core::corpus::SentenceTable,
    assignment: ClusterAssignment,
    matrix: EmbeddingMatrix,
    embedder: EmbedderConfig,
    reports: BTreeMap<String, (std::collections::BTreeSet<enrich_core::ClusterId>, String)>,
    sim_threshold: f32,
}

impl RewardContext {
    fn score(&self, report_id: &str, text: &str) -> Result<RewardScore, String> {
        let (gt_clusters, gt_impression) = self
            .reports
            .get(report_id)
            .ok_or_else(|| format!("unknown report_id {report_id}"))?;
        if gt_clusters.is_empty() {
            return Err(format!("report {report_id} has an empty ground-truth cluster set"));
        }
        let ctx = ScoringContext {
            matrix: &self.matrix,
            assignment: &self.assignment,
            table: &self.table,
            embedder: self.embedder,
            sim_threshold: self.sim_threshold,
        };
        evaluate_generation(text, gt_clusters, gt_impression, &ctx)
            .map(|(_, score)| score)
            .map_err(|e| e.to_string())
    }
}

fn reward_context(pipeline: &Pipeline, sim_threshold: f32, stage: &str) -> Result<(RewardContext, BTreeMap<String, String>), StageError> {
    let mut inputs = BTreeMap::new();
    let (reports_path, h) = pipeline.require(stage, "ingest", "reports.jsonl")?;
    inputs.insert("reports.jsonl".to_string(), h);
    let (_, h) = pipeline.require(stage, "ingest", "sentences.jsonl")?;
    inputs.insert("sentences.jsonl".to_string(), h);
    let (_, h) = pipeline.require(stage, "cluster", "clusters.jsonl")?;
    inputs.insert("clusters.jsonl".to_string(), h);
    let (embeddings_path, h) = pipeline.require(stage, "embed", "embeddings.bin")?;
    inputs.insert("embeddings.bin".to_string(), h);

    let (reports, table) = read_archive(reports_path.parent().unwrap())
        .map_err(|e| domain_err(stage, e))?;
    let assignment = pipeline.load_assignment(stage)?;
    let matrix = load_embeddings(&embeddings_path, &table).map_err(|e| domain_err(stage, e))?;

    let embed_params = pipeline
        .manifest
        .stages
        .get("embed")
        .map(|s| s.params.clone())
        .unwrap_or_default();
    let embedder = if embed_params.get("mode").and_then(|v| v.as_str()) == Some("fallback") {
        EmbedderConfig::Fallback {
            dim: embed_params
                .get("dim")
                .and_then(|v| v.as_u64())
                .unwrap_or(384) as usize,
            seed: embed_params.get("seed").and_then(|v| v.as_u64()).unwrap_or(0),
        }
    } else {
        EmbedderConfig::ExactOnly
    };

    let report_map = reports
        .iter()
        .map(|r| {
            let set = assignment
                .cluster_set_of(&r.findings_sentences)
                .into_iter()
                .collect();
            (r.report_id.clone(), (set, r.impression_text.clone()))
        })
        .collect();

    Ok((
        RewardContext {
            table,
            assignment,
            matrix,
            embedder,
            reports: report_map,
            sim_threshold,
        },
        inputs,
    ))
}

pub fn cmd_reward_batch(
    pipeline: &mut Pipeline,
    generations: &Path,
    sim_threshold: f32,
) -> Result<(), StageError> {
    const STAGE: &str = "reward";
    let (ctx, mut inputs) = reward_context(pipeline, sim_threshold, STAGE)?;
    inputs.insert(
        "generations".to_string(),
        sha256_file(generations).map_err(|e| domain_err(STAGE, e))?,
    );

    let text = std::fs::read_to_string(generations).map_err(|e| domain_err(STAGE, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let gen: GenerationRow = serde_json::from_str(line).map_err(|e| {
            domain_err(STAGE, anyhow::anyhow!("generations line {}: {e}", lineno + 1))
        })?;
        let score = ctx
            .score(&gen.report_id, &gen.text)
            .map_err(|msg| domain_err(STAGE, anyhow::anyhow!(msg)))?;
        rows.push((gen.report_id, score));
    }

    atomic_file(&pipeline.path("rewards.jsonl"), |p| -> anyhow::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
        for (report_id, score) in &rows {
            let row = RewardRow {
                report_id,
                f1: score.f1,
                exact: score.exact,
                total: score.total,
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    })
    .map_err(|e| domain_err(STAGE, e))?;

    pipeline.finish(
        STAGE,
        BTreeMap::from([("sim_threshold".to_string(), json!(sim_threshold))]),
        inputs,
        &["rewards.jsonl"],
    )?;
    println!("scored {} generations", rows.len());
    Ok(())
}

/// One JSON record per stdin line, one score record per stdout line. Errors
/// become `{report_id, error}` records so the stream stays 1:1 for a
/// driving trainer.
pub fn cmd_reward_stream(pipeline: &Pipeline, sim_threshold: f32) -> Result<(), StageError> {
    const STAGE: &str = "reward";
    let (ctx, _) = reward_context(pipeline, sim_threshold, STAGE)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| domain_err(STAGE, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<GenerationRow>(&line) {
            Ok(gen) => match ctx.score(&gen.report_id, &gen.text) {
                Ok(score) => serde_json::to_string(&RewardRow {
                    report_id: &gen.report_id,
                    f1: score.f1,
                    exact: score.exact,
                    total: score.total,
                }),
                Err(msg) => serde_json::to_string(&RewardErrorRow {
                    report_id: &gen.report_id,
                    error: msg,
                }),
            },
            Err(e) => serde_json::to_string(&RewardErrorRow {
                report_id: "",
                error: format!("bad input record: {e}"),
            }),
        }
        .map_err(|e| domain_err(STAGE, e))?;
        writeln!(out, "{response}").map_err(|e| domain_err(STAGE, e))?;
        out.flush().map_err(|e| domain_err(STAGE, e))?;
    }
    Ok(())
}

pub fn cmd_stats(pipeline: &Pipeline) -> Result<(), StageError> {
    const STAGE: &str = "stats";
    let assignment = pipeline.load_assignment(STAGE)?;
    let stats = compute_stats(&assignment).map_err(|e| domain_err(STAGE, e))?;
    print!("{}", render_stats_table(&stats));
    Ok(())
}
