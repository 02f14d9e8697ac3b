use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster, ClusterAssignment, OUTLIER};
use crate::embedding::{fetch_embeddings, read_emb1, EmbeddingMatrix, ProviderMode};
use crate::eval::{npmi_coherence_detailed, topic_diversity, EvalReport};
use crate::ingest::{ingest, read_sources, EmailDoc, IngestLedger, SourceDoc};
use crate::labeler::{
    label_topics, select_representative_docs, HttpLabelSource, LabelSource, LabelerMode, ReplaySource,
};
use crate::lda::{build_hierarchy, extract_topic_words, fit_lda, update_lda, LdaModel, TopicHierarchy};
use crate::reduce::{reduce, trustworthiness, Metric, ReduceConfig, ReduceMethod};
use crate::topics::{
    assign_category, build_lexicon, ctfidf, default_lexicon, english_stopwords, load_stopwords, py_repr_list,
    tokenize, CategoryLexicon, TopicModel, TOP_K,
};

use super::svg::scatter_svg;
use super::{stage_seed, AtStage, Failure, PipelineConfig, PipelineError, Stage};

/// Column headers of `report.csv`.
pub const REPORT_COLUMNS: [&str; 5] = [
    "Topic Category",
    "Name",
    "c-TF-IDF Keyword Representation",
    "Semantic Meaning",
    "Topic Hierarchy / Thematic Analysis",
];

/// A topic counts toward a cluster's hierarchy when it dominates at least
/// this share of the cluster's documents.
const HIERARCHY_TOPIC_SHARE: f64 = 0.10;

/// Ingested documents with aligned embeddings and tokens.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub docs: Vec<EmailDoc>,
    pub ledger: IngestLedger,
    pub embeddings: EmbeddingMatrix,
    pub tokens: Vec<Vec<String>>,
    pub lexicon: CategoryLexicon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionInfo {
    pub requested: ReduceMethod,
    pub used: ReduceMethod,
    pub n_components: usize,
    pub seed: u64,
    pub trustworthiness: Option<f64>,
    pub fell_back_to_pca: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub reduced: EmbeddingMatrix,
    pub reduction: ReductionInfo,
    pub assignment: ClusterAssignment,
    pub topics: Vec<TopicModel>,
    pub eval: EvalReport,
    pub missing_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cluster_id: i32,
    pub size: usize,
    pub topic_category: String,
    pub name: String,
    pub keywords: Vec<String>,
    pub keyword_representation: String,
    pub semantic_meaning: String,
    pub topic_hierarchy: String,
    pub hierarchy: TopicHierarchy,
}

impl ReportRow {
    pub fn new(topic: &TopicModel, size: usize, semantic_meaning: String, hierarchy: TopicHierarchy) -> Self {
        let keywords = topic.keywords();
        Self {
            cluster_id: topic.cluster_id,
            size,
            topic_category: topic.category.as_deref().map(title_case).unwrap_or_default(),
            name: topic.name.clone(),
            keyword_representation: py_repr_list(&keywords),
            keywords,
            semantic_meaning,
            topic_hierarchy: hierarchy.to_mapping_text(),
            hierarchy,
        }
    }

    pub fn csv_record(&self) -> [&str; 5] {
        [
            &self.topic_category,
            &self.name,
            &self.keyword_representation,
            &self.semantic_meaning,
            &self.topic_hierarchy,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFallback {
    pub cluster_id: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub n_documents: usize,
    pub n_outliers: usize,
    pub reduction: ReductionInfo,
    pub eval: EvalReport,
    pub rows: Vec<ReportRow>,
    pub ledger: IngestLedger,
    pub label_fallbacks: Vec<LabelFallback>,
    /// Topic words that never occur in the corpus (scored as NPMI 0).
    pub coherence_warnings: Vec<String>,
}

/// Everything a run writes, rendered in memory first.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub files: Vec<(&'static str, Vec<u8>)>,
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        })
        .collect::<Vec<String>>()
        .join(" ")
}

fn load_sources(cfg: &PipelineConfig) -> Result<Vec<SourceDoc>, PipelineError> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| PipelineError::new(Stage::Ingest, Failure::Other("no input configured".into())))?;
    read_sources(input).at(Stage::Ingest)
}

/// Aligns a matrix to the retained documents by doc id. A matrix carrying
/// default ids ("0", "1", ...) is matched positionally against either the
/// full source list or the retained list.
fn align_embeddings(
    m: EmbeddingMatrix,
    sources: &[SourceDoc],
    docs: &[EmailDoc],
) -> Result<EmbeddingMatrix, PipelineError> {
    let fail = |msg: String| PipelineError::new(Stage::Embeddings, Failure::Embeddings(msg));
    let index: HashMap<&str, usize> = m.doc_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let by_id: Option<Vec<usize>> = docs.iter().map(|d| index.get(d.id.as_str()).copied()).collect();
    if let Some(rows) = by_id {
        let ids = docs.iter().map(|d| d.id.clone()).collect();
        return m.select(&rows).with_doc_ids(ids).at(Stage::Embeddings);
    }
    if m.n_rows() == docs.len() {
        return m.with_doc_ids(docs.iter().map(|d| d.id.clone()).collect()).at(Stage::Embeddings);
    }
    if m.n_rows() == sources.len() {
        let pos: HashMap<&str, usize> = sources.iter().enumerate().map(|(i, s)| (s.id(), i)).collect();
        let rows: Vec<usize> = docs.iter().map(|d| pos[d.id.as_str()]).collect();
        let ids = docs.iter().map(|d| d.id.clone()).collect();
        return m.select(&rows).with_doc_ids(ids).at(Stage::Embeddings);
    }
    Err(fail(format!(
        "{} embedding rows for {} source and {} retained documents",
        m.n_rows(),
        sources.len(),
        docs.len()
    )))
}

/// Ingests, resolves embeddings, tokenizes and loads the lexicon.
/// `embeddings` overrides the configured provider.
pub fn prepare(
    cfg: &PipelineConfig,
    sources: &[SourceDoc],
    embeddings: Option<EmbeddingMatrix>,
) -> Result<Prepared, PipelineError> {
    let outcome = ingest(sources, &cfg.ingest).at(Stage::Ingest)?;
    if outcome.docs.is_empty() {
        return Err(PipelineError::new(Stage::Ingest, Failure::EmptyCorpus));
    }
    log::info!(
        "ingest: {} of {} documents retained",
        outcome.ledger.retained,
        outcome.ledger.input_count
    );

    let matrix = match embeddings {
        Some(m) => m,
        None => match cfg.provider.mode {
            ProviderMode::File => {
                cfg.provider.validate().at(Stage::Embeddings)?;
                let path = cfg.provider.file_path.as_ref().expect("validated");
                let file = File::open(path).map_err(|e| PipelineError::new(Stage::Embeddings, Failure::Io(e)))?;
                read_emb1(BufReader::new(file)).at(Stage::Embeddings)?
            }
            ProviderMode::Remote => {
                let ids: Vec<String> = outcome.docs.iter().map(|d| d.id.clone()).collect();
                let texts: Vec<String> = outcome.docs.iter().map(|d| d.full_text.clone()).collect();
                fetch_embeddings(&ids, &texts, &cfg.provider).at(Stage::Embeddings)?
            }
        },
    };
    let embeddings = align_embeddings(matrix, sources, &outcome.docs)?;

    let mut stopwords = english_stopwords();
    for path in &cfg.stopwords {
        stopwords.extend(load_stopwords(path).at(Stage::Topics)?);
    }
    let tokens: Vec<Vec<String>> = outcome.docs.par_iter().map(|d| tokenize(&d.full_text, &stopwords)).collect();
    let lexicon = match &cfg.lexicon {
        Some(path) => CategoryLexicon::load(path).at(Stage::Topics)?,
        None => default_lexicon(),
    };
    Ok(Prepared {
        docs: outcome.docs,
        ledger: outcome.ledger,
        embeddings,
        tokens,
        lexicon,
    })
}

/// Reduces with the configured method. Neighbor-embedding output whose
/// trustworthiness falls below the gate is replaced by PCA.
pub fn reduce_stage(
    embeddings: &EmbeddingMatrix,
    reduce_cfg: &ReduceConfig,
    gate: f64,
) -> Result<(EmbeddingMatrix, ReductionInfo), PipelineError> {
    let reduced = reduce(embeddings, reduce_cfg).at(Stage::Reduce)?;
    let mut info = ReductionInfo {
        requested: reduce_cfg.method,
        used: reduce_cfg.method,
        n_components: reduce_cfg.n_components,
        seed: reduce_cfg.seed,
        trustworthiness: None,
        fell_back_to_pca: false,
        warnings: reduced.warnings.iter().map(ToString::to_string).collect(),
    };
    let n = embeddings.n_rows();
    if reduce_cfg.method != ReduceMethod::NeighborEmbed || n < 4 {
        return Ok((reduced.matrix, info));
    }
    let original = match reduce_cfg.metric {
        Metric::Cosine => embeddings.row_normalized(),
        Metric::Euclidean => embeddings.clone(),
    };
    let k = 15.min((n - 1) / 2).max(1);
    let t = trustworthiness(&original, &reduced.matrix, k).at(Stage::Reduce)?;
    info.trustworthiness = Some(t);
    if t >= gate {
        return Ok((reduced.matrix, info));
    }
    log::warn!("neighbor embedding trustworthiness {t:.3} below {gate}; using PCA");
    let pca_cfg = ReduceConfig {
        method: ReduceMethod::Pca,
        ..reduce_cfg.clone()
    };
    let pca = reduce(embeddings, &pca_cfg).at(Stage::Reduce)?;
    info.used = ReduceMethod::Pca;
    info.fell_back_to_pca = true;
    info.warnings.extend(pca.warnings.iter().map(ToString::to_string));
    Ok((pca.matrix, info))
}

/// The run's reduction settings with the stage seed applied.
pub fn seeded_reduce_config(cfg: &PipelineConfig) -> ReduceConfig {
    ReduceConfig {
        seed: stage_seed(cfg.master_seed, Stage::Reduce),
        ..cfg.reduce.clone()
    }
}

/// Clusters the reduced points and scores the resulting keyword topics.
pub fn analyze(
    prepared: &Prepared,
    cfg: &PipelineConfig,
    reduced: &EmbeddingMatrix,
    reduction: &ReductionInfo,
) -> Result<Analysis, PipelineError> {
    let assignment = cluster(reduced, &cfg.cluster).at(Stage::Cluster)?;
    log::info!(
        "cluster: {} clusters, {} outliers",
        assignment.n_clusters,
        assignment.n_outliers()
    );
    let mut topics = Vec::with_capacity(assignment.n_clusters);
    if assignment.n_clusters > 0 {
        let mut per_cluster: Vec<Vec<String>> = vec![Vec::new(); assignment.n_clusters];
        for (doc, &label) in prepared.tokens.iter().zip(&assignment.labels) {
            if label != OUTLIER {
                per_cluster[label as usize].extend(doc.iter().cloned());
            }
        }
        let weights = ctfidf(&per_cluster).at(Stage::Topics)?;
        for c in 0..assignment.n_clusters {
            let mut topic = TopicModel::new(c as i32, weights.top_terms(c, TOP_K));
            topic.category = assign_category(&topic, &prepared.lexicon);
            topics.push(topic);
        }
    }

    let words: Vec<Vec<String>> = topics.iter().map(TopicModel::keywords).collect();
    let coherence = npmi_coherence_detailed(&words, &prepared.tokens, &cfg.eval).at(Stage::Eval)?;
    let eval = EvalReport::new(
        cfg.cluster.algorithm,
        cfg.cluster.min_cluster_size,
        assignment.n_clusters as f64,
        coherence.overall,
        topic_diversity(&words),
    );
    Ok(Analysis {
        reduced: reduced.clone(),
        reduction: reduction.clone(),
        assignment,
        topics,
        eval,
        missing_words: coherence.missing_words,
    })
}

struct Offline;

impl LabelSource for Offline {
    fn complete(&self, _: i32, _: &str) -> Result<String, String> {
        Err("offline".into())
    }
}

fn label_stage(
    prepared: &Prepared,
    cfg: &PipelineConfig,
    analysis: &Analysis,
) -> Result<(Vec<String>, Vec<LabelFallback>), PipelineError> {
    let reps: Vec<Vec<String>> = (0..analysis.topics.len())
        .map(|c| {
            let members = analysis.assignment.members(c as i32);
            select_representative_docs(&members, &analysis.reduced, cfg.labeler.docs_per_cluster)
                .into_iter()
                .map(|i| prepared.docs[i].full_text.clone())
                .collect()
        })
        .collect();
    let source: Box<dyn LabelSource> = match (cfg.labeler.mode, &cfg.labeler_fixture) {
        (LabelerMode::Stub, _) => Box::new(Offline),
        (LabelerMode::Remote, Some(path)) => Box::new(ReplaySource::load(path).at(Stage::Labeler)?),
        (LabelerMode::Remote, None) => Box::new(HttpLabelSource::new(
            cfg.labeler.endpoint_url.clone().unwrap_or_default(),
            Duration::from_secs(cfg.labeler.timeout_s),
        )),
    };
    let outcomes = label_topics(&analysis.topics, &reps, &cfg.labeler, source.as_ref());
    let fallbacks = outcomes
        .iter()
        .filter_map(|o| {
            o.fallback.as_ref().map(|r| LabelFallback {
                cluster_id: o.cluster_id,
                reason: r.clone(),
            })
        })
        .collect();
    Ok((outcomes.into_iter().map(|o| o.label).collect(), fallbacks))
}

/// Fits LDA on the first cluster's documents and updates it with each
/// following cluster. A cluster's hierarchy is built from the topics that
/// dominate enough of its documents.
fn hierarchy_stage(
    prepared: &Prepared,
    cfg: &PipelineConfig,
    assignment: &ClusterAssignment,
) -> Result<Vec<TopicHierarchy>, PipelineError> {
    let n = assignment.n_clusters;
    if n == 0 {
        return Ok(Vec::new());
    }
    let params = crate::lda::LdaParams {
        seed: stage_seed(cfg.master_seed, Stage::Lda),
        ..cfg.lda.clone()
    };
    let mut model: Option<LdaModel> = None;
    let mut ranges: Vec<Option<(usize, usize)>> = Vec::with_capacity(n);
    for c in 0..n {
        let docs: Vec<Vec<String>> = assignment
            .members(c as i32)
            .into_iter()
            .map(|i| prepared.tokens[i].clone())
            .filter(|d| !d.is_empty())
            .collect();
        if docs.is_empty() {
            ranges.push(None);
            continue;
        }
        let start = model.as_ref().map_or(0, LdaModel::n_docs);
        let next = match &model {
            None => fit_lda(&docs, &params),
            Some(m) => update_lda(m, &docs),
        }
        .at(Stage::Lda)?;
        ranges.push(Some((start, next.n_docs())));
        model = Some(next);
    }
    let Some(model) = model else {
        return Ok(vec![TopicHierarchy::new(); n]);
    };
    let words = extract_topic_words(&model, TOP_K);
    let dominant = model.dominant_topics();
    Ok(ranges
        .into_iter()
        .map(|range| {
            let Some((s, e)) = range else {
                return TopicHierarchy::new();
            };
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &t in &dominant[s..e] {
                *counts.entry(t).or_default() += 1;
            }
            let min = ((e - s) as f64 * HIERARCHY_TOPIC_SHARE).ceil() as usize;
            let chosen: Vec<Vec<String>> = counts
                .into_iter()
                .filter(|&(_, c)| c >= min.max(1))
                .map(|(t, _)| words[t].clone())
                .collect();
            build_hierarchy(&chosen, &prepared.lexicon)
        })
        .collect())
}

fn scatter_stage(prepared: &Prepared, cfg: &PipelineConfig, labels: &[i32]) -> Option<String> {
    if !cfg.scatter {
        return None;
    }
    let scatter_cfg = ReduceConfig {
        method: ReduceMethod::NeighborEmbed,
        n_components: 2,
        seed: stage_seed(cfg.master_seed, Stage::Scatter),
        ..cfg.reduce.clone()
    };
    match reduce(&prepared.embeddings, &scatter_cfg) {
        Ok(r) => Some(scatter_svg(&r.matrix, labels)),
        Err(e) => {
            log::warn!("scatter skipped: {e}");
            None
        }
    }
}

fn csv_bytes<F>(write: F) -> Result<Vec<u8>, PipelineError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).at(Stage::Output)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut out = serde_json::to_vec_pretty(value).at(Stage::Output)?;
    out.push(b'\n');
    Ok(out)
}

/// Labels, builds hierarchies and renders every output of a run.
pub fn run_prepared(prepared: &Prepared, cfg: &PipelineConfig, analysis: Analysis) -> Result<RunArtifacts, PipelineError> {
    let (labels, label_fallbacks) = label_stage(prepared, cfg, &analysis)?;
    let hierarchies = hierarchy_stage(prepared, cfg, &analysis.assignment)?;

    let mut topics = analysis.topics;
    let sizes = analysis.assignment.cluster_sizes();
    let mut rows = Vec::with_capacity(topics.len());
    for (i, topic) in topics.iter_mut().enumerate() {
        topic.semantic_label = Some(labels[i].clone());
        rows.push(ReportRow::new(topic, sizes[i], labels[i].clone(), hierarchies[i].clone()));
    }
    let category_of: BTreeMap<i32, String> = topics
        .iter()
        .filter_map(|t| t.category.clone().map(|c| (t.cluster_id, c)))
        .collect();
    let lexicon = build_lexicon(&topics, &category_of);

    let report = RunReport {
        config: cfg.clone(),
        n_documents: prepared.docs.len(),
        n_outliers: analysis.assignment.n_outliers(),
        reduction: analysis.reduction,
        eval: analysis.eval,
        rows,
        ledger: prepared.ledger.clone(),
        label_fallbacks,
        coherence_warnings: analysis.missing_words,
    };

    let doc_ids: Vec<String> = prepared.docs.iter().map(|d| d.id.clone()).collect();
    let mut files: Vec<(&'static str, Vec<u8>)> = vec![
        ("report.json", json_bytes(&report)?),
        (
            "report.csv",
            csv_bytes(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(REPORT_COLUMNS)?;
                for row in &report.rows {
                    w.write_record(row.csv_record())?;
                }
                w.flush()?;
                Ok(())
            })?,
        ),
        ("assignments.csv", csv_bytes(|buf| analysis.assignment.write_csv(&doc_ids, buf))?),
        ("ledger.json", json_bytes(&report.ledger)?),
        ("topics.json", json_bytes(&topics)?),
        ("lexicon.json", format!("{}\n", lexicon.to_json()).into_bytes()),
    ];
    if analysis.assignment.reachability.is_some() {
        let bytes = csv_bytes(|buf| {
            analysis
                .assignment
                .write_reachability_csv(&doc_ids, buf)
                .expect("reachability present")
        })?;
        files.push(("reachability.csv", bytes));
    }
    if let Some(svg) = scatter_stage(prepared, cfg, &analysis.assignment.labels) {
        files.push(("scatter.svg", svg.into_bytes()));
    }
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    files.push((
        "run_meta.json",
        json_bytes(&serde_json::json!({
            "timestamp_unix": timestamp,
            "version": env!("CARGO_PKG_VERSION"),
        }))?,
    ));
    Ok(RunArtifacts { report, files })
}

/// Writes all files into `dir`. On any failure the files already written by
/// this call are removed.
pub fn write_outputs(dir: &Path, artifacts: &RunArtifacts) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |e| PipelineError::new(Stage::Output, Failure::Io(e));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut written = Vec::new();
    for (name, bytes) in &artifacts.files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            return Err(io(e));
        }
        written.push(path);
    }
    Ok(written)
}

/// Runs every stage on already-loaded sources and writes the outputs.
pub fn run_on(
    cfg: &PipelineConfig,
    sources: &[SourceDoc],
    embeddings: Option<EmbeddingMatrix>,
) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let prepared = prepare(cfg, sources, embeddings)?;
    let (reduced, info) = reduce_stage(&prepared.embeddings, &seeded_reduce_config(cfg), cfg.trustworthiness_gate)?;
    let analysis = analyze(&prepared, cfg, &reduced, &info)?;
    let artifacts = run_prepared(&prepared, cfg, analysis)?;
    write_outputs(&cfg.output_dir, &artifacts)?;
    Ok(artifacts.report)
}

/// Reads the configured input and runs the whole pipeline.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let sources = load_sources(cfg)?;
    run_on(cfg, &sources, None)
}

/// Doc ids present in more than one source, for diagnostics.
pub fn duplicate_ids(sources: &[SourceDoc]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = sources
        .iter()
        .filter(|s| !seen.insert(s.id()))
        .map(|s| s.id().to_string())
        .collect();
    dups.sort();
    dups.dedup();
    dups
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_title_case() {
        assert_eq!(title_case("digital communication"), "Digital Communication");
        assert_eq!(title_case("financial"), "Financial");
    }

    #[test]
    fn empty_corpus_names_ingest() {
        let sources = vec![SourceDoc::Fields {
            id: "a".into(),
            subject: "virus found".into(),
            body: "body".into(),
        }];
        let err = prepare(&PipelineConfig::default(), &sources, None).unwrap_err();
        assert_eq!(err.stage, Stage::Ingest);
        assert!(err.to_string().contains("no documents"));
    }

    #[test]
    fn embeddings_align_by_id_or_position() {
        let sources: Vec<SourceDoc> = ["a", "b", "c"]
            .iter()
            .map(|id| SourceDoc::Fields {
                id: id.to_string(),
                subject: String::new(),
                body: format!("text {id}"),
            })
            .collect();
        let docs: Vec<EmailDoc> = ["a", "c"]
            .iter()
            .map(|id| EmailDoc::new(*id, String::new(), "x".into()))
            .collect();
        let m = EmbeddingMatrix::from_points(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let aligned = align_embeddings(m, &sources, &docs).unwrap();
        assert_eq!(aligned.values(), &[0.0, 2.0]);
        assert_eq!(aligned.doc_ids(), &["a".to_string(), "c".to_string()]);

        let named = EmbeddingMatrix::from_rows(vec![vec![5.0], vec![6.0]], vec!["c".into(), "a".into()]).unwrap();
        assert_eq!(align_embeddings(named, &sources, &docs).unwrap().values(), &[6.0, 5.0]);

        let short = EmbeddingMatrix::from_points(vec![vec![0.0]]).unwrap();
        assert_eq!(align_embeddings(short, &sources, &docs).unwrap_err().stage, Stage::Embeddings);
    }
}
