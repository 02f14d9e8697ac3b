//! Short natural-language labels for clusters, from a completion service or
//! an offline stub.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{euclidean, EmbeddingMatrix};
use crate::topics::TopicModel;

pub const DEFAULT_TEMPLATE: &str = "Give a topic label of at most 8 words for a group of emails.\n\
Keywords: [KEYWORDS]\n\
Sample emails:\n[DOCUMENTS]\n\
Label:";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("label service unavailable after {attempts} attempts: {last}")]
    ServiceUnavailable { attempts: usize, last: String },
    #[error("invalid labeler config: {0}")]
    InvalidConfig(String),
    #[error("fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelerMode {
    Remote,
    #[default]
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerConfig {
    pub mode: LabelerMode,
    pub endpoint_url: Option<String>,
    pub prompt_template: String,
    pub doc_truncate_chars: usize,
    pub docs_per_cluster: usize,
    pub max_label_words: usize,
    pub timeout_s: u64,
    pub retries: usize,
    /// Requests in flight at once.
    pub parallelism: usize,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            mode: LabelerMode::Stub,
            endpoint_url: None,
            prompt_template: DEFAULT_TEMPLATE.to_string(),
            doc_truncate_chars: 500,
            docs_per_cluster: 4,
            max_label_words: 8,
            timeout_s: 60,
            retries: 3,
            parallelism: 4,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<(), LabelError> {
        self.validate_limits()?;
        if self.mode == LabelerMode::Remote && self.endpoint_url.is_none() {
            return Err(LabelError::InvalidConfig("remote mode requires endpoint_url".into()));
        }
        Ok(())
    }

    /// Everything except the endpoint, for replayed labels.
    pub fn validate_limits(&self) -> Result<(), LabelError> {
        if self.doc_truncate_chars == 0 {
            return Err(LabelError::InvalidConfig("doc_truncate_chars must be ≥ 1".into()));
        }
        if self.docs_per_cluster == 0 {
            return Err(LabelError::InvalidConfig("docs_per_cluster must be ≥ 1".into()));
        }
        if self.max_label_words == 0 || self.parallelism == 0 {
            return Err(LabelError::InvalidConfig("max_label_words and parallelism must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Indices into `members` of the `k` members closest to the members'
/// centroid, nearest first, ties to the smaller row index.
pub fn select_representative_docs(members: &[usize], points: &EmbeddingMatrix, k: usize) -> Vec<usize> {
    if members.is_empty() {
        return Vec::new();
    }
    let dim = points.dim();
    let mut centroid = vec![0.0; dim];
    for &m in members {
        for (c, x) in centroid.iter_mut().zip(points.row(m)) {
            *c += x;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
    let mut by_dist: Vec<(f64, usize)> = members
        .iter()
        .map(|&m| (euclidean(points.row(m), &centroid), m))
        .collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    by_dist.into_iter().take(k).map(|(_, m)| m).collect()
}

pub fn truncate_chars(text: &str, n: usize) -> &str {
    match text.char_indices().nth(n) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}

/// Fills `[KEYWORDS]` and `[DOCUMENTS]`. Each document is cut to
/// `doc_truncate_chars` characters and at most `docs_per_cluster` are used.
pub fn build_prompt<S: AsRef<str>>(topic: &TopicModel, rep_docs: &[S], cfg: &LabelerConfig) -> String {
    let keywords = topic.keywords().join(", ");
    let docs: Vec<String> = rep_docs
        .iter()
        .take(cfg.docs_per_cluster)
        .map(|d| format!("- {}", truncate_chars(d.as_ref(), cfg.doc_truncate_chars)))
        .collect();
    cfg.prompt_template
        .replace("[KEYWORDS]", &keywords)
        .replace("[DOCUMENTS]", &docs.join("\n"))
}

fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Top three keywords, title-cased.
pub fn stub_label(topic: &TopicModel) -> String {
    topic
        .top_terms
        .iter()
        .take(3)
        .map(|(t, _)| title_case(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// First non-empty line, cut to `max_words` words.
pub fn clean_label(raw: &str, max_words: usize) -> String {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    line.split_whitespace().take(max_words).collect::<Vec<_>>().join(" ")
}

/// Produces a raw completion for a cluster's prompt.
pub trait LabelSource: Sync {
    fn complete(&self, cluster_id: i32, prompt: &str) -> Result<String, String>;
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

pub struct HttpLabelSource {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpLabelSource {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl LabelSource for HttpLabelSource {
    fn complete(&self, _cluster_id: i32, prompt: &str) -> Result<String, String> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .send_json(CompletionRequest { prompt, max_tokens: 32 })
            .map_err(|e| e.to_string())?;
        let body: CompletionResponse = resp.into_json().map_err(|e| e.to_string())?;
        Ok(body.text)
    }
}

/// Recorded labels keyed by cluster id, for offline replay.
#[derive(Debug, Clone, Default)]
pub struct ReplaySource {
    labels: BTreeMap<i32, String>,
}

impl ReplaySource {
    pub fn new(labels: BTreeMap<i32, String>) -> Self {
        Self { labels }
    }

    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let fixture_err = |message: String| LabelError::Fixture {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fixture_err(e.to_string()))?;
        let raw: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| fixture_err(e.to_string()))?;
        let mut labels = BTreeMap::new();
        for (k, v) in raw {
            let id = k.parse().map_err(|_| fixture_err(format!("bad cluster id {k:?}")))?;
            labels.insert(id, v);
        }
        Ok(Self { labels })
    }
}

impl LabelSource for ReplaySource {
    fn complete(&self, cluster_id: i32, _prompt: &str) -> Result<String, String> {
        self.labels
            .get(&cluster_id)
            .cloned()
            .ok_or_else(|| format!("no recorded label for cluster {cluster_id}"))
    }
}

/// Remote labeling with retries.
pub fn label_cluster<S: AsRef<str>>(
    topic: &TopicModel,
    rep_docs: &[S],
    cfg: &LabelerConfig,
    source: &dyn LabelSource,
) -> Result<String, LabelError> {
    if cfg.mode == LabelerMode::Stub {
        return Ok(stub_label(topic));
    }
    let prompt = build_prompt(topic, rep_docs, cfg);
    let attempts = cfg.retries + 1;
    let mut last = String::new();
    for _ in 0..attempts {
        match source.complete(topic.cluster_id, &prompt) {
            Ok(raw) => return Ok(clean_label(&raw, cfg.max_label_words)),
            Err(e) => last = e,
        }
    }
    Err(LabelError::ServiceUnavailable { attempts, last })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub cluster_id: i32,
    pub label: String,
    /// Set when the remote call failed and the stub label was used.
    pub fallback: Option<String>,
}

/// Labels every topic, `cfg.parallelism` requests at a time. Service
/// failures fall back to the stub label and are recorded on the outcome.
/// Stub mode never touches `source`.
pub fn label_topics(
    topics: &[TopicModel],
    rep_docs: &[Vec<String>],
    cfg: &LabelerConfig,
    source: &dyn LabelSource,
) -> Vec<LabelOutcome> {
    let one = |(topic, docs): (&TopicModel, &Vec<String>)| match label_cluster(topic, docs, cfg, source) {
        Ok(label) => LabelOutcome {
            cluster_id: topic.cluster_id,
            label,
            fallback: None,
        },
        Err(e) => {
            log::warn!("cluster {}: {e}; using stub label", topic.cluster_id);
            LabelOutcome {
                cluster_id: topic.cluster_id,
                label: stub_label(topic),
                fallback: Some(e.to_string()),
            }
        }
    };
    let pairs: Vec<_> = topics.iter().zip(rep_docs).collect();
    if cfg.mode == LabelerMode::Stub || cfg.parallelism <= 1 {
        return pairs.into_iter().map(one).collect();
    }
    let mut out = Vec::with_capacity(pairs.len());
    for wave in pairs.chunks(cfg.parallelism) {
        std::thread::scope(|s| {
            let handles: Vec<_> = wave.iter().map(|&p| s.spawn(move || one(p))).collect();
            out.extend(handles.into_iter().map(|h| h.join().expect("labeling thread panicked")));
        });
    }
    out
}
