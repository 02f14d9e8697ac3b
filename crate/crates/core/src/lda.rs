//! Flat LDA by collapsed Gibbs sampling, and a category hierarchy built by
//! matching LDA topic words against the category lexicon.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topics::{py_repr_list, py_repr_str, CategoryLexicon};

#[derive(Debug, Error, PartialEq)]
pub enum LdaError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("update documents have no tokens")]
    EmptyUpdate,
    #[error("invalid LDA params: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaParams {
    pub n_topics: usize,
    pub passes: usize,
    /// `None` means 50 / n_topics.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub seed: u64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self {
            n_topics: 15,
            passes: 50,
            alpha: None,
            beta: 0.01,
            seed: 0,
        }
    }
}

impl LdaParams {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.n_topics as f64)
    }

    pub fn validate(&self) -> Result<(), LdaError> {
        if self.n_topics == 0 || self.passes == 0 {
            return Err(LdaError::InvalidParams("n_topics and passes must be ≥ 1".into()));
        }
        if !(self.alpha() > 0.0 && self.beta > 0.0) {
            return Err(LdaError::InvalidParams("alpha and beta must be > 0".into()));
        }
        Ok(())
    }
}

/// A fitted model together with the sampler state needed to resume it.
#[derive(Debug, Clone)]
pub struct LdaModel {
    pub params: LdaParams,
    pub vocabulary: Vec<String>,
    /// K × V
    pub phi: Vec<Vec<f64>>,
    /// D × K
    pub theta: Vec<Vec<f64>>,
    /// Sweeps run over the model's lifetime.
    pub passes_run: usize,
    pub updates: usize,
    word_ids: HashMap<String, usize>,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    n_dk: Vec<Vec<u32>>,
    n_kw: Vec<Vec<u32>>,
    n_k: Vec<u32>,
    rng: ChaCha8Rng,
}

impl LdaModel {
    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    /// Topic with the highest share in each document, ties to the lower index.
    pub fn dominant_topics(&self) -> Vec<usize> {
        self.theta
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best })
                    .0
            })
            .collect()
    }

    fn intern(&mut self, docs: &[Vec<String>]) -> Vec<Vec<usize>> {
        docs.iter()
            .map(|d| {
                d.iter()
                    .map(|w| {
                        if let Some(&id) = self.word_ids.get(w) {
                            return id;
                        }
                        let id = self.vocabulary.len();
                        self.vocabulary.push(w.clone());
                        self.word_ids.insert(w.clone(), id);
                        for row in &mut self.n_kw {
                            row.push(0);
                        }
                        id
                    })
                    .collect()
            })
            .collect()
    }

    /// Appends documents with uniformly random initial topics.
    fn add_docs(&mut self, docs: Vec<Vec<usize>>) {
        let k = self.params.n_topics;
        for doc in docs {
            let mut counts = vec![0u32; k];
            let z: Vec<usize> = doc
                .iter()
                .map(|&w| {
                    let t = self.rng.random_range(0..k);
                    counts[t] += 1;
                    self.n_kw[t][w] += 1;
                    self.n_k[t] += 1;
                    t
                })
                .collect();
            self.docs.push(doc);
            self.z.push(z);
            self.n_dk.push(counts);
        }
    }

    fn draw(&mut self, doc_counts: &[u32], w: usize, alpha: f64, beta: f64, v_beta: f64, weights: &mut [f64]) -> usize {
        let mut total = 0.0;
        for (t, slot) in weights.iter_mut().enumerate() {
            total += (doc_counts[t] as f64 + alpha) * (self.n_kw[t][w] as f64 + beta) / (self.n_k[t] as f64 + v_beta);
            *slot = total;
        }
        let u = self.rng.random::<f64>() * total;
        weights.iter().position(|&c| u < c).unwrap_or(weights.len() - 1)
    }

    fn sweep(&mut self) {
        let k = self.params.n_topics;
        let alpha = self.params.alpha();
        let beta = self.params.beta;
        let v_beta = self.vocabulary.len() as f64 * beta;
        let mut weights = vec![0.0; k];
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.n_dk[d][old] -= 1;
                self.n_kw[old][w] -= 1;
                self.n_k[old] -= 1;
                let counts = std::mem::take(&mut self.n_dk[d]);
                let new = self.draw(&counts, w, alpha, beta, v_beta, &mut weights);
                self.n_dk[d] = counts;
                self.z[d][i] = new;
                self.n_dk[d][new] += 1;
                self.n_kw[new][w] += 1;
                self.n_k[new] += 1;
            }
        }
        self.passes_run += 1;
    }

    fn estimate(&mut self) {
        let k = self.params.n_topics;
        let alpha = self.params.alpha();
        let beta = self.params.beta;
        let v = self.vocabulary.len();
        self.phi = (0..k)
            .map(|t| {
                let denom = self.n_k[t] as f64 + v as f64 * beta;
                self.n_kw[t].iter().map(|&c| (c as f64 + beta) / denom).collect()
            })
            .collect();
        self.theta = self
            .n_dk
            .iter()
            .zip(&self.docs)
            .map(|(counts, doc)| {
                let denom = doc.len() as f64 + k as f64 * alpha;
                counts.iter().map(|&c| (c as f64 + alpha) / denom).collect()
            })
            .collect();
    }
}

/// Runs `passes` full Gibbs sweeps from a seeded random start.
pub fn fit_lda(docs: &[Vec<String>], params: &LdaParams) -> Result<LdaModel, LdaError> {
    params.validate()?;
    if docs.iter().all(Vec::is_empty) {
        return Err(LdaError::EmptyCorpus);
    }
    let mut model = LdaModel {
        params: params.clone(),
        vocabulary: Vec::new(),
        phi: Vec::new(),
        theta: Vec::new(),
        passes_run: 0,
        updates: 0,
        word_ids: HashMap::new(),
        docs: Vec::new(),
        z: Vec::new(),
        n_dk: Vec::new(),
        n_kw: vec![Vec::new(); params.n_topics],
        n_k: vec![0; params.n_topics],
        rng: ChaCha8Rng::seed_from_u64(params.seed),
    };
    let ids = model.intern(docs);
    model.add_docs(ids);
    for _ in 0..params.passes {
        model.sweep();
    }
    model.estimate();
    Ok(model)
}

/// Adds documents (and any new words) and resumes sampling over the whole
/// corpus for another `passes` sweeps. An empty batch only bumps `updates`.
pub fn update_lda(model: &LdaModel, new_docs: &[Vec<String>]) -> Result<LdaModel, LdaError> {
    let mut next = model.clone();
    next.updates += 1;
    if new_docs.is_empty() {
        return Ok(next);
    }
    if new_docs.iter().all(Vec::is_empty) {
        return Err(LdaError::EmptyUpdate);
    }
    let ids = next.intern(new_docs);
    next.add_docs(ids);
    for _ in 0..next.params.passes {
        next.sweep();
    }
    next.estimate();
    Ok(next)
}

/// The `top_n` most probable words of each topic, ties alphabetical.
pub fn extract_topic_words(model: &LdaModel, top_n: usize) -> Vec<Vec<String>> {
    model
        .phi
        .iter()
        .map(|row| {
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| {
                row[b]
                    .total_cmp(&row[a])
                    .then_with(|| model.vocabulary[a].cmp(&model.vocabulary[b]))
            });
            ids.into_iter().take(top_n).map(|i| model.vocabulary[i].clone()).collect()
        })
        .collect()
}

/// Primary category → subtopic categories, in display order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicHierarchy {
    entries: IndexMap<String, Vec<String>>,
}

impl TopicHierarchy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a hierarchy in exactly the given order.
    pub fn from_entries<I, K, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<S>)>,
        K: Into<String>,
        S: Into<String>,
    {
        Self {
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.into(), v.into_iter().map(Into::into).collect()))
                .collect(),
        }
    }

    pub fn get(&self, primary: &str) -> Option<&[String]> {
        self.entries.get(primary).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Python dict repr, e.g. `{'financial': ['informational']}`.
    pub fn to_mapping_text(&self) -> String {
        let items: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| format!("{}: {}", py_repr_str(k), py_repr_list(v)))
            .collect();
        format!("{{{}}}", items.join(", "))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("string map serializes")
    }
}

/// For each topic, categories are ranked by keyword overlap (ties
/// alphabetical); the first becomes the primary and the rest with overlap
/// ≥ 1 its subtopics. Per-topic results are merged by primary. Keys and
/// subtopics are ordered by summed overlap, then alphabetically, so the
/// result does not depend on topic order.
pub fn build_hierarchy<S: AsRef<str>>(topic_words: &[Vec<S>], lexicon: &CategoryLexicon) -> TopicHierarchy {
    let mut primary_score: BTreeMap<String, usize> = BTreeMap::new();
    let mut sub_score: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for words in topic_words {
        let mut ranked: Vec<(usize, &str)> = lexicon
            .categories()
            .map(|c| (lexicon.overlap(c, words), c))
            .filter(|&(n, _)| n > 0)
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let Some(&(n, primary)) = ranked.first() else {
            continue;
        };
        *primary_score.entry(primary.to_string()).or_default() += n;
        let subs = sub_score.entry(primary.to_string()).or_default();
        for &(m, sub) in &ranked[1..] {
            *subs.entry(sub.to_string()).or_default() += m;
        }
    }
    let by_score = |scores: &BTreeMap<String, usize>| {
        let mut v: Vec<(&String, &usize)> = scores.iter().collect();
        // BTreeMap iteration is alphabetical, and the sort is stable
        v.sort_by(|a, b| b.1.cmp(a.1));
        v.into_iter().map(|(k, _)| k.clone()).collect::<Vec<_>>()
    };
    TopicHierarchy {
        entries: by_score(&primary_score)
            .into_iter()
            .map(|p| {
                let subs = by_score(&sub_score[&p]);
                (p, subs)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(spec: &[&str]) -> Vec<Vec<String>> {
        spec.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn params(k: usize, seed: u64) -> LdaParams {
        LdaParams {
            n_topics: k,
            passes: 50,
            seed,
            ..Default::default()
        }
    }

    fn assert_stochastic(rows: &[Vec<f64>]) {
        for r in rows {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn single_topic_degeneracy() {
        let m = fit_lda(&docs(&["a a b", "b c"]), &params(1, 3)).unwrap();
        assert!(m.theta.iter().all(|r| r == &vec![1.0]));
        let (n, v, beta) = (5.0, 3.0, 0.01);
        let expected = [(2.0 + beta) / (n + v * beta), (2.0 + beta) / (n + v * beta), (1.0 + beta) / (n + v * beta)];
        for (got, want) in m.phi[0].iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(extract_topic_words(&fit_lda(&docs(&["a a b"]), &params(1, 0)).unwrap(), 2), vec![vec!["a", "b"]]);
    }

    #[test]
    fn seeded_refit_is_identical() {
        let corpus = docs(&["x y z x", "y y q", "q r s", "z x r"]);
        let a = fit_lda(&corpus, &params(3, 11)).unwrap();
        let b = fit_lda(&corpus, &params(3, 11)).unwrap();
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.theta, b.theta);
        assert_stochastic(&a.phi);
        assert_stochastic(&a.theta);
    }

    #[test]
    fn topic_word_ties_alphabetical() {
        let m = fit_lda(&docs(&["y x"]), &params(1, 0)).unwrap();
        assert_eq!(extract_topic_words(&m, 10), vec![vec!["x", "y"]]);
    }

    #[test]
    fn errors() {
        assert_eq!(fit_lda(&docs(&["", ""]), &params(2, 0)).unwrap_err(), LdaError::EmptyCorpus);
        let m = fit_lda(&docs(&["a"]), &params(2, 0)).unwrap();
        assert_eq!(update_lda(&m, &docs(&[""])).unwrap_err(), LdaError::EmptyUpdate);
        assert!(fit_lda(&docs(&["a"]), &params(0, 0)).is_err());
    }

    #[test]
    fn empty_update_only_touches_metadata() {
        let m = fit_lda(&docs(&["a b", "c d"]), &params(2, 1)).unwrap();
        let u = update_lda(&m, &[]).unwrap();
        assert_eq!((u.phi.clone(), u.theta.clone(), u.vocabulary.clone()), (m.phi.clone(), m.theta.clone(), m.vocabulary.clone()));
        assert_eq!(u.updates, 1);
    }

    #[test]
    fn update_grows_vocabulary() {
        let m = fit_lda(&docs(&["a b", "c d"]), &params(2, 1)).unwrap();
        let u = update_lda(&m, &docs(&["e f g"])).unwrap();
        assert_eq!(u.vocabulary.len(), 7);
        assert_eq!(u.n_docs(), 3);
        assert_stochastic(&u.phi);
        assert_stochastic(&u.theta);
        assert!(u.phi.iter().all(|r| r.len() == 7));
    }

    #[test]
    fn hierarchy_examples() {
        let mut lex = CategoryLexicon::new();
        lex.extend("financial", ["bank", "account", "statement"]);
        lex.extend("informational", ["report", "details"]);
        lex.extend("digital communication", ["voicemail", "mailbox"]);
        let h = build_hierarchy(&[vec!["bank", "statement", "report", "hello"]], &lex);
        assert_eq!(h.to_mapping_text(), "{'financial': ['informational']}");
        let h = build_hierarchy(&[vec!["voicemail", "chance"]], &lex);
        assert_eq!(h.to_mapping_text(), "{'digital communication': []}");
        let h = build_hierarchy(&[vec!["nothing", "here"]], &lex);
        assert_eq!(h.to_mapping_text(), "{}");
        assert_eq!(h.to_json(), "{}");
    }

    #[test]
    fn hierarchy_merge_is_order_free() {
        let mut lex = CategoryLexicon::new();
        lex.extend("a", ["a1", "a2", "a3"]);
        lex.extend("b", ["b1", "b2"]);
        lex.extend("c", ["c1"]);
        let topics = vec![vec!["a1", "b1"], vec!["b1", "b2", "c1"], vec!["a1", "a2", "c1"], vec!["c1"]];
        let h = build_hierarchy(&topics, &lex);
        for perm in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
            let shuffled: Vec<_> = perm.iter().map(|&i| topics[i].clone()).collect();
            assert_eq!(build_hierarchy(&shuffled, &lex), h);
        }
        for (k, subs) in h.iter() {
            assert!(!subs.iter().any(|s| s == k));
        }
    }

    #[test]
    fn mapping_text_keeps_given_order() {
        let h = TopicHierarchy::from_entries([
            ("digital communication", Vec::<String>::new()),
            ("call to action", vec!["digital communication".to_string()]),
        ]);
        assert_eq!(
            h.to_mapping_text(),
            "{'digital communication': [], 'call to action': ['digital communication']}"
        );
    }
}
