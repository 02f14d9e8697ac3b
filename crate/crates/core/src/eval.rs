//! Topic scoring: NPMI coherence, diversity, quality and granularity.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Algorithm;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no topics to score")]
    NoTopics,
    #[error("reference corpus is empty")]
    EmptyReference,
    #[error("cannot aggregate reports from different configurations: {0}")]
    MixedConfigs(String),
    #[error("invalid eval params: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub top_n_words: usize,
    pub window_size: usize,
    pub epsilon: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            top_n_words: 10,
            window_size: 10,
            epsilon: 1e-12,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.top_n_words < 2 || self.window_size < 2 {
            return Err(EvalError::InvalidParams("top_n_words and window_size must be ≥ 2".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(EvalError::InvalidParams("epsilon must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Window counts for a fixed set of target words.
#[derive(Debug, Clone, Default)]
struct WindowCounts {
    windows: u64,
    single: Vec<u64>,
    pair: HashMap<(usize, usize), u64>,
}

impl WindowCounts {
    fn merge(mut self, other: WindowCounts) -> WindowCounts {
        self.windows += other.windows;
        if self.single.is_empty() {
            self.single = other.single;
        } else {
            for (a, b) in self.single.iter_mut().zip(other.single) {
                *a += b;
            }
        }
        for (k, v) in other.pair {
            *self.pair.entry(k).or_default() += v;
        }
        self
    }
}

fn count_document(doc: &[String], ids: &HashMap<&str, usize>, window: usize) -> WindowCounts {
    let mut counts = WindowCounts {
        windows: 0,
        single: vec![0; ids.len()],
        pair: HashMap::new(),
    };
    if doc.is_empty() {
        return counts;
    }
    let tagged: Vec<Option<usize>> = doc.iter().map(|t| ids.get(t.as_str()).copied()).collect();
    let n_windows = if doc.len() <= window { 1 } else { doc.len() - window + 1 };
    let width = window.min(doc.len());
    let mut in_window = vec![0u32; ids.len()];
    for id in tagged[..width].iter().flatten() {
        in_window[*id] += 1;
    }
    for start in 0..n_windows {
        if start > 0 {
            if let Some(id) = tagged[start - 1] {
                in_window[id] -= 1;
            }
            if let Some(id) = tagged[start + width - 1] {
                in_window[id] += 1;
            }
        }
        counts.windows += 1;
        let present: Vec<usize> = (0..ids.len()).filter(|&i| in_window[i] > 0).collect();
        for (a, &i) in present.iter().enumerate() {
            counts.single[i] += 1;
            for &j in &present[a + 1..] {
                *counts.pair.entry((i, j)).or_default() += 1;
            }
        }
    }
    counts
}

/// Per-pair NPMI from window probabilities. Perfect co-occurrence
/// (`p_ij == 1`) scores 1; the result is clamped to [-1, 1].
pub fn npmi(p_i: f64, p_j: f64, p_ij: f64, epsilon: f64) -> f64 {
    if p_ij >= 1.0 {
        return 1.0;
    }
    let joint = p_ij + epsilon;
    let value = (joint / (p_i * p_j)).ln() / -joint.ln();
    value.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coherence {
    pub overall: f64,
    pub per_topic: Vec<f64>,
    /// Topic words absent from the reference corpus; their pairs score 0.
    pub missing_words: Vec<String>,
}

/// Mean pairwise NPMI of each topic's first `top_n_words` words, averaged
/// over topics. Windows slide with stride 1 inside each document; a
/// document shorter than the window is one window, an empty one none.
pub fn npmi_coherence_detailed<S: AsRef<str> + Sync>(
    topics: &[Vec<S>],
    reference: &[Vec<String>],
    params: &EvalParams,
) -> Result<Coherence, EvalError> {
    params.validate()?;
    if topics.is_empty() {
        return Err(EvalError::NoTopics);
    }
    let topics: Vec<Vec<&str>> = topics
        .iter()
        .map(|t| t.iter().take(params.top_n_words).map(AsRef::as_ref).collect())
        .collect();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for t in &topics {
        for w in t {
            let next = ids.len();
            ids.entry(w).or_insert(next);
        }
    }
    let counts = reference
        .par_iter()
        .map(|doc| count_document(doc, &ids, params.window_size))
        .reduce(WindowCounts::default, WindowCounts::merge);
    if counts.windows == 0 {
        return Err(EvalError::EmptyReference);
    }
    let n = counts.windows as f64;

    let mut missing: Vec<String> = ids
        .iter()
        .filter(|(_, &i)| counts.single[i] == 0)
        .map(|(w, _)| w.to_string())
        .collect();
    missing.sort();
    for w in &missing {
        log::warn!("topic word {w:?} never occurs in the reference corpus");
    }

    let per_topic: Vec<f64> = topics
        .iter()
        .map(|t| {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for a in 0..t.len() {
                for b in a + 1..t.len() {
                    pairs += 1;
                    let (i, j) = (ids[t[a]], ids[t[b]]);
                    if i == j || counts.single[i] == 0 || counts.single[j] == 0 {
                        // duplicate words pair with themselves perfectly
                        sum += if i == j && counts.single[i] > 0 { 1.0 } else { 0.0 };
                        continue;
                    }
                    let key = (i.min(j), i.max(j));
                    let joint = counts.pair.get(&key).copied().unwrap_or(0) as f64 / n;
                    sum += npmi(counts.single[i] as f64 / n, counts.single[j] as f64 / n, joint, params.epsilon);
                }
            }
            if pairs == 0 {
                0.0
            } else {
                sum / pairs as f64
            }
        })
        .collect();
    let overall = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(Coherence {
        overall,
        per_topic,
        missing_words: missing,
    })
}

pub fn npmi_coherence<S: AsRef<str> + Sync>(
    topics: &[Vec<S>],
    reference: &[Vec<String>],
    params: &EvalParams,
) -> Result<f64, EvalError> {
    npmi_coherence_detailed(topics, reference, params).map(|c| c.overall)
}

/// Distinct words over total word slots. Zero for no topics.
pub fn topic_diversity<S: AsRef<str>>(topics: &[Vec<S>]) -> f64 {
    let total: usize = topics.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let distinct: HashSet<&str> = topics.iter().flatten().map(AsRef::as_ref).collect();
    distinct.len() as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm: Algorithm,
    pub min_cluster_size: usize,
    pub n_topics: f64,
    pub coherence: f64,
    pub diversity: f64,
    pub quality: f64,
    pub granularity: f64,
    pub runs_averaged: usize,
}

impl EvalReport {
    /// Derives quality and granularity from the three measured values.
    pub fn new(algorithm: Algorithm, min_cluster_size: usize, n_topics: f64, coherence: f64, diversity: f64) -> Self {
        let quality = coherence * diversity;
        Self {
            algorithm,
            min_cluster_size,
            n_topics,
            coherence,
            diversity,
            quality,
            granularity: n_topics * quality,
            runs_averaged: 1,
        }
    }
}

/// Means of topic count, coherence and diversity; quality and granularity
/// are recomputed from the means. `runs_averaged` sums the inputs' counts.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoTopics)?;
    if let Some(other) = reports
        .iter()
        .find(|r| r.algorithm != first.algorithm || r.min_cluster_size != first.min_cluster_size)
    {
        return Err(EvalError::MixedConfigs(format!(
            "{}/{} vs {}/{}",
            first.algorithm, first.min_cluster_size, other.algorithm, other.min_cluster_size
        )));
    }
    let k = reports.len() as f64;
    // offset from the first value so identical inputs average to themselves exactly
    let mean = |f: fn(&EvalReport) -> f64| {
        let base = f(first);
        base + reports.iter().map(|r| f(r) - base).sum::<f64>() / k
    };
    let mut out = EvalReport::new(
        first.algorithm,
        first.min_cluster_size,
        mean(|r| r.n_topics),
        mean(|r| r.coherence),
        mean(|r| r.diversity),
    );
    out.runs_averaged = reports.iter().map(|r| r.runs_averaged).sum();
    Ok(out)
}

/// Adjusted Rand index between two labelings of the same points. Every
/// distinct label, including -1, is treated as its own class.
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(i32, i32), u64> = HashMap::new();
    let mut rows: HashMap<i32, u64> = HashMap::new();
    let mut cols: HashMap<i32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&m| c2(m)).sum();
    let sum_a: f64 = rows.values().map(|&m| c2(m)).sum();
    let sum_b: f64 = cols.values().map(|&m| c2(m)).sum();
    let expected = sum_a * sum_b / c2(n as u64);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn perfect_association_scores_one() {
        // "x y" together in half the windows, absent in the other half
        let reference = vec![doc("x y"), doc("p q")];
        let c = npmi_coherence(&[vec!["x", "y"]], &reference, &EvalParams::default()).unwrap();
        assert!((c - 1.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn disjoint_words_approach_minus_one() {
        let reference = vec![doc("x"), doc("y"), doc("z z"), doc("w")];
        let c_default = npmi_coherence(&[vec!["x", "y"]], &reference, &EvalParams::default()).unwrap();
        assert!(c_default < -0.8);
        let tiny = EvalParams {
            epsilon: 1e-300,
            ..Default::default()
        };
        let c_tiny = npmi_coherence(&[vec!["x", "y"]], &reference, &tiny).unwrap();
        assert!(c_tiny <= -0.99, "{c_tiny}");
    }

    #[test]
    fn sliding_windows() {
        let ids: HashMap<&str, usize> = [("a", 0), ("b", 1)].into();
        let c = count_document(&doc("a x x b"), &ids, 2);
        assert_eq!(c.windows, 3);
        assert_eq!(c.single, vec![1, 1]);
        assert!(c.pair.is_empty());
        let short = count_document(&doc("a b"), &ids, 10);
        assert_eq!((short.windows, short.pair[&(0, 1)]), (1, 1));
    }

    #[test]
    fn missing_words_score_zero_and_are_reported() {
        let reference = vec![doc("a b"), doc("c")];
        let c = npmi_coherence_detailed(&[vec!["a", "zz"]], &reference, &EvalParams::default()).unwrap();
        assert_eq!(c.overall, 0.0);
        assert_eq!(c.missing_words, vec!["zz".to_string()]);
    }

    #[test]
    fn errors() {
        let empty: Vec<Vec<&str>> = vec![];
        assert_eq!(npmi_coherence(&empty, &[doc("a")], &EvalParams::default()), Err(EvalError::NoTopics));
        assert_eq!(
            npmi_coherence(&[vec!["a", "b"]], &[vec![]], &EvalParams::default()),
            Err(EvalError::EmptyReference)
        );
    }

    #[test]
    fn diversity_examples() {
        assert!((topic_diversity(&[vec!["a", "b", "c"], vec!["a", "d", "e"]]) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(topic_diversity(&vec![vec!["a", "b"]; 4]), 0.25);
        assert_eq!(topic_diversity(&[vec!["a"], vec!["b"]]), 1.0);
    }

    #[test]
    fn aggregation() {
        let r = |n: f64, c: f64| EvalReport::new(Algorithm::HdbscanEom, 50, n, c, 0.5);
        let a = aggregate(&[r(100.0, 0.2), r(120.0, 0.4), r(140.0, 0.3)]).unwrap();
        assert_eq!(a.n_topics, 120.0);
        assert!((a.coherence - 0.3).abs() < 1e-12);
        assert_eq!(a.runs_averaged, 3);
        assert_eq!(a.quality, a.coherence * a.diversity);
        let same = aggregate(&vec![r(5.0, 0.1); 3]).unwrap();
        assert_eq!((same.n_topics, same.coherence, same.runs_averaged), (5.0, 0.1, 3));
        let other = EvalReport::new(Algorithm::OpticsXi, 50, 1.0, 0.0, 1.0);
        assert!(matches!(aggregate(&[r(1.0, 0.0), other]), Err(EvalError::MixedConfigs(_))));
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 0.5714285714285714).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }

    fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
        proptest::collection::vec(
            proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "e"]), 0..15),
            1..6,
        )
        .prop_map(|ds| ds.into_iter().map(|d| d.into_iter().map(str::to_string).collect()).collect())
    }

    proptest! {
        #[test]
        fn coherence_bounded_and_order_free(mut reference in corpus(), seed in 0usize..100) {
            let topics = vec![vec!["a", "b", "c"], vec!["d", "e", "a"]];
            let params = EvalParams { window_size: 3, ..Default::default() };
            if let Ok(c) = npmi_coherence(&topics, &reference, &params) {
                prop_assert!((-1.0..=1.0).contains(&c));
                let len = reference.len();
                reference.rotate_left(seed % len);
                reference.reverse();
                let c2 = npmi_coherence(&topics, &reference, &params).unwrap();
                prop_assert!((c - c2).abs() < 1e-12);
            }
        }

        #[test]
        fn diversity_permutation_invariant(
            topics in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..5), 1..5)
        ) {
            let d = topic_diversity(&topics);
            prop_assert!(d > 0.0 && d <= 1.0);
            let mut shuffled: Vec<Vec<String>> = topics.iter().rev().cloned().collect();
            shuffled.iter_mut().for_each(|t| t.reverse());
            prop_assert_eq!(d, topic_diversity(&shuffled));
        }
    }
}
