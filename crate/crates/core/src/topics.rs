//! Keyword topics: tokenization, class-based TF-IDF, topic names and the
//! category lexicon.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Keywords kept per topic.
pub const TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("no terms in any cluster")]
    EmptyVocabulary,
    #[error("no clusters to represent")]
    NoClusters,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon: {0}")]
    Lexicon(#[from] serde_json::Error),
}

const ENGLISH_STOPWORDS: &str = "a about above after again against all am an and any are aren't as at be because \
been before being below between both but by can can't cannot could couldn't did didn't do does doesn't doing \
don't down during each few for from further had hadn't has hasn't have haven't having he he'd he'll he's her \
here here's hers herself him himself his how how's i i'd i'll i'm i've if in into is isn't it it's its itself \
let's me more most mustn't my myself no nor not of off on once only or other ought our ours ourselves out over \
own same shan't she she'd she'll she's should shouldn't so some such than that that's the their theirs them \
themselves then there there's these they they'd they'll they're they've this those through to too under until \
up very was wasn't we we'd we'll we're we've were weren't what what's when when's where where's which while who \
who's whom why why's will with won't would wouldn't you you'd you'll you're you've your yours yourself \
yourselves also just may might must shall us get got dear please hi hello regards thanks thank";

pub fn english_stopwords() -> HashSet<String> {
    ENGLISH_STOPWORDS
        .split_whitespace()
        .flat_map(|w| {
            // apostrophes split tokens, so keep the pieces too
            std::iter::once(w.to_string()).chain(w.split('\'').map(str::to_string))
        })
        .filter(|w| w.chars().count() >= 2)
        .collect()
}

/// One lowercase stopword per line; blank lines and `#` comments skipped.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, TopicError> {
    let text = std::fs::read_to_string(path).map_err(|source| TopicError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

/// Lowercases, splits on anything that is not a letter or digit, and drops
/// tokens shorter than two characters, all-digit tokens and stopwords.
pub fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .filter(|t| !t.chars().all(|c| c.is_numeric()))
        .filter(|t| !stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

/// Terms in first-seen order with the number of token lists containing them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    pub doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a, I, D>(docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a String>,
    {
        let mut vocab = Vocabulary::default();
        for doc in docs {
            let mut seen = HashSet::new();
            for term in doc {
                let id = vocab.intern(term);
                if seen.insert(id) {
                    vocab.doc_freq[id] += 1;
                }
            }
        }
        vocab
    }

    fn intern(&mut self, term: &str) -> usize {
        if let Some(&id) = self.index.get(term) {
            return id;
        }
        let id = self.terms.len();
        self.terms.push(term.to_string());
        self.doc_freq.push(0);
        self.index.insert(term.to_string(), id);
        id
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// c-TF-IDF weights for every (cluster, term) pair.
#[derive(Debug, Clone)]
pub struct ClassTfIdf {
    pub vocabulary: Vocabulary,
    /// `weights[c][t]`, clusters in input order.
    pub weights: Vec<Vec<f64>>,
    pub avg_tokens_per_cluster: f64,
}

impl ClassTfIdf {
    /// The `k` highest-weighted present terms of a cluster, ties alphabetical.
    pub fn top_terms(&self, cluster: usize, k: usize) -> Vec<(String, f64)> {
        let mut terms: Vec<(usize, f64)> = self.weights[cluster]
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
            .collect();
        // rank at single precision: mathematically equal weights such as
        // 1·ln 4 and 2·ln 2 can differ in the last f64 bit
        terms.sort_by(|a, b| {
            (b.1 as f32)
                .total_cmp(&(a.1 as f32))
                .then_with(|| self.vocabulary.terms[a.0].cmp(&self.vocabulary.terms[b.0]))
        });
        terms
            .into_iter()
            .take(k)
            .map(|(t, w)| (self.vocabulary.terms[t].clone(), w))
            .collect()
    }
}

/// Treats each cluster's concatenated tokens as one document:
/// `w(t, c) = tf(t, c) · ln(1 + A / tf(t))`, with `tf(t)` the term's count
/// over all clusters and `A` the mean token count per cluster.
pub fn ctfidf(cluster_tokens: &[Vec<String>]) -> Result<ClassTfIdf, TopicError> {
    if cluster_tokens.is_empty() {
        return Err(TopicError::NoClusters);
    }
    let vocabulary = Vocabulary::build(cluster_tokens.iter());
    if vocabulary.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    let v = vocabulary.len();
    let mut tf = vec![vec![0usize; v]; cluster_tokens.len()];
    let mut total = vec![0usize; v];
    for (c, tokens) in cluster_tokens.iter().enumerate() {
        for t in tokens {
            let id = vocabulary.id(t).expect("interned");
            tf[c][id] += 1;
            total[id] += 1;
        }
    }
    let token_count: usize = cluster_tokens.iter().map(Vec::len).sum();
    let avg = token_count as f64 / cluster_tokens.len() as f64;
    // A / tf(t) as a single division of integers, so scaling all counts by
    // the same factor reproduces the weights up to that factor
    let n_clusters = cluster_tokens.len() as f64;
    let idf: Vec<f64> = total
        .iter()
        .map(|&n| (1.0 + token_count as f64 / (n_clusters * n as f64)).ln())
        .collect();
    let weights = tf
        .iter()
        .map(|row| row.iter().zip(&idf).map(|(&n, w)| n as f64 * w).collect())
        .collect();
    Ok(ClassTfIdf {
        vocabulary,
        weights,
        avg_tokens_per_cluster: avg,
    })
}

/// Quotes a string the way Python's `repr` does.
pub fn py_repr_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// `['a', 'b']`
pub fn py_repr_list<S: AsRef<str>>(items: &[S]) -> String {
    let inner: Vec<String> = items.iter().map(|s| py_repr_str(s.as_ref())).collect();
    format!("[{}]", inner.join(", "))
}

/// Keyword view of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub cluster_id: i32,
    pub top_terms: Vec<(String, f64)>,
    pub name: String,
    #[serde(default)]
    pub semantic_label: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
}

impl TopicModel {
    pub fn new(cluster_id: i32, top_terms: Vec<(String, f64)>) -> Self {
        let words: Vec<String> = top_terms.iter().map(|(t, _)| t.clone()).collect();
        Self {
            cluster_id,
            name: name_topic(&words),
            top_terms,
            semantic_label: None,
            category: None,
        }
    }

    pub fn keywords(&self) -> Vec<String> {
        self.top_terms.iter().map(|(t, _)| t.clone()).collect()
    }
}

/// The first four terms joined by single spaces.
pub fn name_topic<S: AsRef<str>>(terms: &[S]) -> String {
    terms.iter().take(4).map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

/// Category name → keywords, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryLexicon {
    categories: IndexMap<String, Vec<String>>,
}

impl CategoryLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds keywords to a category (created on first use), lowercased and
    /// deduplicated in first-seen order.
    pub fn extend<I, S>(&mut self, category: &str, keywords: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entry = self.categories.entry(category.to_string()).or_default();
        for kw in keywords {
            let kw = kw.as_ref().to_lowercase();
            if !entry.contains(&kw) {
                entry.push(kw);
            }
        }
    }

    pub fn get(&self, category: &str) -> Option<&[String]> {
        self.categories.get(category).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.categories.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Number of `words` found among a category's keywords.
    pub fn overlap<S: AsRef<str>>(&self, category: &str, words: &[S]) -> usize {
        let Some(kws) = self.categories.get(category) else {
            return 0;
        };
        let kws: HashSet<&str> = kws.iter().map(String::as_str).collect();
        let words: HashSet<&str> = words.iter().map(AsRef::as_ref).collect();
        words.intersection(&kws).count()
    }

    /// Merges `other` into `self`, category by category.
    pub fn merge(&mut self, other: &CategoryLexicon) {
        for (cat, kws) in other.iter() {
            self.extend(cat, kws);
        }
    }

    pub fn from_json(text: &str) -> Result<Self, TopicError> {
        let raw: IndexMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut lex = Self::new();
        for (cat, kws) in raw {
            lex.extend(&cat, kws);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, TopicError> {
        let text = std::fs::read_to_string(path).map_err(|source| TopicError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("string map serializes")
    }
}

/// Seed lexicon covering the categories named in the reference analysis.
/// Other categories are user supplied.
pub fn default_lexicon() -> CategoryLexicon {
    let mut lex = CategoryLexicon::new();
    lex.extend(
        "financial",
        [
            "financial", "payment", "bank", "account", "statement", "transfer", "remittance", "receipt",
            "transaction", "balance", "monthly", "report", "swift", "wire", "funds",
        ],
    );
    lex.extend(
        "digital communication",
        [
            "voicemail", "mailbox", "voice", "message", "call", "missed", "fax", "email", "inbox", "recording",
            "audio", "chat",
        ],
    );
    lex.extend(
        "call to action",
        [
            "click", "open", "download", "view", "confirm", "verify", "acknowledge", "review", "sign", "update",
            "login", "respond", "urgent", "immediately",
        ],
    );
    lex.extend("visual media", ["photo", "images", "pictures", "photos", "photosdownload"]);
    lex.extend(
        "invoice",
        ["invoice", "invoices", "bill", "billing", "due", "overdue", "quotation", "order", "purchase", "proforma"],
    );
    lex.extend(
        "informational",
        [
            "information", "notice", "notification", "update", "details", "document", "attached", "new",
            "reminder", "announcement",
        ],
    );
    lex
}

/// The category sharing the most keywords with the topic's terms; ties go
/// to the alphabetically first category, zero overlap gives `None`.
pub fn assign_category(topic: &TopicModel, lexicon: &CategoryLexicon) -> Option<String> {
    let words = topic.keywords();
    lexicon
        .categories()
        .map(|cat| (lexicon.overlap(cat, &words), cat))
        .filter(|&(n, _)| n > 0)
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)))
        .map(|(_, cat)| cat.to_string())
}

/// Union of each category's member-topic keywords in first-seen order.
/// Topics are visited in the given order.
pub fn build_lexicon(topics: &[TopicModel], category_of: &BTreeMap<i32, String>) -> CategoryLexicon {
    let mut lex = CategoryLexicon::new();
    for topic in topics {
        if let Some(cat) = category_of.get(&topic.cluster_id) {
            lex.extend(cat, topic.keywords());
        }
    }
    lex
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn topic(id: i32, words: &[&str]) -> TopicModel {
        TopicModel::new(id, words.iter().map(|w| (w.to_string(), 1.0)).collect())
    }

    #[test]
    fn tokenizer_rules() {
        let stop: HashSet<String> = ["please".to_string()].into();
        assert_eq!(tokenize("Please acknowledge receipt!", &stop), vec!["acknowledge", "receipt"]);
        assert_eq!(tokenize("A 42 ok", &HashSet::new()), vec!["ok"]);
        assert!(tokenize("", &stop).is_empty());
        assert_eq!(tokenize("Zahlung-Bestätigung", &HashSet::new()), vec!["zahlung", "bestätigung"]);
    }

    #[test]
    fn english_stopwords_cover_contraction_pieces() {
        let s = english_stopwords();
        assert!(s.contains("the") && s.contains("don") && s.contains("please"));
        assert!(!s.contains("t"));
    }

    #[test]
    fn ctfidf_hand_computed() {
        let w = ctfidf(&[toks("apple apple banana"), toks("banana cherry")]).unwrap();
        assert!((w.avg_tokens_per_cluster - 2.5).abs() < 1e-12);
        let apple = w.vocabulary.id("apple").unwrap();
        let cherry = w.vocabulary.id("cherry").unwrap();
        assert!((w.weights[0][apple] - 1.6219).abs() < 1e-4);
        assert_eq!(w.weights[0][cherry], 0.0);
        assert_eq!(w.top_terms(0, 10)[0].0, "apple");
        assert_eq!(w.top_terms(0, 10).len(), 2, "absent terms are not keywords");
    }

    #[test]
    fn ctfidf_errors() {
        assert!(matches!(ctfidf(&[]), Err(TopicError::NoClusters)));
        assert!(matches!(ctfidf(&[vec![], vec![]]), Err(TopicError::EmptyVocabulary)));
    }

    #[test]
    fn names() {
        let fin = ["financial", "responding", "disapproval", "statementhi", "short", "king"];
        assert_eq!(name_topic(&fin), "financial responding disapproval statementhi");
        let vm = ["mailbox", "just", "chance", "voicemail", "wanted"];
        assert_eq!(name_topic(&vm), "mailbox just chance voicemail");
        assert_eq!(name_topic(&["a", "b"]), "a b");
    }

    #[test]
    fn python_reprs() {
        assert_eq!(py_repr_list(&["financial", "responding"]), "['financial', 'responding']");
        assert_eq!(py_repr_list::<&str>(&[]), "[]");
        assert_eq!(py_repr_str("don't"), "\"don't\"");
        assert_eq!(py_repr_str("a'b\"c"), "'a\\'b\"c'");
    }

    #[test]
    fn category_assignment() {
        let lex = default_lexicon();
        let t = topic(0, &["photo", "photos", "new", "my"]);
        // "new" also hits informational once; visual media has two hits
        assert_eq!(assign_category(&t, &lex).as_deref(), Some("visual media"));
        assert_eq!(assign_category(&topic(1, &["zzz", "yyy"]), &lex), None);

        let mut tie = CategoryLexicon::new();
        tie.extend("invoice", ["bill"]);
        tie.extend("financial", ["bank"]);
        assert_eq!(assign_category(&topic(2, &["bill", "bank"]), &tie).as_deref(), Some("financial"));
    }

    #[test]
    fn lexicon_building() {
        let topics = vec![
            topic(0, &["photo", "images", "pictures"]),
            topic(1, &["photos", "photo", "photosdownload"]),
            topic(2, &["invoice"]),
        ];
        let cats: BTreeMap<i32, String> = [(0, "visual media".into()), (1, "visual media".into())].into();
        let lex = build_lexicon(&topics, &cats);
        assert_eq!(
            lex.get("visual media").unwrap(),
            &["photo", "images", "pictures", "photos", "photosdownload"]
        );
        assert_eq!(lex.len(), 1);

        let single = build_lexicon(&topics[2..], &[(2, "invoice".to_string())].into());
        assert_eq!(single.get("invoice").unwrap(), &["invoice"]);
    }

    #[test]
    fn lexicon_json_round_trip_keeps_order() {
        let lex = CategoryLexicon::from_json(r#"{"zeta": ["B", "a"], "alpha": ["c"]}"#).unwrap();
        assert_eq!(lex.categories().collect::<Vec<_>>(), vec!["zeta", "alpha"]);
        assert_eq!(lex.get("zeta").unwrap(), &["b", "a"]);
        assert_eq!(CategoryLexicon::from_json(&lex.to_json()).unwrap(), lex);
    }

    fn small_corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
        proptest::collection::vec(
            proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 0..12),
            1..5,
        )
        .prop_map(|cs| cs.into_iter().map(|c| c.into_iter().map(str::to_string).collect()).collect())
    }

    proptest! {
        #[test]
        fn weights_are_zero_exactly_when_absent(corpus in small_corpus()) {
            if let Ok(w) = ctfidf(&corpus) {
                for (c, tokens) in corpus.iter().enumerate() {
                    for (t, term) in w.vocabulary.terms.iter().enumerate() {
                        let present = tokens.contains(term);
                        prop_assert!(w.weights[c][t] >= 0.0);
                        prop_assert_eq!(w.weights[c][t] > 0.0, present);
                    }
                }
            }
        }

        #[test]
        fn scaling_counts_keeps_rankings(corpus in small_corpus(), m in 2usize..5) {
            let scaled: Vec<Vec<String>> = corpus
                .iter()
                .map(|c| c.iter().flat_map(|t| std::iter::repeat_n(t.clone(), m)).collect())
                .collect();
            if let (Ok(a), Ok(b)) = (ctfidf(&corpus), ctfidf(&scaled)) {
                for c in 0..corpus.len() {
                    let ra: Vec<String> = a.top_terms(c, TOP_K).into_iter().map(|x| x.0).collect();
                    let rb: Vec<String> = b.top_terms(c, TOP_K).into_iter().map(|x| x.0).collect();
                    prop_assert_eq!(ra, rb);
                }
            }
        }

        #[test]
        fn names_have_at_most_four_words(words in proptest::collection::vec("[a-z]{1,6}", 0..10)) {
            prop_assert!(name_topic(&words).split(' ').filter(|s| !s.is_empty()).count() <= 4);
        }

        #[test]
        fn lexicon_keywords_come_from_member_topics(
            lists in proptest::collection::vec(proptest::collection::vec("[a-d]{1,2}", 1..5), 1..6),
            cats in proptest::collection::vec(0usize..3, 6)
        ) {
            let topics: Vec<TopicModel> = lists
                .iter()
                .enumerate()
                .map(|(i, ws)| TopicModel::new(i as i32, ws.iter().map(|w| (w.clone(), 1.0)).collect()))
                .collect();
            let names = ["x", "y", "z"];
            let category_of: BTreeMap<i32, String> =
                (0..topics.len()).map(|i| (i as i32, names[cats[i]].to_string())).collect();
            let lex = build_lexicon(&topics, &category_of);
            for (cat, kws) in lex.iter() {
                for kw in kws {
                    prop_assert!(topics.iter().any(|t| category_of[&t.cluster_id] == cat && t.keywords().contains(kw)));
                }
            }
        }
    }
}
