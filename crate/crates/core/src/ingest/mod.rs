//! Email ingestion: MIME parsing, text cleanup and corpus filtering.

mod html;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use mailparse::{DispositionType, ParsedMail};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use html::{decode_entities, html_to_text};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("message {id}: no decodable text part ({reason})")]
    UnparsableMessage { id: String, reason: String },
    #[error("message {id}: subject and body are both empty")]
    EmptyDocument { id: String },
    #[error("invalid ingest config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
}

/// One raw message as read from disk.
#[derive(Debug, Clone)]
pub struct RawEmail {
    pub id: String,
    pub bytes: Vec<u8>,
    pub source_path: PathBuf,
}

/// A parsed, cleaned text entry: the subject prepended to the body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailDoc {
    pub id: String,
    pub subject: String,
    pub body_text: String,
    pub full_text: String,
    pub char_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_hint: Option<String>,
}

impl EmailDoc {
    /// Assembles a document, joining subject and body with a single space
    /// (or no separator when either side is empty).
    pub fn new(id: impl Into<String>, subject: String, body_text: String) -> Self {
        let full_text = match (subject.is_empty(), body_text.is_empty()) {
            (false, false) => format!("{subject} {body_text}"),
            (false, true) => subject.clone(),
            _ => body_text.clone(),
        };
        let char_len = full_text.chars().count();
        Self {
            id: id.into(),
            subject,
            body_text,
            full_text,
            char_len,
            language_hint: None,
        }
    }

    fn with_language(mut self, hint: Option<String>) -> Self {
        self.language_hint = hint;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub subject_blocklist: Vec<String>,
    pub max_chars: usize,
    pub junk_run_min_len: usize,
    pub strip_html: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            subject_blocklist: vec!["virus".into(), "spam".into(), "alert".into()],
            max_chars: 7000,
            junk_run_min_len: 20,
            strip_html: true,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.max_chars == 0 {
            return Err(IngestError::InvalidConfig("max_chars must be positive".into()));
        }
        if self.junk_run_min_len < 4 {
            return Err(IngestError::InvalidConfig(
                "junk_run_min_len must be at least 4".into(),
            ));
        }
        Ok(())
    }
}

/// Parses one message. The body comes from the first inline `text/plain`
/// part, falling back to the first `text/html` part; attachments are never
/// read.
pub fn parse_email(raw: &RawEmail, cfg: &IngestConfig) -> Result<EmailDoc, IngestError> {
    let unparsable = |reason: String| IngestError::UnparsableMessage {
        id: raw.id.clone(),
        reason,
    };
    let mail = mailparse::parse_mail(&raw.bytes).map_err(|e| unparsable(e.to_string()))?;

    let subject = mail
        .headers
        .iter()
        .find(|h| h.get_key_ref().eq_ignore_ascii_case("subject"))
        .map(|h| collapse_whitespace(&h.get_value()))
        .unwrap_or_default();
    let language = mail
        .headers
        .iter()
        .find(|h| h.get_key_ref().eq_ignore_ascii_case("content-language"))
        .map(|h| h.get_value().trim().to_string())
        .filter(|v| !v.is_empty());

    let part = find_text_part(&mail, "text/plain")
        .map(|p| (p, false))
        .or_else(|| find_text_part(&mail, "text/html").map(|p| (p, true)))
        .ok_or_else(|| unparsable(format!("no text part in {}", mail.ctype.mimetype)))?;
    let decoded = part.0.get_body().map_err(|e| unparsable(e.to_string()))?;
    let body = if cfg.strip_html {
        // plain parts also pass through so stray angle brackets are dropped
        html_to_text_if(&decoded, part.1)
    } else {
        collapse_whitespace(&decoded)
    };

    if subject.is_empty() && body.is_empty() {
        return Err(IngestError::EmptyDocument { id: raw.id.clone() });
    }
    Ok(EmailDoc::new(raw.id.clone(), subject, body).with_language(language))
}

fn html_to_text_if(text: &str, is_html: bool) -> String {
    if is_html {
        html_to_text(text)
    } else {
        text.split(|c: char| c.is_whitespace() || c == '<' || c == '>')
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn find_text_part<'a>(mail: &'a ParsedMail<'a>, mimetype: &str) -> Option<&'a ParsedMail<'a>> {
    if mail.get_content_disposition().disposition == DispositionType::Attachment {
        return None;
    }
    if mail.subparts.is_empty() {
        return mail.ctype.mimetype.eq_ignore_ascii_case(mimetype).then_some(mail);
    }
    mail.subparts.iter().find_map(|p| find_text_part(p, mimetype))
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_junk_token(token: &str, min_len: usize) -> bool {
    if token.chars().count() < min_len {
        return false;
    }
    let all_alnum = token.chars().all(char::is_alphanumeric);
    let has_digit = token.chars().any(|c| c.is_numeric());
    let all_symbols = token.chars().all(|c| !c.is_alphanumeric());
    (all_alnum && has_digit) || all_symbols
}

/// Drops long identifier-like runs (letters mixed with digits, or pure
/// symbols) and normalizes whitespace.
pub fn sanitize_text(text: &str, cfg: &IngestConfig) -> String {
    text.split_whitespace()
        .filter(|tok| !is_junk_token(tok, cfg.junk_run_min_len))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Re-applies [`sanitize_text`] to subject and body and rebuilds the
/// assembled text.
pub fn sanitize_doc(doc: &EmailDoc, cfg: &IngestConfig) -> EmailDoc {
    EmailDoc::new(
        doc.id.clone(),
        sanitize_text(&doc.subject, cfg),
        sanitize_text(&doc.body_text, cfg),
    )
    .with_language(doc.language_hint.clone())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalCounts {
    pub blocklisted_subject: usize,
    pub too_long: usize,
}

impl RemovalCounts {
    pub fn total(&self) -> usize {
        self.blocklisted_subject + self.too_long
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub retained: Vec<EmailDoc>,
    pub removed: RemovalCounts,
}

pub fn subject_is_blocklisted(subject: &str, cfg: &IngestConfig) -> bool {
    let subject = subject.to_lowercase();
    cfg.subject_blocklist
        .iter()
        .any(|kw| !kw.is_empty() && subject.contains(&kw.to_lowercase()))
}

/// Removes blocklisted subjects first, then over-long entries. Order is
/// preserved.
pub fn filter_corpus(docs: Vec<EmailDoc>, cfg: &IngestConfig) -> FilterOutcome {
    let mut removed = RemovalCounts::default();
    let retained = docs
        .into_iter()
        .filter(|doc| {
            if subject_is_blocklisted(&doc.subject, cfg) {
                removed.blocklisted_subject += 1;
                false
            } else if doc.char_len > cfg.max_chars {
                removed.too_long += 1;
                false
            } else {
                true
            }
        })
        .collect();
    FilterOutcome { retained, removed }
}

/// Per-reason accounting of a full ingest run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestLedger {
    pub input_count: usize,
    pub unparsable: usize,
    pub empty: usize,
    pub blocklisted_subject: usize,
    pub too_long: usize,
    pub retained: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected_ids: Vec<RejectedDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedDoc {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub docs: Vec<EmailDoc>,
    pub ledger: IngestLedger,
}

/// A document before parsing: either raw message bytes or pre-split fields.
#[derive(Debug, Clone)]
pub enum SourceDoc {
    Raw(RawEmail),
    Fields { id: String, subject: String, body: String },
}

impl SourceDoc {
    pub fn id(&self) -> &str {
        match self {
            SourceDoc::Raw(raw) => &raw.id,
            SourceDoc::Fields { id, .. } => id,
        }
    }
}

fn doc_from_fields(
    id: &str,
    subject: &str,
    body: &str,
    cfg: &IngestConfig,
) -> Result<EmailDoc, IngestError> {
    let subject = collapse_whitespace(&decode_rfc2047(subject));
    let body = if cfg.strip_html {
        html_to_text(body)
    } else {
        collapse_whitespace(body)
    };
    if subject.is_empty() && body.is_empty() {
        return Err(IngestError::EmptyDocument { id: id.to_string() });
    }
    Ok(EmailDoc::new(id, subject, body))
}

fn decode_rfc2047(value: &str) -> String {
    if !value.contains("=?") {
        return value.to_string();
    }
    let header = format!("Subject: {value}\r\n");
    mailparse::parse_header(header.as_bytes())
        .map(|(h, _)| h.get_value())
        .unwrap_or_else(|_| value.to_string())
}

/// Parses, sanitizes and filters a corpus. Parsing runs in parallel; the
/// output keeps input order.
pub fn ingest(sources: &[SourceDoc], cfg: &IngestConfig) -> Result<IngestOutcome, IngestError> {
    cfg.validate()?;
    let mut seen = std::collections::HashSet::new();
    for src in sources {
        if !seen.insert(src.id()) {
            return Err(IngestError::DuplicateId(src.id().to_string()));
        }
    }

    let parsed: Vec<Result<EmailDoc, IngestError>> = sources
        .par_iter()
        .map(|src| {
            let doc = match src {
                SourceDoc::Raw(raw) => parse_email(raw, cfg)?,
                SourceDoc::Fields { id, subject, body } => doc_from_fields(id, subject, body, cfg)?,
            };
            let clean = sanitize_doc(&doc, cfg);
            if clean.full_text.is_empty() {
                return Err(IngestError::EmptyDocument { id: doc.id });
            }
            Ok(clean)
        })
        .collect();

    let mut ledger = IngestLedger {
        input_count: sources.len(),
        ..Default::default()
    };
    let mut docs = Vec::with_capacity(parsed.len());
    for result in parsed {
        match result {
            Ok(doc) => docs.push(doc),
            Err(IngestError::UnparsableMessage { id, reason }) => {
                ledger.unparsable += 1;
                ledger.rejected_ids.push(RejectedDoc {
                    id,
                    reason: format!("unparsable: {reason}"),
                });
            }
            Err(IngestError::EmptyDocument { id }) => {
                ledger.empty += 1;
                ledger.rejected_ids.push(RejectedDoc {
                    id,
                    reason: "empty".into(),
                });
            }
            Err(other) => return Err(other),
        }
    }

    let outcome = filter_corpus(docs, cfg);
    ledger.blocklisted_subject = outcome.removed.blocklisted_subject;
    ledger.too_long = outcome.removed.too_long;
    ledger.retained = outcome.retained.len();
    Ok(IngestOutcome {
        docs: outcome.retained,
        ledger,
    })
}

#[derive(Debug, Deserialize)]
struct InputRecord {
    id: String,
    #[serde(default)]
    subject: String,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    full_text: Option<String>,
}

/// Reads either a directory of RFC 5322 files (sorted by file name, id =
/// file name) or a JSONL file of `{"id","subject","body"}` records. Corpus
/// files written by [`write_corpus_jsonl`] are accepted too.
pub fn read_sources(path: &Path) -> Result<Vec<SourceDoc>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        return entries
            .into_iter()
            .map(|p| {
                let bytes = fs::read(&p).map_err(|source| IngestError::Io {
                    path: p.clone(),
                    source,
                })?;
                let id = p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(SourceDoc::Raw(RawEmail {
                    id,
                    bytes,
                    source_path: p,
                }))
            })
            .collect();
    }

    let reader = BufReader::new(fs::File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InputRecord = serde_json::from_str(&line).map_err(|source| IngestError::Json {
            path: path.to_path_buf(),
            line: lineno + 1,
            source,
        })?;
        let body = match (rec.body, rec.full_text) {
            (Some(body), _) => body,
            (None, Some(full)) => full
                .strip_prefix(rec.subject.as_str())
                .map(|s| s.trim_start().to_string())
                .unwrap_or(full),
            (None, None) => String::new(),
        };
        out.push(SourceDoc::Fields {
            id: rec.id,
            subject: rec.subject,
            body,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct CorpusRecord<'a> {
    id: &'a str,
    subject: &'a str,
    full_text: &'a str,
    char_len: usize,
}

pub fn write_corpus_jsonl<W: Write>(docs: &[EmailDoc], mut out: W) -> std::io::Result<()> {
    for doc in docs {
        let rec = CorpusRecord {
            id: &doc.id,
            subject: &doc.subject,
            full_text: &doc.full_text,
            char_len: doc.char_len,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
