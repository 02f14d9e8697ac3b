//! Document embeddings: the in-memory matrix, the `EMB1` binary file format
//! and a batched client for a remote embedding service.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding file has {found} rows but {expected} documents were expected")]
    CountMismatch { found: usize, expected: usize },
    #[error("embedding dimension is zero")]
    DimZero,
    #[error("corrupt embedding header: {0}")]
    CorruptHeader(String),
    #[error("row {row} has length {len}, expected {dim}")]
    RaggedRow { row: usize, len: usize, dim: usize },
    #[error("row {0} is entirely NaN")]
    AllNanRow(usize),
    #[error("{ids} ids for {rows} rows")]
    IdCountMismatch { ids: usize, rows: usize },
    #[error("batch {batch} returned dimension {found}, earlier batches had {expected}")]
    DimMismatchAcrossBatches {
        batch: usize,
        found: usize,
        expected: usize,
    },
    #[error("embedding service unavailable after {attempts} attempts: {last}")]
    ServiceUnavailable { attempts: usize, last: String },
    #[error("embedding service returned {returned} vectors for {sent} texts")]
    BadResponse { sent: usize, returned: usize },
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major matrix of `n` document vectors, each of length `dim`, with the
/// document id of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    values: Vec<f64>,
    doc_ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f64>, doc_ids: Vec<String>) -> Result<Self, EmbeddingError> {
        let rows = if dim == 0 {
            if !values.is_empty() {
                return Err(EmbeddingError::DimZero);
            }
            doc_ids.len()
        } else {
            if values.len() % dim != 0 {
                return Err(EmbeddingError::RaggedRow {
                    row: values.len() / dim,
                    len: values.len() % dim,
                    dim,
                });
            }
            values.len() / dim
        };
        if rows != doc_ids.len() {
            return Err(EmbeddingError::IdCountMismatch {
                ids: doc_ids.len(),
                rows,
            });
        }
        if dim == 0 && rows > 0 {
            return Err(EmbeddingError::DimZero);
        }
        if let Some(row) = (0..rows).find(|&r| values[r * dim..(r + 1) * dim].iter().all(|v| v.is_nan())) {
            return Err(EmbeddingError::AllNanRow(row));
        }
        Ok(Self {
            dim,
            values,
            doc_ids,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, doc_ids: Vec<String>) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(EmbeddingError::RaggedRow {
                    row: i,
                    len: row.len(),
                    dim,
                });
            }
            values.extend(row);
        }
        if dim == 0 && !doc_ids.is_empty() {
            return Err(EmbeddingError::DimZero);
        }
        Self::new(dim, values, doc_ids)
    }

    /// Convenience for tests and in-memory point sets: ids are row indices.
    pub fn from_points(rows: Vec<Vec<f64>>) -> Result<Self, EmbeddingError> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::from_rows(rows, ids)
    }

    pub fn empty() -> Self {
        Self {
            dim: 0,
            values: Vec::new(),
            doc_ids: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            ids.push(self.doc_ids[i].clone());
        }
        Self {
            dim: self.dim,
            values,
            doc_ids: ids,
        }
    }

    pub fn with_doc_ids(mut self, doc_ids: Vec<String>) -> Result<Self, EmbeddingError> {
        if doc_ids.len() != self.n_rows() {
            return Err(EmbeddingError::IdCountMismatch {
                ids: doc_ids.len(),
                rows: self.n_rows(),
            });
        }
        self.doc_ids = doc_ids;
        Ok(self)
    }

    /// Copy with every non-zero row scaled to unit Euclidean norm.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        if self.dim == 0 {
            return out;
        }
        for row in out.values.chunks_mut(self.dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Writes `EMB1`: magic, u32 LE row count, u32 LE dim, then f32 LE values.
pub fn write_emb1<W: Write>(m: &EmbeddingMatrix, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(m.n_rows() as u32).to_le_bytes())?;
    out.write_all(&(m.dim as u32).to_le_bytes())?;
    for v in &m.values {
        out.write_all(&(*v as f32).to_le_bytes())?;
    }
    out.flush()
}

/// Reads an `EMB1` stream; rows receive ids "0".."n-1".
pub fn read_emb1<R: Read>(mut input: R) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut header = [0u8; 12];
    input
        .read_exact(&mut header)
        .map_err(|e| EmbeddingError::CorruptHeader(format!("short header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(EmbeddingError::CorruptHeader(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&header[..4])
        )));
    }
    let count = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if dim == 0 && count > 0 {
        return Err(EmbeddingError::DimZero);
    }
    let n_values = count
        .checked_mul(dim)
        .ok_or_else(|| EmbeddingError::CorruptHeader("count × dim overflows".into()))?;
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| EmbeddingError::CorruptHeader(e.to_string()))?;
    if bytes.len() != n_values * 4 {
        return Err(EmbeddingError::CorruptHeader(format!(
            "expected {} payload bytes for {count}×{dim}, found {}",
            n_values * 4,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    EmbeddingMatrix::new(dim, values, (0..count).map(|i| i.to_string()).collect())
}

pub fn save_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<(), EmbeddingError> {
    let io = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_emb1(m, BufWriter::new(file)).map_err(io)
}

/// Loads a precomputed embedding file whose rows are in document order and
/// attaches `expected_ids` to them.
pub fn load_embeddings(path: &Path, expected_ids: &[String]) -> Result<EmbeddingMatrix, EmbeddingError> {
    let file = File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let m = read_emb1(BufReader::new(file))?;
    if m.n_rows() != expected_ids.len() {
        return Err(EmbeddingError::CountMismatch {
            found: m.n_rows(),
            expected: expected_ids.len(),
        });
    }
    m.with_doc_ids(expected_ids.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    #[default]
    File,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub file_path: Option<PathBuf>,
    pub endpoint_url: Option<String>,
    pub batch_size: usize,
    pub timeout_s: u64,
    pub retries: usize,
    /// Batches in flight at once.
    pub parallelism: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::File,
            file_path: None,
            endpoint_url: None,
            batch_size: 32,
            timeout_s: 60,
            retries: 3,
            parallelism: 1,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.batch_size == 0 {
            return Err(EmbeddingError::InvalidConfig("batch_size must be ≥ 1".into()));
        }
        if self.parallelism == 0 {
            return Err(EmbeddingError::InvalidConfig("parallelism must be ≥ 1".into()));
        }
        match self.mode {
            ProviderMode::File if self.file_path.is_none() => Err(EmbeddingError::InvalidConfig(
                "file mode requires file_path".into(),
            )),
            ProviderMode::Remote if self.endpoint_url.is_none() => Err(
                EmbeddingError::InvalidConfig("remote mode requires endpoint_url".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Anything that turns a batch of texts into vectors. A returned error is
/// treated as retryable.
pub trait EmbeddingBackend: Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String>;
}

/// `POST {"texts": [...]}` → `{"embeddings": [[...], ...]}`.
pub struct HttpEmbeddingBackend {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpEmbeddingBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| e.to_string())?;
        let body: EmbedResponse = resp.into_json().map_err(|e| e.to_string())?;
        Ok(body.embeddings)
    }
}

fn embed_with_retries(
    backend: &dyn EmbeddingBackend,
    texts: &[String],
    retries: usize,
) -> Result<Vec<Vec<f32>>, EmbeddingError> {
    let mut last = String::new();
    for attempt in 0..=retries {
        match backend.embed_batch(texts) {
            Ok(rows) if rows.len() == texts.len() => return Ok(rows),
            Ok(rows) => {
                return Err(EmbeddingError::BadResponse {
                    sent: texts.len(),
                    returned: rows.len(),
                })
            }
            Err(e) => {
                log::warn!("embedding request failed (attempt {}): {e}", attempt + 1);
                last = e;
            }
        }
    }
    Err(EmbeddingError::ServiceUnavailable {
        attempts: retries + 1,
        last,
    })
}

/// Embeds `texts` in batches of `cfg.batch_size`, with up to
/// `cfg.parallelism` batches in flight; rows come back in input order.
pub fn fetch_embeddings_with(
    ids: &[String],
    texts: &[String],
    cfg: &ProviderConfig,
    backend: &dyn EmbeddingBackend,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    if ids.len() != texts.len() {
        return Err(EmbeddingError::IdCountMismatch {
            ids: ids.len(),
            rows: texts.len(),
        });
    }
    if cfg.batch_size == 0 || cfg.parallelism == 0 {
        return Err(EmbeddingError::InvalidConfig(
            "batch_size and parallelism must be ≥ 1".into(),
        ));
    }
    if texts.is_empty() {
        return Ok(EmbeddingMatrix::empty());
    }
    let batches: Vec<&[String]> = texts.chunks(cfg.batch_size).collect();
    let mut results: Vec<Option<Result<Vec<Vec<f32>>, EmbeddingError>>> =
        (0..batches.len()).map(|_| None).collect();
    for (wave_idx, wave) in batches.chunks(cfg.parallelism).enumerate() {
        let base = wave_idx * cfg.parallelism;
        if wave.len() == 1 {
            results[base] = Some(embed_with_retries(backend, wave[0], cfg.retries));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| s.spawn(|| embed_with_retries(backend, batch, cfg.retries)))
                .collect();
            for (j, h) in handles.into_iter().enumerate() {
                results[base + j] = Some(h.join().expect("embedding worker panicked"));
            }
        });
    }

    let mut dim = None;
    let mut values = Vec::new();
    for (batch, result) in results.into_iter().enumerate() {
        for row in result.expect("every batch ran")? {
            let expected = *dim.get_or_insert(row.len());
            if row.len() != expected {
                return Err(EmbeddingError::DimMismatchAcrossBatches {
                    batch,
                    found: row.len(),
                    expected,
                });
            }
            values.extend(row.into_iter().map(f64::from));
        }
    }
    EmbeddingMatrix::new(dim.unwrap_or(0), values, ids.to_vec())
}

pub fn fetch_embeddings(
    ids: &[String],
    texts: &[String],
    cfg: &ProviderConfig,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    cfg.validate()?;
    let endpoint = cfg
        .endpoint_url
        .as_deref()
        .ok_or_else(|| EmbeddingError::InvalidConfig("endpoint_url missing".into()))?;
    let backend = HttpEmbeddingBackend::new(endpoint, Duration::from_secs(cfg.timeout_s));
    fetch_embeddings_with(ids, texts, cfg, &backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Mutex;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.emb");
        let m = EmbeddingMatrix::new(4, (0..12).map(|v| v as f64).collect(), ids(3)).unwrap();
        save_embeddings(&path, &m).unwrap();
        let loaded = load_embeddings(&path, &ids(3)).unwrap();
        assert_eq!((loaded.n_rows(), loaded.dim()), (3, 4));
        assert_eq!(loaded, m);
        assert!(matches!(
            load_embeddings(&path, &ids(4)),
            Err(EmbeddingError::CountMismatch { found: 3, expected: 4 })
        ));
    }

    #[test]
    fn accepts_1024_dim_rows() {
        let mut buf = Vec::new();
        let m = EmbeddingMatrix::new(1024, vec![0.5; 2048], ids(2)).unwrap();
        write_emb1(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 2048 * 4);
        assert_eq!(read_emb1(buf.as_slice()).unwrap().dim(), 1024);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(read_emb1(&b"EMB2\0\0\0\0\0\0\0\0"[..]), Err(EmbeddingError::CorruptHeader(_))));
        assert!(matches!(read_emb1(&b"EMB1\x01\0"[..]), Err(EmbeddingError::CorruptHeader(_))));
        let mut zero_dim = b"EMB1".to_vec();
        zero_dim.extend(3u32.to_le_bytes());
        zero_dim.extend(0u32.to_le_bytes());
        assert!(matches!(read_emb1(zero_dim.as_slice()), Err(EmbeddingError::DimZero)));
        let mut truncated = b"EMB1".to_vec();
        truncated.extend(2u32.to_le_bytes());
        truncated.extend(2u32.to_le_bytes());
        truncated.extend([0u8; 12]);
        assert!(matches!(read_emb1(truncated.as_slice()), Err(EmbeddingError::CorruptHeader(_))));
    }

    #[test]
    fn rejects_all_nan_rows() {
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![1.0, 2.0, f64::NAN, f64::NAN], ids(2)),
            Err(EmbeddingError::AllNanRow(1))
        ));
    }

    struct Recording {
        dims: Vec<usize>,
        calls: Mutex<Vec<usize>>,
        failures_left: Mutex<usize>,
    }

    impl Recording {
        fn new(dims: Vec<usize>) -> Self {
            Self {
                dims,
                calls: Mutex::new(Vec::new()),
                failures_left: Mutex::new(0),
            }
        }
    }

    impl EmbeddingBackend for Recording {
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
            {
                let mut left = self.failures_left.lock().unwrap();
                if *left > 0 {
                    *left -= 1;
                    return Err("503".into());
                }
            }
            let mut calls = self.calls.lock().unwrap();
            let dim = self.dims[calls.len().min(self.dims.len() - 1)];
            calls.push(texts.len());
            Ok(texts
                .iter()
                .map(|t| {
                    let v: f32 = t[1..].parse().unwrap();
                    vec![v; dim]
                })
                .collect())
        }
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn batches_preserve_order() {
        let backend = Recording::new(vec![3]);
        let cfg = ProviderConfig {
            batch_size: 2,
            ..Default::default()
        };
        let m = fetch_embeddings_with(&ids(5), &texts(5), &cfg, &backend).unwrap();
        assert_eq!(*backend.calls.lock().unwrap(), vec![2, 2, 1]);
        let firsts: Vec<f64> = m.rows().map(|r| r[0]).collect();
        assert_eq!(firsts, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn concurrent_batches_preserve_order() {
        let backend = Recording::new(vec![2]);
        let cfg = ProviderConfig {
            batch_size: 3,
            parallelism: 4,
            ..Default::default()
        };
        let m = fetch_embeddings_with(&ids(20), &texts(20), &cfg, &backend).unwrap();
        let firsts: Vec<f64> = m.rows().map(|r| r[0]).collect();
        assert_eq!(firsts, (0..20).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn dim_change_between_batches_is_an_error() {
        let backend = Recording::new(vec![1024, 1023]);
        let cfg = ProviderConfig {
            batch_size: 2,
            ..Default::default()
        };
        assert!(matches!(
            fetch_embeddings_with(&ids(4), &texts(4), &cfg, &backend),
            Err(EmbeddingError::DimMismatchAcrossBatches { batch: 1, found: 1023, expected: 1024 })
        ));
    }

    #[test]
    fn empty_input_issues_no_requests() {
        let backend = Recording::new(vec![3]);
        let m = fetch_embeddings_with(&[], &[], &ProviderConfig::default(), &backend).unwrap();
        assert_eq!((m.n_rows(), m.dim()), (0, 0));
        assert!(backend.calls.lock().unwrap().is_empty());
    }

    #[test]
    fn retries_then_gives_up() {
        let backend = Recording::new(vec![2]);
        *backend.failures_left.lock().unwrap() = 2;
        let cfg = ProviderConfig {
            retries: 2,
            ..Default::default()
        };
        assert!(fetch_embeddings_with(&ids(1), &texts(1), &cfg, &backend).is_ok());

        *backend.failures_left.lock().unwrap() = 5;
        assert!(matches!(
            fetch_embeddings_with(&ids(1), &texts(1), &cfg, &backend),
            Err(EmbeddingError::ServiceUnavailable { attempts: 3, .. })
        ));
    }

    #[test]
    fn provider_config_validation() {
        let mut cfg = ProviderConfig::default();
        assert!(cfg.validate().is_err(), "file mode needs a path");
        cfg.file_path = Some("x.emb".into());
        assert!(cfg.validate().is_ok());
        cfg.mode = ProviderMode::Remote;
        assert!(cfg.validate().is_err());
        cfg.endpoint_url = Some("http://localhost:1".into());
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn emb1_round_trip_is_bit_exact(
            rows in 0usize..6,
            dim in 1usize..6,
            seed in proptest::collection::vec(-1e30f32..1e30f32, 36)
        ) {
            let values: Vec<f64> = seed.iter().take(rows * dim).map(|v| *v as f64).collect();
            let m = EmbeddingMatrix::new(dim, values, ids(rows)).unwrap();
            let mut buf = Vec::new();
            write_emb1(&m, &mut buf).unwrap();
            let back = read_emb1(buf.as_slice()).unwrap().with_doc_ids(ids(rows)).unwrap();
            let dim_ok = back.dim() == m.dim() || rows == 0;
            prop_assert!(dim_ok);
            for (a, b) in back.values().iter().zip(m.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
