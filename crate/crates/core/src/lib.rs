//! Topic discovery for malicious email corpora: ingestion, embeddings,
//! dimensionality reduction, density clustering, keyword topics, labels,
//! evaluation and an LDA-based thematic hierarchy.

pub mod cluster;
pub mod embedding;
pub mod eval;
pub mod ingest;
pub mod labeler;
pub mod lda;
pub mod pipeline;
pub mod reduce;
pub mod topics;

pub use cluster::{cluster, Algorithm, ClusterAssignment, ClusterParams, OUTLIER};
pub use embedding::{EmbeddingMatrix, ProviderConfig};
pub use eval::{aggregate, EvalParams, EvalReport};
pub use ingest::{EmailDoc, IngestConfig, IngestLedger, SourceDoc};
pub use labeler::LabelerConfig;
pub use lda::{LdaParams, TopicHierarchy};
pub use pipeline::{PipelineConfig, PipelineError, RunReport, Stage};
pub use reduce::{ReduceConfig, ReduceMethod};
pub use topics::{CategoryLexicon, TopicModel};
