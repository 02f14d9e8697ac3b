use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterParams;
use crate::embedding::ProviderConfig;
use crate::eval::EvalParams;
use crate::ingest::IngestConfig;
use crate::labeler::LabelerConfig;
use crate::lda::LdaParams;
use crate::reduce::ReduceConfig;

use super::{Failure, PipelineError, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Directory of messages or a JSONL corpus.
    pub input: Option<PathBuf>,
    pub ingest: IngestConfig,
    pub provider: ProviderConfig,
    pub reduce: ReduceConfig,
    pub cluster: ClusterParams,
    pub labeler: LabelerConfig,
    /// Recorded labels (`{cluster_id: label}`) replayed instead of calling
    /// the service in remote mode.
    pub labeler_fixture: Option<PathBuf>,
    pub eval: EvalParams,
    pub lda: LdaParams,
    /// Replaces the bundled lexicon when set.
    pub lexicon: Option<PathBuf>,
    /// Extra stopword files, added to the bundled English list.
    pub stopwords: Vec<PathBuf>,
    /// Neighbor-embedding output below this trustworthiness falls back to PCA.
    pub trustworthiness_gate: f64,
    pub scatter: bool,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            ingest: IngestConfig::default(),
            provider: ProviderConfig::default(),
            reduce: ReduceConfig::default(),
            cluster: ClusterParams::default(),
            labeler: LabelerConfig::default(),
            labeler_fixture: None,
            eval: EvalParams::default(),
            lda: LdaParams::default(),
            lexicon: None,
            stopwords: Vec::new(),
            trustworthiness_gate: 0.80,
            scatter: true,
            master_seed: 42,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new(Stage::Config, Failure::Io(e)))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::new(Stage::Config, e))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| PipelineError::new(Stage::Config, Failure::Other(m));
        self.ingest.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
        self.cluster.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
        match self.labeler_fixture {
            Some(_) => self.labeler.validate_limits(),
            None => self.labeler.validate(),
        }
        .map_err(|e| PipelineError::new(Stage::Config, e))?;
        self.eval.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
        self.lda.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
        if !(0.0..=1.0).contains(&self.trustworthiness_gate) {
            return Err(bad("trustworthiness_gate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"master_seed": 7, "cluster": {"algorithm": "optics_xi", "min_cluster_size": 100}}"#)
                .unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.cluster.min_cluster_size, 100);
        assert_eq!(cfg.lda.n_topics, 15);
        assert_eq!(cfg.ingest.max_chars, 7000);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
