use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Algorithm, ClusterParams};
use crate::embedding::EmbeddingMatrix;
use crate::eval::{aggregate, EvalReport};

use super::run::{analyze, reduce_stage, seeded_reduce_config, Prepared, ReductionInfo};
use super::{run_seed, PipelineConfig, PipelineError};

/// One configuration run of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub algorithm: Algorithm,
    pub min_cluster_size: usize,
    pub run: usize,
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub raw: Vec<GridRow>,
    /// One per (algorithm, size), averaging the successful runs. `None`
    /// when every run of the configuration failed.
    pub aggregated: Vec<(Algorithm, usize, Option<EvalReport>)>,
}

/// Executes one configured run and scores it.
pub trait GridRunner: Sync {
    fn run(&self, cfg: &PipelineConfig) -> Result<EvalReport, PipelineError>;
}

impl<F> GridRunner for F
where
    F: Fn(&PipelineConfig) -> Result<EvalReport, PipelineError> + Sync,
{
    fn run(&self, cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
        self(cfg)
    }
}

/// Clusters and scores prepared data, caching one reduction per seed since
/// only clustering parameters vary within a run.
pub struct AnalysisRunner<'a> {
    prepared: &'a Prepared,
    cache: Mutex<HashMap<u64, std::sync::Arc<(EmbeddingMatrix, ReductionInfo)>>>,
}

impl<'a> AnalysisRunner<'a> {
    pub fn new(prepared: &'a Prepared) -> Self {
        Self {
            prepared,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn reduced(&self, cfg: &PipelineConfig) -> Result<std::sync::Arc<(EmbeddingMatrix, ReductionInfo)>, PipelineError> {
        let rcfg = seeded_reduce_config(cfg);
        if let Some(hit) = self.cache.lock().unwrap().get(&rcfg.seed) {
            return Ok(hit.clone());
        }
        let fresh = std::sync::Arc::new(reduce_stage(&self.prepared.embeddings, &rcfg, cfg.trustworthiness_gate)?);
        Ok(self.cache.lock().unwrap().entry(rcfg.seed).or_insert(fresh).clone())
    }
}

impl GridRunner for AnalysisRunner<'_> {
    fn run(&self, cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
        let reduced = self.reduced(cfg)?;
        analyze(self.prepared, cfg, &reduced.0, &reduced.1).map(|a| a.eval)
    }
}

/// Runs every (algorithm, size) pair `n_runs` times. Run `r` of every pair
/// uses the same derived master seed, so pairs are compared on identical
/// reductions. Failed runs are recorded and left out of the averages.
pub fn run_grid_with(
    base: &PipelineConfig,
    algorithms: &[Algorithm],
    sizes: &[usize],
    n_runs: usize,
    runner: &dyn GridRunner,
) -> GridResult {
    let n_runs = n_runs.max(1);
    let mut raw = Vec::with_capacity(algorithms.len() * sizes.len() * n_runs);
    for run in 0..n_runs {
        let seed = run_seed(base.master_seed, run);
        let combos: Vec<(Algorithm, usize)> = algorithms
            .iter()
            .flat_map(|&a| sizes.iter().map(move |&s| (a, s)))
            .collect();
        // the first config computes the shared reduction; the rest reuse it
        let mut rows: Vec<GridRow> = Vec::with_capacity(combos.len());
        let one = |&(algorithm, size): &(Algorithm, usize)| {
            let cfg = PipelineConfig {
                master_seed: seed,
                cluster: ClusterParams {
                    algorithm,
                    min_cluster_size: size,
                    ..base.cluster.clone()
                },
                ..base.clone()
            };
            let result = runner.run(&cfg);
            if let Err(e) = &result {
                log::warn!("grid {algorithm}/{size} run {run}: {e}");
            }
            GridRow {
                algorithm,
                min_cluster_size: size,
                run,
                seed,
                error: result.as_ref().err().map(ToString::to_string),
                report: result.ok(),
            }
        };
        if let Some(first) = combos.first() {
            rows.push(one(first));
            rows.extend(combos[1..].par_iter().map(one).collect::<Vec<_>>());
        }
        raw.extend(rows);
    }
    raw.sort_by_key(|r| {
        (
            algorithms.iter().position(|&a| a == r.algorithm),
            sizes.iter().position(|&s| s == r.min_cluster_size),
            r.run,
        )
    });
    let mut aggregated = Vec::new();
    for &a in algorithms {
        for &s in sizes {
            let ok: Vec<EvalReport> = raw
                .iter()
                .filter(|r| r.algorithm == a && r.min_cluster_size == s)
                .filter_map(|r| r.report.clone())
                .collect();
            aggregated.push((a, s, aggregate(&ok).ok()));
        }
    }
    GridResult { raw, aggregated }
}

pub fn run_grid(
    prepared: &Prepared,
    base: &PipelineConfig,
    algorithms: &[Algorithm],
    sizes: &[usize],
    n_runs: usize,
) -> GridResult {
    run_grid_with(base, algorithms, sizes, n_runs, &AnalysisRunner::new(prepared))
}

fn metric_fields(r: Option<&EvalReport>) -> [String; 5] {
    match r {
        Some(r) => [
            r.n_topics.to_string(),
            r.coherence.to_string(),
            r.diversity.to_string(),
            r.quality.to_string(),
            r.granularity.to_string(),
        ],
        None => Default::default(),
    }
}

/// `algorithm,min_cluster_size,n_topics,coherence,diversity,quality,granularity,runs_averaged`
pub fn write_grid_csv<W: Write>(result: &GridResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "min_cluster_size",
        "n_topics",
        "coherence",
        "diversity",
        "quality",
        "granularity",
        "runs_averaged",
    ])?;
    for (a, s, r) in &result.aggregated {
        let mut rec = vec![a.to_string(), s.to_string()];
        rec.extend(metric_fields(r.as_ref()));
        rec.push(r.as_ref().map_or(0, |r| r.runs_averaged).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid_runs_csv<W: Write>(result: &GridResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "min_cluster_size",
        "run",
        "seed",
        "n_topics",
        "coherence",
        "diversity",
        "quality",
        "granularity",
        "error",
    ])?;
    for row in &result.raw {
        let mut rec = vec![
            row.algorithm.to_string(),
            row.min_cluster_size.to_string(),
            row.run.to_string(),
            row.seed.to_string(),
        ];
        rec.extend(metric_fields(row.report.as_ref()));
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
