//! Density-based clustering of reduced embeddings: HDBSCAN with
//! excess-of-mass or leaf selection, and OPTICS with xi extraction.

mod hdbscan;
mod optics;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{euclidean, EmbeddingMatrix};

pub use hdbscan::{condense, hdbscan, CondensedCluster, CondensedTree};
pub use optics::{optics, optics_ordering, xi_clusters, OpticsOrdering};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot cluster an empty point set")]
    EmptyInput,
    #[error("invalid cluster params: {0}")]
    InvalidParams(String),
    #[error("non-finite coordinate in row {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    HdbscanEom,
    HdbscanLeaf,
    OpticsXi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::HdbscanEom, Algorithm::HdbscanLeaf, Algorithm::OpticsXi];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::HdbscanEom => "hdbscan_eom",
            Algorithm::HdbscanLeaf => "hdbscan_leaf",
            Algorithm::OpticsXi => "optics_xi",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?} (expected hdbscan_eom, hdbscan_leaf or optics_xi)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub algorithm: Algorithm,
    pub min_cluster_size: usize,
    /// Neighborhood size for core distances, counting the point itself.
    /// Defaults to `min_cluster_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples: Option<usize>,
    #[serde(default = "default_xi")]
    pub xi: f64,
}

fn default_xi() -> f64 {
    0.05
}

impl ClusterParams {
    pub fn new(algorithm: Algorithm, min_cluster_size: usize) -> Self {
        Self {
            algorithm,
            min_cluster_size,
            min_samples: None,
            xi: default_xi(),
        }
    }

    pub fn with_min_samples(mut self, min_samples: usize) -> Self {
        self.min_samples = Some(min_samples);
        self
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::InvalidParams("min_cluster_size must be ≥ 2".into()));
        }
        if self.min_samples() < 1 {
            return Err(ClusterError::InvalidParams("min_samples must be ≥ 1".into()));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(ClusterError::InvalidParams("xi must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self::new(Algorithm::HdbscanEom, 50)
    }
}

pub const OUTLIER: i32 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    pub params: ClusterParams,
    /// Excess-of-mass stability of each cluster, indexed by label (HDBSCAN).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<Vec<f64>>,
    /// Visit order and reachability per visited position (OPTICS).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reachability: Option<Vec<f64>>,
}

impl ClusterAssignment {
    pub fn members(&self, label: i32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    pub fn n_outliers(&self) -> usize {
        self.labels.iter().filter(|&&l| l == OUTLIER).count()
    }

    /// `doc_id,label` rows.
    pub fn write_csv<W: Write>(&self, doc_ids: &[String], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["doc_id", "label"])?;
        for (id, label) in doc_ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &label.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `order_index,doc_id,reachability` rows; `None` unless produced by OPTICS.
    pub fn write_reachability_csv<W: Write>(&self, doc_ids: &[String], out: W) -> Option<csv::Result<()>> {
        let (ordering, reach) = (self.ordering.as_ref()?, self.reachability.as_ref()?);
        let run = || -> csv::Result<()> {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["order_index", "doc_id", "reachability"])?;
            for (pos, (&doc, r)) in ordering.iter().zip(reach).enumerate() {
                let r = if r.is_infinite() { "inf".to_string() } else { r.to_string() };
                w.write_record([pos.to_string().as_str(), doc_ids[doc].as_str(), &r])?;
            }
            w.flush()?;
            Ok(())
        };
        Some(run())
    }
}

/// Renumbers clusters 0..k−1 by decreasing size, ties going to the cluster
/// holding the smallest document index. Per-cluster stability follows its
/// cluster.
pub fn relabel_by_size(assignment: &ClusterAssignment) -> ClusterAssignment {
    use std::collections::BTreeMap;
    let mut stats: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for (i, &l) in assignment.labels.iter().enumerate() {
        if l >= 0 {
            let e = stats.entry(l).or_insert((0, i));
            e.0 += 1;
        }
    }
    let mut order: Vec<(i32, usize, usize)> = stats.into_iter().map(|(l, (n, first))| (l, n, first)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let mut mapping = BTreeMap::new();
    for (new, &(old, _, _)) in order.iter().enumerate() {
        mapping.insert(old, new as i32);
    }
    let labels = assignment
        .labels
        .iter()
        .map(|l| if *l >= 0 { mapping[l] } else { *l })
        .collect();
    let stability = assignment.stability.as_ref().map(|s| {
        order
            .iter()
            .map(|&(old, _, _)| s.get(old as usize).copied().unwrap_or(0.0))
            .collect()
    });
    ClusterAssignment {
        labels,
        n_clusters: order.len(),
        params: assignment.params.clone(),
        stability,
        ordering: assignment.ordering.clone(),
        reachability: assignment.reachability.clone(),
    }
}

/// Runs the configured algorithm and returns size-ordered labels.
pub fn cluster(points: &EmbeddingMatrix, params: &ClusterParams) -> Result<ClusterAssignment, ClusterError> {
    let raw = match params.algorithm {
        Algorithm::HdbscanEom | Algorithm::HdbscanLeaf => hdbscan(points, params)?,
        Algorithm::OpticsXi => optics(points, params)?,
    };
    Ok(relabel_by_size(&raw))
}

pub(crate) fn validate_points(points: &EmbeddingMatrix, params: &ClusterParams) -> Result<(), ClusterError> {
    params.validate()?;
    if points.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if let Some(row) = points.rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(ClusterError::NonFinite(row));
    }
    Ok(())
}

/// Distance from each point to its `min_samples`-th nearest neighbor,
/// counting the point itself as the first. Clamped to the farthest point
/// when `min_samples` exceeds the point count.
pub fn core_distances(points: &EmbeddingMatrix, min_samples: usize) -> Vec<f64> {
    let n = points.n_rows();
    let k = min_samples.clamp(1, n);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| euclidean(points.row(i), points.row(j))).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}
