//! Dimensionality reduction ahead of density clustering.
//!
//! Two methods share one contract: exact PCA, and a seeded neighbor-graph
//! layout (fuzzy k-NN graph plus attractive/repulsive SGD, in the spirit of
//! UMAP). Both are deterministic for a fixed input and seed.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{euclidean, EmbeddingMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum ReduceError {
    #[error("{rows} rows is too few for {needed}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("invalid reduce config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
    #[error("k = {k} must be smaller than the row count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("matrices are not row-aligned ({0} vs {1} rows)")]
    NotAligned(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReduceMethod {
    Pca,
    #[default]
    NeighborEmbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReduceConfig {
    pub method: ReduceMethod,
    pub n_components: usize,
    pub n_neighbors: usize,
    pub seed: u64,
    pub metric: Metric,
    pub n_epochs: usize,
    pub min_dist: f64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self {
            method: ReduceMethod::NeighborEmbed,
            n_components: 5,
            n_neighbors: 15,
            seed: 42,
            metric: Metric::Cosine,
            n_epochs: 200,
            min_dist: 0.1,
        }
    }
}

impl ReduceConfig {
    pub fn validate(&self, input_dim: usize) -> Result<(), ReduceError> {
        if self.n_components == 0 || self.n_components > input_dim {
            return Err(ReduceError::InvalidConfig(format!(
                "n_components {} outside 1..={input_dim}",
                self.n_components
            )));
        }
        if self.n_neighbors < 2 {
            return Err(ReduceError::InvalidConfig("n_neighbors must be ≥ 2".into()));
        }
        if self.n_epochs == 0 {
            return Err(ReduceError::InvalidConfig("n_epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReduceWarning {
    RankDeficient { requested: usize, rank: usize },
}

impl std::fmt::Display for ReduceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReduceWarning::RankDeficient { requested, rank } => write!(
                f,
                "requested {requested} components but the data has rank {rank}; reduced to rank"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reduced {
    pub matrix: EmbeddingMatrix,
    pub warnings: Vec<ReduceWarning>,
    /// Eigenvalues of the kept components (PCA only).
    pub explained_variance: Option<Vec<f64>>,
}

/// Fitted principal components.
#[derive(Debug, Clone)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// One unit-length row per component, strongest first.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub rank: usize,
}

impl PcaFit {
    pub fn transform(&self, m: &EmbeddingMatrix) -> EmbeddingMatrix {
        let k = self.components.len();
        let mut values = Vec::with_capacity(m.n_rows() * k);
        for row in m.rows() {
            for comp in &self.components {
                values.push(
                    row.iter()
                        .zip(&self.mean)
                        .zip(comp)
                        .map(|((x, mu), c)| (x - mu) * c)
                        .sum(),
                );
            }
        }
        EmbeddingMatrix::new(k, values, m.doc_ids().to_vec()).expect("shape is consistent")
    }

    /// Sum of squared residuals after projecting onto the kept components
    /// and mapping back.
    pub fn reconstruction_error(&self, m: &EmbeddingMatrix) -> f64 {
        let projected = self.transform(m);
        m.rows()
            .zip(projected.rows())
            .map(|(row, coords)| {
                (0..row.len())
                    .map(|j| {
                        let back: f64 = coords
                            .iter()
                            .zip(&self.components)
                            .map(|(c, comp)| c * comp[j])
                            .sum();
                        let r = row[j] - self.mean[j] - back;
                        r * r
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

fn check_finite(m: &EmbeddingMatrix) -> Result<(), ReduceError> {
    match m.rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        Some(row) => Err(ReduceError::NonFinite(row)),
        None => Ok(()),
    }
}

/// Exact PCA through the eigen-decomposition of the sample covariance (or
/// of the Gram matrix when there are fewer rows than columns). Each
/// component's largest-magnitude coordinate is made positive.
pub fn fit_pca(m: &EmbeddingMatrix, n_components: usize) -> Result<(PcaFit, Vec<ReduceWarning>), ReduceError> {
    let (n, d) = (m.n_rows(), m.dim());
    if n < 2 || n < n_components {
        return Err(ReduceError::TooFewRows {
            rows: n,
            needed: n_components.max(2),
        });
    }
    if n_components == 0 || n_components > d {
        return Err(ReduceError::InvalidConfig(format!(
            "n_components {n_components} outside 1..={d}"
        )));
    }
    check_finite(m)?;

    let mut mean = vec![0.0; d];
    for row in m.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| m.row(i)[j] - mean[j]);
    let denom = (n - 1) as f64;

    let (eigenvalues, directions): (Vec<f64>, Vec<Vec<f64>>) = if d <= n {
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        let order = descending_order(eig.eigenvalues.as_slice());
        order
            .iter()
            .map(|&i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
            .unzip()
    } else {
        let gram = (&centered * centered.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let order = descending_order(eig.eigenvalues.as_slice());
        order
            .iter()
            .map(|&i| {
                let u = eig.eigenvectors.column(i);
                let v = centered.transpose() * u;
                let norm = v.norm();
                let dir = if norm > 0.0 {
                    v.iter().map(|x| x / norm).collect()
                } else {
                    let mut e = vec![0.0; d];
                    e[i.min(d - 1)] = 1.0;
                    e
                };
                (eig.eigenvalues[i], dir)
            })
            .unzip()
    };

    let top = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let tol = top * (n.max(d) as f64) * f64::EPSILON * 16.0;
    let rank = eigenvalues.iter().filter(|&&l| l > tol && l > 0.0).count();
    let mut warnings = Vec::new();
    let kept = if n_components > rank {
        warnings.push(ReduceWarning::RankDeficient {
            requested: n_components,
            rank,
        });
        rank.max(1)
    } else {
        n_components
    };

    let components = directions
        .into_iter()
        .take(kept)
        .map(|mut c| {
            let pivot = c
                .iter()
                .enumerate()
                .fold(0, |best, (j, v)| if v.abs() > c[best].abs() { j } else { best });
            if c[pivot] < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();
    let explained_variance = eigenvalues.iter().take(kept).map(|l| l.max(0.0)).collect();
    Ok((
        PcaFit {
            mean,
            components,
            explained_variance,
            rank,
        },
        warnings,
    ))
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

pub fn reduce(m: &EmbeddingMatrix, cfg: &ReduceConfig) -> Result<Reduced, ReduceError> {
    cfg.validate(m.dim())?;
    check_finite(m)?;
    let input = match cfg.metric {
        Metric::Cosine => m.row_normalized(),
        Metric::Euclidean => m.clone(),
    };
    match cfg.method {
        ReduceMethod::Pca => {
            let (fit, warnings) = fit_pca(&input, cfg.n_components)?;
            Ok(Reduced {
                matrix: fit.transform(&input),
                warnings,
                explained_variance: Some(fit.explained_variance),
            })
        }
        ReduceMethod::NeighborEmbed => {
            let matrix = neighbor_embed(&input, cfg)?;
            Ok(Reduced {
                matrix,
                warnings: Vec::new(),
                explained_variance: None,
            })
        }
    }
}

/// The `k` nearest other rows of every row, nearest first, ties by index.
pub(crate) fn knn(m: &EmbeddingMatrix, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = m.n_rows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, euclidean(m.row(i), m.row(j))))
                .collect();
            let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
            if k < d.len() {
                d.select_nth_unstable_by(k, cmp);
                d.truncate(k);
            }
            d.sort_by(cmp);
            d
        })
        .collect()
}

/// Fits the `a`, `b` parameters of the low-dimensional similarity curve
/// `1 / (1 + a d^(2b))` to a shifted exponential with the given `min_dist`
/// (spread 1), by a small grid-refined least squares search.
fn curve_params(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (1..300).map(|i| i as f64 * 0.01).collect();
    let target: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist)).exp() })
        .collect();
    let loss = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&target)
            .map(|(&x, &t)| {
                let y = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (y - t) * (y - t)
            })
            .sum()
    };
    let (mut a, mut b) = (1.5, 0.9);
    let mut step = 0.5;
    let mut best = loss(a, b);
    while step > 1e-6 {
        let mut improved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let (na, nb) = (a + da, b + db);
            if na <= 0.0 || nb <= 0.0 {
                continue;
            }
            let l = loss(na, nb);
            if l < best {
                best = l;
                a = na;
                b = nb;
                improved = true;
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (a, b)
}

/// Symmetrized fuzzy k-NN graph as a sorted edge list with both directions.
fn fuzzy_graph(neighbors: &[Vec<(usize, f64)>]) -> Vec<(usize, usize, f64)> {
    use std::collections::BTreeMap;
    let k = neighbors.first().map_or(0, Vec::len).max(1);
    let target = (k as f64).log2();
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, nbrs) in neighbors.iter().enumerate() {
        let rho = nbrs.iter().map(|&(_, d)| d).find(|&d| d > 0.0).unwrap_or(0.0);
        let mean_d = nbrs.iter().map(|&(_, d)| d).sum::<f64>() / nbrs.len().max(1) as f64;
        let (mut lo, mut hi, mut sigma) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..64 {
            let psum: f64 = nbrs
                .iter()
                .map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp())
                .sum();
            if (psum - target).abs() < 1e-5 {
                break;
            }
            if psum > target {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = if hi.is_infinite() { sigma * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        sigma = sigma.max(1e-3 * mean_d).max(f64::MIN_POSITIVE);
        for &(j, d) in nbrs {
            directed.insert((i, j), (-(d - rho).max(0.0) / sigma).exp());
        }
    }
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let key = (i.min(j), i.max(j));
        if sym.contains_key(&key) {
            continue;
        }
        let back = directed.get(&(j, i)).copied().unwrap_or(0.0);
        sym.insert(key, w + back - w * back);
    }
    let mut edges = Vec::with_capacity(sym.len() * 2);
    for ((i, j), w) in sym {
        if w > 0.0 {
            edges.push((i, j, w));
            edges.push((j, i, w));
        }
    }
    edges
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

fn neighbor_embed(m: &EmbeddingMatrix, cfg: &ReduceConfig) -> Result<EmbeddingMatrix, ReduceError> {
    let n = m.n_rows();
    let dim = cfg.n_components;
    if n < 3 || n <= dim {
        return Err(ReduceError::TooFewRows {
            rows: n,
            needed: dim.max(2) + 1,
        });
    }
    let k = cfg.n_neighbors.min(n - 1);
    let neighbors = knn(m, k);
    let edges = fuzzy_graph(&neighbors);

    // PCA initialization rescaled into a [0, 10] box, plus seeded jitter.
    let (fit, _) = fit_pca(m, dim.min(m.dim()))?;
    let init = fit.transform(m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut emb = vec![0.0; n * dim];
    for c in 0..dim {
        let col: Vec<f64> = if c < init.dim() {
            (0..n).map(|i| init.row(i)[c]).collect()
        } else {
            vec![0.0; n]
        };
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        for i in 0..n {
            emb[i * dim + c] = 10.0 * (col[i] - lo) / span + rng.random_range(-1e-4..1e-4);
        }
    }

    let (a, b) = curve_params(cfg.min_dist);
    let n_epochs = cfg.n_epochs;
    let negative_rate = 5.0;
    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let epochs_per_sample: Vec<f64> = edges
        .iter()
        .map(|e| if e.2 >= max_w / n_epochs as f64 { max_w / e.2 } else { -1.0 })
        .collect();
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / negative_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut cur = vec![0.0; dim];
    for epoch in 0..n_epochs {
        let alpha = 1.0 - epoch as f64 / n_epochs as f64;
        let e = epoch as f64;
        for (idx, &(head, tail, _)) in edges.iter().enumerate() {
            if epochs_per_sample[idx] <= 0.0 || next_sample[idx] > e {
                continue;
            }
            let dist_sq: f64 = (0..dim)
                .map(|c| {
                    let d = emb[head * dim + c] - emb[tail * dim + c];
                    d * d
                })
                .sum();
            let coeff = if dist_sq > 0.0 {
                -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
            } else {
                0.0
            };
            for c in 0..dim {
                let g = clip(coeff * (emb[head * dim + c] - emb[tail * dim + c])) * alpha;
                emb[head * dim + c] += g;
                emb[tail * dim + c] -= g;
            }
            next_sample[idx] += epochs_per_sample[idx];

            let n_neg = ((e - next_negative[idx]) / epochs_per_negative[idx]).max(0.0) as usize;
            cur.copy_from_slice(&emb[head * dim..(head + 1) * dim]);
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                if other == head {
                    continue;
                }
                let o = &emb[other * dim..(other + 1) * dim];
                let dist_sq: f64 = cur.iter().zip(o).map(|(x, y)| (x - y) * (x - y)).sum();
                let coeff = if dist_sq > 0.0 {
                    2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0))
                } else {
                    0.0
                };
                for c in 0..dim {
                    let g = if coeff > 0.0 { clip(coeff * (cur[c] - o[c])) } else { 4.0 };
                    cur[c] += g * alpha;
                }
            }
            emb[head * dim..(head + 1) * dim].copy_from_slice(&cur);
            next_negative[idx] += n_neg as f64 * epochs_per_negative[idx];
        }
    }
    Ok(EmbeddingMatrix::new(dim, emb, m.doc_ids().to_vec()).expect("shape is consistent"))
}

/// Neighborhood trustworthiness of `reduced` with respect to `original`
/// under Euclidean distance: 1 minus the normalized rank penalty of points
/// that enter a reduced-space k-neighborhood from outside the original one.
pub fn trustworthiness(original: &EmbeddingMatrix, reduced: &EmbeddingMatrix, k: usize) -> Result<f64, ReduceError> {
    let n = original.n_rows();
    if reduced.n_rows() != n {
        return Err(ReduceError::NotAligned(n, reduced.n_rows()));
    }
    if k == 0 || k >= n {
        return Err(ReduceError::KTooLarge { k, n });
    }
    let reduced_nbrs = knn(reduced, k);
    let penalty: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, euclidean(original.row(i), original.row(j))))
                .collect();
            order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let mut rank = vec![0usize; n];
            for (r, &(j, _)) in order.iter().enumerate() {
                rank[j] = r + 1;
            }
            reduced_nbrs[i]
                .iter()
                .map(|&(j, _)| rank[j].saturating_sub(k) as f64)
                .sum::<f64>()
        })
        .sum();
    if penalty == 0.0 {
        return Ok(1.0);
    }
    let (nf, kf) = (n as f64, k as f64);
    let norm = nf * kf * (2.0 * nf - 3.0 * kf - 1.0);
    if norm <= 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - 2.0 / norm * penalty).clamp(0.0, 1.0))
}
