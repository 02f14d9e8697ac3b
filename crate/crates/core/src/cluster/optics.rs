use crate::embedding::{euclidean, EmbeddingMatrix};

use super::{core_distances, relabel_by_size, validate_points, Algorithm, ClusterAssignment, ClusterError, ClusterParams, OUTLIER};

/// The OPTICS visit order. `reachability[p]`, `core[p]` and `predecessor[p]`
/// are indexed by point; the reachability plot is `reachability` read in
/// `ordering` order.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticsOrdering {
    pub ordering: Vec<usize>,
    pub reachability: Vec<f64>,
    pub core: Vec<f64>,
    pub predecessor: Vec<Option<usize>>,
}

impl OpticsOrdering {
    pub fn reachability_plot(&self) -> Vec<f64> {
        self.ordering.iter().map(|&p| self.reachability[p]).collect()
    }
}

/// Ordering with unbounded radius. The next point is the unprocessed one
/// with the smallest reachability, ties to the smaller index; the first
/// point of each expansion has infinite reachability.
pub fn optics_ordering(points: &EmbeddingMatrix, min_samples: usize) -> OpticsOrdering {
    let n = points.n_rows();
    let core = core_distances(points, min_samples);
    let mut reachability = vec![f64::INFINITY; n];
    let mut predecessor = vec![None; n];
    let mut processed = vec![false; n];
    let mut ordering = Vec::with_capacity(n);
    for _ in 0..n {
        let point = (0..n)
            .filter(|&i| !processed[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if reachability[b] <= reachability[i] => Some(b),
                _ => Some(i),
            })
            .expect("an unprocessed point remains");
        processed[point] = true;
        ordering.push(point);
        if !core[point].is_finite() {
            continue;
        }
        for q in 0..n {
            if processed[q] {
                continue;
            }
            let r = euclidean(points.row(point), points.row(q)).max(core[point]);
            if r < reachability[q] {
                reachability[q] = r;
                predecessor[q] = Some(point);
            }
        }
    }
    OpticsOrdering {
        ordering,
        reachability,
        core,
        predecessor,
    }
}

struct SteepDownArea {
    start: usize,
    end: usize,
    mib: f64,
}

/// Grows a steep region from `start` until more than `min_samples`
/// consecutive non-steep points or a point going the other way.
fn extend_region(steep: &[bool], xward: &[bool], start: usize, min_samples: usize) -> usize {
    let mut non_xward = 0;
    let mut end = start;
    for index in start..steep.len() {
        if steep[index] {
            non_xward = 0;
            end = index;
        } else if !xward[index] {
            non_xward += 1;
            if non_xward > min_samples {
                break;
            }
        } else {
            return end;
        }
    }
    end
}

fn update_filter_sdas(sdas: Vec<SteepDownArea>, mib: f64, xi_complement: f64, plot: &[f64]) -> Vec<SteepDownArea> {
    if mib.is_infinite() {
        return Vec::new();
    }
    sdas.into_iter()
        .filter(|s| mib <= plot[s.start] * xi_complement)
        .map(|mut s| {
            s.mib = s.mib.max(mib);
            s
        })
        .collect()
}

/// Shrinks `[s, e]` from the right until the end point's predecessor lies
/// inside the range (or the start dominates it).
fn correct_predecessor(
    plot: &[f64],
    predecessor_plot: &[Option<usize>],
    ordering: &[usize],
    s: usize,
    mut e: usize,
) -> Option<(usize, usize)> {
    while s < e {
        if plot[s] > plot[e] {
            return Some((s, e));
        }
        let p_e = predecessor_plot[e];
        if ordering[s..e].iter().any(|&o| Some(o) == p_e) {
            return Some((s, e));
        }
        e -= 1;
    }
    None
}

/// Xi-steep cluster extraction over a reachability plot. Returns inclusive
/// `(start, end)` ranges of plot positions, nested clusters before the
/// clusters that contain them.
pub fn xi_clusters(ord: &OpticsOrdering, xi: f64, min_samples: usize, min_cluster_size: usize) -> Vec<(usize, usize)> {
    let mut plot = ord.reachability_plot();
    plot.push(f64::INFINITY);
    let predecessor_plot: Vec<Option<usize>> = ord.ordering.iter().map(|&p| ord.predecessor[p]).collect();
    let n = plot.len() - 1;
    let xi_complement = 1.0 - xi;

    let ratio: Vec<f64> = (0..n).map(|i| plot[i] / plot[i + 1]).collect();
    // NaN ratios (inf/inf) are neither steep nor up/down.
    let steep_up: Vec<bool> = ratio.iter().map(|&r| r <= xi_complement).collect();
    let steep_down: Vec<bool> = ratio.iter().map(|&r| r >= 1.0 / xi_complement).collect();
    let down: Vec<bool> = ratio.iter().map(|&r| r > 1.0).collect();
    let up: Vec<bool> = ratio.iter().map(|&r| r < 1.0).collect();

    let mut sdas: Vec<SteepDownArea> = Vec::new();
    let mut clusters = Vec::new();
    let mut index = 0;
    let mut mib = 0.0f64;

    for steep_index in (0..n).filter(|&i| steep_up[i] || steep_down[i]) {
        if steep_index < index {
            continue;
        }
        mib = plot[index..=steep_index].iter().copied().fold(mib, f64::max);

        if steep_down[steep_index] {
            sdas = update_filter_sdas(sdas, mib, xi_complement, &plot);
            let d_end = extend_region(&steep_down, &up, steep_index, min_samples);
            sdas.push(SteepDownArea {
                start: steep_index,
                end: d_end,
                mib: 0.0,
            });
            index = d_end + 1;
            mib = plot[index];
        } else {
            sdas = update_filter_sdas(sdas, mib, xi_complement, &plot);
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &down, u_start, min_samples);
            index = u_end + 1;
            mib = plot[index];

            let mut found = Vec::new();
            for d in &sdas {
                let mut c_start = d.start;
                let mut c_end = u_end;
                if plot[c_end + 1] * xi_complement < d.mib {
                    continue;
                }
                let d_max = plot[d.start];
                if d_max * xi_complement >= plot[c_end + 1] {
                    while plot[c_start + 1] > plot[c_end + 1] && c_start < d.end {
                        c_start += 1;
                    }
                } else if plot[c_end + 1] * xi_complement >= d_max {
                    while plot[c_end - 1] > d_max && c_end > u_start {
                        c_end -= 1;
                    }
                }
                let Some((s, e)) = correct_predecessor(&plot, &predecessor_plot, &ord.ordering, c_start, c_end) else {
                    continue;
                };
                if e - s + 1 < min_cluster_size || s > d.end || e < u_start {
                    continue;
                }
                found.push((s, e));
            }
            found.reverse();
            clusters.extend(found);
        }
    }
    clusters
}

/// Labels the innermost clusters first; a cluster overlapping an already
/// labeled one is skipped.
fn xi_labels(ordering: &[usize], clusters: &[(usize, usize)]) -> (Vec<i32>, usize) {
    let mut by_position = vec![OUTLIER; ordering.len()];
    let mut next = 0;
    for &(s, e) in clusters {
        if by_position[s..=e].iter().all(|&l| l == OUTLIER) {
            by_position[s..=e].iter_mut().for_each(|l| *l = next);
            next += 1;
        }
    }
    let mut labels = vec![OUTLIER; ordering.len()];
    for (pos, &p) in ordering.iter().enumerate() {
        labels[p] = by_position[pos];
    }
    (labels, next as usize)
}

pub fn optics(points: &EmbeddingMatrix, params: &ClusterParams) -> Result<ClusterAssignment, ClusterError> {
    validate_points(points, params)?;
    if params.algorithm != Algorithm::OpticsXi {
        return Err(ClusterError::InvalidParams(format!("optics called with {}", params.algorithm)));
    }
    let min_samples = params.min_samples();
    let ord = optics_ordering(points, min_samples);
    let clusters = xi_clusters(&ord, params.xi, min_samples, params.min_cluster_size);
    let (labels, n_clusters) = xi_labels(&ord.ordering, &clusters);
    let reachability = ord.reachability_plot();
    let raw = ClusterAssignment {
        labels,
        n_clusters,
        params: params.clone(),
        stability: None,
        ordering: Some(ord.ordering),
        reachability: Some(reachability),
    };
    Ok(relabel_by_size(&raw))
}
