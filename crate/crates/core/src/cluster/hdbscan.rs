use std::collections::BTreeMap;

use crate::embedding::{euclidean, EmbeddingMatrix};

use super::{core_distances, relabel_by_size, validate_points, Algorithm, ClusterAssignment, ClusterError, ClusterParams, OUTLIER};

/// One cluster of the condensed hierarchy. Density levels are λ = 1/distance.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedCluster {
    pub parent: Option<usize>,
    pub lambda_birth: f64,
    pub lambda_death: f64,
    /// Number of points in the cluster when it is born.
    pub size: usize,
    pub children: Vec<usize>,
    /// Points leaving this cluster as noise, with the level they leave at.
    pub departures: Vec<(usize, f64)>,
    pub stability: f64,
}

/// Cluster 0 is the root and holds every point.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedTree {
    pub clusters: Vec<CondensedCluster>,
    pub n_points: usize,
}

impl CondensedTree {
    /// All points of a cluster, including those of its descendants.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![cluster];
        while let Some(c) = stack.pop() {
            out.extend(self.clusters[c].departures.iter().map(|&(p, _)| p));
            stack.extend(&self.clusters[c].children);
        }
        out.sort_unstable();
        out
    }

    /// Clusters picked by excess-of-mass: bottom-up, a cluster replaces its
    /// selected descendants when its stability is at least their sum. The
    /// root is never eligible.
    pub fn select_eom(&self) -> Vec<usize> {
        let k = self.clusters.len();
        let mut selected = vec![false; k];
        let mut subtree = vec![0.0; k];
        for c in (1..k).rev() {
            let node = &self.clusters[c];
            if node.children.is_empty() {
                selected[c] = true;
                subtree[c] = node.stability;
                continue;
            }
            let below: f64 = node.children.iter().map(|&ch| subtree[ch]).sum();
            if node.stability >= below {
                selected[c] = true;
                subtree[c] = node.stability;
                let mut stack = node.children.clone();
                while let Some(d) = stack.pop() {
                    selected[d] = false;
                    stack.extend(&self.clusters[d].children);
                }
            } else {
                subtree[c] = below;
            }
        }
        (1..k).filter(|&c| selected[c]).collect()
    }

    /// Every non-root cluster without child clusters.
    pub fn select_leaves(&self) -> Vec<usize> {
        (1..self.clusters.len())
            .filter(|&c| self.clusters[c].children.is_empty())
            .collect()
    }

    /// Labels points by the selected cluster containing them (in the order
    /// given), −1 elsewhere.
    pub fn label(&self, selected: &[usize]) -> Vec<i32> {
        let mut owner = vec![0usize; self.n_points];
        for (c, cl) in self.clusters.iter().enumerate() {
            for &(p, _) in &cl.departures {
                owner[p] = c;
            }
        }
        let mut label_of = vec![OUTLIER; self.clusters.len()];
        for (l, &c) in selected.iter().enumerate() {
            label_of[c] = l as i32;
        }
        owner
            .into_iter()
            .map(|mut c| loop {
                if label_of[c] != OUTLIER {
                    break label_of[c];
                }
                match self.clusters[c].parent {
                    Some(p) => c = p,
                    None => break OUTLIER,
                }
            })
            .collect()
    }
}

fn lambda(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(f64::MAX)
    } else {
        f64::MAX
    }
}

/// Prim's algorithm over the implicit complete mutual-reachability graph.
/// Returns edges sorted by weight, ties by endpoint indices.
fn mutual_reachability_mst(points: &EmbeddingMatrix, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.n_rows();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let mr = euclidean(points.row(current), points.row(j))
                .max(core[current])
                .max(core[j]);
            if mr < best[j] {
                best[j] = mr;
                from[j] = current;
            }
            if best[j] < next_d || next == usize::MAX {
                next_d = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next].min(next), from[next].max(next), next_d));
        current = next;
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    edges
}

struct MergeNode {
    weight: f64,
    children: Vec<usize>,
    size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Single-linkage hierarchy where all edges of equal weight merge at once,
/// so a node may have more than two children. Node ids below `n` are
/// points; node `n + i` is `merges[i]`.
fn single_linkage(n: usize, edges: &[(usize, usize, f64)]) -> Vec<MergeNode> {
    let mut uf = UnionFind::new(n);
    let mut top: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut start = 0;
    while start < edges.len() {
        let w = edges[start].2;
        let end = start + edges[start..].iter().take_while(|e| e.2 == w).count();
        let group = &edges[start..end];

        let mut old_roots: Vec<usize> = group.iter().flat_map(|&(a, b, _)| [uf.find(a), uf.find(b)]).collect();
        old_roots.sort_unstable();
        old_roots.dedup();
        let old_tops: Vec<(usize, usize, usize)> = old_roots.iter().map(|&r| (r, top[r], size[r])).collect();
        for &(a, b, _) in group {
            uf.union(a, b);
        }
        let mut by_new_root: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (r, t, s) in old_tops {
            by_new_root.entry(uf.find(r)).or_default().push((t, s));
        }
        for (root, parts) in by_new_root {
            let node_size = parts.iter().map(|p| p.1).sum();
            merges.push(MergeNode {
                weight: w,
                children: parts.into_iter().map(|p| p.0).collect(),
                size: node_size,
            });
            top[root] = n + merges.len() - 1;
            size[root] = node_size;
        }
        start = end;
    }
    merges
}

fn leaves_under(node: usize, n: usize, merges: &[MergeNode], out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            stack.extend(&merges[x - n].children);
        }
    }
}

fn condense_hierarchy(n: usize, merges: &[MergeNode], min_cluster_size: usize) -> CondensedTree {
    let node_size = |x: usize| if x < n { 1 } else { merges[x - n].size };
    let root_node = if merges.is_empty() { 0 } else { n + merges.len() - 1 };
    let mut clusters = vec![CondensedCluster {
        parent: None,
        lambda_birth: 0.0,
        lambda_death: 0.0,
        size: n,
        children: Vec::new(),
        departures: Vec::new(),
        stability: 0.0,
    }];
    let mut stack = vec![(0usize, root_node)];
    while let Some((c, mut node)) = stack.pop() {
        loop {
            if node < n {
                clusters[c].departures.push((node, f64::MAX));
                clusters[c].lambda_death = f64::MAX;
                break;
            }
            let merge = &merges[node - n];
            let level = lambda(merge.weight);
            let (big, small): (Vec<usize>, Vec<usize>) =
                merge.children.iter().partition(|&&ch| node_size(ch) >= min_cluster_size);
            let mut fallen = Vec::new();
            for ch in small {
                leaves_under(ch, n, merges, &mut fallen);
            }
            fallen.sort_unstable();
            clusters[c].departures.extend(fallen.into_iter().map(|p| (p, level)));
            match big.len() {
                0 => {
                    clusters[c].lambda_death = level;
                    break;
                }
                1 => node = big[0],
                _ => {
                    clusters[c].lambda_death = level;
                    for ch in big {
                        let id = clusters.len();
                        clusters.push(CondensedCluster {
                            parent: Some(c),
                            lambda_birth: level,
                            lambda_death: level,
                            size: node_size(ch),
                            children: Vec::new(),
                            departures: Vec::new(),
                            stability: 0.0,
                        });
                        clusters[c].children.push(id);
                        stack.push((id, ch));
                    }
                    break;
                }
            }
        }
    }
    for c in 0..clusters.len() {
        let birth = clusters[c].lambda_birth;
        let death = clusters[c].lambda_death;
        let from_points: f64 = clusters[c].departures.iter().map(|&(_, l)| l - birth).sum();
        let from_children: f64 = clusters[c]
            .children
            .iter()
            .map(|&ch| clusters[ch].size as f64 * (death - birth))
            .sum();
        clusters[c].stability = from_points + from_children;
    }
    CondensedTree { clusters, n_points: n }
}

/// Builds the condensed cluster tree of the mutual-reachability hierarchy.
pub fn condense(points: &EmbeddingMatrix, params: &ClusterParams) -> Result<CondensedTree, ClusterError> {
    validate_points(points, params)?;
    let core = core_distances(points, params.min_samples());
    let mst = mutual_reachability_mst(points, &core);
    let merges = single_linkage(points.n_rows(), &mst);
    Ok(condense_hierarchy(points.n_rows(), &merges, params.min_cluster_size))
}

pub fn hdbscan(points: &EmbeddingMatrix, params: &ClusterParams) -> Result<ClusterAssignment, ClusterError> {
    let tree = condense(points, params)?;
    let selected = match params.algorithm {
        Algorithm::HdbscanEom => tree.select_eom(),
        Algorithm::HdbscanLeaf => tree.select_leaves(),
        Algorithm::OpticsXi => {
            return Err(ClusterError::InvalidParams("hdbscan called with optics_xi".into()))
        }
    };
    let labels = tree.label(&selected);
    let raw = ClusterAssignment {
        labels,
        n_clusters: selected.len(),
        params: params.clone(),
        stability: Some(selected.iter().map(|&c| tree.clusters[c].stability).collect()),
        ordering: None,
        reachability: None,
    };
    Ok(relabel_by_size(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_points(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn two_blobs_on_a_line() {
        // core distances are 0.1 everywhere; blobs split at mr = 9.8.
        let pts = line(&[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]);
        for alg in [Algorithm::HdbscanEom, Algorithm::HdbscanLeaf] {
            let p = ClusterParams::new(alg, 2).with_min_samples(2);
            let a = hdbscan(&pts, &p).unwrap();
            assert_eq!(a.labels, vec![0, 0, 0, 1, 1, 1], "{alg}");
            assert_eq!(a.n_clusters, 2);
        }
        let tree = condense(&pts, &ClusterParams::new(Algorithm::HdbscanEom, 2).with_min_samples(2)).unwrap();
        assert_eq!(tree.clusters.len(), 3);
        let blob = &tree.clusters[1];
        assert!((blob.lambda_birth - 1.0 / 9.8).abs() < 1e-12);
        // three points leave at λ = 1/0.1
        let expected = 3.0 * (1.0 / 0.1 - 1.0 / 9.8);
        assert!((blob.stability - expected).abs() < 1e-9);
    }

    #[test]
    fn too_few_points_for_any_cluster() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let a = hdbscan(&pts, &ClusterParams::new(Algorithm::HdbscanEom, 6)).unwrap();
        assert_eq!(a.labels, vec![-1; 5]);
        assert_eq!(a.n_clusters, 0);
    }

    #[test]
    fn single_point_is_noise() {
        let a = hdbscan(&line(&[1.0]), &ClusterParams::new(Algorithm::HdbscanLeaf, 2)).unwrap();
        assert_eq!(a.labels, vec![-1]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let empty = EmbeddingMatrix::empty();
        assert_eq!(
            hdbscan(&empty, &ClusterParams::new(Algorithm::HdbscanEom, 2)).unwrap_err(),
            ClusterError::EmptyInput
        );
    }

    #[test]
    fn children_partition_parent_membership() {
        let xs: Vec<f64> = (0..10)
            .map(|i| i as f64 * 0.1)
            .chain((0..10).map(|i| 5.0 + i as f64 * 0.1))
            .chain((0..10).map(|i| 5.6 + i as f64 * 0.1))
            .collect();
        let tree = condense(&line(&xs), &ClusterParams::new(Algorithm::HdbscanEom, 4)).unwrap();
        assert_eq!(tree.members(0), (0..30).collect::<Vec<_>>());
        for (c, cl) in tree.clusters.iter().enumerate() {
            assert!(cl.lambda_death >= cl.lambda_birth && cl.lambda_birth >= 0.0);
            let mut parts: Vec<usize> = cl.departures.iter().map(|d| d.0).collect();
            for &ch in &cl.children {
                parts.extend(tree.members(ch));
                assert_eq!(tree.clusters[ch].parent, Some(c));
            }
            parts.sort_unstable();
            assert_eq!(parts, tree.members(c));
        }
    }

    #[test]
    fn tied_edges_merge_at_once() {
        // equilateral-ish: four points at the corners of a unit square
        let pts = EmbeddingMatrix::from_points(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let core = core_distances(&pts, 1);
        let mst = mutual_reachability_mst(&pts, &core);
        let merges = single_linkage(4, &mst);
        assert_eq!(merges.len(), 1);
        assert_eq!(merges[0].children.len(), 4);
    }
}
