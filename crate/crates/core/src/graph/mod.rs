//! Graph storage, dataset splits, and the single-node injection overlay.

pub mod io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SniaError};
use crate::tensor::CsrMatrix;

/// Immutable attributed graph: symmetric unweighted adjacency in CSR form,
/// binary bag-of-words features stored as per-node sorted index lists, and
/// one label per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    num_features: usize,
    num_labels: usize,
    adj_indptr: Vec<usize>,
    adj_indices: Vec<usize>,
    feat_indptr: Vec<usize>,
    feat_indices: Vec<usize>,
    labels: Vec<usize>,
}

impl Graph {
    /// Build a validated graph from edge pairs and per-node feature lists.
    ///
    /// Edges may be listed once per undirected pair and in any order; they
    /// are symmetrized and deduplicated. Self-loops are dropped with a
    /// warning (the self-term of the convolution is added at compute time).
    pub fn build(
        num_nodes: usize,
        num_features: usize,
        num_labels: usize,
        edges: &[(usize, usize)],
        features: &[(usize, usize)],
        labels: Vec<usize>,
    ) -> Result<Self> {
        if labels.len() != num_nodes {
            return Err(SniaError::Validation(format!(
                "expected {} labels, got {}",
                num_nodes,
                labels.len()
            )));
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= num_labels {
                return Err(SniaError::Validation(format!(
                    "label {l} of node {i} out of range [0, {num_labels})"
                )));
            }
        }
        let mut self_loops = 0usize;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(SniaError::Validation(format!(
                    "edge ({u}, {v}) out of range [0, {num_nodes})"
                )));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        if self_loops > 0 {
            log::warn!("dropped {self_loops} self-loop(s) from the edge list");
        }
        let mut adj_indptr = Vec::with_capacity(num_nodes + 1);
        let mut adj_indices = Vec::new();
        adj_indptr.push(0);
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
            adj_indices.extend_from_slice(row);
            adj_indptr.push(adj_indices.len());
        }

        let mut feats: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(node, feat) in features {
            if node >= num_nodes {
                return Err(SniaError::Validation(format!(
                    "feature entry names node {node}, out of range [0, {num_nodes})"
                )));
            }
            if feat >= num_features {
                return Err(SniaError::Validation(format!(
                    "feature index {feat} of node {node} out of range [0, {num_features})"
                )));
            }
            feats[node].push(feat);
        }
        let mut feat_indptr = Vec::with_capacity(num_nodes + 1);
        let mut feat_indices = Vec::new();
        feat_indptr.push(0);
        for row in feats.iter_mut() {
            row.sort_unstable();
            row.dedup();
            feat_indices.extend_from_slice(row);
            feat_indptr.push(feat_indices.len());
        }

        Ok(Graph {
            num_nodes,
            num_features,
            num_labels,
            adj_indptr,
            adj_indices,
            feat_indptr,
            feat_indices,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adj_indices.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj_indices[self.adj_indptr[u]..self.adj_indptr[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj_indptr[u + 1] - self.adj_indptr[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Sorted active feature indices of node `u`.
    pub fn features(&self, u: usize) -> &[usize] {
        &self.feat_indices[self.feat_indptr[u]..self.feat_indptr[u + 1]]
    }

    pub fn label(&self, u: usize) -> usize {
        self.labels[u]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Induced subgraph on the largest connected component, node ids
    /// re-indexed densely while preserving relative order. Ties between
    /// equal-sized components go to the one containing the smallest
    /// original node id. Also returns the new-to-old id mapping.
    pub fn largest_connected_component(&self) -> (Graph, Vec<usize>) {
        let n = self.num_nodes;
        let mut comp = vec![usize::MAX; n];
        let mut best: (usize, usize) = (0, usize::MAX); // (size, comp id)
        let mut n_comps = 0usize;
        let mut queue = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = n_comps;
            n_comps += 1;
            comp[start] = id;
            queue.clear();
            queue.push(start);
            let mut size = 0usize;
            while let Some(u) = queue.pop() {
                size += 1;
                for &v in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        queue.push(v);
                    }
                }
            }
            // strict > keeps the earliest (smallest-min-id) component on ties
            if size > best.0 {
                best = (size, id);
            }
        }
        let keep: Vec<usize> = (0..n).filter(|&u| comp[u] == best.1).collect();
        let mut old_to_new = vec![usize::MAX; n];
        for (new, &old) in keep.iter().enumerate() {
            old_to_new[old] = new;
        }
        let mut edges = Vec::new();
        for &u in &keep {
            for &v in self.neighbors(u) {
                if u < v {
                    edges.push((old_to_new[u], old_to_new[v]));
                }
            }
        }
        let mut features = Vec::new();
        for &u in &keep {
            for &f in self.features(u) {
                features.push((old_to_new[u], f));
            }
        }
        let labels = keep.iter().map(|&u| self.labels[u]).collect();
        let g = Graph::build(keep.len(), self.num_features, self.num_labels, &edges, &features, labels)
            .expect("induced subgraph of a valid graph is valid");
        (g, keep)
    }

    /// Largest number of active features over all nodes: the attack budget
    /// used when none is configured explicitly.
    pub fn max_feature_budget(&self) -> usize {
        (0..self.num_nodes)
            .map(|u| self.feat_indptr[u + 1] - self.feat_indptr[u])
            .max()
            .unwrap_or(0)
    }

    /// Symmetrically normalized adjacency with self-loops,
    /// `D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalized_adjacency(&self) -> CsrMatrix {
        let n = self.num_nodes;
        let inv_sqrt: Vec<f64> = (0..n).map(|u| 1.0 / ((self.degree(u) + 1) as f64).sqrt()).collect();
        let mut triples = Vec::with_capacity(self.adj_indices.len() + n);
        for u in 0..n {
            let mut placed_self = false;
            for &v in self.neighbors(u) {
                if !placed_self && v > u {
                    triples.push((u, u, inv_sqrt[u] * inv_sqrt[u]));
                    placed_self = true;
                }
                triples.push((u, v, inv_sqrt[u] * inv_sqrt[v]));
            }
            if !placed_self {
                triples.push((u, u, inv_sqrt[u] * inv_sqrt[u]));
            }
        }
        CsrMatrix::from_triples(n, n, &triples)
    }

    /// Binary feature matrix as sparse CSR (N x F, entries of 1.0).
    pub fn feature_csr(&self) -> CsrMatrix {
        let values = vec![1.0; self.feat_indices.len()];
        CsrMatrix::new(
            self.num_nodes,
            self.num_features,
            self.feat_indptr.clone(),
            self.feat_indices.clone(),
            values,
        )
    }
}

/// Train/validation/test partition plus the sampled attack targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub target_ids: Vec<usize>,
    pub seed: u64,
}

/// Number of attack targets sampled from the test set.
pub const TARGET_SAMPLE_SIZE: usize = 1000;

/// 10% / 10% / 80% node split with `min(1000, |test|)` targets drawn
/// uniformly from the test set. Deterministic in `seed`.
pub fn make_splits(g: &Graph, seed: u64) -> Result<SplitSpec> {
    let n = g.num_nodes();
    if n < 10 {
        return Err(SniaError::Validation(format!("need at least 10 nodes to split, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let k = n / 10;
    let mut train_ids: Vec<usize> = perm[..k].to_vec();
    let mut val_ids: Vec<usize> = perm[k..2 * k].to_vec();
    let mut test_ids: Vec<usize> = perm[2 * k..].to_vec();
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    test_ids.sort_unstable();
    // targets stay in sampled order: any prefix of the list is itself a
    // uniform subsample (node ids correlate with degree in citation dumps,
    // so a sorted prefix would be biased)
    let mut pool = test_ids.clone();
    pool.shuffle(&mut rng);
    pool.truncate(TARGET_SAMPLE_SIZE.min(test_ids.len()));
    Ok(SplitSpec {
        train_ids,
        val_ids,
        test_ids,
        target_ids: pool,
        seed,
    })
}

impl SplitSpec {
    /// Check the partition and target-subset invariants against a graph.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let n = g.num_nodes();
        let mut seen = vec![0u8; n];
        for ids in [&self.train_ids, &self.val_ids, &self.test_ids] {
            for &u in ids {
                if u >= n {
                    return Err(SniaError::Validation(format!("split id {u} out of range")));
                }
                seen[u] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(SniaError::Validation("splits are not a partition of the nodes".into()));
        }
        for &t in &self.target_ids {
            if self.test_ids.binary_search(&t).is_err() {
                return Err(SniaError::Validation(format!("target {t} is not a test node")));
            }
        }
        if self.target_ids.len() != TARGET_SAMPLE_SIZE.min(self.test_ids.len()) {
            return Err(SniaError::Validation(format!(
                "expected {} targets, got {}",
                TARGET_SAMPLE_SIZE.min(self.test_ids.len()),
                self.target_ids.len()
            )));
        }
        Ok(())
    }
}

/// The adversarial graph: the base graph plus one injected node wired to a
/// single target, carrying a growing set of active features.
///
/// The injected node's id is `base.num_nodes()`. Its degree is exactly one
/// by construction; only the feature set evolves.
#[derive(Clone, Debug)]
pub struct InjectedGraph<'g> {
    base: &'g Graph,
    target: usize,
    features: Vec<usize>,
}

impl<'g> InjectedGraph<'g> {
    pub fn new(base: &'g Graph, target: usize) -> Self {
        debug_assert!(target < base.num_nodes());
        InjectedGraph {
            base,
            target,
            features: Vec::new(),
        }
    }

    pub fn base(&self) -> &'g Graph {
        self.base
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn injected_node(&self) -> usize {
        self.base.num_nodes()
    }

    /// Sorted active features of the injected node.
    pub fn injected_features(&self) -> &[usize] {
        &self.features
    }

    pub fn num_injected_features(&self) -> usize {
        self.features.len()
    }

    pub fn has_feature(&self, f: usize) -> bool {
        self.features.binary_search(&f).is_ok()
    }

    /// Activate a feature on the injected node. Inserting an already-active
    /// feature is a no-op. Returns whether the set changed.
    pub fn add_feature(&mut self, f: usize) -> bool {
        debug_assert!(f < self.base.num_features());
        match self.features.binary_search(&f) {
            Ok(_) => false,
            Err(pos) => {
                self.features.insert(pos, f);
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> Graph {
        // 0 - 1 - 2
        Graph::build(3, 4, 2, &[(0, 1), (1, 2)], &[(0, 0), (1, 1), (1, 2), (2, 3)], vec![0, 1, 0]).unwrap()
    }

    #[test]
    fn path_graph_degree_sequence() {
        let g = path_graph();
        assert_eq!((0..3).map(|u| g.degree(u)).collect::<Vec<_>>(), vec![1, 2, 1]);
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn duplicate_and_reversed_edges_are_deduplicated() {
        let g = Graph::build(3, 1, 1, &[(0, 1), (1, 0), (0, 1), (1, 2)], &[], vec![0, 0, 0]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn self_loops_are_dropped() {
        let g = Graph::build(2, 1, 1, &[(0, 0), (0, 1)], &[], vec![0, 0]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert!(!g.has_edge(0, 0));
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let err = Graph::build(2, 1, 2, &[(0, 1)], &[], vec![0, 2]).unwrap_err();
        assert!(matches!(err, SniaError::Validation(_)));
    }

    #[test]
    fn out_of_range_feature_is_rejected() {
        let err = Graph::build(2, 3, 1, &[(0, 1)], &[(0, 3)], vec![0, 0]).unwrap_err();
        assert!(matches!(err, SniaError::Validation(_)));
    }

    #[test]
    fn lcc_of_connected_graph_is_identity() {
        let g = path_graph();
        let (lcc, map) = g.largest_connected_component();
        assert_eq!(lcc, g);
        assert_eq!(map, vec![0, 1, 2]);
    }

    #[test]
    fn lcc_picks_larger_component() {
        // component {0..4} (size 5) and component {5..7} (size 3)
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (5, 6), (6, 7)];
        let g = Graph::build(8, 1, 1, &edges, &[(5, 0)], vec![0; 8]).unwrap();
        let (lcc, map) = g.largest_connected_component();
        assert_eq!(lcc.num_nodes(), 5);
        assert_eq!(map, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn lcc_tie_breaks_to_smallest_min_node_id() {
        // two components of size 2: {0, 3} and {1, 2}
        let g = Graph::build(4, 1, 1, &[(0, 3), (1, 2)], &[], vec![0; 4]).unwrap();
        let (_, map) = g.largest_connected_component();
        assert_eq!(map, vec![0, 3]);
    }

    #[test]
    fn max_feature_budget_zero_for_empty_features() {
        let g = Graph::build(3, 5, 1, &[(0, 1)], &[], vec![0; 3]).unwrap();
        assert_eq!(g.max_feature_budget(), 0);
        let g2 = path_graph();
        assert_eq!(g2.max_feature_budget(), 2);
    }

    #[test]
    fn splits_have_spec_sizes_and_are_deterministic() {
        let edges: Vec<(usize, usize)> = (0..19).map(|i| (i, i + 1)).collect();
        let g = Graph::build(20, 1, 1, &edges, &[], vec![0; 20]).unwrap();
        let s1 = make_splits(&g, 7).unwrap();
        let s2 = make_splits(&g, 7).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.train_ids.len(), 2);
        assert_eq!(s1.val_ids.len(), 2);
        assert_eq!(s1.test_ids.len(), 16);
        // cap rule: all 16 test nodes become targets
        assert_eq!(s1.target_ids.len(), 16);
        s1.validate(&g).unwrap();
    }

    #[test]
    fn splits_reject_tiny_graphs() {
        let g = Graph::build(5, 1, 1, &[(0, 1)], &[], vec![0; 5]).unwrap();
        assert!(make_splits(&g, 0).is_err());
    }

    #[test]
    fn injected_node_keeps_degree_one_and_sorted_features() {
        let g = path_graph();
        let mut ig = InjectedGraph::new(&g, 1);
        assert_eq!(ig.injected_node(), 3);
        assert!(ig.add_feature(3));
        assert!(ig.add_feature(0));
        assert!(!ig.add_feature(3));
        assert_eq!(ig.injected_features(), &[0, 3]);
        assert_eq!(ig.target(), 1);
    }

    #[test]
    fn normalized_adjacency_two_node_edge() {
        // one edge, both degrees-with-self-loop are 2: off-diagonal 1/2
        let g = Graph::build(2, 1, 1, &[(0, 1)], &[], vec![0, 0]).unwrap();
        let a = g.normalized_adjacency();
        let d = a.to_dense();
        assert!((d.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((d.get(0, 0) - 0.5).abs() < 1e-15);
    }
}
