//! Reference implementations used by the test suites.
//!
//! Everything here is written the slow, obvious way — dense `Vec<Vec<f64>>`
//! arithmetic and direct summations — and stays independent of the
//! production code paths it is used to check. Not intended for use outside
//! tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, InjectedGraph};
use crate::tensor::Matrix;
use crate::victim::{ArchExtra, GnnKind, VictimModel};

/// Central finite-difference gradient of a scalar function.
pub fn finite_difference_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest absolute relative error between two gradients, with an absolute
/// floor so near-zero entries compare sanely.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Connected component sizes by BFS over an undirected edge list.
pub fn component_sizes(num_nodes: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); num_nodes];
    for &(u, v) in edges {
        if u != v {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut seen = vec![false; num_nodes];
    let mut sizes = Vec::new();
    for s in 0..num_nodes {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = vec![s];
        let mut size = 0;
        while let Some(u) = queue.pop() {
            size += 1;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Dense symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` of a dense
/// 0/1 adjacency.
pub fn dense_normalize(adj: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = adj.len();
    let mut a = adj.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                out[i][j] = a[i][j] / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    out
}

/// Dense adjacency of a graph.
pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut adj = vec![vec![0.0; n]; n];
    for u in 0..n {
        for &v in g.neighbors(u) {
            adj[u][v] = 1.0;
        }
    }
    adj
}

/// Dense adjacency of an injection graph: base plus pendant edge.
pub fn dense_injected_adjacency(ig: &InjectedGraph) -> Vec<Vec<f64>> {
    let g = ig.base();
    let n = g.num_nodes();
    let mut adj = vec![vec![0.0; n + 1]; n + 1];
    for u in 0..n {
        for &v in g.neighbors(u) {
            adj[u][v] = 1.0;
        }
    }
    adj[ig.target()][n] = 1.0;
    adj[n][ig.target()] = 1.0;
    adj
}

/// Dense feature matrix of a graph, with an optional extra injected row.
pub fn dense_features(g: &Graph, injected: Option<&[usize]>) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let rows = n + usize::from(injected.is_some());
    let mut x = vec![vec![0.0; g.num_features()]; rows];
    for u in 0..n {
        for &f in g.features(u) {
            x[u][f] = 1.0;
        }
    }
    if let Some(feats) = injected {
        for &f in feats {
            x[n][f] = 1.0;
        }
    }
    x
}

fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for kk in 0..k {
            let v = a[i][kk];
            if v == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += v * b[kk][j];
            }
        }
    }
    out
}

fn matrix_as_dense(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn dense_softmax_rows(mut z: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for row in z.iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    z
}

/// Straight-line dense forward of a trained victim on an arbitrary dense
/// (adjacency, features) pair. Supports the differentiable architectures.
pub fn dense_victim_probs(model: &VictimModel, adj: &[Vec<f64>], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let an = dense_normalize(adj);
    match model.arch.kind {
        GnnKind::Gcn => {
            let w1 = matrix_as_dense(model.param("w1"));
            let w2 = matrix_as_dense(model.param("w2"));
            let mut h = dense_matmul(&an, &dense_matmul(x, &w1));
            for row in h.iter_mut() {
                for v in row.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            dense_softmax_rows(dense_matmul(&an, &dense_matmul(&h, &w2)))
        }
        GnnKind::Sgc => {
            let k = match model.arch.extra {
                ArchExtra::Power { k } => k,
                _ => 2,
            };
            let w = matrix_as_dense(model.param("w"));
            let mut s = x.to_vec();
            for _ in 0..k {
                s = dense_matmul(&an, &s);
            }
            dense_softmax_rows(dense_matmul(&s, &w))
        }
        GnnKind::SurrogateLinear => {
            let w1 = matrix_as_dense(model.param("w1"));
            let w2 = matrix_as_dense(model.param("w2"));
            let mut s = x.to_vec();
            for _ in 0..2 {
                s = dense_matmul(&an, &s);
            }
            dense_softmax_rows(dense_matmul(&dense_matmul(&s, &w1), &w2))
        }
        other => panic!("dense oracle does not cover {}", other.name()),
    }
}

/// Probability row of the injection target by fully materializing the
/// (N+1)-node dense graph.
pub fn dense_injected_target_row(model: &VictimModel, ig: &InjectedGraph) -> Vec<f64> {
    let adj = dense_injected_adjacency(ig);
    let x = dense_features(ig.base(), Some(ig.injected_features()));
    dense_victim_probs(model, &adj, &x)[ig.target()].clone()
}

/// The state-embedding oracle: explicitly extract the 2-hop subgraph of the
/// target inside the injection graph, then apply the one-step aggregation
/// on that subgraph (degrees taken in the subgraph, with self-loops).
pub fn subgraph_embed_oracle(ig: &InjectedGraph) -> Vec<f64> {
    let g = ig.base();
    let n = g.num_nodes();
    let inj = n;
    let target = ig.target();
    let neighbors = |u: usize| -> Vec<usize> {
        let mut out: Vec<usize> = if u == inj {
            vec![target]
        } else {
            g.neighbors(u).to_vec()
        };
        if u == target {
            out.push(inj);
        }
        out
    };
    // BFS to depth 2
    let mut dist = vec![usize::MAX; n + 1];
    dist[target] = 0;
    let mut frontier = vec![target];
    for d in 1..=2 {
        let mut next = Vec::new();
        for &u in &frontier {
            for v in neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = d;
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    let in_sub = |u: usize| dist[u] != usize::MAX;
    let sub_degree = |u: usize| -> f64 {
        let cnt = neighbors(u).into_iter().filter(|&v| in_sub(v)).count();
        (cnt + 1) as f64 // self-loop
    };
    let feature_row = |u: usize| -> Vec<f64> {
        let mut row = vec![0.0; g.num_features()];
        let feats: &[usize] = if u == inj { ig.injected_features() } else { g.features(u) };
        for &f in feats {
            row[f] = 1.0;
        }
        row
    };
    let d_t = sub_degree(target);
    let mut out: Vec<f64> = feature_row(target).iter().map(|v| v / d_t).collect();
    for v in neighbors(target) {
        let d_v = sub_degree(v);
        let c = 1.0 / (d_t * d_v).sqrt();
        for (o, x) in out.iter_mut().zip(feature_row(v)) {
            *o += c * x;
        }
    }
    out
}

/// Direct double-sum GAE oracle: `A_t = sum_l (gamma lambda)^l delta_{t+l}`
/// truncated at episode ends and the segment boundary.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |t: usize| -> f64 {
        if dones[t] {
            0.0
        } else if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap
        }
    };
    let delta = |t: usize| rewards[t] + gamma * next_value(t) - values[t];
    let mut adv = vec![0.0; n];
    for t in 0..n {
        let mut acc = 0.0;
        let mut w = 1.0;
        for l in t..n {
            acc += w * delta(l);
            if dones[l] {
                break;
            }
            w *= gamma * lambda;
        }
        adv[t] = acc;
    }
    adv
}

/// Masked-softmax oracle: softmax over the unmasked subset, scattered back.
pub fn subset_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let picked: Vec<f64> = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .collect();
    let max = picked.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = picked.iter().map(|v| (v - max).exp()).sum();
    logits
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { (v - max).exp() / sum } else { 0.0 })
        .collect()
}

/// Random connected graph for property tests: a random spanning tree plus
/// extra random edges, random binary features, random labels.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, f: usize, y: usize, extra_edges: usize) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push((u, v));
    }
    for _ in 0..extra_edges {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            edges.push((u.min(v), u.max(v)));
        }
    }
    let mut feats = Vec::new();
    for u in 0..n {
        let k = rng.gen_range(1..=3.min(f));
        for _ in 0..k {
            feats.push((u, rng.gen_range(0..f)));
        }
    }
    let labels = (0..n).map(|_| rng.gen_range(0..y)).collect();
    Graph::build(n, f, y, &edges, &feats, labels).expect("random graph is valid")
}
