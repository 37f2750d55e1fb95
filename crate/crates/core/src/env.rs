//! The episodic attack environment.
//!
//! One episode fixes a goal (target node, targeted label), wires a fresh
//! injected node to the target, and adds one discrete feature per step
//! until the budget is exhausted. Rewards are log-probability differences
//! of the targeted label under the victim, queried black-box; per-step
//! state embeddings combine a one-hop aggregation around the target inside
//! the perturbed graph with a pooled representation of the targeted label.

use crate::error::{Result, SniaError};
use crate::graph::{Graph, InjectedGraph};
use crate::victim::incremental::{FeatureAccumulator, PendantContext};
use crate::victim::{ProbRow, VictimModel};

/// An attack goal: force `label` on node `target`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttackGoal {
    pub target: usize,
    pub label: usize,
}

/// Per-label pooled node representations, computed once per
/// (graph, victim) pair.
///
/// Nodes are grouped by the victim's argmax prediction on the clean graph;
/// each group's rows of `H = D^{-1/2} (A+I) D^{-1/2} X` are mean-pooled.
/// An empty group yields the zero vector (no exemplars to pool).
#[derive(Clone, Debug)]
pub struct LabelBank {
    vectors: Vec<Vec<f64>>,
}

impl LabelBank {
    pub fn get(&self, label: usize) -> &[f64] {
        &self.vectors[label]
    }

    pub fn num_labels(&self) -> usize {
        self.vectors.len()
    }
}

/// Group nodes by clean-graph prediction and mean-pool their aggregated
/// feature rows.
pub fn build_label_bank(g: &Graph, victim: &VictimModel) -> Result<LabelBank> {
    let predictions = victim.predict_labels(g)?;
    let f = g.num_features();
    let y = g.num_labels();
    let mut sums = vec![vec![0.0; f]; y];
    let mut counts = vec![0usize; y];
    let norm = g.normalized_adjacency();
    for v in 0..g.num_nodes() {
        let group = predictions[v];
        counts[group] += 1;
        let dst = &mut sums[group];
        for (w, coef) in norm.row_entries(v) {
            for &feat in g.features(w) {
                dst[feat] += coef;
            }
        }
    }
    for (vec, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for v in vec.iter_mut() {
                *v *= inv;
            }
        }
    }
    Ok(LabelBank { vectors: sums })
}

/// Evolving state of one attack episode.
pub struct EpisodeState<'a> {
    goal: AttackGoal,
    t: usize,
    injected: InjectedGraph<'a>,
    mask: Vec<bool>,
    unmasked: usize,
    last_prob: f64,
    last_logp: f64,
    queries: usize,
    /// Cached one-hop aggregation around the target in the perturbed
    /// graph; adding feature `a` bumps entry `a` by `inj_coef`.
    node_repr: Vec<f64>,
    inj_coef: f64,
    ctx: PendantContext<'a>,
    acc: FeatureAccumulator,
}

impl<'a> EpisodeState<'a> {
    pub fn goal(&self) -> AttackGoal {
        self.goal
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    pub fn injected(&self) -> &InjectedGraph<'a> {
        &self.injected
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn unmasked_count(&self) -> usize {
        self.unmasked
    }

    /// Latest `Z[target, label]` from the victim (cached, one query per
    /// step).
    pub fn last_prob(&self) -> f64 {
        self.last_prob
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    /// Current probability row of the target node.
    pub fn prob_row(&self) -> ProbRow {
        self.ctx.prob_row_acc(&self.acc)
    }
}

/// Length of a state embedding: node part plus label part.
pub fn embedding_len(g: &Graph) -> usize {
    2 * g.num_features()
}

/// Assemble the state embedding: the cached target aggregation
/// concatenated with the pooled representation of the targeted label.
///
/// Deliberately takes no victim argument — the embedding reads only graph
/// data and the clean-graph prediction groups inside `bank`.
pub fn embed_state(st: &EpisodeState, bank: &LabelBank) -> Vec<f64> {
    let mut out = Vec::with_capacity(st.node_repr.len() * 2);
    out.extend_from_slice(&st.node_repr);
    out.extend_from_slice(bank.get(st.goal.label));
    out
}

/// Write the embedding into a preallocated slice (rollout hot path).
pub fn embed_state_into(st: &EpisodeState, bank: &LabelBank, out: &mut [f64]) {
    let f = st.node_repr.len();
    out[..f].copy_from_slice(&st.node_repr);
    out[f..].copy_from_slice(bank.get(st.goal.label));
}

/// The attack MDP over one (graph, victim) pair. Stateless across
/// episodes; every episode owns its [`EpisodeState`].
pub struct AttackEnv<'a> {
    graph: &'a Graph,
    victim: &'a VictimModel,
    budget: usize,
}

impl<'a> AttackEnv<'a> {
    pub fn new(graph: &'a Graph, victim: &'a VictimModel, budget: usize) -> Result<Self> {
        if budget == 0 || budget > graph.num_features() {
            return Err(SniaError::Usage(format!(
                "budget must be in [1, {}], got {budget}",
                graph.num_features()
            )));
        }
        Ok(AttackEnv { graph, victim, budget })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn graph(&self) -> &'a Graph {
        self.graph
    }

    pub fn victim(&self) -> &'a VictimModel {
        self.victim
    }

    /// Start an episode: pendant node wired to the target, no features,
    /// full mask. The reward baseline is this pendant graph.
    pub fn reset(&self, goal: AttackGoal) -> Result<EpisodeState<'a>> {
        if goal.target >= self.graph.num_nodes() || goal.label >= self.graph.num_labels() {
            return Err(SniaError::Usage(format!(
                "goal ({}, {}) out of range",
                goal.target, goal.label
            )));
        }
        let ctx = PendantContext::new(self.victim, self.graph, goal.target)?;
        let acc = ctx.new_accumulator();
        let p0 = ctx.prob_row_acc(&acc).get(goal.label);
        let injected = InjectedGraph::new(self.graph, goal.target);
        let f = self.graph.num_features();

        // one-hop aggregation of the target inside the 2-hop subgraph of
        // the pendant graph; subgraph degrees with self-loops coincide with
        // full-graph degrees for the target and its one-hop neighborhood
        let d_t = (self.graph.degree(goal.target) + 2) as f64;
        let mut node_repr = vec![0.0; f];
        for &feat in self.graph.features(goal.target) {
            node_repr[feat] += 1.0 / d_t;
        }
        for &u in self.graph.neighbors(goal.target) {
            let d_u = (self.graph.degree(u) + 1) as f64;
            let coef = 1.0 / (d_t * d_u).sqrt();
            for &feat in self.graph.features(u) {
                node_repr[feat] += coef;
            }
        }
        let inj_coef = 1.0 / (2.0 * d_t).sqrt();

        Ok(EpisodeState {
            goal,
            t: 0,
            injected,
            mask: vec![true; f],
            unmasked: f,
            last_prob: p0,
            last_logp: p0.ln(),
            queries: 1,
            node_repr,
            inj_coef,
            ctx,
            acc,
        })
    }

    /// Add feature `action` to the injected node. Returns the log-ratio
    /// reward and whether the episode just became terminal.
    pub fn step(&self, st: &mut EpisodeState<'a>, action: usize) -> Result<(f64, bool)> {
        if st.t >= self.budget {
            return Err(SniaError::EpisodeFinished { t: st.t });
        }
        if action >= st.mask.len() || !st.mask[action] {
            return Err(SniaError::MaskedAction { action });
        }
        st.injected.add_feature(action);
        st.ctx.accumulate(&mut st.acc, action);
        st.mask[action] = false;
        st.unmasked -= 1;
        st.node_repr[action] += st.inj_coef;
        st.t += 1;
        let p_new = st.ctx.prob_row_acc(&st.acc).get(st.goal.label);
        st.queries += 1;
        let logp_new = p_new.ln();
        let reward = logp_new - st.last_logp;
        st.last_prob = p_new;
        st.last_logp = logp_new;
        Ok((reward, st.t == self.budget))
    }

    /// Whether the terminal state achieves the goal: victim argmax at the
    /// target equals the targeted label (ties to the lowest label).
    pub fn success(&self, st: &EpisodeState) -> Result<bool> {
        if st.t != self.budget {
            return Err(SniaError::Usage(format!(
                "success queried at step {} of a budget-{} episode",
                st.t, self.budget
            )));
        }
        Ok(st.prob_row().argmax() == st.goal.label)
    }
}
