//! Incremental probability and gradient queries for pendant injections.
//!
//! Injecting one degree-1 node next to a target only perturbs the 2-hop
//! receptive field around it, so for the two-layer and linear-propagation
//! victims the target's output row reduces to a cached base plus a term
//! linear in the injected node's aggregated features. One query costs
//! microseconds instead of a full-graph forward. Equivalence with the
//! materialized forward (to 1e-10) is part of the acceptance suite.

use std::collections::HashMap;

use super::{ArchExtra, GnnKind, ProbRow, VictimModel};
use crate::error::{Result, SniaError};
use crate::graph::{Graph, InjectedGraph};
use crate::tensor::ops::softmax_row_slice;
use crate::tensor::Matrix;

/// Per-(victim, target) query context.
pub struct PendantContext<'m> {
    model: &'m VictimModel,
    graph: &'m Graph,
    target: usize,
    inner: ContextKind<'m>,
}

enum ContextKind<'m> {
    TwoLayer(TwoLayerCtx<'m>),
    Linear(LinearCtx),
    /// Fallback for architectures without a closed-form pendant row
    /// (TAGCN, GCNII): every query materializes the injection graph.
    Materialized,
}

/// Two-layer GCN: cached pieces of
/// `softmax(a_vv h_vt W2 + sum_u a_vu h_u W2 + a_vi h_inj W2)`.
struct TwoLayerCtx<'m> {
    w1: &'m Matrix,
    w2: &'m Matrix,
    a_vv: f64,
    a_vi: f64,
    a_ii: f64,
    /// Constant part of the target's first-layer pre-activation.
    base_vt: Vec<f64>,
    /// Constant part of the injected node's pre-activation (`a_vi * p_vt`).
    pre_inj_base: Vec<f64>,
    /// Output-row contribution of the target's real neighbors.
    o_base: Vec<f64>,
}

/// SGC / linearized surrogate with propagation power k <= 2: the output
/// row is `out_base + kappa * r_inj` with `r_inj = xhat * W`.
struct LinearCtx {
    w_eff: Matrix,
    kappa: f64,
    out_base: Vec<f64>,
}

/// Running aggregate of the injected node's features, sized for the
/// architecture (hidden-dim for GCN, label-dim for the linear family).
/// Also keeps the raw feature list for the materialized fallback.
#[derive(Clone, Debug)]
pub struct FeatureAccumulator {
    dense: Vec<f64>,
    features: Vec<usize>,
}

impl FeatureAccumulator {
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

impl<'m> PendantContext<'m> {
    pub fn new(model: &'m VictimModel, graph: &'m Graph, target: usize) -> Result<Self> {
        if target >= graph.num_nodes() {
            return Err(SniaError::Usage(format!("target {target} out of range")));
        }
        let inner = match model.arch.kind {
            GnnKind::Gcn => ContextKind::TwoLayer(TwoLayerCtx::build(model, graph, target)),
            GnnKind::Sgc | GnnKind::SurrogateLinear => {
                let k = match model.arch.extra {
                    ArchExtra::Power { k } => k,
                    _ => 2,
                };
                if k <= 2 {
                    ContextKind::Linear(LinearCtx::build(model, graph, target, k))
                } else {
                    ContextKind::Materialized
                }
            }
            GnnKind::Tagcn | GnnKind::Gcnii => ContextKind::Materialized,
        };
        Ok(PendantContext {
            model,
            graph,
            target,
            inner,
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn new_accumulator(&self) -> FeatureAccumulator {
        let dense_len = match &self.inner {
            ContextKind::TwoLayer(ctx) => ctx.w1.cols(),
            ContextKind::Linear(ctx) => ctx.w_eff.cols(),
            ContextKind::Materialized => 0,
        };
        FeatureAccumulator {
            dense: vec![0.0; dense_len],
            features: Vec::new(),
        }
    }

    /// Activate one more feature on the injected node. Re-adding an active
    /// feature is a no-op.
    pub fn accumulate(&self, acc: &mut FeatureAccumulator, feature: usize) {
        debug_assert!(feature < self.graph.num_features());
        if acc.features.contains(&feature) {
            return;
        }
        acc.features.push(feature);
        match &self.inner {
            ContextKind::TwoLayer(ctx) => {
                for (d, w) in acc.dense.iter_mut().zip(ctx.w1.row(feature)) {
                    *d += w;
                }
            }
            ContextKind::Linear(ctx) => {
                for (d, w) in acc.dense.iter_mut().zip(ctx.w_eff.row(feature)) {
                    *d += w;
                }
            }
            ContextKind::Materialized => {}
        }
    }

    /// Probability row of the target given the accumulated features.
    pub fn prob_row_acc(&self, acc: &FeatureAccumulator) -> ProbRow {
        match &self.inner {
            ContextKind::TwoLayer(ctx) => ctx.prob_row(&acc.dense),
            ContextKind::Linear(ctx) => ctx.prob_row(&acc.dense),
            ContextKind::Materialized => self.prob_row_materialized(&acc.features),
        }
    }

    /// Probability row of the target for an explicit feature set.
    pub fn prob_row(&self, features: &[usize]) -> ProbRow {
        let mut acc = self.new_accumulator();
        for &f in features {
            self.accumulate(&mut acc, f);
        }
        self.prob_row_acc(&acc)
    }

    fn prob_row_materialized(&self, features: &[usize]) -> ProbRow {
        let mut ig = InjectedGraph::new(self.graph, self.target);
        for &f in features {
            ig.add_feature(f);
        }
        let probs = self
            .model
            .predict_probs_injected(&ig, Some(&[self.target]))
            .expect("materialized forward on a validated graph");
        ProbRow::new(probs.row(0).to_vec())
    }

    /// Exact gradient of the target-label probability with respect to the
    /// injected node's feature row, treated as continuous, at the current
    /// feature set.
    pub fn grad_target_prob(&self, acc: &FeatureAccumulator, label: usize) -> Result<Vec<f64>> {
        match &self.inner {
            ContextKind::TwoLayer(ctx) => Ok(ctx.grad(&acc.dense, label)),
            ContextKind::Linear(ctx) => Ok(ctx.grad(&acc.dense, label)),
            ContextKind::Materialized => Err(SniaError::Usage(format!(
                "{} has no differentiable pendant evaluator",
                self.model.arch.kind.name()
            ))),
        }
    }
}

/// Degree (with self-loop) of a real node in the injection graph.
fn injected_degree(g: &Graph, target: usize, u: usize) -> f64 {
    (g.degree(u) + 1 + usize::from(u == target)) as f64
}

/// `x_u * W` for one node's sparse feature row.
fn project_features(g: &Graph, u: usize, w: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for &f in g.features(u) {
        for (o, v) in out.iter_mut().zip(w.row(f)) {
            *o += v;
        }
    }
    out
}

fn project_needed(g: &Graph, target: usize, w: &Matrix) -> HashMap<usize, Vec<f64>> {
    let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
    let ensure = |u: usize, rows: &mut HashMap<usize, Vec<f64>>| {
        rows.entry(u).or_insert_with(|| project_features(g, u, w));
    };
    ensure(target, &mut rows);
    for &u in g.neighbors(target) {
        ensure(u, &mut rows);
        for &w2 in g.neighbors(u) {
            ensure(w2, &mut rows);
        }
    }
    rows
}

impl<'m> TwoLayerCtx<'m> {
    fn build(model: &'m VictimModel, g: &Graph, target: usize) -> Self {
        let w1 = model.param("w1");
        let w2 = model.param("w2");
        let y = w2.cols();
        let d_vt = injected_degree(g, target, target);
        let a_vv = 1.0 / d_vt;
        let a_vi = 1.0 / (2.0 * d_vt).sqrt();
        let p = project_needed(g, target, w1);
        let p_vt = &p[&target];

        let mut base_vt: Vec<f64> = p_vt.iter().map(|v| a_vv * v).collect();
        let mut o_base = vec![0.0; y];
        for &u in g.neighbors(target) {
            let d_u = injected_degree(g, target, u);
            let a_vu = 1.0 / (d_vt * d_u).sqrt();
            for (b, v) in base_vt.iter_mut().zip(&p[&u]) {
                *b += a_vu * v;
            }
            // first-layer row of the neighbor; unaffected by xhat but
            // affected by the target's degree shift
            let mut pre_u: Vec<f64> = p[&u].iter().map(|v| v / d_u).collect();
            for &w in g.neighbors(u) {
                let d_w = injected_degree(g, target, w);
                let c = 1.0 / (d_u * d_w).sqrt();
                for (b, v) in pre_u.iter_mut().zip(&p[&w]) {
                    *b += c * v;
                }
            }
            for (j, pre) in pre_u.iter().enumerate() {
                if *pre > 0.0 {
                    for (o, w) in o_base.iter_mut().zip(w2.row(j)) {
                        *o += a_vu * pre * w;
                    }
                }
            }
        }
        let pre_inj_base = p_vt.iter().map(|v| a_vi * v).collect();
        TwoLayerCtx {
            w1,
            w2,
            a_vv,
            a_vi,
            a_ii: 0.5,
            base_vt,
            pre_inj_base,
            o_base,
        }
    }

    fn pre_activations(&self, pinj: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pre_vt: Vec<f64> = self
            .base_vt
            .iter()
            .zip(pinj)
            .map(|(b, p)| b + self.a_vi * p)
            .collect();
        let pre_inj: Vec<f64> = self
            .pre_inj_base
            .iter()
            .zip(pinj)
            .map(|(b, p)| b + self.a_ii * p)
            .collect();
        (pre_vt, pre_inj)
    }

    fn logits(&self, pinj: &[f64]) -> Vec<f64> {
        let (pre_vt, pre_inj) = self.pre_activations(pinj);
        let mut out = self.o_base.clone();
        for (j, pre) in pre_vt.iter().enumerate() {
            if *pre > 0.0 {
                for (o, w) in out.iter_mut().zip(self.w2.row(j)) {
                    *o += self.a_vv * pre * w;
                }
            }
        }
        for (j, pre) in pre_inj.iter().enumerate() {
            if *pre > 0.0 {
                for (o, w) in out.iter_mut().zip(self.w2.row(j)) {
                    *o += self.a_vi * pre * w;
                }
            }
        }
        out
    }

    fn prob_row(&self, pinj: &[f64]) -> ProbRow {
        let mut logits = self.logits(pinj);
        softmax_row_slice(&mut logits);
        ProbRow::new(logits)
    }

    fn grad(&self, pinj: &[f64], label: usize) -> Vec<f64> {
        let (pre_vt, pre_inj) = self.pre_activations(pinj);
        let z = self.prob_row(pinj);
        let y = z.as_slice().len();
        // s = dz[label]/dlogits
        let s: Vec<f64> = (0..y)
            .map(|c| z.get(label) * (f64::from(u8::from(c == label)) - z.get(c)))
            .collect();
        let h = self.w1.cols();
        let mut d_pinj = vec![0.0; h];
        for j in 0..h {
            let ws: f64 = self.w2.row(j).iter().zip(&s).map(|(w, sv)| w * sv).sum();
            let mut acc = 0.0;
            if pre_vt[j] > 0.0 {
                acc += self.a_vi * self.a_vv * ws;
            }
            if pre_inj[j] > 0.0 {
                acc += self.a_ii * self.a_vi * ws;
            }
            d_pinj[j] = acc;
        }
        let f = self.w1.rows();
        let mut grad = vec![0.0; f];
        for (fi, g) in grad.iter_mut().enumerate() {
            *g = self.w1.row(fi).iter().zip(&d_pinj).map(|(w, d)| w * d).sum();
        }
        grad
    }
}

impl LinearCtx {
    fn build(model: &VictimModel, g: &Graph, target: usize, k: usize) -> Self {
        let w_eff = match model.arch.kind {
            GnnKind::SurrogateLinear => model
                .param("w1")
                .matmul(model.param("w2"))
                .expect("surrogate factor shapes"),
            _ => model.param("w").clone(),
        };
        let d_vt = injected_degree(g, target, target);
        let a_vv = 1.0 / d_vt;
        let a_vi = 1.0 / (2.0 * d_vt).sqrt();
        let a_ii = 0.5;
        let y = w_eff.cols();
        let r = project_needed(g, target, &w_eff);
        let r_vt = &r[&target];
        let (kappa, out_base) = match k {
            0 => (0.0, r_vt.clone()),
            1 => {
                let mut base: Vec<f64> = r_vt.iter().map(|v| a_vv * v).collect();
                for &u in g.neighbors(target) {
                    let a_vu = 1.0 / (d_vt * injected_degree(g, target, u)).sqrt();
                    for (b, v) in base.iter_mut().zip(&r[&u]) {
                        *b += a_vu * v;
                    }
                }
                (a_vi, base)
            }
            2 => {
                // q_u = row u of A_hat (A_hat X W) without the injected term
                let mut q_vt_base: Vec<f64> = r_vt.iter().map(|v| a_vv * v).collect();
                for &u in g.neighbors(target) {
                    let a_vu = 1.0 / (d_vt * injected_degree(g, target, u)).sqrt();
                    for (b, v) in q_vt_base.iter_mut().zip(&r[&u]) {
                        *b += a_vu * v;
                    }
                }
                let mut base = vec![0.0; y];
                for (b, v) in base.iter_mut().zip(&q_vt_base) {
                    *b += a_vv * v;
                }
                for &u in g.neighbors(target) {
                    let d_u = injected_degree(g, target, u);
                    let a_vu = 1.0 / (d_vt * d_u).sqrt();
                    let mut q_u: Vec<f64> = r[&u].iter().map(|v| v / d_u).collect();
                    for &w in g.neighbors(u) {
                        let c = 1.0 / (d_u * injected_degree(g, target, w)).sqrt();
                        for (b, v) in q_u.iter_mut().zip(&r[&w]) {
                            *b += c * v;
                        }
                    }
                    for (b, v) in base.iter_mut().zip(&q_u) {
                        *b += a_vu * v;
                    }
                }
                // q_inj contributes a_vi * (a_ii r_inj + a_vi r_vt)
                for (b, v) in base.iter_mut().zip(r_vt) {
                    *b += a_vi * a_vi * v;
                }
                (a_vi * (a_vv + a_ii), base)
            }
            _ => unreachable!("linear context only built for k <= 2"),
        };
        LinearCtx {
            w_eff,
            kappa,
            out_base,
        }
    }

    fn prob_row(&self, r_inj: &[f64]) -> ProbRow {
        let mut logits: Vec<f64> = self
            .out_base
            .iter()
            .zip(r_inj)
            .map(|(b, r)| b + self.kappa * r)
            .collect();
        if logits.is_empty() {
            logits = self.out_base.clone();
        }
        softmax_row_slice(&mut logits);
        ProbRow::new(logits)
    }

    fn grad(&self, r_inj: &[f64], label: usize) -> Vec<f64> {
        let z = self.prob_row(r_inj);
        let y = self.w_eff.cols();
        let s: Vec<f64> = (0..y)
            .map(|c| z.get(label) * (f64::from(u8::from(c == label)) - z.get(c)))
            .collect();
        let mut grad = vec![0.0; self.w_eff.rows()];
        for (fi, g) in grad.iter_mut().enumerate() {
            *g = self.kappa * self.w_eff.row(fi).iter().zip(&s).map(|(w, sv)| w * sv).sum::<f64>();
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_splits, Graph};
    use crate::victim::{train_victim, GnnArchitecture};

    fn toy_graph() -> Graph {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 5), (2, 10), (10, 11)];
        let feats: Vec<(usize, usize)> = (0..12).flat_map(|u| [(u, u % 5), (u, (u * 3 + 1) % 5)]).collect();
        let labels = (0..12).map(|u| u % 3).collect();
        Graph::build(12, 5, 3, &edges, &feats, labels).unwrap()
    }

    #[test]
    fn incremental_matches_materialized_for_all_fast_archs() {
        let g = toy_graph();
        let split = make_splits(&g, 0).unwrap();
        for arch in [
            GnnArchitecture::gcn(),
            GnnArchitecture::sgc(2),
            GnnArchitecture::sgc(1),
            GnnArchitecture::sgc(0),
            GnnArchitecture::surrogate(),
        ] {
            let model = train_victim(&g, &split, &arch, 5).unwrap();
            for target in [0usize, 3, 11] {
                let ctx = PendantContext::new(&model, &g, target).unwrap();
                for feats in [vec![], vec![2], vec![0, 3, 4]] {
                    let fast = ctx.prob_row(&feats);
                    let mut ig = InjectedGraph::new(&g, target);
                    for &f in &feats {
                        ig.add_feature(f);
                    }
                    let slow = model.predict_probs_injected(&ig, Some(&[target])).unwrap();
                    for (a, b) in fast.as_slice().iter().zip(slow.row(0)) {
                        assert!(
                            (a - b).abs() < 1e-12,
                            "{} target {target} feats {feats:?}: {a} vs {b}",
                            arch.kind.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn adding_existing_feature_is_noop() {
        let g = toy_graph();
        let split = make_splits(&g, 0).unwrap();
        let model = train_victim(&g, &split, &GnnArchitecture::gcn(), 1).unwrap();
        let ctx = PendantContext::new(&model, &g, 4).unwrap();
        let mut acc = ctx.new_accumulator();
        ctx.accumulate(&mut acc, 2);
        let before = ctx.prob_row_acc(&acc);
        ctx.accumulate(&mut acc, 2);
        let after = ctx.prob_row_acc(&acc);
        assert_eq!(before.as_slice(), after.as_slice());
        assert_eq!(acc.len(), 1);
    }

    #[test]
    fn two_equal_logits_give_half() {
        let ctx = LinearCtx {
            w_eff: Matrix::zeros(3, 2),
            kappa: 0.0,
            out_base: vec![0.7, 0.7],
        };
        let row = ctx.prob_row(&[0.0, 0.0]);
        assert!((row.get(0) - 0.5).abs() < 1e-15);
        assert!((row.get(1) - 0.5).abs() < 1e-15);
    }
}
