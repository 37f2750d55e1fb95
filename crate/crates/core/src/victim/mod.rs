//! GNN victim zoo: architectures, training, and black-box query endpoints.
//!
//! GCN and SGC are the primary victims; a Nettack-style linearized
//! surrogate backs the black-box gradient baselines; TAGCN and GCNII are
//! optional extra victims behind the same interface.

pub mod forward;
pub mod incremental;

use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SniaError};
use crate::graph::{Graph, InjectedGraph, SplitSpec};
use crate::tensor::init::glorot_uniform;
use crate::tensor::{AdamState, Checkpoint, CsrMatrix, LrSchedule, Matrix, Tape};

/// Victim training protocol. The source papers leave these unstated; the
/// values below land the standard published accuracies.
pub const TRAIN_EPOCHS: usize = 300;
pub const TRAIN_LR: f64 = 0.01;
pub const TRAIN_WEIGHT_DECAY: f64 = 5e-4;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GnnKind {
    Gcn,
    Sgc,
    Tagcn,
    Gcnii,
    SurrogateLinear,
}

impl GnnKind {
    pub fn name(&self) -> &'static str {
        match self {
            GnnKind::Gcn => "gcn",
            GnnKind::Sgc => "sgc",
            GnnKind::Tagcn => "tagcn",
            GnnKind::Gcnii => "gcnii",
            GnnKind::SurrogateLinear => "surrogate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Architecture-specific constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArchExtra {
    None,
    /// Propagation power of SGC / the linearized surrogate.
    Power { k: usize },
    /// Polynomial filter length per TAGCN layer.
    Hops { hops: usize },
    /// GCNII initial-residual strength and identity-map decay.
    InitialResidual { alpha: f64, theta: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnArchitecture {
    pub kind: GnnKind,
    pub layers: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub extra: ArchExtra,
}

impl GnnArchitecture {
    pub fn gcn() -> Self {
        GnnArchitecture {
            kind: GnnKind::Gcn,
            layers: 2,
            hidden_dim: DEFAULT_HIDDEN,
            activation: Activation::Relu,
            extra: ArchExtra::None,
        }
    }

    /// SGC with propagation power `k` (the victim default is 2, matching
    /// the two-layer receptive field of the GCN victim).
    pub fn sgc(k: usize) -> Self {
        GnnArchitecture {
            kind: GnnKind::Sgc,
            layers: 1,
            hidden_dim: 1,
            activation: Activation::Identity,
            extra: ArchExtra::Power { k },
        }
    }

    /// Two-layer linearized GCN, the classic surrogate for transfer
    /// attacks.
    pub fn surrogate() -> Self {
        GnnArchitecture {
            kind: GnnKind::SurrogateLinear,
            layers: 2,
            hidden_dim: DEFAULT_HIDDEN,
            activation: Activation::Identity,
            extra: ArchExtra::Power { k: 2 },
        }
    }

    pub fn tagcn() -> Self {
        GnnArchitecture {
            kind: GnnKind::Tagcn,
            layers: 2,
            hidden_dim: DEFAULT_HIDDEN,
            activation: Activation::Relu,
            extra: ArchExtra::Hops { hops: 3 },
        }
    }

    pub fn gcnii() -> Self {
        GnnArchitecture {
            kind: GnnKind::Gcnii,
            layers: 8,
            hidden_dim: DEFAULT_HIDDEN,
            activation: Activation::Relu,
            extra: ArchExtra::InitialResidual { alpha: 0.1, theta: 0.5 },
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gcn" => Ok(Self::gcn()),
            "sgc" => Ok(Self::sgc(2)),
            "surrogate" => Ok(Self::surrogate()),
            "tagcn" => Ok(Self::tagcn()),
            "gcnii" => Ok(Self::gcnii()),
            other => Err(SniaError::Usage(format!(
                "unknown architecture {other:?}; expected gcn|sgc|surrogate|tagcn|gcnii"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden_dim < 1 {
            return Err(SniaError::Validation(format!(
                "architecture needs layers >= 1 and hidden_dim >= 1, got {} / {}",
                self.layers, self.hidden_dim
            )));
        }
        Ok(())
    }
}

/// One node's predicted class distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbRow(Vec<f64>);

impl ProbRow {
    pub fn new(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|p| *p >= 0.0));
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        ProbRow(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, label: usize) -> f64 {
        self.0[label]
    }

    /// Most likely label, ties broken toward the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// A trained, frozen classifier: architecture, named parameters, and the
/// cached normalized adjacency of its training graph.
#[derive(Clone, Debug)]
pub struct VictimModel {
    pub arch: GnnArchitecture,
    params: Vec<(String, Matrix)>,
    norm_cache: Rc<CsrMatrix>,
    num_nodes: usize,
    num_features: usize,
    num_labels: usize,
}

impl VictimModel {
    pub fn params(&self) -> &[(String, Matrix)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> &Matrix {
        &self
            .params
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("victim has no parameter {name}"))
            .1
    }

    pub fn norm_adjacency(&self) -> &Rc<CsrMatrix> {
        &self.norm_cache
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.num_nodes() != self.num_nodes || g.num_features() != self.num_features || g.num_labels() != self.num_labels
        {
            return Err(SniaError::dimension(
                "victim/graph",
                format!("{}x{}x{}", self.num_nodes, self.num_features, self.num_labels),
                format!("{}x{}x{}", g.num_nodes(), g.num_features(), g.num_labels()),
            ));
        }
        Ok(())
    }

    /// Class probabilities on the clean graph for the requested nodes (all
    /// nodes when `subset` is `None`).
    pub fn predict_probs(&self, g: &Graph, subset: Option<&[usize]>) -> Result<Matrix> {
        self.check_graph(g)?;
        let logits = forward::clean_logits(self, g)?;
        Ok(forward::softmax_subset(&logits, subset))
    }

    /// Argmax predictions on the clean graph, ties to the lowest label.
    pub fn predict_labels(&self, g: &Graph) -> Result<Vec<usize>> {
        let probs = self.predict_probs(g, None)?;
        Ok((0..probs.rows())
            .map(|r| ProbRow::new(probs.row(r).to_vec()).argmax())
            .collect())
    }

    /// Class probabilities on a pendant-injection graph, materialized as an
    /// explicit (N+1)-node graph. This is the slow, generic route; the
    /// incremental evaluator must agree with it to 1e-10.
    pub fn predict_probs_injected(&self, ig: &InjectedGraph, subset: Option<&[usize]>) -> Result<Matrix> {
        self.check_graph(ig.base())?;
        let logits = forward::injected_logits(self, ig)?;
        Ok(forward::softmax_subset(&logits, subset))
    }

    /// Black-box query primitive: probability that the victim assigns
    /// `label` to the target of `ig`, under the current injected features.
    pub fn query_target_prob(&self, ig: &InjectedGraph, label: usize) -> Result<f64> {
        Ok(self.query_target_row(ig)?.get(label))
    }

    /// Full probability row of the target node under injection.
    pub fn query_target_row(&self, ig: &InjectedGraph) -> Result<ProbRow> {
        self.check_graph(ig.base())?;
        let ctx = incremental::PendantContext::new(self, ig.base(), ig.target())?;
        Ok(ctx.prob_row(ig.injected_features()))
    }

    /// Fraction of `ids` whose argmax prediction matches the true label.
    pub fn accuracy(&self, g: &Graph, ids: &[usize]) -> Result<f64> {
        let probs = self.predict_probs(g, Some(ids))?;
        let mut hits = 0usize;
        for (row, &u) in ids.iter().enumerate() {
            if ProbRow::new(probs.row(row).to_vec()).argmax() == g.label(u) {
                hits += 1;
            }
        }
        Ok(hits as f64 / ids.len().max(1) as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ck = Checkpoint::new();
        ck.meta.insert("kind".into(), self.arch.kind.name().into());
        ck.meta.insert("layers".into(), self.arch.layers.to_string());
        ck.meta.insert("hidden".into(), self.arch.hidden_dim.to_string());
        match self.arch.extra {
            ArchExtra::None => {}
            ArchExtra::Power { k } => {
                ck.meta.insert("k".into(), k.to_string());
            }
            ArchExtra::Hops { hops } => {
                ck.meta.insert("hops".into(), hops.to_string());
            }
            ArchExtra::InitialResidual { alpha, theta } => {
                ck.meta.insert("alpha".into(), alpha.to_string());
                ck.meta.insert("theta".into(), theta.to_string());
            }
        }
        ck.meta.insert("num_nodes".into(), self.num_nodes.to_string());
        ck.meta.insert("num_features".into(), self.num_features.to_string());
        ck.meta.insert("num_labels".into(), self.num_labels.to_string());
        ck.tensors = self.params.clone();
        ck.save(path)
    }

    pub fn load(path: &Path, g: &Graph) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let bad = |msg: String| SniaError::BadCheckpoint {
            path: path.display().to_string(),
            msg,
        };
        let kind_name = ck.meta.get("kind").ok_or_else(|| bad("missing kind".into()))?;
        let mut arch = GnnArchitecture::from_name(kind_name)?;
        if let Some(k) = ck.meta.get("k") {
            arch.extra = ArchExtra::Power {
                k: k.parse().map_err(|_| bad(format!("bad k {k:?}")))?,
            };
        }
        if let Some(h) = ck.meta.get("hidden") {
            arch.hidden_dim = h.parse().map_err(|_| bad(format!("bad hidden {h:?}")))?;
        }
        let model = VictimModel {
            arch,
            params: ck.tensors,
            norm_cache: Rc::new(g.normalized_adjacency()),
            num_nodes: g.num_nodes(),
            num_features: g.num_features(),
            num_labels: g.num_labels(),
        };
        model.check_graph(g)?;
        Ok(model)
    }
}

fn init_params(arch: &GnnArchitecture, f: usize, y: usize, rng: &mut ChaCha8Rng) -> Vec<(String, Matrix)> {
    let h = arch.hidden_dim;
    match arch.kind {
        GnnKind::Gcn => vec![
            ("w1".into(), glorot_uniform(f, h, rng)),
            ("w2".into(), glorot_uniform(h, y, rng)),
        ],
        GnnKind::Sgc => vec![("w".into(), glorot_uniform(f, y, rng))],
        GnnKind::SurrogateLinear => vec![
            ("w1".into(), glorot_uniform(f, h, rng)),
            ("w2".into(), glorot_uniform(h, y, rng)),
        ],
        GnnKind::Tagcn => {
            let hops = match arch.extra {
                ArchExtra::Hops { hops } => hops,
                _ => 3,
            };
            let mut params = Vec::new();
            for k in 0..=hops {
                params.push((format!("l0_w{k}"), glorot_uniform(f, h, rng)));
            }
            for k in 0..=hops {
                params.push((format!("l1_w{k}"), glorot_uniform(h, y, rng)));
            }
            params
        }
        GnnKind::Gcnii => {
            let mut params = vec![("w_in".into(), glorot_uniform(f, h, rng))];
            for l in 1..=arch.layers {
                params.push((format!("w{l}"), glorot_uniform(h, h, rng)));
            }
            params.push(("w_out".into(), glorot_uniform(h, y, rng)));
            params
        }
    }
}

/// Train a victim on the given split: full-batch Adam on the training
/// cross-entropy, returning the parameters of the best-validation epoch.
/// Deterministic in `seed`.
pub fn train_victim(g: &Graph, split: &SplitSpec, arch: &GnnArchitecture, seed: u64) -> Result<VictimModel> {
    arch.validate()?;
    split.validate(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(arch, g.num_features(), g.num_labels(), &mut rng);
    let norm = Rc::new(g.normalized_adjacency());
    let feats = Rc::new(g.feature_csr());
    // SGC-family propagation is fixed; fold it into a dense input once.
    let propagated: Option<Rc<Matrix>> = match arch.kind {
        GnnKind::Sgc | GnnKind::SurrogateLinear => {
            let k = match arch.extra {
                ArchExtra::Power { k } => k,
                _ => 2,
            };
            let mut s = feats.to_dense();
            for _ in 0..k {
                s = norm.spmm(&s)?;
            }
            Some(Rc::new(s))
        }
        _ => None,
    };

    let entries: Vec<(usize, usize)> = split.train_ids.iter().map(|&u| (u, g.label(u))).collect();
    let param_refs: Vec<&Matrix> = params.iter().map(|(_, m)| m).collect();
    let mut adam = AdamState::new(TRAIN_LR, LrSchedule::Constant, &param_refs).with_weight_decay(TRAIN_WEIGHT_DECAY);

    let mut best_val = -1.0;
    let mut best_params = params.clone();
    for epoch in 0..TRAIN_EPOCHS {
        let mut tape = Tape::new();
        let vars: Vec<_> = params.iter().map(|(_, m)| tape.leaf(m.clone(), true)).collect();
        let logits = forward::logits_on_tape(&mut tape, arch, &vars, &norm, &feats, propagated.as_ref())?;
        let logp = tape.log_softmax_row(logits)?;
        let picked = tape.pick(logp, &entries)?;
        let mean = tape.mean_all(picked);
        let loss = tape.scale(mean, -1.0);
        let loss_value = tape.value(loss).scalar_value();
        if !loss_value.is_finite() {
            return Err(SniaError::Training(format!(
                "non-finite loss {loss_value} at epoch {epoch} ({})",
                arch.kind.name()
            )));
        }
        tape.backward(loss)?;
        let grads: Vec<Option<&Matrix>> = vars.iter().map(|&v| tape.grad(v)).collect();
        {
            let mut param_muts: Vec<&mut Matrix> = params.iter_mut().map(|(_, m)| m).collect();
            adam.step(&mut param_muts, &grads)?;
        }

        // validation accuracy from this epoch's (pre-update) forward pass
        let probs = tape.value(logits);
        let mut hits = 0usize;
        for &u in &split.val_ids {
            let row = probs.row(u);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            if best == g.label(u) {
                hits += 1;
            }
        }
        let val_acc = hits as f64 / split.val_ids.len().max(1) as f64;
        if val_acc > best_val {
            best_val = val_acc;
            best_params = params.clone();
        }
    }

    Ok(VictimModel {
        arch: arch.clone(),
        params: best_params,
        norm_cache: norm,
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_labels: g.num_labels(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_splits;

    /// Two 10-node cliques with distinctive features, linked by one edge:
    /// linearly separable.
    fn two_cluster_graph() -> Graph {
        let mut edges = Vec::new();
        for a in 0..10usize {
            for b in (a + 1)..10 {
                edges.push((a, b));
                edges.push((a + 10, b + 10));
            }
        }
        edges.push((0, 10));
        let mut feats = Vec::new();
        for u in 0..10 {
            feats.push((u, 0));
            feats.push((u, u % 3 + 1));
        }
        for u in 10..20 {
            feats.push((u, 4));
            feats.push((u, u % 3 + 5));
        }
        let labels = (0..20).map(|u| usize::from(u >= 10)).collect();
        Graph::build(20, 8, 2, &edges, &feats, labels).unwrap()
    }

    /// Split with training nodes drawn from both clusters.
    fn balanced_split() -> SplitSpec {
        SplitSpec {
            train_ids: vec![0, 1, 2, 3, 4, 10, 11, 12, 13, 14],
            val_ids: vec![5, 6, 15, 16],
            test_ids: vec![7, 8, 9, 17, 18, 19],
            target_ids: vec![7, 8, 9, 17, 18, 19],
            seed: 0,
        }
    }

    #[test]
    fn gcn_reaches_full_train_accuracy_on_separable_toy() {
        let g = two_cluster_graph();
        let split = balanced_split();
        let model = train_victim(&g, &split, &GnnArchitecture::gcn(), 0).unwrap();
        let acc = model.accuracy(&g, &split.train_ids).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let g = two_cluster_graph();
        let split = make_splits(&g, 0).unwrap();
        let a = train_victim(&g, &split, &GnnArchitecture::gcn(), 9).unwrap();
        let b = train_victim(&g, &split, &GnnArchitecture::gcn(), 9).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn prob_rows_are_normalized() {
        let g = two_cluster_graph();
        let split = make_splits(&g, 0).unwrap();
        for arch in [
            GnnArchitecture::gcn(),
            GnnArchitecture::sgc(2),
            GnnArchitecture::surrogate(),
            GnnArchitecture::tagcn(),
            GnnArchitecture::gcnii(),
        ] {
            let model = train_victim(&g, &split, &arch, 1).unwrap();
            let probs = model.predict_probs(&g, None).unwrap();
            for r in 0..probs.rows() {
                let sum: f64 = probs.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{} row {r} sums to {sum}", arch.kind.name());
                assert!(probs.row(r).iter().all(|p| *p >= 0.0));
            }
        }
    }

    #[test]
    fn save_load_round_trip_preserves_predictions() {
        let g = two_cluster_graph();
        let split = make_splits(&g, 0).unwrap();
        let model = train_victim(&g, &split, &GnnArchitecture::sgc(2), 3).unwrap();
        let dir = std::env::temp_dir().join(format!("snia-victim-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sgc.ckpt");
        model.save(&path).unwrap();
        let back = VictimModel::load(&path, &g).unwrap();
        assert_eq!(
            model.predict_probs(&g, None).unwrap(),
            back.predict_probs(&g, None).unwrap()
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn uniform_row_on_symmetric_zero_input() {
        // single isolated node, zero features: logits are exactly zero for
        // any weights, so the row must be uniform
        let g = Graph::build(12, 4, 3, &(1..11).map(|i| (i, i + 1)).collect::<Vec<_>>(), &[], vec![0; 12]).unwrap();
        let split = make_splits(&g, 0).unwrap();
        let model = train_victim(&g, &split, &GnnArchitecture::gcn(), 0).unwrap();
        let probs = model.predict_probs(&g, Some(&[0])).unwrap();
        for &p in probs.row(0) {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
