//! PPO attack agent: masked policy, value function, rollout collection,
//! GAE, and the clipped-surrogate update.

pub mod buffer;
pub mod train;
pub mod update;

use std::path::Path;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SniaError};
use crate::tensor::init::orthogonal;
use crate::tensor::ops::{softmax_row_slice, tanh_in_place};
use crate::tensor::{Checkpoint, Matrix, Tape, Var};

pub use buffer::RolloutBuffer;
pub use train::{train, EpochLog, TrainOutcome, TrainTask};
pub use update::{ppo_update, UpdateStats};

/// Network width shared by the policy and value MLPs.
pub const HIDDEN_DIM: usize = 512;
/// Linear layers in the policy MLP.
pub const POLICY_LAYERS: usize = 6;
/// Linear layers in the value MLP.
pub const VALUE_LAYERS: usize = 4;
/// Logits of masked actions are pinned here before the softmax; large
/// enough that they underflow to an exact zero probability.
pub const MASKED_LOGIT: f64 = -1e9;

/// PPO hyper-parameters.
#[derive(Clone, Debug)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub eps_clip: f64,
    pub beta_entropy: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub parallel_envs: usize,
    pub steps_per_env: usize,
    /// Update steps per collection phase (P).
    pub update_steps: usize,
    /// Collection phases to run (K).
    pub train_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub grad_clip: f64,
    /// Evaluate on the full goal grid up to this many goals, then fall
    /// back to a seeded subsample of this size.
    pub eval_goal_cap: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            eps_clip: 0.1,
            beta_entropy: 0.02,
            batch_size: 512,
            lr: 2e-4,
            parallel_envs: 32,
            steps_per_env: 128,
            update_steps: 10,
            train_epochs: 1000,
            eval_every: 400,
            patience: 20,
            grad_clip: 0.5,
            eval_goal_cap: 600,
        }
    }
}

impl PpoConfig {
    /// Collection steps per phase (S).
    pub fn steps_per_phase(&self) -> usize {
        self.parallel_envs * self.steps_per_env
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.gamma > 0.0
            && self.lambda > 0.0
            && self.eps_clip > 0.0
            && self.batch_size > 0
            && self.lr > 0.0
            && self.parallel_envs > 0
            && self.steps_per_env > 0
            && self.update_steps > 0
            && self.train_epochs > 0
            && self.eval_every > 0
            && self.patience > 0;
        if !positive || self.eps_clip >= 1.0 {
            return Err(SniaError::Validation(
                "ppo config fields must be positive and eps_clip < 1".into(),
            ));
        }
        Ok(())
    }
}

/// Plain MLP with tanh between linear layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

impl Mlp {
    /// Orthogonal init scaled by sqrt(2) on hidden layers and by
    /// `final_gain` on the output layer; zero biases.
    fn new(dims: &[usize], final_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..dims.len() - 1 {
            let gain = if i == dims.len() - 2 { final_gain } else { 2f64.sqrt() };
            weights.push(orthogonal(dims[i], dims[i + 1], gain, rng));
            biases.push(Matrix::zeros(1, dims[i + 1]));
        }
        Mlp { weights, biases }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().cols()
    }

    /// Inference forward (no tape): tanh on all but the last layer.
    pub fn forward(&self, input: &Matrix) -> Matrix {
        let mut h = input.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out = h.matmul(w).expect("mlp shapes are fixed at construction");
            for r in 0..out.rows() {
                for (v, bias) in out.row_mut(r).iter_mut().zip(b.row(0)) {
                    *v += bias;
                }
            }
            if i + 1 < self.weights.len() {
                tanh_in_place(out.data_mut());
            }
            h = out;
        }
        h
    }

    /// Register parameters as tape leaves.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<(Var, Var)> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| (tape.leaf(w.clone(), true), tape.leaf(b.clone(), true)))
            .collect()
    }

    /// Tape forward from pre-registered leaves.
    pub fn forward_on_tape(&self, tape: &mut Tape, leaves: &[(Var, Var)], input: Var) -> Result<Var> {
        let mut h = input;
        for (i, (w, b)) in leaves.iter().enumerate() {
            let hw = tape.matmul(h, *w)?;
            let hb = tape.add_row_bias(hw, *b)?;
            h = if i + 1 < leaves.len() { tape.tanh(hb) } else { hb };
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.weights.iter().chain(self.biases.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).collect()
    }
}

/// Policy head: 6-layer MLP, 2F inputs, one raw logit per feature.
#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub mlp: Mlp,
}

impl PolicyNet {
    pub fn new(input_dim: usize, num_actions: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(HIDDEN_DIM).take(POLICY_LAYERS - 1));
        dims.push(num_actions);
        PolicyNet {
            mlp: Mlp::new(&dims, 0.01, rng),
        }
    }

    pub fn num_actions(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Raw logits for a batch of state embeddings.
    pub fn logits(&self, embeds: &Matrix) -> Matrix {
        self.mlp.forward(embeds)
    }
}

/// Value head: 4-layer MLP, 2F inputs, scalar output.
#[derive(Clone, Debug)]
pub struct ValueNet {
    pub mlp: Mlp,
}

impl ValueNet {
    pub fn new(input_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(HIDDEN_DIM).take(VALUE_LAYERS - 1));
        dims.push(1);
        ValueNet {
            mlp: Mlp::new(&dims, 1.0, rng),
        }
    }

    pub fn values(&self, embeds: &Matrix) -> Vec<f64> {
        self.mlp.forward(embeds).into_data()
    }
}

/// Masked action distribution: softmax over the unmasked logits, exact
/// zeros elsewhere.
pub fn policy_distribution(net: &PolicyNet, embed: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let logits = net.logits(&Matrix::row_vector(embed.to_vec()));
    masked_distribution(logits.row(0), mask)
}

/// Masked softmax of one logit row.
pub fn masked_distribution(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    debug_assert_eq!(logits.len(), mask.len());
    if !mask.iter().any(|&m| m) {
        return Err(SniaError::DegenerateDistribution);
    }
    let mut row: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v } else { MASKED_LOGIT })
        .collect();
    softmax_row_slice(&mut row);
    for (p, &m) in row.iter_mut().zip(mask) {
        if !m {
            *p = 0.0;
        }
    }
    Ok(row)
}

/// Gumbel-Max draw from a masked distribution: argmax of
/// `ln p_i + g_i` over the unmasked support.
pub fn sample_action(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let gumbel = -(-u.ln()).ln();
        let score = p.ln() + gumbel;
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    debug_assert_ne!(best, usize::MAX, "degenerate distribution");
    best
}

/// Inference-time action choice: highest probability, ties to the lowest
/// index.
pub fn greedy_action(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Persist a policy/value pair.
pub fn save_agent(path: &Path, policy: &PolicyNet, value: &ValueNet) -> Result<()> {
    let mut ck = Checkpoint::new();
    ck.meta.insert("kind".into(), "ppo-agent".into());
    ck.meta.insert("input_dim".into(), policy.mlp.input_dim().to_string());
    ck.meta.insert("num_actions".into(), policy.num_actions().to_string());
    for (i, (w, b)) in policy.mlp.weights.iter().zip(&policy.mlp.biases).enumerate() {
        ck.tensors.push((format!("policy_w{i}"), w.clone()));
        ck.tensors.push((format!("policy_b{i}"), b.clone()));
    }
    for (i, (w, b)) in value.mlp.weights.iter().zip(&value.mlp.biases).enumerate() {
        ck.tensors.push((format!("value_w{i}"), w.clone()));
        ck.tensors.push((format!("value_b{i}"), b.clone()));
    }
    ck.save(path)
}

/// Load a policy/value pair saved by [`save_agent`].
pub fn load_agent(path: &Path) -> Result<(PolicyNet, ValueNet)> {
    let ck = Checkpoint::load(path)?;
    let bad = |msg: String| SniaError::BadCheckpoint {
        path: path.display().to_string(),
        msg,
    };
    if ck.meta.get("kind").map(String::as_str) != Some("ppo-agent") {
        return Err(bad("not an agent checkpoint".into()));
    }
    let collect = |prefix: &str| -> Result<Mlp> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0.. {
            match (ck.tensor(&format!("{prefix}_w{i}")), ck.tensor(&format!("{prefix}_b{i}"))) {
                (Some(w), Some(b)) => {
                    weights.push(w.clone());
                    biases.push(b.clone());
                }
                (None, None) => break,
                _ => return Err(bad(format!("uneven tensors for {prefix}"))),
            }
        }
        if weights.is_empty() {
            return Err(bad(format!("no tensors for {prefix}")));
        }
        Ok(Mlp { weights, biases })
    };
    Ok((PolicyNet { mlp: collect("policy")? }, ValueNet { mlp: collect("value")? }))
}

/// Shared leaf registration order for the update step: policy parameters
/// then value parameters.
pub(crate) fn all_params_mut<'a>(policy: &'a mut PolicyNet, value: &'a mut ValueNet) -> Vec<&'a mut Matrix> {
    let mut out = policy.mlp.params_mut();
    out.extend(value.mlp.params_mut());
    out
}

pub(crate) fn all_params<'a>(policy: &'a PolicyNet, value: &'a ValueNet) -> Vec<&'a Matrix> {
    let mut out = policy.mlp.params();
    out.extend(value.mlp.params());
    out
}

/// Mask row expressed as 1.0/0.0 plus its complement pinned to the masked
/// logit, shared by the update path.
pub(crate) fn mask_matrices(masks: &[Vec<bool>]) -> (Rc<Matrix>, Rc<Matrix>) {
    let rows = masks.len();
    let cols = masks[0].len();
    let mut keep = Matrix::zeros(rows, cols);
    let mut pin = Matrix::zeros(rows, cols);
    for (r, mask) in masks.iter().enumerate() {
        for (c, &m) in mask.iter().enumerate() {
            if m {
                keep.set(r, c, 1.0);
            } else {
                pin.set(r, c, MASKED_LOGIT);
            }
        }
    }
    (Rc::new(keep), Rc::new(pin))
}
