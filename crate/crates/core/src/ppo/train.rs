//! The alternating collect/update training loop.
//!
//! A fixed pool of environments runs in lockstep so every policy and value
//! forward is one batched matrix product; at episode boundaries the
//! finished lane resamples a goal uniformly and resets. After each
//! collection phase the buffer is post-processed (GAE) and consumed by the
//! update phase, then emptied. Greedy evaluation over a fixed goal grid
//! runs every `eval_every` epochs, keeps the best checkpoint, and stops
//! early after `patience` stale evaluations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{all_params, greedy_action, masked_distribution, ppo_update, PolicyNet, PpoConfig, RolloutBuffer, ValueNet, MASKED_LOGIT};
use crate::env::{embed_state_into, embedding_len, AttackEnv, AttackGoal, EpisodeState, LabelBank};
use crate::error::{Result, SniaError};
use crate::graph::Graph;
use crate::seeding::component_rng;
use crate::tensor::ops::log_softmax_row_slice;
use crate::tensor::{AdamState, LrSchedule, Matrix};
use crate::victim::VictimModel;

/// What the agent trains against.
pub struct TrainTask<'a> {
    pub graph: &'a Graph,
    pub victim: &'a VictimModel,
    pub bank: &'a LabelBank,
    /// Goal pool sampled uniformly at episode boundaries.
    pub goals: Vec<AttackGoal>,
    pub budget: usize,
}

/// One line of the training log (serialized as JSONL).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_reward: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_success: Option<f64>,
}

pub struct TrainOutcome {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub log: Vec<EpochLog>,
    /// Success rate of the returned checkpoint on the evaluation grid, if
    /// any evaluation ran.
    pub best_success: Option<f64>,
}

/// Train a policy/value pair against the task. Deterministic in `seed`.
pub fn train(task: &TrainTask, cfg: &PpoConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    if task.goals.is_empty() {
        return Err(SniaError::Usage("empty goal pool".into()));
    }
    let env = AttackEnv::new(task.graph, task.victim, task.budget)?;
    let input_dim = embedding_len(task.graph);
    let num_actions = task.graph.num_features();

    let mut init_rng = component_rng(seed, "agent-init");
    let mut goal_rng = component_rng(seed, "agent-goals");
    let mut action_rng = component_rng(seed, "agent-actions");
    let mut batch_rng = component_rng(seed, "agent-batches");
    let mut eval_rng = component_rng(seed, "agent-eval");

    let mut policy = PolicyNet::new(input_dim, num_actions, &mut init_rng);
    let mut value = ValueNet::new(input_dim, &mut init_rng);
    let params = all_params(&policy, &value);
    let mut adam = AdamState::new(
        cfg.lr,
        LrSchedule::LinearDecay {
            total_steps: cfg.train_epochs * cfg.update_steps,
        },
        &params,
    );

    let eval_grid: Vec<AttackGoal> = if task.goals.len() <= cfg.eval_goal_cap {
        task.goals.clone()
    } else {
        let mut pool = task.goals.clone();
        for i in (1..pool.len()).rev() {
            pool.swap(i, eval_rng.gen_range(0..=i));
        }
        pool.truncate(cfg.eval_goal_cap);
        pool
    };

    let sample_goal = |rng: &mut ChaCha8Rng| task.goals[rng.gen_range(0..task.goals.len())];
    let mut states: Vec<EpisodeState> = (0..cfg.parallel_envs)
        .map(|_| env.reset(sample_goal(&mut goal_rng)))
        .collect::<Result<_>>()?;

    let mut buffer = RolloutBuffer::new(cfg.parallel_envs, cfg.steps_per_env, input_dim, num_actions);
    let mut embeds = Matrix::zeros(cfg.parallel_envs, input_dim);
    let mut mask_scratch: Vec<bool> = Vec::with_capacity(num_actions);
    let mut logp_scratch: Vec<f64> = vec![0.0; num_actions];

    let mut log = Vec::with_capacity(cfg.train_epochs);
    let mut best: Option<(f64, PolicyNet, ValueNet)> = None;
    let mut stale_evals = 0usize;

    for epoch in 1..=cfg.train_epochs {
        buffer.clear();
        for _ in 0..cfg.steps_per_env {
            for (e, st) in states.iter().enumerate() {
                embed_state_into(st, task.bank, embeds.row_mut(e));
            }
            let logits = policy.logits(&embeds);
            let values = value.values(&embeds);
            for e in 0..cfg.parallel_envs {
                mask_scratch.clear();
                mask_scratch.extend_from_slice(states[e].mask());
                // masked log-softmax through the same kernel the update
                // uses, so stored log-probs reproduce exactly
                for (dst, (&logit, &m)) in logp_scratch.iter_mut().zip(logits.row(e).iter().zip(&mask_scratch)) {
                    *dst = if m { logit } else { MASKED_LOGIT };
                }
                log_softmax_row_slice(&mut logp_scratch);
                let action = sample_from_log_probs(&logp_scratch, &mask_scratch, &mut action_rng);
                let logp = logp_scratch[action];
                let (reward, done) = env.step(&mut states[e], action)?;
                buffer.push(e, embeds.row(e), &mask_scratch, action, reward, logp, values[e], done);
                if done {
                    states[e] = env.reset(sample_goal(&mut goal_rng))?;
                }
            }
        }
        // bootstrap values of the states each lane was left in
        for (e, st) in states.iter().enumerate() {
            embed_state_into(st, task.bank, embeds.row_mut(e));
        }
        let boot = value.values(&embeds);
        for (e, v) in boot.iter().enumerate() {
            buffer.set_bootstrap(e, *v);
        }
        buffer.compute_gae(cfg)?;
        let lr_now = adam.current_lr();
        let stats = ppo_update(&mut policy, &mut value, &buffer, cfg, &mut adam, &mut batch_rng)?;

        let mut entry = EpochLog {
            epoch,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            mean_reward: buffer.mean_reward(),
            lr: lr_now,
            eval_success: None,
        };

        if epoch % cfg.eval_every == 0 {
            let success = greedy_success_rate(&env, task.bank, &policy, &eval_grid)?;
            entry.eval_success = Some(success);
            let improved = best.as_ref().map_or(true, |(b, _, _)| success > *b);
            if improved {
                best = Some((success, policy.clone(), value.clone()));
                stale_evals = 0;
            } else {
                stale_evals += 1;
            }
            log::info!(
                "epoch {epoch}: eval success {:.4} (best {:.4}, stale {stale_evals})",
                success,
                best.as_ref().map(|(b, _, _)| *b).unwrap_or(success)
            );
            if stale_evals >= cfg.patience {
                log.push(entry);
                break;
            }
        }
        log.push(entry);
    }

    let (best_success, policy, value) = match best {
        Some((s, p, v)) => (Some(s), p, v),
        None => (None, policy, value),
    };
    Ok(TrainOutcome {
        policy,
        value,
        log,
        best_success,
    })
}

/// Gumbel-Max draw over the unmasked support of a log-probability row.
pub fn sample_from_log_probs(logp: &[f64], mask: &[bool], rng: &mut ChaCha8Rng) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (&lp, &m)) in logp.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let gumbel = -(-u.ln()).ln();
        if lp + gumbel > best_score {
            best_score = lp + gumbel;
            best = i;
        }
    }
    debug_assert_ne!(best, usize::MAX, "all actions masked");
    best
}

/// Greedy policy rollouts over a goal grid, in lockstep chunks; returns
/// the fraction of goals achieved.
pub fn greedy_success_rate(
    env: &AttackEnv,
    bank: &LabelBank,
    policy: &PolicyNet,
    goals: &[AttackGoal],
) -> Result<f64> {
    let outcomes = greedy_rollouts(env, bank, policy, goals)?;
    let hits = outcomes.iter().filter(|o| o.success).count();
    Ok(hits as f64 / goals.len().max(1) as f64)
}

/// Outcome of one greedy rollout.
pub struct RolloutOutcome {
    pub goal: AttackGoal,
    pub success: bool,
    /// Probability of the targeted label at the terminal state.
    pub final_prob: f64,
    pub features: Vec<usize>,
    pub queries: usize,
}

/// Run the greedy policy to terminal on every goal.
pub fn greedy_rollouts(
    env: &AttackEnv,
    bank: &LabelBank,
    policy: &PolicyNet,
    goals: &[AttackGoal],
) -> Result<Vec<RolloutOutcome>> {
    const CHUNK: usize = 512;
    let input_dim = embedding_len(env.graph());
    let mut out = Vec::with_capacity(goals.len());
    for chunk in goals.chunks(CHUNK) {
        let mut states: Vec<EpisodeState> = chunk.iter().map(|&g| env.reset(g)).collect::<Result<_>>()?;
        let mut embeds = Matrix::zeros(chunk.len(), input_dim);
        for _ in 0..env.budget() {
            for (e, st) in states.iter().enumerate() {
                embed_state_into(st, bank, embeds.row_mut(e));
            }
            let logits = policy.logits(&embeds);
            for (e, st) in states.iter_mut().enumerate() {
                let dist = masked_distribution(logits.row(e), st.mask())?;
                let action = greedy_action(&dist);
                env.step(st, action)?;
            }
        }
        for st in &states {
            out.push(RolloutOutcome {
                goal: st.goal(),
                success: env.success(st)?,
                final_prob: st.last_prob(),
                features: st.injected().injected_features().to_vec(),
                queries: st.queries(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_label_bank;
    use crate::graph::make_splits;
    use crate::testkit;
    use crate::victim::{train_victim, GnnArchitecture};

    #[test]
    fn single_epoch_cycle_completes_and_logs() {
        let mut rng = component_rng(21, "train-test");
        let g = testkit::random_graph(&mut rng, 16, 8, 2, 8);
        let split = make_splits(&g, 0).unwrap();
        let victim = train_victim(&g, &split, &GnnArchitecture::gcn(), 0).unwrap();
        let bank = build_label_bank(&g, &victim).unwrap();
        let goals: Vec<AttackGoal> = split
            .target_ids
            .iter()
            .flat_map(|&t| (0..2).map(move |l| AttackGoal { target: t, label: l }))
            .collect();
        let task = TrainTask {
            graph: &g,
            victim: &victim,
            bank: &bank,
            goals,
            budget: 2,
        };
        let cfg = PpoConfig {
            parallel_envs: 4,
            steps_per_env: 8,
            batch_size: 16,
            update_steps: 2,
            train_epochs: 1,
            ..PpoConfig::default()
        };
        let outcome = train(&task, &cfg, 7).unwrap();
        assert_eq!(outcome.log.len(), 1);
        assert!(outcome.log[0].entropy > 0.0);
        assert!(outcome.best_success.is_none());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = component_rng(22, "train-det");
        let g = testkit::random_graph(&mut rng, 14, 6, 2, 6);
        let split = make_splits(&g, 1).unwrap();
        let victim = train_victim(&g, &split, &GnnArchitecture::gcn(), 1).unwrap();
        let bank = build_label_bank(&g, &victim).unwrap();
        let goals: Vec<AttackGoal> = split.target_ids.iter().map(|&t| AttackGoal { target: t, label: 0 }).collect();
        let task = TrainTask {
            graph: &g,
            victim: &victim,
            bank: &bank,
            goals,
            budget: 2,
        };
        let cfg = PpoConfig {
            parallel_envs: 2,
            steps_per_env: 6,
            batch_size: 8,
            update_steps: 2,
            train_epochs: 2,
            ..PpoConfig::default()
        };
        let a = train(&task, &cfg, 5).unwrap();
        let b = train(&task, &cfg, 5).unwrap();
        let logs_equal = a
            .log
            .iter()
            .zip(&b.log)
            .all(|(x, y)| x.policy_loss == y.policy_loss && x.mean_reward == y.mean_reward);
        assert!(logs_equal);
        let x = Matrix::row_vector(vec![0.1; embedding_len(&g)]);
        assert_eq!(a.policy.logits(&x), b.policy.logits(&x));
    }
}
