//! The clipped-surrogate parameter update.
//!
//! Per update step: sample a minibatch, rebuild the masked policy
//! distribution on the tape, form the clipped ratio loss against the
//! stored collection-time log-probabilities, add the Huber value loss and
//! the entropy bonus, and take one Adam step over both networks with
//! global-norm gradient clipping.

use rand_chacha::ChaCha8Rng;

use super::{all_params, all_params_mut, mask_matrices, PolicyNet, PpoConfig, RolloutBuffer, ValueNet};
use crate::error::{Result, SniaError};
use crate::tensor::{clip_grad_norm, AdamState, Matrix, Tape, Var};

/// Per-phase loss statistics, averaged over the update steps.
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean policy entropy (positive; the loss term is its negation).
    pub entropy: f64,
    /// Fraction of minibatch samples whose ratio left the clip interval.
    pub clip_fraction: f64,
    pub total_loss: f64,
}

/// Losses plus gradients (in [`all_params`] order) of the full PPO
/// objective on one minibatch.
pub(crate) fn loss_and_grads(
    policy: &PolicyNet,
    value: &ValueNet,
    buffer: &RolloutBuffer,
    batch: &[usize],
    cfg: &PpoConfig,
) -> Result<(UpdateStats, Vec<Matrix>)> {
    let b = batch.len();
    let dim = buffer.embed_dim();
    let mut x = Matrix::zeros(b, dim);
    for (r, &i) in batch.iter().enumerate() {
        x.row_mut(r).copy_from_slice(buffer.embed(i));
    }
    let masks: Vec<Vec<bool>> = batch.iter().map(|&i| buffer.mask(i).to_vec()).collect();
    let (keep, pin) = mask_matrices(&masks);
    let entries: Vec<(usize, usize)> = batch.iter().enumerate().map(|(r, &i)| (r, buffer.action(i))).collect();
    let old_logp: Vec<f64> = batch.iter().map(|&i| buffer.logp_old(i)).collect();
    let returns: Vec<f64> = batch.iter().map(|&i| buffer.episode_return(i)).collect();

    // advantage normalization per minibatch
    let raw_adv: Vec<f64> = batch.iter().map(|&i| buffer.advantage(i)).collect();
    let mean = raw_adv.iter().sum::<f64>() / b as f64;
    let var = raw_adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / b as f64;
    let std = var.sqrt();
    let adv: Vec<f64> = raw_adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect();

    let mut tape = Tape::new();
    let p_leaves = policy.mlp.leaves(&mut tape);
    let v_leaves = value.mlp.leaves(&mut tape);
    let x_in = tape.constant(x);

    let logits = policy.mlp.forward_on_tape(&mut tape, &p_leaves, x_in)?;
    let keep_c = tape.shared_constant(keep);
    let pin_c = tape.shared_constant(pin);
    let kept = tape.hadamard(logits, keep_c)?;
    let masked = tape.add(kept, pin_c)?;
    let logp_all = tape.log_softmax_row(masked)?;
    let probs_all = tape.exp(logp_all);
    let logp_a = tape.pick(logp_all, &entries)?;
    let old_c = tape.constant(Matrix::col_vector(old_logp));
    let logdiff = tape.sub(logp_a, old_c)?;
    let ratio = tape.exp(logdiff);
    let adv_c = tape.constant(Matrix::col_vector(adv));
    let surr = tape.hadamard(ratio, adv_c)?;
    let clipped_ratio = tape.clamp(ratio, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip);
    let clipped_surr = tape.hadamard(clipped_ratio, adv_c)?;
    let pess = tape.min_elem(surr, clipped_surr)?;
    let neg_pess = tape.scale(pess, -1.0);
    let policy_loss = tape.mean_all(neg_pess);

    // negative entropy: sum_a pi ln pi over the unmasked support (masked
    // entries contribute an exact zero)
    let plogp = tape.hadamard(probs_all, logp_all)?;
    let ent_rows = tape.row_sum(plogp);
    let entropy_loss = tape.mean_all(ent_rows);

    let v_out = value.mlp.forward_on_tape(&mut tape, &v_leaves, x_in)?;
    let ret_c = tape.constant(Matrix::col_vector(returns));
    let v_err = tape.sub(v_out, ret_c)?;
    let huber = tape.huber_unit(v_err);
    let value_loss = tape.mean_all(huber);

    let weighted_entropy = tape.scale(entropy_loss, cfg.beta_entropy);
    let pv = tape.add(policy_loss, value_loss)?;
    let total = tape.add(pv, weighted_entropy)?;

    let stats = UpdateStats {
        policy_loss: tape.value(policy_loss).scalar_value(),
        value_loss: tape.value(value_loss).scalar_value(),
        entropy: -tape.value(entropy_loss).scalar_value(),
        clip_fraction: {
            let r = tape.value(ratio);
            let clipped = r.data().iter().filter(|v| (**v - 1.0).abs() > cfg.eps_clip).count();
            clipped as f64 / b as f64
        },
        total_loss: tape.value(total).scalar_value(),
    };
    if !stats.total_loss.is_finite() {
        return Err(SniaError::Training(format!(
            "non-finite PPO loss: policy {} value {} entropy {}",
            stats.policy_loss, stats.value_loss, stats.entropy
        )));
    }

    tape.backward(total)?;
    // leaves in all_params order: policy weights, policy biases, value
    // weights, value biases
    let ordered: Vec<Var> = p_leaves
        .iter()
        .map(|(w, _)| *w)
        .chain(p_leaves.iter().map(|(_, b)| *b))
        .chain(v_leaves.iter().map(|(w, _)| *w))
        .chain(v_leaves.iter().map(|(_, b)| *b))
        .collect();
    let params = all_params(policy, value);
    let grads: Vec<Matrix> = ordered
        .iter()
        .enumerate()
        .map(|(slot, var)| match tape.grad(*var) {
            Some(g) => g.clone(),
            None => Matrix::zeros(params[slot].rows(), params[slot].cols()),
        })
        .collect();
    Ok((stats, grads))
}

/// Run `cfg.update_steps` minibatch updates over a processed buffer.
pub fn ppo_update(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    if !buffer.processed() {
        return Err(SniaError::Usage("ppo_update before compute_gae".into()));
    }
    let n = buffer.len();
    let batch_size = cfg.batch_size.min(n);
    let mut agg = UpdateStats::default();
    for _ in 0..cfg.update_steps {
        let batch = rand::seq::index::sample(rng, n, batch_size).into_vec();
        let (stats, mut grads) = loss_and_grads(policy, value, buffer, &batch, cfg)?;
        clip_grad_norm(&mut grads, cfg.grad_clip);
        let grad_refs: Vec<Option<&Matrix>> = grads.iter().map(Some).collect();
        let mut params = all_params_mut(policy, value);
        adam.step(&mut params, &grad_refs)?;
        agg.policy_loss += stats.policy_loss;
        agg.value_loss += stats.value_loss;
        agg.entropy += stats.entropy;
        agg.clip_fraction += stats.clip_fraction;
        agg.total_loss += stats.total_loss;
    }
    let p = cfg.update_steps as f64;
    agg.policy_loss /= p;
    agg.value_loss /= p;
    agg.entropy /= p;
    agg.clip_fraction /= p;
    agg.total_loss /= p;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::component_rng;

    #[test]
    fn clip_function_branch_table() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(vec![1.3, 0.5, 1.0]), false);
        let c = tape.clamp(x, 0.9, 1.1);
        assert_eq!(tape.value(c).data(), &[1.1, 0.9, 1.0]);
    }

    #[test]
    fn value_loss_branch_values() {
        // continuous Huber with unit transition: 0.5^2/2 = 0.125 inside,
        // |2| - 0.5 = 1.5 outside; the as-printed piecewise form (|x|
        // outside) would jump from 0.5 to 1 at the boundary, so the
        // continuous form is the one implemented
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(vec![0.5, 2.0, 1.0, -1.0]), false);
        let h = tape.huber_unit(x);
        assert_eq!(tape.value(h).data(), &[0.125, 1.5, 0.5, 0.5]);
    }

    /// Buffer filled with the policy's own log-probs through the same
    /// kernel the update uses, as the collection loop does.
    fn synthetic_buffer(policy: &PolicyNet, value: &ValueNet, n_actions: usize, steps: usize) -> RolloutBuffer {
        let dim = policy.mlp.input_dim();
        let mut buf = RolloutBuffer::new(1, steps, dim, n_actions);
        let mut rng = component_rng(3, "synth");
        use rand::Rng;
        for t in 0..steps {
            let embed: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut mask = vec![true; n_actions];
            mask[t % n_actions] = false;
            let logits = policy.logits(&Matrix::row_vector(embed.clone()));
            let mut row: Vec<f64> = logits
                .row(0)
                .iter()
                .zip(&mask)
                .map(|(&v, &m)| if m { v } else { super::super::MASKED_LOGIT })
                .collect();
            crate::tensor::ops::log_softmax_row_slice(&mut row);
            let action = (t + 1) % n_actions;
            let v = value.values(&Matrix::row_vector(embed.clone()))[0];
            buf.push(0, &embed, &mask, action, rng.gen_range(-1.0..1.0), row[action], v, t % 5 == 4);
        }
        buf.set_bootstrap(0, 0.0);
        buf
    }

    #[test]
    fn first_update_has_unit_ratios() {
        let mut rng = component_rng(1, "init");
        let policy = PolicyNet::new(8, 5, &mut rng);
        let value = ValueNet::new(8, &mut rng);
        let mut buf = synthetic_buffer(&policy, &value, 5, 16);
        let cfg = PpoConfig {
            batch_size: 16,
            update_steps: 1,
            ..PpoConfig::default()
        };
        buf.compute_gae(&cfg).unwrap();
        let batch: Vec<usize> = (0..16).collect();
        let (stats, _) = loss_and_grads(&policy, &value, &buf, &batch, &cfg).unwrap();
        // stored log-probs came from the same parameters and the same
        // kernel, so every ratio is exactly one and nothing clips
        assert_eq!(stats.clip_fraction, 0.0);
        // and the pessimistic surrogate equals the plain one: policy loss
        // is the negated mean normalized advantage, which is ~0 by
        // construction of the normalization
        assert!(stats.policy_loss.abs() < 1e-12, "{}", stats.policy_loss);
    }

    #[test]
    fn entropy_upper_bound_is_log_unmasked_count() {
        let mut rng = component_rng(2, "ent");
        let policy = PolicyNet::new(8, 6, &mut rng);
        let value = ValueNet::new(8, &mut rng);
        let mut buf = synthetic_buffer(&policy, &value, 6, 8);
        let cfg = PpoConfig {
            batch_size: 8,
            update_steps: 1,
            ..PpoConfig::default()
        };
        buf.compute_gae(&cfg).unwrap();
        let batch: Vec<usize> = (0..8).collect();
        let (stats, _) = loss_and_grads(&policy, &value, &buf, &batch, &cfg).unwrap();
        // every row has one masked action: entropy <= ln(5)
        assert!(stats.entropy <= (5f64).ln() + 1e-12);
        assert!(stats.entropy > 0.0);
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let mut rng = component_rng(9, "fd");
        let policy = PolicyNet::new(6, 4, &mut rng);
        let value = ValueNet::new(6, &mut rng);
        let mut buf = synthetic_buffer(&policy, &value, 4, 8);
        let cfg = PpoConfig {
            batch_size: 8,
            update_steps: 1,
            ..PpoConfig::default()
        };
        buf.compute_gae(&cfg).unwrap();
        let batch: Vec<usize> = (0..8).collect();
        let (_, grads) = loss_and_grads(&policy, &value, &buf, &batch, &cfg).unwrap();

        let h = 1e-6;
        // probe a few coordinates in several parameter tensors across both
        // networks (param order: policy weights, policy biases, value
        // weights, value biases)
        let probes = [(0usize, 0usize, 1usize), (1, 3, 2), (6, 0, 0), (8, 0, 3)];
        for &(slot, r, c) in &probes {
            let perturbed_loss = |delta: f64| -> f64 {
                let mut p2 = policy.clone();
                let mut v2 = value.clone();
                {
                    let mut params = all_params_mut(&mut p2, &mut v2);
                    let old = params[slot].get(r, c);
                    params[slot].set(r, c, old + delta);
                }
                let (stats, _) = loss_and_grads(&p2, &v2, &buf, &batch, &cfg).unwrap();
                stats.total_loss
            };
            let fd = (perturbed_loss(h) - perturbed_loss(-h)) / (2.0 * h);
            let an = grads[slot].get(r, c);
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(err < 1e-4, "slot {slot} ({r},{c}): fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn unclipped_single_update_matches_vanilla_policy_gradient() {
        // with an effectively infinite clip range and unit ratios, the
        // clipped-surrogate gradient equals the vanilla policy-gradient
        // estimate -mean(adv * grad logpi)
        let mut rng = component_rng(4, "vpg");
        let policy = PolicyNet::new(6, 4, &mut rng);
        let value = ValueNet::new(6, &mut rng);
        let mut buf = synthetic_buffer(&policy, &value, 4, 8);
        let mut cfg = PpoConfig {
            batch_size: 8,
            update_steps: 1,
            beta_entropy: 0.0,
            ..PpoConfig::default()
        };
        buf.compute_gae(&cfg).unwrap();
        let batch: Vec<usize> = (0..8).collect();
        cfg.eps_clip = 0.999_999;
        let (_, grads_wide) = loss_and_grads(&policy, &value, &buf, &batch, &cfg).unwrap();
        cfg.eps_clip = 0.1;
        let (_, grads_narrow) = loss_and_grads(&policy, &value, &buf, &batch, &cfg).unwrap();
        // at unit ratios nothing clips either way: both equal the vanilla
        // estimate, hence each other
        for (a, b) in grads_wide.iter().zip(&grads_narrow) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
