//! On-policy rollout storage and generalized advantage estimation.
//!
//! Layout is `[env][step]`: each parallel environment owns a contiguous
//! lane so the GAE recursion can walk segments backward. The buffer is
//! filled over one collection phase, post-processed once, consumed by the
//! update phase, and emptied.

use crate::error::{Result, SniaError};
use super::PpoConfig;

#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    num_envs: usize,
    steps_per_env: usize,
    embed_dim: usize,
    num_actions: usize,
    embeds: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    logp_old: Vec<f64>,
    values_old: Vec<f64>,
    masks: Vec<bool>,
    dones: Vec<bool>,
    /// Value of the state each lane was left in, for bootstrapping
    /// truncated segments.
    bootstrap: Vec<f64>,
    cursor: Vec<usize>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
    processed: bool,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, steps_per_env: usize, embed_dim: usize, num_actions: usize) -> Self {
        let n = num_envs * steps_per_env;
        RolloutBuffer {
            num_envs,
            steps_per_env,
            embed_dim,
            num_actions,
            embeds: vec![0.0; n * embed_dim],
            actions: vec![0; n],
            rewards: vec![0.0; n],
            logp_old: vec![0.0; n],
            values_old: vec![0.0; n],
            masks: vec![false; n * num_actions],
            dones: vec![false; n],
            bootstrap: vec![0.0; num_envs],
            cursor: vec![0; num_envs],
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
            processed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.num_envs * self.steps_per_env
    }

    pub fn is_empty(&self) -> bool {
        self.cursor.iter().all(|&c| c == 0)
    }

    pub fn is_full(&self) -> bool {
        self.cursor.iter().all(|&c| c == self.steps_per_env)
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn flat(&self, env: usize, step: usize) -> usize {
        env * self.steps_per_env + step
    }

    /// Record one transition for a lane.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        env: usize,
        embed: &[f64],
        mask: &[bool],
        action: usize,
        reward: f64,
        logp: f64,
        value: f64,
        done: bool,
    ) {
        let step = self.cursor[env];
        debug_assert!(step < self.steps_per_env, "lane {env} overflow");
        let i = self.flat(env, step);
        self.embeds[i * self.embed_dim..(i + 1) * self.embed_dim].copy_from_slice(embed);
        self.masks[i * self.num_actions..(i + 1) * self.num_actions].copy_from_slice(mask);
        self.actions[i] = action;
        self.rewards[i] = reward;
        self.logp_old[i] = logp;
        self.values_old[i] = value;
        self.dones[i] = done;
        self.cursor[env] = step + 1;
        self.processed = false;
    }

    /// Value estimate of the state each lane stopped in (ignored where the
    /// lane's final transition was terminal).
    pub fn set_bootstrap(&mut self, env: usize, value: f64) {
        self.bootstrap[env] = value;
    }

    /// Empty the buffer for the next collection phase.
    pub fn clear(&mut self) {
        self.cursor.iter_mut().for_each(|c| *c = 0);
        self.processed = false;
    }

    /// Backward GAE recursion per lane:
    /// `A_t = delta_t + gamma * lambda * A_{t+1}`, truncated at done flags
    /// and at the segment boundary; returns are `A_t + V(s_t)`.
    pub fn compute_gae(&mut self, cfg: &PpoConfig) -> Result<()> {
        if !self.is_full() {
            return Err(SniaError::Usage(
                "compute_gae called before the collection phase completed".into(),
            ));
        }
        for env in 0..self.num_envs {
            let mut next_adv = 0.0;
            let mut next_value = self.bootstrap[env];
            for step in (0..self.steps_per_env).rev() {
                let i = self.flat(env, step);
                let (nv, na) = if self.dones[i] { (0.0, 0.0) } else { (next_value, next_adv) };
                let delta = self.rewards[i] + cfg.gamma * nv - self.values_old[i];
                let adv = delta + cfg.gamma * cfg.lambda * na;
                self.advantages[i] = adv;
                self.returns[i] = adv + self.values_old[i];
                next_adv = adv;
                next_value = self.values_old[i];
            }
        }
        self.processed = true;
        Ok(())
    }

    pub fn processed(&self) -> bool {
        self.processed
    }

    pub fn embed(&self, i: usize) -> &[f64] {
        &self.embeds[i * self.embed_dim..(i + 1) * self.embed_dim]
    }

    pub fn mask(&self, i: usize) -> &[bool] {
        &self.masks[i * self.num_actions..(i + 1) * self.num_actions]
    }

    pub fn action(&self, i: usize) -> usize {
        self.actions[i]
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    pub fn logp_old(&self, i: usize) -> f64 {
        self.logp_old[i]
    }

    pub fn value_old(&self, i: usize) -> f64 {
        self.values_old[i]
    }

    pub fn advantage(&self, i: usize) -> f64 {
        self.advantages[i]
    }

    pub fn episode_return(&self, i: usize) -> f64 {
        self.returns[i]
    }

    pub fn done(&self, i: usize) -> bool {
        self.dones[i]
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::gae_double_sum;

    fn tiny_cfg() -> PpoConfig {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            ..PpoConfig::default()
        }
    }

    fn fill_lane(buf: &mut RolloutBuffer, rewards: &[f64], values: &[f64], dones: &[bool]) {
        for ((&r, &v), &d) in rewards.iter().zip(values).zip(dones) {
            buf.push(0, &[0.0, 0.0], &[true, true, true], 0, r, 0.0, v, d);
        }
    }

    #[test]
    fn gae_spec_example() {
        // rewards [1, 1], values [0, 0], terminal at the end:
        // A_1 = 1, A_0 = 1 + 0.99 * 0.95 = 1.9405
        let mut buf = RolloutBuffer::new(1, 2, 2, 3);
        fill_lane(&mut buf, &[1.0, 1.0], &[0.0, 0.0], &[false, true]);
        buf.set_bootstrap(0, 0.0);
        buf.compute_gae(&tiny_cfg()).unwrap();
        assert!((buf.advantage(1) - 1.0).abs() < 1e-12);
        assert!((buf.advantage(0) - 1.9405).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_collapses_to_td_error() {
        let mut cfg = tiny_cfg();
        cfg.lambda = 0.0;
        let mut buf = RolloutBuffer::new(1, 3, 2, 3);
        fill_lane(&mut buf, &[0.5, -0.2, 1.0], &[0.3, 0.1, -0.4], &[false, false, false]);
        buf.set_bootstrap(0, 0.7);
        buf.compute_gae(&cfg).unwrap();
        let deltas = [
            0.5 + 0.99 * 0.1 - 0.3,
            -0.2 + 0.99 * -0.4 - 0.1,
            1.0 + 0.99 * 0.7 - -0.4,
        ];
        for (i, d) in deltas.iter().enumerate() {
            assert!((buf.advantage(i) - d).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rewards_and_values_give_zero_gae() {
        let mut buf = RolloutBuffer::new(1, 4, 2, 3);
        fill_lane(&mut buf, &[0.0; 4], &[0.0; 4], &[false, true, false, true]);
        buf.set_bootstrap(0, 0.0);
        buf.compute_gae(&tiny_cfg()).unwrap();
        for i in 0..4 {
            assert_eq!(buf.advantage(i), 0.0);
            assert_eq!(buf.episode_return(i), 0.0);
        }
    }

    #[test]
    fn recursion_matches_double_sum_oracle_on_random_trajectories() {
        let mut rng = crate::seeding::component_rng(17, "gae-oracle");
        use rand::Rng;
        let cfg = tiny_cfg();
        for _ in 0..200 {
            let steps = rng.gen_range(1..12);
            let rewards: Vec<f64> = (0..steps).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..steps).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let dones: Vec<bool> = (0..steps).map(|_| rng.gen_bool(0.25)).collect();
            let bootstrap = rng.gen_range(-2.0..2.0);
            let mut buf = RolloutBuffer::new(1, steps, 1, 1);
            for i in 0..steps {
                buf.push(0, &[0.0], &[true], 0, rewards[i], 0.0, values[i], dones[i]);
            }
            buf.set_bootstrap(0, bootstrap);
            buf.compute_gae(&cfg).unwrap();
            let want = gae_double_sum(&rewards, &values, &dones, bootstrap, cfg.gamma, cfg.lambda);
            for i in 0..steps {
                assert!(
                    (buf.advantage(i) - want[i]).abs() < 1e-12,
                    "step {i}: {} vs {}",
                    buf.advantage(i),
                    want[i]
                );
            }
        }
    }

    #[test]
    fn gae_requires_full_buffer() {
        let mut buf = RolloutBuffer::new(1, 2, 1, 1);
        buf.push(0, &[0.0], &[true], 0, 0.0, 0.0, 0.0, false);
        assert!(buf.compute_gae(&tiny_cfg()).is_err());
    }
}
