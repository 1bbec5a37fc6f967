use super::VectorEnv;
use crate::engine::OBS_LEN;
use crate::nn::{forward, softmax_rows, NetworkParams, NnError};

/// `steps` synchronous transitions from every slot, stored env-major: entry
/// `(e, t)` lives at index `e * steps + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub steps: usize,
    pub observations: Vec<f32>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic value of each slot's state after the last step.
    pub bootstrap_values: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.num_envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn returns_f32(&self) -> Vec<f32> {
        self.returns.iter().map(|&r| r as f32).collect()
    }
}

/// `R_t = r_t + gamma * (1 - done_t) * R_{t+1}` with `R_T = bootstrap`.
pub fn n_step_returns(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for t in (0..rewards.len()).rev() {
        r = rewards[t] + if dones[t] { 0.0 } else { gamma * r };
        out[t] = r;
    }
    out
}

/// Plays `steps` steps in every slot with actions sampled from the policy.
pub fn collect_rollout(venv: &mut VectorEnv<'_>, params: &NetworkParams<f32>, steps: usize, gamma: f64) -> Result<RolloutBatch, NnError> {
    let e = venv.num_envs();
    let mut batch = RolloutBatch {
        num_envs: e,
        steps,
        observations: vec![0.0; e * steps * OBS_LEN],
        actions: vec![0; e * steps],
        rewards: vec![0.0; e * steps],
        dones: vec![false; e * steps],
        bootstrap_values: vec![0.0; e],
        returns: vec![0.0; e * steps],
    };
    for t in 0..steps {
        let obs = venv.observations();
        let out = forward(params, &obs)?;
        let probs: Vec<f64> = softmax_rows(&out.logits, out.logit_count).iter().map(|&p| p as f64).collect();
        let actions = venv.sample_actions(&probs);
        let outcomes = venv.step(&actions);
        for (i, o) in outcomes.iter().enumerate() {
            let k = i * steps + t;
            batch.observations[k * OBS_LEN..(k + 1) * OBS_LEN].copy_from_slice(&obs[i * OBS_LEN..(i + 1) * OBS_LEN]);
            batch.actions[k] = actions[i];
            batch.rewards[k] = o.reward.as_f64();
            batch.dones[k] = o.done;
        }
    }
    let last = forward(params, &venv.observations())?;
    let values = last.values.expect("actor-critic network");
    for (i, &v) in values.iter().enumerate().take(e) {
        batch.bootstrap_values[i] = v as f64;
        let span = i * steps..(i + 1) * steps;
        let r = n_step_returns(&batch.rewards[span.clone()], &batch.dones[span.clone()], batch.bootstrap_values[i], gamma);
        batch.returns[span].copy_from_slice(&r);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::PaletteId;
    use crate::levelgen::{generate, GenConstraints};
    use crate::nn::Heads;

    #[test]
    fn gamma_zero_gives_rewards() {
        let r = [-0.1, 0.9, -1.1, 10.9, -0.1];
        let d = [false, false, false, true, false];
        assert_eq!(n_step_returns(&r, &d, 3.0, 0.0), r.to_vec());
    }

    #[test]
    fn terminal_cuts_the_bootstrap() {
        let r = [-0.1, -0.1, 10.9, -0.1, -0.1];
        let d = [false, false, true, false, false];
        let out = n_step_returns(&r, &d, 2.0, 0.99);
        assert_eq!(out[2], 10.9);
        assert_eq!(out[4], -0.1 + 0.99 * 2.0);
        assert_eq!(out[3], -0.1 + 0.99 * out[4]);
        assert_eq!(out[1], -0.1 + 0.99 * 10.9);
    }

    #[test]
    fn constant_penalty_sum() {
        let out = n_step_returns(&[-0.1; 5], &[false; 5], 0.0, 0.99);
        let direct: f64 = (0..5).map(|k| -0.1 * 0.99f64.powi(k)).sum();
        assert!((out[0] - direct).abs() < 1e-15);
        assert!((out[0] + 0.490099501).abs() < 1e-9);
    }

    #[test]
    fn rollout_shapes_and_returns() {
        let set = generate(4, 1, 6, &GenConstraints::trivial()).unwrap();
        let mut env = VectorEnv::new(&set.levels, 3, 1, PaletteId::Base).unwrap();
        let p = NetworkParams::<f32>::init(Heads::ActorCritic, 2);
        let b = collect_rollout(&mut env, &p, 5, 0.99).unwrap();
        assert_eq!(b.len(), 15);
        assert_eq!(b.observations.len(), 15 * OBS_LEN);
        for e in 0..3 {
            let s = e * 5..(e + 1) * 5;
            assert_eq!(
                b.returns[s.clone()],
                n_step_returns(&b.rewards[s.clone()], &b.dones[s], b.bootstrap_values[e], 0.99)[..]
            );
        }
    }
}
