use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rollout::RolloutBatch;
use super::{check_finite, AgentNets, AlgoError};
use crate::chain::Observation;
use crate::nn::{adam_step, backward, categorical_head, forward, Gradients, Matrix, NetParams};
use crate::returns::gae;

/// Below this standard deviation minibatch advantages are left unnormalized.
pub const ADV_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub gamma: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            lr: 2e-4,
            minibatch: 32,
            epochs: 3,
            gamma: 0.99,
        }
    }
}

/// One PPO minibatch with advantages already in their final (possibly normalized) form.
#[derive(Debug, Clone, Default)]
pub struct PpoMinibatch {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub log_probs_old: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoLoss {
    /// `-mean(min(ρÂ, clip(ρ)Â)) - c_H · mean(H)`.
    pub policy: f64,
    /// `-mean(min(ρÂ, clip(ρ)Â))` alone.
    pub surrogate: f64,
    /// `-mean(ρÂ)`, the unclipped surrogate.
    pub unclipped: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss and parameter gradients for one minibatch.
pub fn ppo_minibatch_loss(
    actor: &NetParams,
    critic: &NetParams,
    mb: &PpoMinibatch,
    cfg: &PpoConfig,
) -> Result<(PpoLoss, Gradients, Gradients), AlgoError> {
    let n = mb.actions.len();
    let inv = 1.0 / n as f64;
    let x = Matrix::from_vec(n, 2, mb.observations.iter().flatten().copied().collect());
    let (logits, actor_tape) = forward(actor, &x)?;
    let (values, critic_tape) = forward(critic, &x)?;
    let pi = categorical_head(&logits);

    let mut loss = PpoLoss::default();
    let mut g_logits = Matrix::zeros(n, logits.cols());
    let mut g_values = Matrix::zeros(n, 1);
    let mut dlogp = vec![0.0; logits.cols()];
    let mut dent = vec![0.0; logits.cols()];
    for i in 0..n {
        let a = mb.actions[i];
        let adv = mb.advantages[i];
        let logp = pi.log_probs.get(i, a);
        let log_ratio = logp - mb.log_probs_old[i];
        let ratio = log_ratio.exp();
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let unclipped_obj = ratio * adv;
        let clipped_obj = clipped * adv;
        let uses_clipped = clipped_obj < unclipped_obj;
        loss.surrogate -= unclipped_obj.min(clipped_obj) * inv;
        loss.unclipped -= unclipped_obj * inv;
        loss.entropy += pi.entropy[i] * inv;
        loss.approx_kl += ((ratio - 1.0) - log_ratio) * inv;
        if (ratio - 1.0).abs() > cfg.clip {
            loss.clip_fraction += inv;
        }

        // d(-surrogate)/dlogp = -ρÂ when the unclipped branch is the minimum.
        let coef_logp = if uses_clipped { 0.0 } else { -unclipped_obj * inv };
        pi.log_prob_grad(i, a, &mut dlogp);
        pi.entropy_grad(i, &mut dent);
        for (j, g) in g_logits.row_mut(i).iter_mut().enumerate() {
            *g = coef_logp * dlogp[j] - cfg.entropy_coef * inv * dent[j];
        }

        let err = values.get(i, 0) - mb.value_targets[i];
        loss.value += err * err * inv;
        g_values.set(i, 0, 2.0 * err * inv);
    }
    loss.policy = loss.surrogate - cfg.entropy_coef * loss.entropy;
    check_finite("PPO policy loss", loss.policy)?;
    check_finite("PPO value loss", loss.value)?;

    let ga = backward(actor, &actor_tape, &g_logits)?;
    let gc = backward(critic, &critic_tape, &g_values)?;
    Ok((loss, ga, gc))
}

fn normalize(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ADV_STD_FLOOR {
        return;
    }
    for a in adv {
        *a = (*a - mean) / std;
    }
}

/// Clipped-surrogate update over `cfg.epochs` passes of shuffled minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    nets: &mut AgentNets,
    rollout: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoMetrics, AlgoError> {
    if rollout.is_empty() {
        return Ok(PpoMetrics::default());
    }
    let advantages = gae(
        &rollout.rewards,
        &rollout.values_with_bootstrap(),
        &rollout.dones,
        cfg.gamma,
        cfg.gae_lambda,
    )?;
    let targets: Vec<f64> = advantages.iter().zip(&rollout.values_old).map(|(a, v)| a + v).collect();

    let mut order: Vec<usize> = (0..rollout.len()).collect();
    let mut metrics = PpoMetrics::default();
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            let mut mb = PpoMinibatch {
                observations: chunk.iter().map(|&i| rollout.observations[i]).collect(),
                actions: chunk.iter().map(|&i| rollout.actions[i]).collect(),
                log_probs_old: chunk.iter().map(|&i| rollout.log_probs_old[i]).collect(),
                advantages: chunk.iter().map(|&i| advantages[i]).collect(),
                value_targets: chunk.iter().map(|&i| targets[i]).collect(),
            };
            normalize(&mut mb.advantages);
            let (loss, ga, gc) = ppo_minibatch_loss(&nets.actor, &nets.critic, &mb, cfg)?;
            adam_step(&mut nets.actor, &ga, &mut nets.actor_opt, cfg.lr)?;
            adam_step(&mut nets.critic, &gc, &mut nets.critic_opt, cfg.lr)?;
            metrics.policy_loss += loss.policy;
            metrics.value_loss += loss.value;
            metrics.entropy += loss.entropy;
            metrics.approx_kl += loss.approx_kl;
            metrics.clip_fraction += loss.clip_fraction;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    metrics.policy_loss /= c;
    metrics.value_loss /= c;
    metrics.entropy /= c;
    metrics.approx_kl /= c;
    metrics.clip_fraction /= c;
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{Collector, Seeds, Stream};
    use crate::nn::{Layer, NetParams};

    fn linear(w: [[f64; 2]; 2], b: [f64; 2]) -> NetParams {
        NetParams::from_layers(vec![Layer {
            weight: Matrix::from_rows(&w),
            bias: b.to_vec(),
        }])
        .unwrap()
    }

    fn scalar_critic(bias: f64) -> NetParams {
        NetParams::from_layers(vec![Layer {
            weight: Matrix::zeros(1, 2),
            bias: vec![bias],
        }])
        .unwrap()
    }

    #[test]
    fn single_transition_matches_hand_computed_surrogate() {
        // logits = (0, 1) at obs (1, 0) → p = (1/(1+e), e/(1+e)).
        let actor = linear([[0.0, 0.0], [1.0, 0.0]], [0.0, 0.0]);
        let critic = scalar_critic(0.5);
        let e = 1f64.exp();
        let p1 = e / (1.0 + e);
        let logp_old = (0.5f64).ln();
        let mb = PpoMinibatch {
            observations: vec![[1.0, 0.0]],
            actions: vec![1],
            log_probs_old: vec![logp_old],
            advantages: vec![2.0],
            value_targets: vec![3.0],
        };
        let cfg = PpoConfig::default();
        let (loss, _, gc) = ppo_minibatch_loss(&actor, &critic, &mb, &cfg).unwrap();

        let ratio = p1 / 0.5; // ≈ 1.462 > 1.2, so the clipped branch binds
        let surrogate = (ratio * 2.0f64).min(1.2 * 2.0);
        let h = -(p1 * p1.ln() + (1.0 - p1) * (1.0 - p1).ln());
        assert!((loss.surrogate + surrogate).abs() < 1e-12);
        assert!((loss.policy - (-surrogate - 0.01 * h)).abs() < 1e-12);
        assert!((loss.value - 2.5f64.powi(2)).abs() < 1e-12);
        assert_eq!(loss.clip_fraction, 1.0);
        // d/db (V - 3)² = 2(0.5 - 3)
        assert!((gc.layers()[0].bias[0] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn on_policy_ratio_is_one_and_objectives_coincide() {
        let nets = AgentNets::new(&[16, 16], 3, 4).unwrap();
        let mut c = Collector::new(40, Seeds(1).rng(Stream::Rollout)).unwrap();
        let (batch, _) = c.collect(&nets, 200).unwrap();
        let pi = nets.policy(&batch.observations).unwrap();
        for i in 0..batch.len() {
            let r = (pi.log_probs.get(i, batch.actions[i]) - batch.log_probs_old[i]).exp();
            assert!((r - 1.0).abs() < 1e-9);
        }
        let mb = PpoMinibatch {
            observations: batch.observations[..32].to_vec(),
            actions: batch.actions[..32].to_vec(),
            log_probs_old: batch.log_probs_old[..32].to_vec(),
            advantages: (0..32).map(|i| (i as f64 - 16.0) / 8.0).collect(),
            value_targets: vec![0.0; 32],
        };
        let (loss, _, _) = ppo_minibatch_loss(&nets.actor, &nets.critic, &mb, &PpoConfig::default()).unwrap();
        assert!((loss.surrogate - loss.unclipped).abs() < 1e-9);
        assert_eq!(loss.clip_fraction, 0.0);
    }

    #[test]
    fn zero_advantages_leave_only_entropy_gradient() {
        let nets = AgentNets::new(&[8], 3, 4).unwrap();
        let obs = vec![[-1.0, -1.0], [0.2, 0.5], [-0.3, 0.9]];
        let mut mb = PpoMinibatch {
            observations: obs.clone(),
            actions: vec![0, 1, 1],
            log_probs_old: vec![-0.7, -0.7, -0.7],
            advantages: vec![0.0; 3],
            value_targets: vec![0.0; 3],
        };
        normalize(&mut mb.advantages);
        assert_eq!(mb.advantages, vec![0.0; 3]);
        let cfg = PpoConfig::default();
        let (_, ga, _) = ppo_minibatch_loss(&nets.actor, &nets.critic, &mb, &cfg).unwrap();

        // Oracle: gradient of -c_H · mean(H) alone, via backward on the entropy term.
        let x = Matrix::from_rows(&obs);
        let (logits, tape) = forward(&nets.actor, &x).unwrap();
        let pi = categorical_head(&logits);
        let mut g = Matrix::zeros(3, 2);
        let mut dent = [0.0; 2];
        for i in 0..3 {
            pi.entropy_grad(i, &mut dent);
            for j in 0..2 {
                g.set(i, j, -cfg.entropy_coef * dent[j] / 3.0);
            }
        }
        let want = backward(&nets.actor, &tape, &g).unwrap();
        for (a, b) in ga.flatten().iter().zip(want.flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_guard() {
        let mut a = vec![1.0, 3.0];
        normalize(&mut a);
        assert_eq!(a, vec![-1.0, 1.0]);
        let mut same = vec![2.0; 4];
        normalize(&mut same);
        assert_eq!(same, vec![2.0; 4]);
    }

    #[test]
    fn update_is_deterministic_and_changes_params() {
        let nets0 = AgentNets::new(&[8, 8], 1, 2).unwrap();
        let mut c = Collector::new(40, Seeds(5).rng(Stream::Rollout)).unwrap();
        let (batch, _) = c.collect(&nets0, 100).unwrap();
        let run = || {
            let mut nets = nets0.clone();
            let mut rng = Seeds(5).rng(Stream::Minibatch);
            let m = ppo_update(&mut nets, &batch, &PpoConfig::default(), &mut rng).unwrap();
            (nets, m)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert_ne!(a.actor, nets0.actor);
        // 3 epochs × ceil(100 / 32) minibatches.
        assert_eq!(a.actor_opt.step_count(), 12);
    }
}
