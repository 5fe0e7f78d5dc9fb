use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, AgentNets, AlgoError};
use crate::chain::Observation;
use crate::nn::{adam_step, backward, categorical_head, forward, Gradients, Matrix, NetParams};
use crate::replay::{PrioritizedBuffer, SampledBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilConfig {
    /// Prioritized batches sampled, one gradient step each, per SIL update.
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_weight: f64,
    pub value_loss_weight: f64,
    pub entropy_coef: f64,
    /// Count a sample's entropy only when its advantage is positive, so a
    /// transition no better than the critic's estimate contributes nothing.
    pub entropy_positive_only: bool,
    pub gamma: f64,
    pub lr: f64,
}

impl Default for SilConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 256,
            loss_weight: 10.0,
            value_loss_weight: 0.01,
            entropy_coef: 0.01,
            entropy_positive_only: true,
            gamma: 0.99,
            lr: 2e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SilBatch {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
    /// Importance weights; all ones for an unweighted batch.
    pub weights: Vec<f64>,
}

impl From<&SampledBatch> for SilBatch {
    fn from(b: &SampledBatch) -> Self {
        Self {
            observations: b.transitions.iter().map(|t| t.observation).collect(),
            actions: b.transitions.iter().map(|t| t.action).collect(),
            returns: b.transitions.iter().map(|t| t.return_r).collect(),
            weights: b.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SilLoss {
    /// `-mean(w·A⁺·log π) - α·mean(H)`, with `H` masked per [`SilConfig::entropy_positive_only`].
    pub policy: f64,
    /// `mean(w·(A⁺)²)`.
    pub value: f64,
    pub entropy: f64,
    /// `w_sil · (policy + β·value)`, the quantity differentiated.
    pub total: f64,
    /// Unclipped `R - V(s)` per sample, before the step.
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SilMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean demonstration fraction over the sampled batches.
    pub demo_fraction: f64,
    /// Fraction of samples with a positive advantage.
    pub positive_fraction: f64,
}

/// Self-imitation loss on one batch with gradients for actor and critic.
pub fn sil_batch_loss(
    actor: &NetParams,
    critic: &NetParams,
    batch: &SilBatch,
    cfg: &SilConfig,
) -> Result<(SilLoss, Gradients, Gradients), AlgoError> {
    let n = batch.actions.len();
    let inv = 1.0 / n as f64;
    let x = Matrix::from_vec(n, 2, batch.observations.iter().flatten().copied().collect());
    let (logits, actor_tape) = forward(actor, &x)?;
    let (values, critic_tape) = forward(critic, &x)?;
    let pi = categorical_head(&logits);

    let mut loss = SilLoss {
        advantages: Vec::with_capacity(n),
        ..SilLoss::default()
    };
    let mut g_logits = Matrix::zeros(n, logits.cols());
    let mut g_values = Matrix::zeros(n, 1);
    let mut dlogp = vec![0.0; logits.cols()];
    let mut dent = vec![0.0; logits.cols()];
    let w_sil = cfg.loss_weight;
    for i in 0..n {
        let a = batch.actions[i];
        let w = batch.weights[i];
        let adv = batch.returns[i] - values.get(i, 0);
        loss.advantages.push(adv);
        let clipped = adv.max(0.0);
        let logp = pi.log_probs.get(i, a);
        loss.policy -= w * clipped * logp * inv;
        loss.value += w * clipped * clipped * inv;
        let ent_w = match (cfg.entropy_positive_only, adv > 0.0) {
            (false, _) => 1.0,
            (true, true) => w,
            (true, false) => 0.0,
        };
        loss.entropy += ent_w * pi.entropy[i] * inv;

        pi.log_prob_grad(i, a, &mut dlogp);
        pi.entropy_grad(i, &mut dent);
        for (j, g) in g_logits.row_mut(i).iter_mut().enumerate() {
            *g = w_sil * (-w * clipped * inv * dlogp[j] - cfg.entropy_coef * ent_w * inv * dent[j]);
        }
        // d(A⁺)²/dV = -2A⁺
        g_values.set(i, 0, w_sil * cfg.value_loss_weight * (-2.0 * w * clipped * inv));
    }
    loss.policy -= cfg.entropy_coef * loss.entropy;
    loss.total = w_sil * (loss.policy + cfg.value_loss_weight * loss.value);
    check_finite("SIL loss", loss.total)?;

    let ga = backward(actor, &actor_tape, &g_logits)?;
    let gc = backward(critic, &critic_tape, &g_values)?;
    Ok((loss, ga, gc))
}

/// `cfg.epochs` prioritized batches, one Adam step each, refreshing the
/// priorities of every sampled index with its clipped advantage.
pub fn sil_update<R: Rng + ?Sized>(
    nets: &mut AgentNets,
    buffer: &mut PrioritizedBuffer,
    cfg: &SilConfig,
    rng: &mut R,
) -> Result<SilMetrics, AlgoError> {
    let mut m = SilMetrics::default();
    for _ in 0..cfg.epochs {
        let sampled = buffer.sample(cfg.batch_size, rng)?;
        let batch = SilBatch::from(&sampled);
        let (loss, ga, gc) = sil_batch_loss(&nets.actor, &nets.critic, &batch, cfg)?;
        adam_step(&mut nets.actor, &ga, &mut nets.actor_opt, cfg.lr)?;
        adam_step(&mut nets.critic, &gc, &mut nets.critic_opt, cfg.lr)?;
        buffer.update_priorities(&sampled.indices, &loss.advantages)?;
        m.policy_loss += loss.policy;
        m.value_loss += loss.value;
        m.entropy += loss.entropy;
        m.demo_fraction += sampled.demo_fraction;
        m.positive_fraction +=
            loss.advantages.iter().filter(|&&a| a > 0.0).count() as f64 / loss.advantages.len().max(1) as f64;
    }
    let c = cfg.epochs.max(1) as f64;
    m.policy_loss /= c;
    m.value_loss /= c;
    m.entropy /= c;
    m.demo_fraction /= c;
    m.positive_fraction /= c;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::mix;
    use crate::nn::forward_rows;
    use crate::replay::ReplayConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entropy_only_grad(actor: &NetParams, obs: &[Observation], cfg: &SilConfig) -> Vec<f64> {
        let x = Matrix::from_rows(obs);
        let (logits, tape) = forward(actor, &x).unwrap();
        let pi = categorical_head(&logits);
        let n = obs.len() as f64;
        let mut g = Matrix::zeros(obs.len(), 2);
        let mut dent = [0.0; 2];
        for i in 0..obs.len() {
            pi.entropy_grad(i, &mut dent);
            for j in 0..2 {
                g.set(i, j, -cfg.loss_weight * cfg.entropy_coef * dent[j] / n);
            }
        }
        backward(actor, &tape, &g).unwrap().flatten()
    }

    #[test]
    fn transitions_below_value_contribute_only_entropy() {
        let nets = AgentNets::new(&[8, 8], 1, 2).unwrap();
        let obs = vec![[-1.0, -1.0], [0.5, 0.1], [-0.2, 0.7], [0.0, 0.0]];
        let values = forward_rows(&nets.critic, &obs).unwrap();
        let batch = SilBatch {
            observations: obs.clone(),
            actions: vec![1, 0, 1, 0],
            returns: (0..4).map(|i| values.get(i, 0) - 1.0 - i as f64).collect(),
            weights: vec![1.0, 0.5, 0.7, 1.0],
        };
        let cfg = SilConfig {
            entropy_positive_only: false,
            ..SilConfig::default()
        };
        let (loss, ga, gc) = sil_batch_loss(&nets.actor, &nets.critic, &batch, &cfg).unwrap();
        assert_eq!(loss.value, 0.0);
        assert!(gc.flatten().iter().all(|&g| g == 0.0));
        let want = entropy_only_grad(&nets.actor, &obs, &cfg);
        for (a, b) in ga.flatten().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(loss.advantages.iter().all(|&a| a < 0.0));

        // Masked entropy: the same batch contributes nothing at all.
        let (loss, ga, _) = sil_batch_loss(&nets.actor, &nets.critic, &batch, &SilConfig::default()).unwrap();
        assert!(ga.flatten().iter().all(|&g| g == 0.0));
        assert_eq!((loss.policy, loss.entropy, loss.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_positive_sample_pushes_along_log_prob() {
        // Zero critic, R = 100: policy part is -100·∇log π(a|s), entropy term switched off.
        let nets = AgentNets::new(&[8], 3, 4).unwrap();
        let critic = NetParams::zeros(&[2, 8, 1]).unwrap();
        let obs = [[-1.0, -1.0]];
        let batch = SilBatch {
            observations: obs.to_vec(),
            actions: vec![1],
            returns: vec![100.0],
            weights: vec![1.0],
        };
        let cfg = SilConfig {
            loss_weight: 1.0,
            entropy_coef: 0.0,
            ..SilConfig::default()
        };
        let (loss, ga, _) = sil_batch_loss(&nets.actor, &critic, &batch, &cfg).unwrap();
        assert_eq!(loss.advantages, vec![100.0]);

        let x = Matrix::from_rows(&obs);
        let (logits, tape) = forward(&nets.actor, &x).unwrap();
        let pi = categorical_head(&logits);
        let mut d = [0.0; 2];
        pi.log_prob_grad(0, 1, &mut d);
        let g = Matrix::from_rows(&[[-100.0 * d[0], -100.0 * d[1]]]);
        let want = backward(&nets.actor, &tape, &g).unwrap().flatten();
        for (a, b) in ga.flatten().iter().zip(want) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        assert!((loss.policy + 100.0 * pi.log_probs.get(0, 1)).abs() < 1e-12);
        assert!((loss.value - 1e4).abs() < 1e-9);
    }

    #[test]
    fn adversarial_only_buffer_leaves_preference_unchanged() {
        let demos = mix(0, 3, 40).unwrap();
        let critic = NetParams::zeros(&[2, 8, 1]).unwrap();
        let mut buffer = PrioritizedBuffer::new(ReplayConfig::default());
        buffer.pin_demos(&demos, &critic, 0.99).unwrap();

        let cfg = SilConfig {
            epochs: 5,
            batch_size: 32,
            ..SilConfig::default()
        };
        let actor = AgentNets::new(&[8], 7, 8).unwrap().actor;
        let mut nets = AgentNets::from_params(actor.clone(), critic.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = sil_update(&mut nets, &mut buffer, &cfg, &mut rng).unwrap();
        assert_eq!(nets.actor, actor);
        assert_eq!(nets.critic, critic);
        assert_eq!(m.demo_fraction, 1.0);
        assert_eq!(m.positive_fraction, 0.0);
        assert!(buffer.iter().all(|t| t.priority == 1e-6));
    }

    #[test]
    fn update_refreshes_sampled_priorities() {
        let demos = mix(1, 0, 40).unwrap();
        let nets0 = AgentNets::new(&[8, 8], 1, 2).unwrap();
        let mut buffer = PrioritizedBuffer::new(ReplayConfig::default());
        buffer.pin_demos(&demos, &nets0.critic, 0.99).unwrap();
        let before: Vec<f64> = buffer.iter().map(|t| t.priority).collect();
        let cfg = SilConfig {
            epochs: 1,
            batch_size: 8,
            ..SilConfig::default()
        };
        let mut nets = nets0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = sil_update(&mut nets, &mut buffer, &cfg, &mut rng).unwrap();
        assert_eq!(m.demo_fraction, 1.0);
        assert_eq!(nets.actor_opt.step_count(), 1);
        // Priorities were computed from the same critic before the step, so they match push-time values.
        let after: Vec<f64> = buffer.iter().map(|t| t.priority).collect();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
