use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_finite, layer_sizes, AlgoError, Seeds, Stream};
use crate::chain::{Observation, NUM_ACTIONS, OBS_DIM};
use crate::demos::{DemoError, DemoSet};
use crate::nn::{adam_step, backward, categorical_head, forward, Matrix, NetParams, OptState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Full shuffled passes over the demonstration pairs.
    pub epochs: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            epochs: 4096,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    /// Mean cross-entropy over all pairs before training.
    pub initial_loss: f64,
    /// Mean cross-entropy over all pairs after training.
    pub final_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Every (observation, action) pair in the demonstrations, in file order.
pub fn bc_dataset(demos: &DemoSet) -> (Vec<Observation>, Vec<usize>) {
    demos
        .episodes
        .iter()
        .flat_map(|e| e.steps.iter().map(|s| (s.observation, s.action)))
        .unzip()
}

fn cross_entropy(actor: &NetParams, obs: &[Observation], actions: &[usize]) -> Result<f64, AlgoError> {
    let x = Matrix::from_vec(obs.len(), OBS_DIM, obs.iter().flatten().copied().collect());
    let (logits, _) = forward(actor, &x)?;
    let pi = categorical_head(&logits);
    let n = actions.len() as f64;
    Ok(-actions.iter().enumerate().map(|(i, &a)| pi.log_probs.get(i, a)).sum::<f64>() / n)
}

/// Maximum-likelihood actor on the demonstrated actions.
pub fn bc_train(
    demos: &DemoSet,
    hidden: &[usize],
    cfg: &BcConfig,
    seed: u64,
) -> Result<(NetParams, BcReport), AlgoError> {
    let (obs, actions) = bc_dataset(demos);
    if obs.is_empty() {
        return Err(DemoError::Empty.into());
    }
    if cfg.batch_size == 0 {
        return Err(AlgoError::Config("BC batch size must be positive".into()));
    }
    let seeds = Seeds(seed);
    let mut actor = NetParams::init(&layer_sizes(OBS_DIM, hidden, NUM_ACTIONS), seeds.seed(Stream::BcInit))?;
    let mut opt = OptState::new(&actor);
    let mut rng = seeds.rng(Stream::BcShuffle);

    let mut report = BcReport {
        initial_loss: cross_entropy(&actor, &obs, &actions)?,
        epoch_losses: Vec::with_capacity(cfg.epochs),
        ..BcReport::default()
    };
    let mut order: Vec<usize> = (0..obs.len()).collect();
    let mut dlogp = [0.0; NUM_ACTIONS];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len();
            let inv = 1.0 / n as f64;
            let x = Matrix::from_vec(n, OBS_DIM, chunk.iter().flat_map(|&i| obs[i]).collect());
            let (logits, tape) = forward(&actor, &x)?;
            let pi = categorical_head(&logits);
            let mut g = Matrix::zeros(n, NUM_ACTIONS);
            let mut loss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let a = actions[i];
                loss -= pi.log_probs.get(r, a) * inv;
                pi.log_prob_grad(r, a, &mut dlogp);
                for (j, v) in g.row_mut(r).iter_mut().enumerate() {
                    *v = -dlogp[j] * inv;
                }
            }
            check_finite("BC loss", loss)?;
            let grads = backward(&actor, &tape, &g)?;
            adam_step(&mut actor, &grads, &mut opt, cfg.lr)?;
            epoch_loss += loss;
            batches += 1;
        }
        report.epoch_losses.push(epoch_loss / batches as f64);
    }
    report.final_loss = cross_entropy(&actor, &obs, &actions)?;
    Ok((actor, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain;
    use crate::demos::mix;
    use crate::nn::forward_rows;

    fn p_right(actor: &NetParams, obs: Observation) -> f64 {
        categorical_head(&forward_rows(actor, &[obs]).unwrap()).prob(0, 1)
    }

    #[test]
    fn single_optimal_demo_is_cloned() {
        let demos = mix(1, 0, 40).unwrap();
        let cfg = BcConfig {
            epochs: 300,
            ..BcConfig::default()
        };
        let (actor, report) = bc_train(&demos, &[32, 32], &cfg, 0).unwrap();
        for s in &demos.episodes[0].steps {
            assert!(p_right(&actor, s.observation) > 0.99);
        }
        assert!(report.final_loss < report.initial_loss);
    }

    #[test]
    fn mixed_demos_match_empirical_frequency_at_start() {
        // Both experts pass through (0, 0) only; every other state is visited by one of them.
        let demos = mix(1, 1, 40).unwrap();
        let start = chain::observe(chain::reset(40).unwrap());
        let (obs, actions) = bc_dataset(&demos);
        let at_start: Vec<usize> = obs.iter().zip(&actions).filter(|(o, _)| **o == start).map(|(_, &a)| a).collect();
        let empirical = at_start.iter().filter(|&&a| a == 1).count() as f64 / at_start.len() as f64;
        assert_eq!(empirical, 0.5);

        let cfg = BcConfig {
            epochs: 4096,
            ..BcConfig::default()
        };
        let (actor, _) = bc_train(&demos, &[32, 32], &cfg, 1).unwrap();
        let p = p_right(&actor, start);
        assert!((p - empirical).abs() < 0.1, "p(right | start) = {p}");
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let demos = mix(1, 3, 40).unwrap();
        let cfg = BcConfig {
            epochs: 50,
            ..BcConfig::default()
        };
        let (a, ra) = bc_train(&demos, &[16], &cfg, 5).unwrap();
        let (b, rb) = bc_train(&demos, &[16], &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.epoch_losses.len(), 50);
        assert!(ra.final_loss < ra.initial_loss);
        assert!(ra.epoch_losses.last().unwrap() < ra.epoch_losses.first().unwrap());
    }
}
