use rand::Rng;
use serde::{Deserialize, Serialize};

use super::seeds::item_rng;
use super::AlgoError;
use crate::chain::{self, Action, ChainState, Observation};
use crate::demos::{Episode, EpisodeStep, Source};
use crate::nn::{categorical_head, forward_rows, NetParams};
use crate::par;

/// Episodes stepped together through one batched forward pass.
pub const EVAL_CHUNK: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub returns: Vec<f64>,
}

impl EvalStats {
    pub fn from_returns(returns: Vec<f64>) -> Option<Self> {
        if returns.is_empty() {
            return None;
        }
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
        let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self { mean, min, max, returns })
    }
}

fn run_chunk(actor: &NetParams, size: usize, seed: u64, first: usize, count: usize, source: Source) -> Result<Vec<Episode>, AlgoError> {
    let mut rngs: Vec<_> = (first..first + count).map(|i| item_rng(seed, i)).collect();
    let mut states: Vec<ChainState> = vec![chain::reset(size)?; count];
    let mut steps: Vec<Vec<EpisodeStep>> = vec![Vec::with_capacity(chain::horizon(size)); count];
    // Every walk lasts exactly `size - 1` steps, so all episodes finish together.
    for _ in 0..chain::horizon(size) {
        let obs: Vec<Observation> = states.iter().map(|&s| chain::observe(s)).collect();
        let pi = categorical_head(&forward_rows(actor, &obs)?);
        for e in 0..count {
            let u: f64 = rngs[e].gen();
            let a = pi.sample(e, u);
            let st = chain::step(states[e], Action::try_from(a)?)?;
            steps[e].push(EpisodeStep {
                observation: obs[e],
                action: a,
                reward: st.reward,
            });
            states[e] = st.next;
        }
    }
    Ok(steps.into_iter().map(|s| Episode::from_steps(source, s, true)).collect())
}

/// `n` stochastic episodes of `actor`; episode `i` draws from its own stream of `seed`.
pub fn run_episodes(actor: &NetParams, size: usize, n: usize, seed: u64, source: Source) -> Result<Vec<Episode>, AlgoError> {
    let chunks = n.div_ceil(EVAL_CHUNK);
    let parts = par::map_range(chunks, |c| {
        let first = c * EVAL_CHUNK;
        run_chunk(actor, size, seed, first, EVAL_CHUNK.min(n - first), source)
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean, min and max undiscounted return over `n` stochastic episodes.
pub fn evaluate(actor: &NetParams, size: usize, n: usize, seed: u64) -> Result<EvalStats, AlgoError> {
    let returns = run_episodes(actor, size, n, seed, Source::Agent)?
        .iter()
        .map(|e| e.total_return)
        .collect();
    EvalStats::from_returns(returns).ok_or_else(|| AlgoError::Config("evaluation needs at least one episode".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::AgentNets;
    use crate::nn::{Layer, Matrix};

    fn biased_actor(bias: [f64; 2]) -> NetParams {
        NetParams::from_layers(vec![Layer {
            weight: Matrix::zeros(2, 2),
            bias: bias.to_vec(),
        }])
        .unwrap()
    }

    #[test]
    fn saturated_right_actor_scores_100() {
        let s = evaluate(&biased_actor([0.0, 100.0]), 40, 100, 0).unwrap();
        assert!((s.mean - 100.0).abs() < 1e-9);
        assert_eq!(s.returns.len(), 100);
    }

    #[test]
    fn left_actor_scores_zero_and_uniform_is_nonpositive() {
        let s = evaluate(&biased_actor([100.0, 0.0]), 40, 30, 0).unwrap();
        assert_eq!((s.mean, s.min, s.max), (0.0, 0.0, 0.0));
        let u = evaluate(&biased_actor([0.0, 0.0]), 40, 100, 3).unwrap();
        assert!(u.max <= 0.0);
        assert!(u.mean < -10.0);
    }

    #[test]
    fn episodes_match_sequential_single_runs() {
        let nets = AgentNets::new(&[8, 8], 2, 3).unwrap();
        let all = run_episodes(&nets.actor, 40, 60, 11, Source::Agent).unwrap();
        assert_eq!(all.len(), 60);
        for (i, ep) in all.iter().enumerate() {
            let single = run_chunk(&nets.actor, 40, 11, i, 1, Source::Agent).unwrap();
            assert_eq!(single[0].steps.iter().map(|s| s.action).collect::<Vec<_>>(),
                ep.steps.iter().map(|s| s.action).collect::<Vec<_>>());
            assert!(ep.replay_matches(40).is_ok());
        }
    }

    #[test]
    fn zero_episodes_is_an_error() {
        assert!(evaluate(&biased_actor([0.0, 0.0]), 40, 0, 0).is_err());
    }
}
