use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AgentNets, AlgoError};
use crate::chain::{self, Action, ChainState, Observation};
use crate::demos::{Episode, EpisodeStep, Source};

/// Fixed-length slice of on-policy experience.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub log_probs_old: Vec<f64>,
    pub values_old: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic value of the state after the last step; 0 if that step ended an episode.
    pub bootstrap_value: f64,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `values_old` followed by the bootstrap value, as GAE expects.
    pub fn values_with_bootstrap(&self) -> Vec<f64> {
        let mut v = self.values_old.clone();
        v.push(self.bootstrap_value);
        v
    }
}

/// Steps one Chain environment with the current actor, carrying an unfinished
/// episode over to the next call.
#[derive(Debug, Clone)]
pub struct Collector {
    size: usize,
    state: ChainState,
    partial: Vec<EpisodeStep>,
    rng: ChaCha8Rng,
}

impl Collector {
    pub fn new(size: usize, rng: ChaCha8Rng) -> Result<Self, AlgoError> {
        Ok(Self {
            size,
            state: chain::reset(size)?,
            partial: Vec::new(),
            rng,
        })
    }

    /// Collects exactly `steps` transitions; returns the batch and every episode finished during it.
    pub fn collect(&mut self, nets: &AgentNets, steps: usize) -> Result<(RolloutBatch, Vec<Episode>), AlgoError> {
        let mut batch = RolloutBatch::default();
        let mut finished = Vec::new();
        for _ in 0..steps {
            let obs = chain::observe(self.state);
            let pi = nets.policy(&[obs])?;
            let value = nets.values(&[obs])?[0];
            let u: f64 = self.rng.gen();
            let a = pi.sample(0, u);
            let st = chain::step(self.state, Action::try_from(a)?)?;

            batch.observations.push(obs);
            batch.actions.push(a);
            batch.rewards.push(st.reward);
            batch.log_probs_old.push(pi.log_probs.get(0, a));
            batch.values_old.push(value);
            batch.dones.push(st.done);
            self.partial.push(EpisodeStep {
                observation: obs,
                action: a,
                reward: st.reward,
            });

            if st.done {
                let steps = std::mem::take(&mut self.partial);
                finished.push(Episode::from_steps(Source::Agent, steps, true));
                self.state = chain::reset(self.size)?;
            } else {
                self.state = st.next;
            }
        }
        batch.bootstrap_value = match batch.dones.last() {
            Some(false) => nets.values(&[chain::observe(self.state)])?[0],
            _ => 0.0,
        };
        Ok((batch, finished))
    }
}
