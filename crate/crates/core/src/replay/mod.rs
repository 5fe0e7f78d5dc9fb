//! Prioritized replay with pinned demonstrations.
//!
//! Slots `0..pinned` hold demonstration transitions and are never evicted.
//! Agent transitions live in a FIFO ring of fixed capacity after them. A
//! transition's priority is its clipped advantage `max(R - V(s), 0) + ε_p`;
//! it is drawn with probability `priority^α / Σ priority^α`.

mod sum_tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::Observation;
use crate::demos::{DemoSet, Episode};
use crate::nn::{forward_rows, NetParams, NnError};
use crate::returns::{discounted_returns, ReturnsError};

pub use sum_tree::SumTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    /// Agent-region capacity.
    pub capacity: usize,
    /// Priority exponent.
    pub alpha: f64,
    /// Importance-sampling exponent.
    pub beta_is: f64,
    /// Priority floor.
    pub eps_priority: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 100_000,
            alpha: 0.6,
            beta_is: 0.1,
            eps_priority: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub action: usize,
    /// Discounted Monte-Carlo return from this step to the end of its episode.
    pub return_r: f64,
    pub is_demo: bool,
    pub priority: f64,
}

#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub demo_fraction: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("demonstrations are already pinned")]
    AlreadyPinned,
    #[error("no demonstration transitions to pin")]
    NoDemos,
    #[error("episode is incomplete")]
    IncompleteEpisode,
    #[error("buffer is empty")]
    Empty,
    #[error("index {index} out of range for buffer of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{indices} indices but {advantages} advantages")]
    LengthMismatch { indices: usize, advantages: usize },
    #[error("non-finite advantage {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Returns(#[from] ReturnsError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    cfg: ReplayConfig,
    pinned: Vec<Transition>,
    agent: Vec<Transition>,
    /// Next ring slot to overwrite once the agent region is full.
    head: usize,
    tree: SumTree,
}

/// Fraction of demonstration transitions in a batch.
pub fn demo_fraction_of(transitions: &[Transition]) -> f64 {
    if transitions.is_empty() {
        return 0.0;
    }
    transitions.iter().filter(|t| t.is_demo).count() as f64 / transitions.len() as f64
}

impl PrioritizedBuffer {
    pub fn new(cfg: ReplayConfig) -> Self {
        Self {
            cfg,
            pinned: Vec::new(),
            agent: Vec::new(),
            head: 0,
            tree: SumTree::new(cfg.capacity),
        }
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.pinned.len() + self.agent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pinned_len(&self) -> usize {
        self.pinned.len()
    }

    pub fn agent_len(&self) -> usize {
        self.agent.len()
    }

    pub fn pinned(&self) -> &[Transition] {
        &self.pinned
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        if index < self.pinned.len() {
            self.pinned.get(index)
        } else {
            self.agent.get(index - self.pinned.len())
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.pinned.iter().chain(self.agent.iter())
    }

    /// Sum of `priority^α` as held by the tree root.
    pub fn total_weight(&self) -> f64 {
        self.tree.total()
    }

    /// Sum of `priority^α` recomputed from the leaves.
    pub fn leaf_weight_sum(&self) -> f64 {
        self.tree.leaf_sum()
    }

    /// Sampling probability of the transition at `index`.
    pub fn probability(&self, index: usize) -> f64 {
        self.tree.get(index) / self.tree.total()
    }

    fn clipped_priority(&self, advantage: f64) -> f64 {
        advantage.max(0.0) + self.cfg.eps_priority
    }

    fn weight_of(&self, priority: f64) -> f64 {
        priority.powf(self.cfg.alpha)
    }

    /// Builds transitions for a whole episode with priorities from `critic`.
    fn episode_transitions(
        &self,
        episode: &Episode,
        critic: &NetParams,
        gamma: f64,
        is_demo: bool,
    ) -> Result<Vec<Transition>, ReplayError> {
        let returns = discounted_returns(&episode.rewards(), gamma)?;
        let obs: Vec<Observation> = episode.steps.iter().map(|s| s.observation).collect();
        let values = forward_rows(critic, &obs)?;
        Ok(episode
            .steps
            .iter()
            .zip(returns)
            .enumerate()
            .map(|(t, (s, r))| Transition {
                observation: s.observation,
                action: s.action,
                return_r: r,
                is_demo,
                priority: self.clipped_priority(r - values.get(t, 0)),
            })
            .collect())
    }

    /// Stores every demonstration step permanently, with priorities from the current critic.
    pub fn pin_demos(&mut self, demos: &DemoSet, critic: &NetParams, gamma: f64) -> Result<(), ReplayError> {
        if !self.pinned.is_empty() {
            return Err(ReplayError::AlreadyPinned);
        }
        let mut pinned = Vec::with_capacity(demos.num_transitions());
        for ep in &demos.episodes {
            if !ep.complete {
                return Err(ReplayError::IncompleteEpisode);
            }
            pinned.extend(self.episode_transitions(ep, critic, gamma, true)?);
        }
        if pinned.is_empty() {
            return Err(ReplayError::NoDemos);
        }
        self.pinned = pinned;
        self.rebuild_tree();
        Ok(())
    }

    fn rebuild_tree(&mut self) {
        let mut tree = SumTree::new(self.pinned.len() + self.cfg.capacity);
        for (i, t) in self.iter().enumerate() {
            tree.set(i, self.weight_of(t.priority));
        }
        self.tree = tree;
    }

    /// Appends a finished episode, evicting the oldest agent transitions past capacity.
    pub fn push_episode(&mut self, episode: &Episode, critic: &NetParams, gamma: f64) -> Result<(), ReplayError> {
        if !episode.complete || episode.is_empty() {
            return Err(ReplayError::IncompleteEpisode);
        }
        for t in self.episode_transitions(episode, critic, gamma, false)? {
            self.push_transition(t);
        }
        Ok(())
    }

    fn push_transition(&mut self, t: Transition) {
        if self.cfg.capacity == 0 {
            return;
        }
        let slot = if self.agent.len() < self.cfg.capacity {
            self.agent.push(t);
            self.agent.len() - 1
        } else {
            let slot = self.head;
            self.agent[slot] = t;
            self.head = (self.head + 1) % self.cfg.capacity;
            slot
        };
        let w = self.weight_of(t.priority);
        self.tree.set(self.pinned.len() + slot, w);
    }

    /// Draws `batch_size` transitions with replacement, proportionally to `priority^α`.
    ///
    /// Importance weights are `(n·P(i))^{-β}` divided by the largest weight in the batch.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampledBatch, ReplayError> {
        if self.is_empty() || self.tree.total() <= 0.0 {
            return Err(ReplayError::Empty);
        }
        let n = self.len() as f64;
        let total = self.tree.total();
        let mut indices = Vec::with_capacity(batch_size);
        let mut transitions = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let idx = self.tree.sample(rng);
            let p = self.tree.get(idx) / total;
            indices.push(idx);
            transitions.push(*self.get(idx).expect("sampled index is populated"));
            weights.push((n * p).powf(-self.cfg.beta_is));
        }
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        if max_w > 0.0 {
            for w in &mut weights {
                *w /= max_w;
            }
        }
        let demo_fraction = demo_fraction_of(&transitions);
        Ok(SampledBatch {
            transitions,
            indices,
            weights,
            demo_fraction,
        })
    }

    /// Sets `priority_i = max(advantage_i, 0) + ε_p` for each index.
    pub fn update_priorities(&mut self, indices: &[usize], advantages: &[f64]) -> Result<(), ReplayError> {
        if indices.len() != advantages.len() {
            return Err(ReplayError::LengthMismatch {
                indices: indices.len(),
                advantages: advantages.len(),
            });
        }
        let len = self.len();
        for (&index, &adv) in indices.iter().zip(advantages) {
            if index >= len {
                return Err(ReplayError::IndexOutOfRange { index, len });
            }
            if !adv.is_finite() {
                return Err(ReplayError::NonFinite(adv));
            }
        }
        for (&index, &adv) in indices.iter().zip(advantages) {
            let priority = self.clipped_priority(adv);
            let pinned = self.pinned.len();
            let slot = if index < pinned {
                &mut self.pinned[index]
            } else {
                &mut self.agent[index - pinned]
            };
            slot.priority = priority;
            let w = self.weight_of(priority);
            self.tree.set(index, w);
        }
        Ok(())
    }

    /// Mean critic value over the pinned demonstration states, if any.
    pub fn mean_pinned_value(&self, critic: &NetParams) -> Result<Option<f64>, ReplayError> {
        if self.pinned.is_empty() {
            return Ok(None);
        }
        let obs: Vec<Observation> = self.pinned.iter().map(|t| t.observation).collect();
        let v = forward_rows(critic, &obs)?;
        Ok(Some(v.as_slice().iter().sum::<f64>() / obs.len() as f64))
    }
}
