//! Learning algorithms: PPO with GAE, the self-imitation update over a
//! prioritized buffer, behavioral cloning, and the training loop that
//! composes them into PPO, SIL, SILfD, SILfBC and BCSIL.

mod bc;
mod eval;
mod ppo;
mod rollout;
mod seeds;
mod sil;
mod train;

pub use bc::{bc_dataset, bc_train, BcConfig, BcReport};
pub use eval::{evaluate, run_episodes, EvalStats};
pub use ppo::{ppo_minibatch_loss, ppo_update, PpoConfig, PpoLoss, PpoMetrics, PpoMinibatch};
pub use rollout::{Collector, RolloutBatch};
pub use seeds::{Seeds, Stream};
pub use sil::{sil_batch_loss, sil_update, SilBatch, SilConfig, SilLoss, SilMetrics};
pub use train::{train, MetricsRecord, TrainConfig, TrainOutcome, Variant};

pub use crate::returns::{discounted_returns as compute_returns, gae as compute_gae};

use crate::chain::{Observation, NUM_ACTIONS, OBS_DIM};
use crate::nn::{categorical_head, forward_rows, Categorical, NetParams, NnError, OptState};

#[derive(Debug, thiserror::Error)]
pub enum AlgoError {
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Replay(#[from] crate::replay::ReplayError),
    #[error(transparent)]
    Chain(#[from] crate::chain::ChainError),
    #[error(transparent)]
    Returns(#[from] crate::returns::ReturnsError),
    #[error(transparent)]
    Demo(#[from] crate::demos::DemoError),
    #[error("metrics sink failed: {0}")]
    Sink(#[from] std::io::Error),
}

impl From<NnError> for AlgoError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite | NnError::NonFiniteGradient => AlgoError::Divergence(e.to_string()),
            other => AlgoError::Nn(other),
        }
    }
}

/// Actor (observation → action logits) and critic (observation → value) with their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: NetParams,
    pub critic: NetParams,
    pub actor_opt: OptState,
    pub critic_opt: OptState,
}

impl AgentNets {
    pub fn new(hidden: &[usize], actor_seed: u64, critic_seed: u64) -> Result<Self, AlgoError> {
        let actor = NetParams::init(&layer_sizes(OBS_DIM, hidden, NUM_ACTIONS), actor_seed)?;
        let critic = NetParams::init(&layer_sizes(OBS_DIM, hidden, 1), critic_seed)?;
        Ok(Self::from_params(actor, critic))
    }

    /// Fresh optimizer state around existing weights.
    pub fn from_params(actor: NetParams, critic: NetParams) -> Self {
        Self {
            actor_opt: OptState::new(&actor),
            critic_opt: OptState::new(&critic),
            actor,
            critic,
        }
    }

    pub fn policy(&self, obs: &[Observation]) -> Result<Categorical, AlgoError> {
        Ok(categorical_head(&forward_rows(&self.actor, obs)?))
    }

    pub fn values(&self, obs: &[Observation]) -> Result<Vec<f64>, AlgoError> {
        Ok(forward_rows(&self.critic, obs)?.into_vec())
    }
}

pub fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

pub(crate) fn check_finite(what: &str, v: f64) -> Result<(), AlgoError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(AlgoError::Divergence(format!("{what} is {v}")))
    }
}
