use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bc::{bc_train, BcConfig, BcReport};
use super::eval::{evaluate, run_episodes};
use super::ppo::{ppo_update, PpoConfig, PpoMetrics};
use super::rollout::Collector;
use super::seeds::{Seeds, Stream};
use super::sil::{sil_update, SilConfig, SilMetrics};
use super::{AgentNets, AlgoError};
use crate::chain::DEFAULT_SIZE;
use crate::demos::{DemoSet, Source};
use crate::nn::{NetParams, OptState};
use crate::replay::{PrioritizedBuffer, ReplayConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Ppo,
    Sil,
    Silfd,
    Silfbc,
    Bcsil,
    Bc,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ppo,
        Variant::Sil,
        Variant::Silfd,
        Variant::Silfbc,
        Variant::Bcsil,
        Variant::Bc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ppo => "ppo",
            Variant::Sil => "sil",
            Variant::Silfd => "silfd",
            Variant::Silfbc => "silfbc",
            Variant::Bcsil => "bcsil",
            Variant::Bc => "bc",
        }
    }

    pub fn needs_demos(self) -> bool {
        matches!(self, Variant::Silfd | Variant::Silfbc | Variant::Bcsil | Variant::Bc)
    }

    pub fn uses_sil(self) -> bool {
        matches!(self, Variant::Sil | Variant::Silfd | Variant::Silfbc | Variant::Bcsil)
    }

    pub fn uses_bc(self) -> bool {
        matches!(self, Variant::Silfbc | Variant::Bcsil | Variant::Bc)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = AlgoError;

    fn from_str(s: &str) -> Result<Self, AlgoError> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| AlgoError::Config(format!("unknown variant {s:?} (expected ppo, sil, silfd, silfbc, bcsil or bc)")))
    }
}

/// Everything that determines a run. Field names are the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub seed: u64,
    pub grid_size: usize,
    pub total_transitions: usize,
    pub rollout_len: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,

    /// Demonstrations: either counts for [`crate::demos::mix`] (`demo_optimal`
    /// defaults to 1 once either count is given) or a JSONL file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo_optimal: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo_adversarial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demos_path: Option<PathBuf>,

    pub gamma: f64,
    pub lr: f64,
    pub entropy_coef: f64,
    pub ppo_clip: f64,
    pub gae_lambda: f64,
    pub ppo_minibatch: usize,
    pub ppo_epochs: usize,

    pub sil_epochs: usize,
    pub sil_batch_size: usize,
    pub sil_loss_weight: f64,
    pub sil_value_loss_weight: f64,
    /// Count SIL entropy only on positive-advantage samples.
    pub sil_entropy_mask: bool,

    pub buffer_capacity: usize,
    pub priority_alpha: f64,
    pub importance_beta: f64,
    pub priority_eps: f64,

    pub bc_lr: f64,
    pub bc_batch_size: usize,
    pub bc_epochs: usize,
    pub bc_rollouts: usize,

    /// Adds `wall_seconds` to metrics rows, which makes them non-reproducible.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        let sil = SilConfig::default();
        let replay = ReplayConfig::default();
        let bc = BcConfig::default();
        Self {
            variant: Variant::Silfd,
            seed: 0,
            grid_size: DEFAULT_SIZE,
            total_transitions: 1_000_000,
            rollout_len: 1000,
            eval_every: 25_000,
            eval_episodes: 100,
            hidden: vec![32, 32],
            demo_optimal: None,
            demo_adversarial: None,
            demos_path: None,
            gamma: ppo.gamma,
            lr: ppo.lr,
            entropy_coef: ppo.entropy_coef,
            ppo_clip: ppo.clip,
            gae_lambda: ppo.gae_lambda,
            ppo_minibatch: ppo.minibatch,
            ppo_epochs: ppo.epochs,
            sil_epochs: sil.epochs,
            sil_batch_size: sil.batch_size,
            sil_loss_weight: sil.loss_weight,
            sil_value_loss_weight: sil.value_loss_weight,
            sil_entropy_mask: sil.entropy_positive_only,
            buffer_capacity: replay.capacity,
            priority_alpha: replay.alpha,
            importance_beta: replay.beta_is,
            priority_eps: replay.eps_priority,
            bc_lr: bc.lr,
            bc_batch_size: bc.batch_size,
            bc_epochs: bc.epochs,
            bc_rollouts: 1000,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            clip: self.ppo_clip,
            gae_lambda: self.gae_lambda,
            entropy_coef: self.entropy_coef,
            lr: self.lr,
            minibatch: self.ppo_minibatch,
            epochs: self.ppo_epochs,
            gamma: self.gamma,
        }
    }

    pub fn sil(&self) -> SilConfig {
        SilConfig {
            epochs: self.sil_epochs,
            batch_size: self.sil_batch_size,
            loss_weight: self.sil_loss_weight,
            value_loss_weight: self.sil_value_loss_weight,
            entropy_coef: self.entropy_coef,
            entropy_positive_only: self.sil_entropy_mask,
            gamma: self.gamma,
            lr: self.lr,
        }
    }

    pub fn replay(&self) -> ReplayConfig {
        ReplayConfig {
            capacity: self.buffer_capacity,
            alpha: self.priority_alpha,
            beta_is: self.importance_beta,
            eps_priority: self.priority_eps,
        }
    }

    pub fn bc(&self) -> BcConfig {
        BcConfig {
            lr: self.bc_lr,
            batch_size: self.bc_batch_size,
            epochs: self.bc_epochs,
        }
    }

    /// Whether the config names a demonstration source.
    pub fn has_demo_spec(&self) -> bool {
        self.demos_path.is_some() || self.demo_optimal.is_some() || self.demo_adversarial.is_some()
    }

    /// Checks ranges; does not look at the filesystem.
    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |m: &str| Err(AlgoError::Config(m.to_string()));
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        if self.rollout_len == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("rollout_len, eval_every and eval_episodes must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.ppo_clip > 0.0 && self.ppo_clip < 1.0) {
            return bad("ppo_clip must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) || !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.lr > 0.0 && self.bc_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.ppo_minibatch == 0 || self.ppo_epochs == 0 || self.bc_batch_size == 0 {
            return bad("batch sizes and epoch counts must be positive");
        }
        if self.variant.uses_sil() && (self.sil_epochs == 0 || self.sil_batch_size == 0) {
            return bad("sil_epochs and sil_batch_size must be positive");
        }
        if !(self.sil_loss_weight > 0.0 && self.sil_value_loss_weight > 0.0 && self.entropy_coef >= 0.0) {
            return bad("SIL weights must be positive and entropy_coef non-negative");
        }
        if !(self.priority_alpha >= 0.0 && self.importance_beta >= 0.0 && self.priority_eps > 0.0) {
            return bad("priority_alpha, importance_beta must be non-negative and priority_eps positive");
        }
        if self.demos_path.is_some() && (self.demo_optimal.is_some() || self.demo_adversarial.is_some()) {
            return bad("give either demos_path or demo counts, not both");
        }
        if self.demos_path.is_none()
            && (self.demo_optimal.is_some() || self.demo_adversarial.is_some())
            && self.demo_optimal.unwrap_or(1) + self.demo_adversarial.unwrap_or(0) == 0
        {
            return bad("demo counts must include at least one episode");
        }
        if self.variant.needs_demos() && !self.has_demo_spec() {
            return Err(AlgoError::Config(format!("variant {} needs demonstrations", self.variant)));
        }
        if self.variant == Variant::Silfbc && self.bc_rollouts == 0 {
            return bad("silfbc needs bc_rollouts > 0");
        }
        Ok(())
    }
}

/// One evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub transitions: usize,
    pub eval_mean_return: f64,
    pub eval_min_return: f64,
    pub eval_max_return: f64,
    /// Demonstration fraction of the most recent SIL update.
    pub demo_fraction_mean: Option<f64>,
    pub ppo_policy_loss: Option<f64>,
    pub ppo_value_loss: Option<f64>,
    pub ppo_entropy: Option<f64>,
    pub sil_policy_loss: Option<f64>,
    pub sil_value_loss: Option<f64>,
    /// Mean critic value over pinned demonstration states.
    pub demo_value_mean: Option<f64>,
    pub sil_updates: usize,
    pub episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    /// Demonstration fraction of every SIL update, in order.
    pub sil_demo_fractions: Vec<f64>,
    pub nets: AgentNets,
    pub bc_actor: Option<NetParams>,
    pub bc_report: Option<BcReport>,
}

impl TrainOutcome {
    pub fn final_eval(&self) -> Option<f64> {
        self.records.last().map(|r| r.eval_mean_return)
    }
}

struct Tracker {
    start: Instant,
    log_wall_time: bool,
    ppo: Option<PpoMetrics>,
    sil: Option<SilMetrics>,
    sil_updates: usize,
    episodes: usize,
    evals: u64,
}

/// Runs one training job, handing each metrics row to `sink` as soon as it exists.
pub fn train(
    cfg: &TrainConfig,
    demos: Option<&DemoSet>,
    sink: &mut dyn FnMut(&MetricsRecord) -> std::io::Result<()>,
) -> Result<TrainOutcome, AlgoError> {
    cfg.validate()?;
    let demos = match (cfg.variant.needs_demos(), demos) {
        (true, None) => return Err(AlgoError::Config(format!("variant {} needs demonstrations", cfg.variant))),
        (true, Some(d)) if d.is_empty() => return Err(AlgoError::Config("demonstration set is empty".into())),
        (_, d) => d,
    };
    let seeds = Seeds(cfg.seed);
    let mut nets = AgentNets::new(&cfg.hidden, seeds.seed(Stream::ActorInit), seeds.seed(Stream::CriticInit))?;
    let mut tracker = Tracker {
        start: Instant::now(),
        log_wall_time: cfg.log_wall_time,
        ppo: None,
        sil: None,
        sil_updates: 0,
        episodes: 0,
        evals: 0,
    };

    let (bc_actor, bc_report) = match (cfg.variant.uses_bc(), demos) {
        (true, Some(d)) => {
            let (actor, report) = bc_train(d, &cfg.hidden, &cfg.bc(), cfg.seed)?;
            (Some(actor), Some(report))
        }
        _ => (None, None),
    };

    let mut buffer = PrioritizedBuffer::new(cfg.replay());
    match cfg.variant {
        Variant::Silfd => {
            buffer.pin_demos(demos.expect("checked above"), &nets.critic, cfg.gamma)?;
        }
        Variant::Silfbc => {
            let bc = bc_actor.as_ref().expect("trained above");
            let episodes = run_episodes(bc, cfg.grid_size, cfg.bc_rollouts, seeds.seed(Stream::BcRollout), Source::BcRollout)?;
            let rollouts = DemoSet::from_episodes("bc-rollout", cfg.grid_size, episodes);
            buffer.pin_demos(&rollouts, &nets.critic, cfg.gamma)?;
        }
        Variant::Bcsil => {
            let bc = bc_actor.clone().expect("trained above");
            nets.actor_opt = OptState::new(&bc);
            nets.actor = bc;
        }
        Variant::Bc => {
            let bc = bc_actor.clone().expect("trained above");
            nets.actor_opt = OptState::new(&bc);
            nets.actor = bc;
            let rec = record(cfg, &seeds, &nets, &buffer, &mut tracker, 0)?;
            sink(&rec)?;
            return Ok(TrainOutcome {
                records: vec![rec],
                sil_demo_fractions: Vec::new(),
                nets,
                bc_actor,
                bc_report,
            });
        }
        Variant::Ppo | Variant::Sil => {}
    }

    let mut records = Vec::new();
    let rec = record(cfg, &seeds, &nets, &buffer, &mut tracker, 0)?;
    sink(&rec)?;
    records.push(rec);

    let ppo_cfg = cfg.ppo();
    let sil_cfg = cfg.sil();
    let mut collector = Collector::new(cfg.grid_size, seeds.rng(Stream::Rollout))?;
    let mut replay_rng = seeds.rng(Stream::Replay);
    let mut minibatch_rng = seeds.rng(Stream::Minibatch);
    let mut sil_demo_fractions = Vec::new();
    let mut done = 0usize;
    while done < cfg.total_transitions {
        let steps = cfg.rollout_len.min(cfg.total_transitions - done);
        let (batch, finished) = collector.collect(&nets, steps)?;
        tracker.ppo = Some(ppo_update(&mut nets, &batch, &ppo_cfg, &mut minibatch_rng)?);
        tracker.episodes += finished.len();
        if cfg.variant.uses_sil() {
            for ep in &finished {
                buffer.push_episode(ep, &nets.critic, cfg.gamma)?;
            }
            if !buffer.is_empty() {
                let m = sil_update(&mut nets, &mut buffer, &sil_cfg, &mut replay_rng)?;
                sil_demo_fractions.push(m.demo_fraction);
                tracker.sil = Some(m);
                tracker.sil_updates += 1;
            }
        }
        let before = done;
        done += steps;
        if done / cfg.eval_every > before / cfg.eval_every || done == cfg.total_transitions {
            let rec = record(cfg, &seeds, &nets, &buffer, &mut tracker, done)?;
            sink(&rec)?;
            records.push(rec);
        }
    }

    Ok(TrainOutcome {
        records,
        sil_demo_fractions,
        nets,
        bc_actor,
        bc_report,
    })
}

fn record(
    cfg: &TrainConfig,
    seeds: &Seeds,
    nets: &AgentNets,
    buffer: &PrioritizedBuffer,
    tracker: &mut Tracker,
    transitions: usize,
) -> Result<MetricsRecord, AlgoError> {
    let eval_seed = seeds.seed(Stream::Eval).wrapping_add(tracker.evals);
    tracker.evals += 1;
    let stats = evaluate(&nets.actor, cfg.grid_size, cfg.eval_episodes, eval_seed)?;
    let demo_value_mean = buffer.mean_pinned_value(&nets.critic)?;
    Ok(MetricsRecord {
        transitions,
        eval_mean_return: stats.mean,
        eval_min_return: stats.min,
        eval_max_return: stats.max,
        demo_fraction_mean: tracker.sil.map(|m| m.demo_fraction),
        ppo_policy_loss: tracker.ppo.map(|m| m.policy_loss),
        ppo_value_loss: tracker.ppo.map(|m| m.value_loss),
        ppo_entropy: tracker.ppo.map(|m| m.entropy),
        sil_policy_loss: tracker.sil.map(|m| m.policy_loss),
        sil_value_loss: tracker.sil.map(|m| m.value_loss),
        demo_value_mean,
        sil_updates: tracker.sil_updates,
        episodes: tracker.episodes,
        wall_seconds: tracker.log_wall_time.then(|| tracker.start.elapsed().as_secs_f64()),
    })
}
