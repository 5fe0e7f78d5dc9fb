//! Demonstration episodes: generation, mixing and the JSONL file format.
//!
//! One episode per line:
//!
//! ```text
//! {"source":"optimal-expert","actions":[1,1,...],"rewards":[...],"observations":[[h,v],...],"total_return":100.0}
//! ```
//!
//! `observations[t]` is the observation the action at step `t` was taken from.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{self, Action, ChainError, Observation};

/// Tolerance on `total_return` against the sum of step rewards.
pub const TOTAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    OptimalExpert,
    AdversarialExpert,
    BcRollout,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStep {
    pub observation: Observation,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub source: Source,
    pub steps: Vec<EpisodeStep>,
    pub total_return: f64,
    /// Whether the last step reached a terminal state.
    pub complete: bool,
}

impl Episode {
    pub fn from_steps(source: Source, steps: Vec<EpisodeStep>, complete: bool) -> Self {
        let total_return = steps.iter().map(|s| s.reward).sum();
        Self {
            source,
            steps,
            total_return,
            complete,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    /// Replays the actions from a fresh grid of side `size` and checks that the
    /// stored observations and rewards come out bit-for-bit.
    pub fn replay_matches(&self, size: usize) -> Result<(), String> {
        let mut state = chain::reset(size).map_err(|e| e.to_string())?;
        for (t, s) in self.steps.iter().enumerate() {
            if chain::observe(state) != s.observation {
                return Err(format!("observation mismatch at step {t}"));
            }
            let action = Action::try_from(s.action).map_err(|e| e.to_string())?;
            let st = chain::step(state, action).map_err(|e| format!("step {t}: {e}"))?;
            if st.reward.to_bits() != s.reward.to_bits() {
                return Err(format!(
                    "reward mismatch at step {t}: stored {}, environment gives {}",
                    s.reward, st.reward
                ));
            }
            state = st.next;
        }
        if !state.is_terminal() {
            return Err(format!("episode stops after {} steps, before the last row", self.len()));
        }
        Ok(())
    }
}

/// Where a [`DemoSet`] came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub grid_size: usize,
    pub optimal: usize,
    pub adversarial: usize,
    pub other: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub episodes: Vec<Episode>,
    pub provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("demo set needs at least one episode")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn expert_episode(size: usize, action: Action, source: Source) -> Result<Episode, ChainError> {
    let mut state = chain::reset(size)?;
    let mut steps = Vec::with_capacity(chain::horizon(size));
    loop {
        let observation = chain::observe(state);
        let st = chain::step(state, action)?;
        steps.push(EpisodeStep {
            observation,
            action: action.index(),
            reward: st.reward,
        });
        state = st.next;
        if st.done {
            break;
        }
    }
    Ok(Episode::from_steps(source, steps, true))
}

/// The expert that only moves right.
pub fn generate_optimal(size: usize) -> Result<Episode, ChainError> {
    expert_episode(size, Action::Right, Source::OptimalExpert)
}

/// The expert that only moves left.
pub fn generate_adversarial(size: usize) -> Result<Episode, ChainError> {
    expert_episode(size, Action::Left, Source::AdversarialExpert)
}

/// Optimal episodes first, then adversarial ones.
pub fn mix(optimal: usize, adversarial: usize, size: usize) -> Result<DemoSet, DemoError> {
    if optimal + adversarial == 0 {
        return Err(DemoError::Empty);
    }
    let opt = generate_optimal(size)?;
    let adv = generate_adversarial(size)?;
    let mut episodes = Vec::with_capacity(optimal + adversarial);
    episodes.extend(std::iter::repeat_n(opt, optimal));
    episodes.extend(std::iter::repeat_n(adv, adversarial));
    Ok(DemoSet {
        episodes,
        provenance: Provenance {
            generator: "mix".into(),
            grid_size: size,
            optimal,
            adversarial,
            other: 0,
        },
    })
}

impl DemoSet {
    /// Wraps arbitrary episodes (e.g. behavioral-cloning rollouts).
    pub fn from_episodes(generator: &str, size: usize, episodes: Vec<Episode>) -> Self {
        let provenance = count_sources(generator, size, &episodes);
        Self { episodes, provenance }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ep in &self.episodes {
            let line = EpisodeLine::from(ep);
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("episode serializes"));
        }
        out
    }

    /// Parses and validates a JSONL document. Nothing is returned unless every line is valid.
    pub fn from_jsonl(text: &str) -> Result<Self, DemoError> {
        let mut episodes = Vec::new();
        let mut size = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let parsed: EpisodeLine = serde_json::from_str(raw).map_err(|e| DemoError::Parse {
                line,
                message: e.to_string(),
            })?;
            let ep = parsed.into_episode().map_err(|message| DemoError::Validation { line, message })?;
            let n = ep.len() + 1;
            if *size.get_or_insert(n) != n {
                return Err(DemoError::Validation {
                    line,
                    message: format!("episode has {} steps, earlier episodes imply a {}-grid", ep.len(), size.unwrap()),
                });
            }
            ep.replay_matches(n)
                .map_err(|message| DemoError::Validation { line, message })?;
            episodes.push(ep);
        }
        let size = size.ok_or(DemoError::Empty)?;
        Ok(Self::from_episodes("file", size, episodes))
    }

    pub fn save(&self, path: &Path) -> Result<(), DemoError> {
        crate::io::write_atomic(path, self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DemoError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }
}

fn count_sources(generator: &str, size: usize, episodes: &[Episode]) -> Provenance {
    let count = |s: Source| episodes.iter().filter(|e| e.source == s).count();
    let optimal = count(Source::OptimalExpert);
    let adversarial = count(Source::AdversarialExpert);
    Provenance {
        generator: generator.into(),
        grid_size: size,
        optimal,
        adversarial,
        other: episodes.len() - optimal - adversarial,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodeLine {
    source: Source,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    observations: Vec<[f64; 2]>,
    total_return: f64,
}

impl From<&Episode> for EpisodeLine {
    fn from(ep: &Episode) -> Self {
        Self {
            source: ep.source,
            actions: ep.steps.iter().map(|s| s.action).collect(),
            rewards: ep.rewards(),
            observations: ep.steps.iter().map(|s| s.observation).collect(),
            total_return: ep.total_return,
        }
    }
}

impl EpisodeLine {
    fn into_episode(self) -> Result<Episode, String> {
        let n = self.actions.len();
        if n == 0 {
            return Err("episode has no steps".into());
        }
        if self.rewards.len() != n || self.observations.len() != n {
            return Err(format!(
                "{} actions, {} rewards, {} observations",
                n,
                self.rewards.len(),
                self.observations.len()
            ));
        }
        let sum: f64 = self.rewards.iter().sum();
        if !self.total_return.is_finite() || (sum - self.total_return).abs() > TOTAL_TOLERANCE {
            return Err(format!(
                "total_return {} does not match reward sum {sum}",
                self.total_return
            ));
        }
        let steps = self
            .actions
            .into_iter()
            .zip(self.rewards)
            .zip(self.observations)
            .map(|((action, reward), observation)| EpisodeStep {
                observation,
                action,
                reward,
            })
            .collect();
        Ok(Episode {
            source: self.source,
            steps,
            total_return: self.total_return,
            complete: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{CORNER_BONUS, RIGHT_PENALTY};

    #[test]
    fn optimal_episode() {
        let ep = generate_optimal(40).unwrap();
        assert_eq!(ep.len(), 39);
        assert!(ep.steps.iter().all(|s| s.action == 1));
        assert!((ep.total_return - 100.0).abs() < 1e-9);
        ep.replay_matches(40).unwrap();

        let tiny = generate_optimal(2).unwrap();
        assert_eq!(tiny.len(), 1);
        assert_eq!(tiny.total_return, CORNER_BONUS - RIGHT_PENALTY);
    }

    #[test]
    fn adversarial_episode() {
        let ep = generate_adversarial(40).unwrap();
        assert_eq!(ep.len(), 39);
        assert!(ep.steps.iter().all(|s| s.action == 0 && s.observation[0] == -1.0));
        assert_eq!(ep.total_return, 0.0);
        ep.replay_matches(40).unwrap();
    }

    #[test]
    fn mixing() {
        let set = mix(1, 99, 40).unwrap();
        assert_eq!(set.len(), 100);
        assert_eq!(set.episodes.iter().filter(|e| e.total_return > 99.0).count(), 1);
        assert_eq!(set.episodes[0].source, Source::OptimalExpert);
        assert!(set.episodes[1..].iter().all(|e| e.source == Source::AdversarialExpert));

        assert_eq!(mix(1, 0, 40).unwrap().len(), 1);
        let tuning = mix(1, 1, 40).unwrap();
        assert_eq!(tuning.len(), 2);
        assert_eq!((tuning.provenance.optimal, tuning.provenance.adversarial), (1, 1));
        assert!(matches!(mix(0, 0, 40), Err(DemoError::Empty)));
    }

    #[test]
    fn mix_is_byte_deterministic() {
        assert_eq!(mix(1, 9, 40).unwrap().to_jsonl(), mix(1, 9, 40).unwrap().to_jsonl());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.jsonl");
        let set = mix(1, 3, 40).unwrap();
        set.save(&path).unwrap();
        let back = DemoSet::load(&path).unwrap();
        assert_eq!(back.episodes, set.episodes);
        assert_eq!(back.to_jsonl(), fs::read_to_string(&path).unwrap());
        assert_eq!(back.provenance.grid_size, 40);
        assert_eq!((back.provenance.optimal, back.provenance.adversarial), (1, 3));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = mix(1, 2, 40).unwrap().to_jsonl();
        let cut = &text[..text.len() - 40];
        match DemoSet::from_jsonl(cut) {
            Err(DemoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn altered_reward_fails_validation() {
        let text = mix(1, 1, 40).unwrap().to_jsonl();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut v: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        v["rewards"][3] = serde_json::json!(5.0);
        lines[1] = v.to_string();
        match DemoSet::from_jsonl(&lines.join("\n")) {
            Err(DemoError::Validation { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("total_return"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn consistent_but_fake_rewards_fail_replay() {
        let text = mix(1, 0, 40).unwrap().to_jsonl();
        let mut v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        v["rewards"][0] = serde_json::json!(0.0);
        let total: f64 = v["rewards"].as_array().unwrap().iter().map(|r| r.as_f64().unwrap()).sum();
        v["total_return"] = serde_json::json!(total);
        assert!(matches!(
            DemoSet::from_jsonl(&v.to_string()),
            Err(DemoError::Validation { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(DemoSet::from_jsonl(""), Err(DemoError::Empty)));
    }
}
