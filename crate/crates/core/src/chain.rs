//! The Chain exploration gridworld.
//!
//! An `N × N` grid walked top to bottom: every step moves one row down and
//! one column left or right. Moving right costs [`RIGHT_PENALTY`]; stepping
//! left on the left edge just moves down for free. Landing on the bottom-right
//! corner pays [`CORNER_BONUS`] on the final transition, so the unbroken
//! all-right walk totals exactly 100 on the default 40×40 grid and every other
//! walk totals at most 0.

use serde::{Deserialize, Serialize};

pub const DEFAULT_SIZE: usize = 40;
/// Cost of one right move: 39 of them add up to 60.
pub const RIGHT_PENALTY: f64 = 60.0 / 39.0;
/// Paid when the walk ends in the bottom-right corner.
pub const CORNER_BONUS: f64 = 160.0;
pub const NUM_ACTIONS: usize = 2;
pub const OBS_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Left = 0,
    Right = 1,
}

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<usize> for Action {
    type Error = ChainError;

    fn try_from(a: usize) -> Result<Self, ChainError> {
        match a {
            0 => Ok(Action::Left),
            1 => Ok(Action::Right),
            other => Err(ChainError::BadAction(other)),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChainError {
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("cannot step from terminal state at row {0}")]
    Terminal(usize),
    #[error("unknown action {0} (expected 0 = left or 1 = right)")]
    BadAction(usize),
}

/// Position on the grid. `col <= row` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChainState {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

/// `(h, v)`, each scaled to `[-1, 1]`.
pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: ChainState,
    pub reward: f64,
    pub done: bool,
}

pub fn reset(size: usize) -> Result<ChainState, ChainError> {
    if size < 2 {
        return Err(ChainError::GridTooSmall(size));
    }
    Ok(ChainState { row: 0, col: 0, size })
}

pub fn step(state: ChainState, action: Action) -> Result<Step, ChainError> {
    if state.is_terminal() {
        return Err(ChainError::Terminal(state.row));
    }
    let last = state.size - 1;
    let (col, mut reward) = match action {
        Action::Right => (state.col + 1, -RIGHT_PENALTY),
        Action::Left => (state.col.saturating_sub(1), 0.0),
    };
    let next = ChainState {
        row: state.row + 1,
        col,
        size: state.size,
    };
    let done = next.row == last;
    if done && next.col == last {
        reward += CORNER_BONUS;
    }
    Ok(Step { next, reward, done })
}

pub fn observe(state: ChainState) -> Observation {
    let scale = (state.size - 1) as f64;
    [
        2.0 * state.col as f64 / scale - 1.0,
        2.0 * state.row as f64 / scale - 1.0,
    ]
}

impl ChainState {
    pub fn is_terminal(&self) -> bool {
        self.row + 1 >= self.size
    }
}

/// Number of steps in every episode.
pub fn horizon(size: usize) -> usize {
    size - 1
}
