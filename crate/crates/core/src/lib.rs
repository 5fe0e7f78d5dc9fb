//! Self-imitation learning from demonstrations (SILfD) on the Chain
//! exploration benchmark, with PPO, SIL, behavioral cloning and the
//! BC-seeded variants SILfBC and BCSIL.
//!
//! Module map:
//! - [`nn`]: dense MLP, reverse-mode gradients, Adam, categorical head
//! - [`chain`]: the environment
//! - [`demos`]: demonstration generation and the JSONL format
//! - [`replay`]: prioritized replay with pinned demonstrations
//! - [`algo`]: PPO, the SIL update, BC and the training loop
//! - [`runner`]: configs, seeding, metric logging, sweeps and evaluation

pub mod algo;
pub mod chain;
pub mod demos;
mod io;
pub mod nn;
pub mod par;
pub mod replay;
pub mod returns;
pub mod runner;

pub use io::write_atomic;
