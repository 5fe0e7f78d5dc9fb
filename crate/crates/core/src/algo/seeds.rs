use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ActorInit = 1,
    CriticInit = 2,
    Rollout = 3,
    Replay = 4,
    Minibatch = 5,
    Eval = 6,
    BcInit = 7,
    BcShuffle = 8,
    BcRollout = 9,
}

/// One master seed, fanned out into a separate ChaCha stream per [`Stream`],
/// so reordering consumers never changes what any one of them sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds(pub u64);

impl Seeds {
    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream as u64);
        rng
    }

    /// A `u64` seed for consumers that take one (e.g. weight init).
    pub fn seed(&self, stream: Stream) -> u64 {
        self.rng(stream).next_u64()
    }
}

/// Per-item generator: `base` picks the batch, `index` the item within it.
pub(crate) fn item_rng(base: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng
}
