//! Deterministic random streams.
//!
//! Every run draws from ChaCha8 generators keyed by `(base_seed, component)`
//! with the run index as the stream id. Runs are therefore independent of the
//! order in which a sweep schedules them, and the market noise of a run does
//! not depend on which controller or adversary consumes randomness alongside
//! it, so paired comparisons share their exogenous noise exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Component {
    Params = 1,
    Market = 2,
    Price = 3,
    Controller = 4,
    Adversary = 5,
    Data = 6,
}

pub fn stream(base_seed: u64, run_index: u64, component: Component) -> SimRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&(component as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(run_index);
    rng
}
