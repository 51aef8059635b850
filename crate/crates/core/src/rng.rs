//! Deterministic random substreams.
//!
//! Every stochastic unit of work (one tree sample, one population member)
//! owns a ChaCha stream keyed by `(master seed, domain)` and selected by its
//! index, so results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains for the different engines.
pub mod domain {
    pub const TREE_SAMPLE: u64 = 0x7472_6565;
    pub const POPULATION_LEVEL: u64 = 0x706f_7000;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for work item `index` within `(master, domain)`.
pub fn substream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut state = master ^ domain.rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
