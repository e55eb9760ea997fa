//! Seeded substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose key is
//! derived from a master seed and whose stream id is derived from a purpose
//! label plus an index. ChaCha is counter based, so two substreams never
//! overlap and a trial's draws do not depend on which thread runs it.
//!
//! Cell seeds for experiment grids are derived by [`cell_seed`]:
//!
//! ```text
//! cell_seed(master, i, j) = splitmix64(splitmix64(master ^ splitmix64(i)) ^ j)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes; stable across platforms and releases.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed for cell `(i, j)` of an experiment grid under `master`.
pub fn cell_seed(master: u64, i: u64, j: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(i)) ^ j)
}

/// Generator for `(seed, purpose, index)`.
pub fn substream(seed: u64, purpose: &str, index: u64) -> Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(splitmix64(label_hash(purpose) ^ splitmix64(index)));
    rng
}
