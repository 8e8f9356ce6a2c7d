//! Deterministic derivation of independent RNG substreams.
//!
//! Every stochastic component takes a single 64-bit seed and derives
//! substreams from it by mixing in salts (chain index, iteration number,
//! a component tag). The mixing function is SplitMix64, applied once per
//! salt word; the final mixed state seeds a ChaCha8 stream. Two substreams
//! with different salt sequences are statistically independent, and the
//! derivation does not depend on thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 scramble round.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of salt words into a new 64-bit seed.
pub fn mix_seed(base: u64, salts: &[u64]) -> u64 {
    let mut state = base;
    let mut out = splitmix64(&mut state);
    for &salt in salts {
        state ^= salt.wrapping_mul(0xff51_afd7_ed55_8ccd);
        out ^= splitmix64(&mut state);
    }
    out
}

/// FNV-1a hash of a component tag, for salting substreams by name.
pub fn tag_salt(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in tag.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive an independent ChaCha8 stream from a base seed and salts.
pub fn derive_rng(base: u64, salts: &[u64]) -> ChaCha8Rng {
    let mut state = mix_seed(base, salts);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
