//! Seeded random streams.
//!
//! Every random quantity is drawn from ChaCha8, a counter-based generator.
//! A `(seed, domain)` pair selects the 256-bit key (via SplitMix64 expansion)
//! and the `index` selects one of the generator's 2^64 independent streams.
//! Row `i` of a Gaussian ensemble, for example, always comes from
//! `substream(seed, Domain::GaussianRows, i)`, so rows can be regenerated
//! individually and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Which kind of randomness a stream feeds. Distinct domains never share keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    GaussianRows = 1,
    RwhtSigns = 2,
    Signal = 3,
    Noise = 4,
    Probe = 5,
    Experiment = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, domain, index)`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ (domain as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per trial of an experiment.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    let mut state = seed ^ tag.wrapping_mul(0xA24B_AED4_963E_E407);
    splitmix64(&mut state)
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
