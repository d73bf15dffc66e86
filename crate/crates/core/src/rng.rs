//! Sub-seeding: every random stream in a run is derived from one base seed.
//!
//! `sub_seed(base, stream, index)` mixes the base seed with a stream tag and
//! an index through splitmix64, so e.g. region growth for grid seed 17 always
//! uses `sub_seed(seed, STREAM_GROW, 17)` regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_GROW: u64 = 0x6772_6f77;
pub const STREAM_AUDIT: u64 = 0x6175_6474;
pub const STREAM_VOLUME: u64 = 0x766f_6c75;
pub const STREAM_PLAN: u64 = 0x706c_616e;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sub_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
