//! Named random sub-streams derived from a single master seed.
//!
//! Every stochastic component asks for its own stream (`"triplets"`,
//! `"tasks"`, `"init"`, `"augment"`, ...) so reseeding one component never
//! shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const INIT: &str = "init";
pub const TRIPLETS: &str = "triplets";
pub const TASKS: &str = "tasks";
pub const AUGMENT: &str = "augment";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of the sub-stream `name` under `master`.
pub fn stream_seed(master: u64, name: &str) -> u64 {
    splitmix64(master ^ fnv1a(name))
}

/// Seed of the `index`-th child of `seed` (per-epoch or per-task streams).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(master: u64, name: &str) -> Rng {
    from_seed(stream_seed(master, name))
}
