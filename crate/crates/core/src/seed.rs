//! Deterministic seed derivation.
//!
//! Every random decision in an experiment (weight init, task order, sample
//! order, connection sampling, permutations) gets its own stream derived
//! from the master seed by integer mixing, so streams stay independent and
//! reproducible across platforms.

/// Fixed role tags for sub-seed derivation.
pub mod role {
    pub const INIT: u64 = 0x01;
    pub const TASK_ORDER: u64 = 0x02;
    pub const SAMPLE_ORDER: u64 = 0x03;
    pub const CONNECTIONS: u64 = 0x04;
    pub const PERMUTATION: u64 = 0x05;
}

/// splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes two 64-bit values into one.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(17))
}

/// Seed for run `run_idx` of an experiment.
pub fn run_seed(master_seed: u64, run_idx: u64) -> u64 {
    mix(master_seed, run_idx)
}

/// Role-specific sub-seed within a run. `index` disambiguates repeated
/// uses of the same role (e.g. one permutation per task).
pub fn sub_seed(run_seed: u64, role: u64, index: u64) -> u64 {
    mix(mix(run_seed, role), index)
}
