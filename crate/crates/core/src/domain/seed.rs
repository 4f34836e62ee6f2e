//! Master-seed fan-out.
//!
//! Every component draws from its own stream, derived as
//! `splitmix64(master ^ splitmix64(stream))`, so that e.g. changing the
//! policy initialization never perturbs the generated workload.

/// Stream tags.
pub const TRACE: u64 = 1;
pub const INIT: u64 = 2;
pub const SAMPLING: u64 = 3;
pub const SIM: u64 = 4;
pub const EVAL_TRACE: u64 = 5;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Seed for item `index` of a stream (e.g. the trace of episode `index`).
pub fn derive_indexed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(derive(master, stream) ^ splitmix64(index.wrapping_add(0x5151)))
}
