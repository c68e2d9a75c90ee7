//! Deterministic seed derivation. Every random stream in the crate is
//! keyed by (base seed, domain, index) so that streams never collide and
//! batch elements can be generated in any order.

pub const DOM_TRAIN_DATA: u64 = 0x7261_696e;
pub const DOM_VAL_DATA: u64 = 0x76a1_da7a;
pub const DOM_INIT: u64 = 0x1817_a9a2;
pub const DOM_SHUFFLE: u64 = 0x5877_ff1e;
pub const DOM_BENCH: u64 = 0xbe7c_ca5e;
pub const DOM_TRACE: u64 = 0x72ac_e5e9;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes (base, domain, index) into an independent 64-bit seed.
pub fn derive_seed(base: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(domain)).wrapping_add(index))
}
