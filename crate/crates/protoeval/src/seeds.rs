//! Deterministic seed derivation.
//!
//! Every random draw in the pipeline flows from a config seed through
//! these mixers, so runs are reproducible across platforms and thread
//! counts.

/// splitmix64 finalizer.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with an arbitrary key.
#[inline]
pub fn mix(seed: u64, key: u64) -> u64 {
    splitmix64(seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Hash a label into a u64 key (FNV-1a).
#[inline]
pub fn label_key(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a child seed from a parent seed, a purpose label, and an index.
#[inline]
pub fn derive(seed: u64, label: &str, index: u64) -> u64 {
    mix(mix(seed, label_key(label)), index)
}

/// Map a hash to a float in `[0, 1)`.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
