//! Stable seed derivation. Child seeds depend only on the parent seed and the
//! labels mixed in, never on execution order or platform hashing.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derives a child seed from `base` and an ordered list of string labels.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, l| splitmix64(acc ^ fnv1a(l.as_bytes())))
}

/// Derives a child seed from `base` and integer labels.
pub fn derive_seed_u64(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, l| splitmix64(acc ^ splitmix64(*l)))
}
