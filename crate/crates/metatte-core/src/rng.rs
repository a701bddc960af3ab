//! Deterministic randomness: one root seed, split per subsystem by label.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Derive a subsystem seed from the root seed and a stable label.
///
/// Uses splitmix64 over the label bytes so every subsystem gets an
/// independent, reproducible stream from a single user-facing seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut state = root ^ 0x9e37_79b9_7f4a_7c15;
    for &b in label.as_bytes() {
        state = splitmix64(state ^ b as u64);
    }
    splitmix64(state)
}

/// Seeded generator for a subsystem.
pub fn seeded(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal draw via Box-Muller.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    // Guard the log: u1 in (0, 1].
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    crate::math::sqrt(-2.0 * crate::math::ln(u1)) * crate::math::cos(2.0 * crate::math::PI * u2)
}
