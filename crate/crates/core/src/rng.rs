//! Counter-based randomness: every draw is a pure function of a seed and a
//! tuple of counters, so results do not depend on iteration or thread order.

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed with a list of counters.
#[inline]
pub(crate) fn hash(seed: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &c in counters {
        h = splitmix(h ^ c);
    }
    h
}

/// Uniform in `[0, 1)` with 53 bits of precision.
#[inline]
pub(crate) fn unit(seed: u64, counters: &[u64]) -> f64 {
    (hash(seed, counters) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `(0, 1]`, safe to take the log of.
#[inline]
pub(crate) fn unit_open(seed: u64, counters: &[u64]) -> f64 {
    1.0 - unit(seed, counters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_spread() {
        assert_eq!(hash(42, &[1, 2]), hash(42, &[1, 2]));
        assert_ne!(hash(42, &[1, 2]), hash(42, &[2, 1]));
        let mean: f64 = (0..10_000).map(|i| unit(7, &[i])).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
        assert!((0..1000).all(|i| unit_open(3, &[i]) > 0.0));
    }
}
