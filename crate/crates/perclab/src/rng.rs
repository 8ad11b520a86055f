//! Counter-based deterministic randomness.
//!
//! Every random decision in this crate is a pure function of a small integer
//! key, typically (master seed, trial index, object hash). There is no
//! sequential generator state, so trials can run on any number of workers in
//! any order and still produce bit-identical results, and re-querying the same
//! edge within a trial automatically returns the same outcome (the memoization
//! the cluster explorer relies on). Shared per-pair uniforms also give the
//! monotone coupling in the intensity parameter: raising lambda only adds
//! edges, never removes them.
//!
//! The mixer is SplitMix64 applied as a tiny sponge. Not cryptographic; the
//! 64-bit key space is plenty for desk-scale experiments (a colliding pair of
//! edge keys would merely correlate two edges in one trial).

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Absorb three words into one well-mixed word.
#[inline]
pub fn mix3(a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(a);
    h = splitmix64(h ^ b.wrapping_mul(0xff51_afd7_ed55_8ccd));
    h = splitmix64(h ^ c.wrapping_mul(0xc4ce_b9fe_1a85_ec53));
    h
}

#[inline]
pub fn mix2(a: u64, b: u64) -> u64 {
    mix3(a, b, 0x5bf0_3635)
}

/// Map a mixed word to a uniform double in [0, 1).
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    // 53 high bits -> [0,1) on the 2^-53 grid.
    ((h >> 11) as f64) * (1.0 / 9_007_199_254_740_992.0)
}

/// The shared uniform attached to an unordered pair within one trial.
#[inline]
pub fn pair_uniform(seed: u64, trial: u64, pair_key: u64) -> f64 {
    unit_f64(mix3(seed, trial, pair_key))
}

/// Order-free key for an unordered pair of element hashes.
#[inline]
pub fn pair_key(h1: u64, h2: u64) -> u64 {
    let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
    mix2(lo, hi)
}

/// A keyed counter stream: the i-th draw is a pure function of (key, i).
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(seed: u64, a: u64, b: u64) -> Self {
        Stream {
            key: mix3(seed, a, b),
        }
    }

    #[inline]
    pub fn u64_at(&self, i: u64) -> u64 {
        splitmix64(self.key ^ i.wrapping_mul(GOLDEN))
    }

    #[inline]
    pub fn unit_at(&self, i: u64) -> f64 {
        unit_f64(self.u64_at(i))
    }
}

/// Poisson sample by CDF inversion from a single uniform. Intended for the
/// small means used by the parallel-edge diagnostics; cost is O(mean).
pub fn poisson_inverse(mean: f64, u: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u32;
    while u >= cdf && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// FNV-1a over caller-fed words; used to give group elements a stable 64-bit
/// identity that does not depend on process, run, or platform hasher seeds.
#[derive(Clone, Copy)]
pub struct StableHasher {
    state: u64,
}

impl StableHasher {
    pub fn new() -> Self {
        StableHasher {
            state: 0xcbf2_9ce4_8422_2325,
        }
    }

    #[inline]
    pub fn write_u8(&mut self, b: u8) {
        self.state ^= b as u64;
        self.state = self.state.wrapping_mul(0x0000_0100_0000_01b3);
    }

    #[inline]
    pub fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.write_u8(b);
        }
    }

    #[inline]
    pub fn write_i64(&mut self, x: i64) {
        self.write_u64(x as u64);
    }

    #[inline]
    pub fn finish(&self) -> u64 {
        splitmix64(self.state)
    }
}

impl Default for StableHasher {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_f64_in_range() {
        for i in 0..10_000u64 {
            let u = unit_f64(splitmix64(i));
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn pair_key_is_symmetric() {
        assert_eq!(pair_key(3, 17), pair_key(17, 3));
        assert_ne!(pair_key(3, 17), pair_key(3, 18));
    }

    #[test]
    fn streams_are_pure_functions() {
        let s1 = Stream::new(42, 7, 9);
        let s2 = Stream::new(42, 7, 9);
        for i in 0..100 {
            assert_eq!(s1.u64_at(i), s2.u64_at(i));
        }
    }

    #[test]
    fn uniform_mean_is_centered() {
        let s = Stream::new(1234, 0, 0);
        let n = 200_000u64;
        let mean: f64 = (0..n).map(|i| s.unit_at(i)).sum::<f64>() / n as f64;
        // SE = 1/sqrt(12 n) ~ 6.5e-4; allow 5 SE.
        assert!((mean - 0.5).abs() < 3.3e-3, "mean = {mean}");
    }

    #[test]
    fn poisson_inversion_matches_mean_and_zero() {
        assert_eq!(poisson_inverse(0.0, 0.999), 0);
        let s = Stream::new(99, 1, 2);
        let n = 100_000u64;
        let mean = 2.5;
        let total: u64 = (0..n)
            .map(|i| poisson_inverse(mean, s.unit_at(i)) as u64)
            .sum();
        let emp = total as f64 / n as f64;
        // SE = sqrt(mean/n) ~ 5e-3; allow 3 SE.
        assert!((emp - mean).abs() < 0.015, "empirical mean = {emp}");
    }
}
