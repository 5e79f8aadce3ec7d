//! Counter-based random values for the simulator.
//!
//! Every value is a pure function of `(key, domain, a, b)`, so the simulated
//! device can be read in any order or in parallel and still produce the
//! same bits. The mixer is the SplitMix64 finalizer applied in a short
//! chain; it is fast and statistically sound for simulation, not secure.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const DOMAIN_MUL: u64 = 0xD6E8_FEB8_6659_FD93;
const COUNTER_MUL: u64 = 0xA076_1D64_78BD_642F;

#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed family of independent counter streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: mix64(seed ^ GOLDEN),
        }
    }

    /// Key for one domain (e.g. "cell behavior" vs "read noise").
    #[inline(always)]
    pub fn domain(&self, domain: u64) -> u64 {
        mix64(self.key.wrapping_add(domain.wrapping_mul(DOMAIN_MUL)))
    }

    /// Value addressed by a single counter inside a domain.
    #[inline(always)]
    pub fn at(domain_key: u64, a: u64) -> u64 {
        mix64(domain_key ^ a.wrapping_mul(GOLDEN))
    }

    /// Value addressed by two counters inside a domain.
    #[inline(always)]
    pub fn at2(domain_key: u64, a: u64, b: u64) -> u64 {
        mix64(Self::at(domain_key, a) ^ b.wrapping_add(1).wrapping_mul(COUNTER_MUL))
    }
}

/// Top 53 bits of `x` as a uniform double in [0, 1).
#[inline(always)]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Threshold `t` such that `(x >> 11) < t` holds with probability `p`.
#[inline(always)]
pub fn threshold53(p: f64) -> u64 {
    (p.clamp(0.0, 1.0) * (1u64 << 53) as f64) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_function_of_inputs() {
        let a = CounterRng::new(7);
        let b = CounterRng::new(7);
        let (da, db) = (a.domain(1), b.domain(1));
        assert_eq!(CounterRng::at2(da, 10, 3), CounterRng::at2(db, 10, 3));
        assert_ne!(CounterRng::at2(da, 10, 3), CounterRng::at2(da, 10, 4));
        assert_ne!(a.domain(1), a.domain(2));
        assert_ne!(CounterRng::new(8).domain(1), da);
    }

    #[test]
    fn counter_stream_is_balanced() {
        let d = CounterRng::new(1).domain(5);
        let n = 200_000u64;
        let ones: u64 = (0..n).map(|i| CounterRng::at2(d, 12345, i) >> 63).sum();
        let frac = ones as f64 / n as f64;
        // 5 sigma for a fair coin at n = 2e5
        assert!((frac - 0.5).abs() < 5.0 * 0.5 / (n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn unit_interval() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
        assert_eq!(threshold53(1.0), 1u64 << 53);
        assert_eq!(threshold53(0.0), 0);
    }
}
