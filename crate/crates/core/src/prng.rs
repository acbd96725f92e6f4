//! Deterministic, splittable uniform random streams.
//!
//! Every stream is identified by a [`StreamKey`] (master seed, replication
//! index, substream index). Key derivation is a pure function: the same key
//! always yields the bit-identical output sequence, on every platform, which
//! makes common-random-number coupling and parallel replications exactly
//! reproducible.
//!
//! The generator is xoshiro256++ seeded through a SplitMix64-style avalanche
//! mix of the key fields. Uniforms are built from the top 53 bits of each
//! 64-bit word, so outputs lie in `[0, 1)` at double precision granularity.

/// Substream carrying the shared randomness for CRN-coupled evaluations.
pub const SUBSTREAM_CRN: u64 = 0;
/// Substream for the independent sample at the upper parameter.
pub const SUBSTREAM_PLUS: u64 = 1;
/// Substream for the independent sample at the lower parameter.
pub const SUBSTREAM_MINUS: u64 = 2;
/// Substream feeding rejection-retry draws in coupled rejection sampling.
pub const SUBSTREAM_RETRY: u64 = 3;

/// Identifies one uniform stream. Distinct keys give distinct streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub replication_index: u64,
    pub substream_index: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, replication_index: u64, substream_index: u64) -> Self {
        Self {
            master_seed,
            replication_index,
            substream_index,
        }
    }
}

/// SplitMix64 finalizer: a 64-bit avalanche permutation.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 step, used to expand one 64-bit seed into generator state.
#[inline]
fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    mix64(*state)
}

/// A xoshiro256++ stream owning 256 bits of state plus a draw counter.
///
/// Single-owner mutable state: clone it if two consumers need the same
/// sequence, never share one instance across tasks.
#[derive(Debug, Clone)]
pub struct UniformStream {
    state: [u64; 4],
    draw_count: u64,
}

/// Derives the stream addressed by `key`. Pure: no global state is touched.
pub fn derive_stream(key: StreamKey) -> UniformStream {
    // Avalanche the three key fields into one seed word, then expand.
    let mut seed = mix64(key.master_seed.wrapping_add(GOLDEN));
    seed = mix64(seed ^ key.replication_index.wrapping_mul(GOLDEN));
    seed = mix64(seed ^ key.substream_index.wrapping_mul(0xd1b5_4a32_d192_ed03));

    let mut sm = seed;
    let mut state = [0u64; 4];
    for word in &mut state {
        *word = splitmix_next(&mut sm);
    }
    if state == [0, 0, 0, 0] {
        state[0] = GOLDEN;
    }
    UniformStream {
        state,
        draw_count: 0,
    }
}

impl UniformStream {
    /// Convenience wrapper over [`derive_stream`].
    pub fn from_key(key: StreamKey) -> Self {
        derive_stream(key)
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Next uniform in `[0, 1)`: top 53 bits of the next word over 2^53.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.draw_count += 1;
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Number of uniforms drawn so far.
    pub fn draw_count(&self) -> u64 {
        self.draw_count
    }
}

/// The four substreams one replication of an estimator consumes.
///
/// Substream roles: 0 carries the CRN-shared uniforms, 1 and 2 the
/// independent pair, 3 the rejection retries.
#[derive(Debug, Clone)]
pub struct EstimatorStreams {
    pub crn: UniformStream,
    pub plus: UniformStream,
    pub minus: UniformStream,
    pub retry: UniformStream,
}

impl EstimatorStreams {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        let sub = |s| derive_stream(StreamKey::new(master_seed, replication_index, s));
        Self {
            crn: sub(SUBSTREAM_CRN),
            plus: sub(SUBSTREAM_PLUS),
            minus: sub(SUBSTREAM_MINUS),
            retry: sub(SUBSTREAM_RETRY),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_1pct, ks_statistic_uniform};

    #[test]
    fn same_key_same_sequence() {
        let k = StreamKey::new(42, 7, 1);
        let mut a = derive_stream(k);
        let mut b = derive_stream(k);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn clones_replay_identically() {
        let mut a = derive_stream(StreamKey::new(1, 2, 3));
        for _ in 0..17 {
            a.next_uniform();
        }
        let mut b = a.clone();
        for _ in 0..1000 {
            assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
        }
    }

    #[test]
    fn substream_change_diverges() {
        let mut a = derive_stream(StreamKey::new(9, 0, 0));
        let mut b = derive_stream(StreamKey::new(9, 0, 1));
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn distinct_keys_distinct_prefixes() {
        let keys = [
            StreamKey::new(0, 0, 0),
            StreamKey::new(0, 0, 1),
            StreamKey::new(0, 1, 0),
            StreamKey::new(1, 0, 0),
            StreamKey::new(0, 1, 1),
            StreamKey::new(u64::MAX, 123, 3),
        ];
        for i in 0..keys.len() {
            for j in (i + 1)..keys.len() {
                let mut a = derive_stream(keys[i]);
                let mut b = derive_stream(keys[j]);
                let differs = (0..64).any(|_| a.next_u64() != b.next_u64());
                assert!(differs, "keys {:?} and {:?} collide", keys[i], keys[j]);
            }
        }
    }

    #[test]
    fn uniforms_in_unit_interval() {
        let mut s = derive_stream(StreamKey::new(0, 0, 0));
        let u0 = s.next_uniform();
        assert!((0.0..1.0).contains(&u0));
        for _ in 0..1_000_000 {
            let u = s.next_uniform();
            assert!((0.0..1.0).contains(&u));
        }
        assert_eq!(s.draw_count(), 1_000_001);
    }

    #[test]
    fn sample_mean_near_half() {
        let mut s = derive_stream(StreamKey::new(2024, 0, 0));
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| s.next_uniform()).sum();
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn ks_uniformity_across_substreams() {
        let n = 100_000;
        let crit = ks_critical_1pct(n);
        let mut passes = 0;
        for sub in 0..100 {
            let mut s = derive_stream(StreamKey::new(0xDEAD_BEEF, 0, sub));
            let mut draws: Vec<f64> = (0..n).map(|_| s.next_uniform()).collect();
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if ks_statistic_uniform(&draws) < crit {
                passes += 1;
            }
        }
        assert!(passes >= 95, "only {passes}/100 substreams pass KS");
    }
}
