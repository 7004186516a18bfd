//! Counter-based random number generation.
//!
//! Every metaorder draws from a generator keyed on `(seed, record_index)`,
//! so record `i` is the same no matter how the panel generation is chunked
//! or threaded. The generator is a SplitMix64-style counter mix: output `j`
//! is `mix64(key + j * GOLDEN)`. Not cryptographic.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-record generator.
#[derive(Debug, Clone)]
pub struct RecordRng {
    key: u64,
    counter: u64,
}

impl RecordRng {
    /// Generator for record `record_index` of the panel seeded with `seed`.
    pub fn new(seed: u64, record_index: u64) -> Self {
        let key = mix64(seed ^ mix64(record_index.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)));
        Self { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        out
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Equiprobable +1 / -1.
    #[inline]
    pub fn sign(&mut self) -> i8 {
        if self.next_u64() & 1 == 0 {
            1
        } else {
            -1
        }
    }

    /// Pair of independent standard normal draws (Box-Muller).
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}
