//! Reproducible random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A counter-based random stream addressed by `(seed, stream_id)`.
///
/// Two streams with the same address produce the same bytes regardless of
/// which thread creates them or in which order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream for item `index`, independent of this stream's position.
    pub fn derive(&self, index: u64) -> Self {
        Self::new(self.seed, mix(self.stream_id, index))
    }

    /// Uniform integer in `0..upper`.
    pub fn below(&mut self, upper: usize) -> usize {
        self.inner.random_range(0..upper)
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// splitmix64 finalizer over the pair.
fn mix(stream_id: u64, index: u64) -> u64 {
    let mut z = stream_id
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream namespaces, so that independent uses of one seed never share a stream.
pub mod streams {
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const AUGMENT: u64 = 0x4155_474d;
    pub const PROPENSITY: u64 = 0x5052_4f50;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const EVAL: u64 = 0x4556_414c;
    pub const FAILURE: u64 = 0x4641_494c;
}
