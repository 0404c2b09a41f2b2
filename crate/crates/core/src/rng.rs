//! Counter-based random streams.
//!
//! Every random draw in a run is addressed by `(master seed, stream id,
//! draw counter)`. Replica `i` always gets stream `i`, so results do not
//! depend on how replicas are scheduled across workers. Environments are
//! realized by hashing `(seed, model tag, site)` directly, which lets an
//! infinite lattice be evaluated lazily and concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of tags into a seed. Order matters.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(master ^ GOLDEN), |acc, &t| mix64(acc.wrapping_add(GOLDEN) ^ mix64(t)))
}

/// Hash of a lattice site under a seed and tag; coordinates enter with
/// distinct multipliers so permuted sites do not collide.
#[inline]
pub fn site_hash(seed: u64, tag: u64, coords: &[i64], salt: u64) -> u64 {
    let mut h = mix64(seed ^ tag.wrapping_mul(GOLDEN));
    for (k, &c) in coords.iter().enumerate() {
        h = mix64(h ^ (c as u64).wrapping_add((k as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93)));
    }
    mix64(h ^ salt.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Maps 64 random bits to a uniform in [0, 1) with 53-bit resolution.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Anything that hands out uniforms in [0, 1). The walk engine consumes
/// randomness only through this trait so tests can pin individual draws.
pub trait UniformSource {
    fn next_f64(&mut self) -> f64;
}

/// ChaCha8 keyed by the master seed, with the replica id as stream number.
#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
    stream: u64,
}

impl StreamRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self { inner, stream }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }
}

impl UniformSource for StreamRng {
    #[inline]
    fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }
}

/// Replays a fixed script of uniforms, then cycles through `tail`.
#[derive(Clone, Debug)]
pub struct ScriptedSource {
    script: Vec<f64>,
    tail: Vec<f64>,
    pos: usize,
}

impl ScriptedSource {
    pub fn new(script: Vec<f64>, tail: Vec<f64>) -> Self {
        assert!(!tail.is_empty(), "scripted source needs a non-empty tail");
        Self { script, tail, pos: 0 }
    }
}

impl UniformSource for ScriptedSource {
    fn next_f64(&mut self) -> f64 {
        let v = if self.pos < self.script.len() {
            self.script[self.pos]
        } else {
            let k = (self.pos - self.script.len()) % self.tail.len();
            self.tail[k]
        };
        self.pos += 1;
        v
    }
}
