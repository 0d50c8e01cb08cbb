use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// 256-bit PRNG key.
///
/// Keys form a tree: a child key is
/// `SHA-256(parent ‖ "child" ‖ len(name) as u64 LE ‖ name ‖ index as u64 LE)`.
/// The length prefix keeps `("ab", i)` and `("a", ...)` encodings disjoint.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RngKey([u8; 32]);

impl RngKey {
    pub const fn zero() -> Self {
        Self([0; 32])
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Root key for an integer seed: `SHA-256("seed" ‖ seed as u64 LE)`.
    pub fn from_seed(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"seed");
        h.update(seed.to_le_bytes());
        Self(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Deterministic stream seeded by this key (ChaCha20).
    pub fn stream(&self) -> KeyStream {
        KeyStream(ChaCha20Rng::from_seed(self.0))
    }
}

impl fmt::Debug for RngKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RngKey({})", &self.to_hex()[..16])
    }
}

pub fn child_key(parent: &RngKey, child_name: &str, index: u64) -> RngKey {
    let mut h = Sha256::new();
    h.update(parent.0);
    h.update(b"child");
    h.update((child_name.len() as u64).to_le_bytes());
    h.update(child_name.as_bytes());
    h.update(index.to_le_bytes());
    RngKey(h.finalize().into())
}

/// Uniform draws from a key. Values depend only on the ChaCha20 stream, so
/// they are identical on every platform.
pub struct KeyStream(ChaCha20Rng);

impl KeyStream {
    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-bound, bound)`.
    pub fn next_symmetric(&mut self, bound: f64) -> f64 {
        (2.0 * self.next_unit() - 1.0) * bound
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Rejection sampling keeps the draw unbiased.
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.0.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }
}
