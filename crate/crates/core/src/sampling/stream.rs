//! Splittable, seed-addressed random streams.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// A random stream identified by a root seed and a path of child indices.
///
/// Two streams with the same `(seed, path)` produce the same draws. Children
/// are seeded by hashing the full path, so sibling streams do not overlap.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    path: Vec<u64>,
    rng: ChaCha12Rng,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut h = splitmix(seed);
    for (depth, &idx) in path.iter().enumerate() {
        h = splitmix(h ^ splitmix(idx.wrapping_add((depth as u64) << 56)));
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, Vec::new())
    }

    fn at(seed: u64, path: Vec<u64>) -> Self {
        let rng = ChaCha12Rng::from_seed(derive_key(seed, &path));
        RandomStream { seed, path, rng }
    }

    /// Independent child stream; does not advance `self`.
    pub fn child(&self, idx: u64) -> RandomStream {
        let mut path = self.path.clone();
        path.push(idx);
        Self::at(self.seed, path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
