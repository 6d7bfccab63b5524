//! Counter-based random streams.
//!
//! Every trajectory in an ensemble draws from its own ChaCha8 stream keyed by
//! `(base_seed, index)`, so results do not depend on which worker ran which
//! trajectory or in what order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::vec3::Vec3;

#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
    index: u64,
}

impl RandomStream {
    /// Stream `0` of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// The `index`-th independent stream derived from `seed`.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        RandomStream { rng, seed, index }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Unit-mean exponential by inversion, `−ln(1 − u)` with `u ∈ [0, 1)`.
    pub fn exp1(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform point on the unit sphere: three standard normals, normalized.
    /// The zero vector is rejected.
    pub fn unit_vector(&mut self) -> Vec3 {
        loop {
            let v = Vec3::new(
                self.standard_normal(),
                self.standard_normal(),
                self.standard_normal(),
            );
            if let Some(u) = v.normalized() {
                return u;
            }
        }
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
