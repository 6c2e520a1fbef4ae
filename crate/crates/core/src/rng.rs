//! Seeded random streams. A single root seed fans out into named substreams
//! so that adding a consumer never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hash::Fnv1a;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn seed_for(&self, name: &str) -> u64 {
        let mut h = Fnv1a::with_seed(self.root);
        h.write(name.as_bytes());
        h.finish()
    }

    pub fn stream(&self, name: &str) -> Rng {
        Rng::seed_from_u64(self.seed_for(name))
    }
}
