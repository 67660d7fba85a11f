//! Counter-based random streams.
//!
//! A master seed fans out into one stream per replica, and a replica key fans
//! out into one stream per tree node. Node streams are keyed by the node's
//! Ulam–Harris label, so a subtree can be re-drawn without touching anything
//! else in the tree, and results never depend on the order in which nodes or
//! replicas are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::genealogy::UlamHarrisLabel;

/// The generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Stream salts for the non-node streams a replica owns.
pub mod salt {
    pub const SPINE: u64 = 0x5350_494E_455F_5354;
    pub const SELECT: u64 = 0x5345_4C45_4354_5350;
    pub const RESAMPLE: u64 = 0x5245_5341_4D50_4C45;
    pub const POPULATION: u64 = 0x504F_5055_4C41_5449;
    pub const RERUN: u64 = 0x5245_5255_4E5F_5345;
}

/// Per-replica stream factory derived from a 64-bit master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Key identifying replica `index`; feeds node and spine streams.
    pub fn replica_key(&self, index: u64) -> ReplicaKey {
        ReplicaKey(combine(self.master, index))
    }

    /// A generator that is a pure function of `(master, index)`.
    pub fn replica_rng(&self, index: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(index);
        rng
    }

    /// Fresh, independent master seed for a re-run.
    pub fn rerun(&self) -> Self {
        Self::new(combine(self.master, salt::RERUN))
    }

    /// A sub-family for one component of a suite, so that two reports in the
    /// same run never share replicas.
    pub fn fork(&self, tag: u64) -> Self {
        Self::new(combine(self.master, tag))
    }
}

/// Key of one replica (or of one resample of a replica).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReplicaKey(pub u64);

impl ReplicaKey {
    pub fn node_rng(&self, label: &UlamHarrisLabel) -> SimRng {
        ChaCha8Rng::seed_from_u64(combine(self.0, label.stream_hash()))
    }

    pub fn salted_rng(&self, salt: u64) -> SimRng {
        ChaCha8Rng::seed_from_u64(combine(self.0, salt))
    }

    pub fn derive(&self, salt: u64) -> ReplicaKey {
        ReplicaKey(combine(self.0, salt))
    }
}
