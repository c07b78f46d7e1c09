//! Per-edge tuple routing for the five grouping strategies.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::Grouping;

/// Target task set chosen for one tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routed {
    One(usize),
    /// Deliver to every task, exactly once each.
    Broadcast,
}

impl Routed {
    /// Expand into explicit task indices for a consumer with `task_count` tasks.
    pub fn targets(self, task_count: usize) -> Vec<usize> {
        match self {
            Routed::One(i) => vec![i],
            Routed::Broadcast => (0..task_count).collect(),
        }
    }
}

/// Routing state for one edge as seen from one producer.
///
/// The fields hash seed belongs to the edge - every producer on the edge must
/// agree where a key lives. Shuffle randomness and the direct round-robin
/// cursor are private to the producer, so a fixed seed pair reproduces the
/// exact same tuple placement.
pub struct Router<P> {
    grouping: Grouping<P>,
    task_count: usize,
    hash_seed: u64,
    rng: StdRng,
    next_direct: usize,
}

impl<P> Router<P> {
    pub fn new(grouping: Grouping<P>, task_count: usize, hash_seed: u64, state_seed: u64) -> Self {
        assert!(task_count >= 1, "consumer must have at least one task");
        Self {
            grouping,
            task_count,
            hash_seed,
            rng: StdRng::seed_from_u64(state_seed),
            next_direct: 0,
        }
    }

    pub fn task_count(&self) -> usize {
        self.task_count
    }

    pub fn route(&mut self, payload: &P) -> Routed {
        match &self.grouping {
            Grouping::Shuffle => Routed::One(self.rng.gen_range(0..self.task_count)),
            Grouping::Fields(key_of) => {
                let key = key_of(payload);
                Routed::One((fnv1a64(self.hash_seed, key.as_bytes()) % self.task_count as u64) as usize)
            }
            Grouping::All => Routed::Broadcast,
            Grouping::Global => Routed::One(0),
            Grouping::Direct => {
                let target = self.next_direct;
                self.next_direct = (self.next_direct + 1) % self.task_count;
                Routed::One(target)
            }
        }
    }
}

/// Seeded FNV-1a. Pinned here rather than delegated to the standard hasher so
/// fields partitions stay stable across builds and platforms.
fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
