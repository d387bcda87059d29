//! Counter-based random streams.
//!
//! Every draw is a pure function of `(master_seed, replication, agent_id,
//! semester, phase, index)`, so a trajectory does not depend on execution
//! order or on how work is split across threads. The policy scenario is
//! deliberately not part of the key: all scenarios see the same cohort and
//! the same per-course draws (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which phase of the semester loop consumes a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Init = 1,
    Outcome = 2,
    Conversion = 3,
    Dropout = 4,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    splitmix(state ^ splitmix(word))
}

/// Random stream owned by one agent in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentStream {
    base: u64,
}

impl AgentStream {
    pub fn new(master_seed: u64, replication: u32, agent_id: u32) -> Self {
        let base = absorb(absorb(absorb(0x6361_7069_7265, master_seed), replication as u64), agent_id as u64);
        AgentStream { base }
    }

    pub fn key(&self, semester: u32, phase: Phase, index: u32) -> u64 {
        absorb(absorb(absorb(self.base, semester as u64), phase as u64), index as u64)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&self, semester: u32, phase: Phase, index: u32) -> f64 {
        (self.key(semester, phase, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Sequential generator for draws that need a distribution sampler.
    pub fn generator(&self, semester: u32, phase: Phase) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key(semester, phase, 0))
    }
}
