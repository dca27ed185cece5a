use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BufferError, EntryHandle, SendBuffer};

/// Which entry to evict when a frame arrives at a full buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    DropOldest,
    DropYoungest,
    Random,
    OrbBuf,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::DropOldest,
        PolicyKind::DropYoungest,
        PolicyKind::Random,
        PolicyKind::OrbBuf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::DropOldest => "drop-oldest",
            PolicyKind::DropYoungest => "drop-youngest",
            PolicyKind::Random => "random",
            PolicyKind::OrbBuf => "orbbuf",
        }
    }

    /// Whether the policy reads eviction scores.
    pub fn needs_scores(self) -> bool {
        self == PolicyKind::OrbBuf
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown policy {0:?} (expected drop-oldest, drop-youngest, random or orbbuf)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownPolicy(s.to_string()))
    }
}

/// An eviction policy with its private random stream.
#[derive(Clone, Debug)]
pub struct Policy {
    kind: PolicyKind,
    rng: ChaCha8Rng,
}

impl Policy {
    pub fn new(kind: PolicyKind, seed: u64) -> Self {
        Self {
            kind,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Picks the entry to evict. The buffer must be nonempty.
    pub fn choose_victim(&mut self, buffer: &SendBuffer) -> Result<EntryHandle, BufferError> {
        if buffer.is_empty() {
            return Err(BufferError::Empty);
        }
        Ok(match self.kind {
            PolicyKind::DropOldest => buffer.head_handle().expect("nonempty"),
            PolicyKind::DropYoungest => buffer.tail_handle().expect("nonempty"),
            PolicyKind::Random => {
                let r = self.rng.random_range(0..buffer.len());
                buffer.handle_at(r).expect("in range")
            }
            PolicyKind::OrbBuf => buffer.max_score_handle()?,
        })
    }
}
