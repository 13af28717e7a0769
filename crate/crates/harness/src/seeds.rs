//! Trajectory seed streams. Training, validation and test seeds come from
//! disjoint ranges of the 64-bit seed space:
//!
//! ```text
//! bits 62..64  stream (0 train, 1 validation, 2 test)
//! bits 40..62  run seed (low 22 bits)
//! bits  0..40  trajectory index within the run
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Train,
    Valid,
    Test,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Train => 0,
            Stream::Valid => 1,
            Stream::Test => 2,
        }
    }

    pub fn of_seed(seed: u64) -> Option<Stream> {
        match seed >> 62 {
            0 => Some(Stream::Train),
            1 => Some(Stream::Valid),
            2 => Some(Stream::Test),
            _ => None,
        }
    }
}

const RUN_BITS: u64 = 22;
const INDEX_BITS: u64 = 40;

pub fn trajectory_seed(stream: Stream, run_seed: u64, index: u64) -> u64 {
    debug_assert!(index < 1 << INDEX_BITS);
    stream.tag() << 62 | (run_seed & ((1 << RUN_BITS) - 1)) << INDEX_BITS | index
}

/// One contiguous block of seeds drawn by a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub stream: Stream,
    pub purpose: String,
    pub first: u64,
    pub last: u64,
}

/// Record of every seed range a run consumed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLedger {
    pub entries: Vec<LedgerEntry>,
}

impl SeedLedger {
    /// Notes that indices `first..first + count` of `stream` were used.
    pub fn record(&mut self, stream: Stream, run_seed: u64, purpose: &str, first: u64, count: u64) {
        if count == 0 {
            return;
        }
        let lo = trajectory_seed(stream, run_seed, first);
        let hi = trajectory_seed(stream, run_seed, first + count - 1);
        if let Some(e) = self.entries.last_mut() {
            if e.stream == stream && e.purpose == purpose && e.last + 1 == lo {
                e.last = hi;
                return;
            }
        }
        self.entries.push(LedgerEntry {
            stream,
            purpose: purpose.to_string(),
            first: lo,
            last: hi,
        });
    }

    /// Every range lies in its declared stream, and ranges of different
    /// streams never overlap.
    pub fn audit(&self) -> Result<()> {
        for e in &self.entries {
            if Stream::of_seed(e.first) != Some(e.stream) || Stream::of_seed(e.last) != Some(e.stream) {
                return Err(HarnessError::Seeds(format!("{} range {:#x}..={:#x} leaves the {:?} stream", e.purpose, e.first, e.last, e.stream)));
            }
        }
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                if a.stream != b.stream && a.first <= b.last && b.first <= a.last {
                    return Err(HarnessError::Seeds(format!("{} overlaps {}", a.purpose, b.purpose)));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_disjoint() {
        let a = trajectory_seed(Stream::Train, 7, (1 << 40) - 1);
        let b = trajectory_seed(Stream::Valid, 7, 0);
        let c = trajectory_seed(Stream::Test, 7, 0);
        assert!(a < b && b < c);
        assert_eq!(Stream::of_seed(a), Some(Stream::Train));
        assert_eq!(Stream::of_seed(c), Some(Stream::Test));
    }

    #[test]
    fn ledger_merges_adjacent_blocks_and_audits() {
        let mut l = SeedLedger::default();
        l.record(Stream::Train, 1, "train", 0, 32);
        l.record(Stream::Train, 1, "train", 32, 32);
        l.record(Stream::Test, 1, "test", 0, 10);
        assert_eq!(l.entries.len(), 2);
        assert_eq!(l.entries[0].last - l.entries[0].first, 63);
        l.audit().unwrap();
        l.entries.push(LedgerEntry {
            stream: Stream::Test,
            purpose: "bad".into(),
            first: 5,
            last: 6,
        });
        assert!(l.audit().is_err());
    }
}
