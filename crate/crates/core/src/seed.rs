//! Hierarchical seed derivation.
//!
//! Every random stream is keyed by a path of labels, e.g.
//! `(master, fold 2, sample 17, "mcd+ig", "ris", rep 4)`. The derived seed is
//! the first eight bytes (little-endian) of SHA-256 over the canonical
//! encoding of that path:
//!
//! ```text
//! "uaeval-seed-v1" || master:u64le || for each part: tag:u8 || payload
//!   tag 0x01: u64le integer
//!   tag 0x02: u64le byte length || UTF-8 bytes
//! ```
//!
//! Because a stream's seed depends only on its path, results do not depend on
//! the order in which work items are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"uaeval-seed-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPart<'a> {
    Int(u64),
    Label(&'a str),
}

impl From<u64> for SeedPart<'_> {
    fn from(v: u64) -> Self {
        SeedPart::Int(v)
    }
}

impl From<usize> for SeedPart<'_> {
    fn from(v: usize) -> Self {
        SeedPart::Int(v as u64)
    }
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(v: &'a str) -> Self {
        SeedPart::Label(v)
    }
}

pub fn derive_seed(master: u64, parts: &[SeedPart<'_>]) -> u64 {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master.to_le_bytes());
    for part in parts {
        match part {
            SeedPart::Int(v) => {
                h.update([0x01]);
                h.update(v.to_le_bytes());
            }
            SeedPart::Label(s) => {
                h.update([0x02]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
        }
    }
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// Shorthand for [`derive_seed`] with heterogeneous parts.
#[macro_export]
macro_rules! seed {
    ($master:expr $(, $part:expr)* $(,)?) => {
        $crate::seed::derive_seed($master, &[$($crate::seed::SeedPart::from($part)),*])
    };
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
