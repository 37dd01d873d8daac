//! Seed hierarchy.
//!
//! Every random draw in a run comes from a ChaCha8 stream derived from the
//! root seed, a phase tag, an epoch and an item index. Streams for different
//! nodes or anchors are independent, so parallel work gives the same results
//! as sequential work regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Init = 1,
    Refresh = 2,
    Rebuild = 3,
    Shuffle = 4,
    Train = 5,
    EvalWalk = 6,
    Probe = 7,
    Demo = 8,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(root, phase, epoch, index)`.
pub fn derive_seed(root: u64, phase: Phase, epoch: u64, index: u64) -> u64 {
    let mut h = mix(root);
    for part in [phase as u64, epoch, index] {
        h = mix(h ^ part);
    }
    h
}

pub fn stream(root: u64, phase: Phase, epoch: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, phase, epoch, index))
}
