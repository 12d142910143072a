//! Counter-based rng substreams.
//!
//! Every random decision in the solver draws from a stream keyed by
//! (seed, iteration, constraint, purpose). This makes runs bit-reproducible
//! regardless of whether per-constraint work is fanned out to worker threads
//! or run serially, and keeps the descent-index stream independent of the
//! per-iteration sample size.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes the independent substreams used within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Index samples drawn inside the approximate-max-index procedure.
    MaxIndex,
    /// The single descent index used by the x-update.
    DescentIndex,
    /// The bandit index used by the per-constraint p-update.
    BanditIndex,
    /// Generic validation / data-generation stream.
    Aux,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::MaxIndex => 0x01,
            StreamKind::DescentIndex => 0x02,
            StreamKind::BanditIndex => 0x03,
            StreamKind::Aux => 0x04,
        }
    }
}

// splitmix64 finalizer; decorrelates nearby counter values.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic substream for iteration `t`, constraint `i`, purpose `kind`.
pub fn substream(seed: u64, t: u64, i: u64, kind: StreamKind) -> ChaCha8Rng {
    let a = mix(seed ^ mix(t));
    let b = mix(a ^ mix(i.wrapping_mul(0x5851_f42d_4c95_7f2d)) ^ kind.tag());
    ChaCha8Rng::seed_from_u64(b)
}

/// Top-level stream for data generators and validators.
pub fn gen_stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed))
}
