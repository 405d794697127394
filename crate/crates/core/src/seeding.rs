//! Derivation of every random stream from one user seed.
//!
//! A stream is identified by `(seed, purpose, index)`. The generator is
//! ChaCha8 seeded with `seed ^ purpose_tag`, with the ChaCha stream id set to
//! `index` (typically a sequence index). Streams are independent of the order
//! in which they are requested, so sequence `i` of a dataset is the same
//! whether it is generated alone, sequentially or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; each purpose gets a distinct key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Trajectory,
    Challenge,
    BaseTracker,
    CorrectionTracker,
    Response,
    ModelInit,
    Shuffle,
    GradCheck,
}

impl Purpose {
    fn tag(self) -> u64 {
        // Arbitrary distinct odd constants.
        match self {
            Purpose::Trajectory => 0x9E37_79B9_7F4A_7C15,
            Purpose::Challenge => 0xBF58_476D_1CE4_E5B9,
            Purpose::BaseTracker => 0x94D0_49BB_1331_11EB,
            Purpose::CorrectionTracker => 0xD6E8_FEB8_6659_FD93,
            Purpose::Response => 0xA076_1D64_78BD_642F,
            Purpose::ModelInit => 0xE703_7ED1_A0B4_28DB,
            Purpose::Shuffle => 0x8EBC_6AF0_9C88_C6E3,
            Purpose::GradCheck => 0x5899_65CC_7537_4CC3,
        }
    }
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.tag());
    rng.set_stream(index);
    rng
}
