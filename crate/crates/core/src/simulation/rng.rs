//! Counter-based substreams of ChaCha8.
//!
//! The generator is keyed by the scenario seed; the replication index picks
//! the ChaCha stream and `(study, slot)` picks a disjoint window of that
//! stream's keystream. Draws for one arm therefore never depend on how many
//! draws other arms or replications consumed, or on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STUDY_SHIFT: u32 = 48;
const SLOT_SHIFT: u32 = 36;
pub const MAX_STUDIES: usize = 1 << (68 - STUDY_SHIFT);
pub const MAX_SLOTS: usize = 1 << (STUDY_SHIFT - SLOT_SHIFT);

/// Slot 0 holds study-level draws; slot `k + 1` holds arm `k`.
pub fn substream(seed: u64, rep: u64, study: usize, slot: usize) -> ChaCha8Rng {
    assert!(
        study < MAX_STUDIES && slot < MAX_SLOTS,
        "substream index out of range"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng.set_word_pos(((study as u128) << STUDY_SHIFT) | ((slot as u128) << SLOT_SHIFT));
    rng
}
