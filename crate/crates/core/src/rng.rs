//! Seeded random streams.
//!
//! Every run has a single 64-bit root seed. Components draw from their own
//! stream, selected by a fixed label, so that e.g. the perturbation sampler
//! never shifts the initialization draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to turn stream labels into ChaCha stream ids.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(root: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(label_hash(label));
    rng
}

/// Stream for the `index`-th member of a family (trial, width, ...).
pub fn stream_indexed(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    stream(root, &format!("{label}#{index}"))
}
