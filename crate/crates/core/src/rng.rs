//! Seed fan-out and RNG state capture.
//!
//! One master seed feeds several independent ChaCha8 streams (map draws,
//! resets, action noise, replay sampling, initialization). Stream state can be
//! flattened to `u64` words for checkpoints and restored bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    MapDraw = 1,
    Reset = 2,
    Action = 3,
    Replay = 4,
    Init = 5,
    Update = 6,
    Eval = 7,
}

/// Independent stream `stream` of the master `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    sub_stream(seed, stream as u64)
}

pub fn sub_stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `[seed words x4, stream, word_pos low, word_pos high]`.
pub fn capture(rng: &Rng) -> Vec<u64> {
    let seed = rng.get_seed();
    let mut out: Vec<u64> = seed
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    out.push(rng.get_stream());
    let pos = rng.get_word_pos();
    out.push(pos as u64);
    out.push((pos >> 64) as u64);
    out
}

pub fn restore(words: &[u64]) -> Option<Rng> {
    if words.len() != 7 {
        return None;
    }
    let mut seed = [0u8; 32];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(&words[..4]) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(words[4]);
    rng.set_word_pos(words[5] as u128 | ((words[6] as u128) << 64));
    Some(rng)
}
