//! Deterministic per-chunk random streams derived from a master seed.
//!
//! Work is always cut into the same chunks regardless of the worker count,
//! and chunk `i` draws from stream `i` of the master seed, so results do
//! not depend on how many threads ran them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type WalkRng = ChaCha8Rng;

/// Samples per chunk for parallel Monte Carlo.
pub const CHUNK: usize = 256;

pub fn master(seed: u64) -> WalkRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, index: u64) -> WalkRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Splits `total` samples into fixed-size chunks `(index, len)`.
pub fn chunks(total: usize) -> Vec<(u64, usize)> {
    let mut out = Vec::with_capacity(total / CHUNK + 1);
    let mut done = 0;
    let mut i = 0u64;
    while done < total {
        let len = CHUNK.min(total - done);
        out.push((i, len));
        done += len;
        i += 1;
    }
    out
}

/// Runs `f` on a rayon pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
