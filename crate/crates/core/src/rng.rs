//! Portable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! a 64-bit seed (little-endian in the first eight key bytes, the rest zero)
//! and a 64-bit stream id. The stream id packs a purpose domain in the top 16
//! bits and an index (image number, training step, ...) in the low 48 bits, so
//! independent consumers never share a stream and any single item can be
//! regenerated without replaying the others.
//!
//! Uniform reals take the top 53 bits of one `u64`; normals use the cosine
//! branch of Box–Muller over two uniforms. Both are fixed so that other
//! implementations can reproduce datasets bit-for-bit.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type StreamRng = ChaCha8Rng;

/// Purpose domains used as the high bits of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Domain {
    Points = 1,
    Scene = 2,
    Init = 3,
    TrainStep = 4,
    Batches = 5,
    Snapshot = 6,
    Eval = 7,
}

const INDEX_MASK: u64 = (1 << 48) - 1;

/// Opens the stream `(domain, index)` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((domain as u64) << 48) | (index & INDEX_MASK));
    rng
}

/// Uniform on `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[lo, hi)`.
#[inline]
pub fn uniform_range<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal via Box–Muller (cosine branch only).
#[inline]
pub fn normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Integer uniform on `0..n` by 128-bit multiply-shift. `n` must be nonzero.
#[inline]
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as u64
}

/// Fisher–Yates shuffle driven by [`below`].
pub fn shuffle<R: RngCore + ?Sized, X>(rng: &mut R, items: &mut [X]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
