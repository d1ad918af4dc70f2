//! Seeded random streams and the primitive samplers built on them.
//!
//! Every stochastic quantity in a run is drawn from a ChaCha20 stream derived
//! from the run seed and a `(purpose, index)` pair. Streams are independent of
//! each other, so the draws seen by one client or one batch never depend on how
//! much randomness another component consumed. Transcendental functions go
//! through `libm` so a seed expands to the same values on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha20Rng;

/// What a stream is used for. The discriminant becomes the high byte of the
/// ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Purpose {
    /// Random Fourier feature parameters, shared by every client.
    Kernel = 1,
    /// Assignment of link and compute capacities to clients.
    Permutation = 2,
    /// Per-step compute and transmission delays.
    Delay = 3,
    /// Client-side choice of which local points to process.
    Sampling = 4,
    /// Client-side generator matrices for parity encoding.
    Encoding = 5,
    /// Free for tests and diagnostics.
    Auxiliary = 6,
}

const INDEX_MASK: u64 = (1 << 56) - 1;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Derive the stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Stream {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & INDEX_MASK));
    rng
}

/// Uniform draw on `[0, 1)` with 53 random bits.
pub fn unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * INV_2_53
}

/// Uniform draw on `(0, 1]`; safe to take the logarithm of.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * INV_2_53
}

/// Standard normal draw by the Box–Muller transform (cosine branch only, one
/// normal per two uniforms).
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let radius = libm::sqrt(-2.0 * libm::log(open_unit(rng)));
    let angle = std::f64::consts::TAU * unit(rng);
    radius * libm::cos(angle)
}

/// Exponential draw with the given rate, by inversion.
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -libm::log(open_unit(rng)) / rate
}

/// Number of attempts up to and including the first success when each attempt
/// fails independently with probability `p_fail`. Caller guarantees
/// `0 <= p_fail < 1`.
pub fn geometric<R: RngCore + ?Sized>(rng: &mut R, p_fail: f64) -> u64 {
    let u = open_unit(rng);
    if p_fail <= 0.0 {
        return 1;
    }
    // P(N > k) = P(U <= p^k) = p^k
    1 + (libm::log(u) / libm::log(p_fail)).floor() as u64
}

/// Uniform integer in `0..n` (rejection sampling, unbiased). `n` must be > 0.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "empty range");
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

/// Uniformly random permutation of `0..n` (Fisher–Yates).
pub fn permutation<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut items: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
    items
}

/// Uniformly random `k`-subset of `0..n`, returned in ascending order.
pub fn subset<R: RngCore + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "subset larger than population");
    let mut items: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, (n - i) as u64) as usize;
        items.swap(i, j);
    }
    items.truncate(k);
    items.sort_unstable();
    items
}

/// A degenerate source that always yields the maximal word. Uniforms from
/// [`open_unit`] are exactly 1, so exponential draws are 0 and every
/// transmission succeeds on the first attempt.
#[derive(Clone, Copy, Debug, Default)]
pub struct PinnedRng;

impl RngCore for PinnedRng {
    fn next_u32(&mut self) -> u32 {
        u32::MAX
    }
    fn next_u64(&mut self) -> u64 {
        u64::MAX
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        dest.fill(0xff)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        dest.fill(0xff);
        Ok(())
    }
}
