//! Random Fourier features for the RBF kernel.
//!
//! A map is fully determined by `(seed, d, q, sigma)`, so every client that is
//! handed the same seed builds the same embedding without exchanging data.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::random::{self, Purpose};

const ROW_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct RffMap {
    /// `q x d`; row `s` is the frequency vector `omega_s`.
    pub frequencies: Array2<f64>,
    /// Phase shifts in `(0, 2 pi]`, length `q`.
    pub shifts: Array1<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl RffMap {
    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.frequencies.nrows()
    }
}

/// Build the map for `(seed, d, q, sigma)`. All frequency entries are drawn
/// first (row-major, `q x d`), then the `q` shifts.
pub fn sample_rff_params(seed: u64, d: usize, q: usize, sigma: f64) -> Result<RffMap> {
    if d == 0 || q == 0 {
        return Err(Error::invalid(format!("embedding needs d >= 1 and q >= 1, got d={d}, q={q}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("kernel width must be positive, got {sigma}")));
    }
    let mut rng = random::stream(seed, Purpose::Kernel, 0);
    let scale = 1.0 / sigma;
    let frequencies = Array2::from_shape_simple_fn((q, d), || scale * random::standard_normal(&mut rng));
    let shifts = Array1::from_shape_simple_fn(q, || std::f64::consts::TAU * random::open_unit(&mut rng));
    Ok(RffMap {
        frequencies,
        shifts,
        sigma,
        seed,
    })
}

/// Map every row `x` of `features` to `sqrt(2/q) cos(x omega_s + delta_s)`.
///
/// Products are formed in 64-bit chunks; the result is stored as `f32`.
pub fn embed(map: &RffMap, features: ArrayView2<f32>) -> Result<Array2<f32>> {
    let d = map.input_dim();
    if features.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns, embedding expects {d}",
            features.ncols()
        )));
    }
    let q = map.output_dim();
    let scale = (2.0 / q as f64).sqrt();
    let omega_t = map.frequencies.t();
    let mut out = Array2::<f32>::zeros((features.nrows(), q));

    for (src, mut dst) in features
        .axis_chunks_iter(Axis(0), ROW_CHUNK)
        .zip(out.axis_chunks_iter_mut(Axis(0), ROW_CHUNK))
    {
        let x = src.mapv(f64::from);
        let mut proj = x.dot(&omega_t);
        proj += &map.shifts;
        dst.zip_mut_with(&proj, |o, &p| *o = (scale * libm::cos(p)) as f32);
    }
    Ok(out)
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-sq / (2.0 * sigma * sigma)).exp())
}

/// Inner product of two embedded rows, accumulated in 64 bits.
pub fn feature_inner(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Embed a single `f64` vector (diagnostics and tests).
pub fn embed_one(map: &RffMap, x: &[f64]) -> Result<Vec<f32>> {
    let row = Array2::from_shape_vec((1, x.len()), x.iter().map(|&v| v as f32).collect())
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok(embed(map, row.view())?.slice(s![0, ..]).to_vec())
}
