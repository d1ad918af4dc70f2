//! Client-side parity construction and server-side aggregation.
//!
//! A client weights each local point by the square root of its probability of
//! not being returned, mixes the weighted rows with a private Gaussian
//! generator and uploads only the mixed rows. The server sums the uploads into
//! one composite parity set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::random;

/// Which local points a client processes and the weight each point gets.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightAssignment {
    /// Sorted local row indices the client will process each step.
    pub sampled_indices: Vec<usize>,
    /// One weight per local row.
    pub weights: Vec<f64>,
}

impl WeightAssignment {
    pub fn local_size(&self) -> usize {
        self.weights.len()
    }
}

/// Pick `optimized_load` of `local_size` points uniformly at random and
/// weight them by `sqrt(1 - p_return)`; unsampled points keep weight 1.
pub fn build_weights<R: RngCore + ?Sized>(
    local_size: usize,
    optimized_load: usize,
    p_return: f64,
    rng: &mut R,
) -> Result<WeightAssignment> {
    if optimized_load > local_size {
        return Err(Error::invalid(format!(
            "load {optimized_load} exceeds the {local_size} local points"
        )));
    }
    if !(0.0..=1.0).contains(&p_return) {
        return Err(Error::Domain {
            value: p_return,
            domain: "[0, 1]",
        });
    }
    let sampled_indices = random::subset(rng, local_size, optimized_load);
    let sampled_weight = (1.0 - p_return).sqrt();
    let mut weights = vec![1.0; local_size];
    for &k in &sampled_indices {
        weights[k] = sampled_weight;
    }
    Ok(WeightAssignment {
        sampled_indices,
        weights,
    })
}

/// Parity uploaded by one client: `(G W X, G W Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityShard {
    pub coded_features: Array2<f64>,
    pub coded_labels: Array2<f64>,
}

/// Sum of all client shards; the only coded data the server holds.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeParity {
    pub coded_features: Array2<f64>,
    pub coded_labels: Array2<f64>,
}

pub(crate) fn draw_generator<R: RngCore + ?Sized>(u: usize, local_size: usize, rng: &mut R) -> Array2<f64> {
    let sd = (1.0 / u as f64).sqrt();
    Array2::from_shape_simple_fn((u, local_size), || sd * random::standard_normal(rng))
}

/// Encode a client's weighted data with a fresh `u x l` generator whose
/// entries are `N(0, 1/u)`. The generator never leaves this function.
pub fn encode_local<R: RngCore + ?Sized>(
    features: ArrayView2<f32>,
    labels: ArrayView2<f32>,
    weights: &WeightAssignment,
    u: usize,
    rng: &mut R,
) -> Result<ParityShard> {
    if u == 0 {
        return Err(Error::invalid("coding redundancy must be at least 1"));
    }
    let l = weights.local_size();
    if features.nrows() != l || labels.nrows() != l {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} feature rows and {} label rows",
            l,
            features.nrows(),
            labels.nrows()
        )));
    }
    let mut g = draw_generator(u, l, rng);
    for (mut col, &w) in g.axis_iter_mut(Axis(1)).zip(&weights.weights) {
        col *= w;
    }
    let x = features.mapv(f64::from);
    let y = labels.mapv(f64::from);
    Ok(ParityShard {
        coded_features: g.dot(&x),
        coded_labels: g.dot(&y),
    })
}

/// Element-wise sum of the client shards.
pub fn aggregate_parity(shards: &[ParityShard]) -> Result<CompositeParity> {
    let first = shards
        .first()
        .ok_or_else(|| Error::invalid("no parity shards to aggregate"))?;
    let mut features = first.coded_features.clone();
    let mut labels = first.coded_labels.clone();
    for (j, shard) in shards.iter().enumerate().skip(1) {
        if shard.coded_features.dim() != features.dim() || shard.coded_labels.dim() != labels.dim() {
            return Err(Error::DimensionMismatch(format!(
                "shard {j} has shapes {:?}/{:?}, expected {:?}/{:?}",
                shard.coded_features.dim(),
                shard.coded_labels.dim(),
                features.dim(),
                labels.dim()
            )));
        }
        features += &shard.coded_features;
        labels += &shard.coded_labels;
    }
    Ok(CompositeParity {
        coded_features: features,
        coded_labels: labels,
    })
}

const HEADER_BYTES: usize = 24;

impl CompositeParity {
    /// Empty parity set (`u = 0`).
    pub fn empty(q: usize, c: usize) -> Self {
        CompositeParity {
            coded_features: Array2::zeros((0, q)),
            coded_labels: Array2::zeros((0, c)),
        }
    }

    pub fn redundancy(&self) -> usize {
        self.coded_features.nrows()
    }

    /// Header `u, q, c` as little-endian `u64`, then the features and the
    /// labels as row-major little-endian `f32`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (u, q) = self.coded_features.dim();
        let c = self.coded_labels.ncols();
        for n in [u, q, c] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in self.coded_features.iter().chain(self.coded_labels.iter()) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_BYTES];
        r.read_exact(&mut header)
            .map_err(|_| Error::Parity("file shorter than its 24-byte header".into()))?;
        let field = |i: usize| u64::from_le_bytes(header[8 * i..8 * i + 8].try_into().unwrap()) as usize;
        let (u, q, c) = (field(0), field(1), field(2));
        let count = u
            .checked_mul(q.checked_add(c).ok_or_else(|| Error::Parity("dimension overflow".into()))?)
            .ok_or_else(|| Error::Parity("dimension overflow".into()))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)
            .map_err(|e| Error::Parity(format!("reading payload: {e}")))?;
        if payload.len() != 4 * count {
            return Err(Error::Parity(format!(
                "header promises {} payload bytes, found {}",
                4 * count,
                payload.len()
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let (xs, ys) = values.split_at(u * q);
        Ok(CompositeParity {
            coded_features: Array2::from_shape_vec((u, q), xs.to_vec()).map_err(|e| Error::Parity(e.to_string()))?,
            coded_labels: Array2::from_shape_vec((u, c), ys.to_vec()).map_err(|e| Error::Parity(e.to_string()))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}
