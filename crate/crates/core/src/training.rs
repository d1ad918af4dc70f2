//! Ridge-regression gradients, coded aggregation and the model update.
//!
//! Data matrices may be stored as `f32`; every product and sum is carried out
//! in `f64`.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::coding::CompositeParity;
use crate::error::{Error, Result};

const ROW_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// `q x c` regression weights.
    pub beta: Array2<f64>,
    pub epoch: usize,
    pub step_in_epoch: usize,
}

impl ModelState {
    pub fn zeros(q: usize, c: usize) -> Self {
        ModelState {
            beta: Array2::zeros((q, c)),
            epoch: 0,
            step_in_epoch: 0,
        }
    }

    /// Move to the first step of the next epoch.
    pub fn next_epoch(&mut self) {
        self.epoch += 1;
        self.step_in_epoch = 0;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyperparams {
    pub lambda: f64,
    pub lr0: f64,
    pub decay: f64,
    pub decay_epochs: Vec<usize>,
    pub epochs_total: usize,
    pub batch_size_global: usize,
}

impl Default for TrainingHyperparams {
    fn default() -> Self {
        TrainingHyperparams {
            lambda: 9e-6,
            lr0: 6.0,
            decay: 0.8,
            decay_epochs: vec![40, 65],
            epochs_total: 80,
            batch_size_global: 12_000,
        }
    }
}

impl TrainingHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.batch_size_global == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

/// Unnormalized `X^T (X beta - Y)` over a set of rows, with the squared error.
#[derive(Clone, Debug)]
pub struct GradientSum {
    pub gradient: Array2<f64>,
    pub squared_error: f64,
    pub rows: usize,
}

/// `X^T (X beta - Y)` over `rows` (all rows when `None`).
pub fn gradient_sum<A>(
    features: ArrayView2<A>,
    labels: ArrayView2<A>,
    rows: Option<&[usize]>,
    beta: &Array2<f64>,
) -> Result<GradientSum>
where
    A: Copy + Into<f64>,
{
    let (q, c) = beta.dim();
    if features.ncols() != q || labels.ncols() != c || features.nrows() != labels.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "features {:?}, labels {:?}, model {:?}",
            features.dim(),
            labels.dim(),
            beta.dim()
        )));
    }
    let total = rows.map_or(features.nrows(), <[usize]>::len);
    if let Some(idx) = rows {
        if let Some(&bad) = idx.iter().find(|&&i| i >= features.nrows()) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} out of range for {} rows",
                features.nrows()
            )));
        }
    }

    let mut gradient = Array2::<f64>::zeros((q, c));
    let mut squared_error = 0.0;
    let mut start = 0;
    while start < total {
        let len = ROW_CHUNK.min(total - start);
        let pick = |k: usize| rows.map_or(start + k, |idx| idx[start + k]);
        let x = Array2::from_shape_fn((len, q), |(k, s)| features[[pick(k), s]].into());
        let y = Array2::from_shape_fn((len, c), |(k, s)| labels[[pick(k), s]].into());
        let mut residual = x.dot(beta);
        residual -= &y;
        squared_error += residual.iter().map(|r| r * r).sum::<f64>();
        gradient += &x.t().dot(&residual);
        start += len;
    }
    Ok(GradientSum {
        gradient,
        squared_error,
        rows: total,
    })
}

/// `(1/l) X^T (X beta - Y)`.
pub fn local_gradient<A>(features: ArrayView2<A>, labels: ArrayView2<A>, beta: &Array2<f64>) -> Result<Array2<f64>>
where
    A: Copy + Into<f64>,
{
    if features.nrows() == 0 {
        return Err(Error::invalid("local gradient over zero rows"));
    }
    let s = gradient_sum(features, labels, None, beta)?;
    Ok(s.gradient / s.rows as f64)
}

/// `(1/m) X^T (X beta - Y)` over the whole dataset.
pub fn full_gradient<A>(features: ArrayView2<A>, labels: ArrayView2<A>, beta: &Array2<f64>) -> Result<Array2<f64>>
where
    A: Copy + Into<f64>,
{
    local_gradient(features, labels, beta)
}

/// Unnormalized coded gradient `X^T (X beta - Y)` over the parity set.
pub fn coded_gradient(parity: &CompositeParity, beta: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(gradient_sum(parity.coded_features.view(), parity.coded_labels.view(), None, beta)?.gradient)
}

/// `(1/m) (g_C + sum_j l_j g_j)` over the clients that made the deadline.
pub fn combine(coded: &Array2<f64>, returned: &[(f64, Array2<f64>)], m: usize) -> Result<Array2<f64>> {
    if m == 0 {
        return Err(Error::invalid("combine needs m >= 1"));
    }
    let mut total = coded.clone();
    for (j, (load, g)) in returned.iter().enumerate() {
        if g.dim() != total.dim() {
            return Err(Error::DimensionMismatch(format!(
                "gradient {j} has shape {:?}, expected {:?}",
                g.dim(),
                total.dim()
            )));
        }
        total.scaled_add(*load, g);
    }
    Ok(total / m as f64)
}

/// `lr0 * decay^k` where `k` counts decay epochs at or before `epoch`.
pub fn lr_schedule(epoch: usize, hyper: &TrainingHyperparams) -> f64 {
    let k = hyper.decay_epochs.iter().filter(|&&e| e <= epoch).count();
    hyper.lr0 * hyper.decay.powi(k as i32)
}

/// One step `beta <- beta - lr (g + lambda beta)` at the current epoch's rate.
pub fn update_model(state: &ModelState, gradient: &Array2<f64>, hyper: &TrainingHyperparams) -> Result<ModelState> {
    if gradient.dim() != state.beta.dim() {
        return Err(Error::DimensionMismatch(format!(
            "gradient {:?} vs model {:?}",
            gradient.dim(),
            state.beta.dim()
        )));
    }
    if !gradient.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let lr = lr_schedule(state.epoch, hyper);
    let mut beta = state.beta.clone();
    beta *= 1.0 - lr * hyper.lambda;
    beta.scaled_add(-lr, gradient);
    if !beta.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("model update"));
    }
    Ok(ModelState {
        beta,
        epoch: state.epoch,
        step_in_epoch: state.step_in_epoch + 1,
    })
}

/// `(1/2m) |X beta - Y|^2 + (lambda/2) |beta|^2`.
pub fn regularized_loss<A>(features: ArrayView2<A>, labels: ArrayView2<A>, beta: &Array2<f64>, lambda: f64) -> Result<f64>
where
    A: Copy + Into<f64>,
{
    let s = gradient_sum(features, labels, None, beta)?;
    Ok(loss_from_sum(&s, beta, lambda))
}

pub(crate) fn loss_from_sum(s: &GradientSum, beta: &Array2<f64>, lambda: f64) -> f64 {
    let data = if s.rows == 0 {
        0.0
    } else {
        s.squared_error / (2.0 * s.rows as f64)
    };
    data + 0.5 * lambda * beta.iter().map(|b| b * b).sum::<f64>()
}

/// Fraction of rows whose predicted class matches the label, ties going to
/// the lowest class index.
pub fn accuracy<A>(features: ArrayView2<A>, labels: &[u8], beta: &Array2<f64>) -> Result<f64>
where
    A: Copy + Into<f64>,
{
    let (q, _) = beta.dim();
    if features.ncols() != q || features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "features {:?}, {} labels, model {:?}",
            features.dim(),
            labels.len(),
            beta.dim()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy over an empty test set"));
    }
    let mut hits = 0usize;
    for (chunk, lab) in features.axis_chunks_iter(Axis(0), ROW_CHUNK).zip(labels.chunks(ROW_CHUNK)) {
        let x = chunk.mapv(|v| v.into());
        let scores = x.dot(beta);
        for (row, &y) in scores.axis_iter(Axis(0)).zip(lab) {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            hits += usize::from(best == y as usize);
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}
