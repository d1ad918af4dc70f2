//! Brute-force reference checks for the closed forms.
//!
//! Each suite recomputes a quantity by simulation or direct evaluation and
//! compares it with the library's closed form.

use ndarray::Array2;
use serde::Serialize;

use crate::allocation::optimize_client_load;
use crate::coding::{aggregate_parity, build_weights, encode_local};
use crate::delay::{cdf_total_delay, sample_round_trip, ClientProfile};
use crate::error::{Error, Result};
use crate::kernel::{embed, rbf_kernel, sample_rff_params};
use crate::lambert::{lambert_w_minus1, BRANCH_POINT};
use crate::random::{self, Purpose};
use crate::training::{coded_gradient, combine, full_gradient, gradient_sum};

pub const SUITES: [&str; 4] = ["delay-cdf", "lambert", "kernel", "unbiasedness"];

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub samples: usize,
    pub reference: f64,
    pub computed: f64,
    /// Allowed gap (a confidence half-width or a fixed tolerance).
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub suite: String,
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: String, samples: usize, reference: f64, computed: f64, tolerance: f64) -> OracleCheck {
    OracleCheck {
        passed: (computed - reference).abs() <= tolerance,
        name,
        samples,
        reference,
        computed,
        tolerance,
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<OracleReport> {
    let checks = match name {
        "delay-cdf" => delay_cdf(seed)?,
        "lambert" => lambert()?,
        "kernel" => kernel(seed)?,
        "unbiasedness" => vec![unbiasedness(seed, 2000)?],
        other => {
            return Err(Error::invalid(format!(
                "unknown oracle suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(OracleReport {
        suite: name.to_string(),
        checks,
    })
}

/// Empirical `P(T <= t)` against the closed form, with a 3-sigma binomial
/// interval.
fn delay_cdf(seed: u64) -> Result<Vec<OracleCheck>> {
    let n = 200_000;
    let cases = [
        (2.0, 2.0, 3f64.sqrt(), 0.9, 4usize, 10.0),
        (2.0, 2.0, 3f64.sqrt(), 0.9, 4, 40.0),
        (76.8, 2.0, 3.259, 0.1, 400, 15.0),
        (5.0, 0.5, 0.4, 0.3, 20, 6.0),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(i, &(mu, alpha, tau, p, load, t))| {
            let profile = ClientProfile::new(mu, alpha, tau, p, load)?;
            let mut rng = random::stream(seed, Purpose::Auxiliary, i as u64);
            let mut hits = 0usize;
            for _ in 0..n {
                hits += usize::from(sample_round_trip(&profile, load, &mut rng)?.total <= t);
            }
            let closed = cdf_total_delay(&profile, load as f64, t);
            let se = (closed * (1.0 - closed) / n as f64).sqrt();
            Ok(check(
                format!("mu={mu} alpha={alpha} tau={tau:.4} p={p} load={load} t={t}"),
                n,
                closed,
                hits as f64 / n as f64,
                3.0 * se + 1e-12,
            ))
        })
        .collect()
}

/// Relative residual `|w e^w - x| / |x|` over a log-spaced sweep.
fn lambert() -> Result<Vec<OracleCheck>> {
    let points = 1000;
    let lo = (-BRANCH_POINT - 1e-9).ln();
    let hi = (1e-9f64).ln();
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let x = -(lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
        let w = lambert_w_minus1(x)?;
        worst = worst.max((w * w.exp() - x).abs() / x.abs());
    }
    let branch = lambert_w_minus1(BRANCH_POINT)?;
    Ok(vec![
        OracleCheck {
            name: "max relative residual on [-1/e + 1e-9, -1e-9]".into(),
            samples: points,
            reference: 0.0,
            computed: worst,
            tolerance: 1e-12,
            passed: worst < 1e-12,
        },
        check("value at the branch point".into(), 1, -1.0, branch, 1e-6),
    ])
}

/// Kernel approximation error over random pairs in `[0, 1]^784`.
fn kernel(seed: u64) -> Result<Vec<OracleCheck>> {
    let (pairs, d, q, sigma) = (1000, 784, 2000, 5.0);
    let stats = kernel_error(seed, pairs, d, q, sigma)?;
    Ok(vec![
        OracleCheck {
            name: format!("mean |<x, y> - K| (q={q}, sigma={sigma})"),
            samples: pairs,
            reference: 0.0,
            computed: stats.mean_abs,
            tolerance: 0.02,
            passed: stats.mean_abs < 0.02,
        },
        OracleCheck {
            name: format!("max |<x, y> - K| (q={q}, sigma={sigma})"),
            samples: pairs,
            reference: 0.0,
            computed: stats.max_abs,
            tolerance: 0.08,
            passed: stats.max_abs < 0.08,
        },
    ])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelErrorStats {
    pub pairs: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub mean_kernel: f64,
}

/// Compare embedded inner products with the exact kernel on uniform pairs.
pub fn kernel_error(seed: u64, pairs: usize, d: usize, q: usize, sigma: f64) -> Result<KernelErrorStats> {
    let map = sample_rff_params(seed, d, q, sigma)?;
    let mut rng = random::stream(seed, Purpose::Auxiliary, 0);
    let points = Array2::from_shape_simple_fn((2 * pairs, d), || random::unit(&mut rng) as f32);
    let emb = embed(&map, points.view())?;
    let (mut sum, mut worst, mut ksum) = (0.0, 0.0f64, 0.0);
    for i in 0..pairs {
        let (a, b) = (2 * i, 2 * i + 1);
        let x: Vec<f64> = points.row(a).iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = points.row(b).iter().map(|&v| v as f64).collect();
        let k = rbf_kernel(&x, &y, sigma)?;
        let approx: f64 = emb.row(a).iter().zip(emb.row(b)).map(|(&u, &v)| u as f64 * v as f64).sum();
        let err = (approx - k).abs();
        sum += err;
        ksum += k;
        worst = worst.max(err);
    }
    Ok(KernelErrorStats {
        pairs,
        mean_abs: sum / pairs as f64,
        max_abs: worst,
        mean_kernel: ksum / pairs as f64,
    })
}

/// Monte-Carlo mean of the combined gradient over generator redraws and
/// straggler outcomes, compared with the full gradient (relative Frobenius
/// gap, 3% tolerance).
pub fn unbiasedness(seed: u64, trials: usize) -> Result<OracleCheck> {
    let (n, l, q, c, u) = (3usize, 8usize, 12usize, 3usize, 6usize);
    let m = n * l;
    let mut rng = random::stream(seed, Purpose::Auxiliary, 0);
    let x = Array2::from_shape_simple_fn((m, q), || (2.0 * random::unit(&mut rng) - 1.0) as f32);
    let mut y = Array2::<f32>::zeros((m, c));
    for i in 0..m {
        y[[i, random::below(&mut rng, c as u64) as usize]] = 1.0;
    }
    let beta = Array2::from_shape_simple_fn((q, c), || 0.3 * random::standard_normal(&mut rng));
    let target = full_gradient(x.view(), y.view(), &beta)?;

    let t = 6.0;
    let profiles = [
        ClientProfile::new(4.0, 2.0, 1.0, 0.2, l)?,
        ClientProfile::new(2.0, 1.0, 1.5, 0.1, l)?,
        ClientProfile::new(8.0, 3.0, 0.8, 0.3, l)?,
    ];
    let mut weights = Vec::new();
    let mut loads = Vec::new();
    let mut p_return = Vec::new();
    for (j, p) in profiles.iter().enumerate() {
        let load = (optimize_client_load(p, t).load.floor() as usize).clamp(1, l);
        let pr = cdf_total_delay(p, load as f64, t);
        weights.push(build_weights(l, load, pr, &mut random::stream(seed, Purpose::Sampling, j as u64))?);
        loads.push(load);
        p_return.push(pr);
    }

    let mut mean = Array2::<f64>::zeros((q, c));
    let mut enc = random::stream(seed, Purpose::Encoding, 0);
    let mut coin = random::stream(seed, Purpose::Delay, 0);
    for _ in 0..trials {
        let mut shards = Vec::with_capacity(n);
        let mut returned = Vec::new();
        for j in 0..n {
            let rows = j * l..(j + 1) * l;
            let xj = x.slice(ndarray::s![rows.clone(), ..]);
            let yj = y.slice(ndarray::s![rows, ..]);
            shards.push(encode_local(xj, yj, &weights[j], u, &mut enc)?);
            if random::unit(&mut coin) < p_return[j] {
                let s = gradient_sum(xj, yj, Some(&weights[j].sampled_indices), &beta)?;
                returned.push((loads[j] as f64, s.gradient / loads[j] as f64));
            }
        }
        let parity = aggregate_parity(&shards)?;
        let g = combine(&coded_gradient(&parity, &beta)?, &returned, m)?;
        mean.scaled_add(1.0 / trials as f64, &g);
    }
    let norm = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gap = norm(&(&mean - &target)) / norm(&target);
    Ok(OracleCheck {
        name: format!("relative gap of mean combined gradient (n={n}, l={l}, q={q}, c={c})"),
        samples: trials,
        reference: 0.0,
        computed: gap,
        tolerance: 0.03,
        passed: gap < 0.03,
    })
}
