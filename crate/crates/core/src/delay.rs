//! Compute and communication delay model for a single client.
//!
//! Local computation over `load` points takes `load / mu` seconds plus an
//! exponential memory-access tail with rate `alpha * mu / load`. The model is
//! downloaded and the gradient uploaded over an erasure link; each direction
//! needs a geometric number of attempts of `tau` seconds each. The round trip
//! is the sum of the three parts.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    /// Processing rate in data points per second.
    pub mu: f64,
    /// Ratio of compute time to average memory-access time.
    pub alpha: f64,
    /// Time for one transmission attempt, in seconds.
    pub tau: f64,
    /// Per-attempt erasure probability.
    pub p_err: f64,
    /// Number of local data points.
    pub local_size: usize,
}

impl ClientProfile {
    pub fn new(mu: f64, alpha: f64, tau: f64, p_err: f64, local_size: usize) -> Result<Self> {
        let profile = ClientProfile {
            mu,
            alpha,
            tau,
            p_err,
            local_size,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("mu", self.mu)?;
        positive("alpha", self.alpha)?;
        positive("tau", self.tau)?;
        if !(0.0..1.0).contains(&self.p_err) {
            return Err(Error::invalid(format!(
                "erasure probability must lie in [0, 1), got {}",
                self.p_err
            )));
        }
        if self.local_size == 0 {
            return Err(Error::invalid("local_size must be at least 1"));
        }
        Ok(())
    }

    fn check_load(&self, load: usize) -> Result<()> {
        if load > self.local_size {
            return Err(Error::invalid(format!(
                "load {load} exceeds local dataset size {}",
                self.local_size
            )));
        }
        Ok(())
    }
}

/// One draw of a client's round-trip time, broken into its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    pub t_compute_det: f64,
    pub t_compute_stoch: f64,
    pub n_down: u64,
    pub n_up: u64,
    pub total: f64,
}

/// Shifted-exponential compute time for `load` points. A zero load takes no
/// time and consumes no randomness.
pub fn sample_compute_time<R: RngCore + ?Sized>(
    profile: &ClientProfile,
    load: usize,
    rng: &mut R,
) -> Result<f64> {
    profile.check_load(load)?;
    if load == 0 {
        return Ok(0.0);
    }
    let (det, stoch) = compute_parts(profile, load, rng);
    Ok(det + stoch)
}

fn compute_parts<R: RngCore + ?Sized>(profile: &ClientProfile, load: usize, rng: &mut R) -> (f64, f64) {
    if load == 0 {
        return (0.0, 0.0);
    }
    let l = load as f64;
    let rate = profile.alpha * profile.mu / l;
    (l / profile.mu, random::exponential(rng, rate))
}

/// Attempts needed for one successful transmission over a link with erasure
/// probability `p_err`.
pub fn sample_transmission_count<R: RngCore + ?Sized>(p_err: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..1.0).contains(&p_err) {
        return Err(Error::Domain {
            value: p_err,
            domain: "[0, 1)",
        });
    }
    Ok(random::geometric(rng, p_err))
}

/// Download, compute, upload. Draw order is compute tail, downlink count,
/// uplink count.
pub fn sample_round_trip<R: RngCore + ?Sized>(
    profile: &ClientProfile,
    load: usize,
    rng: &mut R,
) -> Result<DelaySample> {
    profile.check_load(load)?;
    let (t_compute_det, t_compute_stoch) = compute_parts(profile, load, rng);
    let n_down = sample_transmission_count(profile.p_err, rng)?;
    let n_up = sample_transmission_count(profile.p_err, rng)?;
    let total = t_compute_det + t_compute_stoch + profile.tau * (n_down + n_up) as f64;
    Ok(DelaySample {
        t_compute_det,
        t_compute_stoch,
        n_down,
        n_up,
        total,
    })
}

/// Mean round-trip time: `(l/mu)(1 + 1/alpha) + 2 tau / (1 - p)`.
pub fn expected_delay(profile: &ClientProfile, load: f64) -> f64 {
    load / profile.mu * (1.0 + 1.0 / profile.alpha) + 2.0 * profile.tau / (1.0 - profile.p_err)
}

/// Largest transmission count `nu` with `t - tau * nu > 0` (0 when `t <= 0`).
pub(crate) fn max_transmissions(t: f64, tau: f64) -> u64 {
    if t.is_nan() || t <= 0.0 {
        return 0;
    }
    let mut nu = ((t / tau).ceil() as u64).saturating_sub(1);
    while t - tau * (nu + 1) as f64 > 0.0 {
        nu += 1;
    }
    while nu > 0 && t - tau * nu as f64 <= 0.0 {
        nu -= 1;
    }
    nu
}

/// `P(N_down + N_up = nu)`, the NB(2) mass at `nu >= 2`.
pub(crate) fn total_transmissions_pmf(nu: u64, p_err: f64) -> f64 {
    debug_assert!(nu >= 2);
    let q = 1.0 - p_err;
    let tail = if nu == 2 {
        1.0
    } else if nu - 2 <= i32::MAX as u64 {
        p_err.powi((nu - 2) as i32)
    } else {
        p_err.powf((nu - 2) as f64)
    };
    (nu - 1) as f64 * q * q * tail
}

/// Walk the terms of the NB(2) mixture for `P(T <= t)`. The callback gets
/// `(nu, h_nu, slack)` where `slack = t - load/mu - tau*nu > 0` and must return
/// the contribution of that term. Terms stop at the first non-positive slack
/// or once the mass underflows to zero.
pub(crate) fn fold_mixture(profile: &ClientProfile, load: f64, t: f64, mut term: impl FnMut(u64, f64, f64) -> f64) -> f64 {
    let nu_max = max_transmissions(t, profile.tau);
    if nu_max < 2 {
        return 0.0;
    }
    let det = if load > 0.0 { load / profile.mu } else { 0.0 };
    let mut acc = 0.0;
    for nu in 2..=nu_max {
        let slack = t - det - profile.tau * nu as f64;
        if slack <= 0.0 {
            break;
        }
        let h = total_transmissions_pmf(nu, profile.p_err);
        if h == 0.0 {
            break;
        }
        acc += term(nu, h, slack);
    }
    acc
}

/// `1 - exp(-rate * slack)` without cancellation for small arguments.
#[inline]
pub(crate) fn exp_cdf(rate: f64, slack: f64) -> f64 {
    -(-rate * slack).exp_m1()
}

/// Closed-form `P(T <= t)` for a client processing `load` points.
///
/// A zero load reduces to the transmission-only distribution.
pub fn cdf_total_delay(profile: &ClientProfile, load: f64, t: f64) -> f64 {
    if load <= 0.0 {
        return fold_mixture(profile, 0.0, t, |_, h, _| h);
    }
    let rate = profile.alpha * profile.mu / load;
    fold_mixture(profile, load, t, |_, h, slack| h * exp_cdf(rate, slack))
}
