//! Straggler-aware load allocation.
//!
//! For a server deadline `t`, client `j` processing `l` points returns
//! `l * 1{T_j <= t}`. Its expected value is a finite mixture over the total
//! transmission count `nu`:
//!
//! ```text
//! E[R_j(t; l)] = sum_{nu=2}^{nu_m} U(t - l/mu - nu*tau) h_nu f_nu(t; l)
//! f_nu(t; l)   = l * (1 - exp(-(alpha*mu/l) (t - l/mu - nu*tau)))
//! h_nu         = (nu - 1)(1 - p)^2 p^(nu - 2)
//! ```
//!
//! Term `nu` is active only while `l < mu (t - nu*tau)`, so on the piece
//! `(mu (t - (k+1) tau), mu (t - k tau))` the objective is the concave sum of
//! the first `k - 1` terms. Each `f_nu` has a closed-form maximizer through
//! `W_{-1}`; the maximizer of the sum lies between the smallest and largest of
//! those, which gives a bracket for bisection on the derivative.
//!
//! The waiting time is then the smallest `t` for which the maximized aggregate
//! return reaches the target, found by binary search.

use serde::{Deserialize, Serialize};

use crate::delay::{exp_cdf, fold_mixture, max_transmissions, total_transmissions_pmf, ClientProfile};
use crate::error::{Error, Result};
use crate::lambert::lambert_w_minus1_neg_exp;

/// Relative width at which the waiting-time bisection stops.
pub const SEARCH_RESOLUTION: f64 = 1e-6;

/// Default bracketing tolerance as a fraction of the total data count.
pub const DEFAULT_EPSILON_FRACTION: f64 = 1e-3;

const SCAN_POINTS: usize = 10_000;
const MAX_DOUBLINGS: usize = 2_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnCurvePoint {
    pub load: f64,
    pub expected_return: f64,
}

/// Result of the two-step allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadAllocation {
    /// Integer per-client loads (the relaxed optimum rounded down).
    #[serde(rename = "loads")]
    pub per_client_load: Vec<usize>,
    /// Continuous per-client optimum at the waiting time.
    #[serde(rename = "relaxed_loads")]
    pub relaxed_load: Vec<f64>,
    #[serde(rename = "u")]
    pub coded_redundancy: usize,
    #[serde(rename = "waiting_time_s")]
    pub waiting_time: f64,
    /// Maximized expected return of the clients at the waiting time.
    #[serde(rename = "expected_return")]
    pub expected_uncoded_return: f64,
    /// Target the clients were asked to return, `m - u`.
    pub target_return: f64,
    pub epsilon: f64,
}

impl LoadAllocation {
    /// Check structural invariants against the profiles the allocation was
    /// computed for.
    pub fn validate(&self, profiles: &[ClientProfile]) -> Result<()> {
        if self.per_client_load.len() != profiles.len() || self.relaxed_load.len() != profiles.len() {
            return Err(Error::DimensionMismatch(format!(
                "allocation covers {} clients, {} profiles given",
                self.per_client_load.len(),
                profiles.len()
            )));
        }
        for (j, ((&l, &r), p)) in self
            .per_client_load
            .iter()
            .zip(&self.relaxed_load)
            .zip(profiles)
            .enumerate()
        {
            if l > p.local_size || r < 0.0 || r > p.local_size as f64 || l as f64 > r {
                return Err(Error::invalid(format!(
                    "client {j}: load {l} (relaxed {r}) outside [0, {}]",
                    p.local_size
                )));
            }
        }
        if !(self.waiting_time >= 0.0 && self.waiting_time.is_finite()) {
            return Err(Error::invalid(format!("waiting time {}", self.waiting_time)));
        }
        if self.target_return > 0.0
            && !(self.expected_uncoded_return >= self.target_return - self.epsilon
                && self.expected_uncoded_return <= self.target_return + self.epsilon)
        {
            return Err(Error::invalid(format!(
                "expected return {} not within {} of target {}",
                self.expected_uncoded_return, self.epsilon, self.target_return
            )));
        }
        Ok(())
    }
}

/// How much coded work the server takes on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedundancyPolicy {
    /// The server always finishes `u` coded points; clients must return `m - u`.
    Fixed { u: usize },
    /// The server is one more stochastic node holding at most `u_max` coded
    /// points; `u` is its optimized load.
    Optimized { u_max: usize, server: ClientProfile },
}

/// Expected number of points returned by the deadline `t`.
pub fn expected_return(profile: &ClientProfile, load: f64, t: f64) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    let rate = profile.alpha * profile.mu / load;
    fold_mixture(profile, load, t, |_, h, slack| h * (load * exp_cdf(rate, slack)))
}

/// Load maximizing the single term `f_nu(t; l)` over `l > 0`:
/// `-(alpha mu / (W_{-1}(-e^{-(1+alpha)}) + 1)) (t - nu tau)`, or 0 when
/// `t <= nu tau`.
pub fn optimal_load_for_piece(profile: &ClientProfile, t: f64, nu: u64) -> f64 {
    let window = t - nu as f64 * profile.tau;
    if window <= 0.0 {
        return 0.0;
    }
    load_per_window(profile) * window
}

/// `-alpha mu / (W + 1)`: the single-term maximizer per second of window.
fn load_per_window(profile: &ClientProfile) -> f64 {
    let w = lambert_w_minus1_neg_exp(1.0 + profile.alpha);
    -profile.alpha * profile.mu / (w + 1.0)
}

/// Derivative in `l` of `sum_{nu=2}^{k} h_nu f_nu(t; l)`.
fn piece_slope(profile: &ClientProfile, load: f64, t: f64, k: u64) -> f64 {
    let am = profile.alpha * profile.mu;
    let mut slope = 0.0;
    for nu in 2..=k {
        let h = total_transmissions_pmf(nu, profile.p_err);
        if h == 0.0 {
            break;
        }
        let z = am * (t - nu as f64 * profile.tau) / load;
        // d/dl [l - l e^{alpha - z}] with z = alpha mu window / l
        slope += h * (1.0 - (profile.alpha - z).exp() * (1.0 + z));
    }
    slope
}

/// Maximize `E[R_j(t; l)]` over `0 <= l <= local_size`.
///
/// Every piece is a concave problem; the best piece wins and ties go to the
/// larger load.
pub fn optimize_client_load(profile: &ClientProfile, t: f64) -> ReturnCurvePoint {
    let mut best = ReturnCurvePoint {
        load: 0.0,
        expected_return: 0.0,
    };
    let nu_max = max_transmissions(t, profile.tau);
    if nu_max < 2 {
        return best;
    }
    let cap = profile.local_size as f64;
    let per_window = load_per_window(profile);

    // pieces below this index only hold loads above the capacity
    let first = (t / profile.tau - cap / (profile.mu * profile.tau) - 1.0).floor();
    let first = if first > 2.0 { first as u64 } else { 2 };

    for k in first..=nu_max {
        let piece_hi = profile.mu * (t - k as f64 * profile.tau);
        let piece_lo = (profile.mu * (t - (k + 1) as f64 * profile.tau)).max(0.0);
        let hi = piece_hi.min(cap);
        if hi <= piece_lo {
            continue;
        }
        // the objective never exceeds the load itself
        if hi <= best.expected_return {
            break;
        }

        // unconstrained maximizer of the piece lies between the single-term
        // maximizers of its first and last terms
        let mut a = per_window * (t - k as f64 * profile.tau);
        let mut b = per_window * (t - 2.0 * profile.tau);
        let unconstrained = if a >= hi {
            hi
        } else if b <= piece_lo {
            piece_lo
        } else {
            a = a.max(piece_lo);
            b = b.min(hi);
            if piece_slope(profile, b, t, k) >= 0.0 {
                b
            } else if piece_slope(profile, a, t, k) <= 0.0 {
                a
            } else {
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if piece_slope(profile, mid, t, k) > 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            }
        };
        let load = unconstrained.clamp(piece_lo, hi);
        let value = expected_return(profile, load, t);
        if value > best.expected_return {
            best = ReturnCurvePoint {
                load,
                expected_return: value,
            };
        }
    }
    best
}

/// Maximized aggregate expected return at deadline `t`, with the per-client
/// optima.
pub fn aggregate_return(profiles: &[ClientProfile], t: f64) -> (f64, Vec<ReturnCurvePoint>) {
    let points: Vec<ReturnCurvePoint> = profiles.iter().map(|p| optimize_client_load(p, t)).collect();
    let total = points.iter().map(|p| p.expected_return).sum();
    (total, points)
}

/// Smallest waiting time whose maximized aggregate expected return lies in
/// `[target, target + epsilon]`.
///
/// The return only reaches the total data count in the limit, so a target
/// within `epsilon / 2` of the total is lowered to `total - epsilon / 2`.
pub fn optimize_waiting_time(profiles: &[ClientProfile], target: f64, epsilon: f64) -> Result<LoadAllocation> {
    if profiles.is_empty() {
        return Err(Error::invalid("no clients to allocate to"));
    }
    for p in profiles {
        p.validate()?;
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::invalid(format!("target return must be positive, got {target}")));
    }
    let available: f64 = profiles.iter().map(|p| p.local_size as f64).sum();
    if target > available {
        return Err(Error::Infeasible { target, available });
    }
    let goal = target.min(available - 0.5 * epsilon);
    let agg = |t: f64| aggregate_return(profiles, t).0;

    // return is zero until two transmissions fit in the window
    let floor = 2.0 * profiles.iter().map(|p| p.tau).fold(f64::INFINITY, f64::min);
    let mut lo = floor;
    let mut lo_val = 0.0;
    let mut hi = 2.0 * floor;
    let mut hi_val = agg(hi);
    let mut monotone = true;
    let mut doublings = 0;
    while hi_val < goal {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Infeasible { target, available });
        }
        let next = 2.0 * hi;
        let next_val = agg(next);
        if next_val < hi_val {
            monotone = false;
        }
        lo = hi;
        lo_val = hi_val;
        hi = next;
        hi_val = next_val;
    }

    if monotone {
        while hi - lo > SEARCH_RESOLUTION * hi {
            let mid = 0.5 * (lo + hi);
            let v = agg(mid);
            if v < lo_val || v > hi_val {
                monotone = false;
                break;
            }
            if v >= goal {
                hi = mid;
                hi_val = v;
            } else {
                lo = mid;
                lo_val = v;
            }
        }
    }

    if !monotone {
        // coarse scan for the first crossing, then bisect inside that cell
        let upper = hi;
        let step = (upper - floor) / SCAN_POINTS as f64;
        lo = floor;
        hi = upper;
        for i in 1..=SCAN_POINTS {
            let t = floor + step * i as f64;
            if agg(t) >= goal {
                hi = t;
                break;
            }
            lo = t;
        }
        while hi - lo > SEARCH_RESOLUTION * hi {
            let mid = 0.5 * (lo + hi);
            if agg(mid) >= goal {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    // tighten until the upper side of the bracket holds as well
    let (mut value, mut points) = aggregate_return(profiles, hi);
    while value > goal + epsilon {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v, pts) = aggregate_return(profiles, mid);
        if v >= goal {
            hi = mid;
            value = v;
            points = pts;
        } else {
            lo = mid;
        }
    }

    let relaxed_load: Vec<f64> = points.iter().map(|p| p.load).collect();
    let per_client_load = relaxed_load
        .iter()
        .zip(profiles)
        .map(|(&l, p)| (l.floor() as usize).min(p.local_size))
        .collect();
    Ok(LoadAllocation {
        per_client_load,
        relaxed_load,
        coded_redundancy: 0,
        waiting_time: hi,
        expected_uncoded_return: value,
        target_return: target,
        epsilon,
    })
}

/// Two-step allocation for `total_points` data points under a redundancy
/// policy, with the default tolerance `epsilon = 1e-3 * m`.
pub fn allocate(profiles: &[ClientProfile], total_points: usize, policy: &RedundancyPolicy) -> Result<LoadAllocation> {
    allocate_with_tolerance(profiles, total_points, policy, DEFAULT_EPSILON_FRACTION * total_points as f64)
}

/// [`allocate`] with an explicit return tolerance `epsilon`.
pub fn allocate_with_tolerance(
    profiles: &[ClientProfile],
    total_points: usize,
    policy: &RedundancyPolicy,
    epsilon: f64,
) -> Result<LoadAllocation> {
    let m = total_points as f64;
    match *policy {
        RedundancyPolicy::Fixed { u } => {
            if u > total_points {
                return Err(Error::invalid(format!(
                    "coded redundancy {u} exceeds the {total_points} data points"
                )));
            }
            if u == total_points {
                return Ok(LoadAllocation {
                    per_client_load: vec![0; profiles.len()],
                    relaxed_load: vec![0.0; profiles.len()],
                    coded_redundancy: u,
                    waiting_time: 0.0,
                    expected_uncoded_return: 0.0,
                    target_return: 0.0,
                    epsilon,
                });
            }
            let mut alloc = optimize_waiting_time(profiles, m - u as f64, epsilon)?;
            alloc.coded_redundancy = u;
            Ok(alloc)
        }
        RedundancyPolicy::Optimized { u_max, server } => {
            if u_max > total_points {
                return Err(Error::invalid(format!(
                    "u_max {u_max} exceeds the {total_points} data points"
                )));
            }
            let mut nodes = profiles.to_vec();
            if u_max > 0 {
                nodes.push(ClientProfile {
                    local_size: u_max,
                    ..server
                });
            }
            let mut alloc = optimize_waiting_time(&nodes, m, epsilon)?;
            let u = if u_max > 0 {
                alloc.relaxed_load.pop();
                alloc.per_client_load.pop().unwrap_or(0)
            } else {
                0
            };
            let server_return = if u_max > 0 {
                let (_, points) = aggregate_return(&nodes[profiles.len()..], alloc.waiting_time);
                points[0].expected_return
            } else {
                0.0
            };
            alloc.coded_redundancy = u;
            alloc.expected_uncoded_return -= server_return;
            alloc.target_return = m - server_return;
            Ok(alloc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::cdf_total_delay;
    use crate::lambert::lambert_w_minus1;

    fn fig1(alpha: f64, local_size: usize) -> ClientProfile {
        ClientProfile::new(2.0, alpha, 3f64.sqrt(), 0.9, local_size).unwrap()
    }

    fn grid_max(p: &ClientProfile, t: f64, step: f64) -> (f64, f64) {
        let top = (p.mu * t).min(p.local_size as f64);
        let n = (top / step).floor() as usize;
        let mut best = (0.0, 0.0);
        for i in 1..=n {
            let l = i as f64 * step;
            let v = expected_return(p, l, t);
            if v > best.1 {
                best = (l, v);
            }
        }
        best
    }

    #[test]
    fn zero_cases() {
        let p = fig1(2.0, 100);
        assert_eq!(expected_return(&p, 4.0, 2.0 * p.tau), 0.0);
        assert_eq!(expected_return(&p, 0.0, 10.0), 0.0);
        let r = optimize_client_load(&p, 2.0 * p.tau);
        assert_eq!((r.load, r.expected_return), (0.0, 0.0));
        assert_eq!(optimal_load_for_piece(&p, 2.0 * p.tau, 2), 0.0);
    }

    #[test]
    fn return_is_load_times_cdf() {
        let p = fig1(2.0, 100);
        for &(l, t) in &[(4.0, 10.0), (1.0, 30.0), (7.5, 12.0)] {
            let a = expected_return(&p, l, t);
            let b = l * cdf_total_delay(&p, l, t);
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn piece_closed_form() {
        let p = fig1(1.0, 1_000_000);
        let w = lambert_w_minus1(-(-2f64).exp()).unwrap();
        let expected = -2.0 / (w + 1.0) * (10.0 - 2.0 * 3f64.sqrt());
        let got = optimal_load_for_piece(&p, 10.0, 2);
        assert!((got - expected).abs() < 1e-9 * expected);

        // single-term grid check
        let window = 10.0 - 2.0 * p.tau;
        let f = |l: f64| l * (1.0 - (-(p.alpha * p.mu / l) * (window - l / p.mu)).exp());
        let mut best = (0.0, f64::MIN);
        let mut l = 1e-3;
        while l < p.mu * window {
            if f(l) > best.1 {
                best = (l, f(l));
            }
            l += 1e-3;
        }
        assert!((best.0 - got).abs() < 1e-2, "{} vs {got}", best.0);

        let doubled = optimal_load_for_piece(&p, 2.0 * p.tau + 2.0 * window, 2);
        assert!((doubled - 2.0 * got).abs() < 1e-9 * got);
    }

    #[test]
    fn optimizer_matches_grid_on_fig1() {
        let p = fig1(2.0, 1_000_000_000);
        let r = optimize_client_load(&p, 10.0);
        let (_, gv) = grid_max(&p, 10.0, 1e-3);
        assert!(gv - r.expected_return < 1e-6 * gv, "{r:?} vs {gv}");
    }

    #[test]
    fn small_capacity_clamps() {
        // objective increasing on [0, 0.5] here
        let p = fig1(2.0, 1);
        let p = ClientProfile { local_size: 1, ..p };
        let r = optimize_client_load(&p, 10.0);
        let (gl, gv) = grid_max(&p, 10.0, 1e-4);
        assert!(gv - r.expected_return < 1e-6 * gv);
        assert!(r.load <= 1.0);
        if gl > 0.999 {
            assert_eq!(r.load, 1.0);
        }
    }

    #[test]
    fn waiting_time_brackets_target() {
        let profiles: Vec<ClientProfile> = (0..5)
            .map(|j| ClientProfile::new(1.0 + j as f64, 2.0, 0.5 + 0.3 * j as f64, 0.1 * j as f64, 40 + 10 * j).unwrap())
            .collect();
        let total: f64 = profiles.iter().map(|p| p.local_size as f64).sum();
        let target = 0.5 * total;
        let eps = 1e-3 * total;
        let alloc = optimize_waiting_time(&profiles, target, eps).unwrap();
        let check: f64 = profiles
            .iter()
            .zip(&alloc.relaxed_load)
            .map(|(p, &l)| l * cdf_total_delay(p, l, alloc.waiting_time))
            .sum();
        assert!(check >= target && check <= target + eps, "{check} vs {target}");
        alloc.validate(&profiles).unwrap();

        let before = aggregate_return(&profiles, alloc.waiting_time * (1.0 - 2.0 * SEARCH_RESOLUTION)).0;
        assert!(before < target);
    }

    #[test]
    fn single_client_full_target() {
        let p = ClientProfile::new(2.0, 2.0, 1.0, 0.0, 10).unwrap();
        let alloc = optimize_waiting_time(&[p], 10.0, 0.01).unwrap();
        assert!(alloc.waiting_time.is_finite());
        let r = expected_return(&p, alloc.relaxed_load[0], alloc.waiting_time);
        assert!((r - 10.0).abs() <= 0.01, "{r}");
    }

    #[test]
    fn infeasible_and_invalid_targets() {
        let p = ClientProfile::new(2.0, 2.0, 1.0, 0.0, 10).unwrap();
        assert!(matches!(optimize_waiting_time(&[p], 11.0, 0.01), Err(Error::Infeasible { .. })));
        assert!(optimize_waiting_time(&[p], 0.0, 0.01).is_err());
        assert!(optimize_waiting_time(&[p], 5.0, 0.0).is_err());
        assert!(optimize_waiting_time(&[], 5.0, 0.1).is_err());
    }

    #[test]
    fn fixed_policy() {
        let profiles: Vec<ClientProfile> = (0..4)
            .map(|j| ClientProfile::new(1.0 + j as f64, 2.0, 0.5, 0.1, 25).unwrap())
            .collect();
        let a = allocate(&profiles, 100, &RedundancyPolicy::Fixed { u: 10 }).unwrap();
        assert_eq!(a.coded_redundancy, 10);
        assert_eq!(a.target_return, 90.0);
        assert!(a.expected_uncoded_return >= 90.0 && a.expected_uncoded_return <= 90.0 + 0.1);

        let all = allocate(&profiles, 100, &RedundancyPolicy::Fixed { u: 100 }).unwrap();
        assert_eq!(all.waiting_time, 0.0);
        assert!(all.per_client_load.iter().all(|&l| l == 0));

        assert!(allocate(&profiles, 100, &RedundancyPolicy::Fixed { u: 101 }).is_err());
    }

    #[test]
    fn optimized_policy_with_dominant_server() {
        let profiles: Vec<ClientProfile> = (0..4)
            .map(|j| ClientProfile::new(1.0 + j as f64, 2.0, 0.5, 0.1, 25).unwrap())
            .collect();
        let server = ClientProfile::new(1e6, 50.0, 1e-3, 0.0, 1).unwrap();
        let a = allocate(&profiles, 100, &RedundancyPolicy::Optimized { u_max: 20, server }).unwrap();
        assert_eq!(a.coded_redundancy, 20);
        assert_eq!(a.per_client_load.len(), 4);
        assert!(allocate(&profiles, 100, &RedundancyPolicy::Optimized { u_max: 101, server }).is_err());
    }

    #[test]
    fn json_round_trip() {
        let profiles: Vec<ClientProfile> = (0..3)
            .map(|j| ClientProfile::new(1.0 + j as f64, 2.0, 0.5, 0.1, 25).unwrap())
            .collect();
        let a = allocate(&profiles, 75, &RedundancyPolicy::Fixed { u: 15 }).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        for key in ["\"waiting_time_s\"", "\"loads\"", "\"u\"", "\"expected_return\""] {
            assert!(text.contains(key), "{text}");
        }
        let back: LoadAllocation = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a);
        back.validate(&profiles).unwrap();
    }
}
