//! Closed-form deferral policies.
//!
//! The optimal policy comes from the coefficient recursion
//!
//! ```text
//! a_0 = 1 + d,  a_k = 1 + d - p / (1 + a_{k-1})
//! b_0 = 0,      b_k = p (2 a_{k-1} psi + b_{k-1}) / (1 + a_{k-1})
//! ```
//!
//! whose k-stage minimizer is `(x + psi - b_k/2) / (1 + a_k)`. The symmetric
//! Nash policy comes from
//!
//! ```text
//! a'_{-1} = 0,  a'_k = 1 / (2 (2 + d - p a'_{k-1}))
//! b'_{-1} = 0,  b'_k = ((2 - p) psi + p b'_{k-1}) / (2 (2 + d - p a'_{k-1}))
//! ```
//!
//! with equilibrium strategy `x -> a'_inf x + b'_inf`. Both limits are
//! available in closed form; the traces are kept so the monotonicity and
//! cap-freeness properties can be checked.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_in, Error, Result};
use crate::params::ModelParams;

/// Successive coefficient changes below this stop the recursions.
pub const SEQUENCE_TOL: f64 = 1e-12;

/// Anything that maps pending service to a deferral.
pub trait DeferralPolicy {
    fn deferral(&self, pending: f64) -> f64;
}

impl<F: Fn(f64) -> f64> DeferralPolicy for F {
    fn deferral(&self, pending: f64) -> f64 {
        self(pending)
    }
}

/// `x -> clamp(slope * x + intercept, clamp_lo, clamp_hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePolicy {
    pub slope: f64,
    pub intercept: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl AffinePolicy {
    pub fn new(slope: f64, intercept: f64, clamp_lo: f64, clamp_hi: f64) -> Self {
        Self {
            slope,
            intercept,
            clamp_lo,
            clamp_hi,
        }
    }

    /// The never-defer baseline.
    pub fn zero(psi: f64) -> Self {
        Self::new(0.0, 0.0, 0.0, psi)
    }

    pub fn unclamped(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.unclamped(x).clamp(self.clamp_lo, self.clamp_hi)
    }

    /// Fixed point of `x = policy(x)`; `None` when the slope is not below one.
    pub fn fixed_point(&self) -> Option<f64> {
        if self.slope < 1.0 {
            Some((self.intercept / (1.0 - self.slope)).clamp(self.clamp_lo, self.clamp_hi))
        } else {
            None
        }
    }
}

impl DeferralPolicy for AffinePolicy {
    fn deferral(&self, pending: f64) -> f64 {
        self.eval(pending)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalCoefficients {
    pub a_inf: f64,
    pub b_inf: f64,
    /// `a*_0, a*_1, ...` until convergence or `k_max`.
    pub a_trace: Vec<f64>,
    pub b_trace: Vec<f64>,
}

impl OptimalCoefficients {
    /// Deferral of the k-stage problem before clamping.
    pub fn stage_deferral(&self, k: usize, x: f64, psi: f64) -> f64 {
        (x + psi - self.b_trace[k] / 2.0) / (1.0 + self.a_trace[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashCoefficients {
    pub a_inf: f64,
    pub b_inf: f64,
    /// `a'_{-1}, a'_0, a'_1, ...`; index `i` holds `a'_{i-1}`.
    pub a_trace: Vec<f64>,
    pub b_trace: Vec<f64>,
}

/// Analytic limits `(a_inf, b_inf)` of the optimal recursion.
pub fn optimal_limits(params: &ModelParams) -> (f64, f64) {
    let ModelParams { p, psi, d } = *params;
    let a = (d + libm::sqrt(d * d + 4.0 * (1.0 + d - p))) / 2.0;
    let b = 2.0 * p * a * psi / (1.0 + a - p);
    (a, b)
}

/// Analytic limits `(a'_inf, b'_inf)` of the Nash recursion.
///
/// Uses `1 / ((2+d) + sqrt((2+d)^2 - 2p))`, the rationalized form of
/// `(4+2d)/(4p) - sqrt((2+d)^2 - 2p)/(2p)`. It is free of cancellation for
/// small `p` and equals the recursion's fixed point `1/(2(2+d))` at `p = 0`.
pub fn nash_limits(params: &ModelParams) -> (f64, f64) {
    let ModelParams { p, psi, d } = *params;
    let a = 1.0 / ((2.0 + d) + libm::sqrt((2.0 + d) * (2.0 + d) - 2.0 * p));
    let b = a * (2.0 - p) * psi / (1.0 - a * p);
    (a, b)
}

pub fn optimal_sequences(params: &ModelParams, k_max: usize) -> Result<OptimalCoefficients> {
    params.validate()?;
    if k_max < 1 {
        return Err(Error::Domain {
            name: "k_max",
            value: k_max as f64,
            domain: "k_max >= 1",
        });
    }
    let ModelParams { p, psi, d } = *params;
    let mut a_trace = Vec::with_capacity(64);
    let mut b_trace = Vec::with_capacity(64);
    let (mut a, mut b) = (1.0 + d, 0.0);
    a_trace.push(a);
    b_trace.push(b);
    for _ in 0..k_max {
        let next_a = 1.0 + d - p / (1.0 + a);
        let next_b = p * (2.0 * a * psi + b) / (1.0 + a);
        let done = (next_a - a).abs() < SEQUENCE_TOL && (next_b - b).abs() < SEQUENCE_TOL;
        a = next_a;
        b = next_b;
        a_trace.push(a);
        b_trace.push(b);
        if done {
            break;
        }
    }
    let (a_inf, b_inf) = optimal_limits(params);
    Ok(OptimalCoefficients {
        a_inf,
        b_inf,
        a_trace,
        b_trace,
    })
}

/// Optimal stationary deferral `(x + psi - b_inf/2) / (1 + a_inf)`, clamped to `[0, psi]`.
pub fn optimal_policy(params: &ModelParams) -> Result<AffinePolicy> {
    params.validate()?;
    let ModelParams { p, psi, .. } = *params;
    let (a, _) = optimal_limits(params);
    // (psi - b_inf/2) simplifies to psi (1-p)(1+a)/(1+a-p); this form is exactly 0 at p = 1.
    let intercept = (psi * (1.0 - p) / (1.0 + a - p)).max(0.0);
    Ok(AffinePolicy::new(1.0 / (1.0 + a), intercept, 0.0, psi))
}

pub fn nash_sequences(params: &ModelParams, k_max: usize) -> Result<NashCoefficients> {
    params.validate()?;
    if k_max < 1 {
        return Err(Error::Domain {
            name: "k_max",
            value: k_max as f64,
            domain: "k_max >= 1",
        });
    }
    let ModelParams { p, psi, d } = *params;
    let mut a_trace = Vec::with_capacity(64);
    let mut b_trace = Vec::with_capacity(64);
    let (mut a, mut b) = (0.0, 0.0);
    a_trace.push(a);
    b_trace.push(b);
    for _ in 0..k_max {
        let denom = 2.0 * (2.0 + d - p * a);
        let next_a = 1.0 / denom;
        let next_b = ((2.0 - p) * psi + p * b) / denom;
        let done = (next_a - a).abs() < SEQUENCE_TOL && (next_b - b).abs() < SEQUENCE_TOL;
        a = next_a;
        b = next_b;
        a_trace.push(a);
        b_trace.push(b);
        if done {
            break;
        }
    }
    let (a_inf, b_inf) = nash_limits(params);
    Ok(NashCoefficients {
        a_inf,
        b_inf,
        a_trace,
        b_trace,
    })
}

/// Symmetric Nash strategy `x -> a'_inf x + b'_inf`, clamped to `[0, psi]`.
pub fn nash_policy(params: &ModelParams) -> Result<AffinePolicy> {
    params.validate()?;
    let (a, b) = nash_limits(params);
    Ok(AffinePolicy::new(a, b, 0.0, params.psi))
}

/// Per-slot cost when `x` is pending and `u` of the new request is deferred:
/// `(x + psi - u)^2 + d x^2`.
pub fn stage_cost(x: f64, u: f64, params: &ModelParams) -> Result<f64> {
    ensure_in("x", x, 0.0, params.psi, "[0, psi]")?;
    ensure_in("u", u, 0.0, params.psi, "[0, psi]")?;
    Ok(stage_cost_unchecked(x, u, params.psi, params.d))
}

#[inline]
pub(crate) fn stage_cost_unchecked(x: f64, u: f64, psi: f64, d: f64) -> f64 {
    let served = x + psi - u;
    served * served + d * x * x
}

/// Cost to an agent that sees `x` pending and defers `u` while everyone else
/// plays `opponent`: `(psi-u)(psi-u+x) + u(u + p(psi - opponent(u))) + d u^2`.
pub fn best_response_cost<P: DeferralPolicy + ?Sized>(
    x: f64,
    u: f64,
    opponent: &P,
    params: &ModelParams,
) -> Result<f64> {
    ensure_in("x", x, 0.0, params.psi, "[0, psi]")?;
    ensure_in("u", u, 0.0, params.psi, "[0, psi]")?;
    Ok(best_response_cost_unchecked(x, u, opponent, params))
}

#[inline]
pub(crate) fn best_response_cost_unchecked<P: DeferralPolicy + ?Sized>(
    x: f64,
    u: f64,
    opponent: &P,
    params: &ModelParams,
) -> f64 {
    let ModelParams { p, psi, d } = *params;
    let now = psi - u;
    now * (now + x) + u * (u + p * (psi - opponent.deferral(u))) + d * u * u
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, psi: f64, d: f64) -> ModelParams {
        ModelParams::new(p, psi, d).unwrap()
    }

    #[test]
    fn optimal_limits_at_edges() {
        let c = optimal_sequences(&params(0.0, 2.0, 1.0), 200).unwrap();
        assert_eq!(c.a_inf, 2.0);
        assert_eq!(c.b_inf, 0.0);
        assert_eq!(c.a_trace.len(), 2);

        let c = optimal_sequences(&params(1.0, 2.0, 1.0), 200).unwrap();
        assert!((c.a_inf - (1.0 + libm::sqrt(5.0)) / 2.0).abs() < 1e-15);
        assert!((c.b_inf - 4.0).abs() < 1e-14);
    }

    #[test]
    fn optimal_limits_match_iteration() {
        // Frozen from 200 plain iterations of the recursion.
        let c = optimal_sequences(&params(0.5, 2.0, 1.0), 200).unwrap();
        assert!((c.a_inf - 1.8228756555322954).abs() < 1e-12);
        assert!((c.b_inf - 1.5694991259569395).abs() < 1e-12);
        assert!((c.a_trace.last().unwrap() - c.a_inf).abs() < 1e-11);
        assert!((c.b_trace.last().unwrap() - c.b_inf).abs() < 1e-11);
    }

    #[test]
    fn optimal_policy_values() {
        let pol = optimal_policy(&params(1.0, 2.0, 1.0)).unwrap();
        assert_eq!(pol.eval(0.0), 0.0);

        let pol = optimal_policy(&params(0.5, 2.0, 1.0)).unwrap();
        assert!((pol.eval(0.0) - 0.4305008740430604).abs() < 1e-12);
        assert!((pol.eval(2.0) - 1.1389982519138793).abs() < 1e-12);
        assert!(pol.unclamped(2.0) < 2.0);
    }

    #[test]
    fn nash_limits_values() {
        let c = nash_sequences(&params(1.0, 2.0, 1.0), 500).unwrap();
        assert!((c.a_inf - 0.1771243444677047).abs() < 1e-12);
        assert!((c.b_inf - 0.4305008740430604).abs() < 1e-12);
        // Closed form as printed, valid for p > 0.
        let printed = (4.0 + 2.0) / 4.0 - libm::sqrt(9.0 - 2.0) / 2.0;
        assert!((c.a_inf - printed).abs() < 1e-14);

        let c = nash_sequences(&params(0.0, 2.0, 1.0), 500).unwrap();
        assert!((c.a_inf - 1.0 / 6.0).abs() < 1e-15);
        assert!((c.b_inf - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.a_trace.last().unwrap() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn nash_fixed_point_at_full_load() {
        let pol = nash_policy(&params(1.0, 2.0, 1.0)).unwrap();
        let x = pol.fixed_point().unwrap();
        assert!((x - 0.5231663753189799).abs() < 1e-12);
        assert!((x - 0.5232).abs() < 5e-5);
        assert!((pol.eval(x) - x).abs() < 1e-15);
        assert!((pol.eval(0.0) - 0.4305).abs() < 1e-4);

        let pol = nash_policy(&params(0.5, 2.0, 1.0)).unwrap();
        let top = pol.unclamped(2.0);
        assert!(top > 0.0 && top < 2.0);
    }

    #[test]
    fn nash_fixed_point_at_p085() {
        let x = nash_policy(&params(0.85, 2.0, 1.0))
            .unwrap()
            .fixed_point()
            .unwrap();
        assert!((x - 0.5748669745445987).abs() < 1e-12);
    }

    #[test]
    fn stage_cost_examples() {
        let m = params(0.5, 2.0, 1.0);
        assert_eq!(stage_cost(0.0, 0.0, &m).unwrap(), 4.0);
        assert_eq!(stage_cost(1.0, 1.0, &m).unwrap(), 5.0);
        assert_eq!(stage_cost(2.0, 0.0, &m).unwrap(), 20.0);
        assert!(stage_cost(0.0, 2.5, &m).is_err());
        assert!(stage_cost(0.0, -0.1, &m).is_err());
    }

    #[test]
    fn best_response_examples() {
        let m = params(1.0, 2.0, 1.0);
        let nash = nash_policy(&m).unwrap();
        assert_eq!(best_response_cost(0.0, 0.0, &nash, &m).unwrap(), 4.0);
        let never = AffinePolicy::zero(2.0);
        assert_eq!(best_response_cost(0.0, 2.0, &never, &m).unwrap(), 12.0);
        assert!(best_response_cost(0.0, 3.0, &never, &m).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = ModelParams {
            p: 1.5,
            psi: 2.0,
            d: 1.0,
        };
        assert!(optimal_sequences(&bad, 10).is_err());
        assert!(nash_policy(&bad).is_err());
        assert!(optimal_sequences(&params(0.5, 2.0, 1.0), 0).is_err());
    }
}
