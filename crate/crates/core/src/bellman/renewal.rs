//! Costs of stationary policies along their deterministic orbits.
//!
//! Once a request arrives, the pending service evolves deterministically as
//! `y_{k+1} = policy(y_k)` until the first empty slot. A renewal cycle starts
//! at an arrival that sees nothing pending, so its expected cost is
//!
//! ```text
//! sum_k p^k [ (y_k + psi - u_k)^2 + d y_k^2 + (1 - p)(1 + d) u_k^2 ],  y_0 = 0,
//! ```
//!
//! and the long-run cost per slot is `p (1 - p)` times that.

use crate::bellman::piecewise::PiecewiseAffinePolicy;
use crate::error::{Error, Result};
use crate::params::{GeneralModelParams, ModelParams};
use crate::policy::{stage_cost_unchecked, DeferralPolicy};

/// Orbit sums stop once the remaining probability weight drops below this.
pub const TAIL_WEIGHT: f64 = 1e-12;

const ORBIT_LIMIT: usize = 1_000_000;

fn checked<P: DeferralPolicy + ?Sized>(policy: &P, x: f64, psi: f64) -> Result<f64> {
    let u = policy.deferral(x);
    if u.is_finite() && (0.0..=psi).contains(&u) {
        Ok(u)
    } else {
        Err(Error::PolicyRange {
            pending: x,
            deferral: u,
            cap: psi,
        })
    }
}

/// Expected cost until the first empty slot, starting from pending service
/// `x` at an arrival, when `policy` is used throughout.
pub fn policy_value<P: DeferralPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    x: f64,
) -> Result<f64> {
    params.validate()?;
    let ModelParams { p, psi, d } = *params;
    if p >= 1.0 {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "[0, 1): there is no terminal state at p = 1",
        });
    }
    crate::error::ensure_in("x", x, 0.0, psi, "[0, psi]")?;
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut y = x;
    for _ in 0..ORBIT_LIMIT {
        let u = checked(policy, y, psi)?;
        total += weight * (stage_cost_unchecked(y, u, psi, d) + (1.0 - p) * (1.0 + d) * u * u);
        weight *= p;
        y = u;
        if weight < TAIL_WEIGHT {
            break;
        }
    }
    Ok(total)
}

/// Expected cost of one renewal cycle.
pub fn renewal_cycle_cost<P: DeferralPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
) -> Result<f64> {
    policy_value(params, policy, 0.0)
}

/// Per-slot cost at `p = 1`, where every slot carries a request and the
/// pending service settles on the policy's fixed point.
pub fn limit_cycle_cost<P: DeferralPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
) -> Result<f64> {
    params.validate()?;
    let ModelParams { psi, d, .. } = *params;
    let mut y = 0.0;
    for _ in 0..100_000 {
        let u = checked(policy, y, psi)?;
        if (u - y).abs() <= 1e-15 * psi {
            return Ok(stage_cost_unchecked(u, u, psi, d));
        }
        y = u;
    }
    // No fixed point reached: average over a long stretch of the orbit.
    let steps = 10_000;
    let mut total = 0.0;
    for _ in 0..steps {
        let u = checked(policy, y, psi)?;
        total += stage_cost_unchecked(y, u, psi, d);
        y = u;
    }
    Ok(total / steps as f64)
}

/// Relative value at `p = 1`: the excess of the orbit cost from `x` over the
/// orbit cost from 0, both measured against the per-slot gain.
pub fn relative_value<P: DeferralPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    x: f64,
) -> Result<f64> {
    params.validate()?;
    let ModelParams { psi, d, .. } = *params;
    crate::error::ensure_in("x", x, 0.0, psi, "[0, psi]")?;
    let (mut from_x, mut from_zero) = (x, 0.0);
    let mut total = 0.0;
    for _ in 0..ORBIT_LIMIT {
        let (ux, u0) = (
            checked(policy, from_x, psi)?,
            checked(policy, from_zero, psi)?,
        );
        let step =
            stage_cost_unchecked(from_x, ux, psi, d) - stage_cost_unchecked(from_zero, u0, psi, d);
        total += step;
        if ux == from_x && u0 == from_zero || (ux - u0).abs() <= 1e-15 * psi && step.abs() <= 1e-15
        {
            return Ok(total);
        }
        from_x = ux;
        from_zero = u0;
    }
    Err(Error::NoConvergence {
        iterations: ORBIT_LIMIT,
        residual: (from_x - from_zero).abs(),
    })
}

/// Long-run average cost per slot of a stationary policy.
pub fn long_run_average_cost<P: DeferralPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
) -> Result<f64> {
    if params.p >= 1.0 {
        limit_cycle_cost(params, policy)
    } else {
        Ok(params.p * (1.0 - params.p) * renewal_cycle_cost(params, policy)?)
    }
}

/// Long-run average cost per slot for categorical demands, from the value
/// functions carried by a piecewise-affine policy.
pub fn general_average_cost(
    params: &GeneralModelParams,
    policy: &PiecewiseAffinePolicy,
) -> Result<f64> {
    params.validate()?;
    let busy = params.total_prob();
    if busy >= 1.0 {
        return policy.gain.ok_or(Error::Domain {
            name: "pbar",
            value: busy,
            domain: "[0, 1) unless the policy was solved in relative form",
        });
    }
    // A cycle starts with class i with probability p_i / pbar, so
    // pbar (1 - pbar) E[cycle] = (1 - pbar) sum_i p_i J(psi_i, 0).
    let weighted: f64 = params
        .probs
        .iter()
        .zip(&policy.classes)
        .map(|(&p, class)| p * class.value.eval(0.0))
        .sum();
    Ok((1.0 - busy) * weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{nash_policy, optimal_policy, AffinePolicy};

    #[test]
    fn single_arrival_cycle_at_p0() {
        let m = ModelParams::new(0.0, 2.0, 1.0).unwrap();
        let pol = optimal_policy(&m).unwrap();
        let u = pol.eval(0.0);
        let expected = stage_cost_unchecked(0.0, u, 2.0, 1.0) + u * u * 2.0;
        assert!((renewal_cycle_cost(&m, &pol).unwrap() - expected).abs() < 1e-15);
        assert_eq!(long_run_average_cost(&m, &pol).unwrap(), 0.0);
    }

    #[test]
    fn frozen_cycle_cost_at_half_load() {
        // Orbit sum carried out independently to 200 terms.
        let m = ModelParams::new(0.5, 2.0, 1.0).unwrap();
        let pol = optimal_policy(&m).unwrap();
        let c = renewal_cycle_cost(&m, &pol).unwrap();
        assert!((c - 6.9536672493620415).abs() < 1e-9, "{c}");
    }

    #[test]
    fn full_load_rejected_and_limit_cycle_used() {
        let m = ModelParams::new(1.0, 2.0, 1.0).unwrap();
        let pol = optimal_policy(&m).unwrap();
        assert!(renewal_cycle_cost(&m, &pol).is_err());
        assert_eq!(long_run_average_cost(&m, &pol).unwrap(), 4.0);
        let nash = nash_policy(&m).unwrap();
        let x = nash.fixed_point().unwrap();
        assert!((long_run_average_cost(&m, &nash).unwrap() - (4.0 + x * x)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_policy_is_rejected() {
        let m = ModelParams::new(0.5, 2.0, 1.0).unwrap();
        let bad = AffinePolicy::new(1.0, 1.0, -10.0, 10.0);
        assert!(matches!(
            renewal_cycle_cost(&m, &bad),
            Err(Error::PolicyRange { .. })
        ));
    }
}
