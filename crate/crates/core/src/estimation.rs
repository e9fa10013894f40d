//! Working with an unknown arrival probability.
//!
//! The arrival frequency is counted for `n~ = -ln((1 - h)/2) / (2 eps^2)`
//! slots, after which Hoeffding's inequality puts the estimate within `eps`
//! of the truth with probability at least `h`. The optimal policy is then
//! run with the estimate plugged in, and the resulting excess cost over the
//! true optimum is bounded through the constants in [`BoundConstants`].

use serde::{Deserialize, Serialize};

use crate::bellman::renewal::policy_value;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::policy::{optimal_policy, AffinePolicy};

/// Running count of arrivals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub n: u64,
    pub successes: u64,
}

impl EstimatorState {
    pub fn new() -> Self {
        Self::default()
    }

    #[must_use]
    pub fn update(self, arrival: bool) -> Self {
        Self {
            n: self.n + 1,
            successes: self.successes + u64::from(arrival),
        }
    }

    /// Observed arrival frequency; `None` before the first slot.
    pub fn p_hat(&self) -> Option<f64> {
        (self.n > 0).then(|| self.successes as f64 / self.n as f64)
    }

    pub fn from_arrivals<I: IntoIterator<Item = bool>>(arrivals: I) -> Self {
        arrivals.into_iter().fold(Self::new(), Self::update)
    }
}

/// Hoeffding sample count before rounding up.
pub fn hoeffding_samples(epsilon: f64, h: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            domain: "(0, 1)",
        });
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain {
            name: "h",
            value: h,
            domain: "(0, 1)",
        });
    }
    Ok(-libm::log((1.0 - h) / 2.0) / (2.0 * epsilon * epsilon))
}

/// Slots needed so that the frequency estimate is within `epsilon` of `p`
/// with probability at least `h`.
pub fn required_samples(epsilon: f64, h: f64) -> Result<u64> {
    Ok(libm::ceil(hoeffding_samples(epsilon, h)?) as u64)
}

/// The optimal policy computed as if the arrival probability were `p_hat`.
pub fn estimated_policy(p_hat: f64, psi: f64, d: f64) -> Result<AffinePolicy> {
    optimal_policy(&ModelParams::new(p_hat, psi, d)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Lipschitz constant of the optimal policy in the arrival probability.
    pub k: f64,
    /// Lipschitz constant of the optimal policy in the pending service, `1/(1+d)`.
    pub z: f64,
    /// Zero-stage cost constant `2 psi K (5 + 2d) / (1 - z)`.
    pub k_prime: f64,
    /// `2 K psi (2 + (1 - p)(1 + d))` at `p = p_for_a`.
    pub a: f64,
    /// `2 K psi (2 + d)`.
    pub b: f64,
    pub p_for_a: f64,
}

/// Sensitivity of the optimal policy to the arrival probability.
pub fn policy_sensitivity(psi: f64, d: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Domain {
            name: "d",
            value: d,
            domain: "d > 0",
        });
    }
    if !(psi.is_finite() && psi > 0.0) {
        return Err(Error::Domain {
            name: "psi",
            value: psi,
            domain: "psi > 0",
        });
    }
    let root = libm::sqrt(d * d + 4.0 * d);
    let spread = (d + root) * (d + root);
    let first = 8.0 * psi / ((2.0 + d + root) * (2.0 + d + root) * root);
    let slope_term = ((1.0 + d) * (2.0 + d) + 1.0 / root) / spread;
    let second = 4.0 * psi * (4.0 * (2.0 + d) * slope_term + 1.0 / root) / spread;
    Ok(first + second)
}

pub fn bound_constants(psi: f64, d: f64, p_for_a: f64) -> Result<BoundConstants> {
    let k = policy_sensitivity(psi, d)?;
    crate::error::ensure_in("p_for_a", p_for_a, 0.0, 1.0, "[0, 1]")?;
    let z = 1.0 / (1.0 + d);
    Ok(BoundConstants {
        k,
        z,
        k_prime: 2.0 * psi * k * (5.0 + 2.0 * d) / (1.0 - z),
        a: 2.0 * k * psi * (2.0 + (1.0 - p_for_a) * (1.0 + d)),
        b: 2.0 * k * psi * (2.0 + d),
        p_for_a,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub p_hat: f64,
    pub epsilon: f64,
    pub value: f64,
    pub constants: BoundConstants,
}

/// Bound on the excess cost of the plug-in policy, valid whenever
/// `|p_hat - p| <= epsilon`:
///
/// ```text
/// [A + (A + B) / ((1 - z)(1 - p_hat - eps)) + A z / (1 - (p_hat + eps) z)] eps
/// ```
///
/// `A` depends on the unknown `p`; it is evaluated at `max(p_hat - eps, 0)`,
/// its largest value over the confidence interval.
pub fn cost_gap_bound(p_hat: f64, epsilon: f64, psi: f64, d: f64) -> Result<GapBound> {
    crate::error::ensure_in("p_hat", p_hat, 0.0, 1.0, "[0, 1]")?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            domain: "epsilon >= 0",
        });
    }
    let upper = p_hat + epsilon;
    if upper >= 1.0 {
        return Err(Error::Unbounded("p_hat + epsilon must stay below 1"));
    }
    let constants = bound_constants(psi, d, (p_hat - epsilon).max(0.0))?;
    let BoundConstants { z, a, b, .. } = constants;
    if upper * z >= 1.0 {
        return Err(Error::Unbounded("(p_hat + epsilon) z must stay below 1"));
    }
    let value = (a + (a + b) / ((1.0 - z) * (1.0 - upper)) + a * z / (1.0 - upper * z)) * epsilon;
    Ok(GapBound {
        p_hat,
        epsilon,
        value,
        constants,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub p: f64,
    pub p_hat: f64,
    pub max_gap: f64,
    pub at_pending: f64,
}

/// Largest excess cost `J~(x) - J(x)` over a grid of pending service, where
/// both costs follow the true arrival process and `J~` uses the plug-in
/// policy. The fixed-policy costs are summed exactly along their orbits.
pub fn empirical_gap_check(params: &ModelParams, p_hat: f64, grid_size: usize) -> Result<GapCheck> {
    params.validate()?;
    if grid_size < 2 {
        return Err(Error::Domain {
            name: "grid_size",
            value: grid_size as f64,
            domain: "grid_size >= 2",
        });
    }
    let optimal = optimal_policy(params)?;
    let plug_in = estimated_policy(p_hat, params.psi, params.d)?;
    let mut worst = GapCheck {
        p: params.p,
        p_hat,
        max_gap: f64::NEG_INFINITY,
        at_pending: 0.0,
    };
    for i in 0..grid_size {
        let x = params.psi * i as f64 / (grid_size - 1) as f64;
        let gap = policy_value(params, &plug_in, x)? - policy_value(params, &optimal, x)?;
        if gap > worst.max_gap {
            worst.max_gap = gap;
            worst.at_pending = x;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_updates() {
        let s = EstimatorState::new();
        assert_eq!(s.p_hat(), None);
        let s = s.update(true);
        assert_eq!(s.p_hat(), Some(1.0));
        let s = s.update(false);
        assert_eq!(s.p_hat(), Some(0.5));
        assert_eq!(
            EstimatorState::from_arrivals([true, false, false, true]).successes,
            2
        );
    }

    #[test]
    fn sample_counts() {
        assert_eq!(required_samples(0.05, 0.95).unwrap(), 738);
        assert_eq!(required_samples(0.1, 1e-12).unwrap(), 35);
        let full = hoeffding_samples(0.1, 0.9).unwrap();
        let half = hoeffding_samples(0.05, 0.9).unwrap();
        assert!((half / full - 4.0).abs() < 1e-12);
        assert!(required_samples(0.0, 0.9).is_err());
        assert!(required_samples(0.1, 1.0).is_err());
    }

    #[test]
    fn constants_at_unit_weight() {
        let c = bound_constants(2.0, 1.0, 0.45).unwrap();
        assert_eq!(c.z, 0.5);
        // Direct evaluation of the constant, split as 0.26099... + 5.98546...
        assert!((c.k - 6.2464458440097586).abs() < 1e-12);
        assert!((c.k_prime - 349.8009672645465).abs() < 1e-9);
        assert!((c.k_prime - 2.0 * 2.0 * c.k * 7.0 / 0.5).abs() < 1e-12);
        assert!(bound_constants(2.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn gap_bound_behaviour() {
        let g = cost_gap_bound(0.5, 0.05, 2.0, 1.0).unwrap();
        assert!((g.value - 40.41330797360827).abs() < 1e-9);
        assert_eq!(g.constants.p_for_a, 0.45);
        assert_eq!(cost_gap_bound(0.5, 0.0, 2.0, 1.0).unwrap().value, 0.0);
        assert!(matches!(
            cost_gap_bound(0.96, 0.05, 2.0, 1.0),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn plug_in_policy_matches_when_exact() {
        let m = ModelParams::new(0.5, 2.0, 1.0).unwrap();
        assert_eq!(
            estimated_policy(0.5, 2.0, 1.0).unwrap(),
            optimal_policy(&m).unwrap()
        );
        assert_eq!(estimated_policy(1.0, 2.0, 1.0).unwrap().intercept, 0.0);
        let check = empirical_gap_check(&m, 0.5, 11).unwrap();
        assert!(check.max_gap.abs() < 1e-12);
    }
}
