use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bernoulli arrival model: one request of size `psi` arrives in each slot
/// with probability `p`; deferred work costs `d` per squared unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub psi: f64,
    pub d: f64,
}

impl ModelParams {
    pub fn new(p: f64, psi: f64, d: f64) -> Result<Self> {
        let params = Self { p, psi, d };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && (0.0..=1.0).contains(&self.p)) {
            return Err(Error::InvalidParameter {
                name: "p",
                value: self.p,
                reason: "arrival probability must lie in [0, 1]",
            });
        }
        if !(self.psi.is_finite() && self.psi > 0.0) {
            return Err(Error::InvalidParameter {
                name: "psi",
                value: self.psi,
                reason: "demand must be positive",
            });
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::InvalidParameter {
                name: "d",
                value: self.d,
                reason: "waiting-cost weight must be positive",
            });
        }
        Ok(())
    }

    /// Same model with a different arrival probability.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(p, self.psi, self.d)
    }
}

/// Categorical arrivals: in each slot a request of size `demands[i]` arrives
/// with probability `probs[i]`, and nothing arrives with probability
/// `1 - sum(probs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralModelParams {
    pub demands: Vec<f64>,
    pub probs: Vec<f64>,
    pub d: f64,
}

/// Upper limit on demand classes; breakpoint bookkeeping is not exercised beyond it.
pub const MAX_CLASSES: usize = 16;

impl GeneralModelParams {
    pub fn new(demands: Vec<f64>, probs: Vec<f64>, d: f64) -> Result<Self> {
        let params = Self { demands, probs, d };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.demands.len();
        if n == 0 || n > MAX_CLASSES {
            return Err(Error::InvalidParameter {
                name: "demands",
                value: n as f64,
                reason: "need between 1 and 16 demand classes",
            });
        }
        if self.probs.len() != n {
            return Err(Error::InvalidParameter {
                name: "probs",
                value: self.probs.len() as f64,
                reason: "one probability per demand class is required",
            });
        }
        for (i, &psi) in self.demands.iter().enumerate() {
            if !(psi.is_finite() && psi > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "demands",
                    value: psi,
                    reason: "demands must be positive",
                });
            }
            if i > 0 && psi <= self.demands[i - 1] {
                return Err(Error::InvalidParameter {
                    name: "demands",
                    value: psi,
                    reason: "demands must be strictly increasing",
                });
            }
        }
        for &p in &self.probs {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidParameter {
                    name: "probs",
                    value: p,
                    reason: "class probabilities must lie in [0, 1]",
                });
            }
        }
        let total = self.total_prob();
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "probs",
                value: total,
                reason: "class probabilities must sum to at most 1",
            });
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::InvalidParameter {
                name: "d",
                value: self.d,
                reason: "waiting-cost weight must be positive",
            });
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.demands.len()
    }

    /// Probability that some request arrives in a slot.
    pub fn total_prob(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability of an empty slot, clamped at zero.
    pub fn idle_prob(&self) -> f64 {
        (1.0 - self.total_prob()).max(0.0)
    }

    pub fn max_demand(&self) -> f64 {
        self.demands[self.demands.len() - 1]
    }
}

impl From<ModelParams> for GeneralModelParams {
    fn from(m: ModelParams) -> Self {
        Self {
            demands: alloc::vec![m.psi],
            probs: alloc::vec![m.p],
            d: m.d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_out_of_range() {
        assert!(ModelParams::new(-0.1, 2.0, 1.0).is_err());
        assert!(ModelParams::new(1.1, 2.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 0.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 2.0, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 2.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 2.0, 1.0).is_ok());
        assert!(ModelParams::new(1.0, 2.0, 1.0).is_ok());
    }

    #[test]
    fn general_validation() {
        assert!(GeneralModelParams::new(vec![1.0, 3.0], vec![0.2, 0.7], 1.0).is_ok());
        assert!(GeneralModelParams::new(vec![3.0, 1.0], vec![0.2, 0.7], 1.0).is_err());
        assert!(GeneralModelParams::new(vec![1.0, 3.0], vec![0.6, 0.7], 1.0).is_err());
        assert!(GeneralModelParams::new(vec![1.0], vec![0.2, 0.7], 1.0).is_err());
        assert!(GeneralModelParams::new(vec![], vec![], 1.0).is_err());
        let g = GeneralModelParams::new(vec![1.0, 3.0], vec![0.2, 0.7], 1.0).unwrap();
        assert!((g.idle_prob() - 0.1).abs() < 1e-15);
        assert_eq!(g.max_demand(), 3.0);
    }
}
