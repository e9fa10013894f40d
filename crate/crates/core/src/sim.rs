//! Seeded slot-by-slot simulation.
//!
//! Each slot either brings a request or is empty. With `x` pending, an
//! arrival that defers `u` costs `(x + psi - u)^2 + d x^2`; an empty slot
//! serves the pending work alone at `(1 + d) x^2` and clears it. Averages are
//! taken after a warmup and their standard errors come from batch means.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::piecewise::PiecewiseAffinePolicy;
use crate::bellman::renewal::{limit_cycle_cost, renewal_cycle_cost};
use crate::error::{ensure_in, Error, Result};
use crate::params::{GeneralModelParams, ModelParams};
use crate::policy::{nash_policy, optimal_policy, AffinePolicy, DeferralPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub horizon: u64,
    pub seed: u64,
    pub warmup: u64,
    pub batches: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            seed: 0,
            warmup: 1_000,
            batches: 100,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon as f64,
                reason: "horizon must be at least one slot",
            });
        }
        if self.warmup >= self.horizon {
            return Err(Error::InvalidParameter {
                name: "warmup",
                value: self.warmup as f64,
                reason: "warmup must be shorter than the horizon",
            });
        }
        if self.batches < 2 || self.batches as u64 > self.horizon - self.warmup {
            return Err(Error::InvalidParameter {
                name: "batches",
                value: self.batches as f64,
                reason: "need at least two batches and no more batches than measured slots",
            });
        }
        Ok(())
    }
}

/// Pending service seen by arriving jobs, with its share of all arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub pending: f64,
    pub mass: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitAtom {
    pub pending: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub average_cost: f64,
    pub standard_error: f64,
    pub pending_histogram: Vec<HistogramBin>,
    pub cycle_count: u64,
    pub arrivals: u64,
    pub slots: u64,
}

impl SimReport {
    /// Histogram mass at `pending`, matched within `tol`.
    pub fn mass_at(&self, pending: f64, tol: f64) -> Option<&HistogramBin> {
        self.pending_histogram
            .iter()
            .find(|b| (b.pending - pending).abs() <= tol)
    }
}

fn check_policy_range<P: DeferralPolicy + ?Sized>(
    policy: &P,
    max_pending: f64,
    cap: f64,
) -> Result<()> {
    for i in 0..=100 {
        let x = max_pending * i as f64 / 100.0;
        checked(policy, x, cap)?;
    }
    Ok(())
}

#[inline]
fn checked<P: DeferralPolicy + ?Sized>(policy: &P, x: f64, cap: f64) -> Result<f64> {
    let u = policy.deferral(x);
    if u.is_finite() && (0.0..=cap).contains(&u) {
        Ok(u)
    } else {
        Err(Error::PolicyRange {
            pending: x,
            deferral: u,
            cap,
        })
    }
}

/// Simulates Bernoulli arrivals under `policy`.
pub fn simulate<P: DeferralPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    config: &TrajectoryConfig,
) -> Result<SimReport> {
    params.validate()?;
    config.validate()?;
    let ModelParams { p, psi, d } = *params;
    check_policy_range(policy, psi, psi)?;
    run(
        config,
        d,
        |rng| rng.random_bool(p).then_some(0),
        |_| psi,
        |_, x| checked(policy, x, psi),
    )
}

/// Simulates categorical arrivals under the per-class policies.
pub fn simulate_general(
    params: &GeneralModelParams,
    policy: &PiecewiseAffinePolicy,
    config: &TrajectoryConfig,
) -> Result<SimReport> {
    params.validate()?;
    config.validate()?;
    if policy.classes.len() != params.classes() {
        return Err(Error::InvalidParameter {
            name: "policy",
            value: policy.classes.len() as f64,
            reason: "policy must have one entry per demand class",
        });
    }
    let x_max = params.max_demand();
    for (class, &psi) in policy.classes.iter().zip(&params.demands) {
        check_policy_range(class, x_max, psi)?;
    }
    let cumulative: Vec<f64> = params
        .probs
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    run(
        config,
        params.d,
        |rng| {
            let r: f64 = rng.random();
            cumulative.iter().position(|&c| r < c)
        },
        |i| params.demands[i],
        |i, x| checked(&policy.classes[i], x, params.demands[i]),
    )
}

fn run(
    config: &TrajectoryConfig,
    d: f64,
    mut arrival: impl FnMut(&mut ChaCha8Rng) -> Option<usize>,
    demand: impl Fn(usize) -> f64,
    defer: impl Fn(usize, f64) -> Result<f64>,
) -> Result<SimReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let measured = config.horizon - config.warmup;
    let batches = config.batches;
    let batch_len = measured / batches as u64;

    let mut batch_cost = vec![0.0; batches];
    let mut batch_slots = vec![0u64; batches];
    let mut batch_arrivals = vec![0u64; batches];
    // Pending values are exact orbit points, so equal bit patterns identify atoms.
    let mut atoms: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut pending = 0.0f64;
    let mut previous_busy = false;
    let mut cycles = 0u64;

    for slot in 0..config.horizon {
        let class = arrival(&mut rng);
        let (cost, next) = match class {
            Some(i) => {
                let u = defer(i, pending)?;
                let served = pending + demand(i) - u;
                (served * served + d * pending * pending, u)
            }
            None => ((1.0 + d) * pending * pending, 0.0),
        };
        if slot >= config.warmup {
            let b = (((slot - config.warmup) / batch_len) as usize).min(batches - 1);
            batch_cost[b] += cost;
            batch_slots[b] += 1;
            if class.is_some() {
                batch_arrivals[b] += 1;
                atoms
                    .entry(pending.to_bits())
                    .or_insert_with(|| vec![0; batches])[b] += 1;
                if !previous_busy {
                    cycles += 1;
                }
            }
        }
        previous_busy = class.is_some();
        pending = next;
    }

    let total_cost: f64 = batch_cost.iter().sum();
    let average_cost = total_cost / measured as f64;
    let batch_means: Vec<f64> = batch_cost
        .iter()
        .zip(&batch_slots)
        .map(|(&c, &n)| c / n as f64)
        .collect();
    let cost_error = standard_error(&batch_means);

    let arrivals: u64 = batch_arrivals.iter().sum();
    let pending_histogram = atoms
        .into_iter()
        .map(|(bits, counts)| {
            let total: u64 = counts.iter().sum();
            let shares: Vec<f64> = counts
                .iter()
                .zip(&batch_arrivals)
                .filter(|(_, &n)| n > 0)
                .map(|(&c, &n)| c as f64 / n as f64)
                .collect();
            HistogramBin {
                pending: f64::from_bits(bits),
                mass: total as f64 / arrivals as f64,
                standard_error: standard_error(&shares),
            }
        })
        .collect();

    Ok(SimReport {
        average_cost,
        standard_error: cost_error,
        pending_histogram,
        cycle_count: cycles,
        arrivals,
        slots: measured,
    })
}

fn standard_error(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    libm::sqrt(var / n as f64)
}

/// Distribution of pending service seen by arriving jobs: the `k`-th job of a
/// busy period sees `y_k = policy(y_{k-1})`, `y_0 = 0`, with probability
/// `(1 - p) p^k`. The tail beyond `depth` is lumped at `y_depth`.
pub fn orbit_masses<P: DeferralPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    depth: usize,
) -> Result<Vec<OrbitAtom>> {
    params.validate()?;
    if depth < 1 {
        return Err(Error::Domain {
            name: "depth",
            value: depth as f64,
            domain: "depth >= 1",
        });
    }
    let ModelParams { p, psi, .. } = *params;
    let mut atoms = Vec::with_capacity(depth + 1);
    let mut y = 0.0;
    let mut reach = 1.0;
    for _ in 0..depth {
        let mass = reach * (1.0 - p);
        if mass > 0.0 {
            atoms.push(OrbitAtom { pending: y, mass });
        }
        reach *= p;
        y = checked(policy, y, psi)?;
    }
    if reach > 0.0 {
        atoms.push(OrbitAtom {
            pending: y,
            mass: reach,
        });
    }
    Ok(atoms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub psi: f64,
    pub d: f64,
    pub cost_optimal: f64,
    pub cost_nash: f64,
    pub cost_none: f64,
    /// Nash cost over optimal cost.
    pub efficiency_loss: f64,
}

/// Long-run average costs of the optimal, Nash and never-defer policies.
///
/// Below full load the costs are `p (1 - p)` times the renewal cycle costs
/// and the efficiency loss is the ratio of cycle costs, which stays defined
/// as `p -> 0`. At `p = 1` the limit-cycle cost is used.
pub fn sweep_average_cost(params_grid: &[ModelParams]) -> Result<Vec<SweepRow>> {
    if params_grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "params_grid",
            value: 0.0,
            reason: "sweep needs at least one parameter set",
        });
    }
    params_grid
        .iter()
        .map(|m| {
            let optimal = optimal_policy(m)?;
            let nash = nash_policy(m)?;
            let none = AffinePolicy::zero(m.psi);
            let (cost_optimal, cost_nash, cost_none, efficiency_loss) = if m.p >= 1.0 {
                let o = limit_cycle_cost(m, &optimal)?;
                let n = limit_cycle_cost(m, &nash)?;
                (o, n, limit_cycle_cost(m, &none)?, n / o)
            } else {
                let scale = m.p * (1.0 - m.p);
                let o = renewal_cycle_cost(m, &optimal)?;
                let n = renewal_cycle_cost(m, &nash)?;
                (
                    scale * o,
                    scale * n,
                    scale * renewal_cycle_cost(m, &none)?,
                    n / o,
                )
            };
            Ok(SweepRow {
                p: m.p,
                psi: m.psi,
                d: m.d,
                cost_optimal,
                cost_nash,
                cost_none,
                efficiency_loss,
            })
        })
        .collect()
}

/// Expected cost of a single agent who sees `x` pending when every agent
/// follows the stationary `policy`:
/// `(psi - pi(x))(psi - pi(x) + x) + pi(x)(pi(x) + p(psi - pi(pi(x)))) + d pi(x)^2`.
pub fn agent_cost<P: DeferralPolicy + ?Sized>(
    x: f64,
    params: &ModelParams,
    policy: &P,
) -> Result<f64> {
    params.validate()?;
    let ModelParams { p, psi, d } = *params;
    ensure_in("x", x, 0.0, psi, "[0, psi]")?;
    let u = checked(policy, x, psi)?;
    let next = checked(policy, u, psi)?;
    Ok((psi - u) * (psi - u + x) + u * (u + p * (psi - next)) + d * u * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::best_response_cost;

    fn params(p: f64) -> ModelParams {
        ModelParams::new(p, 2.0, 1.0).unwrap()
    }

    fn short() -> TrajectoryConfig {
        TrajectoryConfig {
            horizon: 20_000,
            seed: 7,
            warmup: 100,
            batches: 20,
        }
    }

    #[test]
    fn full_load_optimal_is_deterministic() {
        let m = params(1.0);
        let report = simulate(&m, &optimal_policy(&m).unwrap(), &short()).unwrap();
        assert!((report.average_cost - 4.0).abs() < 1e-9);
        assert_eq!(report.cycle_count, 0);
    }

    #[test]
    fn full_load_nash_settles_on_fixed_point() {
        let m = params(1.0);
        let nash = nash_policy(&m).unwrap();
        let report = simulate(&m, &nash, &short()).unwrap();
        let x = nash.fixed_point().unwrap();
        assert!((report.average_cost - (4.0 + x * x)).abs() < 1e-9);
        assert!((report.average_cost - 4.27374).abs() < 1e-4);
    }

    #[test]
    fn same_seed_same_report() {
        let m = params(0.5);
        let pol = optimal_policy(&m).unwrap();
        let a = simulate(&m, &pol, &short()).unwrap();
        let b = simulate(&m, &pol, &short()).unwrap();
        assert_eq!(a, b);
        let total: f64 = a.pending_histogram.iter().map(|b| b.mass).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn range_violation_names_the_point() {
        let m = params(0.5);
        let bad = |x: f64| x + 1.5;
        match simulate(&m, &bad, &short()) {
            Err(Error::PolicyRange {
                pending, deferral, ..
            }) => {
                assert!(deferral > 2.0);
                assert!((deferral - pending - 1.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let m = params(0.5);
        let pol = optimal_policy(&m).unwrap();
        let mut c = short();
        c.warmup = c.horizon;
        assert!(simulate(&m, &pol, &c).is_err());
        let mut c = short();
        c.batches = 1;
        assert!(simulate(&m, &pol, &c).is_err());
    }

    #[test]
    fn orbit_masses_edge_cases() {
        let m = params(0.0);
        let atoms = orbit_masses(&m, &optimal_policy(&m).unwrap(), 5).unwrap();
        assert_eq!(
            atoms,
            vec![OrbitAtom {
                pending: 0.0,
                mass: 1.0
            }]
        );
        assert!(orbit_masses(&m, &optimal_policy(&m).unwrap(), 0).is_err());

        let m = params(0.85);
        let nash = nash_policy(&m).unwrap();
        let atoms = orbit_masses(&m, &nash, 60).unwrap();
        let fixed = nash.fixed_point().unwrap();
        assert!(atoms
            .windows(2)
            .all(|w| w[0].pending < w[1].pending + 1e-15));
        assert!(atoms.iter().all(|a| a.pending <= fixed + 1e-12));
        assert!((atoms.last().unwrap().pending - fixed).abs() < 1e-12);
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn agent_cost_examples() {
        let never = AffinePolicy::zero(2.0);
        assert_eq!(agent_cost(0.0, &params(0.5), &never).unwrap(), 4.0);

        let m = params(1.0);
        let nash = nash_policy(&m).unwrap();
        let x = nash.fixed_point().unwrap();
        let direct = best_response_cost(x, nash.eval(x), &nash, &m).unwrap();
        assert!((agent_cost(x, &m, &nash).unwrap() - direct).abs() < 1e-12);

        // Plain arithmetic on the frozen Nash coefficients for p = 0.5.
        let m = params(0.5);
        let c = agent_cost(1.0, &m, &nash_policy(&m).unwrap()).unwrap();
        assert!((c - 4.42742144518155).abs() < 1e-10, "{c}");
        assert!(agent_cost(2.5, &m, &never).is_err());
    }

    #[test]
    fn sweep_orders_policies() {
        let rows = sweep_average_cost(&[params(0.5), params(1.0)]).unwrap();
        assert!(rows[0].cost_optimal <= rows[0].cost_nash);
        assert!(rows[0].cost_optimal <= rows[0].cost_none);
        assert!((rows[1].efficiency_loss - 1.0684).abs() < 1e-4);
        assert!(sweep_average_cost(&[]).is_err());
    }
}
