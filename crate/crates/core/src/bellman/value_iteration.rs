//! Grid value iteration for the stochastic shortest path problem
//!
//! ```text
//! J(psi_i, x) = min_{u in [0, psi_i]} (psi_i - u + x)^2 + d x^2
//!               + sum_j p_j J(psi_j, u) + (1 - pbar) (1 + d) u^2
//! ```
//!
//! starting from the single-request problem, whose continuation is
//! `(1 + d) u^2`. States live on a grid over `[0, psi_N]` that contains every
//! demand as a node, so each class minimizes over a prefix of the grid.
//!
//! The objective is convex in `u`, so the grid minimizer is located by
//! bisection on forward differences and then refined with one parabola fit
//! through the best node and its neighbours.
//!
//! When requests arrive in every slot there is no terminal state; the
//! iteration then runs in relative form, pinning `J(psi_1, 0)` to zero and
//! reporting the per-slot gain.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GeneralModelParams, ModelParams};

pub const DEFAULT_GRID_SIZE: usize = 4097;

/// Converged cost and greedy deferral for one demand class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionGrid {
    pub demand: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub policy: Vec<f64>,
}

impl ValueFunctionGrid {
    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.grid.len();
        if x <= self.grid[0] {
            return (0, 0.0);
        }
        if x >= self.grid[n - 1] {
            return (n - 2, 1.0);
        }
        let hi = self.grid.partition_point(|&g| g <= x).min(n - 1);
        let lo = hi - 1;
        let t = (x - self.grid[lo]) / (self.grid[hi] - self.grid[lo]);
        (lo, t)
    }

    fn interp(&self, ys: &[f64], x: f64) -> f64 {
        let (lo, t) = self.locate(x);
        ys[lo] + t * (ys[lo + 1] - ys[lo])
    }

    /// Linearly interpolated greedy deferral.
    pub fn policy_at(&self, x: f64) -> f64 {
        self.interp(&self.policy, x)
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.interp(&self.values, x)
    }

    /// Largest spacing between adjacent grid nodes.
    pub fn max_step(&self) -> f64 {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm change of the value function at each iteration.
    pub residual_history: Vec<f64>,
    /// Average cost per slot, reported only by the relative iteration.
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueIteration {
    pub classes: Vec<ValueFunctionGrid>,
    pub stats: SolveStats,
}

pub fn value_iterate_bernoulli(
    params: &ModelParams,
    grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ValueIteration> {
    params.validate()?;
    value_iterate_general(&GeneralModelParams::from(*params), grid_size, tol, max_iter)
}

pub fn value_iterate_general(
    params: &GeneralModelParams,
    grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ValueIteration> {
    params.validate()?;
    if grid_size < 2 {
        return Err(Error::Domain {
            name: "grid_size",
            value: grid_size as f64,
            domain: "grid_size >= 2",
        });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain {
            name: "tol",
            value: tol,
            domain: "tol > 0",
        });
    }

    let grid = build_grid(params.max_demand(), grid_size, &params.demands);
    let n = grid.len();
    let caps: Vec<usize> = params
        .demands
        .iter()
        .map(|&psi| grid.partition_point(|&g| g <= psi) - 1)
        .collect();
    let classes = params.classes();
    let d = params.d;
    let idle = params.idle_prob();
    let relative = idle <= 1e-15;

    // Continuation of the single-request problem: the deferred part is
    // always served in an otherwise empty slot.
    let mut continuation: Vec<f64> = grid.iter().map(|&u| (1.0 + d) * u * u).collect();
    let mut values = vec![vec![0.0; n]; classes];
    let mut policy = vec![vec![0.0; n]; classes];
    let mut next = vec![vec![0.0; n]; classes];

    bellman_update(
        &grid,
        &caps,
        params,
        &continuation,
        &mut values,
        &mut policy,
    );
    if relative {
        let offset = values[0][0];
        values.iter_mut().flatten().for_each(|v| *v -= offset);
    }

    let mut history = Vec::new();
    let mut gain = None;
    for iteration in 1..=max_iter {
        for (u_idx, g) in continuation.iter_mut().enumerate() {
            let u = grid[u_idx];
            *g = params
                .probs
                .iter()
                .zip(&values)
                .map(|(&p, j)| p * j[u_idx])
                .sum::<f64>()
                + idle * (1.0 + d) * u * u;
        }
        bellman_update(&grid, &caps, params, &continuation, &mut next, &mut policy);
        if relative {
            let offset = next[0][0];
            next.iter_mut().flatten().for_each(|v| *v -= offset);
            gain = Some(offset);
        }
        let residual = values
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        core::mem::swap(&mut values, &mut next);
        history.push(residual);
        if residual < tol {
            let out = params
                .demands
                .iter()
                .zip(values)
                .zip(policy)
                .map(|((&demand, values), policy)| ValueFunctionGrid {
                    demand,
                    grid: grid.clone(),
                    values,
                    policy,
                })
                .collect();
            return Ok(ValueIteration {
                classes: out,
                stats: SolveStats {
                    iterations: iteration,
                    residual,
                    residual_history: history,
                    gain,
                },
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Uniform grid on `[0, max]` with the extra points spliced in.
fn build_grid(max: f64, size: usize, extra: &[f64]) -> Vec<f64> {
    let step = max / (size - 1) as f64;
    let mut grid: Vec<f64> = (0..size).map(|i| i as f64 * step).collect();
    grid[size - 1] = max;
    let eps = 1e-12 * max;
    for &e in extra {
        let pos = grid.partition_point(|&g| g < e);
        let near_lo = pos > 0 && (e - grid[pos - 1]).abs() <= eps;
        let near_hi = pos < grid.len() && (grid[pos] - e).abs() <= eps;
        if near_hi {
            grid[pos] = e;
        } else if near_lo {
            grid[pos - 1] = e;
        } else {
            grid.insert(pos, e);
        }
    }
    grid
}

fn bellman_update(
    grid: &[f64],
    caps: &[usize],
    params: &GeneralModelParams,
    continuation: &[f64],
    values: &mut [Vec<f64>],
    policy: &mut [Vec<f64>],
) {
    let d = params.d;
    for (class, &psi) in params.demands.iter().enumerate() {
        let cap = caps[class];
        for (s, &x) in grid.iter().enumerate() {
            let (u, cost) = minimize(grid, continuation, x + psi, cap);
            values[class][s] = d * x * x + cost;
            policy[class][s] = u;
        }
    }
}

/// Minimizes `(load - u)^2 + G(u)` over grid nodes `0..=cap`.
fn minimize(grid: &[f64], g: &[f64], load: f64, cap: usize) -> (f64, f64) {
    let f = |j: usize| {
        let r = load - grid[j];
        r * r + g[j]
    };
    let (mut lo, mut hi) = (0usize, cap);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if f(mid + 1) < f(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let best = lo;
    let mut result = (grid[best], f(best));
    if cap < 2 {
        return result;
    }

    let c = best.clamp(1, cap - 1);
    let (u0, u1, u2) = (grid[c - 1], grid[c], grid[c + 1]);
    let (f0, f1, f2) = (f(c - 1), f(c), f(c + 1));
    let d01 = (f1 - f0) / (u1 - u0);
    let d12 = (f2 - f1) / (u2 - u1);
    let curvature = (d12 - d01) / (u2 - u0);
    if curvature > 0.0 {
        let vertex = ((u0 + u1) / 2.0 - d01 / (2.0 * curvature)).clamp(u0, u2);
        let value = f0 + d01 * (vertex - u0) + curvature * (vertex - u0) * (vertex - u1);
        if value < result.1 {
            result = (vertex, value);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::optimal_policy;

    #[test]
    fn grid_contains_demands() {
        let g = build_grid(3.0, 5, &[1.0, 3.0]);
        assert_eq!(g, vec![0.0, 0.75, 1.0, 1.5, 2.25, 3.0]);
        let g = build_grid(2.0, 5, &[2.0]);
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn single_request_problem_at_p0() {
        let m = ModelParams::new(0.0, 2.0, 1.0).unwrap();
        let vi = value_iterate_bernoulli(&m, 1025, 1e-10, 100).unwrap();
        assert_eq!(vi.stats.iterations, 1);
        let class = &vi.classes[0];
        // argmin of (x + psi - u)^2 + (1 + d) u^2 is (x + psi) / (2 + d).
        assert!((class.policy[0] - 2.0 / 3.0).abs() < 1e-9);
        let mid = class.policy_at(1.0);
        assert!((mid - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_closed_form_at_half_load() {
        let m = ModelParams::new(0.5, 2.0, 1.0).unwrap();
        let vi = value_iterate_bernoulli(&m, DEFAULT_GRID_SIZE, 1e-10, 10_000).unwrap();
        let class = &vi.classes[0];
        let pol = optimal_policy(&m).unwrap();
        let gap = class
            .grid
            .iter()
            .zip(&class.policy)
            .map(|(&x, &u)| (u - pol.eval(x)).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 2.0 * class.max_step(), "gap {gap}");
    }

    #[test]
    fn full_load_uses_relative_iteration() {
        let m = ModelParams::new(1.0, 2.0, 1.0).unwrap();
        let vi = value_iterate_bernoulli(&m, 1025, 1e-10, 10_000).unwrap();
        let class = &vi.classes[0];
        assert!(class.policy[0].abs() <= class.max_step());
        let gain = vi.stats.gain.unwrap();
        assert!((gain - 4.0).abs() < 1e-6, "gain {gain}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = ModelParams::new(0.5, 2.0, 1.0).unwrap();
        assert!(value_iterate_bernoulli(&m, 1, 1e-9, 10).is_err());
        assert!(value_iterate_bernoulli(&m, 17, 0.0, 10).is_err());
        match value_iterate_bernoulli(&m, 17, 1e-12, 2) {
            Err(Error::NoConvergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
