//! Exact piecewise-affine policies for heterogeneous demands.
//!
//! The continuation cost `G(u) = sum_j p_j J(psi_j, u) + (1 - pbar)(1 + d) u^2`
//! stays piecewise quadratic and convex through every Bellman step, so the
//! recursion can be run on its breakpoints and coefficients instead of a
//! grid. On a piece where `G(u) = a u^2 + b u + c` the minimizer of
//! `(x + psi_i - u)^2 + G(u)` is `(2(x + psi_i) - b) / (2(1 + a))`, and the
//! pending-service values at which it crosses a breakpoint `g` are
//! `(2(1 + a) g + b) / 2 - psi_i`. Clamping at `0` and `psi_i` adds pieces on
//! which the deferral is constant. Summing the resulting `J(psi_i, .)`
//! produces the next continuation; the rounds stop when breakpoints and
//! coefficients stop moving.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::GeneralModelParams;
use crate::policy::DeferralPolicy;

pub const DEFAULT_ROUND_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ROUNDS: usize = 10_000;

/// `a u^2 + b u + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, u: f64) -> f64 {
        (self.a * u + self.b) * u + self.c
    }

    fn scaled_add(self, k: f64, other: Quadratic) -> Quadratic {
        Quadratic {
            a: self.a + k * other.a,
            b: self.b + k * other.b,
            c: self.c + k * other.c,
        }
    }
}

/// A function on `[knots[0], knots[last]]` that is quadratic on each
/// `[knots[j], knots[j + 1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuadratic {
    pub knots: Vec<f64>,
    pub pieces: Vec<Quadratic>,
}

impl PiecewiseQuadratic {
    fn single(lo: f64, hi: f64, q: Quadratic) -> Self {
        Self {
            knots: vec![lo, hi],
            pieces: vec![q],
        }
    }

    /// Index of the piece containing `u`; points outside the domain map to the end pieces.
    pub fn piece_index(&self, u: f64) -> usize {
        let inner = &self.knots[1..self.knots.len() - 1];
        inner.partition_point(|&k| k <= u)
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.pieces[self.piece_index(u)].eval(u)
    }

    fn shift(&mut self, offset: f64) {
        for q in &mut self.pieces {
            q.c += offset;
        }
    }

    fn distance(&self, other: &Self) -> f64 {
        if self.knots.len() != other.knots.len() {
            return f64::INFINITY;
        }
        let knots = self
            .knots
            .iter()
            .zip(&other.knots)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.pieces
            .iter()
            .zip(&other.pieces)
            .map(|(p, q)| {
                (p.a - q.a)
                    .abs()
                    .max((p.b - q.b).abs())
                    .max((p.c - q.c).abs())
            })
            .fold(knots, f64::max)
    }
}

/// Deferral `slope * x + intercept` for pending service in `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySegment {
    pub start: f64,
    pub end: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl PolicySegment {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPolicy {
    pub demand: f64,
    pub segments: Vec<PolicySegment>,
    /// `J(psi_i, x)` implied by the continuation the policy was computed from.
    pub value: PiecewiseQuadratic,
}

impl ClassPolicy {
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.segments[..self.segments.len() - 1].partition_point(|s| s.end <= x);
        self.segments[idx].eval(x).clamp(0.0, self.demand)
    }

    /// Interior breakpoints in pending service.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments[..self.segments.len() - 1]
            .iter()
            .map(|s| s.end)
            .collect()
    }
}

impl DeferralPolicy for ClassPolicy {
    fn deferral(&self, pending: f64) -> f64 {
        self.eval(pending)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffinePolicy {
    pub classes: Vec<ClassPolicy>,
    /// Continuation cost the policies minimize against; its piece
    /// coefficients are the per-segment `(a, b)` pairs.
    pub continuation: PiecewiseQuadratic,
    pub rounds: usize,
    pub last_delta: f64,
    /// Per-slot cost when every slot is busy; values are then relative to
    /// `J(psi_1, 0) = 0`.
    pub gain: Option<f64>,
}

impl PiecewiseAffinePolicy {
    pub fn eval(&self, class: usize, x: f64) -> f64 {
        self.classes[class].eval(x)
    }
}

pub fn algorithm1_policy(
    params: &GeneralModelParams,
    tol: f64,
    max_rounds: usize,
) -> Result<PiecewiseAffinePolicy> {
    params.validate()?;
    if max_rounds < 1 {
        return Err(Error::Domain {
            name: "max_rounds",
            value: max_rounds as f64,
            domain: "max_rounds >= 1",
        });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain {
            name: "tol",
            value: tol,
            domain: "tol > 0",
        });
    }
    let x_max = params.max_demand();
    let d = params.d;
    let idle_weight = params.idle_prob() * (1.0 + d);
    let relative = params.total_prob() >= 1.0;

    let mut continuation = PiecewiseQuadratic::single(
        0.0,
        x_max,
        Quadratic {
            a: 1.0 + d,
            b: 0.0,
            c: 0.0,
        },
    );
    let mut last_delta = f64::INFINITY;
    for round in 1..=max_rounds {
        let classes = params
            .demands
            .iter()
            .map(|&psi| respond(&continuation, psi, x_max, d))
            .collect::<Result<Vec<_>>>()?;
        let mut classes = classes;
        let mut next = combine(&classes, &params.probs, idle_weight, x_max);
        // Without empty slots the costs grow by the gain every round, so only
        // differences are tracked.
        let gain = relative.then(|| classes[0].value.eval(0.0));
        if let Some(g) = gain {
            next.shift(-g);
        }
        last_delta = next.distance(&continuation);
        if last_delta < tol {
            if let Some(g) = gain {
                for class in &mut classes {
                    class.value.shift(-g);
                }
            }
            return Ok(PiecewiseAffinePolicy {
                classes,
                continuation,
                rounds: round,
                last_delta,
                gain,
            });
        }
        continuation = next;
    }
    Err(Error::NoConvergence {
        iterations: max_rounds,
        residual: last_delta,
    })
}

#[derive(Debug, Clone, Copy)]
enum Response {
    /// Deferral pinned at a breakpoint or at a cap.
    Pinned(f64),
    /// Deferral on the interior of a continuation piece.
    Interior(Quadratic),
}

/// Minimizes `(x + psi - u)^2 + G(u)` over `u in [0, psi]` for every
/// `x in [0, x_max]`, returning the class policy and `J(psi, .)`.
fn respond(g: &PiecewiseQuadratic, psi: f64, x_max: f64, d: f64) -> Result<ClassPolicy> {
    let scale = x_max.max(psi);
    let mut responses: Vec<(f64, Response)> = Vec::new();
    let active = g.knots[..g.knots.len() - 1]
        .iter()
        .take_while(|&&k| k < psi)
        .count();
    for (t, q) in g.pieces[..active].iter().enumerate() {
        if q.a <= -1.0 {
            return Err(Error::Structure("continuation curvature at or below -1"));
        }
        let lo = g.knots[t];
        let hi = g.knots[t + 1].min(psi);
        let load_in = (1.0 + q.a) * lo + q.b / 2.0;
        let load_out = (1.0 + q.a) * hi + q.b / 2.0;
        responses.push((load_in, Response::Pinned(lo)));
        responses.push((load_out, Response::Interior(*q)));
    }
    responses.push((f64::INFINITY, Response::Pinned(psi)));

    // Each entry covers loads from the previous end up to its own end.
    let mut policy = Vec::new();
    let mut knots = vec![0.0];
    let mut pieces = Vec::new();
    let mut prev_end = f64::NEG_INFINITY;
    let min_len = 1e-13 * scale;
    for (load_end, response) in responses {
        if load_end < prev_end - 1e-9 * scale {
            return Err(Error::Structure(
                "breakpoints out of order; continuation is not convex",
            ));
        }
        let start = (prev_end - psi).max(0.0);
        let end = (load_end - psi).min(x_max);
        prev_end = prev_end.max(load_end);
        if end - start <= min_len {
            continue;
        }
        let (slope, intercept, value) = match response {
            Response::Pinned(v) => {
                // (x + psi - v)^2 + G(v) + d x^2
                let shift = psi - v;
                (
                    0.0,
                    v,
                    Quadratic {
                        a: 1.0 + d,
                        b: 2.0 * shift,
                        c: shift * shift + g.eval(v),
                    },
                )
            }
            Response::Interior(q) => {
                // min_u (s - u)^2 + a u^2 + b u + c, evaluated at s = x + psi.
                let k = 1.0 + q.a;
                let alpha = q.a / k;
                let beta = q.b / k;
                let gamma = q.c - q.b * q.b / (4.0 * k);
                (
                    1.0 / k,
                    (2.0 * psi - q.b) / (2.0 * k),
                    Quadratic {
                        a: alpha + d,
                        b: 2.0 * alpha * psi + beta,
                        c: (alpha * psi + beta) * psi + gamma,
                    },
                )
            }
        };
        let start = *knots.last().unwrap();
        policy.push(PolicySegment {
            start,
            end,
            slope,
            intercept,
        });
        knots.push(end);
        pieces.push(value);
        if end >= x_max {
            break;
        }
    }
    if pieces.is_empty() || *knots.last().unwrap() < x_max {
        return Err(Error::Structure(
            "class response does not cover the state interval",
        ));
    }
    *knots.last_mut().unwrap() = x_max;
    policy.last_mut().unwrap().end = x_max;
    Ok(ClassPolicy {
        demand: psi,
        segments: policy,
        value: PiecewiseQuadratic { knots, pieces },
    })
}

/// `sum_i p_i J_i(u) + idle_weight u^2` on the union of all breakpoints.
fn combine(
    classes: &[ClassPolicy],
    probs: &[f64],
    idle_weight: f64,
    x_max: f64,
) -> PiecewiseQuadratic {
    let mut knots: Vec<f64> = classes
        .iter()
        .flat_map(|c| c.value.knots.iter().copied())
        .collect();
    knots.sort_by(f64::total_cmp);
    let eps = 1e-12 * x_max;
    knots.dedup_by(|b, a| *b - *a <= eps);
    *knots.last_mut().unwrap() = x_max;
    if knots.len() < 2 {
        knots.push(x_max);
    }
    let pieces = knots
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let base = Quadratic {
                a: idle_weight,
                b: 0.0,
                c: 0.0,
            };
            classes.iter().zip(probs).fold(base, |acc, (class, &p)| {
                let j = &class.value;
                acc.scaled_add(p, j.pieces[j.piece_index(mid)])
            })
        })
        .collect();
    PiecewiseQuadratic { knots, pieces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;
    use crate::policy::{optimal_limits, optimal_policy};
    use alloc::vec;

    #[test]
    fn single_class_collapses_to_closed_form() {
        let m = ModelParams::new(0.5, 2.0, 1.0).unwrap();
        let pol = algorithm1_policy(&m.into(), 1e-12, DEFAULT_MAX_ROUNDS).unwrap();
        assert_eq!(pol.continuation.pieces.len(), 1);
        let (a, b) = optimal_limits(&m);
        let q = pol.continuation.pieces[0];
        assert!((q.a - a).abs() < 1e-10);
        assert!((q.b - b).abs() < 1e-10);
        let closed = optimal_policy(&m).unwrap();
        for i in 0..=100 {
            let x = 2.0 * i as f64 / 100.0;
            assert!((pol.eval(0, x) - closed.eval(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn two_classes_are_ordered_and_continuous() {
        let g = GeneralModelParams::new(vec![1.0, 3.0], vec![0.2, 0.7], 1.0).unwrap();
        let pol = algorithm1_policy(&g, DEFAULT_ROUND_TOL, DEFAULT_MAX_ROUNDS).unwrap();
        assert!(pol.eval(1, 0.0) > 0.0);
        for i in 0..=300 {
            let x = 3.0 * i as f64 / 300.0;
            assert!(pol.eval(0, x) <= pol.eval(1, x) + 1e-12);
            assert!(pol.eval(0, x) <= 1.0);
        }
        for class in &pol.classes {
            for w in class.segments.windows(2) {
                let left = w[0].eval(w[0].end).clamp(0.0, class.demand);
                let right = w[1].eval(w[1].start).clamp(0.0, class.demand);
                assert!((left - right).abs() < 1e-8, "jump {left} vs {right}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = GeneralModelParams::new(vec![1.0, 3.0], vec![0.2, 0.7], 1.0).unwrap();
        assert!(algorithm1_policy(&g, 1e-10, 0).is_err());
        assert!(algorithm1_policy(&g, -1.0, 10).is_err());
        assert!(matches!(
            algorithm1_policy(&g, 1e-300, 2),
            Err(Error::NoConvergence { iterations: 2, .. })
        ));
    }
}
