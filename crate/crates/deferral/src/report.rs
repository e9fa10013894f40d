//! Datasets produced by each command, in the shape they are written out.

use clap::ValueEnum;
use deferral_core::bellman::{
    algorithm1_policy, general_average_cost, long_run_average_cost, policy_value, relative_value,
    value_iterate_general, PiecewiseAffinePolicy, ValueIteration,
};
use deferral_core::estimation::{
    cost_gap_bound, estimated_policy, required_samples, EstimatorState, GapBound,
};
use deferral_core::policy::{nash_policy, optimal_policy};
use deferral_core::sim::{simulate, sweep_average_cost, SimReport, SweepRow, TrajectoryConfig};
use deferral_core::{AffinePolicy, Error, GeneralModelParams, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::table::{sig12, CsvRow, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Optimal,
    Nash,
    /// Serve every request in full on arrival.
    None,
}

impl PolicyKind {
    pub fn build(self, params: &ModelParams) -> Result<AffinePolicy, CliError> {
        Ok(match self {
            PolicyKind::Optimal => optimal_policy(params)?,
            PolicyKind::Nash => nash_policy(params)?,
            PolicyKind::None => AffinePolicy::zero(params.psi),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Nash => "nash",
            PolicyKind::None => "none",
        }
    }
}

fn linspace(hi: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if points < 2 {
        return Err(CliError::Parse(format!(
            "need at least 2 points, got {points}"
        )));
    }
    Ok((0..points)
        .map(|i| hi * i as f64 / (points - 1) as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub x: f64,
    #[serde(rename = "J")]
    pub value: f64,
    pub u: f64,
}

impl CsvRow for PolicyRow {
    const HEADER: &'static [&'static str] = &["x", "J", "u"];
    fn fields(&self) -> Vec<String> {
        vec![sig12(self.x), sig12(self.value), sig12(self.u)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub kind: PolicyKind,
    pub params: ModelParams,
    pub policy: AffinePolicy,
    pub fixed_point: Option<f64>,
    pub average_cost: f64,
    /// At `p = 1` the J column is relative to `J(0) = 0`.
    pub relative_values: bool,
    pub table: Vec<PolicyRow>,
}

impl Dataset for PolicyReport {
    type Row = PolicyRow;
    fn rows(&self) -> Vec<PolicyRow> {
        self.table.clone()
    }
}

pub fn policy_report(
    kind: PolicyKind,
    params: &ModelParams,
    points: usize,
) -> Result<PolicyReport, CliError> {
    let policy = kind.build(params)?;
    let relative_values = params.p >= 1.0;
    let table = linspace(params.psi, points)?
        .into_iter()
        .map(|x| {
            let value = if relative_values {
                relative_value(params, &policy, x)?
            } else {
                policy_value(params, &policy, x)?
            };
            Ok(PolicyRow {
                x,
                value,
                u: policy.eval(x),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(PolicyReport {
        kind,
        params: *params,
        policy,
        fixed_point: policy.fixed_point(),
        average_cost: long_run_average_cost(params, &policy)?,
        relative_values,
        table,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralRow {
    pub demand: f64,
    pub x: f64,
    #[serde(rename = "J")]
    pub value: f64,
    pub u: f64,
}

impl CsvRow for GeneralRow {
    const HEADER: &'static [&'static str] = &["demand", "x", "J", "u"];
    fn fields(&self) -> Vec<String> {
        vec![
            sig12(self.demand),
            sig12(self.x),
            sig12(self.value),
            sig12(self.u),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralReport {
    pub params: GeneralModelParams,
    pub policy: PiecewiseAffinePolicy,
    pub average_cost: f64,
    pub table: Vec<GeneralRow>,
}

impl Dataset for GeneralReport {
    type Row = GeneralRow;
    fn rows(&self) -> Vec<GeneralRow> {
        self.table.clone()
    }
}

pub fn general_report(
    params: &GeneralModelParams,
    tol: f64,
    max_rounds: usize,
    points: usize,
) -> Result<GeneralReport, CliError> {
    let policy = algorithm1_policy(params, tol, max_rounds)?;
    let xs = linspace(params.max_demand(), points)?;
    let table = policy
        .classes
        .iter()
        .flat_map(|class| {
            xs.iter().map(move |&x| GeneralRow {
                demand: class.demand,
                x,
                value: class.value.eval(x),
                u: class.eval(x),
            })
        })
        .collect();
    Ok(GeneralReport {
        params: params.clone(),
        average_cost: general_average_cost(params, &policy)?,
        policy,
        table,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub params: GeneralModelParams,
    pub solution: ValueIteration,
}

impl Dataset for OracleReport {
    type Row = GeneralRow;
    fn rows(&self) -> Vec<GeneralRow> {
        self.solution
            .classes
            .iter()
            .flat_map(|class| {
                class
                    .grid
                    .iter()
                    .enumerate()
                    .map(move |(i, &x)| GeneralRow {
                        demand: class.demand,
                        x,
                        value: class.values[i],
                        u: class.policy[i],
                    })
            })
            .collect()
    }
}

pub fn oracle_report(
    params: &GeneralModelParams,
    grid: usize,
    tol: f64,
    max_iter: usize,
) -> Result<OracleReport, CliError> {
    Ok(OracleReport {
        params: params.clone(),
        solution: value_iterate_general(params, grid, tol, max_iter)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub pending: f64,
    pub mass: f64,
}

impl CsvRow for HistogramRow {
    const HEADER: &'static [&'static str] = &["pending", "mass"];
    fn fields(&self) -> Vec<String> {
        vec![sig12(self.pending), sig12(self.mass)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub kind: PolicyKind,
    pub params: ModelParams,
    pub config: TrajectoryConfig,
    pub report: SimReport,
}

impl Dataset for SimulationReport {
    type Row = HistogramRow;
    fn rows(&self) -> Vec<HistogramRow> {
        self.report
            .pending_histogram
            .iter()
            .map(|b| HistogramRow {
                pending: b.pending,
                mass: b.mass,
            })
            .collect()
    }
}

pub fn simulation_report(
    kind: PolicyKind,
    params: &ModelParams,
    config: &TrajectoryConfig,
) -> Result<SimulationReport, CliError> {
    config.validate().map_err(CliError::Invalid)?;
    let policy = kind.build(params)?;
    Ok(SimulationReport {
        kind,
        params: *params,
        config: *config,
        report: simulate(params, &policy, config)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub p: f64,
    pub cost_optimal: f64,
    pub cost_nash: f64,
    pub efficiency_loss: f64,
}

impl CsvRow for SweepCsvRow {
    const HEADER: &'static [&'static str] = &["p", "cost_optimal", "cost_nash", "efficiency_loss"];
    fn fields(&self) -> Vec<String> {
        vec![
            sig12(self.p),
            sig12(self.cost_optimal),
            sig12(self.cost_nash),
            sig12(self.efficiency_loss),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub psi: f64,
    pub d: f64,
    pub rows: Vec<SweepRow>,
}

impl Dataset for SweepReport {
    type Row = SweepCsvRow;
    fn rows(&self) -> Vec<SweepCsvRow> {
        self.rows
            .iter()
            .map(|r| SweepCsvRow {
                p: r.p,
                cost_optimal: r.cost_optimal,
                cost_nash: r.cost_nash,
                efficiency_loss: r.efficiency_loss,
            })
            .collect()
    }
}

/// Costs at `p = i / steps` for `i = 0..=steps`.
pub fn sweep_report(psi: f64, d: f64, steps: usize) -> Result<SweepReport, CliError> {
    if steps < 1 {
        return Err(CliError::Parse("sweep needs at least one step".into()));
    }
    let grid = (0..=steps)
        .map(|i| ModelParams::new(i as f64 / steps as f64, psi, d))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Invalid)?;
    Ok(SweepReport {
        psi,
        d,
        rows: sweep_average_cost(&grid)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityRow {
    pub quantity: String,
    pub value: f64,
}

impl QuantityRow {
    fn new(quantity: &str, value: f64) -> Self {
        Self {
            quantity: quantity.into(),
            value,
        }
    }
}

impl CsvRow for QuantityRow {
    const HEADER: &'static [&'static str] = &["quantity", "value"];
    fn fields(&self) -> Vec<String> {
        vec![self.quantity.clone(), sig12(self.value)]
    }
}

fn bound_rows(bound: &GapBound) -> Vec<QuantityRow> {
    let c = &bound.constants;
    vec![
        QuantityRow::new("K", c.k),
        QuantityRow::new("z", c.z),
        QuantityRow::new("K_prime", c.k_prime),
        QuantityRow::new("A", c.a),
        QuantityRow::new("B", c.b),
        QuantityRow::new("bound", bound.value),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub psi: f64,
    pub d: f64,
    pub bound: GapBound,
}

impl Dataset for BoundReport {
    type Row = QuantityRow;
    fn rows(&self) -> Vec<QuantityRow> {
        let mut rows = vec![
            QuantityRow::new("p_hat", self.bound.p_hat),
            QuantityRow::new("epsilon", self.bound.epsilon),
        ];
        rows.extend(bound_rows(&self.bound));
        rows
    }
}

pub fn bound_report(p_hat: f64, eps: f64, psi: f64, d: f64) -> Result<BoundReport, CliError> {
    Ok(BoundReport {
        psi,
        d,
        bound: cost_gap_bound(p_hat, eps, psi, d)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub state: EstimatorState,
    pub p_hat: f64,
    pub epsilon: f64,
    pub confidence: f64,
    pub required_samples: u64,
    pub enough_samples: bool,
    pub policy: AffinePolicy,
    /// Absent when `p_hat + epsilon` reaches 1 and the bound is unbounded.
    pub bound: Option<GapBound>,
}

impl Dataset for EstimateReport {
    type Row = QuantityRow;
    fn rows(&self) -> Vec<QuantityRow> {
        let mut rows = vec![
            QuantityRow::new("n", self.state.n as f64),
            QuantityRow::new("successes", self.state.successes as f64),
            QuantityRow::new("p_hat", self.p_hat),
            QuantityRow::new("epsilon", self.epsilon),
            QuantityRow::new("confidence", self.confidence),
            QuantityRow::new("required_samples", self.required_samples as f64),
            QuantityRow::new("slope", self.policy.slope),
            QuantityRow::new("intercept", self.policy.intercept),
        ];
        if let Some(bound) = &self.bound {
            rows.extend(bound_rows(bound));
        }
        rows
    }
}

/// Parses an arrival trace with one `0` or `1` per line; blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<EstimatorState, CliError> {
    let mut state = EstimatorState::new();
    for (i, line) in text.lines().enumerate() {
        state = match line.trim() {
            "" => continue,
            "0" => state.update(false),
            "1" => state.update(true),
            other => {
                return Err(CliError::Parse(format!(
                    "trace line {}: expected 0 or 1, got {other:?}",
                    i + 1
                )))
            }
        };
    }
    Ok(state)
}

pub fn estimate_report(
    state: EstimatorState,
    eps: f64,
    h: f64,
    psi: f64,
    d: f64,
) -> Result<EstimateReport, CliError> {
    let p_hat = state
        .p_hat()
        .ok_or_else(|| CliError::Parse("trace contains no observations".into()))?;
    let required = required_samples(eps, h).map_err(CliError::Invalid)?;
    let bound = match cost_gap_bound(p_hat, eps, psi, d) {
        Ok(b) => Some(b),
        Err(Error::Unbounded(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(EstimateReport {
        state,
        p_hat,
        epsilon: eps,
        confidence: h,
        required_samples: required,
        enough_samples: state.n >= required,
        policy: estimated_policy(p_hat, psi, d)?,
        bound,
    })
}
