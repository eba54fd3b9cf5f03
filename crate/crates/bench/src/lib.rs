//! Horizon-scaling study for the exact and gradient solvers.
//!
//! A [`BenchPlan`] names a case-1 scenario and a ladder of horizons. Every rung
//! lengthens the scenario with [`scale_horizon`] (which also switches
//! discounting off) and times both solvers on it. Runs that hit a time or
//! memory cap become DNF rows; once the exact solver has a DNF it is not run
//! again on longer horizons, and the ladder stops after a rung where both
//! solvers DNF.

use std::io::Write;
use std::time::Instant;

use fleetup_core::scenarios::{case1, scale_horizon, ScenarioError};
use fleetup_core::{discrepancy, optimize, solve_bnb, BnbLimits, MlHyperparams, ScenarioConfig, SolveStatus};
use serde::{Deserialize, Serialize};

pub const DEFAULT_HORIZONS: [usize; 7] = [3, 10, 30, 100, 300, 1000, 3000];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("horizons must be non-empty and strictly increasing, got {0:?}")]
    Horizons(Vec<usize>),
    #[error("repetitions must be at least 1")]
    Repetitions,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Limits(#[from] fleetup_core::ExactError),
    #[error(transparent)]
    Hyper(#[from] fleetup_core::MlError),
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchPlan {
    /// Case-1 scenario id (1..=8).
    pub scenario: usize,
    pub horizons: Vec<usize>,
    pub exact: BnbLimits,
    pub ml: MlHyperparams,
    pub repetitions: usize,
}

impl Default for BenchPlan {
    /// Scenario 7 on the default ladder with 2 GB / 10 minute caps. The
    /// gradient solver gets a reduced budget so that one rung at T = 3000
    /// stays within seconds.
    fn default() -> Self {
        Self {
            scenario: 7,
            horizons: DEFAULT_HORIZONS.to_vec(),
            exact: BnbLimits {
                max_seconds: 600.0,
                max_memory_bytes: 2 << 30,
                ..BnbLimits::default()
            },
            ml: MlHyperparams {
                iterations: 2_000,
                patience: 200,
                restarts: 4,
                time_limit: Some(600.0),
                ..MlHyperparams::default()
            },
            repetitions: 1,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.horizons.is_empty() || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenchError::Horizons(self.horizons.clone()));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Repetitions);
        }
        case1(self.scenario)?;
        self.exact.validate()?;
        self.ml.validate()?;
        Ok(())
    }

    /// The scenario run at `horizon`.
    pub fn scenario_at(&self, horizon: usize) -> Result<ScenarioConfig, BenchError> {
        Ok(scale_horizon(&case1(self.scenario)?, horizon)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Exact,
    Ml,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Exact => "exact",
            Solver::Ml => "ml",
        })
    }
}

/// Resource that stopped a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    Time,
    Memory,
    /// Not run because the same solver already failed on a shorter horizon.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub horizon: usize,
    pub solver: Solver,
    pub repetition: usize,
    pub status: SolveStatus,
    /// Solve time; `None` for skipped rungs.
    pub seconds: Option<f64>,
    pub objective: Option<f64>,
    /// Gradient solver only, against the exact optimum of the same rung.
    pub discrepancy_percent: Option<f64>,
    pub limit: Option<Limit>,
}

impl BenchRow {
    pub fn is_dnf(&self) -> bool {
        self.limit.is_some()
    }

    pub fn finished(&self) -> bool {
        self.status.has_solution()
    }
}

fn limit_of(status: SolveStatus) -> Option<Limit> {
    match status {
        SolveStatus::Timeout => Some(Limit::Time),
        SolveStatus::MemoryLimit => Some(Limit::Memory),
        _ => None,
    }
}

fn exact_row(cfg: &ScenarioConfig, limits: &BnbLimits, horizon: usize, repetition: usize) -> BenchRow {
    let start = Instant::now();
    let outcome = solve_bnb(cfg, limits);
    let seconds = start.elapsed().as_secs_f64();
    let (status, objective) = match outcome {
        Ok(r) => (r.status, r.status.has_solution().then_some(r.objective)),
        Err(_) => (SolveStatus::Infeasible, None),
    };
    BenchRow {
        horizon,
        solver: Solver::Exact,
        repetition,
        status,
        seconds: Some(seconds),
        objective,
        discrepancy_percent: None,
        limit: limit_of(status),
    }
}

fn ml_row(cfg: &ScenarioConfig, hyper: &MlHyperparams, horizon: usize, repetition: usize) -> BenchRow {
    let start = Instant::now();
    let outcome = optimize(cfg, hyper);
    let seconds = start.elapsed().as_secs_f64();
    let (status, objective) = match outcome {
        Ok(r) => (r.status, r.status.has_solution().then_some(r.objective)),
        Err(_) => (SolveStatus::Infeasible, None),
    };
    BenchRow {
        horizon,
        solver: Solver::Ml,
        repetition,
        status,
        seconds: Some(seconds),
        objective,
        discrepancy_percent: None,
        limit: limit_of(status),
    }
}

fn skipped(horizon: usize, solver: Solver, repetition: usize, status: SolveStatus) -> BenchRow {
    BenchRow {
        horizon,
        solver,
        repetition,
        status,
        seconds: None,
        objective: None,
        discrepancy_percent: None,
        limit: Some(Limit::Skipped),
    }
}

/// Run the plan. Solver failures become rows; only an invalid plan is an error.
pub fn run_scaling(plan: &BenchPlan) -> Result<Vec<BenchRow>, BenchError> {
    run_scaling_with(plan, |_| {})
}

/// [`run_scaling`], calling `progress` as each row is produced.
pub fn run_scaling_with(plan: &BenchPlan, mut progress: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>, BenchError> {
    plan.validate()?;
    let mut rows = Vec::new();
    let mut failed: [Option<SolveStatus>; 2] = [None, None];
    for &horizon in &plan.horizons {
        let cfg = plan.scenario_at(horizon)?;
        let first = rows.len();
        for solver in [Solver::Exact, Solver::Ml] {
            let slot = solver as usize;
            for repetition in 0..plan.repetitions {
                let row = match failed[slot] {
                    Some(status) => skipped(horizon, solver, repetition, status),
                    None => match solver {
                        Solver::Exact => exact_row(&cfg, &plan.exact, horizon, repetition),
                        Solver::Ml => ml_row(&cfg, &plan.ml, horizon, repetition),
                    },
                };
                rows.push(row);
            }
            if let Some(dnf) = rows[rows.len() - plan.repetitions..].iter().find(|r| r.is_dnf()) {
                failed[slot] = Some(dnf.status);
            }
        }
        let reference = rows[first..]
            .iter()
            .find(|r| r.solver == Solver::Exact && r.status == SolveStatus::Optimal)
            .and_then(|r| r.objective);
        for row in &mut rows[first..] {
            if row.solver == Solver::Ml {
                row.discrepancy_percent = match (row.objective, reference) {
                    (Some(obj), Some(best)) => discrepancy(obj, best).ok(),
                    _ => None,
                };
            }
            progress(row);
        }
        if failed.iter().all(Option::is_some) {
            break;
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    horizon: usize,
    solver: Solver,
    repetition: usize,
    status: &'a str,
    seconds: Option<f64>,
    objective: Option<f64>,
    discrepancy_percent: Option<f64>,
    limit: Option<Limit>,
}

/// Results as CSV with a header row.
pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        let status = r.status.to_string();
        w.serialize(CsvRow {
            horizon: r.horizon,
            solver: r.solver,
            repetition: r.repetition,
            status: &status,
            seconds: r.seconds,
            objective: r.objective,
            discrepancy_percent: r.discrepancy_percent,
            limit: r.limit,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Median solve time per completed horizon, in ladder order. A horizon counts
/// as completed only if every repetition finished.
pub fn median_times(rows: &[BenchRow], solver: Solver) -> Vec<(usize, f64)> {
    let mut horizons: Vec<usize> = rows.iter().filter(|r| r.solver == solver).map(|r| r.horizon).collect();
    horizons.dedup();
    horizons
        .into_iter()
        .filter_map(|h| {
            let runs: Vec<&BenchRow> = rows.iter().filter(|r| r.solver == solver && r.horizon == h).collect();
            if runs.is_empty() || !runs.iter().all(|r| r.finished()) {
                return None;
            }
            let mut t: Vec<f64> = runs.iter().filter_map(|r| r.seconds).collect();
            t.sort_by(f64::total_cmp);
            let n = t.len();
            let median = if n % 2 == 1 {
                t[n / 2]
            } else {
                0.5 * (t[n / 2 - 1] + t[n / 2])
            };
            Some((h, median))
        })
        .collect()
}

/// Least-squares slope of `ln(seconds)` against `ln(horizon)`.
pub fn loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(h, t)| ((h as f64).ln(), t.max(1e-9).ln()))
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Shape of a finished scaling run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub exact_times: Vec<(usize, f64)>,
    pub ml_times: Vec<(usize, f64)>,
    /// Time ratios between successive completed exact rungs.
    pub exact_ratios: Vec<f64>,
    /// Whether the ratios over the last three completed exact rungs increase.
    pub exact_ratio_increasing: bool,
    pub first_exact_dnf: Option<usize>,
    /// Completed gradient-solver rungs beyond the first exact DNF.
    pub ml_rungs_beyond: usize,
    /// Log-log slope over the largest completed decade of the gradient solver.
    pub ml_slope: Option<f64>,
}

pub fn trend(rows: &[BenchRow]) -> Trend {
    let exact_times = median_times(rows, Solver::Exact);
    let ml_times = median_times(rows, Solver::Ml);
    let exact_ratios: Vec<f64> = exact_times.windows(2).map(|w| w[1].1 / w[0].1.max(1e-9)).collect();
    let last = &exact_ratios[exact_ratios.len().saturating_sub(2)..];
    let exact_ratio_increasing = last.len() == 2 && last[1] > last[0];
    let first_exact_dnf = rows
        .iter()
        .filter(|r| r.solver == Solver::Exact && r.is_dnf())
        .map(|r| r.horizon)
        .min();
    let ml_rungs_beyond = match first_exact_dnf {
        Some(h) => ml_times.iter().filter(|p| p.0 > h).count(),
        None => 0,
    };
    Trend {
        ml_slope: largest_decade_slope(&ml_times),
        exact_times,
        ml_times,
        exact_ratios,
        exact_ratio_increasing,
        first_exact_dnf,
        ml_rungs_beyond,
    }
}

/// Slope over the completed rungs spanning the last factor of ten (or more)
/// in horizon; all rungs when the ladder covers less than a decade.
fn largest_decade_slope(points: &[(usize, f64)]) -> Option<f64> {
    let &(top, _) = points.last()?;
    let start = points.iter().rposition(|&(h, _)| h * 10 <= top).unwrap_or(0);
    loglog_slope(&points[start..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(horizon: usize, solver: Solver, status: SolveStatus, seconds: f64) -> BenchRow {
        BenchRow {
            horizon,
            solver,
            repetition: 0,
            status,
            seconds: Some(seconds),
            objective: None,
            discrepancy_percent: None,
            limit: limit_of(status),
        }
    }

    #[test]
    fn plan_validation() {
        assert!(BenchPlan::default().validate().is_ok());
        let bad = BenchPlan {
            horizons: vec![3, 3],
            ..BenchPlan::default()
        };
        assert!(matches!(bad.validate(), Err(BenchError::Horizons(_))));
        let bad = BenchPlan {
            repetitions: 0,
            ..BenchPlan::default()
        };
        assert!(matches!(bad.validate(), Err(BenchError::Repetitions)));
        let bad = BenchPlan {
            scenario: 9,
            ..BenchPlan::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(usize, f64)> = [10, 100, 1000]
            .iter()
            .map(|&h| (h, (h as f64).powi(2) * 1e-3))
            .collect();
        assert!((loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
    }

    #[test]
    fn decade_slope_uses_the_top_decade() {
        // flat below 30, linear from 30 to 3000
        let pts = vec![(3, 1.0), (10, 1.0), (30, 1.0), (300, 10.0), (3000, 100.0)];
        assert!((largest_decade_slope(&pts).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trend_of_synthetic_rows() {
        let rows = vec![
            row(3, Solver::Exact, SolveStatus::Optimal, 0.01),
            row(3, Solver::Ml, SolveStatus::Feasible, 0.1),
            row(10, Solver::Exact, SolveStatus::Optimal, 0.1),
            row(10, Solver::Ml, SolveStatus::Feasible, 0.3),
            row(30, Solver::Exact, SolveStatus::Optimal, 5.0),
            row(30, Solver::Ml, SolveStatus::Feasible, 1.0),
            row(100, Solver::Exact, SolveStatus::MemoryLimit, 0.1),
            row(100, Solver::Ml, SolveStatus::Feasible, 3.0),
            row(300, Solver::Ml, SolveStatus::Feasible, 9.0),
        ];
        let t = trend(&rows);
        assert_eq!(t.exact_times.len(), 3);
        assert_eq!(t.exact_ratios.len(), 2);
        assert!(t.exact_ratio_increasing);
        assert_eq!(t.first_exact_dnf, Some(100));
        assert_eq!(t.ml_rungs_beyond, 1);
        assert!(t.ml_slope.unwrap() < 1.1);
    }

    #[test]
    fn median_of_even_repetitions() {
        let mut rows = vec![
            row(3, Solver::Ml, SolveStatus::Feasible, 1.0),
            row(3, Solver::Ml, SolveStatus::Feasible, 3.0),
        ];
        rows[1].repetition = 1;
        assert_eq!(median_times(&rows, Solver::Ml), vec![(3, 2.0)]);
        rows[1].status = SolveStatus::Timeout;
        assert!(median_times(&rows, Solver::Ml).is_empty());
    }

    #[test]
    fn csv_header_and_dnf_row() {
        let rows = vec![
            row(3, Solver::Exact, SolveStatus::Optimal, 0.5),
            skipped(10, Solver::Exact, 0, SolveStatus::MemoryLimit),
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "horizon,solver,repetition,status,seconds,objective,discrepancy_percent,limit"
        );
        assert_eq!(lines[1], "3,exact,0,optimal,0.5,,,");
        assert_eq!(lines[2], "10,exact,0,memory_limit,,,,skipped");
    }
}
