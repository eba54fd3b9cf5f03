use std::collections::BTreeMap;
use std::fmt::Write as _;

use fleetup_core::{
    total_cost, CostReport, DecisionPlan, ModelKind, ScenarioConfig, SolveResult, SolveStatus, ViolationRecord,
};
use serde::Serialize;

/// Machine-readable result of one solve. Wall-clock timings are left out so
/// that repeated runs produce identical bytes.
#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub scenario: String,
    pub kind: ModelKind,
    pub solver: String,
    pub seed: Option<u64>,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub costs: Option<CostReport>,
    pub audit: Vec<ViolationRecord>,
    pub counters: BTreeMap<String, u64>,
    pub plan: DecisionPlan,
}

impl SolveReport {
    pub fn new(cfg: &ScenarioConfig, solver: &str, seed: Option<u64>, result: &SolveResult) -> anyhow::Result<Self> {
        let solved = result.status.has_solution();
        Ok(Self {
            scenario: cfg.name.clone(),
            kind: cfg.kind,
            solver: solver.to_string(),
            seed,
            status: result.status,
            objective: solved.then_some(result.objective),
            costs: if solved {
                Some(total_cost(cfg, &result.plan)?)
            } else {
                None
            },
            audit: result.audit.clone(),
            counters: result.telemetry.counters.clone(),
            plan: result.plan.clone(),
        })
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Deployment counts with one row per age and one column per period, for
/// each asset type.
pub fn deployment_table(cfg: &ScenarioConfig, plan: &DecisionPlan) -> String {
    let mut out = String::new();
    for o in 0..cfg.types {
        if cfg.types > 1 {
            let _ = writeln!(out, "type {o}");
        }
        let _ = write!(out, "{:>5}", "age");
        for j in 0..cfg.horizon {
            let _ = write!(out, "{:>6}", format!("j={j}"));
        }
        out.push('\n');
        for i in 0..cfg.max_age {
            let _ = write!(out, "{i:>5}");
            for j in 0..cfg.horizon {
                let _ = write!(out, "{:>6}", plan.deployed[[o, i, j]]);
            }
            out.push('\n');
        }
    }
    out
}

/// Deployment counts as CSV: `type,age,period,deployed`.
pub fn deployment_csv(cfg: &ScenarioConfig, plan: &DecisionPlan) -> String {
    let mut out = String::from("type,age,period,deployed\n");
    for o in 0..cfg.types {
        for i in 0..cfg.max_age {
            for j in 0..cfg.horizon {
                let _ = writeln!(out, "{o},{i},{j},{}", plan.deployed[[o, i, j]]);
            }
        }
    }
    out
}

pub fn solve_text(report: &SolveReport, cfg: &ScenarioConfig, seconds: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} ({}), solver {}: {}",
        report.scenario, report.kind, report.solver, report.status
    );
    if let Some(obj) = report.objective {
        let _ = writeln!(out, "objective {obj:.2}");
    }
    let _ = writeln!(out, "time {seconds:.3} s");
    if let Some(costs) = &report.costs {
        out.push_str(&costs.to_string());
    }
    if report.status.has_solution() {
        out.push_str("deployment by age and period\n");
        out.push_str(&deployment_table(cfg, &report.plan));
    }
    for v in &report.audit {
        let _ = writeln!(out, "violation: {v}");
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub scenario: String,
    pub exact_status: SolveStatus,
    pub exact_objective: Option<f64>,
    pub ml_status: SolveStatus,
    pub ml_objective: Option<f64>,
    pub discrepancy_percent: Option<f64>,
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = format!("{:<12}{:>18}{:>18}{:>14}\n", "scenario", "exact", "ml", "discrepancy");
    let num = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.1}"));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12}{:>18}{:>18}{:>14}",
            r.scenario,
            num(r.exact_objective),
            num(r.ml_objective),
            r.discrepancy_percent.map_or("-".to_string(), |d| format!("{d:.2}%"))
        );
    }
    out
}

pub fn compare_csv(rows: &[CompareRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
