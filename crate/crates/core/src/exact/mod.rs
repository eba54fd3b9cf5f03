//! Exact optimization: LP relaxation, branch-and-bound, and an exhaustive
//! enumerator over the deployment tensor for tiny instances.

pub mod simplex;

pub use simplex::{basis_bytes, solve_lp, solve_lp_bounded, LpOutcome, LpSolution};

use crate::ip::{build_instance, Constraint, ConstraintKind, IpError, IpInstance, Relation, VarKind};
use crate::ml::derive_plan;
use crate::model::{validate_scenario, DecisionPlan, ModelError, ScenarioConfig, SolveResult, SolveStatus, Telemetry};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

/// Distance from an integer below which a value counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Default candidate cap for [`brute_force`].
pub const BRUTE_FORCE_CAP: u64 = 10_000_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExactError {
    #[error("search space of {candidates:.3e} candidates exceeds the cap of {cap}")]
    SearchSpace { candidates: f64, cap: u64 },
    #[error("invalid limit {name} = {value}")]
    Limit { name: &'static str, value: f64 },
    #[error(transparent)]
    Ip(#[from] IpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbLimits {
    pub max_seconds: f64,
    pub max_nodes: u64,
    pub max_memory_bytes: u64,
    pub gap_abs: f64,
    pub gap_rel: f64,
}

impl Default for BnbLimits {
    fn default() -> Self {
        Self {
            max_seconds: 600.0,
            max_nodes: 1_000_000,
            max_memory_bytes: 2 << 30,
            gap_abs: 1e-6,
            gap_rel: 1e-9,
        }
    }
}

impl BnbLimits {
    pub fn validate(&self) -> Result<(), ExactError> {
        let checks = [
            ("max_seconds", self.max_seconds),
            ("max_nodes", self.max_nodes as f64),
            ("max_memory_bytes", self.max_memory_bytes as f64),
            ("gap_abs", self.gap_abs),
            ("gap_rel", self.gap_rel),
        ];
        for (name, value) in checks {
            if !(value > 0.0) {
                return Err(ExactError::Limit { name, value });
            }
        }
        Ok(())
    }

    fn tolerance(&self, incumbent: f64) -> f64 {
        self.gap_abs.max(self.gap_rel * incumbent.abs())
    }
}

/// What [`solve_bnb_observed`] reports for every node whose LP was solved.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub depth: usize,
    pub lp_bound: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    seq: u64,
    depth: usize,
    /// `(variable, lower, upper)` tightenings relative to the root box.
    changes: Vec<(usize, f64, f64)>,
}

impl Node {
    fn footprint(&self) -> u64 {
        96 + 24 * self.changes.len() as u64
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: the lowest bound, then the oldest node, comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn is_integral(x: f64) -> bool {
    (x - x.round()).abs() <= INTEGRALITY_TOL
}

/// Branching priority: purchase indicators, then deployments, then the rest.
fn priority(kind: VarKind) -> u8 {
    match kind {
        VarKind::Indicator => 0,
        VarKind::Deployed => 1,
        _ => 2,
    }
}

/// Most fractional variable of the most urgent priority class present,
/// lowest index on ties.
fn branching_variable(x: &[f64], classes: &[u8]) -> Option<usize> {
    let mut best: Option<(usize, u8, f64)> = None;
    for (k, &v) in x.iter().enumerate() {
        if is_integral(v) {
            continue;
        }
        let score = 0.5 - (v - v.floor() - 0.5).abs();
        let better = match best {
            None => true,
            Some((_, c, s)) => classes[k] < c || (classes[k] == c && score > s + 1e-12),
        };
        if better {
            best = Some((k, classes[k], score));
        }
    }
    best.map(|(k, _, _)| k)
}

/// Mixed-integer rounding cuts of the capacity rows, one per distinct
/// coefficient used as divisor. For `sum a x >= b` over nonnegative integers
/// and divisor `q`, with `g = ceil(a/q) - a/q` and `f = ceil(b/q) - b/q`:
///
/// ```text
/// sum (ceil(a/q) - max(0, g - f) / (1 - f)) x >= ceil(b/q)
/// ```
pub fn capacity_cuts(instance: &IpInstance) -> Vec<Constraint> {
    let mut cuts = Vec::new();
    for row in &instance.constraints {
        if !matches!(row.kind, ConstraintKind::Capacity | ConstraintKind::ExtCapacity) || row.rhs <= 0.0 {
            continue;
        }
        let mut divisors: Vec<f64> = row.coeffs.iter().map(|&(_, a)| a).filter(|&a| a > 0.0).collect();
        divisors.sort_by(f64::total_cmp);
        divisors.dedup();
        for q in divisors {
            let beta = row.rhs / q;
            let f = beta.ceil() - beta;
            if f < 1e-9 {
                continue;
            }
            let coeffs = row
                .coeffs
                .iter()
                .map(|&(k, a)| {
                    let alpha = a / q;
                    let g = alpha.ceil() - alpha;
                    (k, alpha.ceil() - (g - f).max(0.0) / (1.0 - f))
                })
                .filter(|&(_, c)| c.abs() > 1e-12)
                .collect();
            cuts.push(Constraint {
                kind: row.kind,
                index: row.index.clone(),
                coeffs,
                relation: Relation::Ge,
                rhs: beta.ceil(),
            });
        }
    }
    cuts
}

/// Floor the deployment part of an LP point, top up capacity with the cheapest
/// new assets, and rebuild the rest of the plan from the derivation maps.
fn rounding_heuristic(cfg: &ScenarioConfig, inst: &IpInstance, x: &[f64]) -> Option<Vec<f64>> {
    let l = &inst.layout;
    let (t, n) = (cfg.horizon, cfg.max_age);
    let mut v = Tensor::from_fn(&cfg.plan_dims(), |k| {
        if k[1] < n && k[2] < t {
            x[l.toj(VarKind::Deployed, k[0], k[1], k[2])].max(0.0).floor()
        } else {
            0.0
        }
    });
    for j in 0..t {
        let mut have = 0.0;
        for o in 0..cfg.types {
            for i in 0..n {
                have += cfg.usage.get(&[o, i, j]) * v[[o, i, j]];
            }
        }
        let short = cfg.demand.get(&[j]) - have;
        if short <= 0.0 {
            continue;
        }
        let per_unit = |o: usize| cfg.purchase_price.get(&[o, 0, j]) / cfg.usage.get(&[o, 0, j]);
        let best = (0..cfg.types)
            .filter(|&o| cfg.usage.get(&[o, 0, j]) > 0.0)
            .min_by(|&a, &b| per_unit(a).total_cmp(&per_unit(b)))?;
        v[[best, 0, j]] += (short / cfg.usage.get(&[best, 0, j])).ceil();
    }
    let y = inst.plan_entries(&derive_plan(cfg, &v));
    inst.audit(&y).is_empty().then_some(y)
}

fn status_result(
    inst: &IpInstance,
    cfg: &ScenarioConfig,
    best: Option<(f64, Vec<f64>)>,
    status: SolveStatus,
    telemetry: Telemetry,
) -> SolveResult {
    match best {
        Some((objective, x)) => SolveResult {
            plan: inst.vector_to_plan(&x),
            objective,
            audit: inst.audit(&x),
            status,
            telemetry,
        },
        None => SolveResult {
            plan: DecisionPlan::zeros(cfg),
            objective: f64::NAN,
            status: match status {
                SolveStatus::Optimal | SolveStatus::Feasible => SolveStatus::Infeasible,
                other => other,
            },
            audit: Vec::new(),
            telemetry,
        },
    }
}

/// Branch-and-bound over `config`'s integer program.
pub fn solve_bnb(config: &ScenarioConfig, limits: &BnbLimits) -> Result<SolveResult, ExactError> {
    solve_bnb_observed(config, limits, |_| {})
}

/// [`solve_bnb`], calling `observe` after each node LP.
pub fn solve_bnb_observed(
    config: &ScenarioConfig,
    limits: &BnbLimits,
    mut observe: impl FnMut(&NodeRecord),
) -> Result<SolveResult, ExactError> {
    limits.validate()?;
    let cfg = validate_scenario(config)?;
    let inst = build_instance(&cfg)?;
    let mut relaxed = inst.clone();
    relaxed.constraints.extend(capacity_cuts(&inst));
    let started = Instant::now();
    let deadline = started.checked_add(Duration::from_secs_f64(limits.max_seconds.min(1e9)));
    let root_lower: Vec<f64> = inst.variables.iter().map(|v| v.lower).collect();
    let root_upper: Vec<f64> = inst.variables.iter().map(|v| v.upper).collect();
    let classes: Vec<u8> = inst.variables.iter().map(|v| priority(v.kind)).collect();
    let nnz: usize = relaxed.constraints.iter().map(|c| c.coeffs.len()).sum();
    let fixed_bytes =
        basis_bytes(relaxed.num_rows()) + 16 * (nnz + inst.num_vars()) as u64 + 64 * inst.num_vars() as u64;

    let mut telemetry = Telemetry::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut open_bytes = 0u64;
    let mut peak = fixed_bytes;
    let mut seq = 0u64;
    let (mut nodes, mut lp_iterations, mut incumbents, mut heuristic_hits) = (0u64, 0u64, 0u64, 0u64);
    let mut dive = Some(Node {
        bound: f64::NEG_INFINITY,
        seq,
        depth: 0,
        changes: Vec::new(),
    });
    let mut status = SolveStatus::Optimal;
    let mut lower = root_lower.clone();
    let mut upper = root_upper.clone();

    loop {
        let node = match dive.take() {
            Some(node) => node,
            None => match heap.pop() {
                Some(node) => {
                    open_bytes -= node.footprint();
                    node
                }
                None => break,
            },
        };
        let cutoff = best.as_ref().map(|(b, _)| b - limits.tolerance(*b));
        if cutoff.is_some_and(|c| node.bound >= c) {
            if dive.is_none() && heap.peek().is_none_or(|n: &Node| n.bound >= node.bound) {
                // best-bound order: every open node is dominated as well
                heap.clear();
                open_bytes = 0;
            }
            continue;
        }
        if nodes >= limits.max_nodes {
            status = if best.is_some() {
                SolveStatus::Feasible
            } else {
                SolveStatus::Timeout
            };
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            status = SolveStatus::Timeout;
            break;
        }
        let memory = fixed_bytes + open_bytes + node.footprint();
        peak = peak.max(memory);
        if memory > limits.max_memory_bytes {
            status = SolveStatus::MemoryLimit;
            break;
        }
        nodes += 1;
        lower.copy_from_slice(&root_lower);
        upper.copy_from_slice(&root_upper);
        for &(k, lo, up) in &node.changes {
            lower[k] = lower[k].max(lo);
            upper[k] = upper[k].min(up);
        }
        let lp = match solve_lp_bounded(&relaxed, &lower, &upper, deadline) {
            LpOutcome::Optimal(lp) => lp,
            LpOutcome::Infeasible | LpOutcome::Unbounded => continue,
            LpOutcome::Timeout => {
                status = SolveStatus::Timeout;
                break;
            }
        };
        lp_iterations += lp.iterations;
        observe(&NodeRecord {
            depth: node.depth,
            lp_bound: lp.objective,
            lower: lower.clone(),
            upper: upper.clone(),
        });
        if cutoff.is_some_and(|c| lp.objective >= c) {
            continue;
        }
        let offer = |x: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
            let obj = inst.objective(&x);
            if best.as_ref().is_none_or(|(b, _)| obj < b - limits.tolerance(*b)) {
                *best = Some((obj, x));
                return true;
            }
            false
        };
        if let Some(y) = rounding_heuristic(&cfg, &inst, &lp.x) {
            if offer(y, &mut best) {
                heuristic_hits += 1;
                incumbents += 1;
            }
        }
        let Some(k) = branching_variable(&lp.x, &classes) else {
            let x: Vec<f64> = lp.x.iter().map(|v| v.round()).collect();
            if inst.audit(&x).is_empty() && offer(x, &mut best) {
                incumbents += 1;
            }
            continue;
        };
        let value = lp.x[k];
        let mut child = |lo: f64, up: f64| {
            seq += 1;
            let mut changes = node.changes.clone();
            changes.push((k, lo, up));
            Node {
                bound: lp.objective,
                seq,
                depth: node.depth + 1,
                changes,
            }
        };
        let down = child(f64::NEG_INFINITY, value.floor());
        let up = child(value.ceil(), f64::INFINITY);
        let (first, second) = if value - value.floor() < 0.5 {
            (down, up)
        } else {
            (up, down)
        };
        open_bytes += second.footprint();
        heap.push(second);
        dive = Some(first);
    }

    telemetry.count("nodes", nodes);
    telemetry.count("lp_iterations", lp_iterations);
    telemetry.count("incumbent_updates", incumbents);
    telemetry.count("heuristic_incumbents", heuristic_hits);
    telemetry.count("open_nodes", heap.len() as u64 + u64::from(dive.is_some()));
    telemetry.count("peak_memory_bytes", peak);
    telemetry.time("wall_seconds", started.elapsed().as_secs_f64());
    Ok(status_result(&inst, &cfg, best, status, telemetry))
}

/// Number of deployment tensors [`brute_force`] would enumerate.
pub fn brute_force_space(config: &ScenarioConfig) -> Result<f64, ExactError> {
    let cfg = validate_scenario(config)?;
    let m = cfg.big_m() as f64;
    let free = cfg.types * cfg.max_age * cfg.horizon;
    Ok((m + 1.0).powi(free as i32))
}

/// Exhaustive search with the default candidate cap.
pub fn brute_force(config: &ScenarioConfig) -> Result<SolveResult, ExactError> {
    brute_force_capped(config, BRUTE_FORCE_CAP)
}

/// Enumerate every deployment tensor in `[0, M]` (ages below the maximum,
/// periods before the horizon), derive the remaining decisions, and keep the
/// cheapest feasible plan.
pub fn brute_force_capped(config: &ScenarioConfig, cap: u64) -> Result<SolveResult, ExactError> {
    let candidates = brute_force_space(config)?;
    if candidates > cap as f64 {
        return Err(ExactError::SearchSpace { candidates, cap });
    }
    let started = Instant::now();
    let cfg = validate_scenario(config)?;
    let inst = build_instance(&cfg)?;
    let m = cfg.big_m() as f64;
    let (t, n) = (cfg.horizon, cfg.max_age);
    let free: Vec<[usize; 3]> = (0..cfg.types)
        .flat_map(|o| (0..n).flat_map(move |i| (0..t).map(move |j| [o, i, j])))
        .collect();
    let mut v = Tensor::filled(&cfg.plan_dims(), 0.0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let (mut visited, mut feasible) = (0u64, 0u64);
    loop {
        visited += 1;
        let x = inst.plan_entries(&derive_plan(&cfg, &v));
        if inst.audit(&x).is_empty() {
            feasible += 1;
            let obj = inst.objective(&x);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, x));
            }
        }
        // odometer increment over the free entries
        let mut pos = 0;
        while pos < free.len() {
            let k = free[pos];
            if v[k] < m {
                v[k] += 1.0;
                break;
            }
            v[k] = 0.0;
            pos += 1;
        }
        if pos == free.len() {
            break;
        }
    }
    let mut telemetry = Telemetry::default();
    telemetry.count("candidates", visited);
    telemetry.count("feasible_candidates", feasible);
    telemetry.time("wall_seconds", started.elapsed().as_secs_f64());
    Ok(status_result(&inst, &cfg, best, SolveStatus::Optimal, telemetry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ip::{Constraint, ConstraintKind, Relation, Variable};
    use crate::model::ModelKind;
    use crate::scenarios::case1;

    fn lp_instance(rows: Vec<Constraint>, vars: Vec<Variable>) -> IpInstance {
        let layout = crate::ip::Layout {
            types: 0,
            ages: 0,
            periods: 0,
            extended: false,
        };
        IpInstance {
            name: "lp".into(),
            kind: ModelKind::Base,
            layout,
            big_m: 0.0,
            variables: vars,
            constraints: rows,
        }
    }

    fn var(upper: f64, cost: f64) -> Variable {
        Variable {
            kind: VarKind::Deployed,
            index: vec![0, 0, 0],
            lower: 0.0,
            upper,
            cost,
            domain: ConstraintKind::AssetDomain,
        }
    }

    fn row(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Constraint {
        Constraint {
            kind: ConstraintKind::Capacity,
            index: vec![],
            coeffs,
            relation,
            rhs,
        }
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let inst = lp_instance(
            vec![
                row(vec![(0, 1.0)], Relation::Ge, 1.0),
                row(vec![(0, 1.0)], Relation::Le, 0.0),
            ],
            vec![var(10.0, 1.0)],
        );
        assert_eq!(solve_lp(&inst, None), LpOutcome::Infeasible);
    }

    #[test]
    fn small_lp_optimum() {
        // min -x - 2y  s.t.  x + y <= 4, x + 3y <= 6, 0 <= x, y <= 3
        let inst = lp_instance(
            vec![
                row(vec![(0, 1.0), (1, 1.0)], Relation::Le, 4.0),
                row(vec![(0, 1.0), (1, 3.0)], Relation::Le, 6.0),
            ],
            vec![var(3.0, -1.0), var(3.0, -2.0)],
        );
        let LpOutcome::Optimal(sol) = solve_lp(&inst, None) else {
            panic!("expected optimum")
        };
        assert!((sol.objective - -5.0).abs() < 1e-9, "{sol:?}");
        assert!((sol.x[0] - 3.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_bound_flip() {
        // min x - y  s.t.  x + y = 5,  x, y in [0, 3]
        let inst = lp_instance(
            vec![row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 5.0)],
            vec![var(3.0, 1.0), var(3.0, -1.0)],
        );
        let LpOutcome::Optimal(sol) = solve_lp(&inst, None) else {
            panic!("expected optimum")
        };
        assert!((sol.objective - -1.0).abs() < 1e-9);
    }

    #[test]
    fn case1_relaxation_is_a_lower_bound() {
        let inst = build_instance(&case1(1).unwrap()).unwrap();
        let LpOutcome::Optimal(sol) = solve_lp(&inst, None) else {
            panic!("expected optimum")
        };
        // the published optimum is rounded to whole currency units
        assert!(sol.objective <= -5_274_135.5, "{}", sol.objective);
    }

    #[test]
    fn branching_picks_most_fractional_lowest_index() {
        let same = [1u8; 4];
        assert_eq!(branching_variable(&[1.0, 2.3, 0.5, 4.5], &same), Some(2));
        assert_eq!(branching_variable(&[1.0, 2.0], &same), None);
        assert_eq!(branching_variable(&[0.7, 0.3], &same), Some(0));
        assert_eq!(branching_variable(&[0.5, 0.9], &[1, 0]), Some(1));
    }

    #[test]
    fn salvage_only_instance() {
        let mut cfg = ScenarioConfig::zeros("salvage", ModelKind::Base, 1, 1, 1);
        cfg.usage = Tensor::filled(&[1, 2, 1], 1.0);
        cfg.initial_fleet[[0, 1]] = 2.0;
        cfg.salvage = Tensor::filled(&[1, 2, 2], 7.0);
        cfg.purchase_price = Tensor::filled(&[1, 2, 2], 10.0);
        let bf = brute_force(&cfg).unwrap();
        assert_eq!(bf.status, SolveStatus::Optimal);
        assert_eq!(bf.objective, -14.0);
        assert_eq!(bf.plan.sold[[0, 1, 0]], 2);
        let bnb = solve_bnb(&cfg, &BnbLimits::default()).unwrap();
        assert_eq!(bnb.objective, -14.0);
    }

    #[test]
    fn brute_force_cap_is_reported() {
        let err = brute_force(&case1(1).unwrap()).unwrap_err();
        assert!(matches!(err, ExactError::SearchSpace { .. }), "{err}");
    }

    #[test]
    fn limits_must_be_positive() {
        let limits = BnbLimits {
            max_nodes: 0,
            ..Default::default()
        };
        assert!(solve_bnb(&case1(1).unwrap(), &limits).is_err());
    }

    #[test]
    fn node_order_prefers_low_bounds_then_age() {
        let mk = |bound, seq| Node {
            bound,
            seq,
            depth: 0,
            changes: vec![],
        };
        let mut heap = BinaryHeap::from(vec![mk(3.0, 0), mk(1.0, 2), mk(1.0, 1)]);
        assert_eq!(heap.pop().unwrap().seq, 1);
        assert_eq!(heap.pop().unwrap().seq, 2);
        assert_eq!(heap.pop().unwrap().seq, 0);
    }
}
