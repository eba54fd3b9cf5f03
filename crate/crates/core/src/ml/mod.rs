//! Gradient solver over the relaxed deployment tensor.
//!
//! Each iteration projects `v` onto the nonnegative orthant (with the last
//! age and the horizon period pinned to zero), derives the full plan from
//! it, and builds the loss
//!
//! ```text
//! loss = cost(derive(v)) + penalty(derive(floor(v)))
//! ```
//!
//! where `floor` is a straight-through estimator. Adam updates `v`; every
//! rounded plan with zero penalty is a feasible solution and the cheapest one
//! seen is returned.

pub mod derive;
pub mod tape;

pub use derive::{derive, derive_base, derive_extended};
pub use tape::{KinkProbe, Ops, Plain, Probed, Tape, Var};

use crate::ip::{build_instance, IpError, IpInstance, Relation};
use crate::model::{validate_scenario, DecisionPlan, ModelError, ScenarioConfig, SolveResult, SolveStatus, Telemetry};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Iterations between penalty-weight growth steps.
pub const GROWTH_EPOCH: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlHyperparams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Penalty weight `c`. `None` uses `penalty_scale` times the largest
    /// absolute objective coefficient.
    pub penalty_weight: Option<f64>,
    pub penalty_scale: f64,
    /// Factor applied to `c` every [`GROWTH_EPOCH`] iterations.
    pub penalty_growth: f64,
    /// Divide each penalized row by its largest coefficient so that one unit
    /// of violation is one asset, whatever the row's physical unit.
    pub normalize_rows: bool,
    pub iterations: usize,
    pub patience: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Wall-clock budget in seconds for the whole run.
    pub time_limit: Option<f64>,
}

impl Default for MlHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            penalty_weight: None,
            penalty_scale: 1.0,
            penalty_growth: 1.0,
            normalize_rows: true,
            iterations: 20_000,
            patience: 2_000,
            restarts: 256,
            seed: 0,
            time_limit: None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MlError {
    #[error("invalid hyperparameter {name} = {value}")]
    Hyperparameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Ip(#[from] IpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl MlHyperparams {
    pub fn validate(&self) -> Result<(), MlError> {
        let bad = |name, value| Err(MlError::Hyperparameter { name, value });
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", self.learning_rate);
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", self.beta1);
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", self.beta2);
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", self.epsilon);
        }
        if let Some(c) = self.penalty_weight {
            if !(c > 0.0) {
                return bad("penalty_weight", c);
            }
        }
        if !(self.penalty_scale > 0.0) {
            return bad("penalty_scale", self.penalty_scale);
        }
        if !(self.penalty_growth >= 1.0) {
            return bad("penalty_growth", self.penalty_growth);
        }
        if self.restarts == 0 {
            return bad("restarts", 0.0);
        }
        Ok(())
    }
}

/// `max(0, v)` with the last age and the horizon period set to zero.
pub fn project(v_raw: &Tensor<f64>, config: &ScenarioConfig) -> Result<Tensor<f64>, ModelError> {
    let dims = config.plan_dims();
    if v_raw.dims() != dims {
        return Err(ModelError::PlanShape {
            expected: dims.to_vec(),
            found: v_raw.dims().to_vec(),
        });
    }
    Ok(Tensor::from_fn(&dims, |k| {
        if k[1] == config.max_age || k[2] == config.horizon {
            0.0
        } else {
            v_raw.get(k).max(0.0)
        }
    }))
}

/// Forward value of the straight-through rounding.
pub fn ste_round(v: &Tensor<f64>) -> Tensor<f64> {
    v.map(f64::floor)
}

/// Plan derived from a real-valued deployment tensor.
pub fn derive_plan(config: &ScenarioConfig, v: &Tensor<f64>) -> DecisionPlan<f64> {
    derive(&mut Plain, config, v)
}

/// Plan derived from an integer deployment tensor.
pub fn derive_counts(config: &ScenarioConfig, v: &Tensor<i64>) -> DecisionPlan<i64> {
    derive_plan(config, &v.map(|x| x as f64)).to_counts()
}

/// Penalized rows and bounds of an instance, with their weights.
#[derive(Debug, Clone)]
struct PenaltySet {
    rows: Vec<(Vec<(usize, f64)>, f64, Relation, f64)>,
    upper: Vec<(usize, f64)>,
}

impl PenaltySet {
    fn new(inst: &IpInstance, normalize: bool) -> Self {
        let rows = inst
            .constraints
            .iter()
            .filter(|c| !c.kind.is_flow_balance())
            .map(|c| {
                let scale = c.coeffs.iter().fold(0.0f64, |a, &(_, w)| a.max(w.abs()));
                let weight = if normalize && scale > 0.0 { 1.0 / scale } else { 1.0 };
                (c.coeffs.clone(), c.rhs, c.relation, weight)
            })
            .collect();
        let upper = inst.variables.iter().enumerate().map(|(k, v)| (k, v.upper)).collect();
        Self { rows, upper }
    }

    fn eval<O: Ops>(&self, ops: &mut O, x: &[O::V], c: f64) -> O::V {
        let mut terms = Vec::with_capacity(self.rows.len() + self.upper.len());
        let mut buf = Vec::new();
        for (coeffs, rhs, rel, weight) in &self.rows {
            buf.clear();
            buf.extend(coeffs.iter().map(|&(k, a)| (x[k], a)));
            let z = ops.lin(&buf, -rhs);
            let r = match rel {
                Relation::Le => ops.relu(z),
                Relation::Ge => {
                    let neg = ops.lin(&[(z, -1.0)], 0.0);
                    ops.relu(neg)
                }
                Relation::Eq => ops.abs(z),
            };
            terms.push((r, c * weight));
        }
        for &(k, ub) in &self.upper {
            if ops.value(x[k]) > ub {
                let z = ops.lin(&[(x[k], 1.0)], -ub);
                let r = ops.relu(z);
                terms.push((r, c));
            }
        }
        ops.lin(&terms, 0.0)
    }
}

/// Penalty of an integer plan: `c * relu` for inequality shortfalls, `c * |z|`
/// for equality residuals and upper-bound excess, over every row that is not
/// a flow balance.
pub fn penalty(plan: &DecisionPlan, config: &ScenarioConfig, c: f64) -> Result<f64, MlError> {
    plan.check_shape(config)?;
    let inst = build_instance(config)?;
    let set = PenaltySet::new(&inst, false);
    let x = inst.plan_to_vector(plan);
    Ok(set.eval(&mut Plain, &x, c))
}

/// Loss value, its parts, and the gradient with respect to `v_raw`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub cost: f64,
    pub penalty: f64,
    pub gradient: Tensor<f64>,
}

struct Problem {
    cfg: ScenarioConfig,
    inst: IpInstance,
    pen: PenaltySet,
    costs: Vec<f64>,
}

struct Parts<V> {
    total: V,
    cost: V,
    penalty: V,
    rounded: Vec<V>,
}

impl Problem {
    fn new(config: &ScenarioConfig, normalize: bool) -> Result<Self, MlError> {
        let cfg = validate_scenario(config)?;
        let inst = build_instance(&cfg)?;
        let pen = PenaltySet::new(&inst, normalize);
        let costs = inst.variables.iter().map(|v| v.cost).collect();
        Ok(Self { cfg, inst, pen, costs })
    }

    fn weight(&self, hyper: &MlHyperparams) -> f64 {
        hyper
            .penalty_weight
            .unwrap_or_else(|| hyper.penalty_scale * self.costs.iter().fold(0.0f64, |a, &c| a.max(c.abs())).max(1.0))
    }

    fn fractional<O: Ops>(&self, ops: &mut O, params: &Tensor<O::V>) -> (Tensor<O::V>, O::V) {
        let (n, t) = (self.cfg.max_age, self.cfg.horizon);
        let zero = ops.constant(0.0);
        let projected = Tensor::from_fn(&self.cfg.plan_dims(), |k| {
            if k[1] == n || k[2] == t {
                zero
            } else {
                ops.project(params.get(k))
            }
        });
        let frac = derive(ops, &self.cfg, &projected);
        let x = self.inst.plan_entries(&frac);
        let terms: Vec<(O::V, f64)> = x
            .iter()
            .zip(&self.costs)
            .filter(|(_, &c)| c != 0.0)
            .map(|(&v, &c)| (v, c))
            .collect();
        let cost = ops.lin(&terms, 0.0);
        (projected, cost)
    }

    fn graph<O: Ops>(&self, ops: &mut O, params: &Tensor<O::V>, c: f64) -> Parts<O::V> {
        let (projected, cost) = self.fractional(ops, params);
        let mut rounded_v = projected.clone();
        for slot in rounded_v.as_mut_slice() {
            *slot = ops.floor_ste(*slot);
        }
        let rounded_plan = derive(ops, &self.cfg, &rounded_v);
        let rounded = self.inst.plan_entries(&rounded_plan);
        let penalty = self.pen.eval(ops, &rounded, c);
        let total = ops.add(cost, penalty);
        Parts {
            total,
            cost,
            penalty,
            rounded,
        }
    }
}

fn record(tape: &mut Tape, params: &[f64], dims: &[usize]) -> Tensor<Var> {
    let vars: Vec<Var> = params.iter().map(|&x| tape.var(x)).collect();
    Tensor::from_vec(dims, vars).expect("parameter shape")
}

/// Loss at `v_raw` with gradient. Uses the penalty weight the optimizer
/// would use for `hyper`.
pub fn loss(v_raw: &Tensor<f64>, config: &ScenarioConfig, hyper: &MlHyperparams) -> Result<LossValue, MlError> {
    let prob = Problem::new(config, hyper.normalize_rows)?;
    project(v_raw, &prob.cfg)?;
    let c = prob.weight(hyper);
    let mut tape = Tape::new();
    let params = record(&mut tape, v_raw.as_slice(), v_raw.dims());
    let parts = prob.graph(&mut tape, &params, c);
    let adj = tape.gradient(parts.total);
    let gradient = params.map(|v| adj[Tape::index(v)]);
    Ok(LossValue {
        value: tape.value(parts.total),
        cost: tape.value(parts.cost),
        penalty: tape.value(parts.penalty),
        gradient,
    })
}

/// Cost of the plan derived from `project(v_raw)`, with its gradient. This is
/// the smooth part of [`loss`].
pub fn fractional_cost(v_raw: &Tensor<f64>, config: &ScenarioConfig) -> Result<(f64, Tensor<f64>), MlError> {
    let prob = Problem::new(config, true)?;
    project(v_raw, &prob.cfg)?;
    let mut tape = Tape::new();
    let params = record(&mut tape, v_raw.as_slice(), v_raw.dims());
    let (_, cost) = prob.fractional(&mut tape, &params);
    let adj = tape.gradient(cost);
    Ok((tape.value(cost), params.map(|v| adj[Tape::index(v)])))
}

/// Distance from `v_raw` to the nearest breakpoint of the fractional cost
/// path (projection, purchase/sale split, indicator clamp).
pub fn kink_distance(v_raw: &Tensor<f64>, config: &ScenarioConfig) -> Result<f64, MlError> {
    let prob = Problem::new(config, true)?;
    project(v_raw, &prob.cfg)?;
    let mut probe = KinkProbe::default();
    prob.fractional(&mut probe, &v_raw.map(KinkProbe::param));
    Ok(probe.nearest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, hyper: &MlHyperparams) {
    state.t += 1;
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for k in 0..params.len() {
        let g = grad[k];
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g;
        let mh = state.m[k] / c1;
        let vh = state.v[k] / c2;
        params[k] -= hyper.learning_rate * mh / (vh.sqrt() + hyper.epsilon);
    }
}

/// One row of the optional convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub restart: usize,
    pub iteration: usize,
    pub loss: f64,
    pub cost: f64,
    pub penalty: f64,
    pub best_objective: Option<f64>,
}

/// Initial fleet aged forward, topped up each period with new assets of the
/// type with the lowest price per unit of capacity.
pub fn heuristic_start(config: &ScenarioConfig) -> Tensor<f64> {
    let (t, n, types) = (config.horizon, config.max_age, config.types);
    let mut v = Tensor::filled(&config.plan_dims(), 0.0);
    for j in 0..t {
        for o in 0..types {
            for i in 1..n {
                v[[o, i, j]] = if j == 0 {
                    config.initial_fleet.get(&[o, i])
                } else {
                    v[[o, i - 1, j - 1]]
                };
            }
        }
        let mut have = 0.0;
        for o in 0..types {
            for i in 0..n {
                have += config.usage.get(&[o, i, j]) * v[[o, i, j]];
            }
        }
        let short = config.demand.get(&[j]) - have;
        if short > 0.0 {
            let best = (0..types)
                .filter(|&o| config.usage.get(&[o, 0, j]) > 0.0)
                .min_by(|&a, &b| {
                    let per = |o: usize| config.purchase_price.get(&[o, 0, j]) / config.usage.get(&[o, 0, j]);
                    per(a).total_cmp(&per(b))
                });
            if let Some(o) = best {
                v[[o, 0, j]] += (short / config.usage.get(&[o, 0, j])).ceil();
            }
        }
    }
    Tensor::from_fn(&config.plan_dims(), |k| {
        if k[1] < n && k[2] < t {
            v.get(k) + 0.5
        } else {
            0.0
        }
    })
}

fn random_start(config: &ScenarioConfig, big_m: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let (n, t) = (config.max_age, config.horizon);
    Tensor::from_fn(&config.plan_dims(), |k| {
        if k[1] < n && k[2] < t {
            rng.gen_range(0.0..=big_m)
        } else {
            0.0
        }
    })
}

pub fn optimize(config: &ScenarioConfig, hyper: &MlHyperparams) -> Result<SolveResult, MlError> {
    optimize_traced(config, hyper, None)
}

/// [`optimize`], appending one [`TraceRow`] per iteration to `trace`.
pub fn optimize_traced(
    config: &ScenarioConfig,
    hyper: &MlHyperparams,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<SolveResult, MlError> {
    hyper.validate()?;
    let started = Instant::now();
    let prob = Problem::new(config, hyper.normalize_rows)?;
    let cfg = &prob.cfg;
    let dims = cfg.plan_dims();
    let base_c = prob.weight(hyper);
    let big_m = prob.inst.big_m;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut tape = Tape::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut telemetry = Telemetry::default();
    let (mut iterations, mut feasible_hits, mut rejected) = (0u64, 0u64, 0u64);
    let mut best_restart = 0u64;
    let mut timed_out = false;
    'restarts: for restart in 0..hyper.restarts {
        let start = if restart == 0 {
            heuristic_start(cfg)
        } else {
            random_start(cfg, big_m, &mut rng)
        };
        let mut params = start.as_slice().to_vec();
        let mut adam = AdamState::new(params.len());
        let mut c = base_c;
        let mut best_loss = f64::INFINITY;
        let mut stale = 0usize;
        for it in 0..hyper.iterations {
            if let Some(limit) = hyper.time_limit {
                if it % 64 == 0 && started.elapsed().as_secs_f64() > limit {
                    timed_out = true;
                    break 'restarts;
                }
            }
            if it > 0 && it % GROWTH_EPOCH == 0 {
                c *= hyper.penalty_growth;
            }
            tape.clear();
            let vars = record(&mut tape, &params, &dims);
            let parts = prob.graph(&mut tape, &vars, c);
            iterations += 1;
            let (loss, pen) = (tape.value(parts.total), tape.value(parts.penalty));
            let mut improved = false;
            if pen == 0.0 {
                feasible_hits += 1;
                let x: Vec<f64> = parts.rounded.iter().map(|&v| tape.value(v)).collect();
                let obj = prob.inst.objective(&x);
                if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-9 * b.abs().max(1.0)) {
                    if prob.inst.audit(&x).is_empty() {
                        best = Some((obj, x));
                        best_restart = restart as u64;
                        improved = true;
                    } else {
                        rejected += 1;
                    }
                }
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TraceRow {
                    restart,
                    iteration: it,
                    loss,
                    cost: tape.value(parts.cost),
                    penalty: pen,
                    best_objective: best.as_ref().map(|b| b.0),
                });
            }
            if loss < best_loss - 1e-9 * best_loss.abs().max(1.0) {
                best_loss = loss;
                improved = true;
            }
            stale = if improved { 0 } else { stale + 1 };
            if stale >= hyper.patience {
                break;
            }
            let adj = tape.gradient(parts.total);
            let grad: Vec<f64> = vars.as_slice().iter().map(|&v| adj[Tape::index(v)]).collect();
            adam_step(&mut params, &grad, &mut adam, hyper);
            for (k, p) in params.iter_mut().enumerate() {
                let (i, j) = ((k / dims[2]) % dims[1], k % dims[2]);
                if *p < 0.0 || i == cfg.max_age || j == cfg.horizon {
                    *p = p.max(0.0) * f64::from(i != cfg.max_age && j != cfg.horizon);
                }
            }
        }
    }
    telemetry.count("iterations", iterations);
    telemetry.count("restarts", hyper.restarts as u64);
    telemetry.count("feasible_iterates", feasible_hits);
    telemetry.count("audit_rejections", rejected);
    telemetry.count("best_restart", best_restart);
    telemetry.time("wall_seconds", started.elapsed().as_secs_f64());
    Ok(match best {
        Some((obj, x)) => SolveResult {
            plan: prob.inst.vector_to_plan(&x),
            objective: obj,
            status: SolveStatus::Feasible,
            audit: Vec::new(),
            telemetry,
        },
        None => SolveResult {
            plan: DecisionPlan::zeros(cfg),
            objective: f64::NAN,
            status: if timed_out {
                SolveStatus::Timeout
            } else {
                SolveStatus::Infeasible
            },
            audit: Vec::new(),
            telemetry,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::scenarios::{case1, case2};

    #[test]
    fn projection_examples() {
        let cfg = case1(1).unwrap();
        let mut v = Tensor::filled(&cfg.plan_dims(), 1.5);
        v[[0, 3, 1]] = -2.3;
        v[[0, 10, 2]] = 4.1;
        let p = project(&v, &cfg).unwrap();
        assert_eq!(p[[0, 3, 1]], 0.0);
        assert_eq!(p[[0, 10, 2]], 0.0);
        assert_eq!(p[[0, 4, 3]], 0.0);
        assert_eq!(p[[0, 4, 2]], 1.5);
        assert_eq!(project(&p, &cfg).unwrap(), p);
        assert!(project(&Tensor::filled(&[1, 2, 2], 0.0), &cfg).is_err());
    }

    #[test]
    fn rounding_is_floor() {
        let v = Tensor::from_vec(&[3], vec![3.7, 5.0, 0.2]).unwrap();
        assert_eq!(ste_round(&v).as_slice(), &[3.0, 5.0, 0.0]);
    }

    fn small_base() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::zeros("s", ModelKind::Base, 3, 3, 1);
        cfg.initial_fleet[[0, 1]] = 3.0;
        cfg
    }

    #[test]
    fn derive_base_examples() {
        let cfg = small_base();
        let mut v = Tensor::filled(&cfg.plan_dims(), 0.0);
        v[[0, 1, 0]] = 5.0;
        let p = derive_plan(&cfg, &v);
        assert_eq!((p.purchased[[0, 1, 0]], p.sold[[0, 1, 0]]), (2.0, 0.0));
        v[[0, 1, 0]] = 3.0;
        let p = derive_plan(&cfg, &v);
        assert_eq!((p.purchased[[0, 1, 0]], p.sold[[0, 1, 0]]), (0.0, 0.0));
        v[[0, 1, 0]] = 4.0;
        v[[0, 2, 1]] = 1.0;
        let p = derive_plan(&cfg, &v);
        assert_eq!(p.sold[[0, 2, 1]], 3.0);
        assert_eq!(p.purchase_indicator[0], 1.0);
        assert_eq!(p.purchase_indicator[1], 0.0);
    }

    #[test]
    fn single_type_extended_matches_base() {
        let base = case1(3).unwrap();
        let mut ext = base.clone();
        ext.kind = ModelKind::Extended;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = project(&random_start(&base, 20.0, &mut rng), &base).unwrap();
        let pb = derive_plan(&base, &v);
        let pe = derive_plan(&ext, &v);
        assert_eq!(pb.purchased, pe.purchased);
        assert_eq!(pb.sold, pe.sold);
        assert_eq!(pb.purchase_indicator, pe.purchase_indicator);
        for t in [
            &pe.installed,
            &pe.removed,
            &pe.components_bought,
            &pe.components_sold,
            &pe.inventory,
        ] {
            assert!(t.as_slice().iter().all(|&x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn configuration_switch_buys_a_component() {
        let mut cfg = ScenarioConfig::zeros("sw", ModelKind::Extended, 2, 3, 2);
        cfg.initial_fleet[[0, 1]] = 1.0;
        let mut v = Tensor::filled(&cfg.plan_dims(), 0.0);
        v[[0, 1, 0]] = 1.0;
        v[[1, 2, 1]] = 1.0;
        let p = derive_plan(&cfg, &v);
        assert_eq!(p.removed[[0, 2, 1]], 1.0);
        assert_eq!(p.installed[[1, 2, 1]], 1.0);
        assert_eq!(p.components_bought[[1, 1]], 1.0);
        assert_eq!(p.inventory[[0, 1]], 1.0);
        // sales are booked on configuration 0, so the retiring asset swaps
        // back first: the stocked pack is reinstalled and its own is sold
        assert_eq!(p.sold[[0, 3, 2]], 1.0);
        assert_eq!(p.installed[[0, 3, 2]], 1.0);
        assert_eq!(p.removed[[1, 3, 2]], 1.0);
        assert_eq!(p.components_sold[[0, 2]], 0.0);
        assert_eq!(p.components_sold[[1, 2]], 1.0);
        assert_eq!(p.inventory[[0, 2]], 0.0);
    }

    #[test]
    fn penalty_examples() {
        let mut cfg = ScenarioConfig::zeros("p", ModelKind::Base, 1, 2, 1);
        cfg.usage = Tensor::filled(&[1, 3, 2], 50.0);
        cfg.demand = Tensor::filled(&[2], 150.0);
        let mut plan = DecisionPlan::<i64>::zeros(&cfg);
        plan.deployed[[0, 0, 0]] = 1;
        plan.purchased[[0, 0, 0]] = 1;
        plan.purchase_indicator[0] = 1;
        plan.sold[[0, 1, 1]] = 1;
        assert_eq!(penalty(&plan, &cfg, 1.0).unwrap(), 100.0);
        assert_eq!(penalty(&plan, &cfg, 2.0).unwrap(), 200.0);
        plan.deployed[[0, 0, 0]] = 3;
        plan.purchased[[0, 0, 0]] = 3;
        plan.sold[[0, 1, 1]] = 3;
        assert_eq!(penalty(&plan, &cfg, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let h = MlHyperparams::default();
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, &h);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_constant_gradient_steps_at_learning_rate() {
        let h = MlHyperparams::default();
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        for _ in 0..500 {
            let before = p.clone();
            adam_step(&mut p, &[3.0, -0.5], &mut st, &h);
            let step0 = before[0] - p[0];
            let step1 = before[1] - p[1];
            assert!((step0 - h.learning_rate).abs() < 1e-6);
            assert!((step1 + h.learning_rate).abs() < 1e-6);
        }
    }

    #[test]
    fn feasible_integer_point_has_loss_equal_to_cost() {
        let cfg = case1(1).unwrap();
        let mut v = Tensor::filled(&cfg.plan_dims(), 0.0);
        for j in 0..3 {
            v[[0, 9, j]] = 15.0;
        }
        let l = loss(&v, &cfg, &MlHyperparams::default()).unwrap();
        assert_eq!(l.penalty, 0.0);
        let plan = derive_counts(&cfg, &v.map(|x| x as i64));
        let cost = crate::objective::total_cost(&cfg, &plan).unwrap().total;
        assert!((l.value - cost).abs() < 1e-6 * cost.abs());
        assert!((cost - -5_274_136.0).abs() < 1.0, "{cost}");
    }

    #[test]
    fn kink_distance_of_a_single_deployment() {
        let cfg = ScenarioConfig::zeros("k", ModelKind::Base, 1, 1, 1);
        let mut v = Tensor::filled(&cfg.plan_dims(), 0.0);
        v[[0, 0, 0]] = 0.3;
        // projection, purchase and horizon sale all sit 0.3 from zero
        assert!((kink_distance(&v, &cfg).unwrap() - 0.3).abs() < 1e-12);
        v[[0, 0, 0]] = 0.9;
        v[[0, 1, 0]] = -5.0;
        assert!((kink_distance(&v, &cfg).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hyperparameters_are_checked() {
        let h = MlHyperparams {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(h.validate().is_err());
        let h = MlHyperparams {
            beta2: 1.0,
            ..Default::default()
        };
        assert!(h.validate().is_err());
    }

    #[test]
    fn heuristic_start_covers_demand() {
        let cfg = case2();
        let v = heuristic_start(&cfg).map(f64::floor);
        let plan = derive_counts(&cfg, &v.map(|x| x as i64));
        let audit = crate::ip::check_feasibility(&cfg, &plan).unwrap();
        assert!(
            audit
                .iter()
                .all(|r| r.constraint != crate::ip::ConstraintKind::ExtCapacity),
            "{audit:?}"
        );
    }
}
