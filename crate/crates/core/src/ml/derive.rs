//! Derivation of every decision tensor from the deployment tensor `v`.
//!
//! `prev[o][i][j]` is what would be deployed at `(o, i, j)` if nothing were
//! bought or sold: the initial fleet at `j = 0`, last period's deployment one
//! age younger afterwards, and nothing at age 0. Purchases and sales are the
//! positive and negative parts of `v - prev`.

use super::tape::Ops;
use crate::model::{DecisionPlan, ModelKind, ScenarioConfig};
use crate::tensor::Tensor;

fn prev<O: Ops>(ops: &mut O, cfg: &ScenarioConfig, v: &Tensor<O::V>, o: usize, i: usize, j: usize) -> O::V {
    if j == 0 {
        // age-0 stock has no balance row in the base model
        let h = if i == 0 && cfg.kind == ModelKind::Base {
            0.0
        } else {
            cfg.initial_fleet.get(&[o, i])
        };
        ops.constant(h)
    } else if i == 0 {
        ops.constant(0.0)
    } else {
        v[[o, i - 1, j - 1]]
    }
}

fn empty<O: Ops>(ops: &mut O, cfg: &ScenarioConfig) -> DecisionPlan<O::V> {
    let zero = ops.constant(0.0);
    let toj = cfg.plan_dims();
    let tj = [cfg.types, cfg.horizon + 1];
    DecisionPlan {
        deployed: Tensor::filled(&toj, zero),
        purchased: Tensor::filled(&toj, zero),
        sold: Tensor::filled(&toj, zero),
        purchase_indicator: Tensor::filled(&[cfg.horizon + 1], zero),
        installed: Tensor::filled(&toj, zero),
        removed: Tensor::filled(&toj, zero),
        components_bought: Tensor::filled(&tj, zero),
        components_sold: Tensor::filled(&tj, zero),
        inventory: Tensor::filled(&tj, zero),
    }
}

fn indicator<O: Ops>(ops: &mut O, cfg: &ScenarioConfig, plan: &mut DecisionPlan<O::V>) {
    for j in 0..cfg.horizon {
        let mut terms = Vec::with_capacity(cfg.types * cfg.max_age);
        for o in 0..cfg.types {
            for i in 0..cfg.max_age {
                terms.push((plan.purchased[[o, i, j]], 1.0));
            }
        }
        let total = ops.lin(&terms, 0.0);
        plan.purchase_indicator[j] = ops.min1(total);
    }
}

/// Base model: per-type purchases and sales, indicator `min(1, sum b)`.
pub fn derive_base<O: Ops>(ops: &mut O, cfg: &ScenarioConfig, v: &Tensor<O::V>) -> DecisionPlan<O::V> {
    let mut plan = empty(ops, cfg);
    plan.deployed = v.clone();
    for o in 0..cfg.types {
        for i in 0..=cfg.max_age {
            for j in 0..=cfg.horizon {
                let p = prev(ops, cfg, v, o, i, j);
                let x = v[[o, i, j]];
                let up = ops.lin(&[(x, 1.0), (p, -1.0)], 0.0);
                let down = ops.lin(&[(x, -1.0), (p, 1.0)], 0.0);
                plan.purchased[[o, i, j]] = ops.relu(up);
                plan.sold[[o, i, j]] = ops.relu(down);
            }
        }
    }
    indicator(ops, cfg, &mut plan);
    plan
}

/// Extended model: purchases and sales aggregated over configurations and
/// booked on configuration 0; the per-configuration remainder becomes
/// component installs and removals, which drive component purchases and
/// inventory. Leftover stock is sold at the horizon.
pub fn derive_extended<O: Ops>(ops: &mut O, cfg: &ScenarioConfig, v: &Tensor<O::V>) -> DecisionPlan<O::V> {
    let (t, n, types) = (cfg.horizon, cfg.max_age, cfg.types);
    let mut plan = empty(ops, cfg);
    plan.deployed = v.clone();
    let mut prevs = Tensor::filled(&cfg.plan_dims(), ops.constant(0.0));
    for o in 0..types {
        for i in 0..=n {
            for j in 0..=t {
                prevs[[o, i, j]] = prev(ops, cfg, v, o, i, j);
            }
        }
    }
    for i in 0..=n {
        for j in 0..=t {
            let mut terms = Vec::with_capacity(2 * types);
            for o in 0..types {
                terms.push((v[[o, i, j]], 1.0));
                terms.push((prevs[[o, i, j]], -1.0));
            }
            let net = ops.lin(&terms, 0.0);
            let neg = ops.lin(&[(net, -1.0)], 0.0);
            plan.purchased[[0, i, j]] = ops.relu(net);
            plan.sold[[0, i, j]] = ops.relu(neg);
        }
    }
    for o in 0..types {
        for i in 0..=n {
            for j in 0..=t {
                let idx = [o, i, j];
                let terms = [
                    (v[idx], 1.0),
                    (prevs[idx], -1.0),
                    (plan.sold[idx], 1.0),
                    (plan.purchased[idx], -1.0),
                ];
                let change = ops.lin(&terms, 0.0);
                let neg = ops.lin(&[(change, -1.0)], 0.0);
                plan.installed[idx] = ops.relu(change);
                plan.removed[idx] = ops.relu(neg);
            }
        }
    }
    for o in 0..types {
        let mut stock = ops.constant(cfg.component_stock.get(&[o]));
        for j in 0..=t {
            let mut terms = Vec::with_capacity(2 * (n + 1));
            for i in 0..=n {
                terms.push((plan.installed[[o, i, j]], 1.0));
                terms.push((plan.removed[[o, i, j]], -1.0));
            }
            let need = ops.lin(&terms, 0.0);
            let short = ops.lin(&[(need, 1.0), (stock, -1.0)], 0.0);
            let bought = ops.relu(short);
            plan.components_bought[[o, j]] = bought;
            if j < t {
                stock = ops.lin(&[(stock, 1.0), (bought, 1.0), (need, -1.0)], 0.0);
                plan.inventory[[o, j]] = stock;
            } else {
                let surplus = ops.lin(&[(short, -1.0)], 0.0);
                plan.components_sold[[o, j]] = ops.relu(surplus);
            }
        }
    }
    indicator(ops, cfg, &mut plan);
    plan
}

pub fn derive<O: Ops>(ops: &mut O, cfg: &ScenarioConfig, v: &Tensor<O::V>) -> DecisionPlan<O::V> {
    match cfg.kind {
        ModelKind::Base => derive_base(ops, cfg, v),
        ModelKind::Extended => derive_extended(ops, cfg, v),
    }
}
