//! Cost evaluation of a fixed plan.
//!
//! Purchases, fixed charges and salvage are discounted with `f^j`; O&M and
//! operation emissions with `f^(j+1)`. Purchase, O&M and their emission terms
//! run over deployment periods `j < T` and ages `i < N`; sales and all
//! component terms run over the full index ranges.

use crate::model::{CostReport, DecisionPlan, ModelError, ModelKind, Quantity, ScenarioConfig};

fn check(config: &ScenarioConfig, plan: &DecisionPlan<impl Quantity>) -> Result<(), ModelError> {
    plan.check_shape(config)
}

pub fn base_cost<T: Quantity>(config: &ScenarioConfig, plan: &DecisionPlan<T>) -> Result<CostReport, ModelError> {
    check(config, plan)?;
    let (t_max, n_max) = (config.horizon, config.max_age);
    let disc = config.discount_powers();
    let mut r = CostReport::default();
    for o in 0..config.types {
        for i in 0..=n_max {
            for j in 0..=t_max {
                let idx = [o, i, j];
                if j < t_max && i < n_max {
                    r.purchase += disc[j] * config.purchase_price.get(&idx) * plan.purchased[idx].to_f64();
                    r.om += disc[j + 1] * config.om_cost.get(&idx) * plan.deployed[idx].to_f64();
                }
                r.salvage += disc[j] * config.salvage.get(&idx) * plan.sold[idx].to_f64();
            }
        }
    }
    for j in 0..t_max {
        r.fixed += disc[j] * config.fixed_cost.get(&[j]) * plan.purchase_indicator[j].to_f64();
    }
    Ok(r.with_total())
}

pub fn environment_cost<T: Quantity>(
    config: &ScenarioConfig,
    plan: &DecisionPlan<T>,
) -> Result<CostReport, ModelError> {
    check(config, plan)?;
    let (t_max, n_max) = (config.horizon, config.max_age);
    let disc = config.discount_powers();
    let mut r = CostReport::default();
    for o in 0..config.types {
        for j in 0..=t_max {
            let price = config.co2_price.get(&[j]);
            let produce = config.emission_production.get(&[o, j]) * price;
            let operate = config.emission_operation.get(&[o, j]) * price;
            let dispose = config.emission_disposal.get(&[o, j]) * price;
            for i in 0..=n_max {
                let idx = [o, i, j];
                if j < t_max && i < n_max {
                    r.environment_production += disc[j] * produce * plan.purchased[idx].to_f64();
                    r.environment_operation += disc[j + 1] * operate * plan.deployed[idx].to_f64();
                }
                r.environment_disposal += disc[j] * dispose * plan.sold[idx].to_f64();
            }
        }
    }
    Ok(r.with_total())
}

pub fn upgrade_cost<T: Quantity>(config: &ScenarioConfig, plan: &DecisionPlan<T>) -> Result<CostReport, ModelError> {
    check(config, plan)?;
    let disc = config.discount_powers();
    let mut r = CostReport::default();
    for o in 0..config.types {
        for j in 0..=config.horizon {
            let tj = [o, j];
            r.upgrade_components += disc[j] * config.component_price.get(&tj) * plan.components_bought[tj].to_f64();
            r.component_resale += disc[j] * config.component_resale.get(&tj) * plan.components_sold[tj].to_f64();
            let install = config.install_cost.get(&tj);
            let remove = config.removal_cost.get(&tj);
            for i in 0..=config.max_age {
                let idx = [o, i, j];
                r.upgrade_labor +=
                    disc[j] * (install * plan.installed[idx].to_f64() + remove * plan.removed[idx].to_f64());
            }
        }
    }
    Ok(r.with_total())
}

/// Base cost, plus environment and upgrade costs for extended scenarios.
pub fn total_cost<T: Quantity>(config: &ScenarioConfig, plan: &DecisionPlan<T>) -> Result<CostReport, ModelError> {
    let base = base_cost(config, plan)?;
    match config.kind {
        ModelKind::Base => Ok(base),
        ModelKind::Extended => {
            let env = environment_cost(config, plan)?;
            let upg = upgrade_cost(config, plan)?;
            Ok((base + env + upg).with_total())
        }
    }
}

/// Absolute percentage error of `objective` against `reference`.
pub fn discrepancy(objective: f64, reference: f64) -> Result<f64, ModelError> {
    if reference == 0.0 {
        return Err(ModelError::ZeroReference);
    }
    Ok((objective - reference).abs() / reference.abs() * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn single_asset() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::zeros("one", ModelKind::Base, 1, 1, 1);
        cfg.initial_fleet[[0, 0]] = 1.0;
        cfg.salvage[[0, 1, 1]] = 100.0;
        cfg.usage = Tensor::filled(&[1, 2, 2], 7.0);
        cfg.om_cost = Tensor::filled(&[1, 2, 2], 3.0 * 7.0);
        cfg
    }

    #[test]
    fn empty_plan_costs_nothing() {
        let cfg = ScenarioConfig::zeros("z", ModelKind::Extended, 2, 2, 2);
        let r = total_cost(&cfg, &DecisionPlan::<i64>::zeros(&cfg)).unwrap();
        assert_eq!(r, CostReport::default());
    }

    #[test]
    fn single_asset_hand_evaluation() {
        let cfg = single_asset();
        let mut plan = DecisionPlan::<i64>::zeros(&cfg);
        plan.deployed[[0, 0, 0]] = 1;
        plan.sold[[0, 1, 1]] = 1;
        let r = base_cost(&cfg, &plan).unwrap();
        // f = 1: O&M c*u once, minus the salvage.
        assert_eq!(r.om, 21.0);
        assert_eq!(r.salvage, 100.0);
        assert_eq!(r.total, 21.0 - 100.0);
    }

    #[test]
    fn production_emission_cost() {
        let mut cfg = ScenarioConfig::zeros("e", ModelKind::Extended, 3, 10, 2);
        cfg.emission_production[[1, 0]] = 12.6;
        cfg.co2_price[0] = 45.0;
        let mut plan = DecisionPlan::<i64>::zeros(&cfg);
        plan.purchased[[1, 0, 0]] = 1;
        let r = environment_cost(&cfg, &plan).unwrap();
        assert!((r.environment_production - 567.0).abs() < 1e-9);
        assert!((r.total - 567.0).abs() < 1e-9);
    }

    #[test]
    fn operation_emission_cost() {
        let mut cfg = ScenarioConfig::zeros("e", ModelKind::Extended, 3, 10, 1);
        // 11,733 km at 5.12 g/km, stored as tons per deployment-period
        cfg.emission_operation[[0, 0]] = 11_733.0 * 5.12 / 1e6;
        cfg.co2_price[0] = 45.0;
        let mut plan = DecisionPlan::<i64>::zeros(&cfg);
        plan.deployed[[0, 2, 0]] = 1;
        let r = environment_cost(&cfg, &plan).unwrap();
        assert!((r.environment_operation - 0.06007296 * 45.0).abs() < 1e-9);
        assert!((r.environment_operation - 2.703).abs() < 1e-3);
    }

    #[test]
    fn battery_purchase_and_install() {
        let mut cfg = ScenarioConfig::zeros("u", ModelKind::Extended, 3, 10, 2);
        cfg.component_price[[0, 0]] = 12_000.0;
        cfg.install_cost[[0, 0]] = 30.0;
        let mut plan = DecisionPlan::<i64>::zeros(&cfg);
        plan.components_bought[[0, 0]] = 1;
        plan.installed[[0, 4, 0]] = 1;
        assert_eq!(upgrade_cost(&cfg, &plan).unwrap().total, 12_030.0);
    }

    #[test]
    fn remove_and_sell_component() {
        let mut cfg = ScenarioConfig::zeros("u", ModelKind::Extended, 3, 10, 2);
        cfg.removal_cost[[1, 0]] = 30.0;
        cfg.component_resale[[1, 0]] = 5_000.0;
        let mut plan = DecisionPlan::<i64>::zeros(&cfg);
        plan.removed[[1, 2, 0]] = 1;
        plan.components_sold[[1, 0]] = 1;
        assert_eq!(upgrade_cost(&cfg, &plan).unwrap().total, -4_970.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let cfg = ScenarioConfig::zeros("a", ModelKind::Base, 2, 2, 1);
        let other = ScenarioConfig::zeros("b", ModelKind::Base, 3, 2, 1);
        assert!(base_cost(&cfg, &DecisionPlan::<i64>::zeros(&other)).is_err());
    }

    #[test]
    fn discrepancy_reported_rows() {
        let d2 = discrepancy(-5_990_568.0, -6_029_618.0).unwrap();
        assert!((d2 - 0.6476).abs() < 1e-3, "{d2}");
        assert_eq!(format!("{d2:.2}"), "0.65");
        let d4 = discrepancy(-5_506_788.0, -5_565_468.0).unwrap();
        assert!((d4 - 1.0543).abs() < 1e-3, "{d4}");
        assert_eq!(format!("{d4:.2}"), "1.05");
        assert_eq!(discrepancy(42.0, 42.0).unwrap(), 0.0);
        assert_eq!(discrepancy(1.0, 0.0), Err(ModelError::ZeroReference));
    }

    fn random_extended(seed: u64) -> (ScenarioConfig, DecisionPlan<i64>, DecisionPlan<i64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = ScenarioConfig::zeros("r", ModelKind::Extended, 2, 2, 2);
        cfg.discount_rate = 0.07;
        for t in [
            &mut cfg.purchase_price,
            &mut cfg.om_cost,
            &mut cfg.salvage,
            &mut cfg.emission_production,
            &mut cfg.emission_operation,
            &mut cfg.emission_disposal,
            &mut cfg.co2_price,
            &mut cfg.component_price,
            &mut cfg.component_resale,
            &mut cfg.install_cost,
            &mut cfg.removal_cost,
        ] {
            for x in t.as_mut_slice() {
                *x = rng.gen_range(0.0..50.0);
            }
        }
        let mut plans = [DecisionPlan::<i64>::zeros(&cfg), DecisionPlan::<i64>::zeros(&cfg)];
        for p in plans.iter_mut() {
            for t in [
                &mut p.deployed,
                &mut p.purchased,
                &mut p.sold,
                &mut p.installed,
                &mut p.removed,
                &mut p.components_bought,
                &mut p.components_sold,
                &mut p.inventory,
            ] {
                for x in t.as_mut_slice() {
                    *x = rng.gen_range(0..4);
                }
            }
        }
        let [a, b] = plans;
        (cfg, a, b)
    }

    fn add_plans(a: &DecisionPlan<i64>, b: &DecisionPlan<i64>) -> DecisionPlan<i64> {
        let add = |x: &Tensor<i64>, y: &Tensor<i64>| {
            Tensor::from_vec(
                x.dims(),
                x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p + q).collect(),
            )
            .unwrap()
        };
        DecisionPlan {
            deployed: add(&a.deployed, &b.deployed),
            purchased: add(&a.purchased, &b.purchased),
            sold: add(&a.sold, &b.sold),
            purchase_indicator: add(&a.purchase_indicator, &b.purchase_indicator),
            installed: add(&a.installed, &b.installed),
            removed: add(&a.removed, &b.removed),
            components_bought: add(&a.components_bought, &b.components_bought),
            components_sold: add(&a.components_sold, &b.components_sold),
            inventory: add(&a.inventory, &b.inventory),
        }
    }

    proptest! {
        #[test]
        fn total_is_sum_of_parts(seed in any::<u64>()) {
            let (cfg, plan, _) = random_extended(seed);
            let whole = total_cost(&cfg, &plan).unwrap().total;
            let parts = base_cost(&cfg, &plan).unwrap().total
                + environment_cost(&cfg, &plan).unwrap().total
                + upgrade_cost(&cfg, &plan).unwrap().total;
            prop_assert!((whole - parts).abs() <= 1e-9 * whole.abs().max(1.0));
        }

        #[test]
        fn cost_is_linear_in_plan_without_fixed_charge(seed in any::<u64>()) {
            let (cfg, a, b) = random_extended(seed);
            let sum = add_plans(&a, &b);
            let lhs = total_cost(&cfg, &sum).unwrap().total;
            let rhs = total_cost(&cfg, &a).unwrap().total + total_cost(&cfg, &b).unwrap().total;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn discrepancy_is_scale_invariant(x in -1e7f64..1e7, y in 1.0f64..1e7, alpha in 1e-3f64..1e3) {
            let a = discrepancy(x, y).unwrap();
            let b = discrepancy(alpha * x, alpha * y).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn undiscounted_cost_ignores_period_order(perm_seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            // period-independent parameters, f = 1, one single-period block per period
            let mut cfg = ScenarioConfig::zeros("p", ModelKind::Base, 4, 2, 1);
            cfg.purchase_price = Tensor::from_vec(&[1, 3, 1], vec![9.0, 5.0, 2.0]).unwrap().expand(&[1, 3, 5]);
            cfg.salvage = cfg.purchase_price.clone();
            cfg.om_cost = Tensor::from_vec(&[1, 3, 1], vec![1.0, 2.0, 0.0]).unwrap().expand(&[1, 3, 5]);
            let blocks = [(2, 1, 0), (1, 0, 3), (0, 2, 1), (3, 3, 2)];
            let build = |order: &[usize]| {
                let mut plan = DecisionPlan::<i64>::zeros(&cfg);
                for (j, &k) in order.iter().enumerate() {
                    let (v, b, s) = blocks[k];
                    plan.deployed[[0, 1, j]] = v;
                    plan.purchased[[0, 0, j]] = b;
                    plan.sold[[0, 1, j]] = s;
                }
                total_cost(&cfg, &plan).unwrap().total
            };
            let mut order = vec![0, 1, 2, 3];
            let base = build(&order);
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            prop_assert!((build(&order) - base).abs() < 1e-9);
        }
    }
}
