use fleetup_core::ml::{derive_plan, project};
use fleetup_core::scenarios::{case1, case2, tiny_random};
use fleetup_core::{build_instance, ModelKind, ScenarioConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn configs(kind: ModelKind) -> Vec<ScenarioConfig> {
    let mut out: Vec<ScenarioConfig> = match kind {
        ModelKind::Base => (1..=8).map(|id| case1(id).unwrap()).collect(),
        ModelKind::Extended => vec![case2()],
    };
    out.extend((0..8).map(|seed| tiny_random(kind, 500 + seed)));
    out
}

/// Largest flow-balance residual over `count` random projected tensors.
fn worst_residual(kind: ModelKind, count: usize, integral: bool, seed: u64) -> f64 {
    let configs = configs(kind);
    let instances: Vec<_> = configs.iter().map(|c| build_instance(c).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut rows = 0;
    for n in 0..count {
        let k = n % configs.len();
        let (cfg, inst) = (&configs[k], &instances[k]);
        let top = cfg.big_m() as f64 + 2.0;
        let raw = Tensor::from_fn(&cfg.plan_dims(), |_| {
            let x = rng.gen_range(-2.0..top);
            if integral {
                x.round()
            } else {
                x
            }
        });
        let v = project(&raw, cfg).unwrap();
        let x = inst.plan_entries(&derive_plan(cfg, &v));
        for c in inst.constraints.iter().filter(|c| c.kind.is_flow_balance()) {
            let r = c.relation.residual(c.lhs(&x), c.rhs);
            worst = worst.max(r / c.rhs.abs().max(1.0));
            rows += 1;
        }
    }
    assert!(rows > count, "no flow-balance rows checked");
    worst
}

#[test]
fn integer_tensors_satisfy_flow_balance_exactly_base() {
    assert_eq!(worst_residual(ModelKind::Base, 1000, true, 1), 0.0);
}

#[test]
fn integer_tensors_satisfy_flow_balance_exactly_extended() {
    assert_eq!(worst_residual(ModelKind::Extended, 1000, true, 2), 0.0);
}

#[test]
fn real_tensors_satisfy_flow_balance_to_rounding_base() {
    assert!(worst_residual(ModelKind::Base, 1000, false, 3) <= 1e-9);
}

#[test]
fn real_tensors_satisfy_flow_balance_to_rounding_extended() {
    assert!(worst_residual(ModelKind::Extended, 1000, false, 4) <= 1e-9);
}
