use fleetup_core::ml::{fractional_cost, kink_distance};
use fleetup_core::scenarios::{case1, case2, tiny_random};
use fleetup_core::{total_cost, ModelKind, ScenarioConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const KINK_MARGIN: f64 = 1e-3;

/// Objective of the plan derived from `v_raw`, evaluated by the cost module.
fn reference_cost(cfg: &ScenarioConfig, v_raw: &Tensor<f64>) -> f64 {
    let v = fleetup_core::ml::project(v_raw, cfg).unwrap();
    let plan = fleetup_core::ml::derive_plan(cfg, &v);
    total_cost(cfg, &plan).unwrap().total
}

fn check(configs: &[ScenarioConfig], points: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    let mut tried = 0;
    while accepted < points {
        tried += 1;
        assert!(tried < 100 * points, "could not find enough non-kink points");
        let cfg = &configs[rng.gen_range(0..configs.len())];
        let top = cfg.big_m() as f64 + 1.0;
        let v = Tensor::from_fn(&cfg.plan_dims(), |_| rng.gen_range(-1.0..top));
        if kink_distance(&v, cfg).unwrap() < KINK_MARGIN {
            continue;
        }
        accepted += 1;
        let (_, grad) = fractional_cost(&v, cfg).unwrap();
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        for k in 0..v.len() {
            let mut up = v.clone();
            up.as_mut_slice()[k] += H;
            let mut down = v.clone();
            down.as_mut_slice()[k] -= H;
            let fd = (reference_cost(cfg, &up) - reference_cost(cfg, &down)) / (2.0 * H);
            err += (grad.as_slice()[k] - fd).powi(2);
            norm += fd * fd;
        }
        let rel = err.sqrt() / norm.sqrt().max(1.0);
        assert!(rel < 1e-5, "{}: relative gradient error {rel}", cfg.name);
    }
}

#[test]
fn base_gradient_matches_central_differences() {
    let mut configs: Vec<_> = (1..=8).map(|id| case1(id).unwrap()).collect();
    configs.extend((0..4).map(|s| tiny_random(ModelKind::Base, s)));
    check(&configs, 100, 11);
}

#[test]
fn extended_gradient_matches_central_differences() {
    let mut configs = vec![case2()];
    configs.extend((0..4).map(|s| tiny_random(ModelKind::Extended, 1000 + s)));
    check(&configs, 100, 12);
}

#[test]
fn fractional_cost_value_matches_cost_module() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for cfg in [case1(3).unwrap(), case2()] {
        for _ in 0..20 {
            let top = cfg.big_m() as f64;
            let v = Tensor::from_fn(&cfg.plan_dims(), |_| rng.gen_range(0.0..top));
            let (value, _) = fractional_cost(&v, &cfg).unwrap();
            let reference = reference_cost(&cfg, &v);
            assert!(
                (value - reference).abs() <= 1e-9 * reference.abs().max(1.0),
                "{}: {value} vs {reference}",
                cfg.name
            );
        }
    }
}
