//! Built-in case-study data and the scenario/plan file formats.
//!
//! Scenario files are TOML documents. Each table may be given at reduced rank
//! and is broadcast by [`validate_scenario`]:
//!
//! | table kind            | scalar | 1-D       | 2-D           | 3-D  |
//! |-----------------------|--------|-----------|---------------|------|
//! | type × age × period   | all    | by age    | age × period  | full |
//! | type × period         | all    | by period | full          |      |
//! | type × age            | all    | by age    | full          |      |
//! | period                | all    | full      |               |      |
//! | type                  | all    | full      |               |      |
//!
//! Nested arrays are ordered `[type][age][period]`, so a 2-D block reads with
//! ages as rows and periods as columns.

use crate::model::{validate_scenario, DecisionPlan, ModelError, ModelKind, ScenarioConfig};
use crate::tensor::Tensor;
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("case-1 scenario id must be in 1..=8, got {0}")]
    UnknownScenario(usize),
    #[error("new horizon {new} is shorter than current horizon {current}")]
    HorizonShrink { new: usize, current: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: schema_version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { path: String, found: u32 },
    #[error("{path}: table `{table}`: {message}")]
    Table {
        path: String,
        table: String,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// Case 1: single vehicle type, eight price/O&M/utilization combinations.

const CASE1_HORIZON: usize = 3;
const CASE1_MAX_AGE: usize = 10;
const CASE1_RATE: f64 = 0.05;

pub const CASE1_PRICE_LINEAR: [f64; 11] = [
    1_000_000.0,
    946_315.0,
    892_630.0,
    838_945.0,
    785_260.0,
    731_575.0,
    677_890.0,
    624_205.0,
    570_520.0,
    516_835.0,
    463_150.0,
];
pub const CASE1_PRICE_EMPIRICAL: [f64; 11] = [
    1_000_000.0,
    910_000.0,
    830_000.0,
    820_000.0,
    630_000.0,
    620_000.0,
    600_000.0,
    590_000.0,
    580_000.0,
    510_000.0,
    330_000.0,
];
/// O&M cost per km by age.
pub const CASE1_OM_CONSTANT: [f64; 11] = [3.0; 11];
pub const CASE1_OM_EMPIRICAL: [f64; 11] = [3.44, 3.53, 4.75, 3.75, 4.81, 3.82, 3.73, 4.91, 3.83, 5.02, 4.05];
/// Annual km per vehicle by age.
pub const CASE1_USAGE_CONSTANT: [f64; 11] = [
    20_000.0, 20_000.0, 20_000.0, 20_000.0, 20_000.0, 20_000.0, 20_000.0, 20_000.0, 20_000.0, 20_000.0, 0.0,
];
pub const CASE1_USAGE_PREFERENCE: [f64; 11] = [
    20_000.0, 20_000.0, 20_000.0, 20_000.0, 18_000.0, 16_000.0, 14_000.0, 12_000.0, 10_000.0, 8_000.0, 0.0,
];
const CASE1_DEMAND_CONSTANT: f64 = 300_000.0;
const CASE1_DEMAND_PREFERENCE: f64 = 228_000.0;
const CASE1_FLEET_AGES: [usize; 5] = [1, 3, 5, 7, 9];
const CASE1_PER_AGE: f64 = 3.0;

/// Which column of the price/O&M/utilization tables a case-1 scenario uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Case1Variant {
    pub empirical_price: bool,
    pub empirical_om: bool,
    pub preference_usage: bool,
}

impl Case1Variant {
    pub fn of(id: usize) -> Result<Self, ScenarioError> {
        if !(1..=8).contains(&id) {
            return Err(ScenarioError::UnknownScenario(id));
        }
        let k = id - 1;
        Ok(Self {
            empirical_price: k & 4 != 0,
            empirical_om: k & 2 != 0,
            preference_usage: k & 1 != 0,
        })
    }
}

pub fn case1(id: usize) -> Result<ScenarioConfig, ScenarioError> {
    let variant = Case1Variant::of(id)?;
    let price = if variant.empirical_price {
        CASE1_PRICE_EMPIRICAL
    } else {
        CASE1_PRICE_LINEAR
    };
    let per_km = if variant.empirical_om {
        CASE1_OM_EMPIRICAL
    } else {
        CASE1_OM_CONSTANT
    };
    let (usage, demand) = if variant.preference_usage {
        (CASE1_USAGE_PREFERENCE, CASE1_DEMAND_PREFERENCE)
    } else {
        (CASE1_USAGE_CONSTANT, CASE1_DEMAND_CONSTANT)
    };
    let mut cfg = ScenarioConfig::zeros(&format!("case1-{id}"), ModelKind::Base, CASE1_HORIZON, CASE1_MAX_AGE, 1);
    cfg.discount_rate = CASE1_RATE;
    let dims = cfg.plan_dims();
    cfg.purchase_price = Tensor::from_fn(&dims, |k| price[k[1]]);
    cfg.salvage = cfg.purchase_price.clone();
    cfg.usage = Tensor::from_fn(&dims, |k| usage[k[1]]);
    cfg.om_cost = Tensor::from_fn(&dims, |k| per_km[k[1]] * usage[k[1]]);
    cfg.demand = Tensor::filled(&[CASE1_HORIZON + 1], demand);
    for age in CASE1_FLEET_AGES {
        cfg.initial_fleet[[0, age]] = CASE1_PER_AGE;
    }
    Ok(validate_scenario(&cfg)?)
}

// ---------------------------------------------------------------------------
// Case 2: electric vehicle with an exchangeable battery pack.

pub const CASE2_VEHICLE_PRICE: f64 = 60_000.0;
/// Configuration 0 carries the 75 kWh pack, configuration 1 the 100 kWh pack.
pub const CASE2_BATTERY_PRICE: [f64; 2] = [12_000.0, 21_000.0];
pub const CASE2_RANGE_KM: [f64; 2] = [375.0, 500.0];
pub const CASE2_SWAP_LABOR: f64 = 30.0;
pub const CASE2_ANNUAL_MAINTENANCE: f64 = 576.0;
pub const CASE2_ANNUAL_KM: f64 = 11_733.0;
pub const CASE2_INITIAL_RANGE_DEMAND: f64 = 5_000.0;
pub const CASE2_RANGE_DEMAND_GROWTH: f64 = 200.0;
/// Component resale as a share of the component price.
pub const CASE2_COMPONENT_RESALE_SHARE: f64 = 0.5;

/// CO2 price per ton for 2024, 2025, 2026.
pub const CO2_PRICE: [f64; 3] = [45.0, 55.0, 65.0];
pub const ELECTRIC_PRODUCTION_T: [f64; 3] = [12.6, 12.5, 12.4];
pub const ELECTRIC_OPERATION_G_PER_KM: [f64; 3] = [5.12, 5.05, 4.97];
/// Diesel reference rows. Not used by the two-configuration model.
pub const DIESEL_PRODUCTION_T: [f64; 3] = [8.1, 8.1, 8.1];
pub const DIESEL_OPERATION_G_PER_KM: [f64; 3] = [134.68, 136.36, 138.04];

/// Remaining share of the purchase value at each age 0..=10: a quarter lost
/// in the first year, half left after three years, then five points a year.
pub fn case2_value_share(age: usize) -> f64 {
    match age {
        0 => 1.0,
        1 => 0.75,
        2 => 0.625,
        3 => 0.5,
        a => (0.5 - 0.05 * (a - 3) as f64).max(0.0),
    }
}

pub fn case2() -> ScenarioConfig {
    let horizon = 3;
    let max_age = 10;
    let mut cfg = ScenarioConfig::zeros("case2", ModelKind::Extended, horizon, max_age, 2);
    cfg.discount_rate = 0.05;
    let dims = cfg.plan_dims();
    let year = |j: usize| j.min(2);
    cfg.purchase_price = Tensor::from_fn(&dims, |k| {
        (CASE2_VEHICLE_PRICE + CASE2_BATTERY_PRICE[k[0]]) * case2_value_share(k[1])
    });
    cfg.salvage = cfg.purchase_price.clone();
    cfg.om_cost = Tensor::filled(&dims, CASE2_ANNUAL_MAINTENANCE);
    cfg.usage = Tensor::from_fn(&dims, |k| if k[1] < max_age { CASE2_RANGE_KM[k[0]] } else { 0.0 });
    cfg.demand = Tensor::from_fn(&[horizon + 1], |k| {
        CASE2_INITIAL_RANGE_DEMAND + CASE2_RANGE_DEMAND_GROWTH * k[0] as f64
    });
    let tj = [2, horizon + 1];
    cfg.emission_production = Tensor::from_fn(&tj, |k| ELECTRIC_PRODUCTION_T[year(k[1])]);
    cfg.emission_operation = Tensor::from_fn(&tj, |k| ELECTRIC_OPERATION_G_PER_KM[year(k[1])] * CASE2_ANNUAL_KM / 1e6);
    cfg.co2_price = Tensor::from_fn(&[horizon + 1], |k| CO2_PRICE[year(k[0])]);
    cfg.component_price = Tensor::from_fn(&tj, |k| CASE2_BATTERY_PRICE[k[0]]);
    cfg.component_resale = Tensor::from_fn(&tj, |k| CASE2_BATTERY_PRICE[k[0]] * CASE2_COMPONENT_RESALE_SHARE);
    cfg.install_cost = Tensor::filled(&tj, CASE2_SWAP_LABOR);
    cfg.removal_cost = Tensor::filled(&tj, CASE2_SWAP_LABOR);
    validate_scenario(&cfg).expect("case2 fixture is valid")
}

/// Lengthen the horizon by repeating each table's final-period values.
/// Discounting is switched off (`rate = 0`).
pub fn scale_horizon(config: &ScenarioConfig, new_horizon: usize) -> Result<ScenarioConfig, ScenarioError> {
    if new_horizon < config.horizon {
        return Err(ScenarioError::HorizonShrink {
            new: new_horizon,
            current: config.horizon,
        });
    }
    let cfg = validate_scenario(config)?;
    let last = cfg.horizon;
    let stretch = |t: &Tensor<f64>| {
        let mut dims = t.dims().to_vec();
        let axis = dims.len() - 1;
        dims[axis] = new_horizon + 1;
        Tensor::from_fn(&dims, |k| {
            let mut src = k.to_vec();
            src[axis] = src[axis].min(last);
            t.get(&src)
        })
    };
    let mut out = cfg.clone();
    out.horizon = new_horizon;
    out.discount_rate = 0.0;
    out.name = format!("{}-T{}", cfg.name, new_horizon);
    out.purchase_price = stretch(&cfg.purchase_price);
    out.fixed_cost = stretch(&cfg.fixed_cost);
    out.om_cost = stretch(&cfg.om_cost);
    out.salvage = stretch(&cfg.salvage);
    out.usage = stretch(&cfg.usage);
    out.demand = stretch(&cfg.demand);
    out.emission_production = stretch(&cfg.emission_production);
    out.emission_operation = stretch(&cfg.emission_operation);
    out.emission_disposal = stretch(&cfg.emission_disposal);
    out.co2_price = stretch(&cfg.co2_price);
    out.component_price = stretch(&cfg.component_price);
    out.component_resale = stretch(&cfg.component_resale);
    out.install_cost = stretch(&cfg.install_cost);
    out.removal_cost = stretch(&cfg.removal_cost);
    Ok(validate_scenario(&out)?)
}

/// Seeded tiny instance for oracle checks: horizon and maximum age at most 2,
/// every deployment box `[0, M]` with `M <= 4` (base) or `M <= 2` (extended,
/// two configurations).
///
/// Salvage never exceeds the cheapest purchase price, so no buy-and-sell
/// sequence pays. Extended instances are undiscounted with constant
/// component prices and resale below price, so the lazy component purchases
/// of the derivation maps are optimal too.
pub fn tiny_random(kind: ModelKind, seed: u64) -> ScenarioConfig {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let extended = kind == ModelKind::Extended;
    let horizon = rng.gen_range(1..=2);
    let max_age = rng.gen_range(1..=2);
    let types = if extended { 2 } else { 1 };
    let box_max = if extended { 2 } else { 4 };
    let mut cfg = ScenarioConfig::zeros(&format!("tiny-{seed}"), kind, horizon, max_age, types);
    let dims = cfg.plan_dims();
    let tj = [types, horizon + 1];
    if !extended && rng.gen_bool(0.5) {
        cfg.discount_rate = 0.1;
    }
    let usage: Vec<Vec<f64>> = (0..types)
        .map(|_| (0..max_age).map(|_| rng.gen_range(1..=2) as f64).collect())
        .collect();
    cfg.usage = Tensor::from_fn(&dims, |k| if k[1] < max_age { usage[k[0]][k[1]] } else { 0.0 });
    let min_usage = usage.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let mut held = 0;
    for i in 1..=max_age {
        if held < box_max - 1 && rng.gen_bool(0.4) {
            cfg.initial_fleet[[0, i]] = 1.0;
            held += 1;
        }
    }
    let spare = (box_max - held) as f64;
    cfg.demand = Tensor::from_fn(&[horizon + 1], |_| rng.gen_range(0..=(spare * min_usage) as u32) as f64);
    let per_period = !extended;
    // non-base configurations cost more new than a base asset plus a swap
    let first = rng.gen_range(6..=20) as f64;
    let base_price: Vec<f64> = (0..types).map(|o| first + 25.0 * o as f64).collect();
    let table = |rng: &mut rand_chacha::ChaCha8Rng, lo: u32, hi: u32| {
        let by_age: Vec<f64> = (0..(types * (max_age + 1) * (horizon + 1)))
            .map(|_| rng.gen_range(lo..=hi) as f64)
            .collect();
        Tensor::from_fn(&dims, |k| {
            let j = if per_period { k[2] } else { 0 };
            by_age[(k[0] * (max_age + 1) + k[1]) * (horizon + 1) + j]
        })
    };
    let discount = table(&mut rng, 0, 5);
    cfg.purchase_price = Tensor::from_fn(&dims, |k| base_price[k[0]] - discount.get(k));
    let cheapest = cfg
        .purchase_price
        .as_slice()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let share = table(&mut rng, 0, 4);
    cfg.salvage = share.map(|q| (cheapest * q / 4.0).floor());
    cfg.om_cost = table(&mut rng, 0, 4);
    cfg.fixed_cost = Tensor::from_fn(&[horizon + 1], |_| if rng.gen_bool(0.5) { 3.0 } else { 0.0 });
    if extended && rng.gen_bool(0.5) {
        cfg.co2_price = Tensor::filled(&[horizon + 1], 1.0);
        cfg.emission_production = Tensor::from_fn(&tj, |_| rng.gen_range(0..=2) as f64);
        cfg.emission_operation = Tensor::from_fn(&tj, |_| rng.gen_range(0..=2) as f64);
        cfg.emission_disposal = Tensor::from_fn(&tj, |_| rng.gen_range(0..=2) as f64);
    }
    if extended {
        let price: Vec<f64> = (0..types).map(|_| rng.gen_range(1..=5) as f64).collect();
        let resale: Vec<f64> = price.iter().map(|&p| rng.gen_range(0..=p as u32) as f64).collect();
        cfg.component_price = Tensor::from_fn(&tj, |k| price[k[0]]);
        cfg.component_resale = Tensor::from_fn(&tj, |k| resale[k[0]]);
        cfg.install_cost = Tensor::from_fn(&tj, |_| rng.gen_range(0..=2) as f64);
        cfg.removal_cost = Tensor::from_fn(&tj, |_| rng.gen_range(0..=2) as f64);
        cfg.component_stock = Tensor::from_fn(&[types], |_| rng.gen_range(0..=1) as f64);
    }
    validate_scenario(&cfg).expect("generated instance is valid")
}

// ---------------------------------------------------------------------------
// File format.

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawTable {
    Scalar(f64),
    D1(Vec<f64>),
    D2(Vec<Vec<f64>>),
    D3(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Axes {
    TypeAgePeriod,
    TypePeriod,
    TypeAge,
    Period,
    Type,
}

impl RawTable {
    /// Nested data plus the shape it was written with.
    fn flatten(&self) -> Result<(Vec<usize>, Vec<f64>), String> {
        fn rect<T>(rows: &[T], len: impl Fn(&T) -> usize) -> Result<usize, String> {
            let first = rows.first().map(&len).unwrap_or(0);
            if rows.iter().any(|r| len(r) != first) {
                return Err("rows have different lengths".into());
            }
            Ok(first)
        }
        match self {
            RawTable::Scalar(x) => Ok((vec![], vec![*x])),
            RawTable::D1(v) => Ok((vec![v.len()], v.clone())),
            RawTable::D2(v) => {
                let n = rect(v, |r| r.len())?;
                Ok((vec![v.len(), n], v.concat()))
            }
            RawTable::D3(v) => {
                let n = rect(v, |r| r.len())?;
                let m = rect(&v.iter().flatten().collect::<Vec<_>>(), |r| r.len())?;
                Ok((vec![v.len(), n, m], v.iter().flatten().flatten().copied().collect()))
            }
        }
    }

    fn into_tensor(&self, axes: Axes) -> Result<Tensor<f64>, String> {
        let (shape, data) = self.flatten()?;
        let dims: Vec<usize> = match (axes, shape.as_slice()) {
            (Axes::TypeAgePeriod, []) => vec![1, 1, 1],
            (Axes::TypeAgePeriod, [a]) => vec![1, *a, 1],
            (Axes::TypeAgePeriod, [a, p]) => vec![1, *a, *p],
            (Axes::TypeAgePeriod, [t, a, p]) => vec![*t, *a, *p],
            (Axes::TypePeriod, []) | (Axes::TypeAge, []) => vec![1, 1],
            (Axes::TypePeriod, [p]) | (Axes::TypeAge, [p]) => vec![1, *p],
            (Axes::TypePeriod, [t, p]) | (Axes::TypeAge, [t, p]) => vec![*t, *p],
            (Axes::Period, []) | (Axes::Type, []) => vec![1],
            (Axes::Period, [p]) | (Axes::Type, [p]) => vec![*p],
            (_, s) => return Err(format!("rank {} is not allowed here", s.len())),
        };
        Tensor::from_vec(&dims, data).ok_or_else(|| "table is empty or ragged".to_string())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTables {
    purchase_price: RawTable,
    #[serde(default)]
    fixed_cost: Option<RawTable>,
    om_cost: RawTable,
    salvage: RawTable,
    usage: RawTable,
    demand: RawTable,
    initial_fleet: RawTable,
    #[serde(default)]
    emission_production: Option<RawTable>,
    #[serde(default)]
    emission_operation: Option<RawTable>,
    #[serde(default)]
    emission_disposal: Option<RawTable>,
    #[serde(default)]
    co2_price: Option<RawTable>,
    #[serde(default)]
    component_stock: Option<RawTable>,
    #[serde(default)]
    component_price: Option<RawTable>,
    #[serde(default)]
    component_resale: Option<RawTable>,
    #[serde(default)]
    install_cost: Option<RawTable>,
    #[serde(default)]
    removal_cost: Option<RawTable>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    name: String,
    kind: ModelKind,
    horizon: usize,
    max_age: usize,
    types: usize,
    discount_rate: f64,
    tables: RawTables,
}

fn parse_error(path: &str, text: &str, err: toml::de::Error) -> ScenarioError {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map(|p| p + 1).unwrap_or(0) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    ScenarioError::Parse {
        path: path.to_string(),
        line,
        column,
        message: err.message().trim().to_string(),
    }
}

fn read(path: &Path) -> Result<(String, String), ScenarioError> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: label.clone(),
        source,
    })?;
    Ok((label, text))
}

/// Parse a scenario document. `label` is used in error messages.
pub fn parse_scenario(label: &str, text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| parse_error(label, text, e))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::SchemaVersion {
            path: label.to_string(),
            found: raw.schema_version,
        });
    }
    let mut cfg = ScenarioConfig::zeros(&raw.name, raw.kind, raw.horizon, raw.max_age, raw.types);
    cfg.discount_rate = raw.discount_rate;
    let t = raw.tables;
    let required: [(&str, &RawTable, Axes, &mut Tensor<f64>); 6] = [
        (
            "purchase_price",
            &t.purchase_price,
            Axes::TypeAgePeriod,
            &mut cfg.purchase_price,
        ),
        ("om_cost", &t.om_cost, Axes::TypeAgePeriod, &mut cfg.om_cost),
        ("salvage", &t.salvage, Axes::TypeAgePeriod, &mut cfg.salvage),
        ("usage", &t.usage, Axes::TypeAgePeriod, &mut cfg.usage),
        ("demand", &t.demand, Axes::Period, &mut cfg.demand),
        ("initial_fleet", &t.initial_fleet, Axes::TypeAge, &mut cfg.initial_fleet),
    ];
    for (name, raw_table, axes, slot) in required {
        *slot = raw_table.into_tensor(axes).map_err(|message| ScenarioError::Table {
            path: label.to_string(),
            table: name.to_string(),
            message,
        })?;
    }
    let optional: [(&str, &Option<RawTable>, Axes, &mut Tensor<f64>); 10] = [
        ("fixed_cost", &t.fixed_cost, Axes::Period, &mut cfg.fixed_cost),
        (
            "emission_production",
            &t.emission_production,
            Axes::TypePeriod,
            &mut cfg.emission_production,
        ),
        (
            "emission_operation",
            &t.emission_operation,
            Axes::TypePeriod,
            &mut cfg.emission_operation,
        ),
        (
            "emission_disposal",
            &t.emission_disposal,
            Axes::TypePeriod,
            &mut cfg.emission_disposal,
        ),
        ("co2_price", &t.co2_price, Axes::Period, &mut cfg.co2_price),
        (
            "component_stock",
            &t.component_stock,
            Axes::Type,
            &mut cfg.component_stock,
        ),
        (
            "component_price",
            &t.component_price,
            Axes::TypePeriod,
            &mut cfg.component_price,
        ),
        (
            "component_resale",
            &t.component_resale,
            Axes::TypePeriod,
            &mut cfg.component_resale,
        ),
        ("install_cost", &t.install_cost, Axes::TypePeriod, &mut cfg.install_cost),
        ("removal_cost", &t.removal_cost, Axes::TypePeriod, &mut cfg.removal_cost),
    ];
    for (name, raw_table, axes, slot) in optional {
        if let Some(raw_table) = raw_table {
            *slot = raw_table.into_tensor(axes).map_err(|message| ScenarioError::Table {
                path: label.to_string(),
                table: name.to_string(),
                message,
            })?;
        }
    }
    Ok(cfg)
}

/// Load a scenario file. Broadcast tables are kept at their written rank;
/// pass the result through [`validate_scenario`] to expand them.
pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let (label, text) = read(path.as_ref())?;
    parse_scenario(&label, &text)
}

fn write_number(out: &mut String, x: f64) {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        let _ = write!(out, "{}", x as i64);
    } else {
        let _ = write!(out, "{x:?}");
    }
}

fn write_nested(out: &mut String, t: &Tensor<f64>, indent: &str) {
    let dims = t.dims();
    let data = t.as_slice();
    match dims.len() {
        1 => {
            out.push('[');
            for (k, &x) in data.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_number(out, x);
            }
            out.push(']');
        }
        _ => {
            let stride: usize = dims[1..].iter().product();
            out.push_str("[\n");
            for block in 0..dims[0] {
                let sub = Tensor::from_vec(&dims[1..], data[block * stride..(block + 1) * stride].to_vec())
                    .expect("sub-block shape");
                out.push_str(indent);
                out.push_str("  ");
                write_nested(out, &sub, &format!("{indent}  "));
                out.push_str(",\n");
            }
            out.push_str(indent);
            out.push(']');
        }
    }
}

/// Render a scenario as a TOML document at each table's own rank.
pub fn to_toml(config: &ScenarioConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema_version = {SCHEMA_VERSION}");
    let _ = writeln!(out, "name = {}", toml::Value::String(config.name.clone()));
    let _ = writeln!(out, "kind = \"{}\"", config.kind);
    let _ = writeln!(out, "horizon = {}", config.horizon);
    let _ = writeln!(out, "max_age = {}", config.max_age);
    let _ = writeln!(out, "types = {}", config.types);
    let _ = writeln!(out, "discount_rate = {:?}", config.discount_rate);
    out.push_str("\n[tables]\n");
    let tables: [(&str, &Tensor<f64>); 16] = [
        ("purchase_price", &config.purchase_price),
        ("fixed_cost", &config.fixed_cost),
        ("om_cost", &config.om_cost),
        ("salvage", &config.salvage),
        ("usage", &config.usage),
        ("demand", &config.demand),
        ("initial_fleet", &config.initial_fleet),
        ("emission_production", &config.emission_production),
        ("emission_operation", &config.emission_operation),
        ("emission_disposal", &config.emission_disposal),
        ("co2_price", &config.co2_price),
        ("component_stock", &config.component_stock),
        ("component_price", &config.component_price),
        ("component_resale", &config.component_resale),
        ("install_cost", &config.install_cost),
        ("removal_cost", &config.removal_cost),
    ];
    for (name, t) in tables {
        let _ = write!(out, "{name} = ");
        write_nested(&mut out, t, "");
        out.push('\n');
    }
    out
}

pub fn save(config: &ScenarioConfig, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    std::fs::write(path, to_toml(config)).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Plan files: same style, integer tensors, ages as rows and periods as columns.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    schema_version: u32,
    v: Vec<Vec<Vec<i64>>>,
    #[serde(default)]
    b: Option<Vec<Vec<Vec<i64>>>>,
    #[serde(default)]
    s: Option<Vec<Vec<Vec<i64>>>>,
    #[serde(default)]
    delta: Option<Vec<i64>>,
    #[serde(default)]
    m: Option<Vec<Vec<Vec<i64>>>>,
    #[serde(default)]
    dm: Option<Vec<Vec<Vec<i64>>>>,
    #[serde(default)]
    bk: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    sk: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    inv: Option<Vec<Vec<i64>>>,
}

/// Parse a plan document against `config`'s shape. Omitted tensors are zero.
pub fn parse_plan(label: &str, text: &str, config: &ScenarioConfig) -> Result<DecisionPlan, ScenarioError> {
    let raw: RawPlan = toml::from_str(text).map_err(|e| parse_error(label, text, e))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::SchemaVersion {
            path: label.to_string(),
            found: raw.schema_version,
        });
    }
    let mut plan = DecisionPlan::<i64>::zeros(config);
    let shape_err = |name: &str, want: &[usize]| ScenarioError::Table {
        path: label.to_string(),
        table: name.to_string(),
        message: format!("expected shape {want:?}"),
    };
    let cube = |name: &str, data: &Vec<Vec<Vec<i64>>>, slot: &mut Tensor<i64>| {
        let want = slot.dims().to_vec();
        let ok = data.len() == want[0]
            && data
                .iter()
                .all(|a| a.len() == want[1] && a.iter().all(|r| r.len() == want[2]));
        if !ok {
            return Err(shape_err(name, &want));
        }
        *slot = Tensor::from_vec(&want, data.iter().flatten().flatten().copied().collect()).unwrap();
        Ok(())
    };
    cube("v", &raw.v, &mut plan.deployed)?;
    for (name, data, slot) in [
        ("b", &raw.b, &mut plan.purchased),
        ("s", &raw.s, &mut plan.sold),
        ("m", &raw.m, &mut plan.installed),
        ("dm", &raw.dm, &mut plan.removed),
    ] {
        if let Some(d) = data {
            cube(name, d, slot)?;
        }
    }
    let square = |name: &str, data: &Vec<Vec<i64>>, slot: &mut Tensor<i64>| {
        let want = slot.dims().to_vec();
        if data.len() != want[0] || data.iter().any(|r| r.len() != want[1]) {
            return Err(shape_err(name, &want));
        }
        *slot = Tensor::from_vec(&want, data.concat()).unwrap();
        Ok(())
    };
    for (name, data, slot) in [
        ("bk", &raw.bk, &mut plan.components_bought),
        ("sk", &raw.sk, &mut plan.components_sold),
        ("inv", &raw.inv, &mut plan.inventory),
    ] {
        if let Some(d) = data {
            square(name, d, slot)?;
        }
    }
    if let Some(d) = raw.delta {
        if d.len() != config.horizon + 1 {
            return Err(shape_err("delta", &[config.horizon + 1]));
        }
        plan.purchase_indicator = Tensor::from_vec(&[d.len()], d).unwrap();
    }
    Ok(plan)
}

pub fn load_plan(path: impl AsRef<Path>, config: &ScenarioConfig) -> Result<DecisionPlan, ScenarioError> {
    let (label, text) = read(path.as_ref())?;
    parse_plan(&label, &text, config)
}

/// Render a plan; each type block lists one row per age, one column per period.
pub fn plan_to_toml(plan: &DecisionPlan) -> String {
    let real = plan.to_real();
    let mut out = format!("schema_version = {SCHEMA_VERSION}\n");
    for (name, t) in [
        ("v", &real.deployed),
        ("b", &real.purchased),
        ("s", &real.sold),
        ("delta", &real.purchase_indicator),
        ("m", &real.installed),
        ("dm", &real.removed),
        ("bk", &real.components_bought),
        ("sk", &real.components_sold),
        ("inv", &real.inventory),
    ] {
        let _ = write!(out, "{name} = ");
        write_nested(&mut out, t, "");
        out.push('\n');
    }
    out
}

pub fn save_plan(plan: &DecisionPlan, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    std::fs::write(path, plan_to_toml(plan)).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}
