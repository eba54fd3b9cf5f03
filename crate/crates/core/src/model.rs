//! Domain types shared by the formulation, the objective and both solvers.
//!
//! Index conventions: configurations `o in 0..types`, ages `i in 0..=max_age`,
//! periods `j in 0..=horizon`. Every type-age-period table is stored as
//! `[types, max_age + 1, horizon + 1]` after validation.

use crate::ip::ViolationRecord;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{table}: expected shape {expected:?} (or broadcastable), found {found:?}")]
    DimensionMismatch {
        table: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{table}{} = {value} is negative", format_index(.index))]
    Negative {
        table: String,
        index: Vec<usize>,
        value: f64,
    },
    #[error("{table}{} = {value} is not a finite number", format_index(.index))]
    NotFinite {
        table: String,
        index: Vec<usize>,
        value: f64,
    },
    #[error("{table}{} = {value} must be a whole count", format_index(.index))]
    NotInteger {
        table: String,
        index: Vec<usize>,
        value: f64,
    },
    #[error("{field} must be at least 1, got {value}")]
    TooSmall { field: &'static str, value: usize },
    #[error("{table} must be zero for a base-kind scenario (nonzero at {})", format_index(.index))]
    ExtendedDataInBase { table: String, index: Vec<usize> },
    #[error("discount_rate {0} must be finite and greater than -1")]
    DiscountRate(f64),
    #[error("discrepancy is undefined against a zero reference objective")]
    ZeroReference,
    #[error("plan shape {found:?} does not match scenario shape {expected:?}")]
    PlanShape { expected: Vec<usize>, found: Vec<usize> },
}

fn format_index(index: &[usize]) -> String {
    index.iter().map(|k| format!("[{k}]")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Base,
    Extended,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Base => f.write_str("base"),
            ModelKind::Extended => f.write_str("extended"),
        }
    }
}

/// Full parameter set of one problem instance.
///
/// Money is `f64`. O&M cost is per deployed asset and period (already
/// multiplied by the period usage). Operation emissions are tons per deployed
/// asset and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ModelKind,
    /// Number of planning periods; decisions at `0..=horizon`.
    pub horizon: usize,
    /// Maximum useful life in periods.
    pub max_age: usize,
    /// Number of configurations; configuration 0 is the base one.
    pub types: usize,
    pub discount_rate: f64,
    pub purchase_price: Tensor<f64>,
    pub fixed_cost: Tensor<f64>,
    pub om_cost: Tensor<f64>,
    pub salvage: Tensor<f64>,
    pub usage: Tensor<f64>,
    pub demand: Tensor<f64>,
    pub initial_fleet: Tensor<f64>,
    pub emission_production: Tensor<f64>,
    pub emission_operation: Tensor<f64>,
    pub emission_disposal: Tensor<f64>,
    pub co2_price: Tensor<f64>,
    pub component_stock: Tensor<f64>,
    pub component_price: Tensor<f64>,
    pub component_resale: Tensor<f64>,
    pub install_cost: Tensor<f64>,
    pub removal_cost: Tensor<f64>,
}

impl ScenarioConfig {
    /// A scenario with every table zero-filled at full shape.
    pub fn zeros(name: &str, kind: ModelKind, horizon: usize, max_age: usize, types: usize) -> Self {
        let toj = [types, max_age + 1, horizon + 1];
        let tj = [types, horizon + 1];
        let j = [horizon + 1];
        Self {
            name: name.to_string(),
            kind,
            horizon,
            max_age,
            types,
            discount_rate: 0.0,
            purchase_price: Tensor::filled(&toj, 0.0),
            fixed_cost: Tensor::filled(&j, 0.0),
            om_cost: Tensor::filled(&toj, 0.0),
            salvage: Tensor::filled(&toj, 0.0),
            usage: Tensor::filled(&toj, 0.0),
            demand: Tensor::filled(&j, 0.0),
            initial_fleet: Tensor::filled(&[types, max_age + 1], 0.0),
            emission_production: Tensor::filled(&tj, 0.0),
            emission_operation: Tensor::filled(&tj, 0.0),
            emission_disposal: Tensor::filled(&tj, 0.0),
            co2_price: Tensor::filled(&j, 0.0),
            component_stock: Tensor::filled(&[types], 0.0),
            component_price: Tensor::filled(&tj, 0.0),
            component_resale: Tensor::filled(&tj, 0.0),
            install_cost: Tensor::filled(&tj, 0.0),
            removal_cost: Tensor::filled(&tj, 0.0),
        }
    }

    /// Per-period discount factor `1 / (1 + rate)`.
    pub fn discount_factor(&self) -> f64 {
        1.0 / (1.0 + self.discount_rate)
    }

    /// `discount_factor^j` for `j in 0..=horizon + 1`.
    pub fn discount_powers(&self) -> Vec<f64> {
        let f = self.discount_factor();
        let mut out = Vec::with_capacity(self.horizon + 2);
        let mut acc = 1.0;
        for _ in 0..self.horizon + 2 {
            out.push(acc);
            acc *= f;
        }
        out
    }

    pub fn plan_dims(&self) -> [usize; 3] {
        [self.types, self.max_age + 1, self.horizon + 1]
    }

    pub fn initial_fleet_size(&self) -> f64 {
        self.initial_fleet.as_slice().iter().sum()
    }

    /// Upper bound on assets bought per period, also used as the Big-M
    /// constant of the purchase indicator: the largest per-period demand
    /// covered by the smallest positive usage, plus the initial fleet.
    pub fn big_m(&self) -> u64 {
        let min_usage = self
            .usage
            .as_slice()
            .iter()
            .copied()
            .filter(|&u| u > 0.0)
            .fold(f64::INFINITY, f64::min);
        let max_need = (0..self.horizon)
            .map(|j| {
                let d = self.demand.get(&[j]);
                if d <= 0.0 || !min_usage.is_finite() {
                    0.0
                } else {
                    (d / min_usage - 1e-9).ceil()
                }
            })
            .fold(0.0, f64::max);
        (max_need + self.initial_fleet_size()).round().max(0.0) as u64
    }

    fn tables(&self) -> [(&'static str, &Tensor<f64>, Vec<usize>); 16] {
        let toj = vec![self.types, self.max_age + 1, self.horizon + 1];
        let tj = vec![self.types, self.horizon + 1];
        let j = vec![self.horizon + 1];
        [
            ("purchase_price", &self.purchase_price, toj.clone()),
            ("fixed_cost", &self.fixed_cost, j.clone()),
            ("om_cost", &self.om_cost, toj.clone()),
            ("salvage", &self.salvage, toj.clone()),
            ("usage", &self.usage, toj),
            ("demand", &self.demand, j.clone()),
            ("initial_fleet", &self.initial_fleet, vec![self.types, self.max_age + 1]),
            ("emission_production", &self.emission_production, tj.clone()),
            ("emission_operation", &self.emission_operation, tj.clone()),
            ("emission_disposal", &self.emission_disposal, tj.clone()),
            ("co2_price", &self.co2_price, j),
            ("component_stock", &self.component_stock, vec![self.types]),
            ("component_price", &self.component_price, tj.clone()),
            ("component_resale", &self.component_resale, tj.clone()),
            ("install_cost", &self.install_cost, tj.clone()),
            ("removal_cost", &self.removal_cost, tj),
        ]
    }

    fn tables_mut(&mut self) -> [&mut Tensor<f64>; 16] {
        [
            &mut self.purchase_price,
            &mut self.fixed_cost,
            &mut self.om_cost,
            &mut self.salvage,
            &mut self.usage,
            &mut self.demand,
            &mut self.initial_fleet,
            &mut self.emission_production,
            &mut self.emission_operation,
            &mut self.emission_disposal,
            &mut self.co2_price,
            &mut self.component_stock,
            &mut self.component_price,
            &mut self.component_resale,
            &mut self.install_cost,
            &mut self.removal_cost,
        ]
    }
}

const EXTENDED_TABLES: [&str; 9] = [
    "emission_production",
    "emission_operation",
    "emission_disposal",
    "co2_price",
    "component_stock",
    "component_price",
    "component_resale",
    "install_cost",
    "removal_cost",
];

const COUNT_TABLES: [&str; 2] = ["initial_fleet", "component_stock"];

/// Check every invariant and expand broadcast tables to full shape.
///
/// Idempotent: a validated config is returned unchanged.
pub fn validate_scenario(config: &ScenarioConfig) -> Result<ScenarioConfig, ModelError> {
    if config.horizon < 1 {
        return Err(ModelError::TooSmall {
            field: "horizon",
            value: config.horizon,
        });
    }
    if config.max_age < 1 {
        return Err(ModelError::TooSmall {
            field: "max_age",
            value: config.max_age,
        });
    }
    if config.types < 1 {
        return Err(ModelError::TooSmall {
            field: "types",
            value: config.types,
        });
    }
    if !config.discount_rate.is_finite() || config.discount_rate <= -1.0 {
        return Err(ModelError::DiscountRate(config.discount_rate));
    }
    let mut full_shapes = Vec::new();
    for (name, table, full) in config.tables() {
        if !table.broadcasts_to(&full) {
            return Err(ModelError::DimensionMismatch {
                table: name.to_string(),
                expected: full,
                found: table.dims().to_vec(),
            });
        }
        let expanded = table.expand(&full);
        if let Some(index) = expanded.find(|x| !x.is_finite()) {
            let value = expanded.get(&index);
            return Err(ModelError::NotFinite {
                table: name.to_string(),
                index,
                value,
            });
        }
        if let Some(index) = expanded.find(|x| x < 0.0) {
            let value = expanded.get(&index);
            return Err(ModelError::Negative {
                table: name.to_string(),
                index,
                value,
            });
        }
        if COUNT_TABLES.contains(&name) {
            if let Some(index) = expanded.find(|x| x.fract() != 0.0) {
                let value = expanded.get(&index);
                return Err(ModelError::NotInteger {
                    table: name.to_string(),
                    index,
                    value,
                });
            }
        }
        if config.kind == ModelKind::Base && EXTENDED_TABLES.contains(&name) {
            if let Some(index) = expanded.find(|x| x != 0.0) {
                return Err(ModelError::ExtendedDataInBase {
                    table: name.to_string(),
                    index,
                });
            }
        }
        full_shapes.push(full);
    }
    let mut out = config.clone();
    for (table, full) in out.tables_mut().into_iter().zip(full_shapes) {
        *table = table.expand(&full);
    }
    Ok(out)
}

/// Values a plan entry can take: integer counts, or reals on the relaxed path.
pub trait Quantity: Copy + Default + PartialEq + fmt::Debug {
    fn to_f64(self) -> f64;
}

impl Quantity for i64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Quantity for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Full set of decision tensors. Component fields stay zero for base plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPlan<T = i64> {
    #[serde(rename = "v")]
    pub deployed: Tensor<T>,
    #[serde(rename = "b")]
    pub purchased: Tensor<T>,
    #[serde(rename = "s")]
    pub sold: Tensor<T>,
    #[serde(rename = "delta")]
    pub purchase_indicator: Tensor<T>,
    #[serde(rename = "m")]
    pub installed: Tensor<T>,
    #[serde(rename = "dm")]
    pub removed: Tensor<T>,
    #[serde(rename = "bk")]
    pub components_bought: Tensor<T>,
    #[serde(rename = "sk")]
    pub components_sold: Tensor<T>,
    #[serde(rename = "inv")]
    pub inventory: Tensor<T>,
}

impl<T: Quantity> DecisionPlan<T> {
    pub fn zeros(config: &ScenarioConfig) -> Self {
        let toj = config.plan_dims();
        let tj = [config.types, config.horizon + 1];
        let z = T::default();
        Self {
            deployed: Tensor::filled(&toj, z),
            purchased: Tensor::filled(&toj, z),
            sold: Tensor::filled(&toj, z),
            purchase_indicator: Tensor::filled(&[config.horizon + 1], z),
            installed: Tensor::filled(&toj, z),
            removed: Tensor::filled(&toj, z),
            components_bought: Tensor::filled(&tj, z),
            components_sold: Tensor::filled(&tj, z),
            inventory: Tensor::filled(&tj, z),
        }
    }

    /// Error unless every tensor has the full shape for `config`.
    pub fn check_shape(&self, config: &ScenarioConfig) -> Result<(), ModelError> {
        let toj = config.plan_dims().to_vec();
        let tj = vec![config.types, config.horizon + 1];
        let checks: [(&Tensor<T>, &Vec<usize>); 9] = [
            (&self.deployed, &toj),
            (&self.purchased, &toj),
            (&self.sold, &toj),
            (&self.purchase_indicator, &vec![config.horizon + 1]),
            (&self.installed, &toj),
            (&self.removed, &toj),
            (&self.components_bought, &tj),
            (&self.components_sold, &tj),
            (&self.inventory, &tj),
        ];
        for (tensor, dims) in checks {
            if tensor.dims() != dims.as_slice() {
                return Err(ModelError::PlanShape {
                    expected: dims.clone(),
                    found: tensor.dims().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn to_real(&self) -> DecisionPlan<f64> {
        let f = |t: &Tensor<T>| t.map(|x| x.to_f64());
        DecisionPlan {
            deployed: f(&self.deployed),
            purchased: f(&self.purchased),
            sold: f(&self.sold),
            purchase_indicator: f(&self.purchase_indicator),
            installed: f(&self.installed),
            removed: f(&self.removed),
            components_bought: f(&self.components_bought),
            components_sold: f(&self.components_sold),
            inventory: f(&self.inventory),
        }
    }
}

impl DecisionPlan<f64> {
    /// Round every entry to the nearest integer.
    pub fn to_counts(&self) -> DecisionPlan<i64> {
        let f = |t: &Tensor<f64>| t.map(|x| x.round() as i64);
        DecisionPlan {
            deployed: f(&self.deployed),
            purchased: f(&self.purchased),
            sold: f(&self.sold),
            purchase_indicator: f(&self.purchase_indicator),
            installed: f(&self.installed),
            removed: f(&self.removed),
            components_bought: f(&self.components_bought),
            components_sold: f(&self.components_sold),
            inventory: f(&self.inventory),
        }
    }
}

/// Objective decomposition. Revenue items (`salvage`, `component_resale`) are
/// stored as positive amounts and subtracted in `total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub purchase: f64,
    pub fixed: f64,
    pub om: f64,
    pub salvage: f64,
    pub environment_production: f64,
    pub environment_operation: f64,
    pub environment_disposal: f64,
    pub upgrade_components: f64,
    pub upgrade_labor: f64,
    pub component_resale: f64,
    pub total: f64,
}

impl CostReport {
    pub fn signed_sum(&self) -> f64 {
        self.purchase + self.fixed + self.om - self.salvage
            + self.environment_production
            + self.environment_operation
            + self.environment_disposal
            + self.upgrade_components
            + self.upgrade_labor
            - self.component_resale
    }

    pub fn with_total(mut self) -> Self {
        self.total = self.signed_sum();
        self
    }
}

impl std::ops::Add for CostReport {
    type Output = CostReport;
    fn add(self, o: CostReport) -> CostReport {
        CostReport {
            purchase: self.purchase + o.purchase,
            fixed: self.fixed + o.fixed,
            om: self.om + o.om,
            salvage: self.salvage + o.salvage,
            environment_production: self.environment_production + o.environment_production,
            environment_operation: self.environment_operation + o.environment_operation,
            environment_disposal: self.environment_disposal + o.environment_disposal,
            upgrade_components: self.upgrade_components + o.upgrade_components,
            upgrade_labor: self.upgrade_labor + o.upgrade_labor,
            component_resale: self.component_resale + o.component_resale,
            total: self.total + o.total,
        }
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("purchase", self.purchase),
            ("fixed", self.fixed),
            ("o&m", self.om),
            ("salvage (-)", self.salvage),
            ("env. production", self.environment_production),
            ("env. operation", self.environment_operation),
            ("env. disposal", self.environment_disposal),
            ("components", self.upgrade_components),
            ("install/remove labor", self.upgrade_labor),
            ("component resale (-)", self.component_resale),
            ("total", self.total),
        ];
        for (label, value) in rows {
            writeln!(f, "  {label:<22}{value:>18.2}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
    MemoryLimit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Timeout => "timeout",
            SolveStatus::MemoryLimit => "memory_limit",
        };
        f.write_str(s)
    }
}

/// Solver counters and timings. Counters are deterministic; timings are not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub counters: BTreeMap<String, u64>,
    pub timings: BTreeMap<String, f64>,
}

impl Telemetry {
    pub fn count(&mut self, key: &str, value: u64) {
        self.counters.insert(key.to_string(), value);
    }

    pub fn time(&mut self, key: &str, seconds: f64) {
        self.timings.insert(key.to_string(), seconds);
    }

    pub fn wall_seconds(&self) -> f64 {
        self.timings.get("wall_seconds").copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub plan: DecisionPlan,
    pub objective: f64,
    pub status: SolveStatus,
    pub audit: Vec<ViolationRecord>,
    pub telemetry: Telemetry,
}
