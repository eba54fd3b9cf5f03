//! Canonical integer-programming instances and the plan auditor.
//!
//! Every row carries a [`ConstraintKind`] whose [`ConstraintKind::tag`] is the
//! number the row has in the published formulation, so violations can be
//! traced back to it. Variable domains are bounds, not rows.

use crate::model::{DecisionPlan, ModelError, ModelKind, Quantity, ScenarioConfig};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IpError {
    #[error("{builder} needs a {expected}-kind scenario, got {found}")]
    WrongKind {
        builder: &'static str,
        expected: ModelKind,
        found: ModelKind,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    // base formulation
    Capacity,
    NewDeployment,
    InitialFlow,
    PeriodFlow,
    InitialRetirement,
    Retirement,
    NoFinalPurchase,
    NoImmediateResale,
    PurchaseIndicator,
    AssetDomain,
    IndicatorDomain,
    // extended formulation
    ExtCapacity,
    ExtNewDeployment,
    ExtInitialFlow,
    ExtNewFlow,
    ExtPeriodFlow,
    InitialUpgrade,
    NewUpgrade,
    PeriodUpgrade,
    InitialStock,
    StockFlow,
    ExtInitialRetirement,
    ExtRetirement,
    ExtNoFinalPurchase,
    ExtNoImmediateResale,
    BaseOnlyPurchase,
    BaseOnlySale,
    ExtPurchaseIndicator,
    ExtAssetDomain,
    ExtIndicatorDomain,
}

impl ConstraintKind {
    pub const BASE: [ConstraintKind; 11] = [
        Self::Capacity,
        Self::NewDeployment,
        Self::InitialFlow,
        Self::PeriodFlow,
        Self::InitialRetirement,
        Self::Retirement,
        Self::NoFinalPurchase,
        Self::NoImmediateResale,
        Self::PurchaseIndicator,
        Self::AssetDomain,
        Self::IndicatorDomain,
    ];

    pub const EXTENDED: [ConstraintKind; 19] = [
        Self::ExtCapacity,
        Self::ExtNewDeployment,
        Self::ExtInitialFlow,
        Self::ExtNewFlow,
        Self::ExtPeriodFlow,
        Self::InitialUpgrade,
        Self::NewUpgrade,
        Self::PeriodUpgrade,
        Self::InitialStock,
        Self::StockFlow,
        Self::ExtInitialRetirement,
        Self::ExtRetirement,
        Self::ExtNoFinalPurchase,
        Self::ExtNoImmediateResale,
        Self::BaseOnlyPurchase,
        Self::BaseOnlySale,
        Self::ExtPurchaseIndicator,
        Self::ExtAssetDomain,
        Self::ExtIndicatorDomain,
    ];

    /// Stable numeric identifier of the constraint family.
    pub fn tag(self) -> u8 {
        match self {
            Self::Capacity => 5,
            Self::NewDeployment => 6,
            Self::InitialFlow => 7,
            Self::PeriodFlow => 8,
            Self::InitialRetirement => 9,
            Self::Retirement => 10,
            Self::NoFinalPurchase => 11,
            Self::NoImmediateResale => 12,
            Self::PurchaseIndicator => 13,
            Self::AssetDomain => 14,
            Self::IndicatorDomain => 15,
            Self::ExtCapacity => 16,
            Self::ExtNewDeployment => 17,
            Self::ExtInitialFlow => 18,
            Self::ExtNewFlow => 19,
            Self::ExtPeriodFlow => 20,
            Self::InitialUpgrade => 21,
            Self::NewUpgrade => 22,
            Self::PeriodUpgrade => 23,
            Self::InitialStock => 24,
            Self::StockFlow => 25,
            Self::ExtInitialRetirement => 26,
            Self::ExtRetirement => 27,
            Self::ExtNoFinalPurchase => 28,
            Self::ExtNoImmediateResale => 29,
            Self::BaseOnlyPurchase => 30,
            Self::BaseOnlySale => 31,
            Self::ExtPurchaseIndicator => 32,
            Self::ExtAssetDomain => 33,
            Self::ExtIndicatorDomain => 34,
        }
    }

    pub fn is_domain(self) -> bool {
        matches!(
            self,
            Self::AssetDomain | Self::IndicatorDomain | Self::ExtAssetDomain | Self::ExtIndicatorDomain
        )
    }

    /// Rows that the derivation maps of the gradient solver satisfy by
    /// construction for any deployment tensor.
    pub fn is_flow_balance(self) -> bool {
        matches!(
            self,
            Self::NewDeployment
                | Self::InitialFlow
                | Self::PeriodFlow
                | Self::InitialRetirement
                | Self::Retirement
                | Self::NoFinalPurchase
                | Self::ExtNewDeployment
                | Self::ExtInitialFlow
                | Self::ExtNewFlow
                | Self::ExtPeriodFlow
                | Self::InitialUpgrade
                | Self::NewUpgrade
                | Self::PeriodUpgrade
                | Self::InitialStock
                | Self::StockFlow
                | Self::ExtInitialRetirement
                | Self::ExtRetirement
                | Self::ExtNoFinalPurchase
                | Self::BaseOnlyPurchase
                | Self::BaseOnlySale
        )
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {:?}", self.tag(), self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    /// Amount by which `lhs` misses `rhs`; zero when satisfied.
    pub fn residual(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Relation::Le => (lhs - rhs).max(0.0),
            Relation::Ge => (rhs - lhs).max(0.0),
            Relation::Eq => (lhs - rhs).abs(),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Deployed,
    Purchased,
    Sold,
    Indicator,
    Installed,
    Removed,
    ComponentsBought,
    ComponentsSold,
    Inventory,
}

impl VarKind {
    pub fn symbol(self) -> &'static str {
        match self {
            VarKind::Deployed => "v",
            VarKind::Purchased => "b",
            VarKind::Sold => "s",
            VarKind::Indicator => "delta",
            VarKind::Installed => "m",
            VarKind::Removed => "dm",
            VarKind::ComponentsBought => "bk",
            VarKind::ComponentsSold => "sk",
            VarKind::Inventory => "inv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub kind: VarKind,
    pub index: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    /// Domain constraint the bounds come from.
    pub domain: ConstraintKind,
}

impl Variable {
    pub fn name(&self) -> String {
        let mut s = self.kind.symbol().to_string();
        for k in &self.index {
            let _ = write!(s, "_{k}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub index: Vec<usize>,
    /// Sparse `(variable, coefficient)` pairs, sorted by variable, no duplicates.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(k, a)| a * x[k]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub constraint: ConstraintKind,
    pub tag: u8,
    pub index: Vec<usize>,
    pub residual: f64,
}

impl fmt::Display for ViolationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:?}: residual {}", self.constraint, self.index, self.residual)
    }
}

/// Offsets of each variable block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub types: usize,
    pub ages: usize,
    pub periods: usize,
    pub extended: bool,
}

impl Layout {
    fn cube(&self) -> usize {
        self.types * self.ages * self.periods
    }

    fn square(&self) -> usize {
        self.types * self.periods
    }

    fn block(&self, kind: VarKind) -> usize {
        let (c, q) = (self.cube(), self.square());
        match (self.extended, kind) {
            (_, VarKind::Deployed) => 0,
            (_, VarKind::Purchased) => c,
            (_, VarKind::Sold) => 2 * c,
            (false, VarKind::Indicator) => 3 * c,
            (true, VarKind::Installed) => 3 * c,
            (true, VarKind::Removed) => 4 * c,
            (true, VarKind::ComponentsBought) => 5 * c,
            (true, VarKind::ComponentsSold) => 5 * c + q,
            (true, VarKind::Inventory) => 5 * c + 2 * q,
            (true, VarKind::Indicator) => 5 * c + 3 * q,
            (false, k) => panic!("{k:?} is not a base-model variable"),
        }
    }

    pub fn len(&self) -> usize {
        if self.extended {
            5 * self.cube() + 3 * self.square() + self.periods
        } else {
            3 * self.cube() + self.periods
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn toj(&self, kind: VarKind, o: usize, i: usize, j: usize) -> usize {
        self.block(kind) + (o * self.ages + i) * self.periods + j
    }

    pub fn tj(&self, kind: VarKind, o: usize, j: usize) -> usize {
        self.block(kind) + o * self.periods + j
    }

    pub fn delta(&self, j: usize) -> usize {
        self.block(VarKind::Indicator) + j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpInstance {
    pub name: String,
    pub kind: ModelKind,
    pub layout: Layout,
    pub big_m: f64,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

struct Builder<'a> {
    cfg: &'a ScenarioConfig,
    layout: Layout,
    rows: Vec<Constraint>,
}

impl<'a> Builder<'a> {
    fn row(&mut self, kind: ConstraintKind, index: Vec<usize>, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        let mut coeffs = terms;
        coeffs.sort_by_key(|&(k, _)| k);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (k, a) in coeffs {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += a,
                _ => merged.push((k, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Constraint {
            kind,
            index,
            coeffs: merged,
            relation,
            rhs,
        });
    }

    fn v(&self, o: usize, i: usize, j: usize) -> usize {
        self.layout.toj(VarKind::Deployed, o, i, j)
    }
    fn b(&self, o: usize, i: usize, j: usize) -> usize {
        self.layout.toj(VarKind::Purchased, o, i, j)
    }
    fn s(&self, o: usize, i: usize, j: usize) -> usize {
        self.layout.toj(VarKind::Sold, o, i, j)
    }
    fn m(&self, o: usize, i: usize, j: usize) -> usize {
        self.layout.toj(VarKind::Installed, o, i, j)
    }
    fn dm(&self, o: usize, i: usize, j: usize) -> usize {
        self.layout.toj(VarKind::Removed, o, i, j)
    }

    fn h(&self, o: usize, i: usize) -> f64 {
        self.cfg.initial_fleet.get(&[o, i])
    }

    fn capacity(&mut self, kind: ConstraintKind) {
        let (t, n) = (self.cfg.horizon, self.cfg.max_age);
        for j in 0..t {
            let mut terms = Vec::new();
            for o in 0..self.cfg.types {
                for i in 0..n {
                    terms.push((self.v(o, i, j), self.cfg.usage.get(&[o, i, j])));
                }
            }
            let d = self.cfg.demand.get(&[j]);
            self.row(kind, vec![j], terms, Relation::Ge, d);
        }
    }

    fn indicator(&mut self, kind: ConstraintKind, big_m: f64) {
        let (t, n) = (self.cfg.horizon, self.cfg.max_age);
        for j in 0..t {
            let mut terms = Vec::new();
            for o in 0..self.cfg.types {
                for i in 0..n {
                    terms.push((self.b(o, i, j), 1.0));
                }
            }
            terms.push((self.layout.delta(j), -big_m));
            self.row(kind, vec![j], terms, Relation::Le, 0.0);
        }
    }
}

fn variables(cfg: &ScenarioConfig, layout: &Layout, big_m: f64) -> Vec<Variable> {
    let (t, n, types) = (cfg.horizon, cfg.max_age, cfg.types);
    let disc = cfg.discount_powers();
    let extended = layout.extended;
    let (asset_domain, indicator_domain) = if extended {
        (ConstraintKind::ExtAssetDomain, ConstraintKind::ExtIndicatorDomain)
    } else {
        (ConstraintKind::AssetDomain, ConstraintKind::IndicatorDomain)
    };
    let component_cap = types as f64 * big_m + cfg.component_stock.as_slice().iter().sum::<f64>();
    let mut vars = Vec::with_capacity(layout.len());
    let cube_kinds: &[VarKind] = if extended {
        &[
            VarKind::Deployed,
            VarKind::Purchased,
            VarKind::Sold,
            VarKind::Installed,
            VarKind::Removed,
        ]
    } else {
        &[VarKind::Deployed, VarKind::Purchased, VarKind::Sold]
    };
    for &kind in cube_kinds {
        for o in 0..types {
            for i in 0..=n {
                for j in 0..=t {
                    let idx = [o, i, j];
                    let price = cfg.co2_price.get(&[j]);
                    let live = i < n && j < t;
                    let (cost, upper) = match kind {
                        VarKind::Deployed => {
                            let c = if live {
                                disc[j + 1] * (cfg.om_cost.get(&idx) + cfg.emission_operation.get(&[o, j]) * price)
                            } else {
                                0.0
                            };
                            // no asset is held past its last age or past the horizon
                            (c, if live { big_m } else { 0.0 })
                        }
                        VarKind::Purchased => {
                            let c = if live {
                                disc[j] * (cfg.purchase_price.get(&idx) + cfg.emission_production.get(&[o, j]) * price)
                            } else {
                                0.0
                            };
                            (c, if i < n { big_m } else { 0.0 })
                        }
                        VarKind::Sold => (
                            disc[j] * (cfg.emission_disposal.get(&[o, j]) * price - cfg.salvage.get(&idx)),
                            big_m,
                        ),
                        VarKind::Installed => (disc[j] * cfg.install_cost.get(&[o, j]), component_cap),
                        VarKind::Removed => (disc[j] * cfg.removal_cost.get(&[o, j]), component_cap),
                        _ => unreachable!(),
                    };
                    vars.push(Variable {
                        kind,
                        index: idx.to_vec(),
                        lower: 0.0,
                        upper,
                        cost,
                        domain: asset_domain,
                    });
                }
            }
        }
    }
    if extended {
        for kind in [VarKind::ComponentsBought, VarKind::ComponentsSold, VarKind::Inventory] {
            for o in 0..types {
                for j in 0..=t {
                    let cost = match kind {
                        VarKind::ComponentsBought => disc[j] * cfg.component_price.get(&[o, j]),
                        VarKind::ComponentsSold => -disc[j] * cfg.component_resale.get(&[o, j]),
                        _ => 0.0,
                    };
                    vars.push(Variable {
                        kind,
                        index: vec![o, j],
                        lower: 0.0,
                        upper: component_cap,
                        cost,
                        domain: asset_domain,
                    });
                }
            }
        }
    }
    for j in 0..=t {
        vars.push(Variable {
            kind: VarKind::Indicator,
            index: vec![j],
            lower: 0.0,
            upper: if j < t { 1.0 } else { 0.0 },
            cost: if j < t { disc[j] * cfg.fixed_cost.get(&[j]) } else { 0.0 },
            domain: indicator_domain,
        });
    }
    debug_assert_eq!(vars.len(), layout.len());
    vars
}

fn layout_of(cfg: &ScenarioConfig) -> Layout {
    Layout {
        types: cfg.types,
        ages: cfg.max_age + 1,
        periods: cfg.horizon + 1,
        extended: cfg.kind == ModelKind::Extended,
    }
}

pub fn build_base_instance(config: &ScenarioConfig) -> Result<IpInstance, IpError> {
    if config.kind != ModelKind::Base {
        return Err(IpError::WrongKind {
            builder: "build_base_instance",
            expected: ModelKind::Base,
            found: config.kind,
        });
    }
    let cfg = crate::model::validate_scenario(config)?;
    let layout = layout_of(&cfg);
    let big_m = cfg.big_m() as f64;
    let (t, n) = (cfg.horizon, cfg.max_age);
    let mut bd = Builder {
        cfg: &cfg,
        layout,
        rows: Vec::new(),
    };
    use ConstraintKind as K;
    bd.capacity(K::Capacity);
    for o in 0..cfg.types {
        for j in 0..t {
            let terms = vec![(bd.b(o, 0, j), 1.0), (bd.v(o, 0, j), -1.0)];
            bd.row(K::NewDeployment, vec![o, 0, j], terms, Relation::Eq, 0.0);
        }
    }
    for o in 0..cfg.types {
        for i in 1..n {
            let terms = vec![(bd.b(o, i, 0), 1.0), (bd.v(o, i, 0), -1.0), (bd.s(o, i, 0), -1.0)];
            let h = bd.h(o, i);
            bd.row(K::InitialFlow, vec![o, i, 0], terms, Relation::Eq, -h);
        }
    }
    for o in 0..cfg.types {
        for i in 1..n {
            for j in 1..t {
                let terms = vec![
                    (bd.v(o, i - 1, j - 1), 1.0),
                    (bd.b(o, i, j), 1.0),
                    (bd.v(o, i, j), -1.0),
                    (bd.s(o, i, j), -1.0),
                ];
                bd.row(K::PeriodFlow, vec![o, i, j], terms, Relation::Eq, 0.0);
            }
        }
    }
    for o in 0..cfg.types {
        let h = bd.h(o, n);
        bd.row(
            K::InitialRetirement,
            vec![o, n, 0],
            vec![(bd.s(o, n, 0), -1.0)],
            Relation::Eq,
            -h,
        );
    }
    for o in 0..cfg.types {
        for j in 1..=t {
            let terms = vec![(bd.v(o, n - 1, j - 1), 1.0), (bd.s(o, n, j), -1.0)];
            bd.row(K::Retirement, vec![o, n, j], terms, Relation::Eq, 0.0);
        }
        // everything still held is sold at the horizon
        for i in 1..n {
            let terms = vec![(bd.v(o, i - 1, t - 1), 1.0), (bd.s(o, i, t), -1.0)];
            bd.row(K::Retirement, vec![o, i, t], terms, Relation::Eq, 0.0);
        }
    }
    for o in 0..cfg.types {
        for i in 0..=n {
            bd.row(
                K::NoFinalPurchase,
                vec![o, i, t],
                vec![(bd.b(o, i, t), 1.0)],
                Relation::Eq,
                0.0,
            );
        }
    }
    for o in 0..cfg.types {
        for j in 0..=t {
            bd.row(
                K::NoImmediateResale,
                vec![o, 0, j],
                vec![(bd.s(o, 0, j), 1.0)],
                Relation::Eq,
                0.0,
            );
        }
    }
    bd.indicator(K::PurchaseIndicator, big_m);
    let rows = bd.rows;
    Ok(IpInstance {
        name: cfg.name.clone(),
        kind: ModelKind::Base,
        layout,
        big_m,
        variables: variables(&cfg, &layout, big_m),
        constraints: rows,
    })
}

pub fn build_extended_instance(config: &ScenarioConfig) -> Result<IpInstance, IpError> {
    if config.kind != ModelKind::Extended {
        return Err(IpError::WrongKind {
            builder: "build_extended_instance",
            expected: ModelKind::Extended,
            found: config.kind,
        });
    }
    let cfg = crate::model::validate_scenario(config)?;
    let layout = layout_of(&cfg);
    let big_m = cfg.big_m() as f64;
    let (t, n, types) = (cfg.horizon, cfg.max_age, cfg.types);
    let mut bd = Builder {
        cfg: &cfg,
        layout,
        rows: Vec::new(),
    };
    use ConstraintKind as K;
    bd.capacity(K::ExtCapacity);
    for j in 0..t {
        let mut terms = Vec::new();
        for o in 0..types {
            terms.push((bd.b(o, 0, j), 1.0));
            terms.push((bd.v(o, 0, j), -1.0));
        }
        bd.row(K::ExtNewDeployment, vec![0, j], terms, Relation::Eq, 0.0);
    }
    for i in 0..=n {
        let mut terms = Vec::new();
        let mut h = 0.0;
        for o in 0..types {
            terms.extend([(bd.b(o, i, 0), 1.0), (bd.v(o, i, 0), -1.0), (bd.s(o, i, 0), -1.0)]);
            h += bd.h(o, i);
        }
        bd.row(K::ExtInitialFlow, vec![i, 0], terms, Relation::Eq, -h);
    }
    for j in 1..=t {
        let mut terms = Vec::new();
        for o in 0..types {
            terms.extend([(bd.b(o, 0, j), 1.0), (bd.v(o, 0, j), -1.0), (bd.s(o, 0, j), -1.0)]);
        }
        bd.row(K::ExtNewFlow, vec![0, j], terms, Relation::Eq, 0.0);
    }
    for i in 1..=n {
        for j in 1..=t {
            let mut terms = Vec::new();
            for o in 0..types {
                terms.extend([
                    (bd.v(o, i - 1, j - 1), 1.0),
                    (bd.b(o, i, j), 1.0),
                    (bd.v(o, i, j), -1.0),
                    (bd.s(o, i, j), -1.0),
                ]);
            }
            bd.row(K::ExtPeriodFlow, vec![i, j], terms, Relation::Eq, 0.0);
        }
    }
    let upgrade = |bd: &Builder, o: usize, i: usize, j: usize| {
        vec![
            (bd.m(o, i, j), 1.0),
            (bd.b(o, i, j), 1.0),
            (bd.v(o, i, j), -1.0),
            (bd.dm(o, i, j), -1.0),
            (bd.s(o, i, j), -1.0),
        ]
    };
    for o in 0..types {
        for i in 0..=n {
            let terms = upgrade(&bd, o, i, 0);
            let h = bd.h(o, i);
            bd.row(K::InitialUpgrade, vec![o, i, 0], terms, Relation::Eq, -h);
        }
    }
    for o in 0..types {
        for j in 1..=t {
            let terms = upgrade(&bd, o, 0, j);
            bd.row(K::NewUpgrade, vec![o, 0, j], terms, Relation::Eq, 0.0);
        }
    }
    for o in 0..types {
        for i in 1..=n {
            for j in 1..=t {
                let mut terms = upgrade(&bd, o, i, j);
                terms.push((bd.v(o, i - 1, j - 1), 1.0));
                bd.row(K::PeriodUpgrade, vec![o, i, j], terms, Relation::Eq, 0.0);
            }
        }
    }
    for o in 0..types {
        for j in 0..=t {
            let mut terms = vec![
                (layout.tj(VarKind::Inventory, o, j), 1.0),
                (layout.tj(VarKind::ComponentsBought, o, j), -1.0),
                (layout.tj(VarKind::ComponentsSold, o, j), 1.0),
            ];
            for i in 0..=n {
                terms.push((bd.dm(o, i, j), -1.0));
                terms.push((bd.m(o, i, j), 1.0));
            }
            if j == 0 {
                let hk = cfg.component_stock.get(&[o]);
                bd.row(K::InitialStock, vec![o, 0], terms, Relation::Eq, hk);
            } else {
                terms.push((layout.tj(VarKind::Inventory, o, j - 1), -1.0));
                bd.row(K::StockFlow, vec![o, j], terms, Relation::Eq, 0.0);
            }
        }
    }
    {
        let mut terms = Vec::new();
        let mut h = 0.0;
        for o in 0..types {
            terms.push((bd.s(o, n, 0), -1.0));
            h += bd.h(o, n);
        }
        bd.row(K::ExtInitialRetirement, vec![n, 0], terms, Relation::Eq, -h);
    }
    for j in 1..=t {
        let mut terms = Vec::new();
        for o in 0..types {
            terms.extend([(bd.v(o, n - 1, j - 1), 1.0), (bd.s(o, n, j), -1.0)]);
        }
        bd.row(K::ExtRetirement, vec![n, j], terms, Relation::Eq, 0.0);
    }
    // everything still held is sold at the horizon
    for i in 1..n {
        let mut terms = Vec::new();
        for o in 0..types {
            terms.extend([(bd.v(o, i - 1, t - 1), 1.0), (bd.s(o, i, t), -1.0)]);
        }
        bd.row(K::ExtRetirement, vec![i, t], terms, Relation::Eq, 0.0);
    }
    for o in 0..types {
        for i in 0..=n {
            bd.row(
                K::ExtNoFinalPurchase,
                vec![o, i, t],
                vec![(bd.b(o, i, t), 1.0)],
                Relation::Eq,
                0.0,
            );
        }
    }
    for o in 0..types {
        for j in 0..=t {
            bd.row(
                K::ExtNoImmediateResale,
                vec![o, 0, j],
                vec![(bd.s(o, 0, j), 1.0)],
                Relation::Eq,
                0.0,
            );
        }
    }
    for (kind, var) in [
        (K::BaseOnlyPurchase, VarKind::Purchased),
        (K::BaseOnlySale, VarKind::Sold),
    ] {
        for o in 1..types {
            for i in 1..=n {
                for j in 0..=t {
                    let k = layout.toj(var, o, i, j);
                    bd.row(kind, vec![o, i, j], vec![(k, 1.0)], Relation::Eq, 0.0);
                }
            }
        }
    }
    bd.indicator(K::ExtPurchaseIndicator, big_m);
    let rows = bd.rows;
    Ok(IpInstance {
        name: cfg.name.clone(),
        kind: ModelKind::Extended,
        layout,
        big_m,
        variables: variables(&cfg, &layout, big_m),
        constraints: rows,
    })
}

pub fn build_instance(config: &ScenarioConfig) -> Result<IpInstance, IpError> {
    match config.kind {
        ModelKind::Base => build_base_instance(config),
        ModelKind::Extended => build_extended_instance(config),
    }
}

/// Relative tolerance used by the auditor.
pub const FEASIBILITY_TOL: f64 = 1e-6;

fn tolerance(scale: f64) -> f64 {
    FEASIBILITY_TOL * scale.abs().max(1.0)
}

impl IpInstance {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.variables.iter().zip(x).map(|(v, &xi)| v.cost * xi).sum()
    }

    /// Every constraint number present among rows and variable domains.
    pub fn provenance_tags(&self) -> Vec<u8> {
        let mut tags: Vec<u8> = self
            .constraints
            .iter()
            .map(|c| c.kind.tag())
            .chain(self.variables.iter().map(|v| v.domain.tag()))
            .collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    /// Plan entries in the instance's variable order.
    pub fn plan_entries<V: Copy>(&self, plan: &DecisionPlan<V>) -> Vec<V> {
        self.variables
            .iter()
            .map(|var| match (var.kind, var.index.as_slice()) {
                (VarKind::Deployed, &[o, i, j]) => plan.deployed[[o, i, j]],
                (VarKind::Purchased, &[o, i, j]) => plan.purchased[[o, i, j]],
                (VarKind::Sold, &[o, i, j]) => plan.sold[[o, i, j]],
                (VarKind::Installed, &[o, i, j]) => plan.installed[[o, i, j]],
                (VarKind::Removed, &[o, i, j]) => plan.removed[[o, i, j]],
                (VarKind::ComponentsBought, &[o, j]) => plan.components_bought[[o, j]],
                (VarKind::ComponentsSold, &[o, j]) => plan.components_sold[[o, j]],
                (VarKind::Inventory, &[o, j]) => plan.inventory[[o, j]],
                (VarKind::Indicator, &[j]) => plan.purchase_indicator[j],
                _ => unreachable!(),
            })
            .collect()
    }

    /// Flatten a plan into the instance's variable order.
    pub fn plan_to_vector<T: Quantity>(&self, plan: &DecisionPlan<T>) -> Vec<f64> {
        self.plan_entries(plan).into_iter().map(Quantity::to_f64).collect()
    }

    /// Inverse of [`Self::plan_to_vector`], rounding to whole counts.
    pub fn vector_to_plan(&self, x: &[f64]) -> DecisionPlan {
        let l = &self.layout;
        let toj = [l.types, l.ages, l.periods];
        let tj = [l.types, l.periods];
        let mut plan = DecisionPlan {
            deployed: Tensor::filled(&toj, 0i64),
            purchased: Tensor::filled(&toj, 0),
            sold: Tensor::filled(&toj, 0),
            purchase_indicator: Tensor::filled(&[l.periods], 0),
            installed: Tensor::filled(&toj, 0),
            removed: Tensor::filled(&toj, 0),
            components_bought: Tensor::filled(&tj, 0),
            components_sold: Tensor::filled(&tj, 0),
            inventory: Tensor::filled(&tj, 0),
        };
        for (var, &value) in self.variables.iter().zip(x) {
            let q = value.round() as i64;
            match (var.kind, var.index.as_slice()) {
                (VarKind::Deployed, &[o, i, j]) => plan.deployed[[o, i, j]] = q,
                (VarKind::Purchased, &[o, i, j]) => plan.purchased[[o, i, j]] = q,
                (VarKind::Sold, &[o, i, j]) => plan.sold[[o, i, j]] = q,
                (VarKind::Installed, &[o, i, j]) => plan.installed[[o, i, j]] = q,
                (VarKind::Removed, &[o, i, j]) => plan.removed[[o, i, j]] = q,
                (VarKind::ComponentsBought, &[o, j]) => plan.components_bought[[o, j]] = q,
                (VarKind::ComponentsSold, &[o, j]) => plan.components_sold[[o, j]] = q,
                (VarKind::Inventory, &[o, j]) => plan.inventory[[o, j]] = q,
                (VarKind::Indicator, &[j]) => plan.purchase_indicator[j] = q,
                _ => unreachable!(),
            }
        }
        plan
    }

    /// Every violated row, bound and integrality requirement of `x`.
    pub fn audit(&self, x: &[f64]) -> Vec<ViolationRecord> {
        let mut out = Vec::new();
        for c in &self.constraints {
            let lhs = c.lhs(x);
            let residual = c.relation.residual(lhs, c.rhs);
            if residual > tolerance(c.rhs) {
                out.push(ViolationRecord {
                    constraint: c.kind,
                    tag: c.kind.tag(),
                    index: c.index.clone(),
                    residual,
                });
            }
        }
        for (var, &value) in self.variables.iter().zip(x) {
            let residual = (var.lower - value)
                .max(value - var.upper)
                .max((value - value.round()).abs());
            if residual > tolerance(value) {
                out.push(ViolationRecord {
                    constraint: var.domain,
                    tag: var.domain.tag(),
                    index: var.index.clone(),
                    residual,
                });
            }
        }
        out
    }

    /// CPLEX-style LP text, for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        let names: Vec<String> = self.variables.iter().map(Variable::name).collect();
        let mut out = format!("\\ {}\nMinimize\n obj:", self.name);
        let term = |out: &mut String, a: f64, name: &str| {
            let sign = if a < 0.0 { '-' } else { '+' };
            let _ = write!(out, " {sign} {} {name}", a.abs());
        };
        for (var, name) in self.variables.iter().zip(&names) {
            if var.cost != 0.0 {
                term(&mut out, var.cost, name);
            }
        }
        out.push_str("\nSubject To\n");
        for (r, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{}_{}:", r, c.kind.tag());
            if c.coeffs.is_empty() {
                let _ = write!(out, " 0 {}", names[0]);
            }
            for &(k, a) in &c.coeffs {
                term(&mut out, a, &names[k]);
            }
            let _ = writeln!(out, " {} {}", c.relation.symbol(), c.rhs);
        }
        out.push_str("Bounds\n");
        for (var, name) in self.variables.iter().zip(&names) {
            let _ = writeln!(out, " {} <= {name} <= {}", var.lower, var.upper);
        }
        out.push_str("General\n");
        for name in &names {
            let _ = writeln!(out, " {name}");
        }
        out.push_str("End\n");
        out
    }
}

/// Audit `plan` against every constraint of `config`'s model kind.
pub fn check_feasibility<T: Quantity>(
    config: &ScenarioConfig,
    plan: &DecisionPlan<T>,
) -> Result<Vec<ViolationRecord>, IpError> {
    plan.check_shape(config)?;
    let instance = build_instance(config)?;
    Ok(instance.audit(&instance.plan_to_vector(plan)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{case1, case2};

    fn rows(inst: &IpInstance, kind: ConstraintKind) -> Vec<&Constraint> {
        inst.constraints.iter().filter(|c| c.kind == kind).collect()
    }

    #[test]
    fn case1_capacity_row() {
        let cfg = case1(1).unwrap();
        let inst = build_base_instance(&cfg).unwrap();
        let cap = rows(&inst, ConstraintKind::Capacity);
        assert_eq!(cap.len(), 3);
        let row = cap[0];
        assert_eq!(row.relation, Relation::Ge);
        assert_eq!(row.rhs, 300_000.0);
        assert_eq!(row.coeffs.len(), 10);
        for &(k, a) in &row.coeffs {
            let var = &inst.variables[k];
            assert_eq!(var.kind, VarKind::Deployed);
            assert_eq!(var.index[2], 0);
            assert!(var.index[1] <= 9);
            assert_eq!(a, 20_000.0);
        }
    }

    #[test]
    fn horizon_one_has_no_period_flow_rows() {
        let mut cfg = ScenarioConfig::zeros("t1", ModelKind::Base, 1, 3, 1);
        cfg.usage = Tensor::filled(&[1, 1, 1], 1.0);
        let inst = build_base_instance(&cfg).unwrap();
        assert!(rows(&inst, ConstraintKind::PeriodFlow).is_empty());
    }

    #[test]
    fn initial_flow_row_count() {
        let inst = build_base_instance(&case1(2).unwrap()).unwrap();
        assert_eq!(rows(&inst, ConstraintKind::InitialFlow).len(), 10 - 1);
    }

    #[test]
    fn base_tags_cover_exactly_the_base_set() {
        let inst = build_base_instance(&case1(4).unwrap()).unwrap();
        assert_eq!(inst.provenance_tags(), (5..=15).collect::<Vec<u8>>());
        let ext = build_extended_instance(&case2()).unwrap();
        assert_eq!(ext.provenance_tags(), (16..=34).collect::<Vec<u8>>());
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        assert!(matches!(build_base_instance(&case2()), Err(IpError::WrongKind { .. })));
        assert!(matches!(
            build_extended_instance(&case1(1).unwrap()),
            Err(IpError::WrongKind { .. })
        ));
    }

    #[test]
    fn case2_restricts_transactions_to_base_configuration() {
        let inst = build_extended_instance(&case2()).unwrap();
        for kind in [ConstraintKind::BaseOnlyPurchase, ConstraintKind::BaseOnlySale] {
            let r = rows(&inst, kind);
            assert_eq!(r.len(), 10 * 4);
            for c in r {
                assert_eq!(c.index[0], 1);
                assert!(c.index[1] > 0);
                assert_eq!((c.relation, c.rhs, c.coeffs.len()), (Relation::Eq, 0.0, 1));
            }
        }
    }

    #[test]
    fn stock_flow_row_count() {
        let inst = build_extended_instance(&case2()).unwrap();
        assert_eq!(rows(&inst, ConstraintKind::StockFlow).len(), 2 * 3);
    }

    #[test]
    fn single_type_extended_flow_rows_match_base() {
        let base = case1(6).unwrap();
        let mut ext = base.clone();
        ext.kind = ModelKind::Extended;
        let b = build_base_instance(&base).unwrap();
        let e = build_extended_instance(&ext).unwrap();
        let by_name = |inst: &IpInstance, c: &Constraint| {
            let mut v: Vec<(String, f64)> = c.coeffs.iter().map(|&(k, a)| (inst.variables[k].name(), a)).collect();
            v.sort_by(|x, y| x.0.cmp(&y.0));
            (v, c.relation, c.rhs)
        };
        let pairs = [
            (ConstraintKind::NewDeployment, ConstraintKind::ExtNewDeployment),
            (ConstraintKind::InitialFlow, ConstraintKind::ExtInitialFlow),
            (ConstraintKind::PeriodFlow, ConstraintKind::ExtPeriodFlow),
        ];
        for (bk, ek) in pairs {
            for c in rows(&b, bk) {
                let (i, j) = (c.index[1], c.index[2]);
                let twin = rows(&e, ek)
                    .into_iter()
                    .find(|r| r.index == vec![i, j])
                    .unwrap_or_else(|| panic!("no {ek:?} row at {i},{j}"));
                assert_eq!(by_name(&b, c), by_name(&e, twin), "{bk:?} at {i},{j}");
            }
        }
    }

    #[test]
    fn builders_are_deterministic() {
        let cfg = case2();
        assert_eq!(build_instance(&cfg).unwrap(), build_instance(&cfg).unwrap());
    }

    #[test]
    fn plan_vector_round_trip() {
        let cfg = case2();
        let inst = build_instance(&cfg).unwrap();
        let x: Vec<f64> = (0..inst.num_vars()).map(|k| (k % 7) as f64).collect();
        let plan = inst.vector_to_plan(&x);
        assert_eq!(inst.plan_to_vector(&plan), x);
    }

    #[test]
    fn zero_plan_misses_demand() {
        let cfg = case1(1).unwrap();
        let audit = check_feasibility(&cfg, &DecisionPlan::<i64>::zeros(&cfg)).unwrap();
        let cap: Vec<_> = audit
            .iter()
            .filter(|r| r.constraint == ConstraintKind::Capacity)
            .collect();
        assert_eq!(cap.len(), 3);
        assert_eq!(cap[0].index, vec![0]);
        assert_eq!(cap[0].residual, 300_000.0);
    }

    #[test]
    fn published_ml_deployment_meets_capacity() {
        let cfg = case1(2).unwrap();
        let inst = build_base_instance(&cfg).unwrap();
        let mut plan = DecisionPlan::<i64>::zeros(&cfg);
        for (i, &n) in [0, 0, 1, 9, 1, 0, 0, 1, 0, 0, 0].iter().enumerate() {
            plan.deployed[[0, i, 0]] = n;
        }
        let row = rows(&inst, ConstraintKind::Capacity)[0];
        let lhs = row.lhs(&inst.plan_to_vector(&plan));
        assert_eq!(lhs, 230_000.0);
        let audit = inst.audit(&inst.plan_to_vector(&plan));
        assert!(!audit
            .iter()
            .any(|r| r.constraint == ConstraintKind::Capacity && r.index == vec![0]));
    }

    #[test]
    fn lp_export_lists_every_row() {
        let inst = build_base_instance(&case1(1).unwrap()).unwrap();
        let text = inst.to_lp_format();
        assert!(text.starts_with("\\ case1-1\nMinimize"));
        assert_eq!(text.matches("\n c").count(), inst.num_rows());
        assert!(text.contains(">= 300000"));
    }
}
