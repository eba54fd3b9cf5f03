//! Fleet renewal and upgrade planning.
//!
//! The crate models the fleet replacement problem (assets bought, deployed and
//! sold by type and age over a planning horizon) and its upgrade extension,
//! where assets switch configuration by installing and removing components.
//! Two solvers are provided:
//!
//! * [`exact`]: LP relaxation by bounded revised simplex plus branch-and-bound,
//!   with an exhaustive enumerator used as an oracle on tiny instances.
//! * [`ml`]: gradient descent on the relaxed deployment tensor using a
//!   straight-through rounding estimator, penalty terms and Adam.
//!
//! Shared domain types live in [`model`] and are re-exported at the crate root.

pub mod exact;
pub mod ip;
pub mod ml;
pub mod model;
pub mod objective;
pub mod scenarios;
pub mod tensor;

pub use exact::{brute_force, solve_bnb, solve_lp, BnbLimits, ExactError, LpOutcome, LpSolution};
pub use ip::{
    build_base_instance, build_extended_instance, build_instance, check_feasibility, ConstraintKind, IpError,
    IpInstance, Relation, ViolationRecord,
};
pub use ml::{optimize, MlError, MlHyperparams};
pub use model::{
    validate_scenario, CostReport, DecisionPlan, ModelError, ModelKind, ScenarioConfig, SolveResult, SolveStatus,
    Telemetry,
};
pub use objective::{base_cost, discrepancy, environment_cost, total_cost, upgrade_cost};
pub use tensor::Tensor;
