//! Distributed facility location on the real line.
//!
//! Agents report positions; they are partitioned into fixed groups. A
//! two-phase mechanism first picks one representative position per group,
//! then opens `k` facilities at representative positions. This crate
//! provides the mechanisms, exact optimal-cost oracles, a misreport
//! auditor, adversarial and random instance generators, and a fuzzing
//! harness that checks observed approximation ratios against closed-form
//! bounds.

pub mod audit;
pub mod cost;
pub mod error;
pub mod forge;
pub mod harness;
pub mod mechanism;
pub mod model;
pub mod oracle;

pub use audit::{audit_instance, deviation_candidates, AuditReport, Deviation};
pub use cost::{approximation_ratio, individual_cost, social_cost, CostReport, Variant};
pub use error::{Error, Result};
pub use forge::{gen_family, gen_random, load_instance, save_instance, FamilySpec, RandomConfig};
pub use harness::{fuzz, ratio_record, theoretical_bound, FuzzConfig, FuzzSummary, RunRecord};
pub use mechanism::{ceil_rank, resolve_spec, run_mechanism, MechanismOutcome, MechanismSpec};
pub use model::{AgentRef, Instance, Solution};
pub use oracle::{optimal_full, optimal_max_fast, optimal_sum_fast, OptimalResult};
