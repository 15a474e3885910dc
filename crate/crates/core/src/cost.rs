//! Individual and social costs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Solution};

/// How an agent aggregates its distances to the open facilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Total distance to all facilities.
    Sum,
    /// Distance to the farthest facility.
    Max,
}

impl Variant {
    /// 1 for the sum-variant, 0 for the max-variant.
    pub fn indicator(self) -> f64 {
        match self {
            Variant::Sum => 1.0,
            Variant::Max => 0.0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Sum => "sum",
            Variant::Max => "max",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sum" => Ok(Variant::Sum),
            "max" => Ok(Variant::Max),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{other}' (expected sum or max)"
            ))),
        }
    }
}

pub fn individual_cost(position: f64, solution: &Solution, variant: Variant) -> f64 {
    location_cost(position, solution.locations(), variant)
}

#[inline]
pub(crate) fn location_cost(position: f64, locations: &[f64], variant: Variant) -> f64 {
    match variant {
        Variant::Sum => locations.iter().map(|y| (position - y).abs()).sum(),
        Variant::Max => {
            // farthest facility is one of the extremes of a sorted solution
            let lo = (position - locations[0]).abs();
            let hi = (position - locations[locations.len() - 1]).abs();
            lo.max(hi)
        }
    }
}

/// Per-agent costs, per-group averages and the social cost of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Indexed like the instance: `per_agent[g][i]`.
    pub per_agent: Vec<Vec<f64>>,
    pub per_group_avg: Vec<f64>,
    pub social: f64,
}

/// Average over groups of the average individual cost.
pub fn social_cost(instance: &Instance, solution: &Solution, variant: Variant) -> Result<CostReport> {
    solution.check_feasible(instance)?;
    let per_agent: Vec<Vec<f64>> = instance
        .groups()
        .iter()
        .map(|g| {
            g.iter()
                .map(|&x| location_cost(x, solution.locations(), variant))
                .collect()
        })
        .collect();
    let per_group_avg: Vec<f64> = per_agent
        .iter()
        .map(|costs| costs.iter().sum::<f64>() / costs.len() as f64)
        .collect();
    let social = per_group_avg.iter().sum::<f64>() / per_group_avg.len() as f64;
    Ok(CostReport {
        per_agent,
        per_group_avg,
        social,
    })
}

/// Social cost without the feasibility check or the per-agent breakdown.
/// Sums in the same order as [`social_cost`], so the two agree bit-for-bit.
pub(crate) fn social_cost_value(instance: &Instance, locations: &[f64], variant: Variant) -> f64 {
    let groups = instance.groups();
    let total: f64 = groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&x| location_cost(x, locations, variant))
                .sum::<f64>()
                / g.len() as f64
        })
        .sum();
    total / groups.len() as f64
}

/// Ratio of the solution's social cost to a supplied optimal cost.
///
/// Both costs zero gives exactly 1.
pub fn approximation_ratio(
    instance: &Instance,
    solution: &Solution,
    optimal_cost: f64,
    variant: Variant,
) -> Result<f64> {
    let cost = social_cost(instance, solution, variant)?.social;
    ratio_of(cost, optimal_cost)
}

pub(crate) fn ratio_of(cost: f64, optimal_cost: f64) -> Result<f64> {
    if optimal_cost == 0.0 {
        if cost == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::ZeroOptimumMismatch { cost });
    }
    Ok(cost / optimal_cost)
}
