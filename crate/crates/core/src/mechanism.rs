//! Two-phase mechanisms.
//!
//! Phase 1 picks one representative position per group by an order
//! statistic of the group. Phase 2 picks `k` of the `m` representatives.
//! Every mechanism here is described declaratively by a [`MechanismSpec`]
//! and resolved, for a concrete `(m, k)`, into a [`ResolvedRule`] that
//! carries only a quantile and an integer rank rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::Variant;
use crate::error::{Error, Result};
use crate::model::{cmp_pos, Instance, Solution};

const SNAP_TOLERANCE: f64 = 1e-9;

/// `ceil(x * count)` clamped to `[1, count]`, with products within `1e-9`
/// of an integer snapped to it first.
pub fn ceil_rank(x: f64, count: usize) -> usize {
    let product = x * count as f64;
    let nearest = product.round();
    let ceiled = if (product - nearest).abs() < SNAP_TOLERANCE {
        nearest
    } else {
        product.ceil()
    };
    (ceiled.max(1.0) as usize).min(count.max(1))
}

/// Declarative description of a two-phase mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    /// Quantile `theta` in each group, then the `ceil(l m)`- and
    /// `ceil(r m)`-leftmost representatives.
    ParamK2 { theta: f64, l: f64, r: f64 },
    /// Best strategyproof choice for `k = 2`, sum-variant, as a function of `m`.
    SumK2Dispatcher,
    /// Best strategyproof choice for `k = 2`, max-variant, as a function of `m`.
    MaxK2Dispatcher,
    /// Picks the sum or max dispatcher according to the cost variant.
    SpK2,
    /// Median representative plus the representative closest to it.
    /// Not strategyproof.
    AMaxStar,
    /// Facilities at the `ceil(l m / (k+1))`-leftmost representatives.
    /// `None` takes `k` from the instance.
    SumK(Option<usize>),
    /// Facilities at the `k` most central representatives.
    /// `None` takes `k` from the instance.
    MaxK(Option<usize>),
}

impl MechanismSpec {
    /// True when the mechanism is strategyproof by construction (order-statistic
    /// Phase 1 and Phase 2).
    pub fn is_order_statistic(&self) -> bool {
        !matches!(self, MechanismSpec::AMaxStar)
    }
}

/// Phase-2 rule after all parameters are made concrete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// 1-based, strictly increasing ranks into the sorted representatives.
    Ranks(Vec<usize>),
    /// Median representative and its nearest other representative; an
    /// equidistant tie goes to the left neighbour.
    ClosestToMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRule {
    pub theta: f64,
    pub selection: Selection,
}

impl ResolvedRule {
    /// Representative of a single group.
    pub fn representative(&self, group: &[f64]) -> f64 {
        let mut sorted = group.to_vec();
        sorted.sort_by(|a, b| cmp_pos(*a, *b));
        representative_of_sorted(&sorted, self.theta)
    }

    /// Phase 2 on unsorted representatives.
    pub fn select(&self, representatives: &[f64]) -> Result<Solution> {
        match &self.selection {
            Selection::Ranks(ranks) => facilities_by_rank(representatives, ranks),
            Selection::ClosestToMedian => Ok(a_max_star_select(representatives)),
        }
    }
}

/// Outcome of running a mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    /// One position per group, in group order.
    pub representatives: Vec<f64>,
    pub solution: Solution,
}

fn representative_of_sorted(sorted: &[f64], theta: f64) -> f64 {
    sorted[ceil_rank(theta, sorted.len()) - 1]
}

/// Position of the `ceil(theta n_g)`-leftmost agent of every group.
pub fn select_representatives(instance: &Instance, theta: f64) -> Vec<f64> {
    (0..instance.num_groups())
        .map(|g| representative_of_sorted(&instance.sorted_group(g), theta))
        .collect()
}

/// Representatives at the given 1-based ranks.
pub fn facilities_by_rank(representatives: &[f64], ranks: &[usize]) -> Result<Solution> {
    let mut sorted = representatives.to_vec();
    sorted.sort_by(|a, b| cmp_pos(*a, *b));
    let mut chosen = Vec::with_capacity(ranks.len());
    let mut previous = 0usize;
    for &rank in ranks {
        if rank == 0 || rank > sorted.len() {
            return Err(Error::RankOutOfRange {
                rank,
                len: sorted.len(),
            });
        }
        if rank <= previous {
            return Err(Error::InvalidParameter(format!(
                "ranks must be strictly increasing, got {ranks:?}"
            )));
        }
        previous = rank;
        chosen.push(sorted[rank - 1]);
    }
    Ok(Solution::new(chosen))
}

/// Median representative (rank `ceil(m/2)`) plus the closest other one.
///
/// # Panics
/// If fewer than two representatives are given.
pub fn a_max_star_select(representatives: &[f64]) -> Solution {
    assert!(representatives.len() >= 2, "need at least two representatives");
    let mut sorted = representatives.to_vec();
    sorted.sort_by(|a, b| cmp_pos(*a, *b));
    let median = sorted.len().div_ceil(2) - 1;
    let w1 = sorted[median];
    // nearest other representative is always an adjacent one in sorted order
    let left = median.checked_sub(1).map(|i| sorted[i]);
    let right = sorted.get(median + 1).copied();
    let w2 = match (left, right) {
        (Some(l), Some(r)) => {
            if w1 - l <= r - w1 {
                l
            } else {
                r
            }
        }
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => unreachable!(),
    };
    Solution::new(vec![w1, w2])
}

fn expect_k(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::FacilityCountMismatch { expected, actual });
    }
    Ok(())
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} = {x} is outside (0, 1]"
        )));
    }
    Ok(())
}

fn param_rule(theta: f64, l: f64, r: f64, m: usize) -> Result<ResolvedRule> {
    check_unit("theta", theta)?;
    check_unit("l", l)?;
    check_unit("r", r)?;
    let l_rank = ceil_rank(l, m);
    let r_rank = ceil_rank(r, m);
    if l_rank >= r_rank {
        return Err(Error::InvalidParamPair { l_rank, r_rank, m });
    }
    Ok(ResolvedRule {
        theta,
        selection: Selection::Ranks(vec![l_rank, r_rank]),
    })
}

/// Makes a spec concrete for `m` groups and `k` facilities.
///
/// `variant` only matters for [`MechanismSpec::SpK2`].
pub fn resolve_spec(spec: &MechanismSpec, m: usize, k: usize, variant: Variant) -> Result<ResolvedRule> {
    if k < 2 {
        return Err(Error::TooFewFacilities { k });
    }
    if m < k {
        return Err(Error::TooFewGroups { groups: m, k });
    }
    match spec {
        MechanismSpec::ParamK2 { theta, l, r } => {
            expect_k(2, k)?;
            param_rule(*theta, *l, *r, m)
        }
        MechanismSpec::SumK2Dispatcher => {
            expect_k(2, k)?;
            match m {
                3 => param_rule(1.0 / 3.0, 2.0 / 3.0, 1.0, m),
                5 => param_rule(2.0 / 5.0, 3.0 / 5.0, 4.0 / 5.0, m),
                _ => {
                    let root2 = std::f64::consts::SQRT_2;
                    param_rule(0.5, root2 - 1.0, 2.0 - root2, m)
                }
            }
        }
        MechanismSpec::MaxK2Dispatcher => {
            expect_k(2, k)?;
            if m.is_multiple_of(2) {
                Ok(ResolvedRule {
                    theta: 0.5,
                    selection: Selection::Ranks(vec![m / 2, m / 2 + 1]),
                })
            } else {
                let median = m.div_ceil(2);
                Ok(ResolvedRule {
                    theta: (m - 1) as f64 / (2 * m) as f64,
                    selection: Selection::Ranks(vec![median, median + 1]),
                })
            }
        }
        MechanismSpec::SpK2 => {
            let concrete = match variant {
                Variant::Sum => MechanismSpec::SumK2Dispatcher,
                Variant::Max => MechanismSpec::MaxK2Dispatcher,
            };
            resolve_spec(&concrete, m, k, variant)
        }
        MechanismSpec::AMaxStar => {
            expect_k(2, k)?;
            Ok(ResolvedRule {
                theta: 0.5,
                selection: Selection::ClosestToMedian,
            })
        }
        MechanismSpec::SumK(spec_k) => {
            if let Some(sk) = spec_k {
                expect_k(*sk, k)?;
            }
            let ranks = (1..=k).map(|l| (l * m).div_ceil(k + 1)).collect();
            Ok(ResolvedRule {
                theta: 0.5,
                selection: Selection::Ranks(ranks),
            })
        }
        MechanismSpec::MaxK(spec_k) => {
            if let Some(sk) = spec_k {
                expect_k(*sk, k)?;
            }
            let centre = m.div_ceil(2);
            let offset = k.div_ceil(2);
            let ranks = (1..=k).map(|l| centre + l - offset).collect();
            Ok(ResolvedRule {
                theta: 0.5,
                selection: Selection::Ranks(ranks),
            })
        }
    }
}

/// Runs both phases of a mechanism on an instance.
pub fn run_mechanism(spec: &MechanismSpec, instance: &Instance, variant: Variant) -> Result<MechanismOutcome> {
    let rule = resolve_spec(spec, instance.num_groups(), instance.k(), variant)?;
    run_rule(&rule, instance)
}

pub fn run_rule(rule: &ResolvedRule, instance: &Instance) -> Result<MechanismOutcome> {
    let representatives = select_representatives(instance, rule.theta);
    let solution = rule.select(&representatives)?;
    Ok(MechanismOutcome {
        representatives,
        solution,
    })
}

impl fmt::Display for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MechanismSpec::ParamK2 { theta, l, r } => {
                write!(f, "param-k2:theta={theta},l={l},r={r}")
            }
            MechanismSpec::SumK2Dispatcher => f.write_str("sum-k2"),
            MechanismSpec::MaxK2Dispatcher => f.write_str("max-k2"),
            MechanismSpec::SpK2 => f.write_str("sp-k2"),
            MechanismSpec::AMaxStar => f.write_str("a-max-star"),
            MechanismSpec::SumK(None) => f.write_str("sum-k"),
            MechanismSpec::SumK(Some(k)) => write!(f, "sum-k:k={k}"),
            MechanismSpec::MaxK(None) => f.write_str("max-k"),
            MechanismSpec::MaxK(Some(k)) => write!(f, "max-k:k={k}"),
        }
    }
}

/// Splits `name:key=value,key=value` into the name and its parameters.
pub(crate) fn parse_params(s: &str) -> Result<(&str, Vec<(&str, &str)>)> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n.trim(), Some(r)),
        None => (s.trim(), None),
    };
    let mut params = Vec::new();
    if let Some(rest) = rest {
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got '{part}'")))?;
            params.push((key.trim(), value.trim()));
        }
    }
    Ok((name, params))
}

pub(crate) fn take_param<T: FromStr>(params: &[(&str, &str)], key: &str) -> Result<Option<T>> {
    match params.iter().find(|(k, _)| *k == key) {
        None => Ok(None),
        Some((_, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidSpec(format!("cannot parse {key}='{v}'"))),
    }
}

pub(crate) fn reject_unknown(params: &[(&str, &str)], allowed: &[&str]) -> Result<()> {
    match params.iter().find(|(k, _)| !allowed.contains(k)) {
        Some((k, _)) => Err(Error::InvalidSpec(format!("unknown parameter '{k}'"))),
        None => Ok(()),
    }
}

impl FromStr for MechanismSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_params(s)?;
        let spec = match name {
            "param-k2" => {
                reject_unknown(&params, &["theta", "l", "r"])?;
                let get = |key: &str| -> Result<f64> {
                    take_param(&params, key)?
                        .ok_or_else(|| Error::InvalidSpec(format!("param-k2 needs {key}")))
                };
                MechanismSpec::ParamK2 {
                    theta: get("theta")?,
                    l: get("l")?,
                    r: get("r")?,
                }
            }
            "sum-k2" | "max-k2" | "sp-k2" | "a-max-star" => {
                reject_unknown(&params, &[])?;
                match name {
                    "sum-k2" => MechanismSpec::SumK2Dispatcher,
                    "max-k2" => MechanismSpec::MaxK2Dispatcher,
                    "sp-k2" => MechanismSpec::SpK2,
                    _ => MechanismSpec::AMaxStar,
                }
            }
            "sum-k" | "max-k" => {
                reject_unknown(&params, &["k"])?;
                let k: Option<usize> = take_param(&params, "k")?;
                if name == "sum-k" {
                    MechanismSpec::SumK(k)
                } else {
                    MechanismSpec::MaxK(k)
                }
            }
            other => return Err(Error::InvalidSpec(format!("unknown mechanism '{other}'"))),
        };
        Ok(spec)
    }
}
