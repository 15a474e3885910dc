//! Instances, solutions and the order-based primitives shared by every
//! mechanism: agent ordering, the group-weighted median and the
//! symmetrization transform.
//!
//! Agents are identified by `(group, index)` where `index` is the position
//! of the agent inside its group as supplied. Positions are never reordered
//! in storage; sorted views are computed on demand.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default cap on the per-group size produced by [`Instance::symmetrize`].
pub const DEFAULT_SYMMETRIZE_CAP: u128 = 1_000_000;

/// An agent, addressed by group and by its index inside the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentRef {
    pub group: usize,
    pub index: usize,
}

impl AgentRef {
    pub fn new(group: usize, index: usize) -> Self {
        Self { group, index }
    }
}

impl fmt::Display for AgentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.group, self.index)
    }
}

/// Total order on finite positions. Callers guarantee finiteness.
#[inline]
pub(crate) fn cmp_pos(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("positions are finite")
}

/// A validated problem instance: agents on the line, partitioned into fixed
/// groups, and the number of facilities to open.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    k: usize,
    groups: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
pub(crate) struct RawInstance {
    pub k: usize,
    pub groups: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawInstance::deserialize(d)?;
        Instance::new(raw.groups, raw.k).map_err(serde::de::Error::custom)
    }
}

impl Instance {
    /// Validates raw groups and a facility count.
    ///
    /// Positions are kept bit-exactly as supplied.
    pub fn new(groups: Vec<Vec<f64>>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewFacilities { k });
        }
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::EmptyGroup { group: g });
            }
            if let Some(i) = group.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinitePosition { group: g, index: i });
            }
        }
        if groups.len() < k {
            return Err(Error::TooFewGroups {
                groups: groups.len(),
                k,
            });
        }
        Ok(Self { k, groups })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of groups `m`.
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Total number of agents `n`.
    pub fn num_agents(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &[f64] {
        &self.groups[g]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn into_groups(self) -> Vec<Vec<f64>> {
        self.groups
    }

    pub fn position(&self, agent: AgentRef) -> f64 {
        self.groups[agent.group][agent.index]
    }

    pub fn contains(&self, agent: AgentRef) -> bool {
        agent.group < self.groups.len() && agent.index < self.groups[agent.group].len()
    }

    /// True when every group has the same size.
    pub fn is_symmetric(&self) -> bool {
        let first = self.groups[0].len();
        self.groups.iter().all(|g| g.len() == first)
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentRef> + '_ {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, group)| (0..group.len()).map(move |i| AgentRef::new(g, i)))
    }

    /// All positions, flattened in group order.
    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.groups.iter().flatten().copied()
    }

    /// Copy of the instance with one agent's position replaced.
    pub fn with_report(&self, agent: AgentRef, position: f64) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::NonFinitePosition {
                group: agent.group,
                index: agent.index,
            });
        }
        let mut groups = self.groups.clone();
        groups[agent.group][agent.index] = position;
        Ok(Self { k: self.k, groups })
    }

    /// Copy of the instance with every position mapped through `f`.
    pub fn map_positions(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let groups = self
            .groups
            .iter()
            .map(|g| g.iter().map(|&x| f(x)).collect())
            .collect();
        Self::new(groups, self.k)
    }

    /// Sorted positions of one group.
    pub fn sorted_group(&self, g: usize) -> Vec<f64> {
        let mut v = self.groups[g].clone();
        v.sort_by(|a, b| cmp_pos(*a, *b));
        v
    }

    /// The agent ranking: by position, ties broken by group then index.
    pub fn agent_order(&self) -> Vec<AgentRef> {
        let mut agents: Vec<AgentRef> = self.agents().collect();
        agents.sort_by(|a, b| {
            cmp_pos(self.position(*a), self.position(*b)).then_with(|| a.cmp(b))
        });
        agents
    }

    /// Distinct position values, ascending, with the number of agents at each.
    pub fn distinct_positions(&self) -> Vec<(f64, usize)> {
        let mut all: Vec<f64> = self.positions().collect();
        all.sort_by(|a, b| cmp_pos(*a, *b));
        let mut out: Vec<(f64, usize)> = Vec::new();
        for x in all {
            match out.last_mut() {
                Some((v, c)) if *v == x => *c += 1,
                _ => out.push((x, 1)),
            }
        }
        out
    }

    /// Position of the weighted median agent.
    ///
    /// Each agent of group `g` weighs `1/n_g`. Walking the agent order, this
    /// returns the first agent whose inclusive prefix weight reaches `m/2`.
    /// Weights are summed exactly.
    pub fn weighted_median(&self) -> f64 {
        let m = self.num_groups();
        let target = BigRational::new(BigInt::from(m), BigInt::from(2));
        let mut prefix = BigRational::from_integer(BigInt::from(0));
        let order = self.agent_order();
        for agent in &order {
            let n_g = self.groups[agent.group].len();
            prefix += BigRational::new(BigInt::from(1), BigInt::from(n_g));
            if prefix >= target {
                return self.position(*agent);
            }
        }
        // total weight is exactly m, so the loop always returns
        unreachable!("prefix weight never reached m/2")
    }

    /// Symmetrization with the default size cap.
    pub fn symmetrize(&self) -> Result<Self> {
        self.symmetrize_with_cap(DEFAULT_SYMMETRIZE_CAP)
    }

    /// Replaces every group by one of size `P = prod_q n_q`, repeating each
    /// agent `P / n_g` times. Order statistics at every quantile and the
    /// weighted median are preserved.
    pub fn symmetrize_with_cap(&self, cap: u128) -> Result<Self> {
        let mut product: u128 = 1;
        for g in &self.groups {
            product = product
                .checked_mul(g.len() as u128)
                .filter(|p| *p <= cap)
                .ok_or(Error::SizeOverflow {
                    size: product.saturating_mul(g.len() as u128),
                    cap,
                })?;
        }
        let product = product as usize;
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let reps = product / g.len();
                g.iter()
                    .flat_map(|&x| std::iter::repeat_n(x, reps))
                    .collect()
            })
            .collect();
        Ok(Self {
            k: self.k,
            groups,
        })
    }

    /// Short stable fingerprint of the instance's canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("instance serializes");
        let hash = Sha256::digest(&json);
        hex::encode(&hash[..8])
    }
}

/// A multiset of exactly `k` facility locations, stored sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Solution {
    locations: Vec<f64>,
}

impl Solution {
    pub fn new(mut locations: Vec<f64>) -> Self {
        locations.sort_by(|a, b| cmp_pos(*a, *b));
        Self { locations }
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.locations[0]
    }

    pub fn max(&self) -> f64 {
        self.locations[self.locations.len() - 1]
    }

    /// Checks size `k` and that no location is used more often than agents
    /// report it.
    pub fn check_feasible(&self, instance: &Instance) -> Result<()> {
        if self.locations.len() != instance.k() {
            return Err(Error::InfeasibleSolution(format!(
                "expected {} locations, got {}",
                instance.k(),
                self.locations.len()
            )));
        }
        if self.locations.iter().any(|y| !y.is_finite()) {
            return Err(Error::InfeasibleSolution(
                "non-finite location".to_string(),
            ));
        }
        let available = instance.distinct_positions();
        let mut i = 0;
        while i < self.locations.len() {
            let y = self.locations[i];
            let used = self.locations[i..].iter().take_while(|&&v| v == y).count();
            let cap = available
                .iter()
                .find(|(v, _)| *v == y)
                .map(|(_, c)| *c)
                .unwrap_or(0);
            if used > cap {
                return Err(Error::InfeasibleSolution(format!(
                    "location {y} used {used} times but reported by {cap} agents"
                )));
            }
            i += used;
        }
        Ok(())
    }

    pub fn is_feasible(&self, instance: &Instance) -> bool {
        self.check_feasible(instance).is_ok()
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, y) in self.locations.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{y}")?;
        }
        write!(f, ")")
    }
}
