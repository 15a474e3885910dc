//! Search for beneficial unilateral misreports.
//!
//! For every agent and every report in a finite witness set, the mechanism
//! is re-run on the misreported instance and the agent's cost is evaluated
//! at its true position. A positive gain proves the mechanism is not
//! strategyproof; a clean audit is only evidence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{location_cost, Variant};
use crate::error::Result;
use crate::mechanism::{resolve_spec, MechanismSpec, ResolvedRule};
use crate::model::{cmp_pos, AgentRef, Instance};

/// Gains at or below this are treated as rounding noise.
pub const GAIN_TOLERANCE: f64 = 1e-9;

/// Offset used to probe both sides of every reported position.
pub const PROBE_DELTA: f64 = 1e-6;

/// Candidates whose gains differ by less than this are equally good.
const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub agent: AgentRef,
    pub reported: f64,
    /// Cost at the true position under the truthful outcome.
    pub true_cost: f64,
    /// Cost at the true position under the misreported outcome.
    pub deviated_cost: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAudit {
    pub agent: AgentRef,
    /// Largest gain over all candidate reports (0 when truth is best).
    pub max_gain: f64,
    /// The best beneficial misreport, present only when it beats the noise
    /// threshold.
    pub best: Option<Deviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub instance_digest: String,
    pub variant: Variant,
    pub spec: String,
    pub agents: Vec<AgentAudit>,
    pub max_gain: f64,
}

impl AuditReport {
    pub fn has_witness(&self) -> bool {
        self.max_gain > GAIN_TOLERANCE
    }

    /// The overall best deviation, first by gain then by agent order.
    pub fn witness(&self) -> Option<&Deviation> {
        self.agents
            .iter()
            .filter_map(|a| a.best.as_ref())
            .fold(None, |acc: Option<&Deviation>, d| match acc {
                Some(b) if b.gain >= d.gain - GAIN_TIE => Some(b),
                _ => Some(d),
            })
    }

    pub fn deviations(&self) -> impl Iterator<Item = &Deviation> {
        self.agents.iter().filter_map(|a| a.best.as_ref())
    }
}

/// Finite set of misreports to try: every distinct reported position, every
/// midpoint of two distinct positions, one unit beyond each extreme, and
/// each distinct position shifted by `±PROBE_DELTA`. Sorted and deduplicated.
///
/// The set depends only on the reported profile, so it is shared by all
/// agents of an instance.
pub fn deviation_candidates(instance: &Instance) -> Vec<f64> {
    let distinct: Vec<f64> = instance.distinct_positions().into_iter().map(|(v, _)| v).collect();
    let mut out = Vec::with_capacity(distinct.len() * (distinct.len() + 5) / 2 + 2);
    for (i, &a) in distinct.iter().enumerate() {
        out.push(a);
        out.push(a - PROBE_DELTA);
        out.push(a + PROBE_DELTA);
        for &b in &distinct[i + 1..] {
            out.push(a + (b - a) / 2.0);
        }
    }
    out.push(distinct[0] - 1.0);
    out.push(distinct[distinct.len() - 1] + 1.0);
    out.sort_by(|a, b| cmp_pos(*a, *b));
    out.dedup();
    out
}

/// Evaluates every candidate misreport for every agent.
pub fn audit_instance(spec: &MechanismSpec, instance: &Instance, variant: Variant) -> Result<AuditReport> {
    let rule = resolve_spec(spec, instance.num_groups(), instance.k(), variant)?;
    let candidates = deviation_candidates(instance);
    let representatives: Vec<f64> = instance
        .groups()
        .iter()
        .map(|g| rule.representative(g))
        .collect();
    let truthful = rule.select(&representatives)?;

    let agents: Vec<AgentRef> = instance.agents().collect();
    let audits = agents
        .par_iter()
        .map(|&agent| {
            audit_agent(
                &rule,
                instance,
                variant,
                agent,
                &representatives,
                truthful.locations(),
                &candidates,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let max_gain = audits.iter().map(|a| a.max_gain).fold(0.0, f64::max);
    Ok(AuditReport {
        instance_digest: instance.digest(),
        variant,
        spec: spec.to_string(),
        agents: audits,
        max_gain,
    })
}

fn audit_agent(
    rule: &ResolvedRule,
    instance: &Instance,
    variant: Variant,
    agent: AgentRef,
    representatives: &[f64],
    truthful: &[f64],
    candidates: &[f64],
) -> Result<AgentAudit> {
    let truth = instance.position(agent);
    let true_cost = location_cost(truth, truthful, variant);
    let is_reported = |x: f64| instance.positions().any(|p| p == x);

    let mut group = instance.group(agent.group).to_vec();
    let mut reps = representatives.to_vec();
    let mut max_gain = 0.0f64;
    let mut best: Option<Deviation> = None;
    for &report in candidates {
        // only the deviating agent's group can change representative
        group[agent.index] = report;
        reps[agent.group] = rule.representative(&group);
        let outcome = rule.select(&reps)?;
        let deviated_cost = location_cost(truth, outcome.locations(), variant);
        let gain = true_cost - deviated_cost;
        max_gain = max_gain.max(gain);
        if gain <= GAIN_TOLERANCE {
            continue;
        }
        let candidate = Deviation {
            agent,
            reported: report,
            true_cost,
            deviated_cost,
            gain,
        };
        best = Some(match best {
            None => candidate,
            Some(current) => {
                if prefer(&candidate, &current, truth, &is_reported) {
                    candidate
                } else {
                    current
                }
            }
        });
    }
    Ok(AgentAudit {
        agent,
        max_gain,
        best,
    })
}

/// Higher gain wins; among equal gains prefer copying an existing report,
/// then the report closest to the truth, then the smaller report.
fn prefer(a: &Deviation, b: &Deviation, truth: f64, is_reported: &impl Fn(f64) -> bool) -> bool {
    if (a.gain - b.gain).abs() > GAIN_TIE {
        return a.gain > b.gain;
    }
    let key = |d: &Deviation| (!is_reported(d.reported), (d.reported - truth).abs(), d.reported);
    let (ka, kb) = (key(a), key(b));
    match ka.0.cmp(&kb.0) {
        std::cmp::Ordering::Equal => {}
        other => return other.is_lt(),
    }
    match cmp_pos(ka.1, kb.1) {
        std::cmp::Ordering::Equal => ka.2 < kb.2,
        other => other.is_lt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::run_mechanism;

    fn witness_instance() -> Instance {
        Instance::new(vec![vec![0.0, 0.1], vec![0.51, 0.51], vec![1.0, 1.0]], 2).unwrap()
    }

    #[test]
    fn candidates_for_two_points() {
        let inst = Instance::new(vec![vec![0.0], vec![1.0]], 2).unwrap();
        let c = deviation_candidates(&inst);
        let expected = vec![-1.0, -PROBE_DELTA, 0.0, PROBE_DELTA, 0.5, 1.0 - PROBE_DELTA, 1.0, 1.0 + PROBE_DELTA, 2.0];
        assert_eq!(c, expected);
    }

    #[test]
    fn candidates_for_single_point() {
        let inst = Instance::new(vec![vec![5.0], vec![5.0, 5.0]], 2).unwrap();
        assert_eq!(
            deviation_candidates(&inst),
            vec![4.0, 5.0 - PROBE_DELTA, 5.0, 5.0 + PROBE_DELTA, 6.0]
        );
    }

    #[test]
    fn candidates_for_witness_instance() {
        // 4 positions + 6 midpoints + 2 extremes + 8 probes, no collisions
        assert_eq!(deviation_candidates(&witness_instance()).len(), 20);
    }

    #[test]
    fn a_max_star_witness() {
        let report = audit_instance(&MechanismSpec::AMaxStar, &witness_instance(), Variant::Max).unwrap();
        assert!(report.has_witness());
        let first = &report.agents[0];
        let dev = first.best.as_ref().unwrap();
        assert_eq!(dev.agent, AgentRef::new(0, 0));
        assert_eq!(dev.reported, 0.1);
        assert!((dev.true_cost - 1.0).abs() < 1e-12);
        assert!((dev.deviated_cost - 0.51).abs() < 1e-12);
        assert!((dev.gain - 0.49).abs() < 1e-12);
        assert_eq!(report.witness().unwrap().agent, AgentRef::new(0, 0));
    }

    #[test]
    fn max_dispatcher_is_clean_on_witness_instance() {
        let report = audit_instance(&MechanismSpec::MaxK2Dispatcher, &witness_instance(), Variant::Max).unwrap();
        assert!(report.max_gain <= GAIN_TOLERANCE);
        assert!(report.witness().is_none());
    }

    #[test]
    fn coincident_instance_has_zero_gain() {
        let inst = Instance::new(vec![vec![2.0, 2.0], vec![2.0], vec![2.0]], 2).unwrap();
        for spec in [MechanismSpec::AMaxStar, MechanismSpec::SumK2Dispatcher, MechanismSpec::MaxK(None)] {
            let report = audit_instance(&spec, &inst, Variant::Max).unwrap();
            assert_eq!(report.max_gain, 0.0);
        }
    }

    #[test]
    fn witnesses_replay_through_the_mechanism() {
        let inst = witness_instance();
        let spec = MechanismSpec::AMaxStar;
        let report = audit_instance(&spec, &inst, Variant::Max).unwrap();
        for dev in report.deviations() {
            let truthful = run_mechanism(&spec, &inst, Variant::Max).unwrap();
            let lie = inst.with_report(dev.agent, dev.reported).unwrap();
            let deviated = run_mechanism(&spec, &lie, Variant::Max).unwrap();
            let x = inst.position(dev.agent);
            assert_eq!(crate::cost::individual_cost(x, &truthful.solution, Variant::Max), dev.true_cost);
            assert_eq!(crate::cost::individual_cost(x, &deviated.solution, Variant::Max), dev.deviated_cost);
        }
    }
}
