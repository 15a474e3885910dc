//! Ratio records, closed-form upper bounds and seeded fuzzing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::audit_instance;
use crate::cost::{ratio_of, social_cost, Variant};
use crate::error::{Error, Result};
use crate::forge::{gen_random, trial_seed, Distribution, RandomConfig};
use crate::mechanism::{ceil_rank, resolve_spec, run_mechanism, MechanismSpec, Selection};
use crate::model::Instance;
use crate::oracle::optimal_fast;

/// Slack allowed when comparing an observed ratio against a bound.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Upper bound on the ratio of the two-facility order-statistic mechanism
/// with parameters `(theta, l, r)` on `m` symmetric groups of `n / m` agents.
pub fn theoretical_bound(theta: f64, l: f64, r: f64, m: usize, n: usize, variant: Variant) -> Result<f64> {
    for (name, x) in [("theta", theta), ("l", l), ("r", r)] {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::InvalidParameter(format!("{name} = {x} is outside (0, 1]")));
        }
    }
    let l_rank = ceil_rank(l, m);
    let r_rank = ceil_rank(r, m);
    if l_rank >= r_rank {
        return Err(Error::InvalidParamPair { l_rank, r_rank, m });
    }
    bound_for_ranks(theta, l_rank, r_rank, m, n, variant)
}

/// Same bound with the facility ranks `ceil(l m)` and `ceil(r m)` given
/// directly.
pub fn bound_for_ranks(
    theta: f64,
    l_rank: usize,
    r_rank: usize,
    m: usize,
    n: usize,
    variant: Variant,
) -> Result<f64> {
    if m < 2 || n == 0 || !n.is_multiple_of(m) {
        return Err(Error::InvalidParameter(format!(
            "n = {n} must be a positive multiple of m = {m} >= 2"
        )));
    }
    if l_rank == 0 || l_rank >= r_rank || r_rank > m {
        return Err(Error::InvalidParamPair { l_rank, r_rank, m });
    }
    let size = n / m;
    let t = ceil_rank(theta, size) as f64;
    let (n, m, s) = (n as f64, m as f64, size as f64);
    let (lr, rr) = (l_rank as f64, r_rank as f64);
    let y1 = 1.0 + variant.indicator();
    let terms = [
        n / ((m + 1.0 - lr) * (s + 1.0 - t)) - 1.0,
        n / (y1 * (m + 1.0 - rr) * (s + 1.0 - t)),
        n / (rr * t) - 1.0,
        n / (y1 * lr * t),
    ];
    Ok(terms.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// The bound of [`bound_for_ranks`] as `n` grows with `m` fixed. Infinite
/// when `theta = 1`.
pub fn bound_limit_for_ranks(theta: f64, l_rank: usize, r_rank: usize, m: usize, variant: Variant) -> f64 {
    let (m, lr, rr) = (m as f64, l_rank as f64, r_rank as f64);
    let y1 = 1.0 + variant.indicator();
    let terms = [
        m / ((m + 1.0 - lr) * (1.0 - theta)) - 1.0,
        m / (y1 * (m + 1.0 - rr) * (1.0 - theta)),
        m / (rr * theta) - 1.0,
        m / (y1 * lr * theta),
    ];
    terms.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Size of the smallest symmetric group that reproduces every group's
/// order statistics: the lcm of the group sizes.
fn symmetric_group_size(instance: &Instance) -> Option<usize> {
    let mut acc: u128 = 1;
    for n in instance.group_sizes() {
        let n = n as u128;
        acc = (acc / gcd(acc, n)).checked_mul(n)?;
    }
    usize::try_from(acc).ok()
}

/// Applicable closed-form bound for a spec on an instance, and its large-n
/// limit.
pub fn applicable_bound(spec: &MechanismSpec, instance: &Instance, variant: Variant) -> Result<Option<(f64, f64)>> {
    let m = instance.num_groups();
    let k = instance.k();
    let rule = resolve_spec(spec, m, k, variant)?;
    let pair = match (spec, &rule.selection) {
        (
            MechanismSpec::ParamK2 { .. }
            | MechanismSpec::SumK2Dispatcher
            | MechanismSpec::MaxK2Dispatcher
            | MechanismSpec::SpK2,
            Selection::Ranks(ranks),
        ) => {
            let Some(n) = symmetric_group_size(instance).and_then(|s| s.checked_mul(m)) else {
                return Ok(None);
            };
            let bound = bound_for_ranks(rule.theta, ranks[0], ranks[1], m, n, variant)?;
            let limit = bound_limit_for_ranks(rule.theta, ranks[0], ranks[1], m, variant);
            Some((bound, limit))
        }
        (MechanismSpec::SumK(_), _) if variant == Variant::Sum && k >= 3 => {
            let b = 3.0 + 2.0 / k as f64;
            Some((b, b))
        }
        (MechanismSpec::MaxK(_), _) if variant == Variant::Max && k >= 3 => {
            let b = 2.0 * (k + 1) as f64;
            Some((b, b))
        }
        (MechanismSpec::AMaxStar, _) if variant == Variant::Max && m % 2 == 1 => Some((3.5, 3.5)),
        _ => None,
    };
    Ok(pair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_digest: String,
    pub spec: String,
    pub variant: Variant,
    pub mechanism_cost: f64,
    pub optimal_cost: f64,
    pub ratio: f64,
    pub bound: Option<f64>,
    pub bound_limit: Option<f64>,
    pub audit_max_gain: Option<f64>,
}

impl RunRecord {
    /// False only when a bound applies and the ratio exceeds it.
    pub fn within_bound(&self) -> bool {
        self.bound.is_none_or(|b| self.ratio <= b + BOUND_TOLERANCE)
    }
}

pub fn ratio_record(spec: &MechanismSpec, instance: &Instance, variant: Variant, audit: bool) -> Result<RunRecord> {
    let outcome = run_mechanism(spec, instance, variant)?;
    let mechanism_cost = social_cost(instance, &outcome.solution, variant)?.social;
    let optimal_cost = optimal_fast(instance, variant)?.cost;
    let ratio = ratio_of(mechanism_cost, optimal_cost)?;
    let bound = applicable_bound(spec, instance, variant)?;
    let audit_max_gain = if audit {
        Some(audit_instance(spec, instance, variant)?.max_gain)
    } else {
        None
    };
    Ok(RunRecord {
        instance_digest: instance.digest(),
        spec: spec.to_string(),
        variant,
        mechanism_cost,
        optimal_cost,
        ratio,
        bound: bound.map(|b| b.0),
        bound_limit: bound.map(|b| b.1),
        audit_max_gain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub spec: MechanismSpec,
    pub variant: Variant,
    pub trials: u64,
    pub seed: u64,
    pub k: usize,
    /// Inclusive range for the number of groups; the lower end is raised to `k`.
    pub groups: (usize, usize),
    pub max_size: usize,
    pub distribution: Distribution,
    /// Claimed bound to check the worst ratio against.
    pub bound: Option<f64>,
}

impl FuzzConfig {
    pub fn new(spec: MechanismSpec, variant: Variant, trials: u64, seed: u64) -> Self {
        Self {
            spec,
            variant,
            trials,
            seed,
            k: 2,
            groups: (2, 6),
            max_size: 4,
            distribution: Distribution::Uniform,
            bound: None,
        }
    }

    fn random_config(&self, trial: u64) -> RandomConfig {
        RandomConfig::new(self.groups, (1, self.max_size), self.k, trial_seed(self.seed, trial))
            .with_distribution(self.distribution)
    }

    /// Instance generated for one trial.
    pub fn trial_instance(&self, trial: u64) -> Result<Instance> {
        gen_random(&self.random_config(trial))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub spec: String,
    pub variant: Variant,
    pub trials: u64,
    pub seed: u64,
    pub worst_ratio: f64,
    pub worst_trial: u64,
    pub worst_instance: Instance,
    pub worst_record: RunRecord,
    pub bound: Option<f64>,
    /// `None` when no bound was supplied.
    pub pass: Option<bool>,
    /// Trials whose ratio exceeded the supplied bound.
    pub bound_violations: u64,
    /// Trials whose ratio exceeded their own closed-form bound.
    pub closed_form_violations: u64,
}

/// Runs `trials` seeded random instances and keeps the worst ratio.
/// Ties go to the lowest trial index, so the result does not depend on
/// scheduling.
pub fn fuzz(config: &FuzzConfig) -> Result<FuzzSummary> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let records = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let instance = config.trial_instance(trial)?;
            let record = ratio_record(&config.spec, &instance, config.variant, false)?;
            Ok((trial, record))
        })
        .collect::<Result<Vec<_>>>()?;

    let tolerance = BOUND_TOLERANCE;
    let bound_violations = match config.bound {
        Some(b) => records.iter().filter(|(_, r)| r.ratio > b + tolerance).count() as u64,
        None => 0,
    };
    let closed_form_violations = records.iter().filter(|(_, r)| !r.within_bound()).count() as u64;
    let (worst_trial, worst_record) = records
        .into_iter()
        .reduce(|best, next| if next.1.ratio > best.1.ratio { next } else { best })
        .expect("at least one trial");
    Ok(FuzzSummary {
        spec: config.spec.to_string(),
        variant: config.variant,
        trials: config.trials,
        seed: config.seed,
        worst_ratio: worst_record.ratio,
        worst_trial,
        worst_instance: config.trial_instance(worst_trial)?,
        worst_record,
        bound: config.bound,
        pass: config.bound.map(|_| bound_violations == 0),
        bound_violations,
        closed_form_violations,
    })
}

/// [`fuzz`] on a dedicated pool of `threads` workers.
pub fn fuzz_with_threads(config: &FuzzConfig, threads: usize) -> Result<FuzzSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| fuzz(config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m3_parameters_give_nine_quarters() {
        let b = theoretical_bound(1.0 / 3.0, 2.0 / 3.0, 1.0, 3, 36, Variant::Sum).unwrap();
        assert!((b - 9.0 / 4.0).abs() < 1e-12);
        let limit = bound_limit_for_ranks(1.0 / 3.0, 2, 3, 3, Variant::Sum);
        assert!((limit - 9.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn m5_parameters_evaluate_term_by_term() {
        // n = 50: s = 10, t = ceil(4) = 4, ranks (3, 4)
        //   50/(3*7) - 1 = 29/21, 50/(2*2*7) = 25/14, 50/(4*4) - 1 = 17/8, 50/(2*3*4) = 25/12
        let b = theoretical_bound(0.4, 0.6, 0.8, 5, 50, Variant::Sum).unwrap();
        assert!((b - 17.0 / 8.0).abs() < 1e-12, "{b}");
        // n = 185: s = 37, t = ceil(14.8) = 15; the third term is 185/60 - 1 = 25/12
        let b = theoretical_bound(0.4, 0.6, 0.8, 5, 185, Variant::Sum).unwrap();
        assert!((b - 25.0 / 12.0).abs() < 1e-12, "{b}");
        let limit = bound_limit_for_ranks(0.4, 3, 4, 5, Variant::Sum);
        assert!((limit - 17.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn even_max_dispatcher_gives_four() {
        let b = theoretical_bound(0.5, 0.5, 0.5 + 1e-6, 4, 8, Variant::Max).unwrap();
        assert!((b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bound_rejects_bad_input() {
        assert!(matches!(
            theoretical_bound(0.5, 0.5, 0.5, 4, 8, Variant::Sum),
            Err(Error::InvalidParamPair { .. })
        ));
        assert!(theoretical_bound(0.5, 0.25, 0.75, 4, 10, Variant::Sum).is_err());
        assert!(theoretical_bound(0.0, 0.25, 0.75, 4, 8, Variant::Sum).is_err());
    }

    #[test]
    fn sqrt2_limit_is_one_plus_sqrt2() {
        // ranks for large m approach (sqrt2 - 1) m and (2 - sqrt2) m
        let m = 1_000_000;
        let l = ceil_rank(std::f64::consts::SQRT_2 - 1.0, m);
        let r = ceil_rank(2.0 - std::f64::consts::SQRT_2, m);
        let limit = bound_limit_for_ranks(0.5, l, r, m, Variant::Sum);
        assert!((limit - (1.0 + std::f64::consts::SQRT_2)).abs() < 1e-4, "{limit}");
    }

    #[test]
    fn record_for_lower_family() {
        let inst = Instance::new(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]], 3).unwrap();
        let rec = ratio_record(&MechanismSpec::SumK(None), &inst, Variant::Sum, true).unwrap();
        assert!((rec.ratio - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(rec.bound, Some(3.0 + 2.0 / 3.0));
        assert!(rec.within_bound());
        assert!(rec.audit_max_gain.unwrap() <= 1e-9);
    }

    #[test]
    fn record_bound_uses_symmetrized_size() {
        let inst = Instance::new(vec![vec![0.0], vec![0.3, 0.8], vec![1.0, 0.2, 0.4]], 2).unwrap();
        let rec = ratio_record(&MechanismSpec::SumK2Dispatcher, &inst, Variant::Sum, false).unwrap();
        // m = 3 rule, lcm of sizes = 6, n = 18
        let expected = theoretical_bound(1.0 / 3.0, 2.0 / 3.0, 1.0, 3, 18, Variant::Sum).unwrap();
        assert_eq!(rec.bound, Some(expected));
        assert!(rec.within_bound());
    }

    #[test]
    fn fuzz_is_deterministic_across_pools() {
        let mut config = FuzzConfig::new(MechanismSpec::SumK2Dispatcher, Variant::Sum, 200, 7);
        config.bound = Some(1.0 + std::f64::consts::SQRT_2);
        let a = fuzz_with_threads(&config, 1).unwrap();
        let b = fuzz_with_threads(&config, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pass, Some(true));
        assert_eq!(a.closed_form_violations, 0);
        let replay = ratio_record(&config.spec, &a.worst_instance, config.variant, false).unwrap();
        assert_eq!(replay.ratio, a.worst_ratio);
    }
}
