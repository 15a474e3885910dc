//! Exact minimum-social-cost solutions.
//!
//! The candidate set is the distinct reported positions, each usable as many
//! times as agents report it. [`optimal_full`] enumerates every feasible
//! multiset; the two fast oracles exploit the structure of each variant and
//! serve as independent cross-checks.

use serde::{Deserialize, Serialize};

use crate::cost::{social_cost_value, Variant};
use crate::error::{Error, Result};
use crate::model::{cmp_pos, Instance, Solution};

/// Default cap on the number of multisets [`optimal_full`] may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Two costs within this distance count as a tie; the earlier candidate in
/// lexicographic order wins.
const TIE_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalResult {
    pub solution: Solution,
    pub cost: f64,
}

fn binomial(n: u128, r: u128) -> u128 {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Optimum by exhaustive enumeration with the default size cap.
pub fn optimal_full(instance: &Instance, variant: Variant) -> Result<OptimalResult> {
    optimal_full_with_cap(instance, variant, DEFAULT_ENUMERATION_CAP)
}

/// Optimum by exhaustive enumeration of all feasible multisets of
/// candidate values, visited in lexicographic order.
pub fn optimal_full_with_cap(instance: &Instance, variant: Variant, cap: u128) -> Result<OptimalResult> {
    let candidates = instance.distinct_positions();
    let k = instance.k();
    let d = candidates.len() as u128;
    let size = binomial(d + k as u128 - 1, k as u128);
    if size > cap {
        return Err(Error::EnumerationTooLarge { size, cap });
    }

    struct Search<'a> {
        instance: &'a Instance,
        variant: Variant,
        candidates: &'a [(f64, usize)],
        current: Vec<f64>,
        best: Option<(f64, Vec<f64>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, start: usize, slots_left: usize) {
            if slots_left == 0 {
                let cost = social_cost_value(self.instance, &self.current, self.variant);
                let better = match &self.best {
                    None => true,
                    Some((best, _)) => cost < best - TIE_TOLERANCE,
                };
                if better {
                    self.best = Some((cost, self.current.clone()));
                }
                return;
            }
            for idx in start..self.candidates.len() {
                let (value, cap) = self.candidates[idx];
                let used = self.current.iter().rev().take_while(|&&v| v == value).count();
                if used >= cap {
                    continue;
                }
                self.current.push(value);
                self.visit(idx, slots_left - 1);
                self.current.pop();
            }
        }
    }

    let mut search = Search {
        instance,
        variant,
        candidates: &candidates,
        current: Vec::with_capacity(k),
        best: None,
    };
    search.visit(0, k);
    // n >= k always admits a feasible multiset
    let (_, locations) = search.best.expect("a valid instance has a feasible solution");
    Ok(finish(instance, locations, variant))
}

fn finish(instance: &Instance, locations: Vec<f64>, variant: Variant) -> OptimalResult {
    let solution = Solution::new(locations);
    let cost = social_cost_value(instance, solution.locations(), variant);
    OptimalResult { solution, cost }
}

/// Sum-variant optimum via separability: each facility contributes
/// `f(p) = (1/m) sum_g (1/n_g) sum_{i in g} |x_i - p|` independently, so the
/// `k` cheapest candidates (respecting multiplicity) are optimal.
pub fn optimal_sum_fast(instance: &Instance) -> OptimalResult {
    let candidates = instance.distinct_positions();
    let mut scored: Vec<(f64, f64, usize)> = candidates
        .iter()
        .map(|&(p, cap)| (social_cost_value(instance, &[p], Variant::Sum), p, cap))
        .collect();
    scored.sort_by(|a, b| cmp_pos(a.0, b.0).then_with(|| cmp_pos(a.1, b.1)));

    let k = instance.k();
    let mut locations = Vec::with_capacity(k);
    for (_, p, cap) in scored {
        let take = cap.min(k - locations.len());
        locations.extend(std::iter::repeat_n(p, take));
        if locations.len() == k {
            break;
        }
    }
    finish(instance, locations, Variant::Sum)
}

/// Max-variant optimum: an agent's cost depends only on the leftmost and
/// rightmost facility, so enumerate endpoint pairs and fill the remaining
/// `k - 2` slots with any feasible values between them.
pub fn optimal_max_fast(instance: &Instance) -> Result<OptimalResult> {
    let candidates = instance.distinct_positions();
    let k = instance.k();
    // prefix[i] = number of agents at candidates[..i]
    let mut prefix = vec![0usize; candidates.len() + 1];
    for (i, (_, c)) in candidates.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c;
    }

    let mut best: Option<(f64, usize, usize)> = None;
    for lo in 0..candidates.len() {
        for hi in lo..candidates.len() {
            if prefix[hi + 1] - prefix[lo] < k {
                continue;
            }
            let ends = [candidates[lo].0, candidates[hi].0];
            let cost = social_cost_value(instance, &ends, Variant::Max);
            let better = match best {
                None => true,
                Some((b, _, _)) => cost < b - TIE_TOLERANCE,
            };
            if better {
                best = Some((cost, lo, hi));
            }
        }
    }
    let (_, lo, hi) = best.expect("the full candidate range always holds n >= k agents");

    let (low, high) = (candidates[lo].0, candidates[hi].0);
    let locations = if lo == hi {
        vec![low; k]
    } else {
        let mut remaining: Vec<(f64, usize)> = candidates[lo..=hi].to_vec();
        remaining[0].1 -= 1;
        let last = remaining.len() - 1;
        remaining[last].1 -= 1;
        // smallest available interior values first
        let mut interior = Vec::with_capacity(k - 2);
        for (value, cap) in remaining {
            let take = cap.min(k - 2 - interior.len());
            interior.extend(std::iter::repeat_n(value, take));
        }
        let mut locations = vec![low];
        locations.extend(interior);
        locations.push(high);
        locations
    };
    if locations.len() != k {
        return Err(Error::NoFeasibleFill { low, high });
    }
    Ok(finish(instance, locations, Variant::Max))
}

/// Variant-specific fast optimum.
pub fn optimal_fast(instance: &Instance, variant: Variant) -> Result<OptimalResult> {
    match variant {
        Variant::Sum => Ok(optimal_sum_fast(instance)),
        Variant::Max => optimal_max_fast(instance),
    }
}
