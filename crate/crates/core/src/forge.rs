//! Instance generators: the adversarial families behind the lower bounds,
//! seeded random instances, and JSON persistence.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{social_cost, Variant};
use crate::error::{Error, Result};
use crate::mechanism::{parse_params, reject_unknown, take_param};
use crate::model::{Instance, RawInstance, Solution};

/// Integer approximations `y/x` of `sqrt 2` (continued-fraction convergents).
pub const SQRT2_CONVERGENTS: [(usize, usize); 3] = [(5, 7), (12, 17), (29, 41)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    /// `x` groups with every agent at 0 and `y` half-and-half groups, each of
    /// size `s`; `k = 2`.
    SumK2Family { x: usize, y: usize, s: usize },
    /// Two groups `{1/2+eps, 1, 1}` and one group `{1, 1, 1}`; `k = 2`.
    MaxK2NineHalves { eps: f64 },
    /// One group `{0, 1}` and `k-1` groups `{1, 1}`.
    SumLowerK { k: usize },
    /// Same construction as [`FamilySpec::SumLowerK`], used for the max-variant.
    MaxLowerK { k: usize },
    /// Two copies of the group with an `alpha` fraction of its `s` agents at
    /// 0 and the rest at 1; `k = 2`.
    GAlpha { alpha: f64, s: usize },
}

/// Group of `s` agents, an `alpha` fraction of them at 0 and the rest at 1.
pub fn g_alpha(alpha: f64, s: usize) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(Error::InvalidFamilyParams("group size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidFamilyParams(format!("alpha = {alpha} is outside [0, 1]")));
    }
    let at_zero = alpha * s as f64;
    if (at_zero - at_zero.round()).abs() > 1e-9 {
        return Err(Error::InvalidFamilyParams(format!(
            "alpha * s = {at_zero} is not an integer"
        )));
    }
    let at_zero = at_zero.round() as usize;
    let mut group = vec![0.0; at_zero];
    group.resize(s, 1.0);
    Ok(group)
}

fn lower_family(k: usize) -> Result<Instance> {
    if k < 2 {
        return Err(Error::InvalidFamilyParams(format!("k = {k} must be at least 2")));
    }
    let mut groups = vec![vec![0.0, 1.0]];
    groups.extend(std::iter::repeat_n(vec![1.0, 1.0], k - 1));
    Instance::new(groups, k)
}

pub fn gen_family(family: &FamilySpec) -> Result<Instance> {
    match *family {
        FamilySpec::SumK2Family { x, y, s } => {
            if x == 0 || y == 0 {
                return Err(Error::InvalidFamilyParams("x and y must be positive".into()));
            }
            if s == 0 || s % 2 != 0 {
                return Err(Error::InvalidFamilyParams(format!("s = {s} must be positive and even")));
            }
            let mut groups = vec![g_alpha(1.0, s)?; x];
            groups.extend(std::iter::repeat_n(g_alpha(0.5, s)?, y));
            Instance::new(groups, 2)
        }
        FamilySpec::MaxK2NineHalves { eps } => {
            if !(eps > 0.0 && eps < 0.5) {
                return Err(Error::InvalidFamilyParams(format!("eps = {eps} is outside (0, 1/2)")));
            }
            let shifted = vec![0.5 + eps, 1.0, 1.0];
            Instance::new(vec![shifted.clone(), shifted, vec![1.0; 3]], 2)
        }
        FamilySpec::SumLowerK { k } | FamilySpec::MaxLowerK { k } => lower_family(k),
        FamilySpec::GAlpha { alpha, s } => {
            let group = g_alpha(alpha, s)?;
            Instance::new(vec![group.clone(), group], 2)
        }
    }
}

/// Social costs of the two co-located solutions on a [`FamilySpec::SumK2Family`]
/// instance, and the ratio a mechanism outputting `(1, 1)` would suffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumK2FamilyCosts {
    pub cost_at_one: f64,
    pub cost_at_zero: f64,
    /// `1 + 2x/y`.
    pub target_ratio: f64,
    pub realized_ratio: f64,
}

pub fn sum_k2_family_costs(x: usize, y: usize, s: usize) -> Result<SumK2FamilyCosts> {
    let instance = gen_family(&FamilySpec::SumK2Family { x, y, s })?;
    // (1, 1) needs two agents at 1
    if y * s / 2 < 2 {
        return Err(Error::InvalidFamilyParams(
            "need at least two agents at 1 to co-locate there".into(),
        ));
    }
    let at = |p: f64| -> Result<f64> {
        Ok(social_cost(&instance, &Solution::new(vec![p, p]), Variant::Sum)?.social)
    };
    let cost_at_one = at(1.0)?;
    let cost_at_zero = at(0.0)?;
    Ok(SumK2FamilyCosts {
        cost_at_one,
        cost_at_zero,
        target_ratio: 1.0 + 2.0 * x as f64 / y as f64,
        realized_ratio: cost_at_one / cost_at_zero,
    })
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::SumK2Family { x, y, s } => write!(f, "sum-k2:x={x},y={y},s={s}"),
            FamilySpec::MaxK2NineHalves { eps } => write!(f, "nine-halves:eps={eps}"),
            FamilySpec::SumLowerK { k } => write!(f, "sum-lower-k:k={k}"),
            FamilySpec::MaxLowerK { k } => write!(f, "max-lower-k:k={k}"),
            FamilySpec::GAlpha { alpha, s } => write!(f, "g-alpha:alpha={alpha},s={s}"),
        }
    }
}

impl FromStr for FamilySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_params(s)?;
        let need = |key: &str| Error::InvalidSpec(format!("family '{name}' needs {key}"));
        let family = match name {
            "sum-k2" => {
                reject_unknown(&params, &["x", "y", "s"])?;
                FamilySpec::SumK2Family {
                    x: take_param(&params, "x")?.ok_or_else(|| need("x"))?,
                    y: take_param(&params, "y")?.ok_or_else(|| need("y"))?,
                    s: take_param(&params, "s")?.unwrap_or(2),
                }
            }
            "nine-halves" => {
                reject_unknown(&params, &["eps"])?;
                FamilySpec::MaxK2NineHalves {
                    eps: take_param(&params, "eps")?.ok_or_else(|| need("eps"))?,
                }
            }
            "sum-lower-k" | "max-lower-k" => {
                reject_unknown(&params, &["k"])?;
                let k = take_param(&params, "k")?.ok_or_else(|| need("k"))?;
                if name == "sum-lower-k" {
                    FamilySpec::SumLowerK { k }
                } else {
                    FamilySpec::MaxLowerK { k }
                }
            }
            "g-alpha" => {
                reject_unknown(&params, &["alpha", "s"])?;
                FamilySpec::GAlpha {
                    alpha: take_param(&params, "alpha")?.ok_or_else(|| need("alpha"))?,
                    s: take_param(&params, "s")?.unwrap_or(2),
                }
            }
            other => return Err(Error::InvalidSpec(format!("unknown family '{other}'"))),
        };
        Ok(family)
    }
}

/// Position distribution for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform on `[0, 1]`.
    Uniform,
    /// Equal chance of `[0, 0.1]` and `[0.9, 1]`, uniform within each.
    TwoCluster,
    /// Uniform over `{0, 1/steps, ..., 1}`; produces many coincident agents.
    Lattice { steps: u32 },
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_params(s)?;
        match name {
            "uniform" => Ok(Distribution::Uniform),
            "two-cluster" => Ok(Distribution::TwoCluster),
            "lattice" => {
                reject_unknown(&params, &["steps"])?;
                let steps: u32 = take_param(&params, "steps")?.unwrap_or(4);
                if steps == 0 {
                    return Err(Error::InvalidSpec("lattice needs steps >= 1".into()));
                }
                Ok(Distribution::Lattice { steps })
            }
            other => Err(Error::InvalidSpec(format!("unknown distribution '{other}'"))),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::TwoCluster => f.write_str("two-cluster"),
            Distribution::Lattice { steps } => write!(f, "lattice:steps={steps}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    /// Inclusive range for the number of groups; the lower end is raised to `k`.
    pub groups: (usize, usize),
    /// Inclusive range for each group's size.
    pub group_size: (usize, usize),
    pub k: usize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl RandomConfig {
    pub fn new(groups: (usize, usize), group_size: (usize, usize), k: usize, seed: u64) -> Self {
        Self {
            groups,
            group_size,
            k,
            distribution: Distribution::Uniform,
            seed,
        }
    }

    pub fn with_distribution(mut self, distribution: Distribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::TooFewFacilities { k: self.k });
        }
        let (glo, ghi) = self.groups;
        if glo > ghi || ghi < self.k {
            return Err(Error::InvalidParameter(format!(
                "group range [{glo}, {ghi}] admits no m >= k = {}",
                self.k
            )));
        }
        let (slo, shi) = self.group_size;
        if slo == 0 || slo > shi {
            return Err(Error::InvalidParameter(format!(
                "group size range [{slo}, {shi}] is empty or contains 0"
            )));
        }
        Ok(())
    }
}

/// SplitMix64 step: derives independent per-trial seeds from a base seed.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw(rng: &mut ChaCha8Rng, distribution: Distribution) -> f64 {
    match distribution {
        Distribution::Uniform => rng.gen_range(0.0..=1.0),
        Distribution::TwoCluster => {
            if rng.gen_bool(0.5) {
                rng.gen_range(0.0..=0.1)
            } else {
                rng.gen_range(0.9..=1.0)
            }
        }
        Distribution::Lattice { steps } => rng.gen_range(0..=steps) as f64 / steps as f64,
    }
}

/// Deterministic random instance for the config's seed.
pub fn gen_random(config: &RandomConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = rng.gen_range(config.groups.0.max(config.k)..=config.groups.1);
    let groups = (0..m)
        .map(|_| {
            let size = rng.gen_range(config.group_size.0..=config.group_size.1);
            (0..size).map(|_| draw(&mut rng, config.distribution)).collect()
        })
        .collect();
    Instance::new(groups, config.k)
}

pub fn save_instance<W: Write>(instance: &Instance, mut sink: W) -> Result<()> {
    serde_json::to_writer(&mut sink, instance)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Reads instance JSON. Malformed input gives [`Error::Parse`]; well-formed
/// but invalid contents give the validation error.
pub fn load_instance<R: Read>(source: R) -> Result<Instance> {
    let raw: RawInstance = serde_json::from_reader(source)?;
    Instance::new(raw.groups, raw.k)
}

pub fn instance_to_json(instance: &Instance) -> String {
    serde_json::to_string(instance).expect("instance serializes")
}

pub fn instance_from_json(json: &str) -> Result<Instance> {
    load_instance(json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_examples() {
        let sum3 = gen_family(&FamilySpec::SumLowerK { k: 3 }).unwrap();
        assert_eq!(sum3.groups(), &[vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(sum3.k(), 3);

        let nine = gen_family(&FamilySpec::MaxK2NineHalves { eps: 1e-3 }).unwrap();
        assert_eq!(
            nine.groups(),
            &[vec![0.501, 1.0, 1.0], vec![0.501, 1.0, 1.0], vec![1.0, 1.0, 1.0]]
        );

        let max2 = gen_family(&FamilySpec::MaxLowerK { k: 2 }).unwrap();
        assert_eq!(max2.groups(), &[vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(max2.k(), 2);
    }

    #[test]
    fn sum_k2_family_layout() {
        let inst = gen_family(&FamilySpec::SumK2Family { x: 5, y: 7, s: 2 }).unwrap();
        assert_eq!(inst.num_groups(), 12);
        assert_eq!(inst.group(0), &[0.0, 0.0]);
        assert_eq!(inst.group(11), &[0.0, 1.0]);
        assert!(gen_family(&FamilySpec::SumK2Family { x: 5, y: 7, s: 3 }).is_err());
        assert!(gen_family(&FamilySpec::SumK2Family { x: 0, y: 7, s: 2 }).is_err());
    }

    #[test]
    fn sum_k2_family_costs_match_closed_form() {
        for (x, y) in SQRT2_CONVERGENTS {
            let c = sum_k2_family_costs(x, y, 2).unwrap();
            let m = (x + y) as f64;
            assert!((c.cost_at_one - (2 * x + y) as f64 / m).abs() < 1e-12);
            assert!((c.cost_at_zero - y as f64 / m).abs() < 1e-12);
            assert!((c.realized_ratio - c.target_ratio).abs() < 1e-12);
        }
        let first = sum_k2_family_costs(5, 7, 2).unwrap();
        assert!((first.target_ratio - 17.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn g_alpha_rules() {
        assert_eq!(g_alpha(0.5, 2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(g_alpha(1.0, 3).unwrap(), vec![0.0; 3]);
        assert_eq!(g_alpha(0.0, 2).unwrap(), vec![1.0; 2]);
        assert!(g_alpha(0.5, 3).is_err());
        assert!(g_alpha(1.5, 2).is_err());
        let inst = gen_family(&FamilySpec::GAlpha { alpha: 0.25, s: 4 }).unwrap();
        assert_eq!(inst.groups(), &[vec![0.0, 1.0, 1.0, 1.0], vec![0.0, 1.0, 1.0, 1.0]]);
    }

    #[test]
    fn family_validation() {
        assert!(gen_family(&FamilySpec::MaxK2NineHalves { eps: 0.5 }).is_err());
        assert!(gen_family(&FamilySpec::MaxK2NineHalves { eps: 0.0 }).is_err());
        assert!(gen_family(&FamilySpec::SumLowerK { k: 1 }).is_err());
    }

    #[test]
    fn family_strings() {
        for s in ["sum-lower-k:k=3", "max-lower-k:k=5", "nine-halves:eps=0.001", "sum-k2:x=5,y=7,s=2", "g-alpha:alpha=0.5,s=2"] {
            let f: FamilySpec = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!(
            "nine-halves:eps=1e-3".parse::<FamilySpec>().unwrap(),
            FamilySpec::MaxK2NineHalves { eps: 1e-3 }
        );
        assert!("nine-halves".parse::<FamilySpec>().is_err());
        assert!("sum-lower-k:k=3,q=1".parse::<FamilySpec>().is_err());
    }

    #[test]
    fn random_is_deterministic_and_in_range() {
        let config = RandomConfig::new((2, 6), (1, 4), 2, 42);
        let a = gen_random(&config).unwrap();
        assert_eq!(a, gen_random(&config).unwrap());
        assert_ne!(a, gen_random(&config.clone().with_seed(43)).unwrap());
        for seed in 0..200 {
            let inst = gen_random(&config.clone().with_seed(seed)).unwrap();
            assert!((2..=6).contains(&inst.num_groups()));
            assert!(inst.groups().iter().all(|g| (1..=4).contains(&g.len())));
            assert!(inst.positions().all(|x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn two_cluster_support() {
        let config = RandomConfig::new((3, 6), (1, 4), 3, 0).with_distribution(Distribution::TwoCluster);
        for seed in 0..200 {
            let inst = gen_random(&config.clone().with_seed(seed)).unwrap();
            assert!(inst.num_groups() >= 3);
            assert!(inst
                .positions()
                .all(|x| (0.0..=0.1).contains(&x) || (0.9..=1.0).contains(&x)));
        }
    }

    #[test]
    fn random_config_validation() {
        assert!(gen_random(&RandomConfig::new((2, 3), (1, 2), 4, 0)).is_err());
        assert!(gen_random(&RandomConfig::new((2, 3), (0, 2), 2, 0)).is_err());
        assert!(gen_random(&RandomConfig::new((4, 3), (1, 2), 2, 0)).is_err());
    }

    #[test]
    fn persistence_round_trip_and_errors() {
        let inst = Instance::new(vec![vec![0.0, 0.1], vec![0.51, 0.51], vec![1.0, 1.0]], 2).unwrap();
        let mut buf = Vec::new();
        save_instance(&inst, &mut buf).unwrap();
        assert_eq!(load_instance(buf.as_slice()).unwrap(), inst);

        let err = instance_from_json("{\"k\": 2, \"groups\": [[0.1],\n [").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");

        let err = instance_from_json(r#"{"k": 2, "groups": [[0.1]]}"#).unwrap_err();
        assert_eq!(err, Error::TooFewGroups { groups: 1, k: 2 });
        assert!(err.is_validation());

        assert!(instance_from_json(r#"{"k": 2, "groups": [[1e400], [0]]}"#).is_err());
    }
}
