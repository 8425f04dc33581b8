//! Randomized and grid suites over the individual checks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checks::{
    check_theorem1_exact, check_theorem1_sform, check_theorem2, lemma1_sides, theorem1_exact_sides,
    theorem1_sform_sides, Norm,
};
use super::scenario::{RewardAssignment, ScenarioSampler};
use super::{BoundReport, Witness, EXP_ARG_LIMIT};
use crate::gpo::{BoundFn, ConvexLink};
use crate::rng::stream;

/// Margins used by the domination grid.
pub const DOMINATION_GAMMAS: [f64; 4] = [0.0, 0.5, 1.4, 3.0];
const GRID_HALF_WIDTH: i64 = 5000;
const GRID_STEP: f64 = 0.01;
const GAMMA_RANGE: f64 = 3.0;

/// Reward range that keeps every link argument within the usable range.
fn reward_range(link: ConvexLink, default: f64) -> f64 {
    match link {
        // |3·(2R) + γ| ≤ 30 with |γ| ≤ 3.
        ConvexLink::Exponential => (EXP_ARG_LIMIT - GAMMA_RANGE) / 6.0,
        _ => default,
    }
}

/// Margin range on which the link's bound function dominates the cross terms
/// `f(x − γ) + f(−x − γ)` of the bound-function form.
pub fn sform_gamma_range(link: ConvexLink) -> (f64, f64) {
    match link {
        ConvexLink::Logistic => (0.0, GAMMA_RANGE),
        ConvexLink::Square => (-GAMMA_RANGE, GAMMA_RANGE),
        ConvexLink::Exponential | ConvexLink::Hinge | ConvexLink::SquaredHinge => (-GAMMA_RANGE, 0.0),
    }
}

/// Random pairwise-split instances over all five links.
pub fn lemma1_suite(instances: u64, seed: u64) -> BoundReport {
    let mut rng = stream(seed, 1);
    let mut report = BoundReport::new("lemma1", Some(seed));
    for _ in 0..instances {
        let link = ConvexLink::ALL[rng.gen_range(0..ConvexLink::ALL.len())];
        let gamma = rng.gen_range(-GAMMA_RANGE..=GAMMA_RANGE);
        let ra = random_assignment(&mut rng, reward_range(link, 10.0));
        let (lhs, rhs) = lemma1_sides(|x| link.value(x), gamma, &ra);
        report.record(lhs, rhs, || format!("link={} gamma={gamma:e} {ra:?}", link.name()));
    }
    report
}

/// Same sampling as [`lemma1_suite`] for an arbitrary function; used to
/// self-test the harness with non-convex inputs.
pub fn lemma1_suite_with<F: Fn(f64) -> f64>(name: &str, f: F, instances: u64, seed: u64) -> BoundReport {
    let mut rng = stream(seed, 1);
    let mut report = BoundReport::new(format!("lemma1/{name}"), Some(seed));
    for _ in 0..instances {
        let gamma = rng.gen_range(-GAMMA_RANGE..=GAMMA_RANGE);
        let ra = random_assignment(&mut rng, 10.0);
        let (lhs, rhs) = lemma1_sides(&f, gamma, &ra);
        report.record(lhs, rhs, || format!("gamma={gamma:e} {ra:?}"));
    }
    report
}

fn random_assignment<R: Rng + ?Sized>(rng: &mut R, range: f64) -> RewardAssignment {
    let mut r = || rng.gen_range(-range..=range);
    RewardAssignment::new(r(), r(), r(), r())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationResult {
    pub link: ConvexLink,
    pub gamma: f64,
    pub points: u64,
    /// max over the grid of `f(x+γ) + f(−x+γ) − s(|x|)`.
    pub max_violation: f64,
    /// Same, divided by `max(1, |s|)`.
    pub max_scaled_violation: f64,
    /// max `|f(x+γ) + f(−x+γ) − s(|x|)|`, meaningful for equality pairs.
    pub max_gap: f64,
    pub max_scaled_gap: f64,
    pub worst_x: f64,
}

fn grid() -> impl Iterator<Item = f64> {
    (-GRID_HALF_WIDTH..=GRID_HALF_WIDTH).map(|i| i as f64 * GRID_STEP)
}

/// `f(x+γ) + f(−x+γ) ≤ s(|x|)` on `x ∈ [−50, 50]` with step `0.01`.
pub fn domination_grid(link: ConvexLink, gamma: f64) -> DominationResult {
    let bound = BoundFn::new(link, gamma);
    let mut out = DominationResult {
        link,
        gamma,
        points: 0,
        max_violation: f64::NEG_INFINITY,
        max_scaled_violation: f64::NEG_INFINITY,
        max_gap: 0.0,
        max_scaled_gap: 0.0,
        worst_x: 0.0,
    };
    for x in grid() {
        let lhs = bound.dominated_sum(x);
        let s = bound.value(x);
        let diff = lhs - s;
        let scale = s.abs().max(1.0);
        out.points += 1;
        if diff > out.max_violation {
            out.max_violation = diff;
            out.worst_x = x;
        }
        out.max_scaled_violation = out.max_scaled_violation.max(diff / scale);
        out.max_gap = out.max_gap.max(diff.abs());
        out.max_scaled_gap = out.max_scaled_gap.max(diff.abs() / scale);
    }
    out
}

pub fn domination_suite() -> Vec<DominationResult> {
    ConvexLink::ALL
        .iter()
        .flat_map(|&link| DOMINATION_GAMMAS.iter().map(move |&g| domination_grid(link, g)))
        .collect()
}

/// First grid point at which the unclamped table forms `|x| − γ` (hinge) and
/// `x² − γ²` (squared hinge) fail to dominate, as `(x, lhs, s)`.
pub fn unclamped_table_witness(link: ConvexLink, gamma: f64) -> Option<(f64, f64, f64)> {
    let literal = |x: f64| match link {
        ConvexLink::Hinge => x.abs() - gamma,
        ConvexLink::SquaredHinge => x * x - gamma * gamma,
        _ => BoundFn::new(link, gamma).value(x),
    };
    let bound = BoundFn::new(link, gamma);
    grid().find_map(|x| {
        let lhs = bound.dominated_sum(x);
        let s = literal(x);
        (lhs > s + super::VIOLATION_TOLERANCE).then_some((x, lhs, s))
    })
}

fn sampler(link: ConvexLink, enforce_assumption1: bool) -> ScenarioSampler {
    ScenarioSampler { reward_range: reward_range(link, 10.0), enforce_assumption1, ..Default::default() }
}

/// Exact-form bound on random Assumption-1 scenarios with `γ ∈ [−3, 3]`.
pub fn theorem1_exact_suite(link: ConvexLink, instances: u64, seed: u64) -> BoundReport {
    let mut rng = stream(seed, 2);
    let s = sampler(link, true);
    let mut report = BoundReport::new(format!("theorem1_exact/{}", link.name()), Some(seed));
    for _ in 0..instances {
        let scn = s.sample(&mut rng);
        let gamma = rng.gen_range(-GAMMA_RANGE..=GAMMA_RANGE);
        let r = check_theorem1_exact(&scn, link, gamma).expect("sampled scenarios satisfy the preconditions");
        report.merge(r);
    }
    report
}

/// Bound-function form on random Assumption-1 scenarios with `γ` drawn from
/// [`sform_gamma_range`].
pub fn theorem1_sform_suite(link: ConvexLink, instances: u64, seed: u64) -> BoundReport {
    let mut rng = stream(seed, 3);
    let s = sampler(link, true);
    let (lo, hi) = sform_gamma_range(link);
    let mut report = BoundReport::new(format!("theorem1_sform/{}", link.name()), Some(seed));
    for _ in 0..instances {
        let scn = s.sample(&mut rng);
        let gamma = rng.gen_range(lo..=hi);
        let r = check_theorem1_sform(&scn, link, gamma).expect("sampled scenarios satisfy the preconditions");
        report.merge(r);
    }
    report
}

/// Generalized-distance bound with `C1 = 1` and `γ ∈ [0, 3]`.
pub fn theorem2_suite(norm: Norm, instances: u64, seed: u64) -> BoundReport {
    let mut rng = stream(seed, 4);
    let s = sampler(ConvexLink::Logistic, true);
    let mut report = BoundReport::new(format!("theorem2/{}", norm.name()), Some(seed));
    for _ in 0..instances {
        let scn = s.sample(&mut rng);
        let gamma = rng.gen_range(0.0..=GAMMA_RANGE);
        let r = check_theorem2(&scn, norm, 1.0, gamma).expect("valid norm and scenario");
        report.merge(r);
    }
    report
}

/// For the square link the bound-function right side must dominate the
/// exact right side: reported as `exact_rhs − sform_rhs ≤ 0`.
pub fn square_sform_dominates_exact(instances: u64, seed: u64) -> BoundReport {
    let mut rng = stream(seed, 5);
    let s = sampler(ConvexLink::Square, true);
    let mut report = BoundReport::new("square_sform_vs_exact", Some(seed));
    for _ in 0..instances {
        let scn = s.sample(&mut rng);
        let gamma = rng.gen_range(-GAMMA_RANGE..=GAMMA_RANGE);
        let (_, exact) = theorem1_exact_sides(&scn, |x| ConvexLink::Square.value(x), gamma);
        let (_, sform, _) = theorem1_sform_sides(&scn, ConvexLink::Square, gamma).expect("symmetric pairs");
        report.record(exact, sform, || format!("gamma={gamma:e} scenario={scn:?}"));
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityResult {
    pub check: String,
    pub attempts: u64,
    pub witness: Option<Witness>,
}

/// Searches scenarios drawn *without* the preference-order assumption for a
/// violation of the exact-form bound. Finding one shows the assumption is
/// load-bearing.
pub fn assumption1_necessity(link: ConvexLink, max_attempts: u64, seed: u64) -> NecessityResult {
    let mut rng = stream(seed, 6);
    let s = sampler(link, false);
    for attempt in 1..=max_attempts {
        let scn = s.sample(&mut rng);
        let gamma = rng.gen_range(-GAMMA_RANGE..=GAMMA_RANGE);
        let (lhs, rhs) = theorem1_exact_sides(&scn, |x| link.value(x), gamma);
        if lhs - rhs > super::VIOLATION_TOLERANCE {
            return NecessityResult {
                check: format!("assumption1_necessity/{}", link.name()),
                attempts: attempt,
                witness: Some(Witness {
                    instance: attempt - 1,
                    lhs,
                    rhs,
                    detail: format!("gamma={gamma:e} scenario={scn:?}"),
                }),
            };
        }
    }
    NecessityResult { check: format!("assumption1_necessity/{}", link.name()), attempts: max_attempts, witness: None }
}
