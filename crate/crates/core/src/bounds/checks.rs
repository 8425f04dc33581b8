use alloc::format;

use super::scenario::{DiscreteScenario, RewardAssignment};
use super::{BoundError, BoundReport};
use crate::gpo::link::softplus;
use crate::gpo::{BoundFn, ConvexLink};

/// Both sides of the three-way Jensen split of the long-context pair loss:
/// `f(r_lw − r_ll − γ) ≤ ⅓[f(3Δ₁ − γ) + f(3Δ₂ − γ) + f(3Δ₃ − γ)]`.
///
/// Generic over `f` so the harness can feed non-convex functions to itself.
pub fn lemma1_sides<F: Fn(f64) -> f64>(f: F, gamma: f64, ra: &RewardAssignment) -> (f64, f64) {
    let (d1, d2, d3) = ra.deltas();
    let lhs = f(ra.r_lw - ra.r_ll - gamma);
    let rhs = (f(3.0 * d1 - gamma) + f(3.0 * d2 - gamma) + f(3.0 * d3 - gamma)) / 3.0;
    (lhs, rhs)
}

/// Signed slack `LHS − RHS` of the pairwise split; `≤ 0` for convex links.
pub fn check_lemma1(link: ConvexLink, gamma: f64, ra: &RewardAssignment) -> f64 {
    let (lhs, rhs) = lemma1_sides(|x| link.value(x), gamma, ra);
    lhs - rhs
}

/// Scenario-level sums shared by the exact and bound-function forms.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PairSums {
    /// Σ P_long · f(r_lw − r_ll − γ)
    long_loss: f64,
    /// Σ P_short · f(3Δ₂ − γ)
    short_loss: f64,
    /// Σ P_long · [f(3Δ₁ − γ) + f(3Δ₃ − γ)]
    cross: f64,
}

fn pair_sums<F: Fn(f64) -> f64>(scn: &DiscreteScenario, f: &F, gamma: f64) -> PairSums {
    let mut sums = PairSums { long_loss: 0.0, short_loss: 0.0, cross: 0.0 };
    for (ci, ctx) in scn.contexts.iter().enumerate() {
        for (pi, pair) in scn.pairs.iter().enumerate() {
            let w = ctx.weight * pair.weight;
            let ra = scn.reward_assignment(ci, pi);
            let (d1, d2, d3) = ra.deltas();
            sums.long_loss += w * ctx.p_long[pi] * f(ra.r_lw - ra.r_ll - gamma);
            sums.short_loss += w * ctx.p_short[pi] * f(3.0 * d2 - gamma);
            sums.cross += w * ctx.p_long[pi] * (f(3.0 * d1 - gamma) + f(3.0 * d3 - gamma));
        }
    }
    sums
}

/// Both sides of the exact long-vs-short bound, without precondition checks.
pub fn theorem1_exact_sides<F: Fn(f64) -> f64>(scn: &DiscreteScenario, f: F, gamma: f64) -> (f64, f64) {
    let s = pair_sums(scn, &f, gamma);
    (s.long_loss, (s.short_loss + s.cross) / 3.0)
}

fn require_assumption1(scn: &DiscreteScenario) -> Result<(), BoundError> {
    scn.validate()?;
    if !scn.satisfies_assumption1() {
        return Err(BoundError::Assumption1Violated);
    }
    Ok(())
}

pub fn check_theorem1_exact(scn: &DiscreteScenario, link: ConvexLink, gamma: f64) -> Result<BoundReport, BoundError> {
    require_assumption1(scn)?;
    let (lhs, rhs) = theorem1_exact_sides(scn, |x| link.value(x), gamma);
    let mut report = BoundReport::new(format!("theorem1_exact/{}", link.name()), None);
    report.record(lhs, rhs, || format!("gamma={gamma:e} scenario={scn:?}"));
    Ok(report)
}

/// Both sides of the bound-function form together with the largest
/// violation of its domination hypothesis at the scenario's arguments.
///
/// The cross terms are `f(x − γ) + f(−x − γ)` with `x = 3(r_long − r_short)`
/// for the same response; the hypothesis is that `s(|x|)` dominates them.
pub fn theorem1_sform_sides(
    scn: &DiscreteScenario,
    link: ConvexLink,
    gamma: f64,
) -> Result<(f64, f64, f64), BoundError> {
    let marginal = scn.response_marginal()?;
    let s = BoundFn::new(link, gamma);
    let sums = pair_sums(scn, &|x| link.value(x), gamma);
    let mut align = 0.0;
    let mut hypothesis = f64::NEG_INFINITY;
    for ctx in &scn.contexts {
        for (y, &m) in marginal.iter().enumerate() {
            let x = 3.0 * (ctx.r_long[y] - ctx.r_short[y]);
            let bound = s.value(x);
            align += ctx.weight * m * bound;
            if m > 0.0 {
                let dominated = link.value(x - gamma) + link.value(-x - gamma);
                hypothesis = hypothesis.max(dominated - bound);
            }
        }
    }
    Ok((sums.long_loss, (sums.short_loss + align) / 3.0, hypothesis))
}

pub fn check_theorem1_sform(scn: &DiscreteScenario, link: ConvexLink, gamma: f64) -> Result<BoundReport, BoundError> {
    require_assumption1(scn)?;
    let (lhs, rhs, hypothesis) = theorem1_sform_sides(scn, link, gamma)?;
    let mut report = BoundReport::new(format!("theorem1_sform/{}", link.name()), None);
    report.record_condition("domination f(x-g)+f(-x-g) <= s(|x|)", hypothesis);
    report.record(lhs, rhs, || format!("gamma={gamma:e} scenario={scn:?}"));
    Ok(report)
}

/// Order of the reward distance `D_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    P(f64),
    Infinity,
}

impl Norm {
    pub fn validate(self) -> Result<(), BoundError> {
        match self {
            Norm::P(p) if !(p.is_finite() && p >= 1.0) => Err(BoundError::InvalidNorm(p)),
            _ => Ok(()),
        }
    }

    pub fn name(self) -> alloc::string::String {
        match self {
            Norm::P(p) => format!("p{p}"),
            Norm::Infinity => "pinf".into(),
        }
    }

    /// `(E_y |d|^p)^{1/p}` under weights `m`; the sup over the support for `∞`.
    pub fn distance(self, m: &[f64], diffs: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::P(p) => {
                let total: f64 = m.iter().zip(diffs).map(|(w, d)| w * libm::pow(d.abs(), p)).sum();
                libm::pow(total, 1.0 / p)
            }
            Norm::Infinity => m
                .iter()
                .zip(diffs)
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, d)| d.abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Logistic-link bound with a generalized reward distance:
/// `L_long ≤ ⅓·L_short + C1·E_x[D_p(x_short, x_long)] + ⅔·log(1 + e^{3γ})`,
/// valid whenever `D_1 ≤ C1·D_p`, which is verified per context first.
pub fn check_theorem2(scn: &DiscreteScenario, norm: Norm, c1: f64, gamma: f64) -> Result<BoundReport, BoundError> {
    norm.validate()?;
    if !(c1.is_finite() && c1 >= 1.0) {
        return Err(BoundError::InvalidConstant(c1));
    }
    require_assumption1(scn)?;
    let marginal = scn.response_marginal()?;
    let link = ConvexLink::Logistic;
    let sums = pair_sums(scn, &|x| link.value(x), gamma);

    let mut report = BoundReport::new(format!("theorem2/{}", norm.name()), None);
    let mut distance = 0.0;
    for ctx in &scn.contexts {
        let diffs = || ctx.r_short.iter().zip(&ctx.r_long).map(|(s, l)| s - l);
        let d1 = Norm::P(1.0).distance(&marginal, diffs());
        let dp = norm.distance(&marginal, diffs());
        report.record_condition("D1 <= C1 * Dp", d1 - c1 * dp);
        distance += ctx.weight * dp;
    }
    let c2 = 2.0 / 3.0 * softplus(3.0 * gamma);
    let rhs = sums.short_loss / 3.0 + c1 * distance + c2;
    report.record(sums.long_loss, rhs, || format!("gamma={gamma:e} c1={c1:e} scenario={scn:?}"));
    Ok(report)
}
