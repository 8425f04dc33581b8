use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BoundError;

/// Rewards of one preference pair under the short and the long context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardAssignment {
    /// r(x_short, y_w)
    pub r_sw: f64,
    /// r(x_short, y_l)
    pub r_sl: f64,
    /// r(x_long, y_w)
    pub r_lw: f64,
    /// r(x_long, y_l)
    pub r_ll: f64,
}

impl RewardAssignment {
    pub fn new(r_sw: f64, r_sl: f64, r_lw: f64, r_ll: f64) -> Self {
        Self { r_sw, r_sl, r_lw, r_ll }
    }

    /// `(Δ₁, Δ₂, Δ₃)`; they telescope to `r_lw − r_ll`.
    pub fn deltas(&self) -> (f64, f64, f64) {
        (self.r_lw - self.r_sw, self.r_sw - self.r_sl, self.r_sl - self.r_ll)
    }

    pub fn is_finite(&self) -> bool {
        [self.r_sw, self.r_sl, self.r_lw, self.r_ll].iter().all(|v| v.is_finite())
    }
}

/// An ordered response pair `(winner, loser)` with its probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePair {
    pub winner: usize,
    pub loser: usize,
    pub weight: f64,
}

/// One `(x_short, x_long)` context pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioContext {
    pub weight: f64,
    /// Reward of each response under `x_short`.
    pub r_short: Vec<f64>,
    /// Reward of each response under `x_long`.
    pub r_long: Vec<f64>,
    /// `P(winner ≻ loser | x_short)` for each pair, in pair order.
    pub p_short: Vec<f64>,
    /// `P(winner ≻ loser | x_long)` for each pair, in pair order.
    pub p_long: Vec<f64>,
}

/// Finite distribution over contexts and response pairs on which both sides
/// of the long-context bounds are exact weighted sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteScenario {
    pub n_responses: usize,
    pub pairs: Vec<ResponsePair>,
    pub contexts: Vec<ScenarioContext>,
}

const MASS_TOLERANCE: f64 = 1e-9;

impl DiscreteScenario {
    pub fn validate(&self) -> Result<(), BoundError> {
        if self.contexts.is_empty() || self.pairs.is_empty() || self.n_responses == 0 {
            return Err(BoundError::InvalidScenario("empty contexts, pairs or responses"));
        }
        let mut pair_mass = 0.0;
        for p in &self.pairs {
            if p.winner >= self.n_responses || p.loser >= self.n_responses {
                return Err(BoundError::InvalidScenario("pair references an unknown response"));
            }
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(BoundError::InvalidScenario("pair weight must be finite and >= 0"));
            }
            pair_mass += p.weight;
        }
        if (pair_mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(BoundError::InvalidScenario("pair weights must sum to 1"));
        }
        let mut ctx_mass = 0.0;
        for c in &self.contexts {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(BoundError::InvalidScenario("context weight must be finite and >= 0"));
            }
            ctx_mass += c.weight;
            if c.r_short.len() != self.n_responses || c.r_long.len() != self.n_responses {
                return Err(BoundError::InvalidScenario("reward table has the wrong length"));
            }
            if c.p_short.len() != self.pairs.len() || c.p_long.len() != self.pairs.len() {
                return Err(BoundError::InvalidScenario("preference table has the wrong length"));
            }
            if c.r_short.iter().chain(&c.r_long).any(|r| !r.is_finite()) {
                return Err(BoundError::InvalidScenario("rewards must be finite"));
            }
            if c.p_short.iter().chain(&c.p_long).any(|p| !(0.0..=1.0).contains(p)) {
                return Err(BoundError::InvalidScenario("preference probabilities must lie in [0, 1]"));
            }
        }
        if (ctx_mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(BoundError::InvalidScenario("context weights must sum to 1"));
        }
        Ok(())
    }

    /// `P(y_w ≻ y_l | x_long) ≤ P(y_w ≻ y_l | x_short)` for every context and pair.
    pub fn satisfies_assumption1(&self) -> bool {
        self.contexts
            .iter()
            .all(|c| c.p_long.iter().zip(&c.p_short).all(|(l, s)| l <= s))
    }

    pub fn reward_assignment(&self, ctx: usize, pair: usize) -> RewardAssignment {
        let c = &self.contexts[ctx];
        let p = self.pairs[pair];
        RewardAssignment::new(c.r_short[p.winner], c.r_short[p.loser], c.r_long[p.winner], c.r_long[p.loser])
    }

    /// Marginal distributions of the winner and of the loser.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut w = alloc::vec![0.0; self.n_responses];
        let mut l = alloc::vec![0.0; self.n_responses];
        for p in &self.pairs {
            w[p.winner] += p.weight;
            l[p.loser] += p.weight;
        }
        (w, l)
    }

    /// Common response marginal, when winner and loser marginals agree.
    pub fn response_marginal(&self) -> Result<Vec<f64>, BoundError> {
        let (w, l) = self.marginals();
        if w.iter().zip(&l).any(|(a, b)| (a - b).abs() > MASS_TOLERANCE) {
            return Err(BoundError::UnequalMarginals);
        }
        Ok(w.iter().zip(&l).map(|(a, b)| 0.5 * (a + b)).collect())
    }

    /// Single context, single pair, all preference probabilities 1.
    pub fn single(ra: RewardAssignment) -> Self {
        Self {
            n_responses: 2,
            pairs: alloc::vec![ResponsePair { winner: 0, loser: 1, weight: 1.0 }],
            contexts: alloc::vec![ScenarioContext {
                weight: 1.0,
                r_short: alloc::vec![ra.r_sw, ra.r_sl],
                r_long: alloc::vec![ra.r_lw, ra.r_ll],
                p_short: alloc::vec![1.0],
                p_long: alloc::vec![1.0],
            }],
        }
    }
}

/// Random scenario generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSampler {
    pub max_contexts: usize,
    pub max_responses: usize,
    /// Rewards are drawn uniformly from `[-reward_range, reward_range]`.
    pub reward_range: f64,
    /// Draw `p_long ≤ p_short`; otherwise the two tables are independent.
    pub enforce_assumption1: bool,
}

impl Default for ScenarioSampler {
    fn default() -> Self {
        Self { max_contexts: 4, max_responses: 4, reward_range: 10.0, enforce_assumption1: true }
    }
}

impl ScenarioSampler {
    /// Samples a scenario whose ordered pairs (all `i ≠ j`) carry symmetric
    /// weights, so winner and loser marginals coincide.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DiscreteScenario {
        let n_responses = rng.gen_range(2..=self.max_responses.max(2));
        let n_contexts = rng.gen_range(1..=self.max_contexts.max(1));

        let mut pairs = Vec::new();
        for i in 0..n_responses {
            for j in (i + 1)..n_responses {
                let w: f64 = rng.gen_range(0.05..1.0);
                pairs.push(ResponsePair { winner: i, loser: j, weight: w });
                pairs.push(ResponsePair { winner: j, loser: i, weight: w });
            }
        }
        normalize(pairs.iter_mut().map(|p| &mut p.weight));

        let mut contexts: Vec<ScenarioContext> = (0..n_contexts)
            .map(|_| {
                let r = self.reward_range;
                let r_short = (0..n_responses).map(|_| rng.gen_range(-r..=r)).collect();
                let r_long = (0..n_responses).map(|_| rng.gen_range(-r..=r)).collect();
                let p_short: Vec<f64> = (0..pairs.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
                let p_long = p_short
                    .iter()
                    .map(|&ps| {
                        let u: f64 = rng.gen_range(0.0..=1.0);
                        if self.enforce_assumption1 {
                            ps * u
                        } else {
                            u
                        }
                    })
                    .collect();
                ScenarioContext { weight: rng.gen_range(0.05..1.0), r_short, r_long, p_short, p_long }
            })
            .collect();
        normalize(contexts.iter_mut().map(|c| &mut c.weight));

        DiscreteScenario { n_responses, pairs, contexts }
    }
}

fn normalize<'a>(weights: impl Iterator<Item = &'a mut f64>) {
    let mut ws: Vec<&mut f64> = weights.collect();
    let total: f64 = ws.iter().map(|w| **w).sum();
    for w in ws.iter_mut() {
        **w /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn deltas_telescope() {
        let ra = RewardAssignment::new(1.5, -2.0, 0.25, 4.0);
        let (d1, d2, d3) = ra.deltas();
        assert!((d1 + d2 + d3 - (ra.r_lw - ra.r_ll)).abs() < 1e-15);
    }

    #[test]
    fn sampled_scenarios_are_valid() {
        let mut rng = seeded(3);
        for enforce in [true, false] {
            let s = ScenarioSampler { enforce_assumption1: enforce, ..Default::default() };
            for _ in 0..200 {
                let scn = s.sample(&mut rng);
                scn.validate().unwrap();
                scn.response_marginal().unwrap();
                if enforce {
                    assert!(scn.satisfies_assumption1());
                }
            }
        }
    }

    #[test]
    fn validation_catches_bad_mass() {
        let mut scn = DiscreteScenario::single(RewardAssignment::new(0.0, 0.0, 0.0, 0.0));
        scn.contexts[0].weight = 0.5;
        assert!(scn.validate().is_err());
        let mut scn = DiscreteScenario::single(RewardAssignment::new(0.0, 0.0, 0.0, 0.0));
        scn.contexts[0].p_long[0] = 1.5;
        assert!(scn.validate().is_err());
        let scn = DiscreteScenario::single(RewardAssignment::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(scn.response_marginal(), Err(BoundError::UnequalMarginals));
    }
}
