//! Numerical certification of the long-context loss bounds.
//!
//! Every check evaluates both sides of an inequality exactly on a finite
//! instance and reports the signed slack `LHS − RHS`. Randomness is only used
//! to generate instances; all checks are deterministic given a seed.

pub mod checks;
pub mod scenario;
pub mod suites;

use alloc::string::String;

use serde::{Deserialize, Serialize};

pub use checks::{
    check_lemma1, check_theorem1_exact, check_theorem1_sform, check_theorem2, lemma1_sides, theorem1_exact_sides,
    theorem1_sform_sides, Norm,
};
pub use scenario::{DiscreteScenario, ResponsePair, RewardAssignment, ScenarioContext, ScenarioSampler};

/// Absolute violation tolerance in 64-bit arithmetic.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// Largest exponential-link argument magnitude used by random suites; beyond
/// it, rounding in `e^{−x}` swamps the tolerance.
pub const EXP_ARG_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
    #[error("scenario violates P(y_w > y_l | x_long) <= P(y_w > y_l | x_short)")]
    Assumption1Violated,
    #[error("winner and loser marginals differ; the response-level bound is undefined")]
    UnequalMarginals,
    #[error("p-norm order must be >= 1, got {0}")]
    InvalidNorm(f64),
    #[error("distance constant C1 must be >= 1, got {0}")]
    InvalidConstant(f64),
}

/// Instance at which the largest slack was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub instance: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub detail: String,
}

/// Outcome of a side condition that must hold for the bound to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    /// Largest observed violation of the condition (≤ 0 when it holds).
    pub max_violation: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub check: String,
    pub seed: Option<u64>,
    pub instances: u64,
    /// Maximum of `LHS − RHS` over all instances; positive means violated.
    pub max_violation: f64,
    pub worst_witness: Option<Witness>,
    pub condition: Option<ConditionReport>,
}

impl BoundReport {
    pub fn new(check: impl Into<String>, seed: Option<u64>) -> Self {
        Self {
            check: check.into(),
            seed,
            instances: 0,
            max_violation: f64::NEG_INFINITY,
            worst_witness: None,
            condition: None,
        }
    }

    /// Records one instance; `detail` is only rendered for a new maximum.
    pub fn record(&mut self, lhs: f64, rhs: f64, detail: impl FnOnce() -> String) {
        let slack = lhs - rhs;
        let instance = self.instances;
        self.instances += 1;
        // NaN slack must surface as a violation.
        if slack > self.max_violation || slack.is_nan() && !self.max_violation.is_nan() {
            self.max_violation = slack;
            self.worst_witness = Some(Witness { instance, lhs, rhs, detail: detail() });
        }
    }

    pub fn record_condition(&mut self, name: &str, violation: f64) {
        let cond = self.condition.get_or_insert_with(|| ConditionReport {
            name: name.into(),
            max_violation: f64::NEG_INFINITY,
            holds: true,
        });
        if violation > cond.max_violation || violation.is_nan() {
            cond.max_violation = violation;
        }
        cond.holds = cond.max_violation <= VIOLATION_TOLERANCE;
    }

    /// Combines two reports of the same check by taking the maximum.
    pub fn merge(&mut self, other: BoundReport) {
        let offset = self.instances;
        self.instances += other.instances;
        if other.max_violation > self.max_violation || other.max_violation.is_nan() {
            self.max_violation = other.max_violation;
            self.worst_witness = other.worst_witness.map(|mut w| {
                w.instance += offset;
                w
            });
        }
        if let Some(c) = other.condition {
            self.record_condition(&c.name, c.max_violation);
        }
    }

    pub fn condition_holds(&self) -> bool {
        self.condition.as_ref().map_or(true, |c| c.holds)
    }

    /// Condition holds and every instance is within `tolerance`.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.condition_holds() && self.max_violation <= tolerance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn report_tracks_maximum_and_witness() {
        let mut r = BoundReport::new("t", Some(1));
        r.record(1.0, 2.0, || "a".to_string());
        r.record(3.0, 2.5, || "b".to_string());
        r.record(0.0, 4.0, || "c".to_string());
        assert_eq!(r.instances, 3);
        assert_eq!(r.max_violation, 0.5);
        let w = r.worst_witness.as_ref().unwrap();
        assert_eq!((w.instance, w.detail.as_str()), (1, "b"));
        assert!(!r.passed(VIOLATION_TOLERANCE));
    }

    #[test]
    fn merge_takes_max_and_offsets_instances() {
        let mut a = BoundReport::new("t", None);
        a.record(0.0, 1.0, String::new);
        let mut b = BoundReport::new("t", None);
        b.record(0.0, 3.0, String::new);
        b.record(0.0, 0.5, || "w".to_string());
        a.merge(b);
        assert_eq!(a.instances, 3);
        assert_eq!(a.max_violation, -0.5);
        assert_eq!(a.worst_witness.unwrap().instance, 2);
    }

    #[test]
    fn nan_is_a_violation() {
        let mut r = BoundReport::new("t", None);
        r.record(0.0, 1.0, String::new);
        r.record(f64::NAN, 1.0, String::new);
        assert!(!r.passed(VIOLATION_TOLERANCE));
    }
}
