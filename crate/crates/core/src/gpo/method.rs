use serde::{Deserialize, Serialize};

use super::link::ConvexLink;
use super::GpoError;

/// Preference optimization algorithm, which fixes the reward parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Dpo,
    Simpo,
    Orpo,
    Ipo,
    Slic,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Dpo, Method::Simpo, Method::Orpo, Method::Ipo, Method::Slic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dpo => "dpo",
            Method::Simpo => "simpo",
            Method::Orpo => "orpo",
            Method::Ipo => "ipo",
            Method::Slic => "slic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Link of the original algorithm.
    pub fn default_link(self) -> ConvexLink {
        match self {
            Method::Dpo | Method::Simpo | Method::Orpo => ConvexLink::Logistic,
            Method::Ipo => ConvexLink::Square,
            Method::Slic => ConvexLink::Hinge,
        }
    }

    /// DPO and IPO rewards are ratios against a frozen reference policy.
    pub fn needs_reference(self) -> bool {
        matches!(self, Method::Dpo | Method::Ipo)
    }
}

/// Which responses the short-to-long reward alignment is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RaMode {
    /// Chosen response only.
    ChosenOnly,
    /// Mean of the chosen and rejected gaps.
    Both,
    /// Raw `|log π(y_w|x_short) − log π(y_w|x_long)|`, no reward scaling.
    KlApprox,
}

impl RaMode {
    pub const ALL: [RaMode; 3] = [RaMode::ChosenOnly, RaMode::Both, RaMode::KlApprox];

    pub fn name(self) -> &'static str {
        match self {
            RaMode::ChosenOnly => "chosen_only",
            RaMode::Both => "both",
            RaMode::KlApprox => "kl_approx",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Whether the rejected response has to be scored on the long context.
    pub fn uses_rejected_long(self) -> bool {
        matches!(self, RaMode::Both)
    }
}

/// Loss configuration: algorithm, link, and hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub link: ConvexLink,
    pub beta: f64,
    pub gamma: f64,
    /// Scale applied to the link argument.
    pub eta: f64,
    /// Weight of the short-to-long reward alignment term.
    pub alpha: f64,
    pub ra_mode: RaMode,
    /// Adds the mean-per-token NLL of the chosen response (ORPO only).
    pub include_nll: bool,
}

impl MethodConfig {
    /// Defaults of the original algorithms together with the alignment
    /// weights that worked best for each of them.
    pub fn new(method: Method) -> Self {
        let (beta, gamma, alpha) = match method {
            Method::Dpo => (0.1, 0.0, 3.0),
            Method::Simpo => (2.0, 1.4, 1.0),
            Method::Orpo => (0.1, 0.0, 1.0),
            // γ = 1/(2τ) with τ = β.
            Method::Ipo => (0.1, 5.0, 1.0),
            Method::Slic => (1.0, 1.0, 1.0),
        };
        Self {
            method,
            link: method.default_link(),
            beta,
            gamma,
            eta: 1.0,
            alpha,
            ra_mode: RaMode::ChosenOnly,
            include_nll: method == Method::Orpo,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_link(mut self, link: ConvexLink) -> Self {
        self.link = link;
        self
    }

    pub fn with_ra_mode(mut self, mode: RaMode) -> Self {
        self.ra_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), GpoError> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(GpoError::InvalidConfig("eta must be finite and > 0"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(GpoError::InvalidConfig("alpha must be finite and >= 0"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(GpoError::InvalidConfig("beta must be finite and > 0"));
        }
        if !self.gamma.is_finite() {
            return Err(GpoError::InvalidConfig("gamma must be finite"));
        }
        if self.include_nll && self.method != Method::Orpo {
            return Err(GpoError::InvalidConfig("include_nll is only defined for ORPO"));
        }
        Ok(())
    }

    /// Weight on the preference term. ORPO scales its odds-ratio loss by β
    /// (the λ of the original method); the other algorithms carry β inside
    /// the reward.
    pub(crate) fn po_weight(&self) -> f64 {
        if self.method == Method::Orpo {
            self.beta
        } else {
            1.0
        }
    }
}

/// Reward value with its partial derivatives with respect to the policy and
/// reference log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RewardPoint {
    pub value: f64,
    pub d_lp: f64,
    pub d_ref: f64,
}

/// Method-specific reward `r(x, y)` of a sequence with log-probability `lp`.
///
/// DPO drops the `β·log Z(x)` term, which cancels in every pairwise margin.
pub fn reward(cfg: &MethodConfig, lp: f64, ref_lp: Option<f64>, len: usize) -> Result<f64, GpoError> {
    reward_point(cfg, lp, ref_lp, len).map(|r| r.value)
}

pub(crate) fn reward_point(cfg: &MethodConfig, lp: f64, ref_lp: Option<f64>, len: usize) -> Result<RewardPoint, GpoError> {
    if !lp.is_finite() {
        return Err(GpoError::NonFinite("log-probability"));
    }
    if len == 0 {
        return Err(GpoError::ZeroLength);
    }
    let needs_ref = cfg.method.needs_reference();
    match (needs_ref, ref_lp) {
        (true, None) => return Err(GpoError::MissingReference(cfg.method.name())),
        (false, Some(_)) => return Err(GpoError::UnexpectedReference(cfg.method.name())),
        (_, Some(r)) if !r.is_finite() => return Err(GpoError::NonFinite("reference log-probability")),
        _ => {}
    }
    let reference = ref_lp.unwrap_or(0.0);
    let point = match cfg.method {
        Method::Dpo => RewardPoint { value: cfg.beta * (lp - reference), d_lp: cfg.beta, d_ref: -cfg.beta },
        Method::Ipo => RewardPoint { value: lp - reference, d_lp: 1.0, d_ref: -1.0 },
        Method::Simpo => {
            let k = cfg.beta / len as f64;
            RewardPoint { value: k * lp, d_lp: k, d_ref: 0.0 }
        }
        Method::Slic => RewardPoint { value: lp, d_lp: 1.0, d_ref: 0.0 },
        Method::Orpo => {
            let (value, slope) = log_odds(lp / len as f64)?;
            RewardPoint { value, d_lp: slope / len as f64, d_ref: 0.0 }
        }
    };
    Ok(point)
}

/// `log(p / (1 − p))` for `p = e^u`, with its derivative in `u`.
fn log_odds(u: f64) -> Result<(f64, f64), GpoError> {
    if u >= 0.0 {
        return Err(GpoError::OddsSingularity);
    }
    // 1 − e^u = −expm1(u), accurate as u → 0⁻.
    let one_minus_p = -libm::expm1(u);
    if one_minus_p <= 0.0 {
        return Err(GpoError::OddsSingularity);
    }
    Ok((u - libm::log(one_minus_p), 1.0 / one_minus_p))
}
