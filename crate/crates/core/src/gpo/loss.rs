//! Short-to-long preference losses and their analytic gradients.

use serde::{Deserialize, Serialize};

use super::method::{reward_point, Method, MethodConfig, RaMode};
use super::GpoError;

/// Sequence log-probabilities of one preference pair under both contexts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogProbBundle {
    pub lp_w_short: f64,
    pub lp_l_short: f64,
    pub lp_w_long: f64,
    pub lp_l_long: f64,
    pub ref_w_short: Option<f64>,
    pub ref_l_short: Option<f64>,
    pub ref_w_long: Option<f64>,
    pub ref_l_long: Option<f64>,
    /// Token count of the chosen response.
    pub len_w: usize,
    /// Token count of the rejected response.
    pub len_l: usize,
}

impl LogProbBundle {
    /// A bundle whose long-context fields are copies of the short-context ones.
    pub fn short_only(
        lp_w: f64,
        lp_l: f64,
        refs: Option<(f64, f64)>,
        len_w: usize,
        len_l: usize,
    ) -> Self {
        Self {
            lp_w_short: lp_w,
            lp_l_short: lp_l,
            lp_w_long: lp_w,
            lp_l_long: lp_l,
            ref_w_short: refs.map(|r| r.0),
            ref_l_short: refs.map(|r| r.1),
            ref_w_long: refs.map(|r| r.0),
            ref_l_long: refs.map(|r| r.1),
            len_w,
            len_l,
        }
    }

    /// Copies the short-context fields over the long-context ones.
    pub fn collapse_to_short(mut self) -> Self {
        self.lp_w_long = self.lp_w_short;
        self.lp_l_long = self.lp_l_short;
        self.ref_w_long = self.ref_w_short;
        self.ref_l_long = self.ref_l_short;
        self
    }

    fn validate(&self, method: Method) -> Result<(), GpoError> {
        if self.len_w == 0 || self.len_l == 0 {
            return Err(GpoError::ZeroLength);
        }
        for v in [self.lp_w_short, self.lp_l_short, self.lp_w_long, self.lp_l_long] {
            if !v.is_finite() {
                return Err(GpoError::NonFinite("log-probability"));
            }
        }
        let refs = [self.ref_w_short, self.ref_l_short, self.ref_w_long, self.ref_l_long];
        if method.needs_reference() {
            if self.ref_w_short.is_none() || self.ref_l_short.is_none() {
                return Err(GpoError::MissingReference(method.name()));
            }
        } else if refs.iter().any(Option::is_some) {
            return Err(GpoError::UnexpectedReference(method.name()));
        }
        Ok(())
    }
}

/// Partial derivatives of a loss with respect to the eight bundle inputs.
/// Absent reference fields get derivative 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LogProbGrad {
    pub lp_w_short: f64,
    pub lp_l_short: f64,
    pub lp_w_long: f64,
    pub lp_l_long: f64,
    pub ref_w_short: f64,
    pub ref_l_short: f64,
    pub ref_w_long: f64,
    pub ref_l_long: f64,
}

impl LogProbGrad {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.lp_w_short,
            self.lp_l_short,
            self.lp_w_long,
            self.lp_l_long,
            self.ref_w_short,
            self.ref_l_short,
            self.ref_w_long,
            self.ref_l_long,
        ]
    }
}

/// Components of the short-to-long objective. `total = po_term + α·ra_term + nll_term`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub po_term: f64,
    pub ra_term: f64,
    pub nll_term: f64,
}

/// Short-context preference loss, including ORPO's NLL term when enabled.
pub fn po_loss(cfg: &MethodConfig, lp: &LogProbBundle) -> Result<f64, GpoError> {
    let b = solopo_loss(&cfg.with_alpha(0.0), lp)?;
    Ok(b.po_term + b.nll_term)
}

/// Short-to-long reward alignment penalty (before the α weight).
pub fn solo_ra_term(cfg: &MethodConfig, lp: &LogProbBundle) -> Result<f64, GpoError> {
    Ok(solopo_loss(cfg, lp)?.ra_term)
}

pub fn solopo_loss(cfg: &MethodConfig, lp: &LogProbBundle) -> Result<LossBreakdown, GpoError> {
    evaluate(cfg, lp).map(|(b, _)| b)
}

/// Analytic gradient of the total loss over the eight log-probability inputs.
pub fn grad_solopo(cfg: &MethodConfig, lp: &LogProbBundle) -> Result<LogProbGrad, GpoError> {
    evaluate(cfg, lp).map(|(_, g)| g)
}

/// Loss components and gradient in one pass.
pub fn evaluate(cfg: &MethodConfig, lp: &LogProbBundle) -> Result<(LossBreakdown, LogProbGrad), GpoError> {
    cfg.validate()?;
    lp.validate(cfg.method)?;
    let mut grad = LogProbGrad::default();

    let rw = reward_point(cfg, lp.lp_w_short, lp.ref_w_short, lp.len_w)?;
    let rl = reward_point(cfg, lp.lp_l_short, lp.ref_l_short, lp.len_l)?;
    let arg = cfg.eta * (rw.value - rl.value - cfg.gamma);
    let weight = cfg.po_weight();
    let po_term = weight * cfg.link.value(arg);
    let d_arg = weight * cfg.link.derivative(arg) * cfg.eta;
    grad.lp_w_short += d_arg * rw.d_lp;
    grad.ref_w_short += d_arg * rw.d_ref;
    grad.lp_l_short -= d_arg * rl.d_lp;
    grad.ref_l_short -= d_arg * rl.d_ref;

    let nll_term = if cfg.include_nll {
        let n = lp.len_w as f64;
        grad.lp_w_short -= 1.0 / n;
        -lp.lp_w_short / n
    } else {
        0.0
    };

    let ra_term = match cfg.ra_mode {
        RaMode::ChosenOnly => {
            let g = alignment_gap(cfg, lp.lp_w_short, lp.lp_w_long, lp.len_w)?;
            grad.lp_w_short += cfg.alpha * g.d_short;
            grad.lp_w_long += cfg.alpha * g.d_long;
            g.value
        }
        RaMode::Both => {
            let gw = alignment_gap(cfg, lp.lp_w_short, lp.lp_w_long, lp.len_w)?;
            let gl = alignment_gap(cfg, lp.lp_l_short, lp.lp_l_long, lp.len_l)?;
            let a = 0.5 * cfg.alpha;
            grad.lp_w_short += a * gw.d_short;
            grad.lp_w_long += a * gw.d_long;
            grad.lp_l_short += a * gl.d_short;
            grad.lp_l_long += a * gl.d_long;
            0.5 * (gw.value + gl.value)
        }
        RaMode::KlApprox => {
            let diff = lp.lp_w_short - lp.lp_w_long;
            let s = sign(diff);
            grad.lp_w_short += cfg.alpha * s;
            grad.lp_w_long -= cfg.alpha * s;
            diff.abs()
        }
    };

    let total = po_term + cfg.alpha * ra_term + nll_term;
    if !total.is_finite() {
        return Err(GpoError::NonFinite("loss"));
    }
    Ok((LossBreakdown { total, po_term, ra_term, nll_term }, grad))
}

struct Penalty {
    value: f64,
    d_short: f64,
    d_long: f64,
}

/// Alignment penalty `|r(x_short, y) − r(x_long, y)|` (squared for quadratic
/// links). Ratio rewards drop the reference, which is constant under training.
fn alignment_gap(cfg: &MethodConfig, lp_short: f64, lp_long: f64, len: usize) -> Result<Penalty, GpoError> {
    let (gap, d_s, d_l) = match cfg.method {
        Method::Dpo => (cfg.beta * (lp_short - lp_long), cfg.beta, -cfg.beta),
        Method::Ipo => (lp_short - lp_long, 1.0, -1.0),
        Method::Simpo | Method::Orpo | Method::Slic => {
            let rs = reward_point(cfg, lp_short, None, len)?;
            let rl = reward_point(cfg, lp_long, None, len)?;
            (rs.value - rl.value, rs.d_lp, -rl.d_lp)
        }
    };
    let (value, outer) = if cfg.link.squares_gap() {
        (gap * gap, 2.0 * gap)
    } else {
        (gap.abs(), sign(gap))
    };
    Ok(Penalty { value, d_short: outer * d_s, d_long: outer * d_l })
}

/// Sign with subgradient 0 at the kink.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpo::link::{sigmoid, ConvexLink};
    use core::f64::consts::LN_2;

    fn dpo_bundle() -> LogProbBundle {
        LogProbBundle {
            lp_w_short: -5.0,
            lp_l_short: -7.0,
            lp_w_long: -9.0,
            lp_l_long: -8.0,
            ref_w_short: Some(-6.0),
            ref_l_short: Some(-6.5),
            ref_w_long: None,
            ref_l_long: None,
            len_w: 3,
            len_l: 4,
        }
    }

    #[test]
    fn dpo_policy_equal_reference_gives_log_two() {
        let cfg = MethodConfig::new(Method::Dpo);
        let lp = LogProbBundle::short_only(-4.0, -6.0, Some((-4.0, -6.0)), 2, 3);
        assert!((po_loss(&cfg, &lp).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn square_link_at_margin_is_zero() {
        for eta in [0.3, 1.0, 7.0] {
            let mut cfg = MethodConfig::new(Method::Slic).with_link(ConvexLink::Square);
            cfg.eta = eta;
            cfg.gamma = 1.5;
            let lp = LogProbBundle::short_only(-2.0, -3.5, None, 2, 2);
            assert_eq!(po_loss(&cfg, &lp).unwrap(), 0.0);
        }
    }

    #[test]
    fn simpo_hand_value() {
        let cfg = MethodConfig::new(Method::Simpo);
        let lp = LogProbBundle::short_only(-2.0, -6.0, None, 2, 2);
        // -log σ(2·(-1) - 2·(-3) - 1.4) = -log σ(2.6)
        let expected = -libm::log(sigmoid(2.6));
        let got = po_loss(&cfg, &lp).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - 0.0715).abs() < 1e-3);
    }

    #[test]
    fn ra_examples() {
        let cfg = MethodConfig::new(Method::Dpo);
        assert!((solo_ra_term(&cfg, &dpo_bundle()).unwrap() - 0.4).abs() < 1e-15);
        for m in Method::ALL {
            let cfg = MethodConfig::new(m);
            let refs = m.needs_reference().then_some((-3.0, -4.0));
            let lp = LogProbBundle::short_only(-2.0, -5.0, refs, 3, 4);
            assert_eq!(solo_ra_term(&cfg, &lp).unwrap(), 0.0, "{m:?}");
        }
    }

    #[test]
    fn both_mode_averages_gaps() {
        let cfg = MethodConfig::new(Method::Dpo).with_ra_mode(RaMode::Both);
        // chosen gap 0.1·4, rejected gap 0.1·1
        let ra = solo_ra_term(&cfg, &dpo_bundle()).unwrap();
        assert!((ra - 0.25).abs() < 1e-15);
    }

    #[test]
    fn square_link_squares_gap() {
        let cfg = MethodConfig::new(Method::Ipo);
        let mut lp = dpo_bundle();
        lp.ref_w_short = Some(-5.0);
        assert_eq!(solo_ra_term(&cfg, &lp).unwrap(), 16.0);
    }

    #[test]
    fn orpo_components() {
        let cfg = MethodConfig::new(Method::Orpo);
        let lp = LogProbBundle {
            lp_w_short: -1.2,
            lp_l_short: -3.0,
            lp_w_long: -2.4,
            lp_l_long: -3.3,
            ref_w_short: None,
            ref_l_short: None,
            ref_w_long: None,
            ref_l_long: None,
            len_w: 2,
            len_l: 3,
        };
        let b = solopo_loss(&cfg, &lp).unwrap();
        let odds = |lp: f64, n: f64| {
            let p = libm::exp(lp / n);
            libm::log(p / (1.0 - p))
        };
        let po = 0.1 * -libm::log(sigmoid(odds(-1.2, 2.0) - odds(-3.0, 3.0)));
        let ra = (odds(-1.2, 2.0) - odds(-2.4, 2.0)).abs();
        assert!((b.po_term - po).abs() < 1e-12);
        assert!((b.ra_term - ra).abs() < 1e-12);
        assert!((b.nll_term - 0.6).abs() < 1e-15);
        assert_eq!(b.total, b.po_term + b.ra_term + b.nll_term);
    }

    #[test]
    fn alpha_zero_matches_po_loss_and_kills_long_gradient() {
        for m in Method::ALL {
            let cfg = MethodConfig::new(m).with_alpha(0.0);
            let mut lp = dpo_bundle();
            if !m.needs_reference() {
                lp.ref_w_short = None;
                lp.ref_l_short = None;
            }
            let b = solopo_loss(&cfg, &lp).unwrap();
            assert_eq!(b.total, po_loss(&cfg, &lp).unwrap());
            let g = grad_solopo(&cfg, &lp).unwrap();
            assert_eq!((g.lp_w_long, g.lp_l_long), (0.0, 0.0));
        }
    }

    #[test]
    fn dpo_chosen_only_long_derivative() {
        // lp_w_short > lp_w_long ⇒ ∂/∂lp_w_long = −αβ
        let cfg = MethodConfig::new(Method::Dpo);
        let g = grad_solopo(&cfg, &dpo_bundle()).unwrap();
        assert!((g.lp_w_long - (-cfg.alpha * cfg.beta)).abs() < 1e-15);
    }

    #[test]
    fn kink_takes_zero_subgradient() {
        let cfg = MethodConfig::new(Method::Simpo);
        let lp = LogProbBundle::short_only(-2.0, -5.0, None, 3, 4);
        let g = grad_solopo(&cfg, &lp).unwrap();
        assert_eq!(g.lp_w_long, 0.0);
    }

    #[test]
    fn reference_presence_is_enforced() {
        let cfg = MethodConfig::new(Method::Simpo);
        assert!(matches!(solopo_loss(&cfg, &dpo_bundle()), Err(GpoError::UnexpectedReference(_))));
        let cfg = MethodConfig::new(Method::Ipo);
        let lp = LogProbBundle::short_only(-1.0, -2.0, None, 1, 1);
        assert!(matches!(solopo_loss(&cfg, &lp), Err(GpoError::MissingReference(_))));
    }

    #[test]
    fn orpo_singularity_propagates() {
        let cfg = MethodConfig::new(Method::Orpo);
        let lp = LogProbBundle::short_only(0.0, -2.0, None, 2, 2);
        assert_eq!(solopo_loss(&cfg, &lp), Err(GpoError::OddsSingularity));
        assert_eq!(grad_solopo(&cfg, &lp), Err(GpoError::OddsSingularity));
    }
}
