//! Numerical oracles for the losses: finite-difference gradient checks and
//! the two algebraic identities of the alignment term.

use alloc::format;
use alloc::string::String;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::link::ConvexLink;
use super::loss::{evaluate, po_loss, solopo_loss, LogProbBundle};
use super::method::{reward, Method, MethodConfig, RaMode};
use super::GpoError;
use crate::rng::stream;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Points closer than this many steps to a kink are resampled.
const KINK_MARGIN: f64 = 100.0;
/// Points with a larger loss are resampled: the stencil's rounding error
/// `ε·|L|/h` would exceed the tolerance by itself.
pub const FD_LOSS_LIMIT: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub method: Method,
    pub ra_mode: RaMode,
    pub points: u64,
    /// Resampled because a kink was within reach of the stencil or the loss
    /// exceeded [`FD_LOSS_LIMIT`].
    pub rejected: u64,
    pub max_rel_error: f64,
    pub worst: Option<String>,
}

/// Random configuration for `method`; links cycle through all five.
pub fn random_config<R: Rng + ?Sized>(method: Method, mode: RaMode, link: ConvexLink, rng: &mut R) -> MethodConfig {
    let mut cfg = MethodConfig::new(method).with_ra_mode(mode).with_link(link);
    cfg.beta = rng.gen_range(0.05..2.5);
    cfg.gamma = rng.gen_range(-2.0..2.0);
    cfg.eta = rng.gen_range(0.5..1.5);
    cfg.alpha = rng.gen_range(0.0..4.0);
    cfg
}

/// Random bundle with log-probabilities in `[-12, -0.5]`.
pub fn random_bundle<R: Rng + ?Sized>(method: Method, rng: &mut R) -> LogProbBundle {
    let mut lp = || rng.gen_range(-12.0..-0.5);
    let (a, b, c, d) = (lp(), lp(), lp(), lp());
    let refs = method.needs_reference().then(|| [lp(), lp(), lp(), lp()]);
    LogProbBundle {
        lp_w_short: a,
        lp_l_short: b,
        lp_w_long: c,
        lp_l_long: d,
        ref_w_short: refs.map(|r| r[0]),
        ref_l_short: refs.map(|r| r[1]),
        ref_w_long: refs.map(|r| r[2]),
        ref_l_long: refs.map(|r| r[3]),
        len_w: rng.gen_range(1..=8),
        len_l: rng.gen_range(1..=8),
    }
}

fn get(lp: &LogProbBundle, i: usize) -> f64 {
    match i {
        0 => lp.lp_w_short,
        1 => lp.lp_l_short,
        2 => lp.lp_w_long,
        3 => lp.lp_l_long,
        4 => lp.ref_w_short.unwrap_or(0.0),
        5 => lp.ref_l_short.unwrap_or(0.0),
        6 => lp.ref_w_long.unwrap_or(0.0),
        _ => lp.ref_l_long.unwrap_or(0.0),
    }
}

fn set(lp: &mut LogProbBundle, i: usize, v: f64) {
    match i {
        0 => lp.lp_w_short = v,
        1 => lp.lp_l_short = v,
        2 => lp.lp_w_long = v,
        3 => lp.lp_l_long = v,
        4 => lp.ref_w_short = Some(v),
        5 => lp.ref_l_short = Some(v),
        6 => lp.ref_w_long = Some(v),
        _ => lp.ref_l_long = Some(v),
    }
}

/// Smallest distance (in link-argument or gap units) from `lp` to a point
/// where the loss is not differentiable, scaled to log-probability units.
pub fn kink_distance(cfg: &MethodConfig, lp: &LogProbBundle) -> Result<f64, GpoError> {
    let mut dist = f64::INFINITY;
    if cfg.link == ConvexLink::Hinge {
        let rw = reward(cfg, lp.lp_w_short, lp.ref_w_short, lp.len_w)?;
        let rl = reward(cfg, lp.lp_l_short, lp.ref_l_short, lp.len_l)?;
        dist = dist.min((rw - rl - cfg.gamma).abs());
    }
    let abs_gap = !cfg.link.squares_gap() || cfg.ra_mode == RaMode::KlApprox;
    if abs_gap && cfg.alpha > 0.0 {
        // Reward gaps only vanish where the log-probabilities coincide.
        dist = dist.min((lp.lp_w_short - lp.lp_w_long).abs());
        if cfg.ra_mode == RaMode::Both {
            dist = dist.min((lp.lp_l_short - lp.lp_l_long).abs());
        }
    }
    Ok(dist)
}

/// Largest relative error between the analytic and central-difference
/// gradients at one point. Errors are relative to `max(|analytic|, |numeric|, 1)`.
pub fn fd_rel_error(cfg: &MethodConfig, lp: &LogProbBundle, h: f64) -> Result<(f64, usize), GpoError> {
    let (_, grad) = evaluate(cfg, lp)?;
    let analytic = grad.to_array();
    let n_inputs = if cfg.method.needs_reference() { 8 } else { 4 };
    let mut worst = (0.0, 0);
    for (i, &a) in analytic.iter().enumerate().take(n_inputs) {
        let x = get(lp, i);
        let (mut plus, mut minus) = (*lp, *lp);
        set(&mut plus, i, x + h);
        set(&mut minus, i, x - h);
        let num = (solopo_loss(cfg, &plus)?.total - solopo_loss(cfg, &minus)?.total) / (2.0 * h);
        let err = (a - num).abs() / a.abs().max(num.abs()).max(1.0);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(worst)
}

/// `points` accepted random points for one method and alignment mode.
pub fn gradient_fidelity(method: Method, mode: RaMode, points: u64, seed: u64) -> Result<GradCheckReport, GpoError> {
    let salt = Method::ALL.iter().position(|&m| m == method).unwrap() * 3 + RaMode::ALL.iter().position(|&m| m == mode).unwrap();
    let mut rng = stream(seed, 100 + salt as u64);
    let mut report = GradCheckReport { method, ra_mode: mode, points: 0, rejected: 0, max_rel_error: 0.0, worst: None };
    let mut k = 0usize;
    while report.points < points {
        let link = ConvexLink::ALL[k % ConvexLink::ALL.len()];
        let cfg = random_config(method, mode, link, &mut rng);
        let lp = random_bundle(method, &mut rng);
        if kink_distance(&cfg, &lp)? < KINK_MARGIN * FD_STEP || solopo_loss(&cfg, &lp)?.total.abs() > FD_LOSS_LIMIT {
            report.rejected += 1;
            continue;
        }
        k += 1;
        report.points += 1;
        let (err, input) = fd_rel_error(&cfg, &lp, FD_STEP)?;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(format!("input={input} link={} {cfg:?} {lp:?}", link.name()));
        }
    }
    Ok(report)
}

/// Largest `|solopo_loss(collapsed).total − po_loss(collapsed)|` over random
/// bundles whose long context equals the short one.
pub fn degeneration_identity(bundles: u64, seed: u64) -> Result<f64, GpoError> {
    let mut rng = stream(seed, 200);
    let mut worst: f64 = 0.0;
    for i in 0..bundles {
        let method = Method::ALL[(i % 5) as usize];
        let mode = RaMode::ALL[((i / 5) % 3) as usize];
        let link = ConvexLink::ALL[((i / 15) % 5) as usize];
        let cfg = random_config(method, mode, link, &mut rng);
        let lp = random_bundle(method, &mut rng).collapse_to_short();
        let total = solopo_loss(&cfg, &lp)?.total;
        worst = worst.max((total - po_loss(&cfg, &lp)?).abs());
    }
    Ok(worst)
}

/// Largest deviation in the identities `DPO chosen-only = β·KL-approx` and
/// `SimPO chosen-only = (β/len_w)·KL-approx`, in that order.
pub fn alignment_kl_identity(bundles: u64, seed: u64) -> Result<(f64, f64), GpoError> {
    let mut rng = stream(seed, 300);
    let (mut dpo, mut simpo): (f64, f64) = (0.0, 0.0);
    for _ in 0..bundles {
        for method in [Method::Dpo, Method::Simpo] {
            let cfg = random_config(method, RaMode::ChosenOnly, ConvexLink::Logistic, &mut rng);
            let lp = random_bundle(method, &mut rng);
            let chosen = solopo_loss(&cfg, &lp)?.ra_term;
            let kl = solopo_loss(&cfg.with_ra_mode(RaMode::KlApprox), &lp)?.ra_term;
            if method == Method::Dpo {
                dpo = dpo.max((chosen - cfg.beta * kl).abs());
            } else {
                simpo = simpo.max((chosen - cfg.beta / lp.len_w as f64 * kl).abs());
            }
        }
    }
    Ok((dpo, simpo))
}
