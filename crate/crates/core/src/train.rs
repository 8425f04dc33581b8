//! AdamW training of [`ToyLm`] on short-to-long preference data.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::forge::{model_input, sub_em, ForgedSample};
use crate::gpo::{evaluate as evaluate_loss, reward, GpoError, LogProbBundle, MethodConfig};
use crate::policy::{EncodedContext, FrozenLm, PolicyError, TokenId, ToyLm, Vocab};
use crate::rng::stream;

/// Longest response produced during evaluation.
pub const EVAL_MAX_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Loss(#[from] GpoError),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid train config: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize, log: Box<TrainLog> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextKind {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: MethodConfig,
    pub lr_max: f64,
    pub warmup_ratio: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate every this many steps; 0 evaluates only at the end.
    pub eval_every: usize,
    /// Context of the preference term; `Long` gives the long-context PO baseline.
    pub po_context: ContextKind,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(method: MethodConfig) -> Self {
        Self {
            method,
            lr_max: 1e-2,
            warmup_ratio: 0.1,
            schedule: Schedule::Cosine,
            batch_size: 16,
            epochs: 1,
            seed: 0,
            eval_every: 0,
            po_context: ContextKind::Short,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.method.validate()?;
        if !(self.lr_max.is_finite() && self.lr_max >= 0.0) {
            return Err(TrainError::InvalidConfig("lr_max must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(TrainError::InvalidConfig("warmup_ratio must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::InvalidConfig("batch_size and epochs must be positive"));
        }
        Ok(())
    }
}

/// Number of warmup steps, `⌈ratio · total⌉`.
pub fn warmup_steps(total: usize, ratio: f64) -> usize {
    libm::ceil(ratio * total as f64 - 1e-12) as usize
}

/// Learning rate at 1-based `step` of `total`: linear warmup to `lr_max`,
/// then cosine decay reaching 0 at `total`.
pub fn lr_at(step: usize, total: usize, lr_max: f64, warmup_ratio: f64) -> f64 {
    let w = warmup_steps(total, warmup_ratio);
    if step <= w {
        return lr_max * step as f64 / w as f64;
    }
    let progress = (step - w) as f64 / (total - w) as f64;
    0.5 * lr_max * (1.0 + libm::cos(core::f64::consts::PI * progress))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Self { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - libm::pow(c.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let update = (*m / bc1) / (libm::sqrt(*v / bc2) + c.eps) + c.weight_decay * *p;
            *p -= lr * update;
        }
    }
}

/// A forged sample encoded for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedSample {
    pub ctx_short: Vec<TokenId>,
    pub ctx_long: Vec<TokenId>,
    pub y_w: Vec<TokenId>,
    pub y_l: Vec<TokenId>,
    pub answer: String,
}

impl TokenizedSample {
    pub fn context(&self, kind: ContextKind) -> &[TokenId] {
        match kind {
            ContextKind::Short => &self.ctx_short,
            ContextKind::Long => &self.ctx_long,
        }
    }
}

pub fn tokenize(vocab: &Vocab, samples: &[ForgedSample]) -> Result<Vec<TokenizedSample>, PolicyError> {
    samples
        .iter()
        .map(|s| {
            Ok(TokenizedSample {
                ctx_short: model_input(vocab, &s.question, &s.x_short)?,
                ctx_long: model_input(vocab, &s.question, &s.x_long)?,
                y_w: vocab.encode_response(&s.y_w)?,
                y_l: vocab.encode_response(&s.y_l)?,
                answer: s.answer.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub po_term: f64,
    pub ra_term: f64,
    pub nll_term: f64,
    /// Batch mean of `r(x_long, y_w) − r(x_long, y_l)`.
    pub reward_margin_long: f64,
    /// Batch mean of `log π(y_l | x_long)`.
    pub lp_rejected_long: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub short_acc: f64,
    pub long_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

/// Frozen reference log-probabilities `(w_short, l_short, w_long, l_long)`.
type RefCache = Vec<[f64; 4]>;

fn reference_cache(reference: &FrozenLm, data: &[TokenizedSample]) -> Result<RefCache, PolicyError> {
    data.iter()
        .map(|s| {
            let cs = reference.encode_context(&s.ctx_short)?;
            let cl = reference.encode_context(&s.ctx_long)?;
            Ok([
                reference.logprob_encoded(&cs, &s.y_w)?.total_logprob,
                reference.logprob_encoded(&cs, &s.y_l)?.total_logprob,
                reference.logprob_encoded(&cl, &s.y_w)?.total_logprob,
                reference.logprob_encoded(&cl, &s.y_l)?.total_logprob,
            ])
        })
        .collect()
}

/// Trains `model` in place. The reference policy, when the method uses one,
/// is a snapshot of `model` taken before the first step.
pub fn train(
    model: &mut ToyLm,
    data: &[TokenizedSample],
    cfg: &TrainConfig,
    eval_set: Option<&[TokenizedSample]>,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let refs = if cfg.method.method.needs_reference() { Some(reference_cache(&model.freeze(), data)?) } else { None };
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut opt = AdamW::new(model.n_params(), cfg.adam);
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut stream(cfg.seed, epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let lr = lr_at(step, total, cfg.lr_max, cfg.warmup_ratio);
            let (record, grad) = match batch_step(model, data, refs.as_deref(), batch, cfg) {
                Ok(r) => r,
                Err(TrainError::Loss(_)) | Err(TrainError::Policy(PolicyError::NonFiniteLoss)) => {
                    return Err(TrainError::NonFinite { step, log: Box::new(log) })
                }
                Err(e) => return Err(e),
            };
            if !record.total.is_finite() {
                return Err(TrainError::NonFinite { step, log: Box::new(log) });
            }
            opt.step(model.params_mut(), &grad, lr);
            log.steps.push(StepRecord { step, lr, ..record });
            if let Some(eval) = eval_set {
                if cfg.eval_every > 0 && step % cfg.eval_every == 0 && step != total {
                    log.evals.push(eval_record(model, eval, step)?);
                }
            }
        }
    }
    if let Some(eval) = eval_set {
        log.evals.push(eval_record(model, eval, step)?);
    }
    Ok(log)
}

fn eval_record(model: &ToyLm, eval: &[TokenizedSample], step: usize) -> Result<EvalRecord, PolicyError> {
    Ok(EvalRecord {
        step,
        short_acc: evaluate(model, eval, ContextKind::Short)?,
        long_acc: evaluate(model, eval, ContextKind::Long)?,
    })
}

/// Log-probability bundle of one sample under `model`, with the encoded
/// preference and long contexts.
pub fn bundle_for(
    model: &ToyLm,
    sample: &TokenizedSample,
    refs: Option<[f64; 4]>,
    po_context: ContextKind,
) -> Result<(LogProbBundle, EncodedContext, EncodedContext), PolicyError> {
    let po = model.encode_context(sample.context(po_context))?;
    let long = model.encode_context(&sample.ctx_long)?;
    let lp = |c: &EncodedContext, y: &[TokenId]| model.logprob_encoded(c, y).map(|s| s.total_logprob);
    let (rw_s, rl_s) = match (refs, po_context) {
        (Some(r), ContextKind::Short) => (Some(r[0]), Some(r[1])),
        (Some(r), ContextKind::Long) => (Some(r[2]), Some(r[3])),
        (None, _) => (None, None),
    };
    let bundle = LogProbBundle {
        lp_w_short: lp(&po, &sample.y_w)?,
        lp_l_short: lp(&po, &sample.y_l)?,
        lp_w_long: lp(&long, &sample.y_w)?,
        lp_l_long: lp(&long, &sample.y_l)?,
        ref_w_short: rw_s,
        ref_l_short: rl_s,
        ref_w_long: refs.map(|r| r[2]),
        ref_l_long: refs.map(|r| r[3]),
        len_w: sample.y_w.len(),
        len_l: sample.y_l.len(),
    };
    Ok((bundle, po, long))
}

fn batch_step(
    model: &ToyLm,
    data: &[TokenizedSample],
    refs: Option<&[[f64; 4]]>,
    batch: &[usize],
    cfg: &TrainConfig,
) -> Result<(StepRecord, Vec<f64>), TrainError> {
    let m = &cfg.method;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.n_params()];
    let mut rec = StepRecord {
        step: 0,
        lr: 0.0,
        total: 0.0,
        po_term: 0.0,
        ra_term: 0.0,
        nll_term: 0.0,
        reward_margin_long: 0.0,
        lp_rejected_long: 0.0,
    };
    for &i in batch {
        let s = &data[i];
        let (b, po, long) = bundle_for(model, s, refs.map(|r| r[i]), cfg.po_context)?;
        let (loss, g) = evaluate_loss(m, &b)?;
        if !loss.total.is_finite() || g.to_array().iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteLoss.into());
        }
        model.accumulate_logprob_grad(&po, &s.y_w, scale * g.lp_w_short, &mut grad)?;
        model.accumulate_logprob_grad(&po, &s.y_l, scale * g.lp_l_short, &mut grad)?;
        model.accumulate_logprob_grad(&long, &s.y_w, scale * g.lp_w_long, &mut grad)?;
        model.accumulate_logprob_grad(&long, &s.y_l, scale * g.lp_l_long, &mut grad)?;
        rec.total += scale * loss.total;
        rec.po_term += scale * loss.po_term;
        rec.ra_term += scale * loss.ra_term;
        rec.nll_term += scale * loss.nll_term;
        let margin = reward(m, b.lp_w_long, ref_long(m, b.ref_w_long), b.len_w)?
            - reward(m, b.lp_l_long, ref_long(m, b.ref_l_long), b.len_l)?;
        rec.reward_margin_long += scale * margin;
        rec.lp_rejected_long += scale * b.lp_l_long;
    }
    Ok((rec, grad))
}

fn ref_long(m: &MethodConfig, r: Option<f64>) -> Option<f64> {
    if m.method.needs_reference() {
        r
    } else {
        None
    }
}

/// Greedy-decoding sub-em accuracy on the chosen context.
pub fn evaluate(model: &ToyLm, eval: &[TokenizedSample], kind: ContextKind) -> Result<f64, PolicyError> {
    if eval.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for s in eval {
        let out = model.greedy(s.context(kind), EVAL_MAX_LEN)?;
        if sub_em(&model.vocab().decode(&out.tokens)?, &s.answer) {
            hits += 1;
        }
    }
    Ok(hits as f64 / eval.len() as f64)
}

/// Supervised warm start on `(context, response)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub lr_max: f64,
    pub warmup_ratio: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self { lr_max: 1e-2, warmup_ratio: 0.1, batch_size: 16, epochs: 1, seed: 0 }
    }
}

/// Minimizes the mean per-token negative log-likelihood; returns the batch
/// losses.
pub fn train_sft(
    model: &mut ToyLm,
    data: &[(Vec<TokenId>, Vec<TokenId>)],
    cfg: &SftConfig,
) -> Result<Vec<f64>, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(TrainError::InvalidConfig("batch_size and epochs must be positive"));
    }
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut opt = AdamW::new(model.n_params(), AdamConfig::default());
    let mut losses = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut stream(cfg.seed, epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let scale = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; model.n_params()];
            let mut loss = 0.0;
            for &i in batch {
                let (ctx, y) = &data[i];
                let c = model.encode_context(ctx)?;
                let per_token = 1.0 / y.len() as f64;
                loss -= scale * per_token * model.logprob_encoded(&c, y)?.total_logprob;
                model.accumulate_logprob_grad(&c, y, -scale * per_token, &mut grad)?;
            }
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { step, log: Box::default() });
            }
            opt.step(model.params_mut(), &grad, lr_at(step, total, cfg.lr_max, cfg.warmup_ratio));
            losses.push(loss);
        }
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub config: String,
    pub seed: u64,
    pub short_acc: f64,
    pub long_acc: f64,
    pub final_margin_long: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: String,
    pub runs: usize,
    pub short_mean: f64,
    pub short_std: f64,
    pub long_mean: f64,
    pub long_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub config: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<RunRow>,
    pub summary: Vec<ConfigSummary>,
    pub curves: Vec<Curve>,
}

/// Sample mean and (n − 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// Trains every `(name, config)` for every seed from `init(seed)`, with the
/// config's seed replaced by the run seed.
pub fn run_comparison<F>(
    seeds: &[u64],
    configs: &[(String, TrainConfig)],
    init: F,
    data: &[TokenizedSample],
    eval_set: &[TokenizedSample],
) -> Result<ComparisonReport, TrainError>
where
    F: Fn(u64) -> ToyLm,
{
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (name, cfg) in configs {
        for &seed in seeds {
            let mut model = init(seed);
            let cfg = TrainConfig { seed, ..*cfg };
            let log = train(&mut model, data, &cfg, None)?;
            rows.push(RunRow {
                config: name.clone(),
                seed,
                short_acc: evaluate(&model, eval_set, ContextKind::Short)?,
                long_acc: evaluate(&model, eval_set, ContextKind::Long)?,
                final_margin_long: log.steps.last().map_or(f64::NAN, |r| r.reward_margin_long),
            });
            curves.push(Curve { config: name.clone(), seed, steps: log.steps });
        }
    }
    let summary = configs
        .iter()
        .map(|(name, _)| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| &r.config == name).collect();
            let (short_mean, short_std) = mean_std(&mine.iter().map(|r| r.short_acc).collect::<Vec<_>>());
            let (long_mean, long_std) = mean_std(&mine.iter().map(|r| r.long_acc).collect::<Vec<_>>());
            ConfigSummary { config: name.clone(), runs: mine.len(), short_mean, short_std, long_mean, long_std }
        })
        .collect();
    Ok(ComparisonReport { rows, summary, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::world::{gold_response, world_vocab, NO_ANSWER};
    use crate::gpo::{po_loss, solopo_loss, Method};
    use alloc::format;

    fn toy_data(n: usize, long_equals_short: bool) -> Vec<TokenizedSample> {
        let v = world_vocab();
        (0..n)
            .map(|i| {
                let ans = format!("c{:02}", i % 4);
                let short = format!("p01 {ans} {ans} river <sep> p02 old c09");
                let long = if long_equals_short {
                    short.clone()
                } else {
                    format!("{short} <sep> p03 north road c11 <sep> p04 market c07 hill new old")
                };
                let f = ForgedSample {
                    question: "which city for p01 ?".into(),
                    answer: ans.clone(),
                    x_short: short,
                    x_long: long,
                    y_w: gold_response(&ans),
                    y_l: NO_ANSWER.into(),
                };
                tokenize(&v, &[f]).unwrap().remove(0)
            })
            .collect()
    }

    fn model(seed: u64) -> ToyLm {
        ToyLm::init(world_vocab(), 8, seed).unwrap()
    }

    #[test]
    fn schedule_shape() {
        let total = 50;
        let w = warmup_steps(total, 0.1);
        assert_eq!(w, 5);
        assert_eq!(lr_at(w, total, 1e-2, 0.1), 1e-2);
        assert!(lr_at(total, total, 1e-2, 0.1).abs() < 1e-18);
        assert!(lr_at(1, total, 1e-2, 0.1) < lr_at(2, total, 1e-2, 0.1));
        assert!(lr_at(20, total, 1e-2, 0.1) > lr_at(30, total, 1e-2, 0.1));
        assert_eq!(warmup_steps(7, 0.1), 1);
    }

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        let data = toy_data(20, false);
        let mut m = model(1);
        let before = m.clone();
        let cfg = TrainConfig { lr_max: 0.0, ..TrainConfig::new(MethodConfig::new(Method::Dpo)) };
        train(&mut m, &data, &cfg, None).unwrap();
        assert_eq!(m.params(), before.params());
    }

    #[test]
    fn alpha_zero_matches_vanilla_and_degenerate_long() {
        // α = 0 on real long contexts against α = 1 with long ≡ short: both
        // reduce to the short-context preference objective.
        let cfg0 = TrainConfig { epochs: 2, ..TrainConfig::new(MethodConfig::new(Method::Simpo).with_alpha(0.0)) };
        let mut a = model(2);
        let la = train(&mut a, &toy_data(24, false), &cfg0, None).unwrap();
        let mut b = model(2);
        let lb = train(&mut b, &toy_data(24, true), &TrainConfig { method: cfg0.method.with_alpha(1.0), ..cfg0 }, None)
            .unwrap();
        assert_eq!(a.params(), b.params());
        let totals = |l: &TrainLog| l.steps.iter().map(|s| s.total).collect::<Vec<_>>();
        assert_eq!(totals(&la), totals(&lb));
    }

    #[test]
    fn logged_totals_match_recomputed_losses() {
        let data = toy_data(16, false);
        let cfg = TrainConfig { batch_size: 16, ..TrainConfig::new(MethodConfig::new(Method::Orpo)) };
        let m = model(3);
        let mut trained = m.clone();
        let log = train(&mut trained, &data, &cfg, None).unwrap();
        let mut expected = 0.0;
        let mut po = 0.0;
        for s in &data {
            let (b, ..) = bundle_for(&m, s, None, ContextKind::Short).unwrap();
            expected += solopo_loss(&cfg.method, &b).unwrap().total / 16.0;
            po += po_loss(&cfg.method, &b).unwrap() / 16.0;
        }
        assert!((log.steps[0].total - expected).abs() < 1e-10);
        assert!(log.steps[0].total >= po - 1e-12);
    }

    #[test]
    fn reference_is_untouched_and_dpo_starts_at_log_two() {
        let data = toy_data(16, false);
        let mut m = model(4);
        let reference = m.freeze();
        let snapshot = reference.clone();
        let cfg = TrainConfig { epochs: 7, ..TrainConfig::new(MethodConfig::new(Method::Dpo)) };
        let log = train(&mut m, &data, &cfg, None).unwrap();
        assert_eq!(log.steps.len(), 7);
        assert_eq!(reference, snapshot);
        assert!((log.steps[0].po_term - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(20, false);
        let cfg = TrainConfig { epochs: 3, eval_every: 2, ..TrainConfig::new(MethodConfig::new(Method::Ipo)) };
        let (mut a, mut b) = (model(5), model(5));
        let la = train(&mut a, &data, &cfg, Some(&data)).unwrap();
        let lb = train(&mut b, &data, &cfg, Some(&data)).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
        assert!(!la.evals.is_empty());
    }

    #[test]
    fn oracle_and_uniform_accuracy() {
        let data = toy_data(8, false);
        let zero = ToyLm::zeros(world_vocab(), 4).unwrap();
        assert_eq!(evaluate(&zero, &data, ContextKind::Short).unwrap(), 0.0);
        // SFT on the gold answers until the model copies them.
        let mut m = model(6);
        let sft: Vec<_> = data.iter().map(|s| (s.ctx_short.clone(), s.y_w.clone())).collect();
        let losses =
            train_sft(&mut m, &sft, &SftConfig { lr_max: 5e-2, epochs: 400, batch_size: 8, ..Default::default() })
                .unwrap();
        assert!(losses.last().unwrap() < &losses[0]);
        assert_eq!(evaluate(&m, &data, ContextKind::Short).unwrap(), 1.0);
    }

    #[test]
    fn comparison_rows_are_reproducible() {
        let data = toy_data(16, false);
        let configs = [
            (String::from("a0"), TrainConfig::new(MethodConfig::new(Method::Orpo).with_alpha(0.0))),
            (String::from("a1"), TrainConfig::new(MethodConfig::new(Method::Orpo).with_alpha(1.0))),
        ];
        let r1 = run_comparison(&[1, 2], &configs, model, &data, &data).unwrap();
        let r2 = run_comparison(&[1, 2], &configs, model, &data, &data).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.rows.len(), 4);
        assert_eq!(r1.summary.len(), 2);
        assert_eq!(r1.curves.len(), 4);
    }

    #[test]
    fn mean_std_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.290_994_448_7).abs() < 1e-9);
    }
}
