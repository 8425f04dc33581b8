//! End-to-end pipeline on the bundled synthetic corpus: warm start, forge,
//! preference training and evaluation.

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use solopo_core::forge::world::{self, gold_response, World, WorldConfig, NO_ANSWER};
use solopo_core::forge::{
    forge_dataset, synthesize_context, ForgeConfig, ForgeOutput, ForgedSample, HaystackConfig, SourceSample,
    ToyLmGenerator,
};
use solopo_core::gpo::{Method, MethodConfig};
use solopo_core::policy::{ToyLm, DEFAULT_TEMPERATURE};
use solopo_core::rng::stream;
use solopo_core::gpo::RaMode;
use solopo_core::train::{
    evaluate, mean_std, run_comparison, tokenize, train, train_sft, ComparisonReport, ContextKind, SftConfig,
    TokenizedSample, TrainConfig, TrainLog,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub world: WorldConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub width: usize,
    pub sft: SftConfig,
    pub forge: ForgeConfig,
    pub temperature: f64,
    pub train: TrainConfig,
    /// Alignment weights tried for the SoLo configuration.
    pub alphas: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut train = TrainConfig::new(MethodConfig { beta: 4.0, ..MethodConfig::new(Method::Orpo) });
        train.lr_max = 1e-3;
        train.epochs = 30;
        Self {
            world: WorldConfig { n_sources: 1400, ..WorldConfig::default() },
            n_train: 1000,
            n_val: 200,
            n_test: 200,
            width: 64,
            sft: SftConfig { lr_max: 1e-2, epochs: 16, ..SftConfig::default() },
            forge: ForgeConfig::default(),
            temperature: DEFAULT_TEMPERATURE,
            train,
            alphas: vec![0.5, 1.0, 2.0, 4.0],
        }
    }
}

/// Everything derived from one pipeline seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub warm: ToyLm,
    pub forged: ForgeOutput,
    pub train: Vec<TokenizedSample>,
    pub val: Vec<TokenizedSample>,
    pub test: Vec<TokenizedSample>,
    pub val_rows: Vec<ForgedSample>,
    pub test_rows: Vec<ForgedSample>,
}

/// Evaluation rows for held-out sources: both contexts plus a placeholder pair.
pub fn eval_samples(sources: &[SourceSample], distractors: &[String], h: &HaystackConfig, salt: u64) -> Result<Vec<ForgedSample>> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(h.seed ^ salt, i as u64);
            Ok(ForgedSample {
                question: s.question.clone(),
                answer: s.answer.clone(),
                x_short: synthesize_context(s, distractors, h.target_short_tokens, h.tolerance_frac, &mut rng)?,
                x_long: synthesize_context(s, distractors, h.target_long_tokens, h.tolerance_frac, &mut rng)?,
                y_w: gold_response(&s.answer),
                y_l: NO_ANSWER.into(),
            })
        })
        .collect()
}

pub fn prepare(cfg: &PipelineConfig, seed: u64) -> Result<Prepared> {
    prepare_with(cfg, seed, &world::generate(&WorldConfig { seed, ..cfg.world }))
}

/// [`prepare`] over a given corpus. Sources are split in order into train,
/// validation and test.
pub fn prepare_with(cfg: &PipelineConfig, seed: u64, w: &World) -> Result<Prepared> {
    ensure!(w.sources.len() >= cfg.n_train + cfg.n_val + cfg.n_test, "world has too few sources");
    let (train_src, rest) = w.sources.split_at(cfg.n_train);
    let (val_src, rest) = rest.split_at(cfg.n_val);
    let test_src = &rest[..cfg.n_test];
    let haystack = HaystackConfig { seed, ..cfg.forge.haystack };
    let vocab = world::world_vocab();

    // Warm start on gold answers with short contexts, disjoint from the
    // forging contexts by seed salt.
    let warm_rows = eval_samples(train_src, &w.distractors, &haystack, 0x5f7)?;
    let sft_data: Vec<_> = tokenize(&vocab, &warm_rows)?.into_iter().map(|t| (t.ctx_short, t.y_w)).collect();
    let mut warm = ToyLm::init(vocab.clone(), cfg.width, seed)?;
    train_sft(&mut warm, &sft_data, &SftConfig { seed, ..cfg.sft })?;

    let generator = ToyLmGenerator { model: &warm, temperature: cfg.temperature, max_len: 8 };
    let forged = forge_dataset(train_src, &w.distractors, &generator, &ForgeConfig { haystack, ..cfg.forge })
        .context("forging the training set")?;
    ensure!(!forged.samples.is_empty(), "forging produced no samples");
    let train = tokenize(&vocab, &forged.samples)?;
    let val_rows = eval_samples(val_src, &w.distractors, &haystack, 0xa11)?;
    let test_rows = eval_samples(test_src, &w.distractors, &haystack, 0x7e5)?;
    let val = tokenize(&vocab, &val_rows)?;
    let test = tokenize(&vocab, &test_rows)?;
    Ok(Prepared { warm, forged, train, val, test, val_rows, test_rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: String,
    pub alpha: f64,
    pub val_short: f64,
    pub val_long: f64,
    pub test_short: f64,
    pub test_long: f64,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub emitted: usize,
    pub warm_test_short: f64,
    pub warm_test_long: f64,
    /// Vanilla first, then one run per alpha.
    pub runs: Vec<RunResult>,
}

fn configs(cfg: &PipelineConfig) -> Vec<(String, TrainConfig)> {
    let mut out = vec![("vanilla".to_string(), TrainConfig { method: cfg.train.method.with_alpha(0.0), ..cfg.train })];
    for &a in &cfg.alphas {
        out.push((format!("solo_alpha_{a}"), TrainConfig { method: cfg.train.method.with_alpha(a), ..cfg.train }));
    }
    out
}

pub fn run_seed(cfg: &PipelineConfig, seed: u64) -> Result<SeedResult> {
    let p = prepare(cfg, seed)?;
    let mut runs = Vec::new();
    for (name, tc) in configs(cfg) {
        let mut model = p.warm.clone();
        let log = train(&mut model, &p.train, &TrainConfig { seed, ..tc }, None)?;
        runs.push(RunResult {
            config: name,
            alpha: tc.method.alpha,
            val_short: evaluate(&model, &p.val, ContextKind::Short)?,
            val_long: evaluate(&model, &p.val, ContextKind::Long)?,
            test_short: evaluate(&model, &p.test, ContextKind::Short)?,
            test_long: evaluate(&model, &p.test, ContextKind::Long)?,
            log,
        });
    }
    Ok(SeedResult {
        seed,
        emitted: p.train.len(),
        warm_test_short: evaluate(&p.warm, &p.test, ContextKind::Short)?,
        warm_test_long: evaluate(&p.warm, &p.test, ContextKind::Long)?,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalReport {
    pub alphas: Vec<f64>,
    pub seeds: Vec<SeedResult>,
    /// Alpha with the best mean validation long-context accuracy.
    pub chosen_alpha: f64,
    /// `(mean, std)` of test accuracy over seeds.
    pub vanilla_short: (f64, f64),
    pub vanilla_long: (f64, f64),
    pub solo_short: (f64, f64),
    pub solo_long: (f64, f64),
    /// `sqrt((s1² + s2²) / n)` for the long- and short-context comparisons.
    pub pooled_se_long: f64,
    pub pooled_se_short: f64,
    pub seconds: f64,
}

impl DirectionalReport {
    pub fn long_gain(&self) -> f64 {
        self.solo_long.0 - self.vanilla_long.0
    }

    pub fn short_delta(&self) -> f64 {
        self.solo_short.0 - self.vanilla_short.0
    }
}

/// Vanilla short-context PO against SoLo with alpha tuned on validation.
pub fn directional_experiment(cfg: &PipelineConfig, seeds: &[u64]) -> Result<DirectionalReport> {
    ensure!(!seeds.is_empty() && !cfg.alphas.is_empty(), "need seeds and alphas");
    let start = std::time::Instant::now();
    let results = seeds.iter().map(|&s| run_seed(cfg, s)).collect::<Result<Vec<_>>>()?;
    let val_long = |k: usize| results.iter().map(|r| r.runs[k + 1].val_long).sum::<f64>();
    let best = (0..cfg.alphas.len())
        .max_by(|&a, &b| val_long(a).partial_cmp(&val_long(b)).unwrap().then(b.cmp(&a)))
        .unwrap();
    let col = |f: &dyn Fn(&SeedResult) -> f64| mean_std(&results.iter().map(f).collect::<Vec<_>>());
    let vanilla_short = col(&|r| r.runs[0].test_short);
    let vanilla_long = col(&|r| r.runs[0].test_long);
    let solo_short = col(&|r| r.runs[best + 1].test_short);
    let solo_long = col(&|r| r.runs[best + 1].test_long);
    let n = seeds.len() as f64;
    let pooled = |a: (f64, f64), b: (f64, f64)| ((a.1 * a.1 + b.1 * b.1) / n).sqrt();
    Ok(DirectionalReport {
        alphas: cfg.alphas.clone(),
        chosen_alpha: cfg.alphas[best],
        pooled_se_long: pooled(vanilla_long, solo_long),
        pooled_se_short: pooled(vanilla_short, solo_short),
        vanilla_short,
        vanilla_long,
        solo_short,
        solo_long,
        seeds: results,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Chosen-only against both-response alignment from one warm start and one
/// forged dataset (prepared with `data_seed`), trained under each of `seeds`.
pub fn mode_comparison(cfg: &PipelineConfig, data_seed: u64, seeds: &[u64], alpha: f64) -> Result<ComparisonReport> {
    let configs: Vec<(String, TrainConfig)> = [RaMode::ChosenOnly, RaMode::Both]
        .into_iter()
        .map(|mode| {
            let method = cfg.train.method.with_alpha(alpha).with_ra_mode(mode);
            (mode.name().to_string(), TrainConfig { method, ..cfg.train })
        })
        .collect();
    let p = prepare(cfg, data_seed)?;
    Ok(run_comparison(seeds, &configs, |_| p.warm.clone(), &p.train, &p.test)?)
}
