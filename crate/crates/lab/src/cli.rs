//! The `solopo` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use solopo_core::bounds::suites::{
    assumption1_necessity, domination_suite, lemma1_suite, lemma1_suite_with, square_sform_dominates_exact,
    theorem1_exact_suite, theorem1_sform_suite, theorem2_suite, unclamped_table_witness, DominationResult,
    NecessityResult,
};
use solopo_core::bounds::{BoundReport, Norm, VIOLATION_TOLERANCE};
use solopo_core::efficiency::{report as efficiency_report, speedup, CostModel};
use solopo_core::forge::world::{self, World};
use solopo_core::forge::{ForgedSample, SourceSample};
use solopo_core::gpo::check::{gradient_fidelity, GradCheckReport};
use solopo_core::gpo::{ConvexLink, Method, RaMode};
use solopo_core::policy::ToyLm;
use solopo_core::rng::stream;
use solopo_core::train::{evaluate, tokenize, train, ContextKind, TrainConfig};

use crate::config::RunSettings;
use crate::io::{load_checkpoint, read_jsonl, save_checkpoint, write_csv, write_curves_csv, write_json, write_jsonl};
use crate::pipeline::{directional_experiment, mode_comparison, prepare_with};
use crate::run::{resolve_dir, RunDir};

/// Tolerance of the finite-difference checks.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Tolerance of the square-link domination equality.
pub const SQUARE_EQUALITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "solopo", version, about = "Short-to-long preference optimization lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: $SOLOPO_RUN_DIR, then runs/<subcommand>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the analytic bounds on random and grid instances.
    VerifyBounds {
        #[command(flatten)]
        common: Common,
        /// Also run the Lemma 1 suite with a non-convex function, which must fail.
        #[arg(long)]
        inject_nonconvex: bool,
    },
    /// Warm-start a policy and forge the preference dataset.
    Forge {
        #[command(flatten)]
        common: Common,
        /// JSONL of source samples instead of the bundled corpus.
        #[arg(long, requires = "distractors")]
        sources: Option<PathBuf>,
        /// JSONL of distractor documents (one JSON string per line).
        #[arg(long, requires = "sources")]
        distractors: Option<PathBuf>,
    },
    /// Train on a forged dataset, or run the comparison matrix.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run directory of a previous `forge`.
        #[arg(long, required_unless_present = "compare")]
        data: Option<PathBuf>,
        /// Vanilla against tuned-alpha runs over the configured seeds, plus
        /// the chosen-only against both-response margin curves.
        #[arg(long)]
        compare: bool,
    },
    /// Greedy short- and long-context accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// JSONL of forged samples.
        #[arg(long)]
        data: PathBuf,
    },
    /// Analytic training-cost model.
    Speedup {
        #[command(flatten)]
        common: Common,
        /// Print the speedup at one compression rate.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1000,4000,8000,16000")]
        n_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.0625,0.125,0.25,0.5,0.70710678,0.75,1")]
        c_grid: Vec<f64>,
        #[arg(long, default_value = "chosen_only")]
        ra_mode: String,
    },
    /// Finite-difference check of the analytic gradients.
    GradCheck {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::VerifyBounds { .. } => "verify-bounds",
            Command::Forge { .. } => "forge",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Speedup { .. } => "speedup",
            Command::GradCheck { .. } => "grad-check",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::VerifyBounds { common, .. }
            | Command::Forge { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Speedup { common, .. }
            | Command::GradCheck { common } => common,
        }
    }
}

/// Runs one command; `Ok(false)` means a requested check failed.
pub fn run(cli: Cli, args: Vec<String>) -> Result<bool> {
    let common = cli.command.common();
    let mut settings = RunSettings::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        settings.seed = s;
    }
    let name = cli.command.name();
    let dir = resolve_dir(common.out.as_deref(), name);
    let mut run = RunDir::create(dir, name, args, common.config.as_deref(), settings.seed)?;
    let ok = match &cli.command {
        Command::VerifyBounds { inject_nonconvex, .. } => verify_bounds(&mut run, &settings, *inject_nonconvex)?,
        Command::Forge { sources, distractors, .. } => forge(&mut run, &settings, sources.as_deref(), distractors.as_deref())?,
        Command::Train { data, compare: true, .. } => {
            ensure!(data.is_none(), "--compare builds its own datasets; drop --data");
            compare(&mut run, &settings)?
        }
        Command::Train { data, .. } => train_cmd(&mut run, &settings, data.as_deref().unwrap())?,
        Command::Eval { model, data, .. } => eval_cmd(&mut run, model, data)?,
        Command::Speedup { c, n_grid, c_grid, ra_mode, .. } => speedup_cmd(&mut run, *c, n_grid, c_grid, ra_mode)?,
        Command::GradCheck { .. } => grad_check(&mut run, &settings)?,
    };
    let manifest = run.finish()?;
    eprintln!("manifest: {}", manifest.display());
    Ok(ok)
}

pub fn main_with(cli: Cli) -> ExitCode {
    let args = std::env::args().collect();
    match run(cli, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn save_json<T: Serialize + ?Sized>(run: &mut RunDir, rel: &str, value: &T) -> Result<()> {
    write_json(&run.path(rel), value)?;
    run.add_output(rel)?;
    Ok(())
}

fn save_csv<T: Serialize>(run: &mut RunDir, rel: &str, rows: &[T]) -> Result<()> {
    write_csv(&run.path(rel), rows)?;
    run.add_output(rel)?;
    Ok(())
}

fn save_jsonl<T: Serialize>(run: &mut RunDir, rel: &str, rows: &[T]) -> Result<()> {
    write_jsonl(&run.path(rel), rows)?;
    run.add_output(rel)?;
    Ok(())
}

fn save_model(run: &mut RunDir, rel: &str, model: &ToyLm) -> Result<()> {
    save_checkpoint(&run.path(rel), model)?;
    run.add_output(rel)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsSummary {
    pub passed: bool,
    pub tolerance: f64,
    pub reports: Vec<BoundReport>,
    pub domination: Vec<DominationResult>,
    /// Diagnostics that do not affect the exit code.
    pub necessity: NecessityResult,
    pub unclamped_table: Vec<String>,
}

pub fn run_bounds(settings: &RunSettings) -> BoundsSummary {
    let (seed, b) = (settings.seed, settings.bounds);
    let mut reports = vec![lemma1_suite(b.lemma1_instances, seed)];
    for link in ConvexLink::ALL {
        reports.push(theorem1_exact_suite(link, b.scenarios, seed));
        reports.push(theorem1_sform_suite(link, b.scenarios, seed));
    }
    for norm in [Norm::P(1.0), Norm::P(2.0), Norm::Infinity] {
        reports.push(theorem2_suite(norm, b.scenarios, seed));
    }
    reports.push(square_sform_dominates_exact(b.scenarios, seed));
    let domination = domination_suite();
    let dom_ok = domination.iter().all(|d| {
        d.max_scaled_violation <= VIOLATION_TOLERANCE
            && (d.link != ConvexLink::Square || d.max_gap <= SQUARE_EQUALITY_TOLERANCE)
    });
    let passed = dom_ok && reports.iter().all(|r| r.passed(VIOLATION_TOLERANCE));
    let unclamped_table = [ConvexLink::Hinge, ConvexLink::SquaredHinge]
        .into_iter()
        .filter_map(|link| {
            unclamped_table_witness(link, 0.5)
                .map(|(x, lhs, s)| format!("{} gamma=0.5: x={x} cross-sum={lhs} s={s}", link.name()))
        })
        .collect();
    BoundsSummary {
        passed,
        tolerance: VIOLATION_TOLERANCE,
        reports,
        domination,
        necessity: assumption1_necessity(ConvexLink::Logistic, b.necessity_attempts, seed),
        unclamped_table,
    }
}

/// Function used by the harness self-test: concave, so Lemma 1 must fail.
pub fn nonconvex_probe(x: f64) -> f64 {
    -x * x
}

fn verify_bounds(run: &mut RunDir, settings: &RunSettings, inject: bool) -> Result<bool> {
    let start = Instant::now();
    let mut summary = run_bounds(settings);
    if inject {
        let r = lemma1_suite_with("lemma1_nonconvex", nonconvex_probe, 10_000, settings.seed);
        summary.passed &= r.passed(VIOLATION_TOLERANCE);
        summary.reports.push(r);
    }
    for r in &summary.reports {
        let verdict = if r.passed(VIOLATION_TOLERANCE) { "ok" } else { "VIOLATED" };
        println!("{:<32} n={:<8} max_violation={:+.3e} {verdict}", r.check, r.instances, r.max_violation);
    }
    for d in &summary.domination {
        println!(
            "domination {:<14} gamma={:<4} max_scaled_violation={:+.3e} max_gap={:.3e}",
            d.link.name(),
            d.gamma,
            d.max_scaled_violation,
            d.max_gap
        );
    }
    let n = &summary.necessity;
    println!("assumption-1 necessity: attempts={} witness={}", n.attempts, n.witness.is_some());
    save_json(run, "reports/bounds.json", &summary)?;
    if !summary.passed {
        let witnesses: Vec<_> = summary
            .reports
            .iter()
            .filter(|r| !r.passed(VIOLATION_TOLERANCE))
            .map(|r| (r.check.clone(), r.worst_witness.clone(), r.condition.clone()))
            .collect();
        save_json(run, "reports/witnesses.json", &witnesses)?;
        for (check, w, _) in &witnesses {
            println!("witness {check}: {w:?}");
        }
    }
    eprintln!("verify-bounds: {:.1}s", start.elapsed().as_secs_f64());
    println!("{}", if summary.passed { "PASS" } else { "FAIL" });
    Ok(summary.passed)
}

fn load_world(run: &mut RunDir, settings: &RunSettings, sources: Option<&Path>, distractors: Option<&Path>) -> Result<World> {
    match (sources, distractors) {
        (Some(s), Some(d)) => {
            run.add_input(s)?;
            run.add_input(d)?;
            let sources: Vec<SourceSample> = read_jsonl(s)?;
            for (i, src) in sources.iter().enumerate() {
                src.validate().with_context(|| format!("{}:{}", s.display(), i + 1))?;
            }
            Ok(World { sources, distractors: read_jsonl(d)? })
        }
        _ => Ok(world::generate(&world::WorldConfig { seed: settings.seed, ..settings.pipeline.world })),
    }
}

fn forge(run: &mut RunDir, settings: &RunSettings, sources: Option<&Path>, distractors: Option<&Path>) -> Result<bool> {
    let w = load_world(run, settings, sources, distractors)?;
    let p = prepare_with(&settings.pipeline, settings.seed, &w)?;
    save_jsonl(run, "data/forged.jsonl", &p.forged.samples)?;
    save_jsonl(run, "data/val.jsonl", &p.val_rows)?;
    save_jsonl(run, "data/test.jsonl", &p.test_rows)?;
    save_model(run, "checkpoints/warm.bin", &p.warm)?;
    save_json(run, "reports/forge_stats.json", &p.forged.stats)?;
    let s = &p.forged.stats;
    println!(
        "forged {} of {} sources; compression {:.4} (short {:.1}, long {:.1} tokens)",
        s.emitted, s.sources_seen, s.compression, s.mean_short_tokens, s.mean_long_tokens
    );
    Ok(true)
}

#[derive(Debug, Serialize)]
struct Accuracy {
    n: usize,
    short: f64,
    long: f64,
}

fn train_cmd(run: &mut RunDir, settings: &RunSettings, data: &Path) -> Result<bool> {
    let forged_path = data.join("data/forged.jsonl");
    let warm_path = data.join("checkpoints/warm.bin");
    let test_path = data.join("data/test.jsonl");
    for p in [&forged_path, &warm_path, &test_path] {
        run.add_input(p)?;
    }
    let mut model = load_checkpoint(&warm_path)?;
    let vocab = model.vocab().clone();
    let train_set = tokenize(&vocab, &read_jsonl::<ForgedSample>(&forged_path)?)?;
    let test_set = tokenize(&vocab, &read_jsonl::<ForgedSample>(&test_path)?)?;
    let cfg = TrainConfig { seed: settings.seed, ..settings.pipeline.train };
    let eval_set = (cfg.eval_every > 0).then_some(test_set.as_slice());
    let log = train(&mut model, &train_set, &cfg, eval_set)?;
    save_model(run, "checkpoints/model.bin", &model)?;
    save_csv(run, "logs/steps.csv", &log.steps)?;
    save_csv(run, "logs/evals.csv", &log.evals)?;
    save_json(run, "logs/train_log.json", &log)?;
    let acc = Accuracy {
        n: test_set.len(),
        short: evaluate(&model, &test_set, ContextKind::Short)?,
        long: evaluate(&model, &test_set, ContextKind::Long)?,
    };
    save_json(run, "reports/train.json", &acc)?;
    println!("trained {} steps; test short {:.3} long {:.3}", log.steps.len(), acc.short, acc.long);
    Ok(true)
}

#[derive(Debug, Serialize)]
struct ComparisonCsvRow<'a> {
    seed: u64,
    config: &'a str,
    alpha: f64,
    val_short: f64,
    val_long: f64,
    test_short: f64,
    test_long: f64,
}

fn compare(run: &mut RunDir, settings: &RunSettings) -> Result<bool> {
    let cfg = &settings.pipeline;
    let report = directional_experiment(cfg, &settings.seeds)?;
    let rows: Vec<ComparisonCsvRow> = report
        .seeds
        .iter()
        .flat_map(|s| {
            s.runs.iter().map(move |r| ComparisonCsvRow {
                seed: s.seed,
                config: &r.config,
                alpha: r.alpha,
                val_short: r.val_short,
                val_long: r.val_long,
                test_short: r.test_short,
                test_long: r.test_long,
            })
        })
        .collect();
    save_csv(run, "reports/comparison.csv", &rows)?;
    let mut deterministic = report.clone();
    deterministic.seconds = 0.0;
    save_json(run, "reports/comparison.json", &deterministic)?;
    println!(
        "alpha={} long: vanilla {:.3}±{:.3} solo {:.3}±{:.3} (se {:.4}); short: vanilla {:.3} solo {:.3} (se {:.4})",
        report.chosen_alpha,
        report.vanilla_long.0,
        report.vanilla_long.1,
        report.solo_long.0,
        report.solo_long.1,
        report.pooled_se_long,
        report.vanilla_short.0,
        report.solo_short.0,
        report.pooled_se_short
    );

    let modes = mode_comparison(cfg, settings.seed, &settings.seeds, report.chosen_alpha)?;
    save_csv(run, "reports/mode_summary.csv", &modes.summary)?;
    save_json(run, "reports/mode_comparison.json", &modes)?;
    write_curves_csv(&run.path("logs/margin_curves.csv"), &modes.curves)?;
    run.add_output("logs/margin_curves.csv")?;
    Ok(true)
}

fn eval_cmd(run: &mut RunDir, model_path: &Path, data: &Path) -> Result<bool> {
    run.add_input(model_path)?;
    run.add_input(data)?;
    let model = load_checkpoint(model_path)?;
    let set = tokenize(model.vocab(), &read_jsonl::<ForgedSample>(data)?)?;
    let acc = Accuracy {
        n: set.len(),
        short: evaluate(&model, &set, ContextKind::Short)?,
        long: evaluate(&model, &set, ContextKind::Long)?,
    };
    save_json(run, "reports/eval.json", &acc)?;
    println!("n={} short {:.4} long {:.4}", acc.n, acc.short, acc.long);
    Ok(true)
}

fn speedup_cmd(run: &mut RunDir, c: Option<f64>, n_grid: &[f64], c_grid: &[f64], ra_mode: &str) -> Result<bool> {
    let Some(mode) = RaMode::from_name(ra_mode) else { bail!("unknown ra_mode {ra_mode:?}") };
    if let Some(c) = c {
        println!("{:.3}", speedup(c)?);
    }
    let models = n_grid
        .iter()
        .flat_map(|&n| c_grid.iter().map(move |&c| CostModel::new(n, c, mode)))
        .collect::<Result<Vec<_>, _>>()?;
    save_csv(run, "reports/efficiency.csv", &efficiency_report(&models))?;
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelGradCheck {
    pub params_checked: usize,
    pub max_rel_error: f64,
}

/// Sequence log-probability gradient of a small random policy against
/// central differences on a random subset of parameters.
pub fn model_grad_check(seed: u64, params: usize) -> Result<ModelGradCheck> {
    let vocab = world::world_vocab();
    let model = ToyLm::init(vocab.clone(), 8, seed)?;
    let mut rng = stream(seed, 7);
    let v = vocab.len() as u32;
    let ctx_tokens: Vec<u32> = (0..12).map(|_| rng.gen_range(3..v)).collect();
    let resp: Vec<u32> = (0..4).map(|_| rng.gen_range(3..v)).collect();
    let ctx = model.encode_context(&ctx_tokens)?;
    let mut grad = vec![0.0; model.n_params()];
    model.accumulate_logprob_grad(&ctx, &resp, 1.0, &mut grad)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..params {
        let i = rng.gen_range(0..model.n_params());
        let mut probe = model.clone();
        probe.params_mut()[i] += h;
        let plus = probe.logprob(&ctx_tokens, &resp)?.total_logprob;
        probe.params_mut()[i] -= 2.0 * h;
        let minus = probe.logprob(&ctx_tokens, &resp)?.total_logprob;
        let num = (plus - minus) / (2.0 * h);
        worst = worst.max((grad[i] - num).abs() / grad[i].abs().max(num.abs()).max(1.0));
    }
    Ok(ModelGradCheck { params_checked: params, max_rel_error: worst })
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSummary {
    pub passed: bool,
    pub tolerance: f64,
    pub losses: Vec<GradCheckReport>,
    pub model: ModelGradCheck,
}

pub fn run_grad_check(settings: &RunSettings) -> Result<GradCheckSummary> {
    let mut losses = Vec::new();
    for m in Method::ALL {
        for mode in RaMode::ALL {
            losses.push(gradient_fidelity(m, mode, settings.grad_points, settings.seed)?);
        }
    }
    let model = model_grad_check(settings.seed, 200)?;
    let passed = model.max_rel_error < GRAD_TOLERANCE && losses.iter().all(|r| r.max_rel_error < GRAD_TOLERANCE);
    Ok(GradCheckSummary { passed, tolerance: GRAD_TOLERANCE, losses, model })
}

fn grad_check(run: &mut RunDir, settings: &RunSettings) -> Result<bool> {
    let s = run_grad_check(settings)?;
    for r in &s.losses {
        println!("{:<6} {:<12} points={} max_rel_error={:.3e}", r.method.name(), r.ra_mode.name(), r.points, r.max_rel_error);
    }
    println!("policy params={} max_rel_error={:.3e}", s.model.params_checked, s.model.max_rel_error);
    save_json(run, "reports/gradcheck.json", &s)?;
    println!("{}", if s.passed { "PASS" } else { "FAIL" });
    Ok(s.passed)
}
