//! Haystack context synthesis, substring-match answer checking and
//! preference-pair curation.

pub mod world;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::policy::{ToyLm, Vocab, SEP};
use crate::rng::{stream, LabRng};

/// Marker preceding the answer span of a response.
pub const ANSWER_MARKER: &str = "the answer is:";
/// Separator placed between documents of a synthesized context.
pub const DOC_SEPARATOR: &str = SEP;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForgeError {
    #[error("distractor pool exhausted at {have} of {want} tokens")]
    InsufficientPool { have: usize, want: usize },
    #[error("supporting documents alone ({have} tokens) exceed the target of {max}")]
    SupportTooLong { have: usize, max: usize },
    #[error("invalid source sample: {0}")]
    InvalidSource(&'static str),
    #[error("invalid haystack config: {0}")]
    InvalidConfig(&'static str),
    #[error("forged sample violates its invariants: {0}")]
    Invariant(String),
    #[error("candidate generator failed: {0}")]
    Generator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSample {
    pub question: String,
    pub answer: String,
    pub supporting_docs: Vec<String>,
}

impl SourceSample {
    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.answer.trim().is_empty() {
            return Err(ForgeError::InvalidSource("answer must be non-empty"));
        }
        if self.supporting_docs.is_empty() {
            return Err(ForgeError::InvalidSource("need at least one supporting document"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaystackConfig {
    pub target_short_tokens: usize,
    pub target_long_tokens: usize,
    pub tolerance_frac: f64,
    pub seed: u64,
}

impl Default for HaystackConfig {
    fn default() -> Self {
        Self { target_short_tokens: 64, target_long_tokens: 512, tolerance_frac: 0.05, seed: 0 }
    }
}

impl HaystackConfig {
    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.target_short_tokens == 0 || self.target_short_tokens >= self.target_long_tokens {
            return Err(ForgeError::InvalidConfig("need 0 < target_short_tokens < target_long_tokens"));
        }
        if !(0.0..1.0).contains(&self.tolerance_frac) {
            return Err(ForgeError::InvalidConfig("tolerance_frac must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Configured compression rate `short / long`.
    pub fn compression(&self) -> f64 {
        self.target_short_tokens as f64 / self.target_long_tokens as f64
    }
}

/// One row of the short-to-long preference dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgedSample {
    pub question: String,
    pub answer: String,
    pub x_short: String,
    pub x_long: String,
    pub y_w: String,
    pub y_l: String,
}

impl ForgedSample {
    /// Checks the emitted-sample invariants against the originating source.
    pub fn check(&self, src: &SourceSample, cfg: &HaystackConfig) -> Result<(), ForgeError> {
        for doc in &src.supporting_docs {
            if !contains_doc(&self.x_short, doc) || !contains_doc(&self.x_long, doc) {
                return Err(ForgeError::Invariant(format!("supporting document missing: {doc:?}")));
            }
        }
        for (name, text, target) in
            [("x_short", &self.x_short, cfg.target_short_tokens), ("x_long", &self.x_long, cfg.target_long_tokens)]
        {
            let (lo, hi) = token_window(target, cfg.tolerance_frac);
            let n = token_count(text);
            if n < lo || n > hi {
                return Err(ForgeError::Invariant(format!("{name} has {n} tokens, outside [{lo}, {hi}]")));
            }
        }
        if !sub_em(&self.y_w, &self.answer) {
            return Err(ForgeError::Invariant("chosen response does not match the answer".into()));
        }
        if sub_em(&self.y_l, &self.answer) {
            return Err(ForgeError::Invariant("rejected response matches the answer".into()));
        }
        Ok(())
    }
}

/// Whitespace token count.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Whether `doc` appears as a whole document of `context`.
fn contains_doc(context: &str, doc: &str) -> bool {
    let doc = normalize_ws(doc);
    split_docs(context).any(|d| normalize_ws(d) == doc)
}

fn split_docs(context: &str) -> impl Iterator<Item = &str> {
    context.split(DOC_SEPARATOR).map(str::trim)
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Inclusive token window `[⌈t(1−tol)⌉, ⌊t(1+tol)⌋]`.
pub fn token_window(target: usize, tolerance_frac: f64) -> (usize, usize) {
    let t = target as f64;
    (libm::ceil(t * (1.0 - tolerance_frac) - 1e-9) as usize, libm::floor(t * (1.0 + tolerance_frac) + 1e-9) as usize)
}

fn join_docs(docs: &[&str]) -> String {
    let sep = format!(" {DOC_SEPARATOR} ");
    docs.iter().map(|d| normalize_ws(d)).collect::<Vec<_>>().join(&sep)
}

/// Supporting documents plus randomly drawn distractors, shuffled and joined
/// with [`DOC_SEPARATOR`]. The separators count towards the length.
pub fn synthesize_context<R: Rng + ?Sized>(
    src: &SourceSample,
    distractors: &[String],
    target: usize,
    tolerance_frac: f64,
    rng: &mut R,
) -> Result<String, ForgeError> {
    src.validate()?;
    let (lo, hi) = token_window(target, tolerance_frac);
    let mut docs: Vec<&str> = src.supporting_docs.iter().map(String::as_str).collect();
    let mut count = docs.iter().map(|d| token_count(d)).sum::<usize>() + docs.len() - 1;
    if count > hi {
        return Err(ForgeError::SupportTooLong { have: count, max: hi });
    }
    let costs: Vec<usize> = distractors.iter().map(|d| token_count(d) + 1).collect();
    let reachable = reachable_gaps(lo.saturating_sub(count), hi - lo, &costs);
    let mut order: Vec<usize> = (0..distractors.len()).collect();
    order.shuffle(rng);
    for i in order {
        if count >= lo {
            break;
        }
        let d = distractors[i].as_str();
        let cost = costs[i];
        // Never leave a remainder that no combination of documents can fill.
        let gap_after = (lo - count).saturating_sub(cost);
        if cost == 1 || count + cost > hi || !reachable[gap_after] || src.supporting_docs.iter().any(|s| s == d) {
            continue;
        }
        docs.push(d);
        count += cost;
    }
    if count < lo {
        return Err(ForgeError::InsufficientPool { have: count, want: lo });
    }
    docs.shuffle(rng);
    Ok(join_docs(&docs))
}

/// `reachable[g]`: a remaining gap of `g` tokens can be closed to within
/// `slack` extra tokens using documents of the given costs.
fn reachable_gaps(max_gap: usize, slack: usize, costs: &[usize]) -> Vec<bool> {
    let mut distinct: Vec<usize> = costs.iter().copied().filter(|&c| c > 1).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let mut reachable = alloc::vec![false; max_gap + 1];
    reachable[0] = true;
    for g in 1..=max_gap {
        reachable[g] = distinct.iter().any(|&c| if c >= g { c - g <= slack } else { reachable[g - c] });
    }
    reachable
}

/// Lowercase, punctuation removed, articles dropped, whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Text after the last case-insensitive answer marker, or the whole text.
pub fn answer_span(prediction: &str) -> &str {
    let lower = prediction.to_ascii_lowercase();
    match lower.rfind(ANSWER_MARKER) {
        // ASCII lowercasing keeps byte offsets aligned.
        Some(i) => &prediction[i + ANSWER_MARKER.len()..],
        None => prediction,
    }
}

/// Substring exact match of the normalized gold answer in the normalized
/// answer span of `prediction`.
pub fn sub_em(prediction: &str, gold: &str) -> bool {
    let gold = normalize_answer(gold);
    if gold.is_empty() {
        return false;
    }
    normalize_answer(answer_span(prediction)).contains(&gold)
}

/// Uniform draw from the correct and from the incorrect candidates.
pub fn curate_pair<R: Rng + ?Sized>(candidates: &[String], gold: &str, rng: &mut R) -> Option<(String, String)> {
    let (good, bad): (Vec<&String>, Vec<&String>) = candidates.iter().partition(|c| sub_em(c, gold));
    let w = good.choose(rng)?;
    let l = bad.choose(rng)?;
    Some(((*w).clone(), (*l).clone()))
}

/// Produces candidate responses for a question and context.
pub trait CandidateGenerator {
    fn generate(&self, question: &str, context: &str, n: usize, rng: &mut LabRng) -> Result<Vec<String>, ForgeError>;
}

/// Samples from a [`ToyLm`] conditioned on `question <sep> context`.
#[derive(Debug, Clone)]
pub struct ToyLmGenerator<'a> {
    pub model: &'a ToyLm,
    pub temperature: f64,
    pub max_len: usize,
}

/// Model input for a question and a context.
pub fn model_input(vocab: &Vocab, question: &str, context: &str) -> Result<Vec<u32>, crate::policy::PolicyError> {
    let mut ids = vocab.encode(question)?;
    ids.push(vocab.sep());
    ids.extend(vocab.encode(context)?);
    Ok(ids)
}

impl CandidateGenerator for ToyLmGenerator<'_> {
    fn generate(&self, question: &str, context: &str, n: usize, rng: &mut LabRng) -> Result<Vec<String>, ForgeError> {
        let vocab = self.model.vocab();
        let err = |e: crate::policy::PolicyError| ForgeError::Generator(e.to_string());
        let input = model_input(vocab, question, context).map_err(err)?;
        self.model
            .sample(&input, n, self.temperature, self.max_len, rng)
            .map_err(err)?
            .iter()
            .map(|s| vocab.decode(&s.tokens).map_err(err))
            .collect()
    }
}

/// Context the candidates are conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForgeCondition {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub haystack: HaystackConfig,
    pub n_candidates: usize,
    pub n_target: usize,
    pub condition: ForgeCondition,
    /// Keep only sources whose pair curation succeeds under both contexts.
    pub intersection: bool,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            haystack: HaystackConfig::default(),
            n_candidates: crate::policy::DEFAULT_SAMPLES,
            n_target: usize::MAX,
            condition: ForgeCondition::Short,
            intersection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeFailure {
    pub source_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeStats {
    pub sources_seen: usize,
    pub emitted: usize,
    pub discarded_all_correct: usize,
    pub discarded_all_incorrect: usize,
    /// Sources dropped because the other context failed in intersection mode.
    pub discarded_intersection: usize,
    pub failures: Vec<ForgeFailure>,
    /// Discarded curation attempts over sources that reached curation.
    pub discard_rate: f64,
    pub mean_short_tokens: f64,
    pub mean_long_tokens: f64,
    /// Achieved `mean_short_tokens / mean_long_tokens`.
    pub compression: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeOutput {
    pub samples: Vec<ForgedSample>,
    /// Index of the originating source for each sample.
    pub source_indices: Vec<usize>,
    pub stats: ForgeStats,
}

enum Curation {
    Pair(String, String),
    AllCorrect,
    AllIncorrect,
}

fn curate_from<G: CandidateGenerator + ?Sized>(
    generator: &G,
    src: &SourceSample,
    context: &str,
    n: usize,
    rng: &mut LabRng,
) -> Result<Curation, ForgeError> {
    let candidates = generator.generate(&src.question, context, n, rng)?;
    if candidates.is_empty() {
        return Err(ForgeError::Generator("no candidates".into()));
    }
    Ok(match curate_pair(&candidates, &src.answer, rng) {
        Some((w, l)) => Curation::Pair(w, l),
        None if candidates.iter().all(|c| sub_em(c, &src.answer)) => Curation::AllCorrect,
        None => Curation::AllIncorrect,
    })
}

/// Runs the pipeline over `sources` in order until `cfg.n_target` samples are
/// emitted. Each source uses its own random stream, so output is a pure
/// function of the inputs and the seed.
pub fn forge_dataset<G: CandidateGenerator + ?Sized>(
    sources: &[SourceSample],
    distractors: &[String],
    generator: &G,
    cfg: &ForgeConfig,
) -> Result<ForgeOutput, ForgeError> {
    cfg.haystack.validate()?;
    if cfg.n_candidates == 0 {
        return Err(ForgeError::InvalidConfig("n_candidates must be positive"));
    }
    let h = &cfg.haystack;
    let mut samples = Vec::new();
    let mut source_indices = Vec::new();
    let mut stats = ForgeStats {
        sources_seen: 0,
        emitted: 0,
        discarded_all_correct: 0,
        discarded_all_incorrect: 0,
        discarded_intersection: 0,
        failures: Vec::new(),
        discard_rate: 0.0,
        mean_short_tokens: 0.0,
        mean_long_tokens: 0.0,
        compression: 0.0,
    };
    let (mut short_sum, mut long_sum) = (0usize, 0usize);
    for (i, src) in sources.iter().enumerate() {
        if samples.len() >= cfg.n_target {
            break;
        }
        stats.sources_seen += 1;
        let mut rng = stream(h.seed, i as u64);
        let attempt = (|| -> Result<Option<ForgedSample>, ForgeError> {
            let x_short = synthesize_context(src, distractors, h.target_short_tokens, h.tolerance_frac, &mut rng)?;
            let x_long = synthesize_context(src, distractors, h.target_long_tokens, h.tolerance_frac, &mut rng)?;
            let (primary, other) = match cfg.condition {
                ForgeCondition::Short => (&x_short, &x_long),
                ForgeCondition::Long => (&x_long, &x_short),
            };
            let pair = match curate_from(generator, src, primary, cfg.n_candidates, &mut rng)? {
                Curation::Pair(w, l) => (w, l),
                Curation::AllCorrect => {
                    stats.discarded_all_correct += 1;
                    return Ok(None);
                }
                Curation::AllIncorrect => {
                    stats.discarded_all_incorrect += 1;
                    return Ok(None);
                }
            };
            if cfg.intersection
                && !matches!(curate_from(generator, src, other, cfg.n_candidates, &mut rng)?, Curation::Pair(..))
            {
                stats.discarded_intersection += 1;
                return Ok(None);
            }
            let sample = ForgedSample {
                question: src.question.clone(),
                answer: src.answer.clone(),
                x_short,
                x_long,
                y_w: pair.0,
                y_l: pair.1,
            };
            sample.check(src, h)?;
            Ok(Some(sample))
        })();
        match attempt {
            Ok(Some(s)) => {
                short_sum += token_count(&s.x_short);
                long_sum += token_count(&s.x_long);
                samples.push(s);
                source_indices.push(i);
            }
            Ok(None) => {}
            Err(e @ ForgeError::Invariant(_)) => return Err(e),
            Err(e) => stats.failures.push(ForgeFailure { source_index: i, error: e.to_string() }),
        }
    }
    stats.emitted = samples.len();
    let discarded = stats.discarded_all_correct + stats.discarded_all_incorrect + stats.discarded_intersection;
    let curated = stats.emitted + discarded;
    stats.discard_rate = if curated == 0 { 0.0 } else { discarded as f64 / curated as f64 };
    if stats.emitted > 0 {
        stats.mean_short_tokens = short_sum as f64 / stats.emitted as f64;
        stats.mean_long_tokens = long_sum as f64 / stats.emitted as f64;
        stats.compression = stats.mean_short_tokens / stats.mean_long_tokens;
    }
    Ok(ForgeOutput { samples, source_indices, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    fn src() -> SourceSample {
        SourceSample {
            question: "which city for p01 ?".into(),
            answer: "c03".into(),
            supporting_docs: vec!["p01 went to c03".into(), "c03 near c03 river".into()],
        }
    }

    fn pool(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i} filler filler filler")).collect()
    }

    #[test]
    fn sub_em_examples() {
        assert!(sub_em("so ... The answer is: 1960", "1960"));
        assert!(!sub_em("The answer is: No answer.", "1960"));
        assert!(sub_em("THE ANSWER IS:  the 1960.", "1960"));
        assert!(!sub_em("The answer is: 1960", ""));
        assert!(sub_em("c03", "c03"));
        // Only the span after the last marker counts.
        assert!(!sub_em("The answer is: c03. The answer is: none", "c03"));
    }

    #[test]
    fn exact_target_gives_supporting_docs_only() {
        let s = src();
        let target = token_count(&s.supporting_docs.join(" <sep> "));
        let ctx = synthesize_context(&s, &pool(50), target, 0.0, &mut seeded(1)).unwrap();
        assert_eq!(token_count(&ctx), target);
        let mut docs: Vec<&str> = split_docs(&ctx).collect();
        docs.sort();
        assert_eq!(docs, vec!["c03 near c03 river", "p01 went to c03"]);
    }

    #[test]
    fn long_target_within_tolerance_and_deterministic() {
        let s = src();
        let support = token_count(&s.supporting_docs.join(" <sep> "));
        let target = 8 * support;
        let a = synthesize_context(&s, &pool(100), target, 0.05, &mut seeded(2)).unwrap();
        let b = synthesize_context(&s, &pool(100), target, 0.05, &mut seeded(2)).unwrap();
        assert_eq!(a, b);
        let n = token_count(&a) as f64;
        assert!((n - target as f64).abs() <= 0.05 * target as f64);
        for d in &s.supporting_docs {
            assert!(contains_doc(&a, d));
        }
    }

    #[test]
    fn small_pool_errors() {
        let r = synthesize_context(&src(), &pool(2), 200, 0.05, &mut seeded(0));
        assert!(matches!(r, Err(ForgeError::InsufficientPool { .. })));
        let r = synthesize_context(&src(), &pool(2), 3, 0.0, &mut seeded(0));
        assert!(matches!(r, Err(ForgeError::SupportTooLong { .. })));
    }

    #[test]
    fn curation_rules() {
        let gold = "c03";
        let all_good = vec!["The answer is: c03".to_string(); 32];
        assert_eq!(curate_pair(&all_good, gold, &mut seeded(0)), None);
        let two = vec!["The answer is: none".to_string(), "The answer is: c03".to_string()];
        assert_eq!(
            curate_pair(&two, gold, &mut seeded(0)),
            Some(("The answer is: c03".into(), "The answer is: none".into()))
        );
        let many: Vec<String> = (0..10).map(|i| format!("The answer is: c0{i}")).collect();
        assert_eq!(curate_pair(&many, gold, &mut seeded(5)), curate_pair(&many, gold, &mut seeded(5)));
    }

    struct Stub {
        p_gold: f64,
    }

    impl CandidateGenerator for Stub {
        fn generate(&self, _q: &str, _c: &str, n: usize, rng: &mut LabRng) -> Result<Vec<String>, ForgeError> {
            Ok((0..n)
                .map(|_| if rng.gen::<f64>() < self.p_gold { "The answer is: c03".into() } else { "The answer is: none".into() })
                .collect())
        }
    }

    fn cfg() -> ForgeConfig {
        ForgeConfig {
            haystack: HaystackConfig { target_short_tokens: 20, target_long_tokens: 80, tolerance_frac: 0.1, seed: 3 },
            ..Default::default()
        }
    }

    #[test]
    fn always_gold_discards_everything() {
        let sources = vec![src(); 20];
        let out = forge_dataset(&sources, &pool(200), &Stub { p_gold: 1.0 }, &cfg()).unwrap();
        assert!(out.samples.is_empty());
        assert_eq!(out.stats.discarded_all_correct, 20);
        assert_eq!(out.stats.discard_rate, 1.0);
    }

    #[test]
    fn coin_flip_generator_rarely_discards() {
        let sources = vec![src(); 50];
        let out = forge_dataset(&sources, &pool(200), &Stub { p_gold: 0.5 }, &cfg()).unwrap();
        assert_eq!(out.stats.emitted, 50);
        assert_eq!(out.stats.discard_rate, 0.0);
        assert!((out.stats.compression - 0.25).abs() <= 0.25 * 0.1 * 2.0);
        let again = forge_dataset(&sources, &pool(200), &Stub { p_gold: 0.5 }, &cfg()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn generator_failures_are_recorded() {
        struct Failing;
        impl CandidateGenerator for Failing {
            fn generate(&self, _: &str, _: &str, _: usize, _: &mut LabRng) -> Result<Vec<String>, ForgeError> {
                Err(ForgeError::Generator("boom".into()))
            }
        }
        let out = forge_dataset(&[src(), src()], &pool(200), &Failing, &cfg()).unwrap();
        assert_eq!(out.stats.failures.len(), 2);
        assert!(out.samples.is_empty());
    }
}
