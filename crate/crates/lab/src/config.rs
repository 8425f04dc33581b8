//! Flat `key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment. Unknown keys and unparsable
//! values are reported with the file path and line number.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use solopo_core::forge::ForgeCondition;
use solopo_core::gpo::{ConvexLink, Method, MethodConfig, RaMode};
use solopo_core::train::ContextKind;

use crate::pipeline::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Invalid { path: PathBuf, line: usize, message: String },
}

/// Parsed assignments, consumed key by key.
#[derive(Debug, Clone)]
pub struct KvFile {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl KvFile {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let invalid = |message: String| ConfigError::Invalid { path: path.into(), line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| invalid(format!("expected `key = value`, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(invalid("empty key".into()));
            }
            if let Some((_, first)) = entries.insert(k.to_string(), (v.to_string(), i + 1)) {
                return Err(invalid(format!("duplicate key {k:?} (first set on line {first})")));
            }
        }
        Ok(Self { path: path.into(), entries })
    }

    pub fn empty() -> Self {
        Self { path: PathBuf::from("<defaults>"), entries: BTreeMap::new() }
    }

    fn invalid(&self, line: usize, message: String) -> ConfigError {
        ConfigError::Invalid { path: self.path.clone(), line, message }
    }

    /// Removes `key` and converts it with `f`.
    pub fn take_with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => f(&v).map(Some).map_err(|e| self.invalid(line, format!("{key}: {e}"))),
        }
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        self.take_with(key, |v| v.parse::<T>().map_err(|e| format!("{e} ({v:?})")))
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: Display,
    {
        self.take_with(key, |v| {
            v.split(',').map(|x| x.trim().parse::<T>().map_err(|e| format!("{e} ({x:?})"))).collect()
        })
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some((k, (_, line))) => Err(self.invalid(*line, format!("unknown key {k:?}"))),
        }
    }
}

fn named<T>(kind: &str, parse: impl Fn(&str) -> Option<T>) -> impl Fn(&str) -> Result<T, String> {
    let kind = kind.to_string();
    move |v| parse(v).ok_or_else(|| format!("unknown {kind} {v:?}"))
}

/// Bound-suite sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsSettings {
    pub lemma1_instances: u64,
    pub scenarios: u64,
    pub necessity_attempts: u64,
}

impl Default for BoundsSettings {
    fn default() -> Self {
        Self { lemma1_instances: 1_000_000, scenarios: 10_000, necessity_attempts: 100_000 }
    }
}

/// Everything a subcommand can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub seed: u64,
    /// Seeds of `train --compare`.
    pub seeds: Vec<u64>,
    pub pipeline: PipelineConfig,
    pub bounds: BoundsSettings,
    /// Random points per method and alignment mode for `grad-check`.
    pub grad_points: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            pipeline: PipelineConfig::default(),
            bounds: BoundsSettings::default(),
            grad_points: 1000,
        }
    }
}

impl RunSettings {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::from_kv(KvFile::read(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn from_kv(mut kv: KvFile) -> Result<Self, ConfigError> {
        let mut s = Self::default();
        let p = &mut s.pipeline;
        if let Some(v) = kv.take("seed")? {
            s.seed = v;
        }
        if let Some(v) = kv.take_list("seeds")? {
            s.seeds = v;
        }

        // A new method resets the loss hyperparameters to that method's defaults.
        if let Some(m) = kv.take_with("method", named("method", Method::from_name))? {
            p.train.method = MethodConfig::new(m);
        }
        let m = &mut p.train.method;
        if let Some(v) = kv.take_with("link", named("link", ConvexLink::from_name))? {
            m.link = v;
        }
        if let Some(v) = kv.take_with("ra_mode", named("ra_mode", RaMode::from_name))? {
            m.ra_mode = v;
        }
        for (key, field) in [("beta", &mut m.beta), ("gamma", &mut m.gamma), ("eta", &mut m.eta), ("alpha", &mut m.alpha)] {
            if let Some(v) = kv.take(key)? {
                *field = v;
            }
        }
        if let Some(v) = kv.take("include_nll")? {
            m.include_nll = v;
        }
        if let Some(v) = kv.take_list("alphas")? {
            p.alphas = v;
        }

        let t = &mut p.train;
        if let Some(v) = kv.take("lr_max")? {
            t.lr_max = v;
        }
        if let Some(v) = kv.take("warmup_ratio")? {
            t.warmup_ratio = v;
        }
        if let Some(v) = kv.take("batch_size")? {
            t.batch_size = v;
        }
        if let Some(v) = kv.take("epochs")? {
            t.epochs = v;
        }
        if let Some(v) = kv.take("eval_every")? {
            t.eval_every = v;
        }
        if let Some(v) = kv.take_with("po_context", named("context", context_kind))? {
            t.po_context = v;
        }
        if let Some(v) = kv.take("weight_decay")? {
            t.adam.weight_decay = v;
        }

        if let Some(v) = kv.take("sft_lr")? {
            p.sft.lr_max = v;
        }
        if let Some(v) = kv.take("sft_epochs")? {
            p.sft.epochs = v;
        }
        if let Some(v) = kv.take("width")? {
            p.width = v;
        }
        if let Some(v) = kv.take("temperature")? {
            p.temperature = v;
        }
        for (key, field) in [
            ("n_train", &mut p.n_train),
            ("n_val", &mut p.n_val),
            ("n_test", &mut p.n_test),
            ("n_sources", &mut p.world.n_sources),
            ("n_distractors", &mut p.world.n_distractors),
            ("short_tokens", &mut p.forge.haystack.target_short_tokens),
            ("long_tokens", &mut p.forge.haystack.target_long_tokens),
            ("n_candidates", &mut p.forge.n_candidates),
        ] {
            if let Some(v) = kv.take(key)? {
                *field = v;
            }
        }
        if let Some(v) = kv.take("tolerance")? {
            p.forge.haystack.tolerance_frac = v;
        }
        if let Some(v) = kv.take_with("condition", named("context", forge_condition))? {
            p.forge.condition = v;
        }
        if let Some(v) = kv.take("intersection")? {
            p.forge.intersection = v;
        }

        let b = &mut s.bounds;
        for (key, field) in [
            ("lemma1_instances", &mut b.lemma1_instances),
            ("scenarios", &mut b.scenarios),
            ("necessity_attempts", &mut b.necessity_attempts),
            ("grad_points", &mut s.grad_points),
        ] {
            if let Some(v) = kv.take(key)? {
                *field = v;
            }
        }
        kv.finish()?;
        Ok(s)
    }
}

fn context_kind(v: &str) -> Option<ContextKind> {
    match v {
        "short" => Some(ContextKind::Short),
        "long" => Some(ContextKind::Long),
        _ => None,
    }
}

fn forge_condition(v: &str) -> Option<ForgeCondition> {
    match v {
        "short" => Some(ForgeCondition::Short),
        "long" => Some(ForgeCondition::Long),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunSettings, ConfigError> {
        RunSettings::from_kv(KvFile::parse(Path::new("run.cfg"), text)?)
    }

    #[test]
    fn overrides_apply() {
        let s = parse("# comment\nmethod = dpo\nbeta = 0.5  # inline\nalphas = 1, 3\nseeds=7,8\nwidth = 16\n").unwrap();
        assert_eq!(s.pipeline.train.method.method, Method::Dpo);
        assert_eq!(s.pipeline.train.method.beta, 0.5);
        assert_eq!(s.pipeline.alphas, vec![1.0, 3.0]);
        assert_eq!(s.seeds, vec![7, 8]);
        assert_eq!(s.pipeline.width, 16);
    }

    #[test]
    fn errors_carry_path_and_line() {
        let e = parse("seed = 1\n\nbeta = fast\n").unwrap_err().to_string();
        assert!(e.starts_with("run.cfg:3:"), "{e}");
        let e = parse("seed = 1\nbogus = 2\n").unwrap_err().to_string();
        assert!(e.starts_with("run.cfg:2:") && e.contains("bogus"), "{e}");
        let e = parse("seed 1\n").unwrap_err().to_string();
        assert!(e.starts_with("run.cfg:1:"), "{e}");
        let e = parse("seed = 1\nseed = 2\n").unwrap_err().to_string();
        assert!(e.starts_with("run.cfg:2:"), "{e}");
    }
}
