//! A tiny autoregressive scorer: mean-pooled context embedding, one `tanh`
//! layer conditioned on the previous token, and an output projection.
//!
//! ```text
//! m   = mean(E[t] for t in context)
//! c   = m / sqrt(mean(m²) + ε)
//! h_k = tanh(W c + E[y_{k-1}])          (y_{-1} = <bos>)
//! log π(y_k | x, y_<k) = log_softmax(Oᵀ h_k)[y_k]
//! ```
//!
//! Parameters are stored flat in the order `E (V×d)`, `W (d×d)`, `O (d×V)`,
//! row-major.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gpo::GpoError;
use crate::rng::seeded;

pub type TokenId = u32;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const SEP: &str = "<sep>";

/// Temperatures at or below this are decoded greedily.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 32;
pub const DEFAULT_TEMPERATURE: f64 = 0.85;

/// Stabilizer of the pooled-context RMS normalization.
const RMS_EPS: f64 = 1e-12;

const CHECKPOINT_MAGIC: &[u8; 8] = b"SOLOTOY\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("token `{0}` is not in the vocabulary")]
    OutOfVocab(String),
    #[error("token id {0} is out of range")]
    BadTokenId(TokenId),
    #[error("response must contain at least one token")]
    EmptyResponse,
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(&'static str),
    #[error("hidden width must be positive")]
    ZeroWidth,
    #[error("non-finite loss or gradient")]
    NonFiniteLoss,
    #[error("loss: {0}")]
    Loss(#[from] GpoError),
    #[error("gradient has {got} entries, expected {expected}")]
    GradShape { expected: usize, got: usize },
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(&'static str),
}

/// Ordered token list; ids 0, 1, 2 are `<bos>`, `<eos>`, `<sep>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from the non-special tokens.
    pub fn new<I, S>(words: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = vec![BOS.into(), EOS.into(), SEP.into()];
        tokens.extend(words.into_iter().map(Into::into));
        Self::from_tokens(tokens)
    }

    /// Builds a vocabulary from the full ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, PolicyError> {
        if tokens.len() < 8 {
            return Err(PolicyError::InvalidVocab("need at least 8 tokens"));
        }
        if tokens[0] != BOS || tokens[1] != EOS || tokens[2] != SEP {
            return Err(PolicyError::InvalidVocab("first tokens must be <bos>, <eos>, <sep>"));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(PolicyError::InvalidVocab("tokens must be non-empty and whitespace-free"));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(PolicyError::InvalidVocab("duplicate token"));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn bos(&self) -> TokenId {
        0
    }

    pub fn eos(&self) -> TokenId {
        1
    }

    pub fn sep(&self) -> TokenId {
        2
    }

    pub fn id(&self, token: &str) -> Result<TokenId, PolicyError> {
        self.index.get(token).copied().ok_or_else(|| PolicyError::OutOfVocab(token.into()))
    }

    pub fn token(&self, id: TokenId) -> Result<&str, PolicyError> {
        self.tokens.get(id as usize).map(String::as_str).ok_or(PolicyError::BadTokenId(id))
    }

    /// Whitespace tokenization.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, PolicyError> {
        text.split_whitespace().map(|t| self.id(t)).collect()
    }

    /// Joins tokens with single spaces, dropping `<bos>` and `<eos>`.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, PolicyError> {
        let mut out = String::new();
        for &id in ids {
            if id == self.bos() || id == self.eos() {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(self.token(id)?);
        }
        Ok(out)
    }

    /// Encodes a response and appends `<eos>` when missing.
    pub fn encode_response(&self, text: &str) -> Result<Vec<TokenId>, PolicyError> {
        let mut ids = self.encode(text)?;
        if ids.last() != Some(&self.eos()) {
            ids.push(self.eos());
        }
        Ok(ids)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub tokens: Vec<TokenId>,
    pub total_logprob: f64,
    pub per_token_logprobs: Vec<f64>,
}

/// Context-dependent part of the hidden pre-activation, `W c`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedContext {
    tokens: Vec<TokenId>,
    /// Normalized pooled embedding `c`.
    pooled: Vec<f64>,
    /// `sqrt(mean(m²) + ε)`.
    rms: f64,
    projected: Vec<f64>,
}

impl EncodedContext {
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    vocab: Vocab,
    d: usize,
    seed: u64,
    params: Vec<f64>,
}

impl ToyLm {
    /// Model with all parameters zero; every step predicts the uniform distribution.
    pub fn zeros(vocab: Vocab, d: usize) -> Result<Self, PolicyError> {
        if d == 0 {
            return Err(PolicyError::ZeroWidth);
        }
        let v = vocab.len();
        Ok(Self { vocab, d, seed: 0, params: vec![0.0; v * d + d * d + d * v] })
    }

    /// Xavier-uniform initialization scaled by 0.1.
    pub fn init(vocab: Vocab, d: usize, seed: u64) -> Result<Self, PolicyError> {
        let mut m = Self::zeros(vocab, d)?;
        m.seed = seed;
        let v = m.vocab.len();
        let mut rng = seeded(seed);
        let (e, w, o) = m.split_mut();
        for (block, fan_in, fan_out) in [(e, v, d), (w, d, d), (o, d, v)] {
            let a = 0.1 * libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for p in block.iter_mut() {
                *p = rng.gen_range(-a..=a);
            }
        }
        Ok(m)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn width(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn split(&self) -> (&[f64], &[f64], &[f64]) {
        let v = self.vocab.len();
        let (e, rest) = self.params.split_at(v * self.d);
        let (w, o) = rest.split_at(self.d * self.d);
        (e, w, o)
    }

    fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        let v = self.vocab.len();
        let (e, rest) = self.params.split_at_mut(v * self.d);
        let (w, o) = rest.split_at_mut(self.d * self.d);
        (e, w, o)
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<(), PolicyError> {
        match ids.iter().find(|&&t| t as usize >= self.vocab.len()) {
            Some(&t) => Err(PolicyError::BadTokenId(t)),
            None => Ok(()),
        }
    }

    pub fn encode_context(&self, context: &[TokenId]) -> Result<EncodedContext, PolicyError> {
        self.check_ids(context)?;
        let d = self.d;
        let (e, w, _) = self.split();
        let mut mean = vec![0.0; d];
        for &t in context {
            let row = &e[t as usize * d..(t as usize + 1) * d];
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        if !context.is_empty() {
            let n = context.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        let rms = libm::sqrt(mean.iter().map(|m| m * m).sum::<f64>() / d as f64 + RMS_EPS);
        let pooled: Vec<f64> = mean.iter().map(|m| m / rms).collect();
        let projected = (0..d).map(|i| dot(&w[i * d..(i + 1) * d], &pooled)).collect();
        Ok(EncodedContext { tokens: context.to_vec(), pooled, rms, projected })
    }

    /// Hidden state and log-softmax outputs for one step.
    fn step(&self, ctx: &EncodedContext, prev: TokenId) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let v = self.vocab.len();
        let (e, _, o) = self.split();
        let row = &e[prev as usize * d..(prev as usize + 1) * d];
        let h: Vec<f64> = ctx.projected.iter().zip(row).map(|(a, b)| libm::tanh(a + b)).collect();
        let mut logits = vec![0.0; v];
        for (i, hi) in h.iter().enumerate() {
            for (z, oij) in logits.iter_mut().zip(&o[i * v..(i + 1) * v]) {
                *z += hi * oij;
            }
        }
        log_softmax_in_place(&mut logits);
        (h, logits)
    }

    /// Next-token distribution after `prefix` (empty prefix means first step).
    pub fn next_token_logprobs(&self, ctx: &EncodedContext, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        self.check_ids(prefix)?;
        let prev = prefix.last().copied().unwrap_or(self.vocab.bos());
        Ok(self.step(ctx, prev).1)
    }

    pub fn logprob(&self, context: &[TokenId], response: &[TokenId]) -> Result<ScoredSequence, PolicyError> {
        let ctx = self.encode_context(context)?;
        self.logprob_encoded(&ctx, response)
    }

    pub fn logprob_encoded(&self, ctx: &EncodedContext, response: &[TokenId]) -> Result<ScoredSequence, PolicyError> {
        if response.is_empty() {
            return Err(PolicyError::EmptyResponse);
        }
        self.check_ids(response)?;
        let mut prev = self.vocab.bos();
        let mut per_token = Vec::with_capacity(response.len());
        for &y in response {
            let (_, lp) = self.step(ctx, prev);
            per_token.push(lp[y as usize]);
            prev = y;
        }
        Ok(ScoredSequence { tokens: response.to_vec(), total_logprob: per_token.iter().sum(), per_token_logprobs: per_token })
    }

    /// Ancestral samples terminated at `<eos>` (included) or `max_len`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        context: &[TokenId],
        n: usize,
        temperature: f64,
        max_len: usize,
        rng: &mut R,
    ) -> Result<Vec<ScoredSequence>, PolicyError> {
        let ctx = self.encode_context(context)?;
        let greedy = !(temperature > GREEDY_TEMPERATURE);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut tokens = Vec::new();
            let mut per_token = Vec::new();
            let mut prev = self.vocab.bos();
            while tokens.len() < max_len.max(1) {
                let (_, lp) = self.step(&ctx, prev);
                let y = if greedy { argmax(&lp) } else { draw_tempered(&lp, temperature, rng) };
                tokens.push(y as TokenId);
                per_token.push(lp[y]);
                prev = y as TokenId;
                if prev == self.vocab.eos() {
                    break;
                }
            }
            out.push(ScoredSequence { total_logprob: per_token.iter().sum(), tokens, per_token_logprobs: per_token });
        }
        Ok(out)
    }

    /// Greedy decode.
    pub fn greedy(&self, context: &[TokenId], max_len: usize) -> Result<ScoredSequence, PolicyError> {
        // The rng is never consulted on the greedy path.
        let mut rng = seeded(0);
        Ok(self.sample(context, 1, 0.0, max_len, &mut rng)?.remove(0))
    }

    /// Adds `weight · ∂ log π(response | ctx) / ∂θ` to `grad`.
    pub fn accumulate_logprob_grad(
        &self,
        ctx: &EncodedContext,
        response: &[TokenId],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<(), PolicyError> {
        if grad.len() != self.params.len() {
            return Err(PolicyError::GradShape { expected: self.params.len(), got: grad.len() });
        }
        if response.is_empty() {
            return Err(PolicyError::EmptyResponse);
        }
        self.check_ids(response)?;
        if weight == 0.0 {
            return Ok(());
        }
        let d = self.d;
        let v = self.vocab.len();
        let (_, w, o) = self.split();
        let (ge, rest) = grad.split_at_mut(v * d);
        let (gw, go) = rest.split_at_mut(d * d);
        let mut du = vec![0.0; d];
        let mut dz = vec![0.0; v];
        let mut prev = self.vocab.bos();
        for &y in response {
            let (h, lp) = self.step(ctx, prev);
            for (j, z) in dz.iter_mut().enumerate() {
                *z = weight * ((j == y as usize) as u8 as f64 - libm::exp(lp[j]));
            }
            for i in 0..d {
                let orow = &o[i * v..(i + 1) * v];
                let gorow = &mut go[i * v..(i + 1) * v];
                let mut dh = 0.0;
                for j in 0..v {
                    gorow[j] += h[i] * dz[j];
                    dh += orow[j] * dz[j];
                }
                let da = dh * (1.0 - h[i] * h[i]);
                ge[prev as usize * d + i] += da;
                du[i] += da;
            }
            prev = y;
        }
        // u = W c, c = m / rms(m), m = mean(E[context]).
        let mut dc = vec![0.0; d];
        for i in 0..d {
            for m in 0..d {
                gw[i * d + m] += du[i] * ctx.pooled[m];
                dc[m] += w[i * d + m] * du[i];
            }
        }
        let proj = dot(&dc, &ctx.pooled) / d as f64;
        let dm: Vec<f64> = dc.iter().zip(&ctx.pooled).map(|(g, c)| (g - c * proj) / ctx.rms).collect();
        if !ctx.tokens.is_empty() {
            let n = ctx.tokens.len() as f64;
            for &t in &ctx.tokens {
                let row = &mut ge[t as usize * d..(t as usize + 1) * d];
                for (g, c) in row.iter_mut().zip(&dm) {
                    *g += c / n;
                }
            }
        }
        Ok(())
    }

    /// Gradient of a loss over sequence log-probabilities.
    ///
    /// `loss` receives the log-probabilities of `queries` in order and returns
    /// the loss value together with its partial derivatives.
    pub fn param_grad<F>(&self, queries: &[(&EncodedContext, &[TokenId])], loss: F) -> Result<(f64, Vec<f64>), PolicyError>
    where
        F: FnOnce(&[f64]) -> Result<(f64, Vec<f64>), GpoError>,
    {
        let lps = queries
            .iter()
            .map(|(c, r)| self.logprob_encoded(c, r).map(|s| s.total_logprob))
            .collect::<Result<Vec<_>, _>>()?;
        let (value, dl) = loss(&lps)?;
        if dl.len() != queries.len() {
            return Err(PolicyError::GradShape { expected: queries.len(), got: dl.len() });
        }
        if !value.is_finite() || dl.iter().any(|g| !g.is_finite()) {
            return Err(PolicyError::NonFiniteLoss);
        }
        let mut grad = vec![0.0; self.params.len()];
        for ((c, r), g) in queries.iter().zip(&dl) {
            self.accumulate_logprob_grad(c, r, *g, &mut grad)?;
        }
        Ok((value, grad))
    }

    /// Deep, immutable copy used as the reference policy.
    pub fn freeze(&self) -> FrozenLm {
        FrozenLm(self.clone())
    }

    /// Binary checkpoint: magic, version, `V`, `d`, seed, the tokens as
    /// length-prefixed UTF-8, then the parameters as little-endian `f64` in
    /// the order `E`, `W`, `O`. Integers are little-endian `u32` except the
    /// `u64` seed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.params.len() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for t in self.vocab.tokens() {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            out.extend_from_slice(t.as_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        let mut r = Reader(bytes);
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(PolicyError::Checkpoint("bad magic"));
        }
        if r.u32()? != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint("unsupported version"));
        }
        let v = r.u32()? as usize;
        let d = r.u32()? as usize;
        let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let mut tokens = Vec::with_capacity(v);
        for _ in 0..v {
            let len = r.u32()? as usize;
            let s = core::str::from_utf8(r.take(len)?).map_err(|_| PolicyError::Checkpoint("token is not UTF-8"))?;
            tokens.push(s.to_string());
        }
        let vocab = Vocab::from_tokens(tokens)?;
        let mut m = Self::zeros(vocab, d)?;
        m.seed = seed;
        for p in m.params.iter_mut() {
            *p = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
        if !r.0.is_empty() {
            return Err(PolicyError::Checkpoint("trailing bytes"));
        }
        if m.params.iter().any(|p| !p.is_finite()) {
            return Err(PolicyError::Checkpoint("non-finite parameter"));
        }
        Ok(m)
    }
}

/// Frozen snapshot; exposes scoring only.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLm(ToyLm);

impl FrozenLm {
    pub fn model(&self) -> &ToyLm {
        &self.0
    }

    pub fn logprob(&self, context: &[TokenId], response: &[TokenId]) -> Result<ScoredSequence, PolicyError> {
        self.0.logprob(context, response)
    }

    pub fn logprob_encoded(&self, ctx: &EncodedContext, response: &[TokenId]) -> Result<ScoredSequence, PolicyError> {
        self.0.logprob_encoded(ctx, response)
    }

    pub fn encode_context(&self, context: &[TokenId]) -> Result<EncodedContext, PolicyError> {
        self.0.encode_context(context)
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PolicyError> {
        if self.0.len() < n {
            return Err(PolicyError::Checkpoint("truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, PolicyError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(z.iter().map(|v| libm::exp(v - max)).sum::<f64>());
    z.iter_mut().for_each(|v| *v -= lse);
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn draw_tempered<R: Rng + ?Sized>(logprobs: &[f64], temperature: f64, rng: &mut R) -> usize {
    let max = logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logprobs.iter().map(|lp| libm::exp((lp - max) / temperature)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave a sliver past the last bucket.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn vocab(n: usize) -> Vocab {
        Vocab::new((0..n - 3).map(|i| alloc::format!("w{i}"))).unwrap()
    }

    #[test]
    fn vocab_rules() {
        assert!(Vocab::new(["a", "b"]).is_err());
        assert!(Vocab::new(["a", "b", "c", "d", "a"]).is_err());
        let v = vocab(10);
        assert_eq!(v.len(), 10);
        assert_eq!(v.encode("w0 w3 <sep>").unwrap(), vec![3, 6, 2]);
        assert_eq!(v.encode("w0 zz"), Err(PolicyError::OutOfVocab("zz".into())));
        assert_eq!(v.decode(&[0, 3, 6, 1]).unwrap(), "w0 w3");
        assert_eq!(v.encode_response("w1").unwrap(), vec![4, 1]);
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ToyLm::zeros(vocab(12), 4).unwrap();
        let s = m.logprob(&[3, 4, 5], &[6, 7, 1]).unwrap();
        let expected = -3.0 * libm::log(12.0);
        assert!((s.total_logprob - expected).abs() < 1e-12);
        assert!(s.per_token_logprobs.iter().all(|lp| (lp + libm::log(12.0)).abs() < 1e-12));
    }

    #[test]
    fn exhaustive_normalization() {
        let m = ToyLm::init(vocab(10), 6, 3).unwrap();
        // Larger weights so the test is not trivially near uniform.
        let mut m = m;
        m.params_mut().iter_mut().for_each(|p| *p *= 30.0);
        let ctx = [4, 5, 5, 9];
        let mut total = 0.0;
        for a in 0..10 {
            for b in 0..10 {
                for c in 0..10 {
                    let s = m.logprob(&ctx, &[a, b, c]).unwrap();
                    assert!((s.total_logprob - s.per_token_logprobs.iter().sum::<f64>()).abs() < 1e-12);
                    assert!(s.per_token_logprobs.iter().all(|lp| *lp <= 0.0));
                    total += libm::exp(s.total_logprob);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn errors() {
        let m = ToyLm::zeros(vocab(10), 2).unwrap();
        assert_eq!(m.logprob(&[3], &[]), Err(PolicyError::EmptyResponse));
        assert_eq!(m.logprob(&[3], &[10]), Err(PolicyError::BadTokenId(10)));
        assert_eq!(m.logprob(&[99], &[3]), Err(PolicyError::BadTokenId(99)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = ToyLm::init(vocab(10), 8, 5).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p *= 20.0);
        let ctx_a = [3u32, 4, 4, 8, 9];
        let ctx_b = [5u32, 6];
        let ra = [7u32, 3, 1];
        let rb = [9u32, 1];
        // L = lp_a² / 10 − 2 lp_b, a smooth loss over two sequences.
        let loss = |lps: &[f64]| -> Result<(f64, Vec<f64>), GpoError> {
            Ok((lps[0] * lps[0] / 10.0 - 2.0 * lps[1], vec![lps[0] / 5.0, -2.0]))
        };
        let value_at = |m: &ToyLm| {
            let a = m.logprob(&ctx_a, &ra).unwrap().total_logprob;
            let b = m.logprob(&ctx_b, &rb).unwrap().total_logprob;
            a * a / 10.0 - 2.0 * b
        };
        let ea = m.encode_context(&ctx_a).unwrap();
        let eb = m.encode_context(&ctx_b).unwrap();
        let (value, grad) = m.param_grad(&[(&ea, &ra), (&eb, &rb)], loss).unwrap();
        assert!((value - value_at(&m)).abs() < 1e-12);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..m.n_params() {
            let mut plus = m.clone();
            plus.params_mut()[k] += h;
            let mut minus = m.clone();
            minus.params_mut()[k] -= h;
            let fd = (value_at(&plus) - value_at(&minus)) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let m = ToyLm::init(vocab(10), 4, 1).unwrap();
        let c = m.encode_context(&[3]).unwrap();
        let r = m.param_grad(&[(&c, &[4u32][..])], |_| Ok((f64::NAN, vec![1.0])));
        assert_eq!(r, Err(PolicyError::NonFiniteLoss));
    }

    #[test]
    fn greedy_samples_are_identical_and_seeded_sampling_reproduces() {
        let mut m = ToyLm::init(vocab(16), 8, 2).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p *= 20.0);
        let mut rng = stream(1, 0);
        let g = m.sample(&[4, 5], 8, 1e-9, 6, &mut rng).unwrap();
        assert!(g.windows(2).all(|w| w[0] == w[1]));
        let a = m.sample(&[4, 5], DEFAULT_SAMPLES, DEFAULT_TEMPERATURE, 6, &mut stream(9, 3)).unwrap();
        let b = m.sample(&[4, 5], DEFAULT_SAMPLES, DEFAULT_TEMPERATURE, 6, &mut stream(9, 3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.tokens.len() <= 6));
        assert!(a.iter().all(|s| s.tokens.len() == 6 || *s.tokens.last().unwrap() == 1));
    }

    #[test]
    fn sampling_frequencies_match_softmax() {
        let mut m = ToyLm::init(vocab(8), 4, 4).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p *= 40.0);
        let ctx = m.encode_context(&[3, 6]).unwrap();
        let probs: Vec<f64> = m.next_token_logprobs(&ctx, &[]).unwrap().iter().map(|l| libm::exp(*l)).collect();
        let n = 100_000;
        let mut counts = [0usize; 8];
        let mut rng = stream(2, 0);
        for s in m.sample(&[3, 6], n, 1.0, 1, &mut rng).unwrap() {
            counts[s.tokens[0] as usize] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let sigma = libm::sqrt(n as f64 * p * (1.0 - p));
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma + 1.0, "{c} vs {p}");
        }
    }

    #[test]
    fn freeze_is_a_deep_copy() {
        let mut m = ToyLm::init(vocab(10), 4, 7).unwrap();
        let r = m.freeze();
        let before = r.logprob(&[3, 4], &[5, 1]).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p += 0.5);
        assert_eq!(r.logprob(&[3, 4], &[5, 1]).unwrap(), before);
        assert_ne!(m.logprob(&[3, 4], &[5, 1]).unwrap(), before);
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let m = ToyLm::init(vocab(11), 5, 42).unwrap();
        let bytes = m.to_bytes();
        let back = ToyLm::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, m);
        assert!(ToyLm::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ToyLm::from_bytes(&bad).is_err());
    }
}
