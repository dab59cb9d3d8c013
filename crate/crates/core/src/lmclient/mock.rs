//! Deterministic offline backend.
//!
//! The mock understands the mix-prompt grammar and nothing else. Given a mix
//! prompt it writes a new item by splicing word spans from the anchors of the
//! majority label together with phrases from that label's pool, then emits the
//! majority label with probability `1 - noise` (otherwise a uniformly chosen other
//! label). Given a label query it scores the generated text by which label's
//! vocabulary it uses, putting `ln(1 - noise)` on the dominant label and
//! `ln(noise / (n - 1))` on the others, floored at [`LOGPROB_FLOOR`].
//!
//! All randomness derives from the configured seed, the request's `seed` field and
//! the prompt bytes, so results do not depend on call order.

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    BackendError, Completion, CompletionBackend, CompletionRequest, FinishReason, TokenLogprob,
};
use crate::corpus::capitalize_first;
use crate::promptgen::{parse_header, parse_label_query, parse_mix_prompt, ParsedMixPrompt};
use crate::seeds;

pub const LOGPROB_FLOOR: f64 = -1000.0;
const FILLER_LOGPROB: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub model: String,
    pub seed: u64,
    /// Label noise rate: probability that a generated item carries a label other
    /// than the majority anchor label.
    pub noise: f64,
    /// Phrase pools keyed by verbalized label token (case-insensitive).
    pub pools: IndexMap<String, Vec<String>>,
    /// Exact prompt -> continuation overrides.
    pub canned: BTreeMap<String, String>,
    /// Fixed next-token distribution returned for every label query.
    pub next_token: Option<BTreeMap<String, f64>>,
    /// Whether echo scoring requests are served.
    pub echo: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            model: "mock".into(),
            seed: 0,
            noise: 0.0,
            pools: IndexMap::new(),
            canned: BTreeMap::new(),
            next_token: None,
            echo: true,
        }
    }
}

impl MockConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(format!("noise must be in [0, 1], got {}", self.noise));
        }
        Ok(())
    }
}

pub struct MockBackend {
    config: MockConfig,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Result<Self, String> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn rng_for(&self, request: &CompletionRequest) -> ChaCha8Rng {
        let prompt_hash = seeds::hash_str(0, &request.prompt);
        ChaCha8Rng::seed_from_u64(seeds::derive(
            self.config.seed,
            &[request.seed.unwrap_or(0), prompt_hash],
        ))
    }

    fn pool_for(&self, token: &str) -> Option<&Vec<String>> {
        let lower = token.to_lowercase();
        self.config
            .pools
            .iter()
            .find(|(k, _)| k.to_lowercase() == lower)
            .map(|(_, v)| v)
    }

    fn logprob(p: f64) -> f64 {
        if p > 0.0 {
            p.ln().max(LOGPROB_FLOOR)
        } else {
            LOGPROB_FLOOR
        }
    }

    /// Log-likelihood of each header token as the label of `generated`.
    fn label_logprobs(&self, parsed: &ParsedMixPrompt, generated: &str) -> Vec<f64> {
        let n = parsed.header.tokens.len();
        let vocab = |per_label: Vec<Vec<String>>| -> Vec<HashSet<String>> {
            let sets: Vec<HashSet<String>> = per_label
                .iter()
                .map(|texts| texts.iter().flat_map(|t| words(t)).collect())
                .collect();
            (0..n)
                .map(|c| {
                    sets[c]
                        .iter()
                        .filter(|w| (0..n).all(|o| o == c || !sets[o].contains(*w)))
                        .cloned()
                        .collect()
                })
                .collect()
        };
        let pools = vocab(
            parsed
                .header
                .tokens
                .iter()
                .map(|t| self.pool_for(t).cloned().unwrap_or_default())
                .collect(),
        );
        let anchors = vocab(
            (0..n)
                .map(|c| {
                    parsed
                        .examples
                        .iter()
                        .filter(|(_, l)| *l == c)
                        .map(|(t, _)| t.clone())
                        .collect()
                })
                .collect(),
        );
        let generated_words = words(generated);
        let score: Vec<usize> = (0..n)
            .map(|c| {
                generated_words
                    .iter()
                    .filter(|w| pools[c].contains(*w) || anchors[c].contains(*w))
                    .count()
            })
            .collect();
        let best = score.iter().copied().max().unwrap_or(0);
        let tied: Vec<usize> = (0..n).filter(|&c| score[c] == best).collect();
        let dominant = if tied.len() == 1 {
            tied[0]
        } else {
            let counts = anchor_counts(parsed, n);
            *tied
                .iter()
                .max_by_key(|&&c| (counts[c], std::cmp::Reverse(c)))
                .unwrap()
        };
        let noise = self.config.noise;
        (0..n)
            .map(|c| {
                if n == 1 {
                    0.0
                } else if c == dominant {
                    Self::logprob(1.0 - noise)
                } else {
                    Self::logprob(noise / (n - 1) as f64)
                }
            })
            .collect()
    }

    fn generate(&self, parsed: &ParsedMixPrompt, request: &CompletionRequest) -> Completion {
        let mut rng = self.rng_for(request);
        let n = parsed.header.tokens.len();
        let counts = anchor_counts(parsed, n);
        let top = counts.iter().copied().max().unwrap_or(0);
        let majority: Vec<usize> = (0..n).filter(|&c| counts[c] == top).collect();
        let label = *majority.choose(&mut rng).expect("at least one anchor");

        let mut pieces: Vec<String> = Vec::new();
        for (text, _) in parsed.examples.iter().filter(|(_, l)| *l == label) {
            let w: Vec<&str> = text.split_whitespace().collect();
            let len = rng.gen_range(2..=4).min(w.len());
            let start = rng.gen_range(0..=w.len() - len);
            pieces.push(w[start..start + len].join(" "));
        }
        if let Some(pool) = self
            .pool_for(&parsed.header.tokens[label])
            .filter(|p| !p.is_empty())
        {
            for _ in 0..rng.gen_range(2..=3) {
                pieces.push(pool.choose(&mut rng).expect("non-empty pool").clone());
            }
        }
        pieces.shuffle(&mut rng);
        let text = pieces.join(" ");

        let emitted = if n > 1 && rng.gen::<f64>() < self.config.noise {
            let others: Vec<usize> = (0..n).filter(|&c| c != label).collect();
            *others.choose(&mut rng).unwrap()
        } else {
            label
        };
        let prefix = capitalize_first(&parsed.header.text_type);
        let raw = format!(
            " {text} ({}: {})\n{prefix}: ",
            capitalize_first(&parsed.header.label_type),
            capitalize_first(&parsed.header.tokens[emitted])
        );
        self.respond(&raw, request)
    }

    fn label_token(
        &self,
        parsed: &ParsedMixPrompt,
        generated: &str,
        request: &CompletionRequest,
    ) -> Completion {
        let alternatives: BTreeMap<String, f64> = match &self.config.next_token {
            Some(fixed) => fixed.clone(),
            None => parsed
                .header
                .tokens
                .iter()
                .map(|t| capitalize_first(t))
                .zip(self.label_logprobs(parsed, generated))
                .filter(|(t, _)| mock_tokenize(t).len() == 1)
                .collect(),
        };
        let mut ranked: Vec<(String, f64)> = alternatives.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let Some((token, logprob)) = ranked.first().cloned() else {
            return self.respond("", request);
        };
        let top_alternatives = ranked.into_iter().take(request.logprobs).collect();
        Completion {
            text: token.clone(),
            tokens: vec![TokenLogprob {
                token,
                logprob,
                top_alternatives,
            }],
            finish_reason: FinishReason::Length,
        }
    }

    fn echo(&self, request: &CompletionRequest) -> Completion {
        let tokens = mock_tokenize(&request.prompt);
        let mut logprobs = vec![FILLER_LOGPROB; tokens.len()];
        if let Some(lp) = self.echo_candidate_logprob(&request.prompt) {
            if let Some(last) = logprobs.last_mut() {
                *last = lp;
            }
        }
        Completion {
            text: request.prompt.clone(),
            tokens: tokens
                .into_iter()
                .zip(logprobs)
                .map(|(token, logprob)| TokenLogprob {
                    token,
                    logprob,
                    top_alternatives: BTreeMap::new(),
                })
                .collect(),
            finish_reason: FinishReason::Length,
        }
    }

    /// For `<label query><candidate>` with a single-token candidate, its score.
    fn echo_candidate_logprob(&self, prompt: &str) -> Option<f64> {
        let header = parse_header(prompt.split('\n').next()?).ok()?;
        let open = format!("({}: ", capitalize_first(&header.label_type));
        let at = prompt.rfind(&open)? + open.len();
        let (context, candidate) = prompt.split_at(at);
        if mock_tokenize(candidate).len() != 1 {
            return None;
        }
        let (parsed, generated) = parse_label_query(context).ok()?;
        if let Some(fixed) = &self.config.next_token {
            return Some(fixed.get(candidate).copied().unwrap_or(LOGPROB_FLOOR));
        }
        let lps = self.label_logprobs(&parsed, &generated);
        Some(
            parsed
                .header
                .token_index(candidate)
                .map_or(LOGPROB_FLOOR, |i| lps[i]),
        )
    }

    /// Applies stop sequences and the token budget to a raw continuation.
    fn respond(&self, raw: &str, request: &CompletionRequest) -> Completion {
        let mut text = raw.to_string();
        let mut finish = FinishReason::Stop;
        if let Some(cut) = request
            .stop
            .iter()
            .filter(|s| !s.is_empty())
            .filter_map(|s| text.find(s.as_str()))
            .min()
        {
            text.truncate(cut);
        }
        let mut tokens = mock_tokenize(&text);
        if tokens.len() > request.max_tokens {
            tokens.truncate(request.max_tokens);
            text = tokens.concat();
            finish = FinishReason::Length;
        }
        let with_alts = request.logprobs > 0;
        Completion {
            text,
            tokens: tokens
                .into_iter()
                .map(|token| TokenLogprob {
                    top_alternatives: if with_alts {
                        BTreeMap::from([(token.clone(), FILLER_LOGPROB)])
                    } else {
                        BTreeMap::new()
                    },
                    token,
                    logprob: FILLER_LOGPROB,
                })
                .collect(),
            finish_reason: finish,
        }
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        if request.echo {
            if !self.config.echo {
                return Err(BackendError::InvalidRequest {
                    status: 400,
                    message: "echo is not supported".into(),
                });
            }
            return Ok(self.echo(request));
        }
        if let Some(canned) = self.config.canned.get(&request.prompt) {
            return Ok(self.respond(canned, request));
        }
        if let Ok((parsed, generated)) = parse_label_query(&request.prompt) {
            return Ok(self.label_token(&parsed, &generated, request));
        }
        match parse_mix_prompt(&request.prompt) {
            Ok(parsed) => Ok(self.generate(&parsed, request)),
            Err(e) => Err(BackendError::Mock(format!(
                "prompt does not parse as a mix prompt ({e})"
            ))),
        }
    }

    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn supports_echo(&self) -> bool {
        self.config.echo
    }
}

fn anchor_counts(parsed: &ParsedMixPrompt, n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for (_, l) in &parsed.examples {
        counts[*l] += 1;
    }
    counts
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// The mock's tokenizer: an optional single leading space plus an alphanumeric
/// run or one other character. Remaining whitespace characters stand alone.
pub fn mock_tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        if chars[i] == ' ' && i + 1 < chars.len() && !chars[i + 1].is_whitespace() {
            i += 1;
        }
        if chars[i].is_alphanumeric() {
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
        } else {
            i += 1;
        }
        out.push(chars[start..i].iter().collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{resolve_task_spec, LabeledExample, SpecConfig, TaskSpecification};
    use crate::lmclient::{GenerationParams, LmClient, RetryPolicy, ScoreError};
    use crate::promptgen::{build_label_query, build_mix_prompt, PromptExamples};
    use std::sync::Arc;

    fn sst2() -> TaskSpecification {
        resolve_task_spec(
            &SpecConfig::Named("sst2".into()),
            &["pos".to_string(), "neg".to_string()],
        )
        .unwrap()
    }

    fn mix(spec: &TaskSpecification, items: &[(&str, usize)]) -> String {
        let ex = PromptExamples {
            examples: items
                .iter()
                .map(|(t, l)| LabeledExample::new(*t, *l))
                .collect(),
            source_indices: (0..items.len()).collect(),
        };
        build_mix_prompt(&ex, spec).text
    }

    fn gen_params(seed: u64) -> GenerationParams {
        GenerationParams {
            stop: vec!["\nMovie review:".into(), "\n\n".into()],
            seed: Some(seed),
            ..GenerationParams::default()
        }
    }

    fn client(config: MockConfig) -> LmClient {
        LmClient::new(
            Arc::new(MockBackend::new(config).unwrap()),
            RetryPolicy::none(),
        )
    }

    #[test]
    fn tokenizer() {
        assert_eq!(
            mock_tokenize("c: grammatical-acceptability"),
            ["c", ":", " grammatical", "-", "acceptability"]
        );
        assert_eq!(mock_tokenize("a  b\n"), ["a", " ", " b", "\n"]);
        assert_eq!(mock_tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn canned_response_is_verbatim() {
        let mut cfg = MockConfig::default();
        cfg.canned.insert("hello".into(), " world".into());
        let c = client(cfg)
            .complete("hello", &GenerationParams::default())
            .unwrap();
        assert_eq!(c.text, " world");
    }

    #[test]
    fn max_tokens_one_gives_one_token() {
        let c = client(MockConfig::default())
            .complete(
                &mix(&sst2(), &[("a fine film", 0)]),
                &GenerationParams {
                    max_tokens: 1,
                    ..gen_params(1)
                },
            )
            .unwrap();
        assert!(c.tokens.len() <= 1);
        assert_eq!(c.finish_reason, FinishReason::Length);
    }

    #[test]
    fn fixed_next_token_distribution() {
        let cfg = MockConfig {
            next_token: Some(BTreeMap::from([
                ("positive".into(), -0.3),
                ("negative".into(), -1.5),
            ])),
            ..MockConfig::default()
        };
        let spec = sst2();
        let m = mix(&spec, &[("a fine film", 0)]);
        let q = format!("{m} fine (Sentiment: ");
        let c = client(cfg.clone());
        let got = c
            .score_label_tokens(&q, &["positive".into(), "negative".into()])
            .unwrap();
        assert_eq!(
            got,
            BTreeMap::from([("positive".into(), -0.3), ("negative".into(), -1.5)])
        );
        let got = c.score_label_tokens(&q, &["positive".into()]).unwrap();
        assert_eq!(got, BTreeMap::from([("positive".into(), -0.3)]));
    }

    #[test]
    fn noise_free_generation_is_majority_and_one_hot() {
        let spec = sst2();
        let c = client(MockConfig::default());
        let m = mix(
            &spec,
            &[("dull and boring plot", 1), ("a tedious mess overall", 1)],
        );
        for seed in 0..20 {
            let out = c.complete(&m, &gen_params(seed)).unwrap();
            let (text, label) = crate::extract::parse_augmentation(&out.text, &spec).unwrap();
            assert_eq!(label, 1);
            let mix_prompt = crate::promptgen::Prompt {
                text: m.clone(),
                spec: &spec,
                kind: crate::promptgen::PromptKind::MixGeneration,
            };
            let q = build_label_query(&mix_prompt, &text, &spec).unwrap();
            let scores = c
                .score_label_tokens(&q.text, &spec.display_tokens())
                .unwrap();
            let p = crate::extract::compute_soft_label(&scores, &spec).unwrap();
            assert_eq!(p, [0.0, 1.0]);
        }
    }

    #[test]
    fn label_frequency_with_noise() {
        let spec = sst2();
        let cfg = MockConfig {
            noise: 0.25,
            seed: 11,
            ..MockConfig::default()
        };
        let c = client(cfg);
        let m = mix(&spec, &[("warm and lovely", 0), ("cold and dreary", 1)]);
        let draws = 10_000;
        let positive = (0..draws)
            .filter(|&s| {
                let out = c.complete(&m, &gen_params(s)).unwrap();
                crate::extract::parse_augmentation(&out.text, &spec)
                    .unwrap()
                    .1
                    == 0
            })
            .count();
        let freq = positive as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.03, "positive frequency {freq}");
    }

    #[test]
    fn deterministic_per_seed_and_prompt() {
        let spec = sst2();
        let m = mix(&spec, &[("warm and lovely", 0), ("cold and dreary", 1)]);
        let a = client(MockConfig::default())
            .complete(&m, &gen_params(5))
            .unwrap();
        let b = client(MockConfig::default())
            .complete(&m, &gen_params(5))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refuses_non_prompts() {
        let err = client(MockConfig::default())
            .complete("What is 2+2?", &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, BackendError::Mock(_)));
    }

    #[test]
    fn multi_token_label_is_detected_through_echo() {
        let spec = TaskSpecification::new(
            "text",
            "grammar",
            vec!["ok".into(), "bad".into()],
            vec!["grammatical-acceptability".into(), "wrong".into()],
        )
        .unwrap();
        let m = mix(&spec, &[("fine words", 0)]);
        let q = format!("{m} more words (Grammar: ");
        let err = client(MockConfig::default())
            .score_label_tokens(&q, &spec.display_tokens())
            .unwrap_err();
        assert_eq!(
            err,
            ScoreError::MultiTokenVerbalizer("Grammatical-acceptability".into())
        );
    }

    #[test]
    fn echo_scores_match_top_alternatives() {
        let spec = sst2();
        let cfg = MockConfig {
            noise: 0.2,
            pools: IndexMap::from([("positive".to_string(), vec!["sunny".to_string()])]),
            ..MockConfig::default()
        };
        let c = client(cfg);
        let m = mix(&spec, &[("warm", 0), ("cold", 1)]);
        let q = format!("{m} sunny sunny (Sentiment: ");
        let top = c.score_label_tokens(&q, &spec.display_tokens()).unwrap();
        for cand in spec.display_tokens() {
            let echoed = c
                .send(&CompletionRequest::echo_scoring(format!("{q}{cand}")))
                .unwrap();
            assert_eq!(echoed.tokens.last().unwrap().logprob, top[&cand]);
        }
        assert!((top["Positive"] - 0.8f64.ln()).abs() < 1e-12);
        assert!((top["Negative"] - 0.2f64.ln()).abs() < 1e-12);
    }
}
