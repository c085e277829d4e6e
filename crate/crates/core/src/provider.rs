//! Provider boundaries: language model, embedder, token estimation.
//!
//! The simulated backend is fully deterministic and is what every test
//! runs against. A configuration-driven HTTP adapter is available behind
//! the `http` feature.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::fnv1a;

/// One LLM query/response pair with token accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub prompt: String,
    pub response: String,
    pub token_count_in: usize,
    pub token_count_out: usize,
}

/// A fixed-length, unit-normalized embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f32>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Cosine distance in [0, 2]. Vectors are unit-normalized, so this
    /// is `1 - dot`.
    pub fn cosine_distance(&self, other: &Embedding) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum();
        (1.0 - dot).clamp(0.0, 2.0)
    }
}

/// Whitespace-delimited token estimate. Monotone in text length.
pub fn token_estimate(text: &str) -> usize {
    text.split_whitespace().count()
}

/// A language model backend.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<LlmExchange>;
    /// Total number of completed calls, the cost-measurement substrate.
    fn calls(&self) -> u64;
}

/// A text embedder. Equal texts must map to equal, unit-norm vectors.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Embedding;
    fn dim(&self) -> usize;
}

/// One pattern -> response rule of a simulated script.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    pub pattern: String,
    pub response: String,
}

/// Script document for the simulated provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<Vec<String>>,
}

/// Deterministic scripted language model.
///
/// `complete` first consumes the optional response sequence (one entry
/// per call, used for multi-turn tool-loop sessions), then falls back to
/// the first matching regex rule, then to the default response.
pub struct SimulatedLlm {
    rules: Vec<(Regex, String)>,
    default_response: String,
    sequence: Mutex<std::collections::VecDeque<String>>,
    call_log: Mutex<Vec<String>>,
    calls: AtomicU64,
    token_limit: usize,
}

impl SimulatedLlm {
    pub fn new(rules: Vec<(&str, &str)>, default_response: &str) -> Self {
        Self::from_script(&ScriptFile {
            rules: rules
                .into_iter()
                .map(|(p, r)| ScriptRule {
                    pattern: p.to_string(),
                    response: r.to_string(),
                })
                .collect(),
            default_response: default_response.to_string(),
            sequence: None,
        })
        .expect("inline script patterns must be valid regexes")
    }

    pub fn from_script(script: &ScriptFile) -> Result<Self> {
        let mut rules = Vec::new();
        for rule in &script.rules {
            let re = Regex::new(&rule.pattern)
                .map_err(|e| Error::InvalidConfig(format!("bad script pattern: {e}")))?;
            rules.push((re, rule.response.clone()));
        }
        Ok(Self {
            rules,
            default_response: script.default_response.clone(),
            sequence: Mutex::new(script.sequence.clone().unwrap_or_default().into()),
            call_log: Mutex::new(Vec::new()),
            calls: AtomicU64::new(0),
            token_limit: 1 << 20,
        })
    }

    pub fn from_script_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: ScriptFile = serde_json::from_str(&text)?;
        Self::from_script(&script)
    }

    /// Scripted session that replays `responses` in order.
    pub fn sequenced(responses: Vec<&str>) -> Self {
        Self::from_script(&ScriptFile {
            rules: Vec::new(),
            default_response: String::new(),
            sequence: Some(responses.into_iter().map(String::from).collect()),
        })
        .unwrap()
    }

    pub fn with_token_limit(mut self, limit: usize) -> Self {
        self.token_limit = limit;
        self
    }

    pub fn call_log(&self) -> Vec<String> {
        self.call_log.lock().unwrap().clone()
    }

    fn respond(&self, prompt: &str) -> String {
        if let Some(next) = self.sequence.lock().unwrap().pop_front() {
            return next;
        }
        for (re, response) in &self.rules {
            if re.is_match(prompt) {
                return response.clone();
            }
        }
        self.default_response.clone()
    }
}

impl LanguageModel for SimulatedLlm {
    fn complete(&self, prompt: &str) -> Result<LlmExchange> {
        let tokens_in = token_estimate(prompt);
        if tokens_in > self.token_limit {
            return Err(Error::ContextOverflow {
                got: tokens_in,
                limit: self.token_limit,
            });
        }
        let response = self.respond(prompt);
        self.call_log.lock().unwrap().push(prompt.to_string());
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(LlmExchange {
            prompt: prompt.to_string(),
            response: response.clone(),
            token_count_in: tokens_in,
            token_count_out: token_estimate(&response),
        })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Deterministic hashed character n-gram embedder (n = 1..=3), 256-dim,
/// L2-normalized. Similar text lands in nearby vectors, which is all the
/// cascade algorithms need.
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Embedding {
        let mut counts = vec![0.0f32; self.dim];
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            // Empty text maps to a fixed unit vector.
            counts[0] = 1.0;
            return Embedding { values: counts };
        }
        let mut buf = String::new();
        for n in 1..=3usize {
            if chars.len() < n {
                continue;
            }
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window.iter());
                let bucket = (fnv1a(buf.as_bytes()) as usize) % self.dim;
                counts[bucket] += 1.0;
            }
        }
        let norm: f32 = counts.iter().map(|c| c * c).sum::<f32>().sqrt();
        if norm > 0.0 {
            for c in counts.iter_mut() {
                *c /= norm;
            }
        } else {
            counts[0] = 1.0;
        }
        Embedding { values: counts }
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[cfg(feature = "http")]
pub mod http {
    //! Configuration-driven HTTP adapter. No vendor is hard-coded: the
    //! endpoint, auth header, prompt field path, and response text path
    //! all come from the profile.

    use super::*;

    /// Connection profile, typically filled from environment variables
    /// `CASCADE_HTTP_ENDPOINT`, `CASCADE_HTTP_API_KEY`,
    /// `CASCADE_HTTP_MODEL`, `CASCADE_HTTP_MAX_TOKENS`.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct HttpProfile {
        pub endpoint: String,
        pub api_key: String,
        pub model: String,
        pub max_tokens: usize,
        /// Dotted path of the prompt field inside the request body.
        pub prompt_path: String,
        /// Dotted path of the response text inside the response body.
        pub response_path: String,
        #[serde(default)]
        pub temperature: f64,
    }

    impl HttpProfile {
        pub fn from_env() -> Result<Self> {
            let var = |name: &str| {
                std::env::var(name).map_err(|_| Error::MissingProvider(name.to_string()))
            };
            Ok(Self {
                endpoint: var("CASCADE_HTTP_ENDPOINT")?,
                api_key: var("CASCADE_HTTP_API_KEY")?,
                model: var("CASCADE_HTTP_MODEL")?,
                max_tokens: var("CASCADE_HTTP_MAX_TOKENS")
                    .ok()
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(1024),
                prompt_path: std::env::var("CASCADE_HTTP_PROMPT_PATH")
                    .unwrap_or_else(|_| "prompt".into()),
                response_path: std::env::var("CASCADE_HTTP_RESPONSE_PATH")
                    .unwrap_or_else(|_| "text".into()),
                temperature: 0.0,
            })
        }
    }

    pub struct HttpLlm {
        profile: HttpProfile,
        client: reqwest::blocking::Client,
        calls: AtomicU64,
    }

    impl HttpLlm {
        pub fn new(profile: HttpProfile) -> Self {
            Self {
                profile,
                client: reqwest::blocking::Client::new(),
                calls: AtomicU64::new(0),
            }
        }
    }

    fn set_path(body: &mut serde_json::Value, path: &str, value: serde_json::Value) {
        let mut cursor = body;
        let parts: Vec<&str> = path.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            cursor = cursor
                .as_object_mut()
                .unwrap()
                .entry(part.to_string())
                .or_insert_with(|| serde_json::json!({}));
        }
        cursor.as_object_mut().unwrap().insert(
            parts.last().unwrap().to_string(),
            value,
        );
    }

    fn get_path<'a>(body: &'a serde_json::Value, path: &str) -> Option<&'a serde_json::Value> {
        let mut cursor = body;
        for part in path.split('.') {
            cursor = match part.parse::<usize>() {
                Ok(idx) => cursor.get(idx)?,
                Err(_) => cursor.get(part)?,
            };
        }
        Some(cursor)
    }

    impl LanguageModel for HttpLlm {
        fn complete(&self, prompt: &str) -> Result<LlmExchange> {
            let tokens_in = token_estimate(prompt);
            if tokens_in > self.profile.max_tokens {
                return Err(Error::ContextOverflow {
                    got: tokens_in,
                    limit: self.profile.max_tokens,
                });
            }
            let mut body = serde_json::json!({
                "model": self.profile.model,
                "temperature": self.profile.temperature,
            });
            set_path(&mut body, &self.profile.prompt_path, serde_json::json!(prompt));
            let response = self
                .client
                .post(&self.profile.endpoint)
                .header("Authorization", format!("Bearer {}", self.profile.api_key))
                .json(&body)
                .send()
                .map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
            let payload: serde_json::Value = response
                .json()
                .map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
            let text = get_path(&payload, &self.profile.response_path)
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    Error::ProviderUnavailable(format!(
                        "response path {:?} not found",
                        self.profile.response_path
                    ))
                })?
                .to_string();
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(LlmExchange {
                prompt: prompt.to_string(),
                token_count_in: tokens_in,
                token_count_out: token_estimate(&text),
                response: text,
            })
        }

        fn calls(&self) -> u64 {
            self.calls.load(Ordering::SeqCst)
        }
    }
}
