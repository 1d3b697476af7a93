//! Chat-completion client for sign classification: fixed prompt bytes,
//! token parsing, retry with backoff, and a prompt-hash response cache so a
//! repeated run issues zero network calls.

use super::{Provenance, Sign, SignClassifier, SignError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

/// The classification prompt; `{finding}` is replaced with the sentence.
pub const SIGN_PROMPT_TEMPLATE: &str = "Evaluate whether the following sentence is positive or not. Any medical finding rather a normal finding should be considered as negative finding.\n\n- If it includes any medical finding rather than a normal finding of a completely healthy person, respond with 'negative'.\n- If this finding seems like a finding of a healthy person, respond with 'positive'.\n\nProvide only 'positive' or 'negative' as the output, with no explanation.\n\nThe finding is: {finding}";

pub fn build_prompt(sentence: &str) -> String {
    SIGN_PROMPT_TEMPLATE.replace("{finding}", sentence)
}

/// Case-insensitive scan for "positive"/"negative"; the last occurrence wins
/// so a reasoning preamble cannot mask the verdict.
pub fn parse_sign_response(response: &str) -> Option<Sign> {
    let lower = response.to_lowercase();
    let pos = lower.rfind("positive");
    let neg = lower.rfind("negative");
    match (pos, neg) {
        (Some(p), Some(n)) => Some(if p > n { Sign::Positive } else { Sign::Negative }),
        (Some(_), None) => Some(Sign::Positive),
        (None, Some(_)) => Some(Sign::Negative),
        (None, None) => None,
    }
}

/// One round trip to a completion backend.
pub trait LlmTransport: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, String>;
}

/// HTTP JSON chat-completion endpoint. Token comes from the environment; the
/// model name is configuration, temperature is pinned to 0.
pub struct HttpChatTransport {
    url: String,
    model: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatTransport {
    pub fn new(url: String, model: String, token: Option<String>) -> Result<Self, SignError> {
        if url.is_empty() {
            return Err(SignError::Config("llm endpoint url is empty".to_string()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| SignError::Config(e.to_string()))?;
        Ok(Self {
            url,
            model,
            token,
            http,
        })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f32,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

impl LlmTransport for HttpChatTransport {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        let body = ChatRequest {
            model: &self.model,
            temperature: 0.0,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let mut req = self.http.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("http status {}", resp.status()));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| "response carried no choices".to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    prompt_sha256: String,
    response_text: String,
}

/// Prompt-hash keyed response cache, optionally persisted as JSONL. Safe for
/// concurrent insert-or-get.
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: PathBuf) -> Result<Self, SignError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let row: CacheRow = serde_json::from_str(&line?)
                    .map_err(std::io::Error::other)?;
                entries.insert(row.prompt_sha256, row.response_text);
            }
        }
        Ok(Self {
            path: Some(path),
            entries: Mutex::new(entries),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: String, response: String) -> Result<(), SignError> {
        {
            let mut entries = self.entries.lock().unwrap();
            if entries.contains_key(&key) {
                return Ok(());
            }
            entries.insert(key.clone(), response.clone());
        }
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let row = CacheRow {
                prompt_sha256: key,
                response_text: response,
            };
            serde_json::to_writer(&mut f, &row)
                .map_err(std::io::Error::other)?;
            f.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn prompt_key(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    format!("{:x}", hasher.finalize())
}

pub struct LlmClient {
    transport: Box<dyn LlmTransport>,
    cache: ResponseCache,
    max_attempts: u32,
    backoff: Duration,
}

impl LlmClient {
    pub fn new(transport: Box<dyn LlmTransport>, cache: ResponseCache) -> Self {
        Self {
            transport,
            cache,
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn with_retry(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Classify one sentence. Cached responses short-circuit the transport;
    /// only parsable responses are cached so a retry can repair a bad reply.
    pub fn classify_sentence(&self, sentence: &str) -> Result<Sign, SignError> {
        if sentence.trim().is_empty() {
            return Err(SignError::EmptySentence);
        }
        let prompt = build_prompt(sentence);
        let key = prompt_key(&prompt);
        if let Some(cached) = self.cache.get(&key) {
            if let Some(sign) = parse_sign_response(&cached) {
                return Ok(sign);
            }
        }
        let mut last_raw = String::new();
        let mut last_transport: Option<String> = None;
        for attempt in 0..self.max_attempts {
            match self.transport.complete(&prompt) {
                Ok(response) => match parse_sign_response(&response) {
                    Some(sign) => {
                        self.cache.insert(key, response)?;
                        return Ok(sign);
                    }
                    None => {
                        last_raw = response;
                        last_transport = None;
                    }
                },
                Err(msg) => {
                    last_transport = Some(msg);
                    if attempt + 1 < self.max_attempts {
                        std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    }
                }
            }
        }
        match last_transport {
            Some(msg) => Err(SignError::Transport {
                attempts: self.max_attempts,
                msg,
            }),
            None => Err(SignError::Unparsable {
                attempts: self.max_attempts,
                raw: last_raw,
            }),
        }
    }
}

impl SignClassifier for LlmClient {
    fn classify(&self, sentence: &str) -> Result<Sign, SignError> {
        self.classify_sentence(sentence)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Llm
    }
}
