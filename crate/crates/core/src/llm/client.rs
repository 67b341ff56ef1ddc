//! OpenAI-compatible chat-completion client with retries and a
//! record/replay fixture store for deterministic tests.
//!
//! Fixtures are JSON files named by the sha256 hash of the serialized
//! message list, so identical prompts always replay the same response.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompts::{Decoding, Message};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("no replay fixture for message hash {0}")]
    FixtureMiss(String),
    #[error("malformed response: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where responses come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "dir")]
pub enum RunMode {
    /// Hit the endpoint.
    Live,
    /// Serve from the fixture directory; never touch the network.
    Replay(PathBuf),
    /// Hit the endpoint and save each response as a fixture.
    Record(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_attempts() -> u32 {
    5
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4".to_string(),
            credential_env: "LLM_API_KEY".to_string(),
            timeout_secs: default_timeout_secs(),
            max_attempts: default_max_attempts(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    #[serde(default)]
    pub usage: Option<TokenUsage>,
    /// Full transport payload, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<serde_json::Value>,
}

/// Content hash identifying a message list; fixture file stem.
pub fn message_hash(messages: &[Message]) -> String {
    let serialized = serde_json::to_vec(messages).expect("messages serialize");
    let digest = Sha256::digest(&serialized);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct LlmClient {
    pub config: EndpointConfig,
    pub mode: RunMode,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl LlmClient {
    pub fn new(config: EndpointConfig, mode: RunMode) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(LlmClient { config, mode, http })
    }

    fn fixture_path(dir: &Path, hash: &str) -> PathBuf {
        dir.join(format!("{hash}.json"))
    }

    /// Complete a chat; shareable across threads.
    pub fn complete(&self, messages: &[Message], decoding: Decoding) -> Result<LlmResponse, LlmError> {
        match &self.mode {
            RunMode::Replay(dir) => {
                let hash = message_hash(messages);
                let path = Self::fixture_path(dir, &hash);
                if !path.exists() {
                    return Err(LlmError::FixtureMiss(hash));
                }
                let text = std::fs::read_to_string(&path)?;
                serde_json::from_str(&text).map_err(|e| LlmError::Schema(e.to_string()))
            }
            RunMode::Live => self.complete_live(messages, decoding),
            RunMode::Record(dir) => {
                let response = self.complete_live(messages, decoding)?;
                std::fs::create_dir_all(dir)?;
                let path = Self::fixture_path(dir, &message_hash(messages));
                let serialized =
                    serde_json::to_string_pretty(&response).expect("response serializes");
                std::fs::write(path, serialized)?;
                Ok(response)
            }
        }
    }

    fn complete_live(&self, messages: &[Message], decoding: Decoding) -> Result<LlmResponse, LlmError> {
        let credential = std::env::var(&self.config.credential_env)
            .map_err(|_| LlmError::MissingCredential(self.config.credential_env.clone()))?;
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            max_tokens: decoding.max_new_tokens,
            temperature: decoding.temperature,
        };
        let mut backoff = Duration::from_millis(500);
        let mut last_error = None;
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff = (backoff * 2).min(Duration::from_secs(8));
            }
            let result = self
                .http
                .post(&url)
                .bearer_auth(&credential)
                .json(&body)
                .send();
            let response = match result {
                Ok(r) => r,
                Err(e) => {
                    last_error = Some(LlmError::Transport(e.to_string()));
                    continue;
                }
            };
            let status = response.status();
            if status.as_u16() == 429 || status.is_server_error() {
                last_error = Some(if status.as_u16() == 429 {
                    LlmError::RateLimited(attempt + 1)
                } else {
                    LlmError::Transport(format!("status {status}"))
                });
                continue;
            }
            if !status.is_success() {
                return Err(LlmError::Transport(format!("status {status}")));
            }
            let raw: serde_json::Value = response
                .json()
                .map_err(|e| LlmError::Schema(e.to_string()))?;
            let parsed: ChatResponse = serde_json::from_value(raw.clone())
                .map_err(|e| LlmError::Schema(e.to_string()))?;
            let choice = parsed
                .choices
                .into_iter()
                .next()
                .ok_or_else(|| LlmError::Schema("no choices in response".to_string()))?;
            return Ok(LlmResponse {
                text: choice.message.content,
                usage: parsed.usage,
                raw: Some(raw),
            });
        }
        Err(last_error.unwrap_or(LlmError::RateLimited(self.config.max_attempts)))
    }
}

/// Write a response as a replay fixture for the given messages; used to
/// author frozen test fixtures by hand.
pub fn write_fixture(dir: &Path, messages: &[Message], response: &LlmResponse) -> Result<PathBuf, LlmError> {
    std::fs::create_dir_all(dir)?;
    let path = LlmClient::fixture_path(dir, &message_hash(messages));
    let serialized = serde_json::to_string_pretty(response).expect("response serializes");
    std::fs::write(&path, serialized)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompts::Message;

    fn messages() -> Vec<Message> {
        vec![Message::system("sys"), Message::user("hello")]
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = message_hash(&messages());
        let b = message_hash(&messages());
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let c = message_hash(&[Message::system("sys"), Message::user("other")]);
        assert_ne!(a, c);
    }

    #[test]
    fn replay_returns_fixture_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let response = LlmResponse {
            text: "fixture text".to_string(),
            usage: None,
            raw: None,
        };
        write_fixture(dir.path(), &messages(), &response).unwrap();
        // unroutable base URL: any network attempt would fail loudly
        let config = EndpointConfig {
            base_url: "http://127.0.0.1:1".to_string(),
            ..EndpointConfig::default()
        };
        let client = LlmClient::new(config, RunMode::Replay(dir.path().to_path_buf())).unwrap();
        let got = client.complete(&messages(), Decoding::default()).unwrap();
        assert_eq!(got.text, "fixture text");
    }

    #[test]
    fn replay_miss_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(
            EndpointConfig::default(),
            RunMode::Replay(dir.path().to_path_buf()),
        )
        .unwrap();
        assert!(matches!(
            client.complete(&messages(), Decoding::default()),
            Err(LlmError::FixtureMiss(_))
        ));
    }

    #[test]
    fn missing_credential_fails_before_any_request() {
        let config = EndpointConfig {
            credential_env: "HALLUC_TEST_UNSET_CREDENTIAL".to_string(),
            base_url: "http://127.0.0.1:1".to_string(),
            max_attempts: 1,
            ..EndpointConfig::default()
        };
        let client = LlmClient::new(config, RunMode::Live).unwrap();
        assert!(matches!(
            client.complete(&messages(), Decoding::default()),
            Err(LlmError::MissingCredential(_))
        ));
    }
}
