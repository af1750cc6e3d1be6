//! Blocking HTTP chat-completions backend with retry and exponential
//! backoff.
//!
//! Wire format: `POST {base_url}/v1/chat/completions` with the standard JSON
//! body; the first choice's message content is returned. Responses with
//! status 429 or 5xx and transport-level failures (timeouts, refused
//! connections) are retried up to `max_retries` times with delays
//! `backoff_base * 2^attempt`. A 401 fails immediately without retries.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{FinishReason, GenerationRequest, GenerationResponse, Generator, LlmError, Usage};

/// Connection settings for a chat-completions endpoint. The API key is read
/// from the environment variable named by `api_key_env`, never from config
/// files; with `api_key_env` unset no Authorization header is sent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            api_key_env: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl BackendConfig {
    fn validate(&self) -> Result<(), LlmError> {
        if self.base_url.is_empty() {
            return Err(LlmError::BadConfig("base_url is empty".into()));
        }
        if self.timeout.is_zero() {
            return Err(LlmError::BadConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [super::Message],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
}

enum AttemptError {
    Retryable(String),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::BadConfig(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn api_key(&self) -> Result<Option<String>, LlmError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(LlmError::Auth(format!(
                    "environment variable {var} is not set"
                ))),
            },
        }
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn attempt(
        &self,
        request: &GenerationRequest,
        key: Option<&str>,
    ) -> Result<GenerationResponse, AttemptError> {
        let body = WireRequest {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut builder = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            AttemptError::Retryable(if e.is_timeout() {
                format!("timeout after {:?}", self.config.timeout)
            } else {
                e.to_string()
            })
        })?;

        let status = response.status();
        if status.as_u16() == 401 {
            return Err(AttemptError::Fatal(LlmError::Auth(
                "backend returned 401".into(),
            )));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(LlmError::Protocol(format!(
                "unexpected status {status}"
            ))));
        }

        let wire: WireResponse = response.json().map_err(|e| {
            AttemptError::Fatal(LlmError::Protocol(format!("bad response body: {e}")))
        })?;
        let choice = wire.choices.into_iter().next().ok_or_else(|| {
            AttemptError::Fatal(LlmError::Protocol("response has no choices".into()))
        })?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("error") => FinishReason::Error,
            _ => FinishReason::Stop,
        };
        let usage = wire.usage.and_then(|u| {
            Some(Usage {
                prompt_tokens: u.prompt_tokens?,
                completion_tokens: u.completion_tokens?,
            })
        });
        Ok(GenerationResponse {
            content: choice.message.content,
            finish_reason,
            usage,
        })
    }
}

impl Generator for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        request.validate()?;
        let key = self.api_key()?;
        let mut attempt = 0u32;
        loop {
            match self.attempt(request, key.as_deref()) {
                Ok(response) => return Ok(response),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(last)) => {
                    if attempt >= self.config.max_retries {
                        return Err(LlmError::BackendUnavailable {
                            attempts: attempt + 1,
                            last,
                        });
                    }
                    std::thread::sleep(self.config.backoff_base * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::time::Instant;

    /// Minimal scripted HTTP server: serves one canned action per incoming
    /// request, in order, then stops accepting.
    struct TestServer {
        base_url: String,
        handle: Option<std::thread::JoinHandle<Vec<String>>>,
    }

    #[derive(Clone)]
    enum Action {
        Respond { status: u16, body: String },
        Stall(Duration),
    }

    fn ok_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 7, "completion_tokens": 3}
        })
        .to_string()
    }

    impl TestServer {
        fn start(actions: Vec<Action>) -> Self {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let base_url = format!("http://{}", listener.local_addr().unwrap());
            let handle = std::thread::spawn(move || {
                let mut seen = Vec::new();
                for action in actions {
                    let (mut stream, _) = listener.accept().unwrap();
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let mut content_length = 0usize;
                    let mut has_auth = false;
                    loop {
                        let mut header = String::new();
                        reader.read_line(&mut header).unwrap();
                        let lower = header.to_ascii_lowercase();
                        if let Some(rest) = lower.strip_prefix("content-length:") {
                            content_length = rest.trim().parse().unwrap();
                        }
                        if lower.starts_with("authorization:") {
                            has_auth = true;
                        }
                        if header == "\r\n" || header.is_empty() {
                            break;
                        }
                    }
                    let mut body = vec![0u8; content_length];
                    reader.read_exact(&mut body).unwrap();
                    seen.push(format!(
                        "{} auth={} body={}",
                        line.trim(),
                        has_auth,
                        String::from_utf8_lossy(&body)
                    ));
                    match action {
                        Action::Respond { status, body } => {
                            let reply = format!(
                                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                                body.len()
                            );
                            stream.write_all(reply.as_bytes()).unwrap();
                        }
                        Action::Stall(d) => {
                            std::thread::sleep(d);
                        }
                    }
                }
                seen
            });
            Self {
                base_url,
                handle: Some(handle),
            }
        }

        fn finish(mut self) -> Vec<String> {
            self.handle.take().unwrap().join().unwrap()
        }
    }

    impl Drop for TestServer {
        fn drop(&mut self) {
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    fn backend(base_url: &str, max_retries: u32) -> HttpBackend {
        HttpBackend::new(BackendConfig {
            base_url: base_url.into(),
            api_key_env: None,
            timeout: Duration::from_millis(500),
            max_retries,
            backoff_base: Duration::from_millis(5),
        })
        .unwrap()
    }

    #[test]
    fn returns_first_choice_content() {
        let server = TestServer::start(vec![Action::Respond {
            status: 200,
            body: ok_body("generated answer"),
        }]);
        let response = backend(&server.base_url, 0)
            .generate(&GenerationRequest::user("test-model", "prompt text", 32))
            .unwrap();
        assert_eq!(response.content, "generated answer");
        assert_eq!(response.finish_reason, FinishReason::Stop);
        assert_eq!(
            response.usage,
            Some(Usage {
                prompt_tokens: 7,
                completion_tokens: 3
            })
        );
        let seen = server.finish();
        assert_eq!(seen.len(), 1);
        assert!(seen[0].contains("POST /v1/chat/completions"));
        assert!(seen[0].contains("\"model\":\"test-model\""));
        assert!(seen[0].contains("\"temperature\":0.0"));
        assert!(seen[0].contains("auth=false"));
    }

    #[test]
    fn retries_429_then_succeeds() {
        let server = TestServer::start(vec![
            Action::Respond {
                status: 429,
                body: "{}".into(),
            },
            Action::Respond {
                status: 429,
                body: "{}".into(),
            },
            Action::Respond {
                status: 200,
                body: ok_body("after backoff"),
            },
        ]);
        let response = backend(&server.base_url, 2)
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap();
        assert_eq!(response.content, "after backoff");
        assert_eq!(server.finish().len(), 3);
    }

    #[test]
    fn auth_error_is_immediate() {
        let server = TestServer::start(vec![Action::Respond {
            status: 401,
            body: "{}".into(),
        }]);
        let err = backend(&server.base_url, 3)
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap_err();
        assert!(matches!(err, LlmError::Auth(_)), "{err}");
        assert_eq!(server.finish().len(), 1, "401 must not be retried");
    }

    #[test]
    fn exhausted_retries_report_unavailable() {
        let server = TestServer::start(vec![
            Action::Respond {
                status: 500,
                body: "{}".into(),
            },
            Action::Respond {
                status: 503,
                body: "{}".into(),
            },
        ]);
        let err = backend(&server.base_url, 1)
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap_err();
        match err {
            LlmError::BackendUnavailable { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("unexpected error {other}"),
        }
        server.finish();
    }

    #[test]
    fn client_errors_other_than_429_do_not_retry() {
        let server = TestServer::start(vec![Action::Respond {
            status: 400,
            body: "{}".into(),
        }]);
        let err = backend(&server.base_url, 3)
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap_err();
        assert!(matches!(err, LlmError::Protocol(_)), "{err}");
        assert_eq!(server.finish().len(), 1, "400 must not be retried");
    }

    #[test]
    fn non_json_success_body_is_protocol_error() {
        let server = TestServer::start(vec![Action::Respond {
            status: 200,
            body: "this is not json".into(),
        }]);
        let err = backend(&server.base_url, 0)
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap_err();
        assert!(matches!(err, LlmError::Protocol(_)), "{err}");
        server.finish();
    }

    #[test]
    fn timeout_then_success_recovers_within_budget() {
        let server = TestServer::start(vec![
            Action::Stall(Duration::from_millis(900)),
            Action::Respond {
                status: 200,
                body: ok_body("late but fine"),
            },
        ]);
        let backend = backend(&server.base_url, 1);
        let started = Instant::now();
        let response = backend
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap();
        assert_eq!(response.content, "late but fine");
        // Bound: timeout * (retries + 1) + total backoff, with scheduling slack.
        assert!(
            started.elapsed() < Duration::from_millis(1200),
            "{:?}",
            started.elapsed()
        );
        server.finish();
    }

    #[test]
    fn missing_key_env_is_auth_error() {
        let backend = HttpBackend::new(BackendConfig {
            base_url: "http://127.0.0.1:1".into(),
            api_key_env: Some("RAGLINE_TEST_KEY_THAT_DOES_NOT_EXIST".into()),
            ..BackendConfig::default()
        })
        .unwrap();
        let err = backend
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap_err();
        assert!(matches!(err, LlmError::Auth(_)));
    }

    #[test]
    fn sends_bearer_token_when_env_set() {
        std::env::set_var("RAGLINE_TEST_KEY", "sk-test");
        let server = TestServer::start(vec![Action::Respond {
            status: 200,
            body: ok_body("ok"),
        }]);
        let backend = HttpBackend::new(BackendConfig {
            base_url: server.base_url.clone(),
            api_key_env: Some("RAGLINE_TEST_KEY".into()),
            timeout: Duration::from_millis(500),
            max_retries: 0,
            backoff_base: Duration::from_millis(1),
        })
        .unwrap();
        backend
            .generate(&GenerationRequest::user("m", "p", 8))
            .unwrap();
        let seen = server.finish();
        assert!(seen[0].contains("auth=true"));
    }

    #[test]
    fn config_validation() {
        assert!(HttpBackend::new(BackendConfig {
            timeout: Duration::ZERO,
            ..BackendConfig::default()
        })
        .is_err());
        assert!(HttpBackend::new(BackendConfig {
            base_url: String::new(),
            ..BackendConfig::default()
        })
        .is_err());
    }
}
