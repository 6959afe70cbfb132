use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatProvider, CompletionRequest, CompletionResponse, FinishReason, ProviderError};
use crate::http::{HttpError, JsonClient, Method};

pub use crate::http::RetryPolicy;

/// Provider for OpenAI-compatible `/chat/completions` endpoints.
pub struct NetworkProvider {
    client: JsonClient,
}

impl NetworkProvider {
    pub fn new(base_url: &str, api_key: Option<String>, retry: RetryPolicy) -> Self {
        let mut client = JsonClient::new(base_url, Duration::from_secs(120), retry);
        if let Some(key) = api_key {
            client = client.with_header("Authorization", format!("Bearer {key}"));
        }
        NetworkProvider { client }
    }

    /// Reads the API key from the named environment variable.
    pub fn from_env(base_url: &str, api_key_env: &str, retry: RetryPolicy) -> Result<Self, ProviderError> {
        let key = std::env::var(api_key_env).map_err(|_| ProviderError::MissingCredentials(api_key_env.to_string()))?;
        Ok(Self::new(base_url, Some(key), retry))
    }
}

impl ChatProvider for NetworkProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({"role": m.role.to_string(), "content": m.text}))
            .collect();
        let body = json!({
            "model": request.model_id,
            "messages": messages,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        });
        let value = self.client.send(Method::Post, "chat/completions", Some(&body)).map_err(|e| match e {
            HttpError::Transport { attempts, message } => ProviderError::Transport { attempts, message },
            HttpError::Status { status: 404, body } if body.contains("model") => {
                ProviderError::UnknownModel(request.model_id.clone())
            }
            other => ProviderError::Rejected(other.to_string()),
        })?;
        parse_chat_response(&value)
    }
}

fn parse_chat_response(value: &Value) -> Result<CompletionResponse, ProviderError> {
    let choice = value["choices"]
        .get(0)
        .ok_or_else(|| ProviderError::Rejected("response has no choices".into()))?;
    let text = choice["message"]["content"].as_str().unwrap_or_default().to_string();
    let finish_reason = match choice["finish_reason"].as_str() {
        Some("stop") | None => FinishReason::Complete,
        Some("length") => FinishReason::Truncated,
        Some(_) => FinishReason::Error,
    };
    Ok(CompletionResponse {
        text,
        prompt_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        finish_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testserver;
    use crate::provider::Message;

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hi"},"finish_reason":"length"}],"usage":{"prompt_tokens":9,"completion_tokens":2}}"#;

    fn fast() -> RetryPolicy {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(1) }
    }

    #[test]
    fn maps_openai_payloads() {
        let server = testserver::serve(vec![(200, OK.into())]);
        let p = NetworkProvider::new(&server.base_url, Some("sekret".into()), fast());
        let r = p.complete(&CompletionRequest::new("gpt", vec![Message::user("hello")])).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!((r.prompt_tokens, r.completion_tokens), (9, 2));
        assert_eq!(r.finish_reason, FinishReason::Truncated);
        let captured = server.captured.lock().unwrap();
        assert_eq!(captured[0].path, "/chat/completions");
        assert!(captured[0].headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer sekret"));
        let body: Value = serde_json::from_str(&captured[0].body).unwrap();
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "user");
    }

    #[test]
    fn transport_failure_after_retry_budget() {
        let server = testserver::serve(vec![(502, "{}".into()); 3]);
        let p = NetworkProvider::new(&server.base_url, None, fast());
        let err = p.complete(&CompletionRequest::new("gpt", vec![Message::user("x")])).unwrap_err();
        assert!(matches!(err, ProviderError::Transport { attempts: 3, .. }));
    }

    #[test]
    fn missing_credentials() {
        let err = NetworkProvider::from_env("http://localhost:1", "ALMAS_TEST_SURELY_UNSET_KEY", fast()).err().unwrap();
        assert!(matches!(err, ProviderError::MissingCredentials(_)));
    }
}
