//! Minimal JSON-over-HTTP client with bounded retries, shared by the
//! network model provider and the hosted tracker/PR adapters.

use std::thread;
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Put,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1 << attempt.min(16))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Body(String),
}

#[derive(Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    base_url: String,
    headers: Vec<(String, String)>,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(base_url: &str, timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient { agent, base_url: base_url.trim_end_matches('/').to_string(), headers: Vec::new(), retry }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_string(), value.into()));
        self
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url, path.trim_start_matches('/'))
    }

    /// Sends a request, retrying transport failures, 429 and 5xx responses
    /// with exponential backoff. Other non-2xx statuses fail immediately.
    pub fn send(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value, HttpError> {
        let url = self.url(path);
        let mut last = String::new();
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.retry.delay(attempt - 1));
            }
            match self.send_once(method, &url, body) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    if text.trim().is_empty() {
                        return Ok(Value::Null);
                    }
                    return serde_json::from_str(&text).map_err(|e| HttpError::Body(e.to_string()));
                }
                Ok((status, text)) if status == 429 || status >= 500 => {
                    last = format!("HTTP {status}: {}", text.trim());
                }
                Ok((status, text)) => return Err(HttpError::Status { status, body: text }),
                Err(e) => last = e.to_string(),
            }
            log::warn!("{method:?} {url} failed (attempt {}): {last}", attempt + 1);
        }
        Err(HttpError::Transport { attempts: self.retry.attempts.max(1), message: last })
    }

    fn send_once(&self, method: Method, url: &str, body: Option<&Value>) -> Result<(u16, String), ureq::Error> {
        let mut response = match method {
            Method::Get => {
                let mut req = self.agent.get(url);
                for (k, v) in &self.headers {
                    req = req.header(k, v);
                }
                req.call()?
            }
            Method::Post | Method::Put => {
                let mut req = if method == Method::Post { self.agent.post(url) } else { self.agent.put(url) };
                for (k, v) in &self.headers {
                    req = req.header(k, v);
                }
                match body {
                    Some(b) => req.send_json(b)?,
                    None => req.send_empty()?,
                }
            }
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string()?;
        Ok((status, text))
    }
}

#[cfg(test)]
pub(crate) mod testserver {
    //! Tiny scripted HTTP/1.1 server for adapter tests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    #[derive(Debug, Clone)]
    pub struct Captured {
        pub method: String,
        pub path: String,
        pub headers: Vec<(String, String)>,
        pub body: String,
    }

    pub struct TestServer {
        pub base_url: String,
        pub captured: Arc<Mutex<Vec<Captured>>>,
    }

    /// Serves `responses` (status, body) in order, one per connection.
    pub fn serve(responses: Vec<(u16, String)>) -> TestServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let captured = Arc::new(Mutex::new(Vec::new()));
        let sink = captured.clone();
        thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut headers = Vec::new();
                let mut len = 0usize;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end().to_string();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                        headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                sink.lock().unwrap().push(Captured { method, path, headers, body: String::from_utf8_lossy(&buf).into() });
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        TestServer { base_url: format!("http://{addr}"), captured }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> RetryPolicy {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(1) }
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let server = testserver::serve(vec![(500, "{}".into()), (503, "{}".into()), (200, r#"{"ok":true}"#.into())]);
        let client = JsonClient::new(&server.base_url, Duration::from_secs(5), fast());
        let v = client.send(Method::Post, "/x", Some(&serde_json::json!({"a": 1}))).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(server.captured.lock().unwrap().len(), 3);
    }

    #[test]
    fn gives_up_after_budget() {
        let server = testserver::serve(vec![(500, "{}".into()); 3]);
        let client = JsonClient::new(&server.base_url, Duration::from_secs(5), fast());
        let err = client.send(Method::Get, "/x", None).unwrap_err();
        assert!(matches!(err, HttpError::Transport { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = testserver::serve(vec![(404, "nope".into())]);
        let client = JsonClient::new(&server.base_url, Duration::from_secs(5), fast());
        assert!(matches!(client.send(Method::Get, "/x", None), Err(HttpError::Status { status: 404, .. })));
    }
}
