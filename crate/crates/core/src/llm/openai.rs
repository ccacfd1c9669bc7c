use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, ChatResponse, Embedder, EmbeddingVector, LlmError, Role, Usage};

const BODY_EXCERPT: usize = 400;

/// Chat client for `POST {base_url}/chat/completions`.
#[derive(Debug, Clone)]
pub struct OpenAiCompatible {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiCompatible {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        for m in &request.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.content}));
        }
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "stream": false,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

impl ChatProvider for OpenAiCompatible {
    fn name(&self) -> String {
        format!("openai-compatible:{}", self.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let started = Instant::now();
        let url = format!("{}/chat/completions", self.base_url);
        let value = post_json(&self.agent, &url, self.api_key.as_deref(), request.timeout, &self.body(request))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::ProviderRejection { status: Some(200), body: excerpt(&value.to_string()) })?
            .to_string();
        let usage = value.get("usage").and_then(|u| {
            Some(Usage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(ChatResponse { text, usage, latency: started.elapsed() })
    }
}

/// Embedding client for `POST {base_url}/embeddings`.
#[derive(Debug, Clone)]
pub struct OpenAiEmbedder {
    base_url: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    agent: ureq::Agent,
}

impl OpenAiEmbedder {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            timeout,
            agent: ureq::AgentBuilder::new().build(),
        }
    }
}

impl Embedder for OpenAiEmbedder {
    fn fingerprint(&self) -> String {
        format!("openai-compatible:{}:{}", self.base_url, self.model)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        let url = format!("{}/embeddings", self.base_url);
        let body = json!({"model": self.model, "input": texts});
        let value = post_json(&self.agent, &url, self.api_key.as_deref(), self.timeout, &body)?;
        let malformed = || LlmError::ProviderRejection { status: Some(200), body: excerpt(&value.to_string()) };
        let data = value.get("data").and_then(Value::as_array).ok_or_else(malformed)?;
        let mut indexed: Vec<(usize, EmbeddingVector)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(malformed)?
                .iter()
                .map(|v| v.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(malformed)?;
            indexed.push((index, EmbeddingVector::new(values)));
        }
        indexed.sort_by_key(|(i, _)| *i);
        Ok(indexed.into_iter().map(|(_, v)| v).collect())
    }
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    timeout: Duration,
    body: &Value,
) -> Result<Value, LlmError> {
    let started = Instant::now();
    let mut req = agent.post(url).timeout(timeout).set("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    match req.send_json(body.clone()) {
        Ok(resp) => resp.into_json::<Value>().map_err(|e| {
            if started.elapsed() >= timeout {
                LlmError::TimeoutExceeded(timeout)
            } else {
                LlmError::Transport(e.to_string())
            }
        }),
        Err(ureq::Error::Status(status, resp)) => Err(LlmError::ProviderRejection {
            status: Some(status),
            body: excerpt(&resp.into_string().unwrap_or_default()),
        }),
        Err(ureq::Error::Transport(t)) => {
            let message = t.to_string();
            if started.elapsed() >= timeout || message.contains("timed out") {
                Err(LlmError::TimeoutExceeded(timeout))
            } else {
                Err(LlmError::Transport(message))
            }
        }
    }
}

fn excerpt(body: &str) -> String {
    if body.len() <= BODY_EXCERPT {
        return body.to_string();
    }
    let mut end = BODY_EXCERPT;
    while !body.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &body[..end])
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;

    use super::*;
    use crate::llm::complete;

    /// Serves each connection with `respond`, on a background thread.
    fn stub_server(respond: impl Fn(String) -> Option<String> + Send + 'static) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut buf = vec![0u8; 65536];
                let mut request = Vec::new();
                // Read headers plus a body of Content-Length bytes.
                loop {
                    let n = stream.read(&mut buf).unwrap_or(0);
                    if n == 0 {
                        break;
                    }
                    request.extend_from_slice(&buf[..n]);
                    let text = String::from_utf8_lossy(&request);
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let len = text[..head_end]
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap_or(0))
                            })
                            .unwrap_or(0);
                        if request.len() >= head_end + 4 + len {
                            break;
                        }
                    }
                }
                match respond(String::from_utf8_lossy(&request).into_owned()) {
                    Some(body) => {
                        let _ = write!(
                            stream,
                            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                            body.len(),
                            body
                        );
                    }
                    None => std::thread::sleep(Duration::from_secs(5)),
                }
            }
        });
        format!("http://{addr}/v1")
    }

    #[test]
    fn chat_round_trip_against_stub() {
        let base = stub_server(|req| {
            assert!(req.starts_with("POST /v1/chat/completions"));
            assert!(req.contains("\"temperature\":0.0"));
            Some(r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}],"usage":{"prompt_tokens":5,"completion_tokens":2}}"#.into())
        });
        let client = OpenAiCompatible::new(base, "m", Some("k".into()));
        let resp = complete(&client, &ChatRequest::new("sys", "hello")).unwrap();
        assert_eq!(resp.text, "hi there");
        assert_eq!(resp.usage.unwrap().completion_tokens, 2);
    }

    #[test]
    fn stalling_server_times_out() {
        let base = stub_server(|_| None);
        let client = OpenAiCompatible::new(base, "m", None);
        let req = ChatRequest::new("sys", "hello").with_timeout(Duration::from_millis(50));
        let started = Instant::now();
        let err = complete(&client, &req).unwrap_err();
        assert_eq!(err, LlmError::TimeoutExceeded(Duration::from_millis(50)));
        assert!(started.elapsed() < Duration::from_secs(2), "{:?}", started.elapsed());
    }

    #[test]
    fn embeddings_are_reordered_by_index() {
        let base = stub_server(|_| {
            Some(r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#.into())
        });
        let e = OpenAiEmbedder::new(base, "emb", None, Duration::from_secs(5));
        let vs = e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(vs[0].values, vec![1.0, 0.0]);
        assert_eq!(vs[1].values, vec![0.0, 1.0]);
    }
}
