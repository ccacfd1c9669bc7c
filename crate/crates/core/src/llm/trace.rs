use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde_json::json;

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError};

/// Appends every request and its outcome to a JSON-lines file.
pub struct TracingProvider<P> {
    inner: P,
    sink: Mutex<std::fs::File>,
}

impl<P: ChatProvider> TracingProvider<P> {
    pub fn new(inner: P, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { inner, sink: Mutex::new(file) })
    }
}

impl<P: ChatProvider> ChatProvider for TracingProvider<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let result = self.inner.complete(request);
        let entry = match &result {
            Ok(resp) => json!({"provider": self.inner.name(), "request": request, "response": resp}),
            Err(e) => json!({"provider": self.inner.name(), "request": request, "error": e.to_string()}),
        };
        if let Ok(mut sink) = self.sink.lock() {
            let _ = writeln!(sink, "{entry}");
        }
        result
    }
}
