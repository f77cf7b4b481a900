//! A minimal in-process stand-in for an OpenAI-compatible completions
//! server, for tests and offline demos.

use serde_json::{json, Value};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct StubRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

impl StubRequest {
    pub fn json(&self) -> Option<Value> {
        serde_json::from_str(&self.body).ok()
    }
}

#[derive(Debug, Clone)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
}

impl StubReply {
    pub fn json(value: Value) -> Self {
        Self { status: 200, body: value.to_string() }
    }

    pub fn status(status: u16, body: &str) -> Self {
        Self { status, body: body.to_string() }
    }
}

/// Builds a `/completions` response body with top-1 logprobs.
///
/// `stop_reason` follows vLLM: `Some(stop)` when the stop string matched,
/// `None` for end-of-sequence.
pub fn completion_body(text: &str, tokens: &[(&str, f64)], finish_reason: &str, stop_reason: Option<&str>) -> Value {
    json!({
        "object": "text_completion",
        "choices": [{
            "index": 0,
            "text": text,
            "finish_reason": finish_reason,
            "stop_reason": stop_reason,
            "logprobs": {
                "tokens": tokens.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
                "token_logprobs": tokens.iter().map(|(_, lp)| *lp).collect::<Vec<_>>(),
                "top_logprobs": tokens.iter().map(|(t, lp)| json!({ *t: lp })).collect::<Vec<_>>(),
            }
        }],
        "usage": {
            "prompt_tokens": 0,
            "completion_tokens": tokens.len(),
            "total_tokens": tokens.len(),
        }
    })
}

type Responder = dyn Fn(&StubRequest) -> StubReply + Send + Sync;

/// Serves every request with a caller-supplied responder until dropped.
pub struct StubServer {
    port: u16,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<StubRequest>>>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(responder: impl Fn(&StubRequest) -> StubReply + Send + Sync + 'static) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").expect("bind stub server");
        let port = server.server_addr().to_ip().expect("tcp listener").port();
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let responder: Arc<Responder> = Arc::new(responder);

        let (stop2, requests2) = (stop.clone(), requests.clone());
        let handle = std::thread::spawn(move || {
            while !stop2.load(Ordering::SeqCst) {
                let Ok(Some(mut req)) = server.recv_timeout(Duration::from_millis(20)) else {
                    continue;
                };
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let authorization = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.as_str().to_string());
                let seen = StubRequest {
                    method: req.method().as_str().to_string(),
                    path: req.url().to_string(),
                    authorization,
                    body,
                };
                let reply = responder(&seen);
                requests2.lock().expect("stub log").push(seen);
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
                let response = tiny_http::Response::from_string(reply.body)
                    .with_status_code(reply.status)
                    .with_header(header);
                let _ = req.respond(response);
            }
        });

        Self { port, stop, requests, handle: Some(handle) }
    }

    /// Base URL to use as a generator endpoint.
    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}/v1", self.port)
    }

    pub fn requests(&self) -> Vec<StubRequest> {
        self.requests.lock().expect("stub log").clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
