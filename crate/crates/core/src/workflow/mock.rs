//! Local HTTP planner for tests and demos.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

use crate::dataset::Mode;

use super::ReplayPlanner;

#[derive(Clone, Debug)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockReply {
    pub fn ok(body: impl Into<String>) -> Self {
        MockReply {
            status: 200,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }
}

pub struct MockServer {
    url: String,
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
    requests: Arc<AtomicUsize>,
}

impl MockServer {
    /// Serves `respond(request_json)` on 127.0.0.1 at an ephemeral port.
    /// Requests are handled one at a time.
    pub fn start<F>(respond: F) -> std::io::Result<MockServer>
    where
        F: Fn(&Value) -> MockReply + Send + 'static,
    {
        let server = Arc::new(Server::http("127.0.0.1:0").map_err(std::io::Error::other)?);
        let port = server.server_addr().to_ip().map(|a| a.port()).ok_or_else(|| std::io::Error::other("no ip address"))?;
        let requests = Arc::new(AtomicUsize::new(0));
        let (srv, count) = (server.clone(), requests.clone());
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                count.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                let parsed = req.as_reader().read_to_string(&mut body).ok().and_then(|_| serde_json::from_str(&body).ok());
                let reply = match parsed {
                    Some(v) => respond(&v),
                    None => MockReply {
                        status: 400,
                        body: json!({"error": "request body is not JSON"}).to_string(),
                        delay: Duration::ZERO,
                    },
                };
                if !reply.delay.is_zero() {
                    std::thread::sleep(reply.delay);
                }
                let header: Header = "Content-Type: application/json".parse().expect("static header");
                let _ = req.respond(Response::from_string(reply.body).with_status_code(reply.status).with_header(header));
            }
        });
        Ok(MockServer {
            url: format!("http://127.0.0.1:{port}/plan"),
            server,
            handle: Some(handle),
            requests,
        })
    }

    /// Answers each request with the recorded calls for its mode and item.
    pub fn replaying(replay: ReplayPlanner) -> std::io::Result<MockServer> {
        MockServer::start(move |req| {
            let mode = match req.get("mode").and_then(Value::as_str) {
                Some("gen") => Mode::Gen,
                Some("edt") => Mode::Edt,
                _ => return MockReply {
                    status: 400,
                    body: json!({"error": "bad mode"}).to_string(),
                    delay: Duration::ZERO,
                },
            };
            let item = req.get("item_index").and_then(Value::as_u64).unwrap_or(u64::MAX) as usize;
            match replay.calls(mode, item) {
                Some(calls) => {
                    let wire: Vec<Value> = calls.iter().map(|c| c.to_json()).collect();
                    MockReply::ok(json!({ "calls": wire }).to_string())
                }
                None => MockReply {
                    status: 404,
                    body: json!({"error": "no recorded step"}).to_string(),
                    delay: Duration::ZERO,
                },
            }
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
