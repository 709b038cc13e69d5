#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use parley_gateway::{router, AppState};
use serde_json::{json, Value};

pub struct Server {
    pub base: String,
    pub state: Arc<AppState>,
    pub client: reqwest::Client,
}

pub async fn spawn(state: AppState) -> Server {
    let state = Arc::new(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Server {
        base: format!("http://{addr}"),
        state,
        client: reqwest::Client::new(),
    }
}

pub const SCRIPT: [&str; 6] = [
    "Alpha: I have the cups. PLAN Alpha: Kitchen -> Hall -> Office",
    "Bravo: I will wait in the Kitchen. PLAN Bravo: Hall -> Kitchen",
    "Alpha: We cross in the Hall, which is fine.",
    "Bravo: Agreed.",
    "Alpha: Final. PLAN Alpha: Kitchen -> Hall -> Office",
    "Bravo: Final. PLAN Bravo: Hall -> Kitchen @supervisor",
];

pub fn config(responses: &[&str]) -> Value {
    json!({
        "agents": [
            {"name": "Alpha", "description": "Carries cups.", "start_room": "Kitchen"},
            {"name": "Bravo", "description": "Holds a tray.", "start_room": "Hall"}
        ],
        "environment": "Kitchen <-> Hall\nHall <-> Office\n",
        "provider": {"kind": "scripted", "responses": responses}
    })
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.client.get(self.url(path)).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn create(&self, config: Value) -> String {
        let (status, body) = self.post("/sessions", config).await;
        assert_eq!(status, 201, "{body}");
        body["id"].as_str().unwrap().to_string()
    }
}

/// One parsed server-sent event.
#[derive(Debug, Clone, PartialEq)]
pub struct Sse {
    pub id: u64,
    pub event: String,
    pub data: Value,
}

/// Reads events from an open stream until `n` have arrived.
pub async fn read_events(resp: reqwest::Response, n: usize) -> Vec<Sse> {
    use futures::StreamExt;
    let mut stream = resp.bytes_stream();
    let mut buf = String::new();
    let mut out = Vec::new();
    while out.len() < n {
        let chunk = tokio::time::timeout(std::time::Duration::from_secs(5), stream.next())
            .await
            .expect("stream stalled")
            .expect("stream ended")
            .unwrap();
        buf.push_str(&String::from_utf8_lossy(&chunk));
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf[..end].to_string();
            buf.drain(..end + 2);
            if let Some(ev) = parse_block(&block) {
                out.push(ev);
            }
        }
    }
    out.truncate(n);
    out
}

fn parse_block(block: &str) -> Option<Sse> {
    let (mut id, mut event, mut data) = (None, None, String::new());
    for line in block.lines() {
        if let Some(v) = line.strip_prefix("id:") {
            id = v.trim().parse().ok();
        } else if let Some(v) = line.strip_prefix("event:") {
            event = Some(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("data:") {
            data.push_str(v.strip_prefix(' ').unwrap_or(v));
        }
    }
    Some(Sse {
        id: id?,
        event: event?,
        data: serde_json::from_str(&data).ok()?,
    })
}

pub async fn open_stream(server: &Server, id: &str, last: Option<u64>) -> reqwest::Response {
    let mut req = server.client.get(server.url(&format!("/sessions/{id}/events")));
    if let Some(last) = last {
        req = req.header("Last-Event-ID", last.to_string());
    }
    let resp = req.send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    resp
}
