use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use parley_core::provider::{
    CompletionParams, CompletionProvider, ProviderError, ProviderMessage, RemoteProvider, Role,
};

enum Reply {
    Status(u16, &'static str),
    Stall(Duration),
}

struct Captured {
    head: String,
    body: String,
}

/// Serves one canned reply per connection, in order, and reports each
/// request it saw.
fn stub(replies: Vec<Reply>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let _ = tx.send(Captured {
                head,
                body: String::from_utf8(body).unwrap(),
            });
            let mut stream = stream;
            match reply {
                Reply::Status(code, text) => {
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                        text.len()
                    );
                }
                Reply::Stall(d) => thread::sleep(d),
            }
        }
    });
    (url, rx)
}

fn request() -> Vec<ProviderMessage> {
    vec![
        ProviderMessage::new(Role::System, "You are Alpha."),
        ProviderMessage::new(Role::User, "Supervisor: go"),
    ]
}

fn params() -> CompletionParams {
    CompletionParams {
        timeout_seconds: 0.5,
        ..CompletionParams::default()
    }
}

fn provider(url: &str) -> RemoteProvider {
    RemoteProvider::new(Some(url.to_string()), Some("test-key".into()))
        .with_retry_backoff(Duration::from_millis(10))
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Alpha: PLAN Alpha: Kitchen"}}]}"#;

#[test]
fn missing_key_fails_before_any_request() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let mut p = RemoteProvider::new(Some(url), None);
    assert_eq!(p.complete(&request(), &params()), Err(ProviderError::AuthMissing));
    assert!(listener.accept().is_err(), "no connection attempted");

    let mut p = RemoteProvider::new(None, Some("k".into()));
    assert_eq!(p.complete(&request(), &params()), Err(ProviderError::EndpointMissing));
}

#[test]
fn success_sends_chat_request() {
    let (url, rx) = stub(vec![Reply::Status(200, OK_BODY)]);
    let mut p = provider(&url);
    assert_eq!(p.complete(&request(), &params()).unwrap(), "Alpha: PLAN Alpha: Kitchen");
    let seen = rx.recv().unwrap();
    assert!(seen.head.starts_with("POST /v1/chat/completions"));
    assert!(seen.head.to_ascii_lowercase().contains("authorization: bearer test-key"));
    let body: serde_json::Value = serde_json::from_str(&seen.body).unwrap();
    assert_eq!(body["model"], "gpt-4-vision-preview");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(
        body["messages"],
        serde_json::json!([
            {"role": "system", "content": "You are Alpha."},
            {"role": "user", "content": "Supervisor: go"}
        ])
    );
}

#[test]
fn long_reply_is_truncated() {
    let (url, _rx) = stub(vec![Reply::Status(200, OK_BODY)]);
    let mut p = provider(&url);
    let params = CompletionParams {
        max_response_chars: 5,
        ..params()
    };
    assert_eq!(p.complete(&request(), &params).unwrap(), "Alpha");
}

#[test]
fn server_error_is_retried_once() {
    let (url, rx) = stub(vec![Reply::Status(503, "busy"), Reply::Status(200, OK_BODY)]);
    let mut p = provider(&url);
    assert!(p.complete(&request(), &params()).is_ok());
    assert_eq!(rx.try_iter().count(), 2);

    let (url, rx) = stub(vec![Reply::Status(500, "down"), Reply::Status(502, "still down")]);
    let mut p = provider(&url);
    assert_eq!(
        p.complete(&request(), &params()),
        Err(ProviderError::RemoteStatus {
            code: 502,
            body: "still down".into()
        })
    );
    assert_eq!(rx.try_iter().count(), 2);
}

#[test]
fn client_error_is_not_retried() {
    let (url, rx) = stub(vec![Reply::Status(401, "bad key"), Reply::Status(200, OK_BODY)]);
    let mut p = provider(&url);
    assert!(matches!(
        p.complete(&request(), &params()),
        Err(ProviderError::RemoteStatus { code: 401, .. })
    ));
    assert_eq!(rx.try_iter().count(), 1);
}

#[test]
fn stalled_server_times_out() {
    let stall = Duration::from_secs(3);
    let (url, _rx) = stub(vec![Reply::Stall(stall), Reply::Stall(stall)]);
    let mut p = provider(&url);
    let started = Instant::now();
    assert_eq!(p.complete(&request(), &params()), Err(ProviderError::Timeout));
    // two attempts of 0.5 s each plus a short backoff
    assert!(started.elapsed() < Duration::from_millis(2500), "{:?}", started.elapsed());
}

#[test]
fn malformed_body() {
    let (url, _rx) = stub(vec![Reply::Status(200, r#"{"choices":[]}"#)]);
    let mut p = provider(&url);
    assert!(matches!(
        p.complete(&request(), &params()),
        Err(ProviderError::MalformedResponse(_))
    ));

    let (url, _rx) = stub(vec![Reply::Status(200, "not json")]);
    let mut p = provider(&url);
    assert!(matches!(
        p.complete(&request(), &params()),
        Err(ProviderError::MalformedResponse(_))
    ));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let url = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}/", l.local_addr().unwrap())
    };
    let mut p = provider(&url);
    assert!(matches!(
        p.complete(&request(), &params()),
        Err(ProviderError::Transport(_))
    ));
}
