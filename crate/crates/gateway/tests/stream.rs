mod common;

use common::{config, open_stream, read_events, spawn, SCRIPT};
use parley_gateway::AppState;
use serde_json::json;

#[tokio::test]
async fn replays_history_then_live() {
    let server = spawn(AppState::default()).await;
    let id = server.create(config(&SCRIPT)).await;
    // seq 0 created, 1 task message, 2 phase change, 3 and 4 agent turns
    server.post(&format!("/sessions/{id}/message"), json!({"text": "go"})).await;
    server.post(&format!("/sessions/{id}/step"), json!({"count": 2})).await;

    let resp = open_stream(&server, &id, None).await;
    assert!(resp
        .headers()
        .get("content-type")
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("text/event-stream"));
    let reader = tokio::spawn(read_events(resp, 6));
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    server.post(&format!("/sessions/{id}/step"), json!({"count": 1})).await;
    let events = reader.await.unwrap();

    let ids: Vec<u64> = events.iter().map(|e| e.id).collect();
    assert_eq!(ids, [0, 1, 2, 3, 4, 5]);
    assert_eq!(events[0].event, "phase_changed");
    assert_eq!(events[0].data["to"], "setup");
    assert_eq!(events[5].event, "message_appended");
    assert_eq!(events[5].data["body"], SCRIPT[2]);
}

#[tokio::test]
async fn last_event_id_resumes_after_that_seq() {
    let server = spawn(AppState::default()).await;
    let id = server.create(config(&SCRIPT)).await;
    server.post(&format!("/sessions/{id}/message"), json!({"text": "go"})).await;
    server.post(&format!("/sessions/{id}/step"), json!({"count": 3})).await;

    let resp = open_stream(&server, &id, Some(3)).await;
    let events = read_events(resp, 2).await;
    assert_eq!(events.iter().map(|e| e.id).collect::<Vec<_>>(), [4, 5]);
}

#[tokio::test]
async fn stream_errors() {
    let server = spawn(AppState::default()).await;
    let (status, body) = server.get("/sessions/missing/events").await;
    assert_eq!((status, body["code"].as_str()), (404, Some("unknown_session")));

    let id = server.create(config(&SCRIPT)).await;
    let resp = server
        .client
        .get(server.url(&format!("/sessions/{id}/events")))
        .header("Last-Event-ID", "abc")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);
}
