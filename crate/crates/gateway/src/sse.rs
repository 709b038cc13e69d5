use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use futures::stream::{self, Stream};
use parley_core::SessionEvent;
use tokio::sync::broadcast::{self, error::RecvError};

use crate::state::{AppState, SessionSlot};
use crate::{last_event_id, lookup, ApiResult};

struct Feed {
    slot: Arc<SessionSlot>,
    backlog: VecDeque<SessionEvent>,
    rx: broadcast::Receiver<SessionEvent>,
    last: Option<u64>,
}

impl Feed {
    fn fresh(&self, event: &SessionEvent) -> bool {
        self.last.is_none_or(|last| event.seq > last)
    }

    async fn next(&mut self) -> Option<SessionEvent> {
        loop {
            if let Some(event) = self.backlog.pop_front() {
                if self.fresh(&event) {
                    self.last = Some(event.seq);
                    return Some(event);
                }
                continue;
            }
            match self.rx.recv().await {
                Ok(event) => {
                    if self.fresh(&event) {
                        self.last = Some(event.seq);
                        return Some(event);
                    }
                }
                // fell behind the channel; the session log has everything
                Err(RecvError::Lagged(_)) => {
                    self.backlog = self.slot.events_after(self.last).into();
                }
                Err(RecvError::Closed) => return None,
            }
        }
    }
}

fn to_sse(event: &SessionEvent) -> Event {
    Event::default()
        .id(event.seq.to_string())
        .event(event.kind.type_name())
        .data(event.payload().to_string())
}

fn feed_stream(feed: Feed) -> impl Stream<Item = Result<Event, Infallible>> {
    stream::unfold(feed, |mut feed| async move {
        let event = feed.next().await?;
        Some((Ok(to_sse(&event)), feed))
    })
}

pub(crate) async fn stream_events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let slot = lookup(&state, &id)?;
    let after = last_event_id(&headers)?;
    let (history, rx) = slot.subscribe(after);
    let feed = Feed {
        slot,
        backlog: history.into(),
        rx,
        last: after,
    };
    Ok(Sse::new(feed_stream(feed))
        .keep_alive(KeepAlive::default())
        .into_response())
}
