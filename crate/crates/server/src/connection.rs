use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket};
use livepaper_core::session::{ReduceError, SessionError};
use livepaper_core::wire::{
    decode_client, encode_server, ClientFrame, ClientMessage, ErrorCode, ServerFrame, ServerMessage, Snapshot,
    WireError, PROTOCOL_VERSION,
};
use tokio::sync::broadcast::error::RecvError;

use crate::hub::{SessionHandle, Update};
use crate::App;

fn error_code(e: &SessionError) -> ErrorCode {
    match e {
        SessionError::Reduce(ReduceError::Conservation { .. }) => ErrorCode::Conservation,
        SessionError::Reduce(_) | SessionError::Tracker(_) | SessionError::AlreadyPlaced(_) => ErrorCode::InvalidAction,
        SessionError::UnknownObject(_) | SessionError::NoDial => ErrorCode::UnknownObject,
        SessionError::Journal(_) => ErrorCode::Internal,
    }
}

/// Best-effort correlation id of a frame that failed to decode.
fn salvage_id(text: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(text).ok()?.get("id")?.as_u64()
}

struct Client {
    socket: WebSocket,
    app: App,
    /// Seq of the last state this client was sent.
    have: Option<u64>,
}

impl Client {
    async fn send(&mut self, seq: Option<u64>, message: &ServerMessage) -> bool {
        let text = encode_server(&ServerFrame {
            seq,
            ts: self.app.now(),
            message: message.clone(),
        });
        self.socket.send(Message::Text(text.into())).await.is_ok()
    }

    async fn send_error(&mut self, request: Option<u64>, code: ErrorCode, message: String) -> bool {
        log::debug!("client error {code:?}: {message}");
        let seq = self.have;
        self.send(seq, &ServerMessage::Error { request, code, message }).await
    }

    async fn send_snapshot(&mut self, snapshot: Snapshot) -> bool {
        self.have = snapshot.seq();
        let seq = self.have;
        self.send(seq, &ServerMessage::StateSnapshot(snapshot)).await
    }

    /// Next text frame; `None` once the peer is gone.
    async fn next_text(&mut self) -> Option<String> {
        loop {
            match self.socket.recv().await? {
                Ok(Message::Text(t)) => return Some(t.as_str().to_owned()),
                Ok(Message::Binary(_)) => {
                    if !self
                        .send_error(None, ErrorCode::MalformedFrame, "binary frames are not supported".into())
                        .await
                    {
                        return None;
                    }
                }
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => {}
            }
        }
    }

    /// Waits for a valid `hello`; everything else is answered with an error.
    async fn handshake(&mut self) -> Option<ClientFrame> {
        loop {
            let text = self.next_text().await?;
            let (request, code, message) = match decode_client(&text) {
                Ok(frame @ ClientFrame { message: ClientMessage::Hello { .. }, .. }) => return Some(frame),
                Ok(frame) => (frame.id, ErrorCode::HandshakeRequired, "send hello first".to_string()),
                Err(e @ WireError::VersionMismatch { .. }) => {
                    self.send_error(salvage_id(&text), e.code(), e.to_string()).await;
                    return None;
                }
                Err(e) => (salvage_id(&text), e.code(), e.to_string()),
            };
            if !self.send_error(request, code, message).await {
                return None;
            }
        }
    }

    async fn forward(&mut self, handle: &SessionHandle, update: Update) -> bool {
        match update.message.as_ref() {
            ServerMessage::StateDelta(delta) if delta.base_seq == self.have => {
                self.have = delta.seq;
                self.send(update.seq, &update.message).await
            }
            ServerMessage::StateSnapshot(snapshot) if snapshot.seq() > self.have => {
                self.send_snapshot(snapshot.clone()).await
            }
            // Already covered by a newer snapshot.
            _ if update.seq <= self.have => true,
            _ => self.send_snapshot(handle.snapshot()).await,
        }
    }

    async fn handle_frame(&mut self, handle: &Arc<SessionHandle>, text: String) -> bool {
        let frame = match decode_client(&text) {
            Ok(f) => f,
            Err(e) => return self.send_error(salvage_id(&text), e.code(), e.to_string()).await,
        };
        let request = frame.id;
        match frame.message {
            ClientMessage::Hello { .. } => {
                self.send_error(request, ErrorCode::InvalidAction, "already joined".into())
                    .await
            }
            ClientMessage::RequestSnapshot => {
                let snapshot = handle.snapshot();
                let seq = snapshot.seq();
                self.send_snapshot(snapshot).await
                    && self
                        .send(
                            seq,
                            &ServerMessage::Ack {
                                request,
                                seq,
                                seqs: Vec::new(),
                            },
                        )
                        .await
            }
            message => {
                let worker = handle.clone();
                let ts = self.app.now();
                let outcome = tokio::task::spawn_blocking(move || worker.apply(ts, &message)).await;
                match outcome {
                    Ok(Ok(seqs)) => {
                        let seq = seqs.last().copied().or_else(|| handle.last_seq());
                        self.send(seq, &ServerMessage::Ack { request, seq, seqs }).await
                    }
                    Ok(Err(e)) => self.send_error(request, error_code(&e), e.to_string()).await,
                    Err(e) => {
                        log::error!("session worker failed: {e}");
                        self.send_error(request, ErrorCode::Internal, "internal error".into())
                            .await
                    }
                }
            }
        }
    }
}

pub(crate) async fn run(socket: WebSocket, app: App) {
    let mut client = Client { socket, app, have: None };
    let Some(hello) = client.handshake().await else {
        return;
    };
    let ClientMessage::Hello { session, .. } = hello.message else {
        return;
    };
    let handle = match client.app.hub.join(session.as_deref()) {
        Ok(h) => h,
        Err(e) => {
            client.send_error(hello.id, ErrorCode::InvalidAction, e.to_string()).await;
            return;
        }
    };
    let (mut updates, snapshot) = handle.subscribe();
    let welcome = ServerMessage::Welcome {
        session_id: handle.id().to_string(),
        protocol: PROTOCOL_VERSION.to_string(),
    };
    if !client.send(snapshot.seq(), &welcome).await || !client.send_snapshot(snapshot).await {
        return;
    }
    log::info!("client joined session {}", handle.id());
    loop {
        let alive = tokio::select! {
            text = client.next_text() => match text {
                Some(text) => client.handle_frame(&handle, text).await,
                None => false,
            },
            update = updates.recv() => match update {
                Ok(update) => client.forward(&handle, update).await,
                Err(RecvError::Lagged(n)) => {
                    log::warn!("client of {} skipped {n} updates", handle.id());
                    client.send_snapshot(handle.snapshot()).await
                }
                Err(RecvError::Closed) => false,
            },
        };
        if !alive {
            break;
        }
    }
    log::info!("client left session {}", handle.id());
}
