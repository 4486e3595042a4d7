use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::Context;
use futures_util::{SinkExt, StreamExt};
use talklearn_core::model::{Ms, ParticipantId};
use talklearn_core::orchestrator::wire::LearningPromptPayload;
use talklearn_core::orchestrator::{AnswerSource, Body, ClockMode, Config, Outbound, SessionState, WireMessage};
use talklearn_core::telemetry::write_log;
use talklearn_core::translation::Lexicon;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};
use tokio_tungstenite::tungstenite::Message;

type ConnId = u64;

enum Input {
    Message {
        conn: ConnId,
        reply: UnboundedSender<String>,
        msg: WireMessage,
    },
    Disconnect {
        conn: ConnId,
    },
}

type Registry = Arc<Mutex<HashMap<String, mpsc::Sender<Input>>>>;

/// A running server. Dropping the handle does not stop it; call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    pub addr: SocketAddr,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn shutdown(self) {
        self.task.abort();
    }
}

/// Bind and start accepting connections in the background.
pub async fn start(config: Config, bind: SocketAddr) -> anyhow::Result<ServerHandle> {
    let lexicon = config.lexicon().context("loading lexicon")?;
    let listener = TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    let addr = listener.local_addr()?;
    std::fs::create_dir_all(&config.server.log_dir)
        .with_context(|| format!("creating {}", config.server.log_dir.display()))?;
    let shared = Arc::new(Shared {
        config,
        lexicon,
        sessions: Registry::default(),
    });
    let task = tokio::spawn(async move {
        let mut next: ConnId = 0;
        while let Ok((stream, _)) = listener.accept().await {
            next += 1;
            tokio::spawn(connection(stream, next, shared.clone()));
        }
    });
    Ok(ServerHandle { addr, task })
}

/// Serve until the process is stopped.
pub async fn serve(config: Config, bind: SocketAddr) -> anyhow::Result<()> {
    let handle = start(config, bind).await?;
    eprintln!("listening on ws://{}", handle.addr);
    handle.task.await?;
    Ok(())
}

struct Shared {
    config: Config,
    lexicon: Option<Lexicon>,
    sessions: Registry,
}

async fn connection(stream: TcpStream, conn: ConnId, shared: Arc<Shared>) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else { return };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::text(text)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let mut bound: Option<mpsc::Sender<Input>> = None;
    while let Some(Ok(frame)) = source.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let msg = match WireMessage::from_json(&text) {
            Ok(m) => m,
            Err(e) => {
                let _ = tx.send(WireMessage::error("", None, format!("malformed message: {e}")).to_json());
                continue;
            }
        };
        let session = match &bound {
            Some(s) => s.clone(),
            None => match session_for(&shared, &msg) {
                Some(s) => {
                    bound = Some(s.clone());
                    s
                }
                None => {
                    let _ = tx.send(
                        WireMessage::error(&msg.session_id, msg.t, format!("unknown session `{}`", msg.session_id))
                            .to_json(),
                    );
                    continue;
                }
            },
        };
        let input = Input::Message {
            conn,
            reply: tx.clone(),
            msg,
        };
        if session.send(input).is_err() {
            let _ = tx.send(WireMessage::error("", None, "session closed").to_json());
        }
    }
    if let Some(session) = bound {
        let _ = session.send(Input::Disconnect { conn });
    }
    drop(tx);
    let _ = writer.await;
}

/// The session a message belongs to. A Join for an unknown session creates it.
fn session_for(shared: &Arc<Shared>, msg: &WireMessage) -> Option<mpsc::Sender<Input>> {
    let mut sessions = shared.sessions.lock().expect("registry lock");
    if let Some(s) = sessions.get(&msg.session_id) {
        return Some(s.clone());
    }
    if !matches!(msg.body, Body::Join(_)) {
        return None;
    }
    let (tx, rx) = mpsc::channel();
    sessions.insert(msg.session_id.clone(), tx.clone());
    let state = SessionState::new(
        &msg.session_id,
        shared.config.clone(),
        shared.lexicon.clone(),
        shared.config.server.seed,
    );
    let owner = Owner {
        rx,
        conns: BTreeMap::new(),
        stash: VecDeque::new(),
        log_dir: shared.config.server.log_dir.clone(),
        registry: shared.sessions.clone(),
        started: Instant::now(),
    };
    std::thread::spawn(move || owner.run(state));
    Some(tx)
}

struct Owner {
    rx: mpsc::Receiver<Input>,
    conns: BTreeMap<ParticipantId, (ConnId, UnboundedSender<String>)>,
    stash: VecDeque<Input>,
    log_dir: PathBuf,
    registry: Registry,
    started: Instant,
}

/// Answers for prompts placed in hindsight come from the connected clients. While
/// waiting, any other input is kept for later.
struct Waiting<'a> {
    rx: &'a mpsc::Receiver<Input>,
    conns: &'a BTreeMap<ParticipantId, (ConnId, UnboundedSender<String>)>,
    stash: &'a mut VecDeque<Input>,
}

/// Deliver messages to their participants' connections. With a `sender`, errors go
/// back to the connection whose message caused them.
fn route(
    conns: &BTreeMap<ParticipantId, (ConnId, UnboundedSender<String>)>,
    out: Vec<Outbound>,
    sender: Option<&UnboundedSender<String>>,
) {
    for o in out {
        let target = match (&o.message.body, sender) {
            (Body::Error(_), Some(tx)) => Some(tx),
            _ => conns.get(&o.to).map(|(_, tx)| tx),
        };
        if let Some(tx) = target {
            let _ = tx.send(o.message.to_json());
        }
    }
}

impl AnswerSource for Waiting<'_> {
    fn answer(&mut self, to: &ParticipantId, prompt: &LearningPromptPayload, pending: &mut Vec<Outbound>) -> Option<String> {
        route(self.conns, std::mem::take(pending), None);
        let (expected_conn, _) = self.conns.get(to)?;
        if self.stash.iter().any(|i| matches!(i, Input::Disconnect { conn } if conn == expected_conn)) {
            return None;
        }
        loop {
            let input = self.rx.recv().ok()?;
            match &input {
                Input::Message { conn, msg, .. } if conn == expected_conn => {
                    if let Body::LearningAnswer(a) = &msg.body {
                        if a.prompt_id == prompt.prompt_id {
                            return Some(a.answer.clone());
                        }
                    }
                }
                Input::Disconnect { conn } if conn == expected_conn => {
                    self.stash.push_back(input);
                    return None;
                }
                _ => {}
            }
            self.stash.push_back(input);
        }
    }
}

impl Owner {
    fn now(&self) -> Ms {
        self.started.elapsed().as_millis() as Ms
    }

    fn run(mut self, mut state: SessionState) {
        let tick = Duration::from_millis(20);
        while !state.is_closed() {
            let input = match self.stash.pop_front() {
                Some(i) => i,
                None => match state.clock() {
                    ClockMode::Virtual => match self.rx.recv() {
                        Ok(i) => i,
                        Err(_) => break,
                    },
                    ClockMode::Wall => match self.rx.recv_timeout(tick) {
                        Ok(i) => i,
                        Err(mpsc::RecvTimeoutError::Timeout) => {
                            let now = self.now();
                            let out = state.tick(now, &mut self.waiting());
                            route(&self.conns, out, None);
                            continue;
                        }
                        Err(mpsc::RecvTimeoutError::Disconnected) => break,
                    },
                },
            };
            self.apply(&mut state, input);
        }
        if let Some(log) = state.closed_log() {
            let path = self.log_dir.join(format!("{}.jsonl", state.session_id()));
            let written = std::fs::File::create(&path).and_then(|f| write_log(log, std::io::BufWriter::new(f)));
            if let Err(e) = written {
                eprintln!("writing {}: {e}", path.display());
            }
        }
        self.registry.lock().expect("registry lock").remove(state.session_id());
    }

    fn waiting(&mut self) -> Waiting<'_> {
        Waiting {
            rx: &self.rx,
            conns: &self.conns,
            stash: &mut self.stash,
        }
    }

    fn apply(&mut self, state: &mut SessionState, input: Input) {
        let now = self.now();
        match input {
            Input::Message { conn, reply, msg } => {
                let joining = match &msg.body {
                    Body::Join(j) if !self.conns.contains_key(&j.participant) => Some(j.participant.clone()),
                    _ => None,
                };
                if let Some(p) = &joining {
                    self.conns.insert(p.clone(), (conn, reply.clone()));
                }
                // only the connection that joined as a participant may speak for it
                let impostor = msg
                    .participant
                    .as_ref()
                    .and_then(|p| self.conns.get(p))
                    .is_some_and(|(c, _)| *c != conn);
                let out = if impostor {
                    vec![Outbound {
                        to: ParticipantId::new(""),
                        message: WireMessage::error(state.session_id(), msg.t, "participant bound to another connection"),
                    }]
                } else {
                    state.handle_message(msg, now, &mut self.waiting())
                };
                if let Some(p) = joining {
                    if !state.is_joined(&p) {
                        self.conns.remove(&p);
                    }
                }
                route(&self.conns, out, Some(&reply));
            }
            Input::Disconnect { conn } => {
                let Some(p) = self.conns.iter().find(|(_, (c, _))| *c == conn).map(|(p, _)| p.clone()) else {
                    return;
                };
                self.conns.remove(&p);
                let out = state.disconnect(&p, &mut self.waiting());
                route(&self.conns, out, None);
            }
        }
    }
}
