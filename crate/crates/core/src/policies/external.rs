//! A policy whose decisions come from a remote agent over the wire protocol.
//!
//! Several episodes can share one connection. A reader thread routes each
//! reply to the episode named in its `episode` field; untagged or
//! unparseable replies go to the oldest outstanding request.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Choice, Decision, Policy, PolicyContext};
use crate::rng::Rng;
use crate::world::EpisodeMode;
use crate::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Default)]
struct Routes {
    waiting: HashMap<String, Sender<String>>,
    /// Episodes with an outstanding request, oldest first.
    order: VecDeque<String>,
    closed: bool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// One duplex newline-delimited JSON connection shared by any number of
/// episodes, each with at most one request in flight.
pub struct WireChannel {
    writer: Mutex<Box<dyn Write + Send>>,
    routes: Arc<Mutex<Routes>>,
    pub timeout: Duration,
}

impl WireChannel {
    pub fn new<R: Read + Send + 'static>(reader: R, writer: Box<dyn Write + Send>, timeout: Duration) -> Arc<Self> {
        let routes = Arc::new(Mutex::new(Routes::default()));
        let r = routes.clone();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                let tag = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("episode").and_then(Value::as_str).map(str::to_string));
                let mut routes = lock(&r);
                let target = match tag {
                    Some(ep) => routes.order.iter().position(|e| *e == ep),
                    None => (!routes.order.is_empty()).then_some(0),
                };
                // Late replies for episodes that already timed out are dropped.
                if let Some(i) = target {
                    let ep = routes.order.remove(i).expect("index in range");
                    if let Some(tx) = routes.waiting.remove(&ep) {
                        let _ = tx.send(line);
                    }
                }
            }
            let mut routes = lock(&r);
            routes.closed = true;
            routes.waiting.clear();
            routes.order.clear();
        });
        Arc::new(WireChannel { writer: Mutex::new(writer), routes, timeout })
    }

    pub fn send(&self, msg: &Value) -> Result<()> {
        let mut line = serde_json::to_string(msg)?;
        line.push('\n');
        let mut w = lock(&self.writer);
        w.write_all(line.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::Transport(format!("send failed: {e}")))
    }

    /// Send `msg` for `episode` and wait for its reply.
    pub fn request(&self, episode: &str, msg: &Value) -> Result<String> {
        let rx = self.register(episode)?;
        if let Err(e) = self.send(msg) {
            self.forget(episode);
            return Err(e);
        }
        match rx.recv_timeout(self.timeout) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => {
                self.forget(episode);
                Err(Error::Transport(format!("no reply within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("agent disconnected".into())),
        }
    }

    fn register(&self, episode: &str) -> Result<Receiver<String>> {
        let mut routes = lock(&self.routes);
        if routes.closed {
            return Err(Error::Transport("agent disconnected".into()));
        }
        if routes.waiting.contains_key(episode) {
            return Err(Error::Transport(format!("episode {episode} already has a request in flight")));
        }
        let (tx, rx) = mpsc::channel();
        routes.waiting.insert(episode.to_string(), tx);
        routes.order.push_back(episode.to_string());
        Ok(rx)
    }

    fn forget(&self, episode: &str) {
        let mut routes = lock(&self.routes);
        routes.waiting.remove(episode);
        routes.order.retain(|e| e != episode);
    }
}

pub struct ExternalPolicy {
    chan: Arc<WireChannel>,
    pub episode: String,
    /// Every message exchanged during the episode, in order.
    pub transcript: Vec<String>,
}

impl ExternalPolicy {
    pub fn new(chan: Arc<WireChannel>, episode: impl Into<String>) -> Self {
        ExternalPolicy { chan, episode: episode.into(), transcript: Vec::new() }
    }
}

/// The observation message for one decision.
pub fn obs_message(episode: &str, ctx: &PolicyContext<'_>) -> Value {
    let mut msg = json!({
        "type": "obs",
        "episode": episode,
        "step": ctx.history.len(),
        "observation": ctx.history.last_observation(),
        "mode": ctx.mode.name(),
        "budget_left": ctx.budget_left,
    });
    if let Some(g) = ctx.goal.filter(|_| ctx.mode == EpisodeMode::Act) {
        msg["goal"] = json!(g.text());
    }
    if let Some(k) = ctx.knowledge.filter(|k| ctx.mode == EpisodeMode::Act && !k.is_empty()) {
        msg["knowledge"] = json!(k.render());
    }
    msg
}

/// Interpret one reply line; anything but a well-formed `act` is malformed.
pub fn parse_reply(line: &str) -> Choice {
    let v: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(_) => return Choice::Malformed(line.to_string()),
    };
    match (v.get("type").and_then(Value::as_str), v.get("action").and_then(Value::as_str)) {
        (Some("act"), Some(a)) => Choice::Text(a.to_string()),
        _ => Choice::Malformed(line.to_string()),
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> &str {
        "external"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>, _rng: &mut Rng) -> Result<Decision> {
        let msg = obs_message(&self.episode, ctx);
        self.transcript.push(msg.to_string());
        let line = self.chan.request(&self.episode, &msg)?;
        self.transcript.push(line.clone());
        Ok(Decision { choice: parse_reply(&line), log_prob: 0.0, record: None })
    }

    fn finish(&mut self, success: bool, ecc: Option<f64>) -> Result<()> {
        let mut msg = json!({"type": "end", "episode": self.episode, "success": success});
        if let Some(e) = ecc {
            msg["ecc"] = json!(e);
        }
        self.transcript.push(msg.to_string());
        self.chan.send(&msg)
    }
}

/// Built-in agent: answers every observation with `action`, echoing the
/// episode id. Returns after the connection closes.
pub fn echo_agent<R: Read, W: Write>(reader: R, mut writer: W, action: &str) -> std::io::Result<usize> {
    let mut answered = 0;
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let Ok(v) = serde_json::from_str::<Value>(&line) else { continue };
        if v.get("type").and_then(Value::as_str) != Some("obs") {
            continue;
        }
        let reply = json!({"type": "act", "action": action, "episode": v.get("episode").cloned().unwrap_or(Value::Null)});
        writeln!(writer, "{reply}")?;
        writer.flush()?;
        answered += 1;
    }
    Ok(answered)
}
