//! Client for the external-code worker.
//!
//! The worker is a separate process speaking one JSON object per line on its
//! standard streams. Every request gets exactly one response line:
//!
//! ```text
//! {"op":"load","dialect":"python","code":"..."}   -> {"ok":true}
//! {"op":"matrix","instance":{...}}                  -> {"ok":true,"rows":[[...],...]}
//! {"op":"score","state":{...}}                      -> {"ok":true,"scores":[...]}
//! {"op":"ping"}                                     -> {"ok":true}
//! ```
//!
//! Failures come back as `{"ok":false,"error":"..."}`. Non-finite numbers may
//! be sent as the strings `"nan"`, `"inf"` and `"-inf"`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SandboxError {
    #[error("could not start sandbox worker: {0}")]
    Spawn(String),
    #[error("sandbox request timed out")]
    Timeout,
    #[error("sandbox worker exited")]
    Crashed,
    #[error("sandbox protocol violation: {0}")]
    Protocol(String),
    #[error("heuristic failed in sandbox: {0}")]
    Remote(String),
}

/// How to launch a worker process.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerCommand {
    pub program: String,
    pub args: Vec<String>,
    pub request_timeout: Duration,
    pub cpu_limit_s: u64,
    pub mem_limit_mb: u64,
}

impl WorkerCommand {
    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .arg("--cpu-limit")
            .arg(self.cpu_limit_s.to_string())
            .arg("--mem-limit")
            .arg(self.mem_limit_mb.to_string())
            .arg("--request-timeout")
            .arg(format!("{}", self.request_timeout.as_secs_f64()))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        cmd
    }
}

/// One live worker process. Not shared across threads.
pub struct SandboxWorker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    request_timeout: Duration,
    loaded: Option<String>,
    dead: bool,
}

impl SandboxWorker {
    pub fn spawn(cmd: &WorkerCommand) -> Result<Self, SandboxError> {
        let mut child = cmd.command().spawn().map_err(|e| SandboxError::Spawn(format!("{}: {e}", cmd.program)))?;
        let stdin = child.stdin.take().ok_or_else(|| SandboxError::Spawn("no stdin pipe".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| SandboxError::Spawn("no stdout pipe".into()))?;
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines, request_timeout: cmd.request_timeout, loaded: None, dead: false })
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    /// Digest of the currently loaded code, if any.
    pub fn loaded(&self) -> Option<&str> {
        self.loaded.as_deref()
    }

    fn kill(&mut self) {
        self.dead = true;
        self.loaded = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Sends one request and waits for its response, at most `timeout`
    /// (capped by the per-request limit). On timeout or a broken pipe the
    /// worker is killed and must be replaced.
    pub fn request(&mut self, request: &Value, timeout: Option<Duration>) -> Result<Value, SandboxError> {
        if self.dead {
            return Err(SandboxError::Crashed);
        }
        let mut line = request.to_string();
        line.push('\n');
        if self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()).is_err() {
            self.kill();
            return Err(SandboxError::Crashed);
        }
        let wait = timeout.map_or(self.request_timeout, |t| t.min(self.request_timeout));
        let reply = match self.lines.recv_timeout(wait) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                return Err(SandboxError::Timeout);
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.kill();
                return Err(SandboxError::Crashed);
            }
        };
        let value: Value = serde_json::from_str(&reply).map_err(|e| {
            self.kill();
            SandboxError::Protocol(format!("unparseable response line: {e}"))
        })?;
        match value.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(value),
            Some(false) => Err(SandboxError::Remote(
                value.get("error").and_then(Value::as_str).unwrap_or("unspecified error").to_string(),
            )),
            None => Err(SandboxError::Protocol("response without boolean 'ok'".into())),
        }
    }

    pub fn ping(&mut self) -> Result<(), SandboxError> {
        self.request(&json!({"op": "ping"}), None).map(|_| ())
    }

    /// Loads code unless the same digest is already loaded.
    pub fn load(&mut self, dialect: &str, code: &str, digest: &str, timeout: Option<Duration>) -> Result<(), SandboxError> {
        if self.loaded.as_deref() == Some(digest) {
            return Ok(());
        }
        self.loaded = None;
        self.request(&json!({"op": "load", "dialect": dialect, "code": code}), timeout)?;
        self.loaded = Some(digest.to_string());
        Ok(())
    }

    pub fn matrix(&mut self, instance: Value, timeout: Option<Duration>) -> Result<Vec<Vec<f64>>, SandboxError> {
        let reply = self.request(&json!({"op": "matrix", "instance": instance}), timeout)?;
        let rows = reply.get("rows").and_then(Value::as_array).ok_or_else(|| SandboxError::Protocol("missing 'rows'".into()))?;
        rows.iter().map(decode_vector).collect()
    }

    pub fn score(&mut self, state: Value, timeout: Option<Duration>) -> Result<Vec<f64>, SandboxError> {
        let reply = self.request(&json!({"op": "score", "state": state}), timeout)?;
        decode_vector(reply.get("scores").ok_or_else(|| SandboxError::Protocol("missing 'scores'".into()))?)
    }
}

impl Drop for SandboxWorker {
    fn drop(&mut self) {
        if !self.dead {
            self.kill();
        }
    }
}

/// Decodes a protocol number: a JSON number or one of the non-finite
/// spellings.
pub fn decode_number(v: &Value) -> Result<f64, SandboxError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| SandboxError::Protocol(format!("bad number {n}"))),
        Value::String(s) => match s.to_ascii_lowercase().as_str() {
            "nan" => Ok(f64::NAN),
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            other => other.parse().map_err(|_| SandboxError::Protocol(format!("bad number '{s}'"))),
        },
        Value::Null => Ok(f64::NAN),
        other => Err(SandboxError::Protocol(format!("expected number, got {other}"))),
    }
}

fn decode_vector(v: &Value) -> Result<Vec<f64>, SandboxError> {
    v.as_array()
        .ok_or_else(|| SandboxError::Protocol("expected an array".into()))?
        .iter()
        .map(decode_number)
        .collect()
}

/// Encodes a float for the wire, spelling out non-finite values.
pub fn encode_number(x: f64) -> Value {
    if x.is_nan() {
        Value::from("nan")
    } else if x == f64::INFINITY {
        Value::from("inf")
    } else if x == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        Value::from(x)
    }
}

/// A set of idle workers, grown on demand. Dead workers are dropped on
/// return, so the next checkout spawns a fresh process.
pub struct SandboxPool {
    command: WorkerCommand,
    idle: Mutex<Vec<SandboxWorker>>,
}

impl SandboxPool {
    pub fn new(command: WorkerCommand) -> Self {
        Self { command, idle: Mutex::new(Vec::new()) }
    }

    pub fn checkout(&self) -> Result<PooledWorker<'_>, SandboxError> {
        let reused = self.idle.lock().expect("sandbox pool poisoned").pop();
        let worker = match reused {
            Some(w) => w,
            None => SandboxWorker::spawn(&self.command)?,
        };
        Ok(PooledWorker { pool: self, worker: Some(worker) })
    }

    pub fn idle_count(&self) -> usize {
        self.idle.lock().expect("sandbox pool poisoned").len()
    }
}

pub struct PooledWorker<'a> {
    pool: &'a SandboxPool,
    worker: Option<SandboxWorker>,
}

impl std::ops::Deref for PooledWorker<'_> {
    type Target = SandboxWorker;
    fn deref(&self) -> &SandboxWorker {
        self.worker.as_ref().expect("worker present until drop")
    }
}

impl std::ops::DerefMut for PooledWorker<'_> {
    fn deref_mut(&mut self) -> &mut SandboxWorker {
        self.worker.as_mut().expect("worker present until drop")
    }
}

impl Drop for PooledWorker<'_> {
    fn drop(&mut self) {
        if let Some(w) = self.worker.take() {
            if !w.is_dead() {
                self.pool.idle.lock().expect("sandbox pool poisoned").push(w);
            }
        }
    }
}

/// Remaining time before `deadline`, or `None` once it has passed.
pub(crate) fn remaining(deadline: Instant) -> Option<Duration> {
    deadline.checked_duration_since(Instant::now()).filter(|d| !d.is_zero())
}
