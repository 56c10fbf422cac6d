//! Models and extractors that live in a child process and speak one JSON
//! message per line over stdin/stdout.
//!
//! Request: `{"id":7,"op":"predict","data":[[0.5,1.0]]}`
//! Response: `{"id":7,"result":[[0.25,0.75]]}` or `{"id":7,"error":"..."}`

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::features::{ExtractorKind, FeatureExtractor};
use super::Classifier;
use crate::error::{Error, Result};
use crate::state::InputState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: String,
    pub data: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub num_classes: usize,
    pub feature_dim: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// Protocol op used for predictions.
    #[serde(default = "default_op")]
    pub op: String,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_pool() -> usize {
    1
}

fn default_op() -> String {
    "predict".into()
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::invalid("external command is empty"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn call(&mut self, req: &Request, timeout: Duration) -> Result<Vec<Vec<f64>>> {
        let mut line = serde_json::to_string(req)?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::ExternalProtocol(format!("write failed: {e}")))?;
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let text = match self.lines.recv_timeout(left) {
                Ok(t) => t,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::ExternalProtocol(format!("no response to request {} in time", req.id)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::ExternalProtocol("child process closed its output".into()))
                }
            };
            let resp: Response = serde_json::from_str(&text)
                .map_err(|e| Error::ExternalProtocol(format!("malformed response `{text}`: {e}")))?;
            // Late answers to earlier, timed-out requests are dropped.
            if resp.id < req.id {
                continue;
            }
            if resp.id != req.id {
                return Err(Error::ExternalProtocol(format!("expected id {}, got {}", req.id, resp.id)));
            }
            if let Some(err) = resp.error {
                return Err(Error::ExternalProtocol(err));
            }
            return resp
                .result
                .ok_or_else(|| Error::ExternalProtocol(format!("response {} has no result", resp.id)));
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A pool of child processes; each child handles one request at a time.
pub struct ExternalProcessModel {
    config: ExternalConfig,
    workers: Vec<Mutex<Worker>>,
    next_worker: AtomicUsize,
    next_id: AtomicU64,
}

impl std::fmt::Debug for ExternalProcessModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalProcessModel").field("config", &self.config).finish()
    }
}

impl ExternalProcessModel {
    pub fn spawn(config: ExternalConfig) -> Result<Self> {
        if config.num_classes < 2 {
            return Err(Error::invalid("a classifier needs at least 2 classes"));
        }
        let workers = (0..config.pool_size.max(1))
            .map(|_| Worker::spawn(&config.command).map(Mutex::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExternalProcessModel {
            config,
            workers,
            next_worker: AtomicUsize::new(0),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.config
    }

    pub fn call(&self, op: &str, data: Vec<Vec<Value>>) -> Result<Vec<Vec<f64>>> {
        let req = Request {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            op: op.to_string(),
            data,
        };
        let start = self.next_worker.fetch_add(1, Ordering::Relaxed);
        let n = self.workers.len();
        let guard = (0..n)
            .find_map(|k| self.workers[(start + k) % n].try_lock().ok())
            .map(Ok)
            .unwrap_or_else(|| self.workers[start % n].lock());
        let mut worker = guard.map_err(|_| Error::ExternalProtocol("worker lock poisoned".into()))?;
        worker.call(&req, Duration::from_millis(self.config.timeout_ms))
    }
}

fn number_rows(batch: &[Vec<f64>]) -> Vec<Vec<Value>> {
    batch
        .iter()
        .map(|row| row.iter().map(|v| Value::from(*v)).collect())
        .collect()
}

impl Classifier for ExternalProcessModel {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    fn predict_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.call(&self.config.op, number_rows(batch))
    }
}

/// Flattens a state to the JSON scalars sent on the wire.
pub fn state_row(state: &InputState) -> Vec<Value> {
    fn scalar(s: &InputState) -> Value {
        match s {
            InputState::Int(v) => Value::from(*v),
            InputState::Float(v) => Value::from(*v),
            InputState::Bool(v) => Value::from(*v),
            InputState::Categorical(v) | InputState::Text(v) => Value::from(v.as_str()),
            InputState::OneHot(v) => Value::from(*v),
            InputState::Vector(_) => Value::Null,
        }
    }
    state.leaves().into_iter().map(scalar).collect()
}

/// Feature extraction delegated to a child process via the `extract` op.
#[derive(Debug)]
pub struct ExternalExtractor {
    pub process: ExternalProcessModel,
    pub output_dim: usize,
}

impl FeatureExtractor for ExternalExtractor {
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn extract(&self, state: &InputState) -> Result<Vec<f64>> {
        let mut rows = self.process.call("extract", vec![state_row(state)])?;
        let row = rows
            .pop()
            .filter(|_| rows.is_empty())
            .ok_or_else(|| Error::ExternalProtocol("extract must return exactly one row".into()))?;
        if row.len() != self.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim,
                found: row.len(),
            });
        }
        Ok(row)
    }

    fn kind(&self) -> ExtractorKind {
        ExtractorKind::ExternalProcess
    }
}
