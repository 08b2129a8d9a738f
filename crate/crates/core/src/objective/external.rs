//! Pool of long-lived evaluator processes.
//!
//! Protocol, one line each way: the request is `EVAL <smiles>`, the reply is
//! `OK <float>` or `ERR <message>`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use super::{Objective, ObjectiveError};
use crate::molgraph::{canonical_key, MolecularGraph};

/// Directory exported to children as `TMPDIR` when set.
pub const TMPDIR_ENV: &str = "MOLBBO_TMPDIR";

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Pool {
    idle: Vec<Worker>,
    live: usize,
}

pub struct ExternalProcess {
    command: Vec<String>,
    timeout: Duration,
    size: usize,
    pool: Mutex<Pool>,
    freed: Condvar,
}

impl ExternalProcess {
    pub fn new(command: Vec<String>, timeout: Duration, size: usize) -> Self {
        ExternalProcess {
            command,
            timeout,
            size: size.max(1),
            pool: Mutex::new(Pool {
                idle: Vec::new(),
                live: 0,
            }),
            freed: Condvar::new(),
        }
    }

    fn spawn(&self) -> Result<Worker, ObjectiveError> {
        let (prog, args) = self
            .command
            .split_first()
            .ok_or_else(|| ObjectiveError::Unavailable("empty command".into()))?;
        let mut cmd = Command::new(prog);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = std::env::var_os(TMPDIR_ENV) {
            cmd.env("TMPDIR", dir);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| ObjectiveError::Unavailable(format!("cannot start {prog}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
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

    fn checkout(&self) -> Result<Worker, ObjectiveError> {
        let mut pool = self.pool.lock().unwrap();
        loop {
            if let Some(w) = pool.idle.pop() {
                return Ok(w);
            }
            if pool.live < self.size {
                pool.live += 1;
                drop(pool);
                return self.spawn().inspect_err(|_| {
                    self.pool.lock().unwrap().live -= 1;
                    self.freed.notify_one();
                });
            }
            pool = self.freed.wait(pool).unwrap();
        }
    }

    fn checkin(&self, worker: Option<Worker>) {
        let mut pool = self.pool.lock().unwrap();
        match worker {
            Some(w) => pool.idle.push(w),
            None => pool.live -= 1,
        }
        self.freed.notify_one();
    }

    fn request(&self, worker: &mut Worker, smiles: &str) -> Result<String, ObjectiveError> {
        writeln!(worker.stdin, "EVAL {smiles}")
            .and_then(|_| worker.stdin.flush())
            .map_err(|_| ObjectiveError::Crashed)?;
        match worker.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Err(ObjectiveError::Crashed),
            Err(RecvTimeoutError::Timeout) => Err(ObjectiveError::Timeout(self.timeout)),
        }
    }
}

fn parse_reply(line: &str) -> Result<f64, ObjectiveError> {
    let line = line.trim_end_matches(['\r', '\n']);
    if let Some(rest) = line.strip_prefix("OK ") {
        return match rest.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ObjectiveError::Malformed(line.to_string())),
        };
    }
    if line == "ERR" {
        return Err(ObjectiveError::Failed(String::new()));
    }
    if let Some(rest) = line.strip_prefix("ERR ") {
        return Err(ObjectiveError::Failed(rest.to_string()));
    }
    Err(ObjectiveError::Malformed(line.to_string()))
}

impl Objective for ExternalProcess {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        let key = canonical_key(g);
        let mut worker = self.checkout()?;
        match self.request(&mut worker, key.as_str()) {
            Ok(line) => {
                self.checkin(Some(worker));
                parse_reply(&line)
            }
            Err(e) => {
                // The process state is unknown after a timeout or crash.
                worker.kill();
                self.checkin(None);
                Err(e)
            }
        }
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        let pool = self.pool.get_mut().unwrap();
        for mut w in pool.idle.drain(..) {
            // Closing stdin lets a well-behaved evaluator exit on its own.
            let _ = w.stdin.flush();
            drop(w.stdin);
            let _ = w.child.kill();
            let _ = w.child.wait();
        }
    }
}
