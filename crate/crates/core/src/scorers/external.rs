use std::io::{BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::protocol::{encode_patch_frame, parse_handshake, parse_score_line, read_line};
use super::PatchScorer;
use crate::error::{Error, Result, ScorerPhase};
use crate::patch::Patch;

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
/// Grace period between closing stdin and killing the process.
const EXIT_GRACE: Duration = Duration::from_secs(1);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalScorerConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl ExternalScorerConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

/// A running scorer process. After any failure the session is unusable
/// and further calls fail immediately.
pub struct ExternalScorer {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    failed: bool,
    invocations: u64,
}

impl ExternalScorer {
    /// Starts the process and waits for its greeting.
    pub fn spawn(cfg: &ExternalScorerConfig) -> Result<Self> {
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| Error::scorer(ScorerPhase::Launch, "empty command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::scorer(ScorerPhase::Launch, format!("{program}: {e}")))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                match read_line(&mut reader) {
                    Ok(Some(line)) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut scorer = Self {
            child,
            stdin,
            lines: rx,
            timeout: Duration::from_millis(cfg.timeout_ms),
            failed: false,
            invocations: 0,
        };
        let line = scorer.recv(ScorerPhase::Handshake)?;
        parse_handshake(&line).inspect_err(|_| scorer.failed = true)?;
        Ok(scorer)
    }

    fn recv(&mut self, phase: ScorerPhase) -> Result<String> {
        let res = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::scorer(phase, e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(Error::scorer(
                ScorerPhase::Timeout,
                format!("no {phase} reply within {} ms", self.timeout.as_millis()),
            )),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::scorer(phase, "scorer closed its output"))
            }
        };
        if res.is_err() {
            self.failed = true;
        }
        res
    }

    pub fn score_patch(&mut self, patch: &Patch) -> Result<f64> {
        if self.failed {
            return Err(Error::scorer(ScorerPhase::Request, "scorer session already failed"));
        }
        let frame = encode_patch_frame(&patch.pixels);
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::scorer(ScorerPhase::Request, "scorer input closed"))?;
        if let Err(e) = stdin.write_all(&frame).and_then(|_| stdin.flush()) {
            self.failed = true;
            return Err(Error::scorer(ScorerPhase::Request, e.to_string()));
        }
        let line = self.recv(ScorerPhase::Response)?;
        self.invocations += 1;
        parse_score_line(&line).inspect_err(|_| self.failed = true)
    }

    /// Patches scored so far.
    pub fn invocations(&self) -> u64 {
        self.invocations
    }

    /// Closes stdin and waits up to one second for the process to exit,
    /// killing it otherwise. Returns whether it exited on its own.
    pub fn close(&mut self) -> bool {
        drop(self.stdin.take());
        let deadline = Instant::now() + EXIT_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return true,
                Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
                _ => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        false
    }
}

impl PatchScorer for ExternalScorer {
    fn score_patches(&mut self, patches: &[Patch]) -> Result<Vec<f64>> {
        patches.iter().map(|p| self.score_patch(p)).collect()
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if self.failed {
            // a misbehaving process gets no grace period
            drop(self.stdin.take());
            let _ = self.child.kill();
            let _ = self.child.wait();
        } else {
            self.close();
        }
    }
}
