use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::{EngineConfig, EngineError, EvalResult, PvLine, Score};

/// One parsed `info` line. Fields the engine omitted stay `None`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InfoLine {
    pub depth: Option<u32>,
    pub multipv: Option<u32>,
    pub score: Option<Score>,
    /// `lowerbound` / `upperbound` scores are not final.
    pub bound: bool,
    pub nodes: Option<u64>,
    pub time_ms: Option<u64>,
    pub pv: Vec<String>,
}

pub fn parse_info_line(line: &str) -> Option<InfoLine> {
    let mut tokens = line.split_whitespace();
    if tokens.next()? != "info" {
        return None;
    }
    let mut info = InfoLine::default();
    while let Some(tok) = tokens.next() {
        match tok {
            "depth" => info.depth = tokens.next().and_then(|t| t.parse().ok()),
            "multipv" => info.multipv = tokens.next().and_then(|t| t.parse().ok()),
            "nodes" => info.nodes = tokens.next().and_then(|t| t.parse().ok()),
            "time" => info.time_ms = tokens.next().and_then(|t| t.parse().ok()),
            "score" => {
                let kind = tokens.next();
                let value: Option<i32> = tokens.next().and_then(|t| t.parse().ok());
                info.score = match (kind, value) {
                    (Some("cp"), Some(v)) => Some(Score::cp(v)),
                    // "mate 0": the side to move is already mated
                    (Some("mate"), Some(0)) => Some(Score::cp(-super::MATE_CENTIPAWNS)),
                    (Some("mate"), Some(v)) => Score::mate(v),
                    _ => None,
                };
            }
            "lowerbound" | "upperbound" => info.bound = true,
            "pv" => {
                info.pv = tokens.by_ref().map(str::to_string).collect();
            }
            // free text runs to the end of the line
            "string" => break,
            _ => {}
        }
    }
    Some(info)
}

/// A running engine process that has completed the UCI handshake.
pub struct UciSession {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    config: EngineConfig,
    engine_name: Option<String>,
}

impl UciSession {
    pub fn start(config: &EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let path = &config.binary_path;
        let mut child = Command::new(path)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EngineError::Spawn {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let mut session = UciSession {
            child,
            stdin,
            lines: rx,
            config: config.clone(),
            engine_name: None,
        };
        let timeout = config.handshake_timeout();
        let timed_out = |e| match e {
            EngineError::SearchTimeout(_) => EngineError::HandshakeTimeout {
                path: path.clone(),
                timeout,
            },
            other => other,
        };
        session.send("uci")?;
        let banner = session
            .read_until(timeout, |l| l.trim() == "uciok")
            .map_err(timed_out)?;
        session.engine_name = banner
            .iter()
            .find_map(|l| l.strip_prefix("id name "))
            .map(|s| s.trim().to_string());
        session.send(&format!("setoption name MultiPV value {}", config.multipv))?;
        session.send(&format!("setoption name Hash value {}", config.hash_mb))?;
        session.send(&format!("setoption name Threads value {}", config.threads))?;
        session.clear_hash().map_err(timed_out)?;
        Ok(session)
    }

    pub fn engine_name(&self) -> Option<&str> {
        self.engine_name.as_deref()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn send(&mut self, cmd: &str) -> Result<(), EngineError> {
        writeln!(self.stdin, "{cmd}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| EngineError::Crash(format!("write '{cmd}': {e}")))
    }

    fn read_until(
        &mut self,
        timeout: Duration,
        mut done: impl FnMut(&str) -> bool,
    ) -> Result<Vec<String>, EngineError> {
        let deadline = Instant::now() + timeout;
        let mut seen = Vec::new();
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => {
                    let finished = done(&line);
                    seen.push(line);
                    if finished {
                        return Ok(seen);
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Err(EngineError::SearchTimeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(EngineError::Crash("engine closed its output".into()))
                }
            }
        }
    }

    /// `ucinewgame` plus an explicit hash clear, then waits for `readyok`.
    pub fn clear_hash(&mut self) -> Result<(), EngineError> {
        self.send("ucinewgame")?;
        self.send("setoption name Clear Hash")?;
        self.send("isready")?;
        let timeout = self.config.handshake_timeout();
        self.read_until(timeout, |l| l.trim() == "readyok")?;
        Ok(())
    }

    /// Fixed-depth search of `fen`. The caller guarantees the position is
    /// legal and has at least one legal move.
    pub fn search(&mut self, fen: &str) -> Result<EvalResult, EngineError> {
        if self.config.deterministic {
            self.clear_hash()?;
        }
        let depth = self.config.depth_limit;
        self.send(&format!("position fen {fen}"))?;
        let started = Instant::now();
        self.send(&format!("go depth {depth}"))?;
        let output = self.read_until(self.config.search_timeout(), |l| {
            l.starts_with("bestmove")
        })?;
        let elapsed = started.elapsed().as_secs_f64().max(1e-6);

        let mut by_rank: BTreeMap<u32, (u32, PvLine)> = BTreeMap::new();
        let mut nodes = 0u64;
        for line in &output {
            let Some(info) = parse_info_line(line) else {
                continue;
            };
            if let Some(n) = info.nodes {
                nodes = nodes.max(n);
            }
            let (Some(d), Some(score), Some(first)) = (info.depth, info.score, info.pv.first())
            else {
                continue;
            };
            if info.bound {
                continue;
            }
            let rank = info.multipv.unwrap_or(1);
            by_rank.insert(
                rank,
                (
                    d,
                    PvLine {
                        uci: first.clone(),
                        score,
                    },
                ),
            );
        }
        let bestmove = output
            .last()
            .and_then(|l| l.split_whitespace().nth(1))
            .unwrap_or_default()
            .to_string();
        if by_rank.is_empty() || bestmove.is_empty() || bestmove == "(none)" {
            return Err(EngineError::Protocol(format!(
                "no principal variation for '{fen}'"
            )));
        }
        let reached = by_rank.get(&1).map(|(d, _)| *d).unwrap_or(depth);
        let mut lines: Vec<PvLine> = by_rank
            .into_values()
            .filter(|(d, _)| *d >= reached)
            .map(|(_, l)| l)
            .collect();
        lines.sort_by_key(|l| std::cmp::Reverse(l.score.mover_centipawns()));

        Ok(EvalResult {
            fen: fen.to_string(),
            engine_tag: self.config.engine_tag.clone(),
            depth: reached,
            lines,
            bestmove,
            nodes: nodes.max(1),
            elapsed_seconds: elapsed,
        })
    }
}

impl Drop for UciSession {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "quit");
        let _ = self.stdin.flush();
        let deadline = Instant::now() + Duration::from_millis(200);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
