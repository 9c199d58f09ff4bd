use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;

use super::{CacheKey, EngineConfig, EngineError, EvalCache, EvalResult, UciSession};
use crate::chess::{legal_move_count, parse_position};

#[derive(Debug, Default)]
pub struct PoolStats {
    pub engine_calls: AtomicU64,
    pub cache_hits: AtomicU64,
    pub restarts: AtomicU64,
}

impl PoolStats {
    pub fn engine_calls(&self) -> u64 {
        self.engine_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }
}

/// A set of engine sessions sharing one configuration. Each session serves
/// one request at a time; idle slots whose engine died are restarted on the
/// next checkout.
pub struct EnginePool {
    config: EngineConfig,
    slots: Mutex<Vec<Option<UciSession>>>,
    available: Condvar,
    workers: usize,
    cache: Option<Arc<EvalCache>>,
    stats: PoolStats,
    engine_name: Option<String>,
}

/// Starts `workers` sessions, each through the full handshake.
pub fn start_pool(config: EngineConfig, workers: usize) -> Result<EnginePool, EngineError> {
    config.validate()?;
    let workers = workers.max(1);
    let started: Vec<Result<UciSession, EngineError>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| s.spawn(|| UciSession::start(&config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("session start thread"))
            .collect()
    });
    let mut sessions = Vec::with_capacity(workers);
    for s in started {
        sessions.push(Some(s?));
    }
    let engine_name = sessions
        .first()
        .and_then(|s| s.as_ref())
        .and_then(|s| s.engine_name().map(str::to_string));
    Ok(EnginePool {
        config,
        slots: Mutex::new(sessions),
        available: Condvar::new(),
        workers,
        cache: None,
        stats: PoolStats::default(),
        engine_name,
    })
}

impl EnginePool {
    pub fn with_cache(mut self, cache: Arc<EvalCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn stats(&self) -> &PoolStats {
        &self.stats
    }

    /// `id name` reported by the engine during the handshake.
    pub fn engine_name(&self) -> Option<&str> {
        self.engine_name.as_deref()
    }

    pub fn cache_key(&self, fen: &str) -> CacheKey {
        CacheKey::new(
            fen,
            &self.config.engine_tag,
            self.config.depth_limit,
            self.config.multipv,
        )
    }

    fn checkout(&self) -> Option<UciSession> {
        let mut slots = self.slots.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            if let Some(slot) = slots.pop() {
                return slot;
            }
            slots = self
                .available
                .wait(slots)
                .unwrap_or_else(|p| p.into_inner());
        }
    }

    fn checkin(&self, session: Option<UciSession>) {
        let mut slots = self.slots.lock().unwrap_or_else(|p| p.into_inner());
        slots.push(session);
        self.available.notify_one();
    }

    fn run_search(&self, fen: &str) -> Result<EvalResult, EngineError> {
        let slot = self.checkout();
        let mut session = match slot {
            Some(s) => s,
            None => match UciSession::start(&self.config) {
                Ok(s) => s,
                Err(e) => {
                    self.checkin(None);
                    return Err(e);
                }
            },
        };
        self.stats.engine_calls.fetch_add(1, Ordering::Relaxed);
        match session.search(fen) {
            Ok(r) => {
                self.checkin(Some(session));
                Ok(r)
            }
            Err(EngineError::Crash(reason)) => {
                // restart once and retry
                drop(session);
                self.stats.restarts.fetch_add(1, Ordering::Relaxed);
                log::warn!("engine crashed on '{fen}' ({reason}); restarting");
                let retried = UciSession::start(&self.config).and_then(|mut s| {
                    let r = s.search(fen);
                    Ok((s, r))
                });
                match retried {
                    Ok((s, r)) => {
                        let alive = !matches!(r, Err(EngineError::Crash(_)));
                        self.checkin(alive.then_some(s));
                        r
                    }
                    Err(e) => {
                        self.checkin(None);
                        Err(e)
                    }
                }
            }
            Err(e) => {
                // the session may still be mid-search; discard it
                self.checkin(None);
                Err(e)
            }
        }
    }

    /// Fixed-depth analysis of `fen`, served from the cache when possible.
    pub fn evaluate(&self, fen: &str) -> Result<EvalResult, EngineError> {
        parse_position(fen)?;
        if legal_move_count(fen)? == 0 {
            return Err(EngineError::NoLegalMoves(fen.to_string()));
        }
        let key = self.cache_key(fen);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key, fen) {
                self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        let result = self.run_search(fen)?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &result)?;
        }
        Ok(result)
    }

    /// Evaluates positions across all sessions. Output order follows input
    /// order regardless of scheduling.
    pub fn evaluate_many(&self, fens: &[String]) -> Vec<Result<EvalResult, EngineError>> {
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<EvalResult, EngineError>>>> =
            Mutex::new((0..fens.len()).map(|_| None).collect());
        thread::scope(|s| {
            for _ in 0..self.workers.min(fens.len().max(1)) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(fen) = fens.get(i) else { break };
                    let r = self.evaluate(fen);
                    results.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
                });
            }
        });
        results
            .into_inner()
            .unwrap_or_else(|p| p.into_inner())
            .into_iter()
            .map(|r| r.expect("every index evaluated"))
            .collect()
    }
}
