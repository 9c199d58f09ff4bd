mod common;

use std::io::Write;
use std::os::unix::fs::PermissionsExt;
use std::sync::Arc;

use boundbench::chess::{legal_move_count, START_FEN};
use boundbench::engine::{
    complexity_of, start_pool, EngineError, EvalCache, Score, MATE_CENTIPAWNS,
};
use common::{restricted_engine, super_engine};

const ONE_LEGAL_MOVE: &str = "7k/8/8/8/8/8/7P/r6K w - - 0 1";
const FORCED_RECAPTURE: &str =
    "r1b2rk1/pp2bppp/2n2n2/2pp4/3P4/2PBPN2/PP1N1qPP/R2QK2R w KQ - 0 10";
const MIDDLEGAME: &str = "r1bq1rk1/pp2bppp/2n2n2/2pp4/3P4/2PBPN2/PP1N1PPP/R2QK2R w KQ - 0 9";

#[test]
fn pool_starts_requested_sessions() {
    let pool = start_pool(super_engine(4, 2), 2).unwrap();
    assert_eq!(pool.workers(), 2);
    assert!(pool.engine_name().unwrap_or_default().contains("Stockfish"));
}

#[test]
fn missing_binary_names_the_path() {
    let mut cfg = super_engine(4, 1);
    cfg.binary_path = "/nonexistent/engine-binary".into();
    match start_pool(cfg, 1) {
        Err(EngineError::Spawn { path, .. }) => {
            assert_eq!(path.to_str(), Some("/nonexistent/engine-binary"))
        }
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("pool started without a binary"),
    }
}

#[test]
fn silent_binary_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mute-engine");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "#!/bin/sh\nwhile read -r _; do :; done").unwrap();
    drop(f);
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    let mut cfg = super_engine(4, 1);
    cfg.binary_path = path;
    cfg.handshake_timeout_ms = 300;
    match start_pool(cfg, 1) {
        Err(EngineError::HandshakeTimeout { .. }) => {}
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("mute engine completed a handshake"),
    }
}

#[test]
fn startpos_multipv_contract() {
    let pool = start_pool(super_engine(8, 6), 1).unwrap();
    let r = pool.evaluate(START_FEN).unwrap();
    assert_eq!(r.lines.len(), 6);
    assert!(r.is_sorted());
    assert!(r.elapsed_seconds > 0.0);
    assert!(r.nodes > 0);
    assert_eq!(r.depth, 8);
}

#[test]
fn single_legal_move_yields_single_line() {
    assert_eq!(legal_move_count(ONE_LEGAL_MOVE).unwrap(), 1);
    let pool = start_pool(super_engine(8, 6), 1).unwrap();
    let r = pool.evaluate(ONE_LEGAL_MOVE).unwrap();
    assert_eq!(r.lines.len(), 1);
    assert_eq!(r.lines[0].uci, "h1g2");
}

#[test]
fn rejects_bad_positions() {
    let pool = start_pool(super_engine(4, 1), 1).unwrap();
    assert!(matches!(pool.evaluate("garbage"), Err(EngineError::IllegalFen(_))));
    let mated = "rnb1kbnr/pppp1ppp/8/4p3/6Pq/5P2/PPPPP2P/RNBQKBNR w KQkq - 1 3";
    assert!(matches!(pool.evaluate(mated), Err(EngineError::NoLegalMoves(_))));
    assert_eq!(pool.stats().engine_calls(), 0);
}

#[test]
fn mate_in_one_maps_near_the_band_edge() {
    // Qh7 is not mate here, but Qg7# is: white queen g6 supported by Kf6
    let fen = "7k/8/5KQ1/8/8/8/8/8 w - - 0 1";
    let pool = start_pool(super_engine(6, 1), 1).unwrap();
    let r = pool.evaluate(fen).unwrap();
    assert_eq!(r.lines[0].score, Score::mate(1).unwrap());
    assert_eq!(r.best_centipawns(), MATE_CENTIPAWNS - 1);
}

#[test]
fn evaluations_are_deterministic_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(EvalCache::open(dir.path()).unwrap());
    let pool = start_pool(super_engine(9, 6), 1).unwrap().with_cache(cache.clone());
    let first = pool.evaluate(MIDDLEGAME).unwrap();
    let again = pool.evaluate(MIDDLEGAME).unwrap();
    assert_eq!(first, again);
    assert_eq!(pool.stats().engine_calls(), 1);
    assert_eq!(pool.stats().cache_hits(), 1);

    // a fresh session without cache reproduces lines and nodes
    let fresh = start_pool(super_engine(9, 6), 1).unwrap().evaluate(MIDDLEGAME).unwrap();
    assert_eq!(fresh.lines, first.lines);
    assert_eq!(fresh.nodes, first.nodes);
    assert_eq!(complexity_of(&fresh).1, complexity_of(&first).1);

    // a deeper configuration gets its own entry and keeps the old one
    let deeper = start_pool(super_engine(10, 6), 1).unwrap().with_cache(cache.clone());
    deeper.evaluate(MIDDLEGAME).unwrap();
    assert_eq!(cache.len(), 2);
}

#[test]
fn forced_position_needs_fewer_nodes() {
    assert_eq!(legal_move_count(FORCED_RECAPTURE).unwrap(), 1);
    let pool = start_pool(super_engine(10, 6), 1).unwrap();
    let forced = pool.evaluate(FORCED_RECAPTURE).unwrap();
    let open = pool.evaluate(MIDDLEGAME).unwrap();
    let (f, o) = (complexity_of(&forced).1, complexity_of(&open).1);
    assert!(f < o, "forced {f} nodes, open {o} nodes");
}

#[test]
fn restricted_engine_picks_a_legal_move() {
    let pool = start_pool(restricted_engine(6), 1).unwrap();
    let r = pool.evaluate(MIDDLEGAME).unwrap();
    assert!(boundbench::chess::is_legal_uci(MIDDLEGAME, &r.bestmove));
    assert_eq!(r.lines.len(), 1);
}

#[test]
fn parallel_batch_preserves_order() {
    let pool = start_pool(super_engine(6, 2), 2).unwrap();
    let fens: Vec<String> = vec![START_FEN.into(), MIDDLEGAME.into(), ONE_LEGAL_MOVE.into()];
    let out = pool.evaluate_many(&fens);
    for (fen, r) in fens.iter().zip(&out) {
        assert_eq!(&r.as_ref().unwrap().fen, fen);
    }
}
