//! Regenerates `data/desk_corpus.pgn`: ten engine self-play games with
//! clock annotations, adjudicated after 32 full moves.
//!
//! `cargo run --example make_desk_corpus [ENGINE] [OUT]`

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use boundbench::chess::{play_uci, side_to_move, terminal_state, uci_to_san, Color, Terminal, START_FEN};
use boundbench::engine::{start_pool, EngineConfig, EngineRole};
use boundbench::pgn::{game_id, write_pgn, GameRecord, GameResult, MoveEvent, PlayerInfo, TimeAddition, TimeControlSpec};

const GAMES: u64 = 10;
const FULL_MOVES: u32 = 32;
const PLAYERS: [(&str, u32); 6] = [
    ("Arden, K.", 2712),
    ("Brisco, L.", 2655),
    ("Castell, M.", 2598),
    ("Dunmore, P.", 2631),
    ("Everly, S.", 2570),
    ("Fairholt, T.", 2684),
];

fn main() -> anyhow::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let mut args = std::env::args().skip(1);
    let engine = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("../../scripts/stockfish-wasm"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("data/desk_corpus.pgn"));
    let pool = start_pool(EngineConfig::new(engine, EngineRole::Super, 5, 4, "corpus"), 1)?;
    let tc = TimeControlSpec::new(5400, 30, vec![TimeAddition { at_move: 40, added_seconds: 1800 }]);

    let mut text = String::new();
    for round in 1..=GAMES {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + round);
        let w = PLAYERS[(round as usize * 2) % PLAYERS.len()];
        let b = PLAYERS[(round as usize * 2 + 1 + round as usize / 3) % PLAYERS.len()];
        let think = Exp::new(1.0 / 150.0)?;
        let mut fen = START_FEN.to_string();
        let mut clocks = [5400f64, 5400f64];
        let mut moves = Vec::new();
        let mut result = None;
        for ply in 1..=FULL_MOVES * 2 {
            let mover = side_to_move(&fen)?;
            let eval = pool.evaluate(&fen)?;
            let best = eval.lines[0].score.mover_centipawns();
            let near: Vec<&str> = eval
                .lines
                .iter()
                .filter(|l| best - l.score.mover_centipawns() <= 80)
                .map(|l| l.uci.as_str())
                .collect();
            let uci = if rng.random_bool(0.12) {
                eval.lines[rng.random_range(0..eval.lines.len())].uci.clone()
            } else if rng.random_bool(0.6) {
                eval.lines[0].uci.clone()
            } else {
                near[rng.random_range(0..near.len())].to_string()
            };
            let slot = usize::from(mover == Color::Black);
            let full = ply.div_ceil(2);
            let spent: f64 = if full <= 10 { rng.random_range(5.0..60.0) } else { think.sample(&mut rng) + 20.0 };
            clocks[slot] = (clocks[slot] - spent.round() + 30.0 + f64::from(tc.addition_at(full))).max(1.0);
            moves.push(MoveEvent {
                ply,
                mover,
                san: uci_to_san(&fen, &uci)?,
                uci: uci.clone(),
                fen_before: fen.clone(),
                clock_after: Some(clocks[slot] as u32),
            });
            fen = play_uci(&fen, &uci)?;
            match terminal_state(&fen)? {
                Some(Terminal::Checkmate) => {
                    result = Some(if mover == Color::White { GameResult::WhiteWin } else { GameResult::BlackWin });
                    break;
                }
                Some(_) => {
                    result = Some(GameResult::Draw);
                    break;
                }
                None => {}
            }
        }
        let result = match result {
            Some(r) => r,
            None => {
                let cp = pool.evaluate(&fen)?.lines[0].score.mover_centipawns() * side_to_move(&fen)?.sign();
                match cp {
                    c if c > 250 => GameResult::WhiteWin,
                    c if c < -250 => GameResult::BlackWin,
                    _ => GameResult::Draw,
                }
            }
        };
        let (event, date, round_s) = ("Desk Invitational", format!("2024.03.{:02}", round + 4), round.to_string());
        let game = GameRecord {
            game_id: game_id(event, &date, &round_s, w.0, b.0),
            event: event.into(),
            site: "Desk".into(),
            date,
            round: round_s,
            white: PlayerInfo { name: w.0.into(), elo: Some(w.1) },
            black: PlayerInfo { name: b.0.into(), elo: Some(b.1) },
            result,
            time_control: Some(tc.clone()),
            moves,
        };
        text.push_str(&write_pgn(&game));
        text.push('\n');
        eprintln!("round {round}: {} plies, {}", game.moves.len(), result.as_pgn());
    }
    std::fs::create_dir_all(out.parent().expect("output directory"))?;
    std::fs::write(&out, text)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}
