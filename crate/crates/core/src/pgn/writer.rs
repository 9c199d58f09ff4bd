use std::fmt::Write as _;

use super::GameRecord;

/// `H:MM:SS` as used by `%clk` comments.
pub fn format_clock(seconds: u32) -> String {
    format!("{}:{:02}:{:02}", seconds / 3600, (seconds / 60) % 60, seconds % 60)
}

fn escape(value: &str) -> String {
    value.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Serializes a record back to PGN with `%clk` comments after each move.
pub fn write_pgn(game: &GameRecord) -> String {
    let mut out = String::new();
    let mut tag = |name: &str, value: &str| {
        let _ = writeln!(out, "[{name} \"{}\"]", escape(value));
    };
    tag("Event", &game.event);
    tag("Site", &game.site);
    tag("Date", &game.date);
    tag("Round", &game.round);
    tag("White", &game.white.name);
    tag("Black", &game.black.name);
    tag("Result", game.result.as_pgn());
    if let Some(elo) = game.white.elo {
        tag("WhiteElo", &elo.to_string());
    }
    if let Some(elo) = game.black.elo {
        tag("BlackElo", &elo.to_string());
    }
    if let Some(tc) = &game.time_control {
        tag("TimeControl", &tc.to_string());
    }
    out.push('\n');

    let mut line = String::new();
    for mv in &game.moves {
        let mut token = String::new();
        if mv.ply % 2 == 1 {
            let _ = write!(token, "{}. ", mv.full_move());
        }
        token.push_str(&mv.san);
        if let Some(clk) = mv.clock_after {
            let _ = write!(token, " {{[%clk {}]}}", format_clock(clk));
        }
        if !line.is_empty() && line.len() + token.len() + 1 > 79 {
            out.push_str(&line);
            out.push('\n');
            line.clear();
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(&token);
    }
    if !line.is_empty() {
        line.push(' ');
    }
    line.push_str(game.result.as_pgn());
    out.push_str(&line);
    out.push_str("\n\n");
    out
}
