use shakmaty::san::SanPlus;
use shakmaty::{CastlingMode, Chess, Position};
use thiserror::Error;

use super::{
    game_id, GameRecord, GameResult, MoveEvent, PlayerInfo, TimeControlDefaults, TimeControlSpec,
};
use crate::chess::to_fen;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PgnError {
    #[error("illegal move '{san}' at ply {ply} in game {game}")]
    IllegalMove { game: usize, ply: u32, san: String },
    #[error("missing required tag [{tag}] in game {game}")]
    MalformedHeader { game: usize, tag: &'static str },
    #[error("unsupported header in game {game}: {reason}")]
    Unsupported { game: usize, reason: String },
    #[error("bad tag syntax in game {game}")]
    BadTag { game: usize },
}

/// One skipped game, pointing at the offending line (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub error: PgnError,
}

#[derive(Debug, Default)]
pub struct PgnParse {
    pub games: Vec<GameRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Tag(String, String),
    BadTag,
    Comment(String),
    San(String),
    VarOpen,
    VarClose,
    Result(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    at_line_start: bool,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            at_line_start: true,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.at_line_start = true;
        } else if !b.is_ascii_whitespace() {
            self.at_line_start = false;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn take_until(&mut self, end: u8) -> String {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b == end {
                break;
            }
            self.bump();
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.bump();
        text
    }

    fn skip_line(&mut self) {
        while let Some(b) = self.bump() {
            if b == b'\n' {
                break;
            }
        }
    }

    fn tag(&mut self) -> Tok {
        let body = self.take_until(b']');
        let body = body.trim();
        let Some((name, rest)) = body.split_once(char::is_whitespace) else {
            return Tok::BadTag;
        };
        let rest = rest.trim();
        if rest.len() < 2 || !rest.starts_with('"') || !rest.ends_with('"') {
            return Tok::BadTag;
        }
        let mut value = String::new();
        let mut chars = rest[1..rest.len() - 1].chars();
        while let Some(c) = chars.next() {
            if c == '\\' {
                if let Some(n) = chars.next() {
                    value.push(n);
                }
            } else {
                value.push(c);
            }
        }
        Tok::Tag(name.to_string(), value)
    }

    fn symbol(&mut self) -> Option<Tok> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b"{}()[];".contains(&b) {
                break;
            }
            self.bump();
        }
        let word = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        if matches!(word.as_str(), "1-0" | "0-1" | "1/2-1/2" | "*") {
            return Some(Tok::Result(word));
        }
        if word.starts_with('$') {
            return None;
        }
        // strip move numbers such as "12." or "12..." glued to the move
        let trimmed = word.trim_start_matches(|c: char| c.is_ascii_digit());
        let san = if trimmed.len() < word.len() && trimmed.starts_with('.') {
            trimmed.trim_start_matches('.')
        } else {
            word.as_str()
        };
        let san = san.trim_end_matches(['!', '?']);
        if san.is_empty() {
            None
        } else {
            Some(Tok::San(san.to_string()))
        }
    }

    fn next_token(&mut self) -> Option<Token> {
        loop {
            let b = self.peek()?;
            if b == b'%' && self.at_line_start {
                self.skip_line();
                continue;
            }
            if b.is_ascii_whitespace() {
                self.bump();
                continue;
            }
            let line = self.line;
            let tok = match b {
                b'[' => {
                    self.bump();
                    self.tag()
                }
                b'{' => {
                    self.bump();
                    Tok::Comment(self.take_until(b'}'))
                }
                b';' => {
                    self.bump();
                    let start = self.pos;
                    self.skip_line();
                    Tok::Comment(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
                }
                b'(' => {
                    self.bump();
                    Tok::VarOpen
                }
                b')' => {
                    self.bump();
                    Tok::VarClose
                }
                b']' | b'}' => {
                    self.bump();
                    continue;
                }
                _ => match self.symbol() {
                    Some(t) => t,
                    None => continue,
                },
            };
            return Some(Token { tok, line });
        }
    }
}

/// Seconds from a `[%clk H:MM:SS]` annotation; fractional seconds are
/// truncated. The last clock in the comment wins.
pub(crate) fn parse_clock(comment: &str) -> Option<u32> {
    let mut found = None;
    let mut rest = comment;
    while let Some(idx) = rest.find("%clk") {
        let after = rest[idx + 4..].trim_start();
        let end = after
            .find(|c: char| !(c.is_ascii_digit() || c == ':' || c == '.'))
            .unwrap_or(after.len());
        let stamp = &after[..end];
        let whole = stamp.split('.').next().unwrap_or("");
        let parts: Vec<&str> = whole.split(':').collect();
        let mut secs: u32 = 0;
        let mut ok = !parts.is_empty() && parts.len() <= 3;
        for p in &parts {
            match p.parse::<u32>() {
                Ok(v) => secs = secs * 60 + v,
                Err(_) => ok = false,
            }
        }
        if ok {
            found = Some(secs);
        }
        rest = &after[end..];
    }
    found
}

#[derive(Default)]
struct RawGame {
    index: usize,
    first_line: usize,
    tags: Vec<(String, String)>,
    bad_tag: bool,
    moves: Vec<(String, usize, Option<u32>)>,
    depth: usize,
}

impl RawGame {
    fn tag(&self, name: &str) -> Option<&str> {
        self.tags
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    fn is_empty(&self) -> bool {
        self.tags.is_empty() && self.moves.is_empty()
    }
}

fn player(name: &str, elo: Option<&str>) -> PlayerInfo {
    PlayerInfo {
        name: name.to_string(),
        elo: elo.and_then(|e| e.trim().parse::<u32>().ok()).filter(|&e| e > 0),
    }
}

fn assemble(raw: RawGame, defaults: &TimeControlDefaults) -> Result<GameRecord, Diagnostic> {
    let game = raw.index;
    let header_err = |tag| Diagnostic {
        line: raw.first_line,
        error: PgnError::MalformedHeader { game, tag },
    };
    if raw.bad_tag {
        return Err(Diagnostic {
            line: raw.first_line,
            error: PgnError::BadTag { game },
        });
    }
    let white = raw.tag("White").ok_or_else(|| header_err("White"))?;
    let black = raw.tag("Black").ok_or_else(|| header_err("Black"))?;
    let result = raw
        .tag("Result")
        .and_then(GameResult::from_pgn)
        .ok_or_else(|| header_err("Result"))?;
    if raw.tag("FEN").is_some() || raw.tag("SetUp") == Some("1") {
        return Err(Diagnostic {
            line: raw.first_line,
            error: PgnError::Unsupported {
                game,
                reason: "games from a set-up position".into(),
            },
        });
    }
    let text = |name| raw.tag(name).unwrap_or("?").to_string();
    let (event, site, date, round) = (text("Event"), text("Site"), text("Date"), text("Round"));
    let time_control = raw
        .tag("TimeControl")
        .and_then(|t| t.parse::<TimeControlSpec>().ok())
        .or_else(|| defaults.lookup(&event).cloned());

    let mut pos = Chess::default();
    let mut moves = Vec::with_capacity(raw.moves.len());
    for (i, (san_text, line, clock)) in raw.moves.iter().enumerate() {
        let ply = i as u32 + 1;
        let illegal = || Diagnostic {
            line: *line,
            error: PgnError::IllegalMove {
                game,
                ply,
                san: san_text.clone(),
            },
        };
        let san = SanPlus::from_ascii(san_text.as_bytes()).map_err(|_| illegal())?;
        let mv = san.san.to_move(&pos).map_err(|_| illegal())?;
        let fen_before = to_fen(&pos);
        let mover = pos.turn().into();
        let uci = mv.to_uci(CastlingMode::Standard).to_string();
        pos = pos.play(mv).map_err(|_| illegal())?;
        moves.push(MoveEvent {
            ply,
            mover,
            san: san_text.clone(),
            uci,
            fen_before,
            clock_after: *clock,
        });
    }

    Ok(GameRecord {
        game_id: game_id(&event, &date, &round, white, black),
        white: player(white, raw.tag("WhiteElo")),
        black: player(black, raw.tag("BlackElo")),
        event,
        site,
        date,
        round,
        result,
        time_control,
        moves,
    })
}

pub fn parse_pgn(source: &str) -> PgnParse {
    parse_pgn_with(source, &TimeControlDefaults::default())
}

/// Parses every game in `source`. Games that fail to parse are skipped and
/// reported; the remaining games are still returned.
pub fn parse_pgn_with(source: &str, defaults: &TimeControlDefaults) -> PgnParse {
    let mut out = PgnParse::default();
    let mut lexer = Lexer::new(source);
    let mut current = RawGame {
        index: 1,
        ..RawGame::default()
    };

    let finish = |game: RawGame, out: &mut PgnParse| {
        if game.is_empty() {
            return;
        }
        match assemble(game, defaults) {
            Ok(g) => out.games.push(g),
            Err(d) => {
                log::warn!("skipping game: line {}: {}", d.line, d.error);
                out.diagnostics.push(d);
            }
        }
    };

    while let Some(Token { tok, line }) = lexer.next_token() {
        if current.is_empty() {
            current.first_line = line;
        }
        match tok {
            Tok::Tag(..) | Tok::BadTag if !current.moves.is_empty() => {
                // a new header without a termination marker starts the next game
                let next = current.index + 1;
                finish(std::mem::take(&mut current), &mut out);
                current.index = next;
                current.first_line = line;
                push_tag(&mut current, tok);
            }
            Tok::Tag(..) | Tok::BadTag => push_tag(&mut current, tok),
            Tok::VarOpen => current.depth += 1,
            Tok::VarClose => current.depth = current.depth.saturating_sub(1),
            _ if current.depth > 0 => {}
            Tok::Comment(text) => {
                if let (Some(clk), Some(last)) = (parse_clock(&text), current.moves.last_mut()) {
                    last.2 = Some(clk);
                }
            }
            Tok::San(san) => current.moves.push((san, line, None)),
            Tok::Result(_) => {
                let next = current.index + 1;
                finish(std::mem::take(&mut current), &mut out);
                current.index = next;
            }
        }
    }
    finish(current, &mut out);
    out
}

fn push_tag(game: &mut RawGame, tok: Tok) {
    match tok {
        Tok::Tag(name, value) => game.tags.push((name, value)),
        _ => game.bad_tag = true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::{play_uci, Color};

    const TWO_GAMES: &str = r#"[Event "Test Open"]
[Site "Somewhere"]
[Date "2017.05.01"]
[Round "1"]
[White "Alpha, A."]
[Black "Beta, B."]
[Result "1-0"]
[WhiteElo "2710"]
[BlackElo "2650"]
[TimeControl "40/5400+30:1800+30"]

1. e4 {[%clk 1:59:30]} e5 {[%clk 1:59:45]} 2. Nf3 {[%clk 1:58:00]} Nc6
{[%clk 1:59:10]} 3. Bb5 {[%clk 1:57:00]} 1-0

[Event "Test Open"]
[Site "Somewhere"]
[Date "2017.05.01"]
[Round "2"]
[White "Beta, B."]
[Black "Alpha, A."]
[Result "1/2-1/2"]

1. d4 {[%clk 1:30:00]} d5 {[%clk 1:29:50]} (1... Nf6 2. c4) 2. c4 $1 {[%clk 1:29:00]} e6!? {[%clk 1:29:40]} 1/2-1/2
"#;

    #[test]
    fn parses_two_games_with_clocks() {
        let parsed = parse_pgn(TWO_GAMES);
        assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
        assert_eq!(parsed.games.len(), 2);
        let g = &parsed.games[0];
        assert_eq!(g.moves.len(), 5);
        assert_eq!(g.moves[0].clock_after, Some(7170));
        assert_eq!(g.moves[1].clock_after, Some(7185));
        assert_eq!(g.moves[3].clock_after, Some(7150));
        assert_eq!(g.white.elo, Some(2710));
        assert_eq!(g.result, GameResult::WhiteWin);
        assert_eq!(g.moves[2].uci, "g1f3");
        let g2 = &parsed.games[1];
        assert_eq!(g2.moves.len(), 4);
        assert!(g2.moves.iter().all(|m| m.clock_after.is_some()));
        assert_eq!(g2.white.elo, None);
        assert_eq!(g2.time_control, None);
        assert_eq!(g2.moves[3].san, "e6");
    }

    #[test]
    fn move_chain_is_consistent() {
        let parsed = parse_pgn(TWO_GAMES);
        for g in &parsed.games {
            for (i, m) in g.moves.iter().enumerate() {
                assert_eq!(m.ply as usize, i + 1);
                let expected = if i % 2 == 0 { Color::White } else { Color::Black };
                assert_eq!(m.mover, expected);
                if let Some(next) = g.moves.get(i + 1) {
                    assert_eq!(play_uci(&m.fen_before, &m.uci).unwrap(), next.fen_before);
                }
            }
        }
    }

    #[test]
    fn illegal_move_skips_only_that_game() {
        let src = TWO_GAMES.replace("3. Bb5", "3. Bb6");
        let parsed = parse_pgn(&src);
        assert_eq!(parsed.games.len(), 1);
        assert_eq!(parsed.games[0].round, "2");
        assert_eq!(parsed.diagnostics.len(), 1);
        let d = &parsed.diagnostics[0];
        assert_eq!(
            d.error,
            PgnError::IllegalMove {
                game: 1,
                ply: 5,
                san: "Bb6".into()
            }
        );
        assert_eq!(d.line, 13);
    }

    #[test]
    fn missing_players_is_malformed() {
        let src = TWO_GAMES.replacen("[Black \"Beta, B.\"]\n", "", 1);
        let parsed = parse_pgn(&src);
        assert_eq!(parsed.games.len(), 1);
        assert!(matches!(
            parsed.diagnostics[0].error,
            PgnError::MalformedHeader { game: 1, tag: "Black" }
        ));
    }

    #[test]
    fn unfinished_games_are_kept_but_not_ratable() {
        let src = "[White \"A\"]\n[Black \"B\"]\n[Result \"*\"]\n\n1. e4 e5 *\n";
        let parsed = parse_pgn(src);
        assert_eq!(parsed.games.len(), 1);
        assert!(!parsed.games[0].is_ratable());
    }

    #[test]
    fn game_without_termination_is_split_on_next_header() {
        let src = "[White \"A\"]\n[Black \"B\"]\n[Result \"1-0\"]\n1. e4 e5\n[White \"C\"]\n[Black \"D\"]\n[Result \"0-1\"]\n1. d4 d5 0-1\n";
        let parsed = parse_pgn(src);
        assert_eq!(parsed.games.len(), 2);
        assert_eq!(parsed.games[1].white.name, "C");
    }

    #[test]
    fn event_default_time_control() {
        let mut defaults = TimeControlDefaults::default();
        defaults
            .by_event
            .insert("Test Open".into(), "5400+30".parse().unwrap());
        let parsed = parse_pgn_with(TWO_GAMES, &defaults);
        assert_eq!(
            parsed.games[1].time_control,
            Some(TimeControlSpec::new(5400, 30, vec![]))
        );
        // an explicit tag takes precedence
        assert_eq!(parsed.games[0].time_control.as_ref().unwrap().additions.len(), 1);
    }

    #[test]
    fn clock_formats() {
        assert_eq!(parse_clock("[%clk 1:59:30]"), Some(7170));
        assert_eq!(parse_clock(" [%eval 0.3] [%clk 0:00:05.7]"), Some(5));
        assert_eq!(parse_clock("[%clk 12:05]"), Some(725));
        assert_eq!(parse_clock("no clock here"), None);
    }
}
