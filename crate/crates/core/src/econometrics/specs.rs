use super::design::ModelSpec;

/// Current position, time pressure, fatigue and complexity.
pub const BASE_REGRESSORS: [&str; 5] = [
    "better_pos",
    "worse_pos",
    "remaining_time_hours",
    "num_previous_moves",
    "complexity_seconds",
];

const EXTENSIVE_OUTCOMES: [&str; 4] = ["delta_E", "delta_P", "delta_N", "delta_C"];

/// A named set of regressions reported side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinTable {
    pub name: &'static str,
    pub title: &'static str,
    pub specs: Vec<ModelSpec>,
}

const NAMES: [&str; 19] = [
    "table2",
    "table3",
    "table4",
    "no_fe",
    "isolation",
    "exclude_zero",
    "flexible_standing",
    "alt_proxies",
    "elo_2000",
    "elo_2400_2600",
    "elo_2600_2800",
    "log_modulus",
    "decomposition",
    "x_time_pressure",
    "x_player_strength",
    "x_color_favorite",
    "opponent_time",
    "x_time_spent",
    "standing_bins",
];

pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

fn outcome_label(outcome: &str) -> String {
    match outcome {
        "delta_E" => "ΔE (binary)".into(),
        "delta_P" => "ΔP (binary)".into(),
        "delta_N" => "ΔN (binary)".into(),
        "delta_C" => "ΔC (categ.)".into(),
        "delta_L" => "ΔL (log-mod.)".into(),
        "delta" => "Δ (pawn units)".into(),
        "time_spent_minutes" => "Time spent (min.)".into(),
        other => other.into(),
    }
}

fn across_outcomes(regressors: &[String]) -> Vec<ModelSpec> {
    let refs: Vec<&str> = regressors.iter().map(String::as_str).collect();
    EXTENSIVE_OUTCOMES
        .iter()
        .map(|o| ModelSpec::new(o, &refs).with_label(&outcome_label(o)))
        .collect()
}

fn base() -> Vec<String> {
    BASE_REGRESSORS.iter().map(|s| s.to_string()).collect()
}

fn with_products(extra: &str) -> Vec<String> {
    let mut r = base();
    if extra != "remaining_time_hours" {
        r.push(extra.into());
    }
    r.extend(
        BASE_REGRESSORS
            .iter()
            .filter(|b| **b != extra)
            .map(|b| format!("{b}*{extra}")),
    );
    r
}

fn both_players_in(lo: f64, hi: Option<f64>, specs: Vec<ModelSpec>) -> Vec<ModelSpec> {
    specs
        .into_iter()
        .map(|mut s| {
            for col in ["elo_player", "elo_opponent"] {
                s = s.with_subset(&format!("{col} >= {lo}"));
                if let Some(hi) = hi {
                    s = s.with_subset(&format!("{col} <= {hi}"));
                }
            }
            s
        })
        .collect()
}

/// The built-in table `name`, or `None` when unknown.
pub fn builtin(name: &str) -> Option<BuiltinTable> {
    let (title, specs) = match name {
        "table2" => ("Behavioral deviations from the restricted-engine benchmark", across_outcomes(&base())),
        "table3" => {
            let cols: [&[&str]; 5] = [
                &["better_pos", "worse_pos"],
                &["remaining_time_hours"],
                &["num_previous_moves"],
                &["complexity_seconds"],
                &BASE_REGRESSORS,
            ];
            (
                "Time spent on move as dependent variable",
                cols.iter()
                    .map(|r| ModelSpec::new("time_spent_minutes", r).with_label(&outcome_label("time_spent_minutes")))
                    .collect(),
            )
        }
        "table4" => {
            let mut r = base();
            r.push("time_spent_minutes".into());
            ("Accounting for decision times", across_outcomes(&r))
        }
        "no_fe" => {
            let mut r: Vec<String> = ["elo_player_100", "elo_diff_100", "favorite*elo_diff_100", "mover_white", "favorite"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            r.extend(base());
            (
                "Specifications without player-game fixed effects",
                across_outcomes(&r).into_iter().map(ModelSpec::without_fe).collect(),
            )
        }
        "isolation" => {
            let cols: [&[&str]; 5] = [
                &["better_pos", "worse_pos"],
                &["remaining_time_hours"],
                &["num_previous_moves"],
                &["complexity_seconds"],
                &BASE_REGRESSORS,
            ];
            (
                "Subjective factors in isolation",
                cols.iter()
                    .map(|r| ModelSpec::new("delta_C", r).with_label(&outcome_label("delta_C")))
                    .collect(),
            )
        }
        "exclude_zero" => (
            "Excluding positions evaluated at exactly 0.00",
            across_outcomes(&base())
                .into_iter()
                .map(|s| s.with_subset("standing_pawnunits != 0"))
                .collect(),
        ),
        "flexible_standing" => {
            let r: Vec<String> = [
                "C(advantage_cat, equal)",
                "remaining_time_hours",
                "num_previous_moves",
                "complexity_seconds",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            ("Flexible specification of relative standing", across_outcomes(&r))
        }
        "alt_proxies" => {
            let r: Vec<String> = [
                "better_pawnunits",
                "worse_pawnunits",
                "near_time_control",
                "game_duration_hours",
                "dist_second_best",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            ("Alternative proxies", across_outcomes(&r))
        }
        "elo_2000" => (
            "Both players rated 2000 or above",
            both_players_in(2000.0, None, across_outcomes(&base())),
        ),
        "elo_2400_2600" => (
            "Both players rated between 2400 and 2600",
            both_players_in(2400.0, Some(2600.0), across_outcomes(&base())),
        ),
        "elo_2600_2800" => (
            "Both players rated between 2600 and 2800",
            both_players_in(2600.0, Some(2800.0), across_outcomes(&base())),
        ),
        "log_modulus" => (
            "Total effect and intensive margin, log-modulus outcome",
            vec![
                ModelSpec::new("delta_L", &BASE_REGRESSORS).with_label("Total"),
                ModelSpec::new("delta_L", &BASE_REGRESSORS)
                    .with_subset("delta_E == 1")
                    .with_label("Intensive"),
            ],
        ),
        "decomposition" => (
            "Total, extensive and intensive margins",
            vec![
                ModelSpec::new("delta", &BASE_REGRESSORS).with_label("Total"),
                ModelSpec::new("delta_E", &BASE_REGRESSORS).with_label("Extensive"),
                ModelSpec::new("delta", &BASE_REGRESSORS)
                    .with_subset("delta_E == 1")
                    .with_label("Intensive"),
            ],
        ),
        "x_time_pressure" => ("Interactions with time pressure", across_outcomes(&with_products("remaining_time_hours"))),
        "x_player_strength" => {
            // the rating is constant within a player-game and absorbed
            let mut r = base();
            r.extend(BASE_REGRESSORS.iter().map(|b| format!("{b}*elo_player_100")));
            ("Interactions with player strength", across_outcomes(&r))
        }
        "x_color_favorite" => {
            let mut r = base();
            for pos in ["better_pos", "worse_pos"] {
                r.push(format!("mover_white*{pos}"));
                r.push(format!("favorite*{pos}"));
                r.push(format!("favorite*mover_white*{pos}"));
            }
            ("Color and favorite status", across_outcomes(&r))
        }
        "opponent_time" => {
            let mut r = base();
            r.push("opp_remaining_time_hours".into());
            r.push("opp_time_spent_minutes".into());
            ("Opponent's remaining time and time spent", across_outcomes(&r))
        }
        "x_time_spent" => ("Interactions with time spent on move", across_outcomes(&with_products("time_spent_minutes"))),
        "standing_bins" => (
            "Relative standing in categories, categorical outcome",
            vec![ModelSpec::new(
                "delta_C",
                &["C(advantage_cat, equal)", "remaining_time_hours", "num_previous_moves", "complexity_seconds"],
            )
            .with_label(&outcome_label("delta_C"))],
        ),
        _ => return None,
    };
    let name = NAMES.iter().find(|n| **n == name).copied()?;
    Some(BuiltinTable { name, title, specs })
}

fn factor_label(name: &str) -> String {
    if let Some(level) = name.strip_prefix("advantage_cat[").and_then(|s| s.strip_suffix(']')) {
        return match level {
            "slight_advantage" => "Slight advantage (+/=)".into(),
            "clear_advantage" => "Clear advantage (+/-)".into(),
            "decisive_advantage" => "Decisive advantage (+-)".into(),
            "slight_disadvantage" => "Slight disadvantage (=/-)".into(),
            "clear_disadvantage" => "Clear disadvantage (-/+)".into(),
            "decisive_disadvantage" => "Decisive disadvantage (-+)".into(),
            other => other.into(),
        };
    }
    match name {
        "better_pos" => "Better position (>0.5 pawnunits)",
        "worse_pos" => "Worse position (<-0.5 pawnunits)",
        "remaining_time_hours" => "Remaining time (hours)",
        "num_previous_moves" => "Num. previous moves",
        "complexity_seconds" => "Seconds to reach fixed depth",
        "complexity_nodes" => "Nodes to reach fixed depth",
        "time_spent_minutes" => "Time spent on move (min.)",
        "elo_player_100" => "Elo player (divided by 100)",
        "elo_diff_100" => "Elo difference (divided by 100)",
        "mover_white" => "White player (dummy)",
        "favorite" => "Favorite (according to Elo)",
        "better_pawnunits" => "Better position (pawn units, continuous)",
        "worse_pawnunits" => "Worse position (pawn units, continuous)",
        "near_time_control" => "Less than 10 moves before first time control",
        "game_duration_hours" => "Duration game (hours)",
        "dist_second_best" => "Distance second best move",
        "opp_remaining_time_hours" => "Remaining time (opp.)",
        "opp_time_spent_minutes" => "Time spent on move (opp.)",
        "(intercept)" => "Constant",
        other => return other.to_string(),
    }
    .to_string()
}

/// Human-readable row label for a design column; products join with `×`.
pub fn display_label(name: &str) -> String {
    if name.contains(':') {
        let parts: Vec<String> = name.split(':').map(|p| {
            let l = factor_label(p);
            // interaction rows use short names
            l.split(" (").next().unwrap_or(&l).to_string()
        }).collect();
        return parts.join(" × ");
    }
    factor_label(name)
}
