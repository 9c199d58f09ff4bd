use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::design::ModelSpec;
use super::fit::{fit_model, t_critical, FitResult};
use super::frame::{Column, Frame};
use super::specs::display_label;
use super::EconError;

const STAR_NOTE: &str = "*: p<0.1, **: p<0.05, ***: p<0.01";

/// Side-by-side text table: estimate with stars, standard error in
/// parentheses beneath, and footer counts.
pub fn render_table(title: &str, fits: &[FitResult]) -> String {
    let mut rows: Vec<&str> = Vec::new();
    for f in fits {
        for c in &f.coefficients {
            if !rows.contains(&c.name.as_str()) {
                rows.push(&c.name);
            }
        }
    }
    let labels: Vec<String> = rows.iter().map(|r| display_label(r)).collect();
    let footers = ["Player-Game Fixed Effects", "Move Observations", "Player-Game Observations"];
    let lw = labels
        .iter()
        .map(|l| l.chars().count())
        .chain(footers.iter().map(|f| f.len()))
        .max()
        .unwrap_or(0)
        + 2;
    let cw = fits
        .iter()
        .map(|f| f.label.chars().count())
        .max()
        .unwrap_or(0)
        .max(14)
        + 2;
    let line = |out: &mut String, first: &str, cells: &[String]| {
        let pad = lw - first.chars().count();
        let _ = write!(out, "{first}{}", " ".repeat(pad));
        for c in cells {
            let _ = write!(out, "{}{c}", " ".repeat(cw.saturating_sub(c.chars().count())));
        }
        out.push('\n');
    };
    let rule = "-".repeat(lw + cw * fits.len());
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{rule}");
    line(&mut out, "", &fits.iter().map(|f| f.label.clone()).collect::<Vec<_>>());
    line(&mut out, "", &(1..=fits.len()).map(|i| format!("({i})")).collect::<Vec<_>>());
    let _ = writeln!(out, "{rule}");
    for (name, label) in rows.iter().zip(&labels) {
        let est: Vec<String> = fits
            .iter()
            .map(|f| match f.coefficient(name) {
                Some(c) => format!("{:.4}{:<3}", c.estimate, c.stars()),
                None => String::new(),
            })
            .collect();
        let se: Vec<String> = fits
            .iter()
            .map(|f| match f.coefficient(name) {
                Some(c) => format!("({:.4})   ", c.std_error),
                None => String::new(),
            })
            .collect();
        line(&mut out, label, &est);
        line(&mut out, "", &se);
    }
    let _ = writeln!(out, "{rule}");
    let yes_no = |b: bool| if b { "Yes" } else { "No" }.to_string();
    line(&mut out, footers[0], &fits.iter().map(|f| yes_no(f.fixed_effects)).collect::<Vec<_>>());
    line(&mut out, footers[1], &fits.iter().map(|f| f.n_obs.to_string()).collect::<Vec<_>>());
    line(&mut out, footers[2], &fits.iter().map(|f| f.n_groups.to_string()).collect::<Vec<_>>());
    let _ = writeln!(out, "{rule}");
    let corrections: Vec<&str> = fits.iter().map(|f| f.correction.as_str()).collect();
    let _ = writeln!(
        out,
        "Note: OLS estimates. Standard errors in parentheses are cluster-robust; {}. {STAR_NOTE}.",
        if corrections.windows(2).all(|w| w[0] == w[1]) {
            corrections.first().copied().unwrap_or("").to_string()
        } else {
            corrections.join("; ")
        }
    );
    out
}

/// One delimited row per coefficient.
pub fn results_csv(table: &str, fits: &[FitResult]) -> Result<String, EconError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| EconError::Io(e.to_string());
    w.write_record([
        "table", "model", "label", "outcome", "term", "estimate", "std_error", "t_stat", "p_value", "stars",
        "n_obs", "n_groups", "n_clusters", "fixed_effects", "dof", "t_dof", "correction",
    ])
    .map_err(io)?;
    for (m, f) in fits.iter().enumerate() {
        for c in &f.coefficients {
            w.write_record([
                table.to_string(),
                (m + 1).to_string(),
                f.label.clone(),
                f.outcome.clone(),
                c.name.clone(),
                c.estimate.to_string(),
                c.std_error.to_string(),
                c.t_stat.to_string(),
                c.p_value.to_string(),
                c.stars().to_string(),
                f.n_obs.to_string(),
                f.n_groups.to_string(),
                f.n_clusters.to_string(),
                f.fixed_effects.to_string(),
                f.dof.to_string(),
                f.t_dof.to_string(),
                f.correction.clone(),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| EconError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EconError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub name: String,
    pub total: f64,
    /// `None` when the deviation indicator does not vary.
    pub extensive: Option<f64>,
    pub intensive: f64,
    /// `E[Δ | Δ≠0] · extensive + intensive · p`.
    pub predicted: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub total: FitResult,
    pub extensive: Option<FitResult>,
    pub intensive: Option<FitResult>,
    /// Share of rows with a deviation.
    pub share_deviating: f64,
    /// Mean outcome among deviating rows, 0 when none deviate.
    pub conditional_mean: f64,
    pub rows: Vec<DecompositionRow>,
    pub notes: Vec<String>,
}

/// Total, extensive and intensive fits of `spec` and the margin accounting
/// at sample means. The extensive fit replaces the outcome by `delta_E`,
/// the intensive fit keeps rows with `delta_E == 1`.
pub fn decomposition(frame: &Frame, spec: &ModelSpec) -> Result<Decomposition, EconError> {
    let total = fit_model(frame, &spec.clone().with_label("Total"))?;
    let mut ext_spec = spec.clone().with_label("Extensive");
    ext_spec.outcome = "delta_E".into();
    let int_spec = spec.clone().with_subset("delta_E == 1").with_label("Intensive");

    let used = super::design::build_design(frame, spec)?;
    let n = used.n_obs() as f64;
    let deviating: Vec<f64> = used.y.iter().copied().filter(|v| *v != 0.0).collect();
    let share_deviating = deviating.len() as f64 / n;
    let conditional_mean = if deviating.is_empty() {
        0.0
    } else {
        deviating.iter().sum::<f64>() / deviating.len() as f64
    };
    let mut notes = Vec::new();

    let ext_design = super::design::build_design(frame, &ext_spec)?;
    let extensive = if ext_design.y.iter().all(|v| *v == 1.0) {
        notes.push("extensive margin undefined: every row deviates".to_string());
        None
    } else {
        Some(fit_model(frame, &ext_spec)?)
    };
    let intensive = match fit_model(frame, &int_spec) {
        Ok(f) => Some(f),
        Err(EconError::EmptyDesign) => {
            notes.push("intensive margin set to 0: no deviating rows".to_string());
            None
        }
        Err(e) => return Err(e),
    };
    notes.push(
        "intensive estimates condition on deviating, which the regressors also shift; read them as descriptive"
            .to_string(),
    );

    let rows = total
        .coefficients
        .iter()
        .map(|c| {
            let ext = extensive.as_ref().map(|f| f.coefficient(&c.name).map_or(0.0, |x| x.estimate));
            let int = intensive
                .as_ref()
                .and_then(|f| f.coefficient(&c.name))
                .map_or(0.0, |x| x.estimate);
            let predicted = conditional_mean * ext.unwrap_or(0.0) + int * share_deviating;
            DecompositionRow {
                name: c.name.clone(),
                total: c.estimate,
                extensive: ext,
                intensive: int,
                predicted,
                gap: c.estimate - predicted,
            }
        })
        .collect();
    Ok(Decomposition {
        total,
        extensive,
        intensive,
        share_deviating,
        conditional_mean,
        rows,
        notes,
    })
}

pub fn render_decomposition(d: &Decomposition) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Margin decomposition: total = E[D|D!=0] * extensive + intensive * p, with p = {:.4}, E[D|D!=0] = {:.4}",
        d.share_deviating, d.conditional_mean
    );
    let _ = writeln!(
        out,
        "{:<44}{:>12}{:>12}{:>12}{:>12}{:>12}",
        "", "total", "extensive", "intensive", "predicted", "gap"
    );
    for r in &d.rows {
        let ext = r.extensive.map_or("undefined".to_string(), |e| format!("{e:.4}"));
        let _ = writeln!(
            out,
            "{:<44}{:>12.4}{:>12}{:>12.4}{:>12.4}{:>12.4}",
            display_label(&r.name),
            r.total,
            ext,
            r.intensive,
            r.predicted,
            r.gap
        );
    }
    for n in &d.notes {
        let _ = writeln!(out, "Note: {n}.");
    }
    out
}

/// Equal-width bins of `variable` entered as indicators against the
/// reference bin `reference`, alongside `controls`. With `range`, the bins
/// span that interval and values outside it fall into the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSpec {
    pub outcome: String,
    pub variable: String,
    pub n_bins: usize,
    pub reference: usize,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default = "yes")]
    pub fixed_effects: bool,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub n_obs: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedEffects {
    pub spec: BinnedSpec,
    pub bins: Vec<BinRow>,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

impl BinnedEffects {
    /// Plot rows: bin center, estimate and 95% interval bounds.
    pub fn plot_csv(&self) -> String {
        let mut s = String::from("bin,lower,upper,center,n_obs,estimate,ci_low,ci_high,reference\n");
        for b in &self.bins {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                b.label, b.lower, b.upper, b.center, b.n_obs, b.estimate, b.ci_low, b.ci_high, b.reference
            );
        }
        s
    }
}

const BIN_COLUMN: &str = "__bin";

pub fn binned_effects(frame: &Frame, spec: &BinnedSpec) -> Result<BinnedEffects, EconError> {
    if spec.n_bins < 2 {
        return Err(EconError::InvalidSpec("binned effects need at least 2 bins".into()));
    }
    if spec.reference >= spec.n_bins {
        return Err(EconError::InvalidSpec(format!(
            "reference bin {} outside 0..{}",
            spec.reference, spec.n_bins
        )));
    }
    let values = frame.numeric(&spec.variable)?;
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(EconError::EmptyDesign);
    }
    let (lo, hi) = match spec.range {
        Some([a, b]) if a < b => (a, b),
        Some(r) => return Err(EconError::InvalidSpec(format!("empty bin range {r:?}"))),
        None => (
            present.iter().copied().fold(f64::INFINITY, f64::min),
            present.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
    };
    if lo == hi {
        return Err(EconError::InvalidSpec(format!("'{}' does not vary", spec.variable)));
    }
    let width = (hi - lo) / spec.n_bins as f64;
    let raw_bin = |x: f64| (((x - lo) / width).floor() as usize).min(spec.n_bins - 1);
    let mut counts = vec![0usize; spec.n_bins];
    for &x in &present {
        counts[raw_bin(x)] += 1;
    }

    // merge each empty bin into the next non-empty one (the last into the previous)
    let mut warnings = Vec::new();
    let mut target: Vec<usize> = (0..spec.n_bins).collect();
    for b in 0..spec.n_bins {
        if counts[b] == 0 {
            let next = (b + 1..spec.n_bins).find(|&j| counts[j] > 0);
            let prev = (0..b).rev().find(|&j| counts[j] > 0);
            target[b] = next.or(prev).expect("some bin is occupied");
            warnings.push(format!("bin {b} is empty and merged into bin {}", target[b]));
        }
    }
    let mut merged: Vec<usize> = target.clone();
    merged.sort_unstable();
    merged.dedup();
    let label_of = |m: usize| format!("bin{m:02}");
    let reference = target[spec.reference];

    let bin_col: Vec<Option<String>> = values
        .iter()
        .map(|v| v.map(|x| label_of(target[raw_bin(x)])))
        .collect();
    let mut augmented = frame.clone();
    augmented.push(BIN_COLUMN, Column::Text(bin_col))?;
    let mut regressors = vec![format!("C({BIN_COLUMN}, {})", label_of(reference))];
    regressors.extend(spec.controls.iter().cloned());
    let refs: Vec<&str> = regressors.iter().map(String::as_str).collect();
    let mut model = ModelSpec::new(&spec.outcome, &refs).with_label(&spec.outcome);
    if !spec.fixed_effects {
        model = model.without_fe();
    }
    let fit = fit_model(&augmented, &model)?;
    let crit = t_critical(0.05, fit.t_dof);

    let bins = merged
        .iter()
        .map(|&m| {
            let members: Vec<usize> = (0..spec.n_bins).filter(|&b| target[b] == m).collect();
            let lower = lo + width * *members.first().unwrap() as f64;
            let upper = lo + width * (*members.last().unwrap() + 1) as f64;
            let n_obs = members.iter().map(|&b| counts[b]).sum();
            let label = label_of(m);
            let (estimate, std_error) = fit
                .coefficient(&format!("{BIN_COLUMN}[{label}]"))
                .map_or((0.0, 0.0), |c| (c.estimate, c.std_error));
            BinRow {
                label,
                lower,
                upper: if m == *merged.last().unwrap() { hi } else { upper },
                center: (lower + upper) / 2.0,
                n_obs,
                estimate,
                std_error,
                ci_low: estimate - crit * std_error,
                ci_high: estimate + crit * std_error,
                reference: m == reference,
            }
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BinnedEffects {
        spec: spec.clone(),
        bins,
        fit,
        warnings,
    })
}

pub fn render_binned(b: &BinnedEffects) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Binned effects of {} on {} ({} bins, reference {}), 95% intervals from t({})",
        b.spec.variable,
        b.spec.outcome,
        b.spec.n_bins,
        b.bins.iter().find(|r| r.reference).map_or("", |r| r.label.as_str()),
        b.fit.t_dof
    );
    let _ = writeln!(out, "{:<8}{:>22}{:>8}{:>12}{:>24}", "bin", "range", "n", "estimate", "95% CI");
    for r in &b.bins {
        let _ = writeln!(
            out,
            "{:<8}{:>22}{:>8}{:>12.4}{:>24}",
            r.label,
            format!("[{:.3}, {:.3}]", r.lower, r.upper),
            r.n_obs,
            r.estimate,
            format!("[{:.4}, {:.4}]", r.ci_low, r.ci_high)
        );
    }
    for w in &b.warnings {
        let _ = writeln!(out, "Warning: {w}.");
    }
    out
}
