use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::frame::{Column, Frame};
use super::EconError;

/// Name of the constant column added to specifications without fixed
/// effects.
pub const INTERCEPT: &str = "(intercept)";

fn default_fe() -> Vec<String> {
    vec!["player_id".into(), "game_id".into()]
}
fn default_cluster() -> String {
    "game_id".into()
}
fn default_true() -> bool {
    true
}

/// A regression: outcome, regressor terms, absorbed groups and clusters.
///
/// Terms are column names, products written `a*b` (also `a:b` or `a×b`),
/// and categorical expansions `C(col, base)` with one indicator per level
/// other than `base`. `subset` holds row conditions such as `delta_E == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Column heading in reports; defaults to the outcome.
    #[serde(default)]
    pub label: String,
    pub outcome: String,
    pub regressors: Vec<String>,
    /// Columns whose value combination defines a fixed-effect group.
    #[serde(default = "default_fe")]
    pub fe_group: Vec<String>,
    /// Absorb `fe_group` effects; otherwise an intercept is estimated.
    #[serde(default = "default_true")]
    pub fixed_effects: bool,
    #[serde(default = "default_cluster")]
    pub cluster: String,
    #[serde(default)]
    pub subset: Vec<String>,
}

impl ModelSpec {
    pub fn new(outcome: &str, regressors: &[&str]) -> Self {
        Self {
            label: String::new(),
            outcome: outcome.to_string(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            fe_group: default_fe(),
            fixed_effects: true,
            cluster: default_cluster(),
            subset: Vec::new(),
        }
    }

    pub fn without_fe(mut self) -> Self {
        self.fixed_effects = false;
        self
    }

    pub fn with_subset(mut self, condition: &str) -> Self {
        self.subset.push(condition.to_string());
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn heading(&self) -> &str {
        if self.label.is_empty() {
            &self.outcome
        } else {
            &self.label
        }
    }

    pub fn validate(&self) -> Result<Vec<Term>, EconError> {
        let terms = self
            .regressors
            .iter()
            .map(|t| Term::parse(t))
            .collect::<Result<Vec<_>, _>>()?;
        for t in &terms {
            if t.factors.len() == 1 && t.factors[0].column() == self.outcome {
                return Err(EconError::InvalidSpec(format!(
                    "outcome '{}' appears among the regressors",
                    self.outcome
                )));
            }
        }
        if self.cluster.is_empty() {
            return Err(EconError::InvalidSpec("cluster column is empty".into()));
        }
        Ok(terms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Column(String),
    Categorical { column: String, base: String },
}

impl Factor {
    pub fn column(&self) -> &str {
        match self {
            Factor::Column(c) => c,
            Factor::Categorical { column, .. } => column,
        }
    }
}

/// A product of factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn parse(text: &str) -> Result<Term, EconError> {
        let bad = || EconError::InvalidSpec(format!("cannot parse term '{text}'"));
        let mut factors = Vec::new();
        let mut depth = 0usize;
        let mut start = 0usize;
        let mut pieces = Vec::new();
        for (i, ch) in text.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.checked_sub(1).ok_or_else(bad)?,
                '*' | ':' | '×' if depth == 0 => {
                    pieces.push(&text[start..i]);
                    start = i + ch.len_utf8();
                }
                _ => {}
            }
        }
        if depth != 0 {
            return Err(bad());
        }
        pieces.push(&text[start..]);
        for piece in pieces {
            let p = piece.trim();
            if p.is_empty() {
                return Err(bad());
            }
            if let Some(inner) = p.strip_prefix("C(").and_then(|s| s.strip_suffix(')')) {
                let mut parts = inner.splitn(2, ',').map(str::trim);
                let column = parts.next().filter(|s| !s.is_empty()).ok_or_else(bad)?;
                let base = parts.next().filter(|s| !s.is_empty()).ok_or_else(bad)?;
                factors.push(Factor::Categorical {
                    column: column.to_string(),
                    base: base.to_string(),
                });
            } else if p.chars().all(|c| c.is_alphanumeric() || c == '_') {
                factors.push(Factor::Column(p.to_string()));
            } else {
                return Err(bad());
            }
        }
        Ok(Term { factors })
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(Factor::column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// A row condition `column op value` on a numeric column.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub column: String,
    op: Op,
    pub value: f64,
}

impl Condition {
    pub fn parse(text: &str) -> Result<Condition, EconError> {
        let bad = || EconError::InvalidSpec(format!("cannot parse condition '{text}'"));
        for (sym, op) in [
            ("==", Op::Eq),
            ("!=", Op::Ne),
            ("<=", Op::Le),
            (">=", Op::Ge),
            ("<", Op::Lt),
            (">", Op::Gt),
        ] {
            if let Some((lhs, rhs)) = text.split_once(sym) {
                let value = rhs.trim().parse().map_err(|_| bad())?;
                let column = lhs.trim();
                if column.is_empty() {
                    return Err(bad());
                }
                return Ok(Condition {
                    column: column.to_string(),
                    op,
                    value,
                });
            }
        }
        Err(bad())
    }

    pub fn holds(&self, x: f64) -> bool {
        match self.op {
            Op::Eq => x == self.value,
            Op::Ne => x != self.value,
            Op::Lt => x < self.value,
            Op::Le => x <= self.value,
            Op::Gt => x > self.value,
            Op::Ge => x >= self.value,
        }
    }
}

/// A regression design in canonical row order: sorted by cluster, group,
/// outcome and regressor values, so that any permutation of the input rows
/// yields the same design.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub groups: Vec<usize>,
    pub n_groups: usize,
    pub clusters: Vec<usize>,
    pub n_clusters: usize,
    pub has_intercept: bool,
    /// Rows removed for missing values in referenced columns.
    pub dropped_missing: usize,
    /// Rows removed by the subset conditions.
    pub dropped_subset: usize,
    /// Frame row of each design row.
    pub source_rows: Vec<usize>,
}

impl Design {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }
}

fn text_key(frame: &Frame, cols: &[String], row: usize) -> Result<String, EconError> {
    let mut key = String::new();
    for (i, c) in cols.iter().enumerate() {
        if i > 0 {
            key.push('\u{1f}');
        }
        key.push_str(&frame.column(c)?.text_at(row).unwrap_or_default());
    }
    Ok(key)
}

fn index_labels(labels: &[String]) -> (Vec<usize>, usize) {
    let distinct: BTreeMap<&String, usize> = labels
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| distinct[l]).collect(), distinct.len())
}

fn expand_factor(
    frame: &Frame,
    factor: &Factor,
    rows: &[usize],
) -> Result<Vec<(String, Vec<f64>)>, EconError> {
    match factor {
        Factor::Column(name) => match frame.column(name)? {
            Column::Numeric(v) => Ok(vec![(
                name.clone(),
                rows.iter().map(|&i| v[i].expect("missing rows dropped")).collect(),
            )]),
            Column::Text(_) => Err(EconError::InvalidSpec(format!(
                "column '{name}' is categorical; write C({name}, base)"
            ))),
        },
        Factor::Categorical { column, base } => {
            let col = frame.column(column)?;
            let values: Vec<String> = rows
                .iter()
                .map(|&i| col.text_at(i).expect("missing rows dropped"))
                .collect();
            let levels: BTreeSet<&String> = values.iter().collect();
            if !levels.iter().any(|l| *l == base) {
                return Err(EconError::InvalidSpec(format!(
                    "base level '{base}' of '{column}' not observed"
                )));
            }
            Ok(levels
                .into_iter()
                .filter(|l| *l != base)
                .map(|l| {
                    (
                        format!("{column}[{l}]"),
                        values.iter().map(|v| f64::from(u8::from(v == l))).collect(),
                    )
                })
                .collect())
        }
    }
}

fn expand_term(
    frame: &Frame,
    term: &Term,
    rows: &[usize],
) -> Result<Vec<(String, Vec<f64>)>, EconError> {
    let mut acc: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; rows.len()])];
    for factor in &term.factors {
        let parts = expand_factor(frame, factor, rows)?;
        let mut next = Vec::with_capacity(acc.len() * parts.len());
        for (an, av) in &acc {
            for (pn, pv) in &parts {
                let name = if an.is_empty() {
                    pn.clone()
                } else {
                    format!("{an}:{pn}")
                };
                next.push((name, av.iter().zip(pv).map(|(a, b)| a * b).collect()));
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Selects rows, expands terms and indexes groups and clusters.
pub fn build_design(frame: &Frame, spec: &ModelSpec) -> Result<Design, EconError> {
    let terms = spec.validate()?;
    let conditions = spec
        .subset
        .iter()
        .map(|c| Condition::parse(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut referenced: Vec<&str> = vec![spec.outcome.as_str(), spec.cluster.as_str()];
    referenced.extend(spec.fe_group.iter().map(String::as_str));
    for t in &terms {
        referenced.extend(t.columns());
    }
    for c in &referenced {
        frame.column(c)?;
    }
    let outcome = frame.numeric(&spec.outcome)?;

    let mut rows = Vec::new();
    let (mut dropped_subset, mut dropped_missing) = (0, 0);
    'rows: for i in 0..frame.n_rows() {
        for cond in &conditions {
            match frame.numeric(&cond.column)?[i] {
                Some(x) if cond.holds(x) => {}
                _ => {
                    dropped_subset += 1;
                    continue 'rows;
                }
            }
        }
        for c in &referenced {
            if frame.is_missing(c, i)? {
                dropped_missing += 1;
                continue 'rows;
            }
        }
        rows.push(i);
    }
    if rows.is_empty() {
        return Err(EconError::EmptyDesign);
    }

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for t in &terms {
        columns.extend(expand_term(frame, t, &rows)?);
    }
    if !spec.fixed_effects {
        columns.push((INTERCEPT.to_string(), vec![1.0; rows.len()]));
    }
    let mut seen = BTreeSet::new();
    for (name, _) in &columns {
        if !seen.insert(name) {
            return Err(EconError::InvalidSpec(format!("term '{name}' appears twice")));
        }
    }

    let group_labels = rows
        .iter()
        .map(|&i| text_key(frame, &spec.fe_group, i))
        .collect::<Result<Vec<_>, _>>()?;
    let cluster_labels = rows
        .iter()
        .map(|&i| text_key(frame, std::slice::from_ref(&spec.cluster), i))
        .collect::<Result<Vec<_>, _>>()?;
    let (groups, n_groups) = index_labels(&group_labels);
    let (clusters, n_clusters) = index_labels(&cluster_labels);
    let y: Vec<f64> = rows.iter().map(|&i| outcome[i].expect("kept")).collect();

    // canonical order
    let k = columns.len();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        clusters[a]
            .cmp(&clusters[b])
            .then(groups[a].cmp(&groups[b]))
            .then(y[a].total_cmp(&y[b]))
            .then_with(|| {
                (0..k)
                    .map(|j| columns[j].1[a].total_cmp(&columns[j].1[b]))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then(rows[a].cmp(&rows[b]))
    });

    let n = rows.len();
    Ok(Design {
        y: DVector::from_iterator(n, order.iter().map(|&r| y[r])),
        x: DMatrix::from_fn(n, k, |r, j| columns[j].1[order[r]]),
        names: columns.into_iter().map(|(n, _)| n).collect(),
        groups: order.iter().map(|&r| groups[r]).collect(),
        n_groups,
        clusters: order.iter().map(|&r| clusters[r]).collect(),
        n_clusters,
        has_intercept: !spec.fixed_effects,
        dropped_missing,
        dropped_subset,
        source_rows: order.iter().map(|&r| rows[r]).collect(),
    })
}
