//! Finite MDP model: states, per-state action lists with extended-real costs and
//! sparse transition rows.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtReal;

/// Tolerance on `|Σ p - 1|` for a transition row.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Sparse distribution over next states, kept sorted by target index.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRow {
    entries: Vec<(usize, f64)>,
}

impl TransitionRow {
    /// Builds a row; entries are sorted by target so the summation order is fixed.
    /// Validity (distinct targets, probabilities, sum) is checked by [`validate`].
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|&(t, _)| t);
        TransitionRow { entries }
    }

    /// Point mass on `target`.
    pub fn point(target: usize) -> Self {
        TransitionRow {
            entries: vec![(target, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(t, _)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }
}

/// Per-state extended-real values.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ValueFunction(pub Vec<ExtReal>);

impl ValueFunction {
    pub fn zeros(n: usize) -> Self {
        ValueFunction(vec![ExtReal::ZERO; n])
    }

    pub fn from_finite(values: &[f64]) -> Self {
        ValueFunction(values.iter().map(|&v| ExtReal::clamped(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, x: usize) -> Option<ExtReal> {
        self.0.get(x).copied()
    }

    pub fn values(&self) -> &[ExtReal] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = ExtReal> + '_ {
        self.0.iter().copied()
    }

    /// Pointwise `self ≤ other`.
    pub fn le(&self, other: &ValueFunction) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = ExtReal;

    fn index(&self, x: usize) -> &ExtReal {
        &self.0[x]
    }
}

/// `Σ p_i · w(t_i)` over the row in sorted-target order, with `0 · ∞ = 0`.
pub fn expectation(row: &TransitionRow, w: &ValueFunction) -> Result<ExtReal> {
    let mut acc = ExtReal::ZERO;
    for &(target, p) in &row.entries {
        let wt = w.get(target).ok_or(Error::MissingValue {
            target,
            len: w.len(),
        })?;
        acc = acc + wt.scale(p);
    }
    Ok(acc)
}

/// Finite-valued expectation used by solver inner loops. Caller guarantees
/// every target is in range.
#[inline]
pub(crate) fn expectation_f64(row: &TransitionRow, w: &[f64]) -> f64 {
    row.entries.iter().map(|&(t, p)| p * w[t]).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub label: String,
    pub cost: ExtReal,
    pub row: TransitionRow,
}

impl Action {
    pub fn new(label: impl Into<String>, cost: ExtReal, row: TransitionRow) -> Self {
        Action {
            label: label.into(),
            cost,
            row,
        }
    }
}

/// A finite MDP `(X, A, {A(x)}, c, q)` with nonnegative costs.
///
/// Constructed through [`Mdp::new`], which validates; [`Mdp::new_unchecked`] exists
/// for building deliberately malformed models to feed to [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    state_labels: Vec<String>,
    actions: Vec<Vec<Action>>,
}

impl Mdp {
    pub fn new(state_labels: Vec<String>, actions: Vec<Vec<Action>>) -> Result<Self> {
        let mdp = Mdp::new_unchecked(state_labels, actions);
        let report = validate(&mdp);
        if report.ok {
            Ok(mdp)
        } else {
            Err(Error::Invalid(report))
        }
    }

    pub fn new_unchecked(state_labels: Vec<String>, actions: Vec<Vec<Action>>) -> Self {
        Mdp {
            state_labels,
            actions,
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn state_label(&self, x: usize) -> &str {
        &self.state_labels[x]
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|l| l == label)
    }

    pub fn actions(&self, x: usize) -> &[Action] {
        &self.actions[x]
    }

    pub fn action(&self, x: usize, a: usize) -> Result<&Action> {
        self.actions
            .get(x)
            .and_then(|acts| acts.get(a))
            .ok_or(Error::InfeasibleAction {
                state: x,
                action: a,
            })
    }

    pub fn num_actions(&self, x: usize) -> usize {
        self.actions[x].len()
    }

    pub fn max_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Parses and validates a model in the JSON exchange format.
    pub fn from_json(text: &str) -> Result<Self> {
        load_mdp(text)
    }

    pub fn to_json(&self) -> String {
        let file = MdpFile {
            states: self.state_labels.clone(),
            actions: self
                .actions
                .iter()
                .enumerate()
                .flat_map(|(x, acts)| {
                    acts.iter().map(move |a| ActionEntry {
                        state: self.state_labels[x].clone(),
                        action: a.label.clone(),
                        cost: a.cost,
                        transitions: a
                            .row
                            .entries()
                            .iter()
                            .map(|&(t, p)| TransitionEntry {
                                to: self.state_labels[t].clone(),
                                p,
                            })
                            .collect(),
                    })
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }
}

/// One failed rule in a [`ValidationReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub location: String,
    pub rule: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            if v.detail.starts_with(v.rule.as_str()) {
                write!(f, "{}: {}", v.location, v.detail)?;
            } else {
                write!(f, "{}: {} ({})", v.location, v.rule, v.detail)?;
            }
        }
        Ok(())
    }
}

pub mod rules {
    pub const EMPTY_ACTIONS: &str = "strict map A violated";
    pub const DUPLICATE_STATE: &str = "duplicate state label";
    pub const DUPLICATE_ACTION: &str = "duplicate action label";
    pub const DUPLICATE_TARGET: &str = "duplicate transition target";
    pub const INVALID_TARGET: &str = "invalid transition target";
    pub const PROBABILITY_RANGE: &str = "probability out of (0,1]";
    pub const ROW_SUM: &str = "row sum";
    pub const UNSORTED_ROW: &str = "unsorted transition row";
    pub const ACTION_TABLE: &str = "action table size mismatch";
}

/// Checks every model invariant and reports all violations.
pub fn validate(mdp: &Mdp) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |location: String, rule: &str, detail: String| {
        violations.push(Violation {
            location,
            rule: rule.to_string(),
            detail,
        })
    };
    let n = mdp.state_labels.len();

    if mdp.actions.len() != n {
        push(
            "model".into(),
            rules::ACTION_TABLE,
            format!("{} states but {} action lists", n, mdp.actions.len()),
        );
    }

    let mut seen = HashSet::new();
    for label in &mdp.state_labels {
        if !seen.insert(label.as_str()) {
            push(
                format!("state {label:?}"),
                rules::DUPLICATE_STATE,
                format!("label {label:?} appears more than once"),
            );
        }
    }

    for (x, acts) in mdp.actions.iter().enumerate() {
        let state = mdp
            .state_labels
            .get(x)
            .cloned()
            .unwrap_or_else(|| format!("#{x}"));
        if acts.is_empty() {
            push(
                format!("state {state:?}"),
                rules::EMPTY_ACTIONS,
                "A(x) is empty".into(),
            );
        }
        let mut labels = HashSet::new();
        for act in acts {
            let loc = format!("state {state:?} action {:?}", act.label);
            if !labels.insert(act.label.as_str()) {
                push(
                    loc.clone(),
                    rules::DUPLICATE_ACTION,
                    format!("action {:?} repeated", act.label),
                );
            }
            let entries = act.row.entries();
            if entries.windows(2).any(|w| w[0].0 > w[1].0) {
                push(
                    loc.clone(),
                    rules::UNSORTED_ROW,
                    "targets not sorted".into(),
                );
            }
            if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
                push(
                    loc.clone(),
                    rules::DUPLICATE_TARGET,
                    format!("target #{} listed twice", w[0].0),
                );
            }
            for &(t, p) in entries {
                if t >= n {
                    push(
                        loc.clone(),
                        rules::INVALID_TARGET,
                        format!("target #{t} out of range (n = {n})"),
                    );
                }
                if !(p > 0.0 && p <= 1.0) {
                    push(loc.clone(), rules::PROBABILITY_RANGE, format!("p = {p}"));
                }
            }
            let sum = act.row.sum();
            let dev = (sum - 1.0).abs();
            if dev.is_nan() || dev > ROW_SUM_TOL {
                push(loc, rules::ROW_SUM, format!("row sum {sum} ≠ 1"));
            }
        }
    }

    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    states: Vec<String>,
    actions: Vec<ActionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionEntry {
    state: String,
    action: String,
    cost: ExtReal,
    transitions: Vec<TransitionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionEntry {
    to: String,
    p: f64,
}

/// Parses the JSON model format, resolves labels to indices and validates.
pub fn load_mdp(text: &str) -> Result<Mdp> {
    let file: MdpFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let index: HashMap<&str, usize> = file
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut actions: Vec<Vec<Action>> = vec![Vec::new(); file.states.len()];

    for (ai, entry) in file.actions.iter().enumerate() {
        let x = *index
            .get(entry.state.as_str())
            .ok_or_else(|| Error::Schema {
                path: format!("actions[{ai}].state"),
                message: format!("unknown state {:?}", entry.state),
            })?;
        let mut row = Vec::with_capacity(entry.transitions.len());
        for (ti, tr) in entry.transitions.iter().enumerate() {
            let t = *index.get(tr.to.as_str()).ok_or_else(|| Error::Schema {
                path: format!("actions[{ai}].transitions[{ti}].to"),
                message: format!("unknown state {:?}", tr.to),
            })?;
            row.push((t, tr.p));
        }
        actions[x].push(Action::new(
            entry.action.clone(),
            entry.cost,
            TransitionRow::new(row),
        ));
    }

    Mdp::new(file.states, actions)
}
