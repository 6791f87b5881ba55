//! Value functions, domains and optimal selectors for a parametric objective
//! `u(x, a)` over finite per-state action lists.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::mdp::ValueFunction;
use crate::policy::StationaryPolicy;

/// Minimizer set at one state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ArgminSet {
    /// Explicit, nonempty, increasing list of minimizing action indices.
    Explicit(Vec<usize>),
    /// The value is `+∞`, so every feasible action attains it.
    AllActions,
}

impl ArgminSet {
    pub fn contains(&self, a: usize) -> bool {
        match self {
            ArgminSet::Explicit(v) => v.contains(&a),
            ArgminSet::AllActions => true,
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, ArgminSet::AllActions)
    }

    pub fn first(&self) -> Option<usize> {
        match self {
            ArgminSet::Explicit(v) => v.first().copied(),
            ArgminSet::AllActions => None,
        }
    }
}

/// Objective `u(x, a)` on the graph of a finite strict action map.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionProblem {
    objective: Vec<Vec<ExtReal>>,
}

impl SelectionProblem {
    pub fn new(objective: Vec<Vec<ExtReal>>) -> Result<Self> {
        if let Some(x) = objective.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!(
                "state {x} has no actions (strict map A violated)"
            )));
        }
        Ok(SelectionProblem { objective })
    }

    pub fn num_states(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self, x: usize) -> &[ExtReal] {
        &self.objective[x]
    }

    /// Actions with finite objective, `A^f(x)`.
    pub fn finite_actions(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.objective[x]
            .iter()
            .enumerate()
            .filter(|(_, u)| u.is_finite())
            .map(|(a, _)| a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub v: ValueFunction,
    pub dom_mask: Vec<bool>,
    pub selector: Vec<Option<usize>>,
    pub argmin_sets: Vec<ArgminSet>,
}

/// `v(x) = min_a u(x, a)` and the mask `v(x) < +∞`.
pub fn value_and_domain(problem: &SelectionProblem) -> (ValueFunction, Vec<bool>) {
    let v: Vec<ExtReal> = problem
        .objective
        .iter()
        .map(|row| row.iter().copied().min().expect("nonempty action list"))
        .collect();
    let dom = v.iter().map(|x| x.is_finite()).collect();
    (ValueFunction(v), dom)
}

/// Lowest-index selector on `dom(v)` with exact-equality argmin sets.
pub fn optimal_selector(problem: &SelectionProblem) -> SelectionResult {
    let (v, dom_mask) = value_and_domain(problem);
    let mut selector = Vec::with_capacity(v.len());
    let mut argmin_sets = Vec::with_capacity(v.len());
    for (x, row) in problem.objective.iter().enumerate() {
        if dom_mask[x] {
            let set: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|&(_, &u)| u == v[x])
                .map(|(a, _)| a)
                .collect();
            selector.push(Some(set[0]));
            argmin_sets.push(ArgminSet::Explicit(set));
        } else {
            selector.push(None);
            argmin_sets.push(ArgminSet::AllActions);
        }
    }
    SelectionResult {
        v,
        dom_mask,
        selector,
        argmin_sets,
    }
}

/// Extends a selector from `dom(v)` to every state, choosing action 0 off the domain.
pub fn extend_selector(problem: &SelectionProblem, result: &SelectionResult) -> StationaryPolicy {
    debug_assert_eq!(problem.num_states(), result.selector.len());
    StationaryPolicy(result.selector.iter().map(|s| s.unwrap_or(0)).collect())
}
