//! Bellman operator, finite- and infinite-horizon value iteration, argmin sets,
//! optimal policies and policy evaluation for discount factors in `[0, 1]`.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::linalg;
use crate::mdp::{expectation, expectation_f64, Action, Mdp, ValueFunction};
use crate::policy::{MarkovPolicy, StationaryPolicy};
use crate::selection::ArgminSet;

/// Absolute tolerance on η values when collecting minimizers at a solved `v`.
pub const ARGMIN_TOL: f64 = 1e-9;

/// Value-iteration sweeps tried before switching to exact policy evaluation.
const SWEEPS_BEFORE_POLISH: usize = 1_000;
/// Largest number of finite-value states handled by the dense evaluation step.
const DENSE_LIMIT: usize = 4_000;
const MAX_POLISH_ROUNDS: usize = 500;

pub type ArgminSets = Vec<ArgminSet>;

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha = {alpha} outside [0, 1]"
        )))
    }
}

/// `η_w^α(x, a) = c(x, a) + α ∫ w(z) q(dz | x, a)`.
pub fn bellman(mdp: &Mdp, w: &ValueFunction, alpha: f64, x: usize, a: usize) -> Result<ExtReal> {
    check_alpha(alpha)?;
    let act = mdp.action(x, a)?;
    Ok(act.cost + expectation(&act.row, w)?.scale(alpha))
}

#[inline]
fn eta(act: &Action, w: &[f64], alpha: f64) -> f64 {
    if alpha == 0.0 {
        act.cost.value()
    } else {
        act.cost.value() + alpha * expectation_f64(&act.row, w)
    }
}

/// Lowest-index minimizer and the minimum of η over `A(x)`.
#[inline]
fn best_action(mdp: &Mdp, w: &[f64], alpha: f64, x: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (a, act) in mdp.actions(x).iter().enumerate() {
        let q = eta(act, w, alpha);
        if q < best.1 {
            best = (a, q);
        }
    }
    best
}

fn sweep(mdp: &Mdp, w: &[f64], alpha: f64, out: &mut [f64]) {
    for (x, o) in out.iter_mut().enumerate() {
        *o = best_action(mdp, w, alpha, x).1;
    }
}

/// Largest increase `next - prev` over the states selected by `mask`.
fn sup_gap(prev: &[f64], next: &[f64], mask: Option<&[bool]>) -> f64 {
    let mut gap = 0.0f64;
    for (x, (&p, &q)) in prev.iter().zip(next).enumerate() {
        if mask.is_some_and(|m| !m[x]) {
            continue;
        }
        let d = if p == q { 0.0 } else { (q - p).abs() };
        gap = gap.max(d);
    }
    gap
}

fn to_value_function(v: &[f64]) -> ValueFunction {
    ValueFunction::from_finite(v)
}

fn to_f64(w: &ValueFunction) -> Vec<f64> {
    w.iter().map(ExtReal::value).collect()
}

/// Record of `v_{0,α}, v_{1,α}, …, v_{T,α}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationTrace {
    pub alpha: f64,
    pub iterates: Vec<ValueFunction>,
    /// The last two iterates coincide.
    pub converged: bool,
    /// Sup-norm distance between the last two iterates (0 when `T = 0`).
    pub sup_gap: f64,
}

impl IterationTrace {
    pub fn last(&self) -> &ValueFunction {
        self.iterates.last().expect("trace holds v_0")
    }
}

/// Runs `T` steps of `v_{t+1}(x) = min_a η_{v_t}^α(x, a)` from `v_0 ≡ 0`.
pub fn value_iteration(mdp: &Mdp, alpha: f64, horizon: usize) -> Result<IterationTrace> {
    check_alpha(alpha)?;
    let n = mdp.num_states();
    let mut cur = vec![0.0; n];
    let mut iterates = Vec::with_capacity(horizon + 1);
    iterates.push(ValueFunction::zeros(n));
    let mut gap = 0.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        sweep(mdp, &cur, alpha, &mut next);
        gap = sup_gap(&cur, &next, None);
        iterates.push(to_value_function(&next));
        cur = next;
    }
    Ok(IterationTrace {
        alpha,
        converged: horizon > 0 && gap == 0.0,
        sup_gap: gap,
        iterates,
    })
}

/// States with `v_α = +∞` for `α < 1`.
///
/// This is the least fixed point of
/// `S ↦ {x : every a ∈ A(x) has c(x,a) = +∞ or q(S | x, a) > 0}`; from every
/// other state some policy stays forever among finite-cost actions.
pub fn infinite_states(mdp: &Mdp, alpha: f64) -> Vec<bool> {
    let n = mdp.num_states();
    let mut inf = vec![false; n];
    loop {
        let mut changed = false;
        for x in 0..n {
            if inf[x] {
                continue;
            }
            let all_bad = mdp.actions(x).iter().all(|act| {
                act.cost.is_infinite() || (alpha > 0.0 && act.row.targets().any(|t| inf[t]))
            });
            if all_bad {
                inf[x] = true;
                changed = true;
            }
        }
        if !changed {
            return inf;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SolveStatus {
    Converged,
    /// `α = 1` only: the iterates were still growing by `growth` per step at
    /// `max_iters`; the returned `v` is a lower bound of `v_1`.
    DivergingOrSlow {
        growth: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscountedSolution {
    pub alpha: f64,
    pub v: ValueFunction,
    pub argmin: ArgminSets,
    pub policy: StationaryPolicy,
    /// Value-iteration sweeps plus exact-evaluation rounds.
    pub iterations: usize,
    /// `sup_x |min_a η_v^α(x, a) − v(x)|` over finite-value states.
    pub residual: f64,
    pub status: SolveStatus,
}

/// Computes `v_α`, its argmin sets and the lowest-index optimal stationary policy.
///
/// For `α < 1` value iteration runs until the successive-iterate gap is at most
/// `tol·(1−α)/α`. If that does not happen within a bounded number of sweeps and
/// the model is small enough, the iterate is finished with exact policy
/// evaluation / improvement steps, which keeps the residual guarantee at
/// discount factors close to one. For `α = 1` plain value iteration runs to
/// `max_iters` and reports whether it settled.
pub fn solve_discounted(
    mdp: &Mdp,
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DiscountedSolution> {
    check_alpha(alpha)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tol = {tol} must be positive"
        )));
    }
    let n = mdp.num_states();
    let discounted = alpha < 1.0;
    let inf = if discounted {
        infinite_states(mdp, alpha)
    } else {
        vec![false; n]
    };
    let finite_mask: Vec<bool> = inf.iter().map(|&b| !b).collect();
    let num_finite = finite_mask.iter().filter(|&&b| b).count();
    let threshold = if alpha > 0.0 && discounted {
        tol * (1.0 - alpha) / alpha
    } else {
        tol
    };

    // States known to be infinite start at +∞ so the stopping rule on the
    // finite ones is a contraction bound.
    let mut v: Vec<f64> = inf
        .iter()
        .map(|&b| if b { f64::INFINITY } else { 0.0 })
        .collect();
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let polish_possible = discounted && num_finite <= DENSE_LIMIT;

    while iterations < max_iters {
        sweep(mdp, &v, alpha, &mut next);
        iterations += 1;
        gap = sup_gap(&v, &next, Some(&finite_mask));
        std::mem::swap(&mut v, &mut next);
        if gap <= threshold {
            converged = true;
            break;
        }
        if polish_possible && iterations >= SWEEPS_BEFORE_POLISH {
            break;
        }
    }

    if discounted && !converged {
        if !polish_possible {
            return Err(Error::NonConvergence {
                alpha,
                iterations,
                gap,
            });
        }
        debug!("alpha={alpha}: value iteration gap {gap:e} after {iterations} sweeps, polishing");
        let (polished, rounds) = polish(mdp, alpha, tol, &inf, v).ok_or(Error::NonConvergence {
            alpha,
            iterations,
            gap,
        })?;
        v = polished;
        iterations += rounds;
    }

    let status = if discounted || gap <= tol {
        SolveStatus::Converged
    } else {
        SolveStatus::DivergingOrSlow { growth: gap }
    };

    let (argmin, policy, residual) = greedy_report(mdp, &v, alpha, &finite_mask);
    Ok(DiscountedSolution {
        alpha,
        v: to_value_function(&v),
        argmin,
        policy,
        iterations,
        residual,
        status,
    })
}

/// Argmin sets (tolerance [`ARGMIN_TOL`]), lowest-index policy, and Bellman residual.
fn greedy_report(
    mdp: &Mdp,
    v: &[f64],
    alpha: f64,
    finite_mask: &[bool],
) -> (ArgminSets, StationaryPolicy, f64) {
    let mut argmin = Vec::with_capacity(v.len());
    let mut policy = Vec::with_capacity(v.len());
    let mut residual = 0.0f64;
    for x in 0..v.len() {
        let (_, best) = best_action(mdp, v, alpha, x);
        if best.is_infinite() {
            argmin.push(ArgminSet::AllActions);
            policy.push(0);
            continue;
        }
        let set: Vec<usize> = mdp
            .actions(x)
            .iter()
            .enumerate()
            .filter(|(_, act)| eta(act, v, alpha) <= best + ARGMIN_TOL)
            .map(|(a, _)| a)
            .collect();
        policy.push(set[0]);
        argmin.push(ArgminSet::Explicit(set));
        if finite_mask[x] {
            residual = residual.max((best - v[x]).abs());
        }
    }
    (argmin, StationaryPolicy(policy), residual)
}

/// Exact value of a stationary policy on the finite-value states:
/// solves `(I − αP_φ) v = c_φ`.
fn evaluate_dense(
    mdp: &Mdp,
    alpha: f64,
    policy: &[usize],
    finite_idx: &[usize],
    pos: &[Option<usize>],
) -> Option<Vec<f64>> {
    let m = finite_idx.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (i, &x) in finite_idx.iter().enumerate() {
        let act = &mdp.actions(x)[policy[x]];
        b[i] = act.cost.value();
        for &(t, p) in act.row.entries() {
            let j = pos[t]?;
            a[(i, j)] -= alpha * p;
        }
    }
    let sol = linalg::solve(&a, &b, 2)?;
    let mut v = vec![f64::INFINITY; mdp.num_states()];
    for (i, &x) in finite_idx.iter().enumerate() {
        v[x] = sol[i];
    }
    Some(v)
}

/// Policy evaluation / improvement started from the greedy policy of `v`.
/// Switches an action only when it improves η by more than `tol / 2`, so the
/// loop terminates; on exit the Bellman residual is within `tol` up to the
/// rounding of the dense solve.
fn polish(
    mdp: &Mdp,
    alpha: f64,
    tol: f64,
    inf: &[bool],
    start: Vec<f64>,
) -> Option<(Vec<f64>, usize)> {
    let n = mdp.num_states();
    let finite_idx: Vec<usize> = (0..n).filter(|&x| !inf[x]).collect();
    let mut pos = vec![None; n];
    for (i, &x) in finite_idx.iter().enumerate() {
        pos[x] = Some(i);
    }
    let mut policy: Vec<usize> = (0..n)
        .map(|x| best_action(mdp, &start, alpha, x).0)
        .collect();
    for round in 1..=MAX_POLISH_ROUNDS {
        let v = evaluate_dense(mdp, alpha, &policy, &finite_idx, &pos)?;
        let mut changed = false;
        for &x in &finite_idx {
            let current = eta(&mdp.actions(x)[policy[x]], &v, alpha);
            let (a, best) = best_action(mdp, &v, alpha, x);
            if best < current - 0.5 * tol {
                policy[x] = a;
                changed = true;
            }
        }
        if !changed {
            return Some((v, round));
        }
    }
    None
}

/// Exact finite-horizon backward induction: returns the lowest-index
/// minimizers of `η_{v_{t,α}}^α` for `t = 0..T` together with the iterates.
pub fn finite_horizon_argmin(
    mdp: &Mdp,
    alpha: f64,
    horizon: usize,
) -> Result<(Vec<ArgminSets>, IterationTrace)> {
    let trace = value_iteration(mdp, alpha, horizon)?;
    let mut sets = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let w = to_f64(&trace.iterates[t]);
        let next = &trace.iterates[t + 1];
        let per_state = (0..mdp.num_states())
            .map(|x| {
                if next[x].is_infinite() {
                    ArgminSet::AllActions
                } else {
                    ArgminSet::Explicit(
                        mdp.actions(x)
                            .iter()
                            .enumerate()
                            .filter(|(_, act)| eta(act, &w, alpha) == next[x].value())
                            .map(|(a, _)| a)
                            .collect(),
                    )
                }
            })
            .collect();
        sets.push(per_state);
    }
    Ok((sets, trace))
}

/// Optimal Markov policy for horizon `T`: epoch `t` uses the lowest-index
/// element of `A_{T−1−t,α}(x)`.
pub fn finite_horizon_policy(mdp: &Mdp, alpha: f64, horizon: usize) -> Result<MarkovPolicy> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let (sets, _) = finite_horizon_argmin(mdp, alpha, horizon)?;
    let epochs = (0..horizon)
        .map(|t| {
            StationaryPolicy(
                sets[horizon - 1 - t]
                    .iter()
                    .map(|s| s.first().unwrap_or(0))
                    .collect(),
            )
        })
        .collect();
    Ok(MarkovPolicy { epochs })
}

/// Expected discounted cost of a Markov policy over its horizon, by backward
/// induction.
pub fn markov_policy_value(mdp: &Mdp, policy: &MarkovPolicy, alpha: f64) -> Result<ValueFunction> {
    check_alpha(alpha)?;
    for epoch in &policy.epochs {
        epoch.check_feasible(mdp)?;
    }
    let n = mdp.num_states();
    let mut w = vec![0.0; n];
    for epoch in policy.epochs.iter().rev() {
        let next: Vec<f64> = (0..n)
            .map(|x| eta(&mdp.actions(x)[epoch.action(x)], &w, alpha))
            .collect();
        w = next;
    }
    Ok(to_value_function(&w))
}

impl Mdp {
    /// The single-action model obtained by fixing `policy`.
    pub fn restrict(&self, policy: &StationaryPolicy) -> Result<Mdp> {
        policy.check_feasible(self)?;
        let actions = (0..self.num_states())
            .map(|x| vec![self.actions(x)[policy.action(x)].clone()])
            .collect();
        Ok(Mdp::new_unchecked(self.state_labels().to_vec(), actions))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyValue {
    pub v: ValueFunction,
    pub status: SolveStatus,
}

/// Default iteration cap for [`policy_value`].
pub const POLICY_VALUE_MAX_ITERS: usize = 200_000;

/// Expected total discounted cost of a stationary policy, evaluated monotonically
/// from zero (with the same exact finishing step as [`solve_discounted`]).
pub fn policy_value(
    mdp: &Mdp,
    policy: &StationaryPolicy,
    alpha: f64,
    tol: f64,
) -> Result<PolicyValue> {
    let restricted = mdp.restrict(policy)?;
    let sol = solve_discounted(&restricted, alpha, tol, POLICY_VALUE_MAX_ITERS)?;
    Ok(PolicyValue {
        v: sol.v,
        status: sol.status,
    })
}
