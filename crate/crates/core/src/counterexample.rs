//! A single-action countable-state MDP whose relative values `u_α(0)` are
//! unbounded along `γ⁽ⁿ⁾ ↑ 1` but stay `≤ 1` along `α⁽ⁿ⁾ ↑ 1`.
//!
//! All quantities are carried as gaps `e = 1 − α`: the discount factors approach
//! one doubly fast, so `1 − α^N` is evaluated as `−expm1(N·ln(1 − e))`, and each
//! stored `α` satisfies `1 − α == gap` exactly.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::mdp::{Action, Mdp, TransitionRow, ValueFunction};
use crate::vanishing::{DiscountGrid, VanishingProfile};

/// Generation stops once `1 − α⁽ⁿ⁾` drops below this.
pub const MIN_GAP: f64 = 1e-14;
pub const DEFAULT_STAGE_CAP: usize = 64;

/// Snaps a gap so that `1 − (1 − gap) == gap` in floating point.
fn canonical_gap(gap: f64) -> f64 {
    1.0 - (1.0 - gap)
}

/// `1 − α^k` for `α = 1 − e`.
#[inline]
pub fn one_minus_pow(e: f64, k: f64) -> f64 {
    -(k * (-e).ln_1p()).exp_m1()
}

/// `α^k` for `α = 1 − e`.
#[inline]
pub fn pow_from_gap(e: f64, k: f64) -> f64 {
    (k * (-e).ln_1p()).exp()
}

/// `ε_β`, `γ_{β,M}`, `n*_{β,M}`, `δ_{β,M}` together with the gaps `1 − γ`, `1 − δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageQuantities {
    pub eps: f64,
    pub gamma: f64,
    pub gamma_gap: f64,
    pub nstar: u64,
    pub delta: f64,
    pub delta_gap: f64,
}

/// Stage quantities for `β = 1 − eps`.
pub fn quantities_from_gap(eps: f64, m: f64) -> Result<StageQuantities> {
    if !(eps > 0.0 && eps < 1.0) || !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 1 - beta in (0, 1) and M > 0, got 1 - beta = {eps}, M = {m}"
        )));
    }
    // γ = max{(β+1)/2, 1 − ε/(3M)}  ⇔  1 − γ = min{ε/2, ε/(3M)}
    let gamma_gap = canonical_gap((0.5 * eps).min(eps / (3.0 * m)));
    let target = (0.5f64).min(m * gamma_gap / eps);
    let ratio = target.ln() / (-gamma_gap).ln_1p();
    let nstar = ratio.floor() as u64 + 1;
    // δ = max{(γ+1)/2, (1 − 1/(ε n*))^{1/n*}}; the second branch is dropped when
    // its base is negative.
    let x = 1.0 / (eps * nstar as f64);
    let second_gap = if x > 1.0 {
        f64::INFINITY
    } else if x == 1.0 {
        1.0
    } else {
        -((-x).ln_1p() / nstar as f64).exp_m1()
    };
    let delta_gap = canonical_gap((0.5 * gamma_gap).min(second_gap));
    Ok(StageQuantities {
        eps,
        gamma: 1.0 - gamma_gap,
        gamma_gap,
        nstar,
        delta: 1.0 - delta_gap,
        delta_gap,
    })
}

/// `(ε_β, γ_{β,M}, n*_{β,M}, δ_{β,M})` for `β ∈ (0, 1)`, `M > 0`.
pub fn stage_quantities(beta: f64, m: f64) -> Result<StageQuantities> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta = {beta} outside (0, 1)"
        )));
    }
    quantities_from_gap(1.0 - beta, m)
}

/// `p(α) = ε (1 − α^n)² / (1 − α)` with `α = 1 − alpha_gap`.
pub fn p_from_gap(eps: f64, n: u64, alpha_gap: f64) -> f64 {
    let s = one_minus_pow(alpha_gap, n as f64);
    eps * s * s / alpha_gap
}

/// `p_{β,M}(α)` for `α ∈ (0, 1)`.
pub fn p_value(beta: f64, m: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} outside (0, 1)"
        )));
    }
    let q = stage_quantities(beta, m)?;
    Ok(p_from_gap(q.eps, q.nstar, 1.0 - alpha))
}

/// One step of the parameter recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageParams {
    pub n: usize,
    pub alpha_n: f64,
    /// `ε⁽ⁿ⁾ = 1 − α⁽ⁿ⁾`.
    pub eps_n: f64,
    pub gamma_n: f64,
    pub gamma_gap: f64,
    /// `N(n) = n*_{α⁽ⁿ⁾, n}`.
    pub big_n: u64,
    pub alpha_next: f64,
    pub next_gap: f64,
}

impl StageParams {
    fn build(n: usize, gap: f64) -> Result<Self> {
        if gap.is_nan() || gap < MIN_GAP {
            return Err(Error::DegenerateStage { stage: n, gap });
        }
        let q = quantities_from_gap(gap, n as f64)?;
        let stage = StageParams {
            n,
            alpha_n: 1.0 - gap,
            eps_n: gap,
            gamma_n: q.gamma,
            gamma_gap: q.gamma_gap,
            big_n: q.nstar,
            alpha_next: q.delta,
            next_gap: q.delta_gap,
        };
        if !stage.interleaving_holds() {
            return Err(Error::DegenerateStage { stage: n, gap });
        }
        Ok(stage)
    }

    /// `1 − 2^{−n} ≤ α⁽ⁿ⁾ < γ⁽ⁿ⁾ < α⁽ⁿ⁺¹⁾ < 1`.
    pub fn interleaving_holds(&self) -> bool {
        let lower = 1.0 - 0.5f64.powi(self.n as i32);
        lower <= self.alpha_n
            && self.alpha_n < self.gamma_n
            && self.gamma_n < self.alpha_next
            && self.alpha_next < 1.0
            && self.eps_n == 1.0 - self.alpha_n
    }

    /// The following stage of the recursion.
    pub fn next(&self) -> Result<StageParams> {
        StageParams::build(self.n + 1, self.next_gap)
    }

    /// `2N(n)`, the length of branch `n`.
    pub fn branch_len(&self) -> u64 {
        2 * self.big_n
    }
}

/// Runs the recursion from `α⁽¹⁾ = alpha1` with `M = n` at stage `n`.
pub fn generate(alpha1: f64, stages: usize) -> Result<Vec<StageParams>> {
    if !(0.5..1.0).contains(&alpha1) {
        return Err(Error::InvalidArgument(format!(
            "alpha1 = {alpha1} outside [0.5, 1)"
        )));
    }
    if stages == 0 {
        return Err(Error::InvalidArgument(
            "at least one stage is required".into(),
        ));
    }
    let mut out = Vec::with_capacity(stages);
    out.push(StageParams::build(1, 1.0 - alpha1)?);
    while out.len() < stages {
        let next = out.last().expect("nonempty").next()?;
        out.push(next);
    }
    Ok(out)
}

/// A state of the example: the absorbing state `0` or `(n, k)` with `1 ≤ k ≤ 2N(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CxState {
    Zero,
    Branch { n: usize, k: u64 },
}

impl std::fmt::Display for CxState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CxState::Zero => f.write_str("0"),
            CxState::Branch { n, k } => write!(f, "({n},{k})"),
        }
    }
}

/// Finite truncation of the example to stages `1..=n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleMdp {
    pub mdp: Mdp,
    pub stages: Vec<StageParams>,
    pub n_max: usize,
    pub states: Vec<CxState>,
    /// The full model has infinitely many branches, so `m_α` of this truncation
    /// can exceed the true `m_α`; [`closed_form_m`] is authoritative.
    pub truncated: bool,
}

impl CounterexampleMdp {
    pub fn index_of(&self, state: CxState) -> Option<usize> {
        match state {
            CxState::Zero => Some(0),
            CxState::Branch { n, k } => {
                if n == 0 || n > self.n_max {
                    return None;
                }
                let stage = &self.stages[n - 1];
                if k == 0 || k > stage.branch_len() {
                    return None;
                }
                let offset: u64 = self.stages[..n - 1]
                    .iter()
                    .map(StageParams::branch_len)
                    .sum();
                usize::try_from(1 + offset + k - 1).ok()
            }
        }
    }
}

/// Builds the explicit model for the longest stage prefix with
/// `1 + Σ 2N(n) ≤ state_budget`.
pub fn build_example_mdp(stages: &[StageParams], state_budget: usize) -> Result<CounterexampleMdp> {
    let first = stages
        .first()
        .ok_or_else(|| Error::InvalidArgument("no stages given".into()))?;
    let budget = state_budget as u64;
    let mut total: u64 = 1;
    let mut n_max = 0;
    for s in stages {
        let next = total.saturating_add(s.branch_len());
        if next > budget {
            break;
        }
        total = next;
        n_max += 1;
    }
    if n_max == 0 {
        return Err(Error::BudgetTooSmall {
            budget: state_budget,
            needed: 1 + first.branch_len(),
        });
    }
    let included = &stages[..n_max];
    let size = total as usize;
    let mut labels = Vec::with_capacity(size);
    let mut states = Vec::with_capacity(size);
    let mut actions = Vec::with_capacity(size);
    labels.push(CxState::Zero.to_string());
    states.push(CxState::Zero);
    actions.push(vec![Action::new(
        "only",
        ExtReal::ONE,
        TransitionRow::point(0),
    )]);
    for s in included {
        let base = states.len();
        let len = s.branch_len();
        let low = ExtReal::new(1.0 - s.eps_n).expect("eps < 1");
        let high = ExtReal::new(1.0 + s.eps_n).expect("finite");
        for k in 1..=len {
            let state = CxState::Branch { n: s.n, k };
            labels.push(state.to_string());
            states.push(state);
            let cost = if k <= s.big_n { low } else { high };
            let target = if k == len { 0 } else { base + k as usize };
            actions.push(vec![Action::new(
                "only",
                cost,
                TransitionRow::point(target),
            )]);
        }
    }
    Ok(CounterexampleMdp {
        mdp: Mdp::new(labels, actions)?,
        stages: included.to_vec(),
        n_max,
        states,
        truncated: true,
    })
}

fn check_alpha_open(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(1.0 - alpha)
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha = {alpha} outside (0, 1)"
        )))
    }
}

/// `v_α` at `state` in closed form. `v_α(0) = 1/(1−α)`; on branch `n`
/// the two-piece formula with `N = N(n)`.
pub fn closed_form_v(stages: &[StageParams], alpha: f64, state: CxState) -> Result<f64> {
    let e = check_alpha_open(alpha)?;
    closed_form_v_gap(stages, e, state)
}

/// [`closed_form_v`] with `α = 1 − e` given by its gap.
pub fn closed_form_v_gap(stages: &[StageParams], e: f64, state: CxState) -> Result<f64> {
    let base = 1.0 / e;
    match state {
        CxState::Zero => Ok(base),
        CxState::Branch { n, k } => {
            let s = stages
                .get(n.wrapping_sub(1))
                .ok_or_else(|| Error::InvalidArgument(format!("stage {n} not available")))?;
            let big = s.big_n;
            if k == 0 || k > 2 * big {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} outside 1..=2N({n})"
                )));
            }
            let nf = big as f64;
            if k <= big {
                let j = (big - k + 1) as f64;
                let num = one_minus_pow(e, nf) * pow_from_gap(e, j) - one_minus_pow(e, j);
                Ok(base + s.eps_n * num / e)
            } else {
                let j = (2 * big - k + 1) as f64;
                Ok(base + s.eps_n * one_minus_pow(e, j) / e)
            }
        }
    }
}

/// Result of the certified supremum scan behind [`closed_form_m`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MScan {
    /// `m_α = 1/(1−α) − sup_term`.
    pub m: f64,
    /// `sup_n ε⁽ⁿ⁾ (1 − α^{N(n)})² / (1 − α)`, which equals `v_α(0) − m_α = u_α(0)`.
    pub sup_term: f64,
    /// Stage attaining the supremum.
    pub argmax: usize,
    /// Stages evaluated before the tail bound certified the supremum.
    pub scanned: usize,
}

/// `m_α = inf_n v_α(n, 1)` over the full (infinite) model.
///
/// Stage `n` contributes `ε⁽ⁿ⁾(1 − α^{N(n)})²/(1 − α) ≤ ε⁽ⁿ⁾/(1 − α)` and `ε⁽ⁿ⁾`
/// decreases, so the scan stops once `ε⁽ⁿ⁺¹⁾/(1 − α)` is no larger than the best
/// term found. Stages beyond `stages` are generated on demand, up to `stage_cap`.
pub fn closed_form_m(stages: &[StageParams], alpha: f64, stage_cap: usize) -> Result<MScan> {
    let e = check_alpha_open(alpha)?;
    closed_form_m_gap(stages, e, stage_cap)
}

pub fn closed_form_m_gap(stages: &[StageParams], e: f64, stage_cap: usize) -> Result<MScan> {
    let mut current = *stages
        .first()
        .ok_or_else(|| Error::InvalidArgument("no stages given".into()))?;
    let mut best = (0.0f64, current.n);
    let mut scanned = 0;
    loop {
        let term = p_from_gap(current.eps_n, current.big_n, e);
        scanned += 1;
        if term > best.0 {
            best = (term, current.n);
        }
        let tail_bound = current.next_gap / e;
        if tail_bound <= best.0 {
            break;
        }
        let partial = |cap: usize| Error::StageCap {
            alpha: 1.0 - e,
            cap,
            partial: best.0,
            tail_bound,
        };
        if current.n >= stage_cap {
            return Err(partial(stage_cap));
        }
        current = match stages.get(current.n) {
            Some(s) => *s,
            None => current.next().map_err(|_| partial(current.n))?,
        };
    }
    Ok(MScan {
        m: 1.0 / e - best.0,
        sup_term: best.0,
        argmax: best.1,
        scanned,
    })
}

/// Per-stage margins of the two relative-value bounds and the re-checked lemma.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageMargin {
    pub n: usize,
    pub alpha_n: f64,
    pub gamma_n: f64,
    pub big_n: u64,
    pub u_at_alpha_n: f64,
    pub u_at_gamma_n: f64,
    /// `u_{γ⁽ⁿ⁾}(0) − n`; must be `≥ −1e-9`.
    pub unbounded_margin: f64,
    /// `1 − u_{α⁽ⁿ⁾}(0)`; must be `≥ −1e-9`.
    pub liminf_margin: f64,
    /// `p(γ⁽ⁿ⁾) − n` for this stage's `p`.
    pub p_gamma_margin: f64,
    /// Largest sampled `p` on `(0, α⁽ⁿ⁾] ∪ [α⁽ⁿ⁺¹⁾, 1)`.
    pub p_max_outside: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropositionReport {
    pub stages: Vec<StageMargin>,
    pub all_ok: bool,
}

pub const PROPOSITION_TOL: f64 = 1e-9;
const LEMMA_SAMPLES: usize = 50;

/// Gaps `1 − α` of `count` points spread over `(0, β]` where `β = 1 − beta_gap`.
pub fn sample_low_gaps(beta_gap: f64, count: usize) -> Vec<f64> {
    let beta = 1.0 - beta_gap;
    (1..=count)
        .map(|i| 1.0 - beta * i as f64 / count as f64)
        .collect()
}

/// Gaps of `count` points spread over `[δ, 1)` where `δ = 1 − delta_gap`.
pub fn sample_high_gaps(delta_gap: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| delta_gap * (1.0 - i as f64 / count as f64))
        .collect()
}

/// Checks `u_{γ⁽ⁿ⁾}(0) ≥ n` and `u_{α⁽ⁿ⁾}(0) ≤ 1` for every stored stage, plus
/// the lemma bounds for that stage's `p`.
pub fn proposition_check(stages: &[StageParams]) -> Result<PropositionReport> {
    let mut rows = Vec::with_capacity(stages.len());
    for s in stages {
        let at_alpha = closed_form_m_gap(stages, s.eps_n, DEFAULT_STAGE_CAP)?;
        let at_gamma = closed_form_m_gap(stages, s.gamma_gap, DEFAULT_STAGE_CAP)?;
        let nf = s.n as f64;
        let p_gamma = p_from_gap(s.eps_n, s.big_n, s.gamma_gap);
        let p_max_outside = sample_low_gaps(s.eps_n, LEMMA_SAMPLES)
            .into_iter()
            .chain(sample_high_gaps(s.next_gap, LEMMA_SAMPLES))
            .map(|g| p_from_gap(s.eps_n, s.big_n, g))
            .fold(f64::NEG_INFINITY, f64::max);
        let unbounded_margin = at_gamma.sup_term - nf;
        let liminf_margin = 1.0 - at_alpha.sup_term;
        let ok = unbounded_margin >= -PROPOSITION_TOL
            && liminf_margin >= -PROPOSITION_TOL
            && p_gamma >= nf - 1e-12
            && p_max_outside <= 1.0 + 1e-12;
        rows.push(StageMargin {
            n: s.n,
            alpha_n: s.alpha_n,
            gamma_n: s.gamma_n,
            big_n: s.big_n,
            u_at_alpha_n: at_alpha.sup_term,
            u_at_gamma_n: at_gamma.sup_term,
            unbounded_margin,
            liminf_margin,
            p_gamma_margin: p_gamma - nf,
            p_max_outside,
            ok,
        });
    }
    Ok(PropositionReport {
        all_ok: rows.iter().all(|r| r.ok),
        stages: rows,
    })
}

impl PropositionReport {
    /// CSV with columns `n, alpha_n, gamma_n, N_n, u_at_alpha_n, u_at_gamma_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "alpha_n",
            "gamma_n",
            "N_n",
            "u_at_alpha_n",
            "u_at_gamma_n",
        ])?;
        for r in &self.stages {
            w.write_record([
                r.n.to_string(),
                r.alpha_n.to_string(),
                r.gamma_n.to_string(),
                r.big_n.to_string(),
                r.u_at_alpha_n.to_string(),
                r.u_at_gamma_n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Grid points `α⁽ⁿ⁾` and `γ⁽ⁿ⁾` of the stored stages, for merging into a
/// discount grid so the spikes of `u_α(0)` are sampled.
pub fn stage_grid_points(stages: &[StageParams]) -> Vec<f64> {
    stages.iter().flat_map(|s| [s.alpha_n, s.gamma_n]).collect()
}

/// Profile of the full model on `grid` from closed forms, restricted to
/// `states`; `m_α` comes from [`closed_form_m`] (not from the listed states).
pub fn closed_form_profile(
    stages: &[StageParams],
    grid: &DiscountGrid,
    states: &[CxState],
    tail_fraction: f64,
) -> Result<VanishingProfile> {
    let mut v = Vec::with_capacity(grid.len());
    let mut m = Vec::with_capacity(grid.len());
    let mut u_all = Vec::with_capacity(grid.len());
    for &alpha in grid.alphas() {
        let values = states
            .iter()
            .map(|&s| closed_form_v(stages, alpha, s))
            .collect::<Result<Vec<f64>>>()?;
        let scan = closed_form_m(stages, alpha, DEFAULT_STAGE_CAP)?;
        // v_α(0) − m_α is the supremum term itself; avoid the cancellation.
        let u: Vec<ExtReal> = states
            .iter()
            .zip(&values)
            .map(|(&s, &val)| match s {
                CxState::Zero => ExtReal::clamped(scan.sup_term),
                _ => ExtReal::clamped(val - scan.m),
            })
            .collect();
        v.push(ValueFunction::from_finite(&values));
        u_all.push(ValueFunction(u));
        m.push(scan.m);
    }
    VanishingProfile::from_parts(grid.clone(), v, m, u_all, tail_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities_at_half_one() {
        let q = stage_quantities(0.5, 1.0).unwrap();
        assert_eq!(q.eps, 0.5);
        assert!((q.gamma - 5.0 / 6.0).abs() < 1e-15);
        // oracle: smallest integer exceeding log_{5/6}(1/3)
        let oracle = ((1.0f64 / 3.0).ln() / (5.0f64 / 6.0).ln()).floor() as u64 + 1;
        assert_eq!(oracle, 7);
        assert_eq!(q.nstar, 7);
        let second = (1.0f64 - 1.0 / (0.5 * 7.0)).powf(1.0 / 7.0);
        let expected_delta = ((q.gamma + 1.0) / 2.0).max(second);
        assert!((q.delta - expected_delta).abs() < 1e-15);
        assert!(q.delta > q.gamma && q.delta < 1.0);
    }

    #[test]
    fn gamma_exceeds_beta() {
        for &(b, m) in &[(0.1, 0.3), (0.5, 9.0), (0.999, 2.0), (0.3, 1e-3)] {
            let q = stage_quantities(b, m).unwrap();
            assert!(q.gamma >= (b + 1.0) / 2.0 - 1e-15);
            assert!(q.gamma > b);
            assert!(q.nstar >= 1);
            assert!(q.delta > q.gamma && q.delta < 1.0);
        }
    }

    #[test]
    fn p_at_beta_and_gamma() {
        let (b, m) = (0.5, 1.0);
        let q = stage_quantities(b, m).unwrap();
        let pb = p_value(b, m, b).unwrap();
        assert!((pb - (1.0 - 0.5f64.powi(q.nstar as i32)).powi(2)).abs() < 1e-15);
        assert!(p_value(b, m, q.gamma).unwrap() >= m);
        assert!(p_value(b, m, (q.delta + 1.0) / 2.0).unwrap() <= 1.0);
        assert!(p_value(b, m, 1.0).is_err());
    }

    #[test]
    fn first_stage_from_half() {
        let st = generate(0.5, 1).unwrap();
        assert_eq!(st[0].n, 1);
        assert_eq!(st[0].eps_n, 0.5);
        assert!((st[0].gamma_n - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(st[0].big_n, 7);
    }

    #[test]
    fn recursion_interleaves_until_precision_runs_out() {
        let st = generate(0.5, 5).unwrap();
        for (i, s) in st.iter().enumerate() {
            assert_eq!(s.n, i + 1);
            assert!(s.interleaving_holds());
            if i + 1 < st.len() {
                assert_eq!(st[i + 1].alpha_n, s.alpha_next);
            }
        }
        match generate(0.5, 40) {
            Err(Error::DegenerateStage { stage, gap }) => {
                assert!(stage > 5);
                assert!(gap < MIN_GAP);
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
        assert!(generate(0.4, 1).is_err());
        assert!(generate(0.5, 0).is_err());
    }

    #[test]
    fn explicit_model_shape() {
        let st = generate(0.5, 2).unwrap();
        let cx = build_example_mdp(&st, 15).unwrap();
        assert_eq!(cx.n_max, 1);
        assert_eq!(cx.mdp.num_states(), 15);
        let last = cx.index_of(CxState::Branch { n: 1, k: 14 }).unwrap();
        assert_eq!(cx.mdp.actions(last)[0].row.entries(), &[(0, 1.0)]);
        for k in 1..=14u64 {
            let x = cx.index_of(CxState::Branch { n: 1, k }).unwrap();
            let c = cx.mdp.actions(x)[0].cost.value();
            assert_eq!(c, if k <= 7 { 0.5 } else { 1.5 });
        }
        assert!(matches!(
            build_example_mdp(&st, 14),
            Err(Error::BudgetTooSmall { needed: 15, .. })
        ));
        let both = build_example_mdp(&st, 1 + 14 + st[1].branch_len() as usize).unwrap();
        assert_eq!(both.n_max, 2);
        assert_eq!(both.index_of(CxState::Branch { n: 2, k: 1 }), Some(15));
        assert!(both.index_of(CxState::Branch { n: 3, k: 1 }).is_none());
    }

    #[test]
    fn closed_form_special_states() {
        let st = generate(0.5, 1).unwrap();
        let alpha = 0.9;
        let e = 1.0 - alpha;
        assert!((closed_form_v(&st, alpha, CxState::Zero).unwrap() - 10.0).abs() < 1e-12);
        let v1 = closed_form_v(&st, alpha, CxState::Branch { n: 1, k: 1 }).unwrap();
        let expect1 = 1.0 / e - 0.5 * (1.0 - alpha.powi(7)).powi(2) / e;
        assert!((v1 - expect1).abs() < 1e-12);
        let vlast = closed_form_v(&st, alpha, CxState::Branch { n: 1, k: 14 }).unwrap();
        assert!((vlast - (1.0 / e + 0.5)).abs() < 1e-12);
        assert!(closed_form_v(&st, alpha, CxState::Branch { n: 1, k: 15 }).is_err());
        assert!(closed_form_v(&st, alpha, CxState::Branch { n: 2, k: 1 }).is_err());
    }

    #[test]
    fn m_scan_bounds() {
        let st = generate(0.5, 3).unwrap();
        // α ≤ α⁽¹⁾: every term ≤ 1
        for &alpha in &[0.1, 0.3, 0.5] {
            let scan = closed_form_m(&st, alpha, DEFAULT_STAGE_CAP).unwrap();
            assert!(scan.m >= 1.0 / (1.0 - alpha) - 1.0 - 1e-12);
        }
        for s in &st {
            let scan = closed_form_m(&st, s.gamma_n, DEFAULT_STAGE_CAP).unwrap();
            assert!(scan.m <= 1.0 / s.gamma_gap - s.n as f64 + 1e-9);
            for t in &st {
                let v = closed_form_v(&st, s.gamma_n, CxState::Branch { n: t.n, k: 1 }).unwrap();
                assert!(scan.m <= v + 1e-9 * v);
            }
        }
        assert!(matches!(
            closed_form_m(&st, 1.0 - 1e-15, DEFAULT_STAGE_CAP),
            Err(Error::StageCap { .. })
        ));
    }

    #[test]
    fn proposition_first_stage() {
        let st = generate(0.5, 1).unwrap();
        let rep = proposition_check(&st).unwrap();
        assert!(rep.all_ok);
        assert!(rep.stages[0].u_at_gamma_n >= 1.0);
        assert!(rep.stages[0].u_at_alpha_n <= 1.0);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lemma_ordering(beta in 0.001f64..0.999, m in 0.01f64..100.0) {
                let q = stage_quantities(beta, m).unwrap();
                prop_assert!(beta < q.gamma && q.gamma < q.delta && q.delta < 1.0);
                prop_assert!(p_from_gap(q.eps, q.nstar, q.gamma_gap) >= m - 1e-12);
                prop_assert!(p_from_gap(q.eps, q.nstar, q.eps) <= 1.0 + 1e-12);
                prop_assert!(p_from_gap(q.eps, q.nstar, q.delta_gap) <= 1.0 + 1e-12);
            }

            #[test]
            fn stages_interleave(alpha1 in 0.5f64..0.999) {
                let st = generate(alpha1, 3).unwrap();
                for w in st.windows(2) {
                    prop_assert_eq!(w[0].alpha_next, w[1].alpha_n);
                    prop_assert!(w[0].gamma_n < w[1].alpha_n);
                }
                prop_assert!(proposition_check(&st).unwrap().all_ok);
            }
        }
    }
}
