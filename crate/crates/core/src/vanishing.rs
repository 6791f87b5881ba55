//! Vanishing-discount analysis of the average-cost criterion.
//!
//! The limits `α ↑ 1` are not finitely computable, so every limit quantity here is
//! a *grid estimate*: `liminf`/`limsup` become min/max over the top fraction of a
//! discount grid, and the limit of `U_α` becomes `U` at the last grid point.

use serde::Serialize;

use crate::chain::long_run_average;
use crate::discounted::{solve_discounted, ARGMIN_TOL};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::mdp::{expectation_f64, Mdp, ValueFunction};
use crate::policy::StationaryPolicy;

pub const DEFAULT_GRID_K: usize = 20;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;
pub const DEFAULT_THRESHOLD: f64 = 1e6;

/// Strictly increasing discount factors in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscountGrid {
    alphas: Vec<f64>,
}

impl DiscountGrid {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidArgument("discount grid is empty".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(Error::InvalidArgument(format!(
                "grid point {a} outside [0, 1)"
            )));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "discount grid must be strictly increasing".into(),
            ));
        }
        Ok(DiscountGrid { alphas })
    }

    /// `α_k = 1 − 2^{−k}` for `k = 1..=K`.
    pub fn geometric(k: usize) -> Result<Self> {
        let k = i32::try_from(k).map_err(|_| Error::InvalidArgument("K too large".into()))?;
        Self::new((1..=k).map(|i| 1.0 - 2f64.powi(-i)).collect())
    }

    /// Union with extra points (sorted, duplicates dropped).
    pub fn merged(&self, extra: &[f64]) -> Result<Self> {
        let mut all: Vec<f64> = self.alphas.iter().chain(extra).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        Self::new(all)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.alphas.last().expect("nonempty grid")
    }

    /// Index of the first point of the top `fraction` of the grid (at least one point).
    pub fn tail_start(&self, fraction: f64) -> usize {
        let count = ((self.len() as f64) * fraction).ceil() as usize;
        self.len() - count.clamp(1, self.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub tail_fraction: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            tol: 1e-9,
            max_iters: 10_000_000,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        }
    }
}

/// `v_α`, `m_α`, `u_α` on a grid plus the tail estimates of `liminf`/`limsup`
/// of `(1−α) m_α`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VanishingProfile {
    pub grid: DiscountGrid,
    pub v: Vec<ValueFunction>,
    pub m: Vec<f64>,
    pub u: Vec<ValueFunction>,
    /// Grid estimate of `w̲`.
    pub w_lo: f64,
    /// Grid estimate of `w̄`.
    pub w_hi: f64,
    pub tail_fraction: f64,
    /// Discount-optimal policies per grid point (empty when built from values).
    pub policies: Vec<StationaryPolicy>,
    /// Set when the values come from a truncation of a larger model, so `m_α`
    /// may differ from the full model's.
    pub truncated: bool,
}

impl VanishingProfile {
    /// Assembles a profile from per-grid-point value functions.
    pub fn from_values(
        grid: DiscountGrid,
        v: Vec<ValueFunction>,
        tail_fraction: f64,
    ) -> Result<Self> {
        if v.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} value functions for {} grid points",
                v.len(),
                grid.len()
            )));
        }
        if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail fraction {tail_fraction} outside (0, 1]"
            )));
        }
        let mut m = Vec::with_capacity(v.len());
        let mut u = Vec::with_capacity(v.len());
        for (&alpha, va) in grid.alphas().iter().zip(&v) {
            let ma = va.iter().min().unwrap_or(ExtReal::INFINITY);
            if ma.is_infinite() {
                return Err(Error::InfiniteOptimalAverage { alpha });
            }
            m.push(ma.value());
            u.push(ValueFunction(
                va.iter()
                    .map(|x| x.checked_sub(ma).expect("m_alpha is the minimum"))
                    .collect(),
            ));
        }
        Self::from_parts(grid, v, m, u, tail_fraction)
    }

    /// Assembles a profile from values, `m_α` and `u_α` computed elsewhere
    /// (for instance in closed form for a model too large to enumerate).
    pub fn from_parts(
        grid: DiscountGrid,
        v: Vec<ValueFunction>,
        m: Vec<f64>,
        u: Vec<ValueFunction>,
        tail_fraction: f64,
    ) -> Result<Self> {
        if v.len() != grid.len() || m.len() != grid.len() || u.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "profile parts do not match {} grid points",
                grid.len()
            )));
        }
        if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail fraction {tail_fraction} outside (0, 1]"
            )));
        }
        let tail = grid.tail_start(tail_fraction);
        let scaled: Vec<f64> = grid.alphas()[tail..]
            .iter()
            .zip(&m[tail..])
            .map(|(a, m)| (1.0 - a) * m)
            .collect();
        let w_lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        let w_hi = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(VanishingProfile {
            grid,
            v,
            m,
            u,
            w_lo,
            w_hi,
            tail_fraction,
            policies: Vec::new(),
            truncated: false,
        })
    }

    pub fn num_states(&self) -> usize {
        self.v.first().map_or(0, ValueFunction::len)
    }

    pub fn tail_start(&self) -> usize {
        self.grid.tail_start(self.tail_fraction)
    }

    /// `(1 − α) m_α` at grid index `i`.
    pub fn scaled_m(&self, i: usize) -> f64 {
        (1.0 - self.grid.alphas()[i]) * self.m[i]
    }

    /// Rows `(alpha, m_alpha, one_minus_alpha_times_m, u_alpha per state…)`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, state_labels: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "alpha".to_string(),
            "m_alpha".to_string(),
            "one_minus_alpha_times_m".to_string(),
        ];
        header.extend(state_labels.iter().map(|s| format!("u_alpha[{s}]")));
        w.write_record(&header)?;
        for (i, &alpha) in self.grid.alphas().iter().enumerate() {
            let mut rec = vec![
                alpha.to_string(),
                self.m[i].to_string(),
                self.scaled_m(i).to_string(),
            ];
            rec.extend(self.u[i].iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves the discounted problem at every grid point and assembles the profile.
/// Rejected if `m_α = +∞` at some grid point.
pub fn discount_profile(
    mdp: &Mdp,
    grid: &DiscountGrid,
    config: &ProfileConfig,
) -> Result<VanishingProfile> {
    let mut v = Vec::with_capacity(grid.len());
    let mut policies = Vec::with_capacity(grid.len());
    for &alpha in grid.alphas() {
        let sol = solve_discounted(mdp, alpha, config.tol, config.max_iters)?;
        v.push(sol.v);
        policies.push(sol.policy);
    }
    let mut profile = VanishingProfile::from_values(grid.clone(), v, config.tail_fraction)?;
    profile.policies = policies;
    Ok(profile)
}

/// `U_β(x) = min { u_α(x) : α in grid, α ≥ β }`.
pub fn big_u(profile: &VanishingProfile, beta: f64) -> Result<Vec<ExtReal>> {
    let start = profile
        .grid
        .alphas()
        .iter()
        .position(|&a| a >= beta)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "beta = {beta} exceeds the last grid point {}",
                profile.grid.last()
            ))
        })?;
    Ok(tail_min(profile, start))
}

fn tail_min(profile: &VanishingProfile, start: usize) -> Vec<ExtReal> {
    (0..profile.num_states())
        .map(|x| {
            profile.u[start..]
                .iter()
                .map(|u| u[x])
                .min()
                .expect("nonempty tail")
        })
        .collect()
}

/// Grid estimate of `u = lim_{α↑1} U_α`: `U` at the last grid point.
pub fn limit_u(profile: &VanishingProfile) -> Result<Vec<ExtReal>> {
    if profile.grid.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "limit estimate needs at least 4 grid points, got {}",
            profile.grid.len()
        )));
    }
    big_u(profile, profile.grid.last())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateDiagnostic {
    /// `max_grid u_α(x)` and where it is attained.
    pub grid_max: ExtReal,
    pub grid_max_alpha: f64,
    /// `min_tail u_α(x)` and where it is attained.
    pub tail_min: ExtReal,
    pub tail_min_alpha: f64,
    pub b_holds: bool,
    pub bul_holds: bool,
    /// First grid point with `u_α(x) > threshold` (B failure witness).
    pub b_witness: Option<f64>,
    /// Tail point attaining the tail minimum when it exceeds the threshold.
    pub bul_witness: Option<f64>,
}

/// Grid evidence for Assumption B (`sup_α u_α < ∞`) and Assumption B̲
/// (`liminf u_α < ∞`). Both verdicts depend on the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub threshold: f64,
    pub states: Vec<StateDiagnostic>,
    pub b_holds_on_grid: bool,
    pub bul_holds_on_grid: bool,
    /// Always true: the verdicts are finite-grid estimates and can change when
    /// the grid is refined (e.g. B may hold only because spike points are missing).
    pub grid_dependent: bool,
}

pub fn assumption_report(profile: &VanishingProfile, threshold: f64) -> AssumptionReport {
    let alphas = profile.grid.alphas();
    let tail = profile.tail_start();
    let bound = ExtReal::new(threshold).unwrap_or(ExtReal::ZERO);
    let states: Vec<StateDiagnostic> = (0..profile.num_states())
        .map(|x| {
            let mut max = (ExtReal::ZERO, alphas[0]);
            let mut witness = None;
            for (i, u) in profile.u.iter().enumerate() {
                if u[x] > max.0 {
                    max = (u[x], alphas[i]);
                }
                if witness.is_none() && u[x] > bound {
                    witness = Some(alphas[i]);
                }
            }
            let mut min = (ExtReal::INFINITY, alphas[tail]);
            for (i, u) in profile.u.iter().enumerate().skip(tail) {
                if u[x] < min.0 || i == tail {
                    min = (u[x], alphas[i]);
                }
            }
            let b_holds = max.0 <= bound;
            let bul_holds = min.0 <= bound;
            debug_assert!(!b_holds || bul_holds);
            StateDiagnostic {
                grid_max: max.0,
                grid_max_alpha: max.1,
                tail_min: min.0,
                tail_min_alpha: min.1,
                b_holds,
                bul_holds,
                b_witness: witness,
                bul_witness: (!bul_holds).then_some(min.1),
            }
        })
        .collect();
    AssumptionReport {
        threshold,
        b_holds_on_grid: states.iter().all(|s| s.b_holds),
        bul_holds_on_grid: states.iter().all(|s| s.bul_holds),
        grid_dependent: true,
        states,
    }
}

fn finite_u(u: &[ExtReal]) -> Result<Vec<f64>> {
    u.iter()
        .enumerate()
        .map(|(x, v)| {
            if v.is_finite() {
                Ok(v.value())
            } else {
                Err(Error::InfiniteRelativeValue { state: x })
            }
        })
        .collect()
}

/// `η_u^1(x, a) = c(x, a) + Σ_z q(z | x, a) u(z)` for every action at `x`.
fn undiscounted_eta(mdp: &Mdp, u: &[f64], x: usize) -> Vec<f64> {
    mdp.actions(x)
        .iter()
        .map(|act| act.cost.value() + expectation_f64(&act.row, u))
        .collect()
}

/// Residuals `w_hi + u(x) − min_a η_u^1(x, a)` of the average-cost optimality
/// inequality. Nonnegative residuals mean the inequality holds.
pub fn aco_check(mdp: &Mdp, u: &[ExtReal], w_hi: f64) -> Result<Vec<f64>> {
    if u.len() != mdp.num_states() {
        return Err(Error::InvalidArgument(format!(
            "u has {} entries, model has {} states",
            u.len(),
            mdp.num_states()
        )));
    }
    let uf = finite_u(u)?;
    Ok((0..mdp.num_states())
        .map(|x| {
            let best = undiscounted_eta(mdp, &uf, x)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            w_hi + uf[x] - best
        })
        .collect())
}

/// Discounted intermediate of the inequality on the grid tail:
/// `w_hi + ε* + u(x) − min_a η_{U_α}^α(x, a)` for every tail point `α`.
pub fn aco_tail_check(
    mdp: &Mdp,
    profile: &VanishingProfile,
    u: &[ExtReal],
    eps_star: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let uf = finite_u(u)?;
    let alphas = profile.grid.alphas();
    (profile.tail_start()..alphas.len())
        .map(|i| {
            let alpha = alphas[i];
            let big = finite_u(&tail_min(profile, i))?;
            let residuals = (0..mdp.num_states())
                .map(|x| {
                    let best = mdp
                        .actions(x)
                        .iter()
                        .map(|act| act.cost.value() + alpha * expectation_f64(&act.row, &big))
                        .fold(f64::INFINITY, f64::min);
                    profile.w_hi + eps_star + uf[x] - best
                })
                .collect();
            Ok((alpha, residuals))
        })
        .collect()
}

/// `A_u(x)` (minimizers of `η_u^1(x, ·)`) and `A^u(x)` (actions with
/// `w̄ + u(x) ≥ η_u^1(x, a)`), both with tolerance [`ARGMIN_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageArgminSets {
    pub minimizers: Vec<Vec<usize>>,
    pub inequality_sets: Vec<Vec<usize>>,
}

/// Stationary policy choosing the lowest-index minimizer of `η_u^1(x, ·)`.
pub fn average_policy(
    mdp: &Mdp,
    u: &[ExtReal],
    w_hi: f64,
) -> Result<(StationaryPolicy, AverageArgminSets)> {
    let uf = finite_u(u)?;
    let mut policy = Vec::with_capacity(uf.len());
    let mut minimizers = Vec::with_capacity(uf.len());
    let mut inequality_sets = Vec::with_capacity(uf.len());
    for x in 0..mdp.num_states() {
        let etas = undiscounted_eta(mdp, &uf, x);
        let best = etas.iter().copied().fold(f64::INFINITY, f64::min);
        let mins: Vec<usize> = (0..etas.len())
            .filter(|&a| etas[a] <= best + ARGMIN_TOL)
            .collect();
        let ineq: Vec<usize> = (0..etas.len())
            .filter(|&a| w_hi + uf[x] + ARGMIN_TOL >= etas[a])
            .collect();
        policy.push(mins[0]);
        minimizers.push(mins);
        inequality_sets.push(ineq);
    }
    Ok((
        StationaryPolicy(policy),
        AverageArgminSets {
            minimizers,
            inequality_sets,
        },
    ))
}

/// Full average-cost analysis of a model on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageReport {
    pub u_estimate: Vec<ExtReal>,
    pub assumptions: AssumptionReport,
    pub w_lo: f64,
    pub w_hi: f64,
    /// `min_x` of the extracted policy's long-run average, the witness for `w*`.
    pub w_star: ExtReal,
    pub sandwich_ok: bool,
    pub acoi_residuals: Vec<f64>,
    pub policy: StationaryPolicy,
    pub argmin: AverageArgminSets,
    pub policy_average: Vec<ExtReal>,
}

/// Tolerance used in the sandwich check `w_hi ≤ w* + tol`.
pub const SANDWICH_TOL: f64 = 1e-6;

pub fn analyze_average(
    mdp: &Mdp,
    profile: &VanishingProfile,
    threshold: f64,
) -> Result<AverageReport> {
    let assumptions = assumption_report(profile, threshold);
    let u = limit_u(profile)?;
    let acoi_residuals = aco_check(mdp, &u, profile.w_hi)?;
    let (policy, argmin) = average_policy(mdp, &u, profile.w_hi)?;
    let policy_average = long_run_average(mdp, &policy)?;
    let w_star = policy_average
        .iter()
        .copied()
        .min()
        .unwrap_or(ExtReal::INFINITY);
    let sandwich_ok = 0.0 <= profile.w_lo
        && profile.w_lo <= profile.w_hi
        && profile.w_hi <= w_star.value() + SANDWICH_TOL;
    Ok(AverageReport {
        u_estimate: u,
        assumptions,
        w_lo: profile.w_lo,
        w_hi: profile.w_hi,
        w_star,
        sandwich_ok,
        acoi_residuals,
        policy,
        argmin,
        policy_average,
    })
}
