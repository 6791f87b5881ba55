//! Acceptance gate. Runs without the libtest harness so every criterion prints
//! exactly one PASS/FAIL line; exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;
use vdmdp::chain::long_run_average;
use vdmdp::counterexample::{
    build_example_mdp, closed_form_v, generate, p_value, proposition_check, stage_quantities,
    CxState,
};
use vdmdp::discounted::{
    finite_horizon_policy, markov_policy_value, solve_discounted, value_iteration,
};
use vdmdp::mdp::{Action, Mdp, TransitionRow};
use vdmdp::policy::{MarkovPolicy, StationaryPolicy};
use vdmdp::selection::{optimal_selector, value_and_domain, ArgminSet, SelectionProblem};
use vdmdp::sim::{average_batch, simulate, MeanEstimate};
use vdmdp::vanishing::{
    aco_check, analyze_average, discount_profile, limit_u, DiscountGrid, ProfileConfig,
};
use vdmdp::ExtReal;

use common::{ext, random_mdp, rng, RandomMdpSpec};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))
}

fn absorbing(cost: f64) -> Mdp {
    Mdp::new(
        vec!["x".into()],
        vec![vec![Action::new(
            "stay",
            ext(cost),
            TransitionRow::point(0),
        )]],
    )
    .unwrap()
}

fn geometric_series() -> Outcome {
    let start = Instant::now();
    let m = absorbing(1.0);
    let mut worst = 0.0f64;
    for &alpha in &[0.0, 0.5, 0.9, 0.99] {
        let sol = solve_discounted(&m, alpha, 1e-9, 10_000_000).map_err(|e| e.to_string())?;
        let err = (sol.v[0].value() - 1.0 / (1.0 - alpha)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("alpha {alpha}: error {err:e}"))?;
    }
    within_time(start, Duration::from_secs(1))?;
    Ok(format!("max error {worst:e}"))
}

fn closed_form_cross_check() -> Outcome {
    let start = Instant::now();
    let st = generate(0.5, 1).map_err(|e| e.to_string())?;
    let cx = build_example_mdp(&st, 1 + st[0].branch_len() as usize).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 1..=20 {
        let alpha = 0.999 * i as f64 / 20.0;
        let sol = solve_discounted(&cx.mdp, alpha, 1e-12, 10_000_000).map_err(|e| e.to_string())?;
        for (x, &state) in cx.states.iter().enumerate() {
            let exact = closed_form_v(&st, alpha, state).map_err(|e| e.to_string())?;
            let rel = (sol.v[x].value() - exact).abs() / exact.abs();
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || {
                format!("alpha {alpha}, state {state}: relative error {rel:e}")
            })?;
        }
    }
    within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "{} states x 20 alphas, max relative error {worst:e}",
        cx.states.len()
    ))
}

/// Stage parameters from the plain formulas, without the gap bookkeeping.
fn naive_stages(alpha1: f64, count: usize) -> Vec<(f64, f64, f64)> {
    let mut alpha = alpha1;
    let mut out = Vec::new();
    for n in 1..=count {
        let m = n as f64;
        let eps = 1.0 - alpha;
        let gamma = ((alpha + 1.0) / 2.0).max(1.0 - eps / (3.0 * m));
        let arg = (0.5f64).min(m * (1.0 - gamma) / eps);
        let big_n = (arg.ln() / gamma.ln()).floor() + 1.0;
        let base = 1.0 - 1.0 / (eps * big_n);
        let second = if base < 0.0 {
            f64::NEG_INFINITY
        } else {
            base.powf(1.0 / big_n)
        };
        let delta = ((gamma + 1.0) / 2.0).max(second);
        out.push((eps, gamma, big_n));
        alpha = delta;
    }
    out
}

/// `u_α(0) = sup_n ε⁽ⁿ⁾(1 − α^{N(n)})²/(1 − α)` over the listed stages.
fn naive_u0(stages: &[(f64, f64, f64)], alpha: f64) -> f64 {
    stages
        .iter()
        .map(|&(eps, _, big_n)| eps * (1.0 - alpha.powf(big_n)).powi(2) / (1.0 - alpha))
        .fold(0.0, f64::max)
}

fn proposition_reproduction() -> Outcome {
    let start = Instant::now();
    let st = generate(0.5, 3).map_err(|e| e.to_string())?;
    let report = proposition_check(&st).map_err(|e| e.to_string())?;
    let oracle = naive_stages(0.5, 5);
    let mut lines = Vec::new();
    for (r, s) in report.stages.iter().zip(&st) {
        let n = r.n as f64;
        ensure(r.u_at_gamma_n >= n - 1e-9, || {
            format!("stage {}: u_gamma(0) = {}", r.n, r.u_at_gamma_n)
        })?;
        ensure(r.u_at_alpha_n <= 1.0 + 1e-9, || {
            format!("stage {}: u_alpha(0) = {}", r.n, r.u_at_alpha_n)
        })?;
        let og = naive_u0(&oracle, oracle[r.n - 1].1);
        let oa = naive_u0(&oracle, 1.0 - oracle[r.n - 1].0);
        ensure(
            (og - r.u_at_gamma_n).abs() <= 1e-6 * og && (oa - r.u_at_alpha_n).abs() <= 1e-6,
            || {
                format!(
                    "stage {}: oracle ({oa}, {og}) vs ({}, {})",
                    r.n, r.u_at_alpha_n, r.u_at_gamma_n
                )
            },
        )?;
        ensure(oracle[r.n - 1].2 as u64 == s.big_n, || {
            format!("stage {}: N mismatch", r.n)
        })?;
        lines.push(format!(
            "n={} u_alpha={:.6} u_gamma={:.6}",
            r.n, r.u_at_alpha_n, r.u_at_gamma_n
        ));
    }
    within_time(start, Duration::from_secs(5))?;
    Ok(lines.join(", "))
}

fn lemma_property_suite() -> Outcome {
    let start = Instant::now();
    let mut r = rng(4);
    let mut max_p = f64::NEG_INFINITY;
    let mut min_margin = f64::INFINITY;
    for _ in 0..100 {
        let beta: f64 = r.gen_range(0.001..0.999);
        let m: f64 = 10f64.powf(r.gen_range(-2.0..2.0));
        let q = stage_quantities(beta, m).map_err(|e| e.to_string())?;
        for k in 1..=50 {
            let low = beta * k as f64 / 50.0;
            let high = q.delta + (1.0 - q.delta) * (k - 1) as f64 / 50.0;
            for alpha in [low, high] {
                let p = p_value(beta, m, alpha).map_err(|e| e.to_string())?;
                max_p = max_p.max(p);
                ensure(p <= 1.0 + 1e-12, || {
                    format!("beta {beta}, M {m}, alpha {alpha}: p = {p}")
                })?;
            }
        }
        let pg = p_value(beta, m, q.gamma).map_err(|e| e.to_string())?;
        min_margin = min_margin.min(pg - m);
        ensure(pg >= m - 1e-12, || {
            format!("beta {beta}, M {m}: p(gamma) = {pg}")
        })?;
    }
    within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "max sampled p {max_p:.15}, min p(gamma) - M {min_margin:e}"
    ))
}

struct AverageCase {
    w_lo: f64,
    w_hi: f64,
    min_average: f64,
    residuals: Vec<f64>,
    averages: Vec<f64>,
    /// `(1 − α_K) max_x u(x)`, the size of the grid bias in `u` and `w_hi`.
    bias_scale: f64,
}

fn average_cases() -> Result<Vec<AverageCase>, String> {
    let mut r = rng(5);
    // Full-support rows: every stationary policy is irreducible, so the
    // relative values stay bounded as α ↑ 1.
    let spec = RandomMdpSpec {
        density: 1.0,
        ..RandomMdpSpec::default()
    };
    let grid = DiscountGrid::geometric(18).map_err(|e| e.to_string())?;
    (0..50)
        .map(|_| {
            let m = random_mdp(&mut r, &spec);
            let profile = discount_profile(&m, &grid, &ProfileConfig::default())
                .map_err(|e| e.to_string())?;
            let report = analyze_average(&m, &profile, 1e6).map_err(|e| e.to_string())?;
            let u = limit_u(&profile).map_err(|e| e.to_string())?;
            let residuals = aco_check(&m, &u, profile.w_hi).map_err(|e| e.to_string())?;
            let averages = long_run_average(&m, &report.policy).map_err(|e| e.to_string())?;
            Ok(AverageCase {
                w_lo: profile.w_lo,
                w_hi: profile.w_hi,
                min_average: averages.iter().copied().min().unwrap().value(),
                residuals,
                averages: averages.iter().map(|x| x.value()).collect(),
                bias_scale: (1.0 - grid.last()) * u.iter().map(|x| x.value()).fold(0.0, f64::max),
            })
        })
        .collect()
}

fn sandwich(cases: &[AverageCase]) -> Outcome {
    let mut slack = f64::INFINITY;
    for (i, c) in cases.iter().enumerate() {
        ensure(
            0.0 <= c.w_lo && c.w_lo <= c.w_hi && c.w_hi <= c.min_average + 1e-6,
            || {
                format!(
                    "model {i}: w_lo {} w_hi {} w* {}",
                    c.w_lo, c.w_hi, c.min_average
                )
            },
        )?;
        slack = slack.min(c.min_average - c.w_hi);
    }
    Ok(format!("{} models, min (w* - w_hi) {slack:e}", cases.len()))
}

fn acoi(cases: &[AverageCase]) -> Outcome {
    let mut worst_res = f64::INFINITY;
    let mut worst_avg = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    let mut failing = 0;
    for c in cases {
        let res = c.residuals.iter().copied().fold(f64::INFINITY, f64::min);
        let avg = c
            .averages
            .iter()
            .map(|g| g - c.w_hi)
            .fold(f64::NEG_INFINITY, f64::max);
        worst_res = worst_res.min(res);
        worst_avg = worst_avg.max(avg);
        if c.bias_scale > 0.0 {
            worst_ratio = worst_ratio.max((-res).max(avg) / c.bias_scale);
        }
        if res < -1e-6 || avg > 1e-6 {
            failing += 1;
        }
    }
    let summary = format!(
        "min residual {worst_res:e}, max (average - w_hi) {worst_avg:e}, {failing}/{} models outside 1e-6; \
         largest violation / ((1 - alpha_K) max u) = {worst_ratio:.3}",
        cases.len()
    );
    if failing == 0 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn all_markov_policies(horizon: usize) -> Vec<MarkovPolicy> {
    let rules: Vec<StationaryPolicy> = (0..4)
        .map(|b| StationaryPolicy(vec![b & 1, b >> 1]))
        .collect();
    let mut out = vec![MarkovPolicy { epochs: Vec::new() }];
    for _ in 0..horizon {
        out = out
            .into_iter()
            .flat_map(|p| {
                rules.iter().map(move |d| {
                    let mut e = p.epochs.clone();
                    e.push(d.clone());
                    MarkovPolicy { epochs: e }
                })
            })
            .collect();
    }
    out
}

fn oracle_equivalence() -> Outcome {
    let rows = [
        TransitionRow::point(0),
        TransitionRow::point(1),
        TransitionRow::new(vec![(0, 0.5), (1, 0.5)]),
    ];
    let policies = all_markov_policies(3);
    let mut count = 0;
    for &alpha in &[0.5, 1.0] {
        for costs in 0..81u32 {
            for trans in 0..81u32 {
                let digit = |v: u32, i: u32| (v / 3u32.pow(i) % 3) as usize;
                let actions: Vec<Vec<Action>> = (0..2)
                    .map(|x| {
                        (0..2)
                            .map(|a| {
                                let i = (2 * x + a) as u32;
                                Action::new(
                                    format!("a{a}"),
                                    ext(digit(costs, i) as f64),
                                    rows[digit(trans, i)].clone(),
                                )
                            })
                            .collect()
                    })
                    .collect();
                let m = Mdp::new(vec!["x0".into(), "x1".into()], actions).unwrap();
                let fh = finite_horizon_policy(&m, alpha, 3).map_err(|e| e.to_string())?;
                let got = markov_policy_value(&m, &fh, alpha).map_err(|e| e.to_string())?;
                let mut best = [ExtReal::INFINITY; 2];
                for p in &policies {
                    let v = markov_policy_value(&m, p, alpha).map_err(|e| e.to_string())?;
                    for x in 0..2 {
                        best[x] = best[x].min(v[x]);
                    }
                }
                ensure(got.values() == best, || {
                    format!(
                        "alpha {alpha}, costs {costs}, rows {trans}: {:?} vs {best:?}",
                        got.values()
                    )
                })?;
                count += 1;
            }
        }
    }
    Ok(format!(
        "{count} instances, {} policies each",
        policies.len()
    ))
}

fn monotonicity() -> Outcome {
    let mut r = rng(8);
    let spec = RandomMdpSpec {
        inf_prob: 0.1,
        ..RandomMdpSpec::default()
    };
    let mut alphas = vec![0.0];
    alphas.extend(DiscountGrid::geometric(12).unwrap().alphas());
    alphas.push(1.0);
    let horizon = 60;
    for i in 0..40 {
        let m = random_mdp(&mut r, &spec);
        let traces = alphas
            .iter()
            .map(|&a| value_iteration(&m, a, horizon))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        for tr in &traces {
            for t in 0..horizon {
                ensure(tr.iterates[t].le(&tr.iterates[t + 1]), || {
                    format!("model {i}, alpha {}: not monotone at t = {t}", tr.alpha)
                })?;
            }
        }
        for w in traces.windows(2) {
            for t in 0..=horizon {
                ensure(w[0].iterates[t].le(&w[1].iterates[t]), || {
                    format!(
                        "model {i}, t = {t}: alpha {} above alpha {}",
                        w[0].alpha, w[1].alpha
                    )
                })?;
            }
        }
    }
    Ok(format!("40 models, {} alphas, T = {horizon}", alphas.len()))
}

fn selection_oracle() -> Outcome {
    let mut r = rng(9);
    let mut off_domain = 0;
    for i in 0..1000 {
        let n = r.gen_range(1..=6);
        let objective: Vec<Vec<ExtReal>> = (0..n)
            .map(|_| {
                let k = r.gen_range(1..=6);
                (0..k)
                    .map(|_| {
                        if r.gen_bool(0.1) {
                            ExtReal::INFINITY
                        } else {
                            ext(r.gen_range(0..5) as f64 * 0.5)
                        }
                    })
                    .collect()
            })
            .collect();
        let problem = SelectionProblem::new(objective.clone()).unwrap();
        let (v, dom) = value_and_domain(&problem);
        let res = optimal_selector(&problem);
        for (x, row) in objective.iter().enumerate() {
            let mut best = ExtReal::INFINITY;
            for &u in row {
                if u < best {
                    best = u;
                }
            }
            let in_dom = best.is_finite();
            let expected_set = if in_dom {
                ArgminSet::Explicit((0..row.len()).filter(|&a| row[a] == best).collect())
            } else {
                off_domain += 1;
                ArgminSet::AllActions
            };
            let expected_sel = if in_dom { expected_set.first() } else { None };
            ensure(
                v[x] == best
                    && dom[x] == in_dom
                    && res.v[x] == best
                    && res.dom_mask[x] == in_dom
                    && res.argmin_sets[x] == expected_set
                    && res.selector[x] == expected_sel,
                || format!("problem {i}, state {x}: mismatch"),
            )?;
        }
    }
    Ok(format!("1000 problems, {off_domain} states off the domain"))
}

fn simulation_consistency() -> Outcome {
    let st = generate(0.5, 1).map_err(|e| e.to_string())?;
    let cx = build_example_mdp(&st, 1 + st[0].branch_len() as usize).map_err(|e| e.to_string())?;
    let policy = StationaryPolicy(vec![0; cx.mdp.num_states()]);
    let x0 = cx.index_of(CxState::Branch { n: 1, k: 1 }).unwrap();
    let horizon = 10 * st[0].branch_len() as usize;
    let stats = simulate(&cx.mdp, &policy, x0, horizon, 0, &[]).map_err(|e| e.to_string())?;
    let fin = stats.final_average.value();
    ensure((fin - 1.0).abs() <= 0.2, || format!("final average {fin}"))?;
    let target = long_run_average(&cx.mdp, &policy).map_err(|e| e.to_string())?[x0].value();
    ensure(target == 1.0, || format!("long-run average {target}"))?;
    let samples: Vec<f64> = average_batch(&cx.mdp, &policy, x0, horizon, 2024, 200)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|x| x.value())
        .collect();
    let est = MeanEstimate::from_samples(&samples).unwrap();
    // Every path is deterministic here, so the standard error is 0.
    ensure(est.within(target, 3.0, 1e-12), || {
        format!("{est:?} vs {target}")
    })?;
    Ok(format!(
        "T = {horizon}, final average {fin}, 200-seed mean {} (se {})",
        est.mean, est.std_error
    ))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail} [{secs:.2}s]");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail} [{secs:.2}s]");
            false
        }
    }
}

fn main() {
    let mut ok = true;
    ok &= run("1 geometric series", geometric_series);
    ok &= run("2 closed-form cross-check", closed_form_cross_check);
    ok &= run(
        "3 relative-value contrast along alpha(n) and gamma(n)",
        proposition_reproduction,
    );
    ok &= run("4 p bounds for random (beta, M)", lemma_property_suite);
    let cases = average_cases();
    match &cases {
        Ok(cases) => {
            ok &= run("5 sandwich", || sandwich(cases));
            ok &= run("6 average-cost optimality inequality", || acoi(cases));
        }
        Err(e) => {
            println!("FAIL 5 sandwich: {e}");
            println!("FAIL 6 average-cost optimality inequality: {e}");
            ok = false;
        }
    }
    ok &= run("7 finite-horizon oracle", oracle_equivalence);
    ok &= run("8 monotonicity", monotonicity);
    ok &= run("9 selection oracle", selection_oracle);
    ok &= run("10 simulation consistency", simulation_consistency);
    if !ok {
        std::process::exit(1);
    }
}
