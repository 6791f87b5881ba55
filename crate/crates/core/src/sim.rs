//! Monte Carlo trajectories under a stationary policy.
//!
//! Randomness comes from ChaCha8 (`rand_chacha` 0.3). Trajectory `i` of a batch
//! seeded with `s` uses stream `i` of the generator keyed by `s`, so batches are
//! reproducible and independent of how they are split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::mdp::{Mdp, TransitionRow};
use crate::policy::StationaryPolicy;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF draw over a row sorted by target.
pub fn sample_next<R: Rng>(row: &TransitionRow, rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for &(y, p) in row.entries() {
        acc += p;
        if r < acc {
            return y;
        }
    }
    row.entries().last().expect("rows are nonempty").0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub seed: u64,
    pub stream: u64,
    pub horizon: usize,
    pub alphas: Vec<f64>,
    /// `Σ_{t<T} α^t c_t` per entry of `alphas`.
    pub discounted_cost: Vec<ExtReal>,
    /// `(1/t) Σ_{s<t} c_s` for `t = 1..=T`.
    pub running_average: Vec<ExtReal>,
    pub final_average: ExtReal,
    pub states: Vec<usize>,
}

pub fn simulate(
    mdp: &Mdp,
    policy: &StationaryPolicy,
    x0: usize,
    horizon: usize,
    seed: u64,
    alphas: &[f64],
) -> Result<TrajectoryStats> {
    simulate_stream(mdp, policy, x0, horizon, seed, 0, alphas)
}

pub fn simulate_stream(
    mdp: &Mdp,
    policy: &StationaryPolicy,
    x0: usize,
    horizon: usize,
    seed: u64,
    stream: u64,
    alphas: &[f64],
) -> Result<TrajectoryStats> {
    policy.check_feasible(mdp)?;
    if x0 >= mdp.num_states() {
        return Err(Error::InvalidArgument(format!(
            "start state {x0} outside 0..{}",
            mdp.num_states()
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {a} outside [0, 1]"
        )));
    }
    let mut rng = stream_rng(seed, stream);
    let mut x = x0;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut discounted = vec![ExtReal::ZERO; alphas.len()];
    let mut factors = vec![1.0; alphas.len()];
    let mut total = ExtReal::ZERO;
    let mut running = Vec::with_capacity(horizon);
    for t in 0..horizon {
        states.push(x);
        let act = mdp.action(x, policy.action(x))?;
        for ((d, f), &a) in discounted.iter_mut().zip(factors.iter_mut()).zip(alphas) {
            *d = *d + act.cost.scale(*f);
            *f *= a;
        }
        total = total + act.cost;
        running.push(total.scale(1.0 / (t + 1) as f64));
        x = sample_next(&act.row, &mut rng);
    }
    states.push(x);
    Ok(TrajectoryStats {
        seed,
        stream,
        horizon,
        alphas: alphas.to_vec(),
        discounted_cost: discounted,
        final_average: *running.last().expect("horizon > 0"),
        running_average: running,
        states,
    })
}

/// Sample mean and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n < 2 || xs.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some(MeanEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
        })
    }

    /// `|mean − target| ≤ k·SE + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + slack
    }
}

/// Final averages of `count` trajectories on streams `0..count` of `seed`.
pub fn average_batch(
    mdp: &Mdp,
    policy: &StationaryPolicy,
    x0: usize,
    horizon: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<ExtReal>> {
    (0..count as u64)
        .map(|i| simulate_stream(mdp, policy, x0, horizon, seed, i, &[]).map(|s| s.final_average))
        .collect()
}
