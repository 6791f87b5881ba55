#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdmdp::mdp::{Action, Mdp, TransitionRow};
use vdmdp::ExtReal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct RandomMdpSpec {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_cost: f64,
    /// Probability that a target belongs to a row's support.
    pub density: f64,
    /// Probability that an action costs `+∞`.
    pub inf_prob: f64,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        RandomMdpSpec {
            max_states: 6,
            max_actions: 4,
            max_cost: 10.0,
            density: 0.6,
            inf_prob: 0.0,
        }
    }
}

pub fn random_row<R: Rng>(rng: &mut R, n: usize, density: f64) -> TransitionRow {
    let mut entries = Vec::new();
    for y in 0..n {
        if rng.gen_bool(density) {
            entries.push((y, rng.gen_range(0.05..1.0)));
        }
    }
    if entries.is_empty() {
        entries.push((rng.gen_range(0..n), 1.0));
    }
    let total: f64 = entries.iter().map(|e| e.1).sum();
    for e in &mut entries {
        e.1 /= total;
    }
    TransitionRow::new(entries)
}

pub fn random_mdp<R: Rng>(rng: &mut R, spec: &RandomMdpSpec) -> Mdp {
    let n = rng.gen_range(1..=spec.max_states);
    let labels = (0..n).map(|x| format!("s{x}")).collect();
    let actions = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=spec.max_actions);
            (0..k)
                .map(|a| {
                    let cost = if spec.inf_prob > 0.0 && rng.gen_bool(spec.inf_prob) {
                        ExtReal::INFINITY
                    } else {
                        ExtReal::new(rng.gen_range(0.0..=spec.max_cost)).unwrap()
                    };
                    Action::new(format!("a{a}"), cost, random_row(rng, n, spec.density))
                })
                .collect()
        })
        .collect();
    Mdp::new(labels, actions).expect("generated model is valid")
}

pub fn ext(x: f64) -> ExtReal {
    ExtReal::new(x).unwrap()
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
        .join(name)
}
