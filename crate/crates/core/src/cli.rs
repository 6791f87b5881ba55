//! Command-line front end. `run` is the whole program minus process setup, so
//! tests can drive it with in-memory streams.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use serde_json::{json, Map, Value};

use crate::counterexample::{self, build_example_mdp, generate, proposition_check};
use crate::discounted::{solve_discounted, SolveStatus};
use crate::error::{Error, Result};
use crate::mdp::{load_mdp, validate, Mdp};
use crate::policy::StationaryPolicy;
use crate::sim::simulate;
use crate::vanishing::{
    analyze_average, discount_profile, DiscountGrid, ProfileConfig, DEFAULT_GRID_K,
    DEFAULT_TAIL_FRACTION, DEFAULT_THRESHOLD,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "vdmdp",
    version,
    about = "Discounted and average-cost MDP toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct GridArgs {
    /// Geometric grid α_k = 1 − 2^{−k}, k = 1..K.
    #[arg(long = "grid-k", default_value_t = DEFAULT_GRID_K)]
    grid_k: usize,
    /// Merge the α⁽ⁿ⁾, γ⁽ⁿ⁾ of a counterexample run, given as ALPHA1:STAGES.
    #[arg(long = "merge-stages", value_name = "ALPHA1:STAGES")]
    merge_stages: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TAIL_FRACTION)]
    tail: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model file against the schema and model rules.
    Validate { model: PathBuf },
    /// Solve the discounted problem at one discount factor (JSON to stdout).
    Solve {
        model: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = 10_000_000)]
        max_iters: usize,
    },
    /// Discount profile on a grid (CSV).
    Sweep {
        model: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average-cost analysis: profile CSV to --out, report JSON to stdout.
    Average {
        model: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage table of the counterexample plus the per-stage margins.
    Counterexample {
        #[arg(long, default_value_t = 0.5)]
        alpha1: f64,
        #[arg(long, default_value_t = 3)]
        stages: usize,
        /// State budget for --model-out.
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        /// Stage CSV destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Margins CSV destination (stderr when absent).
        #[arg(long)]
        margins: Option<PathBuf>,
        /// Write the truncated explicit model as JSON.
        #[arg(long = "model-out")]
        model_out: Option<PathBuf>,
    },
    /// Simulate one trajectory: per-step CSV to --out, summary JSON to stdout.
    Simulate {
        model: PathBuf,
        /// Comma-separated action indices or labels, `avg` for the extracted
        /// average policy, or `disc:ALPHA` for the discount-optimal one.
        #[arg(long, default_value = "avg")]
        policy: String,
        /// Start state (label or index).
        #[arg(long)]
        x0: String,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Discount factors for the discounted cost, comma-separated.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == EXIT_OK {
                write!(stdout, "{}", e.render())
            } else {
                write!(stderr, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(io) if io.kind() == io::ErrorKind::NotFound => EXIT_USAGE,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn read_model(path: &Path) -> Result<Mdp> {
    let text = std::fs::read_to_string(path)?;
    load_mdp(&text)
}

fn emit_csv(
    path: &Option<PathBuf>,
    fallback: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut buf = Vec::new();
            body(&mut buf)?;
            fallback.write_all(&buf)?;
        }
    }
    Ok(())
}

fn print_json(out: &mut dyn Write, value: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn build_grid(args: &GridArgs) -> Result<DiscountGrid> {
    let grid = DiscountGrid::geometric(args.grid_k)?;
    match &args.merge_stages {
        None => Ok(grid),
        Some(spec) => {
            let (a, s) = spec.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("expected ALPHA1:STAGES, got {spec:?}"))
            })?;
            let alpha1: f64 = a
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad alpha1 {a:?}")))?;
            let stages: usize = s
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad stage count {s:?}")))?;
            let st = generate(alpha1, stages)?;
            grid.merged(&counterexample::stage_grid_points(&st))
        }
    }
}

fn profile_config(tail: f64) -> ProfileConfig {
    ProfileConfig {
        tail_fraction: tail,
        ..ProfileConfig::default()
    }
}

fn labelled<T: Into<Value>>(mdp: &Mdp, xs: impl IntoIterator<Item = T>) -> Value {
    let map: Map<String, Value> = mdp
        .state_labels()
        .iter()
        .cloned()
        .zip(xs.into_iter().map(Into::into))
        .collect();
    Value::Object(map)
}

fn ext_json(x: crate::ext::ExtReal) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn policy_json(mdp: &Mdp, policy: &StationaryPolicy) -> Value {
    let mut map = Map::new();
    for (x, label) in mdp.state_labels().iter().enumerate() {
        map.insert(
            label.clone(),
            Value::String(mdp.actions(x)[policy.action(x)].label.clone()),
        );
    }
    Value::Object(map)
}

fn resolve_state(mdp: &Mdp, text: &str) -> Result<usize> {
    if let Some(x) = mdp.state_index(text) {
        return Ok(x);
    }
    text.parse::<usize>()
        .ok()
        .filter(|&x| x < mdp.num_states())
        .ok_or_else(|| Error::InvalidArgument(format!("unknown state {text:?}")))
}

fn resolve_policy(mdp: &Mdp, text: &str) -> Result<StationaryPolicy> {
    if text == "avg" {
        let grid = DiscountGrid::geometric(DEFAULT_GRID_K)?;
        let profile = discount_profile(mdp, &grid, &ProfileConfig::default())?;
        return Ok(analyze_average(mdp, &profile, DEFAULT_THRESHOLD)?.policy);
    }
    if let Some(a) = text.strip_prefix("disc:") {
        let alpha: f64 = a
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad discount factor {a:?}")))?;
        return Ok(solve_discounted(mdp, alpha, 1e-9, 10_000_000)?.policy);
    }
    StationaryPolicy::parse(text, mdp)
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate { model } => {
            let text = std::fs::read_to_string(&model)?;
            match load_mdp(&text) {
                Ok(mdp) => {
                    let report = validate(&mdp);
                    writeln!(stdout, "{report}")?;
                    Ok(EXIT_OK)
                }
                Err(Error::Invalid(report)) => {
                    writeln!(stdout, "{report}")?;
                    Ok(EXIT_FAILURE)
                }
                Err(e) => {
                    writeln!(stdout, "invalid: {e}")?;
                    Ok(EXIT_FAILURE)
                }
            }
        }
        Command::Solve {
            model,
            alpha,
            tol,
            max_iters,
        } => {
            let mdp = read_model(&model)?;
            let sol = solve_discounted(&mdp, alpha, tol, max_iters)?;
            let (status, growth) = match sol.status {
                SolveStatus::Converged => ("converged", Value::Null),
                SolveStatus::DivergingOrSlow { growth } => ("diverging_or_slow", json!(growth)),
            };
            info!("solved at alpha = {alpha} in {} iterations", sol.iterations);
            let out = json!({
                "alpha": alpha,
                "status": status,
                "growth": growth,
                "iterations": sol.iterations,
                "residual": sol.residual,
                "v": labelled(&mdp, sol.v.iter().map(ext_json)),
                "policy": policy_json(&mdp, &sol.policy),
            });
            print_json(stdout, &out)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { model, grid, out } => {
            let mdp = read_model(&model)?;
            let g = build_grid(&grid)?;
            let profile = discount_profile(&mdp, &g, &profile_config(grid.tail))?;
            emit_csv(&out, stdout, |w| profile.write_csv(w, mdp.state_labels()))?;
            Ok(EXIT_OK)
        }
        Command::Average {
            model,
            grid,
            threshold,
            out,
        } => {
            let mdp = read_model(&model)?;
            let g = build_grid(&grid)?;
            let profile = discount_profile(&mdp, &g, &profile_config(grid.tail))?;
            let report = analyze_average(&mdp, &profile, threshold)?;
            if let Some(path) = &out {
                let mut w = BufWriter::new(File::create(path)?);
                profile.write_csv(&mut w, mdp.state_labels())?;
                w.flush()?;
            }
            let summary = json!({
                "w_lo": report.w_lo,
                "w_hi": report.w_hi,
                "w_star": ext_json(report.w_star),
                "sandwich_ok": report.sandwich_ok,
                "assumptions": serde_json::to_value(&report.assumptions).expect("serializable"),
                "u": labelled(&mdp, report.u_estimate.iter().map(|&x| ext_json(x))),
                "acoi_residuals": labelled(&mdp, report.acoi_residuals.iter().copied()),
                "policy": policy_json(&mdp, &report.policy),
                "policy_average": labelled(&mdp, report.policy_average.iter().map(|&x| ext_json(x))),
            });
            print_json(stdout, &summary)?;
            Ok(if report.sandwich_ok {
                EXIT_OK
            } else {
                EXIT_FAILURE
            })
        }
        Command::Counterexample {
            alpha1,
            stages,
            budget,
            out,
            margins,
            model_out,
        } => {
            let st = generate(alpha1, stages)?;
            let report = proposition_check(&st)?;
            emit_csv(&out, stdout, |w| report.write_csv(w))?;
            emit_csv(&margins, stderr, |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record([
                    "n",
                    "unbounded_margin",
                    "liminf_margin",
                    "p_gamma_margin",
                    "p_max_outside",
                    "ok",
                ])?;
                for r in &report.stages {
                    c.write_record([
                        r.n.to_string(),
                        r.unbounded_margin.to_string(),
                        r.liminf_margin.to_string(),
                        r.p_gamma_margin.to_string(),
                        r.p_max_outside.to_string(),
                        r.ok.to_string(),
                    ])?;
                }
                c.flush()?;
                Ok(())
            })?;
            if let Some(path) = model_out {
                let cx = build_example_mdp(&st, budget)?;
                info!(
                    "explicit model keeps stages 1..={} ({} states)",
                    cx.n_max,
                    cx.mdp.num_states()
                );
                std::fs::write(path, cx.mdp.to_json())?;
            }
            Ok(if report.all_ok { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Simulate {
            model,
            policy,
            x0,
            horizon,
            seed,
            alphas,
            out,
        } => {
            let mdp = read_model(&model)?;
            let pol = resolve_policy(&mdp, &policy)?;
            let x = resolve_state(&mdp, &x0)?;
            let stats = simulate(&mdp, &pol, x, horizon, seed, &alphas)?;
            if let Some(path) = &out {
                let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
                w.write_record(["t", "state", "running_average"])?;
                for (t, avg) in stats.running_average.iter().enumerate() {
                    w.write_record([
                        (t + 1).to_string(),
                        mdp.state_label(stats.states[t]).to_string(),
                        avg.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            let discounted: Vec<Value> = stats
                .alphas
                .iter()
                .zip(&stats.discounted_cost)
                .map(|(a, d)| json!({"alpha": a, "cost": ext_json(*d)}))
                .collect();
            let summary = json!({
                "seed": stats.seed,
                "horizon": stats.horizon,
                "x0": mdp.state_label(x),
                "policy": policy_json(&mdp, &pol),
                "discounted_cost": discounted,
                "final_average": ext_json(stats.final_average),
            });
            print_json(stdout, &summary)?;
            Ok(EXIT_OK)
        }
    }
}
