//! Command-line front end. Output is JSON on standard output; the exit code
//! is 0 on success, 1 when a check finds a violation and 2 for unusable
//! input or a refused computation.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::belief::{
    build_belief_model, build_belief_model_upto, check_flat_compat, check_identity_obs_degeneracy,
    DEFAULT_MAX_STATES,
};
use crate::effects::{check_star_conditions, EffectKind};
use crate::harness::{run_suite, SuiteConfig};
use crate::model::{parse_model, random_model_with, ActionId, PoModel, RandomModelParams};
use crate::numeric::catch_overflow;
use crate::semantics::{
    check_correctness, check_partial_upper, v_star_belief, v_star_bruteforce, v_star_fullobs,
    FullObsMode, DEFAULT_GUARD,
};

#[derive(Debug, Parser)]
#[command(
    name = "cobel",
    version,
    about = "Belief construction and exact semantics for partially observable systems"
)]
pub struct Cli {
    /// Indent JSON output.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the reachable belief model, with a legend of belief ids.
    Build {
        model: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_states: usize,
        /// Only expand beliefs reachable in fewer than this many steps.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Optimal value at a finite horizon.
    Value {
        model: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum, default_value_t = MethodArg::Brute)]
        method: MethodArg,
        /// Evaluate the fully observable counterpart instead.
        #[arg(long)]
        fully_observable: bool,
        /// Least fixpoint instead of a horizon (fullobs, nondet only).
        #[arg(long)]
        fixpoint: bool,
        #[arg(long, default_value_t = DEFAULT_GUARD)]
        guard: u128,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_states: usize,
    },
    /// Run checks on one model; exits 1 on any violation.
    Check {
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = What::All)]
        what: What,
        #[arg(long, default_value_t = DEFAULT_GUARD)]
        guard: u128,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_states: usize,
        /// Random samples for the flat and star checks.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// States reachable from the initial state.
    Reachable { model: PathBuf },
    /// A random model.
    Random {
        #[arg(long)]
        effect: EffectKind,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        obs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        max_support: usize,
    },
    /// Seeded property campaign; exits 1 if any check fails.
    Suite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Restrict to these effect kinds (repeatable).
        #[arg(long = "effect")]
        effects: Vec<EffectKind>,
        /// Fault injection for the section law.
        #[arg(long)]
        corrupt_decompose: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Brute,
    Belief,
    Fullobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Correctness,
    Upper,
    Flat,
    Star,
    Degeneracy,
    All,
}

/// Exit statuses.
pub const OK: i32 = 0;
pub const VIOLATION: i32 = 1;
pub const INVALID: i32 = 2;

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { INVALID } else { OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = catch_overflow(|| execute(&cli, out)).unwrap_or_else(|e| Err(e.into()));
    match result {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            INVALID
        }
    }
}

fn load(path: &PathBuf) -> Result<PoModel, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn emit<S: Serialize>(out: &mut dyn Write, pretty: bool, value: &S) -> Result<(), Failure> {
    let text = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    let pretty = cli.pretty;
    match &cli.command {
        Command::Build {
            model,
            output,
            max_states,
            depth,
        } => {
            let m = load(model)?;
            let bm = match depth {
                Some(d) => build_belief_model_upto(&m, *d, *max_states)?,
                None => build_belief_model(&m, *max_states)?,
            };
            let doc = bm.to_document();
            match output {
                Some(path) => std::fs::write(path, doc.to_json(true) + "\n")
                    .map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))?,
                None => emit(out, pretty, &doc)?,
            }
            Ok(OK)
        }
        Command::Value {
            model,
            horizon,
            method,
            fully_observable,
            fixpoint,
            guard,
            max_states,
        } => {
            let mut m = load(model)?;
            if *fully_observable {
                m = m.fully_observable_counterpart();
            }
            let report = match (method, fixpoint, horizon) {
                (MethodArg::Fullobs, true, None) => v_star_fullobs(&m, FullObsMode::Fixpoint)?,
                (_, true, _) => {
                    return Err(Failure(
                        "--fixpoint needs --method fullobs and no --horizon".into(),
                    ))
                }
                (_, false, None) => return Err(Failure("--horizon is required".into())),
                (MethodArg::Brute, false, Some(n)) => v_star_bruteforce(&m, *n, *guard)?,
                (MethodArg::Belief, false, Some(n)) => v_star_belief(&m, *n, *max_states, *guard)?,
                (MethodArg::Fullobs, false, Some(n)) => {
                    v_star_fullobs(&m, FullObsMode::Horizon(*n))?
                }
            };
            emit(out, pretty, &report.to_document(&m))?;
            Ok(OK)
        }
        Command::Check {
            model,
            horizon,
            what,
            guard,
            max_states,
            samples,
            seed,
        } => {
            let m = load(model)?;
            let (verdicts, passed) =
                run_checks(&m, *horizon, *what, *guard, *max_states, *samples, *seed)?;
            emit(
                out,
                pretty,
                &json!({ "passed": passed, "checks": verdicts }),
            )?;
            Ok(if passed { OK } else { VIOLATION })
        }
        Command::Reachable { model } => {
            let m = load(model)?;
            let names: Vec<&str> = m
                .reachable_states()
                .into_iter()
                .map(|s| m.state_name(s))
                .collect();
            emit(out, pretty, &names)?;
            Ok(OK)
        }
        Command::Random {
            effect,
            states,
            actions,
            obs,
            seed,
            max_support,
        } => {
            if *states == 0 || *actions == 0 || *obs == 0 || *max_support == 0 {
                return Err(Failure("sizes must be positive".into()));
            }
            let params = RandomModelParams {
                kind: *effect,
                states: *states,
                actions: *actions,
                observations: *obs,
                max_support: *max_support,
            };
            emit(out, pretty, &random_model_with(params, *seed).to_document())?;
            Ok(OK)
        }
        Command::Suite {
            seed,
            trials,
            horizon,
            effects,
            corrupt_decompose,
        } => {
            let mut cfg = SuiteConfig {
                seed: *seed,
                corrupt_decompose: *corrupt_decompose,
                ..SuiteConfig::default()
            };
            if let Some(t) = trials {
                cfg.trials = *t;
            }
            if let Some(h) = horizon {
                cfg.horizon = *h;
            }
            if !effects.is_empty() {
                cfg.kinds = effects.clone();
            }
            cfg.validate().map_err(Failure)?;
            let report = run_suite(&cfg);
            emit(out, pretty, &report)?;
            Ok(if report.passed { OK } else { VIOLATION })
        }
    }
}

fn run_checks(
    m: &PoModel,
    n: usize,
    what: What,
    guard: u128,
    max_states: usize,
    samples: usize,
    seed: u64,
) -> Result<(serde_json::Map<String, Value>, bool), Failure> {
    let wanted = |w: What| what == w || what == What::All;
    let mut verdicts = serde_json::Map::new();
    let mut passed = true;

    if wanted(What::Correctness) {
        let r = check_correctness(m, n, max_states, guard)?;
        passed &= r.passed();
        verdicts.insert(
            "correctness".into(),
            json!({ "passed": r.passed(), "report": r }),
        );
    }
    if wanted(What::Upper) {
        let r = check_partial_upper(m, n, guard)?;
        passed &= r.passed();
        verdicts.insert("upper".into(), json!({ "passed": r.passed(), "report": r }));
    }
    if wanted(What::Flat) {
        // every (belief, action) pair met within the horizon, plus random beliefs
        let bm = build_belief_model_upto(m, n, max_states)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<_> = bm
            .legend
            .iter()
            .flat_map(|b| m.action_ids().map(move |a| (b.clone(), a)))
            .collect();
        for _ in 0..samples {
            let b = crate::belief::sample_belief(m, &mut rng);
            pairs.push((b, ActionId(rng.gen_range(0..m.n_actions()))));
        }
        let r = check_flat_compat(m, &pairs);
        passed &= r.passed();
        verdicts.insert("flat".into(), json!({ "passed": r.passed(), "report": r }));
    }
    if wanted(What::Star) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = check_star_conditions(m.kind(), samples, &mut rng);
        let violations: Vec<String> = r
            .violations
            .iter()
            .map(|v| format!("{:?}: {}", v.condition, v.sample))
            .collect();
        passed &= r.passed();
        verdicts.insert(
            "star".into(),
            json!({ "passed": r.passed(), "samples": r.samples, "violations": violations }),
        );
    }
    if what == What::Degeneracy || (what == What::All && m.is_fully_observable()) {
        let r = check_identity_obs_degeneracy(m)?;
        passed &= r.isomorphic();
        verdicts.insert(
            "degeneracy".into(),
            json!({ "passed": r.isomorphic(), "report": r }),
        );
    }
    Ok((verdicts, passed))
}
