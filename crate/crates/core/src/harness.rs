//! Seeded property campaigns over random effect values and random models.
//!
//! Every (check, effect kind) pair draws from its own ChaCha stream of the
//! configured seed, so a report depends only on the configuration and a
//! subset of checks reproduces the corresponding part of a full run.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::{check_flat_compat, check_identity_obs_degeneracy, sample_belief};
use crate::effects::{
    check_base_change, check_star_conditions, decompose, flat, gen, EffectKind, EffectValue, Fibre,
};
use crate::model::{
    random_model_with, ActionId, ModelDocument, PoModel, RandomModelParams, StateId,
};
use crate::numeric::Rational;
use crate::semantics::{
    check_correctness, check_partial_upper, count_schedulers, for_each_scheduler, scheduler_values,
    v_star_bruteforce, v_star_fullobs, weighted_path_sums, FullObsMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// `flat ∘ decompose = id`.
    SectionLaw,
    /// Decomposition commutes with injective relabelling of observations.
    BaseChange,
    /// The `(★)` conditions on the algebras.
    Star,
    /// Fully observable models are isomorphic to their belief models.
    Degeneracy,
    /// `F(flat) ∘ c^Bel = Det(δ) ∘ ι`.
    FlatCompat,
    /// Per-scheduler, per-horizon equality with the belief model.
    Correctness,
    /// Partial observation never beats full observation.
    ObservabilityGap,
    /// Kleene iteration of `Ψ` against enumeration (nondeterministic only).
    Decidability,
    /// Fixed-point values against terminating-path sums (weighted only).
    PathSum,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::SectionLaw,
        Check::BaseChange,
        Check::Star,
        Check::Degeneracy,
        Check::FlatCompat,
        Check::Correctness,
        Check::ObservabilityGap,
        Check::Decidability,
        Check::PathSum,
    ];

    pub fn applies_to(self, kind: EffectKind) -> bool {
        match self {
            Check::Decidability => kind == EffectKind::Nondet,
            Check::PathSum => kind == EffectKind::Weighted,
            _ => true,
        }
    }

    fn stream(self, kind: EffectKind) -> u64 {
        let c = Check::ALL.iter().position(|x| *x == self).expect("listed");
        let k = EffectKind::ALL
            .iter()
            .position(|x| *x == kind)
            .expect("listed");
        (c * EffectKind::ALL.len() + k) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteConfig {
    pub kinds: Vec<EffectKind>,
    pub checks: Vec<Check>,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_observations: usize,
    pub horizon: usize,
    /// Random models per kind for each model-based check.
    pub trials: usize,
    pub seed: u64,
    /// Largest scheduler count an instance may have; larger draws are
    /// replaced by fresh ones.
    pub guard: u64,
    pub max_beliefs: usize,
    pub effect_samples: usize,
    pub star_samples: usize,
    pub flat_samples: usize,
    pub path_horizon: usize,
    pub path_max_states: usize,
    pub path_max_observations: usize,
    /// Fault injection: swap in a decomposition that loses a fibre.
    pub corrupt_decompose: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            kinds: EffectKind::ALL.to_vec(),
            checks: Check::ALL.to_vec(),
            max_states: 5,
            max_actions: 2,
            max_observations: 3,
            horizon: 4,
            trials: 50,
            seed: 0,
            guard: 1_000_000,
            max_beliefs: 10_000,
            effect_samples: 500,
            star_samples: 200,
            flat_samples: 100,
            path_horizon: 6,
            path_max_states: 3,
            path_max_observations: 2,
            corrupt_decompose: false,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("max_states", self.max_states),
            ("max_actions", self.max_actions),
            ("max_observations", self.max_observations),
            ("path_max_states", self.path_max_states),
            ("path_max_observations", self.path_max_observations),
            ("max_beliefs", self.max_beliefs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.guard == 0 {
            return Err("guard must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_seed: Option<u64>,
    /// The failing model after greedy shrinking.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub kind: EffectKind,
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    /// Draws replaced because their scheduler count exceeded the guard.
    pub resampled: usize,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, u64>,
    pub counterexamples: Vec<Counterexample>,
}

impl CheckReport {
    fn new(check: Check, kind: EffectKind) -> Self {
        CheckReport {
            check,
            kind,
            trials: 0,
            passed: 0,
            failed: 0,
            resampled: 0,
            notes: BTreeMap::new(),
            counterexamples: Vec::new(),
        }
    }

    fn record(&mut self, failure: Option<Counterexample>) {
        self.trials += 1;
        match failure {
            None => self.passed += 1,
            Some(c) => {
                self.failed += 1;
                if self.counterexamples.len() < KEPT_COUNTEREXAMPLES {
                    self.counterexamples.push(c);
                }
            }
        }
    }

    fn note(&mut self, key: &str) {
        *self.notes.entry(key.to_string()).or_default() += 1;
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn to_json(&self, pretty: bool) -> String {
        if pretty {
            serde_json::to_string_pretty(self)
        } else {
            serde_json::to_string(self)
        }
        .expect("reports serialize")
    }

    pub fn get(&self, check: Check, kind: EffectKind) -> Option<&CheckReport> {
        self.checks
            .iter()
            .find(|r| r.check == check && r.kind == kind)
    }
}

const KEPT_COUNTEREXAMPLES: usize = 5;

pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut checks = Vec::new();
    for check in Check::ALL {
        if !cfg.checks.contains(&check) {
            continue;
        }
        for kind in EffectKind::ALL {
            if cfg.kinds.contains(&kind) && check.applies_to(kind) {
                checks.push(run_check(cfg, check, kind));
            }
        }
    }
    SuiteReport {
        config: cfg.clone(),
        passed: checks.iter().all(CheckReport::ok),
        checks,
    }
}

/// Runs one check for one effect kind.
pub fn run_check(cfg: &SuiteConfig, check: Check, kind: EffectKind) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(check.stream(kind));
    let mut report = CheckReport::new(check, kind);
    match check {
        Check::SectionLaw | Check::BaseChange => {
            for trial in 0..cfg.effect_samples {
                let failure = effect_law(cfg, check, kind, &mut rng).map(|detail| Counterexample {
                    trial,
                    detail,
                    model_seed: None,
                    model: None,
                });
                report.record(failure);
            }
        }
        Check::Star => {
            for trial in 0..cfg.star_samples {
                let star = check_star_conditions(kind, 1, &mut rng);
                let failure = star.violations.first().map(|v| Counterexample {
                    trial,
                    detail: format!("{:?}: {}", v.condition, v.sample),
                    model_seed: None,
                    model: None,
                });
                report.record(failure);
            }
        }
        Check::FlatCompat => {
            for trial in 0..cfg.flat_samples {
                let (m, seed) = draw(cfg, kind, Shape::Partial, &mut rng);
                let b = sample_belief(&m, &mut rng);
                let a = ActionId(rng.gen_range(0..m.n_actions()));
                let r = check_flat_compat(&m, &[(b, a)]);
                let failure = r.violations.first().map(|detail| Counterexample {
                    trial,
                    detail: detail.clone(),
                    model_seed: Some(seed),
                    model: Some(m.to_document()),
                });
                report.record(failure);
            }
        }
        _ => {
            for trial in 0..cfg.trials {
                let shape = match check {
                    Check::Degeneracy | Check::Decidability => Shape::Full,
                    Check::PathSum => Shape::Small,
                    _ => Shape::Partial,
                };
                let (m, seed) = loop {
                    let (m, seed) = draw(cfg, kind, shape, &mut rng);
                    if check == Check::Degeneracy
                        || count_schedulers(&m, check_horizon(cfg, check, &m)) <= cfg.guard as u128
                    {
                        break (m, seed);
                    }
                    report.resampled += 1;
                };
                if check == Check::ObservabilityGap && m.obs_is_injective() {
                    report.note("injective_instances");
                }
                let failure = check_model(cfg, check, &m).map(|detail| {
                    let shrunk = shrink(m.clone(), |c| check_model(cfg, check, c).is_some());
                    Counterexample {
                        trial,
                        detail,
                        model_seed: Some(seed),
                        model: Some(shrunk.to_document()),
                    }
                });
                report.record(failure);
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Partial,
    Full,
    Small,
}

fn draw(cfg: &SuiteConfig, kind: EffectKind, shape: Shape, rng: &mut ChaCha8Rng) -> (PoModel, u64) {
    let (max_s, max_o) = match shape {
        Shape::Small => (cfg.path_max_states, cfg.path_max_observations),
        _ => (cfg.max_states, cfg.max_observations),
    };
    let params = RandomModelParams {
        kind,
        states: rng.gen_range(1..=max_s),
        actions: rng.gen_range(1..=cfg.max_actions),
        observations: rng.gen_range(1..=max_o),
        max_support: 2,
    };
    let seed = rng.gen();
    let m = random_model_with(params, seed);
    let m = if shape == Shape::Full {
        m.fully_observable_counterpart()
    } else {
        m
    };
    (m, seed)
}

fn check_horizon(cfg: &SuiteConfig, check: Check, m: &PoModel) -> usize {
    match check {
        Check::Decidability => m.n_states(),
        Check::PathSum => cfg.path_horizon,
        _ => cfg.horizon,
    }
}

/// Runs a model-based check on a single model; `Some` describes a failure.
pub fn check_model(cfg: &SuiteConfig, check: Check, m: &PoModel) -> Option<String> {
    let guard = cfg.guard as u128;
    let n = check_horizon(cfg, check, m);
    let outcome: Result<Option<String>, String> = (|| match check {
        Check::Degeneracy => {
            let r = check_identity_obs_degeneracy(m).map_err(|e| e.to_string())?;
            Ok(r.mismatches.first().cloned())
        }
        Check::Correctness => {
            let r = check_correctness(m, n, cfg.max_beliefs, guard).map_err(|e| e.to_string())?;
            Ok((!r.passed()).then(|| {
                format!(
                    "{} violations, joins {} vs {}; first: {:?}",
                    r.violation_count,
                    r.join_model,
                    r.join_belief,
                    r.violations.first()
                )
            }))
        }
        Check::ObservabilityGap => {
            let r = check_partial_upper(m, n, guard).map_err(|e| e.to_string())?;
            Ok((!r.passed()).then(|| {
                format!(
                    "partial {} vs full {} (injective: {})",
                    r.partial, r.full, r.obs_injective
                )
            }))
        }
        Check::Decidability => {
            let fix = v_star_fullobs(m, FullObsMode::Fixpoint).map_err(|e| e.to_string())?;
            let brute = v_star_bruteforce(m, n, guard).map_err(|e| e.to_string())?;
            if fix.horizon > m.n_states() {
                Ok(Some(format!("{} iterations for {} states", fix.horizon, n)))
            } else if fix.value != brute.value {
                Ok(Some(format!(
                    "fixpoint {} vs enumeration {}",
                    fix.value, brute.value
                )))
            } else {
                Ok(None)
            }
        }
        Check::PathSum => {
            let mut failure = None;
            let mut error = None;
            let _ = for_each_scheduler(m, n, |u| {
                let pair = weighted_path_sums(m, u, n)
                    .and_then(|sums| Ok((sums, scheduler_values(m, u, n)?)));
                match pair {
                    Err(e) => error = Some(e.to_string()),
                    Ok((sums, values)) => {
                        if let Some(k) =
                            (0..=n).find(|k| values[*k].as_rational() != Some(sums[*k]))
                        {
                            failure = Some(format!(
                                "horizon {k}: path sum {} vs value {} under {:?}",
                                sums[k],
                                values[k],
                                u.to_document(m)
                            ));
                        }
                    }
                }
                if failure.is_some() || error.is_some() {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            });
            match error {
                Some(e) => Err(e),
                None => Ok(failure),
            }
        }
        _ => unreachable!("not a model-based check"),
    })();
    match outcome {
        Ok(f) => f,
        Err(e) => Some(format!("error: {e}")),
    }
}

fn effect_law(
    cfg: &SuiteConfig,
    check: Check,
    kind: EffectKind,
    rng: &mut ChaCha8Rng,
) -> Option<String> {
    let atoms: Vec<u32> = (0..6).collect();
    let n_obs = rng.gen_range(1..=3u32);
    let obs_table: Vec<u32> = atoms.iter().map(|_| rng.gen_range(0..n_obs)).collect();
    let obs = |a: &u32| obs_table[*a as usize];
    let t = gen::effect(kind, &atoms, 5, rng);
    match check {
        Check::SectionLaw => {
            let parts = if cfg.corrupt_decompose {
                corrupted_decompose(&t, obs)
            } else {
                decompose(&t, obs)
            };
            let back = flat(&parts);
            (back != t).then(|| format!("{t:?} with obs {obs_table:?} flattens to {back:?}"))
        }
        Check::BaseChange => {
            let mut targets: Vec<u32> = (0..n_obs).map(|o| 10 + o).collect();
            targets.shuffle(rng);
            let u: BTreeMap<u32, u32> = (0..n_obs).zip(targets).collect();
            match check_base_change(&t, obs, &u) {
                Ok(true) => None,
                Ok(false) => Some(format!("{t:?} with obs {obs_table:?} under {u:?}")),
                Err(e) => Some(format!("{t:?}: {e}")),
            }
        }
        _ => unreachable!("not an effect law"),
    }
}

/// A faulty decomposition that drops the last fibre whenever there are two
/// or more (renormalizing the outer distribution so it stays a distribution).
pub fn corrupted_decompose<A: Ord + Clone, O: Ord + Clone>(
    t: &EffectValue<A>,
    obs: impl Fn(&A) -> O,
) -> EffectValue<Fibre<A, O>> {
    let parts = decompose(t, obs);
    if parts.len() < 2 {
        return parts;
    }
    let mut kept: Vec<(Fibre<A, O>, Rational)> =
        parts.weighted().map(|(f, w)| (f.clone(), w)).collect();
    kept.pop();
    match parts {
        EffectValue::Set(_) => EffectValue::set(kept.into_iter().map(|(f, _)| f)),
        EffectValue::Dist(_) => {
            let total: Rational = kept.iter().map(|(_, w)| *w).sum();
            let scale = total.recip().expect("fibres have positive mass");
            EffectValue::dist(kept.into_iter().map(|(f, w)| (f, w * scale)))
        }
        EffectValue::Weights(_) => EffectValue::weights(kept),
    }
    .expect("a sub-collection of a valid value")
}

/// Greedily removes states and actions while `fails` keeps holding.
pub fn shrink(mut m: PoModel, fails: impl Fn(&PoModel) -> bool) -> PoModel {
    loop {
        let states = (0..m.n_states())
            .rev()
            .map(StateId)
            .filter_map(|s| m.without_state(s));
        let actions = (0..m.n_actions())
            .rev()
            .map(ActionId)
            .filter_map(|a| m.without_action(a));
        match states.chain(actions).find(|c| fails(c)) {
            Some(smaller) => m = smaller,
            None => return m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SuiteConfig {
        SuiteConfig {
            trials: 6,
            effect_samples: 60,
            star_samples: 30,
            flat_samples: 20,
            seed: 17,
            ..SuiteConfig::default()
        }
    }

    #[test]
    fn quick_suite_passes_and_replays() {
        let cfg = quick();
        let report = run_suite(&cfg);
        assert!(report.passed, "{}", report.to_json(true));
        assert_eq!(report.checks.len(), 7 * 3 + 2);
        assert_eq!(run_suite(&cfg).to_json(false), report.to_json(false));
        // a subset reproduces its part of the full run
        let only = run_check(&cfg, Check::Correctness, EffectKind::Dist);
        assert_eq!(
            report.get(Check::Correctness, EffectKind::Dist),
            Some(&only)
        );
    }

    #[test]
    fn corrupted_decompose_is_caught() {
        let cfg = SuiteConfig {
            corrupt_decompose: true,
            checks: vec![Check::SectionLaw],
            ..quick()
        };
        let report = run_suite(&cfg);
        assert!(!report.passed);
        for r in &report.checks {
            assert!(r.failed > 0, "{r:?}");
            assert!(!r.counterexamples.is_empty());
        }
    }

    #[test]
    fn shrinking_keeps_the_failure() {
        // "fails" whenever some row terminates
        let has_stop = |m: &PoModel| {
            m.state_ids().any(|s| {
                m.action_ids()
                    .any(|a| m.transition(s, a).successor().is_none())
            })
        };
        let params = RandomModelParams {
            kind: EffectKind::Nondet,
            states: 5,
            actions: 2,
            observations: 2,
            max_support: 2,
        };
        let m = (0..)
            .map(|seed| random_model_with(params, seed))
            .find(|m| has_stop(m))
            .unwrap();
        let small = shrink(m, has_stop);
        assert!(has_stop(&small));
        assert_eq!(small.n_actions(), 1);
        assert!(small.n_states() <= 2);
    }
}
