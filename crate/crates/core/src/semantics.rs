//! Scheduler-based and fixed-point semantics.
//!
//! Values are computed per horizon: `Φⁿ(⊥)` of the scheduled system, by
//! recursion over `(state, observation history)`. The join over schedulers
//! at horizon `n` ranges over schedulers truncated to the observation
//! histories they can actually produce within `n` steps; every other entry
//! is irrelevant to `Φⁿ(⊥)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::ControlFlow;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{build_belief_model_upto, check_history_injectivity, BeliefError, BeliefModel};
use crate::effects::{tau, EffectKind, Step};
use crate::model::{ActionId, ObsId, PoModel, StateId};
use crate::numeric::{ExtValue, Rational};

/// A nonempty observation history, oldest first.
pub type History = Vec<ObsId>;

/// Default bound on the number of schedulers brute force will enumerate.
pub const DEFAULT_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("the scheduler has no action for history {0:?}")]
    UndefinedChoice(History),
    #[error("{count} schedulers exceed the guard of {guard}; use the belief method instead")]
    TooManySchedulers { count: u128, guard: u128 },
    #[error("the model is not fully observable")]
    NotFullyObservable,
    #[error("fixpoint mode needs the boolean domain, got a {0} model")]
    UnsupportedMode(EffectKind),
    #[error("expected a {expected} model, got {found}")]
    WrongEffect {
        expected: EffectKind,
        found: EffectKind,
    },
    #[error("unknown name {0:?} in scheduler")]
    UnknownName(String),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// A deterministic scheduler `u : O⁺ → A`, stored as a finite table with an
/// optional fallback action.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scheduler {
    choices: BTreeMap<History, ActionId>,
    default: Option<ActionId>,
}

impl Scheduler {
    /// An empty table with no fallback.
    pub fn new() -> Self {
        Self::default()
    }

    /// The memoryless scheduler that always plays `a`.
    pub fn constant(a: ActionId) -> Self {
        Scheduler {
            choices: BTreeMap::new(),
            default: Some(a),
        }
    }

    pub fn set(&mut self, history: History, a: ActionId) {
        self.choices.insert(history, a);
    }

    pub fn unset(&mut self, history: &[ObsId]) {
        self.choices.remove(history);
    }

    pub fn choice(&self, history: &[ObsId]) -> Option<ActionId> {
        self.choices.get(history).copied().or(self.default)
    }

    pub fn default_action(&self) -> Option<ActionId> {
        self.default
    }

    pub fn entries(&self) -> impl Iterator<Item = (&History, ActionId)> {
        self.choices.iter().map(|(h, a)| (h, *a))
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn to_document(&self, m: &PoModel) -> SchedulerDocument {
        SchedulerDocument {
            choices: self
                .choices
                .iter()
                .map(|(h, a)| ChoiceDocument {
                    history: h.iter().map(|o| m.obs_name(*o).to_string()).collect(),
                    action: m.action_name(*a).to_string(),
                })
                .collect(),
            default: self.default.map(|a| m.action_name(a).to_string()),
        }
    }

    pub fn from_document(doc: &SchedulerDocument, m: &PoModel) -> Result<Self, SemanticsError> {
        let action = |name: &str| {
            m.action_by_name(name)
                .ok_or_else(|| SemanticsError::UnknownName(name.to_string()))
        };
        let mut u = Scheduler {
            choices: BTreeMap::new(),
            default: doc.default.as_deref().map(action).transpose()?,
        };
        for c in &doc.choices {
            let history = c
                .history
                .iter()
                .map(|o| {
                    m.obs_by_name(o)
                        .ok_or_else(|| SemanticsError::UnknownName(o.clone()))
                })
                .collect::<Result<History, _>>()?;
            u.set(history, action(&c.action)?);
        }
        Ok(u)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceDocument {
    pub history: Vec<String>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerDocument {
    pub choices: Vec<ChoiceDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

struct Evaluator<'a> {
    m: &'a PoModel,
    u: &'a Scheduler,
    memo: HashMap<(StateId, History), Rc<Vec<ExtValue>>>,
}

impl Evaluator<'_> {
    /// `[Φ⁰(⊥), …, Φᵏ(⊥)]` at `(s, history)`.
    fn values(
        &mut self,
        s: StateId,
        history: &mut History,
        k: usize,
    ) -> Result<Rc<Vec<ExtValue>>, SemanticsError> {
        let key = (s, history.clone());
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        let bottom = ExtValue::bottom(self.m.kind().domain());
        let mut out = vec![bottom; k + 1];
        if k > 0 {
            let a = self
                .u
                .choice(history)
                .ok_or_else(|| SemanticsError::UndefinedChoice(history.clone()))?;
            let step = self.m.transition(s, a);
            let mut children: BTreeMap<StateId, Rc<Vec<ExtValue>>> = BTreeMap::new();
            if let Some(succ) = step.successor() {
                for t in succ.support() {
                    history.push(self.m.obs(*t));
                    let child = self.values(*t, history, k - 1);
                    history.pop();
                    children.insert(*t, child?);
                }
            }
            for (j, slot) in out.iter_mut().enumerate().skip(1) {
                *slot = tau(&step.map(|succ| succ.map(|t| children[t][j - 1])));
            }
        }
        let out = Rc::new(out);
        self.memo.insert(key, out.clone());
        Ok(out)
    }
}

/// `[Φ⁰(⊥)(init), …, Φⁿ(⊥)(init)]` for the system scheduled by `u`.
pub fn scheduler_values(
    m: &PoModel,
    u: &Scheduler,
    n: usize,
) -> Result<Vec<ExtValue>, SemanticsError> {
    let mut ev = Evaluator {
        m,
        u,
        memo: HashMap::new(),
    };
    let mut history = vec![m.obs(m.init())];
    let values = ev.values(m.init(), &mut history, n)?;
    Ok(values.as_ref().clone())
}

/// `Φⁿ(⊥)(init)` for the system scheduled by `u`.
pub fn scheduler_value(m: &PoModel, u: &Scheduler, n: usize) -> Result<ExtValue, SemanticsError> {
    Ok(scheduler_values(m, u, n)?[n])
}

/// States that may be current after `history` once `a` is played, grouped by
/// the next observation.
fn children(
    m: &PoModel,
    states: &BTreeSet<StateId>,
    a: ActionId,
) -> BTreeMap<ObsId, BTreeSet<StateId>> {
    let mut out: BTreeMap<ObsId, BTreeSet<StateId>> = BTreeMap::new();
    for s in states {
        if let Some(succ) = m.transition(*s, a).successor() {
            for t in succ.support() {
                out.entry(m.obs(*t)).or_default().insert(*t);
            }
        }
    }
    out
}

fn count_at(m: &PoModel, depth: usize, states: &BTreeSet<StateId>, n: usize) -> u128 {
    m.action_ids()
        .map(|a| {
            if depth == n {
                return 1;
            }
            children(m, states, a)
                .values()
                .map(|next| count_at(m, depth + 1, next, n))
                .fold(1u128, u128::saturating_mul)
        })
        .fold(0u128, u128::saturating_add)
}

/// The number of schedulers [`for_each_scheduler`] visits at horizon `n`
/// (saturating).
pub fn count_schedulers(m: &PoModel, n: usize) -> u128 {
    if n == 0 {
        return 1;
    }
    count_at(m, 1, &BTreeSet::from([m.init()]), n)
}

/// Visits every scheduler truncated to the observation histories of length
/// at most `n` that it can itself produce. Unlisted histories fall back to
/// the first action.
pub fn for_each_scheduler(
    m: &PoModel,
    n: usize,
    mut f: impl FnMut(&Scheduler) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let mut u = Scheduler {
        choices: BTreeMap::new(),
        default: Some(ActionId(0)),
    };
    let mut pending = Vec::new();
    if n > 0 {
        pending.push((vec![m.obs(m.init())], BTreeSet::from([m.init()])));
    }
    enumerate(m, n, &mut pending, &mut u, &mut f)
}

fn enumerate(
    m: &PoModel,
    n: usize,
    pending: &mut Vec<(History, BTreeSet<StateId>)>,
    u: &mut Scheduler,
    f: &mut dyn FnMut(&Scheduler) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let Some((history, states)) = pending.pop() else {
        return f(u);
    };
    let mut flow = ControlFlow::Continue(());
    for a in m.action_ids() {
        u.set(history.clone(), a);
        let base = pending.len();
        if history.len() < n {
            for (o, next) in children(m, &states, a) {
                let mut h = history.clone();
                h.push(o);
                pending.push((h, next));
            }
        }
        flow = enumerate(m, n, pending, u, f);
        pending.truncate(base);
        if flow.is_break() {
            break;
        }
    }
    u.unset(&history);
    pending.push((history, states));
    flow
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Brute,
    Belief,
    Fullobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullObsMode {
    Horizon(usize),
    /// Kleene iteration to the least fixpoint (boolean domain only).
    Fixpoint,
}

/// An optimal value with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueReport {
    pub value: ExtValue,
    pub horizon: usize,
    pub method: Method,
    /// How the value was obtained within the method.
    pub via: Option<&'static str>,
    /// `V*` at horizons `0..=horizon`.
    pub per_horizon: Vec<ExtValue>,
    /// A scheduler attaining `value`, over the observations of the input.
    pub witness: Option<Scheduler>,
}

impl ValueReport {
    /// Whether the last two horizon values agree.
    pub fn stable(&self) -> bool {
        let k = self.per_horizon.len();
        k >= 2 && self.per_horizon[k - 1] == self.per_horizon[k - 2]
    }

    pub fn to_document(&self, m: &PoModel) -> ValueDocument {
        ValueDocument {
            value: self.value,
            horizon: self.horizon,
            method: self.method,
            via: self.via.map(str::to_string),
            per_horizon: self.per_horizon.clone(),
            stable: self.stable(),
            witness: self.witness.as_ref().map(|u| u.to_document(m)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValueDocument {
    pub value: ExtValue,
    pub horizon: usize,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
    pub per_horizon: Vec<ExtValue>,
    pub stable: bool,
    pub witness: Option<SchedulerDocument>,
}

fn check_guard(m: &PoModel, n: usize, guard: u128) -> Result<u128, SemanticsError> {
    let count = count_schedulers(m, n);
    if count > guard {
        return Err(SemanticsError::TooManySchedulers { count, guard });
    }
    Ok(count)
}

/// `V*` at horizon `n` by enumerating every truncated scheduler. The witness
/// is the least maximizer in the order of its choice table.
pub fn v_star_bruteforce(
    m: &PoModel,
    n: usize,
    guard: u128,
) -> Result<ValueReport, SemanticsError> {
    check_guard(m, n, guard)?;
    let domain = m.kind().domain();
    let mut per_horizon = vec![ExtValue::bottom(domain); n + 1];
    let mut best: Option<(ExtValue, Scheduler)> = None;
    let mut error = None;
    let _ = for_each_scheduler(m, n, |u| {
        let values = match scheduler_values(m, u, n) {
            Ok(v) => v,
            Err(e) => {
                error = Some(e);
                return ControlFlow::Break(());
            }
        };
        for (acc, v) in per_horizon.iter_mut().zip(&values) {
            *acc = acc.join(*v);
        }
        let better = match &best {
            None => true,
            Some((v, w)) => values[n] > *v || (values[n] == *v && u.choices < w.choices),
        };
        if better {
            best = Some((values[n], u.clone()));
        }
        ControlFlow::Continue(())
    });
    if let Some(e) = error {
        return Err(e);
    }
    let (value, witness) = best.expect("at least one scheduler");
    Ok(ValueReport {
        value,
        horizon: n,
        method: Method::Brute,
        via: None,
        per_horizon,
        witness: Some(witness),
    })
}

/// `V*` through the belief model, explored to depth `n`. When histories of
/// length `n` in the belief model are determined by their observations, it
/// is solved as a fully observable system; otherwise its schedulers are
/// enumerated.
pub fn v_star_belief(
    m: &PoModel,
    n: usize,
    max_states: usize,
    guard: u128,
) -> Result<ValueReport, SemanticsError> {
    let bm = build_belief_model_upto(m, n, max_states)?;
    v_star_on_belief_model(&bm, n, guard)
}

pub fn v_star_on_belief_model(
    bm: &BeliefModel,
    n: usize,
    guard: u128,
) -> Result<ValueReport, SemanticsError> {
    if check_history_injectivity(&bm.model, n) {
        let full = bm.model.fully_observable_counterpart();
        let mut report = v_star_fullobs(&full, FullObsMode::Horizon(n))?;
        // belief ids double as observations of `full`; injectivity makes
        // the translation back to observations lossless
        report.witness = report.witness.map(|u| {
            let mut out = Scheduler {
                choices: BTreeMap::new(),
                default: u.default,
            };
            for (h, a) in u.entries() {
                out.set(h.iter().map(|b| bm.model.obs(StateId(b.0))).collect(), a);
            }
            out
        });
        report.method = Method::Belief;
        report.via = Some("fully observable dynamic programming");
        Ok(report)
    } else {
        let mut report = v_star_bruteforce(&bm.model, n, guard)?;
        report.method = Method::Belief;
        report.via = Some("scheduler enumeration");
        Ok(report)
    }
}

fn backup(m: &PoModel, values: &[ExtValue]) -> (Vec<ExtValue>, Vec<ActionId>) {
    m.state_ids()
        .map(|s| {
            let mut best: Option<(ExtValue, ActionId)> = None;
            for a in m.action_ids() {
                let v = tau(&m.transition(s, a).map(|succ| succ.map(|t| values[t.0])));
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, a));
                }
            }
            best.expect("models have actions")
        })
        .unzip()
}

/// `V*` of a fully observable model, by backward induction or (boolean
/// domain only) by Kleene iteration of `Ψ` to its least fixpoint.
pub fn v_star_fullobs(m: &PoModel, mode: FullObsMode) -> Result<ValueReport, SemanticsError> {
    if !m.is_fully_observable() {
        return Err(SemanticsError::NotFullyObservable);
    }
    let bottom = vec![ExtValue::bottom(m.kind().domain()); m.n_states()];
    match mode {
        FullObsMode::Horizon(n) => {
            let mut layers = vec![bottom];
            let mut policy = vec![Vec::new()];
            for _ in 0..n {
                let (v, p) = backup(m, layers.last().expect("nonempty"));
                layers.push(v);
                policy.push(p);
            }
            let mut witness = Scheduler {
                choices: BTreeMap::new(),
                default: Some(ActionId(0)),
            };
            let mut stack = Vec::new();
            if n > 0 {
                stack.push((m.init(), vec![m.obs(m.init())]));
            }
            while let Some((s, h)) = stack.pop() {
                let remaining = n + 1 - h.len();
                let a = policy[remaining][s.0];
                if remaining > 1 {
                    if let Some(succ) = m.transition(s, a).successor() {
                        for t in succ.support() {
                            let mut next = h.clone();
                            next.push(m.obs(*t));
                            stack.push((*t, next));
                        }
                    }
                }
                witness.set(h, a);
            }
            Ok(ValueReport {
                value: layers[n][m.init().0],
                horizon: n,
                method: Method::Fullobs,
                via: Some("backward induction"),
                per_horizon: layers.iter().map(|v| v[m.init().0]).collect(),
                witness: Some(witness),
            })
        }
        FullObsMode::Fixpoint => {
            if m.kind() != EffectKind::Nondet {
                return Err(SemanticsError::UnsupportedMode(m.kind()));
            }
            let mut layers = vec![bottom];
            loop {
                let (next, _) = backup(m, layers.last().expect("nonempty"));
                if &next == layers.last().expect("nonempty") {
                    break;
                }
                layers.push(next);
            }
            let iterations = layers.len() - 1;
            Ok(ValueReport {
                value: layers[iterations][m.init().0],
                horizon: iterations,
                method: Method::Fullobs,
                via: Some("least fixpoint"),
                per_horizon: layers.iter().map(|v| v[m.init().0]).collect(),
                witness: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorrectnessViolation {
    pub scheduler: SchedulerDocument,
    pub horizon: usize,
    pub model_value: ExtValue,
    pub belief_value: ExtValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorrectnessReport {
    pub horizon: usize,
    pub schedulers: u64,
    pub beliefs: usize,
    pub join_model: ExtValue,
    pub join_belief: ExtValue,
    pub violation_count: u64,
    /// The first few violations.
    pub violations: Vec<CorrectnessViolation>,
}

impl CorrectnessReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0 && self.join_model == self.join_belief
    }
}

const KEPT_VIOLATIONS: usize = 8;

/// Compares every truncated scheduler on `m` and on its belief model
/// (explored to depth `n`), at every horizon up to `n`.
pub fn check_correctness(
    m: &PoModel,
    n: usize,
    max_states: usize,
    guard: u128,
) -> Result<CorrectnessReport, SemanticsError> {
    let bm = build_belief_model_upto(m, n, max_states)?;
    check_correctness_against(m, &bm, n, guard)
}

pub fn check_correctness_against(
    m: &PoModel,
    bm: &BeliefModel,
    n: usize,
    guard: u128,
) -> Result<CorrectnessReport, SemanticsError> {
    check_guard(m, n, guard)?;
    let bottom = ExtValue::bottom(m.kind().domain());
    let mut report = CorrectnessReport {
        horizon: n,
        schedulers: 0,
        beliefs: bm.len(),
        join_model: bottom,
        join_belief: bottom,
        violation_count: 0,
        violations: Vec::new(),
    };
    let mut error = None;
    let _ = for_each_scheduler(m, n, |u| {
        let pair =
            scheduler_values(m, u, n).and_then(|a| Ok((a, scheduler_values(&bm.model, u, n)?)));
        let (lhs, rhs) = match pair {
            Ok(p) => p,
            Err(e) => {
                error = Some(e);
                return ControlFlow::Break(());
            }
        };
        report.schedulers += 1;
        report.join_model = report.join_model.join(lhs[n]);
        report.join_belief = report.join_belief.join(rhs[n]);
        for k in 0..=n {
            if lhs[k] != rhs[k] {
                report.violation_count += 1;
                if report.violations.len() < KEPT_VIOLATIONS {
                    report.violations.push(CorrectnessViolation {
                        scheduler: u.to_document(m),
                        horizon: k,
                        model_value: lhs[k],
                        belief_value: rhs[k],
                    });
                }
            }
        }
        ControlFlow::Continue(())
    });
    match error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpperReport {
    pub horizon: usize,
    pub partial: ExtValue,
    pub full: ExtValue,
    pub full_method: Method,
    pub obs_injective: bool,
}

impl UpperReport {
    pub fn passed(&self) -> bool {
        self.partial <= self.full && (!self.obs_injective || self.partial == self.full)
    }
}

/// Compares `V*` of `m` with `V*` of its fully observable counterpart.
/// The counterpart is enumerated too when its scheduler count fits the
/// guard, and solved by backward induction otherwise.
pub fn check_partial_upper(
    m: &PoModel,
    n: usize,
    guard: u128,
) -> Result<UpperReport, SemanticsError> {
    let partial = v_star_bruteforce(m, n, guard)?.value;
    let full_model = m.fully_observable_counterpart();
    let full = if count_schedulers(&full_model, n) <= guard {
        v_star_bruteforce(&full_model, n, guard)?
    } else {
        v_star_fullobs(&full_model, FullObsMode::Horizon(n))?
    };
    Ok(UpperReport {
        horizon: n,
        partial,
        full: full.value,
        full_method: full.method,
        obs_injective: m.obs_is_injective(),
    })
}

/// Sums of `w(p)` over terminating paths from the initial state with at
/// most `k` states, for `k = 0..=n`, following `u`.
///
/// `w(p)` is the product of the edge weights along `p` times the
/// termination weight of its last state.
pub fn weighted_path_sums(
    m: &PoModel,
    u: &Scheduler,
    n: usize,
) -> Result<Vec<Rational>, SemanticsError> {
    if m.kind() != EffectKind::Weighted {
        return Err(SemanticsError::WrongEffect {
            expected: EffectKind::Weighted,
            found: m.kind(),
        });
    }
    let mut by_length = vec![Rational::ZERO; n + 1];
    if n > 0 {
        let mut history = vec![m.obs(m.init())];
        paths(
            m,
            u,
            m.init(),
            &mut history,
            Rational::ONE,
            n,
            &mut by_length,
        )?;
    }
    let mut acc = Rational::ZERO;
    Ok(by_length
        .into_iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect())
}

fn paths(
    m: &PoModel,
    u: &Scheduler,
    s: StateId,
    history: &mut History,
    weight: Rational,
    n: usize,
    by_length: &mut [Rational],
) -> Result<(), SemanticsError> {
    let a = u
        .choice(history)
        .ok_or_else(|| SemanticsError::UndefinedChoice(history.clone()))?;
    let (succ, stop) = match m.transition(s, a) {
        Step::Reward(succ, r) => (succ, *r),
        _ => unreachable!("weighted rows carry a termination weight"),
    };
    by_length[history.len()] += weight * stop;
    if history.len() < n {
        for (t, w) in succ.weighted() {
            history.push(m.obs(*t));
            paths(m, u, *t, history, weight * w, n, by_length)?;
            history.pop();
        }
    }
    Ok(())
}

/// The terminating-path sum at horizon `n`.
pub fn weighted_path_sum(m: &PoModel, u: &Scheduler, n: usize) -> Result<ExtValue, SemanticsError> {
    Ok(ExtValue::Finite(weighted_path_sums(m, u, n)?[n]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::DEFAULT_MAX_STATES;
    use crate::model::{parse_model, random_model};
    use proptest::prelude::*;

    const FIG1: &str = include_str!("../examples/fig1.json");

    fn fig1() -> PoModel {
        parse_model(FIG1).unwrap()
    }

    fn q(s: &str) -> ExtValue {
        s.parse().unwrap()
    }

    fn named(m: &PoModel, entries: &[(&[&str], &str)]) -> Scheduler {
        let mut u = Scheduler::new();
        for (h, a) in entries {
            u.set(
                h.iter().map(|o| m.obs_by_name(o).unwrap()).collect(),
                m.action_by_name(a).unwrap(),
            );
        }
        u
    }

    #[test]
    fn running_example_scheduler() {
        let m = fig1();
        let u = named(
            &m,
            &[
                (&["o0"], "a"),
                (&["o0", "o"], "b"),
                (&["o0", "o", "o1"], "a"),
                (&["o0", "o", "o2"], "a"),
            ],
        );
        assert_eq!(
            scheduler_values(&m, &u, 3).unwrap(),
            [q("0"), q("1"), q("2"), q("2")]
        );
        let partial = named(&m, &[(&["o0"], "a")]);
        assert_eq!(
            scheduler_value(&m, &partial, 2),
            Err(SemanticsError::UndefinedChoice(vec![
                m.obs_by_name("o0").unwrap(),
                m.obs_by_name("o").unwrap()
            ]))
        );
        assert_eq!(scheduler_value(&m, &partial, 1), Ok(q("1")));
    }

    #[test]
    fn running_example_optimum() {
        let m = fig1();
        let brute = v_star_bruteforce(&m, 3, DEFAULT_GUARD).unwrap();
        assert_eq!(brute.value, q("2"));
        assert_eq!(brute.per_horizon, [q("0"), q("1"), q("2"), q("2")]);
        let witness = brute.witness.unwrap();
        let b = m.action_by_name("b").unwrap();
        let o0 = m.obs_by_name("o0").unwrap();
        let o = m.obs_by_name("o").unwrap();
        assert_eq!(witness.choice(&[o0]), m.action_by_name("a"));
        assert_eq!(witness.choice(&[o0, o]), Some(b));
        assert_eq!(scheduler_value(&m, &witness, 3).unwrap(), q("2"));

        let belief = v_star_belief(&m, 3, DEFAULT_MAX_STATES, DEFAULT_GUARD).unwrap();
        assert_eq!(belief.value, q("2"));
        assert_eq!(belief.method, Method::Belief);
        assert_eq!(
            scheduler_value(&m, belief.witness.as_ref().unwrap(), 3).unwrap(),
            q("2")
        );

        let full = m.fully_observable_counterpart();
        assert_eq!(
            v_star_bruteforce(&full, 3, DEFAULT_GUARD).unwrap().value,
            q("5/2")
        );
        let dp = v_star_fullobs(&full, FullObsMode::Horizon(3)).unwrap();
        assert_eq!(dp.value, q("5/2"));
        let u = dp.witness.unwrap();
        let h = |names: &[&str]| -> History {
            names.iter().map(|s| full.obs_by_name(s).unwrap()).collect()
        };
        assert_eq!(u.choice(&h(&["s0", "s1"])), full.action_by_name("a"));
        assert_eq!(u.choice(&h(&["s0", "s2"])), full.action_by_name("b"));
        assert_eq!(scheduler_value(&full, &u, 3).unwrap(), q("5/2"));
        assert!(v_star_fullobs(&m, FullObsMode::Horizon(3)).is_err());
    }

    #[test]
    fn horizon_zero_is_bottom() {
        for kind in EffectKind::ALL {
            let m = random_model(kind, 3, 2, 2, 1);
            let r = v_star_bruteforce(&m, 0, DEFAULT_GUARD).unwrap();
            assert_eq!(r.value, ExtValue::bottom(kind.domain()));
            assert_eq!(count_schedulers(&m, 0), 1);
        }
        assert_eq!(v_star_bruteforce(&fig1(), 0, 1).unwrap().value, q("0"));
    }

    #[test]
    fn immediate_termination() {
        let m = parse_model(
            r#"{"effect": "nondet", "states": ["s"], "actions": ["a"], "observations": ["o"],
                "obs": {"s": "o"}, "init": "s", "delta": {"s": {"a": {"succ": "check"}}}}"#,
        )
        .unwrap();
        let u = Scheduler::constant(ActionId(0));
        assert_eq!(
            scheduler_values(&m, &u, 1).unwrap(),
            [ExtValue::FALSE, ExtValue::TRUE]
        );
        let fix = v_star_fullobs(&m, FullObsMode::Fixpoint).unwrap();
        assert_eq!((fix.value, fix.horizon), (ExtValue::TRUE, 1));
    }

    #[test]
    fn fixpoint_needs_booleans() {
        let full = fig1().fully_observable_counterpart();
        assert_eq!(
            v_star_fullobs(&full, FullObsMode::Fixpoint),
            Err(SemanticsError::UnsupportedMode(EffectKind::Dist))
        );
    }

    #[test]
    fn nondet_fixpoint_reaches_termination() {
        // x → {y, z}; y → ✓; z → {y} under a, z → {z} under b
        let m = parse_model(
            r#"{"effect": "nondet", "states": ["x", "y", "z"], "actions": ["a", "b"],
                "observations": ["x", "y", "z"], "obs": {"x": "x", "y": "y", "z": "z"},
                "init": "x",
                "delta": {"x": {"a": {"succ": ["y", "z"]}, "b": {"succ": ["x"]}},
                          "y": {"a": {"succ": "check"}, "b": {"succ": "check"}},
                          "z": {"a": {"succ": ["y"]}, "b": {"succ": ["z"]}}}}"#,
        )
        .unwrap();
        let fix = v_star_fullobs(&m, FullObsMode::Fixpoint).unwrap();
        assert_eq!(fix.value, ExtValue::TRUE);
        assert_eq!(fix.horizon, 3);
        let by_horizon = v_star_fullobs(&m, FullObsMode::Horizon(5))
            .unwrap()
            .per_horizon;
        assert_eq!(
            by_horizon,
            [false, false, false, true, true, true].map(ExtValue::Bool)
        );
    }

    #[test]
    fn zero_rewards_give_zero() {
        let m = parse_model(
            r#"{"effect": "dist", "states": ["s", "t"], "actions": ["a"],
                "observations": ["s", "t"], "obs": {"s": "s", "t": "t"}, "init": "s",
                "delta": {"s": {"a": {"succ": {"t": 1}, "reward": 0}},
                          "t": {"a": {"succ": {"s": "1/3", "t": "2/3"}, "reward": 0}}}}"#,
        )
        .unwrap();
        let r = v_star_fullobs(&m, FullObsMode::Horizon(6)).unwrap();
        assert!(r.per_horizon.iter().all(|v| *v == q("0")));
        assert!(r.stable());
    }

    fn geometric() -> PoModel {
        parse_model(
            r#"{"effect": "weighted", "states": ["s"], "actions": ["a"], "observations": ["o"],
                "obs": {"s": "o"}, "init": "s",
                "delta": {"s": {"a": {"succ": {"s": "1/2"}, "reward": 1}}}}"#,
        )
        .unwrap()
    }

    #[test]
    fn path_sums() {
        let m = geometric();
        let u = Scheduler::constant(ActionId(0));
        let sums: Vec<String> = weighted_path_sums(&m, &u, 3)
            .unwrap()
            .iter()
            .map(|r| r.to_string())
            .collect();
        assert_eq!(sums, ["0", "1", "3/2", "7/4"]);
        assert_eq!(weighted_path_sum(&m, &u, 3).unwrap(), q("7/4"));
        assert_eq!(scheduler_value(&m, &u, 3).unwrap(), q("7/4"));

        let chain = parse_model(
            r#"{"effect": "weighted", "states": ["s", "t"], "actions": ["a"],
                "observations": ["s", "t"], "obs": {"s": "s", "t": "t"}, "init": "s",
                "delta": {"s": {"a": {"succ": {"t": 1}, "reward": 0}},
                          "t": {"a": {"succ": {}, "reward": "5/3"}}}}"#,
        )
        .unwrap();
        for n in 2..5 {
            assert_eq!(weighted_path_sum(&chain, &u, n).unwrap(), q("5/3"));
        }
        assert_eq!(weighted_path_sum(&chain, &u, 1).unwrap(), q("0"));
        assert!(matches!(
            weighted_path_sum(&fig1(), &u, 2),
            Err(SemanticsError::WrongEffect { .. })
        ));
    }

    #[test]
    fn enumeration_matches_count() {
        for kind in EffectKind::ALL {
            for seed in 0..10 {
                let m = random_model(kind, 4, 2, 2, seed);
                for n in 0..4 {
                    let mut seen = BTreeSet::new();
                    let _ = for_each_scheduler(&m, n, |u| {
                        seen.insert(u.clone());
                        ControlFlow::Continue(())
                    });
                    assert_eq!(seen.len() as u128, count_schedulers(&m, n));
                }
            }
        }
    }

    #[test]
    fn guard_refuses() {
        let m = random_model(EffectKind::Dist, 5, 2, 1, 7);
        assert!(matches!(
            v_star_bruteforce(&m, 4, 3),
            Err(SemanticsError::TooManySchedulers { guard: 3, .. })
        ));
    }

    #[test]
    fn scheduler_documents_round_trip() {
        let m = fig1();
        let u = v_star_bruteforce(&m, 3, DEFAULT_GUARD)
            .unwrap()
            .witness
            .unwrap();
        let doc = u.to_document(&m);
        assert_eq!(Scheduler::from_document(&doc, &m).unwrap(), u);
    }

    #[test]
    fn running_example_correctness() {
        let m = fig1();
        let r = check_correctness(&m, 3, DEFAULT_MAX_STATES, DEFAULT_GUARD).unwrap();
        assert!(r.passed());
        assert_eq!((r.join_model, r.join_belief), (q("2"), q("2")));
        let up = check_partial_upper(&m, 3, DEFAULT_GUARD).unwrap();
        assert_eq!((up.partial, up.full), (q("2"), q("5/2")));
        assert!(up.passed());
    }

    fn kind() -> impl Strategy<Value = EffectKind> {
        prop::sample::select(EffectKind::ALL.to_vec())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn monotone_chain(kind in kind(), seed in 0u64..10_000, s in 1usize..5, a in 1usize..3, o in 1usize..3) {
            let m = random_model(kind, s, a, o, seed);
            let _ = for_each_scheduler(&m, 3, |u| {
                let v = scheduler_values(&m, u, 3).unwrap();
                assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
                ControlFlow::Continue(())
            });
        }

        #[test]
        fn dp_matches_enumeration(kind in kind(), seed in 0u64..10_000, s in 1usize..5, n in 0usize..4) {
            let m = random_model(kind, s, 2, 1, seed).fully_observable_counterpart();
            let dp = v_star_fullobs(&m, FullObsMode::Horizon(n)).unwrap();
            let brute = v_star_bruteforce(&m, n, DEFAULT_GUARD).unwrap();
            prop_assert_eq!(&dp.per_horizon, &brute.per_horizon);
            prop_assert_eq!(scheduler_value(&m, dp.witness.as_ref().unwrap(), n).unwrap(), dp.value);
        }

        #[test]
        fn belief_value_matches_enumeration(kind in kind(), seed in 0u64..10_000, s in 1usize..5, o in 1usize..4) {
            let m = random_model(kind, s, 2, o, seed);
            let brute = v_star_bruteforce(&m, 3, DEFAULT_GUARD).unwrap();
            let belief = v_star_belief(&m, 3, DEFAULT_MAX_STATES, DEFAULT_GUARD).unwrap();
            prop_assert_eq!(&brute.per_horizon, &belief.per_horizon);
            prop_assert_eq!(scheduler_value(&m, belief.witness.as_ref().unwrap(), 3).unwrap(), belief.value);
        }

        #[test]
        fn path_sum_is_the_fixpoint_iterate(seed in 0u64..10_000, s in 1usize..4, o in 1usize..3) {
            let m = random_model(EffectKind::Weighted, s, 2, o, seed);
            let _ = for_each_scheduler(&m, 4, |u| {
                let sums: Vec<ExtValue> = weighted_path_sums(&m, u, 4).unwrap().into_iter().map(ExtValue::Finite).collect();
                assert_eq!(sums, scheduler_values(&m, u, 4).unwrap());
                ControlFlow::Continue(())
            });
        }
    }
}
