//! Finite pointed partially observable systems and their JSON format.
//!
//! A [`PoModel`] pairs an action-indexed transition table
//! `δ : S × A → F T S` with an observation map `obs : S → O` and a single
//! initial state. Identifiers are strings in documents and dense indices in
//! memory.
//!
//! ```json
//! {
//!   "effect": "dist",
//!   "states": ["s0", "s1"], "actions": ["a"], "observations": ["o"],
//!   "obs": {"s0": "o", "s1": "o"},
//!   "init": "s0",
//!   "delta": {
//!     "s0": {"a": {"succ": {"s1": "1"}, "reward": "1/2"}},
//!     "s1": {"a": {"succ": {"s1": "1"}, "reward": "0"}}
//!   }
//! }
//! ```
//!
//! Nondeterministic rows are written `{"succ": ["s1", ...]}`, or
//! `{"succ": "check"}` for termination.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effects::{gen, EffectError, EffectKind, EffectValue, Step};
use crate::numeric::{ArithmeticError, Rational};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", stringify!($name).chars().next().unwrap().to_ascii_lowercase(), self.0)
            }
        }
    };
}

id_type!(
    /// Index into [`PoModel::states`].
    StateId
);
id_type!(
    /// Index into [`PoModel::actions`].
    ActionId
);
id_type!(
    /// Index into [`PoModel::observations`].
    ObsId
);

/// One row `δ(s, a)` of the transition table.
pub type Transition = Step<EffectValue<StateId>>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed model document: {0}")]
    Schema(String),
    #[error("the {0} list must not be empty")]
    Empty(&'static str),
    #[error("duplicate {kind} id {name:?}")]
    Duplicate { kind: &'static str, name: String },
    #[error("unknown {kind} id {name:?}")]
    UnknownId { kind: &'static str, name: String },
    #[error("state {0:?} has no observation")]
    MissingObservation(String),
    #[error("no transition for state {state:?} under action {action:?}")]
    MissingTransition { state: String, action: String },
    #[error("transition ({state}, {action}): {source}")]
    Row {
        state: String,
        action: String,
        #[source]
        source: Box<EffectError>,
    },
    #[error("transition ({state}, {action}): {reason}")]
    Shape {
        state: String,
        action: String,
        reason: String,
    },
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
}

/// A validated finite pointed PO coalgebra.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoModel {
    kind: EffectKind,
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    obs: Vec<ObsId>,
    init: StateId,
    delta: Vec<Vec<Transition>>,
}

fn check_unique(kind: &'static str, names: &[String]) -> Result<(), ModelError> {
    if names.is_empty() {
        return Err(ModelError::Empty(kind));
    }
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(ModelError::Duplicate {
                kind,
                name: n.clone(),
            });
        }
    }
    Ok(())
}

impl PoModel {
    /// Validates and assembles a model. `delta[s][a]` is the row for state
    /// `s` and action `a`.
    pub fn new(
        kind: EffectKind,
        states: Vec<String>,
        actions: Vec<String>,
        observations: Vec<String>,
        obs: Vec<ObsId>,
        init: StateId,
        delta: Vec<Vec<Transition>>,
    ) -> Result<Self, ModelError> {
        check_unique("state", &states)?;
        check_unique("action", &actions)?;
        check_unique("observation", &observations)?;
        if obs.len() != states.len() {
            return Err(ModelError::Schema(format!(
                "{} observations assigned for {} states",
                obs.len(),
                states.len()
            )));
        }
        if let Some(o) = obs.iter().find(|o| o.0 >= observations.len()) {
            return Err(ModelError::UnknownId {
                kind: "observation",
                name: format!("#{}", o.0),
            });
        }
        if init.0 >= states.len() {
            return Err(ModelError::UnknownId {
                kind: "state",
                name: format!("#{}", init.0),
            });
        }
        if delta.len() != states.len() || delta.iter().any(|row| row.len() != actions.len()) {
            return Err(ModelError::Schema(
                "transition table does not cover states × actions".into(),
            ));
        }
        let model = PoModel {
            kind,
            states,
            actions,
            observations,
            obs,
            init,
            delta,
        };
        for s in model.state_ids() {
            for a in model.action_ids() {
                model.validate_row(s, a)?;
            }
        }
        Ok(model)
    }

    fn validate_row(&self, s: StateId, a: ActionId) -> Result<(), ModelError> {
        let shape = |reason: &str| ModelError::Shape {
            state: self.states[s.0].clone(),
            action: self.actions[a.0].clone(),
            reason: reason.to_string(),
        };
        let row = &self.delta[s.0][a.0];
        match (self.kind, row) {
            (EffectKind::Nondet, Step::Terminate) => return Ok(()),
            (EffectKind::Nondet, Step::Continue(EffectValue::Set(set))) if set.is_empty() => {
                return Err(ModelError::Row {
                    state: self.states[s.0].clone(),
                    action: self.actions[a.0].clone(),
                    source: Box::new(EffectError::EmptySet),
                })
            }
            (EffectKind::Nondet, Step::Continue(EffectValue::Set(_))) => {}
            (EffectKind::Dist, Step::Reward(EffectValue::Dist(m), r)) => {
                let total: Rational = m.values().sum();
                if total != Rational::ONE {
                    return Err(ModelError::Row {
                        state: self.states[s.0].clone(),
                        action: self.actions[a.0].clone(),
                        source: Box::new(EffectError::NotNormalized(total)),
                    });
                }
                if r.is_negative() {
                    return Err(shape("negative reward"));
                }
            }
            (EffectKind::Weighted, Step::Reward(EffectValue::Weights(_), r)) => {
                if r.is_negative() {
                    return Err(shape("negative reward"));
                }
            }
            _ => return Err(shape("row shape does not match the model's effect")),
        }
        let succ = row.successor().expect("non-terminating row");
        for (t, w) in succ.weighted() {
            if t.0 >= self.states.len() {
                return Err(ModelError::UnknownId {
                    kind: "state",
                    name: format!("#{}", t.0),
                });
            }
            if !w.is_positive() {
                return Err(shape("non-positive weight in canonical row"));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> EffectKind {
        self.kind
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn observations(&self) -> &[String] {
        &self.observations
    }

    pub fn init(&self) -> StateId {
        self.init
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn action_ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.actions.len()).map(ActionId)
    }

    pub fn obs(&self, s: StateId) -> ObsId {
        self.obs[s.0]
    }

    pub fn obs_map(&self) -> &[ObsId] {
        &self.obs
    }

    pub fn transition(&self, s: StateId, a: ActionId) -> &Transition {
        &self.delta[s.0][a.0]
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.0]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a.0]
    }

    pub fn obs_name(&self, o: ObsId) -> &str {
        &self.observations[o.0]
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn action_by_name(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|s| s == name).map(ActionId)
    }

    pub fn obs_by_name(&self, name: &str) -> Option<ObsId> {
        self.observations.iter().position(|s| s == name).map(ObsId)
    }

    /// `S = O` and `obs` is the identity.
    pub fn is_fully_observable(&self) -> bool {
        self.observations.len() == self.states.len()
            && self.obs.iter().enumerate().all(|(i, o)| o.0 == i)
    }

    /// Whether `obs` is injective (hence split mono, since `S` is nonempty).
    pub fn obs_is_injective(&self) -> bool {
        let mut seen = vec![false; self.observations.len()];
        self.obs
            .iter()
            .all(|o| !std::mem::replace(&mut seen[o.0], true))
    }

    /// States reachable from the initial state, in breadth-first order.
    pub fn reachable_states(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.n_states()];
        let mut order = vec![self.init];
        seen[self.init.0] = true;
        let mut queue = VecDeque::from([self.init]);
        while let Some(s) = queue.pop_front() {
            for a in self.action_ids() {
                if let Some(succ) = self.transition(s, a).successor() {
                    for t in succ.support() {
                        if !std::mem::replace(&mut seen[t.0], true) {
                            order.push(*t);
                            queue.push_back(*t);
                        }
                    }
                }
            }
        }
        order
    }

    /// The same system with the identity as observation map.
    pub fn fully_observable_counterpart(&self) -> PoModel {
        PoModel {
            observations: self.states.clone(),
            obs: self.state_ids().map(|s| ObsId(s.0)).collect(),
            ..self.clone()
        }
    }

    /// Removes a non-initial state. Rows that pointed into it lose that
    /// successor: distributions are renormalized, nondeterministic rows that
    /// become empty terminate. Returns `None` if a distribution row would
    /// lose all of its mass.
    pub fn without_state(&self, victim: StateId) -> Option<PoModel> {
        if victim == self.init || self.n_states() == 1 {
            return None;
        }
        let remap = |s: StateId| StateId(if s.0 > victim.0 { s.0 - 1 } else { s.0 });
        let mut delta = Vec::with_capacity(self.n_states() - 1);
        for s in self.state_ids().filter(|s| *s != victim) {
            let mut row = Vec::with_capacity(self.n_actions());
            for a in self.action_ids() {
                let t = self.transition(s, a);
                let new = match t {
                    Step::Terminate => Step::Terminate,
                    Step::Continue(succ) => {
                        let kept = succ.restrict(|x| *x != victim);
                        if kept.is_empty() {
                            Step::Terminate
                        } else {
                            Step::Continue(
                                EffectValue::set(kept.into_iter().map(|(x, _)| remap(x))).ok()?,
                            )
                        }
                    }
                    Step::Reward(succ, r) => {
                        let kept = succ.restrict(|x| *x != victim);
                        let value = match succ {
                            EffectValue::Dist(_) => {
                                let mass: Rational = kept.iter().map(|(_, w)| *w).sum();
                                let scale = mass.recip().ok()?;
                                EffectValue::dist(
                                    kept.into_iter().map(|(x, w)| (remap(x), w * scale)),
                                )
                                .ok()?
                            }
                            _ => EffectValue::weights(kept.into_iter().map(|(x, w)| (remap(x), w)))
                                .ok()?,
                        };
                        Step::Reward(value, *r)
                    }
                };
                row.push(new);
            }
            delta.push(row);
        }
        let mut states = self.states.clone();
        states.remove(victim.0);
        let mut obs = self.obs.clone();
        obs.remove(victim.0);
        PoModel::new(
            self.kind,
            states,
            self.actions.clone(),
            self.observations.clone(),
            obs,
            remap(self.init),
            delta,
        )
        .ok()
    }

    /// Removes an action, if at least one other remains.
    pub fn without_action(&self, victim: ActionId) -> Option<PoModel> {
        if self.n_actions() == 1 {
            return None;
        }
        let mut actions = self.actions.clone();
        actions.remove(victim.0);
        let delta = self
            .delta
            .iter()
            .map(|row| {
                let mut row = row.clone();
                row.remove(victim.0);
                row
            })
            .collect();
        PoModel::new(
            self.kind,
            self.states.clone(),
            actions,
            self.observations.clone(),
            self.obs.clone(),
            self.init,
            delta,
        )
        .ok()
    }

    pub fn to_document(&self) -> ModelDocument {
        let name = |s: &StateId| self.states[s.0].clone();
        let delta = self
            .state_ids()
            .map(|s| {
                let row = self
                    .action_ids()
                    .map(|a| {
                        let entry = match self.transition(s, a) {
                            Step::Terminate => RowDocument {
                                succ: SuccDocument::Tag("check".into()),
                                reward: None,
                            },
                            Step::Continue(succ) => RowDocument {
                                succ: SuccDocument::List(succ.support().map(name).collect()),
                                reward: None,
                            },
                            Step::Reward(succ, r) => RowDocument {
                                succ: SuccDocument::Weights(
                                    succ.weighted()
                                        .map(|(t, w)| (name(t), Literal::Text(w.to_string())))
                                        .collect(),
                                ),
                                reward: Some(Literal::Text(r.to_string())),
                            },
                        };
                        (self.actions[a.0].clone(), entry)
                    })
                    .collect();
                (name(&s), row)
            })
            .collect();
        ModelDocument {
            effect: self.kind,
            states: self.states.clone(),
            actions: self.actions.clone(),
            observations: self.observations.clone(),
            obs: self
                .state_ids()
                .map(|s| (name(&s), self.observations[self.obs[s.0].0].clone()))
                .collect(),
            init: name(&self.init),
            delta,
            legend: None,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<PoModel, ModelError> {
        let index =
            |kind: &'static str, names: &[String]| -> Result<HashMap<String, usize>, ModelError> {
                check_unique(kind, names)?;
                Ok(names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.clone(), i))
                    .collect())
            };
        let state_ix = index("state", &doc.states)?;
        let action_ix = index("action", &doc.actions)?;
        let obs_ix = index("observation", &doc.observations)?;
        let lookup = |ix: &HashMap<String, usize>, kind: &'static str, name: &str| {
            ix.get(name).copied().ok_or_else(|| ModelError::UnknownId {
                kind,
                name: name.to_string(),
            })
        };
        for name in doc.obs.keys() {
            lookup(&state_ix, "state", name)?;
        }
        for (name, row) in &doc.delta {
            lookup(&state_ix, "state", name)?;
            for action in row.keys() {
                lookup(&action_ix, "action", action)?;
            }
        }
        let obs = doc
            .states
            .iter()
            .map(|s| {
                let o = doc
                    .obs
                    .get(s)
                    .ok_or_else(|| ModelError::MissingObservation(s.clone()))?;
                lookup(&obs_ix, "observation", o).map(ObsId)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let init = StateId(lookup(&state_ix, "state", &doc.init)?);

        let mut delta = Vec::with_capacity(doc.states.len());
        for s in &doc.states {
            let mut row = Vec::with_capacity(doc.actions.len());
            for a in &doc.actions {
                let entry = doc.delta.get(s).and_then(|r| r.get(a)).ok_or_else(|| {
                    ModelError::MissingTransition {
                        state: s.clone(),
                        action: a.clone(),
                    }
                })?;
                let row_err = |source: EffectError| ModelError::Row {
                    state: s.clone(),
                    action: a.clone(),
                    source: Box::new(source),
                };
                let shape = |reason: &str| ModelError::Shape {
                    state: s.clone(),
                    action: a.clone(),
                    reason: reason.to_string(),
                };
                let t = match (doc.effect, &entry.succ) {
                    (EffectKind::Nondet, SuccDocument::Tag(tag)) if tag == "check" => {
                        Step::Terminate
                    }
                    (EffectKind::Nondet, SuccDocument::List(names)) => {
                        let ids = names
                            .iter()
                            .map(|n| lookup(&state_ix, "state", n).map(StateId))
                            .collect::<Result<Vec<_>, _>>()?;
                        Step::Continue(EffectValue::set(ids).map_err(row_err)?)
                    }
                    (EffectKind::Dist | EffectKind::Weighted, SuccDocument::Weights(m)) => {
                        let entries = m
                            .iter()
                            .map(|(n, w)| Ok((StateId(lookup(&state_ix, "state", n)?), w.parse()?)))
                            .collect::<Result<Vec<_>, ModelError>>()?;
                        let reward = match &entry.reward {
                            Some(r) => r.parse()?,
                            None => return Err(shape("missing reward")),
                        };
                        let succ = if doc.effect == EffectKind::Dist {
                            EffectValue::dist(entries)
                        } else {
                            EffectValue::weights(entries)
                        }
                        .map_err(row_err)?;
                        Step::Reward(succ, reward)
                    }
                    (kind, _) => {
                        return Err(shape(&format!(
                            "successor format does not fit effect {kind}"
                        )))
                    }
                };
                row.push(t);
            }
            delta.push(row);
        }
        PoModel::new(
            doc.effect,
            doc.states.clone(),
            doc.actions.clone(),
            doc.observations.clone(),
            obs,
            init,
            delta,
        )
    }
}

/// A rational literal as written in a document: a string such as `"1/2"`
/// or a bare JSON number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Text(String),
    Number(serde_json::Number),
}

impl Literal {
    pub fn parse(&self) -> Result<Rational, ArithmeticError> {
        match self {
            Literal::Text(s) => s.parse(),
            Literal::Number(n) => n.to_string().parse(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SuccDocument {
    Tag(String),
    List(Vec<String>),
    Weights(BTreeMap<String, Literal>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowDocument {
    pub succ: SuccDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Literal>,
}

/// A legend entry: the effect value a synthetic belief id stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EffectDocument {
    List(Vec<String>),
    Weights(BTreeMap<String, Literal>),
}

/// The on-disk shape of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub effect: EffectKind,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub obs: BTreeMap<String, String>,
    pub init: String,
    pub delta: BTreeMap<String, BTreeMap<String, RowDocument>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legend: Option<BTreeMap<String, EffectDocument>>,
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))
    }

    pub fn to_json(&self, pretty: bool) -> String {
        if pretty {
            serde_json::to_string_pretty(self)
        } else {
            serde_json::to_string(self)
        }
        .expect("documents serialize")
    }
}

pub fn parse_model(text: &str) -> Result<PoModel, ModelError> {
    PoModel::from_document(&ModelDocument::from_json(text)?)
}

pub fn serialize_model(m: &PoModel) -> String {
    m.to_document().to_json(true)
}

/// Shape parameters for [`random_model_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomModelParams {
    pub kind: EffectKind,
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    /// Largest support of a single row.
    pub max_support: usize,
}

/// A random valid model, deterministic per seed, with rows of support at
/// most two.
pub fn random_model(
    kind: EffectKind,
    n_states: usize,
    n_actions: usize,
    n_obs: usize,
    seed: u64,
) -> PoModel {
    random_model_with(
        RandomModelParams {
            kind,
            states: n_states,
            actions: n_actions,
            observations: n_obs,
            max_support: 2,
        },
        seed,
    )
}

pub fn random_model_with(p: RandomModelParams, seed: u64) -> PoModel {
    assert!(p.states >= 1 && p.actions >= 1 && p.observations >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<StateId> = (0..p.states).map(StateId).collect();
    let obs: Vec<ObsId> = (0..p.states)
        .map(|_| ObsId(rng.gen_range(0..p.observations)))
        .collect();
    let delta = (0..p.states)
        .map(|_| {
            (0..p.actions)
                .map(|_| match p.kind {
                    EffectKind::Nondet if rng.gen_ratio(1, 4) => Step::Terminate,
                    EffectKind::Nondet => {
                        Step::Continue(gen::effect(p.kind, &ids, p.max_support, &mut rng))
                    }
                    EffectKind::Dist => Step::Reward(
                        gen::effect(p.kind, &ids, p.max_support, &mut rng),
                        gen::small_reward(&mut rng),
                    ),
                    EffectKind::Weighted => {
                        let succ = if rng.gen_ratio(1, 6) {
                            EffectValue::zero_weights()
                        } else {
                            gen::effect(p.kind, &ids, p.max_support, &mut rng)
                        };
                        Step::Reward(succ, gen::small_reward(&mut rng))
                    }
                })
                .collect()
        })
        .collect();
    PoModel::new(
        p.kind,
        (0..p.states).map(|i| format!("s{i}")).collect(),
        (0..p.actions).map(|i| format!("a{i}")).collect(),
        (0..p.observations).map(|i| format!("o{i}")).collect(),
        obs,
        StateId(0),
        delta,
    )
    .expect("random models are valid by construction")
}
