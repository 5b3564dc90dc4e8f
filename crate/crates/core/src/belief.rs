//! The belief construction on reachable beliefs.
//!
//! A belief is a fibre-pure effect value over the states of a model, tagged
//! with the observation of its fibre. The belief transition determinizes the
//! original transition table and then splits the result by observation:
//! `c^Bel = F α ∘ Det(δ) ∘ ι`.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::effects::{decompose, determinize, flat, gen, EffectKind, EffectValue, Fibre, Step};
use crate::model::{
    ActionId, EffectDocument, Literal, ModelDocument, ModelError, ObsId, PoModel, StateId,
    Transition,
};
use crate::numeric::{catch_overflow, Rational};

/// A fibre-pure effect value over states together with its observation.
pub type BeliefState = Fibre<StateId, ObsId>;

/// Default bound on the number of reachable beliefs.
pub const DEFAULT_MAX_STATES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BeliefError {
    #[error("more than {max_states} reachable beliefs ({frontier} still waiting to be expanded)")]
    BoundExceeded { max_states: usize, frontier: usize },
    #[error("the model is not fully observable")]
    NotFullyObservable,
    #[error("belief weights outgrew exact arithmetic after {explored} beliefs")]
    Overflow { explored: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `η` of the initial state, as a belief.
pub fn initial_belief(m: &PoModel) -> BeliefState {
    Fibre {
        observation: m.obs(m.init()),
        value: EffectValue::unit(m.kind(), m.init()),
    }
}

/// `Det(δ)(t, a)`: one determinized step from an arbitrary effect value.
pub fn det_step(m: &PoModel, t: &EffectValue<StateId>, a: ActionId) -> Transition {
    determinize(t, |s| m.transition(*s, a).clone())
}

/// `c^Bel(b, a)`.
pub fn belief_transition(
    m: &PoModel,
    b: &BeliefState,
    a: ActionId,
) -> Step<EffectValue<BeliefState>> {
    det_step(m, &b.value, a).map(|t| decompose(t, |s| m.obs(*s)))
}

/// The reachable part of the belief coalgebra, presented as an ordinary
/// model whose state `i` stands for `legend[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeliefModel {
    pub model: PoModel,
    pub legend: Vec<BeliefState>,
    /// Beliefs first met at the exploration depth limit. Their rows are
    /// absorbing placeholders with value `⊥` at every horizon.
    pub truncated: Vec<StateId>,
    source_states: Vec<String>,
}

impl BeliefModel {
    pub fn belief(&self, s: StateId) -> &BeliefState {
        &self.legend[s.0]
    }

    pub fn len(&self) -> usize {
        self.legend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.legend.is_empty()
    }

    /// The model document with a `legend` object mapping belief ids to the
    /// effect values they stand for.
    pub fn to_document(&self) -> ModelDocument {
        let mut doc = self.model.to_document();
        let legend = self
            .legend
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let name = |s: &StateId| self.source_states[s.0].clone();
                let entry = match &b.value {
                    EffectValue::Set(set) => EffectDocument::List(set.iter().map(name).collect()),
                    EffectValue::Dist(m) | EffectValue::Weights(m) => EffectDocument::Weights(
                        m.iter()
                            .map(|(s, w)| (name(s), Literal::Text(w.to_string())))
                            .collect(),
                    ),
                };
                (self.model.state_name(StateId(i)).to_string(), entry)
            })
            .collect();
        doc.legend = Some(legend);
        doc
    }
}

/// Explores beliefs breadth-first from `η(init)`, trying actions in order
/// and successors in canonical order, so numbering is deterministic.
pub fn build_belief_model(m: &PoModel, max_states: usize) -> Result<BeliefModel, BeliefError> {
    explore(m, None, max_states)
}

/// Like [`build_belief_model`], but only expands beliefs reachable in fewer
/// than `depth` steps. Beliefs first met at depth `depth` get absorbing
/// placeholder rows.
///
/// A history of length at most `depth` never leaves the expanded part, so
/// horizon values up to `depth` are those of the full belief model, while
/// exploration stays finite even when the reachable belief space is not.
pub fn build_belief_model_upto(
    m: &PoModel,
    depth: usize,
    max_states: usize,
) -> Result<BeliefModel, BeliefError> {
    explore(m, Some(depth), max_states)
}

fn placeholder(kind: EffectKind, s: StateId) -> Transition {
    let stay = EffectValue::unit(kind, s);
    match kind {
        EffectKind::Nondet => Step::Continue(stay),
        _ => Step::Reward(stay, Rational::ZERO),
    }
}

fn explore(
    m: &PoModel,
    limit: Option<usize>,
    max_states: usize,
) -> Result<BeliefModel, BeliefError> {
    let mut index: HashMap<BeliefState, usize> = HashMap::new();
    let mut legend = Vec::new();
    let mut depth = Vec::new();
    let mut truncated = Vec::new();
    let mut queue = VecDeque::new();
    let mut delta: Vec<Vec<Transition>> = Vec::new();

    let start = initial_belief(m);
    index.insert(start.clone(), 0);
    legend.push(start);
    depth.push(0);
    queue.push_back(0usize);

    while let Some(i) = queue.pop_front() {
        if limit.is_some_and(|d| depth[i] >= d) {
            truncated.push(StateId(i));
            delta.push(vec![placeholder(m.kind(), StateId(i)); m.n_actions()]);
            continue;
        }
        let b = legend[i].clone();
        let mut row = Vec::with_capacity(m.n_actions());
        for a in m.action_ids() {
            let step = catch_overflow(|| belief_transition(m, &b, a)).map_err(|_| {
                BeliefError::Overflow {
                    explored: legend.len(),
                }
            })?;
            if let Some(succ) = step.successor() {
                for next in succ.support() {
                    if index.contains_key(next) {
                        continue;
                    }
                    if legend.len() == max_states {
                        return Err(BeliefError::BoundExceeded {
                            max_states,
                            frontier: queue.len() + 1,
                        });
                    }
                    index.insert(next.clone(), legend.len());
                    queue.push_back(legend.len());
                    depth.push(depth[i] + 1);
                    legend.push(next.clone());
                }
            }
            row.push(step.map(|succ| succ.map(|next| StateId(index[next]))));
        }
        delta.push(row);
    }

    let model = PoModel::new(
        m.kind(),
        (0..legend.len()).map(|i| format!("b{i}")).collect(),
        m.actions().to_vec(),
        m.observations().to_vec(),
        legend.iter().map(|b| b.observation).collect(),
        StateId(0),
        delta,
    )?;
    Ok(BeliefModel {
        model,
        legend,
        truncated,
        source_states: m.states().to_vec(),
    })
}

/// A random fibre-pure belief over the states of `m`.
pub fn sample_belief<R: Rng + ?Sized>(m: &PoModel, rng: &mut R) -> BeliefState {
    let states: Vec<StateId> = m.state_ids().collect();
    let pivot = *states.choose(rng).expect("models have states");
    let observation = m.obs(pivot);
    let fibre: Vec<StateId> = states
        .into_iter()
        .filter(|s| m.obs(*s) == observation)
        .collect();
    let mut value = gen::effect(m.kind(), &fibre, 3, rng);
    if value.is_empty() {
        // beliefs are never the weighted zero: the pullback only admits
        // values whose observation image is a unit
        value = EffectValue::unit(m.kind(), pivot);
    }
    Fibre { observation, value }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FlatCompatReport {
    pub checked: usize,
    pub violations: Vec<String>,
}

impl FlatCompatReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `F(flat) ∘ c^Bel = Det(δ) ∘ ι` on the given `(belief, action)`
/// pairs.
pub fn check_flat_compat(m: &PoModel, samples: &[(BeliefState, ActionId)]) -> FlatCompatReport {
    let mut report = FlatCompatReport::default();
    for (b, a) in samples {
        report.checked += 1;
        let lhs = belief_transition(m, b, *a).map(flat);
        let rhs = det_step(m, &b.value, *a);
        if lhs != rhs {
            report.violations.push(format!(
                "{b:?} under {}: {lhs:?} vs {rhs:?}",
                m.action_name(*a)
            ));
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegeneracyReport {
    pub beliefs: usize,
    pub reachable_states: usize,
    pub mismatches: Vec<String>,
}

impl DegeneracyReport {
    pub fn isomorphic(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// For a fully observable model, checks that `s ↦ η(s)` is an isomorphism
/// between the reachable part of `m` and its reachable belief model,
/// comparing transitions and rewards exactly.
pub fn check_identity_obs_degeneracy(m: &PoModel) -> Result<DegeneracyReport, BeliefError> {
    if !m.is_fully_observable() {
        return Err(BeliefError::NotFullyObservable);
    }
    let bm = build_belief_model(m, m.n_states().max(1))?;
    let reachable = m.reachable_states();
    let mut mismatches = Vec::new();

    let mut atom_of = Vec::with_capacity(bm.len());
    for (i, b) in bm.legend.iter().enumerate() {
        let atom = b.value.support().next().copied();
        match atom {
            Some(s) if b.value == EffectValue::unit(m.kind(), s) && b.observation == m.obs(s) => {
                atom_of.push(s)
            }
            _ => {
                mismatches.push(format!("belief b{i} = {b:?} is not a unit"));
                atom_of.push(StateId(usize::MAX));
            }
        }
    }
    if !mismatches.is_empty() {
        return Ok(DegeneracyReport {
            beliefs: bm.len(),
            reachable_states: reachable.len(),
            mismatches,
        });
    }

    let mut sorted_atoms = atom_of.clone();
    sorted_atoms.sort();
    let mut sorted_reachable = reachable.clone();
    sorted_reachable.sort();
    if sorted_atoms != sorted_reachable {
        mismatches.push(format!(
            "belief atoms {sorted_atoms:?} differ from reachable states {sorted_reachable:?}"
        ));
    }
    for (i, s) in atom_of.iter().enumerate() {
        for a in m.action_ids() {
            let pushed = bm
                .model
                .transition(StateId(i), a)
                .map(|succ| succ.map(|b| atom_of[b.0]));
            if &pushed != m.transition(*s, a) {
                mismatches.push(format!(
                    "({}, {}): belief side {pushed:?}, original {:?}",
                    m.state_name(*s),
                    m.action_name(a),
                    m.transition(*s, a)
                ));
            }
        }
    }
    Ok(DegeneracyReport {
        beliefs: bm.len(),
        reachable_states: reachable.len(),
        mismatches,
    })
}

/// Whether state histories of length at most `depth` from the initial state
/// are determined by their observation histories.
///
/// Every action is explored, since the history coalgebra branches over all
/// of them.
pub fn check_history_injectivity(m: &PoModel, depth: usize) -> bool {
    if depth == 0 {
        return true;
    }
    let mut level: BTreeMap<Vec<ObsId>, Vec<StateId>> = BTreeMap::new();
    level.insert(vec![m.obs(m.init())], vec![m.init()]);
    for _ in 1..depth {
        let mut next: BTreeMap<Vec<ObsId>, Vec<StateId>> = BTreeMap::new();
        for (obs_hist, state_hist) in &level {
            let last = *state_hist.last().expect("histories are nonempty");
            let mut successors: Vec<StateId> = m
                .action_ids()
                .filter_map(|a| m.transition(last, a).successor())
                .flat_map(|succ| succ.support().copied().collect::<Vec<_>>())
                .collect();
            successors.sort();
            successors.dedup();
            for t in successors {
                let mut oh = obs_hist.clone();
                oh.push(m.obs(t));
                let mut sh = state_hist.clone();
                sh.push(t);
                if let Some(other) = next.insert(oh, sh.clone()) {
                    if other != sh {
                        return false;
                    }
                }
            }
        }
        level = next;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, random_model, serialize_model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FIG1: &str = include_str!("../examples/fig1.json");

    fn q(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn fig1() -> PoModel {
        parse_model(FIG1).unwrap()
    }

    fn dist_belief(m: &PoModel, entries: &[(&str, &str)]) -> BeliefState {
        let value = EffectValue::dist(
            entries
                .iter()
                .map(|(s, w)| (m.state_by_name(s).unwrap(), q(w))),
        )
        .unwrap();
        let observation = m.obs(*value.support().next().unwrap());
        Fibre { observation, value }
    }

    #[test]
    fn running_example_transitions() {
        let m = fig1();
        let a = m.action_by_name("a").unwrap();
        let b = m.action_by_name("b").unwrap();
        let mu = dist_belief(&m, &[("s1", "1/2"), ("s2", "1/2")]);
        let t1 = dist_belief(&m, &[("t1", "1")]);
        let t2 = dist_belief(&m, &[("t2", "1")]);

        assert_eq!(
            belief_transition(&m, &initial_belief(&m), a),
            Step::Reward(
                EffectValue::dist([(mu.clone(), Rational::ONE)]).unwrap(),
                q("1")
            )
        );
        let split = EffectValue::dist([(t1.clone(), q("1/2")), (t2.clone(), q("1/2"))]).unwrap();
        assert_eq!(
            belief_transition(&m, &mu, b),
            Step::Reward(split.clone(), q("1"))
        );
        assert_eq!(belief_transition(&m, &mu, a), Step::Reward(split, q("1/2")));
        assert_eq!(
            belief_transition(&m, &t1, a),
            Step::Reward(
                EffectValue::dist([(t1.clone(), Rational::ONE)]).unwrap(),
                q("0")
            )
        );
    }

    #[test]
    fn running_example_belief_model() {
        let m = fig1();
        let bm = build_belief_model(&m, DEFAULT_MAX_STATES).unwrap();
        let expected = vec![
            dist_belief(&m, &[("s0", "1")]),
            dist_belief(&m, &[("s1", "1/2"), ("s2", "1/2")]),
            dist_belief(&m, &[("t1", "1")]),
            dist_belief(&m, &[("t2", "1")]),
        ];
        assert_eq!(bm.legend, expected);
        assert_eq!(bm.model.states(), ["b0", "b1", "b2", "b3"]);
        let doc = bm.to_document();
        let legend = doc.legend.as_ref().unwrap();
        assert_eq!(
            serde_json::to_string(&legend["b1"]).unwrap(),
            r#"{"s1":"1/2","s2":"1/2"}"#
        );
        // the belief model round-trips through the model format
        let text = doc.to_json(true);
        assert_eq!(parse_model(&text).unwrap(), bm.model);
        assert_eq!(ModelDocument::from_json(&text).unwrap(), doc);
        // and the build is deterministic
        assert_eq!(build_belief_model(&m, 4).unwrap(), bm);
    }

    #[test]
    fn fully_observable_example_has_dirac_beliefs() {
        let full = fig1().fully_observable_counterpart();
        let bm = build_belief_model(&full, DEFAULT_MAX_STATES).unwrap();
        assert_eq!(bm.len(), 5);
        assert!(check_identity_obs_degeneracy(&full).unwrap().isomorphic());
        assert_eq!(
            check_identity_obs_degeneracy(&fig1()),
            Err(BeliefError::NotFullyObservable)
        );
    }

    #[test]
    fn one_state_loop_is_degenerate() {
        for kind in EffectKind::ALL {
            let m = random_model(kind, 1, 1, 1, 3).fully_observable_counterpart();
            assert!(check_identity_obs_degeneracy(&m).unwrap().isomorphic());
        }
    }

    #[test]
    fn unbounded_beliefs_hit_the_bound() {
        let text = r#"{"effect": "dist", "states": ["x", "y"], "actions": ["a"],
            "observations": ["o"], "obs": {"x": "o", "y": "o"}, "init": "x",
            "delta": {"x": {"a": {"succ": {"x": "1/2", "y": "1/2"}, "reward": "0"}},
                      "y": {"a": {"succ": {"y": "1"}, "reward": "1"}}}}"#;
        let m = parse_model(text).unwrap();
        match build_belief_model(&m, 8) {
            Err(BeliefError::BoundExceeded {
                max_states: 8,
                frontier,
            }) => assert!(frontier >= 1),
            other => panic!("expected bound error, got {other:?}"),
        }
        // the k-th belief puts weight 2^-k on x
        let bm = build_belief_model_upto(&m, 5, 8).unwrap();
        assert_eq!(bm.len(), 6);
        assert_eq!(bm.truncated, [StateId(5)]);
        assert_eq!(bm.legend[5].value.weight(&StateId(0)), q("1/32"));
        assert!(matches!(
            build_belief_model(&m, DEFAULT_MAX_STATES),
            Err(BeliefError::Overflow { explored }) if explored > 100
        ));
    }

    #[test]
    fn flat_compat_examples() {
        let m = fig1();
        let mu = dist_belief(&m, &[("s1", "1/2"), ("s2", "1/2")]);
        let a = m.action_by_name("a").unwrap();
        let lhs = belief_transition(&m, &mu, a).map(flat);
        let t = EffectValue::dist([
            (m.state_by_name("t1").unwrap(), q("1/2")),
            (m.state_by_name("t2").unwrap(), q("1/2")),
        ])
        .unwrap();
        assert_eq!(lhs, Step::Reward(t, q("1/2")));

        // Dirac beliefs reproduce δ
        for s in m.state_ids() {
            let b = Fibre {
                observation: m.obs(s),
                value: EffectValue::unit(m.kind(), s),
            };
            for a in m.action_ids() {
                assert_eq!(&det_step(&m, &b.value, a), m.transition(s, a));
            }
        }
    }

    #[test]
    fn flat_compat_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in EffectKind::ALL {
            for seed in 0..20 {
                let m = random_model(kind, 5, 2, 3, seed);
                let samples: Vec<_> = (0..5)
                    .map(|_| (sample_belief(&m, &mut rng), ActionId(rng.gen_range(0..2))))
                    .collect();
                let report = check_flat_compat(&m, &samples);
                assert!(report.passed(), "{:?}", report.violations);
            }
        }
    }

    #[test]
    fn beliefs_are_fibre_pure() {
        for kind in EffectKind::ALL {
            for seed in 0..30 {
                let m = random_model(kind, 5, 2, 3, seed);
                let Ok(bm) = build_belief_model(&m, 200) else {
                    continue;
                };
                for b in &bm.legend {
                    assert!(b.value.support().all(|s| m.obs(*s) == b.observation));
                    if kind == EffectKind::Dist {
                        assert_eq!(b.value.mass(), Rational::ONE);
                    }
                }
                let text = serialize_model(&bm.model);
                assert_eq!(parse_model(&text).unwrap(), bm.model);
            }
        }
    }

    #[test]
    fn history_injectivity() {
        let bm = build_belief_model(&fig1(), DEFAULT_MAX_STATES).unwrap();
        assert!(check_history_injectivity(&bm.model, 4));
        // s1 and s2 share o and both are reachable from s0 in one step
        assert!(!check_history_injectivity(&fig1(), 2));
        assert!(check_history_injectivity(&fig1(), 1));
    }
}
