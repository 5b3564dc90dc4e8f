//! The three branching effects and the structure that the belief
//! construction needs from them.
//!
//! An [`EffectValue`] is an element of `T X` for one of
//!
//! * the nonempty finite powerset (`Nondet`),
//! * finite-support probability distributions (`Dist`),
//! * finite-support weight maps over `(ℝ≥0, +, ·)` (`Weighted`).
//!
//! The one-step shape is a [`Step`]: either `X + {✓}` for nondeterminism or
//! `X × ℝ≥0` for the quantitative effects. On top of the monad operations the
//! module provides the distributive law [`lambda`], the belief decomposition
//! [`decompose`] with its retraction [`flat`], and the algebras [`sigma`],
//! [`rho`] and [`tau`] into the value domains.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{Domain, ExtValue, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    Nondet,
    Dist,
    Weighted,
}

impl EffectKind {
    pub const ALL: [EffectKind; 3] = [EffectKind::Nondet, EffectKind::Dist, EffectKind::Weighted];

    /// The value domain the semantics of this effect lives in.
    pub fn domain(self) -> Domain {
        match self {
            EffectKind::Nondet => Domain::Bool,
            EffectKind::Dist | EffectKind::Weighted => Domain::Reward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EffectKind::Nondet => "nondet",
            EffectKind::Dist => "dist",
            EffectKind::Weighted => "weighted",
        }
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EffectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nondet" => Ok(EffectKind::Nondet),
            "dist" => Ok(EffectKind::Dist),
            "weighted" => Ok(EffectKind::Weighted),
            other => Err(format!("unknown effect kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EffectError {
    #[error("a nondeterministic choice needs at least one successor")]
    EmptySet,
    #[error("negative weight {0}")]
    NegativeWeight(Rational),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(Rational),
    #[error("observation relabelling is not injective: {0} and {1} both map to {2}")]
    NonInjective(String, String, String),
    #[error("observation {0} is outside the domain of the relabelling")]
    MissingObservation(String),
}

/// An element of `T A` in canonical form: sorted support, no zero entries.
///
/// Equality is structural, which coincides with mathematical equality because
/// the representation is canonical.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EffectValue<A: Ord> {
    Set(BTreeSet<A>),
    Dist(BTreeMap<A, Rational>),
    Weights(BTreeMap<A, Rational>),
}

fn accumulate<A: Ord>(
    entries: impl IntoIterator<Item = (A, Rational)>,
) -> Result<BTreeMap<A, Rational>, EffectError> {
    let mut map = BTreeMap::new();
    for (atom, w) in entries {
        if w.is_negative() {
            return Err(EffectError::NegativeWeight(w));
        }
        *map.entry(atom).or_insert(Rational::ZERO) += w;
    }
    map.retain(|_, w| !w.is_zero());
    Ok(map)
}

impl<A: Ord + Clone> EffectValue<A> {
    /// The unit `η`: singleton, Dirac distribution, or weight one.
    pub fn unit(kind: EffectKind, atom: A) -> Self {
        match kind {
            EffectKind::Nondet => EffectValue::Set(BTreeSet::from([atom])),
            EffectKind::Dist => EffectValue::Dist(BTreeMap::from([(atom, Rational::ONE)])),
            EffectKind::Weighted => EffectValue::Weights(BTreeMap::from([(atom, Rational::ONE)])),
        }
    }

    pub fn set(atoms: impl IntoIterator<Item = A>) -> Result<Self, EffectError> {
        let set: BTreeSet<A> = atoms.into_iter().collect();
        if set.is_empty() {
            return Err(EffectError::EmptySet);
        }
        Ok(EffectValue::Set(set))
    }

    /// A distribution; duplicate atoms are merged and zero entries dropped.
    pub fn dist(entries: impl IntoIterator<Item = (A, Rational)>) -> Result<Self, EffectError> {
        let map = accumulate(entries)?;
        let total: Rational = map.values().sum();
        if total != Rational::ONE {
            return Err(EffectError::NotNormalized(total));
        }
        Ok(EffectValue::Dist(map))
    }

    /// A weight map; the empty map is the semimodule zero.
    pub fn weights(entries: impl IntoIterator<Item = (A, Rational)>) -> Result<Self, EffectError> {
        Ok(EffectValue::Weights(accumulate(entries)?))
    }

    pub fn zero_weights() -> Self {
        EffectValue::Weights(BTreeMap::new())
    }

    pub fn kind(&self) -> EffectKind {
        match self {
            EffectValue::Set(_) => EffectKind::Nondet,
            EffectValue::Dist(_) => EffectKind::Dist,
            EffectValue::Weights(_) => EffectKind::Weighted,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EffectValue::Set(s) => s.len(),
            EffectValue::Dist(m) | EffectValue::Weights(m) => m.len(),
        }
    }

    /// Only the semimodule zero has empty support.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn support(&self) -> Box<dyn Iterator<Item = &A> + '_> {
        match self {
            EffectValue::Set(s) => Box::new(s.iter()),
            EffectValue::Dist(m) | EffectValue::Weights(m) => Box::new(m.keys()),
        }
    }

    pub fn contains(&self, atom: &A) -> bool {
        match self {
            EffectValue::Set(s) => s.contains(atom),
            EffectValue::Dist(m) | EffectValue::Weights(m) => m.contains_key(atom),
        }
    }

    /// Support atoms paired with their weight; set members weigh one.
    pub fn weighted(&self) -> Box<dyn Iterator<Item = (&A, Rational)> + '_> {
        match self {
            EffectValue::Set(s) => Box::new(s.iter().map(|a| (a, Rational::ONE))),
            EffectValue::Dist(m) | EffectValue::Weights(m) => {
                Box::new(m.iter().map(|(a, w)| (a, *w)))
            }
        }
    }

    pub fn weight(&self, atom: &A) -> Rational {
        match self {
            EffectValue::Set(s) if s.contains(atom) => Rational::ONE,
            EffectValue::Set(_) => Rational::ZERO,
            EffectValue::Dist(m) | EffectValue::Weights(m) => {
                m.get(atom).copied().unwrap_or(Rational::ZERO)
            }
        }
    }

    /// Sum of all weights (the set size for `Set`).
    pub fn mass(&self) -> Rational {
        self.weighted().map(|(_, w)| w).sum()
    }

    /// Builds a value of the given kind without validation; weights of
    /// repeated atoms add up. Callers guarantee the kind's invariants.
    fn from_weighted(kind: EffectKind, entries: impl IntoIterator<Item = (A, Rational)>) -> Self {
        match kind {
            EffectKind::Nondet => EffectValue::Set(entries.into_iter().map(|(a, _)| a).collect()),
            EffectKind::Dist => {
                EffectValue::Dist(accumulate(entries).expect("weights are non-negative"))
            }
            EffectKind::Weighted => {
                EffectValue::Weights(accumulate(entries).expect("weights are non-negative"))
            }
        }
    }

    /// Functorial action `T f`.
    pub fn map<B: Ord + Clone>(&self, mut f: impl FnMut(&A) -> B) -> EffectValue<B> {
        EffectValue::from_weighted(self.kind(), self.weighted().map(|(a, w)| (f(a), w)))
    }

    /// Keeps the atoms satisfying `keep`, without renormalizing.
    pub(crate) fn restrict(&self, mut keep: impl FnMut(&A) -> bool) -> Vec<(A, Rational)> {
        self.weighted()
            .filter(|(a, _)| keep(a))
            .map(|(a, w)| (a.clone(), w))
            .collect()
    }

    /// Kleisli extension: `μ ∘ T f`.
    pub fn bind<B: Ord + Clone>(&self, mut f: impl FnMut(&A) -> EffectValue<B>) -> EffectValue<B> {
        let kind = self.kind();
        let mut entries = Vec::new();
        for (a, w) in self.weighted() {
            let inner = f(a);
            assert_eq!(inner.kind(), kind, "effect kind mismatch in bind");
            entries.extend(inner.weighted().map(|(b, v)| (b.clone(), w * v)));
        }
        EffectValue::from_weighted(kind, entries)
    }
}

/// Monad multiplication `μ`: union, mixture, or weighted sum.
pub fn mult<A: Ord + Clone>(nested: &EffectValue<EffectValue<A>>) -> EffectValue<A> {
    nested.bind(|inner| inner.clone())
}

impl<A: Ord + fmt::Debug> fmt::Debug for EffectValue<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectValue::Set(s) => f.debug_set().entries(s).finish(),
            EffectValue::Dist(m) => {
                f.write_str("D")?;
                f.debug_map().entries(m).finish()
            }
            EffectValue::Weights(m) => {
                f.write_str("W")?;
                f.debug_map().entries(m).finish()
            }
        }
    }
}

/// One layer of the transition shape `F X`.
///
/// `Terminate` and `Continue` form `X + {✓}` (used with `Nondet`);
/// `Reward` is `X × ℝ≥0` (used with `Dist` and `Weighted`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step<X> {
    Terminate,
    Continue(X),
    Reward(X, Rational),
}

impl<X> Step<X> {
    pub fn map<Y>(&self, f: impl FnOnce(&X) -> Y) -> Step<Y> {
        match self {
            Step::Terminate => Step::Terminate,
            Step::Continue(x) => Step::Continue(f(x)),
            Step::Reward(x, r) => Step::Reward(f(x), *r),
        }
    }

    pub fn successor(&self) -> Option<&X> {
        match self {
            Step::Terminate => None,
            Step::Continue(x) | Step::Reward(x, _) => Some(x),
        }
    }

    pub fn reward(&self) -> Option<Rational> {
        match self {
            Step::Reward(_, r) => Some(*r),
            _ => None,
        }
    }
}

/// The distributive law `λ : T F ⇒ F T`.
///
/// * `Nondet`: `✓` if every branch is `✓`, otherwise the set of non-`✓`
///   successors (terminated branches are dropped).
/// * `Dist`/`Weighted`: the marginal on successors paired with the
///   expected (resp. weighted) reward.
pub fn lambda<X: Ord + Clone>(t: &EffectValue<Step<X>>) -> Step<EffectValue<X>> {
    match t {
        EffectValue::Set(branches) => {
            let mut next = BTreeSet::new();
            for branch in branches {
                match branch {
                    Step::Terminate => {}
                    Step::Continue(x) => {
                        next.insert(x.clone());
                    }
                    Step::Reward(..) => panic!("reward step under a nondeterministic effect"),
                }
            }
            if next.is_empty() {
                Step::Terminate
            } else {
                Step::Continue(EffectValue::Set(next))
            }
        }
        EffectValue::Dist(m) | EffectValue::Weights(m) => {
            let mut reward = Rational::ZERO;
            let mut marginal = Vec::with_capacity(m.len());
            for (step, w) in m {
                match step {
                    Step::Reward(x, r) => {
                        reward += *w * *r;
                        marginal.push((x.clone(), *w));
                    }
                    _ => panic!("unrewarded step under a quantitative effect"),
                }
            }
            Step::Reward(EffectValue::from_weighted(t.kind(), marginal), reward)
        }
    }
}

/// Coalgebraic determinization for one action: `F μ ∘ λ ∘ T δ`.
pub fn determinize<S: Ord + Clone>(
    t: &EffectValue<S>,
    mut delta: impl FnMut(&S) -> Step<EffectValue<S>>,
) -> Step<EffectValue<S>> {
    let pointwise: EffectValue<Step<EffectValue<S>>> = t.map(|s| delta(s));
    lambda(&pointwise).map(mult)
}

/// A fibre-pure effect value tagged with the observation of its fibre: an
/// element of the pullback of `η_O` along `T(obs)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fibre<A: Ord, O> {
    pub observation: O,
    pub value: EffectValue<A>,
}

impl<A: Ord + fmt::Debug, O: fmt::Debug> fmt::Debug for Fibre<A, O> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@{:?}", self.value, self.observation)
    }
}

/// The belief decomposition `α`: splits `t` into one fibre-pure part per
/// inhabited observation.
///
/// For `Dist` and `Weighted` the outer weight of a part is the mass of its
/// fibre and the part itself is the normalized restriction. The weighted zero
/// map decomposes to the zero map.
pub fn decompose<A, O>(t: &EffectValue<A>, obs: impl Fn(&A) -> O) -> EffectValue<Fibre<A, O>>
where
    A: Ord + Clone,
    O: Ord + Clone,
{
    let mut fibres: BTreeMap<O, Vec<(A, Rational)>> = BTreeMap::new();
    for (a, w) in t.weighted() {
        fibres.entry(obs(a)).or_default().push((a.clone(), w));
    }
    let kind = t.kind();
    let parts = fibres.into_iter().map(|(observation, entries)| {
        let mass: Rational = entries.iter().map(|(_, w)| *w).sum();
        let value = match kind {
            EffectKind::Nondet => EffectValue::Set(entries.into_iter().map(|(a, _)| a).collect()),
            _ => {
                let scale = mass.recip().expect("inhabited fibres have positive mass");
                EffectValue::from_weighted(kind, entries.into_iter().map(|(a, w)| (a, w * scale)))
            }
        };
        (Fibre { observation, value }, mass)
    });
    EffectValue::from_weighted(kind, parts)
}

/// `flat = μ ∘ T ι`: forgets the fibre tags and multiplies.
pub fn flat<A: Ord + Clone, O: Ord + Clone>(t: &EffectValue<Fibre<A, O>>) -> EffectValue<A> {
    t.bind(|f| f.value.clone())
}

/// The Eilenberg–Moore algebra `σ : T Ω → Ω`: meet for sets, expectation or
/// weighted sum otherwise.
pub fn sigma(t: &EffectValue<ExtValue>) -> ExtValue {
    match t {
        EffectValue::Set(s) => s
            .iter()
            .copied()
            .reduce(ExtValue::meet)
            .expect("nonempty set"),
        EffectValue::Dist(m) | EffectValue::Weights(m) => m
            .iter()
            .fold(ExtValue::ZERO, |acc, (v, w)| acc.plus(v.scale(*w))),
    }
}

/// The algebra `ρ : F Ω → Ω`: `✓ ↦ t`, `r₁, r₂ ↦ r₁ + r₂`.
pub fn rho(step: &Step<ExtValue>) -> ExtValue {
    match step {
        Step::Terminate => ExtValue::TRUE,
        Step::Continue(v) => *v,
        Step::Reward(v, r) => v.plus(ExtValue::Finite(*r)),
    }
}

/// `τ = ρ ∘ F σ`.
pub fn tau(step: &Step<EffectValue<ExtValue>>) -> ExtValue {
    rho(&step.map(sigma))
}

/// Checks compatibility with an injective change of observations `u`:
/// decomposing and then relabelling fibres must agree with decomposing under
/// `u ∘ obs`.
pub fn check_base_change<A, O, P>(
    t: &EffectValue<A>,
    obs: impl Fn(&A) -> O,
    u: &BTreeMap<O, P>,
) -> Result<bool, EffectError>
where
    A: Ord + Clone,
    O: Ord + Clone + fmt::Debug,
    P: Ord + Clone + fmt::Debug,
{
    let mut seen: BTreeMap<&P, &O> = BTreeMap::new();
    for (o, p) in u {
        if let Some(prev) = seen.insert(p, o) {
            return Err(EffectError::NonInjective(
                format!("{prev:?}"),
                format!("{o:?}"),
                format!("{p:?}"),
            ));
        }
    }
    for a in t.support() {
        let o = obs(a);
        if !u.contains_key(&o) {
            return Err(EffectError::MissingObservation(format!("{o:?}")));
        }
    }
    let relabelled = decompose(t, &obs).map(|f| Fibre {
        observation: u[&f.observation].clone(),
        value: f.value.clone(),
    });
    let direct = decompose(t, |a| u[&obs(a)].clone());
    Ok(relabelled == direct)
}

/// Which of the `(★)` conditions a sample violated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StarCondition {
    /// `σ ∘ T ρ = ρ ∘ F σ ∘ λ`
    AlgebraCompatibility,
    /// `⊥ = σ ∘ T ⊥`
    BottomPreservation,
    /// `T⟨id, obs⟩ ∘ ι = st ∘ ⟨ι, T̄ obs⟩`
    FibreTagging,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StarViolation {
    pub condition: StarCondition,
    pub sample: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StarReport {
    pub samples: usize,
    pub violations: Vec<StarViolation>,
}

impl StarReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Random effect values with small denominators, for property campaigns.
pub mod gen {
    use super::*;

    /// A random canonical value over `atoms` (which must be nonempty).
    ///
    /// Weighted values are occasionally the zero map.
    pub fn effect<A: Ord + Clone, R: Rng + ?Sized>(
        kind: EffectKind,
        atoms: &[A],
        max_support: usize,
        rng: &mut R,
    ) -> EffectValue<A> {
        assert!(!atoms.is_empty());
        if kind == EffectKind::Weighted && rng.gen_ratio(1, 12) {
            return EffectValue::zero_weights();
        }
        let k = rng.gen_range(1..=max_support.clamp(1, atoms.len()));
        let chosen: Vec<A> = atoms.choose_multiple(rng, k).cloned().collect();
        match kind {
            EffectKind::Nondet => EffectValue::set(chosen).expect("nonempty"),
            EffectKind::Dist => {
                let raw: Vec<i128> = chosen.iter().map(|_| rng.gen_range(1..=3)).collect();
                let total: i128 = raw.iter().sum();
                EffectValue::dist(
                    chosen
                        .into_iter()
                        .zip(raw)
                        .map(|(a, n)| (a, Rational::new(n, total).expect("positive total"))),
                )
                .expect("normalized by construction")
            }
            EffectKind::Weighted => {
                EffectValue::weights(chosen.into_iter().map(|a| (a, small_weight(rng))))
                    .expect("non-negative")
            }
        }
    }

    /// A positive weight from `{1/3, 1/2, 1, 3/2, 2}`.
    pub fn small_weight<R: Rng + ?Sized>(rng: &mut R) -> Rational {
        const W: [(i128, i128); 5] = [(1, 3), (1, 2), (1, 1), (3, 2), (2, 1)];
        let (n, d) = W[rng.gen_range(0..W.len())];
        Rational::new(n, d).expect("nonzero denominator")
    }

    /// A reward from `{0, 1/2, 1, 2}`.
    pub fn small_reward<R: Rng + ?Sized>(rng: &mut R) -> Rational {
        const R4: [(i128, i128); 4] = [(0, 1), (1, 2), (1, 1), (2, 1)];
        let (n, d) = R4[rng.gen_range(0..R4.len())];
        Rational::new(n, d).expect("nonzero denominator")
    }

    pub fn value<R: Rng + ?Sized>(domain: Domain, rng: &mut R) -> ExtValue {
        match domain {
            Domain::Bool => ExtValue::Bool(rng.gen()),
            Domain::Reward if rng.gen_ratio(1, 10) => ExtValue::Infinity,
            Domain::Reward => ExtValue::Finite(small_reward(rng) + small_reward(rng)),
        }
    }

    /// A random element of `F Ω` matching the kind's shape.
    pub fn step_value<R: Rng + ?Sized>(kind: EffectKind, rng: &mut R) -> Step<ExtValue> {
        match kind {
            EffectKind::Nondet if rng.gen_ratio(1, 3) => Step::Terminate,
            EffectKind::Nondet => Step::Continue(value(Domain::Bool, rng)),
            _ => Step::Reward(value(Domain::Reward, rng), small_reward(rng)),
        }
    }
}

/// Checks the `(★)` conditions on `samples` random instances of `kind`.
pub fn check_star_conditions<R: Rng + ?Sized>(
    kind: EffectKind,
    samples: usize,
    rng: &mut R,
) -> StarReport {
    let domain = kind.domain();
    let mut report = StarReport {
        samples,
        violations: Vec::new(),
    };
    let atoms: Vec<u32> = (0..6).collect();
    for _ in 0..samples {
        // σ ∘ T ρ = ρ ∘ F σ ∘ λ on a random element of T F Ω.
        let pool: Vec<Step<ExtValue>> = (0..5).map(|_| gen::step_value(kind, rng)).collect();
        let t = gen::effect(kind, &pool, 4, rng);
        let lhs = sigma(&t.map(rho));
        let rhs = rho(&lambda(&t).map(sigma));
        if lhs != rhs {
            report.violations.push(StarViolation {
                condition: StarCondition::AlgebraCompatibility,
                sample: format!("{t:?}: {lhs} vs {rhs}"),
            });
        }

        // ⊥ = σ ∘ T ⊥ on a random element of T X.
        let x = gen::effect(kind, &atoms, 4, rng);
        let bottom = ExtValue::bottom(domain);
        let pushed = sigma(&x.map(|_| bottom));
        if pushed != bottom {
            report.violations.push(StarViolation {
                condition: StarCondition::BottomPreservation,
                sample: format!("{x:?}: {pushed}"),
            });
        }

        // Tagging each atom of a fibre-pure value with its observation is the
        // same as pairing the value with the fibre's observation.
        let obs_of = |a: &u32| a % 3;
        let fibre = rng.gen_range(0..3u32);
        let in_fibre: Vec<u32> = atoms
            .iter()
            .copied()
            .filter(|a| obs_of(a) == fibre)
            .collect();
        let b = gen::effect(kind, &in_fibre, 2, rng);
        let tagged = b.map(|a| (*a, obs_of(a)));
        let paired = b.map(|a| (*a, fibre));
        if tagged != paired {
            report.violations.push(StarViolation {
                condition: StarCondition::FibreTagging,
                sample: format!("{b:?}@{fibre}"),
            });
        }
    }
    report
}
