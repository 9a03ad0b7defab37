//! Strategy rules and revision rules for a learner's valuation.
//!
//! A [`Valuation`] assigns a number to every move of one player; moves
//! are identified by the node they lead to. Strategy rules map the
//! valuation at a decision node to a distribution over that node's moves;
//! revision rules update the valuation from a realized path and payoff.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameError, GameTree, NodeId, PathRecord, PlayerId};
use crate::numeric::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("exploration probability {0} is outside [0, 1]")]
    DeltaOutOfRange(f64),
    #[error("{path} is not a move of player {player}")]
    NotAMove { path: String, player: PlayerId },
    #[error("player {0} is not in this game")]
    UnknownPlayer(PlayerId),
    #[error("initial value for {path} is not finite")]
    NonFiniteValue { path: String },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Read access to per-move values, shared by both revision rules.
pub trait MoveValues {
    /// Current value of move `m`. Panics if `m` is not a move of the
    /// learner this state belongs to.
    fn value(&self, m: NodeId) -> f64;
}

/// Values of one player's moves, stored densely by node id.
#[derive(Clone, Debug, PartialEq)]
pub struct Valuation {
    player: PlayerId,
    values: Vec<Option<f64>>,
}

impl Valuation {
    pub fn constant(g: &GameTree, player: PlayerId, c: f64) -> Self {
        Self::from_fn(g, player, |_| c)
    }

    pub fn from_fn(g: &GameTree, player: PlayerId, mut f: impl FnMut(NodeId) -> f64) -> Self {
        let mut values = vec![None; g.len()];
        for m in g.moves_of(player) {
            values[m.0] = Some(f(m) + 0.0);
        }
        Valuation { player, values }
    }

    pub fn player(&self) -> PlayerId {
        self.player
    }

    pub fn get(&self, m: NodeId) -> Option<f64> {
        self.values.get(m.0).copied().flatten()
    }

    pub fn contains(&self, m: NodeId) -> bool {
        self.get(m).is_some()
    }

    /// Overwrites the value of a move in the domain; returns false (and
    /// leaves the valuation alone) for anything else.
    pub fn set(&mut self, m: NodeId, x: f64) -> bool {
        match self.values.get_mut(m.0) {
            Some(slot @ Some(_)) => {
                *slot = Some(x + 0.0);
                true
            }
            _ => false,
        }
    }

    /// `(move, value)` pairs in node order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (NodeId(i), x)))
    }

    pub fn labeled(&self, g: &GameTree) -> BTreeMap<String, f64> {
        self.iter().map(|(m, x)| (g.path_label(m).to_string(), x)).collect()
    }
}

impl MoveValues for Valuation {
    fn value(&self, m: NodeId) -> f64 {
        self.values[m.0].expect("move belongs to the learner")
    }
}

/// Averaging-rule state: the initial valuation plus a running `(sum, count)`
/// for each move.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragingState {
    initial: Valuation,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl AveragingState {
    pub fn new(initial: Valuation) -> Self {
        let n = initial.values.len();
        AveragingState {
            initial,
            sums: vec![0.0; n],
            counts: vec![0; n],
        }
    }

    pub fn initial(&self) -> &Valuation {
        &self.initial
    }

    pub fn count(&self, m: NodeId) -> u64 {
        self.counts[m.0]
    }

    pub fn sum(&self, m: NodeId) -> f64 {
        self.sums[m.0]
    }

    pub fn current(&self, m: NodeId) -> Option<f64> {
        let initial = self.initial.get(m)?;
        Some(match self.counts[m.0] {
            0 => initial,
            k => self.sums[m.0] / k as f64,
        })
    }

    pub fn current_valuation(&self) -> Valuation {
        let mut v = self.initial.clone();
        for (m, _) in self.initial.iter() {
            v.set(m, self.value(m));
        }
        v
    }
}

impl MoveValues for AveragingState {
    fn value(&self, m: NodeId) -> f64 {
        match self.counts[m.0] {
            0 => self.initial.value(m),
            k => self.sums[m.0] / k as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyRule {
    Myopic,
    Exploratory { delta: f64 },
}

impl StrategyRule {
    pub fn validate(&self) -> Result<(), LearnError> {
        match *self {
            StrategyRule::Myopic => Ok(()),
            StrategyRule::Exploratory { delta } => check_delta(delta),
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            StrategyRule::Myopic => 0.0,
            StrategyRule::Exploratory { delta } => delta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionRule {
    Memoryless,
    Averaging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialValuation {
    Constant(f64),
    /// Values keyed by move path (e.g. `/L/a`); unlisted moves start at 0.
    Explicit(BTreeMap<String, f64>),
}

impl Default for InitialValuation {
    fn default() -> Self {
        InitialValuation::Constant(0.0)
    }
}

impl InitialValuation {
    pub fn resolve(&self, g: &GameTree, player: PlayerId) -> Result<Valuation, LearnError> {
        if player.0 == 0 || player.0 > g.player_count() {
            return Err(LearnError::UnknownPlayer(player));
        }
        match self {
            InitialValuation::Constant(c) => {
                if !c.is_finite() {
                    return Err(LearnError::NonFiniteValue { path: "*".into() });
                }
                Ok(Valuation::constant(g, player, *c))
            }
            InitialValuation::Explicit(map) => {
                let mut v = Valuation::constant(g, player, 0.0);
                for (path, &x) in map {
                    let m = g.resolve_path(path)?;
                    if !x.is_finite() {
                        return Err(LearnError::NonFiniteValue { path: path.clone() });
                    }
                    if !v.set(m, x) {
                        return Err(LearnError::NotAMove {
                            path: path.clone(),
                            player,
                        });
                    }
                }
                Ok(v)
            }
        }
    }

    /// Smallest initial value that can appear (0 for unlisted moves).
    pub fn min_value(&self) -> f64 {
        match self {
            InitialValuation::Constant(c) => *c,
            InitialValuation::Explicit(map) => map.values().copied().fold(0.0, f64::min),
        }
    }
}

/// Strategy rule, revision rule and initial valuation of one learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub player: PlayerId,
    pub strategy_rule: StrategyRule,
    pub revision_rule: RevisionRule,
    #[serde(default)]
    pub initial_valuation: InitialValuation,
}

impl LearnerConfig {
    pub fn new(player: PlayerId, strategy_rule: StrategyRule, revision_rule: RevisionRule) -> Self {
        LearnerConfig {
            player,
            strategy_rule,
            revision_rule,
            initial_valuation: InitialValuation::default(),
        }
    }

    pub fn with_initial(mut self, initial: InitialValuation) -> Self {
        self.initial_valuation = initial;
        self
    }

    pub fn validate(&self, g: &GameTree) -> Result<(), LearnError> {
        self.strategy_rule.validate()?;
        self.initial_valuation.resolve(g, self.player).map(|_| ())
    }

    pub fn init(&self, g: &GameTree) -> Result<LearnerState, LearnError> {
        self.validate(g)?;
        let v = self.initial_valuation.resolve(g, self.player)?;
        Ok(match self.revision_rule {
            RevisionRule::Memoryless => LearnerState::Memoryless(v),
            RevisionRule::Averaging => LearnerState::Averaging(AveragingState::new(v)),
        })
    }
}

/// A learner's evolving state under either revision rule.
#[derive(Clone, Debug, PartialEq)]
pub enum LearnerState {
    Memoryless(Valuation),
    Averaging(AveragingState),
}

impl MoveValues for LearnerState {
    fn value(&self, m: NodeId) -> f64 {
        match self {
            LearnerState::Memoryless(v) => v.value(m),
            LearnerState::Averaging(s) => s.value(m),
        }
    }
}

impl LearnerState {
    pub fn player(&self) -> PlayerId {
        match self {
            LearnerState::Memoryless(v) => v.player(),
            LearnerState::Averaging(s) => s.initial.player(),
        }
    }

    /// Applies the revision rule in place.
    pub fn revise(&mut self, path: &PathRecord, payoff: f64) {
        match self {
            LearnerState::Memoryless(v) => revise_memoryless_in_place(v, path, payoff),
            LearnerState::Averaging(s) => revise_averaging_in_place(s, path, payoff),
        }
    }

    pub fn current_valuation(&self) -> Valuation {
        match self {
            LearnerState::Memoryless(v) => v.clone(),
            LearnerState::Averaging(s) => s.current_valuation(),
        }
    }

    pub fn snapshot(&self, g: &GameTree) -> LearnerSnapshot {
        let (revision_rule, moves) = match self {
            LearnerState::Memoryless(v) => (
                RevisionRule::Memoryless,
                v.iter()
                    .map(|(m, x)| {
                        let snap = MoveSnapshot {
                            value: x,
                            count: None,
                            sum: None,
                        };
                        (g.path_label(m).to_string(), snap)
                    })
                    .collect(),
            ),
            LearnerState::Averaging(s) => (
                RevisionRule::Averaging,
                s.initial
                    .iter()
                    .map(|(m, _)| {
                        let snap = MoveSnapshot {
                            value: s.value(m),
                            count: Some(s.count(m)),
                            sum: Some(s.sum(m)),
                        };
                        (g.path_label(m).to_string(), snap)
                    })
                    .collect(),
            ),
        };
        LearnerSnapshot {
            player: self.player(),
            revision_rule,
            moves,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveSnapshot {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sum: Option<f64>,
}

/// JSON-friendly view of a learner's state, keyed by move path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSnapshot {
    pub player: PlayerId,
    pub revision_rule: RevisionRule,
    pub moves: BTreeMap<String, MoveSnapshot>,
}

fn check_delta(delta: f64) -> Result<(), LearnError> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(LearnError::DeltaOutOfRange(delta))
    }
}

/// Which moves at `n` attain the maximal value.
pub fn maximizers<V: MoveValues + ?Sized>(values: &V, g: &GameTree, n: NodeId) -> Vec<bool> {
    let moves = g.moves(n);
    let best = moves
        .iter()
        .map(|m| values.value(m.child))
        .fold(f64::NEG_INFINITY, f64::max);
    moves.iter().map(|m| values.value(m.child) == best).collect()
}

/// `(1 - delta) * uniform(maximizers) + delta * uniform(all)`, in any
/// scalar type. `delta = None` is the myopic rule.
pub fn mixed_distribution<S: Scalar>(mask: &[bool], delta: Option<&S>) -> Vec<S> {
    let k = mask.len();
    let winners = mask.iter().filter(|&&b| b).count();
    let greedy = S::one() / S::from_usize(winners);
    match delta {
        None => mask
            .iter()
            .map(|&b| if b { greedy.clone() } else { S::zero() })
            .collect(),
        Some(d) => {
            let floor = d.clone() / S::from_usize(k);
            let top = (S::one() - d.clone()) / S::from_usize(winners) + floor.clone();
            mask.iter()
                .map(|&b| {
                    if b {
                        top.clone()
                    } else {
                        floor.clone()
                    }
                })
                .collect()
        }
    }
}

/// Uniform distribution over the maximizers of `values` at `n`.
pub fn myopic_distribution<V: MoveValues + ?Sized>(values: &V, g: &GameTree, n: NodeId) -> Vec<f64> {
    mixed_distribution::<f64>(&maximizers(values, g, n), None)
}

/// The myopic distribution mixed with uniform play at weight `delta`.
pub fn exploratory_distribution<V: MoveValues + ?Sized>(
    values: &V,
    g: &GameTree,
    n: NodeId,
    delta: f64,
) -> Result<Vec<f64>, LearnError> {
    check_delta(delta)?;
    Ok(mixed_distribution(&maximizers(values, g, n), Some(&delta)))
}

/// Distribution prescribed by `rule` at `n`, written into `out`.
pub fn fill_distribution<V: MoveValues + ?Sized>(
    values: &V,
    g: &GameTree,
    n: NodeId,
    rule: StrategyRule,
    out: &mut Vec<f64>,
) {
    let moves = g.moves(n);
    let mut best = f64::NEG_INFINITY;
    let mut winners = 0usize;
    for m in moves {
        let x = values.value(m.child);
        if x > best {
            best = x;
            winners = 1;
        } else if x == best {
            winners += 1;
        }
    }
    let delta = rule.delta();
    let floor = delta / moves.len() as f64;
    let top = (1.0 - delta) / winners as f64 + floor;
    out.clear();
    out.extend(moves.iter().map(|m| if values.value(m.child) == best { top } else { floor }));
}

/// Exploration weight under which each non-maximizing move at a node with
/// `branching` moves and a unique maximizer is played with total
/// probability `deviation`: `deviation * k / (k - 1)`.
///
/// A two-move node that deviates with probability `p` therefore needs
/// exploration weight `2p`.
pub fn exploration_for_deviation<S: Scalar>(deviation: &S, branching: usize) -> S {
    assert!(branching >= 2, "deviation needs at least two moves");
    deviation.clone() * S::from_usize(branching) / S::from_usize(branching - 1)
}

fn revise_memoryless_in_place(v: &mut Valuation, path: &PathRecord, payoff: f64) {
    for &m in &path.moves {
        v.set(m, payoff);
    }
}

fn revise_averaging_in_place(s: &mut AveragingState, path: &PathRecord, payoff: f64) {
    for &m in &path.moves {
        if s.initial.contains(m) {
            s.sums[m.0] += payoff;
            s.counts[m.0] += 1;
        }
    }
}

/// Sets every move of the learner on `path` to `payoff`.
pub fn memoryless_revise(v: &Valuation, path: &PathRecord, payoff: f64) -> Valuation {
    let mut next = v.clone();
    revise_memoryless_in_place(&mut next, path, payoff);
    next
}

/// Adds `payoff` to the running mean of every learner move on `path`.
pub fn averaging_revise(s: &AveragingState, path: &PathRecord, payoff: f64) -> AveragingState {
    let mut next = s.clone();
    revise_averaging_in_place(&mut next, path, payoff);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::parse_game;

    const L: NodeId = NodeId(1);
    const R: NodeId = NodeId(4);

    fn fig1_valuation(l: f64, r: f64) -> Valuation {
        let g = fixtures::fig1();
        let mut v = Valuation::constant(&g, PlayerId(1), 0.0);
        v.set(L, l);
        v.set(R, r);
        v
    }

    #[test]
    fn myopic_ties_and_unique_maximizer() {
        let g = fixtures::fig1();
        assert_eq!(myopic_distribution(&fig1_valuation(0.0, 0.0), &g, g.root()), vec![0.5, 0.5]);
        assert_eq!(myopic_distribution(&fig1_valuation(1.0, 0.0), &g, g.root()), vec![1.0, 0.0]);
        let g3 = parse_game("(player 1 (move a (payoffs 1)) (move b (payoffs 2)) (move c (payoffs 3)))").unwrap();
        let vals = [2.0, 2.0, 1.0];
        let v = Valuation::from_fn(&g3, PlayerId(1), |m| vals[m.0 - 1]);
        assert_eq!(myopic_distribution(&v, &g3, g3.root()), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn exploratory_extremes() {
        let g = fixtures::fig1();
        let v = fig1_valuation(1.0, 0.0);
        assert_eq!(
            exploratory_distribution(&v, &g, g.root(), 0.0).unwrap(),
            myopic_distribution(&v, &g, g.root())
        );
        assert_eq!(exploratory_distribution(&v, &g, g.root(), 1.0).unwrap(), vec![0.5, 0.5]);
        let d = exploratory_distribution(&v, &g, g.root(), 0.2).unwrap();
        assert!((d[0] - 0.9).abs() < 1e-15 && (d[1] - 0.1).abs() < 1e-15);
        assert_eq!(
            exploratory_distribution(&v, &g, g.root(), 1.5),
            Err(LearnError::DeltaOutOfRange(1.5))
        );
        assert!(exploratory_distribution(&v, &g, g.root(), -0.1).is_err());
    }

    #[test]
    fn fill_distribution_matches_generic_path() {
        let g = fixtures::fig1();
        let v = fig1_valuation(3.0, 3.0);
        let mut out = Vec::new();
        fill_distribution(&v, &g, g.root(), StrategyRule::Exploratory { delta: 0.3 }, &mut out);
        assert_eq!(out, exploratory_distribution(&v, &g, g.root(), 0.3).unwrap());
    }

    #[test]
    fn figure_two_repeat_probability() {
        // Deviation probability d at each binary node is exploration weight 2d;
        // staying at (10, 2) means (L then a) or R.
        let g = fixtures::fig2();
        let vals = [0.0, 10.0, 10.0, -10.0, 2.0];
        let v = Valuation::from_fn(&g, PlayerId(1), |m| vals[m.0]);
        for d in [0.1, 0.25, 0.4] {
            let weight = exploration_for_deviation(&d, 2);
            let root = exploratory_distribution(&v, &g, g.root(), weight).unwrap();
            let inner = exploratory_distribution(&v, &g, NodeId(1), weight).unwrap();
            let stay = root[0] * inner[0] + root[1];
            assert!((stay - (1.0 - d + d * d)).abs() < 1e-12);
        }
    }

    #[test]
    fn memoryless_examples() {
        let g = fixtures::fig1();
        let v = fig1_valuation(0.0, 0.0);
        let next = memoryless_revise(&v, &g.path_to(R), 1.0);
        assert_eq!((next.value(L), next.value(R)), (0.0, 1.0));
        // Move b belongs to player 2 and is not part of player 1's valuation.
        let back = memoryless_revise(&fig1_valuation(1.0, 0.0), &g.path_to(NodeId(3)), 0.0);
        assert_eq!((back.value(L), back.value(R)), (0.0, 0.0));
        assert!(!back.contains(NodeId(3)));
    }

    #[test]
    fn averaging_examples() {
        let g = fixtures::fig2();
        let init = Valuation::constant(&g, PlayerId(1), 0.0);
        let s = AveragingState::new(init);
        let s = averaging_revise(&s, &g.path_to(NodeId(2)), 10.0);
        let s = averaging_revise(&s, &g.path_to(NodeId(2)), 2.0);
        assert_eq!(s.current(L), Some(6.0));
        assert_eq!(s.count(L), 2);
        assert_eq!(s.current(NodeId(4)), Some(0.0));
        let once = averaging_revise(&AveragingState::new(Valuation::constant(&g, PlayerId(1), 3.0)), &g.path_to(NodeId(3)), -10.0);
        assert_eq!(once.current(NodeId(3)), Some(-10.0));
        assert_eq!(once.current(NodeId(2)), Some(3.0));
    }

    #[test]
    fn explicit_initial_valuation() {
        let g = fixtures::fig1();
        let init = InitialValuation::Explicit([("/R".to_string(), 1.0)].into_iter().collect());
        let v = init.resolve(&g, PlayerId(1)).unwrap();
        assert_eq!((v.value(L), v.value(R)), (0.0, 1.0));
        let bad = InitialValuation::Explicit([("/L/a".to_string(), 1.0)].into_iter().collect());
        assert!(matches!(bad.resolve(&g, PlayerId(1)), Err(LearnError::NotAMove { .. })));
        let missing = InitialValuation::Explicit([("/Q".to_string(), 1.0)].into_iter().collect());
        assert!(matches!(missing.resolve(&g, PlayerId(1)), Err(LearnError::Game(_))));
        assert_eq!(
            InitialValuation::Explicit([("/R".to_string(), -1.0)].into_iter().collect()).min_value(),
            -1.0
        );
    }

    #[test]
    fn snapshot_shapes() {
        let g = fixtures::fig2();
        let cfg = LearnerConfig::new(PlayerId(1), StrategyRule::Myopic, RevisionRule::Averaging);
        let mut state = cfg.init(&g).unwrap();
        state.revise(&g.path_to(NodeId(4)), 2.0);
        let snap = state.snapshot(&g);
        assert_eq!(snap.moves["/R"].count, Some(1));
        assert_eq!(snap.moves["/R"].value, 2.0);
        assert_eq!(snap.moves["/L"].count, Some(0));
    }
}
