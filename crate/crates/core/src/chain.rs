//! Exact Markov-chain analysis of memoryless valuation dynamics.
//!
//! Under the memoryless revision rule a valuation only ever takes values
//! from its initial values and the learner's terminal payoffs, so the
//! reachable valuation profiles form a finite chain as long as every
//! non-learner plays a stationary strategy. States are keyed by the exact
//! bit patterns of those values; no arithmetic is ever performed on them.
//!
//! Transition probabilities are computed in any [`Scalar`]: `f64` for the
//! numeric mode, [`num::BigRational`] for the exact mode.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;
use thiserror::Error;

use crate::arena::Policy;
use crate::game::{format_real, GameTree, NodeId, PlayerId};
use crate::learning::{maximizers, mixed_distribution, LearnError, MoveValues, RevisionRule, StrategyRule, Valuation};
use crate::numeric::Scalar;
use crate::strategy::{BehavioralStrategy, StrategyError};

pub const DEFAULT_MAX_STATES: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error(transparent)]
    Learner(#[from] LearnError),
    #[error("player {0} must use the memoryless revision rule for chain analysis")]
    NotMemoryless(PlayerId),
    #[error("player {player} uses a {kind} policy; chain analysis needs stationary opponents")]
    HistoryDependent { player: PlayerId, kind: &'static str },
    #[error("player {player}: {source}")]
    Opponent { player: PlayerId, source: StrategyError },
    #[error("player {0} is listed twice")]
    DuplicatePlayer(PlayerId),
    #[error("player {0} is not in this game")]
    UnknownPlayer(PlayerId),
    #[error("more than {0} reachable states")]
    TooManyStates(usize),
    #[error("state {0} is out of range")]
    UnknownState(usize),
    #[error("the chain has no absorbing state")]
    NoAbsorbingState,
    #[error("no absorbing state is reachable from state {0}")]
    NotAbsorbable(usize),
    #[error("the chain has {0} closed classes; the stationary distribution is not unique")]
    Reducible(usize),
    #[error("singular linear system")]
    Singular,
}

/// Strategy rule with the exploration weight in the chain's scalar type.
#[derive(Clone, Debug, PartialEq)]
pub enum ChainRule<S> {
    Myopic,
    Exploratory(S),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainLearner<S> {
    pub rule: ChainRule<S>,
    pub initial: Valuation,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StationaryPolicy {
    Uniform,
    Fixed(BehavioralStrategy),
}

/// Learners (memoryless) and stationary opponents for chain construction.
#[derive(Clone, Debug)]
pub struct ChainSetup<'g, S> {
    game: &'g GameTree,
    learners: Vec<ChainLearner<S>>,
    /// Per node: the fixed distribution of a non-learner, if any.
    fixed: Vec<Option<Vec<S>>>,
    /// Per node: index into `learners` of the owner, if a learner.
    owner: Vec<Option<usize>>,
    max_states: usize,
}

impl<'g, S: Scalar> ChainSetup<'g, S> {
    /// Every player without a learner plays uniformly unless listed in
    /// `opponents`.
    pub fn new(
        game: &'g GameTree,
        learners: Vec<ChainLearner<S>>,
        opponents: BTreeMap<PlayerId, StationaryPolicy>,
    ) -> Result<Self, ChainError> {
        let mut owner = vec![None; game.len()];
        let mut seen = Vec::new();
        for (i, l) in learners.iter().enumerate() {
            let p = l.initial.player();
            if p.0 == 0 || p.0 > game.player_count() {
                return Err(ChainError::UnknownPlayer(p));
            }
            if seen.contains(&p) {
                return Err(ChainError::DuplicatePlayer(p));
            }
            seen.push(p);
            if let ChainRule::Exploratory(d) = &l.rule {
                if *d < S::zero() || *d > S::one() {
                    return Err(LearnError::DeltaOutOfRange(d.to_f64()).into());
                }
            }
            for n in game.nodes_of(p) {
                owner[n.0] = Some(i);
            }
        }
        let mut fixed = vec![None; game.len()];
        for p in game.players().filter(|p| !seen.contains(p)) {
            match opponents.get(&p).unwrap_or(&StationaryPolicy::Uniform) {
                StationaryPolicy::Uniform => {
                    for n in game.nodes_of(p) {
                        let k = game.moves(n).len();
                        fixed[n.0] = Some(vec![S::one() / S::from_usize(k); k]);
                    }
                }
                StationaryPolicy::Fixed(s) => {
                    s.validate_for(game, p)
                        .map_err(|source| ChainError::Opponent { player: p, source })?;
                    for (&n, d) in &s.dists {
                        fixed[n.0] = Some(d.iter().map(|&x| S::from_f64_exact(x)).collect());
                    }
                }
            }
        }
        for p in opponents.keys() {
            if seen.contains(p) {
                return Err(ChainError::DuplicatePlayer(*p));
            }
        }
        Ok(ChainSetup {
            game,
            learners,
            fixed,
            owner,
            max_states: DEFAULT_MAX_STATES,
        })
    }

    /// Translates arena policies; anything history-dependent is rejected.
    /// Exploratory learners use `exploration` in place of their float δ
    /// so that exact mode can use a rational weight.
    pub fn from_policies(game: &'g GameTree, policies: &[Policy], exploration: Option<S>) -> Result<Self, ChainError> {
        let mut learners = Vec::new();
        let mut opponents = BTreeMap::new();
        for (player, policy) in game.players().zip(policies) {
            match policy {
                Policy::Uniform => {
                    opponents.insert(player, StationaryPolicy::Uniform);
                }
                Policy::Stationary(s) => {
                    opponents.insert(player, StationaryPolicy::Fixed(s.clone()));
                }
                Policy::Scripted(_) => return Err(ChainError::HistoryDependent { player, kind: "scripted" }),
                Policy::Adversarial { .. } => {
                    return Err(ChainError::HistoryDependent {
                        player,
                        kind: "adversarial",
                    })
                }
                Policy::Learner(cfg) => {
                    if cfg.revision_rule != RevisionRule::Memoryless {
                        return Err(ChainError::NotMemoryless(player));
                    }
                    let rule = match cfg.strategy_rule {
                        StrategyRule::Myopic => ChainRule::Myopic,
                        StrategyRule::Exploratory { delta } => ChainRule::Exploratory(
                            exploration.clone().unwrap_or_else(|| S::from_f64_exact(delta)),
                        ),
                    };
                    learners.push(ChainLearner {
                        rule,
                        initial: cfg.initial_valuation.resolve(game, player)?,
                    });
                }
            }
        }
        ChainSetup::new(game, learners, opponents)
    }

    pub fn with_max_states(mut self, cap: usize) -> Self {
        self.max_states = cap;
        self
    }

    pub fn game(&self) -> &GameTree {
        self.game
    }

    fn initial_state(&self) -> ValuationState {
        ValuationState {
            valuations: self.learners.iter().map(|l| l.initial.clone()).collect(),
        }
    }

    /// Probability of every reachable terminal from `state`, with the
    /// realized next state.
    fn successors(&self, state: &ValuationState) -> Vec<(ValuationState, S, usize)> {
        let g = self.game;
        let mut out = Vec::new();
        let mut stack = vec![(g.root(), S::one())];
        while let Some((n, p)) = stack.pop() {
            if g.is_terminal(n) {
                let path = g.path_to(n);
                let mut next = state.clone();
                for v in &mut next.valuations {
                    let payoff = g.payoff(n, v.player());
                    for &m in &path.moves {
                        v.set(m, payoff);
                    }
                }
                out.push((next, p, n.0));
                continue;
            }
            let dist = match (self.owner[n.0], &self.fixed[n.0]) {
                (Some(i), _) => {
                    let mask = maximizers(&state.valuations[i], g, n);
                    match &self.learners[i].rule {
                        ChainRule::Myopic => mixed_distribution::<S>(&mask, None),
                        ChainRule::Exploratory(d) => mixed_distribution(&mask, Some(d)),
                    }
                }
                (None, Some(d)) => d.clone(),
                (None, None) => unreachable!("every decision node has an owner"),
            };
            for (m, q) in g.moves(n).iter().zip(dist) {
                if !q.is_zero() {
                    stack.push((m.child, p.clone() * q));
                }
            }
        }
        out
    }
}

/// One valuation per learner, in setup order.
#[derive(Clone, Debug, PartialEq)]
pub struct ValuationState {
    pub valuations: Vec<Valuation>,
}

impl ValuationState {
    fn key(&self) -> Vec<u64> {
        self.valuations
            .iter()
            .flat_map(|v| v.iter().map(|(_, x)| x.to_bits()))
            .collect()
    }

    /// Value of move `m` in whichever learner's valuation holds it.
    pub fn value(&self, m: NodeId) -> Option<f64> {
        self.valuations.iter().find_map(|v| v.get(m))
    }

    /// Values at the given moves, e.g. the root moves only.
    pub fn project(&self, moves: &[NodeId]) -> Vec<Option<f64>> {
        moves.iter().map(|&m| self.value(m)).collect()
    }

    /// Sorted `move=value` pairs joined by commas.
    pub fn label(&self, g: &GameTree) -> String {
        let mut parts: Vec<String> = self
            .valuations
            .iter()
            .flat_map(|v| v.iter().map(|(m, x)| format!("{}={}", g.path_label(m), format_real(x))))
            .collect();
        parts.sort();
        parts.join(",")
    }
}

/// Row-stochastic transition matrix over enumerated valuation states.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix<S> {
    pub states: Vec<ValuationState>,
    pub labels: Vec<String>,
    /// Sparse rows: `(target, probability)` with positive probability,
    /// sorted by target.
    pub rows: Vec<Vec<(usize, S)>>,
    pub absorbing: Vec<usize>,
    /// Expected one-round payoff of each player from each state.
    pub expected_payoffs: Vec<Vec<S>>,
}

impl<S: Scalar> TransitionMatrix<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn entry(&self, from: usize, to: usize) -> S {
        self.rows[from]
            .iter()
            .find(|(j, _)| *j == to)
            .map_or_else(S::zero, |(_, p)| p.clone())
    }

    pub fn dense(&self) -> Vec<Vec<S>> {
        let n = self.len();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![S::zero(); n];
                for (j, p) in row {
                    dense[*j] = p.clone();
                }
                dense
            })
            .collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// First state whose values at `moves` equal `values`.
    pub fn find_projected(&self, moves: &[NodeId], values: &[f64]) -> Option<usize> {
        self.states
            .iter()
            .position(|s| s.project(moves).iter().zip(values).all(|(a, b)| *a == Some(*b)))
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.absorbing.contains(&i)
    }

    fn graph(&self) -> DiGraph<(), ()> {
        let mut graph = DiGraph::new();
        let nodes: Vec<_> = (0..self.len()).map(|_| graph.add_node(())).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, _) in row {
                graph.add_edge(nodes[i], nodes[*j], ());
            }
        }
        graph
    }

    /// Per-state values rounded to f64, for reporting.
    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.dense()
            .iter()
            .map(|row| row.iter().map(Scalar::to_f64).collect())
            .collect()
    }

    /// CSV with a header of state labels and one row per source state.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("from");
        for l in &self.labels {
            let _ = write!(out, ",\"{l}\"");
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(self.to_f64()) {
            let _ = write!(out, "\"{label}\"");
            for p in row {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixExport {
    pub states: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<Vec<String>>>,
    pub absorbing: Vec<String>,
}

impl<S: Scalar + std::fmt::Display> TransitionMatrix<S> {
    /// JSON-friendly export; `exact` carries the scalar's own text form.
    pub fn export(&self, exact: bool) -> MatrixExport {
        MatrixExport {
            states: self.labels.clone(),
            matrix: self.to_f64(),
            exact: exact.then(|| {
                self.dense()
                    .iter()
                    .map(|row| row.iter().map(|p| p.to_string()).collect())
                    .collect()
            }),
            absorbing: self.absorbing.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }
}

fn explore<S: Scalar>(
    setup: &ChainSetup<'_, S>,
    mut visit: impl FnMut(&ValuationState, Vec<(ValuationState, S, usize)>, &mut dyn FnMut(ValuationState) -> Result<usize, ChainError>) -> Result<(), ChainError>,
) -> Result<Vec<ValuationState>, ChainError> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut states = vec![setup.initial_state()];
    index.insert(states[0].key(), 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let state = states[i].clone();
        let succ = setup.successors(&state);
        let cap = setup.max_states;
        let mut intern = |s: ValuationState| -> Result<usize, ChainError> {
            let key = s.key();
            if let Some(&j) = index.get(&key) {
                return Ok(j);
            }
            if states.len() >= cap {
                return Err(ChainError::TooManyStates(cap));
            }
            let j = states.len();
            index.insert(key, j);
            states.push(s);
            queue.push_back(j);
            Ok(j)
        };
        visit(&state, succ, &mut intern)?;
    }
    Ok(states)
}

/// Every valuation profile reachable from the initial one, in BFS order.
pub fn enumerate_states<S: Scalar>(setup: &ChainSetup<'_, S>) -> Result<Vec<ValuationState>, ChainError> {
    explore(setup, |_, succ, intern| {
        for (next, _, _) in succ {
            intern(next)?;
        }
        Ok(())
    })
}

/// One-round transition probabilities between reachable states.
pub fn build_transition_matrix<S: Scalar>(setup: &ChainSetup<'_, S>) -> Result<TransitionMatrix<S>, ChainError> {
    let g = setup.game;
    let mut rows: Vec<Vec<(usize, S)>> = Vec::new();
    let mut expected_payoffs = Vec::new();
    let states = explore(setup, |_, succ, intern| {
        let mut row: BTreeMap<usize, S> = BTreeMap::new();
        let mut expected = vec![S::zero(); g.player_count()];
        for (next, p, z) in succ {
            for (k, x) in g.payoffs(NodeId(z)).iter().enumerate() {
                expected[k] = expected[k].clone() + p.clone() * S::from_f64_exact(*x);
            }
            let j = intern(next)?;
            let slot = row.entry(j).or_insert_with(S::zero);
            *slot = slot.clone() + p;
        }
        rows.push(row.into_iter().collect());
        expected_payoffs.push(expected);
        Ok(())
    })?;
    let absorbing = rows
        .iter()
        .enumerate()
        .filter(|(i, row)| row.len() == 1 && row[0].0 == *i && row[0].1 == S::one())
        .map(|(i, _)| i)
        .collect();
    let labels = states.iter().map(|s| s.label(g)).collect();
    Ok(TransitionMatrix {
        states,
        labels,
        rows,
        absorbing,
        expected_payoffs,
    })
}

/// Probability of eventual absorption in each absorbing state, starting
/// from `from`.
pub fn absorption_probabilities<S: Scalar>(m: &TransitionMatrix<S>, from: usize) -> Result<BTreeMap<usize, S>, ChainError> {
    if from >= m.len() {
        return Err(ChainError::UnknownState(from));
    }
    if m.absorbing.is_empty() {
        return Err(ChainError::NoAbsorbingState);
    }
    if m.is_absorbing(from) {
        return Ok(m
            .absorbing
            .iter()
            .map(|&a| (a, if a == from { S::one() } else { S::zero() }))
            .collect());
    }
    // States that can reach an absorbing state, by reverse search.
    let n = m.len();
    let mut reverse = vec![Vec::new(); n];
    for (i, row) in m.rows.iter().enumerate() {
        for (j, _) in row {
            reverse[*j].push(i);
        }
    }
    let mut reaches = vec![false; n];
    let mut queue: VecDeque<usize> = m.absorbing.iter().copied().collect();
    for &a in &m.absorbing {
        reaches[a] = true;
    }
    while let Some(j) = queue.pop_front() {
        for &i in &reverse[j] {
            if !reaches[i] {
                reaches[i] = true;
                queue.push_back(i);
            }
        }
    }
    if !reaches[from] {
        return Err(ChainError::NotAbsorbable(from));
    }
    let transient: Vec<usize> = (0..n).filter(|&i| reaches[i] && !m.is_absorbing(i)).collect();
    let pos: HashMap<usize, usize> = transient.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let size = transient.len();
    let mut a = vec![vec![S::zero(); size]; size];
    for (r, &i) in transient.iter().enumerate() {
        a[r][r] = S::one();
        for (j, p) in &m.rows[i] {
            if let Some(&c) = pos.get(j) {
                a[r][c] = a[r][c].clone() - p.clone();
            }
        }
    }
    let mut out = BTreeMap::new();
    for &target in &m.absorbing {
        let b: Vec<S> = transient.iter().map(|&i| m.entry(i, target)).collect();
        let x = crate::numeric::solve_linear(a.clone(), b).ok_or(ChainError::Singular)?;
        out.insert(target, x[pos[&from]].clone());
    }
    Ok(out)
}

/// The unique stationary distribution; errors unless exactly one closed
/// communicating class exists.
pub fn stationary_distribution<S: Scalar>(m: &TransitionMatrix<S>) -> Result<Vec<S>, ChainError> {
    let graph = m.graph();
    let mut class_of = vec![0usize; m.len()];
    let classes = tarjan_scc(&graph);
    for (c, members) in classes.iter().enumerate() {
        for node in members {
            class_of[node.index()] = c;
        }
    }
    let closed: Vec<usize> = (0..classes.len())
        .filter(|&c| {
            classes[c]
                .iter()
                .all(|node| m.rows[node.index()].iter().all(|(j, _)| class_of[*j] == c))
        })
        .collect();
    if closed.len() != 1 {
        return Err(ChainError::Reducible(closed.len()));
    }
    let mut members: Vec<usize> = classes[closed[0]].iter().map(|node| node.index()).collect();
    members.sort_unstable();
    let size = members.len();
    let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    // Balance equations pi (P - I) = 0 for all but the last member, then
    // normalization.
    let mut a = vec![vec![S::zero(); size]; size];
    for (col, &i) in members.iter().enumerate() {
        for (j, p) in &m.rows[i] {
            let row = pos[j];
            if row + 1 < size {
                a[row][col] = a[row][col].clone() + p.clone();
            }
        }
        if col + 1 < size {
            a[col][col] = a[col][col].clone() - S::one();
        }
    }
    for entry in a[size - 1].iter_mut() {
        *entry = S::one();
    }
    let mut b = vec![S::zero(); size];
    b[size - 1] = S::one();
    let x = crate::numeric::solve_linear(a, b).ok_or(ChainError::Singular)?;
    let mut pi = vec![S::zero(); m.len()];
    for (k, &i) in members.iter().enumerate() {
        pi[i] = x[k].clone();
    }
    Ok(pi)
}

/// `max_j |(pi P)_j - pi_j|` in f64.
pub fn stationary_residual<S: Scalar>(m: &TransitionMatrix<S>, pi: &[S]) -> f64 {
    let mut next = vec![0.0; m.len()];
    for (i, row) in m.rows.iter().enumerate() {
        for (j, p) in row {
            next[*j] += pi[i].to_f64() * p.to_f64();
        }
    }
    next.iter()
        .zip(pi)
        .map(|(a, b)| (a - b.to_f64()).abs())
        .fold(0.0, f64::max)
}

/// Long-run mean payoff of `player` under the distribution `pi`.
pub fn mean_payoff<S: Scalar>(m: &TransitionMatrix<S>, pi: &[S], player: PlayerId) -> S {
    pi.iter()
        .zip(&m.expected_payoffs)
        .fold(S::zero(), |acc, (p, e)| acc + p.clone() * e[player.index()].clone())
}

impl MoveValues for ValuationState {
    fn value(&self, m: NodeId) -> f64 {
        ValuationState::value(self, m).expect("move belongs to a learner")
    }
}
