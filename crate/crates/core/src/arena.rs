//! Repeated play of a stage game.
//!
//! Each player is driven by a [`Policy`]. Learners regenerate their
//! stage strategy from the current valuation every round and revise it
//! with their own payoff afterwards. Trials are independent: each owns its
//! learner states and an RNG seeded from `(base_seed, trial_index)`, so
//! [`run_experiment`] can fan them out over a thread pool and still fold
//! the results deterministically in trial order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::game::{GameTree, NodeId, PathRecord, PlayerId};
use crate::learning::{fill_distribution, LearnError, LearnerConfig, LearnerSnapshot, LearnerState, StrategyRule};
use crate::solvers::{maxmin, solve_spe};
use crate::strategy::{BehavioralStrategy, PureStrategy, StrategyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArenaError {
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("tail window {window} must be between 1 and the number of rounds ({rounds})")]
    BadWindow { window: usize, rounds: usize },
    #[error("expected a policy for each of {expected} players, found {found}")]
    PolicyCount { expected: usize, found: usize },
    #[error("player {player}: {reason}")]
    Policy { player: PlayerId, reason: String },
    #[error("learner for player {player}: {source}")]
    Learner { player: PlayerId, source: LearnError },
    #[error("player {player}: {source}")]
    Strategy { player: PlayerId, source: StrategyError },
    #[error("{0}")]
    Invalid(String),
}

/// How one player chooses its stage strategy each round.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Uniform,
    Stationary(BehavioralStrategy),
    /// Pure strategies played in order, cycling.
    Scripted(Vec<PureStrategy>),
    /// Each round, jointly with any other adversaries of the same target,
    /// the pure response minimizing `target`'s expected payoff against
    /// everyone else's declared strategy for that round.
    Adversarial { target: PlayerId },
    Learner(LearnerConfig),
}

/// A fully resolved repeated-game experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub game: Arc<GameTree>,
    /// One policy per player, in player order.
    pub policies: Vec<Policy>,
    pub rounds: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub tail_window: usize,
    /// Margin below the maxmin value tolerated in the tail mean.
    pub epsilon: f64,
    /// L-infinity tolerance between tail choice frequencies and the perturbed equilibrium.
    pub spe_tolerance: f64,
    /// Nodes visited fewer times than this in the tail are not compared.
    pub min_node_visits: u64,
}

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_SPE_TOLERANCE: f64 = 0.03;
pub const DEFAULT_MIN_NODE_VISITS: u64 = 50;

/// `max(100, rounds / 5)`, capped at `rounds`.
pub fn default_tail_window(rounds: usize) -> usize {
    (rounds / 5).max(100).min(rounds)
}

impl Experiment {
    pub fn new(game: GameTree, policies: Vec<Policy>, rounds: usize, trials: usize, base_seed: u64) -> Self {
        Experiment {
            game: Arc::new(game),
            policies,
            rounds,
            trials,
            base_seed,
            tail_window: default_tail_window(rounds),
            epsilon: DEFAULT_EPSILON,
            spe_tolerance: DEFAULT_SPE_TOLERANCE,
            min_node_visits: DEFAULT_MIN_NODE_VISITS,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.tail_window = window;
        self
    }

    pub fn policy(&self, player: PlayerId) -> &Policy {
        &self.policies[player.index()]
    }

    pub fn learners(&self) -> impl Iterator<Item = &LearnerConfig> {
        self.policies.iter().filter_map(|p| match p {
            Policy::Learner(cfg) => Some(cfg),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<(), ArenaError> {
        let g = &*self.game;
        if self.rounds == 0 {
            return Err(ArenaError::NoRounds);
        }
        if self.trials == 0 {
            return Err(ArenaError::NoTrials);
        }
        if self.tail_window == 0 || self.tail_window > self.rounds {
            return Err(ArenaError::BadWindow {
                window: self.tail_window,
                rounds: self.rounds,
            });
        }
        if self.policies.len() != g.player_count() {
            return Err(ArenaError::PolicyCount {
                expected: g.player_count(),
                found: self.policies.len(),
            });
        }
        if !(self.epsilon.is_finite() && self.spe_tolerance.is_finite()) {
            return Err(ArenaError::Invalid("epsilon and spe_tolerance must be finite".into()));
        }
        for (player, policy) in g.players().zip(&self.policies) {
            match policy {
                Policy::Uniform => {}
                Policy::Stationary(s) => s
                    .validate_for(g, player)
                    .map_err(|source| ArenaError::Strategy { player, source })?,
                Policy::Scripted(seq) => {
                    if seq.is_empty() {
                        return Err(ArenaError::Policy {
                            player,
                            reason: "scripted policy needs at least one strategy".into(),
                        });
                    }
                    for s in seq {
                        s.validate_for(g, player)
                            .map_err(|source| ArenaError::Strategy { player, source })?;
                    }
                }
                Policy::Adversarial { target } => {
                    if target.0 == 0 || target.0 > g.player_count() || *target == player {
                        return Err(ArenaError::Policy {
                            player,
                            reason: format!("invalid adversarial target {target}"),
                        });
                    }
                    if matches!(self.policy(*target), Policy::Adversarial { .. }) {
                        return Err(ArenaError::Policy {
                            player,
                            reason: format!("target {target} is itself adversarial"),
                        });
                    }
                }
                Policy::Learner(cfg) => {
                    if cfg.player != player {
                        return Err(ArenaError::Policy {
                            player,
                            reason: format!("learner config is for player {}", cfg.player),
                        });
                    }
                    cfg.validate(g)
                        .map_err(|source| ArenaError::Learner { player, source })?;
                }
            }
        }
        Ok(())
    }
}

/// Per-node distributions for one round, indexed by node id.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundProfile {
    dists: Vec<Vec<f64>>,
}

impl RoundProfile {
    /// Uniform play at every decision node.
    pub fn uniform(g: &GameTree) -> Self {
        let dists = g
            .node_ids()
            .map(|n| {
                let k = g.moves(n).len();
                vec![1.0 / k as f64; k]
            })
            .collect();
        RoundProfile { dists }
    }

    /// Starts from uniform play and overrides every node in `parts`.
    pub fn from_strategies<'a>(g: &GameTree, parts: impl IntoIterator<Item = &'a BehavioralStrategy>) -> Self {
        let mut p = Self::uniform(g);
        for s in parts {
            for (&n, d) in &s.dists {
                p.dists[n.0] = d.clone();
            }
        }
        p
    }

    pub fn get(&self, n: NodeId) -> &[f64] {
        &self.dists[n.0]
    }

    pub fn set(&mut self, n: NodeId, dist: &[f64]) {
        self.dists[n.0].clear();
        self.dists[n.0].extend_from_slice(dist);
    }

    pub fn set_pure(&mut self, n: NodeId, choice: usize) {
        let d = &mut self.dists[n.0];
        d.iter_mut().for_each(|p| *p = 0.0);
        d[choice] = 1.0;
    }

    fn slot(&mut self, n: NodeId) -> &mut Vec<f64> {
        &mut self.dists[n.0]
    }
}

fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` beyond the accumulated mass.
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// Samples a root-to-leaf path, drawing once at each visited decision node.
pub fn play_round<R: Rng + ?Sized>(g: &GameTree, profile: &RoundProfile, rng: &mut R) -> PathRecord {
    let mut node = g.root();
    let mut moves = Vec::with_capacity(4);
    while !g.is_terminal(node) {
        let i = sample_index(profile.get(node), rng);
        node = g.moves(node)[i].child;
        moves.push(node);
    }
    PathRecord { moves, terminal: node }
}

/// Pure choices at every unfixed decision node minimizing `target`'s
/// expected payoff, given the fixed nodes' distributions in `profile`.
fn minimize_for(
    g: &GameTree,
    target: PlayerId,
    fixed: impl Fn(NodeId) -> bool,
    profile: &RoundProfile,
    value: &mut [f64],
    choices: &mut [usize],
) {
    for n in g.node_ids().rev() {
        let moves = g.moves(n);
        if moves.is_empty() {
            value[n.0] = g.payoff(n, target);
        } else if fixed(n) {
            value[n.0] = moves
                .iter()
                .zip(profile.get(n))
                .map(|(m, p)| if *p > 0.0 { p * value[m.child.0] } else { 0.0 })
                .sum();
        } else {
            let mut best = 0;
            for i in 1..moves.len() {
                if value[moves[i].child.0] < value[moves[best].child.0] {
                    best = i;
                }
            }
            value[n.0] = value[moves[best].child.0];
            choices[n.0] = best;
        }
    }
}

/// Joint pure response of every node not covered by `declared` that
/// minimizes `target`'s expected payoff when `declared` is played at
/// the covered nodes.
pub fn adversarial_response(g: &GameTree, target: PlayerId, declared: &BehavioralStrategy) -> PureStrategy {
    let profile = RoundProfile::from_strategies(g, [declared]);
    let mut value = vec![0.0; g.len()];
    let mut choices = vec![0; g.len()];
    let fixed = |n: NodeId| declared.dists.contains_key(&n);
    minimize_for(g, target, fixed, &profile, &mut value, &mut choices);
    PureStrategy {
        choices: g
            .decision_nodes()
            .filter(|&n| !fixed(n))
            .map(|n| (n, choices[n.0]))
            .collect(),
    }
}

/// Seed of trial `trial_index`: a SplitMix64 mix of both inputs.
pub fn trial_seed(base_seed: u64, trial_index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(base_seed ^ splitmix(trial_index))
}

/// Statistics over the final `window` rounds of a trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailStats {
    pub window: usize,
    /// Mean payoff of each player over the window.
    pub mean_payoff: Vec<f64>,
    /// Fraction of window rounds won, for players with only 0/1 payoffs.
    pub win_rate: Vec<Option<f64>>,
    pub all_win: Vec<Option<bool>>,
    pub modal_terminal: String,
    pub modal_share: f64,
    pub single_terminal: bool,
    /// Move counts at each decision node over the window, keyed by node path.
    pub choice_counts: BTreeMap<String, Vec<u64>>,
}

/// Complete record of one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub rounds: usize,
    pub player_count: usize,
    pub terminals: Vec<NodeId>,
    /// Row-major `rounds x players`.
    pub payoffs: Vec<f64>,
    /// Row-major `rounds x players`; entry `t` is the mean of rounds `0..=t`.
    pub running_mean: Vec<f64>,
    pub final_states: Vec<LearnerSnapshot>,
    pub tail: TailStats,
}

impl TrialRecord {
    pub fn payoff(&self, round: usize, player: PlayerId) -> f64 {
        self.payoffs[round * self.player_count + player.index()]
    }

    pub fn running_mean(&self, round: usize, player: PlayerId) -> f64 {
        self.running_mean[round * self.player_count + player.index()]
    }
}

struct ActiveLearner {
    player: PlayerId,
    rule: StrategyRule,
    nodes: Vec<NodeId>,
    state: LearnerState,
}

struct AdversaryGroup {
    target: PlayerId,
    /// `fixed[n]` is false exactly at this group's nodes.
    fixed: Vec<bool>,
    nodes: Vec<NodeId>,
}

/// Runs one trial of `exp`.
pub fn run_trial(exp: &Experiment, trial_index: u64) -> Result<TrialRecord, ArenaError> {
    exp.validate()?;
    Ok(run_validated_trial(exp, trial_index))
}

fn run_validated_trial(exp: &Experiment, trial_index: u64) -> TrialRecord {
    let g = &*exp.game;
    let players = g.player_count();
    let seed = trial_seed(exp.base_seed, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut profile = RoundProfile::uniform(g);
    let mut learners = Vec::new();
    let mut scripted = Vec::new();
    let mut groups: Vec<AdversaryGroup> = Vec::new();
    for (player, policy) in g.players().zip(&exp.policies) {
        match policy {
            Policy::Uniform => {}
            Policy::Stationary(s) => {
                for (&n, d) in &s.dists {
                    profile.set(n, d);
                }
            }
            Policy::Scripted(seq) => scripted.push((player, seq)),
            Policy::Adversarial { target } => {
                let group = match groups.iter_mut().position(|gr| gr.target == *target) {
                    Some(i) => &mut groups[i],
                    None => {
                        groups.push(AdversaryGroup {
                            target: *target,
                            fixed: vec![true; g.len()],
                            nodes: Vec::new(),
                        });
                        groups.last_mut().expect("just pushed")
                    }
                };
                for n in g.nodes_of(player) {
                    group.fixed[n.0] = false;
                    group.nodes.push(n);
                }
            }
            Policy::Learner(cfg) => learners.push(ActiveLearner {
                player,
                rule: cfg.strategy_rule,
                nodes: g.nodes_of(player).collect(),
                state: cfg.init(g).expect("validated learner"),
            }),
        }
    }

    let mut terminals = Vec::with_capacity(exp.rounds);
    let mut payoffs = Vec::with_capacity(exp.rounds * players);
    let mut running_mean = Vec::with_capacity(exp.rounds * players);
    let mut totals = vec![0.0; players];
    let mut value = vec![0.0; g.len()];
    let mut choices = vec![0; g.len()];

    for t in 0..exp.rounds {
        for l in &learners {
            for &n in &l.nodes {
                fill_distribution(&l.state, g, n, l.rule, profile.slot(n));
            }
        }
        for (_, seq) in &scripted {
            let pure = &seq[t % seq.len()];
            for (&n, &i) in &pure.choices {
                profile.set_pure(n, i);
            }
        }
        for group in &groups {
            minimize_for(g, group.target, |n| group.fixed[n.0], &profile, &mut value, &mut choices);
            for &n in &group.nodes {
                profile.set_pure(n, choices[n.0]);
            }
        }

        let path = play_round(g, &profile, &mut rng);
        let z = path.terminal;
        terminals.push(z);
        let f = g.payoffs(z);
        payoffs.extend_from_slice(f);
        for (k, x) in f.iter().enumerate() {
            totals[k] += x;
            running_mean.push(totals[k] / (t + 1) as f64);
        }
        for l in &mut learners {
            l.state.revise(&path, f[l.player.index()]);
        }
    }

    let tail = tail_stats(g, &terminals, exp.tail_window);
    TrialRecord {
        trial_index,
        seed,
        rounds: exp.rounds,
        player_count: players,
        terminals,
        payoffs,
        running_mean,
        final_states: learners.iter().map(|l| l.state.snapshot(g)).collect(),
        tail,
    }
}

/// Move counts at each decision node over the given terminals.
pub fn choice_counts(g: &GameTree, terminals: &[NodeId]) -> Vec<Vec<u64>> {
    let mut counts: Vec<Vec<u64>> = g.node_ids().map(|n| vec![0; g.moves(n).len()]).collect();
    for &z in terminals {
        let mut cur = z;
        while let Some(parent) = g.parent(cur) {
            counts[parent.0][g.child_index(cur)] += 1;
            cur = parent;
        }
    }
    counts
}

fn tail_stats(g: &GameTree, terminals: &[NodeId], window: usize) -> TailStats {
    let tail = &terminals[terminals.len() - window..];
    let players = g.player_count();
    let mut mean_payoff = vec![0.0; players];
    for &z in tail {
        for (k, x) in g.payoffs(z).iter().enumerate() {
            mean_payoff[k] += x;
        }
    }
    mean_payoff.iter_mut().for_each(|m| *m /= window as f64);

    let mut win_rate = Vec::with_capacity(players);
    let mut all_win = Vec::with_capacity(players);
    for p in g.players() {
        if g.is_win_lose_for(p) {
            let wins = tail.iter().filter(|&&z| g.payoff(z, p) == 1.0).count();
            win_rate.push(Some(wins as f64 / window as f64));
            all_win.push(Some(wins == window));
        } else {
            win_rate.push(None);
            all_win.push(None);
        }
    }

    let mut hits = vec![0usize; g.len()];
    for &z in tail {
        hits[z.0] += 1;
    }
    // Ties go to the smallest node id.
    let (modal, modal_hits) = hits
        .iter()
        .enumerate()
        .fold((0, 0), |best, (i, &h)| if h > best.1 { (i, h) } else { best });

    let counts = choice_counts(g, tail);
    TailStats {
        window,
        mean_payoff,
        win_rate,
        all_win,
        modal_terminal: g.path_label(NodeId(modal)).to_string(),
        modal_share: modal_hits as f64 / window as f64,
        single_terminal: modal_hits == window,
        choice_counts: g
            .decision_nodes()
            .map(|n| (g.path_label(n).to_string(), counts[n.0].clone()))
            .collect(),
    }
}

/// The perturbed equilibrium `(1 - delta_i) * beta + delta_i * uniform` at
/// every decision node, where `delta_i` is the exploration of the node's
/// owner. Available only when every player is a learner and the game has
/// a unique subgame perfect equilibrium.
pub fn perturbed_equilibrium(exp: &Experiment) -> Option<BTreeMap<NodeId, Vec<f64>>> {
    let g = &*exp.game;
    let deltas: Vec<f64> = exp
        .policies
        .iter()
        .map(|p| match p {
            Policy::Learner(cfg) => Some(cfg.strategy_rule.delta()),
            _ => None,
        })
        .collect::<Option<_>>()?;
    let spe = solve_spe(g).ok()?;
    Some(
        spe.strategy
            .choices
            .iter()
            .map(|(&n, &best)| {
                let k = g.moves(n).len();
                let delta = deltas[g.owner(n).expect("decision node").index()];
                let dist = (0..k)
                    .map(|i| (1.0 - delta) * f64::from(u8::from(i == best)) + delta / k as f64)
                    .collect();
                (n, dist)
            })
            .collect(),
    )
}

/// Largest L-infinity gap between tail move frequencies and `target` over
/// nodes visited at least `min_visits` times. `None` if no node qualifies.
pub fn tail_distance(
    g: &GameTree,
    tail: &TailStats,
    target: &BTreeMap<NodeId, Vec<f64>>,
    min_visits: u64,
) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (&n, want) in target {
        let counts = &tail.choice_counts[g.path_label(n)];
        let visits: u64 = counts.iter().sum();
        if visits < min_visits || visits == 0 {
            continue;
        }
        let gap = counts
            .iter()
            .zip(want)
            .map(|(&c, w)| (c as f64 / visits as f64 - w).abs())
            .fold(0.0, f64::max);
        worst = Some(worst.map_or(gap, |w| w.max(gap)));
    }
    worst
}

/// What a trial contributes to the experiment report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial_index: u64,
    pub seed: u64,
    pub tail: TailStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spe_distance: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub final_states: Vec<LearnerSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub p05: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    /// Linear-interpolation quantiles of a non-empty sample.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Quantiles {
            min: v[0],
            p05: q(0.05),
            p25: q(0.25),
            median: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeTailReport {
    /// Perturbed equilibrium per node path.
    pub target: BTreeMap<String, Vec<f64>>,
    pub tolerance: f64,
    pub min_node_visits: u64,
    /// Fraction of trials whose tail distance is within `tolerance`.
    pub within_tolerance_fraction: f64,
    pub distance: Quantiles,
}

/// Aggregate statistics of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub trials: usize,
    pub rounds: usize,
    pub tail_window: usize,
    pub epsilon: f64,
    /// Individually rational payoff of each player.
    pub maxmin: BTreeMap<PlayerId, f64>,
    /// Per win-lose player: fraction of trials that win every tail round.
    pub all_win_tail_fraction: BTreeMap<PlayerId, f64>,
    /// Fraction of trials whose tail reaches a single terminal.
    pub single_terminal_tail_fraction: f64,
    pub tail_mean: BTreeMap<PlayerId, Quantiles>,
    /// Per player: fraction of trials with tail mean above `maxmin - epsilon`.
    pub above_maxmin_fraction: BTreeMap<PlayerId, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spe: Option<SpeTailReport>,
    pub per_trial: Vec<TrialSummary>,
}

/// Reduces a trial record to its summary.
pub fn summarize(exp: &Experiment, record: &TrialRecord, target: Option<&BTreeMap<NodeId, Vec<f64>>>) -> TrialSummary {
    TrialSummary {
        trial_index: record.trial_index,
        seed: record.seed,
        tail: record.tail.clone(),
        spe_distance: target.map(|t| tail_distance(&exp.game, &record.tail, t, exp.min_node_visits).unwrap_or(0.0)),
        final_states: record.final_states.clone(),
    }
}

/// Runs every trial (in parallel on the current rayon pool) and keeps the
/// full records.
pub fn run_trials(exp: &Experiment) -> Result<Vec<TrialRecord>, ArenaError> {
    exp.validate()?;
    Ok((0..exp.trials as u64)
        .into_par_iter()
        .map(|i| run_validated_trial(exp, i))
        .collect())
}

/// Runs every trial in parallel and aggregates the summaries in trial order.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentReport, ArenaError> {
    exp.validate()?;
    let target = perturbed_equilibrium(exp);
    let summaries: Vec<TrialSummary> = (0..exp.trials as u64)
        .into_par_iter()
        .map(|i| summarize(exp, &run_validated_trial(exp, i), target.as_ref()))
        .collect();
    Ok(aggregate(exp, summaries))
}

/// Builds the report from per-trial summaries ordered by trial index.
pub fn aggregate(exp: &Experiment, per_trial: Vec<TrialSummary>) -> ExperimentReport {
    let g = &*exp.game;
    let n = per_trial.len() as f64;
    let fraction = |pred: &dyn Fn(&TrialSummary) -> bool| per_trial.iter().filter(|s| pred(s)).count() as f64 / n;

    let maxmin: BTreeMap<PlayerId, f64> = g
        .players()
        .map(|p| (p, maxmin(g, p).expect("player in range").value))
        .collect();
    let all_win_tail_fraction = g
        .players()
        .filter(|&p| g.is_win_lose_for(p))
        .map(|p| (p, fraction(&|s| s.tail.all_win[p.index()] == Some(true))))
        .collect();
    let tail_mean = g
        .players()
        .map(|p| {
            let means: Vec<f64> = per_trial.iter().map(|s| s.tail.mean_payoff[p.index()]).collect();
            (p, Quantiles::of(&means))
        })
        .collect();
    let above_maxmin_fraction = g
        .players()
        .map(|p| {
            let floor = maxmin[&p] - exp.epsilon;
            (p, fraction(&|s| s.tail.mean_payoff[p.index()] > floor))
        })
        .collect();
    let spe = perturbed_equilibrium(exp).map(|target| {
        let distances: Vec<f64> = per_trial.iter().filter_map(|s| s.spe_distance).collect();
        SpeTailReport {
            target: target
                .iter()
                .map(|(&node, d)| (g.path_label(node).to_string(), d.clone()))
                .collect(),
            tolerance: exp.spe_tolerance,
            min_node_visits: exp.min_node_visits,
            within_tolerance_fraction: fraction(&|s| s.spe_distance.is_some_and(|d| d <= exp.spe_tolerance)),
            distance: Quantiles::of(&distances),
        }
    });
    ExperimentReport {
        trials: per_trial.len(),
        rounds: exp.rounds,
        tail_window: exp.tail_window,
        epsilon: exp.epsilon,
        maxmin,
        all_win_tail_fraction,
        single_terminal_tail_fraction: fraction(&|s| s.tail.single_terminal),
        tail_mean,
        above_maxmin_fraction,
        spe,
        per_trial,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::parse_game;
    use crate::learning::{InitialValuation, RevisionRule};

    fn memoryless(player: usize) -> LearnerConfig {
        LearnerConfig::new(PlayerId(player), StrategyRule::Myopic, RevisionRule::Memoryless)
    }

    #[test]
    fn depth_zero_round_has_no_moves() {
        let g = parse_game("(payoffs 3)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = play_round(&g, &RoundProfile::uniform(&g), &mut rng);
        assert!(path.is_empty());
        assert_eq!(path.terminal, g.root());
    }

    #[test]
    fn pure_right_ends_immediately() {
        let g = fixtures::fig1();
        let mut profile = RoundProfile::uniform(&g);
        profile.set_pure(g.root(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let path = play_round(&g, &profile, &mut rng);
            assert_eq!(path.moves, vec![NodeId(4)]);
            assert_eq!(g.payoff(path.terminal, PlayerId(1)), 1.0);
        }
    }

    #[test]
    fn adversary_answers_left_with_b() {
        let g = fixtures::fig1();
        let left = BehavioralStrategy::from_pure(
            &g,
            &PureStrategy {
                choices: [(g.root(), 0)].into_iter().collect(),
            },
        );
        let response = adversarial_response(&g, PlayerId(1), &left);
        assert_eq!(response.labeled(&g)["/L"], "b");
        let right = BehavioralStrategy::from_pure(
            &g,
            &PureStrategy {
                choices: [(g.root(), 1)].into_iter().collect(),
            },
        );
        assert_eq!(adversarial_response(&g, PlayerId(1), &right).choices.len(), 1);
        let flat = parse_game("(payoffs 1)").unwrap();
        assert!(adversarial_response(&flat, PlayerId(1), &BehavioralStrategy::default()).is_empty());
    }

    #[test]
    fn absorbing_valuation_always_wins() {
        let g = fixtures::fig1();
        let init = InitialValuation::Explicit([("/R".to_string(), 1.0)].into_iter().collect());
        for opponent in [Policy::Uniform, Policy::Adversarial { target: PlayerId(1) }] {
            let exp = Experiment::new(
                g.clone(),
                vec![Policy::Learner(memoryless(1).with_initial(init.clone())), opponent],
                200,
                1,
                5,
            );
            let rec = run_trial(&exp, 0).unwrap();
            assert!(rec.terminals.iter().all(|&z| z == NodeId(4)));
            assert!(rec.payoffs.chunks(2).all(|f| f[0] == 1.0));
        }
    }

    #[test]
    fn lock_in_after_minus_ten() {
        let g = fixtures::fig2();
        let mut locked_trials = 0;
        for seed in 0..40 {
            let exp = Experiment::new(g.clone(), vec![Policy::Learner(memoryless(1))], 60, 1, seed);
            let rec = run_trial(&exp, 0).unwrap();
            if let Some(first) = rec.terminals.iter().position(|&z| z == NodeId(3)) {
                locked_trials += 1;
                assert!(rec.terminals[first + 1..].iter().all(|&z| z == NodeId(4)));
            }
        }
        assert!(locked_trials > 0);
    }

    #[test]
    fn trials_are_reproducible() {
        let g = fixtures::generic2p();
        let exp = Experiment::new(g, vec![Policy::Learner(memoryless(1)), Policy::Learner(memoryless(2))], 300, 2, 11);
        let a = serde_json::to_string(&run_trial(&exp, 1).unwrap()).unwrap();
        let b = serde_json::to_string(&run_trial(&exp, 1).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&run_trial(&exp, 0).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scripted_opponent_cycles() {
        let g = fixtures::fig1();
        let a = PureStrategy {
            choices: [(NodeId(1), 0)].into_iter().collect(),
        };
        let b = PureStrategy {
            choices: [(NodeId(1), 1)].into_iter().collect(),
        };
        let left = PureStrategy {
            choices: [(g.root(), 0)].into_iter().collect(),
        };
        let exp = Experiment::new(
            g.clone(),
            vec![Policy::Scripted(vec![left]), Policy::Scripted(vec![a, b])],
            10,
            1,
            0,
        )
        .with_window(10);
        let rec = run_trial(&exp, 0).unwrap();
        let expected: Vec<NodeId> = (0..10).map(|t| if t % 2 == 0 { NodeId(2) } else { NodeId(3) }).collect();
        assert_eq!(rec.terminals, expected);
        assert_eq!(rec.tail.choice_counts["/L"], vec![5, 5]);
    }

    #[test]
    fn validation_errors() {
        let g = fixtures::fig1();
        let base = Experiment::new(g.clone(), vec![Policy::Uniform, Policy::Uniform], 10, 1, 0);
        let mut e = base.clone();
        e.rounds = 0;
        assert_eq!(e.validate(), Err(ArenaError::NoRounds));
        let mut e = base.clone();
        e.tail_window = 11;
        assert!(matches!(e.validate(), Err(ArenaError::BadWindow { .. })));
        let mut e = base.clone();
        e.policies.pop();
        assert!(matches!(e.validate(), Err(ArenaError::PolicyCount { .. })));
        let mut e = base.clone();
        e.policies[1] = Policy::Adversarial { target: PlayerId(2) };
        assert!(matches!(e.validate(), Err(ArenaError::Policy { .. })));
        let mut e = base;
        e.policies[0] = Policy::Learner(LearnerConfig::new(
            PlayerId(1),
            StrategyRule::Exploratory { delta: 2.0 },
            RevisionRule::Averaging,
        ));
        assert!(matches!(e.validate(), Err(ArenaError::Learner { .. })));
    }

    #[test]
    fn default_window() {
        assert_eq!(default_tail_window(500), 100);
        assert_eq!(default_tail_window(50_000), 10_000);
        assert_eq!(default_tail_window(30), 30);
    }

    #[test]
    fn single_trial_report_matches_record() {
        let g = fixtures::fig1();
        let exp = Experiment::new(g, vec![Policy::Learner(memoryless(1)), Policy::Uniform], 200, 1, 3);
        let rec = run_trial(&exp, 0).unwrap();
        let report = run_experiment(&exp).unwrap();
        assert_eq!(report.per_trial.len(), 1);
        assert_eq!(report.per_trial[0].tail, rec.tail);
        let won = rec.tail.all_win[0] == Some(true);
        assert_eq!(report.all_win_tail_fraction[&PlayerId(1)], if won { 1.0 } else { 0.0 });
        assert_eq!(report.tail_mean[&PlayerId(1)].median, rec.tail.mean_payoff[0]);
    }

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((q.min, q.median, q.max, q.mean), (1.0, 3.0, 5.0, 3.0));
        assert_eq!(q.p25, 2.0);
        assert!((q.p05 - 1.2).abs() < 1e-12);
    }
}
