//! Bundled verification suites, runnable as one command.
//!
//! The chain suites are exact. The theorem suites are Monte Carlo
//! surrogates over a finite horizon: "eventually" becomes "throughout the
//! final `W` rounds", and "almost surely" becomes a fraction of trials.

use std::collections::BTreeMap;

use num::{BigRational, One, Zero};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::arena::{run_experiment, ArenaError, Experiment, ExperimentReport, Policy};
use crate::chain::{
    absorption_probabilities, build_transition_matrix, mean_payoff, stationary_distribution, stationary_residual,
    ChainError, ChainLearner, ChainRule, ChainSetup, TransitionMatrix,
};
use crate::fixtures;
use crate::game::{GameTree, NodeId, PlayerId};
use crate::learning::{exploration_for_deviation, LearnerConfig, RevisionRule, StrategyRule, Valuation};
use crate::numeric::Scalar;
use crate::solvers::maxmin;

pub const SUITES: [&str; 6] = [
    "example1-chain",
    "example2-chain",
    "theorem1",
    "theorem2",
    "theorem3",
    "theorem4",
];

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("delta must lie strictly between 0 and 1")]
    BadDelta,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Per-node deviation probability for `example2-chain`.
    pub delta: Option<BigRational>,
    pub trials: Option<usize>,
    pub rounds: Option<usize>,
    pub window: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<Check>, data: Value) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
            data,
        }
    }
}

/// Runs one named suite, or every suite for `all`.
pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Vec<SuiteReport>, VerifyError> {
    if name == "all" {
        return SUITES
            .iter()
            .map(|s| run_one(s, opts))
            .collect();
    }
    Ok(vec![run_one(name, opts)?])
}

fn run_one(name: &str, opts: &VerifyOptions) -> Result<SuiteReport, VerifyError> {
    match name {
        "example1-chain" => example1_chain(),
        "example2-chain" => example2_chain(opts.delta.clone().unwrap_or_else(|| ratio(1, 10))),
        "theorem1" => theorem1(opts),
        "theorem2" => theorem2(opts),
        "theorem3" => theorem3(opts),
        "theorem4" => theorem4(opts),
        other => Err(VerifyError::UnknownSuite(other.to_string())),
    }
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Figure 1 with a myopic memoryless player 1 starting from zero and a
/// uniform player 2.
pub fn example1_matrix() -> Result<(GameTree, TransitionMatrix<BigRational>), ChainError> {
    let g = fixtures::fig1();
    let learner = ChainLearner {
        rule: ChainRule::Myopic,
        initial: Valuation::constant(&g, PlayerId(1), 0.0),
    };
    let m = build_transition_matrix(&ChainSetup::new(&g, vec![learner], BTreeMap::new())?)?;
    Ok((g, m))
}

/// Figure 2 from valuation `L=10, R=2, a=10, b=-10` where each binary node
/// deviates from its preferred move with probability `deviation`.
pub fn example2_matrix(deviation: &BigRational) -> Result<(GameTree, TransitionMatrix<BigRational>), ChainError> {
    let g = fixtures::fig2();
    let initial = [0.0, 10.0, 10.0, -10.0, 2.0];
    let learner = ChainLearner {
        rule: ChainRule::Exploratory(exploration_for_deviation(deviation, 2)),
        initial: Valuation::from_fn(&g, PlayerId(1), |n| initial[n.0]),
    };
    let m = build_transition_matrix(&ChainSetup::new(&g, vec![learner], BTreeMap::new())?)?;
    Ok((g, m))
}

/// Value at 0 of the polynomial through `points`.
pub fn extrapolate_to_zero(points: &[(BigRational, BigRational)]) -> BigRational {
    let mut total = BigRational::zero();
    for (i, (xi, yi)) in points.iter().enumerate() {
        let mut weight = BigRational::one();
        for (j, (xj, _)) in points.iter().enumerate() {
            if i != j {
                weight = weight * xj.clone() / (xj.clone() - xi.clone());
            }
        }
        total += weight * yi.clone();
    }
    total
}

fn root_projection(g: &GameTree, m: &TransitionMatrix<BigRational>) -> Vec<Vec<Option<f64>>> {
    let roots: Vec<NodeId> = g.moves(g.root()).iter().map(|mv| mv.child).collect();
    m.states.iter().map(|s| s.project(&roots)).collect()
}

fn example1_chain() -> Result<SuiteReport, VerifyError> {
    let (g, m) = example1_matrix()?;
    let roots: Vec<NodeId> = g.moves(g.root()).iter().map(|mv| mv.child).collect();
    let mut projected = root_projection(&g, &m);
    projected.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let expected = vec![
        vec![Some(0.0), Some(0.0)],
        vec![Some(0.0), Some(1.0)],
        vec![Some(1.0), Some(0.0)],
    ];
    let s00 = m.find_projected(&roots, &[0.0, 0.0]);
    let s01 = m.find_projected(&roots, &[0.0, 1.0]);
    let mut checks = vec![Check::new(
        "states are (0,0), (1,0), (0,1) on (L,R)",
        projected == expected,
        format!("{projected:?}"),
    )];
    if let (Some(s00), Some(s01)) = (s00, s01) {
        let step = m.entry(s00, s01);
        checks.push(Check::new(
            "(0,1) is the only absorbing state",
            m.absorbing == vec![s01],
            format!("absorbing {:?}", m.absorbing),
        ));
        checks.push(Check::new(
            "P((0,0) -> (0,1)) = 1/2",
            step == ratio(1, 2),
            step.to_string(),
        ));
        let absorbed = absorption_probabilities(&m, s00)?;
        let p = absorbed.get(&s01).cloned().unwrap_or_else(BigRational::zero);
        checks.push(Check::new(
            "absorption from (0,0) into (0,1) = 1",
            (p.to_f64() - 1.0).abs() <= 1e-12,
            p.to_string(),
        ));
    }
    let data = json!({ "matrix": m.export(true), "root_projection": projected });
    Ok(SuiteReport::new("example1-chain", checks, data))
}

fn example2_chain(delta: BigRational) -> Result<SuiteReport, VerifyError> {
    if delta <= BigRational::zero() || delta >= BigRational::one() {
        return Err(VerifyError::BadDelta);
    }
    let (_, m) = example2_matrix(&delta)?;
    let stay = BigRational::one() - delta.clone() + delta.clone() * delta.clone();
    let leave = delta.clone() - delta.clone() * delta.clone();
    let golden = vec![vec![stay.clone(), leave.clone()], vec![leave, stay]];
    let mut checks = vec![Check::new(
        "matrix = [[1-d+d^2, d-d^2], [d-d^2, 1-d+d^2]]",
        m.dense() == golden,
        format!("{:?}", m.to_f64()),
    )];
    let pi = stationary_distribution(&m)?;
    let residual = stationary_residual(&m, &pi);
    let half = pi.iter().all(|p| (p.to_f64() - 0.5).abs() <= 1e-12);
    checks.push(Check::new(
        "stationary = (1/2, 1/2)",
        half && residual <= 1e-12,
        format!("{:?}, residual {residual:e}", pi.iter().map(Scalar::to_f64).collect::<Vec<_>>()),
    ));
    let mut points = Vec::new();
    for (n, d) in [(1, 10), (1, 7), (1, 3), (2, 5), (1, 2)] {
        let x = ratio(n, d);
        let (_, mx) = example2_matrix(&x)?;
        let px = stationary_distribution(&mx)?;
        points.push((x, mean_payoff(&mx, &px, PlayerId(1))));
    }
    let limit = extrapolate_to_zero(&points);
    checks.push(Check::new(
        "stationary mean payoff as d -> 0 is 6",
        limit == ratio(6, 1),
        limit.to_string(),
    ));
    let data = json!({
        "delta": delta.to_string(),
        "states": m.labels,
        "matrix": m.to_f64(),
        "exact": m.export(true).exact,
        "stationary": pi.iter().map(Scalar::to_f64).collect::<Vec<_>>(),
        "mean_payoff": mean_payoff(&m, &pi, PlayerId(1)).to_string(),
    });
    Ok(SuiteReport::new("example2-chain", checks, data))
}

/// A learner config for `player` with a zero initial valuation.
pub fn learner(player: PlayerId, rule: StrategyRule, revision: RevisionRule) -> Policy {
    Policy::Learner(LearnerConfig::new(player, rule, revision))
}

/// Horizon of a Monte Carlo setup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Horizon {
    pub trials: usize,
    pub rounds: usize,
    pub window: usize,
    pub seed: u64,
}

impl Horizon {
    fn with(self, opts: &VerifyOptions) -> Self {
        let rounds = opts.rounds.unwrap_or(self.rounds);
        Horizon {
            trials: opts.trials.unwrap_or(self.trials),
            rounds,
            window: opts.window.unwrap_or(self.window).min(rounds),
            seed: opts.seed,
        }
    }

    fn apply(self, game: GameTree, policies: Vec<Policy>) -> Experiment {
        Experiment::new(game, policies, self.rounds, self.trials, self.seed).with_window(self.window)
    }
}

pub const THEOREM1: Horizon = Horizon { trials: 1000, rounds: 500, window: 100, seed: 0 };
pub const THEOREM2: Horizon = Horizon { trials: 1000, rounds: 500, window: 200, seed: 0 };
pub const THEOREM3: Horizon = Horizon { trials: 100, rounds: 50_000, window: 10_000, seed: 0 };
pub const THEOREM4: Horizon = Horizon { trials: 100, rounds: 50_000, window: 5_000, seed: 0 };

/// A myopic memoryless player 1 in each win-lose fixture against uniform,
/// adversarial and co-learning opponents.
type OpponentMaker = Box<dyn Fn(PlayerId) -> Policy>;

pub fn theorem1_setups(h: Horizon) -> Vec<(String, Experiment)> {
    let mut out = Vec::new();
    for (name, g) in [
        ("fig1", fixtures::fig1()),
        ("winlose3a", fixtures::winlose3a()),
        ("winlose3b", fixtures::winlose3b()),
    ] {
        let me = learner(PlayerId(1), StrategyRule::Myopic, RevisionRule::Memoryless);
        let others: Vec<PlayerId> = g.players().skip(1).collect();
        let menus: [(&str, OpponentMaker); 3] = [
            ("uniform", Box::new(|_| Policy::Uniform)),
            ("adversarial", Box::new(|_| Policy::Adversarial { target: PlayerId(1) })),
            ("learner", Box::new(|p| learner(p, StrategyRule::Myopic, RevisionRule::Memoryless))),
        ];
        for (opponent, make) in menus {
            let mut policies = vec![me.clone()];
            policies.extend(others.iter().map(|&p| make(p)));
            out.push((format!("{name} vs {opponent}"), h.apply(g.clone(), policies)));
        }
    }
    out
}

pub fn theorem2_setup(h: Horizon) -> Experiment {
    let g = fixtures::generic2p();
    let policies = g
        .players()
        .map(|p| learner(p, StrategyRule::Myopic, RevisionRule::Memoryless))
        .collect();
    h.apply(g, policies)
}

/// Exploratory averaging player 1 in Figure 2 (alone) and in the maxmin
/// fixture against uniform and adversarial opponents.
pub fn theorem3_setups(h: Horizon, delta: f64) -> Vec<(String, Experiment)> {
    let me = learner(PlayerId(1), StrategyRule::Exploratory { delta }, RevisionRule::Averaging);
    let g = fixtures::maxmin3();
    vec![
        ("fig2".to_string(), h.apply(fixtures::fig2(), vec![me.clone()])),
        ("maxmin3 vs uniform".to_string(), h.apply(g.clone(), vec![me.clone(), Policy::Uniform])),
        (
            "maxmin3 vs adversarial".to_string(),
            h.apply(g, vec![me, Policy::Adversarial { target: PlayerId(1) }]),
        ),
    ]
}

pub fn theorem4_setup(h: Horizon, delta: f64) -> Experiment {
    let g = fixtures::generic2p();
    let policies = g
        .players()
        .map(|p| learner(p, StrategyRule::Exploratory { delta }, RevisionRule::Averaging))
        .collect();
    h.apply(g, policies)
}

fn brief(report: &ExperimentReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    if let Value::Object(map) = &mut v {
        map.remove("per_trial");
    }
    v
}

fn theorem1(opts: &VerifyOptions) -> Result<SuiteReport, VerifyError> {
    let mut checks = Vec::new();
    let mut data = serde_json::Map::new();
    for (name, exp) in theorem1_setups(THEOREM1.with(opts)) {
        let report = run_experiment(&exp)?;
        let frac = report.all_win_tail_fraction[&PlayerId(1)];
        checks.push(Check::new(
            format!("{name}: all-win tail fraction >= 0.99"),
            frac >= 0.99,
            format!("{frac}"),
        ));
        data.insert(name, brief(&report));
    }
    Ok(SuiteReport::new("theorem1", checks, Value::Object(data)))
}

fn theorem2(opts: &VerifyOptions) -> Result<SuiteReport, VerifyError> {
    let report = run_experiment(&theorem2_setup(THEOREM2.with(opts)))?;
    let frac = report.single_terminal_tail_fraction;
    let checks = vec![Check::new(
        "generic2p: single-terminal tail fraction >= 0.99",
        frac >= 0.99,
        format!("{frac}"),
    )];
    Ok(SuiteReport::new("theorem2", checks, brief(&report)))
}

fn theorem3(opts: &VerifyOptions) -> Result<SuiteReport, VerifyError> {
    let mut checks = Vec::new();
    let mut data = serde_json::Map::new();
    for (name, mut exp) in theorem3_setups(THEOREM3.with(opts), 0.01) {
        exp.epsilon = 0.5;
        let rho = maxmin(&exp.game, PlayerId(1)).expect("player 1 exists").value;
        let report = run_experiment(&exp)?;
        let frac = report.above_maxmin_fraction[&PlayerId(1)];
        checks.push(Check::new(
            format!("{name}: tail mean > {rho} - 0.5 in >= 95% of trials"),
            frac >= 0.95,
            format!("{frac}"),
        ));
        data.insert(name, brief(&report));
    }
    Ok(SuiteReport::new("theorem3", checks, Value::Object(data)))
}

fn theorem4(opts: &VerifyOptions) -> Result<SuiteReport, VerifyError> {
    let mut exp = theorem4_setup(THEOREM4.with(opts), 0.05);
    exp.spe_tolerance = 0.03;
    exp.min_node_visits = 50;
    let report = run_experiment(&exp)?;
    let frac = report.spe.as_ref().map_or(0.0, |s| s.within_tolerance_fraction);
    let checks = vec![Check::new(
        "generic2p: tail frequencies within 0.03 of the perturbed equilibrium in >= 95% of trials",
        frac >= 0.95,
        format!("{frac}"),
    )];
    Ok(SuiteReport::new("theorem4", checks, brief(&report)))
}
