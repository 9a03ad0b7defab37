//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "game": "../figures/fig1.game",
//!   "suite": "theorem1",
//!   "learners": {
//!     "1": {"learner": {"strategy": "myopic", "revision": "memoryless", "initial": {"constant": 0}}},
//!     "2": {"adversarial_best_response": {"target": 1}}
//!   },
//!   "rounds": 500,
//!   "trials": 1000,
//!   "base_seed": 7
//! }
//! ```
//!
//! `game` is resolved relative to the directory holding the config file.
//! Players missing from `learners` play uniformly. Optional fields:
//! `tail_window`, `epsilon`, `delta` (default exploration for exploratory
//! learners that omit their own), `spe_tolerance`, `min_node_visits`.
//! Loading fills every default so that the echoed config is the effective
//! one and loads back to an equal value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{default_tail_window, ArenaError, Experiment, Policy, DEFAULT_EPSILON, DEFAULT_MIN_NODE_VISITS, DEFAULT_SPE_TOLERANCE};
use crate::game::{parse_game, GameError, GameTree, PlayerId};
use crate::learning::{InitialValuation, LearnerConfig, RevisionRule, StrategyRule};
use crate::solvers::{can_guarantee_win, solve_spe};
use crate::strategy::{BehavioralStrategy, PureStrategy, StrategyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Game { path: PathBuf, source: GameError },
    #[error("player {player}: {source}")]
    Strategy { player: PlayerId, source: StrategyError },
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error("{0}")]
    Invalid(String),
    #[error("{suite} suite: {reason}")]
    Suite { suite: Suite, reason: String },
}

/// Named theorem setups whose preconditions are checked at load time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Theorem1,
    Theorem2,
    Theorem3,
    Theorem4,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Theorem3 => "theorem3",
            Suite::Theorem4 => "theorem4",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Myopic,
    Exploratory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub strategy: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub revision: RevisionRule,
    #[serde(default)]
    pub initial: InitialValuation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Uniform,
    /// Node path to move probabilities.
    Stationary(BTreeMap<String, Vec<f64>>),
    /// Node path to move label, one map per round, cycled.
    Scripted(Vec<BTreeMap<String, String>>),
    AdversarialBestResponse {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<PlayerId>,
    },
    Learner(LearnerSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(default)]
    pub learners: BTreeMap<PlayerId, PolicySpec>,
    pub rounds: usize,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spe_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_node_visits: Option<u64>,
    /// Directory `game` is relative to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line style overrides applied before defaults are filled.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub rounds: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub window: Option<usize>,
}

/// Reads, fills defaults and validates a config file.
pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    load_with_overrides(path, &Overrides::default())
}

pub fn load_with_overrides(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_experiment_config(&text, &base_dir, overrides)
}

pub fn parse_experiment_config(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg: ExperimentConfig = serde_json::from_str(text)?;
    cfg.base_dir = base_dir.to_path_buf();
    cfg.apply(overrides);
    let game = cfg.load_game()?;
    cfg.fill_defaults(&game)?;
    cfg.validate(&game)?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn game_path(&self) -> PathBuf {
        self.base_dir.join(&self.game)
    }

    pub fn load_game(&self) -> Result<GameTree, ConfigError> {
        let path = self.game_path();
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        parse_game(&text).map_err(|source| ConfigError::Game { path, source })
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(t) = o.rounds {
            self.rounds = t;
            if o.window.is_none() {
                self.tail_window = None;
            }
        }
        if let Some(s) = o.seed {
            self.base_seed = s;
        }
        if let Some(e) = o.epsilon {
            self.epsilon = Some(e);
        }
        if let Some(w) = o.window {
            self.tail_window = Some(w);
        }
        if let Some(d) = o.delta {
            self.delta = Some(d);
            for spec in self.learners.values_mut() {
                if let PolicySpec::Learner(l) = spec {
                    if l.strategy == StrategyKind::Exploratory {
                        l.delta = Some(d);
                    }
                }
            }
        }
    }

    fn fill_defaults(&mut self, g: &GameTree) -> Result<(), ConfigError> {
        for p in self.learners.keys() {
            if p.0 == 0 || p.0 > g.player_count() {
                return Err(ConfigError::Invalid(format!(
                    "player {p} is not in a game with {} players",
                    g.player_count()
                )));
            }
        }
        for p in g.players() {
            self.learners.entry(p).or_insert(PolicySpec::Uniform);
        }
        let learners: Vec<PlayerId> = self
            .learners
            .iter()
            .filter(|(_, s)| matches!(s, PolicySpec::Learner(_)))
            .map(|(p, _)| *p)
            .collect();
        for (p, spec) in self.learners.iter_mut() {
            match spec {
                PolicySpec::Learner(l) if l.strategy == StrategyKind::Exploratory && l.delta.is_none() => {
                    l.delta = Some(self.delta.ok_or_else(|| {
                        ConfigError::Invalid(format!("player {p}: exploratory learner needs a delta"))
                    })?);
                }
                PolicySpec::AdversarialBestResponse { target: target @ None } => match learners.as_slice() {
                    [only] => *target = Some(*only),
                    _ => {
                        return Err(ConfigError::Invalid(format!(
                            "player {p}: adversarial target is ambiguous; set `target`"
                        )))
                    }
                },
                _ => {}
            }
        }
        self.tail_window.get_or_insert(default_tail_window(self.rounds));
        self.epsilon.get_or_insert(DEFAULT_EPSILON);
        self.spe_tolerance.get_or_insert(DEFAULT_SPE_TOLERANCE);
        self.min_node_visits.get_or_insert(DEFAULT_MIN_NODE_VISITS);
        Ok(())
    }

    fn policies(&self, g: &GameTree) -> Result<Vec<Policy>, ConfigError> {
        g.players()
            .map(|p| {
                let wrap = |source| ConfigError::Strategy { player: p, source };
                Ok(match self.learners.get(&p).unwrap_or(&PolicySpec::Uniform) {
                    PolicySpec::Uniform => Policy::Uniform,
                    PolicySpec::Stationary(map) => Policy::Stationary(BehavioralStrategy::from_labeled(g, map).map_err(wrap)?),
                    PolicySpec::Scripted(seq) => Policy::Scripted(
                        seq.iter()
                            .map(|s| PureStrategy::from_labeled(g, s))
                            .collect::<Result<_, _>>()
                            .map_err(wrap)?,
                    ),
                    PolicySpec::AdversarialBestResponse { target } => Policy::Adversarial {
                        target: target.ok_or_else(|| ConfigError::Invalid(format!("player {p}: missing adversarial target")))?,
                    },
                    PolicySpec::Learner(l) => Policy::Learner(l.to_config(p, self.delta)),
                })
            })
            .collect()
    }

    /// The runnable experiment (loads the game again).
    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        let g = self.load_game()?;
        self.resolve_with(g)
    }

    fn resolve_with(&self, g: GameTree) -> Result<Experiment, ConfigError> {
        let policies = self.policies(&g)?;
        let mut exp = Experiment::new(g, policies, self.rounds, self.trials, self.base_seed);
        if let Some(w) = self.tail_window {
            exp.tail_window = w;
        }
        exp.epsilon = self.epsilon.unwrap_or(DEFAULT_EPSILON);
        exp.spe_tolerance = self.spe_tolerance.unwrap_or(DEFAULT_SPE_TOLERANCE);
        exp.min_node_visits = self.min_node_visits.unwrap_or(DEFAULT_MIN_NODE_VISITS);
        Ok(exp)
    }

    fn validate(&self, g: &GameTree) -> Result<(), ConfigError> {
        let exp = self.resolve_with(g.clone())?;
        exp.validate()?;
        match self.suite {
            Some(suite) => check_suite(suite, &exp),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl LearnerSpec {
    pub fn to_config(&self, player: PlayerId, default_delta: Option<f64>) -> LearnerConfig {
        let strategy_rule = match self.strategy {
            StrategyKind::Myopic => StrategyRule::Myopic,
            StrategyKind::Exploratory => StrategyRule::Exploratory {
                delta: self.delta.or(default_delta).unwrap_or(0.0),
            },
        };
        LearnerConfig::new(player, strategy_rule, self.revision).with_initial(self.initial.clone())
    }
}

/// Checks that `exp` meets the hypotheses of the named theorem.
pub fn check_suite(suite: Suite, exp: &Experiment) -> Result<(), ConfigError> {
    let g = &*exp.game;
    let fail = |reason: String| Err(ConfigError::Suite { suite, reason });
    let learners: Vec<&LearnerConfig> = exp.learners().collect();
    let is = |cfg: &LearnerConfig, myopic: bool, revision: RevisionRule| {
        matches!(cfg.strategy_rule, StrategyRule::Myopic) == myopic && cfg.revision_rule == revision
    };
    let all_learn = learners.len() == g.player_count();
    match suite {
        Suite::Theorem1 => {
            let Some(cfg) = learners.iter().find(|c| is(c, true, RevisionRule::Memoryless)) else {
                return fail("needs a myopic learner with memoryless revision".into());
            };
            if cfg.initial_valuation.min_value() < 0.0 {
                return fail(format!(
                    "initial valuation of player {} must be nonnegative",
                    cfg.player
                ));
            }
            match can_guarantee_win(g, cfg.player) {
                Ok(Some(_)) => Ok(()),
                Ok(None) => fail(format!("player {} cannot guarantee a win", cfg.player)),
                Err(e) => fail(e.to_string()),
            }
        }
        Suite::Theorem2 => {
            if !all_learn || !learners.iter().all(|c| is(c, true, RevisionRule::Memoryless)) {
                return fail("every player must be a myopic learner with memoryless revision".into());
            }
            if !g.is_generic() {
                return fail("the game is not generic".into());
            }
            Ok(())
        }
        Suite::Theorem3 => {
            if !learners.iter().any(|c| is(c, false, RevisionRule::Averaging)) {
                return fail("needs an exploratory learner with averaging revision".into());
            }
            Ok(())
        }
        Suite::Theorem4 => {
            if !all_learn || !learners.iter().all(|c| is(c, false, RevisionRule::Averaging)) {
                return fail("every player must be an exploratory learner with averaging revision".into());
            }
            solve_spe(g).map(|_| ()).or_else(|e| fail(e.to_string()))
        }
    }
}
