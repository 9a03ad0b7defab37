//! Valuation-based reinforcement learning in finite extensive-form games
//! with perfect information.
//!
//! A learner keeps a *valuation*, a number attached to each of its own
//! moves. A strategy rule turns the valuation into a behavioral strategy
//! for one round of the stage game; a revision rule updates the valuation
//! from the realized play. This crate provides:
//!
//! * [`game`]: the game tree, its text format and structural queries;
//! * [`solvers`]: backward-induction oracles (win guarantee, maxmin value,
//!   subgame perfect equilibrium);
//! * [`learning`]: the myopic and exploratory strategy rules and the
//!   memoryless and averaging revision rules;
//! * [`arena`]: repeated play against configurable opponents, with
//!   deterministic seeding and parallel Monte Carlo aggregation;
//! * [`chain`]: exact Markov-chain analysis of memoryless valuation
//!   dynamics on small games;
//! * [`config`]: the JSON experiment schema;
//! * [`verify`]: the bundled verification suites.

pub mod arena;
pub mod chain;
pub mod config;
pub mod fixtures;
pub mod game;
pub mod learning;
pub mod numeric;
pub mod solvers;
pub mod strategy;
pub mod verify;

pub use game::{GameError, GameTree, Move, Node, NodeId, NodeSpec, PathRecord, PlayerId};
pub use strategy::{BehavioralStrategy, PureStrategy};
