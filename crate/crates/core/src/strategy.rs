//! Stage-game strategies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::game::{GameError, GameTree, NodeId, PlayerId};

/// A move index at each covered decision node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PureStrategy {
    pub choices: BTreeMap<NodeId, usize>,
}

impl PureStrategy {
    pub fn choice(&self, node: NodeId) -> Option<usize> {
        self.choices.get(&node).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// `node path -> move label`, the form used in JSON output.
    pub fn labeled(&self, g: &GameTree) -> BTreeMap<String, String> {
        self.choices
            .iter()
            .map(|(&n, &i)| (g.path_label(n).to_string(), g.moves(n)[i].label.clone()))
            .collect()
    }

    /// Inverse of [`PureStrategy::labeled`].
    pub fn from_labeled(g: &GameTree, labeled: &BTreeMap<String, String>) -> Result<Self, StrategyError> {
        let mut choices = BTreeMap::new();
        for (path, label) in labeled {
            let node = g.resolve_path(path)?;
            let index = g
                .moves(node)
                .iter()
                .position(|m| &m.label == label)
                .ok_or_else(|| StrategyError::UnknownMove {
                    node: path.clone(),
                    label: label.clone(),
                })?;
            choices.insert(node, index);
        }
        Ok(PureStrategy { choices })
    }

    /// Checks that every node of `player` is covered and nothing else is.
    pub fn validate_for(&self, g: &GameTree, player: PlayerId) -> Result<(), StrategyError> {
        for n in g.nodes_of(player) {
            if !self.choices.contains_key(&n) {
                return Err(StrategyError::Uncovered(g.path_label(n).to_string()));
            }
        }
        for &n in self.choices.keys() {
            if g.owner(n) != Some(player) {
                return Err(StrategyError::NotOwned {
                    node: g.path_label(n).to_string(),
                    player,
                });
            }
        }
        Ok(())
    }
}

/// A probability distribution over the moves at each covered node.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BehavioralStrategy {
    pub dists: BTreeMap<NodeId, Vec<f64>>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("no move `{label}` at {node}")]
    UnknownMove { node: String, label: String },
    #[error("strategy does not cover decision node {0}")]
    Uncovered(String),
    #[error("node {node} is not owned by player {player}")]
    NotOwned { node: String, player: PlayerId },
    #[error("distribution at {node} is invalid: {reason}")]
    InvalidDistribution { node: String, reason: String },
}

impl BehavioralStrategy {
    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.dists.get(&node).map(Vec::as_slice)
    }

    /// Uniform play at every node of `player`.
    pub fn uniform(g: &GameTree, player: PlayerId) -> Self {
        let dists = g
            .nodes_of(player)
            .map(|n| {
                let k = g.moves(n).len();
                (n, vec![1.0 / k as f64; k])
            })
            .collect();
        BehavioralStrategy { dists }
    }

    pub fn from_pure(g: &GameTree, pure: &PureStrategy) -> Self {
        let dists = pure
            .choices
            .iter()
            .map(|(&n, &i)| {
                let mut d = vec![0.0; g.moves(n).len()];
                d[i] = 1.0;
                (n, d)
            })
            .collect();
        BehavioralStrategy { dists }
    }

    pub fn labeled(&self, g: &GameTree) -> BTreeMap<String, Vec<f64>> {
        self.dists
            .iter()
            .map(|(&n, d)| (g.path_label(n).to_string(), d.clone()))
            .collect()
    }

    pub fn from_labeled(g: &GameTree, labeled: &BTreeMap<String, Vec<f64>>) -> Result<Self, StrategyError> {
        let mut dists = BTreeMap::new();
        for (path, d) in labeled {
            dists.insert(g.resolve_path(path)?, d.clone());
        }
        Ok(BehavioralStrategy { dists })
    }

    /// Checks coverage of `player`'s nodes and that each entry is a
    /// probability vector of the right length.
    pub fn validate_for(&self, g: &GameTree, player: PlayerId) -> Result<(), StrategyError> {
        for n in g.nodes_of(player) {
            if !self.dists.contains_key(&n) {
                return Err(StrategyError::Uncovered(g.path_label(n).to_string()));
            }
        }
        for (&n, d) in &self.dists {
            let node = g.path_label(n).to_string();
            if g.owner(n) != Some(player) {
                return Err(StrategyError::NotOwned { node, player });
            }
            check_distribution(d, g.moves(n).len()).map_err(|reason| StrategyError::InvalidDistribution { node, reason })?;
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(d: &[f64], len: usize) -> Result<(), String> {
    if d.len() != len {
        return Err(format!("expected {len} probabilities, found {}", d.len()));
    }
    if d.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("probabilities must be finite and nonnegative".into());
    }
    let total: f64 = d.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("probabilities sum to {total}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn labeled_round_trip() {
        let g = fixtures::fig1();
        let pure = PureStrategy {
            choices: [(NodeId(1), 1)].into_iter().collect(),
        };
        let labeled = pure.labeled(&g);
        assert_eq!(labeled.get("/L").map(String::as_str), Some("b"));
        assert_eq!(PureStrategy::from_labeled(&g, &labeled).unwrap(), pure);
        assert!(pure.validate_for(&g, PlayerId(2)).is_ok());
        assert!(pure.validate_for(&g, PlayerId(1)).is_err());
    }

    #[test]
    fn distribution_validation() {
        let g = fixtures::fig1();
        let mut s = BehavioralStrategy::uniform(&g, PlayerId(2));
        assert!(s.validate_for(&g, PlayerId(2)).is_ok());
        s.dists.insert(NodeId(1), vec![0.7, 0.7]);
        assert!(matches!(
            s.validate_for(&g, PlayerId(2)),
            Err(StrategyError::InvalidDistribution { .. })
        ));
    }
}
