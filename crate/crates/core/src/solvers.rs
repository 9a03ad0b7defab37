//! Backward-induction oracles.
//!
//! With perfect information the maxmin value over pure strategies equals
//! the mixed maxmin value, so everything here is a single reverse sweep
//! over the pre-order node array (children always follow their parent).
//! In [`maxmin`] the other players act as one coalition minimizing the
//! protagonist's payoff.

use serde::Serialize;
use thiserror::Error;

use crate::game::{GameTree, NodeId, PlayerId};
use crate::strategy::PureStrategy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("player {player} does not have only 0/1 payoffs")]
    NotWinLose { player: PlayerId },
    #[error("player {player} is not in this game")]
    UnknownPlayer { player: PlayerId },
    #[error("tie at {path}: player {player} is indifferent between `{first}` and `{second}`")]
    Tie {
        node: NodeId,
        path: String,
        player: PlayerId,
        first: String,
        second: String,
    },
}

/// Individually rational payoff of one player, with a strategy attaining it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxminResult {
    pub player: PlayerId,
    pub value: f64,
    /// A choice at every node of the player (reached or not).
    pub witness: PureStrategy,
}

/// The unique subgame perfect equilibrium of a game without ties.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeResult {
    /// The chosen move at every decision node.
    pub strategy: PureStrategy,
    /// Payoff vector of each node's subgame under the equilibrium.
    pub values: Vec<Vec<f64>>,
}

impl SpeResult {
    pub fn root_value(&self) -> &[f64] {
        &self.values[0]
    }
}

fn check_player(g: &GameTree, player: PlayerId) -> Result<(), SolveError> {
    if player.0 == 0 || player.0 > g.player_count() {
        return Err(SolveError::UnknownPlayer { player });
    }
    Ok(())
}

/// Value `player` can guarantee against a coalition of everyone else.
pub fn maxmin(g: &GameTree, player: PlayerId) -> Result<MaxminResult, SolveError> {
    check_player(g, player)?;
    let mut value = vec![0.0; g.len()];
    let mut witness = PureStrategy::default();
    for n in g.node_ids().rev() {
        let moves = g.moves(n);
        if moves.is_empty() {
            value[n.0] = g.payoff(n, player);
            continue;
        }
        let maximize = g.owner(n) == Some(player);
        let mut best = 0;
        for (i, m) in moves.iter().enumerate().skip(1) {
            let v = value[m.child.0];
            let cur = value[moves[best].child.0];
            if (maximize && v > cur) || (!maximize && v < cur) {
                best = i;
            }
        }
        value[n.0] = value[moves[best].child.0];
        if maximize {
            witness.choices.insert(n, best);
        }
    }
    Ok(MaxminResult {
        player,
        value: value[0],
        witness,
    })
}

/// Whether `player` can force a payoff of 1 in a win-lose game; returns
/// a winning strategy when it can.
pub fn can_guarantee_win(g: &GameTree, player: PlayerId) -> Result<Option<PureStrategy>, SolveError> {
    check_player(g, player)?;
    if !g.is_win_lose_for(player) {
        return Err(SolveError::NotWinLose { player });
    }
    let result = maxmin(g, player)?;
    Ok((result.value == 1.0).then_some(result.witness))
}

/// Backward induction where each owner strictly prefers one child.
pub fn solve_spe(g: &GameTree) -> Result<SpeResult, SolveError> {
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); g.len()];
    let mut strategy = PureStrategy::default();
    for n in g.node_ids().rev() {
        let Some(owner) = g.owner(n) else {
            values[n.0] = g.payoffs(n).to_vec();
            continue;
        };
        let moves = g.moves(n);
        let k = owner.index();
        let mut best = 0;
        for i in 1..moves.len() {
            if values[moves[i].child.0][k] > values[moves[best].child.0][k] {
                best = i;
            }
        }
        let best_value = values[moves[best].child.0][k];
        if let Some(other) = (0..moves.len()).find(|&i| i != best && values[moves[i].child.0][k] == best_value) {
            let (a, b) = (best.min(other), best.max(other));
            return Err(SolveError::Tie {
                node: n,
                path: g.path_label(n).to_string(),
                player: owner,
                first: moves[a].label.clone(),
                second: moves[b].label.clone(),
            });
        }
        values[n.0] = values[moves[best].child.0].clone();
        strategy.choices.insert(n, best);
    }
    Ok(SpeResult { strategy, values })
}
