//! Bundled fixture games (the `.game` files under `figures/`).

use crate::game::{parse_game, GameTree};

pub const FIG1: &str = include_str!("../../../figures/fig1.game");
pub const FIG2: &str = include_str!("../../../figures/fig2.game");
pub const WINLOSE3A: &str = include_str!("../../../figures/winlose3a.game");
pub const WINLOSE3B: &str = include_str!("../../../figures/winlose3b.game");
pub const GENERIC2P: &str = include_str!("../../../figures/generic2p.game");
pub const MAXMIN3: &str = include_str!("../../../figures/maxmin3.game");
pub const MAXMIN3_TRAP: &str = include_str!("../../../figures/maxmin3_trap.game");

/// Every bundled fixture by its file stem.
pub const ALL: &[(&str, &str)] = &[
    ("fig1", FIG1),
    ("fig2", FIG2),
    ("winlose3a", WINLOSE3A),
    ("winlose3b", WINLOSE3B),
    ("generic2p", GENERIC2P),
    ("maxmin3", MAXMIN3),
    ("maxmin3_trap", MAXMIN3_TRAP),
];

fn load(text: &str) -> GameTree {
    parse_game(text).expect("bundled fixture parses")
}

/// Two payoffs: player 1 wins at L-a and R.
pub fn fig1() -> GameTree {
    load(FIG1)
}

/// More than two payoffs: single player, 10 / -10 / 2.
pub fn fig2() -> GameTree {
    load(FIG2)
}

pub fn winlose3a() -> GameTree {
    load(WINLOSE3A)
}

pub fn winlose3b() -> GameTree {
    load(WINLOSE3B)
}

pub fn generic2p() -> GameTree {
    load(GENERIC2P)
}

pub fn maxmin3() -> GameTree {
    load(MAXMIN3)
}

/// Like [`maxmin3`], but slow to learn from a zero valuation.
pub fn maxmin3_trap() -> GameTree {
    load(MAXMIN3_TRAP)
}

pub fn by_name(name: &str) -> Option<GameTree> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, text)| load(text))
}
