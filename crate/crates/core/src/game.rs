//! Finite perfect-information game trees.
//!
//! Nodes are stored in a flat vector in pre-order, so the root is always
//! node 0 and every child has a larger id than its parent. Players are
//! numbered from 1; payoff vectors are indexed by `player - 1`.
//!
//! # Text format
//!
//! ```text
//! game     := node
//! node     := terminal | decision
//! terminal := "(" "payoffs" REAL+ ")"
//! decision := "(" "player" INT move+ ")"
//! move     := "(" "move" LABEL node ")"
//! ```
//!
//! `;` starts a comment running to the end of the line.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense pre-order index of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One-based player number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub usize);

impl PlayerId {
    /// Position of this player's entry in a payoff vector.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Move {
    pub label: String,
    pub child: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Terminal { payoffs: Vec<f64> },
    Decision { player: PlayerId, moves: Vec<Move> },
}

/// Recursive, unvalidated description of a game, used to build a
/// [`GameTree`].
#[derive(Clone, Debug, PartialEq)]
pub enum NodeSpec {
    Terminal(Vec<f64>),
    Decision { player: usize, moves: Vec<(String, NodeSpec)> },
}

impl NodeSpec {
    pub fn terminal(payoffs: impl Into<Vec<f64>>) -> Self {
        NodeSpec::Terminal(payoffs.into())
    }

    pub fn decision<L: Into<String>>(player: usize, moves: impl IntoIterator<Item = (L, NodeSpec)>) -> Self {
        NodeSpec::Decision {
            player,
            moves: moves.into_iter().map(|(l, n)| (l.into(), n)).collect(),
        }
    }
}

/// The realized root-to-leaf path of one round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    /// Nodes entered by each move, from a child of the root down to the terminal.
    pub moves: Vec<NodeId>,
    pub terminal: NodeId,
}

impl PathRecord {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("terminal at {path} has {found} payoffs, expected {expected}")]
    PayoffArity {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate move label `{label}` at {path}")]
    DuplicateLabel { path: String, label: String },
    #[error("decision node at {path} has no moves")]
    EmptyDecision { path: String },
    #[error("player {player} at {path} is outside 1..={player_count}")]
    PlayerOutOfRange {
        path: String,
        player: usize,
        player_count: usize,
    },
    #[error("terminal at {path} has no payoffs")]
    NoPayoffs { path: String },
    #[error("non-finite payoff at {path}")]
    NonFinitePayoff { path: String },
    #[error("invalid move label `{label}` at {path}")]
    InvalidLabel { path: String, label: String },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown node path `{0}`")]
    UnknownPath(String),
}

/// An immutable, validated game tree.
#[derive(Clone, Debug)]
pub struct GameTree {
    nodes: Vec<Node>,
    player_count: usize,
    parents: Vec<Option<NodeId>>,
    depths: Vec<usize>,
    child_index: Vec<usize>,
    paths: Vec<String>,
}

impl PartialEq for GameTree {
    fn eq(&self, other: &Self) -> bool {
        self.player_count == other.player_count && self.nodes == other.nodes
    }
}

impl GameTree {
    /// Validates `spec` and lays it out in pre-order.
    pub fn from_spec(spec: &NodeSpec) -> Result<Self, GameError> {
        let mut builder = Builder::default();
        builder.visit(spec, None, 0, 0, String::from("/"))?;
        let player_count = builder.player_count.expect("a tree has at least one terminal");
        for (node, path) in builder.nodes.iter().zip(&builder.paths) {
            if let Node::Decision { player, .. } = node {
                if player.0 == 0 || player.0 > player_count {
                    return Err(GameError::PlayerOutOfRange {
                        path: path.clone(),
                        player: player.0,
                        player_count,
                    });
                }
            }
        }
        Ok(GameTree {
            nodes: builder.nodes,
            player_count,
            parents: builder.parents,
            depths: builder.depths,
            child_index: builder.child_index,
            paths: builder.paths,
        })
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn player_count(&self) -> usize {
        self.player_count
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> {
        (1..=self.player_count).map(PlayerId)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    pub fn node_ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents[id.0]
    }

    /// Position of `id` among its parent's moves; 0 for the root.
    pub fn child_index(&self, id: NodeId) -> usize {
        self.child_index[id.0]
    }

    /// Number of arcs from the root to `id`.
    pub fn node_depth(&self, id: NodeId) -> usize {
        self.depths[id.0]
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0], Node::Terminal { .. })
    }

    /// The player to move at `id`, or `None` at a terminal.
    pub fn owner(&self, id: NodeId) -> Option<PlayerId> {
        match &self.nodes[id.0] {
            Node::Decision { player, .. } => Some(*player),
            Node::Terminal { .. } => None,
        }
    }

    /// Moves available at `id` (empty at a terminal).
    pub fn moves(&self, id: NodeId) -> &[Move] {
        match &self.nodes[id.0] {
            Node::Decision { moves, .. } => moves,
            Node::Terminal { .. } => &[],
        }
    }

    pub fn payoffs(&self, id: NodeId) -> &[f64] {
        match &self.nodes[id.0] {
            Node::Terminal { payoffs } => payoffs,
            Node::Decision { .. } => &[],
        }
    }

    pub fn payoff(&self, terminal: NodeId, player: PlayerId) -> f64 {
        self.payoffs(terminal)[player.index()]
    }

    pub fn terminals(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&n| self.is_terminal(n))
    }

    pub fn decision_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&n| !self.is_terminal(n))
    }

    /// Decision nodes owned by `player` (N_i).
    pub fn nodes_of(&self, player: PlayerId) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(move |&n| self.owner(n) == Some(player))
    }

    /// Every move of `player`, identified by the node it leads to (M_i).
    pub fn moves_of(&self, player: PlayerId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes_of(player).flat_map(move |n| self.moves(n).iter().map(|m| m.child))
    }

    /// Whether `id` is a move of `player`, i.e. its parent belongs to them.
    pub fn is_move_of(&self, id: NodeId, player: PlayerId) -> bool {
        self.parent(id).and_then(|p| self.owner(p)) == Some(player)
    }

    /// Largest number of moves at any decision node (0 for depth 0).
    pub fn max_branching(&self) -> usize {
        self.decision_nodes().map(|n| self.moves(n).len()).max().unwrap_or(0)
    }

    /// Slash-separated move labels from the root, e.g. `/L/a`; the root is `/`.
    pub fn path_label(&self, id: NodeId) -> &str {
        &self.paths[id.0]
    }

    pub fn find_path(&self, label: &str) -> Option<NodeId> {
        self.paths.iter().position(|p| p == label).map(NodeId)
    }

    /// Resolves a path label, reporting unknown labels as errors.
    pub fn resolve_path(&self, label: &str) -> Result<NodeId, GameError> {
        self.find_path(label)
            .ok_or_else(|| GameError::UnknownPath(label.to_string()))
    }

    /// The unique path from the root to `terminal`.
    pub fn path_to(&self, terminal: NodeId) -> PathRecord {
        let mut moves = Vec::with_capacity(self.depths[terminal.0]);
        let mut cur = terminal;
        while let Some(parent) = self.parents[cur.0] {
            moves.push(cur);
            cur = parent;
        }
        moves.reverse();
        PathRecord { moves, terminal }
    }

    /// Length of the longest root-to-terminal path.
    pub fn depth(&self) -> usize {
        self.terminals().map(|z| self.depths[z.0]).max().unwrap_or(0)
    }

    /// Every player's payoffs at distinct terminals are pairwise distinct.
    pub fn is_generic(&self) -> bool {
        self.players().all(|p| {
            let mut seen = HashSet::new();
            self.terminals().all(|z| seen.insert(self.payoff(z, p).to_bits()))
        })
    }

    /// Every terminal pays `player` exactly 0 or 1.
    pub fn is_win_lose_for(&self, player: PlayerId) -> bool {
        player.0 >= 1
            && player.0 <= self.player_count
            && self.terminals().all(|z| {
                let x = self.payoff(z, player);
                x == 0.0 || x == 1.0
            })
    }

    /// The subgame rooted at `id`, renumbered from 0.
    pub fn subgame(&self, id: NodeId) -> Result<GameTree, GameError> {
        if id.0 >= self.nodes.len() {
            return Err(GameError::UnknownNode(id));
        }
        let sub = GameTree::from_spec(&self.to_spec(id))?;
        debug_assert_eq!(sub.player_count, self.player_count);
        Ok(sub)
    }

    /// Rebuilds the recursive description of the subtree at `id`.
    pub fn to_spec(&self, id: NodeId) -> NodeSpec {
        match &self.nodes[id.0] {
            Node::Terminal { payoffs } => NodeSpec::Terminal(payoffs.clone()),
            Node::Decision { player, moves } => NodeSpec::Decision {
                player: player.0,
                moves: moves
                    .iter()
                    .map(|m| (m.label.clone(), self.to_spec(m.child)))
                    .collect(),
            },
        }
    }

    /// Canonical text: lowercase keywords, single spaces, shortest
    /// round-trip decimal for each payoff.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write_node(NodeId::ROOT, &mut out);
        out
    }

    fn write_node(&self, id: NodeId, out: &mut String) {
        use std::fmt::Write;
        match &self.nodes[id.0] {
            Node::Terminal { payoffs } => {
                out.push_str("(payoffs");
                for x in payoffs {
                    let _ = write!(out, " {}", format_real(*x));
                }
                out.push(')');
            }
            Node::Decision { player, moves } => {
                let _ = write!(out, "(player {}", player.0);
                for m in moves {
                    let _ = write!(out, " (move {} ", m.label);
                    self.write_node(m.child, out);
                    out.push(')');
                }
                out.push(')');
            }
        }
    }
}

impl fmt::Display for GameTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl std::str::FromStr for GameTree {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_game(s)
    }
}

/// Formats a payoff so that it parses back to the same float.
pub fn format_real(x: f64) -> String {
    // Display for f64 is the shortest string that round-trips and never
    // uses exponent notation.
    format!("{}", x + 0.0)
}

#[derive(Default)]
struct Builder {
    nodes: Vec<Node>,
    parents: Vec<Option<NodeId>>,
    depths: Vec<usize>,
    child_index: Vec<usize>,
    paths: Vec<String>,
    player_count: Option<usize>,
}

impl Builder {
    fn visit(
        &mut self,
        spec: &NodeSpec,
        parent: Option<NodeId>,
        depth: usize,
        index: usize,
        path: String,
    ) -> Result<NodeId, GameError> {
        let id = NodeId(self.nodes.len());
        self.parents.push(parent);
        self.depths.push(depth);
        self.child_index.push(index);
        self.paths.push(path.clone());
        match spec {
            NodeSpec::Terminal(payoffs) => {
                if payoffs.is_empty() {
                    return Err(GameError::NoPayoffs { path });
                }
                if payoffs.iter().any(|x| !x.is_finite()) {
                    return Err(GameError::NonFinitePayoff { path });
                }
                match self.player_count {
                    None => self.player_count = Some(payoffs.len()),
                    Some(expected) if expected != payoffs.len() => {
                        return Err(GameError::PayoffArity {
                            path,
                            expected,
                            found: payoffs.len(),
                        })
                    }
                    Some(_) => {}
                }
                // Normalize -0.0 so that bit comparisons agree with ==.
                let payoffs = payoffs.iter().map(|x| x + 0.0).collect();
                self.nodes.push(Node::Terminal { payoffs });
            }
            NodeSpec::Decision { player, moves } => {
                if moves.is_empty() {
                    return Err(GameError::EmptyDecision { path });
                }
                self.nodes.push(Node::Decision {
                    player: PlayerId(*player),
                    moves: Vec::new(),
                });
                let mut seen = HashSet::new();
                let mut built = Vec::with_capacity(moves.len());
                for (i, (label, child)) in moves.iter().enumerate() {
                    if !is_valid_label(label) {
                        return Err(GameError::InvalidLabel {
                            path,
                            label: label.clone(),
                        });
                    }
                    if !seen.insert(label.as_str()) {
                        return Err(GameError::DuplicateLabel {
                            path,
                            label: label.clone(),
                        });
                    }
                    let child_path = if path == "/" {
                        format!("/{label}")
                    } else {
                        format!("{path}/{label}")
                    };
                    let child_id = self.visit(child, Some(id), depth + 1, i, child_path)?;
                    built.push(Move {
                        label: label.clone(),
                        child: child_id,
                    });
                }
                if let Node::Decision { moves, .. } = &mut self.nodes[id.0] {
                    *moves = built;
                }
            }
        }
        Ok(id)
    }
}

fn is_valid_label(label: &str) -> bool {
    !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
    Eof,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, offset: usize, message: impl Into<String>) -> GameError {
        let before = &self.src[..offset.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        GameError::Syntax {
            offset,
            line,
            column,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            match bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                b';' => {
                    while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    /// Returns the next token and its starting offset.
    fn next(&mut self) -> (Tok<'a>, usize) {
        self.skip_trivia();
        let start = self.pos;
        let rest = &self.src[start..];
        match rest.chars().next() {
            None => (Tok::Eof, start),
            Some('(') => {
                self.pos += 1;
                (Tok::Open, start)
            }
            Some(')') => {
                self.pos += 1;
                (Tok::Close, start)
            }
            Some(_) => {
                let len = rest
                    .find(|c: char| c.is_whitespace() || c == '(' || c == ')' || c == ';')
                    .unwrap_or(rest.len());
                self.pos += len;
                (Tok::Atom(&rest[..len]), start)
            }
        }
    }

    fn peek(&mut self) -> (Tok<'a>, usize) {
        let saved = self.pos;
        let tok = self.next();
        self.pos = saved;
        tok
    }

    fn expect_open(&mut self, what: &str) -> Result<(), GameError> {
        match self.next() {
            (Tok::Open, _) => Ok(()),
            (tok, at) => Err(self.error(at, format!("expected `(` to start {what}, found {}", describe(&tok)))),
        }
    }

    fn expect_close(&mut self, what: &str) -> Result<(), GameError> {
        match self.next() {
            (Tok::Close, _) => Ok(()),
            (tok, at) => Err(self.error(at, format!("expected `)` to close {what}, found {}", describe(&tok)))),
        }
    }

    fn node(&mut self) -> Result<NodeSpec, GameError> {
        self.expect_open("a node")?;
        match self.next() {
            (Tok::Atom("payoffs"), _) => {
                let mut payoffs = Vec::new();
                loop {
                    match self.next() {
                        (Tok::Close, at) => {
                            if payoffs.is_empty() {
                                return Err(self.error(at, "expected at least one payoff"));
                            }
                            return Ok(NodeSpec::Terminal(payoffs));
                        }
                        (Tok::Atom(text), at) => match parse_real(text) {
                            Some(x) => payoffs.push(x),
                            None => return Err(self.error(at, format!("invalid payoff `{text}`"))),
                        },
                        (tok, at) => {
                            return Err(self.error(at, format!("expected a payoff, found {}", describe(&tok))))
                        }
                    }
                }
            }
            (Tok::Atom("player"), _) => {
                let player = match self.next() {
                    (Tok::Atom(text), at) => match parse_player(text) {
                        Some(p) => p,
                        None => return Err(self.error(at, format!("invalid player number `{text}`"))),
                    },
                    (tok, at) => {
                        return Err(self.error(at, format!("expected a player number, found {}", describe(&tok))))
                    }
                };
                let mut moves = Vec::new();
                loop {
                    match self.peek() {
                        (Tok::Close, _) => {
                            self.next();
                            return Ok(NodeSpec::Decision { player, moves });
                        }
                        (Tok::Open, _) => {
                            self.next();
                            match self.next() {
                                (Tok::Atom("move"), _) => {}
                                (tok, at) => {
                                    return Err(self.error(at, format!("expected `move`, found {}", describe(&tok))))
                                }
                            }
                            let label = match self.next() {
                                (Tok::Atom(text), at) => {
                                    if !is_valid_label(text) {
                                        return Err(self.error(at, format!("invalid move label `{text}`")));
                                    }
                                    text.to_string()
                                }
                                (tok, at) => {
                                    return Err(self.error(at, format!("expected a move label, found {}", describe(&tok))))
                                }
                            };
                            let child = self.node()?;
                            self.expect_close("a move")?;
                            moves.push((label, child));
                        }
                        (tok, at) => {
                            return Err(self.error(at, format!("expected a move or `)`, found {}", describe(&tok))))
                        }
                    }
                }
            }
            (tok, at) => Err(self.error(at, format!("expected `payoffs` or `player`, found {}", describe(&tok)))),
        }
    }
}

fn describe(tok: &Tok<'_>) -> String {
    match tok {
        Tok::Open => "`(`".into(),
        Tok::Close => "`)`".into(),
        Tok::Atom(a) => format!("`{a}`"),
        Tok::Eof => "end of input".into(),
    }
}

fn parse_real(text: &str) -> Option<f64> {
    let body = text.strip_prefix(['-', '+']).unwrap_or(text);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits_ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    if (int_part.is_empty() && frac_part.is_empty()) || !digits_ok(int_part) || !digits_ok(frac_part) {
        return None;
    }
    if let Some(exp) = exponent {
        let exp = exp.strip_prefix(['-', '+']).unwrap_or(exp);
        if exp.is_empty() || !digits_ok(exp) {
            return None;
        }
    }
    text.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_player(text: &str) -> Option<usize> {
    if !text.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    text.parse::<usize>().ok().filter(|&p| p >= 1)
}

/// Parses and validates a game in the text format.
pub fn parse_game(text: &str) -> Result<GameTree, GameError> {
    let mut parser = Parser { src: text, pos: 0 };
    let spec = parser.node()?;
    match parser.next() {
        (Tok::Eof, _) => {}
        (tok, at) => return Err(parser.error(at, format!("unexpected {} after the game", describe(&tok)))),
    }
    GameTree::from_spec(&spec)
}

/// Canonical text of `g`.
pub fn serialize_game(g: &GameTree) -> String {
    g.serialize()
}
