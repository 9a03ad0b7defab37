#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use valarena::arena::{run_trial, Experiment, Policy};
use valarena::learning::{
    averaging_revise, exploratory_distribution, fill_distribution, memoryless_revise, myopic_distribution,
    AveragingState, LearnerConfig, MoveValues, RevisionRule, StrategyRule, Valuation,
};
use valarena::{GameTree, NodeId, NodeSpec, PathRecord, PlayerId};

// ---------------------------------------------------------------------------
// Brute-force oracle over pure strategy profiles.

/// A choice index for every decision node, in node order.
pub type Profile = Vec<usize>;

pub struct Enumerated {
    pub nodes: Vec<NodeId>,
    slot: Vec<Option<usize>>,
    pub profiles: Vec<Profile>,
}

impl Enumerated {
    pub fn new(g: &GameTree) -> Self {
        let nodes: Vec<NodeId> = g.decision_nodes().collect();
        let mut slot = vec![None; g.len()];
        for (i, n) in nodes.iter().enumerate() {
            slot[n.0] = Some(i);
        }
        let mut profiles = vec![Vec::new()];
        for n in &nodes {
            let k = g.moves(*n).len();
            profiles = profiles
                .into_iter()
                .flat_map(|p| {
                    (0..k).map(move |c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        Enumerated { nodes, slot, profiles }
    }

    pub fn outcome(&self, g: &GameTree, profile: &Profile, from: NodeId) -> NodeId {
        let mut n = from;
        while let Some(i) = self.slot[n.0] {
            n = g.moves(n)[profile[i]].child;
        }
        n
    }

    fn agrees_off(&self, g: &GameTree, a: &Profile, b: &Profile, player: PlayerId) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, &n)| g.owner(n) == Some(player) || a[i] == b[i])
    }

    /// Profiles that are Nash equilibria in every subgame.
    pub fn subgame_perfect(&self, g: &GameTree) -> Vec<Profile> {
        self.profiles
            .iter()
            .filter(|s| {
                self.nodes.iter().all(|&root| {
                    let base = self.outcome(g, s, root);
                    g.players().all(|j| {
                        let mine = g.payoff(base, j);
                        self.profiles
                            .iter()
                            .filter(|t| self.agrees_off(g, s, t, j))
                            .all(|t| g.payoff(self.outcome(g, t, root), j) <= mine)
                    })
                })
            })
            .cloned()
            .collect()
    }

    /// `max` over `player`'s pure strategies of `min` over everyone else's.
    pub fn maxmin(&self, g: &GameTree, player: PlayerId) -> f64 {
        let own: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| g.owner(self.nodes[i]) == Some(player))
            .collect();
        let mut by_own: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for s in &self.profiles {
            let key: Vec<usize> = own.iter().map(|&i| s[i]).collect();
            let v = g.payoff(self.outcome(g, s, g.root()), player);
            let slot = by_own.entry(key).or_insert(f64::INFINITY);
            *slot = slot.min(v);
        }
        by_own.values().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Enumerated fixture family.

#[derive(Clone, Debug)]
pub enum Shape {
    Leaf,
    Node(Vec<Shape>),
}

impl Shape {
    pub fn decisions(&self) -> usize {
        match self {
            Shape::Leaf => 0,
            Shape::Node(kids) => 1 + kids.iter().map(Shape::decisions).sum::<usize>(),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Node(kids) => kids.iter().map(Shape::leaves).sum(),
        }
    }
}

/// Every tree of at most `depth` levels with 2 or 3 moves per node and at
/// most `budget` decision nodes.
pub fn shapes(depth: usize, budget: usize) -> Vec<Shape> {
    let mut out = vec![Shape::Leaf];
    if depth == 0 || budget == 0 {
        return out;
    }
    for k in 2..=3 {
        let mut partial: Vec<(Vec<Shape>, usize)> = vec![(Vec::new(), budget - 1)];
        for _ in 0..k {
            let mut next = Vec::new();
            for (kids, left) in &partial {
                for child in shapes(depth - 1, *left) {
                    let used = child.decisions();
                    let mut kids = kids.clone();
                    kids.push(child);
                    next.push((kids, left - used));
                }
            }
            partial = next;
        }
        out.extend(partial.into_iter().map(|(kids, _)| Shape::Node(kids)));
    }
    out
}

fn build(shape: &Shape, owners: &mut impl Iterator<Item = usize>, payoffs: &mut impl Iterator<Item = Vec<f64>>) -> NodeSpec {
    match shape {
        Shape::Leaf => NodeSpec::terminal(payoffs.next().expect("enough payoff vectors")),
        Shape::Node(kids) => {
            let owner = owners.next().expect("enough owners");
            let moves: Vec<(String, NodeSpec)> = kids
                .iter()
                .enumerate()
                .map(|(i, k)| (format!("m{i}"), build(k, owners, payoffs)))
                .collect();
            NodeSpec::decision(owner, moves)
        }
    }
}

/// Builds a generic game: each player's payoffs are a random arrangement
/// of distinct integers.
pub fn generic_game(shape: &Shape, owners: &[usize], players: usize, rng: &mut ChaCha8Rng) -> GameTree {
    let leaves = shape.leaves();
    let columns: Vec<Vec<i32>> = (0..players)
        .map(|_| {
            let mut pool: Vec<i32> = (-9..=9).collect();
            pool.shuffle(rng);
            pool.truncate(leaves);
            pool
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..leaves)
        .map(|z| columns.iter().map(|c| f64::from(c[z])).collect())
        .collect();
    let spec = build(shape, &mut owners.iter().copied(), &mut rows.into_iter());
    GameTree::from_spec(&spec).expect("valid generated game")
}

/// All shapes of depth <= 3 with up to 4 decision nodes, every assignment
/// of their nodes to players 1 and 2, plus single-player versions.
pub fn generic_family(seed: u64) -> Vec<GameTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for shape in shapes(3, 4) {
        let d = shape.decisions();
        out.push(generic_game(&shape, &vec![1; d], 1, &mut rng));
        for mask in 0..(1u32 << d) {
            let owners: Vec<usize> = (0..d).map(|i| 1 + ((mask >> i) & 1) as usize).collect();
            out.push(generic_game(&shape, &owners, 2, &mut rng));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Proptest generators.

pub fn arb_node(players: usize, depth: u32, payoff: BoxedStrategy<f64>) -> BoxedStrategy<NodeSpec> {
    let leaf = proptest::collection::vec(payoff.clone(), players)
        .prop_map(NodeSpec::terminal)
        .boxed();
    if depth == 0 {
        return leaf;
    }
    let inner = (1..=players, proptest::collection::vec(arb_node(players, depth - 1, payoff), 1..=3))
        .prop_map(|(owner, kids)| {
            let moves: Vec<(String, NodeSpec)> = kids
                .into_iter()
                .enumerate()
                .map(|(i, k)| (format!("m{i}"), k))
                .collect();
            NodeSpec::decision(owner, moves)
        });
    prop_oneof![1 => leaf, 3 => inner].boxed()
}

/// Games of depth <= 3 with 1 or 2 players and small integer payoffs.
pub fn arb_game() -> impl Strategy<Value = GameTree> {
    (1usize..=2)
        .prop_flat_map(|n| arb_node(n, 3, (-5i32..=5).prop_map(f64::from).boxed()))
        .prop_map(|s| GameTree::from_spec(&s).expect("generated game is valid"))
}

/// Like [`arb_game`] with arbitrary finite payoffs.
pub fn arb_real_game() -> impl Strategy<Value = GameTree> {
    let real = prop_oneof![
        (-1e6f64..1e6),
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        (-20i32..20).prop_map(f64::from),
    ]
    .boxed();
    (1usize..=3)
        .prop_flat_map(move |n| arb_node(n, 3, real.clone()))
        .prop_map(|s| GameTree::from_spec(&s).expect("generated game is valid"))
}

/// A game where player 1 owns the root, with an integer valuation of its
/// moves (values in -3..=3, so ties are common).
pub fn arb_learner_case() -> impl Strategy<Value = (GameTree, Valuation)> {
    arb_game()
        .prop_filter("player 1 moves at the root", |g| g.owner(g.root()) == Some(PlayerId(1)))
        .prop_flat_map(|g| {
            let n = g.len();
            (Just(g), proptest::collection::vec(-3i32..=3, n))
        })
        .prop_map(|(g, xs)| {
            let v = Valuation::from_fn(&g, PlayerId(1), |m| f64::from(xs[m.0]));
            (g, v)
        })
}

/// All root-to-leaf paths.
pub fn all_paths(g: &GameTree) -> Vec<PathRecord> {
    g.terminals().map(|z| g.path_to(z)).collect()
}

// ---------------------------------------------------------------------------
// Property bodies, shared by the proptest suite and the acceptance target.

const EPS: f64 = 1e-12;

pub fn prop_normalization((g, v): (GameTree, Valuation), delta: f64) -> Result<(), TestCaseError> {
    for n in g.nodes_of(PlayerId(1)) {
        let my = myopic_distribution(&v, &g, n);
        let ex = exploratory_distribution(&v, &g, n, delta).unwrap();
        let mut fast = Vec::new();
        fill_distribution(&v, &g, n, StrategyRule::Exploratory { delta }, &mut fast);
        for d in [&my, &ex, &fast] {
            prop_assert_eq!(d.len(), g.moves(n).len());
            prop_assert!(d.iter().all(|&p| p >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= EPS, "{:?}", d);
        }
        prop_assert_eq!(&ex, &fast);
    }
    Ok(())
}

pub fn prop_shift_invariance((g, v): (GameTree, Valuation), shift: i32) -> Result<(), TestCaseError> {
    let shifted = Valuation::from_fn(&g, PlayerId(1), |m| v.value(m) + f64::from(shift));
    for n in g.nodes_of(PlayerId(1)) {
        prop_assert_eq!(myopic_distribution(&v, &g, n), myopic_distribution(&shifted, &g, n));
        prop_assert_eq!(
            exploratory_distribution(&v, &g, n, 0.1).unwrap(),
            exploratory_distribution(&shifted, &g, n, 0.1).unwrap()
        );
    }
    Ok(())
}

pub fn prop_memoryless_idempotent((g, v): (GameTree, Valuation), pick: usize, payoff: i32) -> Result<(), TestCaseError> {
    let paths = all_paths(&g);
    let path = &paths[pick % paths.len()];
    let once = memoryless_revise(&v, path, f64::from(payoff));
    let twice = memoryless_revise(&once, path, f64::from(payoff));
    prop_assert_eq!(once, twice);
    Ok(())
}

pub fn prop_averaging_permutation(
    (g, v): (GameTree, Valuation),
    events: Vec<(usize, i32)>,
    seed: u64,
) -> Result<(), TestCaseError> {
    let paths = all_paths(&g);
    let apply = |order: &[(usize, i32)]| {
        order.iter().fold(AveragingState::new(v.clone()), |s, &(i, x)| {
            averaging_revise(&s, &paths[i % paths.len()], f64::from(x))
        })
    };
    let mut shuffled = events.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let a = apply(&events);
    let b = apply(&shuffled);
    for (m, _) in v.iter() {
        prop_assert_eq!(a.count(m), b.count(m));
        prop_assert_eq!(a.current(m), b.current(m));
    }
    Ok(())
}

pub fn prop_off_path_immutable((g, v): (GameTree, Valuation), pick: usize, payoff: i32) -> Result<(), TestCaseError> {
    let paths = all_paths(&g);
    let path = &paths[pick % paths.len()];
    let x = f64::from(payoff);
    let mem = memoryless_revise(&v, path, x);
    let avg = averaging_revise(&AveragingState::new(v.clone()), path, x);
    for (m, before) in v.iter() {
        if path.moves.contains(&m) {
            prop_assert_eq!(mem.value(m), x);
            prop_assert_eq!(avg.current(m), Some(x));
        } else {
            prop_assert_eq!(mem.value(m), before);
            prop_assert_eq!(avg.current(m), Some(before));
            prop_assert_eq!(avg.count(m), 0);
        }
    }
    Ok(())
}

pub fn prop_exploration_floor((g, v): (GameTree, Valuation), delta: f64) -> Result<(), TestCaseError> {
    for n in g.nodes_of(PlayerId(1)) {
        let k = g.moves(n).len() as f64;
        let d = exploratory_distribution(&v, &g, n, delta).unwrap();
        prop_assert!(d.iter().all(|&p| p >= delta / k - 1e-15), "{:?} below {}", d, delta / k);
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrialCase {
    pub game: GameTree,
    pub policies: Vec<Policy>,
    pub rounds: usize,
    pub seed: u64,
    pub trial: u64,
}

pub fn arb_policy(player: PlayerId) -> impl Strategy<Value = Policy> {
    let rule = prop_oneof![
        Just(StrategyRule::Myopic),
        (0.0f64..=1.0).prop_map(|delta| StrategyRule::Exploratory { delta }),
    ];
    let revision = prop_oneof![Just(RevisionRule::Memoryless), Just(RevisionRule::Averaging)];
    prop_oneof![
        Just(Policy::Uniform),
        (rule, revision).prop_map(move |(r, v)| Policy::Learner(LearnerConfig::new(player, r, v))),
    ]
}

pub fn arb_trial_case() -> impl Strategy<Value = TrialCase> {
    arb_game()
        .prop_flat_map(|g| {
            let policies: Vec<_> = g.players().map(arb_policy).collect();
            (Just(g), policies, 1usize..40, any::<u64>(), 0u64..1000)
        })
        .prop_map(|(game, policies, rounds, seed, trial)| TrialCase {
            game,
            policies,
            rounds,
            seed,
            trial,
        })
}

pub fn prop_trial_determinism(case: TrialCase) -> Result<(), TestCaseError> {
    let exp = Experiment::new(case.game, case.policies, case.rounds, 1, case.seed);
    let a = run_trial(&exp, case.trial).unwrap();
    let b = run_trial(&exp, case.trial).unwrap();
    prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    prop_assert_eq!(a, b);
    Ok(())
}
