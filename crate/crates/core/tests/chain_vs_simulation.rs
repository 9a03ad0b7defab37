//! The exact chain against simulated play: one-step transition frequencies
//! and long-run occupancy must match within three standard errors.

use std::collections::BTreeMap;

use valarena::arena::{run_trial, Experiment, Policy};
use valarena::chain::{build_transition_matrix, stationary_distribution, ChainSetup, TransitionMatrix, ValuationState};
use valarena::fixtures;
use valarena::learning::{InitialValuation, LearnerConfig, RevisionRule, StrategyRule};
use valarena::{GameTree, PlayerId};

fn memoryless(player: usize, rule: StrategyRule) -> LearnerConfig {
    LearnerConfig::new(PlayerId(player), rule, RevisionRule::Memoryless)
}

/// State index visited before each round of every trial.
fn replay(exp: &Experiment, m: &TransitionMatrix<f64>) -> Vec<Vec<usize>> {
    let g = &*exp.game;
    (0..exp.trials as u64)
        .map(|i| {
            let record = run_trial(exp, i).unwrap();
            let mut states: Vec<_> = exp.learners().map(|c| c.init(g).unwrap()).collect();
            let mut seq = Vec::with_capacity(record.rounds + 1);
            let index = |states: &[valarena::learning::LearnerState]| {
                let label = ValuationState {
                    valuations: states.iter().map(|s| s.current_valuation()).collect(),
                }
                .label(g);
                m.index_of(&label).unwrap_or_else(|| panic!("simulated state {label} is not in the chain"))
            };
            seq.push(index(&states));
            for &z in &record.terminals {
                let path = g.path_to(z);
                for s in &mut states {
                    let p = s.player();
                    s.revise(&path, g.payoff(z, p));
                }
                seq.push(index(&states));
            }
            seq
        })
        .collect()
}

fn check_transitions(m: &TransitionMatrix<f64>, runs: &[Vec<usize>], min_visits: u64) -> usize {
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut visits = vec![0u64; m.len()];
    for seq in runs {
        for w in seq.windows(2) {
            *counts.entry((w[0], w[1])).or_default() += 1;
            visits[w[0]] += 1;
        }
    }
    let mut checked = 0;
    for &(u, w) in counts.keys() {
        assert!(m.entry(u, w) > 0.0, "impossible transition {} -> {}", m.labels[u], m.labels[w]);
    }
    for (u, &n) in visits.iter().enumerate() {
        if n < min_visits {
            continue;
        }
        for w in 0..m.len() {
            let p = m.entry(u, w);
            let freq = *counts.get(&(u, w)).unwrap_or(&0) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * se + 1e-12,
                "{} -> {}: frequency {freq} vs {p} (n = {n})",
                m.labels[u],
                m.labels[w]
            );
            checked += 1;
        }
    }
    checked
}

/// Occupancy of one long run against the stationary distribution, with the
/// standard error estimated from 100 batch means.
fn check_occupancy(m: &TransitionMatrix<f64>, seq: &[usize]) {
    let pi = stationary_distribution(m).unwrap();
    let batches = 100;
    let size = seq.len() / batches;
    for (s, &target) in pi.iter().enumerate() {
        let means: Vec<f64> = seq
            .chunks_exact(size)
            .map(|b| b.iter().filter(|&&x| x == s).count() as f64 / size as f64)
            .collect();
        let mean = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!(
            (mean - target).abs() <= 3.0 * se + 1e-9,
            "state {}: occupancy {mean} vs stationary {target} (se {se})",
            m.labels[s]
        );
    }
}

fn experiment(g: GameTree, policies: Vec<Policy>, rounds: usize, trials: usize, seed: u64) -> (Experiment, TransitionMatrix<f64>) {
    let m = build_transition_matrix(&ChainSetup::<f64>::from_policies(&g, &policies, None).unwrap()).unwrap();
    (Experiment::new(g, policies, rounds, trials, seed), m)
}

#[test]
fn figure_one_against_uniform() {
    let (exp, m) = experiment(
        fixtures::fig1(),
        vec![Policy::Learner(memoryless(1, StrategyRule::Myopic)), Policy::Uniform],
        10,
        10_000,
        1,
    );
    assert_eq!(m.len(), 3);
    assert!(check_transitions(&m, &replay(&exp, &m), 100) >= 6);
}

#[test]
fn figure_one_with_exploration() {
    let (exp, m) = experiment(
        fixtures::fig1(),
        vec![
            Policy::Learner(memoryless(1, StrategyRule::Exploratory { delta: 0.3 })),
            Policy::Uniform,
        ],
        100_000,
        1,
        2,
    );
    let runs = replay(&exp, &m);
    check_transitions(&m, &runs, 100);
    check_occupancy(&m, &runs[0][1..]);
}

#[test]
fn figure_two_ergodic_chain() {
    let g = fixtures::fig2();
    let init: BTreeMap<String, f64> = [("/L", 10.0), ("/R", 2.0), ("/L/a", 10.0), ("/L/b", -10.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let learner = memoryless(1, StrategyRule::Exploratory { delta: 0.2 }).with_initial(InitialValuation::Explicit(init));
    let (exp, m) = experiment(g, vec![Policy::Learner(learner)], 100_000, 1, 3);
    assert_eq!(m.len(), 2);
    let runs = replay(&exp, &m);
    check_transitions(&m, &runs, 100);
    check_occupancy(&m, &runs[0][1..]);
}

#[test]
fn win_lose_fixtures_against_uniform() {
    for (g, seed) in [(fixtures::winlose3a(), 4), (fixtures::winlose3b(), 5)] {
        let mut policies = vec![Policy::Learner(memoryless(1, StrategyRule::Myopic))];
        policies.extend(g.players().skip(1).map(|_| Policy::Uniform));
        let (exp, m) = experiment(g, policies, 10, 10_000, seed);
        assert!(check_transitions(&m, &replay(&exp, &m), 100) > 0);
    }
}

#[test]
fn two_learners_in_the_generic_game() {
    let g = fixtures::generic2p();
    let policies = vec![
        Policy::Learner(memoryless(1, StrategyRule::Exploratory { delta: 0.2 })),
        Policy::Learner(memoryless(2, StrategyRule::Exploratory { delta: 0.2 })),
    ];
    let (exp, m) = experiment(g, policies, 100, 1_000, 6);
    assert!(check_transitions(&m, &replay(&exp, &m), 100) > 0);
}
