use std::collections::BTreeMap;
use std::fmt::Display;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num::BigRational;
use serde_json::{json, Value};

use valarena::arena::{run_experiment, run_trials, ArenaError};
use valarena::chain::{
    absorption_probabilities, build_transition_matrix, mean_payoff, stationary_distribution, stationary_residual,
    ChainError, ChainLearner, ChainRule, ChainSetup, DEFAULT_MAX_STATES,
};
use valarena::config::{load_with_overrides, ConfigError, Overrides};
use valarena::game::parse_game;
use valarena::learning::Valuation;
use valarena::numeric::{parse_rational, Scalar};
use valarena::solvers::{can_guarantee_win, maxmin, solve_spe, SolveError};
use valarena::verify::{run_suite, VerifyError, VerifyOptions};
use valarena::{GameTree, PlayerId};

#[derive(Parser, Debug)]
#[command(name = "valarena", version, about = "Valuation learning in perfect-information games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Backward-induction oracles: maxmin value, win guarantee, subgame perfect equilibrium.
    Solve {
        game: PathBuf,
        #[arg(long)]
        player: Option<usize>,
        #[arg(long)]
        maxmin: bool,
        #[arg(long)]
        spe: bool,
        #[arg(long)]
        win: bool,
    },
    /// Run a repeated-game experiment from a JSON config.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Include final learner snapshots for every trial.
        #[arg(long)]
        dump_state: bool,
        #[arg(long)]
        timestamps: bool,
    },
    /// Exact Markov-chain analysis of memoryless learners against uniform opponents.
    Chain {
        game: PathBuf,
        /// Learning player; repeat for several.
        #[arg(long = "learner", default_value = "1")]
        learners: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Strategy::Myopic)]
        strategy: Strategy,
        /// Exploration weight, e.g. `1/10` or `0.1`.
        #[arg(long)]
        delta: Option<String>,
        /// Initial value of one move, `PATH=VALUE`; repeatable.
        #[arg(long = "initial")]
        initial: Vec<String>,
        /// Initial value of every move not set with `--initial`.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        initial_constant: f64,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_states: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a bundled verification suite (`all` for every suite).
    Verify {
        suite: String,
        /// Per-node deviation probability for example2-chain, e.g. `1/10`.
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Myopic,
    Exploratory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Numeric,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn invalid(e: impl Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        invalid(e)
    }
}

impl From<ArenaError> for Failure {
    fn from(e: ArenaError) -> Self {
        invalid(e)
    }
}

impl From<ChainError> for Failure {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::TooManyStates(_) | ChainError::Singular => runtime(e),
            _ => invalid(e),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::UnknownSuite(_) | VerifyError::BadDelta => invalid(e),
            VerifyError::Chain(c) => c.into(),
            VerifyError::Arena(a) => a.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve {
            game,
            player,
            maxmin,
            spe,
            win,
        } => solve(&game, player, maxmin, spe, win),
        Command::Simulate {
            config,
            trials,
            rounds,
            seed,
            delta,
            epsilon,
            window,
            jobs,
            out,
            format,
            dump_state,
            timestamps,
        } => {
            let seed = match seed {
                Some(s) => Some(s),
                None => env_seed()?,
            };
            let overrides = Overrides {
                trials,
                rounds,
                seed,
                delta,
                epsilon,
                window,
            };
            with_jobs(jobs, || simulate(&config, &overrides, out.as_deref(), format, dump_state, timestamps))
        }
        Command::Chain {
            game,
            learners,
            strategy,
            delta,
            initial,
            initial_constant,
            mode,
            max_states,
            out,
            format,
        } => {
            let g = load_game(&game)?;
            let delta = match (strategy, delta) {
                (Strategy::Myopic, None) => None,
                (Strategy::Myopic, Some(_)) => return Err(invalid("--delta needs --strategy exploratory")),
                (Strategy::Exploratory, None) => return Err(invalid("--strategy exploratory needs --delta")),
                (Strategy::Exploratory, Some(d)) => Some(parse_delta(&d)?),
            };
            let request = ChainRequest {
                game: &g,
                learners: &learners,
                delta,
                initial: parse_initial(&initial)?,
                initial_constant,
                max_states,
            };
            let text = match mode {
                Mode::Exact => chain::<BigRational>(&request, format, true)?,
                Mode::Numeric => chain::<f64>(&request, format, false)?,
            };
            emit(&text, out.as_deref())
        }
        Command::Verify {
            suite,
            delta,
            trials,
            rounds,
            window,
            seed,
            jobs,
        } => {
            let opts = VerifyOptions {
                delta: delta.as_deref().map(parse_delta).transpose()?,
                trials,
                rounds,
                window,
                seed: match seed {
                    Some(s) => s,
                    None => env_seed()?.unwrap_or(0),
                },
            };
            with_jobs(jobs, || verify(&suite, &opts))
        }
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("VALARENA_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("VALARENA_SEED must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> Result<T, Failure> + Send) -> Result<T, Failure>
where
    T: Send,
{
    match jobs {
        None => f(),
        Some(0) => Err(invalid("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(runtime)?
            .install(f),
    }
}

fn load_game(path: &Path) -> Result<GameTree, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_game(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn parse_delta(text: &str) -> Result<BigRational, Failure> {
    parse_rational(text).ok_or_else(|| invalid(format!("`{text}` is not a number or fraction")))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn solve(path: &Path, player: Option<usize>, want_maxmin: bool, want_spe: bool, want_win: bool) -> Result<(), Failure> {
    let g = load_game(path)?;
    let all = !(want_maxmin || want_spe || want_win);
    let players: Vec<PlayerId> = match player {
        Some(p) if p == 0 || p > g.player_count() => {
            return Err(invalid(format!("player {p} is not in a game with {} players", g.player_count())))
        }
        Some(p) => vec![PlayerId(p)],
        None => g.players().collect(),
    };
    let single = players.len() == 1;
    let mut out = serde_json::Map::new();
    out.insert("game".into(), json!(path.display().to_string()));
    out.insert("players".into(), json!(g.player_count()));
    let mut per_player = serde_json::Map::new();
    for &p in &players {
        let mut entry = serde_json::Map::new();
        if all || want_maxmin {
            let r = maxmin(&g, p).map_err(invalid)?;
            entry.insert("maxmin".into(), json!(r.value));
            entry.insert("witness".into(), json!(r.witness.labeled(&g)));
        }
        if all || want_win {
            match can_guarantee_win(&g, p) {
                Ok(w) => {
                    entry.insert("can_guarantee_win".into(), json!(w.is_some()));
                    if let Some(w) = w {
                        entry.insert("winning_strategy".into(), json!(w.labeled(&g)));
                    }
                }
                Err(SolveError::NotWinLose { .. }) if all => {}
                Err(e) => return Err(invalid(e)),
            }
        }
        per_player.insert(p.to_string(), Value::Object(entry));
    }
    if single {
        let p = players[0].to_string();
        out.insert("player".into(), json!(players[0]));
        if let Some(Value::Object(entry)) = per_player.remove(&p) {
            out.extend(entry);
        }
    } else {
        out.insert("by_player".into(), Value::Object(per_player));
    }
    if all || want_spe {
        match solve_spe(&g) {
            Ok(spe) => {
                out.insert(
                    "spe".into(),
                    json!({ "strategy": spe.strategy.labeled(&g), "value": spe.root_value() }),
                );
            }
            Err(e) if all => {
                out.insert("spe".into(), json!({ "error": e.to_string() }));
            }
            Err(e) => return Err(runtime(e)),
        }
    }
    emit(&pretty(&Value::Object(out)), None)
}

fn simulate(
    path: &Path,
    overrides: &Overrides,
    out: Option<&Path>,
    format: Format,
    dump_state: bool,
    timestamps: bool,
) -> Result<(), Failure> {
    let cfg = load_with_overrides(path, overrides)?;
    let exp = cfg.resolve()?;
    let text = match format {
        Format::Csv => {
            let records = run_trials(&exp)?;
            let g = &*exp.game;
            let mut csv = String::from("trial,round,terminal_label");
            for p in g.players() {
                let _ = write!(csv, ",payoff_p{p}");
            }
            csv.push('\n');
            for r in &records {
                for (t, z) in r.terminals.iter().enumerate() {
                    let _ = write!(csv, "{},{},{}", r.trial_index, t + 1, g.path_label(*z));
                    for p in g.players() {
                        let _ = write!(csv, ",{}", r.payoff(t, p));
                    }
                    csv.push('\n');
                }
            }
            csv
        }
        Format::Json => {
            let mut report = run_experiment(&exp)?;
            if !dump_state {
                for s in &mut report.per_trial {
                    s.final_states.clear();
                }
            }
            let config: Value = serde_json::from_str(&cfg.to_json()).expect("config echo is json");
            let mut v = json!({ "config": config, "report": report });
            if timestamps {
                let secs = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                v["generated_at_unix"] = json!(secs);
            }
            pretty(&v)
        }
    };
    emit(&text, out)
}

struct ChainRequest<'a> {
    game: &'a GameTree,
    learners: &'a [usize],
    delta: Option<BigRational>,
    initial: BTreeMap<String, f64>,
    initial_constant: f64,
    max_states: usize,
}

fn parse_initial(items: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    items
        .iter()
        .map(|item| {
            let (path, value) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("--initial expects PATH=VALUE, got `{item}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| invalid(format!("bad initial value in `{item}`")))?;
            Ok((path.trim().to_string(), value))
        })
        .collect()
}

trait ExactDelta: Scalar + Display {
    fn from_delta(d: &BigRational) -> Self;
}

impl ExactDelta for BigRational {
    fn from_delta(d: &BigRational) -> Self {
        d.clone()
    }
}

impl ExactDelta for f64 {
    fn from_delta(d: &BigRational) -> Self {
        d.to_f64()
    }
}

fn chain<S: ExactDelta>(req: &ChainRequest<'_>, format: Format, exact: bool) -> Result<String, Failure> {
    let g = req.game;
    let mut learners = Vec::new();
    for &p in req.learners {
        if p == 0 || p > g.player_count() {
            return Err(invalid(format!("player {p} is not in a game with {} players", g.player_count())));
        }
        let player = PlayerId(p);
        let mut v = Valuation::constant(g, player, req.initial_constant);
        if !req.initial_constant.is_finite() {
            return Err(invalid("--initial-constant must be finite"));
        }
        for (path, &x) in &req.initial {
            let node = g.resolve_path(path).map_err(invalid)?;
            if g.is_move_of(node, player) {
                v.set(node, x);
            }
        }
        let rule = match &req.delta {
            None => ChainRule::Myopic,
            Some(d) => ChainRule::Exploratory(S::from_delta(d)),
        };
        learners.push(ChainLearner { rule, initial: v });
    }
    for path in req.initial.keys() {
        let node = g.resolve_path(path).map_err(invalid)?;
        if !req.learners.iter().any(|&p| g.is_move_of(node, PlayerId(p))) {
            return Err(invalid(format!("{path} is not a move of a learner")));
        }
    }
    let setup = ChainSetup::<S>::new(g, learners, BTreeMap::new())?.with_max_states(req.max_states);
    let m = build_transition_matrix(&setup)?;
    if format == Format::Csv {
        return Ok(m.to_csv());
    }
    let absorption = match absorption_probabilities(&m, 0) {
        Ok(probs) => json!({
            "from": m.labels[0],
            "probabilities": probs
                .iter()
                .map(|(&i, p)| (m.labels[i].clone(), json!(p.to_f64())))
                .collect::<serde_json::Map<_, _>>(),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let stationary = match stationary_distribution(&m) {
        Ok(pi) => json!({
            "distribution": pi.iter().map(Scalar::to_f64).collect::<Vec<_>>(),
            "exact": exact.then(|| pi.iter().map(|p| p.to_string()).collect::<Vec<_>>()),
            "residual": stationary_residual(&m, &pi),
            "mean_payoff": g.players().map(|p| mean_payoff(&m, &pi, p).to_f64()).collect::<Vec<_>>(),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let v = json!({
        "mode": if exact { "exact" } else { "numeric" },
        "learners": req.learners,
        "delta": req.delta.as_ref().map(|d| d.to_string()),
        "states": m.labels,
        "matrix": m.export(exact),
        "absorption": absorption,
        "stationary": stationary,
    });
    Ok(pretty(&v))
}

fn verify(suite: &str, opts: &VerifyOptions) -> Result<(), Failure> {
    let reports = run_suite(suite, opts)?;
    for r in &reports {
        for c in &r.checks {
            eprintln!("{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, r.suite, c.name, c.detail);
        }
    }
    emit(&pretty(&json!(reports)), None)?;
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(runtime("verification failed"))
    }
}
