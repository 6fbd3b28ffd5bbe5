//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if a gated criterion fails.
//!
//! Set `ACCEPTANCE_SKIP_TABLE=1` to skip the long experiment-table runs and
//! `ACCEPTANCE_DEBUG=1` to print every critic comparison.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siggame_core::agents::{
    ActorModel, AgentType, Alphabet, InterrogatorModel, Message, QFunction,
};
use siggame_core::game::{
    assign_rewards, play_round, play_round_judged, read_transcript, GameConfig, InteractionRecord,
    Judge, PublicLog, Rewards,
};
use siggame_core::harness::{
    self, builtin_experiments, gradcheck, read_metrics, ExperimentSpec, RunConfig, RunSummary,
    METRICS_FILE, TRANSCRIPT_FILE,
};
use siggame_core::metrics::{Equilibrium, POOLING_THRESHOLD, SEPARATING_THRESHOLD};
use siggame_core::nn::{AdamConfig, AdamState, Module, Tape};
use siggame_core::training::{train_actor, train_from_data, Players, TrainingConfig};
use siggame_core::Result;

// pinned tolerances
const GRAD_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
const GRAD_SEEDS: u64 = 10;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const CRITIC_TOL: f64 = 0.05;
const CRITIC_ITERATIONS: usize = 500;
const CRITIC_MIN_MASS: f64 = 0.02;
const CRITIC_LR: f64 = 1e-2;
const BIAS_STEPS: usize = 100;
const CRITIC_BUDGET: Duration = Duration::from_secs(300);
const ACTOR_TARGET: f64 = 0.9;
const ACTOR_STEPS: usize = 300;
const ACTOR_BUDGET: Duration = Duration::from_secs(60);
const TABLE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TABLE_ITERATIONS: usize = 2000;
const TABLE_BATCH: usize = 64;
const RUN_BUDGET: Duration = Duration::from_secs(15 * 60);
const IDENTICAL_BAND: (f64, f64) = (0.35, 0.65);
const FUZZ_ROUNDS: usize = 10_000;
const SLOT_TOL: f64 = 0.02;

type Check = Box<dyn Fn() -> Result<Outcome>>;

/// Enumerated `(mass, conditional target probability)` per `(prefix, next)`.
type Oracle = BTreeMap<(Vec<usize>, usize), (f64, f64)>;

struct Outcome {
    /// `None` when the check was skipped.
    pass: Option<bool>,
    gated: bool,
    detail: String,
}

fn gated(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass: Some(pass),
        gated: true,
        detail,
    }
}

fn main() {
    let skip_table = std::env::var_os("ACCEPTANCE_SKIP_TABLE").is_some_and(|v| v != "0");
    let criteria: Vec<(&str, Check)> = vec![
        ("1 gradient correctness", Box::new(gradient_correctness)),
        ("2 critic oracle equivalence", Box::new(critic_oracle)),
        (
            "3 controlled actor convergence",
            Box::new(actor_convergence),
        ),
        (
            "4 experiment table reproduction",
            Box::new(move || table_reproduction(skip_table)),
        ),
        ("5 determinism", Box::new(determinism)),
        ("6 reward table", Box::new(reward_table)),
        (
            "7 protocol invariants under fuzzing",
            Box::new(protocol_fuzz),
        ),
    ];
    let mut failed_gate = false;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| gated(false, format!("error: {e}")));
        let status = match (outcome.pass, outcome.gated) {
            (None, _) => "SKIP",
            (Some(true), _) => "PASS",
            (Some(false), true) => "FAIL",
            (Some(false), false) => "FAIL (reported, not gated)",
        };
        failed_gate |= outcome.gated && outcome.pass == Some(false);
        println!(
            "criterion {name}: {status} | {} | {:.1}s",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed_gate {
        std::process::exit(1);
    }
}

// -- 1 ----------------------------------------------------------------------

fn gradient_correctness() -> Result<Outcome> {
    let start = Instant::now();
    let reports = harness::gradcheck_suite(GRAD_SEEDS, GRAD_EPS)?;
    let elapsed = start.elapsed();
    let worst = reports
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("non-empty suite");
    let all = reports.iter().all(|r| r.passes(GRAD_TOL));
    assert_eq!(gradcheck::TOLERANCE, GRAD_TOL);
    Ok(gated(
        all && elapsed < GRAD_BUDGET,
        format!(
            "{} cases x {GRAD_SEEDS} seeds, eps {GRAD_EPS:e}; worst {} at {:.2e} (tol {GRAD_TOL:e})",
            reports.len(),
            worst.name,
            worst.max_rel_error
        ),
    ))
}

// -- 2 ----------------------------------------------------------------------

/// Labels an answer blue iff it contains symbol 0.
struct ContainsZero;

impl Judge for ContainsZero {
    fn p_blue(&self, _: &mut Tape, exchange: &[usize]) -> Result<f64> {
        Ok(if exchange.contains(&0) { 1.0 } else { 0.0 })
    }
}

fn label_of(body: &[usize]) -> AgentType {
    if body.contains(&0) {
        AgentType::Blue
    } else {
        AgentType::Red
    }
}

/// Exact `(mass, P(target | prefix, next))` for every `(prefix, next)`
/// reachable when each source answers the EOS question with probability
/// one half.
fn enumerate(
    alphabet: Alphabet,
    actors: [(&ActorModel, AgentType, usize); 2],
    target: impl Fn(AgentType, AgentType) -> bool,
) -> Result<Oracle> {
    let eos = alphabet.eos().index();
    let question = Message::eos_only(alphabet);
    let mut out: BTreeMap<(Vec<usize>, usize), (f64, f64)> = BTreeMap::new();
    for (actor, source, limit) in actors {
        let mut bodies: Vec<Vec<usize>> = vec![vec![]];
        for len in 1..=limit {
            let mut next = Vec::new();
            for b in bodies.iter().filter(|b| b.len() == len - 1) {
                for s in 0..alphabet.size() {
                    let mut c = b.clone();
                    c.push(s);
                    next.push(c);
                }
            }
            bodies.extend(next);
        }
        let mut total = 0.0;
        for body in bodies {
            let p = actor.answer_probability(
                &question,
                &Message::from_body(alphabet, &body)?,
                limit,
            )?;
            total += p;
            let y = f64::from(u8::from(target(source, label_of(&body))));
            let mut seq = vec![eos];
            seq.extend(&body);
            seq.push(eos);
            for k in 0..seq.len() {
                let e = out.entry((seq[..k].to_vec(), seq[k])).or_default();
                e.0 += 0.5 * p;
                e.1 += 0.5 * p * y;
            }
        }
        assert!(
            (total - 1.0).abs() < 1e-9,
            "answer probabilities sum to {total}"
        );
    }
    Ok(out
        .into_iter()
        .map(|(k, (mass, hit))| (k, (mass, hit / mass)))
        .collect())
}

fn max_gap(critic: &dyn QFunction, oracle: &Oracle) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let mut tape = Tape::new();
    for ((prefix, next), &(mass, p)) in oracle {
        if mass < CRITIC_MIN_MASS {
            continue;
        }
        let q = critic
            .q_along(&mut tape, prefix)?
            .pop()
            .expect("empty prefix included")[*next];
        if std::env::var_os("ACCEPTANCE_DEBUG").is_some() {
            eprintln!("{prefix:?} {next}: mass {mass:.3} oracle {p:.3} q {q:.3}");
        }
        worst = worst.max((q - p).abs());
        compared += 1;
    }
    Ok((worst, compared))
}

fn critic_oracle() -> Result<Outcome> {
    let start = Instant::now();
    let game = GameConfig {
        alphabet_size: 2,
        question_limit: 0,
        blue_limit: 2,
        red_limit: 2,
        batch_size: 64,
        ..GameConfig::default()
    };
    let alphabet = game.alphabet()?;
    // Adam moves each weight by about lr per step and the empty-prefix q
    // depends on a bias alone, so 500 steps at 1e-3 cannot leave (0.38, 0.62)
    let mut training = TrainingConfig::default();
    training.adam.learning_rate = CRITIC_LR;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut players = Players::new(&game, &training, &mut rng)?;
    bias_actor(&mut players.blue.actor, 0, BIAS_STEPS, &mut rng)?;
    bias_actor(&mut players.red.actor, 1, BIAS_STEPS, &mut rng)?;
    let frozen = (players.blue.actor.checksum(), players.red.actor.checksum());
    let actors = [
        (&players.blue.actor, AgentType::Blue, game.blue_limit),
        (&players.red.actor, AgentType::Red, game.red_limit),
    ];
    let correct = enumerate(alphabet, actors, |truth, label| truth == label)?;
    let blue = enumerate(alphabet, actors, |_, label| label == AgentType::Blue)?;
    let (untrained, _) = max_gap(&players.interrogator.model.critic, &correct)?;
    let mut tape = Tape::new();
    let mut losses = Vec::with_capacity(CRITIC_ITERATIONS);
    for t in 0..CRITIC_ITERATIONS {
        let batch: Vec<InteractionRecord> = (0..game.batch_size)
            .map(|r| {
                play_round_judged(
                    &players.interrogator.model,
                    &ContainsZero,
                    &players.blue.actor,
                    &players.red.actor,
                    &game,
                    (t as u64, r as u32),
                    &mut tape,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        losses
            .push(train_from_data(&batch, &mut players, &training, &mut tape)?.interrogator_critic);
    }
    assert_eq!(
        frozen,
        (players.blue.actor.checksum(), players.red.actor.checksum())
    );
    let (gap_i, n_i) = max_gap(&players.interrogator.model.critic, &correct)?;
    let (gap_b, n_b) = max_gap(&players.blue.critic, &blue)?;
    let (gap_r, _) = max_gap(&players.red.critic, &blue)?;

    // loss trend: medians of consecutive 10-iteration windows
    let medians: Vec<f64> = losses
        .chunks(10)
        .map(|w| {
            let mut w = w.to_vec();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        })
        .collect();
    let slope = trend_slope(&medians);
    let trend_ok = slope <= 0.0 && medians[medians.len() - 1] <= medians[0];

    let worst = gap_i.max(gap_b).max(gap_r);
    Ok(gated(
        worst < CRITIC_TOL && trend_ok && start.elapsed() < CRITIC_BUDGET,
        format!(
            "{CRITIC_ITERATIONS} iterations at lr {CRITIC_LR:e}; max |q - enumerated| interrogator {untrained:.3} -> {gap_i:.4} ({n_i} pairs), \
             blue {gap_b:.4} ({n_b} pairs), red {gap_r:.4} (tol {CRITIC_TOL}); \
             loss window medians {:.2} -> {:.2}, slope {slope:.2e}",
            medians[0],
            medians[medians.len() - 1]
        ),
    ))
}

fn trend_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

// -- 3 ----------------------------------------------------------------------

/// q = 1 for one symbol and 0 for everything else, at every prefix.
struct RewardsSymbol {
    symbol: usize,
    total: usize,
}

impl QFunction for RewardsSymbol {
    fn q_along(&self, _: &mut Tape, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
        let mut q = vec![0.0; self.total];
        q[self.symbol] = 1.0;
        Ok(vec![q; seq.len() + 1])
    }
}

/// Pushes an actor towards `symbol` so the two sources answer differently.
fn bias_actor(
    actor: &mut ActorModel,
    symbol: usize,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let alphabet = actor.alphabet();
    let critic = RewardsSymbol {
        symbol,
        total: alphabet.total(),
    };
    let mut opt = AdamState::new(AdamConfig::default(), &actor.tensors());
    let triggers = vec![Message::eos_only(alphabet); 16];
    let (mut tape, mut critic_tape) = (Tape::new(), Tape::new());
    for _ in 0..steps {
        train_actor(
            actor,
            &mut opt,
            &critic,
            &triggers,
            2,
            (&mut tape, &mut critic_tape),
            rng,
        )?;
    }
    Ok(())
}

fn actor_convergence() -> Result<Outcome> {
    let start = Instant::now();
    let alphabet = Alphabet::new(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut actor = ActorModel::new(alphabet, 8, &mut rng)?;
    let mut opt = AdamState::new(AdamConfig::default(), &actor.tensors());
    let critic = RewardsSymbol {
        symbol: 0,
        total: alphabet.total(),
    };
    let trigger = Message::eos_only(alphabet);
    let triggers = vec![trigger.clone(); 16];
    let (mut tape, mut critic_tape) = (Tape::new(), Tape::new());
    let first_step = |actor: &ActorModel, rng: &mut ChaCha8Rng| -> Result<f64> {
        let (_, dists) = actor.respond(&trigger, 4, rng)?;
        Ok(dists[0].probs[0])
    };
    let mut trace = vec![first_step(&actor, &mut rng)?];
    let mut reached = None;
    for step in 1..=ACTOR_STEPS {
        train_actor(
            &mut actor,
            &mut opt,
            &critic,
            &triggers,
            4,
            (&mut tape, &mut critic_tape),
            &mut rng,
        )?;
        let p = first_step(&actor, &mut rng)?;
        trace.push(p);
        if p > ACTOR_TARGET && reached.is_none() {
            reached = Some(step);
        }
    }
    let increases = trace.windows(2).filter(|w| w[1] >= w[0]).count();
    let monotone_share = increases as f64 / (trace.len() - 1) as f64;
    let at = |k: usize| trace[k.min(trace.len() - 1)];
    Ok(gated(
        reached.is_some() && trend_slope(&trace) > 0.0 && start.elapsed() < ACTOR_BUDGET,
        format!(
            "pi(0) {:.3} -> {:.3} (step 50) -> {:.3} (step {ACTOR_STEPS}); first > {ACTOR_TARGET} at step {}; \
             {:.0}% of steps non-decreasing",
            at(0),
            at(50),
            at(ACTOR_STEPS),
            reached.map_or("never".to_string(), |s| s.to_string()),
            100.0 * monotone_share
        ),
    ))
}

// -- 4 ----------------------------------------------------------------------

struct TableRun {
    summary: RunSummary,
    elapsed: Duration,
    blue_entropy_start: f64,
}

fn table_reproduction(skip: bool) -> Result<Outcome> {
    if skip {
        return Ok(Outcome {
            pass: None,
            gated: false,
            detail: "skipped (ACCEPTANCE_SKIP_TABLE set)".into(),
        });
    }
    let specs = builtin_experiments();
    let jobs: Vec<(ExperimentSpec, u64)> = specs
        .iter()
        .flat_map(|s| TABLE_SEEDS.iter().map(move |&seed| (s.clone(), seed)))
        .collect();
    let root = tempfile::tempdir().map_err(|e| siggame_core::Error::Io {
        path: std::env::temp_dir(),
        source: e,
    })?;
    let results = run_pool(&jobs, root.path());
    let mut runs: BTreeMap<u8, Vec<TableRun>> = BTreeMap::new();
    for r in results {
        let r = r?;
        runs.entry(r.summary.experiment.id).or_default().push(r);
    }

    let mut lines = Vec::new();
    let mut reproduced = 0;
    let mut slowest = Duration::ZERO;
    for spec in &specs {
        let group = &runs[&spec.id];
        slowest = slowest.max(group.iter().map(|r| r.elapsed).max().unwrap_or_default());
        let accs: Vec<f64> = group.iter().map(|r| r.summary.label.accuracy).collect();
        let hits = accs
            .iter()
            .filter(|&&a| match (spec.id, spec.expected) {
                (1, _) => (IDENTICAL_BAND.0..=IDENTICAL_BAND.1).contains(&a),
                (_, Equilibrium::Separating) => a >= SEPARATING_THRESHOLD,
                _ => a <= POOLING_THRESHOLD,
            })
            .count();
        let ok = 2 * hits > accs.len();
        reproduced += usize::from(ok);
        let accs_text: Vec<String> = accs.iter().map(|a| format!("{a:.3}")).collect();
        let mut line = format!(
            "exp {} {} expected {}: {}/{} seeds [{}] {}",
            spec.id,
            spec.name,
            spec.expected,
            hits,
            accs.len(),
            accs_text.join(" "),
            if ok { "ok" } else { "MISS" }
        );
        if spec.id == 4 {
            let h_start: f64 =
                group.iter().map(|r| r.blue_entropy_start).sum::<f64>() / group.len() as f64;
            let h_end: f64 = group
                .iter()
                .map(|r| r.summary.window_stats.entropy_blue)
                .sum::<f64>()
                / group.len() as f64;
            let h_red: f64 = group
                .iter()
                .map(|r| r.summary.window_stats.entropy_red)
                .sum::<f64>()
                / group.len() as f64;
            let acc_red: f64 = group
                .iter()
                .map(|r| r.summary.window_stats.accuracy_red)
                .sum::<f64>()
                / group.len() as f64;
            line.push_str(&format!(
                " (mechanism, not gated: H_blue {h_start:.2} -> {h_end:.2} bits, window H_red {h_red:.2}, \
                 window acc_red {acc_red:.2})"
            ));
        }
        lines.push(line);
    }
    for l in &lines {
        println!("    {l}");
    }
    let budget_ok = slowest <= RUN_BUDGET;
    // reported without affecting the exit status; see the README
    Ok(Outcome {
        pass: Some(reproduced == specs.len() && budget_ok),
        gated: false,
        detail: format!(
            "T={TABLE_ITERATIONS} N={TABLE_BATCH} seeds {TABLE_SEEDS:?}, majority per experiment; \
             {reproduced} of {} experiments reproduced; slowest run {:.0}s",
            specs.len(),
            slowest.as_secs_f64()
        ),
    })
}

fn run_pool(jobs: &[(ExperimentSpec, u64)], root: &Path) -> Vec<Result<TableRun>> {
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TableRun>>>> =
        Mutex::new(jobs.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((spec, seed)) = jobs.get(i) else {
                    break;
                };
                let r = table_run(spec, *seed, root);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
}

fn table_run(spec: &ExperimentSpec, seed: u64, root: &Path) -> Result<TableRun> {
    let mut cfg = RunConfig::for_experiment(spec);
    cfg.game.iterations = TABLE_ITERATIONS;
    cfg.game.batch_size = TABLE_BATCH;
    let dir = root.join(format!("exp{}-seed{seed}", spec.id));
    let start = Instant::now();
    let summary = harness::run(spec, &cfg, seed, &dir)?;
    let elapsed = start.elapsed();
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    let head = rows.len().div_ceil(5);
    let blue_entropy_start = rows[..head].iter().map(|r| r.entropy_blue).sum::<f64>() / head as f64;
    // transcripts are large; only the summary and metrics are needed
    let _ = std::fs::remove_file(dir.join(TRANSCRIPT_FILE));
    Ok(TableRun {
        summary,
        elapsed,
        blue_entropy_start,
    })
}

// -- 5 ----------------------------------------------------------------------

fn determinism() -> Result<Outcome> {
    let root = tempfile::tempdir().expect("temp dir");
    let mut checked = Vec::new();
    for (id, seed) in [(2u8, 11u64), (4, 12)] {
        let spec = harness::experiment(id)?;
        let mut cfg = RunConfig::for_experiment(&spec);
        cfg.game.iterations = 100;
        let a = root.path().join(format!("{id}a"));
        let b = root.path().join(format!("{id}b"));
        harness::run(&spec, &cfg, seed, &a)?;
        harness::run(&spec, &cfg, seed, &b)?;
        for f in [METRICS_FILE, TRANSCRIPT_FILE] {
            let x = std::fs::read(a.join(f)).expect("written");
            let y = std::fs::read(b.join(f)).expect("written");
            checked.push((format!("exp {id} {f}"), x == y, x.len()));
        }
    }
    let all = checked.iter().all(|c| c.1);
    let detail: Vec<String> = checked
        .iter()
        .map(|(n, same, len)| {
            format!(
                "{n} {} ({len} bytes)",
                if *same { "identical" } else { "DIFFERS" }
            )
        })
        .collect();
    Ok(gated(
        all,
        format!("two runs each, T=100 N=64: {}", detail.join(", ")),
    ))
}

// -- 6 ----------------------------------------------------------------------

fn reward_table() -> Result<Outcome> {
    use AgentType::{Blue, Red};
    // (truth, inferred) -> (r_I, r_blue, r_red), written out by hand
    let table = [
        ([Blue, Red], [Blue, Red], (1, 1, 0)),
        ([Blue, Red], [Blue, Blue], (0, 1, 1)),
        ([Blue, Red], [Red, Red], (0, 0, 0)),
        ([Blue, Red], [Red, Blue], (0, 0, 1)),
        ([Red, Blue], [Red, Blue], (1, 1, 0)),
        ([Red, Blue], [Blue, Blue], (0, 1, 1)),
        ([Red, Blue], [Red, Red], (0, 0, 0)),
        ([Red, Blue], [Blue, Red], (0, 0, 1)),
    ];
    let mut wrong = Vec::new();
    for (truth, inferred, (i, b, r)) in table {
        let want = Rewards {
            interrogator: i,
            blue: b,
            red: r,
        };
        let got = assign_rewards(truth, inferred);
        if got != want {
            wrong.push(format!("{truth:?}/{inferred:?}: {got:?}"));
        }
    }
    Ok(gated(
        wrong.is_empty(),
        format!(
            "4 labelings x 2 slot orders enumerated; mismatches: {}",
            wrong.len()
        ),
    ))
}

// -- 7 ----------------------------------------------------------------------

fn protocol_fuzz() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut log = PublicLog::new();
    let mut tape = Tape::new();
    let mut violations = Vec::new();
    let mut blue_first = 0usize;
    let mut played = 0usize;
    let mut iteration = 0u64;
    let mut snapshot: Vec<InteractionRecord> = Vec::new();
    while played < FUZZ_ROUNDS {
        let game = GameConfig {
            alphabet_size: rng.gen_range(1..=6),
            question_limit: rng.gen_range(0..=5),
            blue_limit: rng.gen_range(0..=6),
            red_limit: rng.gen_range(0..=6),
            interrogator_hidden: rng.gen_range(1..=8),
            blue_hidden: rng.gen_range(1..=8),
            red_hidden: rng.gen_range(1..=8),
            ..GameConfig::default()
        };
        let alphabet = game.alphabet()?;
        let eos = alphabet.eos().index();
        let interrogator = InterrogatorModel::new(alphabet, game.interrogator_hidden, &mut rng)?;
        let blue = ActorModel::new(alphabet, game.blue_hidden, &mut rng)?;
        let red = ActorModel::new(alphabet, game.red_hidden, &mut rng)?;
        let rounds = 250.min(FUZZ_ROUNDS - played);
        for round in 0..rounds {
            let rec = play_round(
                &interrogator,
                &blue,
                &red,
                &game,
                (iteration, round as u32),
                &mut tape,
                &mut rng,
            )?;
            let mut check = |what: &str, m: &Message, limit: usize| {
                let s: Vec<usize> = m.indices().collect();
                let eos_count = s.iter().filter(|&&x| x == eos).count();
                if s.last() != Some(&eos) || eos_count != 1 {
                    violations.push(format!("{what} not EOS-terminated: {s:?}"));
                }
                if s.len() - 1 > limit || s.iter().any(|&x| x > eos) {
                    violations.push(format!("{what} exceeds limit {limit}: {s:?}"));
                }
            };
            check("question", &rec.question, game.question_limit);
            for slot in 0..2 {
                check(
                    "answer",
                    &rec.answers[slot],
                    game.answer_limit(rec.sources[slot]),
                );
            }
            if rec.sources[0] == rec.sources[1] {
                violations.push("both slots hold the same agent".into());
            }
            blue_first += usize::from(rec.sources[0] == AgentType::Blue);
            log.publish(rec)?;
            played += 1;
        }
        // republishing an earlier position must be refused
        let stale = log.records()[log.len() - 1].clone();
        if log.publish(stale).is_ok() {
            violations.push("log accepted an out-of-order record".into());
        }
        if log.records()[..snapshot.len()] != snapshot[..] {
            violations.push("earlier log entries changed".into());
        }
        snapshot = log.records().to_vec();
        iteration += 1;
    }

    let mut buf = Vec::new();
    siggame_core::game::write_transcript(&mut buf, log.records()).expect("in-memory write");
    if read_transcript(&buf[..])? != log.records() {
        violations.push("transcript round trip differs".into());
    }
    let share = blue_first as f64 / played as f64;
    if (share - 0.5).abs() > SLOT_TOL {
        violations.push(format!("blue-first share {share:.4}"));
    }
    Ok(gated(
        violations.is_empty() && log.len() == FUZZ_ROUNDS,
        format!(
            "{played} rounds over {iteration} random configurations; blue in slot 0 {:.2}% (tol +/-{:.0}%); \
             violations {}{}",
            100.0 * share,
            100.0 * SLOT_TOL,
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    ))
}
