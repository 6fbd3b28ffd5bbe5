use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::experiments::ExperimentSpec;
use crate::error::{Error, Result};
use crate::game::{write_transcript, PublicLog};
use crate::metrics::{
    classify_equilibrium, window_len, window_records, Equilibrium, EquilibriumLabel, MetricsRow,
    RecordStats,
};
use crate::training::{training_iteration, Players, Workspace};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: ExperimentSpec,
    pub seed: u64,
    pub iterations: usize,
    pub label: EquilibriumLabel,
    pub matches_expected: bool,
    pub window: f64,
    /// Number of trailing iterations the label was computed from.
    pub window_iterations: usize,
    pub window_stats: RecordStats,
    pub config: RunConfig,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_owned(),
            message: format!("{other:?}"),
        },
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn at_iteration(t: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("iteration {t}: {m}")),
        other => other,
    }
}

/// Trains one seed of `spec` under `config` and writes `metrics.csv`,
/// `transcript.jsonl` and `summary.json` into `out_dir`.
pub fn run(
    spec: &ExperimentSpec,
    config: &RunConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<RunSummary> {
    run_observed(spec, config, seed, out_dir, |_| {})
}

/// [`run`] calling `observe` after every iteration.
pub fn run_observed(
    spec: &ExperimentSpec,
    config: &RunConfig,
    seed: u64,
    out_dir: &Path,
    mut observe: impl FnMut(&MetricsRow),
) -> Result<RunSummary> {
    config.validate()?;
    let game = &config.game;
    if game.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let transcript_path = out_dir.join(TRANSCRIPT_FILE);
    let mut metrics = csv::Writer::from_writer(create(&metrics_path)?);
    let mut transcript = create(&transcript_path)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut players = Players::new(game, &config.training, &mut rng)?;
    let mut log = PublicLog::new();
    let mut ws = Workspace::default();
    for t in 0..game.iterations {
        let start = log.len();
        let report = training_iteration(
            &mut players,
            game,
            &config.training,
            &mut log,
            t as u64,
            &mut ws,
            &mut rng,
        )
        .map_err(|e| at_iteration(t, e))?;
        metrics
            .serialize(&report.metrics)
            .map_err(|e| csv_error(&metrics_path, e))?;
        write_transcript(&mut transcript, &log.records()[start..])
            .map_err(|e| Error::io(&transcript_path, e))?;
        observe(&report.metrics);
    }
    metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
    transcript
        .flush()
        .map_err(|e| Error::io(&transcript_path, e))?;

    let window_stats = RecordStats::from_records(window_records(&log, config.window)?)?;
    let label = classify_equilibrium(window_stats.accuracy)?;
    let summary = RunSummary {
        experiment: spec.clone(),
        seed,
        iterations: game.iterations,
        label,
        matches_expected: label.kind == spec.expected,
        window: config.window,
        window_iterations: window_len(game.iterations, config.window)?,
        window_stats,
        config: config.clone(),
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    read_json(&dir.join(SUMMARY_FILE))
}

/// Summaries in `dir` itself or in its immediate subdirectories, ordered by
/// experiment and seed.
pub fn collect_summaries(dir: &Path) -> Result<Vec<RunSummary>> {
    if dir.join(SUMMARY_FILE).is_file() {
        return Ok(vec![read_summary(dir)?]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.join(SUMMARY_FILE).is_file() {
            out.push(read_summary(&path)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Input(format!(
            "no {SUMMARY_FILE} under {}",
            dir.display()
        )));
    }
    out.sort_by_key(|s| (s.experiment.id, s.seed));
    Ok(out)
}

/// The label held by a strict majority of `labels`, else undetermined.
pub fn majority(labels: &[Equilibrium]) -> Equilibrium {
    [
        Equilibrium::Pooling,
        Equilibrium::Separating,
        Equilibrium::Undetermined,
    ]
    .into_iter()
    .find(|k| 2 * labels.iter().filter(|l| *l == k).count() > labels.len())
    .unwrap_or(Equilibrium::Undetermined)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub label: EquilibriumLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub experiment: ExperimentSpec,
    pub runs: Vec<SeedOutcome>,
    pub verdict: Equilibrium,
    pub matches_expected: bool,
}

impl SweepSummary {
    pub fn from_runs(experiment: ExperimentSpec, runs: &[RunSummary]) -> Self {
        let runs: Vec<SeedOutcome> = runs
            .iter()
            .map(|r| SeedOutcome {
                seed: r.seed,
                label: r.label,
            })
            .collect();
        let labels: Vec<_> = runs.iter().map(|r| r.label.kind).collect();
        let verdict = majority(&labels);
        Self {
            matches_expected: verdict == experiment.expected,
            experiment,
            runs,
            verdict,
        }
    }
}

/// Directory of one seed inside a sweep.
pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed-{seed}"))
}

/// Runs every seed into `out_dir/seed-<s>` on up to `jobs` threads and
/// writes `sweep.json`. Each run owns its state, so results do not depend
/// on `jobs`.
pub fn sweep(
    spec: &ExperimentSpec,
    config: &RunConfig,
    seeds: &[u64],
    out_dir: &Path,
    jobs: usize,
) -> Result<(SweepSummary, Vec<RunSummary>)> {
    if seeds.is_empty() {
        return Err(Error::Input("sweep needs at least one seed".into()));
    }
    config.validate()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary>>>> =
        Mutex::new(seeds.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let r = run(spec, config, seed, &seed_dir(out_dir, seed));
                results
                    .lock()
                    .expect("no run panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let runs = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every seed was claimed"))
        .collect::<Result<Vec<_>>>()?;
    let summary = SweepSummary::from_runs(spec.clone(), &runs);
    write_json(&out_dir.join(SWEEP_FILE), &summary)?;
    Ok((summary, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiments::experiment;
    use Equilibrium::{Pooling, Separating, Undetermined};

    fn tiny(id: u8) -> (ExperimentSpec, RunConfig) {
        let spec = experiment(id).unwrap();
        let mut cfg = RunConfig::for_experiment(&spec);
        cfg.game.iterations = 5;
        cfg.game.batch_size = 4;
        cfg.game.blue_hidden = cfg.game.blue_hidden.min(4);
        cfg.game.red_hidden = cfg.game.red_hidden.min(4);
        cfg.game.interrogator_hidden = 4;
        (spec, cfg)
    }

    #[test]
    fn writes_all_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let (spec, cfg) = tiny(4);
        let mut seen = 0;
        let summary = run_observed(&spec, &cfg, 3, dir.path(), |_| seen += 1).unwrap();
        assert_eq!(seen, 5);
        let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(
            rows.iter().map(|r| r.iteration).collect::<Vec<_>>(),
            [0, 1, 2, 3, 4]
        );
        let header = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(
            header.lines().next().unwrap(),
            "iteration,acc,acc_blue,acc_red,r_I,r_blue,r_red,H_blue,H_red,MI"
        );
        let file = File::open(dir.path().join(TRANSCRIPT_FILE)).unwrap();
        let records = crate::game::read_transcript(BufReader::new(file)).unwrap();
        assert_eq!(records.len(), 20);
        assert_eq!(read_summary(dir.path()).unwrap(), summary);
        assert_eq!(summary.window_iterations, 1);
        assert_eq!(summary.window_stats.rounds, 4);
    }

    #[test]
    fn metrics_match_the_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let (spec, cfg) = tiny(1);
        run(&spec, &cfg, 0, dir.path()).unwrap();
        let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
        let file = File::open(dir.path().join(TRANSCRIPT_FILE)).unwrap();
        let records = crate::game::read_transcript(BufReader::new(file)).unwrap();
        for (t, row) in rows.iter().enumerate() {
            let batch = &records[t * 4..(t + 1) * 4];
            assert_eq!(*row, MetricsRow::from_records(t as u64, batch).unwrap());
        }
    }

    #[test]
    fn unwritable_directory_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let (spec, cfg) = tiny(1);
        let err = run(&spec, &cfg, 0, &blocker.join("out")).unwrap_err();
        assert!(
            matches!(&err, Error::Io { path, .. } if path.starts_with(&blocker)),
            "{err}"
        );
    }

    #[test]
    fn non_finite_errors_name_the_iteration() {
        let e = at_iteration(17, Error::NonFinite("actor score".into()));
        assert_eq!(e.to_string(), "non-finite value: iteration 17: actor score");
    }

    #[test]
    fn majority_vote() {
        assert_eq!(majority(&[Pooling, Pooling, Separating]), Pooling);
        assert_eq!(majority(&[Pooling, Separating]), Undetermined);
        assert_eq!(
            majority(&[Separating, Undetermined, Separating, Pooling, Separating]),
            Separating
        );
        assert_eq!(majority(&[]), Undetermined);
    }

    #[test]
    fn sweep_is_independent_of_thread_count() {
        let (spec, cfg) = tiny(2);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (sa, ra) = sweep(&spec, &cfg, &[1, 2, 3], a.path(), 1).unwrap();
        let (sb, rb) = sweep(&spec, &cfg, &[1, 2, 3], b.path(), 3).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(ra, rb);
        for s in [1, 2, 3] {
            let f = |d: &Path| std::fs::read(seed_dir(d, s).join(METRICS_FILE)).unwrap();
            assert_eq!(f(a.path()), f(b.path()));
        }
        let collected = collect_summaries(a.path()).unwrap();
        assert_eq!(collected, ra);
    }
}
