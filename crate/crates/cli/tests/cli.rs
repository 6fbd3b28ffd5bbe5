use std::path::Path;
use std::process::{Command, Output};

fn siggame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siggame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn tiny_run(out: &Path, seed: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--experiment",
        "4",
        "--seed",
        seed,
        "--iterations",
        "3",
        "--batch",
        "4",
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    siggame(&args)
}

#[test]
fn run_writes_outputs_and_report_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_run(dir.path(), "7", &[]);
    assert!(out.status.success(), "{}", text(&out));
    for f in ["metrics.csv", "transcript.jsonl", "summary.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let transcript = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 12);
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 7"));

    let rep = siggame(&["report", "--in", dir.path().to_str().unwrap()]);
    assert!(rep.status.success(), "{}", text(&rep));
    assert!(
        text(&rep).contains("experiment 4 (Neurons A blue) seed 7"),
        "{}",
        text(&rep)
    );
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(tiny_run(a.path(), "3", &[]).status.success());
    assert!(tiny_run(b.path(), "3", &[]).status.success());
    for f in ["metrics.csv", "transcript.jsonl"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn config_file_overrides_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[game]\nbatch_size = 2\niterations = 9\nblue_hidden = 3\n[training]\ndiscriminator_target = \"label_agreement\"\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = tiny_run(&out_dir, "1", &["--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    // --iterations 3 and --batch 4 beat the file
    let transcript = std::fs::read_to_string(out_dir.join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 12);
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"blue_hidden\": 3"));
    assert!(summary.contains("label_agreement"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = siggame(&["run", "--experiment", "8", "--out", d]);
    assert!(!out.status.success());

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[game]\nno_such_key = 1\n").unwrap();
    let out = tiny_run(dir.path(), "1", &["--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(text(&out).contains("bad.toml"), "{}", text(&out));

    let out = siggame(&["report", "--in", d]);
    assert!(!out.status.success());
}

#[test]
fn sweep_runs_every_seed_and_votes() {
    let dir = tempfile::tempdir().unwrap();
    let out = siggame(&[
        "sweep",
        "--experiment",
        "1",
        "--seeds",
        "3",
        "--first-seed",
        "5",
        "--iterations",
        "2",
        "--batch",
        "3",
        "--jobs",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out));
    for s in 5..8 {
        assert!(dir.path().join(format!("seed-{s}/summary.json")).is_file());
    }
    assert!(dir.path().join("sweep.json").is_file());
    let rep = siggame(&["report", "--in", dir.path().to_str().unwrap()]);
    assert!(
        text(&rep).contains("experiment 1 (Identical): majority"),
        "{}",
        text(&rep)
    );
}

#[test]
fn gradcheck_exit_status_follows_tolerance() {
    let ok = siggame(&["gradcheck", "--seeds", "1"]);
    assert!(ok.status.success(), "{}", text(&ok));
    assert!(text(&ok).contains("gradcheck passed"));
    // no relative error is below zero
    let fail = siggame(&["gradcheck", "--seeds", "1", "--tol", "0"]);
    assert!(!fail.status.success());
    assert!(text(&fail).contains("FAILED"));
}
