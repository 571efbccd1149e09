//! End-to-end tests of the command-line binary: each subcommand runs
//! against real artifact directories and its files are inspected.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use trace_oracle::io::{read_trace_file, write_trace_file};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trace-oracle"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("stdout is UTF-8")
}

fn run_err(args: &[&str]) -> String {
    let out: Output = bin().args(args).output().expect("binary runs");
    assert!(
        !out.status.success(),
        "expected failure for {args:?}\nstdout: {}",
        String::from_utf8_lossy(&out.stdout),
    );
    String::from_utf8(out.stderr).expect("stderr is UTF-8")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("temp paths are UTF-8")
}

/// Echo file with path-valued lines dropped, for comparing runs that only
/// differ in where they write.
fn echo_without_paths(dir: &Path) -> String {
    fs::read_to_string(dir.join("config.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("out=") && !l.starts_with("traces="))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Generates a small labelled corpus and returns the trace file path.
fn gen_corpus(dir: &Path, subject: &str, inputs: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("gen-{subject}-{seed}"));
    run_ok(&[
        "gen",
        "--subject",
        subject,
        "--inputs",
        inputs,
        "--seed",
        seed,
        "--out",
        path_str(&out),
    ]);
    out.join("traces.jsonl")
}

/// Fast training flags shared by the pipeline tests.
const QUICK: &[&str] = &["--fraction", "0.2", "--epochs", "2", "--batch", "8", "--seed", "3"];

#[test]
fn gen_writes_corpus_manifest_and_echo_deterministically() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let stdout = run_ok(&[
            "gen",
            "--subject",
            "fsm-proto",
            "--inputs",
            "30",
            "--seed",
            "7",
            "--out",
            path_str(out),
        ]);
        assert!(stdout.contains("30 pass"), "class counts printed: {stdout}");
        assert!(stdout.contains("30 fail"), "class counts printed: {stdout}");
    }

    for name in ["traces.jsonl", "manifest.csv"] {
        let fa = fs::read(a.join(name)).unwrap();
        let fb = fs::read(b.join(name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between identical runs");
        assert!(!fa.is_empty(), "{name} is empty");
    }
    assert_eq!(echo_without_paths(&a), echo_without_paths(&b), "resolved settings differ");

    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert!(manifest.starts_with("trace_id,input_id,mutation_id,label\n"));

    let echo = fs::read_to_string(a.join("config.txt")).unwrap();
    for needle in ["command=gen", "subject=fsm-proto", "inputs=30", "seed=7", "budget=600", "ops=all"]
    {
        assert!(echo.contains(needle), "echo missing {needle}: {echo}");
    }
}

#[test]
fn gen_rejects_unknown_subject() {
    let tmp = TempDir::new().unwrap();
    let stderr = run_err(&["gen", "--subject", "nope", "--out", path_str(tmp.path())]);
    assert!(stderr.contains("unknown subject"), "stderr: {stderr}");
}

#[test]
fn gen_reports_when_no_failures_fit_the_budget() {
    let tmp = TempDir::new().unwrap();
    let stderr = run_err(&[
        "gen",
        "--subject",
        "fsm-proto",
        "--inputs",
        "5",
        "--budget",
        "0",
        "--out",
        path_str(tmp.path()),
    ]);
    assert!(stderr.contains("fsm-proto"), "error names the subject: {stderr}");
    assert!(stderr.to_lowercase().contains("fail"), "error explains the shortfall: {stderr}");
}

#[test]
fn train_writes_checkpoint_loss_log_and_report_reproducibly() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "40", "11");
    let out1 = tmp.path().join("t1");
    let out2 = tmp.path().join("t2");
    for out in [&out1, &out2] {
        let mut args = vec!["train", "--traces", path_str(&traces), "--out", path_str(out)];
        args.extend_from_slice(QUICK);
        run_ok(&args);
    }

    let report = fs::read_to_string(out1.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("tp,fp,tn,fn,precision,recall,specificity,f1,epochs,seed"));
    let row = lines.next().expect("one data row");
    assert_eq!(row.split(',').count(), 10);

    let loss = fs::read_to_string(out1.join("loss.csv")).unwrap();
    assert!(loss.starts_with("epoch,loss\n"));
    assert_eq!(loss.lines().count(), 3, "two epochs of loss: {loss}");

    let checkpoint = fs::read_to_string(out1.join("checkpoint.json")).unwrap();
    assert!(checkpoint.starts_with('{'), "checkpoint is a JSON object");

    for name in ["report.csv", "loss.csv", "checkpoint.json"] {
        assert_eq!(
            fs::read(out1.join(name)).unwrap(),
            fs::read(out2.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
    assert_eq!(echo_without_paths(&out1), echo_without_paths(&out2), "resolved settings differ");
}

#[test]
fn train_errors_with_line_number_on_corrupt_corpus() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "10", "2");
    let good = fs::read_to_string(&traces).unwrap();
    let first = good.lines().next().unwrap();
    let corrupt = tmp.path().join("corrupt.jsonl");
    fs::write(&corrupt, format!("{first}\nnot json at all\n")).unwrap();

    let stderr = run_err(&[
        "train",
        "--traces",
        path_str(&corrupt),
        "--out",
        path_str(&tmp.path().join("t")),
    ]);
    assert!(stderr.contains("line 2"), "parse error carries the line number: {stderr}");
}

#[test]
fn eval_writes_verdicts_and_aggregate_for_labelled_corpus() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "40", "11");
    let train_out = tmp.path().join("train");
    let mut args = vec!["train", "--traces", path_str(&traces), "--out", path_str(&train_out)];
    args.extend_from_slice(QUICK);
    run_ok(&args);
    let checkpoint = train_out.join("checkpoint.json");

    let eval_out = tmp.path().join("eval");
    run_ok(&[
        "eval",
        "--checkpoint",
        path_str(&checkpoint),
        "--traces",
        path_str(&traces),
        "--out",
        path_str(&eval_out),
    ]);

    let verdicts = fs::read_to_string(eval_out.join("verdicts.csv")).unwrap();
    let mut lines = verdicts.lines();
    assert_eq!(lines.next(), Some("trace_id,p_fail,verdict,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 80, "one row per trace");
    for row in &rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 4, "row shape: {row}");
        let p: f64 = cells[1].parse().expect("p_fail parses");
        assert!((0.0..=1.0).contains(&p), "probability in range: {row}");
        assert!(matches!(cells[2], "pass" | "fail"), "verdict cell: {row}");
        assert!(matches!(cells[3], "pass" | "fail"), "label cell: {row}");
    }

    let report = fs::read_to_string(eval_out.join("report.csv")).unwrap();
    let row = report.lines().nth(1).expect("aggregate row");
    let counts: Vec<u64> =
        row.split(',').take(4).map(|c| c.parse().expect("count cells")).collect();
    assert_eq!(counts.iter().sum::<u64>(), 80, "confusion counts cover the corpus");
}

#[test]
fn eval_omits_aggregate_for_unlabelled_traces() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "40", "11");
    let train_out = tmp.path().join("train");
    let mut args = vec!["train", "--traces", path_str(&traces), "--out", path_str(&train_out)];
    args.extend_from_slice(QUICK);
    run_ok(&args);

    let mut unlabelled = read_trace_file(&traces).unwrap();
    for t in &mut unlabelled {
        t.label = None;
    }
    let unlabelled_path = tmp.path().join("unlabelled.jsonl");
    write_trace_file(&unlabelled_path, &unlabelled).unwrap();

    let eval_out = tmp.path().join("eval");
    let stdout = run_ok(&[
        "eval",
        "--checkpoint",
        path_str(&train_out.join("checkpoint.json")),
        "--traces",
        path_str(&unlabelled_path),
        "--out",
        path_str(&eval_out),
    ]);
    assert!(stdout.contains("aggregate metrics omitted"), "stdout: {stdout}");
    assert!(eval_out.join("verdicts.csv").exists());
    assert!(!eval_out.join("report.csv").exists(), "no aggregate without labels");

    let verdicts = fs::read_to_string(eval_out.join("verdicts.csv")).unwrap();
    let row = verdicts.lines().nth(1).expect("data row");
    assert!(row.ends_with(','), "label cell is empty: {row}");
}

#[test]
fn eval_threshold_override_flips_verdicts() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "20", "11");
    let train_out = tmp.path().join("train");
    let mut args = vec!["train", "--traces", path_str(&traces), "--out", path_str(&train_out)];
    args.extend_from_slice(QUICK);
    run_ok(&args);

    let eval_out = tmp.path().join("eval");
    run_ok(&[
        "eval",
        "--checkpoint",
        path_str(&train_out.join("checkpoint.json")),
        "--traces",
        path_str(&traces),
        "--threshold",
        "0.001",
        "--out",
        path_str(&eval_out),
    ]);
    let verdicts = fs::read_to_string(eval_out.join("verdicts.csv")).unwrap();
    for row in verdicts.lines().skip(1) {
        assert_eq!(
            row.split(',').nth(2),
            Some("fail"),
            "a near-zero threshold flags everything: {row}"
        );
    }
    let echo = fs::read_to_string(eval_out.join("config.txt")).unwrap();
    assert!(echo.contains("threshold=0.001"), "override echoed: {echo}");
}

#[test]
fn sweep_emits_one_row_per_fraction() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "40", "11");
    let out = tmp.path().join("sweep");
    run_ok(&[
        "sweep",
        "--traces",
        path_str(&traces),
        "--fractions",
        "10,20",
        "--epochs",
        "2",
        "--batch",
        "8",
        "--seed",
        "3",
        "--out",
        path_str(&out),
    ]);

    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fraction,tp,fp,tn,fn,precision,recall,specificity,f1,epochs,seed");
    assert_eq!(lines.len(), 3, "header plus one row per fraction: {csv}");
    assert!(lines[1].starts_with("0.1,"), "percent 10 resolves to 0.1: {csv}");
    assert!(lines[2].starts_with("0.2,"), "percent 20 resolves to 0.2: {csv}");

    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("best:"), "summary names a best row: {summary}");
}

#[test]
fn ablate_tags_the_dropped_channel_row() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "40", "11");
    let out = tmp.path().join("ablate");
    let mut args = vec![
        "ablate",
        "--traces",
        path_str(&traces),
        "--drop",
        "arguments",
        "--out",
        path_str(&out),
    ];
    args.extend_from_slice(QUICK);
    run_ok(&args);

    let csv = fs::read_to_string(out.join("ablate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "configuration,tp,fp,tn,fn,precision,recall,specificity,f1,epochs,seed");
    assert_eq!(lines.len(), 3, "full row plus ablated row: {csv}");
    assert!(lines[1].starts_with("FULL,"), "{csv}");
    assert!(lines[2].starts_with("ARGUMENTS,"), "{csv}");
    assert!(out.join("summary.txt").exists());
}

#[test]
fn cross_reports_per_subject_and_overall() {
    let tmp = TempDir::new().unwrap();
    let a = gen_corpus(tmp.path(), "fsm-proto", "40", "11");
    let b = gen_corpus(tmp.path(), "fsm-proto-alt", "20", "5");
    let out = tmp.path().join("cross");
    let mut args = vec![
        "cross",
        "--train-traces",
        path_str(&a),
        "--eval-traces",
        path_str(&b),
        "--out",
        path_str(&out),
    ];
    args.extend_from_slice(QUICK);
    run_ok(&args);

    let csv = fs::read_to_string(out.join("cross.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "subject,tp,fp,tn,fn,precision,recall,specificity,f1,epochs,seed");
    assert!(lines.iter().any(|l| l.starts_with("fsm-proto-alt,")), "{csv}");
    assert!(lines.last().unwrap().starts_with("OVERALL,"), "{csv}");
    assert!(out.join("summary.txt").exists());
}

#[test]
fn baseline_grid_has_fifteen_rows() {
    let tmp = TempDir::new().unwrap();
    let traces = gen_corpus(tmp.path(), "fsm-proto", "40", "11");
    let out = tmp.path().join("baseline");
    let stdout =
        run_ok(&["baseline", "--traces", path_str(&traces), "--out", path_str(&out)]);
    assert!(stdout.contains("best:"), "stdout: {stdout}");

    let csv = fs::read_to_string(out.join("baseline.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "linkage,fraction,tp,fp,tn,fn,precision,recall,specificity,f1");
    assert_eq!(lines.len(), 16, "header plus 3 linkages x 5 fractions: {csv}");
    assert!(out.join("summary.txt").exists());
}

#[test]
fn config_file_defaults_yield_to_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("gen.cfg");
    fs::write(&cfg, "# corpus defaults\nsubject=fsm-proto\ninputs=25\nseed=9\n").unwrap();
    let out = tmp.path().join("gen");
    run_ok(&[
        "gen",
        "--config",
        path_str(&cfg),
        "--inputs",
        "30",
        "--out",
        path_str(&out),
    ]);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("inputs=30"), "flag beats file: {echo}");
    assert!(echo.contains("seed=9"), "file beats default: {echo}");
    assert!(echo.contains("subject=fsm-proto"), "{echo}");

    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "nonsense=1\n").unwrap();
    let stderr = run_err(&[
        "gen",
        "--config",
        path_str(&bad),
        "--subject",
        "fsm-proto",
        "--out",
        path_str(&tmp.path().join("g2")),
    ]);
    assert!(stderr.contains("nonsense"), "unknown key named: {stderr}");
}
