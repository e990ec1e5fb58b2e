use std::path::Path;
use std::process::{Command, Output};

use kron_sgd::metrics::METRICS_HEADER;

fn kron_sgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kron-sgd"))
        .args(args)
        .env_remove("KRON_SGD_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    for p in [&a, &b] {
        let out = kron_sgd(&["gen-data", "--n", "32", "--p", "4", "--q", "4", "--seed", "3", "--out", path_str(p)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 33);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let out = kron_sgd(&["train", "--data", path_str(&a), "--m", "16", "--tau", "0.1", "--eta", "0.01", "--iters", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("x.txt");
    let out = kron_sgd(&["gen-data", "--p", "2", "--q", "3", "--symmetric", "--out", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error"));

    assert_eq!(kron_sgd(&["train", "--s-batch", "0"]).status.code(), Some(2));
    assert_eq!(kron_sgd(&["train", "--eta", "-1"]).status.code(), Some(2));
    assert_eq!(kron_sgd(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn missing_data_file_exits_one() {
    let out = kron_sgd(&["train", "--data", "/nonexistent/data.txt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_iterations_prints_header_and_init_row() {
    let out = kron_sgd(&["train", "--n", "8", "--m", "32", "--tau", "0.5", "--eta", "0.1", "--iters", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRICS_HEADER);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn zero_step_size_keeps_loss_constant() {
    let out = kron_sgd(&["train", "--n", "8", "--m", "32", "--tau", "0.2", "--eta", "0", "--iters", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let loss = column(&stdout(&out), "loss");
    assert_eq!(loss.len(), 11);
    assert!(loss.iter().all(|&l| l == loss[0]));
}

#[test]
fn both_modes_agree() {
    let out = kron_sgd(&[
        "train", "--mode", "both", "--n", "16", "--m", "64", "--tau", "0.3", "--eta", "0.05", "--iters", "40", "--seed", "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    assert!(csv.lines().next().unwrap().ends_with(",divergence"));
    let div = column(&csv, "divergence");
    assert_eq!(div.len(), 41);
    assert!(div.iter().all(|&d| d <= 1e-8), "{div:?}");
    assert!(stderr(&out).contains("resolved: tau=0.3"));
}

#[test]
fn auto_parameters_are_reported() {
    let out = kron_sgd(&["train", "--n", "8", "--m", "64", "--iters", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("lambda_hat="), "{err}");
    assert!(!err.contains("lambda_hat=n/a"), "{err}");
}

#[test]
fn output_file_and_workers_match_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let base = ["train", "--n", "12", "--m", "48", "--tau", "0.2", "--eta", "0.05", "--iters", "15"];
    let plain = kron_sgd(&base);
    let mut args = base.to_vec();
    args.extend(["--workers", "2", "--out", path_str(&path)]);
    let filed = kron_sgd(&args);
    assert!(filed.status.success(), "{}", stderr(&filed));
    let strip = |csv: &str| -> Vec<f64> { column(csv, "loss") };
    assert_eq!(strip(&stdout(&plain)), strip(&std::fs::read_to_string(&path).unwrap()));
}

#[test]
fn verify_runs_selected_suites() {
    let out = kron_sgd(&["verify", "--suite", "tensor"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("tensor") && text.contains("ok"));
}

#[test]
fn verify_all_suites_pass() {
    let out = kron_sgd(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.ends_with("ok")).count(), 5);
}

#[test]
fn verify_detects_injected_fault() {
    let out = kron_sgd(&["verify", "--suite", "tree", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("FAILED") && text.contains("replay"), "{text}");
}

#[test]
fn diag_warns_on_degenerate_kernel() {
    let out = kron_sgd(&["diag", "--n", "6", "--m", "32", "--tau", "100", "--mc-samples", "1000", "--train-iters", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"));
    assert!(stdout(&out).contains("lambda_min_dis: 0"));
}

#[test]
fn diag_reports_bounds_and_writes_grams() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    let out = kron_sgd(&[
        "diag", "--n", "6", "--m", "64", "--tau", "0", "--mc-samples", "2000", "--gram-out", path_str(&path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let ratio: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("gradient_bound_max_ratio: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ratio > 0.0 && ratio <= 1.0 + 1e-12);
    let gram = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = gram.lines().collect();
    assert_eq!(lines[0], "n,kind,lambda_min,samples");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",dis,") && lines[2].contains(",cts-mc,"));
}

#[test]
fn bench_single_dimension() {
    let out = kron_sgd(&["bench", "--d", "16", "--n", "8", "--m", "32", "--iters", "3", "--warmup", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "d,p,q,fast_ns_median,naive_ns_median,init_ns");
    assert!(lines[1].starts_with("16,4,4,"));
}
