//! End-to-end tests of the `tenseg` binary: subcommand wiring, file formats,
//! exit codes, config-file precedence, and master-seed determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tenseg"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "tenseg-cli-test-{tag}-{}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// One simulated CP1/AR tensor shared by the decompose/detect tests.
fn sim_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tmpdir("sim-shared");
        run_ok(bin()
            .args(["simulate", "--scenario", "cp1", "--seed", "1", "--out"])
            .arg(&dir));
        dir
    })
}

#[test]
fn simulate_writes_tensor_and_truth_deterministically() {
    let a = sim_dir();
    let b = tmpdir("sim-again");
    run_ok(bin()
        .args(["simulate", "--scenario", "cp1", "--seed", "1", "--out"])
        .arg(&b));
    let bytes_a = std::fs::read(a.join("tensor.tsr1")).unwrap();
    let bytes_b = std::fs::read(b.join("tensor.tsr1")).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must give byte-identical TSR1");
    let truth = std::fs::read_to_string(a.join("truth.csv")).unwrap();
    assert_eq!(truth, "change_point\n100\n");
}

#[test]
fn simulate_cp0_truth_is_header_only() {
    let dir = tmpdir("sim-cp0");
    run_ok(bin()
        .args(["simulate", "--scenario", "cp0", "--seed", "3", "--out"])
        .arg(&dir));
    let truth = std::fs::read_to_string(dir.join("truth.csv")).unwrap();
    assert_eq!(truth, "change_point\n");
}

#[test]
fn detect_on_tensor_locates_the_planted_change() {
    let dir = tmpdir("detect-tensor");
    let out = run_ok(bin()
        .args(["detect", "--rank", "8", "--seed", "1", "--input"])
        .arg(sim_dir().join("tensor.tsr1"))
        .arg("--out")
        .arg(&dir));
    let stdout = stdout_str(&out);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("change_point"));
    let cps: Vec<i64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(cps.len(), 1, "CP1 should yield one change-point, got {cps:?}");
    assert!((cps[0] - 100).abs() <= 8, "got {cps:?}");

    // Files mirror stdout, and the JSON summary is well-formed.
    let file_cps = std::fs::read_to_string(dir.join("change_points.csv")).unwrap();
    assert_eq!(file_cps, stdout);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["rank_used"], 8);
    assert_eq!(summary["change_points"][0], cps[0]);
    assert!(summary["threshold"].as_f64().unwrap() > 0.0);
}

#[test]
fn csv_series_detect_matches_the_tensor_path() {
    let dec = tmpdir("decompose");
    run_ok(bin()
        .args([
            "decompose", "--rank", "8", "--iters", "25", "--tol", "1e-5", "--restarts", "2",
            "--seed", "1", "--input",
        ])
        .arg(sim_dir().join("tensor.tsr1"))
        .arg("--out")
        .arg(&dec));

    let det_t = tmpdir("detect-via-tensor");
    let out_tensor = run_ok(bin()
        .args([
            "detect", "--rank", "8", "--iters", "25", "--tol", "1e-5", "--restarts", "2",
            "--seed", "1", "--input",
        ])
        .arg(sim_dir().join("tensor.tsr1"))
        .arg("--out")
        .arg(&det_t));

    // The raw-series path defaults min-segment to lambda; pin the pipeline's
    // value so the two runs share the full detector configuration.
    let det_c = tmpdir("detect-via-csv");
    let out_csv = run_ok(bin()
        .args(["detect", "--min-segment", "10", "--input"])
        .arg(dec.join("series.csv"))
        .arg("--out")
        .arg(&det_c));
    assert_eq!(stdout_str(&out_tensor), stdout_str(&out_csv));
}

#[test]
fn bench_row_is_deterministic_and_eval_reproduces_it() {
    let dir = tmpdir("bench");
    let recs = dir.join("recs.csv");
    let common = [
        "bench", "--scenario", "cp1", "--rank", "4", "--reps", "3", "--seed", "7",
    ];
    let out1 = run_ok(bin()
        .args(common)
        .args(["--workers", "1", "--records"])
        .arg(&recs));
    let out2 = run_ok(bin().args(common).args(["--workers", "2"]));

    // Identical apart from the wall-clock column (the last CSV field).
    let strip_time = |s: &str| {
        s.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip_time(&stdout_str(&out1)), strip_time(&stdout_str(&out2)));

    let eval = run_ok(bin()
        .args(["eval", "--model", "CP1/AR", "--components", "4", "--records"])
        .arg(&recs));
    assert_eq!(strip_time(&stdout_str(&eval)), strip_time(&stdout_str(&out1)));

    let header = stdout_str(&out1);
    assert!(header.starts_with("method,model,components,le_m3,"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tmpdir("config");
    let conf = dir.join("run.conf");
    std::fs::write(&conf, "scenario=cp1\nrank = 4\nreps=2\nseed=7\nworkers=1\n").unwrap();
    let from_file = run_ok(bin().arg("bench").arg("--config").arg(&conf));
    let overridden = run_ok(bin()
        .arg("bench")
        .arg("--config")
        .arg(&conf)
        .args(["--seed", "8"]));
    let strip_time = |s: &str| {
        s.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    // Same config twice is identical; a different seed changes the estimates.
    let again = run_ok(bin().arg("bench").arg("--config").arg(&conf));
    assert_eq!(strip_time(&stdout_str(&from_file)), strip_time(&stdout_str(&again)));
    assert_ne!(
        stdout_str(&from_file).lines().nth(1),
        stdout_str(&overridden).lines().nth(1),
        "--seed must override the config file"
    );
}

#[test]
fn eval_pair_mode_scores_two_files() {
    let dir = tmpdir("eval-pair");
    std::fs::write(dir.join("truth.csv"), "change_point\n100\n").unwrap();
    std::fs::write(dir.join("est.csv"), "change_point\n98\n").unwrap();
    let out = run_ok(bin()
        .args(["eval", "--t-len", "200"])
        .arg("--truth")
        .arg(dir.join("truth.csv"))
        .arg("--est")
        .arg(dir.join("est.csv")));
    let stdout = stdout_str(&out);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("n_true,n_est,n_hat_minus_n,d_h"));
    assert_eq!(lines.next(), Some("1,1,0,0.020000"));
}

#[test]
fn error_exit_codes_follow_the_contract() {
    // 2: inconsistent configuration.
    assert_eq!(exit_code(bin().args(["bench", "--rank", "4"])), 2);
    assert_eq!(
        exit_code(bin().args(["detect", "--input", "x.tsr1", "--auto-rank"])),
        2
    );
    assert_eq!(exit_code(bin().args(["simulate", "--scenario", "cp9"])), 2);
    // 3: missing files.
    assert_eq!(
        exit_code(bin().args(["detect", "--input", "definitely-missing.tsr1", "--rank", "4"])),
        3
    );
    assert_eq!(
        exit_code(bin().args(["bench", "--config", "missing.conf", "--scenario", "cp0"])),
        3
    );
    // Config-file typos are configuration errors, not silent defaults.
    let dir = tmpdir("badconf");
    let conf = dir.join("bad.conf");
    std::fs::write(&conf, "sed=1\n").unwrap();
    assert_eq!(
        exit_code(bin().args(["bench"]).arg("--config").arg(&conf)),
        2
    );
}

#[test]
fn stdout_stays_clean_under_verbose_logging() {
    let dir = tmpdir("quiet-stdout");
    let out = run_ok(bin()
        .args(["simulate", "--scenario", "cp0", "--seed", "2", "-vv", "--out"])
        .arg(&dir));
    assert!(out.stdout.is_empty(), "simulate must keep stdout data-only");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("wrote"),
        "verbose mode should log progress to stderr"
    );
}
