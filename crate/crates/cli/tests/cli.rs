use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const ARTIFACTS: [&str; 12] = [
    "network.json",
    "data.counts",
    "scores.txt",
    "pruned.txt",
    "problem.wcnf",
    "atoms.txt",
    "best.assign",
    "stats.json",
    "learned.json",
    "report.txt",
    "records.txt",
    "posteriors.txt",
];

fn bnsat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnsat")).current_dir(dir).args(args).output().expect("run bnsat")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bnsat(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn pipeline(dir: &Path, out: &str, extra: &[&str]) -> String {
    let mut args = vec![
        "pipeline", "--bif", "builtin:toy3", "--rows", "400", "--seed", "11", "--tries", "6", "--cutoff", "4000",
        "--bma", "--out-dir", out,
    ];
    args.extend_from_slice(extra);
    ok(dir, &args)
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for name in names {
        let x = fs::read(a.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let y = fs::read(b.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn pipeline_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    pipeline(tmp.path(), "a", &[]);
    pipeline(tmp.path(), "b", &["--threads", "1"]);
    same_files(&tmp.path().join("a"), &tmp.path().join("b"), &ARTIFACTS);
}

#[test]
fn staged_run_matches_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pipeline(d, "p", &[]);
    fs::create_dir(d.join("s")).unwrap();
    let s = |name: &str| format!("s/{name}");
    ok(d, &["sample", "--bif", "builtin:toy3", "--rows", "400", "--seed", "11", "--out", &s("data.counts"), "--network-out", &s("network.json")]);
    ok(d, &["score", "--data", &s("data.counts"), "--out", &s("scores.txt")]);
    ok(d, &["prune", "--scores", &s("scores.txt"), "--out", &s("pruned.txt")]);
    ok(d, &["encode", "--scores", &s("pruned.txt"), "--out", &s("problem.wcnf"), "--atoms", &s("atoms.txt")]);
    let search = ["--tries", "6", "--cutoff", "4000", "--seed", "11"];
    let mut solve = vec!["solve", "--wcnf", "s/problem.wcnf", "--atoms", "s/atoms.txt", "--out", "s/best.assign", "--stats", "s/stats.json"];
    solve.extend_from_slice(&search);
    ok(d, &solve);
    ok(
        d,
        &[
            "decode", "--assignment", &s("best.assign"), "--atoms", &s("atoms.txt"), "--out", &s("learned.json"),
            "--compare", "builtin:toy3", "--data", &s("data.counts"), "--scores", &s("pruned.txt"), "--report",
            &s("report.txt"),
        ],
    );
    let mut bma = vec!["bma", "--wcnf", "s/problem.wcnf", "--atoms", "s/atoms.txt", "--records", "s/records.txt", "--posteriors", "s/posteriors.txt"];
    bma.extend_from_slice(&search);
    ok(d, &bma);
    same_files(&d.join("p"), &d.join("s"), &ARTIFACTS);
}

#[test]
fn mismatched_artifacts_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pipeline(d, "a", &[]);
    pipeline(d, "b", &["--encoding", "ancestor", "--cycle", "hard"]);
    let out = bnsat(d, &["solve", "--wcnf", "a/problem.wcnf", "--atoms", "b/atoms.txt", "--out", "x"]);
    assert_eq!(out.status.code(), Some(4));
    let out = bnsat(d, &["decode", "--assignment", "a/best.assign", "--atoms", "b/atoms.txt", "--out", "x"]);
    assert_eq!(out.status.code(), Some(4));
    ok(d, &["sample", "--bif", "builtin:toy3", "--rows", "50", "--seed", "3", "--out", "other.counts"]);
    let out = bnsat(
        d,
        &[
            "decode", "--assignment", "a/best.assign", "--atoms", "a/atoms.txt", "--out", "x", "--compare",
            "builtin:toy3", "--data", "other.counts", "--scores", "a/pruned.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unreachable_target_exits_5_and_still_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pipeline(d, "a", &[]);
    let out = bnsat(d, &["solve", "--wcnf", "a/problem.wcnf", "--tries", "2", "--cutoff", "100", "--target-cost", "0", "--out", "best"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ASSIGNMENT ACHIEVING TARGET 0 NOT FOUND"));
    assert!(d.join("best").exists());
}

#[test]
fn truth_target_reports_success_line() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = pipeline(tmp.path(), "a", &["--target-cost", "truth"]);
    assert!(stdout.contains("ASSIGNMENT ACHIEVING TARGET"), "{stdout}");
    assert!(stdout.contains(" FOUND"), "{stdout}");
    let report = fs::read_to_string(tmp.path().join("a/report.txt")).unwrap();
    let mut lines = report.lines();
    assert!(lines.next().unwrap().contains("> True"));
    assert!(lines.next().unwrap().trim_end().ends_with('Y'), "{report}");
}

#[test]
fn malformed_inputs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.wcnf"), "1 2 0\n").unwrap();
    assert_eq!(bnsat(d, &["solve", "--wcnf", "bad.wcnf", "--out", "x"]).status.code(), Some(3));
    fs::write(d.join("bad.bif"), "network x {\n").unwrap();
    assert_eq!(bnsat(d, &["sample", "--bif", "bad.bif", "--rows", "5", "--out", "x"]).status.code(), Some(3));
    assert_eq!(bnsat(d, &["sample", "--bif", "missing.bif", "--rows", "5", "--out", "x"]).status.code(), Some(1));
}

#[test]
fn bma_runs_compare_against_each_other() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pipeline(d, "a", &[]);
    let stdout = ok(
        d,
        &[
            "bma", "--wcnf", "a/problem.wcnf", "--atoms", "a/atoms.txt", "--seed", "99", "--tries", "6", "--cutoff",
            "4000", "--records", "r.txt", "--posteriors", "p.txt", "--against", "a/records.txt", "--scatter", "sc.txt",
        ],
    );
    assert!(stdout.contains("max divergence"));
    let scatter = fs::read_to_string(d.join("sc.txt")).unwrap();
    assert!(scatter.lines().count() > 1);
}
