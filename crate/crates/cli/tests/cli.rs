//! End-to-end tests of the `lapsolve` binary: exit codes, report formats,
//! and determinism.

use std::io::Write;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lapsolve"))
}

fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
    path
}

const PATH_MTX: &str = "%%MatrixMarket matrix coordinate real symmetric\n\
% path 0-1-2 Laplacian\n\
3 3 5\n\
1 1 1.0\n\
2 1 -1.0\n\
2 2 2.0\n\
3 2 -1.0\n\
3 3 1.0\n";

const NOT_PSDDD_MTX: &str = "%%MatrixMarket matrix coordinate real symmetric\n\
2 2 3\n\
1 1 1.0\n\
2 1 -2.0\n\
2 2 1.0\n";

const GREMBAN_MTX: &str = "%%MatrixMarket matrix coordinate real symmetric\n\
% positive off-diagonal: exercises the Gremban cover\n\
3 3 6\n\
1 1 2.0\n\
2 1 0.5\n\
2 2 2.0\n\
3 2 -1.0\n\
3 3 2.0\n\
3 1 -0.5\n";

#[test]
fn solve_path_fixture_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_file(dir.path(), "path.mtx", PATH_MTX);
    write_file(dir.path(), "path.rhs", "1.0\n0.0\n-1.0\n");
    let out = bin()
        .args(["solve", "--input", mtx.to_str().unwrap(), "--eps", "1e-8", "--format", "json-lines"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["final_relative_residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(report["components"], 1);
}

#[test]
fn solve_not_psddd_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_file(dir.path(), "bad.mtx", NOT_PSDDD_MTX);
    let out = bin()
        .args(["solve", "--input", mtx.to_str().unwrap(), "--format", "json-lines"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["error"], "not-psddd");
}

#[test]
fn duplicate_entries_warn_and_sum() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_file(
        dir.path(),
        "dup.mtx",
        "%%MatrixMarket matrix coordinate real symmetric\n2 2 4\n1 1 1.0\n2 1 -0.5\n2 1 -0.5\n2 2 1.0\n",
    );
    write_file(dir.path(), "dup.rhs", "1.0\n-1.0\n");
    let out = bin()
        .args(["solve", "--input", mtx.to_str().unwrap(), "--format", "json-lines"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("duplicate"), "stderr: {stderr}");
}

#[test]
fn gremban_fixture_solves() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_file(dir.path(), "grem.mtx", GREMBAN_MTX);
    let out = bin()
        .args(["solve", "--input", mtx.to_str().unwrap(), "--seed", "7", "--format", "json-lines"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["gremban"], true);
}

#[test]
fn depth_two_reports_two_levels() {
    // a grid large enough that the reduced system is not solved densely
    let dir = tempfile::tempdir().unwrap();
    let mut content = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    let side = 14usize;
    let n = side * side;
    let at = |r: usize, c: usize| r * side + c;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut degree = vec![0.0f64; n];
    for r in 0..side {
        for c in 0..side {
            for (rr, cc) in [(r, c + 1), (r + 1, c)] {
                if rr < side && cc < side {
                    let (u, v) = (at(r, c), at(rr, cc));
                    entries.push((u.max(v), u.min(v), -1.0));
                    degree[u] += 1.0;
                    degree[v] += 1.0;
                }
            }
        }
    }
    for (i, &d) in degree.iter().enumerate() {
        entries.push((i, i, d));
    }
    content.push_str(&format!("{n} {n} {}\n", entries.len()));
    for (i, j, v) in entries {
        content.push_str(&format!("{} {} {v}\n", i + 1, j + 1));
    }
    let mtx = write_file(dir.path(), "grid.mtx", &content);
    let out = bin()
        .args([
            "solve",
            "--input",
            mtx.to_str().unwrap(),
            "--depth",
            "2",
            "--eps",
            "1e-6",
            "--seed",
            "3",
            "--format",
            "json-lines",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["depth"], 2);
    assert_eq!(report["levels"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_deterministic_under_fixed_seed() {
    let run = || {
        bin()
            .args([
                "bench",
                "--families",
                "grid,tree-plus",
                "--sizes",
                "64,100",
                "--seed",
                "11",
                "--eps",
                "1e-6",
                "--format",
                "json-lines",
            ])
            .output()
            .unwrap()
    };
    let o1 = run();
    let o2 = run();
    assert!(o1.status.success(), "stderr: {}", String::from_utf8_lossy(&o1.stderr));
    assert_eq!(o1.stdout, o2.stdout);
    // rows parse and hold the certificate-vs-oracle relation
    for line in String::from_utf8_lossy(&o1.stdout).lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(row["target_met"].as_bool().unwrap(), "row: {row}");
        if let Some(k) = row["oracle_kappa"].as_f64() {
            assert!(k >= 1.0 - 1e-9);
        }
    }
}

#[test]
fn solve_report_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_file(dir.path(), "path.mtx", PATH_MTX);
    write_file(dir.path(), "path.rhs", "1.0\n0.0\n-1.0\n");
    let out = bin()
        .args(["solve", "--input", mtx.to_str().unwrap(), "--format", "json-lines"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().next().unwrap();
    let value: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(serde_json::to_string(&value).unwrap(), line);
}

#[test]
fn missing_rhs_uses_seeded_random_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_file(dir.path(), "path.mtx", PATH_MTX);
    let run = || {
        bin()
            .args(["solve", "--input", mtx.to_str().unwrap(), "--seed", "5", "--format", "json-lines"])
            .output()
            .unwrap()
    };
    let o1 = run();
    let o2 = run();
    assert!(o1.status.success());
    assert_eq!(o1.stdout, o2.stdout);
}
