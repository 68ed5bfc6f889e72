use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covfuse::dataset::{write_detections, DatasetDir};
use covfuse::Detection;

fn covfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covfuse")).args(args).env("COVFUSE_LOG", "off").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = covfuse(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

const SMALL: &str = "frames = 3\ntraffic = 10\nsensor.points_per_frame = 20000\n";

/// Simulates a small dataset into `dir/name`.
fn simulate(dir: &Path, name: &str, scenario: &str) -> PathBuf {
    let cfg = dir.join(format!("{name}.cfg"));
    fs::write(&cfg, scenario).unwrap();
    let out = dir.join(name);
    ok(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    out
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// AP@0.7 and AP@0.5 of the single row in an eval table.
fn table_row(stdout: &str, method: &str) -> (f64, f64) {
    let line = stdout.lines().find(|l| l.split_whitespace().next() == Some(method)).unwrap_or_else(|| panic!("no {method} row in\n{stdout}"));
    let cols: Vec<&str> = line.split_whitespace().collect();
    (cols[1].parse().unwrap(), cols[2].parse().unwrap())
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let t = tempfile::tempdir().unwrap();
    let a = simulate(t.path(), "a", SMALL);
    let b = simulate(t.path(), "b", SMALL);
    let tree = read_tree(&a);
    assert!(tree.iter().any(|(f, _)| f.ends_with("ego.cloud")));
    assert_eq!(tree, read_tree(&b));
    assert_eq!(DatasetDir::open(&a).unwrap().frame_count(), 3);
}

#[test]
fn simulate_seed_flag_changes_output() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("s.cfg");
    fs::write(&cfg, SMALL).unwrap();
    ok(&["simulate", "--config", p(&cfg), "--seed", "7", "--out", p(&t.path().join("a"))]);
    ok(&["simulate", "--config", p(&cfg), "--out", p(&t.path().join("b"))]);
    assert_ne!(read_tree(&t.path().join("a")), read_tree(&t.path().join("b")));
    assert_eq!(DatasetDir::open(&t.path().join("a")).unwrap().config().seed, 7);
}

#[test]
fn simulate_zero_frames() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "z", "frames = 0\n");
    assert_eq!(DatasetDir::open(&ds).unwrap().frame_count(), 0);
}

#[test]
fn simulate_names_bad_key() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("bad.cfg");
    fs::write(&cfg, "frames = 3\nlane_width = -1\n").unwrap();
    let out = covfuse(&["simulate", "--config", p(&cfg), "--out", p(&t.path().join("x"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lane_width"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&covfuse(&["frobnicate"])), 1);
    assert_eq!(code(&covfuse(&["fuse", "--dataset", "x", "--method", "warp", "--out", "y"])), 1);
    assert_eq!(code(&covfuse(&["fuse", "--dataset", "x", "--method", "cpr-spc,cpr-roi", "--out", "y"])), 1);
    assert_eq!(code(&covfuse(&["--help"])), 0);
}

#[test]
fn baseline_never_reads_cpms() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", SMALL);
    let before = t.path().join("before.txt");
    ok(&["fuse", "--dataset", p(&ds), "--method", "baseline", "--out", p(&before)]);
    fs::remove_dir_all(ds.join("cpm")).unwrap();
    let after = t.path().join("after.txt");
    ok(&["fuse", "--dataset", p(&ds), "--method", "baseline", "--out", p(&after)]);
    assert_eq!(fs::read(&before).unwrap(), fs::read(&after).unwrap());
}

#[test]
fn missing_cpm_stream_lists_vehicles() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", SMALL);
    fs::remove_file(ds.join("cpm").join("vehicle1.cpml")).unwrap();
    fs::remove_file(ds.join("cpm").join("vehicle3.cpml")).unwrap();
    let out = covfuse(&["fuse", "--dataset", p(&ds), "--method", "late", "--out", p(&t.path().join("d.txt"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("vehicle(s) 1, 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fuse_is_identical_across_worker_counts() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", SMALL);
    let mut files = Vec::new();
    for w in ["1", "2", "5"] {
        let out = t.path().join(format!("w{w}.txt"));
        ok(&["--workers", w, "fuse", "--dataset", p(&ds), "--method", "pd,cpr-spc,rbf,cvsa,late", "--out", p(&out)]);
        files.push(fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn eval_perfect_and_empty() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", SMALL);
    let dir = DatasetDir::open(&ds).unwrap();
    let range = dir.config().eval_range;
    let perfect: Vec<Vec<Detection>> = (0..3)
        .map(|i| dir.ground_truth(i).unwrap().into_iter().filter(|b| b.cx.hypot(b.cy) <= range).map(|b| Detection::car(b, 1.0)).collect())
        .collect();
    let path = t.path().join("perfect.txt");
    write_detections(&path, "perfect", &perfect).unwrap();
    let csv = t.path().join("perfect.csv");
    let out = ok(&["eval", "--dataset", p(&ds), "--detections", p(&path), "--out", p(&csv)]);
    assert_eq!(table_row(&out, "perfect"), (100.0, 100.0));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("method,iou_thresh,ap_percent,tp,fp,fn\n"));
    assert!(text.contains("perfect,0.7,100.0000,"));
    assert!(t.path().join("perfect_pr.csv").is_file());

    let empty = t.path().join("empty.txt");
    write_detections(&empty, "empty", &[vec![], vec![], vec![]]).unwrap();
    assert_eq!(table_row(&ok(&["eval", "--dataset", p(&ds), "--detections", p(&empty)]), "empty"), (0.0, 0.0));
}

#[test]
fn eval_rejects_frame_mismatch() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", SMALL);
    let path = t.path().join("short.txt");
    write_detections(&path, "short", &[vec![], vec![]]).unwrap();
    assert_eq!(code(&covfuse(&["eval", "--dataset", p(&ds), "--detections", p(&path)])), 2);
}

#[test]
fn compare_rows_in_given_order() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", SMALL);
    let out_dir = t.path().join("cmp");
    let out = ok(&["compare", "--dataset", p(&ds), "--method", "late", "--method", "baseline", "--out", p(&out_dir)]);
    let rows: Vec<&str> = out.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(rows, ["late", "baseline"]);
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    assert!(out_dir.join("pr_late.csv").is_file() && out_dir.join("pr_baseline.csv").is_file());
}

#[test]
fn compare_rejects_duplicates() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", SMALL);
    let out = covfuse(&["compare", "--dataset", p(&ds), "--method", "cvsa,pd", "--method", "pd+cvsa"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("given twice"));
}

#[test]
fn late_fusion_beats_baseline_under_occlusion() {
    let t = tempfile::tempdir().unwrap();
    let ds = simulate(t.path(), "ds", "frames = 8\ntraffic = 22\nsensor.points_per_frame = 40000\n");
    let out = ok(&["compare", "--dataset", p(&ds), "--method", "baseline", "--method", "late"]);
    let (base, _) = table_row(&out, "baseline");
    let (late, _) = table_row(&out, "late");
    assert!(late > base, "late {late} baseline {base}");
}

/// Rewrites the golden files when `COVFUSE_BLESS` is set.
fn check_golden(name: &str, actual: &[u8]) {
    let path = fixtures().join(name);
    if std::env::var_os("COVFUSE_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the committed fixture");
}

#[test]
fn golden_fuse_and_eval() {
    let t = tempfile::tempdir().unwrap();
    let scenario = fs::read_to_string(fixtures().join("golden.cfg")).unwrap();
    let ds = simulate(t.path(), "golden", &scenario);
    let dets = t.path().join("dets.txt");
    ok(&["fuse", "--dataset", p(&ds), "--method", "cvsa,cpr-spc", "--out", p(&dets)]);
    check_golden("golden_detections.txt", &fs::read(&dets).unwrap());
    let csv = t.path().join("eval.csv");
    ok(&["eval", "--dataset", p(&ds), "--detections", p(&dets), "--out", p(&csv)]);
    check_golden("golden_eval.csv", &fs::read(&csv).unwrap());
}
