use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use snapens::data::parse_csv;
use snapens::Dataset;

const BIN: &str = env!("CARGO_BIN_EXE_snapens");

fn recipes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(extra: &str) -> String {
    format!(
        "model.layers = 2,16,16,2\n\
         schedule.kind = cyclic_cosine\n\
         schedule.alpha0 = 0.2\n\
         schedule.cycles = 6\n\
         train.mode = snapshot\n\
         train.epochs = 12\n\
         train.batch_size = 32\n\
         data.source = moons\n\
         data.params = n=300, noise=0.15, seed=4\n\
         output.dir = run\n{extra}"
    )
}

/// A trained 6-snapshot run in a fresh directory.
fn trained() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.cfg"), small_config("")).unwrap();
    ok(&["train", "a.cfg"], dir.path());
    dir
}

/// Parses CSV output as a numeric table. An integer row index is appended as
/// the label column so any all-numeric table is accepted.
fn numeric(text: &str) -> Dataset {
    let mut lines = text.lines();
    let mut fixed = format!("{},row\n", lines.next().unwrap());
    for (i, l) in lines.enumerate() {
        fixed.push_str(&format!("{l},{i}\n"));
    }
    parse_csv(&fixed, "row").unwrap_or_else(|e| panic!("{e}\n{text}"))
}

#[test]
fn train_writes_six_snapshots_and_is_deterministic() {
    let dir = trained();
    let run_dir = dir.path().join("run");
    let snaps: Vec<_> = (1..=6).map(|i| run_dir.join(format!("snap_{i:03}.snap"))).collect();
    assert!(snaps.iter().all(|p| p.is_file()));
    assert!(!run_dir.join("snap_007.snap").exists());
    assert!(run_dir.join("run.manifest").is_file() && run_dir.join("loss.csv").is_file());
    let first: Vec<Vec<u8>> = snaps.iter().map(|p| fs::read(p).unwrap()).collect();
    ok(&["train", "a.cfg"], dir.path());
    let second: Vec<Vec<u8>> = snaps.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn missing_cycles_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), small_config("").replace("schedule.cycles = 6\n", "")).unwrap();
    let out = run(&["train", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schedule.cycles"));
}

#[test]
fn unknown_key_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), small_config("train.lr = 1\n")).unwrap();
    let out = run(&["train", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.lr"));
    assert_eq!(run(&["gen-data", "--kind", "moons", "--n", "x", "--out", "d.csv"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["gen-data", "--kind", "moons", "--n", "7", "--out", "d.csv"], dir.path()).status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config("")
        .replace("schedule.kind = cyclic_cosine", "schedule.kind = constant")
        .replace("schedule.cycles = 6\n", "")
        .replace("schedule.alpha0 = 0.2", "schedule.alpha0 = 1e300")
        .replace("train.mode = snapshot", "train.mode = single");
    fs::write(dir.path().join("hot.cfg"), text).unwrap();
    let out = run(&["train", "hot.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged at iteration"));
}

#[test]
fn missing_files_exit_4() {
    let dir = trained();
    assert_eq!(run(&["train", "nope.cfg"], dir.path()).status.code(), Some(4));
    fs::remove_file(dir.path().join("run/snap_003.snap")).unwrap();
    let out = run(&["ensemble", "run/run.manifest", "run/test.csv"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snap_003.snap"));
}

#[test]
fn ensemble_commands() {
    let dir = trained();
    let d = dir.path();
    let all = ok(&["ensemble", "run/run.manifest", "run/test.csv"], d);
    let table = numeric(&all);
    assert_eq!(table.len(), 6);
    let one = ok(&["ensemble", "run/run.manifest", "run/test.csv", "--m", "1", "--order", "latest"], d);
    let row: Vec<f64> = one.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row.len(), 2 + 6);
    assert_eq!(row[1], row[7], "m=1 latest equals the last member");
    let out = run(&["ensemble", "run/run.manifest", "run/test.csv", "--m", "7"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn self_interpolation_is_flat() {
    let dir = trained();
    let csv = ok(&["interpolate", "run/run.manifest", "run/test.csv", "--pair", "4", "4"], dir.path());
    let errors: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(errors.len(), 51);
    assert!(errors.iter().all(|e| *e == errors[0]));
}

#[test]
fn every_emitted_csv_is_numeric() {
    let dir = trained();
    let d = dir.path();
    let m = ["run/run.manifest", "run/test.csv"];
    let outputs = [
        ok(&["ensemble", m[0], m[1]], d),
        ok(&["curve", m[0], m[1]], d),
        ok(&["interpolate", m[0], m[1], "--pair", "1", "6", "--grid", "11"], d),
        ok(&["interpolate", m[0], m[1], "--against-final", "--grid", "11"], d),
        ok(&["correlate", m[0], m[1], "--grid-out", "grid.csv"], d),
        fs::read_to_string(d.join("grid.csv")).unwrap(),
        fs::read_to_string(d.join("run/loss.csv")).unwrap(),
    ];
    for text in &outputs {
        assert!(text.lines().next().unwrap().chars().any(char::is_alphabetic), "header row: {text}");
        numeric(text);
    }
    assert_eq!(numeric(&outputs[3]).len(), 6 * 11);
    assert_eq!(numeric(&outputs[4]).len(), 36);
    let grid = numeric(&outputs[5]);
    assert_eq!(grid.inputs().shape(), (6, 7));

    ok(&["gen-data", "--kind", "blobs", "--n", "90", "--classes", "3", "--out", "b.csv"], d);
    let blobs: Dataset = snapens::data::load_csv(&d.join("b.csv"), "label").unwrap();
    assert_eq!((blobs.len(), blobs.class_count()), (90, 3));
}

#[test]
fn combine_lists_final_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for s in 1..=3 {
        let text = small_config(&format!("train.seed = {s}\n")).replace("output.dir = run", &format!("output.dir = r{s}"));
        fs::write(d.join(format!("c{s}.cfg")), text).unwrap();
        ok(&["train", &format!("c{s}.cfg")], d);
    }
    ok(&["combine", "--out", "ens.manifest", "r1/run.manifest", "r2/run.manifest", "r3/run.manifest"], d);
    let text = fs::read_to_string(d.join("ens.manifest")).unwrap();
    assert_eq!(text.matches("snap_006.snap").count(), 3);
    let table = numeric(&ok(&["ensemble", "ens.manifest", "r1/test.csv"], d));
    assert_eq!(table.len(), 3);
}

#[test]
fn table3_sweep_emits_one_row_per_m() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("table3");
    fs::create_dir(&sweep).unwrap();
    for entry in fs::read_dir(recipes().join("table3_vary_M")).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "cfg") {
            fs::copy(&p, sweep.join(p.file_name().unwrap())).unwrap();
        }
    }
    ok(&["sweep", "table3", "--jobs", "2"], dir.path());
    let summary = fs::read_to_string(sweep.join("summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "run,cycles,epochs,seed,snapshots,ensemble_error,final_error,best_member_error"
    );
    let table = numeric(&summary);
    assert_eq!(table.len(), 5);
    let cycles: Vec<f64> = table.inputs().iter_rows().map(|r| r[1]).collect();
    assert_eq!(cycles, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    for r in table.inputs().iter_rows() {
        assert_eq!(r[1], r[4], "one snapshot per cycle");
        assert!((0.0..=1.0).contains(&r[5]));
    }
    for m in ["m02", "m10"] {
        assert!(sweep.join("runs").join(m).join("run.manifest").is_file());
    }
}
