use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use seqcnn_core::descriptor::{write_pgm, GrayImage};
use seqcnn_core::load_descriptor_file;

fn seqcnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqcnn"))
        .current_dir(dir)
        .env_remove("SEQCNN_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = seqcnn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", out, "--shift", "0.125"];
    if !extra.contains(&"--n-frames") {
        args.extend_from_slice(&["--n-frames", "200"]);
    }
    args.extend_from_slice(extra);
    ok(dir, &args);
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "a", &["--seed", "4"]);
    synth(t.path(), "b", &["--seed", "4"]);
    for f in ["reference.sqds", "query.sqds", "gt.csv"] {
        assert_eq!(fs::read(t.path().join("a").join(f)).unwrap(), fs::read(t.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn full_match_then_identity_eval() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "d", &[]);
    let summary = ok(
        t.path(),
        &["match", "--reference", "d/reference.sqds", "--query", "d/query.sqds", "--ds", "10", "--out", "m.csv"],
    );
    assert!(summary.contains("matched 190 of 200"), "{summary}");
    assert_eq!(lines(&t.path().join("m.csv")), 1 + 190);

    let report = ok(t.path(), &["eval", "--matches", "m.csv", "--gt-identity", "--out-dir", "ev"]);
    assert!(report.contains("recall 1.0000"), "{report}");
    let curve = fs::read_to_string(t.path().join("ev/pr.csv")).unwrap();
    assert!(curve.starts_with("threshold,precision,recall,tp,fp,fn\n"));
    assert!(fs::read_to_string(t.path().join("ev/pr.svg")).unwrap().contains("<polyline"));
}

#[test]
fn accel_reports_bound_and_instrumentation() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "d", &["--n-frames", "400"]);
    let summary = ok(
        t.path(),
        &[
            "match", "--reference", "d/reference.sqds", "--query", "d/query.sqds", "--ds", "100", "--mode", "accel",
            "--k", "10", "--num", "6", "--out", "m.csv", "--instrumentation", "w.csv",
        ],
    );
    assert!(summary.contains("candidate bound 70") && summary.contains("respected"), "{summary}");
    let inst = fs::read_to_string(t.path().join("w.csv")).unwrap();
    assert!(inst.starts_with("frame,candidates_scored,entries_computed,reinit_flag\n"));
    assert_eq!(inst.lines().count(), 1 + 300);
}

#[test]
fn online_writes_k_trace() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "d", &[]);
    ok(
        t.path(),
        &[
            "match", "--reference", "d/reference.sqds", "--query", "d/query.sqds", "--ds", "10", "--mode", "online",
            "--num", "16", "--initial-k", "30", "--out", "m.csv", "--k-trace", "k.csv",
        ],
    );
    let trace = fs::read_to_string(t.path().join("k.csv")).unwrap();
    let mut rows = trace.lines();
    assert_eq!(rows.next(), Some("frame,change_degree,current_k,iml,reset_flag"));
    assert_eq!(rows.next().unwrap().split(',').nth(2), Some("30"));
    assert_eq!(trace.lines().count(), 1 + 190);
}

#[test]
fn recall_floor_sets_exit_code() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "d", &["--speed", "1.2"]);
    ok(
        t.path(),
        &["match", "--reference", "d/reference.sqds", "--query", "d/query.sqds", "--ds", "10", "--out", "m.csv"],
    );
    // Against its real ground truth the run clears the floor...
    ok(t.path(), &["eval", "--matches", "m.csv", "--gt", "d/gt.csv", "--out-dir", "ev", "--min-recall", "0.9"]);
    // ...but not against an identity mapping, which ignores the speed change.
    let out = seqcnn(t.path(), &["eval", "--matches", "m.csv", "--gt-identity", "--out-dir", "ev", "--min-recall", "0.9"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "d", &[]);
    for (threads, out) in [("1", "a.csv"), ("3", "b.csv")] {
        ok(
            t.path(),
            &[
                "--threads", threads, "match", "--reference", "d/reference.sqds", "--query", "d/query.sqds", "--ds", "10",
                "--mode", "accel", "--out", out,
            ],
        );
    }
    assert_eq!(fs::read(t.path().join("a.csv")).unwrap(), fs::read(t.path().join("b.csv")).unwrap());
}

#[test]
fn bad_flags_fail_before_work() {
    let t = tempfile::tempdir().unwrap();
    let missing_ds = seqcnn(t.path(), &["match", "--reference", "r", "--query", "q", "--out", "m.csv"]);
    assert!(!missing_ds.status.success());
    // Parameters are checked before the (missing) input files are opened.
    let odd = seqcnn(t.path(), &["match", "--reference", "r", "--query", "q", "--ds", "7", "--out", "m.csv"]);
    assert!(String::from_utf8_lossy(&odd.stderr).contains("ds must be even"));
    let num = seqcnn(t.path(), &["match", "--reference", "r", "--query", "q", "--ds", "10", "--mode", "accel", "--num", "5", "--out", "m.csv"]);
    assert!(String::from_utf8_lossy(&num.stderr).contains("num must be even"));
    assert!(!t.path().join("m.csv").exists());
}

#[test]
fn extract_pixels_from_pgm_directory() {
    let t = tempfile::tempdir().unwrap();
    let imgs = t.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    for (i, (w, h)) in [(640, 320), (128, 64), (100, 50)].into_iter().enumerate() {
        let img = GrayImage::from_fn(w, h, |x, y| ((x * 7 + y * 13 + i * 31) % 251) as u8).unwrap();
        write_pgm(fs::File::create(imgs.join(format!("frame_{i:03}.pgm"))).unwrap(), &img).unwrap();
    }
    fs::write(imgs.join("notes.txt"), "ignored").unwrap();
    ok(t.path(), &["extract-pixels", "--images", "imgs", "--out", "px.sqds"]);
    let set = load_descriptor_file(t.path().join("px.sqds")).unwrap();
    assert_eq!((set.len(), set.dim()), (3, 2048));
    assert_eq!(set.frame_names().unwrap()[2], "frame_002.pgm");

    fs::create_dir(t.path().join("empty")).unwrap();
    let out = seqcnn(t.path(), &["extract-pixels", "--images", "empty", "--out", "e.sqds"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty input"));
}

#[test]
fn plot_overlays_curves() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "d", &[]);
    for mode in ["full", "accel"] {
        ok(
            t.path(),
            &[
                "match", "--reference", "d/reference.sqds", "--query", "d/query.sqds", "--ds", "10", "--mode", mode,
                "--out", &format!("{mode}.csv"),
            ],
        );
        ok(t.path(), &["eval", "--matches", &format!("{mode}.csv"), "--gt", "d/gt.csv", "--out-dir", mode]);
    }
    ok(t.path(), &["plot", "--curve", "sweep=full/pr.csv", "--curve", "accel/pr.csv", "--out", "both.svg"]);
    let svg = fs::read_to_string(t.path().join("both.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">sweep<") && svg.contains(">pr<"));
}
