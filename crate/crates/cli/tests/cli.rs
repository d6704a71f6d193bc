use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "lstm_hidden = 4\nfc_out = 4\nhead_hidden = 8\nepochs = 2\nbatch = 8\n";

fn gesture(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gesture")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = gesture(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesizes the builtin scripts for 4 subjects × 2 trials and writes a tiny config next to it.
fn setup(dir: &Path) {
    fs::write(dir.join("tiny.cfg"), TINY).unwrap();
    ok(&[
        "synth", "--out", s(&dir.join("data")), "--subjects", "4", "--trials", "2", "--seed", "3",
    ]);
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_expected_tree() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let files: Vec<_> = files_under(&dir.path().join("data"))
        .into_iter()
        .filter(|p| p.file_name().unwrap() == "skeletons_world.txt")
        .collect();
    assert_eq!(files.len(), 6 * 4 * 2);
}

#[test]
fn unknown_feature_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gesture(&["extract", "--dataset", s(dir.path()), "--out", s(dir.path()), "--features", "global,elbow"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = gesture(&["loocv", "--dataset", s(&dir.path().join("nope")), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn extract_train_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let data = d.join("data");
    for out in ["f1", "f2"] {
        ok(&["extract", "--dataset", s(&data), "--out", s(&d.join(out))]);
    }
    let a = files_under(&d.join("f1"));
    let b = files_under(&d.join("f2"));
    assert_eq!(a.len(), 3 * 48);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }

    let cfg = d.join("tiny.cfg");
    for ck in ["a.ckpt", "b.ckpt"] {
        ok(&["train", "--features", s(&d.join("f1")), "--config", s(&cfg), "--seed", "5", "--out", s(&d.join(ck))]);
    }
    assert_eq!(fs::read(d.join("a.ckpt")).unwrap(), fs::read(d.join("b.ckpt")).unwrap());
    let log = fs::read_to_string(d.join("a.ckpt.epochs.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,loss,train_accuracy"));
    assert_eq!(log.lines().count(), 3);

    let out = gesture(&["train", "--features", s(&d.join("f1")), "--config", s(&cfg), "--classes", "28", "--out", s(&d.join("c.ckpt"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let f0 = d.join("f0");
    for src in a {
        let rel = src.strip_prefix(d.join("f1")).unwrap();
        let dst = f0.join(rel);
        fs::create_dir_all(dst.parent().unwrap()).unwrap();
        let bytes = fs::read(&src).unwrap();
        let pos = bytes.windows(9).position(|w| w == b"finger 1\n").unwrap();
        let mut patched = bytes.clone();
        patched[pos + 7] = b'0';
        fs::write(dst, patched).unwrap();
    }
    let out = gesture(&["train", "--features", s(&f0), "--config", s(&cfg), "--classes", "28", "--out", s(&d.join("c.ckpt"))]);
    assert_eq!(out.status.code(), Some(1));
    ok(&["train", "--features", s(&f0), "--config", s(&cfg), "--out", s(&d.join("c.ckpt"))]);

    ok(&["extract", "--dataset", s(&data), "--out", s(&d.join("g")), "--features", "global,finger"]);
    let out = gesture(&["train", "--features", s(&d.join("g")), "--config", s(&cfg), "--out", s(&d.join("x.ckpt"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    ok(&["train", "--features", s(&d.join("g")), "--config", s(&cfg), "--method", "motion", "--out", s(&d.join("x.ckpt"))]);
}

#[test]
fn loocv_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let out = ok(&[
        "loocv", "--dataset", s(&d.join("data")), "--config", s(&d.join("tiny.cfg")), "--seed", "1", "--out", s(&d.join("r")),
    ]);
    assert!(!out.stdout.is_empty());
    let splits = fs::read_to_string(d.join("r/splits.csv")).unwrap();
    assert_eq!(splits.lines().count(), 1 + 4);
    let confusion = fs::read_to_string(d.join("r/confusion.csv")).unwrap();
    let total: u64 = confusion
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).collect::<Vec<_>>())
        .sum();
    assert_eq!(total, 48);
}

#[test]
fn config_prints_defaults() {
    let out = ok(&["config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lstm_hidden = 100"));
}
