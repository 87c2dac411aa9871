use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gesture(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gesture"))
        .current_dir(dir)
        .args(["--config", "small.toml", "--quiet"])
        .args(args)
        .output()
        .expect("run gesture")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gesture(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn failure(dir: &Path, args: &[&str]) -> String {
    let out = gesture(dir, args);
    assert_eq!(out.status.code(), Some(2), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "one-line error, got {err:?}");
    err
}

const SMALL: &str = r#"
[synth]
n_sequences = 8
gestures_per_sequence = 2

[segmenter]
hidden = [8, 8]
max_iterations = 30

[window]
hidden = [16, 8]
max_iterations = 30

[rnn]
hidden = [4, 4]

[rnn.sgdm]
max_epochs = 1
batch_size = 64
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn full_cycle_for_methods_a_and_c() {
    let dir = workspace();
    let d = dir.path();
    let gen = ok(d, &["generate"]);
    assert!(gen.contains("train: ") && gen.contains("test: "), "{gen}");
    assert!(d.join("data/manifest.txt").exists());
    ok(d, &["extract"]);

    let files = ok(d, &["train", "--method", "a"]);
    assert_eq!(files.lines().count(), 3, "{files}");
    ok(d, &["predict", "--method", "a"]);
    let table = ok(d, &["evaluate", "--method", "a"]);
    assert!(table.contains("segmenter frame accuracy"), "{table}");
    for f in ["labels.txt", "intervals.txt", "periods.txt", "report.kv", "report.txt", "confusion.txt", "confusion_log10.txt", "timelines.txt"] {
        assert!(d.join("reports/a/test").join(f).exists(), "{f}");
    }

    let files = ok(d, &["train", "--method", "c"]);
    assert_eq!(files.lines().count(), 2, "{files}");
    // Method C must not need the segmenter.
    fs::remove_dir_all(d.join("models/a")).unwrap();
    ok(d, &["predict", "--method", "c", "--split", "val"]);
    assert!(!d.join("reports/c/val/periods.txt").exists());
    ok(d, &["evaluate", "--method", "c", "--split", "val"]);

    let summary = ok(d, &["report"]);
    assert!(summary.lines().any(|l| l.starts_with("a test ")), "{summary}");
    assert!(summary.lines().any(|l| l.starts_with("c val ")), "{summary}");
}

#[test]
fn generate_is_reproducible() {
    let a = workspace();
    let b = workspace();
    ok(a.path(), &["generate", "--seed", "9"]);
    ok(b.path(), &["generate", "--seed", "9"]);
    let manifest = fs::read_to_string(a.path().join("data/manifest.txt")).unwrap();
    assert_eq!(manifest, fs::read_to_string(b.path().join("data/manifest.txt")).unwrap());
    for e in fs::read_dir(a.path().join("data")).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(
            fs::read(a.path().join("data").join(&name)).unwrap(),
            fs::read(b.path().join("data").join(&name)).unwrap()
        );
    }
}

#[test]
fn errors_are_one_line_with_category() {
    let dir = workspace();
    let d = dir.path();
    let err = failure(d, &["train", "--method", "c"]);
    assert!(err.starts_with("error: "), "{err}");

    ok(d, &["generate"]);
    let err = failure(d, &["evaluate", "--method", "a"]);
    assert!(err.starts_with("error: missing: "), "{err}");
    let err = failure(d, &["predict", "--method", "b"]);
    assert!(err.starts_with("error: missing: "), "{err}");

    fs::write(d.join("bad.toml"), "[segmenter]\nthreshold = 1.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gesture"))
        .current_dir(d)
        .args(["--config", "bad.toml", "config"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: invalid-argument: "));

    fs::write(d.join("typo.toml"), "[segmenter]\nthreshhold = 0.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gesture"))
        .current_dir(d)
        .args(["--config", "typo.toml", "config"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshhold"));
}

#[test]
fn config_prints_profiles() {
    let dir = workspace();
    let desk = ok(dir.path(), &["config"]);
    assert!(desk.contains("hidden = [4, 4]"), "{desk}");
    let out = Command::new(env!("CARGO_BIN_EXE_gesture"))
        .args(["config", "--paper-scale"])
        .output()
        .unwrap();
    let full = String::from_utf8(out.stdout).unwrap();
    assert!(full.contains("hidden = [1024, 1024, 512]"), "{full}");
    assert!(full.contains("n_classes = 20"), "{full}");
}
