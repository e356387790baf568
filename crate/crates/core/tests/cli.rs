use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn setseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setseg"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: [&str; 8] = ["--set", "num_train=8", "--set", "num_test=3", "--set", "epochs=2", "--set", "hidden=16"];

fn trained(dir: &Path) {
    let mut synth = vec!["synth", "--out", "data", "--seed", "5"];
    synth.extend(SMALL);
    assert_eq!(code(&setseg(dir, &synth)), 0);
    let mut train = vec!["train", "--corpus", "data/train", "--out", "model", "--seed", "5", "--set", "l_min=10"];
    train.extend(SMALL);
    let out = setseg(dir, &train);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&setseg(dir.path(), &[])), 1);
    assert_eq!(code(&setseg(dir.path(), &["synth"])), 1);
    assert_eq!(code(&setseg(dir.path(), &["--help"])), 0);
    assert_eq!(code(&setseg(dir.path(), &["--version"])), 0);
    let out = setseg(dir.path(), &["synth", "--out", "x", "--set", "no_such_key=1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no_such_key"));
    assert!(!dir.path().join("x").exists(), "validation failure must not write outputs");
}

#[test]
fn missing_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = setseg(dir.path(), &["train", "--corpus", "absent", "--out", "m"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("absent"));
    assert!(!dir.path().join("m").exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.cfg"), "# small run\nnum_train = 4\nnum_test = 2\nseed = 1\n").unwrap();
    let out = setseg(dir.path(), &["synth", "--out", "d", "--config", "exp.cfg", "--set", "num_test=3", "--seed", "8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let train = fs::read_to_string(dir.path().join("d/train/actionsets.txt")).unwrap();
    let test = fs::read_to_string(dir.path().join("d/test/actionsets.txt")).unwrap();
    assert_eq!(train.lines().count(), 4);
    assert_eq!(test.lines().count(), 3);
    let resolved = fs::read_to_string(dir.path().join("d/config.txt")).unwrap();
    assert!(resolved.lines().any(|l| l.replace(' ', "") == "seed=8"), "{resolved}");

    fs::write(dir.path().join("bad.cfg"), "num_train\n").unwrap();
    let out = setseg(dir.path(), &["synth", "--out", "e", "--config", "bad.cfg"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bad.cfg:1"), "{}", stderr(&out));
}

#[test]
fn train_writes_artifacts_and_text_grammar_needs_text() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    for f in ["grammar.txt", "lengths.txt", "model.bin", "train_log.txt", "config.txt"] {
        assert!(dir.path().join("model").join(f).is_file(), "{f} missing");
    }
    let log = fs::read_to_string(dir.path().join("model/train_log.txt")).unwrap();
    assert!(log.contains("seed 5") || log.contains("seed=5"), "{log}");
    assert!(log.contains("lambda"));

    let out = setseg(dir.path(), &["train", "--corpus", "data/train", "--out", "m2", "--grammar", "text"]);
    assert_eq!(code(&out), 1);

    let out = setseg(
        dir.path(),
        &["grammar", "--corpus", "data/train", "--file", "model/grammar.txt", "--accepts", "background take_cup"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("states"));
    assert!(text.contains("accepts"));
}

#[test]
fn infer_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let out = setseg(
        dir.path(),
        &["infer", "--corpus", "data/test", "--model", "model", "--out", "pred", "--mode", "given-sets", "--stride", "5"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sets = fs::read_to_string(dir.path().join("data/test/actionsets.txt")).unwrap();
    for line in sets.lines() {
        let (id, names) = line.split_once(':').unwrap();
        let allowed: Vec<&str> = names.split_whitespace().collect();
        let seg = fs::read_to_string(dir.path().join("pred").join(format!("{id}.seg"))).unwrap();
        for l in seg.lines() {
            let name = l.split_whitespace().next().unwrap();
            assert!(allowed.contains(&name), "{id}: {name} not in {allowed:?}");
        }
        assert!(dir.path().join("pred").join(format!("{id}.labels")).is_file());
    }

    let out = setseg(dir.path(), &["eval", "--corpus", "data/test", "--pred", "pred"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("frame_accuracy="));
    assert!(dir.path().join("pred/eval/metrics.txt").is_file());

    // a prediction missing for one video is reported and skipped
    let first = sets.lines().next().unwrap().split_once(':').unwrap().0;
    fs::remove_file(dir.path().join("pred").join(format!("{first}.seg"))).unwrap();
    let out = setseg(dir.path(), &["eval", "--corpus", "data/test", "--pred", "pred", "--out", "ev2"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains(first));
    let metrics = fs::read_to_string(dir.path().join("ev2/metrics.txt")).unwrap();
    assert!(metrics.contains("videos=2"), "{metrics}");
}

#[test]
fn corrupt_model_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    fs::write(dir.path().join("model/model.bin"), b"not a model").unwrap();
    let out = setseg(dir.path(), &["infer", "--corpus", "data/test", "--model", "model", "--out", "pred"]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("model.bin"), "{}", stderr(&out));
}

#[test]
fn infeasible_videos_give_partial_exit() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    // stretch one test video far beyond what the grammar can cover with short segments
    let feats = dir.path().join("data/test/features");
    let mut names: Vec<_> = fs::read_dir(&feats).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let victim = &names[0];
    let text = fs::read_to_string(victim).unwrap();
    let mut lines = text.lines();
    let header: Vec<usize> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
    let rows: Vec<&str> = lines.collect();
    let mut stretched = format!("{} {}\n", header[0] * 40, header[1]);
    for _ in 0..40 {
        for r in &rows {
            stretched.push_str(r);
            stretched.push('\n');
        }
    }
    fs::write(victim, stretched).unwrap();
    let stem = victim.file_stem().unwrap().to_string_lossy().into_owned();
    let gt = dir.path().join("data/test/groundtruth").join(format!("{stem}.txt"));
    fs::write(&gt, fs::read_to_string(&gt).unwrap().repeat(40)).unwrap();

    let out = setseg(
        dir.path(),
        &["infer", "--corpus", "data/test", "--model", "model", "--out", "pred", "--stride", "10", "--max-len", "200"],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains(&stem));
    assert!(!dir.path().join("pred").join(format!("{stem}.seg")).exists());
    assert_eq!(fs::read_dir(dir.path().join("pred")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "seg")
    }).count(), 2);
}
