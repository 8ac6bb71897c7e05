mod common;

use std::fs;
use std::process::Command;

use stresswatch::ingest::synth_generate;

use common::{bin, run_bin, stderr, stdout, write_csv};

/// Keeps CLI runs quick; the defaults embed in 100 dimensions.
const FAST: [&str; 6] = [
    "--set",
    "features.w2v.dim=16",
    "--set",
    "features.w2v.epochs=3",
    "--set",
    "features.w2v.min_count=1",
];

fn args<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = head.to_vec();
    v.extend(FAST);
    v.extend(tail);
    v
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_csv(&dir.path().join("data.csv"), &synth_generate(300, 21, 0.4));
    dir
}

#[test]
fn train_is_byte_reproducible() {
    let dir = setup();
    let run = |out: &str| {
        let o = run_bin(
            dir.path(),
            &args(
                &["--seed", "9", "--created-at", "1700000000000"],
                &["train", "logreg", "--data", "data.csv", "--out", out],
            ),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let (r1, r2) = (run("a.json"), run("b.json"));
    assert_eq!(r1, r2);
    assert!(r1.contains("LogisticRegression"), "{r1}");
    let (a, b) = (
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap(),
    );
    assert_eq!(a, b);

    // A different seed changes the artifact.
    let o = run_bin(
        dir.path(),
        &args(
            &["--seed", "10", "--created-at", "1700000000000"],
            &["train", "logreg", "--data", "data.csv", "--out", "c.json"],
        ),
    );
    assert!(o.status.success());
    assert_ne!(a, fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn model_flag_and_positional_are_equivalent() {
    let dir = setup();
    for (i, form) in [vec!["train", "svm"], vec!["train", "--model", "svm"]]
        .iter()
        .enumerate()
    {
        let mut tail = form.clone();
        let out = format!("m{i}.json");
        tail.extend(["--data", "data.csv", "--out", &out]);
        let o = run_bin(dir.path(), &args(&["--created-at", "1"], &tail));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(dir.path().join("m0.json")).unwrap(),
        fs::read(dir.path().join("m1.json")).unwrap()
    );
}

#[test]
fn crossval_reports_are_reproducible_csv() {
    let dir = setup();
    let run = || {
        let o = run_bin(
            dir.path(),
            &args(
                &["--format", "csv"],
                &["crossval", "dtree", "--data", "data.csv", "--k", "4"],
            ),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let r1 = run();
    assert_eq!(r1, run());
    assert!(r1.lines().count() >= 2, "{r1}");
}

#[test]
fn evaluate_matches_train_report() {
    let dir = setup();
    let o = run_bin(
        dir.path(),
        &args(
            &[],
            &[
                "train", "logreg", "--data", "data.csv", "--test", "data.csv", "--out", "m.json",
            ],
        ),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trained = stdout(&o);
    let o = run_bin(
        dir.path(),
        &["evaluate", "--model-path", "m.json", "--data", "data.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), trained);
}

#[test]
fn pipeline_demo_is_reproducible_and_agrees() {
    let dir = setup();
    let o = run_bin(
        dir.path(),
        &args(
            &["--created-at", "5"],
            &["train", "logreg", "--data", "data.csv", "--out", "m.json"],
        ),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let run = || {
        let o = run_bin(
            dir.path(),
            &["pipeline-demo", "--model-path", "m.json", "--count", "120"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("posts/s"));
        stdout(&o)
    };
    let r1 = run();
    assert_eq!(r1, run());
    assert!(r1.contains("batch agreement: 120/120"), "{r1}");
    assert!(r1.contains("dead letters: 0"), "{r1}");
}

#[test]
fn produce_serve_dedup_roundtrip() {
    let dir = setup();
    let o = run_bin(
        dir.path(),
        &args(
            &["--created-at", "5"],
            &["train", "logreg", "--data", "data.csv", "--out", "m.json"],
        ),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run_bin(dir.path(), &["produce", "--count", "40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run_bin(
        dir.path(),
        &[
            "serve-stream",
            "--model-path",
            "m.json",
            "--trigger-interval-ms",
            "10",
            "--stop-on-idle-ms",
            "100",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run_bin(dir.path(), &["dedup", "--topic", "predictions", "--out", "preds.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("preds.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 40);
    assert!(text.lines().all(|l| l.starts_with("{\"post_id\":")));
}

#[test]
fn env_overrides_and_flag_precedence() {
    let dir = setup();
    fs::write(dir.path().join("cfg.toml"), "seed = 1\nsplit_ratio = 0.5\n").unwrap();
    let with = |envs: &[(&str, &str)], extra: &[&str]| {
        let mut cmd = Command::new(bin());
        cmd.current_dir(dir.path());
        for (k, v) in envs {
            cmd.env(k, v);
        }
        let mut a = args(&["--config", "cfg.toml"], extra);
        a.extend(["train", "logreg", "--data", "data.csv", "--out", "m.json"]);
        let o = cmd.args(a).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join("m.json")).unwrap()
    };
    let by_flag = with(&[], &["--seed", "3", "--created-at", "1"]);
    let by_env = with(&[("STRESSWATCH_SEED", "3"), ("STRESSWATCH_CREATED_AT", "1")], &[]);
    assert_eq!(by_flag, by_env);
    let flag_wins = with(&[("STRESSWATCH_SEED", "4")], &["--seed", "3", "--created-at", "1"]);
    assert_eq!(by_flag, flag_wins);
    let from_file = with(&[("STRESSWATCH_CREATED_AT", "1")], &[]);
    assert_ne!(by_flag, from_file);
}

#[test]
fn exit_codes() {
    let dir = setup();
    assert_eq!(
        run_bin(dir.path(), &["train", "bert", "--data", "data.csv"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run_bin(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        run_bin(dir.path(), &["train", "logreg", "--data", "missing.csv"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run_bin(dir.path(), &["dag", "status", "nope"]).status.code(), Some(1));
    assert_eq!(
        run_bin(dir.path(), &["--set", "bogus_key=1", "stats", "--data", "data.csv"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run_bin(dir.path(), &["stats", "--data", "data.csv"]).status.code(),
        Some(0)
    );
}

#[test]
fn dag_run_skips_dependents_of_failures() {
    let dir = setup();
    let dag = r#"
dag_id = "mixed"

[[task]]
name = "ok"
command = ["true"]

[[task]]
name = "boom"
command = ["false"]
retries = 1
depends_on = ["ok"]

[[task]]
name = "after"
command = ["true"]
depends_on = ["boom"]
"#;
    fs::write(dir.path().join("dag.toml"), dag).unwrap();
    let o = run_bin(dir.path(), &["dag", "validate", "dag.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run_bin(dir.path(), &["dag", "run", "dag.toml", "--run-id", "r1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let st = run_bin(dir.path(), &["dag", "status", "r1"]);
    assert!(st.status.success());
    let text = stdout(&st);
    for (task, status) in [("ok", "success"), ("boom", "failed"), ("after", "skipped")] {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(task))
            .unwrap_or_else(|| panic!("no line for {task} in\n{text}"));
        assert!(line.contains(status), "{line}");
    }

    fs::write(
        dir.path().join("cyc.toml"),
        "dag_id = \"c\"\n[[task]]\nname = \"a\"\ncommand = [\"true\"]\ndepends_on = [\"b\"]\n[[task]]\nname = \"b\"\ncommand = [\"true\"]\ndepends_on = [\"a\"]\n",
    )
    .unwrap();
    let o = run_bin(dir.path(), &["dag", "validate", "cyc.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("cycle"), "{}", stdout(&o));
}
