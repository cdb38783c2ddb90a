use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lqre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqre"))
        .args(args)
        .output()
        .expect("run lqre")
}

fn ok(args: &[&str]) -> Output {
    let out = lqre(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

fn gen(dir: &Path, seed: &str, extra: &[&str]) {
    let mut args = vec![
        "gen-data",
        "--out",
        path(dir),
        "--seed",
        seed,
        "--contexts",
        "30",
        "--qa-examples",
        "300",
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

fn pretrain(data: &Path, out: &Path) {
    ok(&[
        "pretrain",
        "--data",
        path(data),
        "--out",
        path(out),
        "--epochs",
        "3",
        "--dim",
        "8",
        "--seed",
        "2",
    ]);
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "4", &[]);
    gen(&b, "4", &[]);
    for f in [
        "train.jsonl",
        "dev.jsonl",
        "test.jsonl",
        "manifest.json",
        "qa_pretrain.jsonl",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    gen(&c, "5", &[]);
    assert_ne!(
        fs::read(a.join("train.jsonl")).unwrap(),
        fs::read(c.join("train.jsonl")).unwrap()
    );
}

#[test]
fn negs_double_the_train_split() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "4", &[]);
    gen(&b, "4", &["--negs"]);
    assert_eq!(lines(&b.join("train.jsonl")), 2 * lines(&a.join("train.jsonl")));
    assert_eq!(
        fs::read(a.join("test.jsonl")).unwrap(),
        fs::read(b.join("test.jsonl")).unwrap()
    );
}

#[test]
fn manifest_echoes_relation_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "1", &["--relations", "6,1,3"]);
    let m = read_json(&d.join("manifest.json"));
    assert_eq!(m["relations"], serde_json::json!({ "train": 6, "dev": 1, "test": 3 }));
    assert_eq!(m["world"]["n_train_relations"], 6);
    assert_eq!(
        m["instances"]["dev"].as_u64().unwrap() as usize,
        lines(&d.join("dev.jsonl"))
    );
}

#[test]
fn pretrain_writes_search_as_a_question_model_copy() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, m) = (tmp.path().join("d"), tmp.path().join("m"));
    gen(&d, "1", &[]);
    pretrain(&d, &m);
    assert_eq!(
        fs::read(m.join("pq.json")).unwrap(),
        fs::read(m.join("search.json")).unwrap()
    );
    let r = &read_json(&m.join("pretrain_report.json"))["report"];
    assert!(r["answer_held_out_trained"].as_f64().unwrap() > r["answer_held_out_init"].as_f64().unwrap());
    assert!(r["question_held_out_trained"].as_f64().unwrap() > r["question_held_out_init"].as_f64().unwrap());
}

#[test]
fn train_eval_infer_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, m) = (tmp.path().join("d"), tmp.path().join("m"));
    gen(&d, "1", &[]);
    pretrain(&d, &m);
    let before: Vec<Vec<u8>> = ["pq.json", "pa.json", "search.json", "vocab.txt"]
        .iter()
        .map(|f| fs::read(m.join(f)).unwrap())
        .collect();
    let train_before = fs::read(d.join("train.jsonl")).unwrap();

    let run = |out: &Path| {
        ok(&[
            "train",
            "--data",
            path(&d),
            "--models",
            path(&m),
            "--out",
            path(out),
            "--objective",
            "OFFMML_G",
            "--epochs",
            "1",
            "--eval-every",
            "20",
            "--samples",
            "2",
            "--lr",
            "0.1",
            "--seed",
            "3",
        ]);
    };
    let (t1, t2) = (tmp.path().join("t1"), tmp.path().join("t2"));
    run(&t1);
    run(&t2);
    let after: Vec<Vec<u8>> = ["pq.json", "pa.json", "search.json", "vocab.txt"]
        .iter()
        .map(|f| fs::read(m.join(f)).unwrap())
        .collect();
    assert_eq!(before, after, "pretrained checkpoints must stay untouched");
    assert_eq!(train_before, fs::read(d.join("train.jsonl")).unwrap());
    assert!(!t1.join("search.json").exists());
    assert!(lines(&t1.join("train_log.jsonl")) > 0);
    assert_eq!(read_json(&t1.join("run_config.json"))["objective"], "OFFMML_G");
    for f in ["pq.json", "pa.json", "train_log.jsonl", "dev_history.json"] {
        assert_eq!(fs::read(t1.join(f)).unwrap(), fs::read(t2.join(f)).unwrap(), "{f}");
    }

    let eval = |out: &Path| {
        ok(&[
            "eval",
            "--data",
            path(&d),
            "--split",
            "dev",
            "--models",
            path(&t1),
            "--out",
            path(out),
            "--seed",
            "3",
        ]);
        read_json(out)
    };
    let r1 = eval(&tmp.path().join("r1.json"));
    let r2 = eval(&tmp.path().join("r2.json"));
    assert_eq!(r1, r2);
    for k in ["precision", "recall", "f1"] {
        assert!(r1["te"][k].is_number(), "te.{k}");
        assert!(r1["zre"][&format!("macro_{k}")].is_number(), "zre.macro_{k}");
    }

    let te_only = ok(&[
        "eval",
        "--data",
        path(&d),
        "--split",
        "dev",
        "--models",
        path(&t1),
        "--mode",
        "te",
    ]);
    let te_only: Value = serde_json::from_slice(&te_only.stdout).unwrap();
    assert!(te_only["te"].is_object());
    assert!(te_only.get("zre").is_none_or(Value::is_null));

    let infer = ok(&[
        "infer",
        "--data",
        path(&d),
        "--split",
        "dev",
        "--models",
        path(&t1),
        "--samples",
        "2",
    ]);
    let text = String::from_utf8(infer.stdout).unwrap();
    assert_eq!(text.lines().count(), lines(&d.join("dev.jsonl")));
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for k in ["head", "relation", "question", "tail"] {
        assert!(first.get(k).is_some(), "{k}");
    }
    assert_eq!(first["sampled_questions"].as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"wrld": {}}"#).unwrap();
    assert_eq!(
        lqre(&["gen-data", "--out", path(&d), "--config", path(&bad)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lqre(&["gen-data", "--out", path(&d), "--relations", "6,1"])
            .status
            .code(),
        Some(2)
    );

    gen(&d, "1", &[]);
    let m = tmp.path().join("m");
    pretrain(&d, &m);
    let t = tmp.path().join("t");
    let base = ["train", "--data", path(&d), "--models", path(&m), "--out", path(&t)];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        lqre(&a).status.code()
    };
    assert_eq!(with(&["--objective", "NOPE"]), Some(2));
    assert_eq!(with(&["--p", "1.5"]), Some(2));
    assert_eq!(with(&["--samples", "0"]), Some(2));
}

#[test]
fn data_errors_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    assert_eq!(
        lqre(&[
            "pretrain",
            "--data",
            path(&missing),
            "--out",
            path(&tmp.path().join("m"))
        ])
        .status
        .code(),
        Some(3)
    );

    let d = tmp.path().join("d");
    gen(&d, "1", &[]);
    let m = tmp.path().join("m");
    pretrain(&d, &m);
    let junk = tmp.path().join("junk.jsonl");
    fs::write(&junk, "{\"head\": 3\n").unwrap();
    let out = lqre(&["eval", "--input", path(&junk), "--models", path(&m)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(m.join("pq.json"), "not json").unwrap();
    assert_eq!(
        lqre(&["eval", "--data", path(&d), "--models", path(&m)]).status.code(),
        Some(3)
    );
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"world": {"n_train_relations": 4, "contexts_per_relation": 20, "seed": 9}, "qa": {"n_examples": 50}}"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["gen-data", "--out", path(&a), "--config", path(&cfg)]);
    ok(&[
        "gen-data",
        "--out",
        path(&b),
        "--config",
        path(&cfg),
        "--relations",
        "5,1,2",
        "--seed",
        "11",
    ]);
    let ma = read_json(&a.join("manifest.json"));
    let mb = read_json(&b.join("manifest.json"));
    assert_eq!(ma["relations"]["train"], 4);
    assert_eq!(ma["world"]["seed"], 9);
    assert_eq!(ma["world"]["contexts_per_relation"], 20);
    assert_eq!(mb["relations"], serde_json::json!({ "train": 5, "dev": 1, "test": 2 }));
    assert_eq!(mb["world"]["seed"], 11);
    assert_eq!(mb["world"]["contexts_per_relation"], 20);
    assert_eq!(
        mb["instances"]["qa_pretrain"].as_u64().unwrap() as usize,
        lines(&b.join("qa_pretrain.jsonl"))
    );
}
