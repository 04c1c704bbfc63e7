use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mpu-embed"));
    c.env("MPU_EMBED_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// small, fast settings so the whole pipeline runs in a few seconds
const QUICK: &[&str] = &[
    "--set",
    "embed_dim=8",
    "--set",
    "max_epochs=3",
    "--set",
    "patience=2",
    "--set",
    "batch_size=256",
    "--set",
    "walks_per_node=2",
    "--set",
    "walk_length=10",
];

fn synth(dir: &Path, seed: &str) {
    let o = run(&[
        "gen-synthetic",
        "--out",
        p(dir),
        "--seed",
        seed,
        "--nodes-per-type",
        "20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn train(graph: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--graph", p(graph), "--out", p(out), "--seed", "3"];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn missing_flag_is_a_usage_error() {
    assert_eq!(run(&["query", "--node", "1"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        run(&["eval", "--checkpoint", "x", "--graph", "y", "--task", "nope"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn runtime_failure_exits_one() {
    let o = run(&["ingest", "--graph", "/definitely/not/here"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn synthetic_output_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, "7");
    synth(&b, "7");
    for f in ["node.dat", "link.dat", "label.dat", "schema.dat"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = run(&["ingest", "--graph", p(&a)]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("nodes=40"));
    assert!(s.contains("mpu=(A,M)"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let g = t.path().join("g");
    synth(&g, "1");
    let cfg = t.path().join("run.conf");
    fs::write(&cfg, "embed_dim = 8\nbogus_key = 1\n").unwrap();
    let o = run(&[
        "train",
        "--graph",
        p(&g),
        "--out",
        p(&t.path().join("c")),
        "--config",
        p(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));
}

#[test]
fn train_query_eval_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let g = t.path().join("g");
    synth(&g, "5");
    let ck = t.path().join("model.ckpt");
    let corpus = t.path().join("walks");
    let o = train(&g, &ck, &["--dump-corpus", p(&corpus)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("config_hash="));
    assert!(corpus.join("A-M.walks").is_file());
    assert!(t.path().join("model.ckpt.json").is_file());

    let o = run(&[
        "query",
        "--checkpoint",
        p(&ck),
        "--path",
        "AMA",
        "--node",
        "3",
        "--k",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 5);
    for (i, l) in lines.iter().enumerate() {
        let cols: Vec<&str> = l.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[0], (i + 1).to_string());
        assert_ne!(cols[1], "3");
    }

    let report = t.path().join("link.txt");
    let args = [
        "eval",
        "--checkpoint",
        p(&ck),
        "--graph",
        p(&g),
        "--task",
        "link",
        "--path",
        "AMA",
        "--out",
        p(&report),
    ];
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("auc=") && s.contains("mrr="));
    assert_eq!(fs::read_to_string(&report).unwrap(), s);
    // same checkpoint, same seed → same report
    assert_eq!(stdout(&run(&args)), s);

    let o = run(&["eval", "--checkpoint", p(&ck), "--graph", p(&g), "--task", "class"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("micro_f1="));

    let o = run(&[
        "eval",
        "--checkpoint",
        p(&ck),
        "--graph",
        p(&g),
        "--task",
        "retrieval",
        "--path",
        "AMA",
        "--k",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("ndcg_at_k="));

    // a path over an unknown type is a runtime error
    let o = run(&["query", "--checkpoint", p(&ck), "--path", "AXA", "--node", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn training_and_export_are_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let g = t.path().join("g");
    synth(&g, "2");
    let (c1, c2) = (t.path().join("one.ckpt"), t.path().join("two.ckpt"));
    let (d1, d2) = (t.path().join("w1"), t.path().join("w2"));
    assert!(train(&g, &c1, &["--dump-corpus", p(&d1)]).status.success());
    assert!(train(&g, &c2, &["--dump-corpus", p(&d2)]).status.success());
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c2).unwrap());
    assert_eq!(
        fs::read(d1.join("A-M.walks")).unwrap(),
        fs::read(d2.join("A-M.walks")).unwrap()
    );
    let (e1, e2) = (t.path().join("e1.tsv"), t.path().join("e2.tsv"));
    for (c, e) in [(&c1, &e1), (&c2, &e2)] {
        let o = run(&[
            "query",
            "--checkpoint",
            p(c),
            "--path",
            "AM",
            "--node",
            "0",
            "--out",
            p(e),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&e1).unwrap();
    assert_eq!(text, fs::read_to_string(&e2).unwrap());
    assert_eq!(text.lines().count(), 20);
    assert!(text
        .lines()
        .all(|l| l.split('\t').nth(1).unwrap().split(',').count() == 8));
}

#[test]
fn ablation_flags_reach_the_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    let g = t.path().join("g");
    synth(&g, "4");
    let ck = t.path().join("abl.ckpt");
    let o = train(&g, &ck, &["--no-intra-attn", "--no-inter-attn"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: String = fs::read_to_string(t.path().join("abl.ckpt.json"))
        .unwrap()
        .split_whitespace()
        .collect();
    assert!(manifest.contains(r#""disable_intra_attention":"true""#));
    assert!(manifest.contains(r#""disable_inter_attention":"true""#));
}
