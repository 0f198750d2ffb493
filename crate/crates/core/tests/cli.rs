use std::path::Path;
use std::process::{Command, Output};

fn wordvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordvec")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn corpus(dir: &Path) -> String {
    let text: String = (0..200)
        .map(|i| format!("the cat sat on mat {}\nthe dog ran in park {}\n", i % 3, i % 4))
        .collect();
    let path = dir.join("corpus.txt");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn train_args<'a>(corpus: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--corpus", corpus, "--output", out, "--dim", "8", "--min-count", "1", "--epochs", "2",
        "--sample", "0",
    ]
}

#[test]
fn train_writes_embeddings_manifest_and_loss_log() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path());
    let out = dir.path().join("emb.bin");
    let manifest = dir.path().join("run.json");
    let loss = dir.path().join("loss.csv");
    let target = dir.path().join("target.bin");
    let (out_s, manifest_s, loss_s, target_s) = (
        out.to_str().unwrap(),
        manifest.to_str().unwrap(),
        loss.to_str().unwrap(),
        target.to_str().unwrap(),
    );
    let mut args = train_args(&corpus, out_s);
    args.extend([
        "--format", "binary", "--manifest", manifest_s, "--loss-log", loss_s, "--save-target", target_s,
        "--loss-interval", "500",
    ]);
    let o = wordvec(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let printed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert_eq!(saved["config"]["mode"], "cbow_correct");
    assert_eq!(saved["config"]["lr0"], 0.075);
    assert_eq!(saved["corpus_stats"]["tokens"], 2400);
    assert!(saved["timing"]["tokens_per_second"].as_f64().unwrap() > 0.0);

    let emb = wordvec::io::Embeddings::load(&out, wordvec::io::Format::Binary, false).unwrap();
    assert_eq!(emb.dim(), 8);
    assert_eq!(emb.words()[0], "the");
    assert!(target.exists());
    assert!(std::fs::read_to_string(&loss).unwrap().starts_with("tokens,loss\n"));

    // the manifest's config is complete: replaying it reproduces the model
    let config: wordvec::trainer::TrainConfig = serde_json::from_value(saved["config"].clone()).unwrap();
    let replay = wordvec::trainer::train::<f32>(&corpus, &config).unwrap();
    let replayed = wordvec::io::Embeddings::from_model(&replay.model, &replay.vocab, wordvec::io::Side::Source);
    assert_eq!(replayed, emb);
}

#[test]
fn sg_default_learning_rate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path());
    let out = dir.path().join("e.txt");
    let mut args = train_args(&corpus, out.to_str().unwrap());
    args.extend(["--mode", "sg"]);
    let o = wordvec(&args);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["config"]["lr0"], 0.025);
}

#[test]
fn faulty_skipgram_is_rejected() {
    let o = wordvec(&["train", "--corpus", "x", "--output", "y", "--mode", "sg", "--faulty"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--faulty"));
}

#[test]
fn unknown_flag_is_rejected() {
    let o = wordvec(&["gradcheck", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_status_tracks_result() {
    let ok = wordvec(&["gradcheck", "--trials", "10"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(stdout(&ok).starts_with("PASS"));
    let bad = wordvec(&["gradcheck", "--mode", "cbow_faulty", "--trials", "10", "--json"]);
    assert!(!bad.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(report["all_passed"], false);
}

#[test]
fn help_documents_defaults() {
    let o = wordvec(&["train", "--help"]);
    assert!(o.status.success());
    let help = stdout(&o);
    for needle in ["[default: 300]", "[default: 5]", "[default: 10]", "[default: 0.001]", "0.075", "cbow_correct"] {
        assert!(help.contains(needle), "missing {needle}");
    }
    for sub in [&["eval", "--help"][..], &["gradcheck", "--help"], &["analyze", "norms", "--help"]] {
        assert!(wordvec(sub).status.success());
    }
}

#[test]
fn analyze_angle_grid_csv() {
    let o = wordvec(&["analyze", "angle-grid", "--c-max", "20", "--k-max", "20"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("C,k,cosine"));
    assert_eq!(lines.count(), 20 * 21);
    assert!(String::from_utf8_lossy(&o.stderr).contains("C=9 k=20"));
}

#[test]
fn analyze_descent_summary() {
    let o = wordvec(&["analyze", "descent", "--trials", "500"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("PASS"));
}

#[test]
fn analyze_norms_and_loss_curve() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path());
    let o = wordvec(&[
        "analyze", "norms", "--corpus", &corpus, "--windows", "1,3", "--dim", "8", "--min-count", "1",
        "--epochs", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    assert!(csv.starts_with("mode,c_max,source_norm,target_norm\n"));
    assert_eq!(csv.lines().count(), 5);

    let log = dir.path().join("loss.csv");
    std::fs::write(&log, "tokens,loss\n100,2.5\n200,2.25\n").unwrap();
    let o = wordvec(&["analyze", "loss-curve", "--log", log.to_str().unwrap()]);
    assert_eq!(stdout(&o), "tokens,loss\n100,2.5\n200,2.25\n");
}

#[test]
fn eval_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("e.txt");
    std::fs::write(
        &emb,
        "4 3\nman 1 0 0\nking 1 1 0\nwoman 0 0 1\nqueen 0 1 1\n",
    )
    .unwrap();
    let an = dir.path().join("an.txt");
    std::fs::write(&an, ": toy\nMan King Woman Queen\nwoman queen man king\n").unwrap();
    let sim = dir.path().join("sim.txt");
    std::fs::write(&sim, "man king 5\nman woman 3\nking queen 4\nwoman queen 5\n").unwrap();
    let o = wordvec(&[
        "eval",
        "--embeddings",
        emb.to_str().unwrap(),
        "--analogy",
        &format!("toy={}", an.display()),
        "--similarity",
        sim.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["tasks"].as_array().unwrap().len(), 2);
    let toy = r["tasks"].as_array().unwrap().iter().find(|t| t["name"] == "toy").unwrap();
    assert_eq!(toy["dev"], 1.0);
    assert_eq!(toy["test"], 1.0);
}
