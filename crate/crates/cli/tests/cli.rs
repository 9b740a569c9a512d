use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn misalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_misalign"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        r#"{"provider": {"embedding_dim": 32}, "train": {"hidden_dim": 32, "epochs": 60, "batch_size": 16}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_train_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = misalign(&["synth-corpus", "--n-real", "40", "--n-fake", "40", "--out", s(&corpus)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = corpus.join("manifest.jsonl");
    let cfg = small_config(dir.path());
    let model_dir = dir.path().join("model");

    let o = misalign(&["--config", &cfg, "--seed", "3", "train", "--manifest", s(&manifest), "--out", s(&model_dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(model_dir.join("model.itmc").exists());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(model_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["sample_count"], 80);

    let eval_dir = dir.path().join("eval");
    let model = model_dir.join("model.itmc");
    let o = misalign(&[
        "--config", &cfg, "--seed", "3", "--parallelism", "4", "eval", "--manifest", s(&manifest), "--model", s(&model),
        "--out", s(&eval_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["acc"].as_f64().unwrap() >= 0.95, "{summary}");
    assert_eq!(fs::read_to_string(eval_dir.join("scores.csv")).unwrap().lines().count(), 81);
    assert!(eval_dir.join("metrics.json").exists());
    assert!(eval_dir.join("eval_run.json").exists());

    let reps = dir.path().join("reps");
    let o = misalign(&["--config", &cfg, "--mode", "global_only", "export-reps", "--manifest", s(&manifest), "--out", s(&reps)]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(reps.join("representations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 81);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 3 + 32);

    let o = misalign(&["--config", &cfg, "featurize", "--manifest", s(&manifest), "--out", s(&reps)]);
    assert_eq!(code(&o), 0);
    assert!(corpus.join("manifest.augmented.jsonl").exists());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&misalign(&["no-such-command"])), 1);
    assert_eq!(code(&misalign(&["train"])), 1);
    assert_eq!(code(&misalign(&["--mode", "sideways", "train", "--manifest", "m"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"epochs": 0}}"#).unwrap();
    assert_eq!(code(&misalign(&["--config", s(&bad), "train", "--manifest", "m.jsonl"])), 1);
    assert_eq!(code(&misalign(&["--config", s(&dir.path().join("missing.json")), "train", "--manifest", "m"])), 1);
    assert_eq!(code(&misalign(&["--provider", "remote", "train", "--manifest", "m.jsonl"])), 1);
    assert_eq!(code(&misalign(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&misalign(&["train", "--manifest", s(&dir.path().join("absent.jsonl")), "--out", s(dir.path())])), 2);

    let corpus = dir.path().join("real_only");
    assert_eq!(code(&misalign(&["synth-corpus", "--n-real", "4", "--n-fake", "0", "--out", s(&corpus)])), 0);
    let o = misalign(&["train", "--manifest", s(&corpus.join("manifest.jsonl")), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("single class"));

    let dup = dir.path().join("dup.jsonl");
    fs::write(&dup, "{\"id\": \"a\", \"image\": \"x\", \"label\": 0}\n{\"id\": \"a\", \"image\": \"y\", \"label\": 1}\n").unwrap();
    assert_eq!(code(&misalign(&["featurize", "--manifest", s(&dup), "--out", s(dir.path())])), 2);
}

#[test]
fn provider_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    assert_eq!(code(&misalign(&["synth-corpus", "--n-real", "2", "--n-fake", "2", "--out", s(&corpus)])), 0);
    let manifest = s(&corpus.join("manifest.jsonl")).to_string();
    // no stored captions or embeddings: the file provider refuses to invent them
    let o = misalign(&["--provider", "file", "--strict", "featurize", "--manifest", &manifest, "--out", s(dir.path())]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let o = misalign(&["--provider", "file", "featurize", "--manifest", &manifest, "--out", s(dir.path())]);
    assert_eq!(code(&o), 2, "all samples failing is a data error");

    let cfg = dir.path().join("remote.json");
    fs::write(&cfg, r#"{"provider": {"kind": "remote", "endpoint": "http://127.0.0.1:9", "remote": {"timeout_secs": 2}}}"#).unwrap();
    let img = dir.path().join("img");
    fs::create_dir_all(&img).unwrap();
    image::RgbImage::new(8, 8).save(img.join("a.png")).unwrap();
    let png_manifest = img.join("m.jsonl");
    fs::write(&png_manifest, "{\"id\": \"a\", \"image\": \"a.png\", \"label\": 0}\n").unwrap();
    // nothing listens on the discard port
    let o = misalign(&["--config", s(&cfg), "--strict", "featurize", "--manifest", s(&png_manifest), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sample a"));
}

#[test]
fn strict_flag_aborts_on_a_corrupt_sample() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    assert_eq!(code(&misalign(&["synth-corpus", "--n-real", "5", "--n-fake", "5", "--out", s(&corpus)])), 0);
    let manifest = s(&corpus.join("manifest.jsonl")).to_string();
    let text = fs::read_to_string(&manifest).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().nth(3).unwrap()).unwrap();
    fs::write(corpus.join(first["image"].as_str().unwrap()), b"garbage").unwrap();

    let out = dir.path().join("o");
    let o = misalign(&["featurize", "--manifest", &manifest, "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let failures: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures.as_array().unwrap().len(), 1);
    assert_eq!(failures[0]["id"], first["id"]);

    let o = misalign(&["--strict", "featurize", "--manifest", &manifest, "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains(first["id"].as_str().unwrap()));
}

#[test]
fn perturb_mirrors_directories() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(input.join("fake")).unwrap();
    let img = image::RgbImage::from_fn(16, 16, |x, y| image::Rgb([(x * 16) as u8, (y * 16) as u8, 7]));
    img.save(input.join("fake/a.png")).unwrap();
    let out = dir.path().join("out");
    let o = misalign(&["perturb", "--kind", "jpeg", "--param", "50", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("fake/a.jpg").exists());
    let o = misalign(&["--seed", "4", "perturb", "--kind", "noise", "--param", "0.01", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(out.join("fake/a.png").exists());
    assert_eq!(code(&misalign(&["perturb", "--kind", "blur", "--param", "0", "--in", s(&input), "--out", s(&out)])), 1);
    assert_eq!(code(&misalign(&["perturb", "--kind", "jpeg", "--param", "0", "--in", s(&input), "--out", s(&out)])), 1);
}
