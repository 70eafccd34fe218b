use std::path::Path;
use std::process::{Command, Output};

use infill::dsp::{write_wav, AudioClip, SAMPLE_RATE};
use serde_json::Value;

fn infill(args: &[&str]) -> (i32, Value, Output) {
    let out = Command::new(env!("CARGO_BIN_EXE_infill"))
        .args(args)
        .env_remove("INFILL_CHECKPOINT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let json: Value = serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("stdout is not one JSON document ({e}): {stdout}"));
    (out.status.code().unwrap(), json, out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path) -> std::path::PathBuf {
    let (code, json, _) = infill(&["synth-corpus", "--out-dir", s(&dir.join("c")), "--utterances", "4", "--seed", "1"]);
    assert_eq!(code, 0);
    json["manifest"].as_str().unwrap().into()
}

fn trained(dir: &Path, manifest: &Path, name: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let (code, json, _) = infill(&[
        "train", "--manifest", s(manifest), "--out-dir", s(&out), "--seed", "7", "--epochs", "2", "--batch-size", "2", "--preset", "tiny",
    ]);
    assert_eq!(code, 0, "{json}");
    assert_eq!(json["steps"], 4);
    out
}

#[test]
fn one_second_wav_gives_81_frames() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("a.wav");
    let samples = (0..SAMPLE_RATE as usize).map(|i| (i as f32 * 0.05).sin() * 0.3).collect();
    write_wav(&wav, &AudioClip::new(samples, SAMPLE_RATE).unwrap()).unwrap();
    let out = dir.path().join("mel");
    let (code, json, _) = infill(&["mel", "--wav", s(&wav), "--out", s(&out)]);
    assert_eq!(code, 0);
    assert_eq!(json["frames"], 81);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tensors"][0]["shape"], serde_json::json!([81, 80]));

    let (code, json, _) = infill(&["vocode", "--mel", s(&out), "--out", s(&dir.path().join("v.wav")), "--seed", "0", "--gl-iters", "3"]);
    assert_eq!(code, 0);
    assert_eq!(json["samples"], 80 * 300);
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, json, _) = infill(&["mel", "--wav", s(&dir.path().join("none.wav")), "--out", s(dir.path())]);
    assert_eq!(code, 2);
    assert_eq!(json["ok"], false);
}

#[test]
fn bad_flags_are_usage_errors() {
    for args in [&["frobnicate"][..], &["mel", "--wav"], &["synth-corpus", "--out-dir", "x"]] {
        let (code, json, out) = infill(args);
        assert_eq!(code, 1, "{args:?}");
        assert_eq!(json["exit_code"], 1);
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn oracle_durations_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let (code, json, _) = infill(&["eval-dur", "--manifest", s(&manifest), "--seed", "0", "--oracle", "--details"]);
    assert_eq!(code, 0);
    assert_eq!(json["phoneme_level_error"], 0.0);
    assert_eq!(json["word_level_error"], 0.0);
    assert_eq!(json["n_words"], 4);
    assert_eq!(json["words"].as_array().unwrap().len(), 4);
}

#[test]
fn training_twice_gives_identical_loss_curves() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let a = trained(dir.path(), &manifest, "a");
    let b = trained(dir.path(), &manifest, "b");
    let csv = |d: &Path| std::fs::read_to_string(d.join("loss.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));
    // Rerunning into the same directory overwrites cleanly.
    let again = trained(dir.path(), &manifest, "a");
    assert_eq!(csv(&again), csv(&b));
    for d in ["last", "best"] {
        let name = |root: &Path| std::fs::read(root.join(d).join("params.bin")).unwrap();
        assert_eq!(name(&a), name(&b));
    }
    let leftovers: Vec<_> = std::fs::read_dir(a.join("last"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn edit_and_resynth_round() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let ck = trained(dir.path(), &manifest, "run").join("last");
    let c = manifest.parent().unwrap();
    let (wav, ali) = (c.join("syn0000.wav"), c.join("syn0000.json"));
    let out = dir.path().join("edit.wav");
    let base = ["--audio", s(&wav), "--alignment", s(&ali), "--out", s(&out), "--seed", "3", "--gl-iters", "4"];

    let mut args = vec!["edit", "--checkpoint", s(&ck), "--insert-after-word", "-1", "--phonemes", "K AE1 T", "--word", "cat"];
    args.extend(base);
    let (code, json, _) = infill(&args);
    assert_eq!(code, 0, "{json}");
    assert_eq!(json["phonemes"], serde_json::json!(["K", "AE1", "T"]));
    let frames = json["script"]["edited_frames"].as_u64().unwrap();
    assert_eq!(json["output_samples"].as_u64().unwrap(), json["input_samples"].as_u64().unwrap() + frames * 300);
    assert!(out.exists());

    let mut args = vec!["edit", "--checkpoint", s(&ck), "--insert-after-word", "0", "--phonemes", ""];
    args.extend(base);
    assert_eq!(infill(&args).0, 1);
    let mut args = vec!["edit", "--checkpoint", s(&ck), "--insert-after-word", "0", "--phonemes", "K QQ"];
    args.extend(base);
    assert_eq!(infill(&args).0, 1);
    let mut args = vec!["edit", "--checkpoint", s(&ck), "--insert-after-word", "9", "--phonemes", "K"];
    args.extend(base);
    assert_eq!(infill(&args).0, 1);

    // Checkpoint from the environment, resynthesis of every word.
    let mut args = vec!["resynth"];
    args.extend(base);
    let resynth = Command::new(env!("CARGO_BIN_EXE_infill"))
        .args(&args)
        .env("INFILL_CHECKPOINT", &ck)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(resynth.status.code(), Some(0));
    let json: Value = serde_json::from_slice(&resynth.stdout).unwrap();
    assert!(!json["words"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let cfg = dir.path().join("run.json");
    let text = serde_json::json!({
        "manifest": manifest,
        "out_dir": dir.path().join("cfg"),
        "seed": 5,
        "preset": "tiny",
        "model": { "hidden_dim": 16 },
        "epochs": 1,
        "batch_size": 4,
    });
    std::fs::write(&cfg, text.to_string()).unwrap();
    let (code, json, _) = infill(&["--config", s(&cfg), "train", "--epochs", "3"]);
    assert_eq!(code, 0, "{json}");
    assert_eq!(json["model"]["hidden_dim"], 16);
    assert_eq!(json["train"]["seed"], 5);
    assert_eq!(json["epochs_run"], 3);

    std::fs::write(&cfg, r#"{"model": {"hiden_dim": 16}, "seed": 1}"#).unwrap();
    let (code, _, _) = infill(&["--config", s(&cfg), "train", "--manifest", s(&manifest), "--out-dir", s(dir.path())]);
    assert_eq!(code, 1);
    let (code, _, _) = infill(&["--config", s(&dir.path().join("absent.json")), "synth-corpus", "--out-dir", "x", "--seed", "1"]);
    assert_eq!(code, 2);
}
