mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::assert_schema;
use covergen_core::metrics::write_raw_f32;
use covergen_core::train::{preset, TrainPreset, PRESET_NAMES};
use serde_json::Value;

fn covergen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covergen"))
        .args(args)
        .env_remove("COVERGEN_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/fixture")
}

#[test]
fn augment_prints_candidates() {
    let v = stdout_json(&covergen(&["augment", "--title", "Adventure in a forest", "--count", "2", "--seed", "1"]));
    assert_schema("augment-response", &v);
    let c = v["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 2);
    assert!(c.iter().all(|c| c["tokens"][1] == "in" && c["tokens"][2] == "a"));
    let rr = stdout_json(&covergen(&["augment", "--title", "Lost at sea", "--count", "20", "--roundrobin"]));
    // 5 options for "lost", 3 for "sea": the cycle closes after lcm(5, 3) titles
    assert_eq!(rr["candidates"].as_array().unwrap().len(), 15);
    assert!(!covergen(&["augment", "--title", "Lost at sea", "--count", "0"]).status.success());
}

#[test]
fn run_with_stub_persists() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let m = stdout_json(&covergen(&["run", "--title", "Lost at sea", "--stub", "--seed", "5", "--out", out_dir]));
    assert_schema("manifest", &m);
    assert_eq!(m["covers"].as_array().unwrap().len(), 10);
    let run = dir.path().join(m["run_id"].as_str().unwrap());
    assert!(run.join("manifest.json").is_file());
    for c in m["covers"].as_array().unwrap() {
        assert!(run.join(c["file"].as_str().unwrap()).is_file());
    }
    let small = stdout_json(&covergen(&[
        "run", "--title", "Lost at sea", "--stub", "--variants", "3", "--top-k", "2", "--out", out_dir,
    ]));
    assert_eq!(small["covers"].as_array().unwrap().len(), 4);
    assert_eq!(small["covers"].as_array().unwrap().iter().filter(|c| c["kept"] == true).count(), 2);
    assert!(!covergen(&["run", "--title", "", "--stub", "--out", out_dir]).status.success());
}

#[test]
fn config_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "num_variants = 2\ntop_k = 2\nrun_store = \"store\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_covergen"))
        .args(["run", "--title", "Lost at sea", "--config", "/nonexistent/covergen.toml"])
        .env("COVERGEN_CONFIG", &good)
        .output()
        .unwrap();
    let m = stdout_json(&out);
    assert_eq!(m["params"]["num_variants"], 2);
    assert_eq!(m["covers"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("store").join(m["run_id"].as_str().unwrap()).is_dir());
}

#[test]
fn vocab_build_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let titles = dir.path().join("titles.txt");
    std::fs::write(&titles, "Dragon Fire\nDark Night\nDragon Sea\n").unwrap();
    let vocab = dir.path().join("vocab.json");
    let v = stdout_json(&covergen(&["vocab", "build", "--in", titles.to_str().unwrap(), "--out", vocab.to_str().unwrap()]));
    assert_eq!(v["words"], 5);
    let dump: Value = serde_json::from_str(&std::fs::read_to_string(&vocab).unwrap()).unwrap();
    assert_eq!(dump["counts"]["dragon"], 2);
}

#[test]
fn lexicon_dump_of_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lex.json");
    let v = stdout_json(&covergen(&[
        "lexicon", "dump", "--strict", "--dir", fixture_dir().to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(v["synsets"], 10);
    assert!(out.is_file());
}

#[test]
fn metrics_fid_and_is() {
    let dir = tempfile::tempdir().unwrap();
    let real = dir.path().join("real.csv");
    let fake = dir.path().join("fake.csv");
    std::fs::write(&real, "f0\n-1\n1\n-1\n1\n").unwrap();
    std::fs::write(&fake, "0\n2\n0\n2\n").unwrap();
    let v = stdout_json(&covergen(&["metrics", "fid", "--real", real.to_str().unwrap(), "--fake", fake.to_str().unwrap()]));
    assert_eq!(v["metric"], "fid");
    assert_eq!((v["n_real"].as_u64(), v["n_fake"].as_u64()), (Some(4), Some(4)));
    // means 0 and 1, equal variances: distance is the squared mean gap
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let probs = dir.path().join("probs.f32");
    let rows: Vec<Vec<f64>> = (0..8).map(|i| (0..4).map(|c| if c == i % 4 { 1.0 } else { 0.0 }).collect()).collect();
    write_raw_f32(&probs, &rows).unwrap();
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("probs.f32.json")).unwrap()).unwrap();
    assert_schema("matrix-sidecar", &side);
    let v = stdout_json(&covergen(&["metrics", "is", "--probs", probs.to_str().unwrap(), "--splits", "2"]));
    assert_eq!(v["metric"], "is");
    assert_eq!(v["n"], 8);
    assert_eq!(v["splits"], 2);
    assert!((v["value"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    assert!(v["std"].as_f64().unwrap().abs() < 1e-9);

    assert!(!covergen(&["metrics", "is", "--probs", "/nonexistent.csv"]).status.success());
}

#[test]
fn presets_export() {
    let one = stdout_json(&covergen(&["presets", "export", "--name", "table1-row-3"]));
    assert_schema("train-preset", &one);
    assert_eq!(TrainPreset::parse_json(&one.to_string()).unwrap(), preset("table1-row-3").unwrap());

    let all = stdout_json(&covergen(&["presets", "export"]));
    assert_eq!(all.as_array().unwrap().len(), 6);

    let dir = tempfile::tempdir().unwrap();
    let out = covergen(&["presets", "export", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    for name in PRESET_NAMES {
        let text = std::fs::read_to_string(dir.path().join(format!("{name}.json"))).unwrap();
        assert_schema("train-preset", &serde_json::from_str(&text).unwrap());
        assert_eq!(TrainPreset::parse_json(&text).unwrap(), preset(name).unwrap());
    }
    assert!(!covergen(&["presets", "export", "--name", "table1-row-9"]).status.success());
}
