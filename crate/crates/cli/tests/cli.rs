use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use specloc::augment::GanConfig;
use specloc::eval::{ExperimentConfig, TrainingProfile};
use specloc::locmodel::LocConfig;
use specloc::simenv::{NoiseModel, WorldConfig};
use specloc_cli::{parse_config, RunManifest};

fn specloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specloc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = specloc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rows(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count() - 1
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, v: &T) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p
}

fn floats(p: &Path) -> Vec<f64> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn gen_writes_the_default_worlds_and_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    ok(&["gen", "--seed", "3", "--out", s(&a)]);
    assert_eq!(rows(&a.join("spectral.csv")), 2048);
    assert_eq!(rows(&a.join("rssi.csv")), 2048);

    let b = dir.path().join("b");
    ok(&["replay", "--manifest", s(&a.join("manifest.json")), "--out", s(&b)]);
    for f in ["spectral.csv", "rssi.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }

    let robust = dir.path().join("robust");
    ok(&["gen", "--config", s(&configs().join("robust.json")), "--out", s(&robust)]);
    assert_eq!(rows(&robust.join("spectral.csv")), 1210);
    assert!(!robust.join("rssi.csv").exists());
}

#[test]
fn bad_config_exits_2_with_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let mut world = serde_json::to_value(WorldConfig::spectral_wifimix()).unwrap();
    world["samples_per_point"] = serde_json::json!("many");
    fs::write(&cfg, serde_json::to_string_pretty(&world).unwrap()).unwrap();
    let out = specloc(&["gen", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("samples_per_point") && err.contains("line"), "{err}");

    let out = specloc(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stability_of_a_noiseless_world_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let world = WorldConfig { noise: NoiseModel::noiseless(), ..WorldConfig::spectral_wifimix() };
    let cfg = write_json(dir.path(), "quiet.json", &world);
    let data = dir.path().join("data");
    ok(&["gen", "--config", s(&cfg), "--out", s(&data)]);
    for m in ["spectral", "rssi"] {
        let out = dir.path().join(format!("stab-{m}"));
        ok(&["stability", "--data", s(&data.join(format!("{m}.csv"))), "--out", s(&out)]);
        let text = fs::read_to_string(out.join("stability.csv")).unwrap();
        assert_eq!(text.lines().count(), 65);
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').nth(3).unwrap(), "0", "{line}");
        }
    }
}

#[test]
fn train_then_eval_reproduces_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen", "--out", s(&data)]);
    let loc = LocConfig { hidden_size: 16, epochs: 20, ..LocConfig::default() };
    let cfg = write_json(dir.path(), "loc.json", &loc);
    let rssi = data.join("rssi.csv");
    let trained = dir.path().join("trained");
    ok(&["train", "--data", s(&rssi), "--config", s(&cfg), "--seed", "1", "--out", s(&trained)]);
    let evald = dir.path().join("eval");
    let model = trained.join("model.json");
    ok(&["eval", "--model", s(&model), "--data", s(&rssi), "--out", s(&evald)]);
    let a = floats(&trained.join("predictions.csv"));
    let b = floats(&evald.join("predictions.csv"));
    assert_eq!(a.len(), 2 * 2048);
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));

    let out = specloc(&["eval", "--model", s(&model), "--data", s(&data.join("spectral.csv")), "--out", s(&evald)]);
    assert_eq!(out.status.code(), Some(2));
    let out = specloc(&["eval", "--model", s(&dir.path().join("nope.json")), "--data", s(&rssi)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen", "--out", s(&data)]);
    let loc = LocConfig { hidden_size: 8, epochs: 5, learning_rate: 1e300, ..LocConfig::default() };
    let cfg = write_json(dir.path(), "loc.json", &loc);
    let out = specloc(&["train", "--data", s(&data.join("rssi.csv")), "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn augment_writes_one_hundred_samples_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen", "--out", s(&data)]);
    let gan = write_json(dir.path(), "gan.json", &GanConfig { epochs: 2, ..GanConfig::default() });
    let spectral = data.join("spectral.csv");
    let point = dir.path().join("point");
    ok(&["augment", "--data", s(&spectral), "--method", "pointgan", "--config", s(&gan), "--out", s(&point)]);
    assert_eq!(rows(&point.join("synthetic.csv")), 6400);
    assert_eq!(rows(&point.join("augmented.csv")), 8448);

    let free = dir.path().join("free");
    ok(&["augment", "--data", s(&spectral), "--method", "freegan", "--config", s(&gan), "--n", "300", "--top-k", "120", "--out", s(&free)]);
    assert_eq!(rows(&free.join("synthetic.csv")), 120);
    let m: RunManifest = parse_config(&fs::read_to_string(free.join("manifest.json")).unwrap()).unwrap();
    assert!(m.outputs.iter().any(|o| o.path == Path::new("weak_model.json")));
    assert!(m.timings.iter().any(|t| t.stage == "pseudo_label"));
}

#[test]
fn experiment_one_emits_360_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp1");
    ok(&["experiment", "exp1", "--profile", "smoke", "--jobs", "2", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 361);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(5).is_some_and(|v| !v.is_empty())));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"].as_array().unwrap().len(), 18);
}

#[test]
fn shipped_configs_match_the_defaults() {
    let read = |name: &str| fs::read_to_string(configs().join(name)).unwrap();
    assert_eq!(parse_config::<WorldConfig>(&read("wifimix.json")).unwrap(), WorldConfig::spectral_wifimix());
    assert_eq!(parse_config::<WorldConfig>(&read("robust.json")).unwrap(), WorldConfig::spectral_robust());
    assert_eq!(
        parse_config::<WorldConfig>(&read("robust_cluttered.json")).unwrap(),
        WorldConfig::spectral_robust().with_clutter(0, 8)
    );
    assert_eq!(parse_config::<LocConfig>(&read("localizer.json")).unwrap(), LocConfig::default());
    assert_eq!(parse_config::<LocConfig>(&read("weak.json")).unwrap(), LocConfig::weak());
    assert_eq!(parse_config::<GanConfig>(&read("gan.json")).unwrap(), GanConfig::default());
    assert_eq!(
        parse_config::<ExperimentConfig>(&read("exp1.json")).unwrap(),
        ExperimentConfig::experiment1(TrainingProfile::full())
    );
    assert_eq!(
        parse_config::<ExperimentConfig>(&read("exp2.json")).unwrap(),
        ExperimentConfig::experiment2(TrainingProfile::full())
    );
}
