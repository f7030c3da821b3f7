use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use camsmooth::renderer::decode_tensor;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_camsmooth");

fn camsmooth(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("CMS_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = camsmooth(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(path: &Path, value: Value) {
    std::fs::write(path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
}

/// Small run settings shared by every test: three classes, three test views
/// each, light sampling.
fn small_config(out_dir: &Path, extra: Value) -> Value {
    let mut v = serde_json::json!({
        "out_dir": out_dir,
        "scene": {"classes": 3, "train_poses": 8, "test_poses": 3, "gap_degrees": 15.0},
        "n0": 20,
        "n": 100,
        "attack_ks": [2, 5],
        "seed": 11,
        "sweep_steps": 5
    });
    for (key, value) in extra.as_object().unwrap() {
        v[key] = value.clone();
    }
    v
}

/// Directory with a generated scene set and a trained model.
fn fixture() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli_runs_fixture");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let config = dir.join("run.json");
        write_config(&config, small_config(Path::new("."), serde_json::json!({})));
        ok(&["gen-scene", "--config", s(&config)]);
        ok(&["train", "--config", s(&config)]);
        dir
    })
}

/// Config reading the fixture's scenes and model, writing to `out`.
fn reader_config(out: &Path, extra: Value) -> PathBuf {
    let dir = fixture();
    let mut v = small_config(out, extra);
    v["manifest_path"] = serde_json::json!(dir.join("manifest.json"));
    if v.get("classifier").is_none() {
        v["classifier"] = serde_json::json!({"kind": "builtin", "model_path": dir.join("model.json")});
    }
    let path = out.join("run.json");
    std::fs::create_dir_all(out).unwrap();
    write_config(&path, v);
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_scene_and_train_write_artifacts_with_sidecars() {
    let dir = fixture();
    let manifest = read_json(&dir.join("manifest.json"));
    let classes = manifest["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 3);
    assert_eq!(classes[0]["test_poses"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["intrinsics"]["fx"], 386.274);
    for class in classes {
        let ply = dir.join(class["ply_path"].as_str().unwrap());
        assert!(std::fs::read(&ply).unwrap().starts_with(b"ply\n"));
        assert_eq!(
            read_json(&dir.join(format!("{}.config.json", ply.file_name().unwrap().to_str().unwrap())))["command"],
            "gen-scene"
        );
    }
    let sidecar = read_json(&dir.join("model.json.config.json"));
    assert_eq!(sidecar["command"], "train");
    assert_eq!(sidecar["config"]["n"], 100);
    assert_eq!(sidecar["config"]["sigma"]["tz_m"], 0.1);
    assert_eq!(sidecar["config"]["intrinsics"]["width"], 160);
}

#[test]
fn certify_is_byte_identical_across_runs_and_worker_counts() {
    let root = tempfile::tempdir().unwrap();
    let config = reader_config(root.path(), serde_json::json!({}));
    let manifest_before = std::fs::read(fixture().join("manifest.json")).unwrap();
    let model_before = std::fs::read(fixture().join("model.json")).unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "1", "4", "8"].iter().enumerate() {
        let out = root.path().join(format!("w{i}"));
        ok(&["certify", "--config", s(&config), "--workers", workers, "--out", s(&out)]);
        outputs.push(std::fs::read(out.join("certificates.json")).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(std::fs::read(fixture().join("manifest.json")).unwrap(), manifest_before);
    assert_eq!(std::fs::read(fixture().join("model.json")).unwrap(), model_before);

    let records: Value = serde_json::from_slice(&outputs[0]).unwrap();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 9);
    for r in records {
        assert_eq!(r["axis"], "Tz");
        assert_eq!(r["sigma"], 0.1);
        assert_eq!(r["confidence"], 0.99);
        assert!(r["pA_lower"].as_f64().unwrap() >= 0.0 && r["pB_upper"].as_f64().unwrap() <= 1.0);
        assert_eq!(r["radius"].is_null(), r["abstained"].as_bool().unwrap());
    }
    let sidecar = read_json(&root.path().join("w2/certificates.json.config.json"));
    assert_eq!((sidecar["command"].as_str(), sidecar["config"]["workers"].as_u64()), (Some("certify"), Some(4)));
}

#[test]
fn flag_overrides_reach_the_certificates() {
    let root = tempfile::tempdir().unwrap();
    let config = reader_config(root.path(), serde_json::json!({}));
    let out = root.path().join("ry");
    ok(&["certify", "--config", s(&config), "--axis", "ry", "--sigma", "0.05", "--alpha", "0.05", "--out", s(&out)]);
    let records = read_json(&out.join("certificates.json"));
    assert_eq!(records[0]["axis"], "Ry");
    assert_eq!(records[0]["sigma"], 0.05);
    assert_eq!(records[0]["confidence"], 0.95);
}

#[test]
fn evaluate_writes_table_layout_and_report_reads_it() {
    let root = tempfile::tempdir().unwrap();
    let config = reader_config(root.path(), serde_json::json!({}));
    let out = root.path().join("eval");
    let printed = ok(&["evaluate", "--config", s(&config), "--radius", "0.1", "--out", s(&out)]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&printed.stdout), summary);
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "axis,radius,sigma,model,benign_acc,emp_robust_acc_k2,emp_robust_acc_k5,certified_acc");
    assert!(lines[1].starts_with("Tz,0.1,0.1,base,") && lines[1].ends_with(','));
    assert!(lines[2].starts_with("Tz,0.1,0.1,smoothed,"));
    let cell = |line: &str, i: usize| line.split(',').nth(i).unwrap().parse::<f64>().unwrap();
    for line in &lines[1..] {
        assert!(cell(line, 6) <= cell(line, 5), "larger attack grid cannot do better: {line}");
    }
    assert!(cell(lines[2], 7) <= 1.0);

    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 10);
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let acc: Vec<f64> = sweep.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(acc.len(), 6);
    assert!(acc.windows(2).all(|w| w[1] <= w[0]), "{acc:?}");
    for name in ["summary.csv", "records.csv", "sweep.csv", "records.json"] {
        assert_eq!(read_json(&out.join(format!("{name}.config.json")))["command"], "evaluate");
    }

    let shown = ok(&["report", "--config", s(&config), "--out", s(&out)]);
    let text = String::from_utf8_lossy(&shown.stdout);
    assert_eq!(text, std::fs::read_to_string(out.join("report.txt")).unwrap());
    assert!(text.lines().nth(2).unwrap().contains("smoothed"), "{text}");
    assert!(text.contains("views: 9"), "{text}");
}

#[test]
fn zero_noise_evaluation_collapses_to_the_base_classifier() {
    let root = tempfile::tempdir().unwrap();
    let config = reader_config(root.path(), serde_json::json!({"sigma": {"tz_m": 0.0}}));
    let out = root.path().join("zero");
    ok(&["evaluate", "--config", s(&config), "--radius", "0", "--out", s(&out)]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][4..7], rows[1][4..7], "{summary}");
    assert_eq!(rows[0][4], rows[0][5]);
}

#[test]
fn render_writes_png_and_tensor_views() {
    let root = tempfile::tempdir().unwrap();
    let config = reader_config(
        root.path(),
        serde_json::json!({"render": {"pose_ids": [0, 4], "motions": [-0.05, 0.0], "format": "tensor"}}),
    );
    let out = root.path().join("tensors");
    ok(&["render", "--config", s(&config), "--out", s(&out)]);
    let mut names: Vec<String> = std::fs::read_dir(out.join("render"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".cmsimg"))
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "pose000_Tz_+0.0000.cmsimg",
            "pose000_Tz_-0.0500.cmsimg",
            "pose004_Tz_+0.0000.cmsimg",
            "pose004_Tz_-0.0500.cmsimg"
        ]
    );
    let t = decode_tensor(&std::fs::read(out.join("render").join(&names[0])).unwrap()).unwrap();
    assert_eq!((t.height, t.width, t.channels), (90, 160, 3));
    assert!(out.join("render/pose000_Tz_+0.0000.cmsimg.config.json").is_file());

    let config = reader_config(&root.path().join("pngs"), serde_json::json!({"render": {"pose_ids": [4]}}));
    let out = root.path().join("pngs");
    ok(&["render", "--config", s(&config), "--axis", "rz"]);
    let png = std::fs::read(out.join("render/pose004_Rz_+0.0000.png")).unwrap();
    assert!(png.starts_with(b"\x89PNG"));
}

#[test]
fn external_classifier_agrees_with_the_builtin_model() {
    let root = tempfile::tempdir().unwrap();
    let model = fixture().join("model.json");
    let builtin = reader_config(&root.path().join("builtin"), serde_json::json!({}));
    let external = reader_config(
        &root.path().join("external"),
        serde_json::json!({"classifier": {"kind": "external", "command": [BIN, "serve-classifier", "--model", model]}}),
    );
    ok(&["certify", "--config", s(&builtin), "--workers", "2"]);
    ok(&["certify", "--config", s(&external), "--workers", "2"]);
    let a = read_json(&root.path().join("builtin/certificates.json"));
    let b = read_json(&root.path().join("external/certificates.json"));
    assert_eq!(a, b);
}

#[test]
fn missing_ply_is_a_schema_error_naming_the_manifest_field() {
    let root = tempfile::tempdir().unwrap();
    let scenes = root.path().join("scenes");
    let config = root.path().join("gen.json");
    write_config(
        &config,
        small_config(&scenes, serde_json::json!({"scene": {"classes": 2, "train_poses": 2, "test_poses": 1}})),
    );
    ok(&["gen-scene", "--config", s(&config)]);
    let manifest = read_json(&scenes.join("manifest.json"));
    std::fs::remove_file(scenes.join(manifest["classes"][1]["ply_path"].as_str().unwrap())).unwrap();
    let out = camsmooth(&["train", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("classes[1].ply_path"), "{}", stderr(&out));
}

#[test]
fn config_schema_violations_exit_2_with_a_field_path() {
    let root = tempfile::tempdir().unwrap();
    let cases = [
        (serde_json::json!({"sigma": {"tz": 0.1}}), "sigma.tz: unknown field `tz`"),
        (serde_json::json!({"n": "many"}), "n: invalid type"),
        (serde_json::json!({"classifier": {"kind": "cnn"}}), "classifier.kind: unknown variant `cnn`"),
        (serde_json::json!({"scene": {"gap_degrees": -1.0}}), "scene.gap_degrees"),
    ];
    for (i, (value, expected)) in cases.into_iter().enumerate() {
        let path = root.path().join(format!("c{i}.json"));
        write_config(&path, value);
        let out = camsmooth(&["gen-scene", "--config", s(&path)]);
        assert_eq!(out.status.code(), Some(2), "{expected}");
        assert!(stderr(&out).contains(expected), "{}", stderr(&out));
    }
    assert!(!root.path().join("out").exists(), "nothing is written on a schema error");
}

#[test]
fn invalid_flags_and_missing_inputs_exit_2() {
    let root = tempfile::tempdir().unwrap();
    let config = reader_config(root.path(), serde_json::json!({}));
    let out = camsmooth(&["certify", "--config", s(&config), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("alpha_conf"));
    let out = camsmooth(&["certify", "--config", s(&config), "--sigma", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma.tz_m"));
    let out = camsmooth(&["certify", "--out", s(&root.path().join("empty"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("manifest_path"));
    let out = camsmooth(&["report", "--out", s(&root.path().join("empty"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = camsmooth(&["certify", "--config", "/nonexistent/run.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstartable_external_classifier_is_a_runtime_error() {
    let root = tempfile::tempdir().unwrap();
    let config = reader_config(
        root.path(),
        serde_json::json!({"classifier": {"kind": "external", "command": ["/nonexistent/classifier"]}}),
    );
    let out = camsmooth(&["certify", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot start"), "{}", stderr(&out));
}
