use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const LAUNDER: &str = env!("CARGO_BIN_EXE_launder");
const REFERENCE_SCORER: &str = env!("CARGO_BIN_EXE_reference-scorer");

fn run(args: &[&str]) -> Output {
    Command::new(LAUNDER).args(args).output().expect("launch launder")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small calibrated setup shared by every test: 8 images per class at 128².
struct Setup {
    _dir: TempDir,
    fixtures: PathBuf,
    models: PathBuf,
}

fn setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = dir.path().join("fx");
        let models = dir.path().join("models");
        ok(&["gen-fixtures", "--out", s(&fixtures), "--count", "8", "--size", "128", "--seed", "5"]);
        ok(&[
            "calibrate", "--manifest", s(&fixtures.join("train.csv")), "--out", s(&models),
            "--n-patches", "16",
        ]);
        Setup { _dir: dir, fixtures, models }
    })
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["launder", "--in", "a.png"]).status.code(), Some(1));
    let fx = &setup().fixtures;
    let img = fx.join("real/0.png");
    let out = fx.join("never.png");
    assert_eq!(run(&["postproc", "--in", s(&img), "--out", s(&out), "--op", "blur3"]).status.code(), Some(1));
    assert_eq!(run(&["postproc", "--in", s(&img), "--out", s(&out), "--op", "jpeg0"]).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn data_errors_exit_two() {
    let st = setup();
    let out = run(&["score", "--image", "/no/such/image.png", "--models", s(&st.models)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.png");
    fs::write(&bad, b"\x89PNG\r\n\x1a\nnope").unwrap();
    let out = run(&["score", "--image", s(&bad), "--models", s(&st.models)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn launder_and_postproc_keep_size() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let img = st.fixtures.join("real/0.png");
    let laundered = tmp.path().join("l.png");
    ok(&["launder", "--in", s(&img), "--out", s(&laundered), "--factor", "8"]);
    let a = launder_core::load_image(&img).unwrap();
    let b = launder_core::load_image(&laundered).unwrap();
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    assert_ne!(a, b);

    let half = tmp.path().join("h.png");
    ok(&["postproc", "--in", s(&img), "--out", s(&half), "--op", "resize0.5"]);
    assert_eq!(launder_core::load_image(&half).unwrap().width(), 64);

    // factor must divide the image
    let out = run(&["launder", "--in", s(&img), "--out", s(&laundered), "--factor", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn score_json_reports_stage_scores() {
    let st = setup();
    for class in ["real", "fully_synthetic", "laundered"] {
        let img = st.fixtures.join(format!("{class}/6.png"));
        let out = ok(&["score", "--image", s(&img), "--models", s(&st.models), "--json"]);
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["s1"].is_f64());
        assert_eq!(v["label"], class);
        // stage 2 runs only when stage 1 says synthetic
        assert_eq!(v.get("s2").is_some(), class != "real");
    }
}

#[test]
fn calibrate_warns_on_shared_images() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let manifest = st.fixtures.join("manifest.csv");
    let out = ok(&[
        "calibrate", "--manifest", s(&manifest), "--out", s(&tmp.path().join("m")),
        "--n-patches", "8", "--test-manifest", s(&st.fixtures.join("test.csv")),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("warning:") && err.contains("both the training and the test"), "{err}");
}

#[test]
fn calibrate_rejects_missing_class() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let only_real = tmp.path().join("real.csv");
    let rows: String = (0..4).map(|i| format!("{}/real/{i}.png,real,cam\n", s(&st.fixtures))).collect();
    fs::write(&only_real, format!("path,label,group\n{rows}")).unwrap();
    let out = run(&["calibrate", "--manifest", s(&only_real), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_skip_errors_records_bad_images() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let broken = tmp.path().join("broken.png");
    fs::write(&broken, b"not an image").unwrap();
    let mut csv = fs::read_to_string(st.fixtures.join("test.csv")).unwrap();
    // paths in the fixture manifest are relative to its directory
    csv = csv
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { l.to_string() } else { format!("{}/{l}", s(&st.fixtures)) })
        .collect::<Vec<_>>()
        .join("\n");
    csv.push_str(&format!("\n{},real,cam\n", s(&broken)));
    let manifest = tmp.path().join("m.csv");
    fs::write(&manifest, csv).unwrap();
    let report = tmp.path().join("r.json");
    let args = ["eval", "--manifest", s(&manifest), "--models", s(&st.models), "--out", s(&report), "--n-patches", "8"];

    assert_eq!(run(&args).status.code(), Some(2));
    let mut with_skip = args.to_vec();
    with_skip.push("--skip-errors");
    ok(&with_skip);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["skipped"].as_array().unwrap().len(), 1);
    assert_eq!(v["clean"]["n_images"], 12);
}

#[test]
fn eval_single_class_manifest_warns() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("real.csv");
    let rows: String = (4..8).map(|i| format!("{}/real/{i}.png,real,cam\n", s(&st.fixtures))).collect();
    fs::write(&manifest, format!("path,label,group\n{rows}")).unwrap();
    let report = tmp.path().join("r.json");
    let out = ok(&["eval", "--manifest", s(&manifest), "--models", s(&st.models), "--out", s(&report), "--n-patches", "8"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("single-class"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["clean"].get("stage1").is_none());
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

/// Copies the model directory with stage 1 switched to an external command.
fn external_models(st: &Setup, tmp: &Path, command: Vec<String>) -> PathBuf {
    let models = tmp.join("ext");
    fs::create_dir_all(&models).unwrap();
    for f in ["stage1.json", "stage2.json"] {
        fs::copy(st.models.join(f), models.join(f)).unwrap();
    }
    let mut cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(st.models.join("pipeline.json")).unwrap()).unwrap();
    cfg["stage1"] = serde_json::json!({"kind": "external", "command": command, "timeout_ms": 2000});
    fs::write(models.join("pipeline.json"), cfg.to_string()).unwrap();
    models
}

#[test]
fn external_reference_scorer_gives_identical_report() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let stage1 = st.models.join("stage1.json");
    let ext = external_models(st, tmp.path(), vec![REFERENCE_SCORER.into(), "--model".into(), s(&stage1).into()]);
    let test = st.fixtures.join("test.csv");
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    ok(&["eval", "--manifest", s(&test), "--models", s(&st.models), "--out", s(&a), "--n-patches", "8"]);
    ok(&["eval", "--manifest", s(&test), "--models", s(&ext), "--out", s(&b), "--n-patches", "8"]);
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v["config"]["stage1"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn scorer_failures_exit_three_even_when_skipping() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let garbage = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/assets/garbage_scorer.sh");
    let ext = external_models(st, tmp.path(), vec!["sh".into(), s(&garbage).into()]);
    let img = st.fixtures.join("real/0.png");
    let out = run(&["score", "--image", s(&img), "--models", s(&ext)]);
    assert_eq!(out.status.code(), Some(3));
    let report = tmp.path().join("r.json");
    let out = run(&[
        "eval", "--manifest", s(&st.fixtures.join("test.csv")), "--models", s(&ext), "--out", s(&report),
        "--n-patches", "8", "--skip-errors",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn spectrum_writes_png_and_sidecar() {
    let st = setup();
    let tmp = tempfile::tempdir().unwrap();
    let prefix = tmp.path().join("spec");
    ok(&["spectrum", "--manifest", s(&st.fixtures.join("manifest.csv")), "--class", "laundered", "--out", s(&prefix)]);
    let img = launder_core::load_image(prefix.with_extension("png")).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (128, 128, 1));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(prefix.with_extension("json")).unwrap()).unwrap();
    assert_eq!(v["count"], 8);
    assert_eq!(v["factor"], 8);
    let out = run(&["spectrum", "--manifest", s(&st.fixtures.join("manifest.csv")), "--class", "fake", "--out", s(&prefix)]);
    assert_ne!(out.status.code(), Some(0));
}
