//! End-to-end runs of the `spev` binary over small synthetic corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spev_core::frame::{load_frame, FrameManifest, GrayFrame, ManifestEntry};
use spev_core::model::load_model;
use spev_pipeline::stages::ESTIMATE_HEADER;

fn spev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spev"))
        .args(args)
        .output()
        .expect("spawn spev")
}

fn ok(args: &[&str]) -> String {
    let out = spev(args);
    assert!(
        out.status.success(),
        "spev {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    spev(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small corpus under `dir/corpus` and returns its config path.
fn small_corpus(dir: &Path, synth: &str) -> PathBuf {
    let cfg = dir.join("synth.toml");
    fs::write(&cfg, format!("[synth]\nscale = 0.5\n{synth}")).unwrap();
    let corpus = dir.join("corpus");
    let printed = ok(&["synth", "--config", s(&cfg), "--out", s(&corpus)]);
    let config = corpus.join("spev.toml");
    assert_eq!(printed.trim(), s(&config));
    config
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 3\nframes = 300\ntest_cameras = [\"cam1\"]\n");
    let out = tmp.path().join("out");
    for stage in ["calibrate", "baseline", "estimate"] {
        let printed = ok(&[stage, "--config", s(&config), "--out", s(&out), "--estimator", "both"]);
        assert_eq!(printed.lines().count(), 3, "{stage}: {printed}");
    }
    ok(&["fit", "--config", s(&config), "--out", s(&out)]);
    let eval = ok(&["eval", "--config", s(&config), "--out", s(&out), "--estimator", "both"]);

    let est = fs::read_to_string(out.join("cam0/estimates.csv")).unwrap();
    let mut lines = est.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), ESTIMATE_HEADER);
    assert_eq!(lines.filter(|l| l.contains(",ok,")).count(), 300);

    let model = load_model(&fs::read(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model.pieces.len(), 16);

    for name in ["cam1_rows.csv", "cam1_plot.csv", "cam1_report.json", "summary.json"] {
        assert!(eval.contains(name), "{name} missing from {eval}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("eval/cam1_report.json")).unwrap()).unwrap();
    assert_eq!(report["training_cameras"], serde_json::json!(["cam0", "cam2"]));
    assert!(report["spearman"].as_f64().unwrap() > 0.9);
    assert!(report["contrast"].is_object());
    let rows = csv_rows(&out.join("eval/cam1_rows.csv"));
    assert_eq!(rows[0][1], "estimator");
    assert_eq!(rows.iter().filter(|r| r[1] == "spev").count(), 300);
    assert_eq!(rows.iter().filter(|r| r[1] == "contrast").count(), 300);
}

#[test]
fn output_location_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 2\nframes = 12\n");
    let mut files = Vec::new();
    for run in ["x", "y"] {
        let out = tmp.path().join(run);
        ok(&["calibrate", "--config", s(&config), "--out", s(&out)]);
        ok(&["baseline", "--config", s(&config), "--out", s(&out)]);
        ok(&["estimate", "--config", s(&config), "--out", s(&out), "--camera", "cam1"]);
        files.push((
            fs::read(out.join("cam1/geometry.json")).unwrap(),
            fs::read(out.join("cam1/estimates.csv")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn calibration_recovers_the_rendered_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 3\nframes = 2\n");
    let out = tmp.path().join("out");
    ok(&["calibrate", "--config", s(&config), "--out", s(&out)]);
    let synth = spev_pipeline::corpus::SynthConfig {
        cameras: 3,
        frames: 2,
        scale: 0.5,
        ..Default::default()
    };
    for i in 0..3 {
        let art: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join(format!("cam{i}/geometry.json"))).unwrap()).unwrap();
        let want = synth.scene(i).v_h;
        let got = art["v_h"].as_f64().unwrap();
        assert_eq!(art["v_h_source"], "detected");
        assert!((got - want).abs() <= 2.0, "cam{i}: {got} vs {want}");
    }
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["calibrate"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["calibrate", "--config", s(&tmp.path().join("absent.toml"))]), 1);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "unknown_key = 3\n").unwrap();
    assert_eq!(code(&["calibrate", "--config", s(&bad)]), 1);

    let config = small_corpus(tmp.path(), "cameras = 2\nframes = 3\n");
    assert_eq!(code(&["calibrate", "--config", s(&config), "--camera", "cam9"]), 1);
    // Later stages before earlier ones: missing artifacts are data errors.
    assert_eq!(
        code(&["estimate", "--config", s(&config), "--out", s(&tmp.path().join("o"))]),
        2
    );

    fs::remove_file(config.parent().unwrap().join("cam0/clear.png")).unwrap();
    let out = spev(&["calibrate", "--config", s(&config), "--camera", "cam0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clear.png"));
}

#[test]
fn unreadable_frames_become_error_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 2\nframes = 8\n");
    let corpus = config.parent().unwrap();
    fs::write(corpus.join("cam0/frames/000003.png"), b"not a png").unwrap();
    let out = tmp.path().join("out");
    for stage in ["calibrate", "baseline", "estimate"] {
        ok(&[stage, "--config", s(&config), "--out", s(&out), "--camera", "cam0"]);
    }
    let rows = csv_rows(&out.join("cam0/estimates.csv"));
    assert_eq!(rows.len(), 9);
    let bad = &rows[4];
    assert_eq!((bad[0].as_str(), bad[2].as_str()), ("3", "error"));
    assert!(bad[3..9].iter().all(String::is_empty));
    assert!(!bad[9].is_empty());
    assert!(rows[1..]
        .iter()
        .filter(|r| r[0] != "3")
        .all(|r| r[2] == "ok" && !r[5].is_empty()));
}

fn write_manifest(dir: &Path, frames: &[GrayFrame]) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut text = String::new();
    for (i, f) in frames.iter().enumerate() {
        let name = format!("{i:03}.png");
        f.save(&dir.join(&name)).unwrap();
        let entry = ManifestEntry {
            frame_index: i as u64,
            timestamp: i as f64,
            camera_id: "cam0".into(),
            path: PathBuf::from(name),
        };
        text.push_str(&serde_json::to_string(&entry).unwrap());
        text.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn baseline_rejects_an_outlier_and_needs_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 2\nframes = 2\n");
    let corpus = config.parent().unwrap();
    let clear = load_frame(&corpus.join("cam0/clear.png")).unwrap();
    let mut frames = vec![clear.clone(); 10];
    frames.push(clear.map(|x, y, v| if (x / 3 + y / 3) % 2 == 0 { 1.0 } else { v * 0.2 }));
    let manifest = write_manifest(&tmp.path().join("clear"), &frames);
    assert_eq!(FrameManifest::read(&manifest).unwrap().len(), 11);

    let text = fs::read_to_string(&config).unwrap().replace(
        "clear_manifest = \"cam0/clear_manifest.jsonl\"",
        &format!("clear_manifest = {:?}", s(&manifest)),
    );
    let patched = corpus.join("patched.toml");
    fs::write(&patched, text).unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "calibrate",
        "--config",
        s(&patched),
        "--out",
        s(&out),
        "--camera",
        "cam0",
    ]);
    ok(&[
        "baseline",
        "--config",
        s(&patched),
        "--out",
        s(&out),
        "--camera",
        "cam0",
    ]);
    let art: serde_json::Value = serde_json::from_slice(&fs::read(out.join("cam0/baseline.json")).unwrap()).unwrap();
    assert_eq!(art["baseline"]["n_rejected"], 1);
    assert_eq!(art["entropies"].as_array().unwrap().len(), 11);
    let (h_clear, h0) = (
        art["baseline"]["H_clear"].as_f64().unwrap(),
        art["entropies"][0]["H"].as_f64().unwrap(),
    );
    assert!((h_clear - h0).abs() < 1e-12);
    assert_eq!(art["baseline"]["n_used"], 10);

    fs::write(&manifest, "").unwrap();
    assert_eq!(
        code(&[
            "baseline",
            "--config",
            s(&patched),
            "--out",
            s(&out),
            "--camera",
            "cam0"
        ]),
        2
    );
}

#[test]
fn fit_recovers_a_linear_relation() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 2\nframes = 40\n");
    let corpus = config.parent().unwrap().to_path_buf();
    let out = tmp.path().join("out");
    for stage in ["calibrate", "baseline", "estimate"] {
        ok(&[stage, "--config", s(&config), "--out", s(&out)]);
    }
    // Labels generated exactly from the written ratios, spread over [50, 550].
    let ratios: Vec<Vec<(String, f64)>> = ["cam0", "cam1"]
        .iter()
        .map(|cam| {
            csv_rows(&out.join(format!("{cam}/estimates.csv")))[1..]
                .iter()
                .map(|r| (r[0].clone(), r[4].parse().unwrap()))
                .collect()
        })
        .collect();
    let all = ratios.iter().flatten().map(|(_, x)| *x);
    let (lo, hi) = all
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    assert!(hi - lo > 1e-5, "ratios span {lo}..{hi}");
    let c1 = 500.0 / (hi - lo);
    let c0 = 50.0 - c1 * lo;
    for (cam, rows) in ["cam0", "cam1"].iter().zip(&ratios) {
        let mut labels = String::from("frame_index,vis_ref\n");
        for (idx, x) in rows {
            labels.push_str(&format!("{idx},{:?}\n", c0 + c1 * x));
        }
        fs::write(corpus.join(format!("{cam}/exact.csv")), labels).unwrap();
    }
    let mut text = fs::read_to_string(&config)
        .unwrap()
        .replace("labels.csv", "exact.csv")
        .replace("test = true", "test = false");
    let start = text.find("[[fit.intervals]]").unwrap();
    let end = text[start..].find("[[cameras]]").map_or(text.len(), |e| start + e);
    text.replace_range(start..end, "[[fit.intervals]]\nlo = 0.0\nhi = 600.0\npowers = [1]\n\n");
    let patched = corpus.join("exact.toml");
    fs::write(&patched, text).unwrap();
    ok(&["fit", "--config", s(&patched), "--out", s(&out)]);
    let model = load_model(&fs::read(out.join("model.json")).unwrap()).unwrap();
    let [eta, alpha, beta, gamma] = model.pieces[0].coefficients();
    assert!((eta - c0).abs() <= 1e-6 * c0.abs(), "{eta}");
    assert!((alpha - c1).abs() <= 1e-6 * c1.abs(), "{alpha}");
    assert_eq!((beta, gamma), (0.0, 0.0));
}

#[test]
fn estimate_rejects_a_model_with_another_flip() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 2\nframes = 4\n");
    let out = tmp.path().join("out");
    ok(&["calibrate", "--config", s(&config), "--out", s(&out)]);
    ok(&["baseline", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(
        code(&["estimate", "--config", s(&config), "--out", s(&out), "--flip", "on"]),
        2
    );
    ok(&["estimate", "--config", s(&config), "--out", s(&out), "--flip", "off"]);
}

#[test]
fn serve_catalog_follows_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_corpus(tmp.path(), "cameras = 2\nframes = 5\n");
    let mut cfg = spev_pipeline::config::LoadedConfig::from_file(&config).unwrap();
    cfg.config.output_dir = tmp.path().join("out");
    let ids = vec!["cam0".to_string(), "cam1".to_string()];
    assert!(matches!(
        spev_pipeline::serve::catalog(&cfg, &ids),
        Err(spev_pipeline::error::PipelineError::Data(_))
    ));
    cfg.config.cameras[1].v_h = Some(40.0);
    ok(&[
        "calibrate",
        "--config",
        s(&config),
        "--out",
        s(&tmp.path().join("out")),
        "--camera",
        "cam0",
    ]);
    let catalog = spev_pipeline::serve::catalog(&cfg, &ids).unwrap();
    assert_eq!(catalog.camera_ids().collect::<Vec<_>>(), ["cam0", "cam1"]);
    assert_eq!(catalog.camera("cam1").unwrap().geometry.v_h(), 40.0);
    assert_eq!(catalog.camera("cam0").unwrap().frames.len(), 5);
    let png = catalog.frame_png("cam0", 4, false).unwrap();
    let disk = fs::read(config.parent().unwrap().join("cam0/frames/000004.png")).unwrap();
    let decode = |bytes: &[u8]| {
        let p = tmp.path().join("probe.png");
        fs::write(&p, bytes).unwrap();
        load_frame(&p).unwrap()
    };
    assert_eq!(decode(&png), decode(&disk));
}
