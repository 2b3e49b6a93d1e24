use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clothrecon::clothfield::{ClothState, ClothType};
use clothrecon::densepose::ClothSegmentation;
use clothrecon::evaluation::MetricReport;
use clothrecon::fitting::FitRecord;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clothrecon"))
        .args(args)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "synth",
        "--seed",
        "11",
        "--resolution",
        "64",
        "--out",
        s(dir),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("scene.json")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn trace(dir: &Path) -> Vec<FitRecord> {
    std::fs::read_to_string(dir.join("trace.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn synth_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, &[]);
    synth(&b, &[]);
    for name in [
        "scene.json",
        "segmentation.pgm",
        "densepose.dpm",
        "gt_state.json",
        "gt_posed.obj",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn absent_garment_never_reaches_the_segmentation() {
    let t = tempfile::tempdir().unwrap();
    let mut state = ClothState::mean([1.0, 0.0, 0.0, 1.0, 0.0]);
    state.gender = [1.0, 0.0];
    std::fs::write(
        t.path().join("state.json"),
        serde_json::to_string(&state).unwrap(),
    )
    .unwrap();
    let cfg = write_config(t.path(), "scene.cfg", "state = state.json\ngender = male\n");
    let out = t.path().join("scene");
    synth(&out, &["--config", s(&cfg)]);
    let seg = ClothSegmentation::read_file(&out.join("segmentation.pgm")).unwrap();
    let count = |c: ClothType| seg.labels.iter().filter(|&&l| l == c.label()).count();
    assert_eq!(count(ClothType::Pants), 0);
    assert!(count(ClothType::UpperCloth) > 0);
    assert!(count(ClothType::Skirt) > 0);
}

#[test]
fn default_scene_shows_its_garments() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), &[]);
    let state: ClothState =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("gt_state.json")).unwrap())
            .unwrap();
    let seg = ClothSegmentation::read_file(&t.path().join("segmentation.pgm")).unwrap();
    let gated: Vec<ClothType> = state
        .gated()
        .into_iter()
        .filter(|&c| c != ClothType::Shoes)
        .collect();
    assert!(!gated.is_empty());
    for c in gated {
        assert!(seg.labels.contains(&c.label()), "{c:?}");
    }
}

#[test]
fn fit_reconstruct_eval_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let scene = synth(&t.path().join("scene"), &[]);
    let cfg = write_config(t.path(), "fit.cfg", "max_iterations = 15\n");
    let fit = t.path().join("fit");
    ok(&["fit", s(&scene), "--config", s(&cfg), "--out", s(&fit)]);
    let records = trace(&fit);
    assert!(!records.is_empty());
    let state: ClothState =
        serde_json::from_str(&std::fs::read_to_string(fit.join("state.json")).unwrap()).unwrap();
    state.validate().unwrap();

    let recon = t.path().join("recon");
    ok(&[
        "reconstruct",
        s(&scene),
        s(&fit.join("state.json")),
        "--out",
        s(&recon),
    ]);
    assert!(recon.join("posed.obj").exists());

    let report_dir = t.path().join("report");
    ok(&["eval", s(&scene), s(&recon), "--out", s(&report_dir)]);
    let report: MetricReport =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(report.cd_mm.is_finite() && report.cd_mm >= 0.0);
    assert!(report.matched_pairs > 0);
    assert!((0.0..=1.0).contains(&report.bcc.average));
}

#[test]
fn fitting_lowers_the_loss() {
    let t = tempfile::tempdir().unwrap();
    let scene = synth(&t.path().join("scene"), &[]);
    let cfg = write_config(t.path(), "fit.cfg", "max_iterations = 40\n");
    ok(&["fit", s(&scene), "--config", s(&cfg), "--out", s(t.path())]);
    let records = trace(t.path());
    let best = records
        .iter()
        .map(|r| r.loss.total)
        .fold(f64::INFINITY, f64::min);
    assert!(
        best < records[0].loss.total,
        "{} -> {best}",
        records[0].loss.total
    );
}

#[test]
fn no_reg_ablation_reports_zero_regulariser() {
    let t = tempfile::tempdir().unwrap();
    let scene = synth(&t.path().join("scene"), &[]);
    let cfg = write_config(t.path(), "fit.cfg", "max_iterations = 10\n");
    ok(&[
        "fit",
        s(&scene),
        "--config",
        s(&cfg),
        "--ablate",
        "no-reg",
        "--out",
        s(t.path()),
    ]);
    let records = trace(t.path());
    assert!(!records.is_empty());
    for r in records {
        assert_eq!(r.loss.reg, 0.0);
        assert_eq!(r.loss.weights.reg, 0.0);
    }
}

#[test]
fn ground_truth_scores_itself_perfectly() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path().join("scene");
    let scene = synth(&dir, &[]);
    ok(&["eval", s(&scene), s(&dir.join("gt")), "--out", s(t.path())]);
    let report: MetricReport =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("report.json")).unwrap())
            .unwrap();
    assert!(report.cd_mm <= 1e-6, "{}", report.cd_mm);
}

#[test]
fn missing_inputs_exit_with_2() {
    let t = tempfile::tempdir().unwrap();
    let scene = synth(&t.path().join("scene"), &[]);
    let empty = t.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(
        run(&["eval", s(&scene), s(&empty), "--out", s(t.path())])
            .status
            .code(),
        Some(2)
    );
    let nowhere = t.path().join("nowhere.json");
    assert_eq!(
        run(&["fit", s(&nowhere), "--out", s(t.path())])
            .status
            .code(),
        Some(2)
    );
    std::fs::remove_file(t.path().join("scene/densepose.dpm")).unwrap();
    assert_eq!(
        run(&["fit", s(&scene), "--out", s(t.path())]).status.code(),
        Some(2)
    );
}

#[test]
fn bad_configuration_exits_with_1() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), "bad.cfg", "resolutoin = 64\n");
    assert_eq!(
        run(&["synth", "--config", s(&cfg), "--out", s(t.path())])
            .status
            .code(),
        Some(1)
    );
    let cfg = write_config(t.path(), "bad2.cfg", "width = wide\n");
    assert_eq!(
        run(&["synth", "--config", s(&cfg), "--out", s(t.path())])
            .status
            .code(),
        Some(1)
    );
    let scene = synth(&t.path().join("scene"), &[]);
    assert_eq!(
        run(&[
            "fit",
            s(&scene),
            "--ablate",
            "no-everything",
            "--out",
            s(t.path())
        ])
        .status
        .code(),
        Some(1)
    );
}
