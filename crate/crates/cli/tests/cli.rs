use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cvf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvf"))
        .args(args)
        .env_remove("CVF_CONFIG")
        .output()
        .unwrap()
}

fn s(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

fn corpus_args() -> Vec<String> {
    let f = fixtures();
    vec![
        "--annotations".into(),
        s(f.join("coco/instances_polygons.json")),
        "--questions".into(),
        s(f.join("vqa/questions.json")),
        "--answers".into(),
        s(f.join("vqa/annotations.json")),
    ]
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let out = cvf(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in [
        "ingest-stats",
        "select-iv",
        "select-cv",
        "inpaint",
        "consistency",
        "augment-plan",
        "compare-reports",
        "sample-review",
        "serve-review",
        "agreement",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert!(!text.contains("stub-inpaint"));
}

#[test]
fn usage_errors_exit_with_two_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = s(dir.path().join("x"));
    let mut bad_threshold = vec!["select-iv"];
    let args = corpus_args();
    bad_threshold.extend(args.iter().map(String::as_str));
    bad_threshold.extend(["--area-threshold", "1.5", "--out", &out_dir]);
    for args in [
        bad_threshold,
        vec!["select-iv", "--out", &out_dir],
        vec!["select-iv", "--no-such-flag"],
        vec!["consistency", "--mode", "sideways"],
    ] {
        let out = cvf(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let out = cvf(&["select-iv", "--out", &out_dir]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim().lines().count(), 1);
    assert!(err.starts_with("error[usage]: --annotations"), "{err}");
}

#[test]
fn inpaint_template_must_name_every_placeholder() {
    let dir = tempfile::tempdir().unwrap();
    let iv = dir.path().join("iv");
    let mut args = vec!["select-iv".to_string()];
    args.extend(corpus_args());
    args.extend(["--out".into(), s(iv.clone())]);
    assert!(cvf(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    let out = cvf(&[
        "inpaint",
        "--manifest",
        &s(iv.join("manifest.jsonl")),
        "--annotations",
        &s(fixtures().join("coco/instances_polygons.json")),
        "--images",
        &s(fixtures().join("images")),
        "--out",
        &s(dir.path().join("edited")),
        "--template",
        "cp {image} {out}",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("{mask}"));
}

#[test]
fn data_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cvf(&["agreement", "--labels", &s(dir.path().join("absent.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]"));
}

#[test]
fn config_file_supplies_paths_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let cfg = dir.path().join("cvf.toml");
    std::fs::write(
        &cfg,
        format!(
            "annotations = {:?}\nquestions = {:?}\nanswers = {:?}\n\n[selection]\narea_threshold = 0.02\n",
            s(f.join("coco/instances_rle.json")),
            s(f.join("vqa/questions.json")),
            s(f.join("vqa/annotations.json")),
        ),
    )
    .unwrap();
    let (loose, tight, flag) = (dir.path().join("loose"), dir.path().join("tight"), dir.path().join("flag"));

    let mut args = vec!["select-iv".to_string()];
    args.extend(corpus_args());
    args.extend(["--out".into(), s(loose.clone())]);
    assert!(cvf(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.success());

    let out = cvf(&["--config", &s(cfg.clone()), "select-iv", "--out", &s(tight.clone())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // a flag beats the file
    let out = Command::new(env!("CARGO_BIN_EXE_cvf"))
        .args(["select-iv", "--area-threshold", "0.1", "--out", &s(flag.clone())])
        .env("CVF_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (l, t, g) = (summary(&loose), summary(&tight), summary(&flag));
    assert_eq!(l["edit"], 13);
    assert!(t["edit"].as_u64().unwrap() < 13);
    assert_eq!(g["edit"], 13);
    let prov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tight.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["settings"]["selection"]["area_threshold"], 0.02);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cvf.toml");
    std::fs::write(&cfg, "[selection]\narea_treshold = 0.2\n").unwrap();
    let out = cvf(&["--config", &s(cfg), "select-iv", "--out", &s(dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn agreement_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.jsonl");
    std::fs::copy(fixtures().join("labels/labels.jsonl"), &labels).unwrap();
    let report = dir.path().join("agreement.json");
    let out = cvf(&["agreement", "--labels", &s(labels), "--out", &s(report.clone())]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("all agree") && l.contains("60.00")), "{text}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["universe"], 20);
    assert_eq!(json["union"]["no"], 6);
}

#[test]
fn review_sample_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let iv = dir.path().join("iv");
    let mut args = vec!["select-iv".to_string()];
    args.extend(corpus_args());
    args.extend(["--out".into(), s(iv.clone())]);
    assert!(cvf(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    let mut samples = Vec::new();
    for (k, seed) in ["7", "7"].iter().enumerate() {
        let p = dir.path().join(format!("sample{k}.json"));
        let out = cvf(&["sample-review", "--manifest", &s(iv.join("manifest.jsonl")), "--cap", "2", "--seed", seed, "--out", &s(p.clone())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        samples.push(std::fs::read_to_string(p).unwrap());
    }
    assert_eq!(samples[0], samples[1]);
    let v: serde_json::Value = serde_json::from_str(&samples[0]).unwrap();
    assert!(v["per_type"].as_object().unwrap().values().all(|n| n.as_u64().unwrap() <= 2));
}
