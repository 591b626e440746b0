//! End-to-end checks of the `hn3d` binary: the documented pipeline, exit
//! codes, and resolved-config reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hn3d"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const GEN: &[&str] = &[
    "gen-synthetic",
    "--categories",
    "2",
    "--per-cat",
    "5",
    "--subtypes",
    "2",
    "--views",
    "2",
    "--feat",
    "16",
    "--landmarks",
    "4",
    "--points",
    "16",
    "--texture-dim",
    "4",
    "--seed",
    "3",
];

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut gen = GEN.to_vec();
    gen.extend(["--out", "data"]);
    assert_ok(&run(&gen, root), "gen-synthetic");
    assert_ok(&run(&["validate", "--data", "data"], root), "validate");
    assert_ok(
        &run(
            &[
                "precompute",
                "--data",
                "data",
                "--sim",
                "i2i",
                "--alpha",
                "0.25",
                "--out",
                "s1",
            ],
            root,
        ),
        "precompute i2i",
    );
    assert_ok(
        &run(
            &[
                "precompute",
                "--data",
                "data",
                "--sim",
                "i2l2",
                "--alpha",
                "0.25",
                "--out",
                "s2",
            ],
            root,
        ),
        "precompute i2l2",
    );
    assert_ok(
        &run(
            &[
                "train",
                "--data",
                "data",
                "--mode",
                "hn-avg",
                "--simstore",
                "s1",
                "--simstore2",
                "s2",
                "--batch",
                "4",
                "--epochs",
                "2",
                "--seed",
                "1",
                "--out",
                "run",
            ],
            root,
        ),
        "train hn-avg",
    );
    let eval = run(
        &[
            "eval",
            "zeroshot",
            "--ckpt",
            "run/ckpt-final",
            "--data",
            "data",
            "--topk",
            "1,5",
            "--seed",
            "0",
            "--out",
            "report.csv",
        ],
        root,
    );
    assert_ok(&eval, "eval zeroshot");
    let report = std::fs::read_to_string(root.join("report.csv")).unwrap();
    assert!(report.starts_with("task,metric,k,value,n"));
    assert!(report.contains("zeroshot,overall,1,"));
    assert!(report.contains("zeroshot,overall,5,"));

    let rank = run(
        &[
            "sim-rank",
            "--data",
            "data",
            "--query-id",
            "cat00_obj000",
            "--sim",
            "i2i",
            "--topk",
            "3",
        ],
        root,
    );
    assert_ok(&rank, "sim-rank");
    let lines = String::from_utf8_lossy(&rank.stdout);
    assert!(lines.contains("cat00_obj"), "rank output: {lines}");

    // a thread-capped precompute produces the same store bytes
    let capped = bin()
        .args([
            "precompute",
            "--data",
            "data",
            "--sim",
            "i2i",
            "--alpha",
            "0.25",
            "--out",
            "s1-capped",
        ])
        .env("HN3D_THREADS", "1")
        .current_dir(root)
        .output()
        .unwrap();
    assert_ok(&capped, "capped precompute");
    let a = std::fs::read(root.join("s1/cat0000.emb")).unwrap();
    let b = std::fs::read(root.join("s1-capped/cat0000.emb")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn i2l2_without_landmarks_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut gen = GEN.to_vec();
    gen.extend(["--out", "data"]);
    assert_ok(&run(&gen, root), "gen-synthetic");
    // strip landmark entries from the manifest
    let manifest_path = root.join("data/manifest.json");
    let mut manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    for c in manifest["categories"].as_array_mut().unwrap() {
        c.as_object_mut().unwrap().remove("landmark_file");
    }
    std::fs::write(&manifest_path, manifest.to_string()).unwrap();

    let out = run(
        &[
            "precompute",
            "--data",
            "data",
            "--sim",
            "i2l2",
            "--out",
            "s2",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("no landmark set"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn hn_avg_without_second_store_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut gen = GEN.to_vec();
    gen.extend(["--out", "data"]);
    assert_ok(&run(&gen, root), "gen-synthetic");
    assert_ok(
        &run(
            &[
                "precompute",
                "--data",
                "data",
                "--sim",
                "i2i",
                "--out",
                "s1",
            ],
            root,
        ),
        "precompute",
    );
    let out = run(
        &[
            "train",
            "--data",
            "data",
            "--mode",
            "hn-avg",
            "--simstore",
            "s1",
            "--batch",
            "4",
            "--epochs",
            "1",
            "--out",
            "run",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn resolved_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut gen = GEN.to_vec();
    gen.extend(["--out", "a"]);
    assert_ok(&run(&gen, root), "gen a");
    // rerun purely from the resolved config
    assert_ok(
        &run(
            &[
                "gen-synthetic",
                "--config",
                "a/resolved_config.json",
                "--out",
                "b",
            ],
            root,
        ),
        "gen b",
    );
    let walk = |top: &Path| {
        let mut files = Vec::new();
        let mut stack = vec![top.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p.strip_prefix(top).unwrap().to_path_buf());
                }
            }
        }
        files.sort();
        files
    };
    let fa = walk(&root.join("a"));
    let fb = walk(&root.join("b"));
    assert_eq!(fa, fb);
    for rel in fa {
        let ba = std::fs::read(root.join("a").join(&rel)).unwrap();
        let bb = std::fs::read(root.join("b").join(&rel)).unwrap();
        assert_eq!(ba, bb, "{} differs", rel.display());
    }
}

#[test]
fn validate_reports_violations_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut gen = GEN.to_vec();
    gen.extend(["--out", "data"]);
    assert_ok(&run(&gen, root), "gen-synthetic");
    // drop one views file
    std::fs::remove_file(root.join("data/views/cat00_obj000.emb")).unwrap();
    let out = run(&["validate", "--data", "data"], root);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("cat00_obj000"));
}

#[test]
fn ablate_dedups_grid_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let template = serde_json::json!({
        "categories": 2, "subtypes": 1, "per_category": 5, "views": 2,
        "feat_dim": 24, "landmarks": 8, "points": 16, "texture_dim": 4,
        "view_noise": 0.05, "texture_scale": 0.2, "subtype_scale": 0.35,
        "centroid_mix": 0.4, "cloud_jitter": 0.01, "param_jitter": 0.06,
        "holdout_frac": 0.2, "seed": 5
    });
    std::fs::write(root.join("template.json"), template.to_string()).unwrap();
    let out = run(
        &[
            "ablate-landmarks",
            "--data-template",
            "template.json",
            "--grid",
            "8,8",
            "--seeds",
            "1",
            "--batch",
            "4",
            "--epochs",
            "1",
            "--out",
            "table.csv",
        ],
        root,
    );
    assert_ok(&out, "ablate");
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate landmark count"));
    let table = std::fs::read_to_string(root.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2, "header plus one deduplicated row");
}
