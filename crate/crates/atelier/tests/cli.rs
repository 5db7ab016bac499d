//! End-to-end runs of the `atelier` binary: staged commands against the
//! orchestrated `run`, scan ingestion, alignment, the mock embedder, exit
//! codes, and rerun determinism.

use std::path::Path;
use std::process::{Command, Output};

fn atelier(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atelier"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = atelier(args, dir);
    assert!(
        out.status.success(),
        "atelier {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("reading {rel}: {e}"))
}

#[test]
fn staged_commands_match_the_orchestrated_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let stdout = ok(
        &[
            "synth", "--out", "synth", "--identities", "3", "--faces", "12", "--dim", "16",
            "--sigma", "0.04", "--separation", "0.8", "--seed", "11",
        ],
        dir,
    );
    assert!(stdout.contains("generated 36 faces across 3 identities"), "{stdout}");

    ok(
        &[
            "cluster", "--embeddings", "synth/embeddings.femb", "--eps", "elbow", "--min-pts",
            "5", "--min-cluster-size", "1", "--out", "clusters.jsonl",
        ],
        dir,
    );
    ok(
        &[
            "attribute", "--clusters", "clusters.jsonl", "--manifest", "synth/manifest.jsonl",
            "--task", "artist", "--out", "attrs.jsonl",
        ],
        dir,
    );
    ok(
        &[
            "report", "--clusters", "clusters.jsonl", "--attributions", "attrs.jsonl",
            "--manifest", "synth/manifest.jsonl", "--task", "artist", "--threshold", "0.5",
            "--out", "report.json", "--csv", "report.csv",
        ],
        dir,
    );

    std::fs::write(
        dir.join("config.toml"),
        r#"
tasks = ["artist"]

[input]
manifest = "synth/manifest.jsonl"
embeddings = "synth/embeddings.femb"

[cluster]
eps = "elbow"
min_pts = 5
min_cluster_size = 1

[report]
csv = true
"#,
    )
    .unwrap();
    for out_dir in ["run_a", "run_b"] {
        ok(&["run", "--config", "config.toml", "--out-dir", out_dir], dir);
    }

    // Stage outputs and run outputs agree byte for byte where the formats
    // coincide; the run report additionally embeds the resolved parameters,
    // so compare its scores structurally instead.
    assert_eq!(read(dir, "clusters.jsonl"), read(dir, "run_a/clusters_artist.jsonl"));
    assert_eq!(read(dir, "attrs.jsonl"), read(dir, "run_a/attributions_artist.jsonl"));
    let staged: serde_json::Value =
        serde_json::from_slice(&read(dir, "report.json")).unwrap();
    let from_run: serde_json::Value =
        serde_json::from_slice(&read(dir, "run_a/report_artist.json")).unwrap();
    assert_eq!(staged["partition"], from_run["partition"]);
    assert_eq!(staged["rows"], from_run["rows"]);
    assert_eq!(staged["merged_accuracy"], from_run["merged_accuracy"]);
    assert_eq!(read(dir, "report.csv"), read(dir, "run_a/report_artist.csv"));

    // Rerunning into a second directory reproduces every file exactly.
    for name in [
        "clusters_artist.jsonl",
        "attributions_artist.jsonl",
        "report_artist.json",
        "report_artist.csv",
        "bundle.json",
    ] {
        assert_eq!(
            read(dir, &format!("run_a/{name}")),
            read(dir, &format!("run_b/{name}")),
            "{name} differs between reruns"
        );
    }
}

#[test]
fn scan_align_embed_chain_runs_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (rel, w, h) in [
        ("paintings/baroque/Artist_One_1640.png", 300u32, 240u32),
        ("paintings/rococo/Other_Two.png", 260, 200),
    ] {
        let path = dir.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        image::RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8])
        })
        .save(&path)
        .unwrap();
    }

    let stdout = ok(&["ingest", "--scan", "paintings", "--out", "manifest.jsonl"], dir);
    assert!(stdout.contains("wrote 2 painting records"), "{stdout}");
    let manifest = String::from_utf8(read(dir, "manifest.jsonl")).unwrap();
    assert!(manifest.contains("baroque--artist_one_1640"), "{manifest}");
    assert!(manifest.contains("rococo--other_two"), "{manifest}");

    std::fs::write(
        dir.join("detections.jsonl"),
        "{\"painting_id\":\"baroque--artist_one_1640\",\"face_index\":0,\"x1\":60,\"y1\":40,\"x2\":220,\"y2\":200}\n\
         {\"painting_id\":\"rococo--other_two\",\"face_index\":0,\"x1\":30,\"y1\":20,\"x2\":190,\"y2\":180}\n",
    )
    .unwrap();
    let stdout = ok(
        &[
            "align", "--manifest", "manifest.jsonl", "--detections", "detections.jsonl",
            "--out", "crops",
        ],
        dir,
    );
    assert!(stdout.contains("wrote 2 crops from 2 paintings"), "{stdout}");
    assert!(dir.join("crops/baroque--artist_one_1640__0.png").exists());

    let stdout = ok(&["embed", "--crops", "crops", "--mock", "--out", "store.femb"], dir);
    assert!(stdout.contains("embedded 2 crops"), "{stdout}");

    let stdout = ok(
        &[
            "cluster", "--embeddings", "store.femb", "--eps", "1.9", "--min-pts", "1",
            "--out", "clusters.jsonl",
        ],
        dir,
    );
    assert!(stdout.contains("clustered 2 embeddings"), "{stdout}");
}

#[test]
fn bad_inputs_exit_2_and_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = atelier(
        &["cluster", "--embeddings", "missing.femb", "--out", "c.jsonl"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.femb"), "{stderr}");

    let out = atelier(
        &["cluster", "--embeddings", "x.femb", "--eps", "knee", "--out", "c.jsonl"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--eps"), "{stderr}");

    // Clap usage errors share the input-fault exit code.
    let out = atelier(&["cluster"], dir);
    assert_eq!(out.status.code(), Some(2));

    let out = atelier(&["embed", "--crops", "crops", "--out", "s.femb"], dir);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--mock"), "{stderr}");

    let out = atelier(
        &["synth", "--out", "s", "--identities", "0"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
}
