// SPDX-License-Identifier: Apache-2.0

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::{open, project_dir};
use scenegraph_core::cli::{run, EXIT_INVALID, EXIT_IO, EXIT_OK};
use scenegraph_core::formats::{load_merged, parse_per_image, save_per_image};
use scenegraph_core::model::BBox;
use scenegraph_core::service::{AnnotateRequest, NewCluster, NewInstance, NewRegion, Project};
use serde_json::Value;

fn sg(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["sgannot"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn new(category: &str, b: [u32; 4]) -> NewInstance {
    NewInstance {
        id: None,
        category: category.into(),
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
        attributes: Default::default(),
        mask_ref: None,
    }
}

/// Two annotated images: a car on a road, and a clustered pair of persons
/// walking on a sidewalk inside a region.
fn populated() -> tempfile::TempDir {
    let dir = project_dir(&["a", "b"], 100, 100);
    let mut p = open(dir.path());
    let car = p.add_instance("a", new("car", [10, 10, 30, 20])).unwrap();
    let road = p.add_instance("a", new("road", [0, 15, 100, 100])).unwrap();
    let ann = |s: &str, pr: &str, o: &str| AnnotateRequest {
        id: None,
        subject_ref: s.into(),
        predicate: pr.into(),
        object_ref: o.into(),
    };
    p.annotate("a", ann(&car, "driving on", &road)).unwrap();
    let p1 = p.add_instance("b", new("person", [0, 50, 5, 62])).unwrap();
    let p2 = p.add_instance("b", new("person", [6, 50, 11, 62])).unwrap();
    let walk = p.add_instance("b", new("sidewalk", [0, 60, 100, 80])).unwrap();
    let crowd = p.add_cluster("b", NewCluster { id: None, member_ids: vec![p1, p2] }).unwrap();
    p.add_region("b", NewRegion { id: None, bbox: BBox::new(0, 40, 100, 90), label: None }).unwrap();
    p.annotate("b", ann(&crowd, "walking on", &walk)).unwrap();
    dir
}

#[test]
fn stats_json_and_table() {
    let dir = populated();
    let (code, out, _) = sg(&["stats", path(dir.path()), "--format", "json", "--triples", "5"]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    // 5 instances, all in the graph; car-road plus 2 expanded crowd edges.
    assert_eq!(v["total_instances"], 5);
    assert_eq!(v["instances_in_graph"], 5);
    assert_eq!(v["total_relationships"], 3);
    assert_eq!(v["relationships_per_instance_in_graph"], 1.2);
    assert_eq!(v["top_triples"][0]["predicate"], "walking on");

    let (code, out, _) = sg(&["stats", path(dir.path())]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("pct_in_graph") && out.contains("100.00%"), "{out}");
}

#[test]
fn convert_round_trip() {
    let dir = populated();
    let merged = dir.path().join("out/merged.json");
    let (code, out, err) = sg(&["--format", "json", "convert", "--to", "merged", path(dir.path()), path(&merged)]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["images"], 2);
    assert_eq!(v["report"]["dropped_regions"].as_array().unwrap().len(), 1);
    assert_eq!(v["report"]["expanded_clusters"].as_array().unwrap().len(), 1);
    let data = load_merged(&fs::read(&merged).unwrap()).unwrap();
    assert_eq!(data.images.len(), 2);

    let back = dir.path().join("back");
    let (code, out, err) = sg(&["convert", "--to", "per-image", path(&merged), path(&back)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("converted 2 image(s)"));
    let b = parse_per_image(&fs::read(back.join("b.json")).unwrap()).unwrap();
    assert!(b.clusters.is_empty() && b.regions.is_empty());
    assert_eq!(b.relationships.len(), 2);
    let a_src = parse_per_image(&fs::read(dir.path().join("annotations/a.json")).unwrap()).unwrap();
    let a_back = parse_per_image(&fs::read(back.join("a.json")).unwrap()).unwrap();
    assert_eq!(save_per_image(&a_back), save_per_image(&a_src));
}

#[test]
fn convert_failures() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in");
    fs::create_dir(&src).unwrap();
    fs::write(
        src.join("x.json"),
        r#"{"image": {"image_id": "x", "width": 10, "height": 10, "file_name": "x.png"},
            "instances": [{"id": "i", "category": "dragon", "bbox": [0, 0, 1, 1]}]}"#,
    )
    .unwrap();
    let (code, _, err) = sg(&["convert", "--to", "merged", path(&src), path(&dir.path().join("o.json"))]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("x.json"), "{err}");

    fs::write(src.join("x.json"), "{").unwrap();
    let (code, _, _) = sg(&["convert", "--to", "merged", path(&src), path(&dir.path().join("o.json"))]);
    assert_eq!(code, EXIT_IO);

    let (code, _, _) = sg(&["convert", "--to", "per-image", "/nonexistent/m.json", path(dir.path())]);
    assert_eq!(code, EXIT_IO);

    fs::write(src.join("x.json"), r#"{"image": {"image_id": "x", "width": 10, "height": 10, "file_name": "x.png"}}"#)
        .unwrap();
    let split = dir.path().join("split.json");
    fs::write(&split, r#"{"x": "holdout"}"#).unwrap();
    let (code, _, err) =
        sg(&["convert", "--to", "merged", path(&src), path(&dir.path().join("o.json")), "--split", path(&split)]);
    assert_eq!(code, EXIT_INVALID, "{err}");
}

#[test]
fn verify_and_rebuild() {
    let dir = populated();
    let (code, out, _) = sg(&["verify", path(dir.path())]);
    assert_eq!((code, out.as_str()), (EXIT_OK, "ok\n"));

    fs::write(dir.path().join("prior_db.tsv"), "# scene-graph prior database v1\ntotal\t9\n").unwrap();
    let (code, out, _) = sg(&["verify", path(dir.path()), "--format", "json"]);
    assert_eq!(code, EXIT_INVALID);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["issues"][0]["code"], "PriorDbMismatch");

    let (code, out, _) = sg(&["rebuild-priors", path(dir.path()), "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!((v["repairs"].as_u64(), v["total_annotations"].as_u64()), (Some(1), Some(2)));
    assert_eq!(sg(&["verify", path(dir.path())]).0, EXIT_OK);

    let empty = tempfile::tempdir().unwrap();
    let (code, _, err) = sg(&["verify", path(empty.path())]);
    assert_eq!(code, EXIT_IO);
    assert!(err.contains("MissingConfig"));
}

#[test]
fn replay_eval_over_project_log() {
    let dir = populated();
    let log = dir.path().join("mutations.log");
    let (code, out, _) = sg(&["replay-eval", path(&log), "--k", "1", "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["annotations"], 2);
    // car/road replays against empty priors: rule 1 is "on", not "driving on";
    // crowd/sidewalk likewise gets a rule list without "walking on".
    assert_eq!(v["accuracy"], 0.0);

    let (code, _, _) = sg(&["replay-eval", path(&dir.path().join("nope.log")), "--k", "1"]);
    assert_eq!(code, EXIT_IO);

    let only_instances = project_dir(&["a"], 10, 10);
    let mut p = Project::open(only_instances.path(), scenegraph_core::service::OpenMode::Repair).unwrap().0;
    p.add_instance("a", new("car", [0, 0, 1, 1])).unwrap();
    let (code, _, err) = sg(&["replay-eval", path(&only_instances.path().join("mutations.log")), "--k", "1"]);
    assert_eq!(code, EXIT_INVALID, "{err}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_sgannot");
    let status = Command::new(bin).arg("--version").output().unwrap();
    assert!(status.status.success());
    let status = Command::new(bin).arg("--bogus").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_IO));
    assert!(status.stdout.is_empty());

    // SG_PROJECT takes precedence over --project: the flag points at a
    // directory without a config, the variable at nothing at all.
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin)
        .args(["serve", "--project", path(dir.path()), "--port", "0"])
        .env("SG_PROJECT", "/nonexistent/sg-project")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_IO));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("/nonexistent/sg-project"), "{err}");
}
