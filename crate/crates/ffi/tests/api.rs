// SPDX-License-Identifier: Apache-2.0

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use scenegraph_core::model::BBox;
use scenegraph_core::service::{NewInstance, OpenMode, Project};
use scenegraph_core::ProjectConfig;
use scenegraph_ffi::*;
use serde_json::Value;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a library string.
unsafe fn take(s: *mut c_char) -> Value {
    assert!(!s.is_null());
    let v = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
    sg_string_free(s);
    v
}

fn last_error() -> String {
    let p = sg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Project with one image holding a car above and touching a road.
fn fixture() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    Project::init(dir.path(), &ProjectConfig::default_traffic()).unwrap();
    let img = dir.path().join("images/a.png");
    std::fs::write(&img, include_bytes!("fixtures/blank_100x100.png")).unwrap();
    let (mut p, _) = Project::open(dir.path(), OpenMode::Repair).unwrap();
    let new = |category: &str, b: BBox| NewInstance {
        id: None,
        category: category.into(),
        bbox: b,
        attributes: Default::default(),
        mask_ref: None,
    };
    let car = p.add_instance("a", new("car", BBox::new(10, 10, 30, 20))).unwrap();
    let road = p.add_instance("a", new("road", BBox::new(0, 15, 100, 100))).unwrap();
    (dir, car, road)
}

#[test]
fn recommend_annotate_delete_export() {
    let (dir, car, road) = fixture();
    let root = c(dir.path().to_str().unwrap());
    unsafe {
        let mut p = ptr::null_mut();
        let mut report = ptr::null_mut();
        assert_eq!(sg_project_open(root.as_ptr(), 0, &mut p, &mut report), SgStatus::Ok);
        assert_eq!(take(report)["issues"], Value::Array(vec![]));

        let req = c(&format!(r#"{{"subject_ref": "{car}", "object_ref": "{road}", "k": 3}}"#));
        let mut out = ptr::null_mut();
        assert_eq!(sg_project_recommend(p, c("a").as_ptr(), req.as_ptr(), &mut out), SgStatus::Ok);
        let recs = take(out);
        assert_eq!(recs["recommendations"][0]["source"], "rule");

        let ann = c(&format!(r#"{{"subject_ref": "{car}", "predicate": "driving on", "object_ref": "{road}"}}"#));
        assert_eq!(sg_project_annotate(p, c("a").as_ptr(), ann.as_ptr(), &mut out), SgStatus::Ok);
        let rid = take(out)["id"].as_str().unwrap().to_string();

        assert_eq!(sg_project_annotate(p, c("a").as_ptr(), ann.as_ptr(), &mut out), SgStatus::Conflict);
        assert!(last_error().starts_with("DuplicateTriple"), "{}", last_error());

        assert_eq!(sg_project_recommend(p, c("a").as_ptr(), req.as_ptr(), &mut out), SgStatus::Ok);
        let recs = take(out);
        assert_eq!(recs["recommendations"][0]["source"], "prior");
        assert_eq!(recs["recommendations"][0]["predicate"], "driving on");

        let mut prior = ptr::null_mut();
        assert_eq!(sg_project_prior(p, &mut prior), SgStatus::Ok);
        let mut score = 0u64;
        let bits = recs["features"].clone();
        assert!(bits.is_array());
        let mut fv = 0u8;
        assert_eq!(sg_extract_features(&[10, 10, 30, 20], &[0, 15, 100, 100], &mut fv), SgStatus::Ok);
        let st = sg_prior_score(prior, c("car").as_ptr(), c("road").as_ptr(), fv, c("driving on").as_ptr(), &mut score);
        assert_eq!(st, SgStatus::Ok);
        // One record: each of its k present features contributes 1·1.
        assert_eq!(score, u64::from(fv.count_ones()));
        sg_prior_free(prior);

        let split = c(r#"{"a": "test"}"#);
        assert_eq!(sg_project_export(p, SgExportFormat::Merged, split.as_ptr(), &mut out), SgStatus::Ok);
        let result = take(out);
        assert_eq!(result["images"], 1);
        assert!(dir.path().join("export/merged.json").is_file());

        assert_eq!(sg_project_delete_relationship(p, c("a").as_ptr(), c(&rid).as_ptr()), SgStatus::Ok);
        assert_eq!(sg_project_delete_relationship(p, c("a").as_ptr(), c(&rid).as_ptr()), SgStatus::NotFound);
        assert_eq!(sg_project_delete_relationship(p, c("zz").as_ptr(), c(&rid).as_ptr()), SgStatus::NotFound);
        sg_project_close(p);

        assert_eq!(sg_project_verify(root.as_ptr(), &mut out), SgStatus::Ok);
        assert_eq!(take(out)["issues"], Value::Array(vec![]));
    }
}

#[test]
fn errors_map_to_statuses() {
    let (dir, car, _) = fixture();
    let root = c(dir.path().to_str().unwrap());
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(sg_project_open(root.as_ptr(), 1, &mut p, ptr::null_mut()), SgStatus::Ok);
        let mut out = ptr::null_mut();
        let bad = c("{not json");
        assert_eq!(sg_project_annotate(p, c("a").as_ptr(), bad.as_ptr(), &mut out), SgStatus::Parse);
        let ann = c(&format!(r#"{{"subject_ref": "{car}", "predicate": "near", "object_ref": "i9"}}"#));
        assert_eq!(sg_project_annotate(p, c("a").as_ptr(), ann.as_ptr(), &mut out), SgStatus::ReadOnly);
        let rec = c(&format!(r#"{{"subject_ref": "{car}", "object_ref": "{car}"}}"#));
        assert_eq!(sg_project_recommend(p, c("a").as_ptr(), rec.as_ptr(), &mut out), SgStatus::Validation);
        assert!(last_error().starts_with("SelfLoop"));
        assert_eq!(sg_project_recommend(p, c("a").as_ptr(), ptr::null(), &mut out), SgStatus::NullArgument);
        let invalid = [0xffu8, 0];
        assert_eq!(sg_project_recommend(p, invalid.as_ptr().cast(), rec.as_ptr(), &mut out), SgStatus::InvalidUtf8);
        sg_project_close(p);
        sg_project_close(ptr::null_mut());
    }

    std::fs::write(dir.path().join("prior_db.tsv"), "garbage\n").unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(sg_project_verify(root.as_ptr(), &mut out), SgStatus::Integrity);
        assert_eq!(take(out)["issues"][0]["code"], "PriorDbMismatch");
    }
}

#[test]
fn prior_handle_laws() {
    unsafe {
        let db = sg_prior_new();
        let (s, o, p) = (c("car"), c("road"), c("driving on"));
        let mut before = ptr::null_mut();
        assert_eq!(sg_prior_to_text(db, &mut before), SgStatus::Ok);
        let before_text = CStr::from_ptr(before).to_owned();
        sg_string_free(before);

        assert_eq!(sg_prior_update(db, s.as_ptr(), o.as_ptr(), 0b11, p.as_ptr()), SgStatus::Ok);
        let mut score = 0;
        assert_eq!(sg_prior_score(db, s.as_ptr(), o.as_ptr(), 0b11, p.as_ptr(), &mut score), SgStatus::Ok);
        assert_eq!(score, 2);
        assert_eq!(sg_prior_score(db, s.as_ptr(), o.as_ptr(), 0, p.as_ptr(), &mut score), SgStatus::Ok);
        assert_eq!(score, 0);

        assert_eq!(sg_prior_remove(db, s.as_ptr(), o.as_ptr(), 0b11, p.as_ptr()), SgStatus::Ok);
        let mut after = ptr::null_mut();
        assert_eq!(sg_prior_to_text(db, &mut after), SgStatus::Ok);
        assert_eq!(CStr::from_ptr(after), before_text.as_c_str());
        sg_string_free(after);

        assert_eq!(sg_prior_remove(db, s.as_ptr(), o.as_ptr(), 0b11, p.as_ptr()), SgStatus::Underflow);
        let mut parsed = ptr::null_mut();
        assert_eq!(sg_prior_from_text(c("nonsense").as_ptr(), &mut parsed), SgStatus::Parse);
        assert!(parsed.is_null());
        sg_prior_free(db);

        let mut bits = 0;
        assert_eq!(sg_extract_features(&[5, 5, 5, 9], &[0, 0, 1, 1], &mut bits), SgStatus::Validation);
        assert_eq!(sg_extract_features(ptr::null(), &[0, 0, 1, 1], &mut bits), SgStatus::NullArgument);
    }
}
