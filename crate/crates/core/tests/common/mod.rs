// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

pub mod gen;

use std::path::Path;

use scenegraph_core::service::{OpenMode, Project};
use scenegraph_core::ProjectConfig;
use tempfile::TempDir;

pub fn write_png(path: &Path, width: u32, height: u32) {
    image::RgbImage::new(width, height).save(path).unwrap();
}

/// Project directory with the default config and `ids` as blank bitmaps.
pub fn project_dir(ids: &[&str], width: u32, height: u32) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    Project::init(dir.path(), &ProjectConfig::default_traffic()).unwrap();
    for id in ids {
        write_png(&dir.path().join("images").join(format!("{id}.png")), width, height);
    }
    dir
}

pub fn open(dir: &Path) -> Project {
    let (project, report) = Project::open(dir, OpenMode::Repair).unwrap();
    assert!(report.is_clean(), "{report:?}");
    project
}
