// SPDX-License-Identifier: Apache-2.0

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.json";
pub const PRIOR_FILE: &str = "prior_db.tsv";
pub const LOG_FILE: &str = "mutations.log";
pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_DIR: &str = "annotations";
pub const EXPORT_DIR: &str = "export";

const BITMAP_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Directory layout of a project.
#[derive(Debug, Clone)]
pub struct ProjectPaths {
    pub root: PathBuf,
}

impl ProjectPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ProjectPaths { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn prior_db(&self) -> PathBuf {
        self.root.join(PRIOR_FILE)
    }

    pub fn log(&self) -> PathBuf {
        self.root.join(LOG_FILE)
    }

    pub fn images(&self) -> PathBuf {
        self.root.join(IMAGES_DIR)
    }

    pub fn annotations(&self) -> PathBuf {
        self.root.join(ANNOTATIONS_DIR)
    }

    pub fn export(&self) -> PathBuf {
        self.root.join(EXPORT_DIR)
    }

    pub fn annotation_file(&self, image_id: &str) -> PathBuf {
        self.annotations().join(format!("{image_id}.json"))
    }

    /// `(image_id, path)` for every bitmap under `images/`, sorted by id.
    pub fn bitmaps(&self) -> io::Result<Vec<(String, PathBuf)>> {
        let dir = self.images();
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let is_bitmap = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| BITMAP_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if let (true, Some(stem)) = (is_bitmap, path.file_stem().and_then(|s| s.to_str())) {
                out.push((stem.to_string(), path.clone()));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Every `annotations/*.json`, sorted.
    pub fn annotation_files(&self) -> io::Result<Vec<PathBuf>> {
        json_files(&self.annotations())
    }
}

pub fn json_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Image ids double as file names.
pub fn is_valid_image_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Writes via a sibling temp file and rename, so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn append_line(path: &Path, line: &str) -> io::Result<()> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.sync_data()
}
