use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::defectgen::image_files;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `root/train/good/*` for training, `root/test/<type>/*` for testing; `good` is the clean type.
    #[default]
    Mvtec,
    /// Every image under `root`, unlabeled. Used for training, banks and plain scoring.
    Flat,
}

impl FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mvtec" => Ok(Layout::Mvtec),
            "flat" => Ok(Layout::Flat),
            _ => Err(Error::Configuration(format!("unknown layout {s:?} (expected mvtec or flat)"))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Mvtec => "mvtec",
            Layout::Flat => "flat",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Good,
    Defective,
}

impl Label {
    pub fn is_defective(self) -> bool {
        self == Label::Defective
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub path: PathBuf,
    /// `None` for unlabeled layouts.
    pub label: Option<Label>,
    pub defect_type: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub category: String,
    pub layout: Layout,
    pub train_good: Vec<PathBuf>,
    pub test: Vec<TestEntry>,
    /// Files with an image extension whose header could not be read.
    pub skipped: Vec<PathBuf>,
}

impl DatasetIndex {
    pub fn n_good(&self) -> usize {
        self.test.iter().filter(|e| e.label == Some(Label::Good)).count()
    }

    pub fn n_defective(&self) -> usize {
        self.test.iter().filter(|e| e.label == Some(Label::Defective)).count()
    }

    /// Path relative to the dataset root, `/`-separated, for stable output.
    pub fn display_path(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
    }
}

fn readable(files: Vec<PathBuf>, skipped: &mut Vec<PathBuf>) -> Vec<PathBuf> {
    let (ok, bad): (Vec<_>, Vec<_>) = files.into_iter().partition(|p| image::image_dimensions(p).is_ok());
    skipped.extend(bad);
    ok
}

/// Sorted, deterministic index of a dataset tree.
pub fn ingest_dataset(root: &Path, layout: Layout) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::Configuration(format!("dataset root {} is not a directory", root.display())));
    }
    let category = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut skipped = Vec::new();
    let (train_good, test) = match layout {
        Layout::Flat => {
            let files = readable(image_files(root)?, &mut skipped);
            if files.is_empty() {
                return Err(Error::Configuration(format!("no images under {}", root.display())));
            }
            let test = files.iter().map(|p| TestEntry { path: p.clone(), label: None, defect_type: None }).collect();
            (files, test)
        }
        Layout::Mvtec => {
            let good = root.join("train").join("good");
            if !good.is_dir() {
                return Err(Error::Configuration(format!("missing training directory {}", good.display())));
            }
            let train = readable(image_files(&good)?, &mut skipped);
            if train.is_empty() {
                return Err(Error::Configuration(format!("no images in {}", good.display())));
            }
            let test_dir = root.join("test");
            if !test_dir.is_dir() {
                return Err(Error::Configuration(format!("missing test directory {}", test_dir.display())));
            }
            let mut types: Vec<PathBuf> = std::fs::read_dir(&test_dir)
                .map_err(|e| Error::io(&test_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            types.sort();
            let mut test = Vec::new();
            for dir in types {
                let name = dir.file_name().unwrap().to_string_lossy().into_owned();
                let label = if name == "good" { Label::Good } else { Label::Defective };
                for path in readable(image_files(&dir)?, &mut skipped) {
                    test.push(TestEntry { path, label: Some(label), defect_type: Some(name.clone()) });
                }
            }
            if test.is_empty() {
                return Err(Error::Configuration(format!("no test images under {}", test_dir.display())));
            }
            (train, test)
        }
    };
    if !skipped.is_empty() {
        log::warn!("skipped {} unreadable image(s) under {}", skipped.len(), root.display());
    }
    Ok(DatasetIndex { root: root.to_path_buf(), category, layout, train_good, test, skipped })
}
