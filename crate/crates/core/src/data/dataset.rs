//! Dataset directories: `<root>/<split>/<class_or_scene>/<clip_id>.pcv` plus a
//! `manifest.json` listing every clip and the `DatasetSpec` that generated it.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{generate, read_pcv_with_labels, write_pcv, PointCloudVideo, CLASS_NAMES};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Segmentation,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Segmentation => "segmentation",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "segmentation" => Ok(Task::Segmentation),
            other => Err(Error::Parameter(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Even clip indices (within a class, or overall for scenes) train, odd ones test.
    pub fn of_index(i: usize) -> Split {
        if i % 2 == 0 {
            Split::Train
        } else {
            Split::Test
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub task: Task,
    /// Motion classes used (classification only, at most four).
    pub num_classes: usize,
    /// Clips per class for classification, total scenes for segmentation.
    pub clips: usize,
    pub frames: usize,
    pub points: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub min_movers: usize,
    pub max_movers: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            task: Task::Classification,
            num_classes: CLASS_NAMES.len(),
            clips: 8,
            frames: 8,
            points: 128,
            noise_sigma: 0.01,
            seed: 0,
            min_movers: 1,
            max_movers: 3,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.clips == 0 || self.frames == 0 || self.points == 0 {
            return bad(format!(
                "clips, frames and points must be positive (got {}, {}, {})",
                self.clips, self.frames, self.points
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma must be finite and non-negative, got {}", self.noise_sigma));
        }
        match self.task {
            Task::Classification if self.num_classes == 0 || self.num_classes > CLASS_NAMES.len() => {
                bad(format!("num_classes must be in 1..={}, got {}", CLASS_NAMES.len(), self.num_classes))
            }
            Task::Segmentation if self.min_movers > self.max_movers || self.max_movers > 3 => bad(format!(
                "movers must satisfy min <= max <= 3, got {}..={}",
                self.min_movers, self.max_movers
            )),
            _ => Ok(()),
        }
    }

    /// Distinct target labels: motion classes, or ground plus one per mover.
    pub fn num_labels(&self) -> usize {
        match self.task {
            Task::Classification => self.num_classes,
            Task::Segmentation => self.max_movers + 1,
        }
    }
}

/// A generated or loaded clip with its place in the dataset.
#[derive(Clone, Debug)]
pub struct LabeledClip {
    pub id: String,
    pub group: String,
    pub split: Split,
    pub label: Option<u16>,
    pub video: PointCloudVideo,
}

impl LabeledClip {
    pub fn relative_path(&self) -> String {
        format!("{}/{}/{}.pcv", self.split.name(), self.group, self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub path: String,
    pub split: Split,
    pub group: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<u16>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub num_labels: usize,
    pub clips: Vec<ClipEntry>,
}

/// Generates the dataset described by `spec` under `root` and returns its manifest.
pub fn write_dataset(root: impl AsRef<Path>, spec: &DatasetSpec) -> Result<Manifest> {
    let root = root.as_ref();
    let clips = generate(spec)?;
    let mut entries = Vec::with_capacity(clips.len());
    for clip in &clips {
        let rel = clip.relative_path();
        let path = root.join(&rel);
        let dir = path.parent().expect("clip paths have a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pcv(&path, &clip.video)?;
        entries.push(ClipEntry {
            path: rel,
            split: clip.split,
            group: clip.group.clone(),
            label: clip.label,
        });
    }
    let manifest = Manifest {
        spec: spec.clone(),
        num_labels: spec.num_labels(),
        clips: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A dataset loaded from disk, clips in manifest order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub clips: Vec<LabeledClip>,
}

impl Dataset {
    pub fn task(&self) -> Task {
        self.manifest.spec.task
    }

    pub fn num_labels(&self) -> usize {
        self.manifest.num_labels
    }

    pub fn split(&self, split: Split) -> Vec<&LabeledClip> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let limit = u16::try_from(manifest.num_labels)
        .map_err(|_| Error::Parameter(format!("num_labels {} too large", manifest.num_labels)))?;
    let mut clips = Vec::with_capacity(manifest.clips.len());
    for entry in &manifest.clips {
        let video = read_pcv_with_labels(root.join(&entry.path), Some(limit))?;
        if video.clip_label() != entry.label {
            return Err(Error::Parameter(format!(
                "{}: clip label {:?} disagrees with manifest {:?}",
                entry.path,
                video.clip_label(),
                entry.label
            )));
        }
        let id = Path::new(&entry.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        clips.push(LabeledClip {
            id,
            group: entry.group.clone(),
            split: entry.split,
            label: entry.label,
            video,
        });
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
        clips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for e in fs::read_dir(dir).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                    out.push((rel, fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn layout_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            clips: 4,
            frames: 4,
            points: 32,
            seed: 7,
            ..DatasetSpec::default()
        };
        let manifest = write_dataset(dir.path(), &spec).unwrap();
        assert_eq!(manifest.clips.len(), 16);
        assert!(dir.path().join("train/translate_x/clip_0000.pcv").is_file());
        assert!(dir.path().join("test/oscillate/clip_0003.pcv").is_file());

        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.manifest, manifest);
        assert_eq!(ds.split(Split::Train).len(), 8);
        assert_eq!(ds.split(Split::Test).len(), 8);
        let fresh = generate(&spec).unwrap();
        for (a, b) in ds.clips.iter().zip(&fresh) {
            assert_eq!(a.video, b.video);
            assert_eq!(a.id, b.id);
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let spec = DatasetSpec {
            task: Task::Segmentation,
            clips: 3,
            frames: 2,
            points: 24,
            ..DatasetSpec::default()
        };
        write_dataset(a.path(), &spec).unwrap();
        write_dataset(b.path(), &spec).unwrap();
        assert_eq!(tree(a.path()), tree(b.path()));
        assert!(a.path().join("train/scene_0000/clip_0000.pcv").is_file());
        assert!(a.path().join("test/scene_0001/clip_0001.pcv").is_file());
    }

    #[test]
    fn spec_validation() {
        assert!(DatasetSpec {
            points: 0,
            ..DatasetSpec::default()
        }
        .validate()
        .is_err());
        assert!(DatasetSpec {
            num_classes: 5,
            ..DatasetSpec::default()
        }
        .validate()
        .is_err());
        assert!(DatasetSpec {
            task: Task::Segmentation,
            min_movers: 2,
            max_movers: 1,
            ..DatasetSpec::default()
        }
        .validate()
        .is_err());
        assert!(serde_json::from_str::<DatasetSpec>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn out_of_range_label_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            clips: 2,
            frames: 1,
            points: 8,
            ..DatasetSpec::default()
        };
        write_dataset(dir.path(), &spec).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"num_labels\": 4", "\"num_labels\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Pcv(super::super::PcvError::LabelRange { .. }))
        ));
    }
}
