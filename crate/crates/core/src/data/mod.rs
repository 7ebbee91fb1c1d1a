//! Point cloud videos: the in-memory type, the `PCV1` binary format, synthetic
//! classification and segmentation generators, and on-disk dataset directories.

mod dataset;
mod pcv;
mod synth;
mod video;

pub use dataset::{
    load_dataset, write_dataset, ClipEntry, Dataset, DatasetSpec, LabeledClip, Manifest, Split, Task, MANIFEST_FILE,
};
pub use pcv::{decode_pcv, encode_pcv, read_pcv, read_pcv_with_labels, write_pcv, PcvError, PCV_MAGIC, PCV_VERSION};
pub use synth::{
    generate, generate_classification, generate_segmentation, motion_clip, sample_sphere, segmentation_scene, Motion,
    MotionClip, MoverTrack, SceneClip, CLASS_NAMES,
};
pub use video::PointCloudVideo;
