//! Seeded synthetic point cloud videos.
//!
//! Classification clips show one anisotropic shape (ellipsoid or torus, random yaw)
//! undergoing one of four motions. Segmentation clips show a static ground plane with
//! one to three moving rigid objects. The raw generators return `f64` frames together
//! with the sampled motion parameters so tests can check them against closed forms.

use std::f64::consts::PI;

use super::dataset::{DatasetSpec, LabeledClip, Split, Task};
use super::PointCloudVideo;
use crate::numerics::Rng;
use crate::Result;

pub const CLASS_NAMES: [&str; 4] = ["translate_x", "rotate_z", "expand", "oscillate"];

/// Sampled motion of a classification clip. Positions at frame `t` are functions of
/// the frame-0 position `p` (with the shape centered at `center`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion {
    /// `p + (speed·t, 0, 0)`
    TranslateX { speed: f64 },
    /// `p` rotated about the z axis through `center` by `omega·t`
    RotateZ { omega: f64 },
    /// `center + (1 + rate·t)(p − center)`
    Expand { rate: f64 },
    /// `p + (0, 0, amplitude·sin(omega·t))`
    Oscillate { amplitude: f64, omega: f64 },
}

impl Motion {
    pub fn class(&self) -> u16 {
        match self {
            Motion::TranslateX { .. } => 0,
            Motion::RotateZ { .. } => 1,
            Motion::Expand { .. } => 2,
            Motion::Oscillate { .. } => 3,
        }
    }

    fn sample(class: u16, rng: &mut Rng) -> Motion {
        match class {
            0 => Motion::TranslateX {
                speed: rng.uniform_range(0.1, 0.2),
            },
            1 => Motion::RotateZ {
                omega: rng.uniform_range(0.2, 0.35),
            },
            2 => Motion::Expand {
                rate: rng.uniform_range(0.08, 0.15),
            },
            _ => Motion::Oscillate {
                amplitude: rng.uniform_range(0.3, 0.5),
                omega: rng.uniform_range(0.6, 0.9),
            },
        }
    }

    /// Position at frame `t` of a point that sits at `p` in frame 0.
    pub fn apply(&self, p: [f64; 3], center: [f64; 3], t: usize) -> [f64; 3] {
        let tf = t as f64;
        match *self {
            Motion::TranslateX { speed } => [p[0] + speed * tf, p[1], p[2]],
            Motion::RotateZ { omega } => {
                let (s, c) = (omega * tf).sin_cos();
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy, p[2]]
            }
            Motion::Expand { rate } => {
                let f = 1.0 + rate * tf;
                [
                    center[0] + f * (p[0] - center[0]),
                    center[1] + f * (p[1] - center[1]),
                    center[2] + f * (p[2] - center[2]),
                ]
            }
            Motion::Oscillate { amplitude, omega } => [p[0], p[1], p[2] + amplitude * (omega * tf).sin()],
        }
    }
}

/// Unnormalized classification clip.
#[derive(Clone, Debug)]
pub struct MotionClip {
    pub motion: Motion,
    /// Frame-0 positions before jitter.
    pub base: Vec<[f64; 3]>,
    /// Centroid of `base`.
    pub center: [f64; 3],
    /// Jittered positions, `T` frames of `N` points.
    pub frames: Vec<Vec<[f64; 3]>>,
}

fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for p in points {
        for d in 0..3 {
            c[d] += p[d];
        }
    }
    c.map(|v| v / points.len() as f64)
}

fn yaw(p: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

/// `n` points uniformly distributed on the unit sphere.
pub fn sample_sphere(rng: &mut Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| loop {
            let v = [rng.normal(), rng.normal(), rng.normal()];
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if r > 1e-9 {
                break v.map(|x| x / r);
            }
        })
        .collect()
}

fn sample_shape(rng: &mut Rng, n: usize) -> Vec<[f64; 3]> {
    let torus = rng.below(2) == 1;
    let pts: Vec<[f64; 3]> = if torus {
        // tube around the x axis
        (0..n)
            .map(|_| {
                let u = rng.uniform_range(0.0, 2.0 * PI);
                let v = rng.uniform_range(0.0, 2.0 * PI);
                let ring = 0.6 + 0.2 * v.cos();
                [0.2 * v.sin(), ring * u.cos(), 0.6 * ring * u.sin()]
            })
            .collect()
    } else {
        sample_sphere(rng, n)
            .into_iter()
            .map(|p| [p[0], 0.5 * p[1], 0.3 * p[2]])
            .collect()
    };
    let angle = rng.uniform_range(0.0, 2.0 * PI);
    pts.into_iter().map(|p| yaw(p, angle)).collect()
}

fn jitter(rng: &mut Rng, p: [f64; 3], sigma: f64) -> [f64; 3] {
    if sigma == 0.0 {
        return p;
    }
    p.map(|v| v + sigma * rng.normal())
}

/// One raw classification clip of class `class` (index into [`CLASS_NAMES`]).
pub fn motion_clip(rng: &mut Rng, class: u16, frames: usize, points: usize, noise_sigma: f64) -> MotionClip {
    let base = sample_shape(rng, points);
    let center = centroid(&base);
    let motion = Motion::sample(class, rng);
    let frames = (0..frames)
        .map(|t| {
            base.iter()
                .map(|&p| jitter(rng, motion.apply(p, center, t), noise_sigma))
                .collect()
        })
        .collect();
    MotionClip {
        motion,
        base,
        center,
        frames,
    }
}

/// Sampled trajectory of one moving object in a segmentation clip.
#[derive(Clone, Debug, PartialEq)]
pub struct MoverTrack {
    pub label: u16,
    /// Number of points carrying `label` in every frame.
    pub size: usize,
    /// Planar displacement per frame.
    pub velocity: [f64; 2],
    /// Frame-0 centroid of the object's points before jitter.
    pub start: [f64; 3],
}

/// Unnormalized segmentation clip.
#[derive(Clone, Debug)]
pub struct SceneClip {
    pub frames: Vec<Vec<[f64; 3]>>,
    pub labels: Vec<u16>,
    pub ground_size: usize,
    pub movers: Vec<MoverTrack>,
}

/// Object geometry by label: 1 = low box, 2 = tall column, 3 = floating ball.
fn sample_object(rng: &mut Rng, label: u16) -> [f64; 3] {
    match label {
        1 => [
            rng.uniform_range(-0.25, 0.25),
            rng.uniform_range(-0.25, 0.25),
            rng.uniform_range(0.2, 0.6),
        ],
        2 => {
            let a = rng.uniform_range(0.0, 2.0 * PI);
            let r = 0.1 * rng.uniform().sqrt();
            [r * a.cos(), r * a.sin(), rng.uniform_range(0.1, 1.0)]
        }
        _ => {
            let d = sample_sphere(rng, 1)[0];
            let r = 0.3 * rng.uniform().cbrt();
            [r * d[0], r * d[1], 1.0 + r * d[2]]
        }
    }
}

/// Ground plane in `[-1, 1]²` plus `movers` objects labeled `1..=movers`, each taking
/// `max(1, N/8)` points.
pub fn segmentation_scene(rng: &mut Rng, frames: usize, points: usize, noise_sigma: f64, movers: usize) -> SceneClip {
    let per = (points / 8).max(1);
    let movers = movers.min(3).min(points.saturating_sub(1) / per);
    let ground_size = points - movers * per;

    let mut base = Vec::with_capacity(points);
    let mut labels = Vec::with_capacity(points);
    for _ in 0..ground_size {
        base.push([rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0), 0.0]);
        labels.push(0);
    }
    let mut tracks = Vec::with_capacity(movers);
    for m in 0..movers {
        let label = m as u16 + 1;
        let anchor = [rng.uniform_range(-0.6, 0.6), rng.uniform_range(-0.6, 0.6)];
        let heading = rng.uniform_range(0.0, 2.0 * PI);
        let speed = rng.uniform_range(0.02, 0.05);
        let velocity = [speed * heading.cos(), speed * heading.sin()];
        let first = base.len();
        for _ in 0..per {
            let o = sample_object(rng, label);
            base.push([anchor[0] + o[0], anchor[1] + o[1], o[2]]);
            labels.push(label);
        }
        tracks.push(MoverTrack {
            label,
            size: per,
            velocity,
            start: centroid(&base[first..]),
        });
    }

    let frames = (0..frames)
        .map(|t| {
            let tf = t as f64;
            base.iter()
                .zip(&labels)
                .map(|(&p, &l)| {
                    let moved = if l == 0 {
                        p
                    } else {
                        let v = tracks[l as usize - 1].velocity;
                        [p[0] + v[0] * tf, p[1] + v[1] * tf, p[2]]
                    };
                    jitter(rng, moved, noise_sigma)
                })
                .collect()
        })
        .collect();
    SceneClip {
        frames,
        labels,
        ground_size,
        movers: tracks,
    }
}

/// Generates the full classification dataset: `spec.clips` clips for each class, clip
/// `i` of class `c` drawn from stream `c·clips + i` of the seed.
pub fn generate_classification(spec: &DatasetSpec) -> Result<Vec<LabeledClip>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.num_classes * spec.clips);
    for class in 0..spec.num_classes {
        for i in 0..spec.clips {
            let mut rng = Rng::derive(spec.seed, (class * spec.clips + i) as u64);
            let raw = motion_clip(&mut rng, class as u16, spec.frames, spec.points, spec.noise_sigma);
            let video = PointCloudVideo::from_frames(&raw.frames, None, Some(class as u16))?.normalized();
            out.push(LabeledClip {
                id: format!("clip_{i:04}"),
                group: CLASS_NAMES[class].to_string(),
                split: Split::of_index(i),
                label: Some(class as u16),
                video,
            });
        }
    }
    Ok(out)
}

/// Generates `spec.clips` segmentation scenes; the mover count of each is drawn
/// uniformly from `min_movers..=max_movers`.
pub fn generate_segmentation(spec: &DatasetSpec) -> Result<Vec<LabeledClip>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.clips);
    for i in 0..spec.clips {
        let mut rng = Rng::derive(spec.seed, i as u64);
        let movers = spec.min_movers + rng.below(spec.max_movers - spec.min_movers + 1);
        let scene = segmentation_scene(&mut rng, spec.frames, spec.points, spec.noise_sigma, movers);
        let labels = (0..spec.frames).flat_map(|_| scene.labels.iter().copied()).collect();
        let video = PointCloudVideo::from_frames(&scene.frames, Some(labels), None)?.normalized();
        out.push(LabeledClip {
            id: format!("clip_{i:04}"),
            group: format!("scene_{i:04}"),
            split: Split::of_index(i),
            label: None,
            video,
        });
    }
    Ok(out)
}

pub fn generate(spec: &DatasetSpec) -> Result<Vec<LabeledClip>> {
    match spec.task {
        Task::Classification => generate_classification(spec),
        Task::Segmentation => generate_segmentation(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(task: Task) -> DatasetSpec {
        DatasetSpec {
            task,
            clips: 3,
            frames: 6,
            points: 64,
            noise_sigma: 0.0,
            seed: 11,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn translate_is_rigid_without_noise() {
        let mut rng = Rng::new(3);
        let clip = motion_clip(&mut rng, 0, 8, 50, 0.0);
        let Motion::TranslateX { speed } = clip.motion else {
            panic!("wrong motion")
        };
        for (t, frame) in clip.frames.iter().enumerate() {
            for (p, q) in frame.iter().zip(&clip.frames[0]) {
                assert_eq!(*p, [q[0] + speed * t as f64, q[1], q[2]]);
            }
        }
    }

    #[test]
    fn normalized_translation_stays_rigid() {
        let s = DatasetSpec {
            clips: 1,
            ..spec(Task::Classification)
        };
        let clip = &generate_classification(&s).unwrap()[0];
        let v = &clip.video;
        let shift = v.point(1, 0)[0] - v.point(0, 0)[0];
        for t in 0..v.frames() {
            for i in 0..v.points() {
                let (p, q) = (v.point(t, i), v.point(0, i));
                assert!((p[0] - q[0] - shift * t as f64).abs() < 1e-6);
                assert!((p[1] - q[1]).abs() < 1e-6 && (p[2] - q[2]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn centroid_trajectories_follow_closed_forms() {
        for class in 0..4u16 {
            let mut rng = Rng::new(100 + class as u64);
            let clip = motion_clip(&mut rng, class, 8, 80, 0.0);
            let c0 = clip.center;
            for (t, frame) in clip.frames.iter().enumerate() {
                let tf = t as f64;
                let expected = match clip.motion {
                    Motion::TranslateX { speed } => [c0[0] + speed * tf, c0[1], c0[2]],
                    Motion::RotateZ { .. } | Motion::Expand { .. } => c0,
                    Motion::Oscillate { amplitude, omega } => [c0[0], c0[1], c0[2] + amplitude * (omega * tf).sin()],
                };
                let c = centroid(frame);
                for d in 0..3 {
                    assert!((c[d] - expected[d]).abs() < 1e-6, "class {class} t {t}");
                }
            }
            assert_eq!(clip.motion.class(), class);
        }
    }

    #[test]
    fn rotation_preserves_radius_and_advances_angle() {
        let mut rng = Rng::new(5);
        let clip = motion_clip(&mut rng, 1, 5, 20, 0.0);
        let Motion::RotateZ { omega } = clip.motion else {
            panic!()
        };
        let c = clip.center;
        let p0 = clip.frames[0][0];
        let a0 = (p0[1] - c[1]).atan2(p0[0] - c[0]);
        for (t, f) in clip.frames.iter().enumerate() {
            let p = f[0];
            let expect = a0 + omega * t as f64;
            let a = (p[1] - c[1]).atan2(p[0] - c[0]);
            assert!(((a - expect).sin()).abs() < 1e-9 && (a - expect).cos() > 0.0);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        for task in [Task::Classification, Task::Segmentation] {
            let s = DatasetSpec {
                noise_sigma: 0.01,
                ..spec(task)
            };
            let a = generate(&s).unwrap();
            let b = generate(&s).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.video, y.video);
            }
        }
    }

    #[test]
    fn classification_counts_and_labels() {
        let clips = generate(&spec(Task::Classification)).unwrap();
        assert_eq!(clips.len(), 12);
        for (j, c) in clips.iter().enumerate() {
            assert_eq!(c.label, Some((j / 3) as u16));
            assert_eq!(c.video.clip_label(), c.label);
            assert_eq!(c.group, CLASS_NAMES[j / 3]);
        }
    }

    #[test]
    fn zero_movers_is_all_ground() {
        let mut rng = Rng::new(1);
        let scene = segmentation_scene(&mut rng, 3, 40, 0.0, 0);
        assert!(scene.labels.iter().all(|&l| l == 0));
        assert!(scene.movers.is_empty());

        let s = DatasetSpec {
            min_movers: 0,
            max_movers: 0,
            ..spec(Task::Segmentation)
        };
        for clip in generate(&s).unwrap() {
            assert!(clip.video.point_labels().unwrap().iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn label_histogram_matches_declared_sizes() {
        for m in 1..=3 {
            let mut rng = Rng::new(m as u64);
            let scene = segmentation_scene(&mut rng, 4, 128, 0.02, m);
            let mut hist = [0usize; 4];
            for &l in &scene.labels {
                hist[l as usize] += 1;
            }
            assert_eq!(hist[0], scene.ground_size);
            for track in &scene.movers {
                assert_eq!(hist[track.label as usize], track.size);
            }
            assert_eq!(scene.movers.len(), m);
        }
    }

    #[test]
    fn mover_displacement_matches_velocity() {
        let mut rng = Rng::new(9);
        let scene = segmentation_scene(&mut rng, 6, 96, 0.0, 3);
        for track in &scene.movers {
            let idx: Vec<usize> = (0..scene.labels.len()).filter(|&i| scene.labels[i] == track.label).collect();
            let pts = |t: usize| idx.iter().map(|&i| scene.frames[t][i]).collect::<Vec<_>>();
            let c0 = centroid(&pts(0));
            for d in 0..3 {
                assert!((c0[d] - track.start[d]).abs() < 1e-12);
            }
            for t in 1..6 {
                let (a, b) = (centroid(&pts(t - 1)), centroid(&pts(t)));
                assert!((b[0] - a[0] - track.velocity[0]).abs() < 1e-6);
                assert!((b[1] - a[1] - track.velocity[1]).abs() < 1e-6);
                assert!((b[2] - a[2]).abs() < 1e-6);
            }
        }
        for i in 0..scene.ground_size {
            assert_eq!(scene.frames[0][i], scene.frames[5][i]);
        }
    }

    #[test]
    fn sphere_samples_have_unit_norm() {
        let mut rng = Rng::new(0);
        for p in sample_sphere(&mut rng, 100) {
            assert!(((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs() < 1e-12);
        }
    }
}
