use crate::numerics::Matrix;
use crate::{Error, Result};

/// `T` frames of `N` points each, with optional per-point and per-clip labels.
/// Coordinates are stored as `f32`, matching the file format bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudVideo {
    frames: usize,
    points: usize,
    coords: Vec<f32>,
    point_labels: Option<Vec<u16>>,
    clip_label: Option<u16>,
}

impl PointCloudVideo {
    pub fn new(
        frames: usize,
        points: usize,
        coords: Vec<f32>,
        point_labels: Option<Vec<u16>>,
        clip_label: Option<u16>,
    ) -> Result<Self> {
        if frames == 0 || points == 0 {
            return Err(Error::Parameter(format!(
                "a video needs at least one frame and one point, got T={frames}, N={points}"
            )));
        }
        if coords.len() != frames * points * 3 {
            return Err(Error::shape(
                "PointCloudVideo",
                format!("{frames}x{points}x3"),
                format!("{} coordinates", coords.len()),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("video coordinates".into()));
        }
        if let Some(l) = &point_labels {
            if l.len() != frames * points {
                return Err(Error::shape("PointCloudVideo labels", frames * points, l.len()));
            }
        }
        Ok(PointCloudVideo {
            frames,
            points,
            coords,
            point_labels,
            clip_label,
        })
    }

    /// Builds from `f64` frames (each `N × 3`), rounding to `f32`.
    pub fn from_frames(frames: &[Vec<[f64; 3]>], point_labels: Option<Vec<u16>>, clip_label: Option<u16>) -> Result<Self> {
        let t = frames.len();
        let n = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != n) {
            return Err(Error::Parameter("all frames must have the same point count".into()));
        }
        let coords = frames
            .iter()
            .flat_map(|f| f.iter().flat_map(|p| p.iter().map(|&v| v as f32)))
            .collect();
        PointCloudVideo::new(t, n, coords, point_labels, clip_label)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn coords(&self) -> &[f32] {
        &self.coords
    }

    pub fn point_labels(&self) -> Option<&[u16]> {
        self.point_labels.as_deref()
    }

    pub fn clip_label(&self) -> Option<u16> {
        self.clip_label
    }

    pub fn point(&self, t: usize, i: usize) -> [f64; 3] {
        let o = (t * self.points + i) * 3;
        [
            self.coords[o] as f64,
            self.coords[o + 1] as f64,
            self.coords[o + 2] as f64,
        ]
    }

    pub fn label(&self, t: usize, i: usize) -> Option<u16> {
        self.point_labels.as_ref().map(|l| l[t * self.points + i])
    }

    /// Frame `t` as an `N × 3` matrix.
    pub fn frame_matrix(&self, t: usize) -> Matrix {
        let o = t * self.points * 3;
        let data = self.coords[o..o + self.points * 3].iter().map(|&v| v as f64).collect();
        Matrix::from_vec(self.points, 3, data).expect("finite by construction")
    }

    /// Replaces frame `t` with `m` (rounded to `f32`).
    pub fn set_frame(&mut self, t: usize, m: &Matrix) -> Result<()> {
        if m.shape() != (self.points, 3) {
            return Err(Error::shape(
                "set_frame",
                format!("{}x3", self.points),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("set_frame".into()));
        }
        let o = t * self.points * 3;
        for (dst, &src) in self.coords[o..o + self.points * 3].iter_mut().zip(m.data()) {
            *dst = src as f32;
        }
        Ok(())
    }

    /// Centers the clip's bounding box (over all frames) at the origin and scales its
    /// largest side to 1. A clip with zero extent is only centered.
    pub fn normalized(&self) -> PointCloudVideo {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.coords.chunks_exact(3) {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d] as f64);
                hi[d] = hi[d].max(p[d] as f64);
            }
        }
        let center: Vec<f64> = (0..3).map(|d| 0.5 * (lo[d] + hi[d])).collect();
        let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
        let scale = if extent > 1e-12 { 1.0 / extent } else { 1.0 };
        let coords = self
            .coords
            .chunks_exact(3)
            .flat_map(|p| (0..3).map(move |d| p[d] as f64))
            .enumerate()
            .map(|(i, v)| ((v - center[i % 3]) * scale) as f32)
            .collect();
        PointCloudVideo {
            coords,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_fits_unit_box() {
        let v = PointCloudVideo::new(2, 2, vec![0., 0., 0., 4., 1., 1., 2., 2., 2., 1., 0., 3.], None, Some(1)).unwrap();
        let n = v.normalized();
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in n.coords().chunks(3) {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        assert_eq!(hi[0] - lo[0], 1.0);
        assert!((0..3).all(|d| (hi[d] + lo[d]).abs() < 1e-6));
        assert_eq!(n.clip_label(), Some(1));
    }

    #[test]
    fn degenerate_clip_is_centered_only() {
        let v = PointCloudVideo::new(1, 3, vec![2.0; 9], None, None).unwrap();
        assert!(v.normalized().coords().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn validation() {
        assert!(PointCloudVideo::new(1, 1, vec![0.0; 2], None, None).is_err());
        assert!(PointCloudVideo::new(1, 1, vec![f32::NAN, 0.0, 0.0], None, None).is_err());
        assert!(PointCloudVideo::new(1, 2, vec![0.0; 6], Some(vec![0]), None).is_err());
        assert!(PointCloudVideo::new(0, 2, vec![], None, None).is_err());
    }
}
