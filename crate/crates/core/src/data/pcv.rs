//! `PCV1` little-endian layout:
//!
//! ```text
//! magic "PCV1" | u32 version=1 | u32 T | u32 N | u32 flags
//! T·N·3 × f32 coordinates
//! [T·N × u16 point labels]   if flags bit 0
//! [u16 clip label]           if flags bit 1
//! ```

use std::fs;
use std::path::Path;

use super::PointCloudVideo;
use crate::{Error, Result};

pub const PCV_MAGIC: [u8; 4] = *b"PCV1";
pub const PCV_VERSION: u32 = 1;

const FLAG_POINT_LABELS: u32 = 1;
const FLAG_CLIP_LABEL: u32 = 2;
const HEADER_LEN: usize = 20;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PcvError {
    #[error("bad magic {0:?}, expected \"PCV1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported PCV version {0}")]
    Version(u32),
    #[error("truncated PCV data: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after PCV payload")]
    TrailingBytes(usize),
    #[error("unknown PCV flag bits {0:#x}")]
    Flags(u32),
    #[error("label {label} out of range (must be < {limit})")]
    LabelRange { label: u16, limit: u16 },
    #[error("invalid PCV content: {0}")]
    Invalid(String),
}

pub fn encode_pcv(video: &PointCloudVideo) -> Vec<u8> {
    let (t, n) = (video.frames(), video.points());
    let mut flags = 0;
    if video.point_labels().is_some() {
        flags |= FLAG_POINT_LABELS;
    }
    if video.clip_label().is_some() {
        flags |= FLAG_CLIP_LABEL;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + t * n * 14 + 2);
    out.extend_from_slice(&PCV_MAGIC);
    for v in [PCV_VERSION, t as u32, n as u32, flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in video.coords() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    if let Some(labels) = video.point_labels() {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    if let Some(l) = video.clip_label() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], PcvError> {
        let end = self.pos + len;
        if end > self.buf.len() {
            return Err(PcvError::Truncated {
                needed: end,
                have: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PcvError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parses a complete `PCV1` buffer. `label_limit`, when given, bounds every label.
pub fn decode_pcv(buf: &[u8], label_limit: Option<u16>) -> Result<PointCloudVideo, PcvError> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().expect("4 bytes");
    if magic != PCV_MAGIC {
        return Err(PcvError::BadMagic(magic));
    }
    let version = cur.u32()?;
    if version != PCV_VERSION {
        return Err(PcvError::Version(version));
    }
    let t = cur.u32()? as usize;
    let n = cur.u32()? as usize;
    let flags = cur.u32()?;
    if flags & !(FLAG_POINT_LABELS | FLAG_CLIP_LABEL) != 0 {
        return Err(PcvError::Flags(flags));
    }
    let count = t
        .checked_mul(n)
        .ok_or_else(|| PcvError::Invalid(format!("T·N overflows: {t}·{n}")))?;
    let mut needed = HEADER_LEN + count * 12;
    if flags & FLAG_POINT_LABELS != 0 {
        needed += count * 2;
    }
    if flags & FLAG_CLIP_LABEL != 0 {
        needed += 2;
    }
    if buf.len() < needed {
        return Err(PcvError::Truncated {
            needed,
            have: buf.len(),
        });
    }

    let coords: Vec<f32> = cur
        .take(count * 12)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let check = |l: u16| match label_limit {
        Some(limit) if l >= limit => Err(PcvError::LabelRange { label: l, limit }),
        _ => Ok(l),
    };
    let point_labels = if flags & FLAG_POINT_LABELS != 0 {
        let labels = cur
            .take(count * 2)?
            .chunks_exact(2)
            .map(|b| check(u16::from_le_bytes([b[0], b[1]])))
            .collect::<Result<Vec<u16>, PcvError>>()?;
        Some(labels)
    } else {
        None
    };
    let clip_label = if flags & FLAG_CLIP_LABEL != 0 {
        let b = cur.take(2)?;
        Some(check(u16::from_le_bytes([b[0], b[1]]))?)
    } else {
        None
    };
    if cur.pos != buf.len() {
        return Err(PcvError::TrailingBytes(buf.len() - cur.pos));
    }
    PointCloudVideo::new(t, n, coords, point_labels, clip_label).map_err(|e| PcvError::Invalid(e.to_string()))
}

pub fn write_pcv(path: impl AsRef<Path>, video: &PointCloudVideo) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pcv(video)).map_err(|e| Error::io(path, e))
}

pub fn read_pcv(path: impl AsRef<Path>) -> Result<PointCloudVideo> {
    read_pcv_with_labels(path, None)
}

/// Reads a file and rejects any label `>= num_labels`.
pub fn read_pcv_with_labels(path: impl AsRef<Path>, num_labels: Option<u16>) -> Result<PointCloudVideo> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_pcv(&buf, num_labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> PointCloudVideo {
        PointCloudVideo::new(2, 2, (0..12).map(|i| i as f32 * 0.5 - 1.0).collect(), Some(vec![0, 1, 1, 2]), Some(3)).unwrap()
    }

    #[test]
    fn minimal_file_size() {
        let v = PointCloudVideo::new(1, 1, vec![0.0; 3], None, None).unwrap();
        assert_eq!(encode_pcv(&v).len(), 4 + 4 + 4 + 4 + 4 + 12);
    }

    #[test]
    fn file_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pcv");
        let v = sample();
        write_pcv(&path, &v).unwrap();
        let back = read_pcv(&path).unwrap();
        assert_eq!(back, v);
        let first = std::fs::read(&path).unwrap();
        write_pcv(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn distinct_errors() {
        let good = encode_pcv(&sample());

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert_eq!(decode_pcv(&bad, None).unwrap_err(), PcvError::BadMagic(*b"XXXX"));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_pcv(&bad, None).unwrap_err(), PcvError::Version(2));

        assert!(matches!(decode_pcv(&good[..good.len() - 1], None), Err(PcvError::Truncated { .. })));
        assert!(matches!(decode_pcv(&good[..3], None), Err(PcvError::Truncated { .. })));

        assert_eq!(decode_pcv(&good, Some(3)).unwrap_err(), PcvError::LabelRange { label: 3, limit: 3 });
        assert!(decode_pcv(&good, Some(4)).is_ok());

        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_pcv(&long, None).unwrap_err(), PcvError::TrailingBytes(1));
    }

    #[test]
    fn bad_magic_from_disk_is_a_pcv_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pcv");
        let mut bytes = encode_pcv(&sample());
        bytes[..4].copy_from_slice(b"XXXX");
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_pcv(&path), Err(Error::Pcv(PcvError::BadMagic(_)))));
    }

    fn arb_video() -> impl Strategy<Value = PointCloudVideo> {
        (1usize..5, 1usize..9, any::<bool>(), proptest::option::of(any::<u16>()))
            .prop_flat_map(|(t, n, labels, clip)| {
                (
                    proptest::collection::vec(-1e6f32..1e6, t * n * 3),
                    proptest::collection::vec(any::<u16>(), t * n),
                )
                    .prop_map(move |(c, l)| {
                        PointCloudVideo::new(t, n, c, labels.then_some(l), clip).unwrap()
                    })
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn round_trip_identity(v in arb_video()) {
            let bytes = encode_pcv(&v);
            let back = decode_pcv(&bytes, None).unwrap();
            prop_assert_eq!(&back, &v);
            prop_assert_eq!(encode_pcv(&back), bytes);
        }
    }
}
