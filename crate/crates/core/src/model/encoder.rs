//! Parameter-free clip preparation and the learned point 4D convolution.
//!
//! Everything that does not depend on weights (anchor sampling, neighborhood grouping,
//! per-frame graph spectra and band coordinates) is computed once per clip in
//! [`prepare_clip`]. The learned part, [`Point4dConv`], maps each displacement
//! `(δx, δy, δz, δt)`, scaled by the grouping radii, through a shared MLP and max-pools
//! over the group.

use std::thread;

use super::fps::{farthest_from_centroid, farthest_point_sample};
use super::ModelConfig;
use crate::data::PointCloudVideo;
use crate::graph::{EdgeWeight, PointSet};
use crate::nn::{gelu_grad_with_cdf, Grads, Mlp, MlpCache, Parameters, Tensor3};
use crate::numerics::kernels::transpose;
use crate::numerics::{Matrix, Rng};
use crate::spectral::{band_decompose, Band, BandSignals, BandSpec, GraphSpectrum};
use crate::{Error, Result};

/// A clip reduced to everything the network needs, for `T′` output frames of `N′`
/// anchors each. Tokens are ordered frame-major.
#[derive(Clone, Debug)]
pub struct PreparedClip {
    pub frames: usize,
    pub anchors_per_frame: usize,
    /// Anchor coordinates, `T′·N′ × 3`.
    pub anchors: Matrix,
    /// Source point index of each anchor within its center frame.
    pub anchor_sources: Vec<usize>,
    /// All group displacements stacked, `(1, Σ group sizes, 4)`.
    pub displacements: Tensor3,
    /// Group `g` occupies displacement rows `group_offsets[g]..group_offsets[g + 1]`.
    pub group_offsets: Vec<usize>,
    /// Per band, `(1, T′·N′, 4)`: band-limited anchor coordinates and frame time.
    pub band_inputs: [Tensor3; 3],
    pub clip_label: Option<u16>,
    /// Majority point label within each anchor's group.
    pub anchor_labels: Option<Vec<u16>>,
}

impl PreparedClip {
    pub fn tokens(&self) -> usize {
        self.frames * self.anchors_per_frame
    }

    pub fn group(&self, g: usize) -> &[f64] {
        &self.displacements.data()[self.group_offsets[g] * 4..self.group_offsets[g + 1] * 4]
    }

    /// Band-limited coordinates of frame `j`, `N′ × 3`.
    pub fn band_coords(&self, band: Band, j: usize) -> Matrix {
        let n = self.anchors_per_frame;
        let src = &self.band_inputs[band.index()];
        let data = (j * n..(j + 1) * n).flat_map(|r| src.row(r)[..3].to_vec()).collect();
        Matrix::from_vec(n, 3, data).expect("finite")
    }
}

struct FramePrep {
    sources: Vec<usize>,
    anchors: Vec<[f64; 3]>,
    groups: Vec<Vec<[f64; 4]>>,
    labels: Option<Vec<u16>>,
    bands: BandSignals,
}

fn frame_points(video: &PointCloudVideo, t: usize) -> Vec<[f64; 3]> {
    (0..video.points()).map(|i| video.point(t, i)).collect()
}

fn majority(counts: &mut Vec<usize>, labels: impl Iterator<Item = u16>) -> u16 {
    counts.iter_mut().for_each(|c| *c = 0);
    for l in labels {
        if l as usize >= counts.len() {
            counts.resize(l as usize + 1, 0);
        }
        counts[l as usize] += 1;
    }
    let mut best = 0;
    for (l, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = l;
        }
    }
    best as u16
}

fn prepare_frame(video: &PointCloudVideo, cfg: &ModelConfig, j: usize, bands: &BandSpec) -> Result<FramePrep> {
    let center = j * cfg.frame_stride;
    let pts = frame_points(video, center);
    let sources = farthest_point_sample(&pts, cfg.anchors, farthest_from_centroid(&pts));
    let anchors: Vec<[f64; 3]> = sources.iter().map(|&i| pts[i]).collect();

    let lo = center.saturating_sub(cfg.temporal_radius);
    let hi = (center + cfg.temporal_radius).min(video.frames() - 1);
    let window: Vec<(usize, Vec<[f64; 3]>)> = (lo..=hi).map(|t| (t, frame_points(video, t))).collect();
    let r2 = cfg.spatial_radius * cfg.spatial_radius;
    // displacements are expressed in units of the grouping radii
    let s_scale = 1.0 / cfg.spatial_radius;
    let t_scale = 1.0 / cfg.temporal_radius.max(1) as f64;

    let mut groups = Vec::with_capacity(anchors.len());
    let mut labels = video.point_labels().map(|_| Vec::with_capacity(anchors.len()));
    let mut counts = Vec::new();
    for (&src, a) in sources.iter().zip(&anchors) {
        // (dist², |δt|, frame, index) orders candidates; the anchor itself always leads.
        let mut cand: Vec<(f64, usize, usize, usize)> = Vec::new();
        for (t, frame) in &window {
            for (i, p) in frame.iter().enumerate() {
                if *t == center && i == src {
                    continue;
                }
                let d2 = (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2) + (p[2] - a[2]).powi(2);
                if d2 <= r2 {
                    cand.push((d2, t.abs_diff(center), *t, i));
                }
            }
        }
        cand.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2, x.3).cmp(&(y.1, y.2, y.3))));
        cand.truncate(cfg.group_size - 1);

        let mut group = Vec::with_capacity(cand.len() + 1);
        group.push([0.0; 4]);
        for &(_, _, t, i) in &cand {
            let p = window[t - lo].1[i];
            let dt = t as f64 - center as f64;
            group.push([(p[0] - a[0]) * s_scale, (p[1] - a[1]) * s_scale, (p[2] - a[2]) * s_scale, dt * t_scale]);
        }
        if let Some(out) = labels.as_mut() {
            let members = std::iter::once((center, src)).chain(cand.iter().map(|&(_, _, t, i)| (t, i)));
            out.push(majority(&mut counts, members.map(|(t, i)| video.label(t, i).expect("labeled"))));
        }
        groups.push(group);
    }

    let coords = Matrix::from_rows(&anchors.iter().map(|p| p.to_vec()).collect::<Vec<_>>())?;
    let spectrum = GraphSpectrum::of_points(&PointSet::new(coords.clone())?, cfg.k, EdgeWeight::Binary)?;
    let bands = band_decompose(&spectrum, &coords, bands)?;
    Ok(FramePrep {
        sources,
        anchors,
        groups,
        labels,
        bands,
    })
}

/// Samples anchors, groups neighborhoods and computes per-frame band coordinates.
/// Frames are spread over up to `threads` worker threads; the result does not depend
/// on the thread count.
pub fn prepare_clip(video: &PointCloudVideo, cfg: &ModelConfig, threads: usize) -> Result<PreparedClip> {
    cfg.validate()?;
    if video.points() < cfg.anchors {
        return Err(Error::Parameter(format!(
            "clip has {} points per frame but {} anchors are requested",
            video.points(),
            cfg.anchors
        )));
    }
    if video.frames() % cfg.frame_stride != 0 {
        return Err(Error::Parameter(format!(
            "frame count {} is not a multiple of the frame stride {}",
            video.frames(),
            cfg.frame_stride
        )));
    }
    let out_frames = video.frames() / cfg.frame_stride;
    let bands = BandSpec::new(cfg.f_low, cfg.f_high, cfg.anchors)?;

    let threads = threads.clamp(1, out_frames);
    let frames: Vec<FramePrep> = if threads == 1 {
        (0..out_frames)
            .map(|j| prepare_frame(video, cfg, j, &bands))
            .collect::<Result<_>>()?
    } else {
        let chunk = out_frames.div_ceil(threads);
        thread::scope(|s| {
            let handles: Vec<_> = (0..out_frames)
                .step_by(chunk)
                .map(|start| {
                    let bands = &bands;
                    s.spawn(move || {
                        (start..(start + chunk).min(out_frames))
                            .map(|j| prepare_frame(video, cfg, j, bands))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("frame worker panicked"))
                .collect::<Result<Vec<Vec<_>>>>()
        })?
        .into_iter()
        .flatten()
        .collect()
    };

    let n = cfg.anchors;
    let tokens = out_frames * n;
    let mut anchors = Vec::with_capacity(tokens * 3);
    let mut anchor_sources = Vec::with_capacity(tokens);
    let mut disp = Vec::new();
    let mut group_offsets = vec![0];
    let mut band_data = [Vec::with_capacity(tokens * 4), Vec::with_capacity(tokens * 4), Vec::with_capacity(tokens * 4)];
    let mut anchor_labels = video.point_labels().map(|_| Vec::with_capacity(tokens));
    for (j, f) in frames.into_iter().enumerate() {
        let time = j as f64 / out_frames as f64;
        anchors.extend(f.anchors.iter().flatten());
        anchor_sources.extend(f.sources);
        for g in &f.groups {
            disp.extend(g.iter().flatten());
            group_offsets.push(group_offsets.last().unwrap() + g.len());
        }
        for band in Band::ALL {
            let m = f.bands.get(band);
            for i in 0..n {
                band_data[band.index()].extend_from_slice(m.row(i));
                band_data[band.index()].push(time);
            }
        }
        if let (Some(out), Some(l)) = (anchor_labels.as_mut(), f.labels) {
            out.extend(l);
        }
    }
    let rows = *group_offsets.last().unwrap();
    let [low, mid, high] = band_data;
    Ok(PreparedClip {
        frames: out_frames,
        anchors_per_frame: n,
        anchors: Matrix::from_vec(tokens, 3, anchors)?,
        anchor_sources,
        displacements: Tensor3::from_vec(1, rows, 4, disp)?,
        group_offsets,
        band_inputs: [
            Tensor3::from_vec(1, tokens, 4, low)?,
            Tensor3::from_vec(1, tokens, 4, mid)?,
            Tensor3::from_vec(1, tokens, 4, high)?,
        ],
        clip_label: video.clip_label(),
        anchor_labels,
    })
}

/// Shared displacement MLP `4 → C → C` followed by a max over each group.
#[derive(Clone, Debug)]
pub struct Point4dConv {
    pub mlp: Mlp,
    pub channels: usize,
}

#[derive(Clone, Debug)]
pub struct Point4dCache {
    mlp: MlpCache,
    /// For each (group, channel), the displacement row that won the max.
    argmax: Vec<usize>,
    rows: usize,
}

impl Point4dConv {
    pub fn new(params: &mut Parameters, rng: &mut Rng, name: &str, channels: usize) -> Result<Self> {
        Ok(Point4dConv {
            mlp: Mlp::new(params, rng, name, 4, channels, channels)?,
            channels,
        })
    }

    /// `disp` is `(1, rows, 4)`; returns `(1, groups, C)`.
    pub fn forward(&self, p: &Parameters, disp: &Tensor3, offsets: &[usize]) -> Result<(Tensor3, Point4dCache)> {
        let (h, mlp) = self.mlp.forward(p, disp)?;
        let c = self.channels;
        let groups = offsets.len() - 1;
        let mut out = Tensor3::zeros(1, groups, c);
        let mut argmax = vec![0; groups * c];
        for g in 0..groups {
            let (start, end) = (offsets[g], offsets[g + 1]);
            let row = out.row_mut(g);
            row.copy_from_slice(h.row(start));
            let best = &mut argmax[g * c..(g + 1) * c];
            best.iter_mut().for_each(|b| *b = start);
            for r in start + 1..end {
                for ((o, b), &v) in row.iter_mut().zip(best.iter_mut()).zip(h.row(r)) {
                    if v > *o {
                        *o = v;
                        *b = r;
                    }
                }
            }
        }
        Ok((
            out,
            Point4dCache {
                mlp,
                argmax,
                rows: disp.tokens(),
            },
        ))
    }

    /// Back-propagates through the max-pool and the shared MLP, accumulating parameter
    /// gradients. Only the rows that won a max carry gradient, so the work scales with
    /// `groups × C` rather than with the number of displacement rows. Returns those rows
    /// with their gradient w.r.t. the MLP's hidden pre-activation.
    fn backward_sparse(&self, p: &Parameters, cache: &Point4dCache, dy: &Tensor3, g: &mut Grads) -> (Vec<usize>, Vec<f64>) {
        let c = self.channels;
        let (fc1, fc2) = (&self.mlp.fc1, &self.mlp.fc2);
        let hidden = fc1.d_out;
        let mlp = &cache.mlp;

        // winning rows in ascending order, and each row's slot in the compact buffers
        let mut won = vec![false; cache.rows];
        cache.argmax.iter().for_each(|&r| won[r] = true);
        let active: Vec<usize> = (0..cache.rows).filter(|&r| won[r]).collect();
        let mut slot = vec![0; cache.rows];
        active.iter().enumerate().for_each(|(k, &r)| slot[r] = k);

        let w2t = transpose(p.value(fc2.weight), hidden, c);
        let mut dact = vec![0.0; active.len() * hidden];
        {
            let dw2 = g.get_mut(fc2.weight);
            for (idx, (&r, &d)) in cache.argmax.iter().zip(dy.data()).enumerate() {
                let ch = idx % c;
                let act = mlp.act.row(r);
                for (i, &a) in act.iter().enumerate() {
                    dw2[i * c + ch] += a * d;
                }
                let row = &mut dact[slot[r] * hidden..(slot[r] + 1) * hidden];
                for (o, &w) in row.iter_mut().zip(&w2t[ch * hidden..(ch + 1) * hidden]) {
                    *o += d * w;
                }
            }
        }
        let db2 = g.get_mut(fc2.bias);
        for grp in dy.data().chunks_exact(c) {
            db2.iter_mut().zip(grp).for_each(|(b, &d)| *b += d);
        }

        for (k, &r) in active.iter().enumerate() {
            let pre = mlp.pre.row(r);
            let cdf = &mlp.cdf[r * hidden..(r + 1) * hidden];
            for ((d, &x), &cd) in dact[k * hidden..(k + 1) * hidden].iter_mut().zip(pre).zip(cdf) {
                *d *= gelu_grad_with_cdf(x, cd);
            }
        }
        let dpre = dact;
        {
            let dw1 = g.get_mut(fc1.weight);
            for (k, &r) in active.iter().enumerate() {
                let row = &dpre[k * hidden..(k + 1) * hidden];
                for (i, &x) in mlp.x.row(r).iter().enumerate() {
                    dw1[i * hidden..(i + 1) * hidden].iter_mut().zip(row).for_each(|(w, &d)| *w += x * d);
                }
            }
        }
        let db1 = g.get_mut(fc1.bias);
        for row in dpre.chunks_exact(hidden) {
            db1.iter_mut().zip(row).for_each(|(b, &d)| *b += d);
        }
        (active, dpre)
    }

    /// Parameter gradients only; displacements are constants of the graph.
    pub fn backward_params(&self, p: &Parameters, cache: &Point4dCache, dy: &Tensor3, g: &mut Grads) {
        self.backward_sparse(p, cache, dy, g);
    }

    pub fn backward(&self, p: &Parameters, cache: &Point4dCache, dy: &Tensor3, g: &mut Grads) -> Tensor3 {
        let (active, dpre) = self.backward_sparse(p, cache, dy, g);
        let fc1 = &self.mlp.fc1;
        let (d_in, hidden) = (fc1.d_in, fc1.d_out);
        let w1 = p.value(fc1.weight);
        let mut dx = Tensor3::zeros(1, cache.rows, d_in);
        for (k, &r) in active.iter().enumerate() {
            let d = &dpre[k * hidden..(k + 1) * hidden];
            for (i, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = w1[i * hidden..(i + 1) * hidden].iter().zip(d).map(|(w, g)| w * g).sum();
            }
        }
        dx
    }
}
