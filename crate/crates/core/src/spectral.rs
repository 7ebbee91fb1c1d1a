//! Graph Fourier transform of per-frame point signals and index-band decomposition.
//!
//! Band thresholds are indices into the ascending eigenvalue sequence: with thresholds
//! `(f_l, f_h)` over `n` graph frequencies the bands are `[0, f_l)`, `[f_l, f_h)` and
//! `[f_h, n)`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{knn_graph_weighted, EdgeWeight, PointSet};
use crate::numerics::{symmetric_eigen, EigenDecomposition, Matrix, DEFAULT_EIGEN_TOL};
use crate::{Error, Result};

/// Laplacian eigenbasis of one frame; eigenvalues are the graph frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpectrum {
    decomposition: EigenDecomposition,
}

impl GraphSpectrum {
    pub fn new(decomposition: EigenDecomposition) -> Self {
        GraphSpectrum { decomposition }
    }

    pub fn from_laplacian(laplacian: &Matrix) -> Result<Self> {
        Ok(GraphSpectrum::new(symmetric_eigen(laplacian, DEFAULT_EIGEN_TOL)?))
    }

    /// K-NN graph → Laplacian → eigenbasis for one frame.
    pub fn of_points(points: &PointSet, k: usize, weight: EdgeWeight) -> Result<Self> {
        let g = knn_graph_weighted(points, k, weight)?;
        GraphSpectrum::from_laplacian(&g.laplacian)
    }

    pub fn len(&self) -> usize {
        self.decomposition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decomposition.is_empty()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.decomposition.eigenvalues
    }

    pub fn basis(&self) -> &Matrix {
        &self.decomposition.eigenvectors
    }

    pub fn decomposition(&self) -> &EigenDecomposition {
        &self.decomposition
    }

    fn check_rows(&self, op: &'static str, m: &Matrix) -> Result<()> {
        if m.rows() != self.len() {
            return Err(Error::shape(
                op,
                format!("{} graph nodes", self.len()),
                format!("{} signal rows", m.rows()),
            ));
        }
        Ok(())
    }

    /// `U[:, keep] · coeffs[keep, :]`, i.e. IGFT of the coefficients with every index
    /// outside `keep` zeroed.
    fn synthesize(&self, coeffs: &Matrix, keep: impl Fn(usize) -> bool) -> Matrix {
        let n = self.len();
        let c = coeffs.cols();
        let u = self.basis();
        let mut out = Matrix::zeros(n, c);
        for i in 0..n {
            let row = out.row_mut(i);
            for k in (0..n).filter(|&k| keep(k)) {
                let uik = u.get(i, k);
                for (o, &x) in row.iter_mut().zip(coeffs.row(k)) {
                    *o += uik * x;
                }
            }
        }
        out
    }
}

/// Forward transform `X̂ = Uᵀ X`.
pub fn gft(spectrum: &GraphSpectrum, signal: &Matrix) -> Result<Matrix> {
    spectrum.check_rows("gft", signal)?;
    spectrum.basis().t_matmul(signal)
}

/// Inverse transform `X = U X̂`.
pub fn igft(spectrum: &GraphSpectrum, coeffs: &Matrix) -> Result<Matrix> {
    spectrum.check_rows("igft", coeffs)?;
    spectrum.basis().matmul(coeffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Mid, Band::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::Mid => "mid",
            Band::High => "high",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "low" => Ok(Band::Low),
            "mid" => Ok(Band::Mid),
            "high" => Ok(Band::High),
            other => Err(Error::Parameter(format!(
                "unknown band `{other}` (expected low, mid or high)"
            ))),
        }
    }
}

/// Parses a comma-separated band list such as `"mid,high"`; the empty string is the
/// empty set.
pub fn parse_band_list(s: &str) -> Result<Vec<Band>> {
    let mut out: Vec<Band> = Vec::new();
    for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let b: Band = token.parse()?;
        if !out.contains(&b) {
            out.push(b);
        }
    }
    out.sort();
    Ok(out)
}

/// Low/high thresholds as eigen-indices over a spectrum of length `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandSpec {
    f_low: usize,
    f_high: usize,
    n: usize,
}

impl BandSpec {
    pub fn new(f_low: usize, f_high: usize, n: usize) -> Result<Self> {
        if f_low > f_high || f_high > n {
            return Err(Error::Parameter(format!(
                "band thresholds must satisfy 0 <= f_l <= f_h <= n, got f_l={f_low}, f_h={f_high}, n={n}"
            )));
        }
        Ok(BandSpec { f_low, f_high, n })
    }

    pub fn f_low(&self) -> usize {
        self.f_low
    }

    pub fn f_high(&self) -> usize {
        self.f_high
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn range(&self, band: Band) -> Range<usize> {
        match band {
            Band::Low => 0..self.f_low,
            Band::Mid => self.f_low..self.f_high,
            Band::High => self.f_high..self.n,
        }
    }

    pub fn band_of(&self, index: usize) -> Band {
        if index < self.f_low {
            Band::Low
        } else if index < self.f_high {
            Band::Mid
        } else {
            Band::High
        }
    }
}

/// Band-wise reconstructions of one frame's coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSignals {
    pub low: Matrix,
    pub mid: Matrix,
    pub high: Matrix,
}

impl BandSignals {
    pub fn get(&self, band: Band) -> &Matrix {
        match band {
            Band::Low => &self.low,
            Band::Mid => &self.mid,
            Band::High => &self.high,
        }
    }

    pub fn sum(&self) -> Matrix {
        let mut out = self.low.clone();
        for (o, (m, h)) in out
            .data_mut()
            .iter_mut()
            .zip(self.mid.data().iter().zip(self.high.data()))
        {
            *o += m + h;
        }
        out
    }
}

fn check_bands(spectrum: &GraphSpectrum, bands: &BandSpec) -> Result<()> {
    if bands.len() != spectrum.len() {
        return Err(Error::Parameter(format!(
            "band spec covers {} frequencies but the spectrum has {}",
            bands.len(),
            spectrum.len()
        )));
    }
    Ok(())
}

pub fn band_decompose(spectrum: &GraphSpectrum, coords: &Matrix, bands: &BandSpec) -> Result<BandSignals> {
    check_bands(spectrum, bands)?;
    let coeffs = gft(spectrum, coords)?;
    let part = |b: Band| {
        let r = bands.range(b);
        spectrum.synthesize(&coeffs, |k| r.contains(&k))
    };
    Ok(BandSignals {
        low: part(Band::Low),
        mid: part(Band::Mid),
        high: part(Band::High),
    })
}

/// Reconstruction with the coefficients of every band in `drop` zeroed.
pub fn band_reject(spectrum: &GraphSpectrum, coords: &Matrix, drop: &[Band], bands: &BandSpec) -> Result<Matrix> {
    check_bands(spectrum, bands)?;
    let coeffs = gft(spectrum, coords)?;
    Ok(spectrum.synthesize(&coeffs, |k| !drop.contains(&bands.band_of(k))))
}

/// Per-index energy `e_i = Σ_c X̂_ic²`.
pub fn energy_spectrum(spectrum: &GraphSpectrum, coords: &Matrix) -> Result<Vec<f64>> {
    let coeffs = gft(spectrum, coords)?;
    Ok((0..coeffs.rows())
        .map(|i| coeffs.row(i).iter().map(|c| c * c).sum())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumRow {
    pub index: usize,
    pub eigenvalue: f64,
    pub energy: f64,
    pub cumulative_fraction: f64,
}

/// Energy spectrum with running cumulative fraction. A zero signal reports a cumulative
/// fraction of 1 everywhere.
pub fn spectrum_rows(spectrum: &GraphSpectrum, coords: &Matrix) -> Result<Vec<SpectrumRow>> {
    let energy = energy_spectrum(spectrum, coords)?;
    let total: f64 = energy.iter().sum();
    let mut running = 0.0;
    Ok(energy
        .iter()
        .enumerate()
        .map(|(index, &e)| {
            running += e;
            SpectrumRow {
                index,
                eigenvalue: spectrum.frequencies()[index],
                energy: e,
                cumulative_fraction: if total > 0.0 { running / total } else { 1.0 },
            }
        })
        .collect())
}

pub const SPECTRUM_CSV_HEADER: &str = "index,eigenvalue,energy,cumulative_fraction";

pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut out = String::from(SPECTRUM_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.index, r.eigenvalue, r.energy, r.cumulative_fraction
        ));
    }
    out
}

/// Root-mean-square per-coordinate difference between two equally shaped clouds.
pub fn rmse(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.data().len().max(1) as f64;
    let ss: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    (ss / n).sqrt()
}
