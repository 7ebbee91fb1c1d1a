use std::fmt;
use std::str::FromStr;

use super::RunConfig;
use crate::spectral::Band;
use crate::{Error, Result};

/// Hyperparameter sweeps, one training run per setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    /// Every non-empty subset of bands kept.
    Bands,
    /// `(f_low, f_high)` grid around `(6, 10)`.
    Thresholds,
    /// Channel width and block count around the base configuration.
    Depth,
    /// Graph neighbor counts.
    K,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bands" => Ok(AblationAxis::Bands),
            "thresholds" => Ok(AblationAxis::Thresholds),
            "depth" => Ok(AblationAxis::Depth),
            "k" => Ok(AblationAxis::K),
            other => Err(Error::Parameter(format!(
                "unknown ablation axis {other:?} (expected bands, thresholds, depth or k)"
            ))),
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::Bands => "bands",
            AblationAxis::Thresholds => "thresholds",
            AblationAxis::Depth => "depth",
            AblationAxis::K => "k",
        })
    }
}

pub const THRESHOLD_GRID: [(usize, usize); 7] = [(2, 10), (4, 10), (6, 10), (8, 10), (6, 8), (6, 12), (6, 14)];
pub const K_GRID: [usize; 6] = [6, 8, 10, 12, 14, 16];

/// Named run configurations for one axis, derived from `base`.
pub fn ablation_settings(axis: AblationAxis, base: &RunConfig) -> Vec<(String, RunConfig)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    match axis {
        AblationAxis::Bands => {
            use Band::*;
            let rows: [(&str, &[Band]); 7] = [
                ("without_mid_high", &[Mid, High]),
                ("without_low_high", &[Low, High]),
                ("without_low_mid", &[Low, Mid]),
                ("without_low", &[Low]),
                ("without_mid", &[Mid]),
                ("without_high", &[High]),
                ("full", &[]),
            ];
            rows.iter()
                .map(|(name, off)| (name.to_string(), with(&|c| c.model.disabled_bands = off.to_vec())))
                .collect()
        }
        AblationAxis::Thresholds => THRESHOLD_GRID
            .iter()
            .map(|&(lo, hi)| {
                (
                    format!("fl{lo}_fh{hi}"),
                    with(&|c| {
                        c.model.f_low = lo;
                        c.model.f_high = hi;
                    }),
                )
            })
            .collect(),
        AblationAxis::Depth => {
            let (l, ch) = (base.model.blocks, base.model.channels);
            let mut grid = vec![(l, ch / 2), (l, ch), (l, ch * 2)];
            grid.extend([l.saturating_sub(1), l + 1, l + 2].into_iter().filter(|&x| x >= 1).map(|x| (x, ch)));
            grid.into_iter()
                .map(|(blocks, channels)| {
                    (
                        format!("L{blocks}_C{channels}"),
                        with(&|c| {
                            c.model.blocks = blocks;
                            c.model.channels = channels;
                        }),
                    )
                })
                .collect()
        }
        AblationAxis::K => K_GRID
            .iter()
            .map(|&k| (format!("k{k}"), with(&|c| c.model.k = k)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_sets() {
        let base = RunConfig::default();
        let bands = ablation_settings(AblationAxis::Bands, &base);
        assert_eq!(bands.len(), 7);
        assert_eq!(bands[6].1, base);
        assert_eq!(bands[0].1.model.disabled_bands, vec![Band::Mid, Band::High]);

        let th = ablation_settings(AblationAxis::Thresholds, &base);
        let mut pairs: Vec<_> = th.iter().map(|(_, c)| (c.model.f_low, c.model.f_high)).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 7);

        let depth = ablation_settings(AblationAxis::Depth, &base);
        assert_eq!(depth.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), [
            "L3_C64", "L3_C128", "L3_C256", "L2_C128", "L4_C128", "L5_C128"
        ]);
        assert_eq!(ablation_settings(AblationAxis::K, &base).len(), 6);
        for (_, c) in th.iter().chain(&depth) {
            assert!(c.validate().is_ok());
        }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("depth".parse::<AblationAxis>().unwrap(), AblationAxis::Depth);
        assert!("width".parse::<AblationAxis>().is_err());
    }
}
