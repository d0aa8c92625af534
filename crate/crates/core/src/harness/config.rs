//! Run settings shared by the harness and the command line, loadable from a
//! TOML file with `[sqe]`, `[tracker]` and `[distance]` sections.

use std::path::Path;

use serde::Deserialize;

use crate::distance::{DistanceConfig, MAX_PAIRS};
use crate::exec::Exec;
use crate::quality::{EvalOptions, SqeParams};
use crate::refmetrics::DEFAULT_IOU_THRESHOLD;
use crate::tracker::DEFAULT_MAX_GAP;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    /// `k2` inside is ignored; see `k2_reid` and `k2_merge`.
    pub sqe: SqeParams,
    pub k2_reid: f64,
    pub k2_merge: f64,
    pub max_gap: u32,
    pub max_pairs: Option<usize>,
    /// L2-normalize features before tracking and scoring.
    pub normalize: bool,
    pub overlapping_pairs_only: bool,
    pub iou_threshold: f64,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            sqe: SqeParams::default(),
            k2_reid: 2.0,
            k2_merge: 10.0,
            max_gap: DEFAULT_MAX_GAP,
            max_pairs: Some(MAX_PAIRS),
            normalize: false,
            overlapping_pairs_only: false,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl Settings {
    /// Evaluation options with distance sampling seeded by `seed_value`.
    pub fn eval_options(&self, seed_value: u64) -> EvalOptions {
        EvalOptions {
            distance: DistanceConfig {
                max_pairs: self.max_pairs,
                seed: seed_value,
            },
            overlapping_pairs_only: self.overlapping_pairs_only,
            exec: self.exec,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<config>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        let mut s = Settings::default();
        let q = file.sqe;
        s.sqe.delta_l = q.delta_l.unwrap_or(s.sqe.delta_l);
        s.sqe.delta_d = q.delta_d.unwrap_or(s.sqe.delta_d);
        s.sqe.delta_m = q.delta_m.unwrap_or(s.sqe.delta_m);
        s.sqe.k1 = q.k1.unwrap_or(s.sqe.k1);
        s.k2_reid = q.k2_reid.unwrap_or(s.k2_reid);
        s.k2_merge = q.k2_merge.unwrap_or(s.k2_merge);
        s.max_gap = file.tracker.max_gap.unwrap_or(s.max_gap);
        if let Some(m) = file.distance.max_pairs {
            s.max_pairs = (m > 0).then_some(m);
        }
        s.normalize = file.distance.normalize.unwrap_or(s.normalize);
        s.overlapping_pairs_only = file.distance.overlapping_pairs_only.unwrap_or(s.overlapping_pairs_only);
        s.sqe.validate()?;
        s.sqe.with_k2(s.k2_reid).validate()?;
        s.sqe.with_k2(s.k2_merge).validate()?;
        Ok(s)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    sqe: SqeSection,
    tracker: TrackerSection,
    distance: DistanceSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SqeSection {
    #[serde(rename = "delta_L")]
    delta_l: Option<f64>,
    #[serde(rename = "delta_D")]
    delta_d: Option<f64>,
    delta_m: Option<f64>,
    k1: Option<f64>,
    k2_reid: Option<f64>,
    k2_merge: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrackerSection {
    max_gap: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DistanceSection {
    /// 0 disables subsampling.
    max_pairs: Option<usize>,
    normalize: Option<bool>,
    overlapping_pairs_only: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(Settings::from_toml("").unwrap(), Settings::default());
    }

    #[test]
    fn full_config() {
        let s = Settings::from_toml(
            "[sqe]\ndelta_L = 20\ndelta_D = 0.25\ndelta_m = 0.4\nk1 = 2\nk2_reid = 3\nk2_merge = 8\n\
             [tracker]\nmax_gap = 12\n[distance]\nmax_pairs = 0\nnormalize = true\n",
        )
        .unwrap();
        assert_eq!(s.sqe.delta_l, 20.0);
        assert_eq!(s.sqe.delta_d, 0.25);
        assert_eq!(s.sqe.delta_m, 0.4);
        assert_eq!(s.sqe.k1, 2.0);
        assert_eq!((s.k2_reid, s.k2_merge), (3.0, 8.0));
        assert_eq!(s.max_gap, 12);
        assert_eq!(s.max_pairs, None);
        assert!(s.normalize);
    }

    #[test]
    fn bad_configs() {
        assert_eq!(Settings::from_toml("[sqe]\ndelta_x = 1").unwrap_err().kind(), "parse");
        assert_eq!(Settings::from_toml("[sqe]\nk1 = -1").unwrap_err().kind(), "validation");
        let e = Settings::from_toml("[sqe]\n\nk1 = \"a\"").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
