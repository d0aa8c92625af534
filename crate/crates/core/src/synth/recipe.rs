//! Scenario recipes: a compact, seeded description that expands into a full
//! [`Scenario`]. Recipes are read from TOML files.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{BoxPath, Clutter, Corruption, Scenario, TargetModel, DEFAULT_FEATURE_DIM};
use crate::seed;
use crate::trackmodel::{FeatureVector, Frame};
use crate::{Error, Result};

const RECIPE_STREAM: u64 = 0x7e;

/// `(identity index, slot, fixed lifespan)`.
type Identity = (usize, usize, Option<(Frame, Frame)>);

/// Optional per-target overrides, in target order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetOverride {
    pub first: Option<Frame>,
    pub last: Option<Frame>,
    /// Noise norm `|z - mu|` scale; per-dimension sigma is this over sqrt(dim).
    pub noise: Option<f64>,
    pub occlusions: Option<Vec<(Frame, Frame)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioRecipe {
    pub seed: u64,
    pub frames: u32,
    pub targets: usize,
    pub feature_dim: usize,
    /// Range of per-target noise norms.
    pub noise: (f64, f64),
    /// Range of per-target mean norms; pairwise mean distances follow.
    pub separation: (f64, f64),
    /// When false every target lives for the whole sequence.
    pub staggered: bool,
    /// With `Some((lo, hi))` each of the `targets` slots is a screen
    /// position that hosts a succession of identities, each visible for
    /// `lo..=hi` frames.
    pub turnover: Option<(u32, u32)>,
    /// Idle frames between successive identities of one slot.
    pub turnover_gap: (u32, u32),
    /// Occlusion events per target per frame.
    pub occlusion_rate: f64,
    pub occlusion_length: (u32, u32),
    pub clutter_rate: f64,
    pub clutter_sigma_scale: f64,
    #[serde(rename = "target")]
    pub overrides: Vec<TargetOverride>,
    #[serde(rename = "corruption")]
    pub corruptions: Vec<Corruption>,
}

impl Default for ScenarioRecipe {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 300,
            targets: 5,
            feature_dim: DEFAULT_FEATURE_DIM,
            noise: (0.4, 0.6),
            separation: (0.8, 1.2),
            staggered: true,
            turnover: None,
            turnover_gap: (0, 10),
            occlusion_rate: 0.0,
            occlusion_length: (5, 40),
            clutter_rate: 0.0,
            clutter_sigma_scale: 3.0,
            overrides: Vec::new(),
            corruptions: Vec::new(),
        }
    }
}

fn range_ok(r: (f64, f64)) -> bool {
    r.0.is_finite() && r.1.is_finite() && 0.0 <= r.0 && r.0 <= r.1
}

fn uniform(rng: &mut impl Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..r.1)
    }
}

impl ScenarioRecipe {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "<recipe>".into(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.targets == 0 || self.feature_dim == 0 {
            return Err(Error::validation("frames, targets and feature_dim must be positive"));
        }
        if !range_ok(self.noise) || self.noise.0 == 0.0 || !range_ok(self.separation) {
            return Err(Error::validation("noise and separation must be ordered non-negative ranges, noise > 0"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) || !(0.0..=1.0).contains(&self.clutter_rate) {
            return Err(Error::validation("occlusion_rate and clutter_rate must lie in [0, 1]"));
        }
        if self.occlusion_length.0 == 0 || self.occlusion_length.0 > self.occlusion_length.1 {
            return Err(Error::validation("occlusion_length must be an ordered positive range"));
        }
        if let Some((lo, hi)) = self.turnover {
            if lo == 0 || lo > hi || self.turnover_gap.0 > self.turnover_gap.1 {
                return Err(Error::validation("turnover and turnover_gap must be ordered ranges, lifespans positive"));
            }
            if !self.overrides.is_empty() {
                return Err(Error::validation("[[target]] overrides cannot be combined with turnover"));
            }
        }
        if self.overrides.len() > self.targets {
            return Err(Error::validation("more [[target]] sections than targets"));
        }
        Ok(())
    }

    fn identities(&self, rng: &mut impl Rng) -> Vec<Identity> {
        let Some((lo, hi)) = self.turnover else {
            return (0..self.targets).map(|k| (k, k, None)).collect();
        };
        let mut spans = Vec::new();
        for slot in 0..self.targets {
            // Slots start part-way into an identity so entries are staggered.
            let mut first = 1 + rng.random_range(0..=hi / 2);
            while first <= self.frames {
                let len = rng.random_range(lo..=hi);
                let last = (first + len - 1).min(self.frames);
                spans.push((slot, first, last));
                first = last + 1 + rng.random_range(self.turnover_gap.0..=self.turnover_gap.1);
            }
        }
        spans.sort_by_key(|&(slot, first, _)| (first, slot));
        spans
            .into_iter()
            .enumerate()
            .map(|(k, (slot, first, last))| (k, slot, Some((first, last))))
            .collect()
    }

    /// Expands the recipe. Deterministic in `seed`.
    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let dim = self.feature_dim;
        let root = (dim as f64).sqrt();
        let mut rng = seed::rng(&[self.seed, RECIPE_STREAM]);
        let mut targets = Vec::with_capacity(self.targets);
        for (k, slot, span) in self.identities(&mut rng) {
            let o = self.overrides.get(k).cloned().unwrap_or_default();
            // Mean norm m_k gives |mu_i - mu_j| ~ sqrt(m_i^2 + m_j^2).
            let norm = uniform(&mut rng, self.separation) / std::f64::consts::SQRT_2;
            let mu: Vec<f64> = (0..dim)
                .map(|_| norm / root * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let noise = uniform(&mut rng, self.noise);
            let noise = o.noise.unwrap_or(noise);
            let (mut first, mut last) = span.unwrap_or((1, self.frames));
            if self.staggered && span.is_none() {
                let min_len = (self.frames / 3).max(1);
                let len = rng.random_range(min_len..=self.frames);
                first = rng.random_range(1..=self.frames - len + 1);
                last = first + len - 1;
            }
            let first = o.first.unwrap_or(first);
            let last = o.last.unwrap_or(last);
            let mut occlusions = Vec::new();
            if self.occlusion_rate > 0.0 {
                for f in first..=last {
                    if rng.random_bool(self.occlusion_rate) {
                        let len = rng.random_range(self.occlusion_length.0..=self.occlusion_length.1);
                        occlusions.push((f, (f + len - 1).min(last)));
                    }
                }
            }
            let occlusions = o.occlusions.unwrap_or(occlusions);
            let speed = rng.random_range(0.5..3.0);
            targets.push(TargetModel {
                mu: FeatureVector::new(mu)?,
                sigma: vec![noise / root; dim],
                path: BoxPath::lane(slot, speed),
                lifespan: (first, last),
                occlusions,
            });
        }
        let clutter = (self.clutter_rate > 0.0).then_some(Clutter {
            rate: self.clutter_rate,
            sigma_scale: self.clutter_sigma_scale,
            spread: self.separation.1,
        });
        Ok(Scenario {
            targets,
            corruptions: self.corruptions.clone(),
            clutter,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate;

    #[test]
    fn parses_a_full_recipe() {
        let text = r#"
seed = 42
frames = 200
targets = 3
feature_dim = 32
noise = [0.3, 0.5]
separation = [1.0, 1.0]
staggered = false
clutter_rate = 0.1

[[target]]
noise = 0.2
occlusions = [[10, 20]]

[[corruption]]
kind = "identity_switch"
track = 1
at_frame = 100
to_target = 2

[[corruption]]
kind = "false_alarm"
start_frame = 5
length = 8
sigma_scale = 5.0
"#;
        let r = ScenarioRecipe::from_toml(text).unwrap();
        assert_eq!(r.seed, 42);
        assert_eq!(r.corruptions.len(), 2);
        let sc = r.build().unwrap();
        assert_eq!(sc.targets.len(), 3);
        assert_eq!(sc.targets[0].lifespan, (1, 200));
        assert!((sc.targets[0].sigma[0] - 0.2 / 32f64.sqrt()).abs() < 1e-15);
        assert_eq!(sc.targets[0].occlusions, vec![(10, 20)]);
        let g = generate(&sc).unwrap();
        assert_eq!(g.hypothesis.len(), 4);
        assert_eq!(sc, r.build().unwrap());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert_eq!(ScenarioRecipe::from_toml("sede = 1").unwrap_err().kind(), "parse");
        let r = ScenarioRecipe {
            noise: (0.5, 0.1),
            ..Default::default()
        };
        assert_eq!(r.build().unwrap_err().kind(), "validation");
    }

    #[test]
    fn default_recipe_has_expected_geometry() {
        let sc = ScenarioRecipe::default().build().unwrap();
        let g = generate(&sc).unwrap();
        for t in &sc.targets {
            let (a, b) = t.lifespan;
            assert!(b - a + 1 >= 100 && b <= 300);
        }
        // Features: noise norm within range, so per-detection offsets too.
        let t = &sc.targets[0];
        let h = g.hypothesis.get(1).unwrap();
        let mean_offset: f64 = h
            .detections()
            .iter()
            .map(|d| crate::distance::feature_distance(d.feature.as_ref().unwrap(), &t.mu).unwrap())
            .sum::<f64>()
            / h.len() as f64;
        assert!((0.35..0.65).contains(&mean_offset), "{mean_offset}");
    }

    #[test]
    fn turnover_fills_slots_with_successive_identities() {
        let r = ScenarioRecipe {
            seed: 4,
            frames: 200,
            targets: 3,
            turnover: Some((20, 40)),
            ..Default::default()
        };
        let sc = r.build().unwrap();
        assert!(sc.targets.len() >= 3 * 200 / 50);
        let mut by_lane: std::collections::BTreeMap<u64, Vec<(Frame, Frame)>> = Default::default();
        for t in &sc.targets {
            let (a, b) = t.lifespan;
            assert!(b <= 200 && (b - a + 1 <= 40) && (b - a + 1 >= 20 || b == 200));
            by_lane.entry(t.path.at(0).top as u64).or_default().push(t.lifespan);
        }
        assert_eq!(by_lane.len(), 3);
        for spans in by_lane.values() {
            assert!(spans.windows(2).all(|w| w[0].1 < w[1].0 && w[1].0 - w[0].1 <= 11));
        }
        let bad = ScenarioRecipe {
            turnover: Some((30, 10)),
            ..Default::default()
        };
        assert_eq!(bad.build().unwrap_err().kind(), "validation");
    }
}
