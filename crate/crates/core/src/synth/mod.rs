//! Synthetic scenes under a per-target Gaussian feature model.
//!
//! Each target has an ideal feature `mu` and per-dimension noise `sigma`;
//! every visible frame yields an independent draw from `N(mu, diag(sigma^2))`.
//! A scenario produces ground truth, the raw detection stream for the
//! tracker, and a hypothesis track set with injected corruptions.

mod chi;
mod recipe;

pub use chi::{chi_cdf, chi_check_inter, chi_check_intra, ks_test, ChiCheckResult, MIN_CHI_SAMPLES};
pub use recipe::ScenarioRecipe;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distance::{intra_distances, DistanceConfig, DistanceSamples};
use crate::gmm::{fit_gmm2, GmmFit};
use crate::seed;
use crate::trackmodel::{
    BBox, Detection, DetectionStream, FeatureVector, Frame, GroundTruth, TrackId, TrackSet, Trajectory,
};
use crate::{Error, Result};

pub const DEFAULT_FEATURE_DIM: usize = 128;
pub const DEFAULT_SIGMA: f64 = 0.05;

const TARGET_STREAM: u64 = 0x7a;
const CLUTTER_STREAM: u64 = 0x7b;
const CORRUPTION_STREAM: u64 = 0x7c;
const DEMO_STREAM: u64 = 0x7d;

const LANE_HEIGHT: f64 = 120.0;
const BOX_W: f64 = 40.0;
const BOX_H: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPath {
    pub start: BBox,
    /// Pixels per frame, (dx, dy).
    pub velocity: (f64, f64),
}

impl BoxPath {
    pub fn lane(lane: usize, speed: f64) -> Self {
        Self {
            start: BBox::new(10.0, 10.0 + LANE_HEIGHT * lane as f64, BOX_W, BOX_H),
            velocity: (speed, 0.0),
        }
    }

    pub fn at(&self, offset: u32) -> BBox {
        let t = offset as f64;
        BBox::new(
            self.start.left + self.velocity.0 * t,
            self.start.top + self.velocity.1 * t,
            self.start.width,
            self.start.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub mu: FeatureVector,
    /// Per-dimension standard deviations.
    pub sigma: Vec<f64>,
    pub path: BoxPath,
    /// Inclusive `(first, last)`.
    pub lifespan: (Frame, Frame),
    /// Inclusive frame ranges with no detection; ground truth keeps them.
    pub occlusions: Vec<(Frame, Frame)>,
}

impl TargetModel {
    /// Target in lane 0 without motion or occlusion.
    pub fn stationary(mu: FeatureVector, sigma: Vec<f64>, lifespan: (Frame, Frame)) -> Self {
        Self {
            mu,
            sigma,
            path: BoxPath::lane(0, 0.0),
            lifespan,
            occlusions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.len() != self.mu.dim() {
            return Err(Error::validation("sigma and mu differ in dimension"));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation("sigma entries must be positive"));
        }
        if self.lifespan.0 > self.lifespan.1 {
            return Err(Error::validation(format!("empty lifespan {:?}", self.lifespan)));
        }
        Ok(())
    }

    pub fn visible(&self, frame: Frame) -> bool {
        (self.lifespan.0..=self.lifespan.1).contains(&frame)
            && !self.occlusions.iter().any(|&(a, b)| (a..=b).contains(&frame))
    }

    pub fn draw(&self, rng: &mut impl Rng) -> FeatureVector {
        let v = self
            .mu
            .values()
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        FeatureVector::new(v).expect("finite draw")
    }

    fn mean_sigma(&self) -> f64 {
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Corruption {
    /// Tracks `track` and `to_target` exchange identities from `at_frame` on.
    IdentitySwitch { track: TrackId, at_frame: Frame, to_target: TrackId },
    /// A hypothesis with no real target, features noisier by `sigma_scale`.
    FalseAlarm { start_frame: Frame, length: u32, sigma_scale: f64 },
    /// Track `track` is cut at `at_frame`; the tail gets a fresh id.
    Fragmentation { track: TrackId, at_frame: Frame },
}

/// Spurious detections injected into the stream only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clutter {
    /// Expected spurious detections per frame, at most one.
    pub rate: f64,
    /// Noise of clutter features relative to the mean target sigma.
    pub sigma_scale: f64,
    /// Typical distance of a clutter feature centre from the origin.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub targets: Vec<TargetModel>,
    pub corruptions: Vec<Corruption>,
    pub clutter: Option<Clutter>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub ground_truth: GroundTruth,
    pub detections: DetectionStream,
    /// Per-target tracks, ids `1..`, with corruptions applied.
    pub hypothesis: TrackSet,
}

impl Scenario {
    pub fn feature_dim(&self) -> Option<usize> {
        self.targets.first().map(|t| t.mu.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.feature_dim().ok_or_else(|| Error::validation("scenario has no targets"))?;
        for t in &self.targets {
            t.validate()?;
            if t.mu.dim() != n {
                return Err(Error::validation("targets differ in feature dimension"));
            }
        }
        Ok(())
    }

    fn reference_sigma(&self) -> f64 {
        self.targets.iter().map(TargetModel::mean_sigma).sum::<f64>() / self.targets.len() as f64
    }

    fn frame_range(&self) -> (Frame, Frame) {
        let first = self.targets.iter().map(|t| t.lifespan.0).min().unwrap_or(1);
        let last = self.targets.iter().map(|t| t.lifespan.1).max().unwrap_or(1);
        (first, last)
    }
}

/// Random feature centre with expected norm `spread`.
fn random_centre(rng: &mut impl Rng, dim: usize, spread: f64) -> Vec<f64> {
    let s = spread / (dim as f64).sqrt();
    (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn noisy(centre: &[f64], sigma: f64, rng: &mut impl Rng) -> FeatureVector {
    let n = Normal::new(0.0, sigma).expect("sigma > 0");
    FeatureVector::new(centre.iter().map(|c| c + n.sample(rng)).collect()).expect("finite draw")
}

pub fn generate(sc: &Scenario) -> Result<Generated> {
    sc.validate()?;
    let dim = sc.feature_dim().unwrap_or(DEFAULT_FEATURE_DIM);
    let mut gt = Vec::with_capacity(sc.targets.len());
    let mut stream = Vec::new();
    let mut hyp: BTreeMap<TrackId, Vec<Detection>> = BTreeMap::new();

    for (k, t) in sc.targets.iter().enumerate() {
        let id = k as TrackId + 1;
        let mut rng = seed::rng(&[sc.seed, TARGET_STREAM, k as u64]);
        let mut truth = Vec::new();
        for f in t.lifespan.0..=t.lifespan.1 {
            let bbox = t.path.at(f - t.lifespan.0);
            truth.push(Detection::new(f, bbox, 1.0));
            if t.visible(f) {
                let d = Detection::new(f, bbox, 0.9).with_feature(t.draw(&mut rng));
                stream.push(d.clone());
                hyp.entry(id).or_default().push(d);
            }
        }
        gt.push(Trajectory::new(id, truth)?);
    }

    let lane_below = sc.targets.len();
    let ref_sigma = sc.reference_sigma();
    if let Some(c) = sc.clutter {
        if !(0.0..=1.0).contains(&c.rate) || c.sigma_scale.is_nan() || c.sigma_scale <= 0.0 {
            return Err(Error::validation("clutter rate must lie in [0, 1] and sigma_scale be positive"));
        }
        let mut rng = seed::rng(&[sc.seed, CLUTTER_STREAM]);
        let (first, last) = sc.frame_range();
        for f in first..=last {
            if rng.random_bool(c.rate) {
                let centre = random_centre(&mut rng, dim, c.spread);
                let feature = noisy(&centre, c.sigma_scale * ref_sigma, &mut rng);
                let left = rng.random_range(0.0..600.0);
                let bbox = BBox::new(left, 10.0 + LANE_HEIGHT * (lane_below + 1) as f64, BOX_W, BOX_H);
                stream.push(Detection::new(f, bbox, 0.5).with_feature(feature));
            }
        }
    }

    let mut rng = seed::rng(&[sc.seed, CORRUPTION_STREAM]);
    for c in &sc.corruptions {
        apply(&mut hyp, c, sc, dim, ref_sigma, lane_below, &mut rng)?;
    }

    let hypothesis = hyp
        .into_iter()
        .filter(|(_, d)| !d.is_empty())
        .map(|(id, d)| Trajectory::new(id, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(Generated {
        ground_truth: GroundTruth::new(TrackSet::new(gt)?),
        detections: DetectionStream::new(stream)?,
        hypothesis: TrackSet::new(hypothesis)?,
    })
}

fn span(dets: &[Detection]) -> Option<(Frame, Frame)> {
    Some((dets.first()?.frame, dets.last()?.frame))
}

fn take_track(hyp: &mut BTreeMap<TrackId, Vec<Detection>>, id: TrackId) -> Result<Vec<Detection>> {
    hyp.remove(&id)
        .ok_or_else(|| Error::validation(format!("corruption references unknown track {id}")))
}

fn apply(
    hyp: &mut BTreeMap<TrackId, Vec<Detection>>,
    c: &Corruption,
    sc: &Scenario,
    dim: usize,
    ref_sigma: f64,
    lane: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let next_id = hyp.keys().next_back().map_or(1, |k| k + 1).max(sc.targets.len() as TrackId + 1);
    match *c {
        Corruption::IdentitySwitch { track, at_frame, to_target } => {
            if track == to_target {
                return Err(Error::validation("identity switch needs two distinct tracks"));
            }
            let a = take_track(hyp, track)?;
            let b = take_track(hyp, to_target)?;
            for (id, d) in [(track, &a), (to_target, &b)] {
                let (first, last) = span(d).unwrap_or((0, 0));
                if !(first < at_frame && at_frame <= last) {
                    return Err(Error::validation(format!(
                        "identity switch at frame {at_frame} lies outside the interior of track {id} ({first}..={last})"
                    )));
                }
            }
            let (a_head, a_tail): (Vec<_>, Vec<_>) = a.into_iter().partition(|d| d.frame < at_frame);
            let (b_head, b_tail): (Vec<_>, Vec<_>) = b.into_iter().partition(|d| d.frame < at_frame);
            hyp.insert(track, a_head.into_iter().chain(b_tail).collect());
            hyp.insert(to_target, b_head.into_iter().chain(a_tail).collect());
        }
        Corruption::FalseAlarm { start_frame, length, sigma_scale } => {
            if length == 0 || sigma_scale.is_nan() || sigma_scale <= 0.0 {
                return Err(Error::validation("false alarm needs positive length and sigma_scale"));
            }
            let centre = random_centre(rng, dim, 1.0);
            let dets = (0..length)
                .map(|i| {
                    let bbox = BBox::new(10.0 + 3.0 * i as f64, 10.0 + LANE_HEIGHT * lane as f64, BOX_W, BOX_H);
                    Detection::new(start_frame + i, bbox, 0.5).with_feature(noisy(&centre, sigma_scale * ref_sigma, rng))
                })
                .collect();
            hyp.insert(next_id, dets);
        }
        Corruption::Fragmentation { track, at_frame } => {
            let d = take_track(hyp, track)?;
            let (head, tail): (Vec<_>, Vec<_>) = d.into_iter().partition(|d| d.frame < at_frame);
            if head.is_empty() || tail.is_empty() {
                return Err(Error::validation(format!(
                    "fragmentation of track {track} at frame {at_frame} leaves an empty piece"
                )));
            }
            hyp.insert(track, head);
            hyp.insert(next_id, tail);
        }
    }
    Ok(())
}

/// One trajectory that follows target A for `n1` frames and then target B
/// for `n2`, with `|mu_A - mu_B| = separation` and noise of norm scale
/// `sigma` (per-dimension deviation `sigma / sqrt(dim)`). Returns all its
/// intra distances and their two-component fit.
pub fn switched_trajectory(
    n1: usize,
    n2: usize,
    separation: f64,
    sigma: f64,
    dim: usize,
    seed_value: u64,
) -> Result<(DistanceSamples, GmmFit)> {
    if separation.is_nan() || separation < 0.0 || sigma.is_nan() || sigma <= 0.0 || dim == 0 {
        return Err(Error::validation("separation must be >= 0, sigma > 0, dim > 0"));
    }
    let mut rng = seed::rng(&[seed_value, DEMO_STREAM]);
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mu_b: Vec<f64> = dir.iter().map(|x| x / norm * separation).collect();
    let per_dim = vec![sigma / (dim as f64).sqrt(); dim];
    let a = TargetModel::stationary(FeatureVector::new(vec![0.0; dim])?, per_dim.clone(), (1, 1));
    let b = TargetModel::stationary(FeatureVector::new(mu_b)?, per_dim, (1, 1));
    let dets = (0..n1 + n2)
        .map(|i| {
            let t = if i < n1 { &a } else { &b };
            Detection::new(i as Frame + 1, BBox::new(0.0, 0.0, BOX_W, BOX_H), 1.0).with_feature(t.draw(&mut rng))
        })
        .collect();
    let traj = Trajectory::new(1, dets)?;
    let samples = intra_distances(&traj, &DistanceConfig::exhaustive())?;
    let fit = fit_gmm2(&samples.values)?;
    Ok((samples, fit))
}

/// Equal halves of a switched trajectory.
pub fn bimodality_demo(length_each: usize, separation: f64, sigma: f64, seed_value: u64) -> Result<(DistanceSamples, GmmFit)> {
    switched_trajectory(length_each, length_each, separation, sigma, DEFAULT_FEATURE_DIM, seed_value)
}
