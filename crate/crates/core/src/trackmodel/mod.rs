//! Detections, trajectories and track sets.

mod io;

use std::collections::HashSet;

use crate::{Error, Result};

pub use io::{
    load_detections, load_ground_truth, load_trackset, save_detections, save_features,
    save_trackset,
};

pub type Frame = u32;
pub type TrackId = u64;

/// Appearance descriptor of a single detection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("feature vector must have dimension >= 1"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite feature entry {bad}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Unit-length copy. The zero vector is returned unchanged.
    pub fn l2_normalized(&self) -> Self {
        let norm = self.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        Self(self.0.iter().map(|v| v / norm).collect())
    }
}

/// Axis-aligned box in pixels, `(left, top, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    fn validate(&self) -> Result<()> {
        let all_finite = [self.left, self.top, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::validation(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.left + self.width).min(other.left + other.width) - self.left.max(other.left);
        let iy = (self.top + self.height).min(other.top + other.height) - self.top.max(other.top);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        (inter / (self.area() + other.area() - inter)).min(1.0)
    }

    /// Linear interpolation, `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn lerp(&self, other: &BBox, t: f64) -> BBox {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        BBox {
            left: mix(self.left, other.left),
            top: mix(self.top, other.top),
            width: mix(self.width, other.width),
            height: mix(self.height, other.height),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: Frame,
    pub bbox: BBox,
    pub confidence: f64,
    pub feature: Option<FeatureVector>,
    /// Filled in by interpolation rather than observed; never has a feature.
    pub synthetic: bool,
}

impl Detection {
    pub fn new(frame: Frame, bbox: BBox, confidence: f64) -> Self {
        Self {
            frame,
            bbox,
            confidence,
            feature: None,
            synthetic: false,
        }
    }

    pub fn with_feature(mut self, feature: FeatureVector) -> Self {
        self.feature = Some(feature);
        self
    }

    pub fn interpolated(frame: Frame, bbox: BBox) -> Self {
        Self {
            frame,
            bbox,
            confidence: 0.0,
            feature: None,
            synthetic: true,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::validation(format!(
                "confidence {} outside [0, 1] at frame {}",
                self.confidence, self.frame
            )));
        }
        if self.synthetic && self.feature.is_some() {
            return Err(Error::validation("interpolated detection carries a feature"));
        }
        Ok(())
    }
}

/// One trajectory hypothesis: detections with strictly increasing frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: TrackId,
    detections: Vec<Detection>,
}

impl Trajectory {
    pub fn new(id: TrackId, detections: Vec<Detection>) -> Result<Self> {
        if detections.is_empty() {
            return Err(Error::validation(format!("trajectory {id} is empty")));
        }
        for d in &detections {
            d.validate()?;
        }
        if let Some(w) = detections.windows(2).find(|w| w[0].frame >= w[1].frame) {
            return Err(Error::validation(format!(
                "trajectory {id}: frames not strictly increasing ({} then {})",
                w[0].frame, w[1].frame
            )));
        }
        Ok(Self { id, detections })
    }

    pub fn id(&self) -> TrackId {
        self.id
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn first_frame(&self) -> Frame {
        self.detections[0].frame
    }

    pub fn last_frame(&self) -> Frame {
        self.detections[self.detections.len() - 1].frame
    }

    /// True when the frame spans `[first, last]` of both trajectories intersect.
    pub fn overlaps_in_time(&self, other: &Trajectory) -> bool {
        self.first_frame() <= other.last_frame() && other.first_frame() <= self.last_frame()
    }

    pub fn with_id(mut self, id: TrackId) -> Self {
        self.id = id;
        self
    }

    pub fn into_detections(self) -> Vec<Detection> {
        self.detections
    }
}

/// A set of trajectories with distinct ids, kept sorted by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    trajectories: Vec<Trajectory>,
    feature_dim: Option<usize>,
}

impl TrackSet {
    pub fn new(mut trajectories: Vec<Trajectory>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(trajectories.len());
        let mut feature_dim = None;
        for t in &trajectories {
            if !seen.insert(t.id) {
                return Err(Error::validation(format!("duplicate trajectory id {}", t.id)));
            }
            for f in t.detections.iter().filter_map(|d| d.feature.as_ref()) {
                match feature_dim {
                    None => feature_dim = Some(f.dim()),
                    Some(n) if n != f.dim() => {
                        return Err(Error::validation(format!(
                            "feature dimension mismatch: {n} vs {} in trajectory {}",
                            f.dim(),
                            t.id
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        trajectories.sort_by_key(|t| t.id);
        Ok(Self {
            trajectories,
            feature_dim,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn get(&self, id: TrackId) -> Option<&Trajectory> {
        self.trajectories
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.trajectories[i])
    }

    /// Number of trajectories.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn total_detections(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    /// Copy with every feature scaled to unit length.
    pub fn l2_normalized(&self) -> Self {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                id: t.id,
                detections: t
                    .detections
                    .iter()
                    .map(|d| Detection {
                        feature: d.feature.as_ref().map(FeatureVector::l2_normalized),
                        ..d.clone()
                    })
                    .collect(),
            })
            .collect();
        Self {
            trajectories,
            feature_dim: self.feature_dim,
        }
    }
}

/// Mean trajectory length in detections.
pub fn mean_length(ts: &TrackSet) -> Result<f64> {
    if ts.is_empty() {
        return Err(Error::UndefinedInput("mean length of an empty track set"));
    }
    Ok(ts.total_detections() as f64 / ts.len() as f64)
}

/// Annotated trajectories. Same shape as a [`TrackSet`], never carries features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth(TrackSet);

impl GroundTruth {
    pub fn new(tracks: TrackSet) -> Self {
        let trajectories = tracks
            .trajectories
            .into_iter()
            .map(|t| Trajectory {
                id: t.id,
                detections: t
                    .detections
                    .into_iter()
                    .map(|d| Detection {
                        feature: None,
                        ..d
                    })
                    .collect(),
            })
            .collect();
        Self(TrackSet {
            trajectories,
            feature_dim: None,
        })
    }

    pub fn tracks(&self) -> &TrackSet {
        &self.0
    }
}

/// Per-frame detections, frames ascending. Input of the tracker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionStream {
    frames: Vec<(Frame, Vec<Detection>)>,
    feature_dim: Option<usize>,
}

impl DetectionStream {
    /// Groups detections by frame. Every detection must carry a feature of one
    /// common dimension.
    pub fn new(detections: Vec<Detection>) -> Result<Self> {
        let mut feature_dim = None;
        for d in &detections {
            d.validate()?;
            let f = d.feature.as_ref().ok_or_else(|| {
                Error::validation(format!("detection at frame {} has no feature", d.frame))
            })?;
            match feature_dim {
                None => feature_dim = Some(f.dim()),
                Some(n) if n != f.dim() => {
                    return Err(Error::validation(format!(
                        "feature dimension mismatch in detection stream: {n} vs {}",
                        f.dim()
                    )))
                }
                Some(_) => {}
            }
        }
        let mut detections = detections;
        detections.sort_by_key(|d| d.frame);
        let mut frames: Vec<(Frame, Vec<Detection>)> = Vec::new();
        for d in detections {
            match frames.last_mut() {
                Some((f, list)) if *f == d.frame => list.push(d),
                _ => frames.push((d.frame, vec![d])),
            }
        }
        Ok(Self {
            frames,
            feature_dim,
        })
    }

    pub fn frames(&self) -> &[(Frame, Vec<Detection>)] {
        &self.frames
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.frames.iter().map(|(_, d)| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn l2_normalized(&self) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|(f, dets)| {
                let dets = dets
                    .iter()
                    .map(|d| Detection {
                        feature: d.feature.as_ref().map(FeatureVector::l2_normalized),
                        ..d.clone()
                    })
                    .collect();
                (*f, dets)
            })
            .collect();
        Self {
            frames,
            feature_dim: self.feature_dim,
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn det(frame: Frame, feature: &[f64]) -> Detection {
        Detection::new(frame, BBox::new(0.0, 0.0, 10.0, 10.0), 1.0)
            .with_feature(FeatureVector::new(feature.to_vec()).unwrap())
    }

    pub fn traj(id: TrackId, features: &[Vec<f64>]) -> Trajectory {
        let dets = features
            .iter()
            .enumerate()
            .map(|(i, f)| det(i as Frame + 1, f))
            .collect();
        Trajectory::new(id, dets).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn mean_length_cases() {
        let one = TrackSet::new(vec![traj(0, &vec![vec![0.0]; 10])]).unwrap();
        assert_eq!(mean_length(&one).unwrap(), 10.0);
        let two = TrackSet::new(vec![traj(0, &vec![vec![0.0]; 5]), traj(1, &vec![vec![0.0]; 15])]).unwrap();
        assert_eq!(mean_length(&two).unwrap(), 10.0);
        assert!(matches!(mean_length(&TrackSet::empty()), Err(Error::UndefinedInput(_))));
    }

    #[test]
    fn mean_length_matches_summation() {
        use rand::Rng;
        let mut rng = crate::seed::rng(&[50]);
        let lens: Vec<usize> = (0..50).map(|_| rng.random_range(1..40)).collect();
        let ts = TrackSet::new(
            lens.iter()
                .enumerate()
                .map(|(i, &l)| traj(i as TrackId, &vec![vec![1.0]; l]))
                .collect(),
        )
        .unwrap();
        let mut sum = 0usize;
        for l in &lens {
            sum += l;
        }
        assert!((mean_length(&ts).unwrap() - sum as f64 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_rejects_repeated_frames() {
        let d = det(3, &[0.0]);
        assert!(Trajectory::new(1, vec![d.clone(), d]).is_err());
        assert!(Trajectory::new(1, vec![]).is_err());
    }

    #[test]
    fn detection_invariants() {
        let mut d = det(1, &[0.0]);
        d.confidence = 1.5;
        assert!(Trajectory::new(0, vec![d]).is_err());
        let mut d = det(1, &[0.0]);
        d.bbox.width = 0.0;
        assert!(Trajectory::new(0, vec![d]).is_err());
        assert!(FeatureVector::new(vec![f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![]).is_err());
    }

    #[test]
    fn trackset_rejects_duplicates_and_dim_mismatch() {
        assert!(TrackSet::new(vec![traj(1, &[vec![0.0]]), traj(1, &[vec![0.0]])]).is_err());
        assert!(TrackSet::new(vec![traj(1, &[vec![0.0]]), traj(2, &[vec![0.0, 1.0]])]).is_err());
        let ts = TrackSet::new(vec![traj(5, &[vec![0.0]]), traj(2, &[vec![0.0]])]).unwrap();
        assert_eq!(ts.trajectories()[0].id(), 2);
        assert_eq!(ts.feature_dim(), Some(1));
    }

    #[test]
    fn iou_basics() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        let b = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&BBox::new(20.0, 0.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn ground_truth_drops_features() {
        let gt = GroundTruth::new(TrackSet::new(vec![traj(0, &[vec![1.0]])]).unwrap());
        assert!(gt.tracks().trajectories()[0].detections()[0].feature.is_none());
        assert_eq!(gt.tracks().feature_dim(), None);
    }
}
