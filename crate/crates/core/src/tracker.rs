//! A small tracking-by-detection tracker driven by appearance features.
//!
//! Detections are associated to tracklets frame by frame on feature distance,
//! then temporally disjoint tracklets with similar appearance are merged and
//! remaining frame gaps are filled by linear interpolation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::distance::euclidean;
use crate::refmetrics::{solve_assignment, AssignmentProblem};
use crate::trackmodel::{Detection, DetectionStream, Frame, TrackId, TrackSet, Trajectory};
use crate::{Error, Result};

pub const DEFAULT_MAX_GAP: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Largest feature distance at which a detection may join a tracklet.
    pub reid_threshold: f64,
    /// Largest representative distance at which two tracklets are merged.
    pub merge_threshold: f64,
    /// Frames a tracklet may go unmatched and still be extended.
    pub max_gap: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            reid_threshold: 0.9,
            merge_threshold: 0.9,
            max_gap: DEFAULT_MAX_GAP,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("reid_threshold", self.reid_threshold), ("merge_threshold", self.merge_threshold)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Tracklet under construction. The representative is the running mean of
/// member features.
struct Tracklet {
    detections: Vec<Detection>,
    sum: Vec<f64>,
    count: usize,
}

impl Tracklet {
    fn start(d: Detection) -> Self {
        let mut t = Self {
            detections: Vec::new(),
            sum: Vec::new(),
            count: 0,
        };
        t.push(d);
        t
    }

    fn push(&mut self, d: Detection) {
        if let Some(f) = &d.feature {
            if self.sum.is_empty() {
                self.sum = vec![0.0; f.dim()];
            }
            for (s, x) in self.sum.iter_mut().zip(f.values()) {
                *s += x;
            }
            self.count += 1;
        }
        self.detections.push(d);
    }

    fn last_frame(&self) -> Frame {
        self.detections[self.detections.len() - 1].frame
    }

    fn representative(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}

pub fn track(stream: &DetectionStream, cfg: &TrackerConfig) -> Result<TrackSet> {
    cfg.validate()?;
    let raw = associate(stream, cfg)?;
    let merged = merge_tracklets(&raw, cfg.merge_threshold)?;
    let filled = interpolate(&merged)?;
    // Dense ids in creation order; surviving ids are creation indices.
    let out: Vec<Trajectory> = filled
        .into_trajectories()
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.with_id(i as TrackId + 1))
        .collect();
    TrackSet::new(out)
}

/// Frame-by-frame association only, ids 1.. in creation order.
pub fn associate(stream: &DetectionStream, cfg: &TrackerConfig) -> Result<TrackSet> {
    cfg.validate()?;
    let mut tracklets: Vec<Tracklet> = Vec::new();
    // Indices of tracklets still within the gap allowance.
    let mut open: Vec<usize> = Vec::new();
    for (frame, dets) in stream.frames() {
        open.retain(|&i| frame - tracklets[i].last_frame() - 1 <= cfg.max_gap);
        let reps: Vec<Vec<f64>> = open.iter().map(|&i| tracklets[i].representative()).collect();
        let mut p = AssignmentProblem::forbidden(open.len(), dets.len());
        for (a, rep) in reps.iter().enumerate() {
            for (b, d) in dets.iter().enumerate() {
                let f = d.feature.as_ref().expect("stream detections carry features");
                let cost = euclidean(rep, f.values());
                if cost <= cfg.reid_threshold {
                    p.set(a, b, cost);
                }
            }
        }
        let mut taken = vec![false; dets.len()];
        for (a, b) in solve_assignment(&p) {
            tracklets[open[a]].push(dets[b].clone());
            taken[b] = true;
        }
        for (b, d) in dets.iter().enumerate() {
            if !taken[b] {
                open.push(tracklets.len());
                tracklets.push(Tracklet::start(d.clone()));
            }
        }
    }
    let ts = tracklets
        .into_iter()
        .enumerate()
        .map(|(i, t)| Trajectory::new(i as TrackId + 1, t.detections))
        .collect::<Result<Vec<_>>>()?;
    TrackSet::new(ts)
}

#[derive(PartialEq)]
struct Candidate {
    dist: f64,
    a: usize,
    b: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Reversed so the max-heap pops the smallest (dist, a, b).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Group {
    first: Frame,
    last: Frame,
    sum: Vec<f64>,
    count: usize,
    members: Vec<usize>,
    alive: bool,
}

impl Group {
    fn disjoint(&self, o: &Group) -> bool {
        self.last < o.first || o.last < self.first
    }
}

/// Distance between group means, or `None` once it exceeds `limit`.
fn mean_distance_within(a: &Group, b: &Group, limit: f64) -> Option<f64> {
    let (na, nb) = (a.count as f64, b.count as f64);
    let cap = limit * limit;
    let mut acc = 0.0;
    for (x, y) in a.sum.iter().zip(&b.sum) {
        let d = x / na - y / nb;
        acc += d * d;
        if acc >= cap {
            return None;
        }
    }
    Some(acc.sqrt())
}

/// Greedily merges temporally disjoint trajectories whose mean features lie
/// closer than `threshold`, closest pair first, until no pair qualifies. The
/// earlier trajectory keeps its id and absorbs the later one. Trajectories
/// with no observed feature never merge.
pub fn merge_tracklets(ts: &TrackSet, threshold: f64) -> Result<TrackSet> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::validation(format!("merge threshold must be positive, got {threshold}")));
    }
    let trajs = ts.trajectories();
    let mut groups: Vec<Group> = Vec::with_capacity(trajs.len());
    for (i, t) in trajs.iter().enumerate() {
        let feats = crate::distance::observed_features(t)?;
        let mut sum = vec![0.0; ts.feature_dim().unwrap_or(0)];
        for f in &feats {
            for (s, x) in sum.iter_mut().zip(f.iter()) {
                *s += x;
            }
        }
        groups.push(Group {
            first: t.first_frame(),
            last: t.last_frame(),
            sum,
            count: feats.len(),
            members: vec![i],
            alive: true,
        });
    }

    let mut heap = BinaryHeap::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            push_candidate(&mut heap, &groups, a, b, threshold);
        }
    }
    while let Some(Candidate { dist, a, b }) = heap.pop() {
        // Stale entries: one side was absorbed or changed since the push.
        if !groups[a].alive || !groups[b].alive || !groups[a].disjoint(&groups[b]) {
            continue;
        }
        let Some(current) = mean_distance_within(&groups[a], &groups[b], threshold) else {
            continue;
        };
        if current != dist {
            heap.push(Candidate { dist: current, a, b });
            continue;
        }
        let (keep, gone) = match groups[a].first < groups[b].first {
            true => (a, b),
            false => (b, a),
        };
        let absorbed = std::mem::replace(
            &mut groups[gone],
            Group {
                first: 0,
                last: 0,
                sum: Vec::new(),
                count: 0,
                members: Vec::new(),
                alive: false,
            },
        );
        let g = &mut groups[keep];
        g.first = g.first.min(absorbed.first);
        g.last = g.last.max(absorbed.last);
        for (s, x) in g.sum.iter_mut().zip(&absorbed.sum) {
            *s += x;
        }
        g.count += absorbed.count;
        g.members.extend(absorbed.members);
        for o in 0..groups.len() {
            if o != keep {
                push_candidate(&mut heap, &groups, keep.min(o), keep.max(o), threshold);
            }
        }
    }

    let mut out = Vec::new();
    for g in groups.iter().filter(|g| g.alive) {
        let mut dets: Vec<Detection> = g
            .members
            .iter()
            .flat_map(|&m| trajs[m].detections().iter().cloned())
            .collect();
        dets.sort_by_key(|d| d.frame);
        out.push(Trajectory::new(trajs[g.members[0]].id(), dets)?);
    }
    TrackSet::new(out)
}

fn push_candidate(heap: &mut BinaryHeap<Candidate>, groups: &[Group], a: usize, b: usize, threshold: f64) {
    let (ga, gb) = (&groups[a], &groups[b]);
    if !ga.alive || !gb.alive || ga.count == 0 || gb.count == 0 || !ga.disjoint(gb) {
        return;
    }
    if let Some(dist) = mean_distance_within(ga, gb, threshold) {
        heap.push(Candidate { dist, a, b });
    }
}

/// Fills frame gaps inside each trajectory with linearly interpolated,
/// featureless detections.
pub fn interpolate(ts: &TrackSet) -> Result<TrackSet> {
    let mut out = Vec::with_capacity(ts.len());
    for t in ts.trajectories() {
        let src = t.detections();
        let mut dets = Vec::with_capacity((t.last_frame() - t.first_frame() + 1) as usize);
        for (i, d) in src.iter().enumerate() {
            if let Some(prev) = i.checked_sub(1).map(|j| &src[j]) {
                let span = d.frame - prev.frame;
                for f in prev.frame + 1..d.frame {
                    let w = (f - prev.frame) as f64 / span as f64;
                    dets.push(Detection::interpolated(f, prev.bbox.lerp(&d.bbox, w)));
                }
            }
            dets.push(d.clone());
        }
        out.push(Trajectory::new(t.id(), dets)?);
    }
    TrackSet::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::trackmodel::testutil::det;
    use crate::trackmodel::{BBox, FeatureVector};
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn cfg(reid: f64, merge: f64) -> TrackerConfig {
        TrackerConfig {
            reid_threshold: reid,
            merge_threshold: merge,
            max_gap: DEFAULT_MAX_GAP,
        }
    }

    fn on_frames(id: TrackId, frames: &[Frame], f: &[f64]) -> Trajectory {
        Trajectory::new(id, frames.iter().map(|&fr| det(fr, f)).collect()).unwrap()
    }

    #[test]
    fn constant_feature_gives_one_trajectory() {
        let stream = DetectionStream::new((1..=50).map(|f| det(f, &[0.2, 0.4])).collect()).unwrap();
        let ts = track(&stream, &TrackerConfig::default()).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts.trajectories()[0].len(), 50);
    }

    #[test]
    fn separated_pair_gives_two_trajectories() {
        let mut dets = Vec::new();
        for f in 1..=40 {
            dets.push(det(f, &[0.0, 0.0]));
            dets.push(det(f, &[1.0, 0.0]));
        }
        let ts = track(&DetectionStream::new(dets).unwrap(), &cfg(0.5, 0.5)).unwrap();
        assert_eq!(ts.len(), 2);
        for t in ts.trajectories() {
            let first = t.detections()[0].feature.clone();
            assert!(t.detections().iter().all(|d| d.feature == first));
        }
    }

    #[test]
    fn strict_threshold_fragments_noisy_tracks() {
        let mut rng = seed::rng(&[3]);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut dets = Vec::new();
        for f in 1..=40 {
            for base in [[0.0, 0.0], [1.0, 0.0]] {
                let v: Vec<f64> = base.iter().map(|b| b + noise.sample(&mut rng)).collect();
                dets.push(det(f, &v));
            }
        }
        let ts = track(&DetectionStream::new(dets).unwrap(), &cfg(0.05, 0.01)).unwrap();
        assert!(ts.len() > 2, "got {}", ts.len());
    }

    #[test]
    fn gap_longer_than_memory_starts_new_tracklet() {
        let dets = vec![det(1, &[0.0]), det(2, &[0.0]), det(40, &[0.0])];
        let stream = DetectionStream::new(dets).unwrap();
        let c = TrackerConfig {
            max_gap: 5,
            ..cfg(0.5, 0.5)
        };
        assert_eq!(associate(&stream, &c).unwrap().len(), 2);
        let c = TrackerConfig {
            max_gap: 37,
            ..c
        };
        assert_eq!(associate(&stream, &c).unwrap().len(), 1);
    }

    #[test]
    fn merge_examples() {
        let ts = TrackSet::new(vec![
            on_frames(1, &[1, 2, 3], &[0.5, 0.5]),
            on_frames(2, &[6, 7], &[0.5, 0.5]),
        ])
        .unwrap();
        let m = merge_tracklets(&ts, 0.5).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.trajectories()[0].id(), 1);
        assert_eq!(m.trajectories()[0].len(), 5);

        let ts = TrackSet::new(vec![
            on_frames(1, &[1, 2, 3], &[0.5, 0.5]),
            on_frames(2, &[3, 4], &[0.5, 0.5]),
        ])
        .unwrap();
        assert_eq!(merge_tracklets(&ts, 100.0).unwrap().len(), 2);
    }

    #[test]
    fn merge_keeps_the_earlier_id() {
        let ts = TrackSet::new(vec![
            on_frames(1, &[10, 11], &[0.0]),
            on_frames(2, &[1, 2], &[0.1]),
        ])
        .unwrap();
        let m = merge_tracklets(&ts, 0.5).unwrap();
        assert_eq!(m.trajectories()[0].id(), 2);
    }

    #[test]
    fn three_way_merge_is_order_independent() {
        let pieces = [
            (vec![1, 2], vec![0.00]),
            (vec![4, 5], vec![0.05]),
            (vec![8, 9], vec![0.12]),
        ];
        // Every labeling of the three pieces ends in one trajectory with all
        // six detections.
        for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let ts = TrackSet::new(
                perm.iter()
                    .enumerate()
                    .map(|(k, &p)| on_frames(k as TrackId + 1, &pieces[p].0, &pieces[p].1))
                    .collect(),
            )
            .unwrap();
            let m = merge_tracklets(&ts, 0.5).unwrap();
            assert_eq!(m.len(), 1);
            let frames: Vec<Frame> = m.trajectories()[0].detections().iter().map(|d| d.frame).collect();
            assert_eq!(frames, vec![1, 2, 4, 5, 8, 9]);
        }
    }

    #[test]
    fn merge_never_creates_overlap() {
        // A and C are close; B overlaps A in time and sits between them.
        let ts = TrackSet::new(vec![
            on_frames(1, &[1, 2, 3], &[0.0]),
            on_frames(2, &[3, 4, 5], &[0.01]),
            on_frames(3, &[5, 6], &[0.02]),
        ])
        .unwrap();
        let m = merge_tracklets(&ts, 1.0).unwrap();
        // 1 and 3 are disjoint and merge; 2 overlaps both and stays apart.
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn interpolation_examples() {
        let a = Detection::new(1, BBox::new(0.0, 0.0, 10.0, 10.0), 1.0);
        let b = Detection::new(3, BBox::new(2.0, 0.0, 10.0, 10.0), 1.0);
        let ts = TrackSet::new(vec![Trajectory::new(1, vec![a, b]).unwrap()]).unwrap();
        let out = interpolate(&ts).unwrap();
        let mid = &out.trajectories()[0].detections()[1];
        assert_eq!(mid.frame, 2);
        assert_eq!(mid.bbox, BBox::new(1.0, 0.0, 10.0, 10.0));
        assert!(mid.synthetic && mid.feature.is_none() && mid.confidence == 0.0);

        let dense = TrackSet::new(vec![on_frames(1, &[1, 2, 3], &[0.0])]).unwrap();
        assert_eq!(interpolate(&dense).unwrap(), dense);

        let a = Detection::new(10, BBox::new(0.0, 5.0, 10.0, 10.0), 1.0);
        let b = Detection::new(15, BBox::new(50.0, 5.0, 20.0, 10.0), 1.0);
        let ts = TrackSet::new(vec![Trajectory::new(1, vec![a, b]).unwrap()]).unwrap();
        let out = interpolate(&ts).unwrap();
        let filled: Vec<&Detection> = out.trajectories()[0].detections().iter().filter(|d| d.synthetic).collect();
        assert_eq!(filled.len(), 4);
        for (k, d) in filled.iter().enumerate() {
            let step = (k + 1) as f64;
            assert!((d.bbox.left - 10.0 * step).abs() < 1e-12);
            assert!((d.bbox.width - (10.0 + 2.0 * step)).abs() < 1e-12);
        }
    }

    fn random_stream(seed_v: u64) -> DetectionStream {
        let mut rng = seed::rng(&[seed_v, 77]);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut dets = Vec::new();
        for f in 1..=30u32 {
            for k in 0..3 {
                if rand::Rng::random_bool(&mut rng, 0.8) {
                    let v: Vec<f64> = (0..4).map(|d| if d == k { 1.0 } else { 0.0 } + noise.sample(&mut rng)).collect();
                    dets.push(
                        Detection::new(f, BBox::new(20.0 * k as f64, 0.0, 10.0, 10.0), 0.9)
                            .with_feature(FeatureVector::new(v).unwrap()),
                    );
                }
            }
        }
        DetectionStream::new(dets).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn every_detection_lands_once(s in 0u64..10_000, reid in 0.05f64..2.0, merge in 0.05f64..2.0) {
            let stream = random_stream(s);
            let c = cfg(reid, merge);
            let ts = track(&stream, &c).unwrap();
            let mut observed: Vec<(Frame, u64)> = ts
                .trajectories()
                .iter()
                .flat_map(|t| t.detections().iter().filter(|d| !d.synthetic))
                .map(|d| (d.frame, d.feature.as_ref().unwrap().values()[0].to_bits()))
                .collect();
            let mut input: Vec<(Frame, u64)> = stream
                .frames()
                .iter()
                .flat_map(|(_, v)| v.iter())
                .map(|d| (d.frame, d.feature.as_ref().unwrap().values()[0].to_bits()))
                .collect();
            observed.sort_unstable();
            input.sort_unstable();
            prop_assert_eq!(observed, input);
            let ids: Vec<TrackId> = ts.trajectories().iter().map(|t| t.id()).collect();
            prop_assert_eq!(ids, (1..=ts.len() as TrackId).collect::<Vec<_>>());
            prop_assert_eq!(track(&stream, &c).unwrap(), ts);
        }
    }
}
