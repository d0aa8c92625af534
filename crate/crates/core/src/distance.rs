//! Euclidean feature distances and intra/inter-trajectory distance samples.

use rand::seq::index;

use crate::seed;
use crate::trackmodel::{FeatureVector, TrackId, Trajectory};
use crate::{Error, Result};

/// Pair sets larger than this are uniformly subsampled down to it.
pub const MAX_PAIRS: usize = 10_000;

const INTRA_STREAM: u64 = 1;
const INTER_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceConfig {
    /// `None` disables subsampling.
    pub max_pairs: Option<usize>,
    pub seed: u64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            max_pairs: Some(MAX_PAIRS),
            seed: 0,
        }
    }
}

impl DistanceConfig {
    pub fn exhaustive() -> Self {
        Self {
            max_pairs: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Intra(TrackId),
    Inter(TrackId, TrackId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSamples {
    pub values: Vec<f64>,
    pub kind: SampleKind,
    pub subsampled: bool,
    /// Pair count before subsampling.
    pub source_pair_count: usize,
}

impl DistanceSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn euclidean(f: &[f64], g: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn feature_distance(f: &FeatureVector, g: &FeatureVector) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(Error::validation(format!(
            "feature dimensions differ: {} vs {}",
            f.dim(),
            g.dim()
        )));
    }
    Ok(euclidean(f.values(), g.values()))
}

/// Features of the observed detections. Interpolated detections are skipped;
/// an observed detection without a feature is an error.
pub fn observed_features(t: &Trajectory) -> Result<Vec<&[f64]>> {
    t.detections()
        .iter()
        .filter(|d| !d.synthetic)
        .map(|d| {
            d.feature.as_ref().map(FeatureVector::values).ok_or_else(|| {
                Error::validation(format!(
                    "trajectory {} has no feature at frame {}",
                    t.id(),
                    d.frame
                ))
            })
        })
        .collect()
}

fn check_dims(a: &[&[f64]], b: &[&[f64]]) -> Result<()> {
    let dim = a.first().or(b.first()).map(|f| f.len());
    if let Some(n) = dim {
        if a.iter().chain(b).any(|f| f.len() != n) {
            return Err(Error::validation("feature dimension mismatch"));
        }
    }
    Ok(())
}

/// Picks which of `total` pair indices to evaluate, ascending.
fn pair_indices(total: usize, cfg: &DistanceConfig, stream: &[u64]) -> (Vec<usize>, bool) {
    match cfg.max_pairs {
        Some(cap) if total > cap => {
            let mut parts = vec![cfg.seed];
            parts.extend_from_slice(stream);
            let mut rng = seed::rng(&parts);
            let mut picked = index::sample(&mut rng, total, cap).into_vec();
            picked.sort_unstable();
            (picked, true)
        }
        _ => ((0..total).collect(), false),
    }
}

/// All unordered detection pairs within one trajectory.
pub fn intra_distances(t: &Trajectory, cfg: &DistanceConfig) -> Result<DistanceSamples> {
    let feats = observed_features(t)?;
    check_dims(&feats, &[])?;
    let m = feats.len();
    let total = m * m.saturating_sub(1) / 2;
    let (picked, subsampled) = pair_indices(total, cfg, &[INTRA_STREAM, t.id()]);

    // Row i holds pairs (i, i+1..m); its first linear index is i*m - i(i+1)/2.
    let mut values = Vec::with_capacity(picked.len());
    let mut row = 0usize;
    let mut row_start = 0usize;
    for k in picked {
        while k >= row_start + (m - 1 - row) {
            row_start += m - 1 - row;
            row += 1;
        }
        let col = row + 1 + (k - row_start);
        values.push(euclidean(feats[row], feats[col]));
    }
    Ok(DistanceSamples {
        values,
        kind: SampleKind::Intra(t.id()),
        subsampled,
        source_pair_count: total,
    })
}

/// All cross pairs between two trajectories. The result does not depend on
/// argument order.
pub fn inter_distances(a: &Trajectory, b: &Trajectory, cfg: &DistanceConfig) -> Result<DistanceSamples> {
    if a.id() == b.id() {
        return Err(Error::validation(format!(
            "inter distances need distinct trajectories, got id {} twice",
            a.id()
        )));
    }
    let (a, b) = if a.id() < b.id() { (a, b) } else { (b, a) };
    let fa = observed_features(a)?;
    let fb = observed_features(b)?;
    check_dims(&fa, &fb)?;
    let total = fa.len() * fb.len();
    let (picked, subsampled) = pair_indices(total, cfg, &[INTER_STREAM, a.id(), b.id()]);
    let values = picked
        .into_iter()
        .map(|k| euclidean(fa[k / fb.len()], fb[k % fb.len()]))
        .collect();
    Ok(DistanceSamples {
        values,
        kind: SampleKind::Inter(a.id(), b.id()),
        subsampled,
        source_pair_count: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trackmodel::testutil::traj;
    use crate::trackmodel::{BBox, Detection};
    use proptest::prelude::*;
    use rand::Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn random_features(seed: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(&[seed]);
        (0..count)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn distance_examples() {
        assert_eq!(feature_distance(&fv(&[0.3, 0.4]), &fv(&[0.3, 0.4])).unwrap(), 0.0);
        let d = feature_distance(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(feature_distance(&fv(&[1.0]), &fv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn distance_matches_sum_of_squares_128d() {
        let v = random_features(9, 2, 128);
        let ss: f64 = v[0].iter().zip(&v[1]).map(|(a, b)| (a - b).powi(2)).sum();
        let d = feature_distance(&fv(&v[0]), &fv(&v[1])).unwrap();
        assert!((d - ss.sqrt()).abs() <= 1e-12 * ss.sqrt());
    }

    #[test]
    fn intra_examples() {
        let s = intra_distances(&traj(0, &vec![vec![0.1, 0.2]; 3]), &DistanceConfig::default()).unwrap();
        assert_eq!(s.values, vec![0.0; 3]);
        let t = traj(0, &[vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert_eq!(intra_distances(&t, &DistanceConfig::default()).unwrap().values, vec![5.0]);
        let single = traj(0, &[vec![0.0]]);
        assert!(intra_distances(&single, &DistanceConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn intra_matches_double_loop() {
        let feats = random_features(1, 100, 16);
        let t = traj(4, &feats);
        let s = intra_distances(&t, &DistanceConfig::default()).unwrap();
        let mut oracle = Vec::new();
        for i in 0..100 {
            for j in i + 1..100 {
                let ss: f64 = feats[i].iter().zip(&feats[j]).map(|(a, b)| (a - b).powi(2)).sum();
                oracle.push(ss.sqrt());
            }
        }
        assert_eq!(s.len(), 4950);
        assert_eq!(s.source_pair_count, 4950);
        assert!(!s.subsampled);
        for (a, b) in sorted(s.values).iter().zip(sorted(oracle)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inter_matches_double_loop_and_is_symmetric() {
        let fa = random_features(2, 30, 8);
        let fb = random_features(3, 40, 8);
        let (a, b) = (traj(1, &fa), traj(2, &fb));
        let cfg = DistanceConfig::default();
        let ab = inter_distances(&a, &b, &cfg).unwrap();
        let ba = inter_distances(&b, &a, &cfg).unwrap();
        assert_eq!(ab.len(), 1200);
        assert_eq!(ab, ba);
        let mut oracle = Vec::new();
        for x in &fa {
            for y in &fb {
                oracle.push(x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt());
            }
        }
        for (p, q) in sorted(ab.values).iter().zip(sorted(oracle)) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn inter_examples() {
        let a = traj(1, &[vec![0.0, 0.0]]);
        let b = traj(2, &[vec![0.0, 2.0]]);
        assert_eq!(inter_distances(&a, &b, &DistanceConfig::default()).unwrap().values, vec![2.0]);
        let f = random_features(5, 4, 3);
        let s = inter_distances(&traj(1, &f), &traj(2, &f), &DistanceConfig::default()).unwrap();
        assert_eq!(s.values.iter().filter(|v| **v == 0.0).count(), 4);
        assert!(inter_distances(&a, &a, &DistanceConfig::default()).is_err());
    }

    #[test]
    fn subsampling_is_capped_and_deterministic() {
        let t = traj(8, &random_features(6, 200, 4));
        let cfg = DistanceConfig { max_pairs: Some(1000), seed: 11 };
        let s1 = intra_distances(&t, &cfg).unwrap();
        let s2 = intra_distances(&t, &cfg).unwrap();
        assert_eq!(s1.len(), 1000);
        assert!(s1.subsampled);
        assert_eq!(s1.source_pair_count, 19_900);
        assert_eq!(s1, s2);
        let other = intra_distances(&t, &DistanceConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(s1.values, other.values);
    }

    #[test]
    fn interpolated_detections_are_skipped_but_missing_features_rejected() {
        let mut dets = traj(0, &[vec![0.0], vec![1.0]]).into_detections();
        dets[1].frame = 3;
        dets.insert(1, Detection::interpolated(2, BBox::new(0.0, 0.0, 1.0, 1.0)));
        let t = Trajectory::new(0, dets.clone()).unwrap();
        assert_eq!(intra_distances(&t, &DistanceConfig::default()).unwrap().values, vec![1.0]);
        dets[1].synthetic = false;
        let t = Trajectory::new(0, dets).unwrap();
        assert!(intra_distances(&t, &DistanceConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn metric_axioms(seed in 0u64..10_000) {
            let v = random_features(seed, 3, 5);
            let (x, y, z) = (fv(&v[0]), fv(&v[1]), fv(&v[2]));
            let dxy = feature_distance(&x, &y).unwrap();
            let dyx = feature_distance(&y, &x).unwrap();
            let dyz = feature_distance(&y, &z).unwrap();
            let dxz = feature_distance(&x, &z).unwrap();
            prop_assert!(dxy >= 0.0);
            prop_assert_eq!(dxy, dyx);
            prop_assert!(dxz <= dxy + dyz + 1e-9);
        }

        #[test]
        fn intra_is_permutation_invariant(seed in 0u64..1000, len in 2usize..30) {
            let feats = random_features(seed, len, 3);
            let mut shuffled = feats.clone();
            shuffled.reverse();
            let cfg = DistanceConfig::exhaustive();
            let a = sorted(intra_distances(&traj(0, &feats), &cfg).unwrap().values);
            let b = sorted(intra_distances(&traj(0, &shuffled), &cfg).unwrap().values);
            prop_assert_eq!(a.len(), len * (len - 1) / 2);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
