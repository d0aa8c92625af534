//! The self quality evaluation (SQE) metric.
//!
//! Every trajectory is first screened as a possible false alarm (short and
//! with widely spread intra distances). Surviving trajectories get a
//! two-component mixture fit on their intra distances; a wide gap between the
//! component means (`dif`) signals that the trajectory follows more than one
//! target. Every pair of surviving trajectories is checked the same way on
//! inter distances (`sim`): a bimodal cross distribution means both follow a
//! shared target for part of their lifetime. The counts are combined as
//!
//! ```text
//! SQE = n·L / (n + k1·L + k2·(fp + dif + sim))
//! ```
//!
//! with `n` trajectories of mean length `L`.

use std::fmt::Write as _;

use crate::distance::{self, DistanceConfig, DistanceSamples};
use crate::exec::Exec;
use crate::gmm::{self, GmmFit, MIN_FIT_SAMPLES};
use crate::trackmodel::{mean_length, TrackId, TrackSet, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqeParams {
    /// Trajectories shorter than this (frames) may be false alarms.
    pub delta_l: f64,
    /// Intra-distance spread above which a short trajectory is a false alarm.
    pub delta_d: f64,
    /// Mixture mean gap above which a distance distribution counts as bimodal.
    pub delta_m: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SqeParams {
    fn default() -> Self {
        Self {
            delta_l: 15.0,
            delta_d: 0.2,
            delta_m: 0.3,
            k1: 1.0,
            k2: 2.0,
        }
    }
}

impl SqeParams {
    pub fn with_k2(self, k2: f64) -> Self {
        Self { k2, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.delta_l, self.delta_d, self.delta_m, self.k1, self.k2];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::validation(format!("SQE parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub distance: DistanceConfig,
    /// Only compare trajectories whose frame spans intersect.
    pub overlapping_pairs_only: bool,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: TrackId,
    pub length: usize,
    /// `None` when fewer than two observed detections (spread is unbounded).
    pub intra_std: Option<f64>,
    pub is_false_alarm: bool,
    pub intra_mean_gap: Option<f64>,
    pub flagged_dif: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict {
    pub ids: (TrackId, TrackId),
    pub mean_gap: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqeReport {
    pub n: usize,
    pub mean_length: f64,
    pub fp: usize,
    pub dif: usize,
    pub sim: usize,
    pub sqe: f64,
    pub verdicts: Vec<Verdict>,
    pub pairs_checked: usize,
    pub pair_flags: Vec<(TrackId, TrackId)>,
}

impl SqeReport {
    pub fn errors(&self) -> usize {
        self.fp + self.dif + self.sim
    }

    /// Key-value text report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "L = {}", self.mean_length);
        let _ = writeln!(out, "fp = {}", self.fp);
        let _ = writeln!(out, "dif = {}", self.dif);
        let _ = writeln!(out, "sim = {}", self.sim);
        let _ = writeln!(out, "sqe = {}", self.sqe);
        let _ = writeln!(out, "pairs_checked = {}", self.pairs_checked);
        let flags: Vec<String> = self.pair_flags.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let _ = writeln!(out, "sim_pairs = {}", flags.join(" "));
        out
    }

    /// One CSV row per trajectory.
    pub fn verdicts_csv(&self) -> String {
        let mut out = String::from("id,length,intra_std,is_false_alarm,intra_mean_gap,flagged_dif\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                v.id,
                v.length,
                opt(v.intra_std),
                v.is_false_alarm as u8,
                opt(v.intra_mean_gap),
                v.flagged_dif as u8
            );
        }
        out
    }
}

/// The SQE formula on already-counted quantities. Zero when `n` or `L` is zero.
pub fn sqe_value(n: usize, mean_length: f64, errors: usize, k1: f64, k2: f64) -> f64 {
    if n == 0 || mean_length == 0.0 {
        return 0.0;
    }
    let n = n as f64;
    n * mean_length / (n + k1 * mean_length + k2 * errors as f64)
}

fn bimodal_gap(samples: &DistanceSamples) -> Result<Option<f64>> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Ok(None);
    }
    Ok(Some(gmm::fit_gmm2(&samples.values)?.mean_gap()))
}

/// False-alarm screen, then the intra-distance bimodality check.
pub fn classify_trajectory(t: &Trajectory, p: &SqeParams, opts: &EvalOptions) -> Result<Verdict> {
    let samples = distance::intra_distances(t, &opts.distance)?;
    let intra_std = match samples.is_empty() {
        true => None,
        false => Some(gmm::sample_stats(&samples.values)?.std),
    };
    let spread = intra_std.unwrap_or(f64::INFINITY);
    let length = t.len();
    let is_false_alarm = (length as f64) < p.delta_l && spread > p.delta_d;
    let intra_mean_gap = match is_false_alarm {
        true => None,
        false => bimodal_gap(&samples)?,
    };
    Ok(Verdict {
        id: t.id(),
        length,
        intra_std,
        is_false_alarm,
        intra_mean_gap,
        flagged_dif: intra_mean_gap.is_some_and(|g| g > p.delta_m),
    })
}

/// Inter-distance bimodality check for two non-false-alarm trajectories.
pub fn classify_pair(a: &Trajectory, b: &Trajectory, p: &SqeParams, opts: &EvalOptions) -> Result<PairVerdict> {
    let samples = distance::inter_distances(a, b, &opts.distance)?;
    let mean_gap = bimodal_gap(&samples)?;
    Ok(PairVerdict {
        ids: (a.id().min(b.id()), a.id().max(b.id())),
        mean_gap,
        flagged: mean_gap.is_some_and(|g| g > p.delta_m),
    })
}

pub fn evaluate(ts: &TrackSet, p: &SqeParams, opts: &EvalOptions) -> Result<SqeReport> {
    p.validate()?;
    if ts.is_empty() {
        return Ok(SqeReport {
            n: 0,
            mean_length: 0.0,
            fp: 0,
            dif: 0,
            sim: 0,
            sqe: 0.0,
            verdicts: Vec::new(),
            pairs_checked: 0,
            pair_flags: Vec::new(),
        });
    }
    let tracks = ts.trajectories();
    let n = tracks.len();
    let mean_len = mean_length(ts)?;

    let verdicts = opts
        .exec
        .map(tracks, |t| classify_trajectory(t, p, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let fp = verdicts.iter().filter(|v| v.is_false_alarm).count();
    let dif = verdicts.iter().filter(|v| v.flagged_dif).count();

    let kept: Vec<&Trajectory> = tracks
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| !v.is_false_alarm)
        .map(|(t, _)| t)
        .collect();
    let mut pairs = Vec::new();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            if !opts.overlapping_pairs_only || kept[i].overlaps_in_time(kept[j]) {
                pairs.push((kept[i], kept[j]));
            }
        }
    }
    let pair_verdicts = opts
        .exec
        .map(&pairs, |(a, b)| classify_pair(a, b, p, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let pair_flags: Vec<(TrackId, TrackId)> = pair_verdicts
        .iter()
        .filter(|v| v.flagged)
        .map(|v| v.ids)
        .collect();
    let sim = pair_flags.len();

    Ok(SqeReport {
        n,
        mean_length: mean_len,
        fp,
        dif,
        sim,
        sqe: sqe_value(n, mean_len, fp + dif + sim, p.k1, p.k2),
        verdicts,
        pairs_checked: pairs.len(),
        pair_flags,
    })
}

/// Frames attributed to each of the two identities inside a switched
/// trajectory. `idtp = n1 >= n2 = idfp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorEstimate {
    pub n1: usize,
    pub n2: usize,
    pub idtp: usize,
    pub idfp: usize,
}

/// Solves `n1 + n2 = length`, `n1 · n2 = cross_pairs` in integers, taking the
/// split whose product is closest to `cross_pairs` (ties: more balanced).
pub fn split_from_pair_count(length: usize, cross_pairs: usize) -> Result<ErrorEstimate> {
    let l = length as f64;
    let disc = l * l - 4.0 * cross_pairs as f64;
    if disc < 0.0 {
        return Err(Error::EstimationInfeasible {
            length,
            pairs: cross_pairs,
        });
    }
    let root = (l + disc.sqrt()) / 2.0;
    let candidates = [root.floor(), root.ceil()]
        .map(|c| (c.max(0.0) as usize).min(length))
        .map(|n1| n1.max(length - n1));
    let n1 = candidates
        .into_iter()
        .min_by_key(|&n1| ((n1 * (length - n1)).abs_diff(cross_pairs), n1))
        .expect("two candidates");
    let n2 = length - n1;
    Ok(ErrorEstimate {
        n1,
        n2,
        idtp: n1,
        idfp: n2,
    })
}

/// Estimates how many frames of a switched trajectory belong to each identity
/// from the size of the upper intra-distance cluster. Uses every pair.
pub fn estimate_errors(t: &Trajectory, fit: &GmmFit) -> Result<ErrorEstimate> {
    let samples = distance::intra_distances(t, &DistanceConfig::exhaustive())?;
    let observed = distance::observed_features(t)?.len();
    split_from_pair_count(observed, fit.upper_count(&samples.values))
}
