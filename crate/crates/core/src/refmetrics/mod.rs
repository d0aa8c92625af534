//! Supervised reference metrics: CLEAR MOT (MOTA, MOTP) and identity
//! metrics (IDP, IDR, IDF1).

mod assignment;

pub use assignment::{solve_assignment, AssignmentProblem};

use std::collections::{BTreeMap, HashMap};

use crate::trackmodel::{BBox, Frame, GroundTruth, TrackId, TrackSet};
use crate::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClearCounts {
    pub fn_total: usize,
    pub fp_total: usize,
    pub ids_total: usize,
    pub gt_total: usize,
    pub matched_distance_sum: f64,
    pub matched_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearReport {
    pub counts: ClearCounts,
    pub mota: f64,
    pub motp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdCounts {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdReport {
    pub counts: IdCounts,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
}

/// MOTA from summed error counts.
pub fn mota(fn_total: usize, fp_total: usize, ids_total: usize, gt_total: usize) -> Result<f64> {
    if gt_total == 0 {
        return Err(Error::UndefinedInput("MOTA needs at least one ground-truth box"));
    }
    Ok(1.0 - (fn_total + fp_total + ids_total) as f64 / gt_total as f64)
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("iou threshold must lie in (0, 1), got {t}")))
    }
}

type FrameBoxes = BTreeMap<Frame, Vec<(TrackId, BBox)>>;

fn by_frame(ts: &TrackSet) -> FrameBoxes {
    let mut out: FrameBoxes = BTreeMap::new();
    for t in ts.trajectories() {
        for d in t.detections() {
            out.entry(d.frame).or_default().push((t.id(), d.bbox));
        }
    }
    out
}

pub fn clear_mot(gt: &GroundTruth, hyp: &TrackSet, iou_threshold: f64) -> Result<ClearReport> {
    check_threshold(iou_threshold)?;
    let gt_frames = by_frame(gt.tracks());
    let hyp_frames = by_frame(hyp);
    let mut counts = ClearCounts {
        gt_total: gt.tracks().total_detections(),
        ..Default::default()
    };
    if counts.gt_total == 0 {
        if hyp.total_detections() == 0 {
            return Ok(ClearReport {
                counts,
                mota: 1.0,
                motp: 0.0,
            });
        }
        return Err(Error::UndefinedInput("MOTA is undefined for empty ground truth"));
    }

    let mut frames: Vec<Frame> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();
    let empty = Vec::new();
    let mut last: HashMap<TrackId, TrackId> = HashMap::new();
    for f in frames {
        let g = gt_frames.get(&f).unwrap_or(&empty);
        let h = hyp_frames.get(&f).unwrap_or(&empty);
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        let mut matches: Vec<(usize, usize, f64)> = Vec::new();

        for (gi, (gid, gbox)) in g.iter().enumerate() {
            let Some(prev) = last.get(gid) else { continue };
            if let Some(hi) = h.iter().position(|(hid, _)| hid == prev) {
                let iou = gbox.iou(&h[hi].1);
                if !h_used[hi] && iou >= iou_threshold {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    matches.push((gi, hi, iou));
                }
            }
        }

        let g_rest: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let h_rest: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        let mut p = AssignmentProblem::forbidden(g_rest.len(), h_rest.len());
        for (a, &gi) in g_rest.iter().enumerate() {
            for (b, &hi) in h_rest.iter().enumerate() {
                let iou = g[gi].1.iou(&h[hi].1);
                if iou >= iou_threshold {
                    p.set(a, b, 1.0 - iou);
                }
            }
        }
        for (a, b) in solve_assignment(&p) {
            let (gi, hi) = (g_rest[a], h_rest[b]);
            let (gid, hid) = (g[gi].0, h[hi].0);
            if last.get(&gid).is_some_and(|&prev| prev != hid) {
                counts.ids_total += 1;
            }
            last.insert(gid, hid);
            matches.push((gi, hi, g[gi].1.iou(&h[hi].1)));
        }

        counts.fn_total += g.len() - matches.len();
        counts.fp_total += h.len() - matches.len();
        counts.matched_count += matches.len();
        counts.matched_distance_sum += matches.iter().map(|m| 1.0 - m.2).sum::<f64>();
    }

    let mota = mota(counts.fn_total, counts.fp_total, counts.ids_total, counts.gt_total)?;
    let motp = match counts.matched_count {
        0 => 0.0,
        c => counts.matched_distance_sum / c as f64,
    };
    Ok(ClearReport { counts, mota, motp })
}

/// Frames on which each (gt, hyp) pair overlaps at the threshold.
fn overlap_counts(gt: &TrackSet, hyp: &TrackSet, iou_threshold: f64) -> Vec<Vec<usize>> {
    let mut gt_frames: HashMap<Frame, Vec<(usize, BBox)>> = HashMap::new();
    for (gi, t) in gt.trajectories().iter().enumerate() {
        for d in t.detections() {
            gt_frames.entry(d.frame).or_default().push((gi, d.bbox));
        }
    }
    let mut m = vec![vec![0usize; hyp.len()]; gt.len()];
    for (hi, t) in hyp.trajectories().iter().enumerate() {
        for d in t.detections() {
            for (gi, b) in gt_frames.get(&d.frame).into_iter().flatten() {
                if b.iou(&d.bbox) >= iou_threshold {
                    m[*gi][hi] += 1;
                }
            }
        }
    }
    m
}

/// Identity metrics from a global one-to-one matching of ground-truth and
/// hypothesis trajectories that maximizes the number of co-identified boxes.
///
/// A pair's cost in the padded truth-to-result formulation is
/// `len(g) + len(h) - 2 * overlap(g, h)`, and an unmatched trajectory costs
/// its full length, so minimizing total cost is the same as maximizing the
/// summed overlap. The solver works on that reduced form.
pub fn id_metrics(gt: &GroundTruth, hyp: &TrackSet, iou_threshold: f64) -> Result<IdReport> {
    check_threshold(iou_threshold)?;
    let gt = gt.tracks();
    let gt_total = gt.total_detections();
    let hyp_total = hyp.total_detections();
    if gt_total == 0 && hyp_total == 0 {
        return Ok(IdReport {
            counts: IdCounts::default(),
            idf1: 1.0,
            idp: 1.0,
            idr: 1.0,
        });
    }
    let overlap = overlap_counts(gt, hyp, iou_threshold);
    let rows: Vec<usize> = (0..gt.len()).filter(|&g| overlap[g].iter().any(|&x| x > 0)).collect();
    let cols: Vec<usize> = (0..hyp.len()).filter(|&h| rows.iter().any(|&g| overlap[g][h] > 0)).collect();
    let mut p = AssignmentProblem::new(rows.len(), cols.len(), 0.0);
    for (a, &g) in rows.iter().enumerate() {
        for (b, &h) in cols.iter().enumerate() {
            p.set(a, b, -(overlap[g][h] as f64));
        }
    }
    let idtp: usize = assignment::solve_any(&p)
        .into_iter()
        .map(|(a, b)| overlap[rows[a]][cols[b]])
        .sum();
    let counts = IdCounts {
        idtp,
        idfp: hyp_total - idtp,
        idfn: gt_total - idtp,
    };
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(IdReport {
        counts,
        idf1: ratio(2 * idtp, 2 * idtp + counts.idfp + counts.idfn),
        idp: ratio(idtp, idtp + counts.idfp),
        idr: ratio(idtp, idtp + counts.idfn),
    })
}

pub const METRICS_CSV_HEADER: &str = "sequence,IDF1,IDP,IDR,MOTA,MOTP,FN,FP,IDS";

pub fn metrics_csv_row(sequence: &str, id: &IdReport, clear: &ClearReport) -> String {
    format!(
        "{sequence},{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{}",
        id.idf1,
        id.idp,
        id.idr,
        clear.mota,
        clear.motp,
        clear.counts.fn_total,
        clear.counts.fp_total,
        clear.counts.ids_total
    )
}
