//! MOTChallenge-style CSV reading and writing.
//!
//! Tracks: `frame,id,bb_left,bb_top,bb_width,bb_height,conf,-1,-1,-1`.
//! Features: `frame,id,f_1,...,f_N`.
//!
//! Interpolated detections are written with confidence 0 and no feature row.
//! On load, a track row without a feature row is accepted only in that form.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    BBox, Detection, DetectionStream, FeatureVector, Frame, GroundTruth, TrackId, TrackSet,
    Trajectory,
};
use crate::{Error, Result};

struct Row {
    line: usize,
    frame: Frame,
    id: i64,
    bbox: BBox,
    confidence: f64,
}

struct FeatureRow {
    line: usize,
    frame: Frame,
    id: i64,
    values: Vec<f64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what}: cannot parse {field:?}")))
}

fn parse_rows(path: &Path) -> Result<Vec<Row>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (line, cols) in lines(&text) {
        if !(7..=10).contains(&cols.len()) {
            return Err(parse_err(
                path,
                line,
                format!("expected 7 to 10 columns, found {}", cols.len()),
            ));
        }
        let frame = parse_num(path, line, cols[0], "frame")?;
        let id = parse_num(path, line, cols[1], "id")?;
        let mut b = [0.0f64; 5];
        for (k, v) in b.iter_mut().enumerate() {
            *v = parse_num(path, line, cols[2 + k], "box/confidence")?;
        }
        rows.push(Row {
            line,
            frame,
            id,
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
            confidence: b[4],
        });
    }
    Ok(rows)
}

fn parse_feature_rows(path: &Path) -> Result<Vec<FeatureRow>> {
    let text = read(path)?;
    let mut rows: Vec<FeatureRow> = Vec::new();
    for (line, cols) in lines(&text) {
        if cols.len() < 3 {
            return Err(parse_err(path, line, "feature row needs frame, id and >= 1 value"));
        }
        let frame = parse_num(path, line, cols[0], "frame")?;
        let id = parse_num(path, line, cols[1], "id")?;
        let values = cols[2..]
            .iter()
            .map(|c| parse_num(path, line, c, "feature"))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.values.len() != values.len() {
                return Err(Error::validation(format!(
                    "{}:{line}: feature dimension {} differs from {}",
                    path.display(),
                    values.len(),
                    first.values.len()
                )));
            }
        }
        rows.push(FeatureRow {
            line,
            frame,
            id,
            values,
        });
    }
    Ok(rows)
}

fn located(path: &Path, line: usize, e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::validation(format!("{}:{line}: {m}", path.display())),
        other => other,
    }
}

/// Reads a tracks file and, optionally, its feature file.
pub fn load_trackset(tracks_path: &Path, features_path: Option<&Path>) -> Result<TrackSet> {
    let rows = parse_rows(tracks_path)?;
    let mut features: HashMap<(Frame, i64), FeatureRow> = HashMap::new();
    if let Some(fp) = features_path {
        for r in parse_feature_rows(fp)? {
            let (key, line) = ((r.frame, r.id), r.line);
            if features.insert(key, r).is_some() {
                return Err(Error::validation(format!(
                    "{}:{line}: duplicate feature row for frame {} id {}",
                    fp.display(),
                    key.0,
                    key.1
                )));
            }
        }
    }

    let mut grouped: HashMap<TrackId, Vec<(usize, Detection)>> = HashMap::new();
    for r in rows {
        if r.id < 0 {
            return Err(parse_err(tracks_path, r.line, format!("negative track id {}", r.id)));
        }
        let mut d = Detection::new(r.frame, r.bbox, r.confidence);
        if let Some(fp) = features_path {
            match features.remove(&(r.frame, r.id)) {
                Some(f) => {
                    let fv = FeatureVector::new(f.values).map_err(|e| located(fp, f.line, e))?;
                    d = d.with_feature(fv);
                }
                None if r.confidence == 0.0 => d.synthetic = true,
                None => {
                    return Err(Error::validation(format!(
                        "{}:{}: no feature row for frame {} id {}",
                        tracks_path.display(),
                        r.line,
                        r.frame,
                        r.id
                    )))
                }
            }
        }
        d.validate().map_err(|e| located(tracks_path, r.line, e))?;
        grouped.entry(r.id as TrackId).or_default().push((r.line, d));
    }
    if let (Some(fp), Some(orphan)) = (features_path, features.values().min_by_key(|f| f.line)) {
        return Err(Error::validation(format!(
            "{}:{}: feature row for frame {} id {} has no track row",
            fp.display(),
            orphan.line,
            orphan.frame,
            orphan.id
        )));
    }

    let mut trajectories = Vec::with_capacity(grouped.len());
    for (id, mut dets) in grouped {
        dets.sort_by_key(|(_, d)| d.frame);
        if let Some(w) = dets.windows(2).find(|w| w[0].1.frame == w[1].1.frame) {
            return Err(Error::validation(format!(
                "{}:{}: duplicate detection for frame {} id {id}",
                tracks_path.display(),
                w[1].0,
                w[1].1.frame
            )));
        }
        trajectories.push(Trajectory::new(id, dets.into_iter().map(|(_, d)| d).collect())?);
    }
    TrackSet::new(trajectories)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    Ok(GroundTruth::new(load_trackset(path, None)?))
}

/// Reads a detections file (id column ignored, conventionally -1) with its
/// feature file. Feature rows are matched to detection rows by position.
pub fn load_detections(detections_path: &Path, features_path: &Path) -> Result<DetectionStream> {
    let rows = parse_rows(detections_path)?;
    let feats = parse_feature_rows(features_path)?;
    if rows.len() != feats.len() {
        return Err(Error::validation(format!(
            "{} has {} rows but {} has {}",
            detections_path.display(),
            rows.len(),
            features_path.display(),
            feats.len()
        )));
    }
    let mut dets = Vec::with_capacity(rows.len());
    for (r, f) in rows.into_iter().zip(feats) {
        if r.frame != f.frame {
            return Err(Error::validation(format!(
                "{}:{}: feature row frame {} does not match detection frame {}",
                features_path.display(),
                f.line,
                f.frame,
                r.frame
            )));
        }
        let fv = FeatureVector::new(f.values).map_err(|e| located(features_path, f.line, e))?;
        let d = Detection::new(r.frame, r.bbox, r.confidence).with_feature(fv);
        d.validate().map_err(|e| located(detections_path, r.line, e))?;
        dets.push(d);
    }
    DetectionStream::new(dets)
}

fn sorted_rows(ts: &TrackSet) -> Vec<(TrackId, &Detection)> {
    let mut rows: Vec<(TrackId, &Detection)> = ts
        .trajectories()
        .iter()
        .flat_map(|t| t.detections().iter().map(move |d| (t.id(), d)))
        .collect();
    rows.sort_by_key(|(id, d)| (d.frame, *id));
    rows
}

fn push_track_row(out: &mut String, frame: Frame, id: i64, d: &Detection) {
    let b = &d.bbox;
    let _ = writeln!(
        out,
        "{frame},{id},{},{},{},{},{},-1,-1,-1",
        b.left, b.top, b.width, b.height, d.confidence
    );
}

fn push_feature_row(out: &mut String, frame: Frame, id: i64, f: &FeatureVector) {
    let _ = write!(out, "{frame},{id}");
    for v in f.values() {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
}

/// Writes the tracks file. Values use shortest round-trip formatting, so
/// loading the file back reproduces the boxes exactly.
pub fn save_trackset(ts: &TrackSet, tracks_path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, d) in sorted_rows(ts) {
        push_track_row(&mut out, d.frame, id as i64, d);
    }
    write(tracks_path, &out)
}

/// Writes one feature row per observed detection; interpolated ones are skipped.
pub fn save_features(ts: &TrackSet, features_path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, d) in sorted_rows(ts) {
        if let Some(f) = &d.feature {
            push_feature_row(&mut out, d.frame, id as i64, f);
        }
    }
    write(features_path, &out)
}

pub fn save_detections(
    stream: &DetectionStream,
    detections_path: &Path,
    features_path: &Path,
) -> Result<()> {
    let mut dets = String::new();
    let mut feats = String::new();
    for (frame, list) in stream.frames() {
        for d in list {
            push_track_row(&mut dets, *frame, -1, d);
            if let Some(f) = &d.feature {
                push_feature_row(&mut feats, *frame, -1, f);
            }
        }
    }
    write(detections_path, &dets)?;
    write(features_path, &feats)
}
