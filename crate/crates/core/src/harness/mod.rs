//! Parameter sweeps, alternating two-parameter tuning driven by SQE, and
//! the comparison against supervised metrics.

mod config;

pub use config::Settings;

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::quality::{evaluate, SqeReport};
use crate::refmetrics::{clear_mot, id_metrics};
use crate::seed;
use crate::tracker::{track, TrackerConfig};
use crate::trackmodel::{DetectionStream, GroundTruth};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameter {
    Reid,
    Merge,
}

impl Parameter {
    fn set(self, cfg: &TrackerConfig, value: f64) -> TrackerConfig {
        match self {
            Parameter::Reid => TrackerConfig {
                reid_threshold: value,
                ..*cfg
            },
            Parameter::Merge => TrackerConfig {
                merge_threshold: value,
                ..*cfg
            },
        }
    }

    fn k2(self, s: &Settings) -> f64 {
        match self {
            Parameter::Reid => s.k2_reid,
            Parameter::Merge => s.k2_merge,
        }
    }
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::Reid => "reid",
            Parameter::Merge => "merge",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reid" => Ok(Parameter::Reid),
            "merge" => Ok(Parameter::Merge),
            other => Err(Error::validation(format!("unknown parameter {other:?}; expected reid or merge"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub parameter: Parameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(parameter: Parameter, start: f64, stop: f64, step: f64) -> Result<Self> {
        let g = Self {
            parameter,
            start,
            stop,
            step,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn reid_default() -> Self {
        Self {
            parameter: Parameter::Reid,
            start: 0.3,
            stop: 1.6,
            step: 0.05,
        }
    }

    pub fn merge_default() -> Self {
        Self {
            parameter: Parameter::Merge,
            start: 0.5,
            stop: 1.5,
            step: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.start.is_finite() && self.stop.is_finite() && self.step.is_finite();
        if !finite || self.start >= self.stop || self.step <= 0.0 || self.start <= 0.0 {
            return Err(Error::validation(format!(
                "grid needs 0 < start < stop and step > 0, got {}..{} step {}",
                self.start, self.stop, self.step
            )));
        }
        Ok(())
    }

    /// `start + i * step` up to `stop`, rounded to 1e-9 so values print and
    /// compare cleanly.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.values().iter().any(|x| (x - v).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub sqe: f64,
    pub n: usize,
    pub mean_length: f64,
    pub fp: usize,
    pub dif: usize,
    pub sim: usize,
    pub idf1: Option<f64>,
    pub mota: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: Parameter,
    pub rows: Vec<SweepRow>,
    pub argmax_sqe: f64,
    pub argmax_idf1: Option<f64>,
}

/// First value attaining the maximum, so ties go to the smaller value.
fn argmax(rows: &[SweepRow], key: impl Fn(&SweepRow) -> f64) -> f64 {
    let mut best = &rows[0];
    for r in &rows[1..] {
        if key(r) > key(best) {
            best = r;
        }
    }
    best.value
}

impl SweepResult {
    fn from_rows(parameter: Parameter, rows: Vec<SweepRow>) -> Self {
        let argmax_sqe = argmax(&rows, |r| r.sqe);
        let argmax_idf1 = rows
            .iter()
            .all(|r| r.idf1.is_some())
            .then(|| argmax(&rows, |r| r.idf1.unwrap_or(f64::NEG_INFINITY)));
        Self {
            parameter,
            rows,
            argmax_sqe,
            argmax_idf1,
        }
    }

    pub fn row(&self, value: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| (r.value - value).abs() < 1e-9)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},sqe,n,L,fp,dif,sim,IDF1,MOTA\n", self.parameter);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{},{:.4},{},{},{},{},{}",
                r.value,
                r.sqe,
                r.n,
                r.mean_length,
                r.fp,
                r.dif,
                r.sim,
                opt(r.idf1),
                opt(r.mota)
            );
        }
        out
    }
}

/// Tracks and scores one configuration on the stream as given. Distance
/// sampling is seeded by the global seed and the parameter value.
pub fn score_config(
    stream: &DetectionStream,
    cfg: &TrackerConfig,
    k2: f64,
    value: f64,
    settings: &Settings,
    gt: Option<&GroundTruth>,
) -> Result<(SqeReport, Option<f64>, Option<f64>)> {
    let tracks = track(stream, cfg)?;
    let opts = settings.eval_options(seed::mix(&[settings.seed, value.to_bits()]));
    let report = evaluate(&tracks, &settings.sqe.with_k2(k2), &opts)?;
    let (idf1, mota) = match gt {
        Some(gt) => (
            Some(id_metrics(gt, &tracks, settings.iou_threshold)?.idf1),
            Some(clear_mot(gt, &tracks, settings.iou_threshold)?.mota),
        ),
        None => (None, None),
    };
    Ok((report, idf1, mota))
}

pub fn sweep(
    stream: &DetectionStream,
    grid: &GridSpec,
    fixed: &TrackerConfig,
    settings: &Settings,
    gt: Option<&GroundTruth>,
) -> Result<SweepResult> {
    grid.validate()?;
    let normalized;
    let stream = match settings.normalize {
        true => {
            normalized = stream.l2_normalized();
            &normalized
        }
        false => stream,
    };
    let values = grid.values();
    let k2 = grid.parameter.k2(settings);
    let rows = settings.exec.map(&values, |&v| {
        let cfg = grid.parameter.set(fixed, v);
        let (report, idf1, mota) = score_config(stream, &cfg, k2, v, settings, gt).map_err(|e| Error::SweepPoint {
            parameter: grid.parameter.name(),
            value: v,
            source: Box::new(e),
        })?;
        Ok(SweepRow {
            value: v,
            sqe: report.sqe,
            n: report.n,
            mean_length: report.mean_length,
            fp: report.fp,
            dif: report.dif,
            sim: report.sim,
            idf1,
            mota,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::from_rows(grid.parameter, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub baseline: TrackerConfig,
    pub customized: TrackerConfig,
    /// Every sweep run, in order: reid then merge, per round.
    pub sweeps: Vec<SweepResult>,
}

impl TuneOutcome {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline_reid = {}", self.baseline.reid_threshold);
        let _ = writeln!(out, "baseline_merge = {}", self.baseline.merge_threshold);
        let _ = writeln!(out, "customized_reid = {}", self.customized.reid_threshold);
        let _ = writeln!(out, "customized_merge = {}", self.customized.merge_threshold);
        for (i, s) in self.sweeps.iter().enumerate() {
            let _ = writeln!(out, "sweep_{i}_{} = {}", s.parameter, s.argmax_sqe);
        }
        out
    }
}

/// Alternately sweeps the reid threshold with merge fixed and the merge
/// threshold with reid fixed, adopting the SQE argmax each time.
pub fn tune_alternating(
    stream: &DetectionStream,
    baseline: &TrackerConfig,
    grids: (&GridSpec, &GridSpec),
    settings: &Settings,
    rounds: usize,
    gt: Option<&GroundTruth>,
) -> Result<TuneOutcome> {
    if rounds == 0 {
        return Err(Error::validation("rounds must be at least 1"));
    }
    if grids.0.parameter != Parameter::Reid || grids.1.parameter != Parameter::Merge {
        return Err(Error::validation("tuning grids must be (reid, merge)"));
    }
    let mut current = *baseline;
    let mut sweeps = Vec::with_capacity(2 * rounds);
    for _ in 0..rounds {
        for grid in [grids.0, grids.1] {
            let s = sweep(stream, grid, &current, settings, gt)?;
            current = grid.parameter.set(&current, s.argmax_sqe);
            sweeps.push(s);
        }
    }
    Ok(TuneOutcome {
        baseline: *baseline,
        customized: current,
        sweeps,
    })
}

/// Average ranks, 1-based.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with tie-averaged ranks. `NaN` when either side
/// is constant or the inputs are shorter than two.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    if x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

pub const PARAM_TOLERANCE: f64 = 0.25;
pub const IDF1_POINT_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub name: String,
    pub parameter: Parameter,
    pub argmax_sqe: f64,
    pub argmax_idf1: f64,
    pub delta_param: f64,
    /// IDF1 points (percent) lost by taking the SQE optimum.
    pub delta_idf1: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSummary {
    pub rows: Vec<CorrelationRow>,
    pub frac_param_within: f64,
    pub frac_idf1_within: f64,
}

impl CorrelationSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence,parameter,argmax_sqe,argmax_idf1,delta_param,delta_idf1,spearman\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{:.4},{:.4}",
                r.name, r.parameter, r.argmax_sqe, r.argmax_idf1, r.delta_param, r.delta_idf1, r.rho
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sweeps = {}", self.rows.len());
        let _ = writeln!(out, "frac_delta_param_le_{PARAM_TOLERANCE} = {:.4}", self.frac_param_within);
        let _ = writeln!(out, "frac_delta_idf1_le_{IDF1_POINT_TOLERANCE} = {:.4}", self.frac_idf1_within);
        out
    }
}

pub fn correlation_summary(sweeps: &[(String, SweepResult)]) -> Result<CorrelationSummary> {
    if sweeps.is_empty() {
        return Err(Error::validation("correlation report needs at least one sweep"));
    }
    let mut rows = Vec::with_capacity(sweeps.len());
    for (name, s) in sweeps {
        let missing = || Error::validation(format!("sweep {name} has no IDF1 column"));
        let argmax_idf1 = s.argmax_idf1.ok_or_else(missing)?;
        let idf1_at = |v: f64| s.row(v).and_then(|r| r.idf1).ok_or_else(missing);
        let delta_idf1 = 100.0 * (idf1_at(argmax_idf1)? - idf1_at(s.argmax_sqe)?);
        let sqe: Vec<f64> = s.rows.iter().map(|r| r.sqe).collect();
        let idf1: Vec<f64> = s.rows.iter().map(|r| r.idf1.unwrap_or(f64::NAN)).collect();
        rows.push(CorrelationRow {
            name: name.clone(),
            parameter: s.parameter,
            argmax_sqe: s.argmax_sqe,
            argmax_idf1,
            delta_param: (s.argmax_sqe - argmax_idf1).abs(),
            delta_idf1,
            rho: spearman(&sqe, &idf1),
        });
    }
    let n = rows.len() as f64;
    let frac = |f: &dyn Fn(&CorrelationRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
    let frac_param_within = frac(&|r| r.delta_param <= PARAM_TOLERANCE + 1e-9);
    let frac_idf1_within = frac(&|r| r.delta_idf1 <= IDF1_POINT_TOLERANCE + 1e-9);
    Ok(CorrelationSummary {
        rows,
        frac_param_within,
        frac_idf1_within,
    })
}

/// Writes `<out>.csv`-style table to `out_path` and the summary next to it
/// with a `.txt` extension.
pub fn correlation_report(sweeps: &[(String, SweepResult)], out_path: &Path) -> Result<CorrelationSummary> {
    let summary = correlation_summary(sweeps)?;
    std::fs::write(out_path, summary.to_csv()).map_err(|e| Error::io(out_path, e))?;
    let txt = out_path.with_extension("txt");
    std::fs::write(&txt, summary.to_text()).map_err(|e| Error::io(&txt, e))?;
    Ok(summary)
}
