use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sqe::harness::{sweep, tune_alternating, GridSpec, Parameter, Settings};
use sqe::quality::evaluate;
use sqe::refmetrics::{clear_mot, id_metrics, metrics_csv_row, METRICS_CSV_HEADER};
use sqe::synth::{chi_check_inter, chi_check_intra, generate, ChiCheckResult, ScenarioRecipe};
use sqe::tracker::{track, TrackerConfig};
use sqe::trackmodel::{
    load_detections, load_ground_truth, load_trackset, save_detections, save_features, save_trackset, GroundTruth,
};
use sqe::{Error, Result};

#[derive(Parser)]
#[command(name = "sqe", version, about = "Ground-truth-free tracking quality evaluation")]
struct Cli {
    /// Seed for distance subsampling and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML settings file with [sqe], [tracker] and [distance] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    features: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the reference tracker.
    Track {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, allow_negative_numbers = true)]
        reid: f64,
        #[arg(long, allow_negative_numbers = true)]
        merge: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the feature file of the output tracks.
        #[arg(long)]
        out_features: Option<PathBuf>,
    },
    /// Score a track set without ground truth.
    Sqe {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Per-trajectory verdicts CSV.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        /// Error weight; defaults to the reid setting.
        #[arg(long, allow_negative_numbers = true)]
        k2: Option<f64>,
    },
    /// Supervised metrics against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        iou: f64,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "seq")]
        sequence: String,
    },
    /// Grid sweep of one tracker parameter.
    Sweep {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long)]
        param: Parameter,
        #[arg(long, allow_negative_numbers = true)]
        start: f64,
        #[arg(long, allow_negative_numbers = true)]
        stop: f64,
        #[arg(long, allow_negative_numbers = true)]
        step: f64,
        /// Value of the parameter held fixed.
        #[arg(long, allow_negative_numbers = true)]
        reid: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        merge: Option<f64>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Alternating SQE-driven tuning of both parameters.
    Tune {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, allow_negative_numbers = true)]
        baseline_reid: f64,
        #[arg(long, allow_negative_numbers = true)]
        baseline_merge: f64,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic sequence from a recipe.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check distance statistics of a recipe against the chi distribution.
    Chicheck {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        report: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn tracker_config(settings: &Settings, reid: f64, merge: f64) -> TrackerConfig {
    TrackerConfig {
        reid_threshold: reid,
        merge_threshold: merge,
        max_gap: settings.max_gap,
    }
}

fn load_gt(path: Option<&PathBuf>) -> Result<Option<GroundTruth>> {
    path.map(|p| load_ground_truth(p)).transpose()
}

fn load_recipe(path: &Path, seed: Option<u64>) -> Result<ScenarioRecipe> {
    let mut r = ScenarioRecipe::load(path)?;
    if let Some(s) = seed {
        r.seed = s;
    }
    Ok(r)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Validation("--threads must be positive".into()));
        }
        sqe::exec::set_threads(t)?;
    }
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    settings.seed = cli.seed.unwrap_or(0);

    match cli.command {
        Command::Track { stream, reid, merge, out, out_features } => {
            let mut s = load_detections(&stream.detections, &stream.features)?;
            if settings.normalize {
                s = s.l2_normalized();
            }
            let ts = track(&s, &tracker_config(&settings, reid, merge))?;
            save_trackset(&ts, &out)?;
            if let Some(f) = out_features {
                save_features(&ts, &f)?;
            }
        }
        Command::Sqe { tracks, features, report, verdicts, k2 } => {
            let mut ts = load_trackset(&tracks, Some(&features))?;
            if settings.normalize {
                ts = ts.l2_normalized();
            }
            let p = settings.sqe.with_k2(k2.unwrap_or(settings.k2_reid));
            let r = evaluate(&ts, &p, &settings.eval_options(settings.seed))?;
            write(&report, &r.to_text())?;
            if let Some(v) = verdicts {
                write(&v, &r.verdicts_csv())?;
            }
        }
        Command::Eval { tracks, gt, iou, report, sequence } => {
            let ts = load_trackset(&tracks, None)?;
            let gt = load_ground_truth(&gt)?;
            let id = id_metrics(&gt, &ts, iou)?;
            let clear = clear_mot(&gt, &ts, iou)?;
            write(&report, &format!("{METRICS_CSV_HEADER}\n{}\n", metrics_csv_row(&sequence, &id, &clear)))?;
        }
        Command::Sweep { stream, param, start, stop, step, reid, merge, gt, out } => {
            let s = load_detections(&stream.detections, &stream.features)?;
            let gt = load_gt(gt.as_ref())?;
            let d = TrackerConfig::default();
            let fixed = tracker_config(
                &settings,
                reid.unwrap_or(d.reid_threshold),
                merge.unwrap_or(d.merge_threshold),
            );
            let grid = GridSpec::new(param, start, stop, step)?;
            let result = sweep(&s, &grid, &fixed, &settings, gt.as_ref())?;
            write(&out, &result.to_csv())?;
        }
        Command::Tune { stream, baseline_reid, baseline_merge, rounds, gt, out } => {
            let s = load_detections(&stream.detections, &stream.features)?;
            let gt = load_gt(gt.as_ref())?;
            let base = tracker_config(&settings, baseline_reid, baseline_merge);
            let grids = (GridSpec::reid_default(), GridSpec::merge_default());
            let outcome = tune_alternating(&s, &base, (&grids.0, &grids.1), &settings, rounds, gt.as_ref())?;
            let mut text = outcome.to_text();
            if let Some(gt) = &gt {
                let s = if settings.normalize { s.l2_normalized() } else { s };
                for (name, cfg) in [("baseline", &outcome.baseline), ("customized", &outcome.customized)] {
                    let idf1 = id_metrics(gt, &track(&s, cfg)?, settings.iou_threshold)?.idf1;
                    let _ = writeln!(text, "{name}_idf1 = {idf1}");
                }
            }
            write(&out, &text)?;
        }
        Command::Synth { scenario, out_dir } => {
            let g = generate(&load_recipe(&scenario, cli.seed)?.build()?)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            save_trackset(g.ground_truth.tracks(), &out_dir.join("gt.txt"))?;
            save_detections(&g.detections, &out_dir.join("det.txt"), &out_dir.join("det_features.txt"))?;
            save_trackset(&g.hypothesis, &out_dir.join("hyp.txt"))?;
            save_features(&g.hypothesis, &out_dir.join("hyp_features.txt"))?;
        }
        Command::Chicheck { scenario, samples, report } => {
            let recipe = load_recipe(&scenario, cli.seed)?;
            let sc = recipe.build()?;
            let mut out = String::from("check,targets,ks_statistic,p_value,samples,dof\n");
            let mut line = |check: &str, targets: String, r: ChiCheckResult| {
                let _ = writeln!(
                    out,
                    "{check},{targets},{:.6},{:.6},{},{}",
                    r.ks_statistic, r.p_value, r.sample_count, r.dof
                );
            };
            for (k, t) in sc.targets.iter().enumerate() {
                let r = chi_check_intra(t, None, samples, sqe::seed::mix(&[recipe.seed, k as u64]))?;
                line("intra", format!("{}", k + 1), r);
            }
            for (k, pair) in sc.targets.windows(2).enumerate() {
                let seed = sqe::seed::mix(&[recipe.seed, 1 << 32, k as u64]);
                let r = chi_check_inter(&pair[0], &pair[1], true, samples, seed)?;
                line("inter", format!("{}:{}", k + 1, k + 2), r);
                let r = chi_check_inter(&pair[0], &pair[1], false, samples, seed)?;
                line("inter_unshifted", format!("{}:{}", k + 1, k + 2), r);
            }
            write(&report, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: kind=usage message={first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} message={msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
