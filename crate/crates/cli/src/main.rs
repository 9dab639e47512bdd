use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use metrack_cli::config::{parse_box, TrackOptions};
use metrack_cli::io::{list_frames, load_frame, read_ground_truth, read_results, write_curves, write_results};
use metrack_cli::run::{evaluate, track, BenchReport};
use metrack_cli::synth::{self, SynthSpec};

#[derive(Parser)]
#[command(name = "metrack", version, about = "Particle-filter tracking with metric-weighted linear representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track an object through a frame directory and write results.csv.
    Track {
        #[command(flatten)]
        opts: TrackOptions,
        /// Results file.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Optional per-frame `frame,cle,vor` curves (needs --gt).
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Generate a synthetic sequence (PGM frames plus gt.txt).
    Synth {
        #[command(flatten)]
        spec: SynthArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from results.csv and ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Time each tracking phase. Without --frames a standard synthetic
    /// sequence is generated in memory.
    Bench {
        #[command(flatten)]
        opts: TrackOptions,
        /// Frames of the generated sequence when --frames is absent.
        #[arg(long, default_value_t = 60)]
        length: usize,
    },
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 240)]
    width: usize,
    #[arg(long, default_value_t = 180)]
    height: usize,
    #[arg(long, default_value_t = 200)]
    length: usize,
    #[arg(long, default_value_t = 40.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 100.0)]
    period: f64,
    #[arg(long, default_value_t = 0.002)]
    drift: f64,
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    clutter: f64,
    /// Occluded frame range `t0,t1`.
    #[arg(long)]
    occluder: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SynthArgs {
    fn spec(&self) -> anyhow::Result<SynthSpec> {
        let occluder = match &self.occluder {
            None => None,
            Some(s) => {
                let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("occluder must be t0,t1"))?;
                Some((a.trim().parse()?, b.trim().parse()?))
            }
        };
        Ok(SynthSpec {
            width: self.width,
            height: self.height,
            length: self.length,
            amplitude: self.amplitude,
            period: self.period,
            drift: self.drift,
            noise: self.noise,
            clutter: self.clutter,
            occluder,
            seed: self.seed,
        })
    }
}

type Frames = Vec<(u64, metrack_cli::Result<metrack::GrayFrame>)>;

fn disk_frames(dir: &Path) -> anyhow::Result<Frames> {
    let listed = list_frames(dir)?;
    Ok(listed.into_iter().map(|(id, p)| (id, load_frame(&p))).collect())
}

fn run_track(opts: TrackOptions, out: &Path, curves: Option<&Path>) -> anyhow::Result<bool> {
    let opts = opts.with_config_file()?;
    let cfg = opts.tracker_config()?;
    let dir = opts.frames.clone().ok_or_else(|| anyhow!("--frames is required"))?;
    let truth = opts.gt.as_deref().map(read_ground_truth).transpose()?;
    let frames = disk_frames(&dir)?;
    let first = frames[0].0;
    let init = match (opts.init_box()?, &truth) {
        (Some(b), _) => b,
        (None, Some(gt)) => gt
            .iter()
            .find(|g| g.frame == first)
            .map(|g| g.bbox)
            .ok_or_else(|| anyhow!("ground truth has no row for frame {first}"))?,
        (None, None) => bail!("need --init or --gt to place the first box"),
    };
    let outcome = track(frames, init, cfg);
    write_results(out, &outcome.rows).with_context(|| format!("writing {}", out.display()))?;
    if let Some((id, e)) = &outcome.failure {
        eprintln!("error: frame {id}: {e}");
    }
    if let Some(gt) = &truth {
        let (summary, curve_rows) = evaluate(&outcome.rows, gt)?;
        println!("{summary}");
        if let Some(path) = curves {
            write_curves(path, &curve_rows)?;
        }
    } else {
        println!("frames tracked: {}", outcome.rows.len());
    }
    println!("mean s/frame: {:.5}", outcome.timings.mean_seconds_per_frame());
    Ok(outcome.completed())
}

fn run_bench(opts: TrackOptions, length: usize) -> anyhow::Result<bool> {
    let opts = opts.with_config_file()?;
    let cfg = opts.tracker_config()?;
    let (frames, init): (Frames, _) = match &opts.frames {
        Some(dir) => {
            let init = match (opts.init_box()?, &opts.gt) {
                (Some(b), _) => b,
                (None, Some(gt)) => read_ground_truth(gt)?
                    .first()
                    .map(|g| g.bbox)
                    .ok_or_else(|| anyhow!("empty ground truth"))?,
                (None, None) => bail!("need --init or --gt with --frames"),
            };
            (disk_frames(dir)?, init)
        }
        None => {
            let spec = SynthSpec { length: length + 1, ..SynthSpec::default() };
            let seq = synth::generate(&spec)?;
            let init = opts.init.as_deref().map(parse_box).transpose()?.unwrap_or(seq.truth[0]);
            (seq.frames.into_iter().enumerate().map(|(i, f)| (i as u64 + 1, Ok(f))).collect(), init)
        }
    };
    let outcome = track(frames, init, cfg);
    println!("{}", BenchReport { timings: outcome.timings });
    if let Some((id, e)) = &outcome.failure {
        eprintln!("error: frame {id}: {e}");
    }
    Ok(outcome.completed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track { opts, out, curves } => run_track(opts, &out, curves.as_deref()),
        Command::Synth { spec, out } => spec
            .spec()
            .and_then(|s| Ok(synth::generate(&s)?))
            .and_then(|seq| {
                synth::write(&seq, &out)?;
                println!("wrote {} frames to {}", seq.frames.len(), out.display());
                Ok(true)
            }),
        Command::Eval { results, gt, curves } => (|| {
            let rows = read_results(&results)?;
            let truth = read_ground_truth(&gt)?;
            let (summary, curve_rows) = evaluate(&rows, &truth)?;
            println!("{summary}");
            if let Some(path) = curves {
                write_curves(&path, &curve_rows)?;
            }
            Ok(true)
        })(),
        Command::Bench { opts, length } => run_bench(opts, length),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
