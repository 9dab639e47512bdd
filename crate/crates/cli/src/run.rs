//! Tracking runs, metric summaries and timing reports.

use std::fmt;

use metrack::tracker::PhaseTimings;
use metrack::{cle, success_rate, vor, BBox, GrayFrame, Tracker, TrackerConfig};

use crate::error::{CliError, Result};
use crate::io::{CurveRow, GroundTruth, ResultRow};

/// Rows for every completed frame; `failure` names the frame that stopped
/// the run, if any.
#[derive(Debug)]
pub struct TrackOutcome {
    pub rows: Vec<ResultRow>,
    pub timings: PhaseTimings,
    pub failure: Option<(u64, CliError)>,
}

impl TrackOutcome {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn row(frame: u64, b: &BBox<f64>, score: f64) -> ResultRow {
    ResultRow {
        frame,
        x: b.x,
        y: b.y,
        w: b.w,
        h: b.h,
        score,
    }
}

/// Tracks through `frames` (numbered, in order). The first frame only
/// initialises the tracker and is reported with the initial box.
pub fn track<I>(frames: I, init: BBox<f64>, cfg: TrackerConfig) -> TrackOutcome
where
    I: IntoIterator<Item = (u64, Result<GrayFrame>)>,
{
    let mut rows = Vec::new();
    let mut tracker: Option<Tracker<f64>> = None;
    for (id, frame) in frames {
        let result = frame.and_then(|f| match tracker.as_mut() {
            None => {
                let t = Tracker::init(&f, init, cfg.clone())?;
                let r = row(id, &init, t.state().current.score);
                tracker = Some(t);
                Ok(r)
            }
            Some(t) => {
                let est = t.step(&f)?.estimate;
                Ok(row(id, &t.current_box()?, est.score))
            }
        });
        match result {
            Ok(r) => rows.push(r),
            Err(e) => {
                return TrackOutcome {
                    rows,
                    timings: tracker.map(|t| *t.timings()).unwrap_or_default(),
                    failure: Some((id, e)),
                }
            }
        }
    }
    TrackOutcome {
        rows,
        timings: tracker.map(|t| *t.timings()).unwrap_or_default(),
        failure: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub frames: usize,
    pub mean_cle: f64,
    pub mean_vor: f64,
    pub success_rate: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames evaluated: {}", self.frames)?;
        writeln!(f, "mean CLE: {:.3} px", self.mean_cle)?;
        writeln!(f, "mean VOR: {:.4}", self.mean_vor)?;
        write!(f, "success rate: {:.4}", self.success_rate)
    }
}

/// Scores every result row that has a ground-truth row for the same frame.
pub fn evaluate(rows: &[ResultRow], truth: &[GroundTruth]) -> Result<(Summary, Vec<CurveRow>)> {
    let mut curves = Vec::new();
    for r in rows {
        if let Some(g) = truth.iter().find(|g| g.frame == r.frame) {
            let b = r.bbox()?;
            curves.push(CurveRow {
                frame: r.frame,
                cle: cle(&b, &g.bbox),
                vor: vor(&b, &g.bbox),
            });
        }
    }
    let vors: Vec<f64> = curves.iter().map(|c| c.vor).collect();
    let rate = success_rate(&vors)?;
    let n = curves.len() as f64;
    let summary = Summary {
        frames: curves.len(),
        mean_cle: curves.iter().map(|c| c.cle).sum::<f64>() / n,
        mean_vor: vors.iter().sum::<f64>() / n,
        success_rate: rate,
    };
    Ok((summary, curves))
}

/// Per-phase seconds per tracked frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub timings: PhaseTimings,
}

impl BenchReport {
    fn per_frame(&self, d: std::time::Duration) -> f64 {
        d.as_secs_f64() / self.timings.frames.max(1) as f64
    }

    pub fn mean_seconds_per_frame(&self) -> f64 {
        self.timings.mean_seconds_per_frame()
    }

    pub fn scoring_seconds_per_frame(&self) -> f64 {
        self.per_frame(self.timings.feature) + self.per_frame(self.timings.solve)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.timings;
        writeln!(f, "frames timed: {}", t.frames)?;
        for (name, d) in [
            ("propagate", t.propagate),
            ("feature", t.feature),
            ("solve", t.solve),
            ("reservoir", t.reservoir),
            ("metric update", t.metric_update),
        ] {
            writeln!(f, "{name:>14}: {:.5} s/frame", self.per_frame(d))?;
        }
        write!(f, "mean s/frame: {:.5}", self.mean_seconds_per_frame())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn small() -> TrackerConfig {
        TrackerConfig {
            particles: 30,
            buffer_capacity: 20,
            triplets_per_update: 20,
            ..TrackerConfig::default()
        }
    }

    #[test]
    fn single_frame_reports_the_init_box() {
        let seq = generate(&SynthSpec { length: 1, ..SynthSpec::default() }).unwrap();
        let out = track([(1, Ok(seq.frames[0].clone()))], seq.truth[0], small());
        assert!(out.completed());
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].bbox().unwrap(), seq.truth[0]);
        assert!(out.rows[0].score > 0.0 && out.rows[0].score < 1.0);
    }

    #[test]
    fn failures_keep_completed_rows() {
        let seq = generate(&SynthSpec { length: 3, ..SynthSpec::default() }).unwrap();
        let frames = vec![
            (1, Ok(seq.frames[0].clone())),
            (2, Ok(seq.frames[1].clone())),
            (3, Err(CliError::Invalid("unreadable".into()))),
        ];
        let out = track(frames, seq.truth[0], small());
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.failure.as_ref().map(|f| f.0), Some(3));
        assert_eq!(out.timings.frames, 1);
    }

    #[test]
    fn evaluation_matches_by_frame() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let rows = vec![row(1, &b, 0.5), row(2, &BBox::new(5.0, 0.0, 10.0, 10.0).unwrap(), 0.5), row(9, &b, 0.5)];
        let gt = vec![GroundTruth { frame: 1, bbox: b }, GroundTruth { frame: 2, bbox: b }];
        let (s, curves) = evaluate(&rows, &gt).unwrap();
        assert_eq!(s.frames, 2);
        assert_eq!(curves[1].cle, 5.0);
        assert!((s.mean_vor - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(s.success_rate, 0.5);
        assert!(evaluate(&rows, &[]).is_err());
    }
}
