//! Frame loading, ground-truth parsing and result files.

use std::fs;
use std::path::{Path, PathBuf};

use metrack::{BBox, GrayFrame};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const RESULTS_HEADER: &str = "frame,x,y,w,h,score";

/// One tracked frame as written to `results.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl ResultRow {
    pub fn bbox(&self) -> Result<BBox<f64>> {
        Ok(BBox::new(self.x, self.y, self.w, self.h)?)
    }
}

/// Per-frame error curves, written when ground truth is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub frame: u64,
    pub cle: f64,
    pub vor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub frame: u64,
    pub bbox: BBox<f64>,
}

pub fn load_frame(path: &Path) -> Result<GrayFrame> {
    let img = image::open(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let luma = img.into_luma8();
    let (w, h) = luma.dimensions();
    Ok(GrayFrame::new(w as usize, h as usize, luma.into_raw())?)
}

pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<()> {
    image::save_buffer_with_format(
        path,
        frame.pixels(),
        frame.width() as u32,
        frame.height() as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Pnm,
    )
    .map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().rev().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    digits.chars().rev().collect::<String>().parse().ok()
}

/// Numbered `.pgm`/`.png` frames in `dir`, ordered by number. A gap in the
/// numbering is reported as the first missing frame id.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("pgm" | "png")) {
            continue;
        }
        let n = frame_number(&path)
            .ok_or_else(|| CliError::Invalid(format!("frame file {} has no frame number", path.display())))?;
        frames.push((n, path));
    }
    if frames.is_empty() {
        return Err(CliError::NoFrames(dir.to_path_buf()));
    }
    frames.sort();
    for w in frames.windows(2) {
        if w[1].0 == w[0].0 {
            return Err(CliError::Invalid(format!("frame {} appears twice in {}", w[0].0, dir.display())));
        }
        if w[1].0 != w[0].0 + 1 {
            return Err(CliError::MissingFrame {
                id: w[0].0 + 1,
                dir: dir.to_path_buf(),
            });
        }
    }
    Ok(frames)
}

/// `frame,x,y,w,h` lines; blank lines and `#` comments are skipped.
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let text = fs::read_to_string(path)?;
    parse_ground_truth(&text, path)
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Vec<GroundTruth>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows: Vec<GroundTruth> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |msg: String| CliError::Malformed {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 5 {
            return Err(malformed(format!("expected 5 fields frame,x,y,w,h, found {}", record.len())));
        }
        let frame: u64 = record[0]
            .parse()
            .map_err(|_| malformed(format!("bad frame number {:?}", &record[0])))?;
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = record[k + 1]
                .parse()
                .map_err(|_| malformed(format!("bad number {:?}", &record[k + 1])))?;
        }
        let bbox = BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| malformed(e.to_string()))?;
        if let Some(prev) = rows.last() {
            if frame <= prev.frame {
                return Err(malformed(format!("frame {frame} is not after frame {}", prev.frame)));
            }
        }
        rows.push(GroundTruth { frame, bbox });
    }
    Ok(rows)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(RESULTS_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header {RESULTS_HEADER}"),
        });
    }
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
