//! Tracker options from flags and `key = value` config files. Keys mirror
//! the long flag names; a flag given on the command line wins over the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use metrack::{BBox, FeatureMode, TrackerConfig};

use crate::error::{CliError, Result};

/// `x,y,w,h`.
pub fn parse_box(s: &str) -> Result<BBox<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Invalid(format!("box {s:?} is not x,y,w,h")))?;
    if v.len() != 4 {
        return Err(CliError::Invalid(format!("box {s:?} is not x,y,w,h")));
    }
    Ok(BBox::new(v[0], v[1], v[2], v[3])?)
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrackOptions {
    /// Directory of numbered PGM/PNG frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Ground truth, one `frame,x,y,w,h` line per frame.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Initial box `x,y,w,h`; defaults to the first ground-truth row.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Buffer capacity per class.
    #[arg(long)]
    pub buffer: Option<usize>,
    /// Time-weighting base of the reservoirs.
    #[arg(long)]
    pub q: Option<f64>,
    /// Aggressiveness of the metric update.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long = "gamma-f")]
    pub gamma_f: Option<f64>,
    #[arg(long = "gamma-b")]
    pub gamma_b: Option<f64>,
    /// Triplets per metric update.
    #[arg(long)]
    pub triplets: Option<usize>,
    /// Frames between metric updates.
    #[arg(long = "update-period")]
    pub update_period: Option<usize>,
    /// `hog` or `raw`.
    #[arg(long)]
    pub feature: Option<String>,
    /// Keep the metric at identity.
    #[arg(long = "no-metric-learning")]
    pub no_metric_learning: bool,
    /// `key = value` file with any of the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse<T: FromStr>(key: &str, value: &str, line: u64, path: &Path) -> Result<T> {
    value.parse().map_err(|_| CliError::Malformed {
        path: path.to_path_buf(),
        line,
        msg: format!("bad value {value:?} for {key}"),
    })
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, (u64, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Malformed {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            msg: "expected key = value".into(),
        })?;
        out.insert(k.trim().replace('_', "-"), (i as u64 + 1, v.trim().to_string()));
    }
    Ok(out)
}

impl TrackOptions {
    /// Fills unset options from the config file, if one was given.
    pub fn with_config_file(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        for (key, (line, value)) in read_config_file(&path)? {
            let p = path.as_path();
            let v = value.as_str();
            match key.as_str() {
                "frames" => self.frames = self.frames.or(Some(PathBuf::from(v))),
                "gt" => self.gt = self.gt.or(Some(PathBuf::from(v))),
                "init" => self.init = self.init.or(Some(v.to_string())),
                "seed" => self.seed = self.seed.or(Some(parse(&key, v, line, p)?)),
                "particles" => self.particles = self.particles.or(Some(parse(&key, v, line, p)?)),
                "buffer" => self.buffer = self.buffer.or(Some(parse(&key, v, line, p)?)),
                "q" => self.q = self.q.or(Some(parse(&key, v, line, p)?)),
                "c" => self.c = self.c.or(Some(parse(&key, v, line, p)?)),
                "rho" => self.rho = self.rho.or(Some(parse(&key, v, line, p)?)),
                "gamma-f" => self.gamma_f = self.gamma_f.or(Some(parse(&key, v, line, p)?)),
                "gamma-b" => self.gamma_b = self.gamma_b.or(Some(parse(&key, v, line, p)?)),
                "triplets" => self.triplets = self.triplets.or(Some(parse(&key, v, line, p)?)),
                "update-period" => self.update_period = self.update_period.or(Some(parse(&key, v, line, p)?)),
                "feature" => self.feature = self.feature.or(Some(v.to_string())),
                "no-metric-learning" => self.no_metric_learning |= parse::<bool>(&key, v, line, p)?,
                _ => {
                    return Err(CliError::Malformed {
                        path: path.clone(),
                        line,
                        msg: format!("unknown key {key}"),
                    })
                }
            }
        }
        Ok(self)
    }

    pub fn tracker_config(&self) -> Result<TrackerConfig> {
        let d = TrackerConfig::default();
        let feature_mode = match &self.feature {
            Some(f) => FeatureMode::from_str(f)?,
            None => d.feature_mode,
        };
        let cfg = TrackerConfig {
            particles: self.particles.unwrap_or(d.particles),
            buffer_capacity: self.buffer.unwrap_or(d.buffer_capacity),
            q: self.q.unwrap_or(d.q),
            aggressiveness: self.c.unwrap_or(d.aggressiveness),
            rho: self.rho.unwrap_or(d.rho),
            gamma_f: self.gamma_f.unwrap_or(d.gamma_f),
            gamma_b: self.gamma_b.unwrap_or(d.gamma_b),
            triplets_per_update: self.triplets.unwrap_or(d.triplets_per_update),
            metric_update_period: self.update_period.unwrap_or(d.metric_update_period),
            metric_learning: !self.no_metric_learning,
            seed: self.seed.unwrap_or(d.seed),
            feature_mode,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn init_box(&self) -> Result<Option<BBox<f64>>> {
        self.init.as_deref().map(parse_box).transpose()
    }
}
