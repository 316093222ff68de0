//! Flat `key = value` run configuration. Every key can also be set from the
//! command line under the same name, through [`PipelineConfig::set`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::altmin::{EtaMode, RankSchedule};
use crate::error::{Error, Result};
use crate::sampling::JitterLayout;
use crate::transforms::{Decimated, Mode, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolverKind {
    #[default]
    Pd,
    LevelSet,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pd" => Ok(SolverKind::Pd),
            "levelset" => Ok(SolverKind::LevelSet),
            other => Err(Error::Config(format!("unknown solver {other:?} (pd | levelset)"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Pd => "pd",
            SolverKind::LevelSet => "levelset",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankChoice {
    Fixed(usize),
    Schedule(RankSchedule),
}

impl RankChoice {
    pub fn rank_for(&self, freq_hz: f64, max_rank: usize) -> usize {
        match self {
            RankChoice::Fixed(r) => (*r).clamp(1, max_rank.max(1)),
            RankChoice::Schedule(s) => s.rank_for_frequency(freq_hz.abs(), max_rank),
        }
    }
}

/// The keys accepted by [`PipelineConfig::set`], in documentation order.
pub const KEYS: &[&str] = &[
    "input",
    "mask",
    "output",
    "truth",
    "report",
    "solver",
    "f_min",
    "f_max",
    "dt",
    "rank",
    "rank_schedule",
    "eta_fraction",
    "alpha",
    "outer_iters",
    "inner_iters",
    "inner_tol",
    "feas_tol",
    "eta_mode",
    "balance",
    "seed",
    "threads",
    "matricization",
    "scheme",
    "keep",
    "decimate",
    "jitter_layout",
    "sampling_seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    /// Observation mask. Without one, a mask is drawn from the sampling keys
    /// and the input doubles as ground truth.
    pub mask: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub solver: SolverKind,
    pub f_min: f64,
    /// `None` means Nyquist.
    pub f_max: Option<f64>,
    pub dt: f64,
    pub rank: RankChoice,
    pub eta_fraction: f64,
    pub alpha: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub inner_tol: f64,
    pub feas_tol: f64,
    pub eta_mode: EtaMode,
    pub balance: bool,
    pub seed: u64,
    pub threads: usize,
    pub matricization: Mode,
    pub scheme: Scheme,
    pub keep: f64,
    pub decimate: Decimated,
    pub jitter_layout: JitterLayout,
    pub sampling_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            mask: None,
            output: None,
            truth: None,
            report: None,
            solver: SolverKind::Pd,
            f_min: 3.0,
            f_max: Some(70.0),
            dt: 0.004,
            rank: RankChoice::Fixed(10),
            eta_fraction: 0.03,
            alpha: 0.1,
            outer_iters: 15,
            inner_iters: 500,
            inner_tol: 1e-5,
            feas_tol: 1e-4,
            eta_mode: EtaMode::Geometric,
            balance: true,
            seed: 0,
            threads: 1,
            matricization: Mode::RecSrcX,
            scheme: Scheme::Jittered,
            keep: 0.2,
            decimate: Decimated::Sources,
            jitter_layout: JitterLayout::Flattened,
            sampling_seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_scheme(value: &str) -> Result<Scheme> {
    match value {
        "full" => Ok(Scheme::Full),
        "uniform" => Ok(Scheme::Uniform),
        "jittered" => Ok(Scheme::Jittered),
        other => Err(Error::Config(format!("unknown scheme {other:?} (full | uniform | jittered)"))),
    }
}

fn parse_decimated(value: &str) -> Result<Decimated> {
    match value {
        "sources" => Ok(Decimated::Sources),
        "receivers" => Ok(Decimated::Receivers),
        "entries" => Ok(Decimated::Entries),
        other => Err(Error::Config(format!(
            "unknown decimate target {other:?} (sources | receivers | entries)"
        ))),
    }
}

fn parse_layout(value: &str) -> Result<JitterLayout> {
    match value {
        "flattened" => Ok(JitterLayout::Flattened),
        "per-axis" => Ok(JitterLayout::PerAxis),
        other => Err(Error::Config(format!("unknown jitter_layout {other:?} (flattened | per-axis)"))),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    /// Parse a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = path(value),
            "mask" => self.mask = path(value),
            "output" => self.output = path(value),
            "truth" => self.truth = path(value),
            "report" => self.report = path(value),
            "solver" => self.solver = value.parse()?,
            "f_min" => self.f_min = parse(key, value)?,
            "f_max" => {
                self.f_max = match value {
                    "" | "nyquist" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "dt" => self.dt = parse(key, value)?,
            "rank" => self.rank = RankChoice::Fixed(parse(key, value)?),
            "rank_schedule" => self.rank = RankChoice::Schedule(value.parse()?),
            "eta_fraction" => self.eta_fraction = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "outer_iters" => self.outer_iters = parse(key, value)?,
            "inner_iters" => self.inner_iters = parse(key, value)?,
            "inner_tol" => self.inner_tol = parse(key, value)?,
            "feas_tol" => self.feas_tol = parse(key, value)?,
            "eta_mode" => self.eta_mode = value.parse()?,
            "balance" => self.balance = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "matricization" => self.matricization = value.parse()?,
            "scheme" => self.scheme = parse_scheme(value)?,
            "keep" => self.keep = parse(key, value)?,
            "decimate" => self.decimate = parse_decimated(value)?,
            "jitter_layout" => self.jitter_layout = parse_layout(value)?,
            "sampling_seed" => self.sampling_seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Checks that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.f_min >= 0.0) {
            return bad(format!("f_min must be >= 0, got {}", self.f_min));
        }
        if let Some(f) = self.f_max {
            if !(f > self.f_min) {
                return bad(format!("f_max ({f}) must exceed f_min ({})", self.f_min));
            }
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(0.0..1.0).contains(&self.eta_fraction) {
            return bad(format!("eta_fraction must lie in [0, 1), got {}", self.eta_fraction));
        }
        if let RankChoice::Fixed(0) = self.rank {
            return bad("rank must be >= 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return bad(format!("keep must lie in (0, 1], got {}", self.keep));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return bad("iteration caps must be >= 1".into());
        }
        Ok(())
    }
}
