//! Run configuration: built-in defaults, then an optional `key=value` file,
//! then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serf_core::dynamics::{SimParams, DEFAULT_GAMMA_E};
use serf_core::observables::Polarization;

use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub b_nt: f64,
    pub b_min_nt: Option<f64>,
    pub b_max_nt: Option<f64>,
    pub b_count: Option<usize>,
    pub polarization: f64,
    pub t_end_ms: f64,
    pub dt_us: f64,
    pub t0_us: f64,
    pub r_se: f64,
    pub r_sd: f64,
    /// Twice the nuclear spin.
    pub twice_i: i32,
    pub gamma_e: f64,
    pub probes: Vec<Polarization>,
    /// Worker threads for sweeps; 0 lets the pool decide.
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            b_nt: 28.0,
            b_min_nt: None,
            b_max_nt: None,
            b_count: None,
            polarization: 0.1,
            t_end_ms: 10.0,
            dt_us: 1.0,
            t0_us: 300.0,
            r_se: 1e4,
            r_sd: 147.0,
            twice_i: 3,
            gamma_e: DEFAULT_GAMMA_E,
            probes: vec![Polarization::CircularPlus, Polarization::LinearPi],
            jobs: 0,
            out_dir: PathBuf::from("."),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.trim().parse().map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

pub fn parse_probes(value: &str) -> CliResult<Vec<Polarization>> {
    match value.trim() {
        "both" | "all" => Ok(vec![Polarization::CircularPlus, Polarization::LinearPi]),
        list => {
            let mut probes = Vec::new();
            for item in list.split(',') {
                let p: Polarization = item.trim().parse().map_err(|e: serf_core::Error| CliError::Usage(e.to_string()))?;
                if !probes.contains(&p) {
                    probes.push(p);
                }
            }
            probes.sort_by_key(|p| p.label() != "circular");
            Ok(probes)
        }
    }
}

impl RunConfig {
    /// Sets one field from its flag name (without leading dashes).
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "B-nT" => self.b_nt = parse(key, value)?,
            "B-min-nT" => self.b_min_nt = Some(parse(key, value)?),
            "B-max-nT" => self.b_max_nt = Some(parse(key, value)?),
            "B-count" => self.b_count = Some(parse(key, value)?),
            "P" => self.polarization = parse(key, value)?,
            "t-end-ms" => self.t_end_ms = parse(key, value)?,
            "dt-us" => self.dt_us = parse(key, value)?,
            "t0-us" => self.t0_us = parse(key, value)?,
            "R-SE" => self.r_se = parse(key, value)?,
            "R-SD" => self.r_sd = parse(key, value)?,
            "I" => self.twice_i = parse(key, value)?,
            "gamma-e" => self.gamma_e = parse(key, value)?,
            "probe" => self.probes = parse_probes(value)?,
            "jobs" => self.jobs = parse(key, value)?,
            "out-dir" => self.out_dir = PathBuf::from(value.trim()),
            other => return Err(CliError::Usage(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; blank lines and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
            self.set(key.trim().trim_start_matches('-'), value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = [("t-end-ms", self.t_end_ms), ("dt-us", self.dt_us), ("gamma-e", self.gamma_e)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t0_us >= 0.0 && self.t0_us < self.t_end_ms * 1e3) {
            return Err(CliError::Usage(format!("t0-us must lie inside [0, t-end), got {}", self.t0_us)));
        }
        if !(0.0..1.0).contains(&self.polarization) {
            return Err(CliError::Usage(format!("P must lie in [0, 1), got {}", self.polarization)));
        }
        if !self.b_nt.is_finite() {
            return Err(CliError::Usage(format!("B-nT = {}", self.b_nt)));
        }
        if self.probes.is_empty() {
            return Err(CliError::Usage("no probe selected".into()));
        }
        self.params(self.b_nt).validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn params(&self, b_nt: f64) -> SimParams {
        SimParams { r_se: self.r_se, r_sd: self.r_sd, gamma_e: self.gamma_e, ..SimParams::default() }.with_field_nt(b_nt)
    }

    pub fn dt(&self) -> f64 {
        self.dt_us * 1e-6
    }

    pub fn t_end(&self) -> f64 {
        self.t_end_ms * 1e-3
    }

    pub fn t0(&self) -> f64 {
        self.t0_us * 1e-6
    }

    /// Sweep fields: log-spaced when min, max and count are all set, else the single `B-nT`.
    pub fn fields(&self) -> CliResult<Vec<f64>> {
        let fields = match (self.b_min_nt, self.b_max_nt, self.b_count) {
            (None, None, None) => vec![self.b_nt],
            (Some(lo), Some(hi), Some(n)) => log_space(lo, hi, n)?,
            _ => return Err(CliError::Usage("B-min-nT, B-max-nT and B-count go together".into())),
        };
        if fields.iter().any(|b| !(*b > 0.0 && b.is_finite())) || fields.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage("sweep fields must be positive and strictly increasing".into()));
        }
        Ok(fields)
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> CliResult<Vec<f64>> {
    if n == 0 || !(lo > 0.0) || !(hi > lo || (n == 1 && hi == lo)) {
        return Err(CliError::Usage(format!("bad log range {lo}..{hi} with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# sweep\nB-min-nT = 1\nB-max-nT=1000\nB-count=24\nP=0.2 # polarization\nprobe=linear\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.load_file(&path).unwrap();
        cfg.set("P", "0.3").unwrap();
        assert_eq!(cfg.polarization, 0.3);
        assert_eq!(cfg.probes, vec![Polarization::LinearPi]);
        let fields = cfg.fields().unwrap();
        assert_eq!(fields.len(), 24);
        assert_eq!((fields[0], fields[23]), (1.0, 1000.0));
        assert!(fields.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("P", "abc").is_err());
        cfg.b_min_nt = Some(1.0);
        assert!(cfg.fields().is_err());
        assert!(log_space(10.0, 1.0, 3).is_err());
        let bad = RunConfig { polarization: 1.5, ..RunConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn probe_lists_are_canonical() {
        assert_eq!(parse_probes("linear,circular").unwrap(), vec![Polarization::CircularPlus, Polarization::LinearPi]);
        assert!(parse_probes("sideways").is_err());
    }
}
