//! Run configuration: defaults, a flat `key = value` file, and command-line
//! overrides, in increasing order of precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fourns::bitree::DEFAULT_MAX_GENERATIONS;
use fourns::spectral::{SobolevIndex, MAX_CUTOFF};
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    EnergyDrift,
    BitreeAudit,
    Telescope,
    QiCheck,
    Convergence,
    WeightSweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::EnergyDrift => "energy-drift",
            Command::BitreeAudit => "bitree-audit",
            Command::Telescope => "telescope",
            Command::QiCheck => "qi-check",
            Command::Convergence => "convergence",
            Command::WeightSweep => "weight-sweep",
        }
    }
}

/// Parameters accepted both as flags and as config-file keys.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Sobolev index s of the Gaussian measure (s > 0).
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// Regularity gap, sigma = s - 1/2 - eps (0 < eps < 1/2).
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Truncation cutoff.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Ambient mode cap (defaults to N).
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Number of normal-form steps (bi-tree generations).
    #[arg(long = "J")]
    pub j: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long = "t-final", allow_negative_numbers = true)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Constant of the region predicates.
    #[arg(long = "c-impl", allow_negative_numbers = true)]
    pub c_impl: Option<f64>,
    /// Output root (falls back to $FOURNS_OUT, then ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte Carlo loops (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub s: f64,
    pub eps: f64,
    pub n: usize,
    pub m: usize,
    pub j: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub samples: usize,
    pub c_impl: f64,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

fn parse<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Validation(format!("cannot parse `{raw}` for key `{key}`")))
}

impl Overrides {
    /// Reads `key = value` lines; `#` starts a comment. Keys use the flag
    /// spelling, with `_` accepted for `-`.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let mut o = Overrides::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("{}:{}: expected key = value", path.display(), lineno + 1))
            })?;
            let (key, value) = (key.trim().replace('_', "-"), value.trim());
            match key.as_str() {
                "s" => o.s = Some(parse(&key, value)?),
                "eps" => o.eps = Some(parse(&key, value)?),
                "N" => o.n = Some(parse(&key, value)?),
                "M" => o.m = Some(parse(&key, value)?),
                "J" => o.j = Some(parse(&key, value)?),
                "dt" => o.dt = Some(parse(&key, value)?),
                "t-final" => o.t_final = Some(parse(&key, value)?),
                "seed" => o.seed = Some(parse(&key, value)?),
                "samples" => o.samples = Some(parse(&key, value)?),
                "c-impl" => o.c_impl = Some(parse(&key, value)?),
                "out" => o.out = Some(PathBuf::from(value)),
                "workers" => o.workers = Some(parse(&key, value)?),
                _ => return Err(CliError::Validation(format!("unknown config key `{key}`"))),
            }
        }
        Ok(o)
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            s: self.s.or(base.s),
            eps: self.eps.or(base.eps),
            n: self.n.or(base.n),
            m: self.m.or(base.m),
            j: self.j.or(base.j),
            dt: self.dt.or(base.dt),
            t_final: self.t_final.or(base.t_final),
            seed: self.seed.or(base.seed),
            samples: self.samples.or(base.samples),
            c_impl: self.c_impl.or(base.c_impl),
            out: self.out.or(base.out),
            workers: self.workers.or(base.workers),
        }
    }
}

impl RunConfig {
    pub fn resolve(command: Command, o: Overrides, env_out: Option<PathBuf>) -> Result<Self, CliError> {
        let n = o.n.unwrap_or(2);
        let cfg = RunConfig {
            command,
            s: o.s.unwrap_or(0.35),
            eps: o.eps.unwrap_or(SobolevIndex::DEFAULT_EPS),
            n,
            m: o.m.unwrap_or(n),
            j: o.j.unwrap_or(2),
            dt: o.dt.unwrap_or(1e-3),
            t_final: o.t_final.unwrap_or(1.0),
            seed: o.seed.unwrap_or(0),
            samples: o.samples.unwrap_or(1000),
            c_impl: o.c_impl.unwrap_or(1.0),
            out: o.out.or(env_out).unwrap_or_else(|| PathBuf::from("runs")),
            workers: o.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sobolev(&self) -> SobolevIndex {
        SobolevIndex::new(self.s, self.eps).expect("validated")
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        SobolevIndex::new(self.s, self.eps).map_err(|e| CliError::Validation(e.to_string()))?;
        if self.m > MAX_CUTOFF {
            return bad(format!("M = {} exceeds the supported maximum {MAX_CUTOFF}", self.m));
        }
        if self.n > self.m {
            return bad(format!("N = {} exceeds M = {}", self.n, self.m));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return bad(format!("t-final must be finite and non-negative, got {}", self.t_final));
        }
        if !(self.c_impl.is_finite() && self.c_impl > 0.0) {
            return bad(format!("c-impl must be positive, got {}", self.c_impl));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        let max_j = match self.command {
            Command::BitreeAudit => DEFAULT_MAX_GENERATIONS,
            _ => DEFAULT_MAX_GENERATIONS - 1,
        };
        let min_j = match self.command {
            Command::BitreeAudit | Command::Telescope => 1,
            _ => 0,
        };
        if self.j < min_j || self.j > max_j {
            return bad(format!("J = {} outside {min_j}..={max_j} for {}", self.j, self.command.name()));
        }
        match self.command {
            Command::QiCheck if self.samples < 100 => bad(format!("qi-check needs at least 100 samples, got {}", self.samples)),
            Command::Convergence | Command::WeightSweep if self.n < 2 => {
                bad("sweeps need N >= 2 (cutoffs run over powers of two up to N)".into())
            }
            _ => Ok(()),
        }
    }

    /// Everything that determines the data files; output root and worker
    /// count are excluded.
    pub fn identity(&self) -> Value {
        json!({
            "command": self.command.name(),
            "s": self.s,
            "eps": self.eps,
            "N": self.n,
            "M": self.m,
            "J": self.j,
            "dt": self.dt,
            "t_final": self.t_final,
            "seed": self.seed,
            "samples": self.samples,
            "c_impl": self.c_impl,
        })
    }
}

/// `2, 4, 8, …` up to and including `n` (and `n` itself when it is not a
/// power of two).
pub fn dyadic_cutoffs(n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = std::iter::successors(Some(2usize), |k| Some(k * 2)).take_while(|&k| k <= n).collect();
    if out.last() != Some(&n) {
        out.push(n);
    }
    out
}

pub fn echo(cfg: &RunConfig) -> BTreeMap<String, Value> {
    let mut map: BTreeMap<String, Value> = match cfg.identity() {
        Value::Object(m) => m.into_iter().collect(),
        _ => unreachable!(),
    };
    map.insert("out".into(), json!(cfg.out.display().to_string()));
    map.insert("workers".into(), json!(cfg.workers));
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_lists() {
        assert_eq!(dyadic_cutoffs(2), [2]);
        assert_eq!(dyadic_cutoffs(16), [2, 4, 8, 16]);
        assert_eq!(dyadic_cutoffs(12), [2, 4, 8, 12]);
    }

    #[test]
    fn flags_win_over_file_values() {
        let file = Overrides { n: Some(1), seed: Some(5), ..Default::default() };
        let flags = Overrides { n: Some(3), ..Default::default() };
        let merged = flags.over(file);
        assert_eq!((merged.n, merged.seed), (Some(3), Some(5)));
    }

    #[test]
    fn defaults_and_identity() {
        let cfg = RunConfig::resolve(Command::Simulate, Overrides::default(), Some("x".into())).unwrap();
        assert_eq!((cfg.n, cfg.m, cfg.j, cfg.dt), (2, 2, 2, 1e-3));
        assert_eq!(cfg.out, PathBuf::from("x"));
        assert!(cfg.identity().get("out").is_none());
        let bad = Overrides { s: Some(0.5), eps: Some(0.5), ..Default::default() };
        assert!(RunConfig::resolve(Command::Simulate, bad, None).is_err());
        let deep = Overrides { j: Some(5), ..Default::default() };
        assert!(RunConfig::resolve(Command::BitreeAudit, deep.clone(), None).is_ok());
        assert!(RunConfig::resolve(Command::EnergyDrift, deep, None).is_err());
    }
}
