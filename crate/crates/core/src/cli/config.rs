//! Experiment config files.
//!
//! ```text
//! [experiment]
//! name = mu
//! dimension = 2
//! seed = 42
//!
//! [distribution]
//! kind = exponential
//! rate = 1.0
//!
//! [grids]
//! n = 8,16,32
//!
//! [samples]
//! count = 500
//!
//! [targets]
//! direction = 1,0
//! ```
//!
//! Lines starting with `#` or `;` are comments. Unknown sections or keys
//! are errors so that typos never silently fall back to defaults.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::Site;
use crate::passage::{CertifyOptions, DEFAULT_SAW_BUDGET};
use crate::weights::Distribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TauSample,
    Mu,
    Fluctuation,
    LowerTail,
    Shape,
    EntropyExact,
    PivotalStats,
    Kesten,
    BoxSandwich,
    ZMoments,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::TauSample,
        ExperimentKind::Mu,
        ExperimentKind::Fluctuation,
        ExperimentKind::LowerTail,
        ExperimentKind::Shape,
        ExperimentKind::EntropyExact,
        ExperimentKind::PivotalStats,
        ExperimentKind::Kesten,
        ExperimentKind::BoxSandwich,
        ExperimentKind::ZMoments,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::TauSample => "tau-sample",
            ExperimentKind::Mu => "mu",
            ExperimentKind::Fluctuation => "fluctuation",
            ExperimentKind::LowerTail => "lower-tail",
            ExperimentKind::Shape => "shape",
            ExperimentKind::EntropyExact => "entropy-exact",
            ExperimentKind::PivotalStats => "pivotal-stats",
            ExperimentKind::Kesten => "kesten",
            ExperimentKind::BoxSandwich => "box-sandwich",
            ExperimentKind::ZMoments => "z-moments",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentKind,
    pub dimension: usize,
    pub seed: u64,
    pub workers: usize,
    pub output: Option<String>,
    pub distribution: Distribution,
    pub n_grid: Vec<u64>,
    pub t_grid: Vec<f64>,
    pub m_grid: Vec<u64>,
    pub lambda_grid: Vec<f64>,
    pub samples: usize,
    pub fan: usize,
    pub direction: Option<Site>,
    pub target: Option<Site>,
    /// Exact system for `entropy-exact`: `single-edge`, `grid:<k>` or `path:<len>`.
    pub system: Option<String>,
    pub a: Option<f64>,
    pub c7: Option<f64>,
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    /// Override for the bond percolation threshold in (A2).
    pub pc: Option<f64>,
    pub max_radius: u32,
    pub growth: f64,
    pub initial_margin: Option<u32>,
    pub saw_budget: u64,
    pub cap: u64,
}

impl ExperimentConfig {
    pub fn new(name: ExperimentKind, dimension: usize, seed: u64, distribution: Distribution) -> Self {
        let certify = CertifyOptions::default();
        ExperimentConfig {
            name,
            dimension,
            seed,
            workers: 1,
            output: None,
            distribution,
            n_grid: Vec::new(),
            t_grid: Vec::new(),
            m_grid: Vec::new(),
            lambda_grid: Vec::new(),
            samples: 0,
            fan: 0,
            direction: None,
            target: None,
            system: None,
            a: None,
            c7: None,
            c: None,
            alpha: None,
            pc: None,
            max_radius: certify.max_radius,
            growth: certify.growth_factor,
            initial_margin: certify.initial_margin,
            saw_budget: DEFAULT_SAW_BUDGET,
            cap: crate::entropy::DEFAULT_CAP,
        }
    }

    pub fn certify(&self) -> CertifyOptions {
        CertifyOptions {
            initial_margin: self.initial_margin,
            growth_factor: self.growth,
            max_radius: self.max_radius,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut section = String::new();
        let mut name = None;
        let mut dimension = None;
        let mut seed = None;
        let mut dist_pairs: Vec<(String, String)> = Vec::new();
        let mut entries: Vec<(usize, String, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let err = |message: String| ConfigError::Syntax { line: line_no, message };
            if let Some(rest) = line.strip_prefix('[') {
                let s = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
                let s = s.trim();
                if !SECTIONS.contains(&s) {
                    return Err(err(format!("unknown section [{s}]")));
                }
                section = s.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if section.is_empty() {
                return Err(err("key outside any section".into()));
            }
            match (section.as_str(), k.as_str()) {
                ("experiment", "name") => name = Some(v.parse::<ExperimentKind>().map_err(err)?),
                ("experiment", "dimension") => dimension = Some(parse_num::<usize>(&v).map_err(err)?),
                ("experiment", "seed") => seed = Some(parse_num::<u64>(&v).map_err(err)?),
                ("distribution", _) => dist_pairs.push((k, v)),
                _ => entries.push((line_no, section.clone(), k, v)),
            }
        }
        let distribution = Distribution::from_pairs(dist_pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(|e| ConfigError::Invalid(vec![format!("distribution: {e}")]))?;
        let mut cfg = ExperimentConfig::new(
            name.ok_or(ConfigError::Missing("experiment.name"))?,
            dimension.ok_or(ConfigError::Missing("experiment.dimension"))?,
            seed.ok_or(ConfigError::Missing("experiment.seed"))?,
            distribution,
        );
        for (line, section, key, value) in entries {
            cfg.set(&section, &key, &value)
                .map_err(|message| ConfigError::Syntax { line, message })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<(), String> {
        match (section, key) {
            ("experiment", "workers") => self.workers = parse_num(v)?,
            ("experiment", "output") => self.output = Some(v.to_string()),
            ("grids", "n") => self.n_grid = parse_list(v)?,
            ("grids", "t") => self.t_grid = parse_list(v)?,
            ("grids", "m") => self.m_grid = parse_list(v)?,
            ("grids", "lambda") => self.lambda_grid = parse_list(v)?,
            ("samples", "count") => self.samples = parse_num(v)?,
            ("samples", "fan") => self.fan = parse_num(v)?,
            ("targets", "direction") => self.direction = Some(parse_site(v)?),
            ("targets", "target") => self.target = Some(parse_site(v)?),
            ("targets", "system") => self.system = Some(v.to_string()),
            ("parameters", "a") => self.a = Some(parse_num(v)?),
            ("parameters", "c7") => self.c7 = Some(parse_num(v)?),
            ("parameters", "c") => self.c = Some(parse_num(v)?),
            ("parameters", "alpha") => self.alpha = Some(parse_num(v)?),
            ("parameters", "pc") => self.pc = Some(parse_num(v)?),
            ("window", "max_radius") => self.max_radius = parse_num(v)?,
            ("window", "growth") => self.growth = parse_num(v)?,
            ("window", "initial_margin") => self.initial_margin = Some(parse_num(v)?),
            ("window", "saw_budget") => self.saw_budget = parse_num(v)?,
            ("window", "cap") => self.cap = parse_num(v)?,
            _ => return Err(format!("unknown key `{key}` in [{section}]")),
        }
        Ok(())
    }

    /// Canonical text form. `parse(serialize(c)) == c` for every config.
    pub fn serialize(&self) -> String {
        self.render(true)
    }

    fn render(&self, with_local: bool) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("[experiment]\nname", self.name.to_string());
        kv("dimension", self.dimension.to_string());
        kv("seed", self.seed.to_string());
        if with_local {
            kv("workers", self.workers.to_string());
            if let Some(o) = &self.output {
                kv("output", o.clone());
            }
        }
        let mut first = true;
        for (k, v) in self.distribution.to_pairs() {
            let key = if first { format!("\n[distribution]\n{k}") } else { k };
            first = false;
            kv(&key, v);
        }
        kv("\n[grids]\nn", join(&self.n_grid));
        kv("t", join(&self.t_grid));
        kv("m", join(&self.m_grid));
        kv("lambda", join(&self.lambda_grid));
        kv("\n[samples]\ncount", self.samples.to_string());
        kv("fan", self.fan.to_string());
        s.push_str("\n[targets]\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(d) = &self.direction {
            kv("direction", join(d.coords()));
        }
        if let Some(t) = &self.target {
            kv("target", join(t.coords()));
        }
        if let Some(sys) = &self.system {
            kv("system", sys.clone());
        }
        s.push_str("\n[parameters]\n");
        for (k, v) in [("a", self.a), ("c7", self.c7), ("c", self.c), ("alpha", self.alpha), ("pc", self.pc)] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v:?}");
            }
        }
        s.push_str("\n[window]\n");
        let _ = writeln!(s, "max_radius = {}", self.max_radius);
        let _ = writeln!(s, "growth = {:?}", self.growth);
        if let Some(m) = self.initial_margin {
            let _ = writeln!(s, "initial_margin = {m}");
        }
        let _ = writeln!(s, "saw_budget = {}", self.saw_budget);
        let _ = writeln!(s, "cap = {}", self.cap);
        s
    }

    /// SHA-256 of the canonical form without `workers` and `output`, so the
    /// hash identifies the computation rather than where it ran.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render(false).as_bytes());
        digest.iter().take(8).fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }

    /// Required fields for the chosen experiment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        use ExperimentKind::*;
        let mut problems = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                problems.push(msg.to_string());
            }
        };
        need(self.dimension >= 2, "dimension must be at least 2");
        need(self.workers >= 1, "workers must be at least 1");
        need(self.growth > 1.0, "window.growth must exceed 1");
        need(self.max_radius >= 1, "window.max_radius must be positive");
        for (label, site) in [("direction", &self.direction), ("target", &self.target)] {
            if let Some(s) = site {
                need(s.dim() == self.dimension, &format!("{label} must have {} coordinates", self.dimension));
                need(s.l1_norm() > 0, &format!("{label} must be nonzero"));
            }
        }
        let increasing_u = |g: &[u64]| !g.is_empty() && g[0] > 0 && g.windows(2).all(|w| w[0] < w[1]);
        let mc = !matches!(self.name, EntropyExact | ZMoments);
        if mc {
            need(self.samples >= 2, "samples.count must be at least 2");
        }
        match self.name {
            TauSample | Mu => {
                need(increasing_u(&self.n_grid), "grids.n must be positive and increasing");
                if self.name == TauSample || self.fan == 0 {
                    need(self.direction.is_some(), "targets.direction is required");
                } else {
                    need(self.fan >= crate::estimators::MIN_NORM_DIRECTIONS, "samples.fan must be at least 8");
                }
            }
            Fluctuation => {
                need(self.direction.is_some(), "targets.direction is required");
                need(
                    increasing_u(&self.n_grid) && self.n_grid.len() >= 4,
                    "grids.n needs at least 4 increasing points",
                );
            }
            LowerTail => {
                need(self.target.is_some(), "targets.target is required");
                need(self.samples >= crate::estimators::MIN_TAIL_SAMPLES, "samples.count must be at least 1000");
                need(self.t_grid.iter().all(|t| *t >= 0.0), "grids.t must be nonnegative");
            }
            Shape => {
                need(!self.t_grid.is_empty() && self.t_grid.iter().all(|t| *t > 1.0), "grids.t must be nonempty and > 1");
                need(self.fan >= 2, "samples.fan must be at least 2");
                need(increasing_u(&self.n_grid), "grids.n (for the fan time constants) is required");
            }
            EntropyExact => {
                need(self.system.is_some(), "targets.system is required");
                need(self.distribution.atoms().is_some(), "entropy-exact needs a finite-support law");
                need(self.lambda_grid.iter().all(|l| *l <= 0.0), "grids.lambda must be <= 0");
            }
            PivotalStats => {
                need(self.target.is_some(), "targets.target is required");
                need(self.c.is_some_and(|c| c > 0.0), "parameters.c must be positive");
                need(self.alpha.is_some_and(|a| a > 0.0), "parameters.alpha must be positive");
            }
            Kesten => {
                need(self.a.is_some_and(|a| a > 0.0), "parameters.a must be positive");
                need(increasing_u(&self.m_grid), "grids.m must be positive and increasing");
                need(self.m_grid.last().is_some_and(|m| *m <= 64), "grids.m must stay below 64");
            }
            BoxSandwich => {
                need(self.direction.is_some(), "targets.direction is required");
                need(self.c7.is_some_and(|c| c > 0.0), "parameters.c7 must be positive");
                need(
                    increasing_u(&self.m_grid) && self.m_grid[0] >= 2,
                    "grids.m must be increasing and at least 2",
                );
            }
            ZMoments => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

const SECTIONS: [&str; 7] = ["experiment", "distribution", "grids", "samples", "targets", "parameters", "window"];

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(parse_num).collect()
}

fn parse_site(v: &str) -> Result<Site, String> {
    Site::new(parse_list(v)?).map_err(|e| e.to_string())
}

fn join<T: fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# time constant along e1
[experiment]
name = mu
dimension = 2
seed = 7
workers = 3

[distribution]
kind = constant
value = 1

[grids]
n = 1, 2, 4

[samples]
count = 10

[targets]
direction = 1,0
";

    #[test]
    fn parse_and_round_trip() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.name, ExperimentKind::Mu);
        assert_eq!(c.n_grid, vec![1, 2, 4]);
        assert_eq!(c.workers, 3);
        assert_eq!(c.direction, Some(Site::axis(2, 0, 1)));
        c.validate().unwrap();
        let text = c.serialize();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.serialize(), text);
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let mut c = ExperimentConfig::parse(SAMPLE).unwrap();
        let h = c.hash();
        c.workers = 9;
        c.output = Some("x.jsonl".into());
        assert_eq!(c.hash(), h);
        c.seed += 1;
        assert_ne!(c.hash(), h);
        assert_eq!(h.len(), 16);
    }

    #[test]
    fn rejects_typos_and_missing() {
        let bad = SAMPLE.replace("count = 10", "cuont = 10");
        assert!(matches!(ExperimentConfig::parse(&bad), Err(ConfigError::Syntax { .. })));
        let bad = SAMPLE.replace("seed = 7", "");
        assert_eq!(ExperimentConfig::parse(&bad), Err(ConfigError::Missing("experiment.seed")));
        let bad = SAMPLE.replace("direction = 1,0", "");
        assert!(ExperimentConfig::parse(&bad).unwrap().validate().is_err());
        assert!(ExperimentConfig::parse("[nope]\n").is_err());
    }
}
