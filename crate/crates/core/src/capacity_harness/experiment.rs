//! Config-file driven sweeps and their on-disk artifacts.
//!
//! Config format (TOML):
//!
//! ```toml
//! name = "theorem1_demo"
//! seed = 20240501
//! replicates = 10000
//! k = 3
//! families = ["uniform_injective", "block_repeat(2,uniform_injective)"]
//!
//! [alphabet]
//! values = [0.2, 0.8]
//! weights = [0.5, 0.5]   # optional, uniform by default
//!
//! [schedule]
//! rule = "sqrt"          # or { rule = "log", c = 2.0 } / { rule = "fixed", r = 50 }
//!
//! [grid]
//! n = [100, 1000, 10000]
//!
//! [target]
//! epsilon = 0.05
//! delta = 0.05
//! # s = 2.0            # optional, defaults to 1/p_av
//! ```
//!
//! Families may also be written as tables, e.g.
//! `{ kind = "hot_start", pin = 1, base = { kind = "uniform_injective" } }`.
//!
//! Outputs: `<out>/<family-slug>/sweep.csv`, `<out>/verdict.json` and
//! `<out>/manifest.json`. Only the manifest carries wall-clock data; the CSV
//! and verdict files are byte-identical for identical inputs and seed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{capacity_sweep, AchievabilityTarget, CapacityVerdict, RoundSchedule, SweepSettings};
use crate::config_model::{AlphabetSpec, ConfigAlphabet};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scheme_model::FamilySpec;

const THEOREM1_DEMO: &str = include_str!("../../configs/theorem1_demo.toml");

/// Bundled configs addressable by name.
pub fn bundled_config(name: &str) -> Option<&'static str> {
    match name {
        "theorem1_demo" => Some(THEOREM1_DEMO),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyEntry {
    Text(String),
    Table(FamilySpec),
}

impl FamilyEntry {
    pub fn spec(&self) -> Result<FamilySpec> {
        match self {
            FamilyEntry::Text(s) => s.parse(),
            FamilyEntry::Table(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub epsilon: f64,
    #[serde(default = "default_tolerance")]
    pub delta: f64,
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_k() -> usize {
    3
}

fn default_replicates() -> usize {
    10_000
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            s: None,
            epsilon: default_tolerance(),
            delta: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub families: Vec<FamilyEntry>,
    pub alphabet: AlphabetSpec,
    #[serde(default)]
    pub schedule: RoundSchedule,
    pub grid: GridSpec,
    #[serde(default)]
    pub target: TargetSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A file path, or the name of a bundled config.
    pub fn load(path_or_name: &str) -> Result<Self> {
        let path = Path::new(path_or_name);
        if path.is_file() {
            return Self::from_toml(&std::fs::read_to_string(path)?);
        }
        match bundled_config(path_or_name) {
            Some(text) => Self::from_toml(text),
            None => Err(Error::ConfigNotFound(path_or_name.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.n.is_empty() {
            return Err(Error::Config("grid.n is empty".into()));
        }
        if self.grid.n.windows(2).any(|w| w[0] >= w[1]) || self.grid.n[0] == 0 {
            return Err(Error::Config("grid.n must be positive and strictly ascending".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("no families listed".into()));
        }
        if self.replicates < 2 {
            return Err(Error::Config("replicates must be >= 2".into()));
        }
        for f in &self.families {
            f.spec()?;
        }
        let alphabet = ConfigAlphabet::from_spec(&self.alphabet)?;
        self.target_for(&alphabet)?;
        Ok(())
    }

    pub fn target_for(&self, alphabet: &ConfigAlphabet) -> Result<AchievabilityTarget> {
        AchievabilityTarget::new(
            self.target.s.unwrap_or(1.0 / alphabet.p_average()),
            self.target.epsilon,
            self.target.delta,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub crate_version: String,
    pub threads: usize,
    pub partitioning: String,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub verdicts: Vec<CapacityVerdict>,
    pub files: Vec<PathBuf>,
}

/// Directory name for a family label.
pub fn slug(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Runs every family of the config; `seed` overrides the config's seed.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<RunSummary> {
    config.validate()?;
    let started = Instant::now();
    let seed = seed.unwrap_or(config.seed);
    let alphabet = ConfigAlphabet::from_spec(&config.alphabet)?;
    let settings = SweepSettings {
        schedule: config.schedule,
        target: config.target_for(&alphabet)?,
        replicates: config.replicates,
        k: config.k,
    };
    let root = StreamKey::new(seed);
    std::fs::create_dir_all(out)?;
    let mut verdicts = Vec::new();
    let mut files = Vec::new();
    for entry in &config.families {
        let spec = entry.spec()?;
        let label = spec.label();
        let verdict = capacity_sweep(&spec, &alphabet, &config.grid.n, &settings, root.child_str(&label))?;
        let dir = out.join(slug(&label));
        std::fs::create_dir_all(&dir)?;
        let csv = dir.join("sweep.csv");
        std::fs::write(&csv, verdict.csv())?;
        files.push(csv);
        verdicts.push(verdict);
    }
    let verdict_path = out.join("verdict.json");
    std::fs::write(&verdict_path, serde_json::to_string_pretty(&verdicts)? + "\n")?;
    files.push(verdict_path);
    let manifest = Manifest {
        name: config.name.clone(),
        seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        partitioning: "one stream per (family, n, replicate); replicates reduced in index order"
            .into(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files: files
            .iter()
            .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
            .collect(),
    };
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    files.push(manifest_path);
    Ok(RunSummary { verdicts, files })
}
