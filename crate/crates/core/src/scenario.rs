//! Scenario files: a platform description plus balancing parameters.
//!
//! ```json
//! {
//!   "name": "two-nodes",
//!   "n": 30,
//!   "profiles": [{ "peak_speed": 2.0 }, { "peak_speed": 1.0 }],
//!   "epsilon": 0.05
//! }
//! ```
//!
//! For grids, `m`, `p` and `q` are required and `profiles` lists the `p * q`
//! processors row by row. Live runs take `p` (and `q`) without profiles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dfpa::DfpaConfig;
use crate::dfpa2d::{GridConfig, Optimizations};
use crate::error::{Error, Result};
use crate::model::SyntheticProfile;
use crate::sim::{SimCluster, SimGrid};

/// Settings for live kernel runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealSettings {
    /// Block size of the 2D kernel.
    #[serde(default = "default_block")]
    pub block: usize,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
}

fn default_block() -> usize {
    16
}

fn default_repeats() -> u32 {
    1
}

impl Default for RealSettings {
    fn default() -> Self {
        Self { block: default_block(), repeats: default_repeats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Units to distribute; for grids, the number of block columns.
    pub n: u64,
    /// Block rows of a grid problem.
    #[serde(default)]
    pub m: Option<u64>,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub profiles: Vec<SyntheticProfile>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Reseeds every profile's noise stream when present.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub latency: f64,
    #[serde(default)]
    pub max_rounds: Option<u32>,
    #[serde(default)]
    pub max_outer_rounds: Option<u32>,
    #[serde(default)]
    pub time_cap: Option<f64>,
    #[serde(default)]
    pub optimizations: Option<Optimizations>,
    #[serde(default)]
    pub real: RealSettings,
}

impl Scenario {
    /// Parses scenario JSON, reporting the offending field path and position
    /// on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Format(format!("scenario field `{path}`: {inner}"))
        })
    }

    /// Loads a scenario file; an unnamed scenario takes the file's stem as its name.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Io(format!("scenario not found: {}", path.display())),
            _ => Error::Io(format!("{}: {e}", path.display())),
        })?;
        let mut scenario = Self::from_json(&text)?;
        if scenario.name.is_empty() {
            scenario.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(scenario)
    }

    /// Number of processors in a 1D run.
    pub fn processors(&self) -> Result<usize> {
        match (self.p, self.profiles.len()) {
            (Some(p), 0) => Ok(p),
            (None, 0) => Err(Error::InvalidArgument("scenario has neither profiles nor p".into())),
            (Some(p), k) if p != k => Err(Error::InvalidArgument(format!("p = {p} but {k} profiles given"))),
            (_, k) => Ok(k),
        }
    }

    /// Grid shape and block rows of a 2D run.
    pub fn grid_shape(&self) -> Result<(u64, usize, usize)> {
        let missing = |f: &str| Error::InvalidArgument(format!("2D scenario needs `{f}`"));
        let m = self.m.ok_or_else(|| missing("m"))?;
        let p = self.p.ok_or_else(|| missing("p"))?;
        let q = self.q.ok_or_else(|| missing("q"))?;
        if !self.profiles.is_empty() && self.profiles.len() != p * q {
            return Err(Error::InvalidArgument(format!(
                "{} profiles for a {p} x {q} grid",
                self.profiles.len()
            )));
        }
        Ok((m, p, q))
    }

    /// Profiles with their noise seeds derived from the scenario seed.
    pub fn seeded_profiles(&self) -> Vec<SyntheticProfile> {
        let mut profiles = self.profiles.clone();
        if let Some(seed) = self.seed {
            for (i, p) in profiles.iter_mut().enumerate() {
                p.seed = seed.wrapping_add(i as u64);
            }
        }
        profiles
    }

    pub fn dfpa_config(&self) -> DfpaConfig {
        let mut c = DfpaConfig::default();
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        if let Some(r) = self.max_rounds {
            c.max_rounds = r;
        }
        c
    }

    pub fn grid_config(&self) -> GridConfig {
        let mut c = GridConfig::default();
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        if let Some(r) = self.max_rounds {
            c.max_inner_rounds = r;
        }
        if let Some(r) = self.max_outer_rounds {
            c.max_outer_rounds = r;
        }
        if let Some(o) = &self.optimizations {
            c.optimizations = o.clone();
        }
        c
    }

    pub fn cluster(&self) -> Result<SimCluster> {
        if self.profiles.is_empty() {
            return Err(Error::InvalidArgument("simulation needs profiles".into()));
        }
        self.processors()?;
        Ok(SimCluster::new(self.seeded_profiles())?.with_latency(self.latency).with_time_cap(self.time_cap))
    }

    /// Grid profiles as `[i][j]`.
    pub fn grid_profiles(&self) -> Result<Vec<Vec<SyntheticProfile>>> {
        let (_, p, q) = self.grid_shape()?;
        if self.profiles.is_empty() {
            return Err(Error::InvalidArgument("simulation needs profiles".into()));
        }
        let flat = self.seeded_profiles();
        Ok((0..p).map(|i| flat[i * q..(i + 1) * q].to_vec()).collect())
    }

    pub fn grid(&self) -> Result<SimGrid> {
        Ok(SimGrid::new(self.grid_profiles()?)?.with_latency(self.latency).with_time_cap(self.time_cap))
    }
}
