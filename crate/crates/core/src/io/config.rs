//! Run configuration.
//!
//! Values come from three layers, later ones winning: built-in defaults, a
//! flat JSON file given with `--config`, and command-line flags. Settings
//! left unset in all three fall back to per-command defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Format;
use crate::analytics::BathParams;
use crate::ensemble::{InitialState, Representation};
use crate::error::{Error, Result};
use crate::fock::FockScheme;
use crate::gaussian::DeterministicScheme;

/// A grid given either as a list of values or as text: `a:b:step` for an
/// inclusive range, or comma-separated values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Text(String),
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Text(s) => parse_grid(s)?,
        };
        if v.is_empty() {
            return Err(Error::Config("empty grid".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("grid values must be finite".into()));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        Ok(v)
    }
}

/// Parses `a:b:step` or `v1,v2,...`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse grid `{s}`"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(bad());
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(Error::Config(format!(
                "grid `{s}` needs a positive step and b >= a"
            )));
        }
        let m = ((b - a) / step).round();
        if ((b - a) / step - m).abs() > 1e-9 * m.max(1.0) {
            return Err(Error::Config(format!(
                "grid `{s}`: step does not divide the range"
            )));
        }
        let m = m as usize;
        // a + (b−a)k/m hits both ends exactly
        Ok((0..=m)
            .map(|k| {
                if m == 0 {
                    a
                } else {
                    a + (b - a) * k as f64 / m as f64
                }
            })
            .collect())
    } else {
        s.split(',').map(num).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_grid: Option<GridSpec>,
    pub n_grid: Option<GridSpec>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub n_traj: Option<usize>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub representation: Option<Representation>,
    pub init: Option<InitialState>,
    pub scheme: Option<DeterministicScheme>,
    pub fock_scheme: Option<FockScheme>,
    pub record_every: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    /// Debug switch for the closure check: integrate the Gaussian moments
    /// with the opposite sign of `A₂`, `B₂`.
    pub flip_a2_sign: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `other` replace those in `self`.
    pub fn overlay(mut self, other: &RunConfig) -> Self {
        overlay!(self, other; n, gamma, gamma_grid, n_grid, dt, t_final, n_traj, dim, seed,
            representation, init, scheme, fock_scheme, record_every, workers, out, format,
            flip_a2_sign);
        self
    }

    pub fn params(&self) -> Result<BathParams> {
        BathParams::new(self.n.unwrap_or(1.0), self.gamma.unwrap_or(1.0))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1e-3)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn representation(&self) -> Representation {
        self.representation.unwrap_or_default()
    }

    pub fn gamma_values(&self, default: &str) -> Result<Vec<f64>> {
        let v = match &self.gamma_grid {
            Some(g) => g.values()?,
            None => GridSpec::Text(default.into()).values()?,
        };
        if v.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Config("gamma grid must lie in [0, 1]".into()));
        }
        Ok(v)
    }

    pub fn n_values(&self, default: &[f64]) -> Result<Vec<f64>> {
        let v = match &self.n_grid {
            Some(g) => g.values()?,
            None => GridSpec::List(default.to_vec()).values()?,
        };
        if v.iter().any(|n| *n < 0.0) {
            return Err(Error::Config("N grid must be non-negative".into()));
        }
        Ok(v)
    }
}
