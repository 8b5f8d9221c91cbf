//! Run configuration: one TOML document that determines every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arrows::ArrowFieldSpec;
use crate::error::{Error, Result};
use crate::flow::IntegratorSpec;
use crate::potential::DELTA_MAX;
use crate::stats::Event;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_arrows")]
    pub arrows: ArrowFieldSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub warp: WarpConfig,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub integrate: IntegrateConfig,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub spacetime: SpaceTimeConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_arrows() -> ArrowFieldSpec {
    ArrowFieldSpec::doubly_exponential()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: default_output_dir(),
            arrows: default_arrows(),
            grid: GridConfig::default(),
            warp: WarpConfig::default(),
            integrator: IntegratorSpec::default(),
            integrate: IntegrateConfig::default(),
            walk: WalkConfig::default(),
            stats: StatsConfig::default(),
            spacetime: SpaceTimeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub delta: f64,
    pub resolution: usize,
    /// Quadrature tolerance for grid nodes and exact-mode queries.
    pub tol: f64,
    /// Evaluate Ψ by quadrature instead of the cached grid.
    pub exact: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            delta: crate::DEFAULT_DELTA,
            resolution: 1024,
            tol: 1e-8,
            exact: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarpConfig {
    pub enabled: bool,
    /// Replace both point processes by the integer lattice.
    pub lattice_hook: bool,
    pub intensity: f64,
    pub seed_x: u64,
    pub seed_y: u64,
}

impl Default for WarpConfig {
    fn default() -> Self {
        WarpConfig {
            enabled: false,
            lattice_hook: false,
            intensity: 1.0,
            seed_x: 1,
            seed_y: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrateConfig {
    pub starts: Vec<[f64; 2]>,
    pub burn_in: f64,
    pub thresholds: Vec<f64>,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        IntegrateConfig {
            starts: vec![[0.1, 0.1]],
            burn_in: 0.0,
            thresholds: vec![0.05, 20.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub start: [i64; 2],
    pub steps: usize,
    pub burn_in: usize,
    /// Extra starts checked for coalescence with `start`.
    pub coalesce_with: Vec<[i64; 2]>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            start: [1, 1],
            steps: 1000,
            burn_in: 0,
            coalesce_with: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Birkhoff,
    Mixing,
    Slope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Constant,
    First,
    Second,
    Sum,
}

impl Observable {
    pub fn apply(self, v: crate::Vec2) -> f64 {
        match self {
            Observable::Constant => 1.0,
            Observable::First => v.x,
            Observable::Second => v.y,
            Observable::Sum => v.x + v.y,
        }
    }
}

/// Which evaluator the sampling estimators read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsField {
    /// Ψ (or Φ when the warp is enabled).
    Psi,
    /// Right-indicators of the configured arrow field and of an IID field
    /// with `second_seed`.
    ArrowIndicators,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub estimator: Estimator,
    pub field: StatsField,
    pub second_seed: u64,
    pub observable: Observable,
    pub event_a: Event,
    pub event_b: Event,
    pub center: [f64; 2],
    pub radius: f64,
    pub samples: usize,
    pub shifts: usize,
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            estimator: Estimator::Birkhoff,
            field: StatsField::Psi,
            second_seed: 2,
            observable: Observable::Sum,
            event_a: Event::FirstAbove { level: 0.5 },
            event_b: Event::SecondAbove { level: 0.5 },
            center: [0.0, 0.0],
            radius: 20.0,
            samples: 10_000,
            shifts: 32,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceTimeConfig {
    pub enabled: bool,
    pub u0: f64,
    pub u1: f64,
    pub t0: f64,
    pub x0: f64,
    pub t_end: f64,
}

impl Default for SpaceTimeConfig {
    fn default() -> Self {
        SpaceTimeConfig {
            enabled: false,
            u0: 0.0,
            u1: 1.0,
            t0: 0.0,
            x0: 0.0,
            t_end: 100.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse `text` after applying `section.key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: RunConfig = doc.try_into().map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.delta > 0.0 && g.delta < DELTA_MAX) {
            return Err(Error::invalid(format!(
                "grid.delta = {} is outside the admissible range (0, 1/11)",
                g.delta
            )));
        }
        if g.resolution < 4 {
            return Err(Error::invalid("grid.resolution must be at least 4"));
        }
        if !(g.tol > 0.0) {
            return Err(Error::invalid("grid.tol must be positive"));
        }
        if !(self.warp.intensity > 0.0 && self.warp.intensity.is_finite()) {
            return Err(Error::invalid("warp.intensity must be positive"));
        }
        self.integrator.validate()?;
        if self.integrate.starts.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("integrate.starts must be finite"));
        }
        let st = &self.spacetime;
        if !(st.u0 >= 0.0 && st.u0 < st.u1 && st.u1.is_finite()) {
            return Err(Error::invalid("spacetime needs 0 <= u0 < u1"));
        }
        if st.enabled && !(st.t_end > st.t0) {
            return Err(Error::invalid("spacetime.t_end must exceed t0"));
        }
        let s = &self.stats;
        if !(s.radius > 0.0) || s.samples < 2 || s.shifts == 0 {
            return Err(Error::invalid("stats needs radius > 0, samples >= 2 and shifts >= 1"));
        }
        // compile the arrow spec once to surface its own errors
        self.arrows.build()?;
        Ok(())
    }

    /// Hash of the whole configuration.
    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_string(self).expect("config serializes"))
    }

    /// Hash of the parameters that determine the cached tile grids.
    pub fn field_hash(&self) -> String {
        let g = &self.grid;
        short_hash(&format!("{:?}|{}|{:?}", g.delta, g.resolution, g.tol))
    }

    pub fn field_dir(&self) -> PathBuf {
        self.output_dir.join(format!("field-{}", self.field_hash()))
    }

    pub fn run_dir(&self, subcommand: &str) -> PathBuf {
        self.output_dir.join(format!("{subcommand}-{}", self.hash()))
    }
}

pub fn short_hash(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn apply_override(doc: &mut toml::Table, ov: &str) -> Result<()> {
    let (path, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override `{ov}` is not key=value")))?;
    // parse the value as a TOML literal, falling back to a bare string
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut table = doc;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::invalid(format!("override `{ov}`: `{k}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrows::{Arrow, RunLengths};

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn full_precision_floats_survive() {
        let mut cfg = RunConfig::default();
        cfg.grid.delta = 0.1 / 3.0;
        cfg.integrator.step = 1.0 / 7.0;
        cfg.integrate.starts = vec![[std::f64::consts::PI, -1e-17]];
        cfg.arrows = ArrowFieldSpec::RunSchedule {
            lengths: RunLengths::Geometric {
                first: 1.5,
                ratio: 2.25,
            },
            phase: -4,
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_large_delta() {
        let err = RunConfig::from_toml("[grid]\ndelta = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("delta"));
        assert!(RunConfig::from_toml("[spacetime]\nu0 = 1.0\nu1 = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[grid]\nbogus = 1\n").is_err());
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::from_toml_with(
            "",
            &[
                "grid.resolution=64".into(),
                "arrows={kind=\"constant\", arrow=\"up\"}".into(),
                "output_dir=/tmp/x".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.grid.resolution, 64);
        assert_eq!(cfg.arrows, ArrowFieldSpec::Constant { arrow: Arrow::Up });
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
        assert!(RunConfig::from_toml_with("", &["nonsense".into()]).is_err());
    }

    #[test]
    fn hashes_track_relevant_fields() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.integrator.max_time = 99.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.field_hash(), b.field_hash());
        b.grid.resolution = 512;
        assert_ne!(a.field_hash(), b.field_hash());
        assert_eq!(a.hash().len(), 16);
    }
}
