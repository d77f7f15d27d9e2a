//! Declarative experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use collision_replay::agent::NoiseModel;
use collision_replay::decode::DecodeConfig;
use collision_replay::gridmap::{generate_map, Compass, GridMap, MapKind, DEFAULT_STEP_SIZE};
use collision_replay::replay::{Clock, ReplayConfig, DEFAULT_K, DEFAULT_WINDOW};
use collision_replay::rollout::{PolicyConfig, WalkConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    /// Map file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Inline map text; resolved configs always carry the map this way.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_headings")]
    pub headings: u8,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
}

fn default_size() -> usize {
    32
}
fn default_density() -> f64 {
    0.1
}
fn default_headings() -> u8 {
    4
}
fn default_step_size() -> f64 {
    DEFAULT_STEP_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub p_forward: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub turn_around_on_collision: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = PolicyConfig::default();
        PolicySection {
            p_forward: p.p_forward,
            p_left: p.p_left,
            p_right: p.p_right,
            turn_around_on_collision: p.turn_around_on_collision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub p_forward_slip: f64,
    pub p_turn_slip: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseModel::default();
        NoiseSection { p_forward_slip: n.p_forward_slip, p_turn_slip: n.p_turn_slip }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    pub count: usize,
    pub steps: u32,
    pub seed: u64,
}

impl Default for WalkSection {
    fn default() -> Self {
        WalkSection { count: 10, steps: 500, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    pub k: u16,
    pub window: u32,
    pub clock: Clock,
}

impl Default for ReplaySection {
    fn default() -> Self {
        ReplaySection { k: DEFAULT_K, window: DEFAULT_WINDOW, clock: Clock::TimeSteps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub alpha_s: f64,
    pub shards: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection { alpha_s: collision_replay::estimator::DEFAULT_ALPHA_S, shards: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub eps: f64,
    pub interpolate: bool,
    /// Collision frequency below which a visited cell counts as free.
    pub freespace_threshold: f64,
}

impl Default for DecodeSection {
    fn default() -> Self {
        let d = DecodeConfig::default();
        DecodeSection { eps: d.eps, interpolate: d.interpolate, freespace_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Threshold for the "within delta" metric, in meters.
    pub delta: f64,
    /// Minimum replay samples at a cell (all headings) for it to be scored.
    pub min_samples: u64,
    /// Minimum visits for a cell to be scored by the free-space classifier.
    pub min_visits: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { delta: 0.25, min_samples: 30, min_visits: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub walks: WalkSection,
    #[serde(default)]
    pub replay: ReplaySection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub decode: DecodeSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A loaded config with its map resolved and its provenance hash computed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub map: GridMap,
    pub hash: String,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn compass(&self) -> Result<Compass> {
        Compass::from_count(self.map.headings)
            .ok_or_else(|| Failure::Usage(format!("map.headings must be 4 or 8, got {}", self.map.headings)).into())
    }

    pub fn walk_config(&self) -> Result<WalkConfig> {
        let p = &self.policy;
        let policy = PolicyConfig::new(p.p_forward, p.p_left, p.p_right, p.turn_around_on_collision)
            .map_err(|e| Failure::Usage(format!("[policy] {e}")))?;
        let noise = NoiseModel::new(self.noise.p_forward_slip, self.noise.p_turn_slip)
            .map_err(|e| Failure::Usage(format!("[noise] {e}")))?;
        Ok(WalkConfig { compass: self.compass()?, policy, noise, n_steps: self.walks.steps })
    }

    pub fn replay_config(&self) -> Result<ReplayConfig> {
        let cfg = ReplayConfig { k: self.replay.k, window: self.replay.window, clock: self.replay.clock, ..ReplayConfig::default() };
        cfg.validate().map_err(|e| Failure::Usage(format!("[replay] {e}")))?;
        Ok(cfg)
    }

    pub fn decode_config(&self) -> Result<DecodeConfig> {
        let cfg = DecodeConfig { eps: self.decode.eps, interpolate: self.decode.interpolate };
        cfg.validate().map_err(|e| Failure::Usage(format!("[decode] {e}")))?;
        Ok(cfg)
    }

    fn build_map(&self, base: &Path) -> Result<(GridMap, String)> {
        let m = &self.map;
        let map = if let Some(text) = &m.text {
            GridMap::parse(text).map_err(|e| Failure::Usage(format!("[map] text: {e}")))?
        } else if let Some(file) = &m.file {
            let path = base.join(file);
            let text = fs::read_to_string(&path).map_err(|_| Failure::Missing(path.clone()))?;
            GridMap::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        } else if let Some(kind) = &m.kind {
            let kind: MapKind = kind.parse().map_err(|e: String| Failure::Usage(format!("[map] {e}")))?;
            generate_map(kind, m.seed, m.width, m.height, m.density).map_err(|e| Failure::Generation(e.to_string()))?
        } else {
            return Err(Failure::Usage("[map] needs one of `file`, `text` or `kind`".into()).into());
        };
        let map = map.with_step_size(m.step_size).map_err(|e| Failure::Usage(format!("[map] {e}")))?;
        let text = map.to_text();
        Ok((map, text))
    }

    /// Canonical text of the config, with the map inlined and the output
    /// location dropped, so identical experiments hash identically.
    fn canonical(&self, map_text: String) -> Result<String> {
        let mut c = self.clone();
        c.map = MapSection { file: None, text: Some(map_text), kind: None, seed: 0, width: 0, height: 0, density: 0.0, ..c.map };
        c.output = OutputSection::default();
        Ok(toml::to_string(&c)?)
    }
}

pub fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path, out_override: Option<&Path>) -> Result<Resolved> {
    let text = fs::read_to_string(path).map_err(|_| Failure::Missing(path.to_path_buf()))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    from_config(config, base, out_override)
}

pub fn from_config(config: ExperimentConfig, base: &Path, out_override: Option<&Path>) -> Result<Resolved> {
    let (map, map_text) = config.build_map(base)?;
    config.walk_config()?;
    config.replay_config()?;
    config.decode_config()?;
    let out_dir = match (out_override, &config.output.dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => base.join(d),
        (None, None) => base.join("run"),
    };
    let canonical = config.canonical(map_text)?;
    let hash = hash_text(&canonical);
    let config: ExperimentConfig = toml::from_str(&canonical).context("re-reading canonical config")?;
    Ok(Resolved { config, map, hash, out_dir })
}

impl Resolved {
    /// The resolved config as written next to the artifacts.
    pub fn to_toml(&self) -> Result<String> {
        Ok(format!("# config_hash = {}\n{}", self.hash, toml::to_string(&self.config)?))
    }
}
