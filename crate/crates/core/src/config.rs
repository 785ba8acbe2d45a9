//! The run configuration: one JSON document holding every tunable.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exploration::ExplorationConfig;
use crate::fusion::FusionConfig;
use crate::remote::EndpointConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub range_m: f64,
    pub fov_deg: f64,
    pub ray_spacing_deg: f64,
    /// Hit strength at maximum range; strength falls linearly from 1 at the
    /// agent to this value.
    pub strength_floor: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range_m: 3.0,
            fov_deg: 79.0,
            ray_spacing_deg: 1.0,
            strength_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub forward_step_m: f64,
    pub turn_step_deg: f64,
    /// Full turn in place before the first target.
    pub initial_spin: bool,
    /// Actions between goal re-selection while exploring.
    pub replan_interval: usize,
    /// Pure-pursuit look-ahead along the planned path.
    pub lookahead_m: f64,
    /// Consecutive blocked moves before the current goal is abandoned.
    pub max_collisions: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            forward_step_m: 0.25,
            turn_step_deg: 15.0,
            initial_spin: true,
            replan_interval: 8,
            lookahead_m: 0.3,
            max_collisions: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Validator false-negative flip probability.
    pub eps_fn: f64,
    /// Validator false-positive flip probability.
    pub eps_fp: f64,
    /// Probability that the detector misses a visible instance.
    pub miss_rate: f64,
    /// `true label -> reported label -> probability`.
    pub confusion: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            eps_fn: 0.0,
            eps_fp: 0.0,
            miss_rate: 0.0,
            confusion: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub seed: u64,
    /// Gaussian feature blur radius in cells before querying.
    pub blur_radius: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            seed: 7,
            blur_radius: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub embedder: Option<EndpointConfig>,
    pub decomposer: Option<EndpointConfig>,
    pub validator: Option<EndpointConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub fusion: FusionConfig,
    pub exploration: ExplorationConfig,
    /// Percentile of S_comb over observed cells a detection must reach.
    pub detection_percentile: f64,
    pub sensor: SensorConfig,
    pub agent: AgentConfig,
    pub success_radius_m: f64,
    pub step_budget: usize,
    pub noise: NoiseConfig,
    pub embedding: EmbeddingConfig,
    pub endpoints: Endpoints,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            fusion: FusionConfig::default(),
            exploration: ExplorationConfig::default(),
            detection_percentile: 95.0,
            sensor: SensorConfig::default(),
            agent: AgentConfig::default(),
            success_radius_m: 0.5,
            step_budget: 2500,
            noise: NoiseConfig::default(),
            embedding: EmbeddingConfig::default(),
            endpoints: Endpoints::default(),
        }
    }
}

fn prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} = {v} must be positive")))
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        prob("fusion.alpha", self.fusion.alpha)?;
        prob("exploration.tau_explored", self.exploration.tau_explored)?;
        for (n, p) in [
            ("exploration.cluster_percentile", self.exploration.cluster_percentile),
            ("detection_percentile", self.detection_percentile),
        ] {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{n} = {p} outside [0, 100]")));
            }
        }
        positive("sensor.range_m", self.sensor.range_m)?;
        positive("sensor.fov_deg", self.sensor.fov_deg)?;
        positive("sensor.ray_spacing_deg", self.sensor.ray_spacing_deg)?;
        if !(self.sensor.strength_floor > 0.0 && self.sensor.strength_floor <= 1.0) {
            return Err(Error::InvalidConfig("sensor.strength_floor must be in (0, 1]".into()));
        }
        positive("agent.forward_step_m", self.agent.forward_step_m)?;
        positive("agent.turn_step_deg", self.agent.turn_step_deg)?;
        if (360.0 / self.agent.turn_step_deg).fract().abs() > 1e-9 {
            return Err(Error::InvalidConfig("agent.turn_step_deg must divide 360".into()));
        }
        positive("agent.lookahead_m", self.agent.lookahead_m)?;
        if self.agent.replan_interval == 0 {
            return Err(Error::InvalidConfig("agent.replan_interval must be >= 1".into()));
        }
        positive("success_radius_m", self.success_radius_m)?;
        if self.step_budget == 0 {
            return Err(Error::InvalidConfig("step_budget must be >= 1".into()));
        }
        prob("noise.eps_fn", self.noise.eps_fn)?;
        prob("noise.eps_fp", self.noise.eps_fp)?;
        prob("noise.miss_rate", self.noise.miss_rate)?;
        for (from, row) in &self.noise.confusion {
            let mut total = 0.0;
            for (to, &p) in row {
                prob(&format!("noise.confusion.{from}.{to}"), p)?;
                total += p;
            }
            if total > 1.0 + 1e-9 {
                return Err(Error::InvalidConfig(format!("confusion row {from} sums to {total}")));
            }
        }
        if self.embedding.dim < 2 {
            return Err(Error::InvalidConfig("embedding.dim must be >= 2".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded. API keys are left out.
    pub fn fingerprint(&self) -> String {
        let mut redacted = self.clone();
        for ep in [
            &mut redacted.endpoints.embedder,
            &mut redacted.endpoints.decomposer,
            &mut redacted.endpoints.validator,
        ]
        .into_iter()
        .flatten()
        {
            ep.api_key = None;
        }
        let text = serde_json::to_string(&redacted).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = Config::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), c);
        assert_eq!(Config::from_json("{}").unwrap(), c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = Config::from_json(r#"{"fusion": {"alpha": 0.5}, "noise": {"eps_fn": 0.2}}"#).unwrap();
        assert_eq!(c.fusion.alpha, 0.5);
        assert_eq!(c.noise.eps_fn, 0.2);
        assert_eq!(c.step_budget, 2500);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_json(r#"{"fusion": {"alpha": 1.5}}"#).is_err());
        assert!(Config::from_json(r#"{"noise": {"eps_fp": -0.1}}"#).is_err());
        assert!(Config::from_json(r#"{"agent": {"turn_step_deg": 7}}"#).is_err());
        assert!(Config::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.noise.eps_fn = 0.2;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
