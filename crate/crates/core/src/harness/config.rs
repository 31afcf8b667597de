//! Experiment configuration: TOML text, validation and stable hashing.
//!
//! ```toml
//! algorithms = ["mappo", "ppo", "a2c"]
//! seeds = [0, 1, 2, 3, 4]
//!
//! [system]
//! layout_source = "seeded-random"   # or "fixture"
//! users = 10
//! clusters = 4
//! surfaces = 2
//! antennas = 4
//! elements_h = 5
//! elements_v = 2
//! carrier_ghz = 6.0
//! rician_kappa = 3.0
//! noise_density_dbm_hz = -100.0
//! bandwidth_hz = 10000000.0
//! p_max_dbm = 20.0
//! r_min = 0.1
//! per_step_fading = false
//!
//! [sweeps]
//! p_max_dbm = [10.0, 15.0, 20.0, 25.0, 30.0]
//! elements = [5, 10, 20]
//!
//! [hp]
//! gamma = 0.99
//! # ... any HyperParams field
//!
//! [layout]          # optional; same schema as the layout files
//! ```
//!
//! Without a `[layout]` table the built-in verification layout is used.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelParams, PathLossParams};
use crate::environment::{verification_layout, ElementGrid, Layout};
use crate::error::{Error, Result};
use crate::noma::{dbm_to_watts, noise_power};
use crate::rl::{Algorithm, EnvConfig, HyperParams, LayoutSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub layout_source: LayoutSource,
    pub users: usize,
    pub clusters: usize,
    pub surfaces: usize,
    pub antennas: usize,
    pub elements_h: usize,
    pub elements_v: usize,
    pub carrier_ghz: f64,
    pub rician_kappa: f64,
    pub noise_density_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub p_max_dbm: f64,
    pub r_min: f64,
    pub per_step_fading: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            layout_source: LayoutSource::SeededRandom,
            users: 10,
            clusters: 4,
            surfaces: 2,
            antennas: 4,
            elements_h: 5,
            elements_v: 2,
            carrier_ghz: 6.0,
            rician_kappa: 3.0,
            noise_density_dbm_hz: -100.0,
            bandwidth_hz: 1e7,
            p_max_dbm: 20.0,
            r_min: 0.1,
            per_step_fading: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub p_max_dbm: Vec<f64>,
    pub elements: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            p_max_dbm: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            elements: vec![5, 10, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub system: SystemConfig,
    pub sweeps: SweepConfig,
    pub hp: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Mappo, Algorithm::Ppo, Algorithm::A2c],
            seeds: vec![0, 1, 2, 3, 4],
            system: SystemConfig::default(),
            sweeps: SweepConfig::default(),
            hp: HyperParams::default(),
            layout: None,
        }
    }
}

/// Element grid for a total of `m` elements: five columns when `m` divides
/// evenly, otherwise a single row.
pub fn grid_for(m: usize, template: &ElementGrid) -> ElementGrid {
    let (h, v) = if m % 5 == 0 { (5, m / 5) } else { (m, 1) };
    ElementGrid {
        horizontal: h,
        vertical: v,
        ..*template
    }
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn layout(&self) -> Layout {
        let mut layout = self.layout.clone().unwrap_or_else(verification_layout);
        layout.elements.horizontal = self.system.elements_h;
        layout.elements.vertical = self.system.elements_v;
        layout
    }

    /// Every offending field, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let mut p = Vec::new();
        if s.clusters == 0 || s.users < s.clusters {
            p.push(format!("system.clusters: need 1 <= K <= U, got K = {}, U = {}", s.clusters, s.users));
        }
        if s.antennas == 0 {
            p.push("system.antennas: must be positive".into());
        }
        if s.elements_h == 0 || s.elements_v == 0 {
            p.push("system.elements_h/elements_v: must be positive".into());
        }
        if !(s.carrier_ghz > 0.0) {
            p.push(format!("system.carrier_ghz: must be positive, got {}", s.carrier_ghz));
        }
        if !(s.rician_kappa >= 0.0) {
            p.push(format!("system.rician_kappa: must be nonnegative, got {}", s.rician_kappa));
        }
        if !(s.bandwidth_hz > 0.0) {
            p.push(format!("system.bandwidth_hz: must be positive, got {}", s.bandwidth_hz));
        }
        if !s.noise_density_dbm_hz.is_finite() || !s.p_max_dbm.is_finite() {
            p.push("system.noise_density_dbm_hz/p_max_dbm: must be finite".into());
        }
        if !(s.r_min >= 0.0) {
            p.push(format!("system.r_min: must be nonnegative, got {}", s.r_min));
        }
        if self.sweeps.p_max_dbm.is_empty() {
            p.push("sweeps.p_max_dbm: must be nonempty".into());
        }
        if self.sweeps.p_max_dbm.iter().any(|x| !x.is_finite()) {
            p.push("sweeps.p_max_dbm: values must be finite".into());
        }
        if self.sweeps.elements.is_empty() || self.sweeps.elements.contains(&0) {
            p.push("sweeps.elements: must be nonempty and positive".into());
        }
        if self.seeds.is_empty() {
            p.push("seeds: must be nonempty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            p.push("seeds: must be distinct".into());
        }
        if self.algorithms.is_empty() {
            p.push("algorithms: must be nonempty".into());
        }
        p.extend(self.hp.problems());
        let layout = self.layout();
        if layout.num_surfaces() != s.surfaces {
            p.push(format!(
                "system.surfaces: layout has {} surfaces, config says {}",
                layout.num_surfaces(),
                s.surfaces
            ));
        }
        if s.layout_source == LayoutSource::Fixture && layout.num_users() != s.users {
            p.push(format!(
                "system.users: fixture layout has {} users, config says {}",
                layout.num_users(),
                s.users
            ));
        }
        if let Err(e) = layout.validate() {
            p.push(format!("layout: {e}"));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            path_loss: PathLossParams::new(self.system.carrier_ghz),
            rician_kappa: self.system.rician_kappa,
            ap_antennas: self.system.antennas,
        }
    }

    /// Environment at transmit budget `p_max_dbm`, optionally with `elements`
    /// per surface.
    pub fn env_config(&self, p_max_dbm: f64, elements: Option<usize>) -> EnvConfig {
        let s = &self.system;
        let mut layout = self.layout();
        if let Some(m) = elements {
            layout.elements = grid_for(m, &layout.elements);
        }
        EnvConfig {
            layout,
            layout_source: s.layout_source,
            users: s.users,
            clusters: s.clusters,
            channel: self.channel_params(),
            sigma2: noise_power(s.noise_density_dbm_hz, s.bandwidth_hz),
            p_max: dbm_to_watts(p_max_dbm),
            r_min: s.r_min,
            per_step_fading: s.per_step_fading,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("seeds = [7]\n[hp]\nepisodes = 3\n").unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.hp.episodes, 3);
        assert_eq!(cfg.system.users, 10);
    }

    #[test]
    fn hash_tracks_semantic_fields() {
        let base = ExperimentConfig::default();
        let mut seen = vec![base.hash()];
        let mut variants = Vec::new();
        let mut c = base.clone();
        c.system.p_max_dbm = 21.0;
        variants.push(c);
        let mut c = base.clone();
        c.hp.learning_rate = 1e-3;
        variants.push(c);
        let mut c = base.clone();
        c.seeds.push(9);
        variants.push(c);
        let mut c = base.clone();
        c.layout = Some(verification_layout());
        variants.push(c);
        let mut c = base.clone();
        c.sweeps.elements = vec![5];
        variants.push(c);
        for v in variants {
            let h = v.hash();
            assert!(!seen.contains(&h));
            seen.push(h);
        }
        // re-parsing the same text gives the same hash
        let again = ExperimentConfig::from_toml(&base.to_toml().unwrap()).unwrap();
        assert_eq!(again.hash(), base.hash());
    }

    #[test]
    fn validation_lists_offending_fields() {
        let text = "seeds = [1, 1]\nalgorithms = []\n[system]\nusers = 2\nclusters = 3\nsurfaces = 3\n[sweeps]\np_max_dbm = []\n[hp]\ngamma = 2.0\n";
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config(p)) => {
                for field in ["system.clusters", "sweeps.p_max_dbm", "seeds", "algorithms", "hp.gamma", "system.surfaces"] {
                    assert!(p.iter().any(|m| m.starts_with(field)), "missing {field} in {p:?}");
                }
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::Parse(_))));
    }

    #[test]
    fn element_grids() {
        let g = ElementGrid::default();
        assert_eq!(grid_for(20, &g).horizontal, 5);
        assert_eq!(grid_for(20, &g).vertical, 4);
        assert_eq!(grid_for(7, &g).count(), 7);
        assert_eq!(grid_for(7, &g).vertical, 1);
    }
}
