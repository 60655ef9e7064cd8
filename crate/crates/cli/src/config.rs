use std::path::{Path, PathBuf};

use aerochunk::control::{ModelParams, NmpcConfig};
use aerochunk::geometry::{read_stl, TriangleMesh};
use aerochunk::mission::{AgentSetup, MissionConfig, MissionSetup, NoiseConfig};
use aerochunk::search::SearchConfig;
use aerochunk::toolpath::SlicerConfig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Standard deviations of the additive plant noise. Zero disables it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseLevels {
    pub position_sigma: f64,
    pub velocity_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: Option<PathBuf>,
    /// Factor applied to the mesh coordinates on load.
    pub scale: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub search: SearchConfig,
    pub agents: Vec<AgentSetup>,
    pub slicer: SlicerConfig,
    pub mission: MissionConfig,
    pub control: NmpcConfig,
    pub model: ModelParams,
    pub noise: NoiseLevels,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: None,
            scale: 1.0,
            out: PathBuf::from("out"),
            seed: 0,
            search: SearchConfig::default(),
            agents: vec![AgentSetup { capacity: 0.04, battery: 1.0, home: None }; 2],
            slicer: SlicerConfig::default(),
            mission: MissionConfig::default(),
            control: NmpcConfig::default(),
            model: ModelParams::default(),
            noise: NoiseLevels::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Checks every block; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            bail!("scale must be positive, got {}", self.scale);
        }
        self.search.validate()?;
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.capacity.is_finite() && a.capacity > 0.0) {
                bail!("agents[{i}].capacity must be positive");
            }
            if !(0.0..=1.0).contains(&a.battery) {
                bail!("agents[{i}].battery must lie in [0, 1]");
            }
        }
        let n = &self.noise;
        if !(n.position_sigma >= 0.0 && n.velocity_sigma >= 0.0 && n.position_sigma.is_finite() && n.velocity_sigma.is_finite()) {
            bail!("noise.position_sigma and noise.velocity_sigma must be non-negative");
        }
        self.setup().validate()?;
        Ok(())
    }

    pub fn setup(&self) -> MissionSetup {
        let noisy = self.noise.position_sigma > 0.0 || self.noise.velocity_sigma > 0.0;
        MissionSetup {
            agents: self.agents.clone(),
            slicer: self.slicer.clone(),
            mission: self.mission.clone(),
            control: self.control.clone(),
            model: self.model.clone(),
            noise: noisy.then(|| NoiseConfig {
                seed: self.seed,
                position_sigma: self.noise.position_sigma,
                velocity_sigma: self.noise.velocity_sigma,
            }),
        }
    }

    pub fn mesh_path(&self) -> Result<&Path> {
        match &self.mesh {
            Some(p) => Ok(p),
            None => bail!("mesh: no mesh given (use --mesh or set \"mesh\" in the config)"),
        }
    }

    pub fn load_mesh(&self) -> Result<TriangleMesh> {
        let path = self.mesh_path()?;
        if !path.exists() {
            bail!("mesh not found: {}", path.display());
        }
        let mesh = read_stl(path).with_context(|| format!("reading mesh {}", path.display()))?;
        let mesh = if self.scale == 1.0 { mesh } else { mesh.scaled(self.scale) };
        mesh.check_watertight().with_context(|| format!("mesh {}", path.display()))?;
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_take_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"mesh": "m.stl", "search": {"w_inner": 5}}"#).unwrap();
        assert_eq!(c.search.w_inner, 5);
        assert_eq!(c.search.w_outer, 4);
        assert_eq!(c.control.horizon, 40);
        assert_eq!(c.mission.l_ex, 0.5);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"serch": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"control": {"horizn": 3}}"#).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.agents[1].capacity = -1.0;
        assert!(c.validate().unwrap_err().to_string().contains("agents[1].capacity"));
        let c = RunConfig { search: SearchConfig { delta: 0.0, ..Default::default() }, ..Default::default() };
        assert!(c.validate().unwrap_err().to_string().contains("search.delta"));
        let c = RunConfig { control: NmpcConfig { dt: 0.0, ..Default::default() }, ..Default::default() };
        assert!(c.validate().unwrap_err().to_string().contains("control.dt"));
    }

    #[test]
    fn noise_only_when_requested() {
        let mut c = RunConfig::default();
        assert!(c.setup().noise.is_none());
        c.noise.position_sigma = 0.01;
        c.seed = 9;
        assert_eq!(c.setup().noise.unwrap().seed, 9);
    }
}
