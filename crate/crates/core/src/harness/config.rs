//! Experiment configuration files (TOML).
//!
//! Every table is optional except `name` and `robot`; paths are relative to the config file.
//!
//! ```toml
//! name = "row1"
//! robot = "../robots/planar_2r.toml"
//!
//! [sst]
//! samples = 4000
//! alpha_rule = "cover"   # or median_nn, fixed, hull
//! alpha = 1.5
//!
//! [targets]
//! center = [0.25, -0.42, 0.0]
//! extent = [0.06, 0.03]  # m along each grid axis
//! counts = [5, 5]
//! seed_configuration = [-1.0, -0.6]
//!
//! [goal_babbling]
//! samples = 60000
//! [goal_babbling.llm]
//! insertion_radius = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::direction_sampling::DirectionSamplingConfig;
use crate::error::{Error, Result};
use crate::goal_babbling::GoalBabblingConfig;
use crate::learner::{BatchConfig, LlmConfig};
use crate::model::{ManipulatorModel, SettleParams};
use crate::sst::{Alpha, Projection};
use crate::symmetry::{DiscoveryConfig, MatchConfig};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub robot: PathBuf,
    #[serde(default)]
    pub sst: SstStage,
    #[serde(default)]
    pub targets: Option<TargetSpec>,
    #[serde(default)]
    pub goal_babbling: GbStage,
    #[serde(default)]
    pub symmetry: SymmetryStage,
    #[serde(default)]
    pub direction_sampling: DsStage,
    #[serde(default)]
    pub batch: BatchStage,
    #[serde(default)]
    pub evaluate: EvalStage,
    #[serde(default)]
    pub table1: Option<Table1Spec>,
    /// Directory the config was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha` times the smallest threshold that keeps every sample in the complex.
    #[default]
    Cover,
    /// `alpha` times the median nearest-neighbour distance.
    MedianNn,
    /// `alpha` in N m.
    Fixed,
    /// Convex hull; `alpha` is ignored.
    Hull,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SstStage {
    pub samples: usize,
    pub alpha_rule: AlphaRule,
    pub alpha: f64,
    pub projection: Projection,
}

impl Default for SstStage {
    fn default() -> Self {
        SstStage { samples: 4000, alpha_rule: AlphaRule::Cover, alpha: 1.5, projection: Projection::Vertex }
    }
}

impl SstStage {
    pub fn alpha(&self) -> Alpha {
        match self.alpha_rule {
            AlphaRule::Cover => Alpha::Cover(self.alpha),
            AlphaRule::MedianNn => Alpha::MedianNn(self.alpha),
            AlphaRule::Fixed => Alpha::Fixed(self.alpha),
            AlphaRule::Hull => Alpha::Fixed(f64::INFINITY),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TestTargets {
    /// Cell centres of the training grid (one fewer per axis), interleaving it.
    #[default]
    Offset,
    None,
}

/// Task-space target grid, converted to joint goals by inverse kinematics at setup.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// m, grid centre.
    pub center: Vec<f64>,
    /// m, edge length along each grid axis.
    pub extent: Vec<f64>,
    pub counts: Vec<usize>,
    /// Task axes spanned by the grid; defaults to the first `extent.len()` axes.
    #[serde(default)]
    pub axes: Vec<usize>,
    /// IK seed for every target.
    pub seed_configuration: Vec<f64>,
    #[serde(default)]
    pub test: TestTargets,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GbStage {
    pub samples: usize,
    pub l: usize,
    pub p_home: f64,
    pub noise_amplitude: f64,
    pub noise_timescale: f64,
    pub shuffle_goals: bool,
    pub settle: SettleParams,
    pub llm: LlmConfig,
}

impl Default for GbStage {
    fn default() -> Self {
        let d = GoalBabblingConfig::default();
        GbStage {
            samples: 60_000,
            l: d.l,
            p_home: d.p_home,
            noise_amplitude: d.noise_amplitude,
            noise_timescale: d.noise_timescale,
            shuffle_goals: d.shuffle_goals,
            settle: d.settle,
            llm: d.llm,
        }
    }
}

impl GbStage {
    pub fn to_config(&self, goals: Vec<Vec<f64>>) -> GoalBabblingConfig {
        let per_pass = (goals.len() * self.l.max(1)).max(1);
        GoalBabblingConfig {
            goals,
            l: self.l,
            n_iter: self.samples.div_ceil(per_pass),
            p_home: self.p_home,
            noise_amplitude: self.noise_amplitude,
            noise_timescale: self.noise_timescale,
            shuffle_goals: self.shuffle_goals,
            settle: self.settle,
            llm: self.llm,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetryStage {
    /// Lattice centre as a fraction of the SST bounding box per axis; empty picks a generic point.
    pub tau_center: Vec<f64>,
    /// Lattice spacing as a fraction of the SST bounding box.
    pub spacing: f64,
    /// Lattice shape; empty picks 4x3 (2 joints), 3x2x2 (3 joints), 3 per axis otherwise.
    pub lattice: Vec<usize>,
    pub discovery: DiscoveryConfig,
    pub matching: MatchConfig,
    pub anchor: Option<Vec<f64>>,
    pub stable_first: bool,
    pub soundness_samples: usize,
    pub bcts_samples: usize,
}

impl Default for SymmetryStage {
    fn default() -> Self {
        SymmetryStage {
            tau_center: Vec::new(),
            spacing: 0.03,
            lattice: Vec::new(),
            discovery: DiscoveryConfig::default(),
            matching: MatchConfig::default(),
            anchor: None,
            stable_first: true,
            soundness_samples: 1000,
            bcts_samples: 100_000,
        }
    }
}

impl SymmetryStage {
    pub fn lattice_shape(&self, n: usize) -> Vec<usize> {
        if !self.lattice.is_empty() {
            return self.lattice.clone();
        }
        match n {
            1 => vec![4],
            2 => vec![4, 3],
            3 => vec![3, 2, 2],
            _ => vec![3; n],
        }
    }

    pub fn center_fraction(&self, n: usize) -> Vec<f64> {
        if !self.tau_center.is_empty() {
            return self.tau_center.clone();
        }
        (0..n).map(|i| 0.31 + 0.07 * i as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DsRegion {
    #[default]
    Limits,
    Bcts,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DsStage {
    pub samples: usize,
    pub region: DsRegion,
    /// Learn every symmetric image of each sample (needs the symmetry artifact).
    pub expand: bool,
    pub params: DirectionSamplingConfig,
    /// Coverage cells per joint over the limit box.
    pub coverage_cells: usize,
    /// Evaluation targets drawn from a regular grid with this many points per joint.
    pub target_grid: usize,
    pub inside_targets: usize,
    pub outside_targets: usize,
}

impl Default for DsStage {
    fn default() -> Self {
        DsStage {
            samples: 300_000,
            region: DsRegion::Limits,
            expand: false,
            params: DirectionSamplingConfig::default(),
            coverage_cells: 40,
            target_grid: 24,
            inside_targets: 15,
            outside_targets: 13,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BatchStage {
    /// Lattice samples inside the BCTS.
    pub bcts_samples: usize,
    /// N m, Gaussian noise added to every training torque.
    pub noise_sd: f64,
    pub net: BatchConfig,
    /// Test grid points per joint over the limit box.
    pub test_grid: usize,
    /// Full-space lattice sizes tried for the matched comparison.
    pub full_space_sizes: Vec<usize>,
}

impl Default for BatchStage {
    fn default() -> Self {
        BatchStage {
            bcts_samples: 700,
            noise_sd: 0.2,
            net: BatchConfig::default(),
            test_grid: 4,
            full_space_sizes: vec![700, 1400, 2800, 5600, 8400, 11250, 16000],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[default]
    GoalBabbling,
    DirectionSampling,
    Batch,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalStage {
    pub learner: LearnerKind,
    pub settle: SettleParams,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Table1Row {
    pub label: String,
    pub config: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Table1Spec {
    pub rows: Vec<Table1Row>,
    /// Seeds per row are `seed, seed + 1, ...`; the median is reported.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut c: ExperimentConfig = toml::from_str(s)?;
        c.base_dir = base_dir.into();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn robot_model(&self) -> Result<ManipulatorModel> {
        ManipulatorModel::load(self.resolve(&self.robot))
    }

    fn validate(&self) -> Result<()> {
        if let Some(t) = &self.targets {
            let d = t.extent.len();
            if d == 0 || d > 3 || t.counts.len() != d || t.center.len() != 3 {
                return Err(Error::InvalidConfig("targets: extent/counts must have 1-3 entries and center 3".into()));
            }
            if !t.axes.is_empty() && t.axes.len() != d {
                return Err(Error::InvalidConfig("targets: axes must match extent".into()));
            }
            if t.counts.iter().any(|&c| c == 0) {
                return Err(Error::InvalidConfig("targets: zero count".into()));
            }
        }
        if self.sst.samples == 0 {
            return Err(Error::InvalidConfig("sst.samples must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the parsed config and the robot model it references.
    pub fn hash(&self) -> Result<String> {
        let model = self.robot_model()?;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        h.update(serde_json::to_vec(&model)?);
        Ok(hex::encode(h.finalize()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("name = \"x\"\nrobot = \"r.toml\"\n", "/tmp").unwrap();
        assert_eq!(c.sst.samples, 4000);
        assert_eq!(c.goal_babbling.samples, 60_000);
        assert_eq!(c.resolve(Path::new("r.toml")), PathBuf::from("/tmp/r.toml"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("name = \"x\"\nrobot = \"r\"\nbogus = 1\n", ".").is_err());
        assert!(ExperimentConfig::from_toml_str("name = \"x\"\nrobot = \"r\"\n[sst]\nsample = 3\n", ".").is_err());
    }

    #[test]
    fn gb_passes_cover_budget() {
        let s = GbStage { samples: 1001, l: 10, ..Default::default() };
        let c = s.to_config(vec![vec![0.0]; 5]);
        assert_eq!(c.n_iter, 21);
    }
}
