//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kring_core::oracle::ScheduleMode;
use kring_core::radio::{RadioParams, Scenario};
use kring_core::sim::SimConfig;
use kring_core::topology::{AssociationPolicy, Deployment, Placement, PlacementSpec};
use kring_core::Exec;

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub deployment: DeploymentConfig,
    #[serde(default)]
    pub radio: RadioParams,
    pub experiment: Experiment,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl ExperimentConfig {
    /// Defaults for `experiment`. The full-duplex sweep mixes uplink and
    /// downlink UEs half and half; everything else is downlink only.
    pub fn new(experiment: Experiment) -> Self {
        let mut deployment = DeploymentConfig::default();
        if matches!(experiment, Experiment::FullduplexSweep { .. }) {
            deployment.placement.dl_fraction = 0.5;
        }
        Self {
            deployment,
            radio: RadioParams::default(),
            experiment,
            out: None,
            seed: 0,
            exec: Exec::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.radio.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.experiment.validate()
    }
}

/// Where the UEs come from: generated on a k-ring, or read from a JSON dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    pub k: u32,
    pub spacing_m: f64,
    pub placement: PlacementSpec,
    pub association: AssociationPolicy,
    /// Deployment JSON to load instead of generating one.
    pub file: Option<PathBuf>,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            k: 3,
            spacing_m: 200.0,
            placement: PlacementSpec::new(Placement::Random {
                mean_per_bs: 2.0,
                los_prob: 0.5,
                los_range_m: 200.0,
            }),
            association: AssociationPolicy::MinPathloss,
            file: None,
        }
    }
}

impl DeploymentConfig {
    /// Builds, populates and associates the deployment.
    pub fn build(&self, radio: &RadioParams, seed: u64) -> kring_core::Result<Deployment> {
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                kring_core::Error::Param(format!("cannot read {}: {e}", path.display()))
            })?;
            let dep = Deployment::from_json(&text)?;
            return if dep.is_associated() {
                Ok(dep)
            } else {
                dep.associate(self.association, radio)
            };
        }
        Deployment::build_kring(self.k, self.spacing_m)?
            .place_ues(&self.placement, seed)?
            .associate(self.association, radio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duplex {
    #[default]
    Half,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Analyze {
        #[serde(default)]
        duplex: Duplex,
        /// Fraction of worst UEs replaced by pseudo UEs (soft max-min).
        #[serde(default)]
        soft_fraction: f64,
        /// Also build the explicit link schedule (half duplex only).
        #[serde(default)]
        schedule: bool,
    },
    SweepK {
        #[serde(default = "one")]
        k_min: u32,
        #[serde(default = "seven")]
        k_max: u32,
        #[serde(default = "two")]
        ues_per_bs: usize,
        /// UE distance from its BS; half the inter-site distance when absent.
        #[serde(default)]
        offset_m: Option<f64>,
        #[serde(default = "yes")]
        los: bool,
        /// `[bs_antennas, ue_antennas]` pairs.
        #[serde(default = "default_antennas")]
        antennas: Vec<[u32; 2]>,
    },
    OabCompare {
        #[serde(default = "default_zetas")]
        zetas: Vec<f64>,
    },
    FullduplexSweep {
        #[serde(default = "default_si")]
        si_db: Vec<f64>,
        #[serde(default)]
        soft_fraction: f64,
    },
    Dualconn {
        #[serde(default = "half")]
        zeta: f64,
    },
    Oracle {
        #[serde(default = "default_schedules")]
        schedules: ScheduleMode,
        #[serde(default = "worst_case")]
        interference: Scenario,
    },
    Simulate {
        #[serde(default)]
        sim: SimConfig,
    },
}

fn one() -> u32 {
    1
}
fn seven() -> u32 {
    7
}
fn two() -> usize {
    2
}
fn yes() -> bool {
    true
}
fn half() -> f64 {
    0.5
}
fn worst_case() -> Scenario {
    Scenario::WorstCase
}
fn default_antennas() -> Vec<[u32; 2]> {
    vec![[64, 16], [256, 64]]
}
fn default_zetas() -> Vec<f64> {
    vec![0.15, 0.5]
}
fn default_si() -> Vec<f64> {
    (0..=8).map(|i| -130.0 + 10.0 * i as f64).collect()
}
fn default_schedules() -> ScheduleMode {
    ScheduleMode::TriplesPlusGreedy {
        n_greedy: 2000,
        min_links: 4,
        fiber_bias: 0.5,
        seed: 0,
    }
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Analyze { .. } => "analyze",
            Experiment::SweepK { .. } => "sweep_k",
            Experiment::OabCompare { .. } => "oab_compare",
            Experiment::FullduplexSweep { .. } => "fullduplex_sweep",
            Experiment::Dualconn { .. } => "dualconn",
            Experiment::Oracle { .. } => "oracle",
            Experiment::Simulate { .. } => "simulate",
        }
    }

    /// Defaults for a kind given by name.
    pub fn default_for(kind: &str) -> Result<Self, ConfigError> {
        serde_json::from_value(serde_json::json!({ "kind": kind })).map_err(|e| ConfigError(e.to_string()))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        let fraction = |f: f64| (0.0..1.0).contains(&f);
        match self {
            Experiment::Analyze { soft_fraction, .. } | Experiment::FullduplexSweep { soft_fraction, .. }
                if !fraction(*soft_fraction) =>
            {
                bad(format!("soft_fraction must lie in [0, 1), got {soft_fraction}"))
            }
            Experiment::FullduplexSweep { si_db, .. } if si_db.iter().any(|s| !(*s <= 0.0)) => {
                bad("si_db values must be <= 0".into())
            }
            Experiment::SweepK { k_min, k_max, .. } if k_min > k_max || *k_min == 0 => {
                bad(format!("need 1 <= k_min <= k_max, got {k_min}..{k_max}"))
            }
            Experiment::SweepK { antennas, ues_per_bs, .. } if antennas.is_empty() || *ues_per_bs == 0 => {
                bad("sweep_k needs at least one antenna pair and one UE per BS".into())
            }
            Experiment::OabCompare { zetas } if zetas.iter().any(|z| !(*z > 0.0 && *z < 1.0)) => {
                bad("zetas must lie in (0, 1)".into())
            }
            Experiment::Dualconn { zeta } if !(*zeta > 0.0 && *zeta < 1.0) => {
                bad(format!("zeta must lie in (0, 1), got {zeta}"))
            }
            Experiment::Simulate { sim } => sim.validate().map_err(|e| ConfigError(e.to_string())),
            _ => Ok(()),
        }
    }
}
