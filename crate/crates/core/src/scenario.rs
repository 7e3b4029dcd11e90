//! Scenario definitions: cluster, kubelet policy, planner policy, scheduler,
//! performance parameters and workload.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! name = "CM_G_TG"
//! planner = "granularity"          # scale | granularity | none | volcano-native | kubeflow
//! scheduler = "taskgroup"          # baseline | taskgroup
//! default_n_workers = 1            # optional, used by planner = "none"
//!
//! [kubelet]
//! cpu_manager = "static"           # none | static
//! topology_manager = "best-effort" # none | best-effort
//!
//! [cluster]
//! worker_nodes = 4
//! sockets = 2
//! cores_per_socket = 18
//! reserved_per_socket = 2
//! memory_gib = 256
//!
//! [perf]                           # optional, defaults to the shipped calibration
//! # ...
//!
//! [workload]
//! preset = "exp2"                  # or `arrivals = [...]`, or `[workload.generator]`
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocator::KubeletPolicy;
use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::model::JobSpec;
use crate::perf::PerfParams;
use crate::planner::GranularityPolicy;
use crate::scheduler::SchedulerMode;
use crate::workload::{self, WorkloadSpec};

/// The six kubelet/planner/scheduler combinations compared in the evaluation.
pub const PAPER_SCENARIOS: [&str; 6] = ["NONE", "CM", "CM_S", "CM_G", "CM_S_TG", "CM_G_TG"];

/// Framework comparison set.
pub const FRAMEWORK_SCENARIOS: [&str; 5] = ["kubeflow", "volcano-native", "CM", "CM_S_TG", "CM_G_TG"];

pub const WORKLOAD_PRESETS: [&str; 3] = ["exp1", "exp2", "exp3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub planner: GranularityPolicy,
    pub scheduler: SchedulerMode,
    #[serde(default = "one")]
    pub default_n_workers: u32,
    pub kubelet: KubeletPolicy,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default = "PerfParams::calibrated")]
    pub perf: PerfParams,
    pub workload: WorkloadSpec,
}

fn one() -> u32 {
    1
}

/// (kubelet, planner, scheduler) for a named scenario.
pub fn mode(name: &str) -> Result<(KubeletPolicy, GranularityPolicy, SchedulerMode)> {
    use GranularityPolicy as G;
    use SchedulerMode::{Baseline, TaskGroup};
    let cm = KubeletPolicy::AFFINITY;
    Ok(match name {
        "NONE" => (KubeletPolicy::DEFAULT, G::None, Baseline),
        "CM" => (cm, G::None, Baseline),
        "CM_S" => (cm, G::Scale, Baseline),
        "CM_G" => (cm, G::Granularity, Baseline),
        "CM_S_TG" => (cm, G::Scale, TaskGroup),
        "CM_G_TG" => (cm, G::Granularity, TaskGroup),
        "kubeflow" => (cm, G::KubeflowSingle, Baseline),
        "volcano-native" => (cm, G::VolcanoNative, Baseline),
        _ => return Err(Error::config(format!("unknown scenario {name:?}"))),
    })
}

impl ScenarioSpec {
    /// Template for a workload preset (`exp1`, `exp2`, `exp3`) on the default
    /// four-node cluster, configured as `CM_G_TG`.
    pub fn preset(name: &str) -> Result<Self> {
        workload::workload_preset(name)?;
        ScenarioSpec {
            name: "CM_G_TG".into(),
            planner: GranularityPolicy::Granularity,
            scheduler: SchedulerMode::TaskGroup,
            default_n_workers: 1,
            kubelet: KubeletPolicy::AFFINITY,
            cluster: ClusterConfig::default(),
            perf: PerfParams::calibrated(),
            workload: WorkloadSpec::preset(name),
        }
        .with_mode("CM_G_TG")
    }

    /// Same workload and cluster under another named scenario.
    pub fn with_mode(mut self, name: &str) -> Result<Self> {
        let (kubelet, planner, scheduler) = mode(name)?;
        self.name = name.to_string();
        self.kubelet = kubelet;
        self.planner = planner;
        self.scheduler = scheduler;
        Ok(self)
    }

    pub fn with_perf(mut self, perf: PerfParams) -> Self {
        self.perf = perf;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| Error::config(format!("bad scenario file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("scenario name is empty"));
        }
        if self.default_n_workers == 0 {
            return Err(Error::config("default_n_workers must be at least 1"));
        }
        self.cluster.validate()?;
        self.perf.validate()?;
        self.workload.validate()
    }

    /// The concrete job list for `seed`.
    pub fn jobs(&self, seed: u64) -> Result<Vec<JobSpec>> {
        workload::generate(&self.workload, seed, self.default_n_workers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_modes() {
        let s = ScenarioSpec::preset("exp1").unwrap();
        assert_eq!(s.name, "CM_G_TG");
        assert_eq!(s.jobs(0).unwrap().len(), 10);
        for name in PAPER_SCENARIOS.iter().chain(FRAMEWORK_SCENARIOS.iter()) {
            let m = ScenarioSpec::preset("exp2").unwrap().with_mode(name).unwrap();
            assert_eq!(&m.name, name);
        }
        let none = ScenarioSpec::preset("exp2").unwrap().with_mode("NONE").unwrap();
        assert!(!none.kubelet.exclusive_cpus());
        let err = ScenarioSpec::preset("exp7").unwrap_err();
        assert!(err.to_string().contains("exp7"));
        assert!(ScenarioSpec::preset("exp2").unwrap().with_mode("CM_X").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = ScenarioSpec::preset("exp2").unwrap().with_mode("CM_S").unwrap();
        let text = s.to_toml_string();
        assert_eq!(ScenarioSpec::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let text = r#"
name = "mine"
planner = "scale"
scheduler = "taskgroup"

[kubelet]
cpu_manager = "static"
topology_manager = "best-effort"

[workload]
arrivals = [
  { benchmark = "EP-STREAM", submit_time_s = 0.0 },
  { benchmark = "G-FFT", submit_time_s = 12.5 },
]
"#;
        let s = ScenarioSpec::from_toml_str(text).unwrap();
        assert_eq!(s.cluster, ClusterConfig::default());
        assert_eq!(s.perf, PerfParams::calibrated());
        assert_eq!(s.jobs(3).unwrap().len(), 2);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ScenarioSpec::from_toml_str("name = 'x'\nbogus = 1").is_err());
        let text = r#"
name = "x"
planner = "sideways"
scheduler = "taskgroup"
[kubelet]
cpu_manager = "static"
topology_manager = "best-effort"
[workload]
preset = "exp1"
"#;
        assert!(ScenarioSpec::from_toml_str(text).is_err());
    }
}
