//! Application-layer granularity selection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GranularityPlan, JobSpec, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GranularityPolicy {
    /// Split compute/memory jobs into one worker per node.
    Scale,
    /// Split compute/memory jobs into one worker per task.
    Granularity,
    /// Keep the user's worker count on a single node.
    None,
    /// One process per container for every profile, as a stock batch
    /// scheduler's MPI plugin does.
    VolcanoNative,
    /// All processes in a single worker container.
    #[serde(rename = "kubeflow")]
    KubeflowSingle,
}

impl GranularityPolicy {
    pub const ALL: [GranularityPolicy; 5] = [
        GranularityPolicy::Scale,
        GranularityPolicy::Granularity,
        GranularityPolicy::None,
        GranularityPolicy::VolcanoNative,
        GranularityPolicy::KubeflowSingle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GranularityPolicy::Scale => "scale",
            GranularityPolicy::Granularity => "granularity",
            GranularityPolicy::None => "none",
            GranularityPolicy::VolcanoNative => "volcano-native",
            GranularityPolicy::KubeflowSingle => "kubeflow",
        }
    }
}

impl fmt::Display for GranularityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GranularityPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GranularityPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown granularity policy {s:?}")))
    }
}

/// Chooses (nodes, workers, groups) for `job`. `max_nodes` is the number of
/// worker nodes the cluster offers.
pub fn select_granularity(
    job: &JobSpec,
    max_nodes: u32,
    policy: GranularityPolicy,
) -> GranularityPlan {
    let max_nodes = max_nodes.max(1);
    let n_t = job.n_tasks;
    let spread = max_nodes.min(n_t);
    match policy {
        GranularityPolicy::Scale | GranularityPolicy::Granularity
            if job.profile == Profile::Network =>
        {
            GranularityPlan::new(1, 1, 1)
        }
        GranularityPolicy::Scale => GranularityPlan::new(spread, spread, spread),
        GranularityPolicy::Granularity => GranularityPlan::new(spread, n_t, spread),
        GranularityPolicy::None => GranularityPlan::new(1, job.default_n_workers, 1),
        GranularityPolicy::VolcanoNative => GranularityPlan::new(spread, n_t, spread),
        GranularityPolicy::KubeflowSingle => GranularityPlan::new(1, 1, 1),
    }
}
