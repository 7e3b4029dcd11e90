//! Node-level CPU assignment emulating the kubelet CPU manager and topology
//! manager policies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{NodeState, PodBinding};
use crate::error::{Error, Result};
use crate::model::{CpuAssignment, CpuMode, PodSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpuManagerPolicy {
    None,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyManagerPolicy {
    None,
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KubeletPolicy {
    pub cpu_manager: CpuManagerPolicy,
    pub topology_manager: TopologyManagerPolicy,
}

impl KubeletPolicy {
    /// Kubelet defaults: shared CPUs, no topology hints.
    pub const DEFAULT: KubeletPolicy = KubeletPolicy {
        cpu_manager: CpuManagerPolicy::None,
        topology_manager: TopologyManagerPolicy::None,
    };

    /// `--cpu-manager-policy=static --topology-manager-policy=best-effort`
    pub const AFFINITY: KubeletPolicy = KubeletPolicy {
        cpu_manager: CpuManagerPolicy::Static,
        topology_manager: TopologyManagerPolicy::BestEffort,
    };

    pub fn exclusive_cpus(&self) -> bool {
        self.cpu_manager == CpuManagerPolicy::Static
    }
}

impl FromStr for CpuManagerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CpuManagerPolicy::None),
            "static" => Ok(CpuManagerPolicy::Static),
            _ => Err(Error::config(format!("unknown cpu manager policy {s:?}"))),
        }
    }
}

impl FromStr for TopologyManagerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TopologyManagerPolicy::None),
            "best-effort" => Ok(TopologyManagerPolicy::BestEffort),
            _ => Err(Error::config(format!("unknown topology manager policy {s:?}"))),
        }
    }
}

impl fmt::Display for KubeletPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cpu = match self.cpu_manager {
            CpuManagerPolicy::None => "none",
            CpuManagerPolicy::Static => "static",
        };
        let topo = match self.topology_manager {
            TopologyManagerPolicy::None => "none",
            TopologyManagerPolicy::BestEffort => "best-effort",
        };
        write!(f, "cpu-manager={cpu},topology-manager={topo}")
    }
}

/// Starts `pod` on `node`: charges its resources and, under the static CPU
/// manager, reserves exclusive CPUs.
///
/// The scheduler is expected to have checked capacity; running out here is an
/// invariant violation.
pub fn admit_pod(pod: &PodSpec, node: &mut NodeState, policy: KubeletPolicy) -> Result<CpuAssignment> {
    check_admissible(pod, node)?;
    let assignment = match policy.cpu_manager {
        CpuManagerPolicy::None => CpuAssignment::shared(),
        CpuManagerPolicy::Static => {
            let k = pod.resources.whole_cpus().ok_or_else(|| {
                Error::invariant(format!(
                    "pod {} requests fractional cpus under the static policy",
                    pod.pod_id
                ))
            })? as usize;
            if k == 0 {
                CpuAssignment::shared()
            } else {
                let free = node.free_exclusive_cpu_count();
                if free < k {
                    return Err(Error::invariant(format!(
                        "pod {} needs {k} exclusive cpus but {} has {free}",
                        pod.pod_id, node.node_id
                    )));
                }
                let picked = match policy.topology_manager {
                    TopologyManagerPolicy::BestEffort => pick_best_effort(node, k),
                    TopologyManagerPolicy::None => pick_lowest(node, k),
                };
                take_cpus(node, picked)
            }
        }
    };
    commit(pod, node, assignment.clone());
    Ok(assignment)
}

/// Re-applies a previously recorded assignment verbatim. Used by binding
/// replay, where the exact CPU ids must match the recorded run.
pub fn admit_pod_pinned(
    pod: &PodSpec,
    node: &mut NodeState,
    assignment: &CpuAssignment,
) -> Result<CpuAssignment> {
    check_admissible(pod, node)?;
    let mut picked: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for cpu in &assignment.cpu_ids {
        let domain = node
            .domains
            .iter()
            .find(|d| d.free_exclusive_cpus.contains(cpu))
            .ok_or_else(|| {
                Error::invariant(format!(
                    "pinned cpu {cpu} for {} is not free on {}",
                    pod.pod_id, node.node_id
                ))
            })?;
        picked.entry(domain.domain_id).or_default().push(*cpu);
    }
    let granted = if assignment.mode == CpuMode::Shared {
        CpuAssignment::shared()
    } else {
        take_cpus(node, picked)
    };
    commit(pod, node, granted.clone());
    Ok(granted)
}

/// Stops `pod_id` on `node`, returning its CPUs and resources.
pub fn release_pod(pod_id: &str, node: &mut NodeState) -> Result<()> {
    let binding = node.bindings.remove(pod_id).ok_or_else(|| {
        Error::invariant(format!("pod {pod_id} is not bound on {}", node.node_id))
    })?;
    for cpu in &binding.assignment.cpu_ids {
        let domain = node
            .domains
            .iter_mut()
            .find(|d| d.allocatable_cpus.contains(cpu))
            .ok_or_else(|| Error::invariant(format!("cpu {cpu} not on {}", node.node_id)))?;
        domain.free_exclusive_cpus.insert(*cpu);
    }
    node.allocated = node.allocated.checked_sub(&binding.resources)?;
    Ok(())
}

fn check_admissible(pod: &PodSpec, node: &NodeState) -> Result<()> {
    if node.bindings.contains_key(&pod.pod_id) {
        return Err(Error::invariant(format!(
            "pod {} already bound on {}",
            pod.pod_id, node.node_id
        )));
    }
    if !(node.allocated + pod.resources).fits_within(&node.allocatable) {
        return Err(Error::invariant(format!(
            "pod {} {} does not fit on {} (free {})",
            pod.pod_id,
            pod.resources,
            node.node_id,
            node.free()
        )));
    }
    Ok(())
}

fn commit(pod: &PodSpec, node: &mut NodeState, assignment: CpuAssignment) {
    node.allocated += pod.resources;
    node.bindings.insert(
        pod.pod_id.clone(),
        PodBinding {
            resources: pod.resources,
            assignment,
        },
    );
}

/// Domain with the most free CPUs, lowest id on ties.
fn fullest_free_domain<'a>(
    free: impl Iterator<Item = (u32, usize)> + 'a,
) -> Option<(u32, usize)> {
    free.fold(None, |best: Option<(u32, usize)>, (id, n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ => Some((id, n)),
    })
}

fn pick_best_effort(node: &NodeState, k: usize) -> BTreeMap<u32, Vec<u32>> {
    let single = fullest_free_domain(
        node.domains
            .iter()
            .map(|d| (d.domain_id, d.free_exclusive_cpus.len()))
            .filter(|&(_, n)| n >= k),
    );
    let mut picked = BTreeMap::new();
    if let Some((id, _)) = single {
        let d = node.domain(id).expect("domain exists");
        picked.insert(id, d.free_exclusive_cpus.iter().take(k).copied().collect());
        return picked;
    }
    // No single domain fits: spill greedily, largest free domain first.
    let mut remaining: BTreeMap<u32, BTreeSet<u32>> = node
        .domains
        .iter()
        .map(|d| (d.domain_id, d.free_exclusive_cpus.clone()))
        .collect();
    let mut need = k;
    while need > 0 {
        let Some((id, n)) = fullest_free_domain(
            remaining
                .iter()
                .map(|(id, s)| (*id, s.len()))
                .filter(|&(_, n)| n > 0),
        ) else {
            break;
        };
        let take = n.min(need);
        let set = remaining.get_mut(&id).expect("domain present");
        let chosen: Vec<u32> = set.iter().take(take).copied().collect();
        for c in &chosen {
            set.remove(c);
        }
        picked.entry(id).or_insert_with(Vec::new).extend(chosen);
        need -= take;
    }
    picked
}

fn pick_lowest(node: &NodeState, k: usize) -> BTreeMap<u32, Vec<u32>> {
    let mut all: Vec<(u32, u32)> = node
        .domains
        .iter()
        .flat_map(|d| d.free_exclusive_cpus.iter().map(move |c| (*c, d.domain_id)))
        .collect();
    all.sort_unstable();
    let mut picked: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (cpu, domain) in all.into_iter().take(k) {
        picked.entry(domain).or_default().push(cpu);
    }
    picked
}

fn take_cpus(node: &mut NodeState, picked: BTreeMap<u32, Vec<u32>>) -> CpuAssignment {
    let mut assignment = CpuAssignment {
        mode: CpuMode::Exclusive,
        cpu_ids: BTreeSet::new(),
        domain_spread: BTreeMap::new(),
    };
    for (domain_id, cpus) in picked {
        let domain = node
            .domains
            .iter_mut()
            .find(|d| d.domain_id == domain_id)
            .expect("picked from an existing domain");
        for cpu in &cpus {
            domain.free_exclusive_cpus.remove(cpu);
            assignment.cpu_ids.insert(*cpu);
        }
        assignment.domain_spread.insert(domain_id, cpus.len() as u32);
    }
    assignment
}
