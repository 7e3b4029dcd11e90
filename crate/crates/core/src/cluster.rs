//! Cluster topology and bookkeeping: nodes, NUMA domains, exclusive CPUs and
//! pod bindings.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::allocator::{self, KubeletPolicy};
use crate::error::{Error, Result};
use crate::model::{CpuAssignment, PodSpec, ResourceQuantity, GIB, MILLICORES_PER_CPU};
use crate::rational::{self, Rational};

pub const CONTROL_PLANE: &str = "control-plane";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumaDomain {
    pub domain_id: u32,
    pub allocatable_cpus: BTreeSet<u32>,
    pub free_exclusive_cpus: BTreeSet<u32>,
    pub bandwidth_capacity_gbps: Rational,
}

/// A pod currently bound on a node, with what it consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodBinding {
    pub resources: ResourceQuantity,
    pub assignment: CpuAssignment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub node_id: String,
    pub domains: Vec<NumaDomain>,
    pub allocatable: ResourceQuantity,
    pub allocated: ResourceQuantity,
    pub bindings: BTreeMap<String, PodBinding>,
}

impl NodeState {
    pub fn free(&self) -> ResourceQuantity {
        // allocated <= allocatable is a node invariant
        ResourceQuantity::new(
            self.allocatable.cpu_millicores - self.allocated.cpu_millicores,
            self.allocatable.memory_bytes - self.allocated.memory_bytes,
        )
    }

    pub fn free_exclusive_cpu_count(&self) -> usize {
        self.domains.iter().map(|d| d.free_exclusive_cpus.len()).sum()
    }

    pub fn allocatable_cpu_count(&self) -> usize {
        self.domains.iter().map(|d| d.allocatable_cpus.len()).sum()
    }

    pub fn domain(&self, domain_id: u32) -> Option<&NumaDomain> {
        self.domains.iter().find(|d| d.domain_id == domain_id)
    }

    /// Checks the node-level invariants; used by tests and the simulator's
    /// self-checks.
    pub fn check_invariants(&self) -> Result<()> {
        if !self.allocated.fits_within(&self.allocatable) {
            return Err(Error::invariant(format!(
                "node {} over-allocated: {} > {}",
                self.node_id, self.allocated, self.allocatable
            )));
        }
        let mut held = BTreeSet::new();
        for (pod, b) in &self.bindings {
            for cpu in &b.assignment.cpu_ids {
                if !held.insert(*cpu) {
                    return Err(Error::invariant(format!(
                        "cpu {cpu} on {} held twice (second holder {pod})",
                        self.node_id
                    )));
                }
            }
        }
        for d in &self.domains {
            if !d.free_exclusive_cpus.is_subset(&d.allocatable_cpus) {
                return Err(Error::invariant(format!(
                    "domain {} of {} has free cpus outside its allocatable set",
                    d.domain_id, self.node_id
                )));
            }
            for cpu in &d.free_exclusive_cpus {
                if held.contains(cpu) {
                    return Err(Error::invariant(format!(
                        "cpu {cpu} on {} is both free and held",
                        self.node_id
                    )));
                }
            }
        }
        let used: usize = self
            .domains
            .iter()
            .map(|d| d.allocatable_cpus.len() - d.free_exclusive_cpus.len())
            .sum();
        if used != held.len() {
            return Err(Error::invariant(format!(
                "node {}: {used} cpus taken from domains but {} held by pods",
                self.node_id,
                held.len()
            )));
        }
        let total: ResourceQuantity = self.bindings.values().map(|b| b.resources).sum();
        if total != self.allocated {
            return Err(Error::invariant(format!(
                "node {}: bound pods sum to {total} but allocated is {}",
                self.node_id, self.allocated
            )));
        }
        Ok(())
    }
}

/// Homogeneous cluster description as found in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub worker_nodes: u32,
    pub sockets: u32,
    pub cores_per_socket: u32,
    /// Cores per socket withheld for system daemons.
    pub reserved_per_socket: u32,
    pub memory_gib: u64,
    /// Per-domain memory bandwidth; falls back to the perf parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_bandwidth_gbps: Option<f64>,
}

impl Default for ClusterConfig {
    /// Four worker nodes with two 18-core sockets, two cores reserved per
    /// socket, 256 GiB each.
    fn default() -> Self {
        ClusterConfig {
            worker_nodes: 4,
            sockets: 2,
            cores_per_socket: 18,
            reserved_per_socket: 2,
            memory_gib: 256,
            domain_bandwidth_gbps: None,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.worker_nodes == 0 {
            return Err(Error::config("cluster needs at least one worker node"));
        }
        if self.sockets == 0 {
            return Err(Error::config("nodes need at least one socket"));
        }
        if self.reserved_per_socket >= self.cores_per_socket {
            return Err(Error::config(
                "reserved cores must leave at least one allocatable core per socket",
            ));
        }
        if self.memory_gib == 0 {
            return Err(Error::config("node memory must be positive"));
        }
        if let Some(bw) = self.domain_bandwidth_gbps {
            if !(bw > 0.0) {
                return Err(Error::config("domain bandwidth must be positive"));
            }
        }
        Ok(())
    }

    pub fn node_ids(&self) -> Vec<String> {
        (1..=self.worker_nodes).map(|i| format!("node-{i}")).collect()
    }

    /// Builds the initial (empty) cluster. Reserved cores are the lowest-numbered
    /// cores of every socket and never appear as allocatable.
    pub fn build(&self, default_bandwidth_gbps: f64) -> Result<ClusterState> {
        self.validate()?;
        let bw = rational::from_f64(self.domain_bandwidth_gbps.unwrap_or(default_bandwidth_gbps))?;
        if bw <= rational::zero() {
            return Err(Error::config("domain bandwidth must be positive"));
        }
        let nodes = self
            .node_ids()
            .into_iter()
            .map(|node_id| {
                let domains: Vec<NumaDomain> = (0..self.sockets)
                    .map(|socket| {
                        let first = socket * self.cores_per_socket;
                        let cpus: BTreeSet<u32> = (first + self.reserved_per_socket
                            ..first + self.cores_per_socket)
                            .collect();
                        NumaDomain {
                            domain_id: socket,
                            free_exclusive_cpus: cpus.clone(),
                            allocatable_cpus: cpus,
                            bandwidth_capacity_gbps: bw.clone(),
                        }
                    })
                    .collect();
                let cpus: u64 = domains.iter().map(|d| d.allocatable_cpus.len() as u64).sum();
                NodeState {
                    node_id,
                    domains,
                    allocatable: ResourceQuantity::new(
                        cpus * MILLICORES_PER_CPU,
                        self.memory_gib * GIB,
                    ),
                    allocated: ResourceQuantity::ZERO,
                    bindings: BTreeMap::new(),
                }
            })
            .collect();
        Ok(ClusterState::new(nodes))
    }
}

/// Worker nodes plus the cluster-wide binding maps.
///
/// Nodes are kept sorted by `node_id`; the control-plane node hosts
/// launchers only and has no schedulable capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterState {
    pub nodes: Vec<NodeState>,
    /// pod id -> node id, for every bound pod (launchers included).
    pub pod_nodes: BTreeMap<String, String>,
    /// node id -> (job id, group id) -> number of bound workers.
    pub groups_on_node: BTreeMap<String, BTreeMap<(String, u32), u32>>,
    pod_groups: BTreeMap<String, (String, u32)>,
}

impl ClusterState {
    pub fn new(mut nodes: Vec<NodeState>) -> Self {
        nodes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        ClusterState {
            nodes,
            pod_nodes: BTreeMap::new(),
            groups_on_node: BTreeMap::new(),
            pod_groups: BTreeMap::new(),
        }
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeState> {
        self.nodes
            .binary_search_by(|n| n.node_id.as_str().cmp(node_id))
            .ok()
            .map(|i| &self.nodes[i])
    }

    fn node_index(&self, node_id: &str) -> Result<usize> {
        self.nodes
            .binary_search_by(|n| n.node_id.as_str().cmp(node_id))
            .map_err(|_| Error::invariant(format!("unknown node {node_id}")))
    }

    pub fn node_groups(&self, node_id: &str) -> BTreeSet<(String, u32)> {
        self.groups_on_node
            .get(node_id)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Binds the launcher to the control plane. It consumes no capacity.
    pub fn bind_launcher(&mut self, pod: &PodSpec) -> Result<()> {
        if self.pod_nodes.contains_key(&pod.pod_id) {
            return Err(Error::invariant(format!("pod {} already bound", pod.pod_id)));
        }
        self.pod_nodes
            .insert(pod.pod_id.clone(), CONTROL_PLANE.to_string());
        Ok(())
    }

    /// Admits a worker on `node_id` through the node allocator and records
    /// its group for anti-affinity scoring.
    pub fn bind_worker(
        &mut self,
        pod: &PodSpec,
        node_id: &str,
        group_id: u32,
        policy: KubeletPolicy,
        pinned: Option<&CpuAssignment>,
    ) -> Result<CpuAssignment> {
        if self.pod_nodes.contains_key(&pod.pod_id) {
            return Err(Error::invariant(format!("pod {} already bound", pod.pod_id)));
        }
        let idx = self.node_index(node_id)?;
        let assignment = match pinned {
            Some(a) => allocator::admit_pod_pinned(pod, &mut self.nodes[idx], a)?,
            None => allocator::admit_pod(pod, &mut self.nodes[idx], policy)?,
        };
        self.pod_nodes.insert(pod.pod_id.clone(), node_id.to_string());
        let key = (pod.job_id.clone(), group_id);
        *self
            .groups_on_node
            .entry(node_id.to_string())
            .or_default()
            .entry(key.clone())
            .or_insert(0) += 1;
        self.pod_groups.insert(pod.pod_id.clone(), key);
        Ok(assignment)
    }

    /// Releases any bound pod (launcher or worker).
    pub fn unbind(&mut self, pod_id: &str) -> Result<()> {
        let node_id = self
            .pod_nodes
            .remove(pod_id)
            .ok_or_else(|| Error::invariant(format!("pod {pod_id} is not bound")))?;
        if node_id == CONTROL_PLANE {
            return Ok(());
        }
        let idx = self.node_index(&node_id)?;
        allocator::release_pod(pod_id, &mut self.nodes[idx])?;
        if let Some(key) = self.pod_groups.remove(pod_id) {
            let per_node = self
                .groups_on_node
                .get_mut(&node_id)
                .ok_or_else(|| Error::invariant(format!("no groups recorded on {node_id}")))?;
            let count = per_node
                .get_mut(&key)
                .ok_or_else(|| Error::invariant(format!("group of {pod_id} not on {node_id}")))?;
            *count -= 1;
            if *count == 0 {
                per_node.remove(&key);
            }
            if per_node.is_empty() {
                self.groups_on_node.remove(&node_id);
            }
        }
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<()> {
        for node in &self.nodes {
            node.check_invariants()?;
            for pod in node.bindings.keys() {
                if self.pod_nodes.get(pod) != Some(&node.node_id) {
                    return Err(Error::invariant(format!(
                        "pod {pod} held on {} without a matching binding",
                        node.node_id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cluster_matches_reserved_core_layout() {
        let c = ClusterConfig::default().build(40.0).unwrap();
        assert_eq!(c.nodes.len(), 4);
        let n = &c.nodes[0];
        assert_eq!(n.node_id, "node-1");
        assert_eq!(n.domains.len(), 2);
        assert_eq!(n.domains[0].allocatable_cpus.len(), 16);
        assert_eq!(n.domains[1].allocatable_cpus.len(), 16);
        assert!(!n.domains[0].allocatable_cpus.contains(&0));
        assert!(!n.domains[0].allocatable_cpus.contains(&1));
        assert!(n.domains[0].allocatable_cpus.contains(&2));
        assert!(!n.domains[1].allocatable_cpus.contains(&19));
        assert!(n.domains[1].allocatable_cpus.contains(&20));
        assert_eq!(n.allocatable, ResourceQuantity::cores_gib(32, 256));
        n.check_invariants().unwrap();
    }

    #[test]
    fn config_validation() {
        let mut cfg = ClusterConfig::default();
        cfg.reserved_per_socket = 18;
        assert!(cfg.validate().is_err());
        let mut cfg = ClusterConfig::default();
        cfg.worker_nodes = 0;
        assert!(cfg.build(40.0).is_err());
        assert!(ClusterConfig::default().build(0.0).is_err());
    }

    #[test]
    fn unbind_unknown_pod_is_an_error() {
        let mut c = ClusterConfig::default().build(40.0).unwrap();
        assert!(c.unbind("nope").is_err());
    }
}
