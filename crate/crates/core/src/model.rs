//! Domain types shared by the planner, controller, scheduler, allocator and
//! simulator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

pub const MILLICORES_PER_CPU: u64 = 1000;
pub const GIB: u64 = 1 << 30;

/// CPU in millicores and memory in bytes. All arithmetic is integer-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceQuantity {
    pub cpu_millicores: u64,
    pub memory_bytes: u64,
}

impl ResourceQuantity {
    pub const ZERO: ResourceQuantity = ResourceQuantity {
        cpu_millicores: 0,
        memory_bytes: 0,
    };

    pub const fn new(cpu_millicores: u64, memory_bytes: u64) -> Self {
        ResourceQuantity {
            cpu_millicores,
            memory_bytes,
        }
    }

    pub const fn cores_gib(cores: u64, gib: u64) -> Self {
        ResourceQuantity::new(cores * MILLICORES_PER_CPU, gib * GIB)
    }

    pub fn is_zero(&self) -> bool {
        self.cpu_millicores == 0 && self.memory_bytes == 0
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &ResourceQuantity) -> bool {
        self.cpu_millicores <= other.cpu_millicores && self.memory_bytes <= other.memory_bytes
    }

    pub fn checked_sub(&self, other: &ResourceQuantity) -> Result<ResourceQuantity> {
        let cpu = self.cpu_millicores.checked_sub(other.cpu_millicores);
        let mem = self.memory_bytes.checked_sub(other.memory_bytes);
        match (cpu, mem) {
            (Some(c), Some(m)) => Ok(ResourceQuantity::new(c, m)),
            _ => Err(Error::invariant(format!(
                "resource subtraction below zero: {self} - {other}"
            ))),
        }
    }

    /// Number of whole CPUs, or `None` when the request has a fractional core.
    pub fn whole_cpus(&self) -> Option<u64> {
        (self.cpu_millicores % MILLICORES_PER_CPU == 0)
            .then_some(self.cpu_millicores / MILLICORES_PER_CPU)
    }

    /// CPUs needed to host this request, rounding fractional cores up.
    pub fn cpus_ceil(&self) -> u64 {
        self.cpu_millicores.div_ceil(MILLICORES_PER_CPU)
    }
}

impl Add for ResourceQuantity {
    type Output = ResourceQuantity;

    fn add(self, rhs: ResourceQuantity) -> ResourceQuantity {
        ResourceQuantity::new(
            self.cpu_millicores + rhs.cpu_millicores,
            self.memory_bytes + rhs.memory_bytes,
        )
    }
}

impl AddAssign for ResourceQuantity {
    fn add_assign(&mut self, rhs: ResourceQuantity) {
        *self = *self + rhs;
    }
}

impl Sum for ResourceQuantity {
    fn sum<I: Iterator<Item = ResourceQuantity>>(iter: I) -> Self {
        iter.fold(ResourceQuantity::ZERO, Add::add)
    }
}

impl fmt::Display for ResourceQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}m, {}B)", self.cpu_millicores, self.memory_bytes)
    }
}

/// Scales a job-level request down to the share of `n_tasks_in_pod` tasks.
///
/// Exact: both components must be divisible by `n_total_tasks`.
pub fn resource_scale(
    r: ResourceQuantity,
    n_tasks_in_pod: u32,
    n_total_tasks: u32,
) -> Result<ResourceQuantity> {
    if n_total_tasks == 0 {
        return Err(Error::config("total task count must be at least 1"));
    }
    if n_tasks_in_pod > n_total_tasks {
        return Err(Error::config(format!(
            "pod task count {n_tasks_in_pod} exceeds job task count {n_total_tasks}"
        )));
    }
    let divisor = u64::from(n_total_tasks);
    if r.cpu_millicores % divisor != 0 {
        return Err(Error::Indivisible {
            field: "cpu_millicores",
            value: r.cpu_millicores,
            divisor: n_total_tasks,
        });
    }
    if r.memory_bytes % divisor != 0 {
        return Err(Error::Indivisible {
            field: "memory_bytes",
            value: r.memory_bytes,
            divisor: n_total_tasks,
        });
    }
    let k = u64::from(n_tasks_in_pod);
    Ok(ResourceQuantity::new(
        r.cpu_millicores / divisor * k,
        r.memory_bytes / divisor * k,
    ))
}

/// Application profile used by the planner and the performance model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Network,
    Cpu,
    Memory,
    CpuMemory,
}

impl Profile {
    pub const ALL: [Profile; 4] = [
        Profile::Network,
        Profile::Cpu,
        Profile::Memory,
        Profile::CpuMemory,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Network => "network",
            Profile::Cpu => "cpu",
            Profile::Memory => "memory",
            Profile::CpuMemory => "cpu-memory",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown profile {s:?}")))
    }
}

/// An MPI job as submitted by the user.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub job_id: String,
    /// Catalog entry this job was instantiated from.
    pub benchmark: String,
    pub n_tasks: u32,
    pub total_resources: ResourceQuantity,
    pub profile: Profile,
    pub submit_time_s: Rational,
    pub base_runtime_s: Rational,
    pub per_process_bandwidth_gbps: Rational,
    pub default_n_workers: u32,
}

impl JobSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::Validation {
                job_id: self.job_id.clone(),
                reason,
            })
        };
        if self.job_id.is_empty() {
            return fail("empty job id".into());
        }
        if self.n_tasks == 0 {
            return fail("n_tasks must be at least 1".into());
        }
        if self.default_n_workers == 0 {
            return fail("default_n_workers must be at least 1".into());
        }
        if self.submit_time_s.is_negative() {
            return fail("negative submit time".into());
        }
        if !self.base_runtime_s.is_positive() {
            return fail("base runtime must be positive".into());
        }
        if self.per_process_bandwidth_gbps.is_negative() {
            return fail("negative bandwidth demand".into());
        }
        resource_scale(self.total_resources, self.n_tasks, self.n_tasks).map_err(|e| {
            Error::Validation {
                job_id: self.job_id.clone(),
                reason: e.to_string(),
            }
        })?;
        Ok(())
    }
}

/// Planner output: nodes to span, worker containers, and task groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GranularityPlan {
    pub n_nodes: u32,
    pub n_workers: u32,
    pub n_groups: u32,
}

impl GranularityPlan {
    pub const fn new(n_nodes: u32, n_workers: u32, n_groups: u32) -> Self {
        GranularityPlan {
            n_nodes,
            n_workers,
            n_groups,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PodRole {
    Launcher,
    Worker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodSpec {
    pub pod_id: String,
    pub job_id: String,
    pub role: PodRole,
    /// `Some(i)` for worker `i`, `None` for the launcher.
    pub worker_index: Option<u32>,
    pub n_tasks_in_pod: u32,
    pub resources: ResourceQuantity,
}

impl PodSpec {
    pub fn worker_id(job_id: &str, index: u32) -> String {
        format!("{job_id}-worker-{index}")
    }

    pub fn launcher_id(job_id: &str) -> String {
        format!("{job_id}-launcher")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CpuMode {
    Shared,
    Exclusive,
}

/// CPUs granted to a pod by the node allocator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpuAssignment {
    pub mode: CpuMode,
    pub cpu_ids: BTreeSet<u32>,
    /// domain id -> number of CPUs taken from that domain.
    pub domain_spread: BTreeMap<u32, u32>,
}

impl CpuAssignment {
    pub fn shared() -> Self {
        CpuAssignment {
            mode: CpuMode::Shared,
            cpu_ids: BTreeSet::new(),
            domain_spread: BTreeMap::new(),
        }
    }

    /// More than one NUMA domain contributes CPUs.
    pub fn is_split(&self) -> bool {
        self.domain_spread.values().filter(|&&n| n > 0).count() > 1
    }

    /// Compact `0-3,8,10-11` rendering of the CPU ids.
    pub fn cpu_list(&self) -> String {
        let mut parts = Vec::new();
        let mut ids = self.cpu_ids.iter().copied().peekable();
        while let Some(start) = ids.next() {
            let mut end = start;
            while ids.peek() == Some(&(end + 1)) {
                end = ids.next().unwrap();
            }
            if start == end {
                parts.push(start.to_string());
            } else {
                parts.push(format!("{start}-{end}"));
            }
        }
        if parts.is_empty() {
            "shared".to_string()
        } else {
            parts.join(",")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub pod_id: String,
    pub node_id: String,
    /// Task group of the pod; `None` for launchers.
    pub group_id: Option<u32>,
}
