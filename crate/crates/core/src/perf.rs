//! Parametric slowdown model.
//!
//! A job's execution rate is `1 / total` where `total` is the product of four
//! factors:
//! * `s_net`: spanning more nodes adds communication cost,
//! * `s_cpu`: several processes sharing a container migrate between its CPUs,
//! * `s_mem`: the most oversubscribed NUMA domain the job uses gates all of its
//!   ranks,
//! * `s_remote`: unpinned or domain-split workers pay for remote accesses.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::error::{Error, Result};
use crate::model::{CpuAssignment, CpuMode, JobSpec, Profile};
use crate::rational::{self, int, Rational};

/// One float per application profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTable {
    pub network: f64,
    pub cpu: f64,
    pub memory: f64,
    #[serde(rename = "cpu-memory")]
    pub cpu_memory: f64,
}

impl ProfileTable {
    pub fn get(&self, p: Profile) -> f64 {
        match p {
            Profile::Network => self.network,
            Profile::Cpu => self.cpu,
            Profile::Memory => self.memory,
            Profile::CpuMemory => self.cpu_memory,
        }
    }

    pub fn get_mut(&mut self, p: Profile) -> &mut f64 {
        match p {
            Profile::Network => &mut self.network,
            Profile::Cpu => &mut self.cpu,
            Profile::Memory => &mut self.memory,
            Profile::CpuMemory => &mut self.cpu_memory,
        }
    }
}

/// Tunable model parameters. All must be non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfParams {
    pub alpha_net_network: f64,
    pub alpha_net_other: f64,
    pub beta_mig: ProfileTable,
    pub rho_remote: ProfileTable,
    pub domain_bandwidth_gbps: f64,
}

impl Default for PerfParams {
    /// Uncalibrated placeholders.
    fn default() -> Self {
        PerfParams {
            alpha_net_network: 12.0,
            alpha_net_other: 0.02,
            beta_mig: ProfileTable {
                network: 0.05,
                cpu: 0.25,
                memory: 0.10,
                cpu_memory: 0.15,
            },
            rho_remote: ProfileTable {
                network: 0.0,
                cpu: 0.0,
                memory: 0.15,
                cpu_memory: 0.10,
            },
            domain_bandwidth_gbps: 40.0,
        }
    }
}

const CALIBRATED: &str = include_str!("../params/calibrated.toml");

impl PerfParams {
    /// Parameters shipped with the crate, produced by the calibrate command.
    pub fn calibrated() -> Self {
        toml::from_str(CALIBRATED).expect("shipped calibrated parameters parse")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: PerfParams =
            toml::from_str(text).map_err(|e| Error::config(format!("bad parameters file: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named_values() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("perf parameter {name} = {v} must be >= 0")));
            }
        }
        if self.domain_bandwidth_gbps <= 0.0 {
            return Err(Error::config("domain_bandwidth_gbps must be positive"));
        }
        Ok(())
    }

    /// Flat `name -> value` view; names are the ones accepted by
    /// [`PerfParams::set`].
    pub fn named_values(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("alpha_net_network".to_string(), self.alpha_net_network),
            ("alpha_net_other".to_string(), self.alpha_net_other),
        ];
        for p in Profile::ALL {
            out.push((format!("beta_mig.{p}"), self.beta_mig.get(p)));
        }
        for p in Profile::ALL {
            out.push((format!("rho_remote.{p}"), self.rho_remote.get(p)));
        }
        out.push(("domain_bandwidth_gbps".to_string(), self.domain_bandwidth_gbps));
        out
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "alpha_net_network" => &mut self.alpha_net_network,
            "alpha_net_other" => &mut self.alpha_net_other,
            "domain_bandwidth_gbps" => &mut self.domain_bandwidth_gbps,
            _ => {
                let (table, profile) = name
                    .split_once('.')
                    .ok_or_else(|| Error::config(format!("unknown perf parameter {name:?}")))?;
                let profile: Profile = profile.parse()?;
                match table {
                    "beta_mig" => self.beta_mig.get_mut(profile),
                    "rho_remote" => self.rho_remote.get_mut(profile),
                    _ => return Err(Error::config(format!("unknown perf parameter {name:?}"))),
                }
            }
        };
        *slot = value;
        Ok(())
    }
}

/// Exact-rational form of [`PerfParams`], built once per simulation.
#[derive(Debug, Clone)]
pub struct PerfModel {
    alpha_net_network: Rational,
    alpha_net_other: Rational,
    beta_mig: BTreeMap<Profile, Rational>,
    rho_remote: BTreeMap<Profile, Rational>,
}

impl PerfModel {
    pub fn new(params: &PerfParams) -> Result<Self> {
        params.validate()?;
        let table = |t: &ProfileTable| -> Result<BTreeMap<Profile, Rational>> {
            Profile::ALL
                .into_iter()
                .map(|p| Ok((p, rational::from_f64(t.get(p))?)))
                .collect()
        };
        Ok(PerfModel {
            alpha_net_network: rational::from_f64(params.alpha_net_network)?,
            alpha_net_other: rational::from_f64(params.alpha_net_other)?,
            beta_mig: table(&params.beta_mig)?,
            rho_remote: table(&params.rho_remote)?,
        })
    }

    fn alpha(&self, p: Profile) -> &Rational {
        if p == Profile::Network {
            &self.alpha_net_network
        } else {
            &self.alpha_net_other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlowdownBreakdown {
    pub s_net: Rational,
    pub s_cpu: Rational,
    pub s_mem: Rational,
    pub s_remote: Rational,
    pub total: Rational,
}

impl SlowdownBreakdown {
    pub fn compose(s_net: Rational, s_cpu: Rational, s_mem: Rational, s_remote: Rational) -> Self {
        let total = &s_net * &s_cpu * &s_mem * &s_remote;
        SlowdownBreakdown {
            s_net,
            s_cpu,
            s_mem,
            s_remote,
            total,
        }
    }

    pub fn none() -> Self {
        SlowdownBreakdown {
            s_net: rational::one(),
            s_cpu: rational::one(),
            s_mem: rational::one(),
            s_remote: rational::one(),
            total: rational::one(),
        }
    }
}

/// Where one worker of a job runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerPlacement {
    pub node_id: String,
    pub assignment: CpuAssignment,
    pub n_tasks: u32,
}

pub type DomainKey = (String, u32);

/// Per-domain bandwidth capacity and the demand currently placed on it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainLoad {
    pub capacity: BTreeMap<DomainKey, Rational>,
    pub demand: BTreeMap<DomainKey, Rational>,
}

impl DomainLoad {
    pub fn from_cluster(cluster: &ClusterState) -> Self {
        let mut capacity = BTreeMap::new();
        for n in &cluster.nodes {
            for d in &n.domains {
                capacity.insert((n.node_id.clone(), d.domain_id), d.bandwidth_capacity_gbps.clone());
            }
        }
        DomainLoad {
            capacity,
            demand: BTreeMap::new(),
        }
    }

    fn node_domains<'a>(&'a self, node_id: &'a str) -> impl Iterator<Item = &'a DomainKey> + 'a {
        self.capacity.keys().filter(move |(n, _)| n == node_id)
    }

    pub fn add(&mut self, contribution: &BTreeMap<DomainKey, Rational>) {
        for (k, v) in contribution {
            *self.demand.entry(k.clone()).or_insert_with(Rational::zero) += v;
        }
    }

    pub fn remove(&mut self, contribution: &BTreeMap<DomainKey, Rational>) {
        for (k, v) in contribution {
            if let Some(d) = self.demand.get_mut(k) {
                *d -= v;
                if d.is_zero() {
                    self.demand.remove(k);
                }
            }
        }
    }

    pub fn demand_on(&self, key: &DomainKey) -> Rational {
        self.demand.get(key).cloned().unwrap_or_else(Rational::zero)
    }
}

/// Bandwidth a job places on each domain. Pinned workers load the domains
/// their CPUs come from, in proportion; shared workers spread evenly over all
/// domains of their node. Domains with no demand are left out.
pub fn job_demand(
    job: &JobSpec,
    placement: &[WorkerPlacement],
    load: &DomainLoad,
) -> BTreeMap<DomainKey, Rational> {
    if job.per_process_bandwidth_gbps.is_zero() {
        return BTreeMap::new();
    }
    // Task counts per domain, kept in small exact fractions until the end.
    let mut tasks: BTreeMap<DomainKey, Ratio<i64>> = BTreeMap::new();
    for w in placement {
        if w.n_tasks == 0 {
            continue;
        }
        let n_tasks = i64::from(w.n_tasks);
        match w.assignment.mode {
            CpuMode::Exclusive if !w.assignment.domain_spread.is_empty() => {
                let cpus: u32 = w.assignment.domain_spread.values().sum();
                for (&d, &n) in &w.assignment.domain_spread {
                    *tasks.entry((w.node_id.clone(), d)).or_default() +=
                        Ratio::new(n_tasks * i64::from(n), i64::from(cpus));
                }
            }
            _ => {
                let domains: Vec<&DomainKey> = load.node_domains(&w.node_id).collect();
                let share = Ratio::new(n_tasks, domains.len().max(1) as i64);
                for key in domains {
                    *tasks.entry(key.clone()).or_default() += share;
                }
            }
        }
    }
    tasks
        .into_iter()
        .filter(|(_, n)| !n.is_zero())
        .map(|(k, n)| {
            let n = Rational::new((*n.numer()).into(), (*n.denom()).into());
            (k, n * &job.per_process_bandwidth_gbps)
        })
        .collect()
}

/// The factors that depend only on where the job's workers are:
/// `(s_net, s_cpu, s_remote)`.
pub fn placement_factors(
    job: &JobSpec,
    placement: &[WorkerPlacement],
    model: &PerfModel,
) -> (Rational, Rational, Rational) {
    let nodes: BTreeSet<&str> = placement
        .iter()
        .filter(|w| w.n_tasks > 0)
        .map(|w| w.node_id.as_str())
        .collect();
    let span = nodes.len().max(1) as i64 - 1;
    let s_net = rational::one() + model.alpha(job.profile) * int(span);

    let beta = &model.beta_mig[&job.profile];
    let any_shared = placement
        .iter()
        .any(|w| w.n_tasks > 0 && w.assignment.mode == CpuMode::Shared);
    let s_cpu = if any_shared {
        rational::one() + beta
    } else {
        let worst = placement
            .iter()
            .filter(|w| w.n_tasks > 0)
            .map(|w| rational::ratio(i64::from(w.n_tasks) - 1, i64::from(w.n_tasks)))
            .max()
            .unwrap_or_else(Rational::zero);
        rational::one() + beta * worst
    };

    let remote = any_shared
        || placement
            .iter()
            .any(|w| w.n_tasks > 0 && w.assignment.is_split());
    let s_remote = if remote {
        rational::one() + &model.rho_remote[&job.profile]
    } else {
        Rational::one()
    };
    (s_net, s_cpu, s_remote)
}

/// Worst oversubscription over the domains in `demand` (the job's own
/// contribution), never below 1.
pub fn memory_factor(demand: &BTreeMap<DomainKey, Rational>, load: &DomainLoad) -> Rational {
    let mut s_mem = rational::one();
    for key in demand.keys() {
        if let Some(cap) = load.capacity.get(key) {
            let ratio = load.demand_on(key) / cap;
            if ratio > s_mem {
                s_mem = ratio;
            }
        }
    }
    s_mem
}

/// Slowdown of `job` given its placement and the bandwidth demand of every
/// running job (its own included) in `load`.
///
/// Memory contention applies only on domains the job itself draws bandwidth
/// from; a job with no bandwidth demand is not slowed by saturated domains.
pub fn job_slowdown(
    job: &JobSpec,
    placement: &[WorkerPlacement],
    load: &DomainLoad,
    model: &PerfModel,
) -> SlowdownBreakdown {
    let (s_net, s_cpu, s_remote) = placement_factors(job, placement, model);
    let s_mem = memory_factor(&job_demand(job, placement, load), load);
    SlowdownBreakdown::compose(s_net, s_cpu, s_mem, s_remote)
}
