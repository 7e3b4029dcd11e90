//! Infrastructure-layer placement.
//!
//! Two schedulers share the same gang admission loop:
//! * the task-group scheduler, which partitions a job's workers into groups
//!   with similar requests, keeps each group together and pushes groups
//!   (of any job) apart;
//! * the baseline least-requested scheduler with random tie-breaking.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::KubeletPolicy;
use crate::cluster::{ClusterState, NodeState, CONTROL_PLANE};
use crate::controller::PodSet;
use crate::error::{Error, Result};
use crate::model::{Binding, GranularityPlan, JobSpec, PodSpec, ResourceQuantity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CpuPolicy {
    SharedCpus,
    StaticExclusive,
}

impl From<KubeletPolicy> for CpuPolicy {
    fn from(k: KubeletPolicy) -> Self {
        if k.exclusive_cpus() {
            CpuPolicy::StaticExclusive
        } else {
            CpuPolicy::SharedCpus
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerMode {
    Baseline,
    #[serde(rename = "taskgroup")]
    TaskGroup,
}

impl SchedulerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerMode::Baseline => "baseline",
            SchedulerMode::TaskGroup => "taskgroup",
        }
    }
}

impl fmt::Display for SchedulerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SchedulerMode::Baseline),
            "taskgroup" => Ok(SchedulerMode::TaskGroup),
            _ => Err(Error::config(format!("unknown scheduler mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGroup {
    pub job_id: String,
    pub group_id: u32,
    pub members: Vec<String>,
    pub total_request: ResourceQuantity,
    /// One entry per already-bound member.
    pub bound_nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulingOutcome {
    /// Every pod of the job, launcher last.
    Bound(Vec<Binding>),
    Unschedulable(String),
}

impl SchedulingOutcome {
    pub fn is_bound(&self) -> bool {
        matches!(self, SchedulingOutcome::Bound(_))
    }
}

/// Assigns workers, in index order, to the group with the smallest total
/// request (lowest group id on ties).
pub fn build_groups(n_groups: u32, workers: &[PodSpec]) -> Vec<TaskGroup> {
    let job_id = workers.first().map(|w| w.job_id.clone()).unwrap_or_default();
    let mut groups: Vec<TaskGroup> = (0..n_groups.max(1))
        .map(|group_id| TaskGroup {
            job_id: job_id.clone(),
            group_id,
            members: Vec::new(),
            total_request: ResourceQuantity::ZERO,
            bound_nodes: Vec::new(),
        })
        .collect();
    let mut sorted: Vec<&PodSpec> = workers.iter().collect();
    sorted.sort_by_key(|w| w.worker_index);
    for w in sorted {
        let target = groups
            .iter_mut()
            .min_by_key(|g| (g.total_request, g.group_id))
            .expect("at least one group");
        target.members.push(w.pod_id.clone());
        target.total_request += w.resources;
    }
    groups
}

/// All of group 0's workers, then group 1's, and so on.
pub fn worker_order(groups: &[TaskGroup]) -> Vec<String> {
    let mut sorted: Vec<&TaskGroup> = groups.iter().collect();
    sorted.sort_by_key(|g| g.group_id);
    sorted
        .into_iter()
        .flat_map(|g| g.members.iter().cloned())
        .collect()
}

fn fits(request: &ResourceQuantity, free: &ResourceQuantity, free_cpus: usize, policy: CpuPolicy) -> bool {
    if !request.fits_within(free) {
        return false;
    }
    match policy {
        CpuPolicy::SharedCpus => true,
        CpuPolicy::StaticExclusive => match request.whole_cpus() {
            Some(k) => free_cpus as u64 >= k,
            None => false,
        },
    }
}

/// Capacity filter. Under the static CPU policy the pod must request whole
/// CPUs and the node must have that many exclusive CPUs free.
pub fn predicate(pod: &PodSpec, node: &NodeState, cpu_policy: CpuPolicy) -> bool {
    fits(&pod.resources, &node.free(), node.free_exclusive_cpu_count(), cpu_policy)
}

fn group_score(
    group: &TaskGroup,
    node_id: &str,
    binding_state: &BTreeMap<String, String>,
    groups_on_node: &BTreeSet<(String, u32)>,
) -> i64 {
    let mut bound_here = 0i64;
    let mut remaining = 0i64;
    for m in &group.members {
        match binding_state.get(m) {
            Some(n) if n == node_id => bound_here += 1,
            Some(_) => {}
            None => remaining += 1,
        }
    }
    let foreign = groups_on_node
        .iter()
        .filter(|(job, gid)| !(job == &group.job_id && *gid == group.group_id))
        .count() as i64;
    bound_here + remaining - foreign
}

/// Score of placing `worker` on `node`: members of its group already there,
/// plus members still unbound, minus other groups present on the node.
pub fn node_score(
    worker: &str,
    group: &TaskGroup,
    node: &NodeState,
    binding_state: &BTreeMap<String, String>,
    groups_on_node: &BTreeSet<(String, u32)>,
) -> i64 {
    debug_assert!(group.members.iter().any(|m| m == worker));
    debug_assert!(!binding_state.contains_key(worker));
    group_score(group, &node.node_id, binding_state, groups_on_node)
}

/// Least-requested score in [0, 1000] after hypothetically placing `request`.
pub fn least_requested_score(request: &ResourceQuantity, free: &ResourceQuantity, allocatable: &ResourceQuantity) -> u64 {
    let ac = u128::from(allocatable.cpu_millicores.max(1));
    let am = u128::from(allocatable.memory_bytes.max(1));
    let fc = u128::from(free.cpu_millicores.saturating_sub(request.cpu_millicores));
    let fm = u128::from(free.memory_bytes.saturating_sub(request.memory_bytes));
    ((1000 * (fc * am + fm * ac)) / (2 * ac * am)) as u64
}

/// Per-node capacity as seen by one scheduling pass, including tentative
/// bindings of the job being placed.
struct Scratch<'a> {
    nodes: &'a [NodeState],
    free: Vec<ResourceQuantity>,
    free_cpus: Vec<usize>,
}

impl<'a> Scratch<'a> {
    fn new(cluster: &'a ClusterState) -> Self {
        Scratch {
            nodes: &cluster.nodes,
            free: cluster.nodes.iter().map(NodeState::free).collect(),
            free_cpus: cluster
                .nodes
                .iter()
                .map(NodeState::free_exclusive_cpu_count)
                .collect(),
        }
    }

    fn feasible(&self, i: usize, pod: &PodSpec, policy: CpuPolicy) -> bool {
        fits(&pod.resources, &self.free[i], self.free_cpus[i], policy)
    }

    fn take(&mut self, i: usize, pod: &PodSpec, policy: CpuPolicy) {
        self.free[i] = self.free[i]
            .checked_sub(&pod.resources)
            .expect("feasibility checked");
        if policy == CpuPolicy::StaticExclusive {
            self.free_cpus[i] -= pod.resources.whole_cpus().unwrap_or(0) as usize;
        }
    }
}

fn finish_bindings(pod_set: &PodSet, mut bindings: Vec<Binding>) -> SchedulingOutcome {
    bindings.push(Binding {
        pod_id: pod_set.launcher.pod_id.clone(),
        node_id: CONTROL_PLANE.to_string(),
        group_id: None,
    });
    SchedulingOutcome::Bound(bindings)
}

fn no_fit(pod: &PodSpec) -> SchedulingOutcome {
    SchedulingOutcome::Unschedulable(format!(
        "no feasible node for {} requesting {}",
        pod.pod_id, pod.resources
    ))
}

pub fn schedule_job_taskgroup(
    pod_set: &PodSet,
    plan: &GranularityPlan,
    cluster: &ClusterState,
    cpu_policy: CpuPolicy,
) -> SchedulingOutcome {
    let n_groups = plan.n_groups.min(pod_set.workers.len() as u32).max(1);
    let groups = build_groups(n_groups, &pod_set.workers);
    let group_of: BTreeMap<&str, usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| g.members.iter().map(move |m| (m.as_str(), gi)))
        .collect();
    let pods: BTreeMap<&str, &PodSpec> = pod_set
        .workers
        .iter()
        .map(|w| (w.pod_id.as_str(), w))
        .collect();

    let mut scratch = Scratch::new(cluster);
    let mut node_groups: Vec<BTreeSet<(String, u32)>> = cluster
        .nodes
        .iter()
        .map(|n| cluster.node_groups(&n.node_id))
        .collect();
    let mut tentative: BTreeMap<String, String> = BTreeMap::new();
    let mut bindings = Vec::with_capacity(pod_set.workers.len() + 1);

    for worker in worker_order(&groups) {
        let pod = pods[worker.as_str()];
        let group = &groups[group_of[worker.as_str()]];
        let mut best: Option<(usize, i64)> = None;
        for i in 0..scratch.nodes.len() {
            if !scratch.feasible(i, pod, cpu_policy) {
                continue;
            }
            let score = group_score(group, &scratch.nodes[i].node_id, &tentative, &node_groups[i]);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let Some((i, _)) = best else {
            return no_fit(pod);
        };
        scratch.take(i, pod, cpu_policy);
        let node_id = scratch.nodes[i].node_id.clone();
        node_groups[i].insert((group.job_id.clone(), group.group_id));
        tentative.insert(worker.clone(), node_id.clone());
        bindings.push(Binding {
            pod_id: worker,
            node_id,
            group_id: Some(group.group_id),
        });
    }
    finish_bindings(pod_set, bindings)
}

/// Least-requested placement, worker by worker in index order; equal scores
/// are broken by a draw from `rng`.
pub fn schedule_job_baseline<R: Rng>(
    pod_set: &PodSet,
    cluster: &ClusterState,
    cpu_policy: CpuPolicy,
    rng: &mut R,
) -> SchedulingOutcome {
    let mut scratch = Scratch::new(cluster);
    let mut bindings = Vec::with_capacity(pod_set.workers.len() + 1);
    let mut ties = Vec::with_capacity(scratch.nodes.len());
    for pod in &pod_set.workers {
        ties.clear();
        let mut best_score = 0u64;
        for i in 0..scratch.nodes.len() {
            if !scratch.feasible(i, pod, cpu_policy) {
                continue;
            }
            let score =
                least_requested_score(&pod.resources, &scratch.free[i], &scratch.nodes[i].allocatable);
            if ties.is_empty() || score > best_score {
                ties.clear();
                ties.push(i);
                best_score = score;
            } else if score == best_score {
                ties.push(i);
            }
        }
        let i = match ties.len() {
            0 => return no_fit(pod),
            1 => ties[0],
            n => ties[rng.gen_range(0..n)],
        };
        scratch.take(i, pod, cpu_policy);
        bindings.push(Binding {
            pod_id: pod.pod_id.clone(),
            node_id: scratch.nodes[i].node_id.clone(),
            group_id: Some(0),
        });
    }
    finish_bindings(pod_set, bindings)
}

/// A job waiting for admission, already planned and expanded into pods.
#[derive(Debug, Clone)]
pub struct PendingJob {
    pub job: JobSpec,
    pub plan: GranularityPlan,
    pub pod_set: PodSet,
}

pub fn schedule_job<R: Rng>(
    pending: &PendingJob,
    cluster: &ClusterState,
    mode: SchedulerMode,
    cpu_policy: CpuPolicy,
    rng: &mut R,
) -> SchedulingOutcome {
    match mode {
        SchedulerMode::TaskGroup => {
            schedule_job_taskgroup(&pending.pod_set, &pending.plan, cluster, cpu_policy)
        }
        SchedulerMode::Baseline => schedule_job_baseline(&pending.pod_set, cluster, cpu_policy, rng),
    }
}

/// Commits a successful outcome: every worker goes through the node allocator,
/// the launcher is pinned to the control plane.
pub fn commit(
    pending: &PendingJob,
    bindings: &[Binding],
    cluster: &mut ClusterState,
    kubelet: KubeletPolicy,
) -> Result<()> {
    let pods: BTreeMap<&str, &PodSpec> = pending
        .pod_set
        .workers
        .iter()
        .map(|w| (w.pod_id.as_str(), w))
        .collect();
    for b in bindings {
        if b.pod_id == pending.pod_set.launcher.pod_id {
            cluster.bind_launcher(&pending.pod_set.launcher)?;
            continue;
        }
        let pod = pods
            .get(b.pod_id.as_str())
            .ok_or_else(|| Error::invariant(format!("binding for unknown pod {}", b.pod_id)))?;
        cluster.bind_worker(pod, &b.node_id, b.group_id.unwrap_or(0), kubelet, None)?;
    }
    Ok(())
}

/// Strict FIFO gang admission: admit jobs from the head of `pending` until one
/// does not fit. The blocking head's outcome is reported last and the job stays
/// queued.
pub fn gang_admit<R: Rng>(
    pending: &mut VecDeque<PendingJob>,
    cluster: &mut ClusterState,
    mode: SchedulerMode,
    kubelet: KubeletPolicy,
    rng: &mut R,
) -> Result<Vec<(PendingJob, SchedulingOutcome)>> {
    let cpu_policy = CpuPolicy::from(kubelet);
    let mut out = Vec::new();
    while let Some(head) = pending.front() {
        let outcome = schedule_job(head, cluster, mode, cpu_policy, rng);
        match &outcome {
            SchedulingOutcome::Bound(bindings) => {
                commit(head, bindings, cluster, kubelet)?;
                let job = pending.pop_front().expect("head exists");
                out.push((job, outcome));
            }
            SchedulingOutcome::Unschedulable(_) => {
                out.push((head.clone(), outcome));
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterConfig;
    use crate::controller::build_pod_set;
    use crate::model::{PodRole, Profile, GIB};
    use crate::rational::int;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn worker(job: &str, i: u32, millicores: u64) -> PodSpec {
        PodSpec {
            pod_id: PodSpec::worker_id(job, i),
            job_id: job.into(),
            role: PodRole::Worker,
            worker_index: Some(i),
            n_tasks_in_pod: 1,
            resources: ResourceQuantity::new(millicores, GIB),
        }
    }

    fn group(job: &str, gid: u32, members: &[&str]) -> TaskGroup {
        TaskGroup {
            job_id: job.into(),
            group_id: gid,
            members: members.iter().map(|s| s.to_string()).collect(),
            total_request: ResourceQuantity::ZERO,
            bound_nodes: vec![],
        }
    }

    fn cluster() -> ClusterState {
        ClusterConfig::default().build(40.0).unwrap()
    }

    fn job(id: &str, cores: u64) -> JobSpec {
        JobSpec {
            job_id: id.into(),
            benchmark: "EP-DGEMM".into(),
            n_tasks: 16,
            total_resources: ResourceQuantity::cores_gib(cores, 32),
            profile: Profile::Cpu,
            submit_time_s: int(0),
            base_runtime_s: int(100),
            per_process_bandwidth_gbps: int(0),
            default_n_workers: 1,
        }
    }

    fn pending(id: &str, cores: u64, plan: GranularityPlan) -> PendingJob {
        let job = job(id, cores);
        let pod_set = build_pod_set(&job, &plan).unwrap();
        PendingJob { job, plan, pod_set }
    }

    #[test]
    fn groups_balance_sixteen_unit_workers() {
        let ws: Vec<PodSpec> = (0..16).map(|i| worker("j", i, 1000)).collect();
        let gs = build_groups(4, &ws);
        assert_eq!(gs.len(), 4);
        for g in &gs {
            assert_eq!(g.members.len(), 4);
            assert_eq!(g.total_request.cpu_millicores, 4000);
        }
    }

    #[test]
    fn groups_follow_min_load_rule() {
        let ws = vec![worker("j", 0, 3000), worker("j", 1, 2000), worker("j", 2, 1000)];
        let gs = build_groups(2, &ws);
        // w2 joins the lighter group (w1 at 2000), not w0's.
        assert_eq!(gs[0].members, vec!["j-worker-0"]);
        assert_eq!(gs[0].total_request.cpu_millicores, 3000);
        assert_eq!(gs[1].members, vec!["j-worker-1", "j-worker-2"]);
        assert_eq!(gs[1].total_request.cpu_millicores, 3000);

        // Independent replay of the rule: each worker goes to the currently
        // lightest group, lowest id on ties.
        let loads = [3000u64, 2000, 1000];
        let mut totals = [0u64, 0];
        let mut chosen = Vec::new();
        for &l in &loads {
            let g = if totals[0] <= totals[1] { 0 } else { 1 };
            totals[g] += l;
            chosen.push(g);
        }
        assert_eq!(chosen, vec![0, 1, 1]);
        // Brute force: that split is also the most balanced one.
        let mut best = u64::MAX;
        for mask in 0..8u32 {
            let mut t = [0u64, 0];
            for (k, &l) in loads.iter().enumerate() {
                t[((mask >> k) & 1) as usize] += l;
            }
            best = best.min(t[0].max(t[1]));
        }
        assert_eq!(best, totals[0].max(totals[1]));
    }

    #[test]
    fn equal_workers_one_per_group() {
        let ws: Vec<PodSpec> = (0..4).map(|i| worker("j", i, 4000)).collect();
        let gs = build_groups(4, &ws);
        assert!(gs.iter().all(|g| g.members.len() == 1));
    }

    #[test]
    fn worker_order_examples() {
        let gs = vec![group("j", 0, &["w0", "w2"]), group("j", 1, &["w1"])];
        assert_eq!(worker_order(&gs), vec!["w0", "w2", "w1"]);
        let one = vec![group("j", 0, &["w3", "w1", "w2"])];
        assert_eq!(worker_order(&one), vec!["w3", "w1", "w2"]);
        let singles: Vec<TaskGroup> = (0..4)
            .rev()
            .map(|i| group("j", i, &[["w0", "w1", "w2", "w3"][i as usize]]))
            .collect();
        assert_eq!(worker_order(&singles), vec!["w0", "w1", "w2", "w3"]);
    }

    #[test]
    fn predicate_examples() {
        let c = cluster();
        let n = &c.nodes[0];
        assert!(predicate(&worker("j", 0, 4000), n, CpuPolicy::StaticExclusive));
        assert!(!predicate(&worker("j", 0, 500), n, CpuPolicy::StaticExclusive));
        assert!(predicate(&worker("j", 0, 500), n, CpuPolicy::SharedCpus));

        let mut tight = n.clone();
        tight.allocated = ResourceQuantity::new(30000, 0);
        let big = PodSpec {
            resources: ResourceQuantity::new(4000, 8 * GIB),
            ..worker("j", 0, 0)
        };
        assert!(!predicate(&big, &tight, CpuPolicy::SharedCpus));
    }

    #[test]
    fn node_score_traces() {
        let c = cluster();
        let g = group("j", 0, &["w1", "w2", "w3"]);
        let mut bs = BTreeMap::new();
        bs.insert("w1".to_string(), "node-1".to_string());
        let on_a: BTreeSet<(String, u32)> =
            [("j".to_string(), 0), ("other".to_string(), 0)].into_iter().collect();
        assert_eq!(node_score("w2", &g, &c.nodes[0], &bs, &on_a), 2);
        assert_eq!(node_score("w2", &g, &c.nodes[1], &bs, &BTreeSet::new()), 2);

        let fresh = group("k", 0, &["a", "b", "c", "d"]);
        assert_eq!(
            node_score("a", &fresh, &c.nodes[0], &BTreeMap::new(), &BTreeSet::new()),
            4
        );
    }

    #[test]
    fn taskgroup_spreads_groups_over_nodes() {
        let c = cluster();
        let p = pending("j", 16, GranularityPlan::new(4, 16, 4));
        let SchedulingOutcome::Bound(bs) = schedule_job_taskgroup(&p.pod_set, &p.plan, &c, CpuPolicy::StaticExclusive) else {
            panic!("should fit");
        };
        assert_eq!(bs.len(), 17);
        let mut per_node: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for b in bs.iter().filter(|b| b.node_id != CONTROL_PLANE) {
            per_node.entry(&b.node_id).or_default().insert(b.group_id.unwrap());
            *counts.entry(&b.node_id).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&n| n == 4));
        assert!(per_node.values().all(|g| g.len() == 1));
        assert_eq!(bs.last().unwrap().node_id, CONTROL_PLANE);
    }

    #[test]
    fn single_worker_goes_to_node_with_fewest_foreign_groups() {
        let mut c = cluster();
        // node-1 and node-2 each host one foreign group, node-3 hosts two.
        for (job_id, node) in [("a", "node-1"), ("b", "node-2"), ("c", "node-3"), ("d", "node-3"), ("e", "node-4")] {
            let p = pending(job_id, 4, GranularityPlan::new(1, 1, 1));
            c.bind_worker(&p.pod_set.workers[0], node, 0, KubeletPolicy::AFFINITY, None).unwrap();
        }
        let p = pending("x", 4, GranularityPlan::new(1, 1, 1));
        let out = schedule_job_taskgroup(&p.pod_set, &p.plan, &c, CpuPolicy::StaticExclusive);
        // brute force: evaluate score on every node, lowest id among maxima
        let g = &build_groups(1, &p.pod_set.workers)[0];
        let scores: Vec<i64> = c
            .nodes
            .iter()
            .map(|n| node_score(&g.members[0], g, n, &BTreeMap::new(), &c.node_groups(&n.node_id)))
            .collect();
        let max = *scores.iter().max().unwrap();
        let expected = &c.nodes[scores.iter().position(|&s| s == max).unwrap()].node_id;
        let SchedulingOutcome::Bound(bs) = out else { panic!() };
        assert_eq!(&bs[0].node_id, expected);
        assert_eq!(expected, "node-1");
    }

    #[test]
    fn oversized_job_is_unschedulable_without_side_effects() {
        let mut c = cluster();
        for node in ["node-1", "node-2", "node-3", "node-4"] {
            let p = pending(&format!("fill-{node}"), 30, GranularityPlan::new(1, 1, 1));
            c.bind_worker(&p.pod_set.workers[0], node, 0, KubeletPolicy::AFFINITY, None).unwrap();
        }
        let before = c.clone();
        let p = pending("big", 16, GranularityPlan::new(4, 16, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut q = VecDeque::from([p]);
        let out = gang_admit(&mut q, &mut c, SchedulerMode::TaskGroup, KubeletPolicy::AFFINITY, &mut rng).unwrap();
        assert_eq!(out.len(), 1);
        assert!(!out[0].1.is_bound());
        assert_eq!(q.len(), 1);
        assert_eq!(c, before);
    }

    #[test]
    fn baseline_prefers_emptier_node_and_is_deterministic() {
        let mut c = cluster();
        let filler = pending("f", 16, GranularityPlan::new(1, 1, 1));
        for node in ["node-1", "node-2", "node-3"] {
            let mut w = filler.pod_set.workers[0].clone();
            w.pod_id = format!("f-{node}");
            c.bind_worker(&w, node, 0, KubeletPolicy::AFFINITY, None).unwrap();
        }
        let p = pending("j", 16, GranularityPlan::new(1, 1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let SchedulingOutcome::Bound(bs) = schedule_job_baseline(&p.pod_set, &c, CpuPolicy::StaticExclusive, &mut rng) else {
            panic!()
        };
        assert_eq!(bs[0].node_id, "node-4");

        let empty = cluster();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match schedule_job_baseline(&p.pod_set, &empty, CpuPolicy::StaticExclusive, &mut rng) {
                SchedulingOutcome::Bound(bs) => bs[0].node_id.clone(),
                _ => panic!(),
            }
        };
        assert_eq!(run(11), run(11));
        let chosen: BTreeSet<String> = (0..32).map(run).collect();
        assert!(chosen.len() > 1, "ties should be broken randomly");
    }

    #[test]
    fn least_requested_formula() {
        let alloc = ResourceQuantity::cores_gib(32, 256);
        assert_eq!(least_requested_score(&ResourceQuantity::ZERO, &alloc, &alloc), 1000);
        assert_eq!(
            least_requested_score(&ResourceQuantity::cores_gib(16, 0), &alloc, &alloc),
            750
        );
    }

    #[test]
    fn gang_admit_fifo_semantics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = cluster();
        let mut q = VecDeque::new();
        assert!(gang_admit(&mut q, &mut c, SchedulerMode::Baseline, KubeletPolicy::AFFINITY, &mut rng)
            .unwrap()
            .is_empty());

        q.push_back(pending("a", 16, GranularityPlan::new(1, 1, 1)));
        q.push_back(pending("b", 16, GranularityPlan::new(1, 1, 1)));
        let out = gang_admit(&mut q, &mut c, SchedulerMode::Baseline, KubeletPolicy::AFFINITY, &mut rng).unwrap();
        let admitted: Vec<&str> = out.iter().filter(|(_, o)| o.is_bound()).map(|(p, _)| p.job.job_id.as_str()).collect();
        assert_eq!(admitted, vec!["a", "b"]);

        // head needs 16 cpus on one worker but only 8-cpu holes remain
        let mut c = cluster();
        for (i, node) in ["node-1", "node-2", "node-3", "node-4"].iter().enumerate() {
            let p = pending(&format!("f{i}"), 24, GranularityPlan::new(1, 1, 1));
            let mut w = p.pod_set.workers[0].clone();
            w.resources = ResourceQuantity::cores_gib(24, 8);
            c.bind_worker(&w, node, 0, KubeletPolicy::AFFINITY, None).unwrap();
        }
        let mut q = VecDeque::from([
            pending("head", 16, GranularityPlan::new(1, 1, 1)),
            pending("small", 16, GranularityPlan::new(4, 16, 4)),
        ]);
        let before = c.clone();
        let out = gang_admit(&mut q, &mut c, SchedulerMode::Baseline, KubeletPolicy::AFFINITY, &mut rng).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0.job.job_id, "head");
        assert!(!out[0].1.is_bound());
        assert_eq!(q.len(), 2);
        assert_eq!(c, before);
        // the second job alone would have fit
        let small = &q[1];
        assert!(schedule_job_taskgroup(&small.pod_set, &small.plan, &c, CpuPolicy::StaticExclusive).is_bound());
    }
}
