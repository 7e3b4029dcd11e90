//! Deterministic discrete-event simulation of job arrival, gang admission,
//! node-level CPU assignment and rate-based execution.
//!
//! Execution rates are piecewise constant: a job's slowdown is recomputed
//! only when a job starts or finishes, and only for jobs whose NUMA domains
//! changed load. Between such events a job with slowdown `s` completes
//! `elapsed / s` seconds of its base runtime. All time and work arithmetic is
//! exact.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::{debug, info};
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::allocator::KubeletPolicy;
use crate::cluster::{ClusterState, CONTROL_PLANE};
use crate::controller::build_pod_set;
use crate::error::{Error, Result};
use crate::model::{CpuAssignment, JobSpec, Profile};
use crate::perf::{
    job_demand, memory_factor, placement_factors, DomainKey, DomainLoad, PerfModel, SlowdownBreakdown,
    WorkerPlacement,
};
use crate::planner::select_granularity;
use crate::rational::{self, format_decimal, Rational};
use crate::scenario::ScenarioSpec;
use crate::scheduler::{gang_admit, PendingJob, SchedulingOutcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Completion(String),
    Arrival(String),
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Completion(_) => 0,
            EventKind::Arrival(_) => 1,
        }
    }

    fn job_id(&self) -> &str {
        match self {
            EventKind::Completion(j) | EventKind::Arrival(j) => j,
        }
    }
}

/// Ordered by time, then completions before arrivals, then sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub time_s: Rational,
    pub kind: EventKind,
    pub sequence: u64,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_s
            .cmp(&other.time_s)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.sequence.cmp(&other.sequence))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRecord {
    pub job_id: String,
    pub benchmark: String,
    pub profile: Profile,
    pub submit_time_s: Rational,
    pub start_time_s: Option<Rational>,
    pub finish_time_s: Option<Rational>,
}

impl JobRecord {
    pub fn complete(job_id: &str, submit: Rational, start: Rational, finish: Rational) -> Self {
        JobRecord {
            job_id: job_id.to_string(),
            benchmark: String::new(),
            profile: Profile::Cpu,
            submit_time_s: submit,
            start_time_s: Some(start),
            finish_time_s: Some(finish),
        }
    }

    pub fn wait_s(&self) -> Option<Rational> {
        self.start_time_s.as_ref().map(|s| s - &self.submit_time_s)
    }

    pub fn run_s(&self) -> Option<Rational> {
        match (&self.start_time_s, &self.finish_time_s) {
            (Some(s), Some(f)) => Some(f - s),
            _ => None,
        }
    }

    pub fn response_s(&self) -> Option<Rational> {
        Some(self.wait_s()? + self.run_s()?)
    }
}

/// Overall response time (sum of per-job response times) and makespan (last
/// finish minus first submission).
pub fn compute_metrics(records: &[JobRecord]) -> Result<(Rational, Rational)> {
    if records.is_empty() {
        return Err(Error::config("no job records to summarise"));
    }
    let mut total = Rational::zero();
    let mut first_submit: Option<&Rational> = None;
    let mut last_finish: Option<&Rational> = None;
    for r in records {
        let (Some(start), Some(finish)) = (&r.start_time_s, &r.finish_time_s) else {
            return Err(Error::invariant(format!("job {} has not completed", r.job_id)));
        };
        if start < &r.submit_time_s || finish < start {
            return Err(Error::invariant(format!("job {} has inconsistent times", r.job_id)));
        }
        total += r.response_s().expect("complete record");
        if first_submit.is_none_or(|t| &r.submit_time_s < t) {
            first_submit = Some(&r.submit_time_s);
        }
        if last_finish.is_none_or(|t| finish > t) {
            last_finish = Some(finish);
        }
    }
    Ok((total, last_finish.unwrap() - first_submit.unwrap()))
}

/// An interval over which a job ran at a constant slowdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateSegment {
    pub job_id: String,
    pub start_s: Rational,
    pub end_s: Rational,
    pub slowdown: SlowdownBreakdown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodPlacement {
    pub job_id: String,
    pub pod_id: String,
    pub node_id: String,
    pub assignment: CpuAssignment,
    pub n_tasks: u32,
    pub start_s: Rational,
    pub end_s: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub t: Rational,
    pub event: &'static str,
    pub job: String,
    pub pod: String,
    pub node: String,
    pub detail: String,
}

impl TraceEntry {
    /// `t=<s> event=<e> job=<j> pod=<p> node=<n> detail=<d>`; empty fields are `-`.
    pub fn to_line(&self) -> String {
        let f = |s: &str| if s.is_empty() { "-".to_string() } else { s.replace(' ', "_") };
        format!(
            "t={} event={} job={} pod={} node={} detail={}",
            format_decimal(&self.t, 6),
            self.event,
            f(&self.job),
            f(&self.pod),
            f(&self.node),
            f(&self.detail)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub scenario_name: String,
    pub seed: u64,
    pub records: Vec<JobRecord>,
    pub overall_response_s: Rational,
    pub makespan_s: Rational,
    pub event_trace: Vec<TraceEntry>,
    pub segments: Vec<RateSegment>,
    pub placements: Vec<PodPlacement>,
}

impl SimReport {
    pub fn record(&self, job_id: &str) -> Option<&JobRecord> {
        self.records.iter().find(|r| r.job_id == job_id)
    }

    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for e in &self.event_trace {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    /// Mean run time per benchmark.
    pub fn mean_run_by_benchmark(&self) -> BTreeMap<String, Rational> {
        let mut sums: BTreeMap<String, (Rational, i64)> = BTreeMap::new();
        for r in &self.records {
            let e = sums
                .entry(r.benchmark.clone())
                .or_insert_with(|| (Rational::zero(), 0));
            e.0 += r.run_s().unwrap_or_else(Rational::zero);
            e.1 += 1;
        }
        sums.into_iter()
            .map(|(k, (s, n))| (k, s / rational::int(n)))
            .collect()
    }

    /// For each job, the base runtime reconstructed from its rate segments:
    /// sum of segment length over slowdown.
    pub fn work_done_by_job(&self) -> BTreeMap<String, Rational> {
        let mut out: BTreeMap<String, Rational> = BTreeMap::new();
        for s in &self.segments {
            *out.entry(s.job_id.clone()).or_insert_with(Rational::zero) +=
                (&s.end_s - &s.start_s) / &s.slowdown.total;
        }
        out
    }

    /// Bindings and start times of every job, for replay.
    pub fn replay_plan(&self) -> Vec<ReplayEntry> {
        let mut by_job: BTreeMap<&str, ReplayEntry> = BTreeMap::new();
        for p in &self.placements {
            let e = by_job.entry(&p.job_id).or_insert_with(|| ReplayEntry {
                job_id: p.job_id.clone(),
                start_s: p.start_s.clone(),
                pods: Vec::new(),
            });
            e.pods.push((p.pod_id.clone(), p.node_id.clone(), p.assignment.clone()));
        }
        by_job.into_values().collect()
    }
}

/// Pinned start time and exact bindings of one job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayEntry {
    pub job_id: String,
    pub start_s: Rational,
    pub pods: Vec<(String, String, CpuAssignment)>,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Verify cluster invariants after every event batch.
    pub self_check: bool,
    /// Keep the event trace. Metrics, segments and placements are always kept.
    pub record_trace: bool,
    /// Skip scheduling; start jobs exactly as recorded.
    pub replay: Option<Vec<ReplayEntry>>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            self_check: true,
            record_trace: true,
            replay: None,
        }
    }
}

impl SimOptions {
    /// No invariant checks and no trace, for batch experiments.
    pub fn fast() -> Self {
        SimOptions {
            self_check: false,
            record_trace: false,
            replay: None,
        }
    }

    pub fn replaying(plan: Vec<ReplayEntry>) -> Self {
        SimOptions {
            replay: Some(plan),
            ..SimOptions::default()
        }
    }
}

/// Runs `scenario` with workload and tie-break randomness derived from `seed`.
pub fn run(scenario: &ScenarioSpec, seed: u64) -> Result<SimReport> {
    run_with(scenario, seed, &SimOptions::default())
}

pub fn run_with(scenario: &ScenarioSpec, seed: u64, options: &SimOptions) -> Result<SimReport> {
    scenario.validate()?;
    let jobs = scenario.jobs(seed)?;
    run_jobs(scenario, jobs, seed, options)
}

/// Runs an explicit job list under the scenario's cluster and policies.
pub fn run_jobs(
    scenario: &ScenarioSpec,
    jobs: Vec<JobSpec>,
    seed: u64,
    options: &SimOptions,
) -> Result<SimReport> {
    if jobs.is_empty() {
        return Err(Error::config(format!("scenario {} has no jobs", scenario.name)));
    }
    let mut engine = Engine::new(scenario, jobs, seed, options)?;
    engine.run()?;
    engine.finish()
}

struct RunningJob {
    job: JobSpec,
    pod_ids: Vec<String>,
    demand: BTreeMap<DomainKey, Rational>,
    fixed: (Rational, Rational, Rational),
    remaining: Rational,
    last_update: Rational,
    slowdown: SlowdownBreakdown,
    completion: Option<SimEvent>,
}

struct Engine<'a> {
    scenario: &'a ScenarioSpec,
    seed: u64,
    self_check: bool,
    record_trace: bool,
    model: PerfModel,
    kubelet: KubeletPolicy,
    cluster: ClusterState,
    load: DomainLoad,
    rng: ChaCha8Rng,
    events: BTreeSet<SimEvent>,
    next_sequence: u64,
    planned: BTreeMap<String, PendingJob>,
    pending: VecDeque<PendingJob>,
    running: BTreeMap<String, RunningJob>,
    records: Vec<JobRecord>,
    record_index: BTreeMap<String, usize>,
    trace: Vec<TraceEntry>,
    segments: Vec<RateSegment>,
    placements: Vec<PodPlacement>,
    placement_index: BTreeMap<String, usize>,
    replay: Option<BTreeMap<String, ReplayEntry>>,
    replay_starts: BTreeSet<(Rational, String)>,
    last_blocked: Option<String>,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a ScenarioSpec, jobs: Vec<JobSpec>, seed: u64, options: &SimOptions) -> Result<Self> {
        let model = PerfModel::new(&scenario.perf)?;
        let cluster = scenario.cluster.build(scenario.perf.domain_bandwidth_gbps)?;
        let load = DomainLoad::from_cluster(&cluster);
        let max_nodes = cluster.nodes.len() as u32;
        // Scheduler tie-breaks use their own stream so that the workload drawn
        // for a seed is identical across scenarios.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);

        let mut engine = Engine {
            scenario,
            seed,
            self_check: options.self_check,
            record_trace: options.record_trace,
            model,
            kubelet: scenario.kubelet,
            cluster,
            load,
            rng,
            events: BTreeSet::new(),
            next_sequence: 0,
            planned: BTreeMap::new(),
            pending: VecDeque::new(),
            running: BTreeMap::new(),
            records: Vec::with_capacity(jobs.len()),
            record_index: BTreeMap::new(),
            trace: Vec::new(),
            segments: Vec::new(),
            placements: Vec::new(),
            placement_index: BTreeMap::new(),
            replay: None,
            replay_starts: BTreeSet::new(),
            last_blocked: None,
        };

        let mut jobs = jobs;
        jobs.sort_by(|a, b| a.submit_time_s.cmp(&b.submit_time_s).then(a.job_id.cmp(&b.job_id)));
        for job in jobs {
            job.validate()?;
            if engine.planned.contains_key(&job.job_id) {
                return Err(Error::config(format!("duplicate job id {}", job.job_id)));
            }
            let plan = select_granularity(&job, max_nodes, scenario.planner);
            let pod_set = build_pod_set(&job, &plan)?;
            engine.record_index.insert(job.job_id.clone(), engine.records.len());
            engine.records.push(JobRecord {
                job_id: job.job_id.clone(),
                benchmark: job.benchmark.clone(),
                profile: job.profile,
                submit_time_s: job.submit_time_s.clone(),
                start_time_s: None,
                finish_time_s: None,
            });
            let time = job.submit_time_s.clone();
            let id = job.job_id.clone();
            engine.planned.insert(id.clone(), PendingJob { job, plan, pod_set });
            engine.push_event(time, EventKind::Arrival(id));
        }

        if let Some(plan) = &options.replay {
            let mut by_job = BTreeMap::new();
            for entry in plan {
                let Some(p) = engine.planned.get(&entry.job_id) else {
                    continue;
                };
                if entry.start_s < p.job.submit_time_s {
                    return Err(Error::config(format!(
                        "replay starts {} before its submission",
                        entry.job_id
                    )));
                }
                engine
                    .replay_starts
                    .insert((entry.start_s.clone(), entry.job_id.clone()));
                by_job.insert(entry.job_id.clone(), entry.clone());
            }
            if let Some(missing) = engine.planned.keys().find(|j| !by_job.contains_key(*j)) {
                return Err(Error::config(format!("replay plan has no entry for {missing}")));
            }
            engine.replay = Some(by_job);
        }
        Ok(engine)
    }

    fn push_event(&mut self, time_s: Rational, kind: EventKind) -> SimEvent {
        let ev = SimEvent {
            time_s,
            kind,
            sequence: self.next_sequence,
        };
        self.next_sequence += 1;
        self.events.insert(ev.clone());
        ev
    }

    fn log(&mut self, t: &Rational, event: &'static str, job: &str, pod: &str, node: &str, detail: String) {
        if !self.record_trace {
            return;
        }
        self.trace.push(TraceEntry {
            t: t.clone(),
            event,
            job: job.to_string(),
            pod: pod.to_string(),
            node: node.to_string(),
            detail,
        });
    }

    fn next_time(&self) -> Option<Rational> {
        let ev = self.events.first().map(|e| &e.time_s);
        let rs = self.replay_starts.first().map(|(t, _)| t);
        match (ev, rs) {
            (Some(a), Some(b)) => Some(a.min(b).clone()),
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (None, None) => None,
        }
    }

    fn run(&mut self) -> Result<()> {
        while let Some(now) = self.next_time() {
            let mut touched: BTreeSet<DomainKey> = BTreeSet::new();
            let mut started: Vec<String> = Vec::new();
            while self.events.first().is_some_and(|e| e.time_s == now) {
                let ev = self.events.pop_first().expect("non-empty");
                match &ev.kind {
                    EventKind::Arrival(id) => self.arrive(&now, id),
                    EventKind::Completion(id) => self.complete(&now, id, &mut touched)?,
                }
            }
            if self.replay.is_some() {
                self.admit_replayed(&now, &mut started, &mut touched)?;
            } else {
                self.admit(&now, &mut started, &mut touched)?;
            }
            self.refresh_rates(&now, &started, &touched)?;
            if self.self_check {
                self.cluster.check_invariants()?;
            }
        }
        if let Some(stuck) = self.pending.front() {
            return Err(Error::config(format!(
                "job {} can never be placed on this cluster",
                stuck.job.job_id
            )));
        }
        Ok(())
    }

    fn arrive(&mut self, now: &Rational, job_id: &str) {
        debug!("t={} arrival {job_id}", format_decimal(now, 3));
        let p = self.planned.get(job_id).expect("planned at construction").clone();
        let detail = format!(
            "nodes={},workers={},groups={}",
            p.plan.n_nodes, p.plan.n_workers, p.plan.n_groups
        );
        self.log(now, "arrival", job_id, "", "", detail);
        self.pending.push_back(p);
    }

    fn admit(&mut self, now: &Rational, started: &mut Vec<String>, touched: &mut BTreeSet<DomainKey>) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let outcomes = gang_admit(
            &mut self.pending,
            &mut self.cluster,
            self.scenario.scheduler,
            self.kubelet,
            &mut self.rng,
        )?;
        for (p, outcome) in outcomes {
            match outcome {
                SchedulingOutcome::Bound(bindings) => {
                    let nodes: Vec<(String, String)> = bindings
                        .into_iter()
                        .map(|b| (b.pod_id, b.node_id))
                        .collect();
                    self.start_job(now, p, nodes, started, touched)?;
                }
                SchedulingOutcome::Unschedulable(reason) => {
                    if self.last_blocked.as_deref() != Some(p.job.job_id.as_str()) {
                        self.log(now, "blocked", &p.job.job_id, "", "", reason);
                        self.last_blocked = Some(p.job.job_id.clone());
                    }
                }
            }
        }
        Ok(())
    }

    fn admit_replayed(
        &mut self,
        now: &Rational,
        started: &mut Vec<String>,
        touched: &mut BTreeSet<DomainKey>,
    ) -> Result<()> {
        while self.replay_starts.first().is_some_and(|(t, _)| t == now) {
            let (_, job_id) = self.replay_starts.pop_first().expect("non-empty");
            let pos = self
                .pending
                .iter()
                .position(|p| p.job.job_id == job_id)
                .ok_or_else(|| Error::invariant(format!("replayed job {job_id} has not arrived")))?;
            let p = self.pending.remove(pos).expect("position valid");
            let entry = self.replay.as_ref().expect("replay mode")[&job_id].clone();
            let pods: BTreeMap<&str, &crate::model::PodSpec> =
                p.pod_set.workers.iter().map(|w| (w.pod_id.as_str(), w)).collect();
            let mut nodes = Vec::new();
            for (pod_id, node_id, assignment) in &entry.pods {
                if pod_id == &p.pod_set.launcher.pod_id {
                    continue;
                }
                let pod = pods
                    .get(pod_id.as_str())
                    .ok_or_else(|| Error::invariant(format!("replay names unknown pod {pod_id}")))?;
                self.cluster
                    .bind_worker(pod, node_id, 0, self.kubelet, Some(assignment))?;
                nodes.push((pod_id.clone(), node_id.clone()));
            }
            self.cluster.bind_launcher(&p.pod_set.launcher)?;
            nodes.push((p.pod_set.launcher.pod_id.clone(), CONTROL_PLANE.to_string()));
            self.start_job(now, p, nodes, started, touched)?;
        }
        Ok(())
    }

    /// Records a job whose pods are already bound in `self.cluster`.
    fn start_job(
        &mut self,
        now: &Rational,
        p: PendingJob,
        nodes: Vec<(String, String)>,
        started: &mut Vec<String>,
        touched: &mut BTreeSet<DomainKey>,
    ) -> Result<()> {
        let job_id = p.job.job_id.clone();
        info!("t={} start {job_id}", format_decimal(now, 3));
        self.log(now, "start", &job_id, "", "", format!("pods={}", nodes.len()));
        let tasks: BTreeMap<&str, u32> = p
            .pod_set
            .workers
            .iter()
            .map(|w| (w.pod_id.as_str(), w.n_tasks_in_pod))
            .collect();
        let mut placement = Vec::new();
        let mut pod_ids = Vec::new();
        for (pod_id, node_id) in nodes {
            let (assignment, n_tasks) = if node_id == CONTROL_PLANE {
                (CpuAssignment::shared(), 0)
            } else {
                let a = self
                    .cluster
                    .node(&node_id)
                    .and_then(|n| n.bindings.get(&pod_id))
                    .ok_or_else(|| Error::invariant(format!("{pod_id} missing on {node_id}")))?
                    .assignment
                    .clone();
                (a, tasks[pod_id.as_str()])
            };
            if self.record_trace {
                let detail = format!("cpus={}", assignment.cpu_list());
                self.log(now, "bind", &job_id, &pod_id, &node_id, detail);
            }
            if node_id != CONTROL_PLANE {
                placement.push(WorkerPlacement {
                    node_id: node_id.clone(),
                    assignment: assignment.clone(),
                    n_tasks,
                });
            }
            self.placement_index.insert(pod_id.clone(), self.placements.len());
            self.placements.push(PodPlacement {
                job_id: job_id.clone(),
                pod_id: pod_id.clone(),
                node_id,
                assignment,
                n_tasks,
                start_s: now.clone(),
                end_s: None,
            });
            pod_ids.push(pod_id);
        }
        let demand = job_demand(&p.job, &placement, &self.load);
        let fixed = placement_factors(&p.job, &placement, &self.model);
        self.load.add(&demand);
        touched.extend(demand.keys().cloned());
        self.records[self.record_index[&job_id]].start_time_s = Some(now.clone());
        self.running.insert(
            job_id.clone(),
            RunningJob {
                remaining: p.job.base_runtime_s.clone(),
                job: p.job,
                pod_ids,
                demand,
                fixed,
                last_update: now.clone(),
                slowdown: SlowdownBreakdown::none(),
                completion: None,
            },
        );
        started.push(job_id);
        Ok(())
    }

    fn complete(&mut self, now: &Rational, job_id: &str, touched: &mut BTreeSet<DomainKey>) -> Result<()> {
        let mut rj = self
            .running
            .remove(job_id)
            .ok_or_else(|| Error::invariant(format!("completion for idle job {job_id}")))?;
        close_segment(&mut rj, now, &mut self.segments);
        if !rj.remaining.is_zero() {
            return Err(Error::invariant(format!(
                "job {job_id} completed with {} s of work left",
                format_decimal(&rj.remaining, 9)
            )));
        }
        info!("t={} finish {job_id}", format_decimal(now, 3));
        self.log(now, "finish", job_id, "", "", String::new());
        for pod_id in &rj.pod_ids {
            let node = self.cluster.pod_nodes.get(pod_id).cloned().unwrap_or_default();
            self.cluster.unbind(pod_id)?;
            self.log(now, "release", job_id, pod_id, &node, String::new());
            let idx = self.placement_index[pod_id];
            self.placements[idx].end_s = Some(now.clone());
        }
        self.load.remove(&rj.demand);
        touched.extend(rj.demand.keys().cloned());
        self.records[self.record_index[job_id]].finish_time_s = Some(now.clone());
        Ok(())
    }

    fn refresh_rates(&mut self, now: &Rational, started: &[String], touched: &BTreeSet<DomainKey>) -> Result<()> {
        let affected: Vec<String> = self
            .running
            .iter()
            .filter(|(id, rj)| {
                started.contains(id) || rj.demand.keys().any(|k| touched.contains(k))
            })
            .map(|(id, _)| id.clone())
            .collect();
        for id in affected {
            let rj = self.running.get(&id).expect("running");
            let fresh = started.contains(&id);
            let s_mem = memory_factor(&rj.demand, &self.load);
            if !fresh && s_mem == rj.slowdown.s_mem {
                continue;
            }
            let (s_net, s_cpu, s_remote) = rj.fixed.clone();
            let s = SlowdownBreakdown::compose(s_net, s_cpu, s_mem, s_remote);
            if self.record_trace {
                let detail = format!(
                    "total={},net={},cpu={},mem={},remote={}",
                    format_decimal(&s.total, 6),
                    format_decimal(&s.s_net, 6),
                    format_decimal(&s.s_cpu, 6),
                    format_decimal(&s.s_mem, 6),
                    format_decimal(&s.s_remote, 6)
                );
                self.log(now, "rate", &id, "", "", detail);
            }

            let rj = self.running.get_mut(&id).expect("running");
            close_segment(rj, now, &mut self.segments);
            rj.slowdown = s;
            let finish = now + &rj.remaining * &rj.slowdown.total;
            if let Some(old) = rj.completion.take() {
                self.events.remove(&old);
            }
            let ev = SimEvent {
                time_s: finish,
                kind: EventKind::Completion(id.clone()),
                sequence: self.next_sequence,
            };
            self.next_sequence += 1;
            self.events.insert(ev.clone());
            self.running.get_mut(&id).expect("running").completion = Some(ev);
        }
        Ok(())
    }

    fn finish(self) -> Result<SimReport> {
        let (overall, makespan) = compute_metrics(&self.records)?;
        debug_assert!(self.events.iter().all(|e| !e.kind.job_id().is_empty()));
        Ok(SimReport {
            scenario_name: self.scenario.name.clone(),
            seed: self.seed,
            records: self.records,
            overall_response_s: overall,
            makespan_s: makespan,
            event_trace: self.trace,
            segments: self.segments,
            placements: self.placements,
        })
    }
}

/// Accounts the work done since the last rate change.
fn close_segment(rj: &mut RunningJob, now: &Rational, segments: &mut Vec<RateSegment>) {
    if now > &rj.last_update {
        let elapsed = now - &rj.last_update;
        rj.remaining -= &elapsed / &rj.slowdown.total;
        segments.push(RateSegment {
            job_id: rj.job.job_id.clone(),
            start_s: rj.last_update.clone(),
            end_s: now.clone(),
            slowdown: rj.slowdown.clone(),
        });
        rj.last_update = now.clone();
    }
}
