//! MPI-aware job controller: splits a job's tasks over its workers, sizes each
//! worker pod and writes the MPI hostfile.

use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{
    resource_scale, GranularityPlan, JobSpec, PodRole, PodSpec, ResourceQuantity,
};

/// Launcher plus worker pods of one job, and the hostfile the launcher uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodSet {
    pub job_id: String,
    pub launcher: PodSpec,
    /// Ordered by worker index. Workers that received no task are omitted.
    pub workers: Vec<PodSpec>,
    pub hostfile_text: String,
}

impl PodSet {
    pub fn total_tasks(&self) -> u32 {
        self.workers.iter().map(|w| w.n_tasks_in_pod).sum()
    }

    pub fn total_resources(&self) -> ResourceQuantity {
        self.workers.iter().map(|w| w.resources).sum()
    }
}

/// Deals `n_tasks` to `n_workers` round-robin starting at worker 0.
pub fn allocate_tasks(n_tasks: u32, n_workers: u32) -> Vec<u32> {
    let n_workers = n_workers.max(1);
    let base = n_tasks / n_workers;
    let extra = n_tasks % n_workers;
    (0..n_workers)
        .map(|i| base + u32::from(i < extra))
        .collect()
}

pub fn build_pod_set(job: &JobSpec, plan: &GranularityPlan) -> Result<PodSet> {
    let per_worker = allocate_tasks(job.n_tasks, plan.n_workers);
    let mut workers = Vec::with_capacity(per_worker.len());
    let mut hostfile_text = String::new();
    for (i, &n) in per_worker.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let index = i as u32;
        let pod_id = PodSpec::worker_id(&job.job_id, index);
        let _ = writeln!(hostfile_text, "{pod_id} slots={n}");
        workers.push(PodSpec {
            pod_id,
            job_id: job.job_id.clone(),
            role: PodRole::Worker,
            worker_index: Some(index),
            n_tasks_in_pod: n,
            resources: resource_scale(job.total_resources, n, job.n_tasks)?,
        });
    }
    let launcher = PodSpec {
        pod_id: PodSpec::launcher_id(&job.job_id),
        job_id: job.job_id.clone(),
        role: PodRole::Launcher,
        worker_index: None,
        n_tasks_in_pod: 0,
        resources: ResourceQuantity::ZERO,
    };
    Ok(PodSet {
        job_id: job.job_id.clone(),
        launcher,
        workers,
        hostfile_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Profile, GIB};
    use crate::rational::int;

    fn job(n_tasks: u32) -> JobSpec {
        JobSpec {
            job_id: "dgemm-1".into(),
            benchmark: "EP-DGEMM".into(),
            n_tasks,
            total_resources: ResourceQuantity::cores_gib(16, 32),
            profile: Profile::Cpu,
            submit_time_s: int(0),
            base_runtime_s: int(100),
            per_process_bandwidth_gbps: int(0),
            default_n_workers: 1,
        }
    }

    #[test]
    fn round_robin_examples() {
        assert_eq!(allocate_tasks(16, 4), vec![4, 4, 4, 4]);
        assert_eq!(allocate_tasks(16, 3), vec![6, 5, 5]);
        assert_eq!(allocate_tasks(1, 1), vec![1]);
        assert_eq!(allocate_tasks(5, 8), vec![1, 1, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn four_workers_get_a_quarter_each() {
        let ps = build_pod_set(&job(16), &GranularityPlan::new(4, 4, 4)).unwrap();
        assert_eq!(ps.workers.len(), 4);
        for w in &ps.workers {
            assert_eq!(w.n_tasks_in_pod, 4);
            assert_eq!(w.resources, ResourceQuantity::new(4000, 8 * GIB));
        }
        assert_eq!(
            ps.hostfile_text,
            "dgemm-1-worker-0 slots=4\ndgemm-1-worker-1 slots=4\n\
             dgemm-1-worker-2 slots=4\ndgemm-1-worker-3 slots=4\n"
        );
        assert_eq!(ps.launcher.pod_id, "dgemm-1-launcher");
        assert_eq!(ps.launcher.resources, ResourceQuantity::ZERO);
        assert_eq!(ps.launcher.n_tasks_in_pod, 0);
    }

    #[test]
    fn single_and_per_task_workers() {
        let one = build_pod_set(&job(16), &GranularityPlan::new(1, 1, 1)).unwrap();
        assert_eq!(one.workers.len(), 1);
        assert_eq!(one.workers[0].n_tasks_in_pod, 16);
        assert_eq!(one.workers[0].resources, ResourceQuantity::cores_gib(16, 32));

        let many = build_pod_set(&job(16), &GranularityPlan::new(4, 16, 4)).unwrap();
        assert_eq!(many.workers.len(), 16);
        assert!(many
            .workers
            .iter()
            .all(|w| w.n_tasks_in_pod == 1 && w.resources == ResourceQuantity::new(1000, 2 * GIB)));
        assert_eq!(many.hostfile_text.lines().count(), 16);
    }

    #[test]
    fn empty_workers_are_dropped() {
        let mut j = job(4);
        j.total_resources = ResourceQuantity::cores_gib(4, 4);
        let ps = build_pod_set(&j, &GranularityPlan::new(1, 6, 1)).unwrap();
        assert_eq!(ps.workers.len(), 4);
        assert_eq!(ps.hostfile_text.lines().count(), 4);
        assert!(!ps.hostfile_text.contains("worker-4"));
    }

    #[test]
    fn indivisible_resources_propagate() {
        let mut j = job(3);
        j.total_resources = ResourceQuantity::new(1000, 3);
        assert!(build_pod_set(&j, &GranularityPlan::new(1, 3, 1)).is_err());
    }
}
