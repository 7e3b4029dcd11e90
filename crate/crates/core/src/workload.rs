//! Benchmark catalog and workload generation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JobSpec, Profile, ResourceQuantity};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDef {
    pub name: &'static str,
    pub profile: Profile,
    pub n_tasks: u32,
    pub base_runtime_s: f64,
    pub per_process_bandwidth_gbps: f64,
    pub total_resources: ResourceQuantity,
}

// Runtimes and bandwidths are calibration placeholders, not measurements.
// Every job runs 16 ranks on 16 whole cores; 32 GiB never binds.
const CATALOG: [BenchmarkDef; 5] = [
    BenchmarkDef {
        name: "EP-DGEMM",
        profile: Profile::Cpu,
        n_tasks: 16,
        base_runtime_s: 240.0,
        per_process_bandwidth_gbps: 0.5,
        total_resources: ResourceQuantity::cores_gib(16, 32),
    },
    BenchmarkDef {
        name: "EP-STREAM",
        profile: Profile::Memory,
        n_tasks: 16,
        base_runtime_s: 180.0,
        per_process_bandwidth_gbps: 6.0,
        total_resources: ResourceQuantity::cores_gib(16, 32),
    },
    BenchmarkDef {
        name: "G-FFT",
        profile: Profile::Network,
        n_tasks: 16,
        base_runtime_s: 150.0,
        per_process_bandwidth_gbps: 0.0,
        total_resources: ResourceQuantity::cores_gib(16, 32),
    },
    BenchmarkDef {
        name: "G-RandomRing",
        profile: Profile::Network,
        n_tasks: 16,
        base_runtime_s: 120.0,
        per_process_bandwidth_gbps: 0.0,
        total_resources: ResourceQuantity::cores_gib(16, 32),
    },
    BenchmarkDef {
        name: "MiniFE",
        profile: Profile::CpuMemory,
        n_tasks: 16,
        base_runtime_s: 300.0,
        per_process_bandwidth_gbps: 3.0,
        total_resources: ResourceQuantity::cores_gib(16, 32),
    },
];

pub fn catalog() -> &'static [BenchmarkDef] {
    &CATALOG
}

pub fn benchmark(name: &str) -> Result<&'static BenchmarkDef> {
    CATALOG
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::config(format!("unknown benchmark {name:?}")))
}

impl BenchmarkDef {
    pub fn instantiate(
        &self,
        job_id: String,
        submit_time_s: Rational,
        default_n_workers: u32,
    ) -> Result<JobSpec> {
        let job = JobSpec {
            job_id,
            benchmark: self.name.to_string(),
            n_tasks: self.n_tasks,
            total_resources: self.total_resources,
            profile: self.profile,
            submit_time_s,
            base_runtime_s: rational::from_f64(self.base_runtime_s)?,
            per_process_bandwidth_gbps: rational::from_f64(self.per_process_bandwidth_gbps)?,
            default_n_workers,
        };
        job.validate()?;
        Ok(job)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrival {
    pub benchmark: String,
    pub submit_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `count` copies of one benchmark, `interval_s` apart from `start_s`.
    Periodic {
        benchmark: String,
        count: u32,
        interval_s: f64,
        #[serde(default)]
        start_s: f64,
    },
    /// `per_benchmark` copies of each benchmark in random order, submit times
    /// uniform on `[start_s, end_s]` with millisecond resolution.
    UniformMix {
        benchmarks: Vec<String>,
        per_benchmark: u32,
        start_s: f64,
        end_s: f64,
    },
}

/// Exactly one of the three sources must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<Vec<Arrival>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

impl WorkloadSpec {
    pub fn preset(name: &str) -> Self {
        WorkloadSpec {
            preset: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn arrivals(list: Vec<Arrival>) -> Self {
        WorkloadSpec {
            arrivals: Some(list),
            ..Default::default()
        }
    }

    pub fn generator(g: GeneratorSpec) -> Self {
        WorkloadSpec {
            generator: Some(g),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let given = [self.preset.is_some(), self.arrivals.is_some(), self.generator.is_some()]
            .into_iter()
            .filter(|b| *b)
            .count();
        if given != 1 {
            return Err(Error::config(
                "workload needs exactly one of `preset`, `arrivals` or `generator`",
            ));
        }
        if let Some(p) = &self.preset {
            workload_preset(p)?;
        }
        Ok(())
    }
}

/// Generator behind a named workload preset.
pub fn workload_preset(name: &str) -> Result<GeneratorSpec> {
    match name {
        "exp1" => Ok(GeneratorSpec::Periodic {
            benchmark: "EP-DGEMM".into(),
            count: 10,
            interval_s: 60.0,
            start_s: 0.0,
        }),
        "exp2" | "exp3" => Ok(GeneratorSpec::UniformMix {
            benchmarks: CATALOG.iter().map(|b| b.name.to_string()).collect(),
            per_benchmark: 4,
            start_s: 0.0,
            end_s: 1200.0,
        }),
        _ => Err(Error::config(format!("unknown preset {name:?}"))),
    }
}

fn to_millis(x: f64, what: &str) -> Result<u64> {
    let r = rational::from_f64(x)? * rational::int(1000);
    if !r.is_integer() || r < rational::zero() {
        return Err(Error::config(format!(
            "{what} = {x} must be a non-negative multiple of 0.001 s"
        )));
    }
    Ok(r.to_integer().try_into().map_err(|_| Error::config(format!("{what} out of range")))?)
}

/// Resolves a workload into (benchmark, submit time) pairs sorted by time.
pub fn resolve_arrivals(spec: &WorkloadSpec, seed: u64) -> Result<Vec<(String, Rational)>> {
    spec.validate()?;
    let mut out = if let Some(list) = &spec.arrivals {
        list.iter()
            .map(|a| {
                benchmark(&a.benchmark)?;
                let t = rational::from_f64(a.submit_time_s)?;
                if t < rational::zero() {
                    return Err(Error::config(format!(
                        "negative submit time for {}",
                        a.benchmark
                    )));
                }
                Ok((a.benchmark.clone(), t))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let g = match &spec.preset {
            Some(p) => workload_preset(p)?,
            None => spec.generator.clone().expect("validated"),
        };
        run_generator(&g, seed)?
    };
    out.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(out)
}

fn run_generator(g: &GeneratorSpec, seed: u64) -> Result<Vec<(String, Rational)>> {
    match g {
        GeneratorSpec::Periodic {
            benchmark: name,
            count,
            interval_s,
            start_s,
        } => {
            benchmark(name)?;
            let step = rational::from_f64(*interval_s)?;
            let start = rational::from_f64(*start_s)?;
            if step < rational::zero() || start < rational::zero() {
                return Err(Error::config("periodic generator needs non-negative times"));
            }
            Ok((0..*count)
                .map(|i| (name.clone(), &start + &step * rational::int(i64::from(i))))
                .collect())
        }
        GeneratorSpec::UniformMix {
            benchmarks,
            per_benchmark,
            start_s,
            end_s,
        } => {
            for b in benchmarks {
                benchmark(b)?;
            }
            let lo = to_millis(*start_s, "start_s")?;
            let hi = to_millis(*end_s, "end_s")?;
            if hi < lo {
                return Err(Error::config("generator interval end precedes start"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut kinds: Vec<String> = benchmarks
                .iter()
                .flat_map(|b| std::iter::repeat_n(b.clone(), *per_benchmark as usize))
                .collect();
            let mut times: Vec<u64> = (0..kinds.len()).map(|_| rng.gen_range(lo..=hi)).collect();
            kinds.shuffle(&mut rng);
            times.sort_unstable();
            Ok(kinds
                .into_iter()
                .zip(times)
                .map(|(k, ms)| (k, rational::ratio(ms as i64, 1000)))
                .collect())
        }
    }
}

/// Resolves a workload into concrete jobs with ids `<benchmark>-<k>`, where
/// `k` counts each benchmark's jobs from 1 in submission order.
pub fn generate(spec: &WorkloadSpec, seed: u64, default_n_workers: u32) -> Result<Vec<JobSpec>> {
    let arrivals = resolve_arrivals(spec, seed)?;
    let mut counters: BTreeMap<String, u32> = BTreeMap::new();
    arrivals
        .into_iter()
        .map(|(name, t)| {
            let k = counters.entry(name.clone()).or_insert(0);
            *k += 1;
            benchmark(&name)?.instantiate(format!("{name}-{k}"), t, default_n_workers)
        })
        .collect()
}
