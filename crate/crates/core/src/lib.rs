//! Simulator for two-layer (cluster and node) scheduling of containerized
//! MPI jobs on a Kubernetes-like cluster.
//!
//! The pipeline for each job is: [`planner`] picks node, worker and group
//! counts, [`controller`] turns that into pods and a hostfile, [`scheduler`]
//! places the pods (gang admission), [`allocator`] pins CPUs on each node and
//! [`perf`] turns the placement into a slowdown. [`sim`] drives all of it over
//! time and [`experiment`] compares scenarios and calibrates the model.

pub mod allocator;
pub mod cluster;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod model;
pub mod perf;
pub mod planner;
pub mod rational;
pub mod report;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use model::{JobSpec, Profile, ResourceQuantity};
pub use perf::PerfParams;
pub use scenario::ScenarioSpec;
pub use sim::{run, SimReport};
