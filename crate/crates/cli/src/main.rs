use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use grainsched::experiment::{self, CalibrationTargets, ParamSpace};
use grainsched::report::{self, ReportFormat};
use grainsched::scenario::{ScenarioSpec, FRAMEWORK_SCENARIOS, PAPER_SCENARIOS};
use grainsched::workload::WorkloadSpec;
use grainsched::{Error, PerfParams, Result};

#[derive(Parser)]
#[command(name = "grainsched", version, about = "Two-layer MPI job scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write report, trace and Gantt files.
    Simulate {
        /// Workload preset: exp1, exp2 or exp3.
        #[arg(long)]
        preset: Option<String>,
        /// Scenario name (NONE, CM, CM_S, CM_G, CM_S_TG, CM_G_TG, kubeflow,
        /// volcano-native) or path to a scenario TOML file.
        #[arg(long, default_value = "CM_G_TG")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "json")]
        format: String,
        /// Performance parameters file, overriding the scenario's.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run several scenarios over several seeds and tabulate the differences.
    Compare {
        #[arg(long, default_value = "exp2")]
        preset: String,
        /// Scenario names or files; defaults to the six paper scenarios, or the
        /// framework set for exp3.
        #[arg(long, value_delimiter = ',')]
        scenario: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seed: Vec<u64>,
        /// Scenario the deltas are computed against; defaults to the first.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Fit performance parameters to target improvement ratios.
    Calibrate {
        /// Targets file; defaults to the paper's headline ratios.
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Parameter search box; defaults to the shipped one.
        #[arg(long)]
        space: Option<PathBuf>,
        /// Starting parameters for anything outside the box.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_params(path: &Path) -> Result<PerfParams> {
    PerfParams::load(path)
}

/// A scenario file if `arg` names an existing file or ends in `.toml`,
/// otherwise a named mode on the preset workload.
fn resolve_scenario(arg: &str, preset: Option<&str>, params: Option<&PerfParams>) -> Result<ScenarioSpec> {
    let mut spec = if arg.ends_with(".toml") || Path::new(arg).is_file() {
        let mut s = ScenarioSpec::load(Path::new(arg))?;
        if let Some(p) = preset {
            ScenarioSpec::preset(p)?;
            s.workload = WorkloadSpec::preset(p);
        }
        s
    } else {
        ScenarioSpec::preset(preset.unwrap_or("exp2"))?.with_mode(arg)?
    };
    if let Some(p) = params {
        spec = spec.with_perf(*p);
    }
    spec.validate()?;
    Ok(spec)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::config(format!("cannot create {}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            preset,
            scenario,
            seed,
            out,
            format,
            params,
        } => {
            let format: ReportFormat = format.parse()?;
            let params = params.as_deref().map(load_params).transpose()?;
            let spec = resolve_scenario(&scenario, preset.as_deref(), params.as_ref())?;
            info!("simulating {} with seed {seed}", spec.name);
            let rep = grainsched::sim::run(&spec, seed)?;
            report::write_outputs(&rep, &out, format)?;
            println!("scenario            {}", rep.scenario_name);
            println!("seed                {}", rep.seed);
            println!("jobs                {}", rep.records.len());
            println!("overall_response_s  {}", grainsched::rational::format_decimal(&rep.overall_response_s, 6));
            println!("makespan_s          {}", grainsched::rational::format_decimal(&rep.makespan_s, 6));
        }
        Command::Compare {
            preset,
            scenario,
            seed,
            baseline,
            out,
            params,
        } => {
            let params = params.as_deref().map(load_params).transpose()?;
            let names: Vec<String> = if scenario.is_empty() {
                let set: &[&str] = if preset == "exp3" { &FRAMEWORK_SCENARIOS } else { &PAPER_SCENARIOS };
                set.iter().map(|s| s.to_string()).collect()
            } else {
                scenario
            };
            let specs = names
                .iter()
                .map(|n| resolve_scenario(n, Some(&preset), params.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let baseline = baseline.unwrap_or_else(|| specs[0].name.clone());
            let table = experiment::compare(&specs, &seed, &baseline)?;
            create_dir(&out)?;
            write(&out.join("compare.csv"), &table.to_csv())?;
            write(&out.join("compare.json"), &table.to_json())?;
            print!("{}", table.to_csv());
        }
        Command::Calibrate {
            targets,
            space,
            params,
            budget,
            seed,
            out,
        } => {
            let targets = match targets {
                Some(p) => CalibrationTargets::load(&p)?,
                None => CalibrationTargets::paper_defaults(),
            };
            let space = match space {
                Some(p) => ParamSpace::load(&p)?,
                None => experiment::shipped::space(),
            };
            let base = match params {
                Some(p) => load_params(&p)?,
                None => PerfParams::default(),
            };
            let result = experiment::calibrate(&targets, &space, &base, budget, seed)?;
            create_dir(&out)?;
            write(&out.join("params.toml"), &result.params_toml())?;
            write(&out.join("calibration.json"), &result.report_json())?;
            println!("objective  {:.6}", result.objective);
            for r in &result.residuals {
                println!(
                    "{:40} target {:>9.4}  achieved {:>9.4}  {}",
                    r.name,
                    r.target,
                    r.achieved,
                    if r.within_tolerance { "ok" } else { "outside tolerance" }
                );
            }
            if result.warning {
                eprintln!("warning: some targets are outside their tolerance");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAINSCHED_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
