//! Serialization of simulation results: JSON and CSV reports, the event trace
//! and a Gantt table of pod lifetimes. Times are rendered in seconds with six
//! decimals.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{format_decimal, seconds, Rational};
use crate::sim::SimReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::config(format!("unknown report format {s:?} (json or csv)"))),
        }
    }
}

#[derive(Serialize)]
struct JobRow<'a> {
    job_id: &'a str,
    benchmark: &'a str,
    profile: String,
    submit_s: f64,
    start_s: f64,
    finish_s: f64,
    wait_s: f64,
    run_s: f64,
    response_s: f64,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    scenario: &'a str,
    seed: u64,
    overall_response_s: f64,
    makespan_s: f64,
    mean_run_s: std::collections::BTreeMap<String, f64>,
    jobs: Vec<JobRow<'a>>,
}

fn opt_seconds(r: Option<Rational>) -> f64 {
    r.as_ref().map(seconds).unwrap_or(f64::NAN)
}

fn job_rows(report: &SimReport) -> Vec<JobRow<'_>> {
    report
        .records
        .iter()
        .map(|r| JobRow {
            job_id: &r.job_id,
            benchmark: &r.benchmark,
            profile: r.profile.to_string(),
            submit_s: seconds(&r.submit_time_s),
            start_s: opt_seconds(r.start_time_s.clone()),
            finish_s: opt_seconds(r.finish_time_s.clone()),
            wait_s: opt_seconds(r.wait_s()),
            run_s: opt_seconds(r.run_s()),
            response_s: opt_seconds(r.response_s()),
        })
        .collect()
}

pub fn report_json(report: &SimReport) -> String {
    let doc = ReportDoc {
        scenario: &report.scenario_name,
        seed: report.seed,
        overall_response_s: seconds(&report.overall_response_s),
        makespan_s: seconds(&report.makespan_s),
        mean_run_s: report
            .mean_run_by_benchmark()
            .iter()
            .map(|(k, v)| (k.clone(), seconds(v)))
            .collect(),
        jobs: job_rows(report),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

fn opt_decimal(r: Option<Rational>) -> String {
    r.map(|v| format_decimal(&v, 6)).unwrap_or_default()
}

/// One row per job.
pub fn report_csv(report: &SimReport) -> String {
    let mut out = String::from("job_id,benchmark,profile,submit_s,start_s,finish_s,wait_s,run_s,response_s\n");
    for r in &report.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.job_id,
            r.benchmark,
            r.profile,
            format_decimal(&r.submit_time_s, 6),
            opt_decimal(r.start_time_s.clone()),
            opt_decimal(r.finish_time_s.clone()),
            opt_decimal(r.wait_s()),
            opt_decimal(r.run_s()),
            opt_decimal(r.response_s()),
        ));
    }
    out
}

/// Run-level metrics as `metric,value` rows.
pub fn summary_csv(report: &SimReport) -> String {
    format!(
        "metric,value\nscenario,{}\nseed,{}\njobs,{}\noverall_response_s,{}\nmakespan_s,{}\n",
        report.scenario_name,
        report.seed,
        report.records.len(),
        format_decimal(&report.overall_response_s, 6),
        format_decimal(&report.makespan_s, 6)
    )
}

/// One row per pod with its node, lifetime and pinned CPUs.
pub fn gantt_csv(report: &SimReport) -> String {
    let mut out = String::from("job,pod,node,start_s,end_s,cpus\n");
    for p in &report.placements {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.job_id,
            p.pod_id,
            p.node_id,
            format_decimal(&p.start_s, 6),
            opt_decimal(p.end_s.clone()),
            p.assignment.cpu_list().replace(',', " ")
        ));
    }
    out
}

/// Writes `report.<fmt>` (plus `summary.csv` for csv), `trace.log` and
/// `gantt.csv` into `dir`, creating it if needed.
pub fn write_outputs(report: &SimReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::config(format!("cannot create {}: {e}", dir.display())))?;
    let mut files: Vec<(&str, String)> = match format {
        ReportFormat::Json => vec![("report.json", report_json(report))],
        ReportFormat::Csv => vec![
            ("report.csv", report_csv(report)),
            ("summary.csv", summary_csv(report)),
        ],
    };
    files.push(("trace.log", report.trace_text()));
    files.push(("gantt.csv", gantt_csv(report)));
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioSpec;
    use crate::sim::run;

    #[test]
    fn formats_render_every_job() {
        let rep = run(&ScenarioSpec::preset("exp1").unwrap(), 0).unwrap();
        let json: serde_json::Value = serde_json::from_str(&report_json(&rep)).unwrap();
        assert_eq!(json["jobs"].as_array().unwrap().len(), 10);
        assert_eq!(json["scenario"], "CM_G_TG");
        assert_eq!(report_csv(&rep).lines().count(), 11);
        let gantt = gantt_csv(&rep);
        assert!(gantt.starts_with("job,pod,node,start_s,end_s"));
        // 16 workers and a launcher per job.
        assert_eq!(gantt.lines().count(), 1 + 10 * 17);
        assert!(summary_csv(&rep).contains("overall_response_s,"));
    }

    #[test]
    fn format_names() {
        assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
