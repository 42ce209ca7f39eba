use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;

/// One accuracy-curve sample during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Tasks trained on so far (including the one in progress).
    pub tasks_seen: usize,
    pub overall: f64,
    /// Accuracy on each task seen so far, in stream order.
    pub per_task: Vec<f64>,
}

/// Metrics of a single seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_idx: usize,
    pub run_seed: u64,
    pub param_count: usize,
    /// Row `t` holds per-task accuracy on tasks `0..=t`, measured right
    /// after training on task `t` finished (lower-triangular).
    pub acc_matrix: Vec<Vec<f64>>,
    pub curve: Vec<CurvePoint>,
    pub final_per_task: Vec<f64>,
    /// Sample-weighted accuracy over the union of all eval subsets.
    pub final_micro: f64,
    /// Unweighted mean of per-task accuracies.
    pub final_macro: f64,
    /// Headline number: micro for single-head runs, macro for multi-head.
    pub final_overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub mean_final_accuracy: f64,
    /// Standard error: sample stddev / sqrt(runs); 0 for a single run.
    pub std_error: f64,
    pub mean_final_micro: f64,
    pub mean_final_macro: f64,
    pub per_task_mean: Vec<f64>,
}

impl AggregateReport {
    pub fn from_runs(runs: &[RunMetrics]) -> AggregateReport {
        let n = runs.len();
        let mean = |f: fn(&RunMetrics) -> f64| -> f64 {
            if n == 0 {
                return 0.0;
            }
            runs.iter().map(f).sum::<f64>() / n as f64
        };
        let mean_final = mean(|r| r.final_overall);
        let std_error = if n > 1 {
            let var = runs
                .iter()
                .map(|r| (r.final_overall - mean_final).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let n_tasks = runs.first().map_or(0, |r| r.final_per_task.len());
        let per_task_mean = (0..n_tasks)
            .map(|t| runs.iter().map(|r| r.final_per_task[t]).sum::<f64>() / n as f64)
            .collect();
        AggregateReport {
            runs: n,
            mean_final_accuracy: mean_final,
            std_error,
            mean_final_micro: mean(|r| r.final_micro),
            mean_final_macro: mean(|r| r.final_macro),
            per_task_mean,
        }
    }
}

/// Wall-clock bookkeeping. This is the only nondeterministic part of a
/// report; determinism checks compare reports with this field removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at_unix: f64,
    pub per_run_wall_s: Vec<f64>,
    pub total_wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub param_count: usize,
    pub aggregate: AggregateReport,
    pub runs: Vec<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: Timing,
}

impl Report {
    pub fn from_file(path: &Path) -> Result<Report> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&json)?)
    }
}

/// Writes `report.json` and `curves.csv` into `out_dir`.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let json_path = out_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let csv_path = out_dir.join("curves.csv");
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?,
    );
    let n_tasks = report.config.n_tasks;
    let mut header = String::from("run,step,tasks_seen,overall");
    for t in 0..n_tasks {
        header.push_str(&format!(",acc_task{t}"));
    }
    writeln!(f, "{header}").map_err(|e| Error::io(&csv_path, e))?;
    for run in &report.runs {
        for p in &run.curve {
            let mut line = format!("{},{},{},{}", run.run_idx, p.step, p.tasks_seen, p.overall);
            for t in 0..n_tasks {
                line.push(',');
                if let Some(a) = p.per_task.get(t) {
                    line.push_str(&a.to_string());
                }
            }
            writeln!(f, "{line}").map_err(|e| Error::io(&csv_path, e))?;
        }
    }
    f.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

/// Re-derives the aggregate block of an existing `report.json` from its
/// per-run metrics and rewrites the files in place.
pub fn reaggregate(dir: &Path) -> Result<Report> {
    let path = dir.join("report.json");
    let mut report = Report::from_file(&path)?;
    report.aggregate = AggregateReport::from_runs(&report.runs);
    emit_report(&report, dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(idx: usize, overall: f64) -> RunMetrics {
        RunMetrics {
            run_idx: idx,
            run_seed: idx as u64,
            param_count: 10,
            acc_matrix: vec![vec![overall]],
            curve: vec![CurvePoint {
                step: 5,
                tasks_seen: 1,
                overall,
                per_task: vec![overall],
            }],
            final_per_task: vec![overall],
            final_micro: overall,
            final_macro: overall,
            final_overall: overall,
        }
    }

    #[test]
    fn aggregate_mean_and_std_error() {
        let runs = vec![metrics(0, 0.8), metrics(1, 0.9)];
        let agg = AggregateReport::from_runs(&runs);
        assert!((agg.mean_final_accuracy - 0.85).abs() < 1e-12);
        // sample stddev of {0.8, 0.9} is ~0.070711; SE divides by sqrt(2)
        assert!((agg.std_error - 0.05).abs() < 1e-9);
        assert_eq!(agg.per_task_mean.len(), 1);
    }

    #[test]
    fn single_run_has_zero_std_error() {
        let agg = AggregateReport::from_runs(&[metrics(0, 0.7)]);
        assert_eq!(agg.std_error, 0.0);
        assert_eq!(agg.runs, 1);
    }

    #[test]
    fn report_roundtrips_and_emits_files() {
        use crate::harness::config::tests::sample_config;
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![metrics(0, 0.5)];
        let report = Report {
            config: sample_config(),
            param_count: 10,
            aggregate: AggregateReport::from_runs(&runs),
            runs,
            error: None,
            timestamp: Timing { started_at_unix: 0.0, per_run_wall_s: vec![1.0], total_wall_s: 1.0 },
        };
        emit_report(&report, dir.path()).unwrap();
        let back = Report::from_file(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, report);
        let csv = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert!(csv.starts_with("run,step,tasks_seen,overall,acc_task0"));
        assert!(csv.lines().count() >= 2);
    }

    #[test]
    fn reaggregate_fixes_stale_aggregate() {
        use crate::harness::config::tests::sample_config;
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![metrics(0, 0.5), metrics(1, 0.7)];
        let mut report = Report {
            config: sample_config(),
            param_count: 10,
            aggregate: AggregateReport::from_runs(&runs),
            runs,
            error: None,
            timestamp: Timing { started_at_unix: 0.0, per_run_wall_s: vec![], total_wall_s: 0.0 },
        };
        report.aggregate.mean_final_accuracy = -1.0;
        emit_report(&report, dir.path()).unwrap();
        let fixed = reaggregate(dir.path()).unwrap();
        assert!((fixed.aggregate.mean_final_accuracy - 0.6).abs() < 1e-12);
    }
}
