use std::time::Instant;

use crate::data::{
    dataset_files, load_idx, make_permuted_stream, make_split_stream, BatchSource, LabeledDataset,
    Split, TaskStream,
};
use crate::error::{Error, Result};
use crate::harness::report::{
    emit_report, AggregateReport, CurvePoint, Report, RunMetrics, Timing,
};
use crate::harness::{ExperimentConfig, HeadMode, Protocol};
use crate::layers::ClassMask;
use crate::model::{build_network, Network};
use crate::optimizer::train_step;
use crate::seed;

const EVAL_BATCH: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub per_task: Vec<f64>,
    pub micro: f64,
    pub macro_avg: f64,
}

impl EvalResult {
    fn overall(&self, head_mode: HeadMode) -> f64 {
        match head_mode {
            HeadMode::Single => self.micro,
            HeadMode::Multi => self.macro_avg,
        }
    }
}

fn argmax_allowed(row: &[f32], mask: Option<&ClassMask>) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f32::NEG_INFINITY;
    for (c, &v) in row.iter().enumerate() {
        if let Some(m) = mask {
            if !m.allows(c) {
                continue;
            }
        }
        if best == usize::MAX || v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

/// Test accuracy on tasks `0..=upto`. Single-head evaluation predicts over
/// all classes; multi-head restricts the argmax to each task's classes.
pub fn evaluate(
    net: &mut Network,
    stream: &TaskStream,
    test: &LabeledDataset,
    head_mode: HeadMode,
    upto: usize,
) -> Result<EvalResult> {
    let mut per_task = Vec::with_capacity(upto + 1);
    let mut correct_total = 0usize;
    let mut count_total = 0usize;
    for t in 0..=upto {
        let mask = match head_mode {
            HeadMode::Single => None,
            HeadMode::Multi => Some(stream.task(t).mask().clone()),
        };
        let mut correct = 0usize;
        let mut count = 0usize;
        let mut src = stream.eval_batches(test, t, EVAL_BATCH);
        while let Some((x, y)) = src.next_batch() {
            let logits = net.forward(&x, false)?;
            for (r, &label) in y.iter().enumerate() {
                if argmax_allowed(logits.row(r), mask.as_ref()) == label as usize {
                    correct += 1;
                }
            }
            count += y.len();
        }
        per_task.push(correct as f64 / count.max(1) as f64);
        correct_total += correct;
        count_total += count;
    }
    let micro = correct_total as f64 / count_total.max(1) as f64;
    let macro_avg = per_task.iter().sum::<f64>() / per_task.len() as f64;
    Ok(EvalResult { per_task, micro, macro_avg })
}

fn load_pair(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let [ti, tl, ei, el] = dataset_files(&cfg.data_dir, cfg.dataset);
    let train = load_idx(&ti, &tl, Split::Train)?;
    let test = load_idx(&ei, &el, Split::Test)?;
    Ok((train, test))
}

/// Builds the task stream for one seeded run.
pub fn build_stream(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    run_seed: u64,
) -> Result<TaskStream> {
    match cfg.protocol {
        Protocol::Split => make_split_stream(train, test, run_seed, cfg.shuffle_task_order),
        Protocol::Permuted => make_permuted_stream(train, test, cfg.n_tasks, run_seed),
    }
}

/// Trains and evaluates one run over an already-built stream.
pub fn run_single(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    stream: &TaskStream,
    run_idx: usize,
) -> Result<RunMetrics> {
    let run_seed = seed::run_seed(cfg.master_seed, run_idx as u64);
    let mut net = build_network(&cfg.architecture, run_seed)?;
    let param_count = net.param_count();
    let full_mask = ClassMask::full(cfg.architecture.n_classes);
    let mut step = 0usize;
    let mut curve = Vec::new();
    let mut acc_matrix = Vec::with_capacity(stream.n_tasks());
    for t in 0..stream.n_tasks() {
        let train_mask = match cfg.head_mode {
            HeadMode::Single => full_mask.clone(),
            HeadMode::Multi => stream.task(t).mask().clone(),
        };
        let mut src = stream.train_batches(train, t, cfg.batch_size);
        while let Some((x, y)) = src.next_batch() {
            train_step(&mut net, &x, &y, &train_mask, &cfg.optimizer)?;
            step += 1;
            if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
                let ev = evaluate(&mut net, stream, test, cfg.head_mode, t)?;
                curve.push(CurvePoint {
                    step,
                    tasks_seen: t + 1,
                    overall: ev.overall(cfg.head_mode),
                    per_task: ev.per_task,
                });
            }
        }
        let ev = evaluate(&mut net, stream, test, cfg.head_mode, t)?;
        eprintln!(
            "run {run_idx} task {t}: overall {:.4} ({} steps)",
            ev.overall(cfg.head_mode),
            step
        );
        curve.push(CurvePoint {
            step,
            tasks_seen: t + 1,
            overall: ev.overall(cfg.head_mode),
            per_task: ev.per_task.clone(),
        });
        acc_matrix.push(ev.per_task);
    }
    let last = stream.n_tasks() - 1;
    let final_ev = evaluate(&mut net, stream, test, cfg.head_mode, last)?;
    Ok(RunMetrics {
        run_idx,
        run_seed,
        param_count,
        acc_matrix,
        curve,
        final_overall: final_ev.overall(cfg.head_mode),
        final_per_task: final_ev.per_task,
        final_micro: final_ev.micro,
        final_macro: final_ev.macro_avg,
    })
}

fn now_unix() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs all seeds of an experiment and writes `report.json` / `curves.csv`
/// into `cfg.out_dir`. If a run fails, metrics of completed runs are still
/// flushed (with an `error` field) before the error propagates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let (train, test) = load_pair(cfg)?;
    let started_at_unix = now_unix();
    let t_start = Instant::now();
    let mut runs: Vec<RunMetrics> = Vec::with_capacity(cfg.runs);
    let mut per_run_wall_s = Vec::with_capacity(cfg.runs);
    let mut failure: Option<Error> = None;
    for run_idx in 0..cfg.runs {
        let t_run = Instant::now();
        let run_seed = seed::run_seed(cfg.master_seed, run_idx as u64);
        let result = build_stream(cfg, &train, &test, run_seed)
            .and_then(|stream| run_single(cfg, &train, &test, &stream, run_idx));
        match result {
            Ok(m) => {
                per_run_wall_s.push(t_run.elapsed().as_secs_f64());
                runs.push(m);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let report = Report {
        config: cfg.clone(),
        param_count: runs.first().map_or(0, |r| r.param_count),
        aggregate: AggregateReport::from_runs(&runs),
        runs,
        error: failure.as_ref().map(|e| e.to_string()),
        timestamp: Timing {
            started_at_unix,
            per_run_wall_s,
            total_wall_s: t_start.elapsed().as_secs_f64(),
        },
    };
    emit_report(&report, &cfg.out_dir)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Runs the experiment once per density value, reporting each into
/// `out_dir/density_<pct>/` and summarizing into `out_dir/sweep.csv`.
pub fn density_sweep(base: &ExperimentConfig, densities: &[f64]) -> Result<Vec<(f64, f64)>> {
    if densities.is_empty() {
        return Err(Error::config("density sweep needs at least one density"));
    }
    let mut points = Vec::with_capacity(densities.len());
    for &d in densities {
        let mut cfg = base.clone();
        cfg.architecture.density_pct = d;
        cfg.out_dir = base.out_dir.join(format!("density_{d}"));
        let report = run_experiment(&cfg)?;
        points.push((d, report.aggregate.mean_final_accuracy));
    }
    std::fs::create_dir_all(&base.out_dir).map_err(|e| Error::io(&base.out_dir, e))?;
    let path = base.out_dir.join("sweep.csv");
    let mut csv = String::from("density_pct,mean_final_accuracy\n");
    for (d, acc) in &points {
        csv.push_str(&format!("{d},{acc}\n"));
    }
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(points)
}
