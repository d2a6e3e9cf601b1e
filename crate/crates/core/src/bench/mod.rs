//! Progress-reward benchmark: curve datasets, the five quality metrics and
//! a synthetic dataset built from scripted rollouts.

mod dataset;
pub mod metrics;

pub use dataset::{
    load_curve_dir, make_synthetic_dataset, read_curve_file, trajectory_key, write_curve_dir,
    write_curve_file, CurveMethod, SyntheticSet, SyntheticSpec,
};
pub use metrics::{
    jsd, jsd_of_distributions, median_bandwidth, mmd, mmd_with_bandwidth, monotonicity, smd, spearman, Flagged,
    DEFAULT_JSD_BINS, SMD_SENTINEL,
};

use crate::{Error, Result};

/// Progress curves of one task, split by outcome.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskCurves {
    pub task_id: String,
    pub successes: Vec<Vec<f64>>,
    pub failures: Vec<Vec<f64>>,
}

impl TaskCurves {
    pub fn success_finals(&self) -> Vec<f64> {
        self.successes.iter().filter_map(|c| c.last().copied()).collect()
    }

    pub fn failure_finals(&self) -> Vec<f64> {
        self.failures.iter().filter_map(|c| c.last().copied()).collect()
    }
}

/// Curves for every task, as produced by one progress-estimation method.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchDataset {
    pub tasks: Vec<TaskCurves>,
}

impl BenchDataset {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Contract("benchmark dataset has no tasks".into()));
        }
        for t in &self.tasks {
            for c in t.successes.iter().chain(&t.failures) {
                if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Contract(format!("task {}: empty or non-finite curve", t.task_id)));
                }
            }
        }
        Ok(())
    }
}

/// Metric values for one task or for the task average. `None` means no
/// value could be computed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricRow {
    pub sc: Option<f64>,
    pub mono: Option<f64>,
    pub mmd: Option<f64>,
    pub jsd: Option<f64>,
    pub smd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub task_id: String,
    pub row: MetricRow,
    /// Success curves that were constant (scored 0 by Spearman).
    pub constant_curves: usize,
    /// SMD fell back to the zero-variance sentinel.
    pub smd_sentinel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_task: Vec<TaskMetrics>,
    pub mean: MetricRow,
    pub warnings: Vec<String>,
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Scores one method's curves: SC and Mono over success curves, MMD / JSD /
/// SMD over final values of both populations, each averaged per task and
/// then across tasks.
pub fn evaluate_reward_model(dataset: &BenchDataset, jsd_bins: usize) -> Result<MetricsReport> {
    dataset.validate()?;
    let mut warnings = Vec::new();
    let mut per_task = Vec::with_capacity(dataset.tasks.len());
    for t in &dataset.tasks {
        let mut sc = Vec::new();
        let mut mono = Vec::new();
        let mut constant_curves = 0;
        for c in &t.successes {
            if c.len() < 2 {
                warnings.push(format!("task {}: success curve of length {} skipped", t.task_id, c.len()));
                continue;
            }
            let s = spearman(c)?;
            constant_curves += usize::from(s.flagged);
            sc.push(s.value);
            mono.push(monotonicity(c)?);
        }
        let (sf, ff) = (t.success_finals(), t.failure_finals());
        let mut row = MetricRow {
            sc: mean_of(sc.into_iter()),
            mono: mean_of(mono.into_iter()),
            ..MetricRow::default()
        };
        let mut smd_sentinel = false;
        if sf.is_empty() || ff.is_empty() {
            warnings.push(format!("task {}: missing a population, separation metrics skipped", t.task_id));
        } else {
            row.mmd = Some(mmd(&sf, &ff)?);
            row.jsd = Some(jsd(&sf, &ff, jsd_bins)?);
            if sf.len() + ff.len() >= 3 {
                let d = smd(&sf, &ff)?;
                smd_sentinel = d.flagged;
                row.smd = Some(d.value);
            } else {
                warnings.push(format!("task {}: too few finals for SMD", t.task_id));
            }
        }
        if constant_curves > 0 {
            warnings.push(format!("task {}: {constant_curves} constant success curve(s) scored SC = 0", t.task_id));
        }
        if smd_sentinel {
            warnings.push(format!("task {}: zero pooled variance, SMD is the sentinel value", t.task_id));
        }
        per_task.push(TaskMetrics {
            task_id: t.task_id.clone(),
            row,
            constant_curves,
            smd_sentinel,
        });
    }
    let avg = |f: fn(&MetricRow) -> Option<f64>| mean_of(per_task.iter().filter_map(|t| f(&t.row)));
    let mean = MetricRow {
        sc: avg(|r| r.sc),
        mono: avg(|r| r.mono),
        mmd: avg(|r| r.mmd),
        jsd: avg(|r| r.jsd),
        smd: avg(|r| r.smd),
    };
    Ok(MetricsReport { per_task, mean, warnings })
}
