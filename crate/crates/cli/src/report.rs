//! Delimited result tables and their readers.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::{CliError, Result};

pub const METRICS_HEADER: &str = "iteration,success_rate,mean_reward,mean_kl";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_kl: f64,
}

pub fn write_metrics_header(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")
}

pub fn write_metrics_row(w: &mut impl Write, r: &MetricsRow) -> std::io::Result<()> {
    writeln!(w, "{},{},{},{}", r.iteration, r.success_rate, r.mean_reward, r.mean_kl)
}

fn bad(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}:{line}: {msg}", path.display()))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(path, 0, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(bad(path, 1, "unexpected metrics header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(path, i + 2, "expected 4 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(path, i + 2, e));
            Ok(MetricsRow {
                iteration: f[0].parse().map_err(|e| bad(path, i + 2, e))?,
                success_rate: num(f[1])?,
                mean_reward: num(f[2])?,
                mean_kl: num(f[3])?,
            })
        })
        .collect()
}

/// Median of integers, averaging the middle pair for even counts.
pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 })
}

/// One (variant, seed) sub-run of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRun {
    pub variant: String,
    pub seed: u64,
    pub dir: String,
    /// Success rate per iteration; empty when the run failed.
    pub series: Vec<f64>,
    pub steps_to_threshold: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub threshold: f64,
    pub budget: usize,
    pub runs: Vec<SubRun>,
}

impl ComparisonReport {
    /// Variants in first-appearance order.
    pub fn variants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.runs {
            if !out.contains(&r.variant) {
                out.push(r.variant.clone());
            }
        }
        out
    }

    pub fn steps(&self, variant: &str) -> Vec<usize> {
        self.runs
            .iter()
            .filter(|r| r.variant == variant)
            .filter_map(|r| r.steps_to_threshold)
            .collect()
    }

    pub fn median_steps(&self, variant: &str) -> Option<f64> {
        median(&self.steps(variant))
    }

    /// Per-run table: `variant,seed,steps_to_threshold,final_success_rate,status`.
    pub fn runs_table(&self) -> String {
        let mut s = String::from("variant,seed,steps_to_threshold,final_success_rate,status\n");
        for r in &self.runs {
            let steps = r.steps_to_threshold.map_or_else(|| "-".into(), |v| v.to_string());
            let last = r.series.last().map_or_else(|| "-".into(), |v| v.to_string());
            let status = r.error.as_deref().map_or_else(|| "ok".to_string(), |e| format!("failed: {}", e.replace(',', ";")));
            writeln!(s, "{},{},{steps},{last},{status}", r.variant, r.seed).expect("string write");
        }
        s
    }

    /// Aggregate table: `variant,runs,median_steps_to_threshold,reached`.
    pub fn summary_table(&self) -> String {
        let mut s = String::from("variant,runs,median_steps_to_threshold,reached\n");
        for v in self.variants() {
            let steps = self.steps(&v);
            let reached = steps.iter().filter(|&&x| x <= self.budget).count();
            let med = median(&steps).map_or_else(|| "-".into(), |m| m.to_string());
            writeln!(s, "{v},{},{med},{reached}", steps.len()).expect("string write");
        }
        s
    }
}

/// Reference ordering of alpha values, best last, shown next to sweeps.
pub const ALPHA_REFERENCE_ORDERING: &str = "reference ordering (worst to best): 0 < 0.3 < 0.5 < 1.0 < 0.8";

/// Alpha sweep summary: one row per alpha, sorted by median steps to
/// threshold (fewest first, ties by alpha).
pub fn sweep_table(report: &ComparisonReport, alphas: &[f64]) -> String {
    let mut rows: Vec<(f64, String, Option<f64>, usize)> = alphas
        .iter()
        .map(|&a| {
            let v = alpha_variant(a);
            let steps = report.steps(&v);
            (a, v.clone(), median(&steps), steps.len())
        })
        .collect();
    rows.sort_by(|x, y| {
        let key = |m: Option<f64>| m.unwrap_or(f64::INFINITY);
        key(x.2).total_cmp(&key(y.2)).then(x.0.total_cmp(&y.0))
    });
    let mut s = String::from("rank,alpha,median_steps_to_threshold,runs\n");
    for (i, (a, _, m, n)) in rows.iter().enumerate() {
        let med = m.map_or_else(|| "-".into(), |m| m.to_string());
        writeln!(s, "{},{a},{med},{n}", i + 1).expect("string write");
    }
    writeln!(s, "# {ALPHA_REFERENCE_ORDERING}").expect("string write");
    s
}

pub fn alpha_variant(alpha: f64) -> String {
    format!("alpha-{alpha}")
}
