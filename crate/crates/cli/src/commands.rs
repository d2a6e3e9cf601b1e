//! The subcommands. Each returns what it wrote so tests can inspect it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use srpo_core::bench::{
    evaluate_reward_model, load_curve_dir, make_synthetic_dataset, write_curve_dir, BenchDataset, CurveMethod,
    MetricsReport, SyntheticSpec,
};
use srpo_core::encoder::{export_embeddings, import_external_embeddings, window_key};
use srpo_core::env::{scripted_rollout, ScriptedBehavior};
use srpo_core::reward::{CenterMode, ReferenceSource};
use srpo_core::trajectory::{StoreHeader, TrajectoryStore};
use srpo_core::{seed, Embedding, Encoder};

use crate::config::{Algorithm, RunConfig};
use crate::experiment::{train_run, RunResources};
use crate::plot::{line_plot, Series};
use crate::report::{alpha_variant, read_metrics, sweep_table, ComparisonReport, SubRun};
use crate::{CliError, Result};

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn subrun_dir_name(variant: &str, seed: u64) -> String {
    format!("{variant}-seed{seed}")
}

/// `train`: one run directory per configured seed, named
/// `<algorithm>-seed<seed>`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    let report = run_variants(&[(cfg.algorithm.to_string(), cfg.clone())], &cfg.seeds, out, jobs)?;
    let mut dirs = Vec::new();
    for r in &report.runs {
        if let Some(e) = &r.error {
            return Err(CliError::Runtime(format!("run {} failed: {e}", r.dir)));
        }
        let dir = out.join(&r.dir);
        render_training_plot(&dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Runs every (variant, seed) pair under `out`, in parallel up to `jobs`.
/// A failing sub-run is recorded and the rest continue.
pub fn run_variants(variants: &[(String, RunConfig)], seeds: &[u64], out: &Path, jobs: usize) -> Result<ComparisonReport> {
    let first = &variants.first().ok_or_else(|| CliError::Config("nothing to run".into()))?.1;
    let budget = first.iterations;
    if variants.iter().any(|(_, c)| c.iterations != budget) {
        return Err(CliError::Config("all variants must share the iteration budget".into()));
    }
    let resources: Vec<RunResources> = variants.iter().map(|(_, c)| RunResources::load(c)).collect::<Result<_>>()?;
    fs::create_dir_all(out)?;
    let tasks: Vec<(usize, u64)> = (0..variants.len()).flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect();
    let runs = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(v, s)| {
                let (name, cfg) = &variants[v];
                let dir = subrun_dir_name(name, s);
                match train_run(cfg, &resources[v], s, Some(&out.join(&dir))) {
                    Ok(o) => SubRun {
                        variant: name.clone(),
                        seed: s,
                        dir,
                        series: o.rows.iter().map(|r| r.success_rate).collect(),
                        steps_to_threshold: Some(o.steps_to_threshold),
                        error: None,
                    },
                    Err(e) => SubRun {
                        variant: name.clone(),
                        seed: s,
                        dir,
                        series: Vec::new(),
                        steps_to_threshold: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(ComparisonReport {
        threshold: first.threshold,
        budget,
        runs,
    })
}

fn write_comparison(report: &ComparisonReport, out: &Path) -> Result<()> {
    fs::write(out.join("compare.csv"), report.runs_table())?;
    fs::write(out.join("summary.csv"), report.summary_table())?;
    render_comparison_plot(out)?;
    Ok(())
}

fn check_seeds(cfg: &RunConfig) -> Result<()> {
    if cfg.seeds.len() < 3 {
        return Err(CliError::Config("comparisons need at least 3 seeds".into()));
    }
    Ok(())
}

/// `compare`: every algorithm in `cfg.algorithms` on every seed.
pub fn cmd_compare(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<ComparisonReport> {
    check_seeds(cfg)?;
    if cfg.algorithms.len() < 2 {
        return Err(CliError::Config("compare needs at least 2 algorithms".into()));
    }
    let variants: Vec<(String, RunConfig)> = cfg
        .algorithms
        .iter()
        .map(|&a| (a.to_string(), RunConfig { algorithm: a, ..cfg.clone() }))
        .collect();
    let report = run_variants(&variants, &cfg.seeds, out, jobs)?;
    write_comparison(&report, out)?;
    Ok(report)
}

/// `sweep-alpha`: SRPO at every alpha in `cfg.alphas`, all else fixed.
pub fn cmd_sweep_alpha(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<ComparisonReport> {
    check_seeds(cfg)?;
    if cfg.alphas.is_empty() {
        return Err(CliError::Config("alphas must not be empty".into()));
    }
    let variants: Vec<(String, RunConfig)> = cfg
        .alphas
        .iter()
        .map(|&a| {
            (
                alpha_variant(a),
                RunConfig {
                    algorithm: Algorithm::Srpo,
                    alpha: a,
                    ..cfg.clone()
                },
            )
        })
        .collect();
    let report = run_variants(&variants, &cfg.seeds, out, jobs)?;
    write_comparison(&report, out)?;
    fs::write(out.join("sweep.csv"), sweep_table(&report, &cfg.alphas))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationMode {
    ReferenceSource,
    CenterMode,
}

/// `ablate`: paired SRPO runs that differ in one reference-set choice.
pub fn cmd_ablate(cfg: &RunConfig, mode: AblationMode, out: &Path, jobs: usize) -> Result<ComparisonReport> {
    let base = RunConfig {
        algorithm: Algorithm::Srpo,
        ..cfg.clone()
    };
    let variants = match mode {
        AblationMode::ReferenceSource => {
            if cfg.reference_store.is_empty() {
                return Err(CliError::Config("reference-source ablation needs reference_store".into()));
            }
            vec![
                ("in-batch".to_string(), RunConfig { reference_source: ReferenceSource::InBatch, ..base.clone() }),
                ("external-fixed".to_string(), RunConfig { reference_source: ReferenceSource::ExternalFixed, ..base }),
            ]
        }
        AblationMode::CenterMode => vec![
            ("centroid".to_string(), RunConfig { center_mode: CenterMode::Centroid, ..base.clone() }),
            ("nearest-success".to_string(), RunConfig { center_mode: CenterMode::NearestSuccess, ..base }),
        ],
    };
    let report = run_variants(&variants, &cfg.seeds, out, jobs)?;
    write_comparison(&report, out)?;
    Ok(report)
}

/// Learning curves of a comparison directory, regenerated from
/// `compare.csv` and the sub-run metrics tables.
pub fn render_comparison_plot(dir: &Path) -> Result<PathBuf> {
    let text = fs::read_to_string(dir.join("compare.csv"))?;
    let mut by_variant: BTreeMap<String, (usize, Vec<Vec<f64>>)> = BTreeMap::new();
    for (order, line) in text.lines().skip(1).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 || f[4] != "ok" {
            continue;
        }
        let seed: u64 = f[1].parse().map_err(|_| CliError::Runtime(format!("bad seed in compare.csv: {line}")))?;
        let rows = read_metrics(&dir.join(subrun_dir_name(f[0], seed)).join("metrics.csv"))?;
        let entry = by_variant.entry(f[0].to_string()).or_insert((order, Vec::new()));
        entry.1.push(rows.iter().map(|r| r.success_rate).collect());
    }
    let mut variants: Vec<_> = by_variant.into_iter().collect();
    variants.sort_by_key(|(_, (order, _))| *order);
    let series: Vec<Series> = variants
        .into_iter()
        .map(|(name, (_, runs))| {
            let len = runs.iter().map(Vec::len).min().unwrap_or(0);
            let points = (0..len)
                .map(|i| ((i + 1) as f64, runs.iter().map(|r| r[i]).sum::<f64>() / runs.len() as f64))
                .collect();
            Series { label: format!("{name} (n={})", runs.len()), points }
        })
        .collect();
    let path = dir.join("learning_curves.svg");
    fs::write(&path, line_plot("Evaluation success rate (mean over seeds)", "iteration", "success rate", &series, Some((0.0, 1.0))))?;
    Ok(path)
}

/// Success-rate curve of one run directory.
pub fn render_training_plot(dir: &Path) -> Result<PathBuf> {
    let rows = read_metrics(&dir.join("metrics.csv"))?;
    let series = vec![Series {
        label: "success rate".into(),
        points: rows.iter().map(|r| (r.iteration as f64, r.success_rate)).collect(),
    }];
    let path = dir.join("learning_curve.svg");
    fs::write(&path, line_plot("Evaluation success rate", "iteration", "success rate", &series, Some((0.0, 1.0))))?;
    Ok(path)
}

/// Progress curves of one method: successes and failures of every task.
pub fn render_curve_plot(curve_dir: &Path, out: &Path, title: &str) -> Result<PathBuf> {
    let ds = load_curve_dir(curve_dir)?;
    let mut series = Vec::new();
    for t in &ds.tasks {
        for (tag, curves) in [("success", &t.successes), ("failure", &t.failures)] {
            for (i, c) in curves.iter().enumerate() {
                series.push(Series {
                    label: format!("{} {tag} {i}", t.task_id),
                    points: c.iter().enumerate().map(|(k, v)| (k as f64, *v)).collect(),
                });
            }
        }
    }
    // Long legends are unreadable; keep the first few labels only.
    for s in series.iter_mut().skip(8) {
        s.label.clear();
    }
    fs::write(out, line_plot(title, "window", "progress", &series, Some((0.0, 1.0))))?;
    Ok(out.to_path_buf())
}

/// Where `bench-reward` gets its curves from.
#[derive(Debug, Clone)]
pub enum BenchSource {
    /// Directory of `.curve` files, scored as a single method.
    Curves(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BenchMethod {
    /// Latent distances under the configured encoder.
    Latent,
    /// L1 pixel distance to the final frame.
    Pixel,
    /// Latent distances over an imported embedding file.
    Imported,
    /// Ground-truth progress.
    Oracle,
}

impl BenchMethod {
    fn name(self) -> &'static str {
        match self {
            BenchMethod::Latent => "latent",
            BenchMethod::Pixel => "pixel",
            BenchMethod::Imported => "imported",
            BenchMethod::Oracle => "oracle",
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

/// Table with columns `method,sc,mono,mmd,jsd,smd`.
pub fn bench_table(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("method,sc,mono,mmd,jsd,smd\n");
    for (m, r) in rows {
        let a = &r.mean;
        let _ = writeln!(s, "{m},{},{},{},{},{}", fmt_opt(a.sc), fmt_opt(a.mono), fmt_opt(a.mmd), fmt_opt(a.jsd), fmt_opt(a.smd));
    }
    s
}

fn bench_task_table(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("method,task,sc,mono,mmd,jsd,smd,constant_curves,smd_sentinel\n");
    for (m, r) in rows {
        for t in &r.per_task {
            let a = &t.row;
            let _ = writeln!(
                s,
                "{m},{},{},{},{},{},{},{},{}",
                t.task_id,
                fmt_opt(a.sc),
                fmt_opt(a.mono),
                fmt_opt(a.mmd),
                fmt_opt(a.jsd),
                fmt_opt(a.smd),
                t.constant_curves,
                u8::from(t.smd_sentinel)
            );
        }
    }
    s
}

/// `bench-reward`: scores each method's progress curves and writes
/// `bench.csv`, `bench_tasks.csv`, the curves and one plot per method.
pub fn cmd_bench_reward(
    cfg: &RunConfig,
    source: &BenchSource,
    methods: &[BenchMethod],
    embeddings: Option<&Path>,
    jsd_bins: usize,
    out: &Path,
) -> Result<Vec<(String, MetricsReport)>> {
    let datasets: Vec<(String, BenchDataset)> = match source {
        BenchSource::Curves(dir) => vec![("dataset".into(), load_curve_dir(dir)?)],
        BenchSource::Synthetic(spec) => {
            if methods.is_empty() {
                return Err(CliError::Config("no bench methods given".into()));
            }
            let set = make_synthetic_dataset(spec).map_err(CliError::from_core_config)?;
            methods
                .iter()
                .map(|&m| {
                    let method = match m {
                        BenchMethod::Latent => CurveMethod::Latent(
                            Encoder::new(cfg.encoder_spec(), spec.grid, spec.grid).map_err(CliError::from_core_config)?,
                        ),
                        BenchMethod::Pixel => CurveMethod::Pixel,
                        BenchMethod::Oracle => CurveMethod::TrueProgress,
                        BenchMethod::Imported => {
                            let p = embeddings.ok_or_else(|| CliError::Config("imported method needs --embeddings".into()))?;
                            CurveMethod::Imported(import_external_embeddings(p).map_err(CliError::from_core_config)?)
                        }
                    };
                    Ok((m.name().to_string(), set.curves(&method)?))
                })
                .collect::<Result<_>>()?
        }
    };
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for (name, ds) in &datasets {
        let curve_dir = out.join("curves").join(name);
        if curve_dir.exists() {
            fs::remove_dir_all(&curve_dir)?;
        }
        write_curve_dir(&curve_dir, ds)?;
        render_curve_plot(&curve_dir, &out.join(format!("curves_{name}.svg")), &format!("Progress curves: {name}"))?;
        rows.push((name.clone(), evaluate_reward_model(ds, jsd_bins)?));
    }
    fs::write(out.join("bench.csv"), bench_table(&rows))?;
    fs::write(out.join("bench_tasks.csv"), bench_task_table(&rows))?;
    let warnings: Vec<String> = rows.iter().flat_map(|(m, r)| r.warnings.iter().map(move |w| format!("{m}: {w}"))).collect();
    fs::write(out.join("warnings.txt"), warnings.join("\n") + if warnings.is_empty() { "" } else { "\n" })?;
    Ok(rows)
}

/// Where `export-embeddings` reads trajectories from.
#[derive(Debug, Clone)]
pub enum EmbeddingSource {
    /// Keys `<task>/<index>` by position in the store.
    Store(PathBuf),
    /// Keys as read by the `imported` bench method.
    Synthetic(SyntheticSpec),
}

/// `export-embeddings`: whole-trajectory and per-window embeddings under
/// the configured encoder. Returns the number of records written.
pub fn cmd_export_embeddings(cfg: &RunConfig, source: &EmbeddingSource, path: &Path) -> Result<usize> {
    let records: Vec<(String, Embedding)> = match source {
        EmbeddingSource::Synthetic(spec) => {
            let set = make_synthetic_dataset(spec).map_err(CliError::from_core_config)?;
            let enc = Encoder::new(cfg.encoder_spec(), spec.grid, spec.grid).map_err(CliError::from_core_config)?;
            set.embedding_records(&enc)?
        }
        EmbeddingSource::Store(p) => {
            let store = TrajectoryStore::open(p)?;
            let h = store.header();
            let enc = Encoder::new(cfg.encoder_spec(), h.grid_h, h.grid_w).map_err(CliError::from_core_config)?;
            let mut out = Vec::new();
            for (i, t) in store.load()?.iter().enumerate() {
                let key = format!("{}/{i}", t.task_id);
                let frames = t.frames();
                out.push((key.clone(), enc.encode(&frames)?));
                for (w, e) in enc.cumulative_window_embeddings(&frames)?.into_iter().enumerate() {
                    out.push((window_key(&key, w), e));
                }
            }
            out
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    export_embeddings(path, &records)?;
    Ok(records.len())
}

/// `collect-demos`: a trajectory store of scripted rollouts with exactly
/// `successes` successes and `failures` failures per task of the suite.
pub fn cmd_collect_demos(cfg: &RunConfig, successes: usize, failures: usize, base_seed: u64, path: &Path) -> Result<usize> {
    let suite = cfg.load_suite()?;
    let env = &suite.env;
    let header = StoreHeader {
        grid_h: env.grid_h,
        grid_w: env.grid_w,
        action_count: env.action_count(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut store = TrajectoryStore::create(path, header)?;
    let mut written = 0;
    for (k, task) in suite.tasks.iter().enumerate() {
        for (want, count) in [(true, successes), (false, failures)] {
            let mut got = 0;
            let mut attempt = 0u64;
            while got < count {
                if attempt > 1000 * count as u64 + 1000 {
                    return Err(CliError::Runtime(format!(
                        "scripted policies cannot produce {count} {} on task {}",
                        if want { "successes" } else { "failures" },
                        task.task_id
                    )));
                }
                let behavior = match (want, attempt % 2) {
                    (true, _) => ScriptedBehavior::Optimal,
                    (false, 0) => ScriptedBehavior::Distracted,
                    (false, _) => ScriptedBehavior::Stalling,
                };
                let s = seed::derive(base_seed, &[0x4445_4d4f, k as u64, u64::from(want), attempt]);
                attempt += 1;
                let t = scripted_rollout(task, env, behavior, s)?;
                if t.outcome == want {
                    store.append(&t)?;
                    got += 1;
                    written += 1;
                }
            }
        }
    }
    Ok(written)
}

/// `report`: regenerates every plot under `dir` from the stored tables.
pub fn cmd_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if dir.join("compare.csv").is_file() {
        written.push(render_comparison_plot(dir)?);
    }
    if dir.join("metrics.csv").is_file() {
        written.push(render_training_plot(dir)?);
    }
    let curves = dir.join("curves");
    if curves.is_dir() {
        let mut methods: Vec<PathBuf> = fs::read_dir(&curves)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
        methods.sort();
        for m in methods {
            let name = m.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            written.push(render_curve_plot(&m, &dir.join(format!("curves_{name}.svg")), &format!("Progress curves: {name}"))?);
        }
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    for d in subdirs {
        if d.join("metrics.csv").is_file() {
            written.push(render_training_plot(&d)?);
        }
    }
    if written.is_empty() {
        return Err(CliError::Runtime(format!("no result tables found under {}", dir.display())));
    }
    Ok(written)
}
