//! Curve files and the synthetic benchmark dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BenchDataset, TaskCurves};
use crate::encoder::{window_ends, window_key, Embedding, Encoder};
use crate::env::{progress_of, scripted_rollout, EnvConfig, ScriptedBehavior, TaskSuite};
use crate::reward::{
    build_reference, pixel_progress_curve, progress_curve_from_embeddings, CenterMode, ClusterConfig,
    CurveTarget, ReferenceSource,
};
use crate::seed;
use crate::trajectory::Trajectory;
use crate::{Error, Result};

const CURVE_MAGIC: &str = "srpo-curve";
const CURVE_VERSION: &str = "v1";

fn check_task_id(task_id: &str) -> Result<()> {
    if task_id.is_empty() || task_id.contains(|c: char| c.is_whitespace() || c == '/' || c == '\\') {
        return Err(Error::Contract(format!("task id {task_id:?} cannot be written to a curve file")));
    }
    Ok(())
}

pub fn write_curve_file(path: impl AsRef<Path>, task_id: &str, success: bool, values: &[f64]) -> Result<()> {
    check_task_id(task_id)?;
    let path = path.as_ref();
    let mut s = format!("{CURVE_MAGIC} {CURVE_VERSION} {task_id} {}\n", if success { "success" } else { "failure" });
    for v in values {
        writeln!(s, "{v}").expect("writing to a String");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Returns `(task_id, success, values)`.
pub fn read_curve_file(path: impl AsRef<Path>) -> Result<(String, bool, Vec<f64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = || path.display().to_string();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let (task, outcome) = match header.as_slice() {
        [CURVE_MAGIC, CURVE_VERSION, task, outcome] => (task.to_string(), *outcome),
        _ => return Err(Error::parse(ctx(), "expected header `srpo-curve v1 <task> <outcome>`")),
    };
    let success = match outcome {
        "success" | "1" => true,
        "failure" | "0" => false,
        other => return Err(Error::parse(ctx(), format!("unknown outcome {other:?}"))),
    };
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::parse(ctx(), format!("line {}: not a number: {line:?}", i + 2)))?;
        if !v.is_finite() {
            return Err(Error::parse(ctx(), format!("line {}: non-finite value", i + 2)));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::parse(ctx(), "curve has no values"));
    }
    Ok((task, success, values))
}

/// Writes one `.curve` file per curve into `dir`.
pub fn write_curve_dir(dir: impl AsRef<Path>, ds: &BenchDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in &ds.tasks {
        for (tag, ok, curves) in [("s", true, &t.successes), ("f", false, &t.failures)] {
            for (i, c) in curves.iter().enumerate() {
                write_curve_file(dir.join(format!("{}.{tag}{i:04}.curve", t.task_id)), &t.task_id, ok, c)?;
            }
        }
    }
    Ok(())
}

/// Reads every `*.curve` file in `dir` (in file-name order), grouped by task.
pub fn load_curve_dir(dir: impl AsRef<Path>) -> Result<BenchDataset> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "curve"));
    files.sort();
    if files.is_empty() {
        return Err(Error::Contract(format!("no .curve files in {}", dir.display())));
    }
    let mut tasks: BTreeMap<String, TaskCurves> = BTreeMap::new();
    for f in files {
        let (task, ok, values) = read_curve_file(&f)?;
        let entry = tasks.entry(task.clone()).or_insert_with(|| TaskCurves { task_id: task, ..TaskCurves::default() });
        if ok {
            entry.successes.push(values);
        } else {
            entry.failures.push(values);
        }
    }
    let ds = BenchDataset { tasks: tasks.into_values().collect() };
    ds.validate()?;
    Ok(ds)
}

/// Knobs of the synthetic benchmark dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub tasks: usize,
    pub successes_per_task: usize,
    pub failures_per_task: usize,
    pub grid: usize,
    pub horizon: usize,
    pub min_solution_steps: usize,
    pub distractors: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            tasks: 5,
            successes_per_task: 20,
            failures_per_task: 10,
            grid: 10,
            horizon: 40,
            min_solution_steps: 20,
            distractors: 2,
            seed: 0,
        }
    }
}

/// Scripted rollouts behind a synthetic dataset. Curves for any method are
/// derived from the same trajectories via [`SyntheticSet::curves`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub suite: TaskSuite,
    pub successes: Vec<Vec<Trajectory>>,
    pub failures: Vec<Vec<Trajectory>>,
}

/// How per-frame progress is estimated.
#[derive(Debug, Clone)]
pub enum CurveMethod {
    /// Latent distances under a trajectory encoder.
    Latent(Encoder),
    /// L1 pixel distance to the final frame.
    Pixel,
    /// Latent distances over embeddings read from a file, keyed by
    /// [`trajectory_key`] (whole trajectory) and `window_key` (windows).
    Imported(BTreeMap<String, Embedding>),
    /// Ground-truth task progress at each window end.
    TrueProgress,
}

/// Stable key of the `index`-th success or failure of a task.
pub fn trajectory_key(task_id: &str, success: bool, index: usize) -> String {
    format!("{task_id}/{}{index}", if success { 's' } else { 'f' })
}

const SYNTH_STREAM: u64 = 0x5359_4e54;
const MAX_ATTEMPTS: u64 = 1000;

fn rollout_with_outcome(
    suite: &TaskSuite,
    k: usize,
    behavior: ScriptedBehavior,
    want: bool,
    base: u64,
    index: usize,
) -> Result<Trajectory> {
    for attempt in 0..MAX_ATTEMPTS {
        let s = seed::derive(base, &[SYNTH_STREAM, k as u64, u64::from(want), index as u64, attempt]);
        let t = scripted_rollout(&suite.tasks[k], &suite.env, behavior, s)?;
        if t.outcome == want {
            return Ok(t);
        }
    }
    Err(Error::Contract(format!(
        "scripted {behavior:?} policy never produced outcome {want} on {}",
        suite.tasks[k].task_id
    )))
}

/// Generates `spec.tasks` pick-and-place layouts with exactly the requested
/// numbers of scripted successes (optimal controller) and failures
/// (alternating distracted and stalling controllers). Deterministic in
/// `spec.seed`.
pub fn make_synthetic_dataset(spec: &SyntheticSpec) -> Result<SyntheticSet> {
    if spec.tasks == 0 || spec.successes_per_task == 0 || spec.failures_per_task == 0 {
        return Err(Error::Config("synthetic dataset needs at least one task, success and failure".into()));
    }
    let env = EnvConfig {
        grid_h: spec.grid,
        grid_w: spec.grid,
        horizon: spec.horizon,
        slip_prob: 0.0,
        early_stop: true,
        seed: spec.seed,
    };
    let suite = TaskSuite::generated(env, spec.tasks, spec.distractors, spec.min_solution_steps, spec.seed)?;
    let mut successes = Vec::with_capacity(spec.tasks);
    let mut failures = Vec::with_capacity(spec.tasks);
    for k in 0..spec.tasks {
        successes.push(
            (0..spec.successes_per_task)
                .map(|i| rollout_with_outcome(&suite, k, ScriptedBehavior::Optimal, true, spec.seed, i))
                .collect::<Result<Vec<_>>>()?,
        );
        failures.push(
            (0..spec.failures_per_task)
                .map(|i| {
                    let b = if i % 2 == 0 { ScriptedBehavior::Distracted } else { ScriptedBehavior::Stalling };
                    rollout_with_outcome(&suite, k, b, false, spec.seed, i)
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(SyntheticSet { suite, successes, failures })
}

impl SyntheticSet {
    /// `(key, trajectory)` for every rollout, successes first per task.
    pub fn keyed(&self) -> Vec<(String, &Trajectory)> {
        let mut out = Vec::new();
        for (k, task) in self.suite.tasks.iter().enumerate() {
            for (i, t) in self.successes[k].iter().enumerate() {
                out.push((trajectory_key(&task.task_id, true, i), t));
            }
            for (i, t) in self.failures[k].iter().enumerate() {
                out.push((trajectory_key(&task.task_id, false, i), t));
            }
        }
        out
    }

    /// Whole-trajectory and per-window embeddings of every rollout, in the
    /// key layout [`CurveMethod::Imported`] reads.
    pub fn embedding_records(&self, encoder: &Encoder) -> Result<Vec<(String, Embedding)>> {
        let mut out = Vec::new();
        for (key, t) in self.keyed() {
            let frames = t.frames();
            out.push((key.clone(), encoder.encode(&frames)?));
            for (w, e) in encoder.cumulative_window_embeddings(&frames)?.into_iter().enumerate() {
                out.push((window_key(&key, w), e));
            }
        }
        Ok(out)
    }

    pub fn curves(&self, method: &CurveMethod) -> Result<BenchDataset> {
        let mut tasks = Vec::with_capacity(self.suite.tasks.len());
        for (k, task) in self.suite.tasks.iter().enumerate() {
            let (succ, fail) = (&self.successes[k], &self.failures[k]);
            let id = &task.task_id;
            let curves = match method {
                CurveMethod::Pixel => TaskCurves {
                    task_id: id.clone(),
                    successes: succ.iter().map(|t| Ok(pixel_progress_curve(&t.frames())?.values)).collect::<Result<_>>()?,
                    failures: fail.iter().map(|t| Ok(pixel_progress_curve(&t.frames())?.values)).collect::<Result<_>>()?,
                },
                CurveMethod::TrueProgress => {
                    let truth = |t: &Trajectory| {
                        let frames = t.frames();
                        window_ends(frames.len())
                            .into_iter()
                            .map(|e| progress_of(&frames[e].snapshot, frames[e].grid_h, frames[e].grid_w))
                            .collect::<Vec<f64>>()
                    };
                    TaskCurves {
                        task_id: id.clone(),
                        successes: succ.iter().map(truth).collect(),
                        failures: fail.iter().map(truth).collect(),
                    }
                }
                CurveMethod::Latent(encoder) => {
                    let embed = |t: &Trajectory| -> Result<(Embedding, Vec<Embedding>)> {
                        let frames = t.frames();
                        Ok((encoder.encode(&frames)?, encoder.cumulative_window_embeddings(&frames)?))
                    };
                    latent_curves(id, succ.iter().map(embed).collect::<Result<_>>()?, fail.iter().map(embed).collect::<Result<_>>()?)?
                }
                CurveMethod::Imported(map) => {
                    let lookup = |key: String| {
                        map.get(&key)
                            .cloned()
                            .ok_or_else(|| Error::Contract(format!("imported embeddings lack key {key:?}")))
                    };
                    let embed = |ok: bool, i: usize, t: &Trajectory| -> Result<(Embedding, Vec<Embedding>)> {
                        let key = trajectory_key(id, ok, i);
                        let n = window_ends(t.len() + 1).len();
                        let windows = (0..n).map(|w| lookup(window_key(&key, w))).collect::<Result<_>>()?;
                        Ok((lookup(key)?, windows))
                    };
                    latent_curves(
                        id,
                        succ.iter().enumerate().map(|(i, t)| embed(true, i, t)).collect::<Result<_>>()?,
                        fail.iter().enumerate().map(|(i, t)| embed(false, i, t)).collect::<Result<_>>()?,
                    )?
                }
            };
            tasks.push(curves);
        }
        Ok(BenchDataset { tasks })
    }
}

/// Success curves track distance to the trajectory's own embedding; failure
/// curves track distance to the task's success cluster centers.
fn latent_curves(
    task_id: &str,
    successes: Vec<(Embedding, Vec<Embedding>)>,
    failures: Vec<(Embedding, Vec<Embedding>)>,
) -> Result<TaskCurves> {
    let reference = build_reference(
        successes.iter().map(|(whole, _)| whole.clone()).collect(),
        &ClusterConfig::default(),
        CenterMode::Centroid,
        ReferenceSource::InBatch,
    );
    let succ = successes
        .iter()
        .map(|(whole, w)| Ok(progress_curve_from_embeddings(w, CurveTarget::Whole(whole))?.values))
        .collect::<Result<_>>()?;
    let fail = failures
        .iter()
        .map(|(_, w)| Ok(progress_curve_from_embeddings(w, CurveTarget::Reference(&reference))?.values))
        .collect::<Result<_>>()?;
    Ok(TaskCurves {
        task_id: task_id.to_string(),
        successes: succ,
        failures: fail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            tasks: 2,
            successes_per_task: 7,
            failures_per_task: 3,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn exact_counts_and_determinism() {
        let a = make_synthetic_dataset(&small()).unwrap();
        assert_eq!(a, make_synthetic_dataset(&small()).unwrap());
        for k in 0..2 {
            assert_eq!(a.successes[k].len(), 7);
            assert_eq!(a.failures[k].len(), 3);
            assert!(a.successes[k].iter().all(|t| t.outcome));
            assert!(a.failures[k].iter().all(|t| !t.outcome));
        }
    }

    #[test]
    fn true_progress_is_perfect_on_successes() {
        let a = make_synthetic_dataset(&small()).unwrap();
        let ds = a.curves(&CurveMethod::TrueProgress).unwrap();
        let r = super::super::evaluate_reward_model(&ds, 20).unwrap();
        assert_eq!(r.mean.sc, Some(1.0));
        assert_eq!(r.mean.mono, Some(1.0));
    }

    #[test]
    fn imported_matches_direct_latent() {
        let a = make_synthetic_dataset(&small()).unwrap();
        let enc = Encoder::new(crate::encoder::EncoderSpec::default(), 10, 10).unwrap();
        let map: BTreeMap<_, _> = a.embedding_records(&enc).unwrap().into_iter().collect();
        assert_eq!(a.curves(&CurveMethod::Imported(map)).unwrap(), a.curves(&CurveMethod::Latent(enc)).unwrap());
    }

    #[test]
    fn curve_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = make_synthetic_dataset(&small()).unwrap();
        let ds = a.curves(&CurveMethod::Pixel).unwrap();
        write_curve_dir(dir.path(), &ds).unwrap();
        assert_eq!(load_curve_dir(dir.path()).unwrap(), ds);
    }

    #[test]
    fn malformed_curve_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.curve");
        fs::write(&p, "srpo-curve v2 t success\n0.1\n").unwrap();
        assert!(read_curve_file(&p).is_err());
        fs::write(&p, "srpo-curve v1 t maybe\n0.1\n").unwrap();
        assert!(read_curve_file(&p).is_err());
        fs::write(&p, "srpo-curve v1 t failure\nabc\n").unwrap();
        assert!(read_curve_file(&p).is_err());
        fs::write(&p, "srpo-curve v1 t failure\n0.25\n1\n").unwrap();
        assert_eq!(read_curve_file(&p).unwrap(), ("t".into(), false, vec![0.25, 1.0]));
    }
}
