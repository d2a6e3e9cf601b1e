use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnvConfig, ObjectSpec, TaskSpec};
use crate::{Error, Result};

/// An environment configuration plus the tasks trained on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSuite {
    pub env: EnvConfig,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskSpec>,
}

/// A documented suite file; also the built-in default suite.
pub const SUITE_EXAMPLE: &str = r#"# One sparse-reward pick-and-place task on an 8x8 grid.
[env]
grid_h = 8
grid_w = 8
horizon = 40
slip_prob = 0.0
early_stop = true
seed = 0

[[task]]
task_id = "place-red"
goal_text = "put the red block on the marked cell"
target_object = 0
target_cell = [5, 5]
agent_start = [1, 1]
objects = [
  { id = 0, cell = [2, 3] },
  { id = 1 },
  { id = 2 },
]
"#;

impl TaskSuite {
    pub fn parse(text: &str) -> Result<Self> {
        let suite: TaskSuite =
            toml::from_str(text).map_err(|e| Error::parse("task suite", e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("suite serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::Config("task suite has no tasks".into()));
        }
        for t in &self.tasks {
            t.validate(&self.env)?;
        }
        let mut ids: Vec<&str> = self.tasks.iter().map(|t| t.task_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.tasks.len() {
            return Err(Error::Config("duplicate task ids in suite".into()));
        }
        Ok(())
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    /// Suite of `n` tasks with seeded layouts whose scripted solution takes
    /// at least `min_solution_steps` actions.
    pub fn generated(env: EnvConfig, n: usize, distractors: u32, min_solution_steps: usize, seed: u64) -> Result<Self> {
        use rand::Rng as _;
        let mut rng = crate::seed::stream(seed, &[0x5355_4954]);
        let (h, w) = (env.grid_h, env.grid_w);
        let mut tasks = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while tasks.len() < n {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::Config(format!(
                    "cannot fit layouts needing {min_solution_steps} steps on a {h}x{w} grid"
                )));
            }
            let cell = |rng: &mut crate::seed::Rng| (rng.random_range(0..h), rng.random_range(0..w));
            let agent = cell(&mut rng);
            let object = cell(&mut rng);
            let target = cell(&mut rng);
            if object == target {
                continue;
            }
            let d = |a: (usize, usize), b: (usize, usize)| a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
            if d(agent, object) + d(object, target) + 2 < min_solution_steps {
                continue;
            }
            let k = tasks.len();
            let mut objects = vec![ObjectSpec { id: 0, cell: Some(object) }];
            objects.extend((1..=distractors).map(|id| ObjectSpec { id, cell: None }));
            tasks.push(TaskSpec {
                task_id: format!("task-{k}"),
                goal_text: format!("move object 0 to row {} column {}", target.0, target.1),
                target_object: 0,
                target_cell: target,
                agent_start: Some(agent),
                objects,
            });
        }
        let suite = TaskSuite { env, tasks };
        suite.validate()?;
        Ok(suite)
    }
}

impl Default for TaskSuite {
    fn default() -> Self {
        TaskSuite::parse(SUITE_EXAMPLE).expect("built-in suite parses")
    }
}
