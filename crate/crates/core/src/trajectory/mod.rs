//! Rollout data model shared by every other module.

mod store;

pub use store::{StoreHeader, TrajectoryStore};

use crate::env::Cell;
use crate::{Error, Result};

/// Channel rendered with the agent position.
pub const CHANNEL_AGENT: usize = 0;
/// Channel rendered with object positions (held objects at the agent cell).
pub const CHANNEL_OBJECTS: usize = 1;
/// Channel rendered with the goal marker.
pub const CHANNEL_TARGET: usize = 2;
pub const CHANNELS: usize = 3;

/// Discrete environment summary stored next to the rendered grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSnapshot {
    pub agent: Cell,
    pub held: Option<u32>,
    /// Object positions sorted by id. A held object sits at the agent cell.
    pub objects: Vec<(u32, Cell)>,
    pub target_object: u32,
    pub target_cell: Cell,
}

impl StateSnapshot {
    pub fn object_cell(&self, id: u32) -> Option<Cell> {
        self.objects.iter().find(|(o, _)| *o == id).map(|&(_, c)| c)
    }
}

/// A rendered frame: three `grid_h x grid_w` channels in `[0, 1]` plus the
/// snapshot it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Channel-major `[channel][row][col]`.
    pub grid: Vec<f64>,
    pub snapshot: StateSnapshot,
}

impl Observation {
    /// Renders `snapshot` onto a fresh grid.
    pub fn render(grid_h: usize, grid_w: usize, snapshot: StateSnapshot) -> Self {
        let mut grid = vec![0.0; CHANNELS * grid_h * grid_w];
        let at = |c: usize, (r, col): Cell| c * grid_h * grid_w + r * grid_w + col;
        grid[at(CHANNEL_AGENT, snapshot.agent)] = 1.0;
        for &(_, cell) in &snapshot.objects {
            grid[at(CHANNEL_OBJECTS, cell)] = 1.0;
        }
        grid[at(CHANNEL_TARGET, snapshot.target_cell)] = 1.0;
        Observation {
            grid_h,
            grid_w,
            grid,
            snapshot,
        }
    }

    pub fn pixel_count(&self) -> usize {
        CHANNELS * self.grid_h * self.grid_w
    }

    pub fn value(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.grid[channel * self.grid_h * self.grid_w + row * self.grid_w + col]
    }

    /// Checks value range, grid size and that the grid is the rendering of
    /// the snapshot.
    pub fn validate(&self) -> Result<()> {
        if self.grid.len() != self.pixel_count() {
            return Err(Error::shape(self.pixel_count(), self.grid.len()));
        }
        if let Some(v) = self.grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("grid value {v} outside [0, 1]")));
        }
        let in_bounds = |(r, c): Cell| r < self.grid_h && c < self.grid_w;
        let s = &self.snapshot;
        if !in_bounds(s.agent)
            || !in_bounds(s.target_cell)
            || !s.objects.iter().all(|&(_, c)| in_bounds(c))
        {
            return Err(Error::Contract("snapshot cell out of bounds".into()));
        }
        let rerendered = Observation::render(self.grid_h, self.grid_w, s.clone());
        if rerendered.grid != self.grid {
            return Err(Error::Contract(
                "grid is not the rendering of its snapshot".into(),
            ));
        }
        Ok(())
    }
}

/// One decision: the observation acted on, the action id and the
/// log-probability of that action under the policy that sampled it.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Observation,
    pub action: usize,
    pub old_log_prob: f64,
}

/// A finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task_id: String,
    pub goal_text: String,
    pub steps: Vec<Step>,
    pub terminal: Observation,
    pub outcome: bool,
    pub seed: u64,
}

impl Trajectory {
    /// Number of actions taken.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// All `len() + 1` frames, terminal frame last.
    pub fn frames(&self) -> Vec<&Observation> {
        self.steps
            .iter()
            .map(|s| &s.observation)
            .chain(std::iter::once(&self.terminal))
            .collect()
    }

    /// Owned copy of [`Trajectory::frames`].
    pub fn frames_owned(&self) -> Vec<Observation> {
        self.frames().into_iter().cloned().collect()
    }

    pub fn validate(&self, action_count: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Contract("trajectory has no steps".into()));
        }
        let (h, w) = (self.terminal.grid_h, self.terminal.grid_w);
        for (t, step) in self.steps.iter().enumerate() {
            if step.action >= action_count {
                return Err(Error::Contract(format!(
                    "step {t}: action {} out of range",
                    step.action
                )));
            }
            if !(step.old_log_prob <= 0.0) {
                return Err(Error::Contract(format!(
                    "step {t}: old_log_prob {} is not a log-probability",
                    step.old_log_prob
                )));
            }
            if step.observation.grid_h != h || step.observation.grid_w != w {
                return Err(Error::shape(
                    format!("{h}x{w}"),
                    format!("{}x{}", step.observation.grid_h, step.observation.grid_w),
                ));
            }
            step.observation.validate()?;
        }
        self.terminal.validate()
    }
}

/// `M >= 2` trajectories sampled for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub task_id: String,
    pub trajectories: Vec<Trajectory>,
}

impl RolloutGroup {
    pub fn new(task_id: impl Into<String>, trajectories: Vec<Trajectory>) -> Result<Self> {
        let task_id = task_id.into();
        if trajectories.len() < 2 {
            return Err(Error::Contract(format!(
                "rollout group needs at least 2 trajectories, got {}",
                trajectories.len()
            )));
        }
        if let Some(t) = trajectories.iter().find(|t| t.task_id != task_id) {
            return Err(Error::Contract(format!(
                "trajectory for task {} in group for task {task_id}",
                t.task_id
            )));
        }
        Ok(RolloutGroup {
            task_id,
            trajectories,
        })
    }

    pub fn size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.trajectories.iter().map(|t| t.outcome).collect()
    }
}

/// The successful trajectories of a group, in group order.
pub fn filter_successes(group: &RolloutGroup) -> Vec<&Trajectory> {
    group.trajectories.iter().filter(|t| t.outcome).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn snapshot(agent: Cell) -> StateSnapshot {
        StateSnapshot {
            agent,
            held: None,
            objects: vec![(0, (2, 2))],
            target_object: 0,
            target_cell: (3, 3),
        }
    }

    pub(crate) fn toy_trajectory(task: &str, outcome: bool, len: usize) -> Trajectory {
        let steps = (0..len)
            .map(|t| Step {
                observation: Observation::render(4, 4, snapshot((t % 4, 0))),
                action: t % 6,
                old_log_prob: -0.5 - t as f64 * 0.01,
            })
            .collect();
        Trajectory {
            task_id: task.into(),
            goal_text: "put object 0 on the marker".into(),
            steps,
            terminal: Observation::render(4, 4, snapshot((3, 3))),
            outcome,
            seed: 42,
        }
    }

    fn group(outcomes: &[bool]) -> RolloutGroup {
        let trajs = outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                let mut t = toy_trajectory("t", o, 3);
                t.seed = i as u64;
                t
            })
            .collect();
        RolloutGroup::new("t", trajs).unwrap()
    }

    #[test]
    fn filter_keeps_successes_in_order() {
        let g = group(&[true, false, true, false]);
        let s: Vec<u64> = filter_successes(&g).iter().map(|t| t.seed).collect();
        assert_eq!(s, vec![0, 2]);
    }

    #[test]
    fn filter_empty_and_full() {
        assert!(filter_successes(&group(&[false, false])).is_empty());
        assert_eq!(filter_successes(&group(&[true; 8])).len(), 8);
    }

    #[test]
    fn group_requires_two_members_of_one_task() {
        assert!(RolloutGroup::new("t", vec![toy_trajectory("t", true, 2)]).is_err());
        let mixed = vec![toy_trajectory("t", true, 2), toy_trajectory("u", true, 2)];
        assert!(RolloutGroup::new("t", mixed).is_err());
    }

    #[test]
    fn render_and_validate() {
        let obs = Observation::render(4, 4, snapshot((0, 0)));
        assert_eq!(obs.value(CHANNEL_AGENT, 0, 0), 1.0);
        assert_eq!(obs.grid[..16].iter().sum::<f64>(), 1.0);
        assert_eq!(obs.value(CHANNEL_TARGET, 3, 3), 1.0);
        obs.validate().unwrap();
        let mut bad = obs.clone();
        bad.grid[5] = 1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trajectory_validation() {
        let t = toy_trajectory("t", true, 5);
        t.validate(6).unwrap();
        let mut bad = t.clone();
        bad.steps[1].old_log_prob = 0.1;
        assert!(bad.validate(6).is_err());
        let mut bad = t;
        bad.steps[0].action = 6;
        assert!(bad.validate(6).is_err());
    }
}
