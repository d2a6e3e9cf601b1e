//! Hand-written behaviours used to synthesize demonstrations and failures.

use rand::seq::IndexedRandom;
use rand::Rng as _;

use super::{is_success, observe, Action, Cell, EnvConfig, Episode, TaskSpec};
use crate::seed::{self, Rng};
use crate::trajectory::{Step, Trajectory};
use crate::Result;

/// Which scripted controller drives the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedBehavior {
    /// Shortest path to the object, grasp, shortest path to the target,
    /// release, then idle.
    Optimal,
    /// Starts optimally, then abandons the target object and heads for a
    /// distractor, which it carries away and keeps wandering with.
    Distracted,
    /// Starts optimally, then stops making progress and paces back and
    /// forth, drifting away from the goal.
    Stalling,
}

const SCRIPT_STREAM: u64 = 0x5343_5249_5054;

fn toward(from: Cell, to: Cell) -> Action {
    if from.0 > to.0 {
        Action::Up
    } else if from.0 < to.0 {
        Action::Down
    } else if from.1 > to.1 {
        Action::Left
    } else if from.1 < to.1 {
        Action::Right
    } else {
        Action::Release
    }
}

fn away(from: Cell, goal: Cell, h: usize, w: usize) -> Action {
    let candidates = [
        (Action::Up, from.0 > 0 && from.0 <= goal.0),
        (Action::Down, from.0 + 1 < h && from.0 >= goal.0),
        (Action::Left, from.1 > 0 && from.1 <= goal.1),
        (Action::Right, from.1 + 1 < w && from.1 >= goal.1),
    ];
    candidates
        .iter()
        .find(|(_, ok)| *ok)
        .map_or(Action::Release, |(a, _)| *a)
}

fn optimal_action(ep: &Episode, task: &TaskSpec) -> Action {
    let s = &ep.state;
    if is_success(s, task) {
        return Action::Release;
    }
    let obj = s.object_cells[&task.target_object];
    match s.held {
        Some(id) if id == task.target_object => {
            if s.agent_cell == task.target_cell {
                Action::Release
            } else {
                toward(s.agent_cell, task.target_cell)
            }
        }
        Some(_) => Action::Release,
        None if s.agent_cell == obj => Action::Grasp,
        None => toward(s.agent_cell, obj),
    }
}

/// Runs a scripted controller for one episode. Decisions are deterministic
/// given the seed, so every recorded log-probability is 0.
pub fn scripted_rollout(
    task: &TaskSpec,
    cfg: &EnvConfig,
    behavior: ScriptedBehavior,
    seed: u64,
) -> Result<Trajectory> {
    let mut ep = Episode::start(task, cfg, seed)?;
    let mut rng: Rng = seed::stream(cfg.seed, &[SCRIPT_STREAM, seed]);
    let obj0 = ep.state.object_cells[&task.target_object];
    let plan = ep.state.agent_cell.0.abs_diff(obj0.0)
        + ep.state.agent_cell.1.abs_diff(obj0.1)
        + obj0.0.abs_diff(task.target_cell.0)
        + obj0.1.abs_diff(task.target_cell.1)
        + 2;
    let switch_at = ((plan as f64) * rng.random_range(0.3..0.8)).round() as usize;
    let distractors: Vec<u32> = ep
        .state
        .object_cells
        .keys()
        .copied()
        .filter(|&id| id != task.target_object)
        .collect();
    let lure = distractors.choose(&mut rng).copied();
    let mut pace_forward = true;

    let mut steps = Vec::new();
    while !ep.done(task, cfg) {
        let t = ep.state.step_count;
        let s = &ep.state;
        let action = match behavior {
            ScriptedBehavior::Optimal => optimal_action(&ep, task),
            _ if t < switch_at => optimal_action(&ep, task),
            ScriptedBehavior::Distracted => match (s.held, lure) {
                (Some(id), _) if id == task.target_object => {
                    // Drop the target where it is, off the goal.
                    if s.agent_cell == task.target_cell {
                        away(s.agent_cell, task.target_cell, s.grid_h, s.grid_w)
                    } else {
                        Action::Release
                    }
                }
                (Some(_), _) => {
                    if rng.random::<f64>() < 0.7 {
                        away(s.agent_cell, task.target_cell, s.grid_h, s.grid_w)
                    } else {
                        *Action::MOVES.choose(&mut rng).expect("non-empty")
                    }
                }
                (None, Some(id)) => {
                    let c = s.object_cells[&id];
                    if c == s.agent_cell {
                        Action::Grasp
                    } else {
                        toward(s.agent_cell, c)
                    }
                }
                (None, None) => away(s.agent_cell, task.target_cell, s.grid_h, s.grid_w),
            },
            ScriptedBehavior::Stalling => {
                pace_forward = !pace_forward;
                let goal = match s.held {
                    Some(_) => task.target_cell,
                    None => s.object_cells[&task.target_object],
                };
                if pace_forward && rng.random::<f64>() < 0.5 {
                    toward(s.agent_cell, goal)
                } else {
                    away(s.agent_cell, goal, s.grid_h, s.grid_w)
                }
            }
        };
        steps.push(Step {
            observation: observe(&ep.state),
            action: action.index(),
            old_log_prob: 0.0,
        });
        ep.act(action, cfg)?;
    }
    Ok(Trajectory {
        task_id: task.task_id.clone(),
        goal_text: task.goal_text.clone(),
        steps,
        terminal: observe(&ep.state),
        outcome: is_success(&ep.state, task),
        seed,
    })
}
