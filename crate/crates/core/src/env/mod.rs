//! Deterministic grid-world pick-and-place environments.
//!
//! The agent moves on an `H x W` grid, may grasp the object on its cell and
//! release a held object. An episode succeeds when the target object rests,
//! not held, on the target cell at the end of the episode. The only source
//! of transition noise is movement slip.

mod scripted;
mod suite;

pub use scripted::{scripted_rollout, ScriptedBehavior};
pub use suite::{TaskSuite, SUITE_EXAMPLE};

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::{self, Rng};
use crate::trajectory::{Observation, StateSnapshot};
use crate::{Error, Result};

/// `(row, col)`.
pub type Cell = (usize, usize);

pub const ACTION_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Grasp = 4,
    Release = 5,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Grasp,
        Action::Release,
    ];
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(i: usize) -> Result<Action> {
        Action::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Contract(format!("action id {i} out of range")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_move(self) -> bool {
        !matches!(self, Action::Grasp | Action::Release)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub horizon: usize,
    #[serde(default)]
    pub slip_prob: f64,
    /// End the episode as soon as the success predicate holds.
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            grid_h: 8,
            grid_w: 8,
            horizon: 40,
            slip_prob: 0.0,
            early_stop: false,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_h == 0 || self.grid_w == 0 || self.grid_h * self.grid_w < 2 {
            return Err(Error::Config(format!(
                "grid {}x{} too small",
                self.grid_h, self.grid_w
            )));
        }
        if self.horizon < 2 {
            return Err(Error::Config("horizon must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::Config(format!(
                "slip_prob {} outside [0, 1)",
                self.slip_prob
            )));
        }
        Ok(())
    }
}

/// Initial placement of one object; `cell: None` places it at random.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u32,
    #[serde(default)]
    pub cell: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub goal_text: String,
    pub target_object: u32,
    pub target_cell: Cell,
    /// `None` draws the start cell per episode.
    #[serde(default)]
    pub agent_start: Option<Cell>,
    /// Every object in the scene, target included. The others are distractors.
    pub objects: Vec<ObjectSpec>,
}

impl TaskSpec {
    pub fn validate(&self, cfg: &EnvConfig) -> Result<()> {
        let in_bounds = |(r, c): Cell| r < cfg.grid_h && c < cfg.grid_w;
        if !self.objects.iter().any(|o| o.id == self.target_object) {
            return Err(Error::Config(format!(
                "task {}: target object {} not in layout",
                self.task_id, self.target_object
            )));
        }
        if !in_bounds(self.target_cell) {
            return Err(Error::Config(format!(
                "task {}: target cell out of bounds",
                self.task_id
            )));
        }
        if self.agent_start.is_some_and(|c| !in_bounds(c)) {
            return Err(Error::Config(format!(
                "task {}: agent start out of bounds",
                self.task_id
            )));
        }
        if cfg.grid_h * cfg.grid_w < self.objects.len() + 1 {
            return Err(Error::Config(format!(
                "task {}: {} objects do not fit the grid",
                self.task_id,
                self.objects.len()
            )));
        }
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.objects.len() {
            return Err(Error::Config(format!(
                "task {}: duplicate object ids",
                self.task_id
            )));
        }
        let mut fixed: Vec<Cell> = Vec::new();
        for o in &self.objects {
            if let Some(c) = o.cell {
                if !in_bounds(c) {
                    return Err(Error::Config(format!(
                        "task {}: object {} out of bounds",
                        self.task_id, o.id
                    )));
                }
                if c == self.target_cell || fixed.contains(&c) {
                    return Err(Error::Config(format!(
                        "task {}: object {} overlaps a required cell",
                        self.task_id, o.id
                    )));
                }
                fixed.push(c);
            }
        }
        Ok(())
    }
}

/// Full environment state `z_t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub agent_cell: Cell,
    pub held: Option<u32>,
    /// A held object's cell tracks the agent.
    pub object_cells: BTreeMap<u32, Cell>,
    pub step_count: usize,
    pub target_object: u32,
    pub target_cell: Cell,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl EnvState {
    fn free_object_at(&self, cell: Cell) -> Option<u32> {
        self.object_cells
            .iter()
            .find(|(id, c)| **c == cell && self.held != Some(**id))
            .map(|(id, _)| *id)
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            agent: self.agent_cell,
            held: self.held,
            objects: self.object_cells.iter().map(|(&id, &c)| (id, c)).collect(),
            target_object: self.target_object,
            target_cell: self.target_cell,
        }
    }
}

const RESET_STREAM: u64 = 0x5245_5345_54;

/// Initial state for `(task, cfg, seed)`. Only the reset stream is consumed.
pub fn reset(task: &TaskSpec, cfg: &EnvConfig, seed: u64) -> Result<EnvState> {
    cfg.validate()?;
    task.validate(cfg)?;
    let mut rng = seed::stream(cfg.seed, &[RESET_STREAM, seed]);
    let mut object_cells = BTreeMap::new();
    let mut taken: Vec<Cell> = vec![task.target_cell];
    for o in task.objects.iter().filter(|o| o.cell.is_some()) {
        let c = o.cell.expect("filtered");
        object_cells.insert(o.id, c);
        taken.push(c);
    }
    for o in task.objects.iter().filter(|o| o.cell.is_none()) {
        let free: Vec<Cell> = (0..cfg.grid_h)
            .flat_map(|r| (0..cfg.grid_w).map(move |c| (r, c)))
            .filter(|c| !taken.contains(c))
            .collect();
        let c = *free.choose(&mut rng).ok_or_else(|| {
            Error::Config(format!("task {}: no free cell for object {}", task.task_id, o.id))
        })?;
        object_cells.insert(o.id, c);
        taken.push(c);
    }
    let agent_cell = match task.agent_start {
        Some(c) => c,
        None => (rng.random_range(0..cfg.grid_h), rng.random_range(0..cfg.grid_w)),
    };
    Ok(EnvState {
        agent_cell,
        held: None,
        object_cells,
        step_count: 0,
        target_object: task.target_object,
        target_cell: task.target_cell,
        grid_h: cfg.grid_h,
        grid_w: cfg.grid_w,
    })
}

/// Renders `o_t = O(z_t)`.
pub fn observe(state: &EnvState) -> Observation {
    Observation::render(state.grid_h, state.grid_w, state.snapshot())
}

fn shift(cell: Cell, action: Action, h: usize, w: usize) -> Cell {
    let (r, c) = cell;
    match action {
        Action::Up => (r.saturating_sub(1), c),
        Action::Down => ((r + 1).min(h - 1), c),
        Action::Left => (r, c.saturating_sub(1)),
        Action::Right => (r, (c + 1).min(w - 1)),
        Action::Grasp | Action::Release => cell,
    }
}

/// Transition `z_{t+1} ~ E(. | z_t, a_t)`, also returning the action that was
/// actually executed. A slip replaces a movement with one of the other three
/// movements, uniformly; the slip stream is only read for movements when
/// `slip_prob > 0`.
pub fn step_detailed(
    state: &EnvState,
    action: Action,
    cfg: &EnvConfig,
    rng: &mut Rng,
) -> Result<(EnvState, Action)> {
    if state.step_count >= cfg.horizon {
        return Err(Error::Contract(format!(
            "step called at step_count {} with horizon {}",
            state.step_count, cfg.horizon
        )));
    }
    let mut next = state.clone();
    let mut executed = action;
    if action.is_move() && cfg.slip_prob > 0.0 && rng.random::<f64>() < cfg.slip_prob {
        let others: Vec<Action> = Action::MOVES.into_iter().filter(|&m| m != action).collect();
        executed = others[rng.random_range(0..others.len())];
    }
    match executed {
        Action::Grasp => {
            if next.held.is_none() {
                next.held = next.free_object_at(next.agent_cell);
            }
        }
        Action::Release => {
            if next.held.is_some() && next.free_object_at(next.agent_cell).is_none() {
                next.held = None;
            }
        }
        m => {
            next.agent_cell = shift(next.agent_cell, m, next.grid_h, next.grid_w);
            if let Some(id) = next.held {
                next.object_cells.insert(id, next.agent_cell);
            }
        }
    }
    next.step_count += 1;
    Ok((next, executed))
}

pub fn step(state: &EnvState, action: Action, cfg: &EnvConfig, rng: &mut Rng) -> Result<EnvState> {
    step_detailed(state, action, cfg, rng).map(|(s, _)| s)
}

/// Target object resting, not held, on the target cell.
pub fn is_success(state: &EnvState, task: &TaskSpec) -> bool {
    state.object_cells.get(&task.target_object) == Some(&task.target_cell)
        && state.held != Some(task.target_object)
}

fn manhattan(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Subgoal progress score in `[0, 1]`, equal to 1 exactly on success.
///
/// Before the target object is grasped the score is
/// `0.5 * (1 - d(agent, object) / diam)`. While it is held the score is
/// `0.5 + 0.5 * (1 - (d(object, target) + 1) / (diam + 1))`, counting the
/// pending release as one more unit of distance. `diam` is the Manhattan
/// diameter of the grid.
pub fn progress_of(snapshot: &StateSnapshot, grid_h: usize, grid_w: usize) -> f64 {
    let diam = ((grid_h - 1) + (grid_w - 1)).max(1) as f64;
    let Some(obj) = snapshot.object_cell(snapshot.target_object) else {
        return 0.0;
    };
    let held = snapshot.held == Some(snapshot.target_object);
    if !held && obj == snapshot.target_cell {
        return 1.0;
    }
    if held {
        let d = manhattan(obj, snapshot.target_cell) as f64;
        0.5 + 0.5 * (1.0 - (d + 1.0) / (diam + 1.0))
    } else {
        let d = manhattan(snapshot.agent, obj) as f64;
        0.5 * (1.0 - d / diam)
    }
}

pub fn true_progress(state: &EnvState, task: &TaskSpec) -> f64 {
    debug_assert_eq!(state.target_object, task.target_object);
    progress_of(&state.snapshot(), state.grid_h, state.grid_w)
}

/// A running episode: state plus its slip stream.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: EnvState,
    slip: Rng,
}

const SLIP_STREAM: u64 = 0x534c_4950;

impl Episode {
    pub fn start(task: &TaskSpec, cfg: &EnvConfig, seed: u64) -> Result<Self> {
        Ok(Episode {
            state: reset(task, cfg, seed)?,
            slip: seed::stream(cfg.seed, &[SLIP_STREAM, seed]),
        })
    }

    pub fn act(&mut self, action: Action, cfg: &EnvConfig) -> Result<()> {
        self.state = step(&self.state, action, cfg, &mut self.slip)?;
        Ok(())
    }

    pub fn done(&self, task: &TaskSpec, cfg: &EnvConfig) -> bool {
        self.state.step_count >= cfg.horizon || (cfg.early_stop && is_success(&self.state, task))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{CHANNEL_AGENT, CHANNEL_OBJECTS};
    use rand::SeedableRng;

    fn cfg() -> EnvConfig {
        EnvConfig::default()
    }

    fn task() -> TaskSpec {
        TaskSpec {
            task_id: "pick".into(),
            goal_text: "put object 0 on the marker".into(),
            target_object: 0,
            target_cell: (7, 7),
            agent_start: Some((1, 1)),
            objects: vec![
                ObjectSpec { id: 0, cell: Some((0, 0)) },
                ObjectSpec { id: 1, cell: None },
                ObjectSpec { id: 2, cell: None },
            ],
        }
    }

    fn rng() -> Rng {
        Rng::seed_from_u64(0)
    }

    #[test]
    fn reset_is_deterministic() {
        let a = reset(&task(), &cfg(), 5).unwrap();
        assert_eq!(a, reset(&task(), &cfg(), 5).unwrap());
        assert_eq!(a.step_count, 0);
        assert_eq!(a.held, None);
    }

    #[test]
    fn reset_seeds_move_distractors() {
        // Enumerate the distractor placements over a few seeds: they must
        // not all coincide, and required cells never move.
        let placements: Vec<_> = (0..8)
            .map(|s| {
                let st = reset(&task(), &cfg(), s).unwrap();
                assert_eq!(st.object_cells[&0], (0, 0));
                assert_eq!(st.agent_cell, (1, 1));
                (st.object_cells[&1], st.object_cells[&2])
            })
            .collect();
        assert!(placements.iter().any(|p| *p != placements[0]));
        for (a, b) in placements {
            assert_ne!(a, b);
            assert_ne!(a, (7, 7));
            assert_ne!(b, (0, 0));
        }
    }

    #[test]
    fn reset_ignores_slip_configuration() {
        let mut slippery = cfg();
        slippery.slip_prob = 0.3;
        assert_eq!(
            reset(&task(), &cfg(), 3).unwrap(),
            reset(&task(), &slippery, 3).unwrap()
        );
    }

    #[test]
    fn infeasible_layouts_rejected() {
        let mut t = task();
        t.objects[1].cell = Some((0, 0));
        assert!(matches!(reset(&t, &cfg(), 0), Err(Error::Config(_))));
        let mut t = task();
        t.objects[1].cell = Some((7, 7));
        assert!(reset(&t, &cfg(), 0).is_err());
        let mut t = task();
        t.target_object = 9;
        assert!(reset(&t, &cfg(), 0).is_err());
    }

    #[test]
    fn observe_renders_channels() {
        let t = TaskSpec {
            objects: vec![ObjectSpec { id: 0, cell: Some((3, 3)) }],
            agent_start: Some((0, 0)),
            ..task()
        };
        let s = reset(&t, &cfg(), 0).unwrap();
        let o = observe(&s);
        let agent: Vec<usize> = (0..64).filter(|&i| o.grid[i] == 1.0).collect();
        assert_eq!(agent, vec![0]);
        assert_eq!(o, observe(&s));
    }

    #[test]
    fn held_object_renders_at_agent() {
        let mut s = reset(&task(), &cfg(), 0).unwrap();
        s.agent_cell = (0, 0);
        let s = step(&s, Action::Grasp, &cfg(), &mut rng()).unwrap();
        assert_eq!(s.held, Some(0));
        let s = step(&s, Action::Right, &cfg(), &mut rng()).unwrap();
        let o = observe(&s);
        assert_eq!(o.value(CHANNEL_OBJECTS, 0, 1), 1.0);
        assert_eq!(o.value(CHANNEL_OBJECTS, 0, 0), 0.0);
        assert_eq!(o.value(CHANNEL_AGENT, 0, 1), 1.0);
    }

    #[test]
    fn movement_and_clamping() {
        let s = reset(&task(), &cfg(), 0).unwrap();
        let up = step(&s, Action::Up, &cfg(), &mut rng()).unwrap();
        assert_eq!(up.agent_cell, (0, 1));
        assert_eq!(up.step_count, 1);
        let again = step(&up, Action::Up, &cfg(), &mut rng()).unwrap();
        assert_eq!(again.agent_cell, (0, 1));
    }

    #[test]
    fn acting_past_horizon_fails() {
        let mut s = reset(&task(), &cfg(), 0).unwrap();
        s.step_count = cfg().horizon;
        assert!(matches!(
            step(&s, Action::Up, &cfg(), &mut rng()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn slip_rate_matches_probability() {
        let mut c = cfg();
        c.slip_prob = 0.5;
        c.horizon = usize::MAX;
        let s = reset(&task(), &c, 0).unwrap();
        let mut r = Rng::seed_from_u64(1234);
        let n = 10_000;
        let commanded = (0..n)
            .filter(|i| {
                let a = Action::MOVES[i % 4];
                step_detailed(&s, a, &c, &mut r).unwrap().1 == a
            })
            .count();
        let frac = commanded as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.03, "{frac}");
    }

    #[test]
    fn release_blocked_by_free_object() {
        let mut s = reset(&task(), &cfg(), 0).unwrap();
        s.agent_cell = (0, 0);
        let mut s = step(&s, Action::Grasp, &cfg(), &mut rng()).unwrap();
        let d = s.object_cells[&1];
        s.agent_cell = d;
        s.object_cells.insert(0, d);
        let after = step(&s, Action::Release, &cfg(), &mut rng()).unwrap();
        assert_eq!(after.held, Some(0));
    }

    #[test]
    fn success_predicate() {
        let t = task();
        let mut s = reset(&t, &cfg(), 0).unwrap();
        s.object_cells.insert(0, (7, 7));
        assert!(is_success(&s, &t));
        s.held = Some(0);
        s.agent_cell = (7, 7);
        assert!(!is_success(&s, &t));
        s.held = None;
        s.object_cells.insert(0, (7, 6));
        assert!(!is_success(&s, &t));
    }

    #[test]
    fn progress_values() {
        let t = TaskSpec {
            objects: vec![ObjectSpec { id: 0, cell: Some((7, 7)) }],
            target_cell: (0, 1),
            agent_start: Some((0, 0)),
            ..task()
        };
        let mut s = reset(&t, &cfg(), 0).unwrap();
        // agent (0,0), object (7,7): maximal distance 14 on the 8x8 grid.
        assert_eq!(true_progress(&s, &t), 0.0);
        // Holding the object next to the target: d = 1, diam = 14.
        s.agent_cell = (0, 2);
        s.held = Some(0);
        s.object_cells.insert(0, (0, 2));
        let expected = 0.5 + 0.5 * (1.0 - 2.0 / 15.0);
        assert!((true_progress(&s, &t) - expected).abs() < 1e-15);
        // Held on the target is still short of 1.
        s.agent_cell = (0, 1);
        s.object_cells.insert(0, (0, 1));
        assert!(true_progress(&s, &t) < 1.0);
        s.held = None;
        assert_eq!(true_progress(&s, &t), 1.0);
        assert!(is_success(&s, &t));
    }
}
