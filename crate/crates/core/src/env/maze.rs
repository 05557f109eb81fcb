//! Grid mazes where the agent only observes its Manhattan distance to the exit.

use rand::RngCore;

use super::grid::{manhattan, Cell, GridSpec, Move, Pos};
use super::{noisy_column, EnvOutcome, Environment};
use crate::error::{contract, invalid, Result};
use crate::math::{one_hot, softmax};
use crate::model::{ModelTensors, Preferences};

pub const MAZE_A: &str = include_str!("../../data/maze_a.txt");
pub const MAZE_B: &str = include_str!("../../data/maze_b.txt");
pub const MAZE_C: &str = include_str!("../../data/maze_c.txt");

pub const ACTIONS: [Move; 5] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Idle];

#[derive(Clone, Debug)]
pub struct Maze {
    grid: GridSpec,
    cells: Vec<Pos>,
    /// Flat grid index to state index.
    lookup: Vec<Option<usize>>,
    pos: Pos,
}

impl Maze {
    pub fn new(grid: GridSpec) -> Result<Self> {
        if grid.cell(grid.start) != Some(Cell::Start) || grid.cell(grid.goal) != Some(Cell::Goal) {
            return Err(invalid("maze needs start and exit cells"));
        }
        let cells = grid.open_cells();
        let mut lookup = vec![None; grid.width * grid.height];
        for (i, p) in cells.iter().enumerate() {
            lookup[grid.flat(*p)] = Some(i);
        }
        Ok(Self { pos: grid.start, grid, cells, lookup })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(GridSpec::parse(text)?)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cells(&self) -> &[Pos] {
        &self.cells
    }

    pub fn num_states(&self) -> usize {
        self.cells.len()
    }

    pub fn state_of(&self, pos: Pos) -> Option<usize> {
        self.grid.cell(pos)?;
        self.lookup[self.grid.flat(pos)]
    }

    pub fn position(&self) -> Pos {
        self.pos
    }

    /// Manhattan distance to the exit, ignoring walls.
    pub fn observe(&self, pos: Pos) -> Result<usize> {
        if !self.grid.is_open(pos) {
            return Err(contract(format!("{pos:?} is not an open maze cell")));
        }
        Ok(manhattan(pos, self.grid.goal))
    }

    pub fn num_observations(&self) -> usize {
        1 + self
            .cells
            .iter()
            .map(|p| manhattan(*p, self.grid.goal))
            .max()
            .unwrap_or(0)
    }

    pub fn step_pos(&self, pos: Pos, action: usize) -> Pos {
        self.grid.step(pos, ACTIONS[action])
    }

    /// Weights `w` of the hidden-state preferences: 3 on the shortest path
    /// beyond the start, 2 at the start, 1 elsewhere.
    pub fn state_preference_weights(&self) -> Vec<f64> {
        let from_exit = self.grid.path_distances(self.grid.goal);
        let from_start = self.grid.path_distances(self.grid.start);
        let total = from_exit[self.grid.flat(self.grid.start)];
        self.cells
            .iter()
            .map(|p| {
                let i = self.grid.flat(*p);
                let on_path = matches!((from_start[i], from_exit[i], total), (Some(a), Some(b), Some(t)) if a + b == t);
                if *p == self.grid.start {
                    2.0
                } else if on_path {
                    3.0
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn build(&self, use_state_prefs: bool, gamma: f64) -> Result<(ModelTensors, Preferences)> {
        let ns = self.num_states();
        let no = self.num_observations();
        let dist: Vec<usize> = self.cells.iter().map(|p| manhattan(*p, self.grid.goal)).collect();
        let next: Vec<Vec<usize>> = (0..ACTIONS.len())
            .map(|u| {
                self.cells
                    .iter()
                    .map(|p| self.lookup[self.grid.flat(self.step_pos(*p, u))].expect("moves stay on open cells"))
                    .collect()
            })
            .collect();
        let start = self.state_of(self.grid.start).expect("start is open");
        let tensors = ModelTensors::from_fns(
            no,
            ns,
            ACTIONS.len(),
            |o, s| noisy_column(dist[s], o, no),
            |n, p, u| (next[u][p] == n) as u8 as f64,
            one_hot(start, ns)?,
        )?;
        let v: Vec<f64> = (0..no).map(|o| (no - o) as f64).collect();
        let c_s = if use_state_prefs {
            softmax(&self.state_preference_weights(), gamma)?
        } else {
            vec![1.0 / ns as f64; ns]
        };
        Ok((tensors, Preferences::new(softmax(&v, gamma)?, c_s, gamma)?))
    }
}

impl Environment for Maze {
    fn num_actions(&self) -> usize {
        ACTIONS.len()
    }

    fn num_observations(&self) -> usize {
        Maze::num_observations(self)
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> usize {
        self.pos = self.grid.start;
        manhattan(self.pos, self.grid.goal)
    }

    fn step(&mut self, action: usize) -> Result<EnvOutcome> {
        if action >= ACTIONS.len() {
            return Err(invalid(format!("action {action} out of range")));
        }
        if self.pos == self.grid.goal {
            return Err(contract("the agent already left the maze"));
        }
        self.pos = self.step_pos(self.pos, action);
        let success = self.pos == self.grid.goal;
        Ok(EnvOutcome {
            observation: manhattan(self.pos, self.grid.goal),
            reward: 0.0,
            terminal: success,
            success,
        })
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
