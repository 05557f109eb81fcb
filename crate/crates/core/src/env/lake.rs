//! Frozen lake: the agent observes its cell, is penalized on holes and
//! rewarded more the closer it gets to the frisbee.

use rand::RngCore;

use super::grid::{manhattan, Cell, GridSpec, Move, Pos};
use super::{noisy_column, EnvOutcome, Environment};
use crate::error::{contract, invalid, Result};
use crate::math::{one_hot, softmax};
use crate::model::{ModelTensors, Preferences};

pub const LAKE_A: &str = include_str!("../../data/lake_a.txt");
pub const LAKE_B: &str = include_str!("../../data/lake_b.txt");

pub const ACTIONS: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

pub const HOLE_PENALTY: f64 = -1.0;

#[derive(Clone, Debug)]
pub struct Lake {
    grid: GridSpec,
    cells: Vec<Pos>,
    lookup: Vec<Option<usize>>,
    rewards: Vec<f64>,
    next: Vec<[usize; 4]>,
    state: usize,
}

impl Lake {
    pub fn new(grid: GridSpec) -> Result<Self> {
        if grid.cell(grid.start) != Some(Cell::Start) || grid.cell(grid.goal) != Some(Cell::Goal) {
            return Err(invalid("lake needs start and frisbee cells"));
        }
        let cells = grid.open_cells();
        let mut lookup = vec![None; grid.width * grid.height];
        for (i, p) in cells.iter().enumerate() {
            lookup[grid.flat(*p)] = Some(i);
        }
        let far = cells
            .iter()
            .filter(|p| grid.cell(**p) != Some(Cell::Hole))
            .map(|p| manhattan(*p, grid.goal))
            .max()
            .unwrap_or(0)
            .max(1) as f64;
        let rewards = cells
            .iter()
            .map(|p| match grid.cell(*p) {
                Some(Cell::Hole) => HOLE_PENALTY,
                _ => 1.0 - manhattan(*p, grid.goal) as f64 / far,
            })
            .collect();
        let next = cells
            .iter()
            .map(|p| ACTIONS.map(|mv| lookup[grid.flat(grid.step(*p, mv))].expect("moves stay on open cells")))
            .collect();
        let state = lookup[grid.flat(grid.start)].expect("start is open");
        Ok(Self {
            grid,
            cells,
            lookup,
            rewards,
            next,
            state,
        })
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

    pub fn start_state(&self) -> usize {
        self.lookup[self.grid.flat(self.grid.start)].expect("start is open")
    }

    pub fn goal_state(&self) -> usize {
        self.lookup[self.grid.flat(self.grid.goal)].expect("goal is open")
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Reward collected on entering `state`.
    pub fn reward(&self, state: usize) -> f64 {
        self.rewards[state]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn is_hole(&self, state: usize) -> bool {
        self.grid.cell(self.cells[state]) == Some(Cell::Hole)
    }

    pub fn next_state(&self, state: usize, action: usize) -> usize {
        self.next[state][action]
    }

    pub fn build(&self, gamma: f64) -> Result<(ModelTensors, Preferences)> {
        let ns = self.num_states();
        let tensors = ModelTensors::from_fns(
            ns,
            ns,
            ACTIONS.len(),
            |o, s| noisy_column(s, o, ns),
            |n, p, u| (self.next[p][u] == n) as u8 as f64,
            one_hot(self.start_state(), ns)?,
        )?;
        let prefs = Preferences::new(softmax(&self.rewards, gamma)?, vec![1.0 / ns as f64; ns], gamma)?;
        Ok((tensors, prefs))
    }
}

impl Environment for Lake {
    fn num_actions(&self) -> usize {
        ACTIONS.len()
    }

    fn num_observations(&self) -> usize {
        self.cells.len()
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> usize {
        self.state = self.start_state();
        self.state
    }

    fn step(&mut self, action: usize) -> Result<EnvOutcome> {
        if action >= ACTIONS.len() {
            return Err(invalid(format!("action {action} out of range")));
        }
        if self.state == self.goal_state() {
            return Err(contract("the frisbee was already reached"));
        }
        self.state = self.next[self.state][action];
        let success = self.state == self.goal_state();
        Ok(EnvOutcome {
            observation: self.state,
            reward: self.rewards[self.state],
            terminal: success,
            success,
        })
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
