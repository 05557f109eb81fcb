//! Deep reward task: `n` seemingly good paths of different lengths and `m`
//! obviously bad actions. Only the longest path ends in the goal state.
//!
//! State layout: `0` is the initial state, then the cells of path 0, path 1,
//! ..., then the bad state and the goal state. Observations are
//! `0 = pleasant`, `1 = neutral`, `2 = unpleasant`.

use rand::RngCore;

use super::{noisy_column, EnvOutcome, Environment};
use crate::error::{contract, invalid, Result};
use crate::math::{one_hot, softmax};
use crate::model::{ModelTensors, Preferences};

pub const PLEASANT: usize = 0;
pub const NEUTRAL: usize = 1;
pub const UNPLEASANT: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeepRewardSpec {
    /// `m`, actions that lead straight to the bad state from the start.
    pub bad_actions: usize,
    /// `L_1..L_n`.
    pub lengths: Vec<usize>,
}

impl DeepRewardSpec {
    pub fn new(bad_actions: usize, lengths: Vec<usize>) -> Result<Self> {
        let spec = Self { bad_actions, lengths };
        spec.validate()?;
        Ok(spec)
    }

    pub fn easy() -> Self {
        Self { bad_actions: 5, lengths: vec![2, 3] }
    }

    pub fn medium() -> Self {
        Self { bad_actions: 5, lengths: vec![4, 5] }
    }

    pub fn hard() -> Self {
        Self { bad_actions: 5, lengths: vec![7, 9] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths.contains(&0) {
            return Err(invalid("deep reward paths must be non-empty and have positive length"));
        }
        let max = *self.lengths.iter().max().expect("non-empty");
        if self.lengths.iter().filter(|l| **l == max).count() != 1 {
            return Err(invalid("deep reward needs a unique longest path"));
        }
        Ok(())
    }

    pub fn num_paths(&self) -> usize {
        self.lengths.len()
    }

    pub fn num_actions(&self) -> usize {
        self.lengths.len() + self.bad_actions
    }

    pub fn num_states(&self) -> usize {
        3 + self.lengths.iter().sum::<usize>()
    }

    pub fn longest_path(&self) -> usize {
        crate::math::argmax(&self.lengths.iter().map(|l| *l as f64).collect::<Vec<_>>())
    }

    pub fn initial_state(&self) -> usize {
        0
    }

    pub fn bad_state(&self) -> usize {
        self.num_states() - 2
    }

    pub fn goal_state(&self) -> usize {
        self.num_states() - 1
    }

    /// State index of cell `i` (0-based) of path `k`.
    pub fn path_state(&self, k: usize, i: usize) -> usize {
        1 + self.lengths[..k].iter().sum::<usize>() + i
    }

    /// `(path, cell)` for a path state.
    pub fn locate(&self, state: usize) -> Option<(usize, usize)> {
        let mut offset = 1;
        for (k, l) in self.lengths.iter().enumerate() {
            if state >= offset && state < offset + l {
                return Some((k, state - offset));
            }
            offset += l;
        }
        None
    }

    pub fn next_state(&self, state: usize, action: usize) -> usize {
        let (bad, goal) = (self.bad_state(), self.goal_state());
        if state == bad || state == goal {
            return state;
        }
        if state == self.initial_state() {
            return if action < self.num_paths() {
                self.path_state(action, 0)
            } else {
                bad
            };
        }
        let (k, i) = self.locate(state).expect("path state");
        if i + 1 == self.lengths[k] {
            if k == self.longest_path() {
                goal
            } else {
                bad
            }
        } else if action == 0 {
            state + 1
        } else {
            bad
        }
    }

    /// Most likely observation emitted in `state`.
    pub fn emission(&self, state: usize) -> usize {
        if state == self.goal_state() {
            PLEASANT
        } else if state == self.bad_state() {
            UNPLEASANT
        } else {
            NEUTRAL
        }
    }
}

/// Model tensors and preferences for the task.
pub fn build(spec: &DeepRewardSpec, gamma: f64) -> Result<(ModelTensors, Preferences)> {
    spec.validate()?;
    let ns = spec.num_states();
    let tensors = ModelTensors::from_fns(
        3,
        ns,
        spec.num_actions(),
        |o, s| noisy_column(spec.emission(s), o, 3),
        |n, p, u| (spec.next_state(p, u) == n) as u8 as f64,
        one_hot(spec.initial_state(), ns)?,
    )?;
    let prefs = Preferences::new(softmax(&[2.0, 1.0, 0.0], gamma)?, vec![1.0 / ns as f64; ns], gamma)?;
    Ok((tensors, prefs))
}

#[derive(Clone, Debug)]
pub struct DeepReward {
    spec: DeepRewardSpec,
    state: usize,
}

impl DeepReward {
    pub fn new(spec: DeepRewardSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { state: spec.initial_state(), spec })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn spec(&self) -> &DeepRewardSpec {
        &self.spec
    }
}

impl Environment for DeepReward {
    fn num_actions(&self) -> usize {
        self.spec.num_actions()
    }

    fn num_observations(&self) -> usize {
        3
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> usize {
        self.state = self.spec.initial_state();
        self.spec.emission(self.state)
    }

    fn step(&mut self, action: usize) -> Result<EnvOutcome> {
        if action >= self.num_actions() {
            return Err(invalid(format!("action {action} out of range")));
        }
        if self.state == self.spec.bad_state() || self.state == self.spec.goal_state() {
            return Err(contract("the episode has already ended"));
        }
        self.state = self.spec.next_state(self.state, action);
        let success = self.state == self.spec.goal_state();
        Ok(EnvOutcome {
            observation: self.spec.emission(self.state),
            reward: 0.0,
            terminal: success || self.state == self.spec.bad_state(),
            success,
        })
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
