//! dSprites placement task. The agent sees a coarse-grained cell of a 32×32
//! image and must push the sprite into an imaginary row below the image, at
//! the left corner for squares and the right corner for the other shapes.

use rand::{Rng, RngCore};

use super::{noisy_column, EnvOutcome, Environment};
use crate::error::{contract, invalid, Result};
use crate::math::softmax;
use crate::model::{ModelTensors, Preferences};

pub const IMAGE_EXTENT: usize = 32;
/// True-pixel displacement of one action.
pub const STEP_PIXELS: usize = 8;
pub const TIMEOUT_REWARD: f64 = -1.0;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const NUM_ACTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Square,
    Heart,
    Ellipse,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Heart, Shape::Ellipse];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Target x coordinate of the shape.
    pub fn target_x(self) -> usize {
        match self {
            Shape::Square => 0,
            Shape::Heart | Shape::Ellipse => IMAGE_EXTENT - 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DSpritesSpec {
    granularity: usize,
}

impl DSpritesSpec {
    pub fn new(granularity: usize) -> Result<Self> {
        if !matches!(granularity, 4 | 8) {
            return Err(invalid(format!("granularity must be 4 or 8, got {granularity}")));
        }
        Ok(Self { granularity })
    }

    pub fn granularity(&self) -> usize {
        self.granularity
    }

    /// Coarse columns (and image rows).
    pub fn width(&self) -> usize {
        IMAGE_EXTENT / self.granularity
    }

    /// Image rows plus the imaginary row.
    pub fn rows(&self) -> usize {
        self.width() + 1
    }

    pub fn imaginary_row(&self) -> usize {
        self.width()
    }

    pub fn num_states(&self) -> usize {
        Shape::ALL.len() * self.width() * self.rows()
    }

    pub fn index(&self, shape: Shape, col: usize, row: usize) -> Result<usize> {
        if col >= self.width() || row >= self.rows() {
            return Err(invalid(format!("cell ({col}, {row}) outside the coarse grid")));
        }
        Ok(shape.index() * self.width() * self.rows() + col * self.rows() + row)
    }

    /// Inverse of [`DSpritesSpec::index`].
    pub fn decode(&self, index: usize) -> (Shape, usize, usize) {
        let per_shape = self.width() * self.rows();
        let rest = index % per_shape;
        (Shape::ALL[index / per_shape], rest / self.rows(), rest % self.rows())
    }

    /// Observation for a true position; `y = None` is the imaginary row.
    pub fn observe(&self, shape: Shape, x: usize, y: Option<usize>) -> Result<usize> {
        if x >= IMAGE_EXTENT || y.is_some_and(|y| y >= IMAGE_EXTENT) {
            return Err(invalid(format!("position ({x}, {y:?}) outside the image")));
        }
        let row = y.map_or(self.imaginary_row(), |y| y / self.granularity);
        self.index(shape, x / self.granularity, row)
    }

    fn goal_col(&self, shape: Shape) -> usize {
        shape.target_x() / self.granularity
    }

    /// Coarse successor cell. The imaginary row is absorbing.
    pub fn next_cell(&self, col: usize, row: usize, action: usize) -> (usize, usize) {
        let jump = STEP_PIXELS / self.granularity;
        let last = self.width() - 1;
        if row == self.imaginary_row() {
            return (col, row);
        }
        match action {
            UP => (col, row.saturating_sub(jump)),
            DOWN if row == last => (col, self.imaginary_row()),
            DOWN => (col, (row + jump).min(last)),
            LEFT => (col.saturating_sub(jump), row),
            _ => ((col + jump).min(last), row),
        }
    }

    /// Log-preference of each coarse cell before scaling by the precision.
    pub fn preference_values(&self) -> Vec<f64> {
        let w = self.width() as f64;
        (0..self.num_states())
            .map(|i| {
                let (shape, col, row) = self.decode(i);
                let goal = self.goal_col(shape);
                if row == self.imaginary_row() {
                    if col == goal {
                        1.0
                    } else {
                        -3.0 * w
                    }
                } else {
                    -((col.abs_diff(goal) + self.width() - 1 - row) as f64)
                }
            })
            .collect()
    }
}

/// Terminal reward of a sprite entering the imaginary row at `x`.
pub fn terminal_reward(shape: Shape, x: usize) -> f64 {
    1.0 - 2.0 * x.abs_diff(shape.target_x()) as f64 / (IMAGE_EXTENT - 1) as f64
}

/// Fraction of the task solved over runs with the given terminal rewards.
pub fn dsprites_score(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(invalid("no runs to score"));
    }
    let n = rewards.len() as f64;
    Ok((rewards.iter().sum::<f64>() + n) / (2.0 * n))
}

pub fn build(spec: &DSpritesSpec, gamma: f64) -> Result<(ModelTensors, Preferences)> {
    let ns = spec.num_states();
    let next: Vec<Vec<usize>> = (0..NUM_ACTIONS)
        .map(|u| {
            (0..ns)
                .map(|s| {
                    let (shape, col, row) = spec.decode(s);
                    let (c, r) = spec.next_cell(col, row, u);
                    spec.index(shape, c, r).expect("successor inside the grid")
                })
                .collect()
        })
        .collect();
    let tensors = ModelTensors::from_fns(
        ns,
        ns,
        NUM_ACTIONS,
        |o, s| noisy_column(s, o, ns),
        |n, p, u| (next[u][p] == n) as u8 as f64,
        vec![1.0 / ns as f64; ns],
    )?;
    let prefs = Preferences::new(
        softmax(&spec.preference_values(), gamma)?,
        vec![1.0 / ns as f64; ns],
        gamma,
    )?;
    Ok((tensors, prefs))
}

#[derive(Clone, Debug)]
pub struct DSprites {
    spec: DSpritesSpec,
    shape: Shape,
    x: usize,
    /// `None` once the sprite is in the imaginary row.
    y: Option<usize>,
}

impl DSprites {
    pub fn new(spec: DSpritesSpec) -> Self {
        Self {
            spec,
            shape: Shape::Square,
            x: 0,
            y: Some(0),
        }
    }

    pub fn spec(&self) -> &DSpritesSpec {
        &self.spec
    }

    pub fn place(&mut self, shape: Shape, x: usize, y: usize) -> Result<usize> {
        let obs = self.spec.observe(shape, x, Some(y))?;
        self.shape = shape;
        self.x = x;
        self.y = Some(y);
        Ok(obs)
    }

    pub fn position(&self) -> (Shape, usize, Option<usize>) {
        (self.shape, self.x, self.y)
    }
}

impl Environment for DSprites {
    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn num_observations(&self) -> usize {
        self.spec.num_states()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> usize {
        let shape = Shape::ALL[rng.random_range(0..Shape::ALL.len())];
        let x = rng.random_range(0..IMAGE_EXTENT);
        let y = rng.random_range(0..IMAGE_EXTENT);
        self.place(shape, x, y).expect("sampled inside the image")
    }

    fn step(&mut self, action: usize) -> Result<EnvOutcome> {
        if action >= NUM_ACTIONS {
            return Err(invalid(format!("action {action} out of range")));
        }
        let Some(y) = self.y else {
            return Err(contract("the sprite already left the image"));
        };
        let last = IMAGE_EXTENT - 1;
        let mut reward = 0.0;
        match action {
            UP => self.y = Some(y.saturating_sub(STEP_PIXELS)),
            DOWN if y / self.spec.granularity() == self.spec.width() - 1 => {
                self.y = None;
                reward = terminal_reward(self.shape, self.x);
            }
            DOWN => self.y = Some((y + STEP_PIXELS).min(last)),
            LEFT => self.x = self.x.saturating_sub(STEP_PIXELS),
            _ => self.x = (self.x + STEP_PIXELS).min(last),
        }
        let terminal = self.y.is_none();
        Ok(EnvOutcome {
            observation: self.spec.observe(self.shape, self.x, self.y)?,
            reward,
            terminal,
            success: terminal && reward > 0.0,
        })
    }

    fn timeout_reward(&self) -> Option<f64> {
        Some(TIMEOUT_REWARD)
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
