//! Benchmark tasks. Each task couples a simulator with the generative model
//! and preferences handed to the agent (the agent knows the true dynamics).

pub mod deep_reward;
pub mod dsprites;
pub mod grid;
pub mod lake;
pub mod maze;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{invalid, Error, Result};
use crate::model::{Model, Preferences};

pub use deep_reward::{DeepReward, DeepRewardSpec};
pub use dsprites::{dsprites_score, DSprites, DSpritesSpec, Shape};
pub use grid::{Cell, GridSpec, Move, Pos};
pub use lake::Lake;
pub use maze::Maze;

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvOutcome {
    pub observation: usize,
    /// Task reward (zero for tasks without one).
    pub reward: f64,
    /// The trial ends after this step.
    pub terminal: bool,
    /// Whether the step reached the task's goal.
    pub success: bool,
}

pub trait Environment: Send + Sync {
    fn num_actions(&self) -> usize;

    fn num_observations(&self) -> usize;

    /// Starts a new episode and returns the first observation.
    fn reset(&mut self, rng: &mut dyn RngCore) -> usize;

    fn step(&mut self, action: usize) -> Result<EnvOutcome>;

    /// Reward booked when the cycle budget runs out before a terminal step.
    fn timeout_reward(&self) -> Option<f64> {
        None
    }

    fn clone_box(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Named task instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvId {
    DeepEasy,
    DeepMedium,
    DeepHard,
    MazeA,
    MazeB,
    MazeC,
    LakeA,
    LakeB,
    DSprites,
}

impl EnvId {
    pub const ALL: [EnvId; 9] = [
        EnvId::DeepEasy,
        EnvId::DeepMedium,
        EnvId::DeepHard,
        EnvId::MazeA,
        EnvId::MazeB,
        EnvId::MazeC,
        EnvId::LakeA,
        EnvId::LakeB,
        EnvId::DSprites,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::DeepEasy => "deep_easy",
            EnvId::DeepMedium => "deep_medium",
            EnvId::DeepHard => "deep_hard",
            EnvId::MazeA => "maze_a",
            EnvId::MazeB => "maze_b",
            EnvId::MazeC => "maze_c",
            EnvId::LakeA => "lake_a",
            EnvId::LakeB => "lake_b",
            EnvId::DSprites => "dsprites",
        }
    }

    pub fn deep_reward_spec(self) -> Option<DeepRewardSpec> {
        match self {
            EnvId::DeepEasy => Some(DeepRewardSpec::easy()),
            EnvId::DeepMedium => Some(DeepRewardSpec::medium()),
            EnvId::DeepHard => Some(DeepRewardSpec::hard()),
            _ => None,
        }
    }

    /// Layout file name for grid tasks.
    pub fn layout_file(self) -> Option<&'static str> {
        match self {
            EnvId::MazeA => Some("maze_a.txt"),
            EnvId::MazeB => Some("maze_b.txt"),
            EnvId::MazeC => Some("maze_c.txt"),
            EnvId::LakeA => Some("lake_a.txt"),
            EnvId::LakeB => Some("lake_b.txt"),
            _ => None,
        }
    }

    /// Built-in copy of the layout for grid tasks.
    pub fn builtin_layout(self) -> Option<&'static str> {
        match self {
            EnvId::MazeA => Some(maze::MAZE_A),
            EnvId::MazeB => Some(maze::MAZE_B),
            EnvId::MazeC => Some(maze::MAZE_C),
            EnvId::LakeA => Some(lake::LAKE_A),
            EnvId::LakeB => Some(lake::LAKE_B),
            _ => None,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        EnvId::ALL
            .into_iter()
            .find(|e| e.as_str() == key)
            .ok_or_else(|| invalid(format!("unknown environment `{s}`")))
    }
}

/// Knobs that shape the model handed to the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskOptions {
    /// Precision `γ` of the preferences.
    pub gamma: f64,
    /// Maze only: add preferences over hidden states.
    pub use_state_prefs: bool,
    /// dSprites only: 4 or 8.
    pub granularity: usize,
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            use_state_prefs: false,
            granularity: 8,
        }
    }
}

/// A simulator together with the agent's model of it.
pub struct Task {
    pub model: Model,
    pub prefs: Preferences,
    pub env: Box<dyn Environment>,
}

impl fmt::Debug for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Task")
            .field("num_states", &self.model.num_states())
            .field("num_obs", &self.model.num_obs())
            .field("num_actions", &self.model.num_actions())
            .finish()
    }
}

/// Reads a layout from `data_dir` when given, else uses the built-in copy.
pub fn load_layout(id: EnvId, data_dir: Option<&Path>) -> Result<GridSpec> {
    let text = match (data_dir, id.layout_file()) {
        (Some(dir), Some(file)) => {
            let path = dir.join(file);
            std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?
        }
        _ => id
            .builtin_layout()
            .ok_or_else(|| invalid(format!("{id} has no grid layout")))?
            .to_string(),
    };
    GridSpec::parse(&text)
}

pub fn build_task(id: EnvId, opts: &TaskOptions, data_dir: Option<&Path>) -> Result<Task> {
    if let Some(spec) = id.deep_reward_spec() {
        let (tensors, prefs) = deep_reward::build(&spec, opts.gamma)?;
        return Ok(Task {
            model: Model::new(tensors)?,
            prefs,
            env: Box::new(DeepReward::new(spec)?),
        });
    }
    match id {
        EnvId::MazeA | EnvId::MazeB | EnvId::MazeC => {
            let maze = Maze::new(load_layout(id, data_dir)?)?;
            let (tensors, prefs) = maze.build(opts.use_state_prefs, opts.gamma)?;
            Ok(Task {
                model: Model::new(tensors)?,
                prefs,
                env: Box::new(maze),
            })
        }
        EnvId::LakeA | EnvId::LakeB => {
            let lake = Lake::new(load_layout(id, data_dir)?)?;
            let (tensors, prefs) = lake.build(opts.gamma)?;
            Ok(Task {
                model: Model::new(tensors)?,
                prefs,
                env: Box::new(lake),
            })
        }
        EnvId::DSprites => {
            let spec = DSpritesSpec::new(opts.granularity)?;
            let (tensors, prefs) = dsprites::build(&spec, opts.gamma)?;
            Ok(Task {
                model: Model::new(tensors)?,
                prefs,
                env: Box::new(DSprites::new(spec)),
            })
        }
        _ => unreachable!("deep reward handled above"),
    }
}

/// `0.9` on `mode`, the rest spread evenly over the other `n − 1` outcomes.
pub(crate) fn noisy_column(mode: usize, o: usize, n: usize) -> f64 {
    if n == 1 {
        1.0
    } else if o == mode {
        0.9
    } else {
        0.1 / (n - 1) as f64
    }
}
