//! `KEY = value` experiment files and the built-in presets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::aci::DEFAULT_MEMORY_CAP_BYTES;
use crate::env::{EnvId, TaskOptions};
use crate::error::{invalid, Error, Result};
use crate::planner::{EvaluationType, PlannerConfig};
use crate::pomcp::PomcpConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Btai,
    Pomcp,
    Aci,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Btai => "btai",
            AgentKind::Pomcp => "pomcp",
            AgentKind::Aci => "aci",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "btai" => Ok(AgentKind::Btai),
            "pomcp" => Ok(AgentKind::Pomcp),
            "aci" => Ok(AgentKind::Aci),
            other => Err(invalid(format!("unknown agent `{other}` (expected btai, pomcp or aci)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub agent: AgentKind,
    pub nb_simulations: usize,
    pub nb_action_perception_cycles: usize,
    /// One batch per entry.
    pub nb_planning_steps: Vec<usize>,
    pub exploration_constant: f64,
    /// `γ` of the prior preferences.
    pub precision_prior_preferences: f64,
    /// `ω` of the action softmax.
    pub precision_action_selection: f64,
    pub evaluation_type: EvaluationType,
    pub seed: u64,
    /// POMCP simulations per decision, one batch per entry.
    pub timeout: Vec<usize>,
    pub exp_const: f64,
    /// POMCP discount.
    pub gamma: f64,
    pub no_particles: usize,
    pub horizon: usize,
    pub memory_cap_bytes: u128,
    pub granularity: usize,
    pub use_state_prefs: bool,
}

impl ExperimentConfig {
    /// Defaults shared by every preset.
    pub fn base(env: EnvId, agent: AgentKind) -> Self {
        Self {
            env,
            agent,
            nb_simulations: 100,
            nb_action_perception_cycles: 20,
            nb_planning_steps: vec![10],
            exploration_constant: 2.4,
            precision_prior_preferences: 2.0,
            precision_action_selection: 100.0,
            evaluation_type: EvaluationType::Efe,
            seed: 0,
            timeout: vec![1000],
            exp_const: 3.0,
            gamma: 0.9,
            no_particles: 100,
            horizon: 3,
            memory_cap_bytes: DEFAULT_MEMORY_CAP_BYTES,
            granularity: 8,
            use_state_prefs: false,
        }
    }

    /// Values swept by [`crate::experiment::run_experiment`], one batch each.
    pub fn sweep(&self) -> Vec<usize> {
        match self.agent {
            AgentKind::Btai => self.nb_planning_steps.clone(),
            AgentKind::Pomcp => self.timeout.clone(),
            AgentKind::Aci => vec![self.horizon],
        }
    }

    pub fn planner(&self, planning_iterations: usize) -> PlannerConfig {
        PlannerConfig {
            planning_iterations,
            exploration_constant: self.exploration_constant,
            action_precision: self.precision_action_selection,
            evaluation: self.evaluation_type,
            ..PlannerConfig::default()
        }
    }

    pub fn pomcp(&self, timeout: usize) -> PomcpConfig {
        PomcpConfig {
            timeout,
            exp_const: self.exp_const,
            gamma: self.gamma,
            no_particles: self.no_particles,
        }
    }

    pub fn task_options(&self) -> TaskOptions {
        TaskOptions {
            gamma: self.precision_prior_preferences,
            use_state_prefs: self.use_state_prefs,
            granularity: self.granularity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(config_error(key, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("NB_SIMULATIONS", self.nb_simulations)?;
        positive("NB_ACTION_PERCEPTION_CYCLES", self.nb_action_perception_cycles)?;
        positive("NO_PARTICLES", self.no_particles)?;
        positive("HORIZON", self.horizon)?;
        if self.nb_planning_steps.is_empty() || self.nb_planning_steps.contains(&0) {
            return Err(config_error("NB_PLANNING_STEPS", "needs positive values"));
        }
        if self.timeout.is_empty() || self.timeout.contains(&0) {
            return Err(config_error("TIMEOUT", "needs positive values"));
        }
        let finite_non_negative = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(config_error(key, "must be a finite non-negative number"))
            }
        };
        finite_non_negative("EXPLORATION_CONSTANT", self.exploration_constant)?;
        finite_non_negative("PRECISION_PRIOR_PREFERENCES", self.precision_prior_preferences)?;
        finite_non_negative("EXP_CONST", self.exp_const)?;
        if !(self.precision_action_selection.is_finite() && self.precision_action_selection > 0.0) {
            return Err(config_error("PRECISION_ACTION_SELECTION", "must be a finite positive number"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_error("GAMMA", "must lie in [0, 1]"));
        }
        if !matches!(self.granularity, 4 | 8) {
            return Err(config_error("GRANULARITY", "must be 4 or 8"));
        }
        if self.agent == AgentKind::Pomcp && !matches!(self.env, EnvId::LakeA | EnvId::LakeB) {
            return Err(config_error("AGENT", "pomcp runs on the frozen lakes only"));
        }
        Ok(())
    }
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    build: fn() -> ExperimentConfig,
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        (self.build)()
    }
}

fn deep(env: EnvId, iters: &[usize]) -> ExperimentConfig {
    ExperimentConfig {
        precision_prior_preferences: 3.0,
        nb_planning_steps: iters.to_vec(),
        ..ExperimentConfig::base(env, AgentKind::Btai)
    }
}

fn aci(env: EnvId, horizon: usize) -> ExperimentConfig {
    ExperimentConfig {
        precision_prior_preferences: 3.0,
        horizon,
        ..ExperimentConfig::base(env, AgentKind::Aci)
    }
}

fn maze(env: EnvId, evaluation_type: EvaluationType, use_state_prefs: bool, iters: &[usize]) -> ExperimentConfig {
    ExperimentConfig {
        evaluation_type,
        use_state_prefs,
        nb_planning_steps: iters.to_vec(),
        ..ExperimentConfig::base(env, AgentKind::Btai)
    }
}

fn lake(env: EnvId) -> ExperimentConfig {
    ExperimentConfig {
        nb_action_perception_cycles: 30,
        nb_planning_steps: vec![10, 15, 20, 30, 40, 50],
        ..ExperimentConfig::base(env, AgentKind::Btai)
    }
}

fn lake_pomcp(env: EnvId) -> ExperimentConfig {
    ExperimentConfig {
        nb_action_perception_cycles: 30,
        timeout: vec![100, 500, 1000, 2000],
        ..ExperimentConfig::base(env, AgentKind::Pomcp)
    }
}

fn dsprites(granularity: usize) -> ExperimentConfig {
    ExperimentConfig {
        nb_action_perception_cycles: 30,
        nb_planning_steps: vec![10, 25, 50],
        granularity,
        ..ExperimentConfig::base(EnvId::DSprites, AgentKind::Btai)
    }
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "deep_reward", description: "BTAI on the hard deep reward instance, 10/15/20 iterations", build: || deep(EnvId::DeepHard, &[10, 15, 20]) },
    Preset { name: "deep_easy", description: "BTAI on the easy deep reward instance", build: || deep(EnvId::DeepEasy, &[10]) },
    Preset { name: "deep_medium", description: "BTAI on the medium deep reward instance", build: || deep(EnvId::DeepMedium, &[10]) },
    Preset { name: "aci_easy", description: "exhaustive planner, easy deep reward, horizon 3", build: || aci(EnvId::DeepEasy, 3) },
    Preset { name: "aci_medium", description: "exhaustive planner, medium deep reward, horizon 5", build: || aci(EnvId::DeepMedium, 5) },
    Preset { name: "aci_hard", description: "exhaustive planner, hard deep reward, horizon 8", build: || aci(EnvId::DeepHard, 8) },
    Preset { name: "maze_a_efe", description: "maze A, EFE", build: || maze(EnvId::MazeA, EvaluationType::Efe, false, &[10]) },
    Preset { name: "maze_a_double_kl", description: "maze A, DOUBLE_KL", build: || maze(EnvId::MazeA, EvaluationType::DoubleKl, false, &[10]) },
    Preset { name: "maze_b_efe", description: "maze B, EFE, 10/15/20 iterations", build: || maze(EnvId::MazeB, EvaluationType::Efe, false, &[10, 15, 20]) },
    Preset { name: "maze_b_state_prefs", description: "maze B, DOUBLE_KL with state preferences, 10/15/20 iterations", build: || maze(EnvId::MazeB, EvaluationType::DoubleKl, true, &[10, 15, 20]) },
    Preset { name: "maze_c_efe", description: "maze C, EFE", build: || maze(EnvId::MazeC, EvaluationType::Efe, false, &[10]) },
    Preset { name: "maze_c_double_kl", description: "maze C, DOUBLE_KL", build: || maze(EnvId::MazeC, EvaluationType::DoubleKl, false, &[10]) },
    Preset { name: "lake_a", description: "BTAI on lake (a), 10 to 50 iterations", build: || lake(EnvId::LakeA) },
    Preset { name: "lake_b", description: "BTAI on lake (b), 10 to 50 iterations", build: || lake(EnvId::LakeB) },
    Preset { name: "lake_a_pomcp", description: "POMCP on lake (a), 100 to 2000 simulations", build: || lake_pomcp(EnvId::LakeA) },
    Preset { name: "lake_b_pomcp", description: "POMCP on lake (b), 100 to 2000 simulations", build: || lake_pomcp(EnvId::LakeB) },
    Preset { name: "dsprites_g8", description: "dSprites, granularity 8, 10/25/50 iterations", build: || dsprites(8) },
    Preset { name: "dsprites_g4", description: "dSprites, granularity 4, 10/25/50 iterations", build: || dsprites(4) },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name.trim()))
}

/// First preset for an environment and agent, or the plain defaults.
pub fn default_config(env: EnvId, agent: AgentKind) -> ExperimentConfig {
    PRESETS
        .iter()
        .map(Preset::config)
        .find(|c| c.env == env && c.agent == agent)
        .unwrap_or_else(|| ExperimentConfig::base(env, agent))
}

const KEYS: &[&str] = &[
    "PRESET",
    "ENV",
    "AGENT",
    "NB_SIMULATIONS",
    "NB_ACTION_PERCEPTION_CYCLES",
    "NB_PLANNING_STEPS",
    "EXPLORATION_CONSTANT",
    "PRECISION_PRIOR_PREFERENCES",
    "PRECISION_ACTION_SELECTION",
    "EVALUATION_TYPE",
    "SEED",
    "TIMEOUT",
    "EXP_CONST",
    "GAMMA",
    "NO_PARTICLES",
    "HORIZON",
    "MEMORY_CAP_BYTES",
    "GRANULARITY",
    "USE_STATE_PREFS",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| config_error(key, format!("cannot parse `{raw}`")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_error(key, format!("expected a boolean, got `{raw}`"))),
    }
}

/// Parses a config file body. `ENV` or `PRESET` is required; everything else
/// defaults to the matching preset.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(Error::Parse {
                line: n + 1,
                column: 1,
                message: "expected `KEY = value`".into(),
            });
        };
        let key = key.trim().to_ascii_uppercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(config_error(&key, "unknown key"));
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(config_error(&key, "given twice"));
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(config_error(&key, "missing value"));
        }
        entries.push((key, value.to_string()));
    }
    let get = |k: &str| entries.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());

    let agent = get("AGENT").map(|v| v.parse::<AgentKind>().map_err(|e| config_error("AGENT", e.to_string()))).transpose()?;
    let env = get("ENV").map(|v| v.parse::<EnvId>().map_err(|e| config_error("ENV", e.to_string()))).transpose()?;
    let mut cfg = match (get("PRESET"), env) {
        (Some(name), _) => preset(name)
            .ok_or_else(|| config_error("PRESET", format!("unknown preset `{name}`")))?
            .config(),
        (None, Some(env)) => default_config(env, agent.unwrap_or(AgentKind::Btai)),
        (None, None) => return Err(config_error("ENV", "missing required key (or give PRESET)")),
    };
    if let Some(env) = env {
        cfg.env = env;
    }
    if let Some(agent) = agent {
        cfg.agent = agent;
    }
    for (key, raw) in &entries {
        let key = key.as_str();
        match key {
            "PRESET" | "ENV" | "AGENT" => {}
            "NB_SIMULATIONS" => cfg.nb_simulations = parse_value(key, raw)?,
            "NB_ACTION_PERCEPTION_CYCLES" => cfg.nb_action_perception_cycles = parse_value(key, raw)?,
            "NB_PLANNING_STEPS" => cfg.nb_planning_steps = parse_list(key, raw)?,
            "EXPLORATION_CONSTANT" => cfg.exploration_constant = parse_value(key, raw)?,
            "PRECISION_PRIOR_PREFERENCES" => cfg.precision_prior_preferences = parse_value(key, raw)?,
            "PRECISION_ACTION_SELECTION" => cfg.precision_action_selection = parse_value(key, raw)?,
            "EVALUATION_TYPE" => {
                cfg.evaluation_type = raw.parse().map_err(|e: Error| config_error(key, e.to_string()))?
            }
            "SEED" => cfg.seed = parse_value(key, raw)?,
            "TIMEOUT" => cfg.timeout = parse_list(key, raw)?,
            "EXP_CONST" => cfg.exp_const = parse_value(key, raw)?,
            "GAMMA" => cfg.gamma = parse_value(key, raw)?,
            "NO_PARTICLES" => cfg.no_particles = parse_value(key, raw)?,
            "HORIZON" => cfg.horizon = parse_value(key, raw)?,
            "MEMORY_CAP_BYTES" => cfg.memory_cap_bytes = parse_value(key, raw)?,
            "GRANULARITY" => cfg.granularity = parse_value(key, raw)?,
            "USE_STATE_PREFS" => cfg.use_state_prefs = parse_bool(key, raw)?,
            _ => unreachable!("keys are checked above"),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
