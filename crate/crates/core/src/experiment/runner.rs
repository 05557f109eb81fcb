//! Seeded trials and batches.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{AgentKind, ExperimentConfig};
use super::report::{aggregate, Summary};
use crate::aci::aci_select_action;
use crate::env::{build_task, load_layout, EnvOutcome, Lake, Task};
use crate::error::{contract, Result};
use crate::model::Model;
use crate::planner::BtaiAgent;
use crate::pomcp::PomcpAgent;

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub success: bool,
    /// Reward of the terminal step, or the timeout reward when the budget ran out.
    pub terminal_reward: Option<f64>,
    pub steps: usize,
    pub wall_seconds: f64,
    pub actions: Vec<usize>,
    /// Set when the trial was aborted.
    pub error: Option<String>,
}

/// Everything a batch shares between its trials.
pub struct Prepared {
    pub task: Task,
    /// The lake doubles as the POMCP simulator.
    pub lake: Option<Lake>,
}

pub fn prepare(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> Result<Prepared> {
    cfg.validate()?;
    let task = build_task(cfg.env, &cfg.task_options(), data_dir)?;
    let lake = match cfg.agent {
        AgentKind::Pomcp => Some(Lake::new(load_layout(cfg.env, data_dir)?)?),
        _ => None,
    };
    Ok(Prepared { task, lake })
}

struct Progress {
    steps: usize,
    actions: Vec<usize>,
    last: Option<EnvOutcome>,
}

/// Exact Bayes filter used by the exhaustive baseline.
fn filter(model: &Model, prior: &[f64], obs: usize) -> Vec<f64> {
    let a = &model.tensors().a;
    let mut post: Vec<f64> = prior.iter().enumerate().map(|(s, p)| p * a.get(&[obs, s])).collect();
    let z: f64 = post.iter().sum();
    if z > 0.0 {
        post.iter_mut().for_each(|p| *p /= z);
    }
    post
}

fn drive(cfg: &ExperimentConfig, prepared: &Prepared, sweep_value: usize, seed: u64, progress: &mut Progress) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Task { model, prefs, env } = &prepared.task;
    let mut env = env.clone();
    let first = env.reset(&mut rng);
    let cycles = cfg.nb_action_perception_cycles;
    let record = |out: EnvOutcome, action: usize, progress: &mut Progress| {
        progress.steps += 1;
        progress.actions.push(action);
        progress.last = Some(out);
        out.terminal
    };
    match cfg.agent {
        AgentKind::Btai => {
            let mut agent = BtaiAgent::new(model, prefs, cfg.planner(sweep_value), first)?;
            for t in 0..cycles {
                let action = agent.act(&mut rng)?;
                let out = env.step(action)?;
                if record(out, action, progress) || t + 1 == cycles {
                    break;
                }
                agent.observe(action, out.observation)?;
            }
        }
        AgentKind::Pomcp => {
            let lake = prepared.lake.as_ref().ok_or_else(|| contract("POMCP needs a lake simulator"))?;
            let mut agent = PomcpAgent::new(lake, cfg.pomcp(sweep_value), &mut rng)?;
            for t in 0..cycles {
                let action = agent.act(cycles - t, &mut rng)?;
                let out = env.step(action)?;
                if record(out, action, progress) || t + 1 == cycles {
                    break;
                }
                agent.observe(action, out.observation, &mut rng)?;
            }
        }
        AgentKind::Aci => {
            let mut belief = filter(model, &model.tensors().d, first);
            for t in 0..cycles {
                let action = aci_select_action(model, prefs, &belief, sweep_value, cfg.memory_cap_bytes)?.action;
                let out = env.step(action)?;
                if record(out, action, progress) || t + 1 == cycles {
                    break;
                }
                belief = filter(model, &model.predict_state(&belief, action), out.observation);
            }
        }
    }
    Ok(())
}

/// One seeded trial. Errors abort the trial and are kept in the record.
pub fn run_trial(cfg: &ExperimentConfig, prepared: &Prepared, sweep_value: usize, seed: u64) -> TrialRecord {
    let start = Instant::now();
    let mut progress = Progress {
        steps: 0,
        actions: Vec::new(),
        last: None,
    };
    let outcome = drive(cfg, prepared, sweep_value, seed, &mut progress);
    let wall_seconds = start.elapsed().as_secs_f64();
    let finished = progress.last.filter(|o| o.terminal);
    TrialRecord {
        seed,
        success: outcome.is_ok() && finished.is_some_and(|o| o.success),
        terminal_reward: finished.map(|o| o.reward).or_else(|| prepared.task.env.timeout_reward()),
        steps: progress.steps,
        wall_seconds,
        actions: progress.actions,
        error: outcome.err().map(|e| e.to_string()),
    }
}

/// `NB_SIMULATIONS` trials with seeds `seed + i`, in seed order.
pub fn run_batch(cfg: &ExperimentConfig, prepared: &Prepared, sweep_value: usize) -> Vec<TrialRecord> {
    (0..cfg.nb_simulations as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg, prepared, sweep_value, cfg.seed.wrapping_add(i)))
        .collect()
}

/// One summary row per swept value.
pub fn run_experiment(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> Result<Vec<Summary>> {
    let prepared = prepare(cfg, data_dir)?;
    cfg.sweep()
        .into_iter()
        .map(|v| aggregate(&run_batch(cfg, &prepared, v), cfg, v))
        .collect()
}
