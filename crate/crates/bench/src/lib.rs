//! Fixtures shared by the criterion benches.

use btai_core::aci::DEFAULT_MEMORY_CAP_BYTES;
use btai_core::env::{load_layout, Lake};
use btai_core::{
    aci_select_action, build_task, chain_targets, one_hot, plan, run_vmp, BeliefChain, EnvId, PlanTree,
    PlannerConfig, PomcpAgent, PomcpConfig, Task, TaskOptions, VmpSettings,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn task(id: EnvId) -> Task {
    let opts = TaskOptions {
        gamma: if id.deep_reward_spec().is_some() { 3.0 } else { 2.0 },
        ..Default::default()
    };
    build_task(id, &opts, None).expect("built-in task")
}

/// Chain holding the first observation of a fresh episode.
pub fn start_chain(task: &Task) -> BeliefChain {
    let mut env = task.env.clone();
    let first = env.reset(&mut ChaCha8Rng::seed_from_u64(0));
    BeliefChain::new(&task.model, first).expect("valid observation")
}

/// Plans `iterations` times from scratch and returns the tree size.
pub fn plan_from_scratch(task: &Task, chain: &BeliefChain, iterations: usize) -> usize {
    let mut chain = chain.clone();
    let mut tree = PlanTree::new();
    let cfg = PlannerConfig {
        planning_iterations: iterations,
        ..Default::default()
    };
    plan(&mut chain, &mut tree, &task.model, &task.prefs, &cfg).expect("planning");
    tree.len()
}

/// Full inference pass over the chain.
pub fn infer(task: &Task, chain: &BeliefChain) -> usize {
    let mut chain = chain.clone();
    let mut tree = PlanTree::new();
    let targets = chain_targets(&chain);
    run_vmp(&mut chain, &mut tree, &task.model, &targets, VmpSettings::default()).expect("inference")
}

/// One decision of the exhaustive planner from the deep reward start state.
pub fn exhaustive_decision(task: &Task, horizon: usize) -> usize {
    let d = one_hot(0, task.model.num_states()).expect("start state");
    aci_select_action(&task.model, &task.prefs, &d, horizon, DEFAULT_MEMORY_CAP_BYTES)
        .expect("within budget")
        .action
}

pub fn lake(id: EnvId) -> Lake {
    Lake::new(load_layout(id, None).expect("built-in layout")).expect("valid lake")
}

/// One POMCP decision from the initial belief.
pub fn pomcp_decision(lake: &Lake, timeout: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PomcpConfig {
        timeout,
        ..Default::default()
    };
    let mut agent = PomcpAgent::new(lake, cfg, &mut rng).expect("valid config");
    agent.act(30, &mut rng).expect("search")
}
