//! Branching-time active inference: an online planner that grows a tree of
//! future states and observations, updates beliefs by variational message
//! passing and picks actions by expected-free-energy guided tree search.
//!
//! The crate also ships the benchmark environments (deep reward, mazes,
//! frozen lakes, tabular dSprites), two baselines (POMCP and an exhaustive
//! active inference planner) and a seeded batch harness.

pub mod aci;
pub mod env;
pub mod error;
pub mod experiment;
pub mod math;
pub mod model;
pub mod planner;
pub mod pomcp;
pub mod vmp;

pub use error::{Error, Result};
pub use math::{
    dims, entropy, kl_divergence, ln_clamped, one_hot, softmax, Categorical, Dim,
    FlooredLogMatrix, NamedTensor,
};
pub use model::{
    integrate_step, validate_model, BeliefChain, Model, ModelTensors, MultiIndex, NodeId,
    PlanTree, Preferences, TreeNode, Violation,
};
pub use vmp::{
    chain_targets, free_energy, run_vmp, update_future_obs, update_future_state,
    update_past_action, update_past_state, Target, VmpSettings,
};
pub use planner::{
    action_probabilities, backpropagate, evaluate, evaluate_classic, evaluate_pcost, expand, plan,
    select_action, select_leaf, uct_score, BtaiAgent, EvaluationType, PlannerConfig,
};
pub use env::{build_task, EnvId, EnvOutcome, Environment, Task, TaskOptions};
pub use pomcp::{PomcpAgent, PomcpConfig, Simulator};
pub use aci::{aci_select_action, enumerate_policies, policy_efe, AciDecision};
