//! Tree search over future nodes: select, expand, infer, evaluate, back up.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{contract, invalid, Error, Result};
use crate::math::{kl_unchecked, softmax};
use crate::model::{integrate_step, BeliefChain, Model, NodeId, PlanTree, Preferences, TreeNode};
use crate::vmp::{chain_targets, run_vmp, Target, VmpSettings};

/// Which cost functional scores a freshly expanded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvaluationType {
    /// Risk over observations plus ambiguity.
    Efe,
    /// Risk over states plus risk over observations.
    DoubleKl,
}

impl FromStr for EvaluationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EFE" => Ok(Self::Efe),
            "DOUBLE_KL" => Ok(Self::DoubleKl),
            other => Err(invalid(format!(
                "unknown evaluation type `{other}` (expected EFE or DOUBLE_KL)"
            ))),
        }
    }
}

impl fmt::Display for EvaluationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Efe => "EFE",
            Self::DoubleKl => "DOUBLE_KL",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    pub planning_iterations: usize,
    /// `C_p` in the UCT criterion.
    pub exploration_constant: f64,
    /// `ω`, the precision of the action-selection softmax.
    pub action_precision: f64,
    pub evaluation: EvaluationType,
    pub vmp: VmpSettings,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            planning_iterations: 10,
            exploration_constant: 2.4,
            action_precision: 100.0,
            evaluation: EvaluationType::Efe,
            vmp: VmpSettings::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.planning_iterations == 0 {
            return Err(invalid("planning_iterations must be at least 1"));
        }
        if !(self.exploration_constant >= 0.0 && self.exploration_constant.is_finite()) {
            return Err(invalid("exploration constant must be finite and >= 0"));
        }
        if !(self.action_precision > 0.0 && self.action_precision.is_finite()) {
            return Err(invalid("action precision must be finite and > 0"));
        }
        if self.vmp.max_sweeps == 0 {
            return Err(invalid("VMP needs at least one sweep"));
        }
        Ok(())
    }
}

/// `−ḡ + C_p √(ln n / n_J)`.
pub fn uct_score(mean_cost: f64, parent_visits: u64, visits: u64, exploration: f64) -> f64 {
    -mean_cost + exploration * ((parent_visits as f64).ln() / visits as f64).sqrt()
}

fn parent_visits(tree: &PlanTree, id: NodeId) -> u64 {
    if id == PlanTree::ROOT {
        1 + tree.expansions() as u64
    } else {
        tree.node(id).visits
    }
}

/// Descends by maximal UCT (lowest action index on ties) until a leaf.
pub fn select_leaf(tree: &PlanTree, exploration: f64) -> NodeId {
    let mut id = PlanTree::ROOT;
    loop {
        let node = tree.node(id);
        if node.is_leaf() {
            return id;
        }
        let n = parent_visits(tree, id);
        let mut best = node.children[0];
        let mut best_score = f64::NEG_INFINITY;
        for c in &node.children {
            let child = tree.node(*c);
            let score = uct_score(child.mean_cost(), n, child.visits, exploration);
            if score > best_score {
                best = *c;
                best_score = score;
            }
        }
        id = best;
    }
}

/// Risk over observations plus expected likelihood entropy.
pub fn evaluate_classic(node: &TreeNode, model: &Model, prefs: &Preferences) -> f64 {
    let risk = kl_unchecked(&node.obs, &prefs.c_o);
    let ambiguity: f64 = node
        .state
        .iter()
        .zip(model.likelihood_entropy())
        .map(|(p, h)| p * h)
        .sum();
    risk + ambiguity
}

/// Risk over states plus risk over observations.
pub fn evaluate_pcost(node: &TreeNode, prefs: &Preferences) -> f64 {
    kl_unchecked(&node.state, &prefs.c_s) + kl_unchecked(&node.obs, &prefs.c_o)
}

pub fn evaluate(node: &TreeNode, model: &Model, prefs: &Preferences, kind: EvaluationType) -> f64 {
    match kind {
        EvaluationType::Efe => evaluate_classic(node, model, prefs),
        EvaluationType::DoubleKl => evaluate_pcost(node, prefs),
    }
}

/// Adds every child of `leaf`, runs VMP on exactly those children and scores
/// each of them.
pub fn expand(
    chain: &mut BeliefChain,
    tree: &mut PlanTree,
    model: &Model,
    prefs: &Preferences,
    leaf: NodeId,
    cfg: &PlannerConfig,
) -> Result<Vec<NodeId>> {
    let children = tree.add_children(leaf, model.num_actions(), model.num_states(), model.num_obs())?;
    let targets: Vec<Target> = children.iter().map(|c| Target::FutureNode(*c)).collect();
    run_vmp(chain, tree, model, &targets, cfg.vmp)?;
    for c in &children {
        let cost = evaluate(tree.node(*c), model, prefs, cfg.evaluation);
        let node = tree.node_mut(*c);
        node.cost = cost;
        node.aggregated_cost = cost;
        node.visits = 1;
    }
    Ok(children)
}

/// Propagates the smallest child cost from `leaf` up to, but not including,
/// the root.
pub fn backpropagate(tree: &mut PlanTree, leaf: NodeId) -> Result<()> {
    let node = tree.node(leaf);
    if node.is_leaf() {
        return Err(contract("backpropagation needs freshly expanded children"));
    }
    let best = node
        .children
        .iter()
        .map(|c| tree.node(*c).cost)
        .fold(f64::INFINITY, f64::min);
    let mut id = leaf;
    while id != PlanTree::ROOT {
        let n = tree.node_mut(id);
        n.aggregated_cost += best;
        n.visits += 1;
        id = n.parent.expect("non-root node has a parent");
    }
    Ok(())
}

/// Runs `cfg.planning_iterations` select/expand/evaluate/backup iterations.
pub fn plan(
    chain: &mut BeliefChain,
    tree: &mut PlanTree,
    model: &Model,
    prefs: &Preferences,
    cfg: &PlannerConfig,
) -> Result<()> {
    cfg.validate()?;
    for _ in 0..cfg.planning_iterations {
        let leaf = select_leaf(tree, cfg.exploration_constant);
        expand(chain, tree, model, prefs, leaf, cfg)?;
        backpropagate(tree, leaf)?;
    }
    Ok(())
}

/// `σ(−ω ḡ_u)` over the root's children.
pub fn action_probabilities(tree: &PlanTree, action_precision: f64) -> Result<Vec<f64>> {
    let root = tree.root();
    if root.is_leaf() {
        return Err(contract("cannot select an action before the root is expanded"));
    }
    let neg: Vec<f64> = root
        .children
        .iter()
        .map(|c| -tree.node(*c).mean_cost())
        .collect();
    softmax(&neg, action_precision)
}

/// Samples an action from [`action_probabilities`].
pub fn select_action<R: Rng + ?Sized>(tree: &PlanTree, action_precision: f64, rng: &mut R) -> Result<usize> {
    let p = action_probabilities(tree, action_precision)?;
    let dist = WeightedIndex::new(&p).map_err(|e| invalid(format!("action distribution: {e}")))?;
    Ok(dist.sample(rng))
}

/// One planning agent: belief chain, planning tree and configuration.
#[derive(Clone, Debug)]
pub struct BtaiAgent<'m> {
    model: &'m Model,
    prefs: &'m Preferences,
    cfg: PlannerConfig,
    chain: BeliefChain,
    tree: PlanTree,
}

impl<'m> BtaiAgent<'m> {
    /// Starts at `t = 0` and infers the first state from `first_observation`.
    pub fn new(model: &'m Model, prefs: &'m Preferences, cfg: PlannerConfig, first_observation: usize) -> Result<Self> {
        cfg.validate()?;
        if prefs.c_o.len() != model.num_obs() || prefs.c_s.len() != model.num_states() {
            return Err(invalid("preference vectors do not match the model"));
        }
        let mut agent = Self {
            model,
            prefs,
            cfg,
            chain: BeliefChain::new(model, first_observation)?,
            tree: PlanTree::new(),
        };
        agent.infer()?;
        Ok(agent)
    }

    fn infer(&mut self) -> Result<usize> {
        let targets = chain_targets(&self.chain);
        run_vmp(&mut self.chain, &mut self.tree, self.model, &targets, self.cfg.vmp)
    }

    /// Plans from the current beliefs and samples an action.
    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        plan(&mut self.chain, &mut self.tree, self.model, self.prefs, &self.cfg)?;
        select_action(&self.tree, self.cfg.action_precision, rng)
    }

    /// Records the executed action and its outcome, then re-infers the chain.
    pub fn observe(&mut self, action: usize, observation: usize) -> Result<()> {
        integrate_step(&mut self.chain, &mut self.tree, self.model, action, observation)?;
        self.infer()?;
        Ok(())
    }

    pub fn chain(&self) -> &BeliefChain {
        &self.chain
    }

    pub fn tree(&self) -> &PlanTree {
        &self.tree
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }
}
