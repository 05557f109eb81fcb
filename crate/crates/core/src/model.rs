//! Generative model tensors, the past/present belief chain and the expandable
//! tree of future nodes.

use std::fmt;

use crate::error::{invalid, Result};
use crate::math::{
    check_distribution, dims, entropy, ln_clamped, one_hot, Categorical, FlooredLogMatrix,
    NamedTensor, NORMALIZATION_TOL,
};

/// Categorical model parameters: `A` (obs × state), `B` (next × prev × action),
/// the initial prior `D` and the per-step action prior `Θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelTensors {
    pub a: NamedTensor,
    pub b: NamedTensor,
    pub d: Categorical,
    pub theta: Categorical,
}

impl ModelTensors {
    /// Builds the tensors from element functions `a(o, s)` and `b(next, prev, u)`.
    /// `Θ` is uniform.
    pub fn from_fns(
        num_obs: usize,
        num_states: usize,
        num_actions: usize,
        a: impl Fn(usize, usize) -> f64,
        b: impl Fn(usize, usize, usize) -> f64,
        d: Vec<f64>,
    ) -> Result<Self> {
        if num_obs == 0 || num_states == 0 || num_actions == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        let a = NamedTensor::from_fn(vec![dims::OBS, dims::STATE], vec![num_obs, num_states], |ix| {
            a(ix[0], ix[1])
        })?;
        let b = NamedTensor::from_fn(
            vec![dims::NEXT_STATE, dims::PREV_STATE, dims::ACTION],
            vec![num_states, num_states, num_actions],
            |ix| b(ix[0], ix[1], ix[2]),
        )?;
        if d.len() != num_states {
            return Err(invalid(format!("D has {} entries for {num_states} states", d.len())));
        }
        Ok(Self {
            a,
            b,
            d: Categorical::new(dims::STATE, d)?,
            theta: Categorical::uniform(dims::ACTION, num_actions)?,
        })
    }

    pub fn num_obs(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn num_states(&self) -> usize {
        self.a.shape()[1]
    }

    pub fn num_actions(&self) -> usize {
        self.b.shape()[2]
    }
}

/// One stochasticity violation, located by tensor name and axis coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub tensor: &'static str,
    /// Coordinates of the offending column (`[s]` for A, `[prev, u]` for B,
    /// empty for D and Θ), or of the offending entry for shape problems.
    pub coordinates: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}: {}", self.tensor, self.coordinates, self.message)
    }
}

fn column_violation(tensor: &'static str, coordinates: Vec<usize>, col: &[f64]) -> Option<Violation> {
    if let Some(i) = col.iter().position(|p| !p.is_finite() || *p < 0.0) {
        return Some(Violation {
            tensor,
            coordinates,
            message: format!("entry {i} is {}", col[i]),
        });
    }
    let sum: f64 = col.iter().sum();
    ((sum - 1.0).abs() > NORMALIZATION_TOL).then(|| Violation {
        tensor,
        coordinates,
        message: format!("column sums to {sum}"),
    })
}

/// Lists every column of A and B (and D, Θ) that is not a distribution.
pub fn validate_model(m: &ModelTensors) -> Vec<Violation> {
    let mut out = Vec::new();
    let a_ok = m.a.dims() == [dims::OBS, dims::STATE];
    let b_ok = m.b.dims() == [dims::NEXT_STATE, dims::PREV_STATE, dims::ACTION];
    if !a_ok {
        out.push(Violation {
            tensor: "A",
            coordinates: vec![],
            message: format!("expected dimensions (obs, state), got {:?}", m.a.dims()),
        });
    }
    if !b_ok {
        out.push(Violation {
            tensor: "B",
            coordinates: vec![],
            message: format!("expected dimensions (next_state, prev_state, action), got {:?}", m.b.dims()),
        });
    }
    if a_ok && b_ok && (m.b.shape()[0] != m.a.shape()[1] || m.b.shape()[1] != m.a.shape()[1]) {
        out.push(Violation {
            tensor: "B",
            coordinates: vec![],
            message: format!("shape {:?} does not match {} states", m.b.shape(), m.a.shape()[1]),
        });
    }
    if a_ok {
        let (no, ns) = (m.a.shape()[0], m.a.shape()[1]);
        for s in 0..ns {
            let col: Vec<f64> = (0..no).map(|o| m.a.get(&[o, s])).collect();
            out.extend(column_violation("A", vec![s], &col));
        }
    }
    if b_ok {
        let sh = m.b.shape();
        for u in 0..sh[2] {
            for p in 0..sh[1] {
                let col: Vec<f64> = (0..sh[0]).map(|n| m.b.get(&[n, p, u])).collect();
                out.extend(column_violation("B", vec![p, u], &col));
            }
        }
    }
    if a_ok && m.d.len() != m.a.shape()[1] {
        out.push(Violation {
            tensor: "D",
            coordinates: vec![],
            message: format!("{} entries for {} states", m.d.len(), m.a.shape()[1]),
        });
    }
    out.extend(column_violation("D", vec![], &m.d));
    if b_ok && m.theta.len() != m.b.shape()[2] {
        out.push(Violation {
            tensor: "Theta",
            coordinates: vec![],
            message: format!("{} entries for {} actions", m.theta.len(), m.b.shape()[2]),
        });
    }
    out.extend(column_violation("Theta", vec![], &m.theta));
    out
}

/// Validated model tensors together with cached log-tensors and the
/// per-state likelihood entropies used by every planner.
#[derive(Clone, Debug)]
pub struct Model {
    tensors: ModelTensors,
    ln_a: FlooredLogMatrix,
    ln_b: Vec<FlooredLogMatrix>,
    ln_d: Vec<f64>,
    ln_theta: Vec<f64>,
    a_entropy: Vec<f64>,
    a_probs: Vec<Vec<(usize, f64)>>,
    b_probs: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Model {
    pub fn new(tensors: ModelTensors) -> Result<Self> {
        let violations = validate_model(&tensors);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
            return Err(invalid(format!(
                "invalid model ({} violations): {}",
                violations.len(),
                list.join("; ")
            )));
        }
        let (no, ns, nu) = (tensors.num_obs(), tensors.num_states(), tensors.num_actions());
        let a = &tensors.a;
        let b = &tensors.b;
        let ln_a = FlooredLogMatrix::from_probs(no, ns, |o, s| a.get(&[o, s]));
        let ln_b = (0..nu)
            .map(|u| FlooredLogMatrix::from_probs(ns, ns, |n, p| b.get(&[n, p, u])))
            .collect();
        let a_entropy = (0..ns)
            .map(|s| entropy(&(0..no).map(|o| a.get(&[o, s])).collect::<Vec<_>>()))
            .collect();
        let a_probs = (0..ns)
            .map(|s| {
                (0..no)
                    .map(|o| (o, a.get(&[o, s])))
                    .filter(|(_, p)| *p > 0.0)
                    .collect()
            })
            .collect();
        let b_probs = (0..nu)
            .map(|u| {
                (0..ns)
                    .map(|p| {
                        (0..ns)
                            .map(|n| (n, b.get(&[n, p, u])))
                            .filter(|(_, v)| *v > 0.0)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            ln_d: tensors.d.iter().map(|p| ln_clamped(*p)).collect(),
            ln_theta: tensors.theta.iter().map(|p| ln_clamped(*p)).collect(),
            tensors,
            ln_a,
            ln_b,
            a_entropy,
            a_probs,
            b_probs,
        })
    }

    pub fn tensors(&self) -> &ModelTensors {
        &self.tensors
    }

    pub fn num_obs(&self) -> usize {
        self.tensors.num_obs()
    }

    pub fn num_states(&self) -> usize {
        self.tensors.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.tensors.num_actions()
    }

    /// `ln A` with rows indexed by observation and columns by state.
    pub fn ln_a(&self) -> &FlooredLogMatrix {
        &self.ln_a
    }

    /// `ln B[·,·,u]` with rows indexed by next state and columns by previous state.
    pub fn ln_b(&self, action: usize) -> &FlooredLogMatrix {
        &self.ln_b[action]
    }

    pub fn ln_d(&self) -> &[f64] {
        &self.ln_d
    }

    pub fn ln_theta(&self) -> &[f64] {
        &self.ln_theta
    }

    /// `H[A[·, s]]` for every state `s`.
    pub fn likelihood_entropy(&self) -> &[f64] {
        &self.a_entropy
    }

    /// Predictive state distribution `B[·,·,u] · s`.
    pub fn predict_state(&self, s: &[f64], action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states()];
        for (p, w) in s.iter().enumerate() {
            if *w > 0.0 {
                for (n, v) in &self.b_probs[action][p] {
                    out[*n] += w * v;
                }
            }
        }
        out
    }

    /// Predictive observation distribution `A · s`.
    pub fn predict_obs(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_obs()];
        for (st, w) in s.iter().enumerate() {
            if *w > 0.0 {
                for (o, v) in &self.a_probs[st] {
                    out[*o] += w * v;
                }
            }
        }
        out
    }
}

/// An action sequence naming a future node; the empty index is the present.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(u) = actions.iter().find(|u| **u >= num_actions) {
            return Err(invalid(format!("action {u} out of range for {num_actions} actions")));
        }
        Ok(Self(actions))
    }

    /// `I::u`.
    pub fn append_action(&self, action: usize, num_actions: usize) -> Result<Self> {
        if action >= num_actions {
            return Err(invalid(format!(
                "action {action} out of range for {num_actions} actions"
            )));
        }
        let mut v = self.0.clone();
        v.push(action);
        Ok(Self(v))
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parent(&self) -> Option<Self> {
        (!self.0.is_empty()).then(|| Self(self.0[..self.0.len() - 1].to_vec()))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for u in &self.0 {
            write!(f, "{u}")?;
        }
        f.write_str(")")
    }
}

/// Target distributions over future observations and states.
#[derive(Clone, Debug, PartialEq)]
pub struct Preferences {
    pub c_o: Categorical,
    pub c_s: Categorical,
    pub gamma: f64,
}

impl Preferences {
    pub fn new(c_o: Vec<f64>, c_s: Vec<f64>, gamma: f64) -> Result<Self> {
        Ok(Self {
            c_o: Categorical::new(dims::OBS, c_o)?,
            c_s: Categorical::new(dims::STATE, c_s)?,
            gamma,
        })
    }
}

/// Posterior parameters for the present and past time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefChain {
    observations: Vec<usize>,
    state_posteriors: Vec<Vec<f64>>,
    action_posteriors: Vec<Vec<f64>>,
    actions_taken: Vec<Option<usize>>,
}

impl BeliefChain {
    /// Chain at `t = 0` with a uniform `D̂_0`.
    pub fn new(model: &Model, first_observation: usize) -> Result<Self> {
        check_obs(model, first_observation)?;
        let ns = model.num_states();
        Ok(Self {
            observations: vec![first_observation],
            state_posteriors: vec![vec![1.0 / ns as f64; ns]],
            action_posteriors: Vec::new(),
            actions_taken: Vec::new(),
        })
    }

    /// Assembles a chain from explicit parts. `actions_taken[τ] = None` marks a
    /// step whose action posterior is still free for inference.
    pub fn from_parts(
        model: &Model,
        observations: Vec<usize>,
        state_posteriors: Vec<Vec<f64>>,
        action_posteriors: Vec<Vec<f64>>,
        actions_taken: Vec<Option<usize>>,
    ) -> Result<Self> {
        let t1 = observations.len();
        if t1 == 0
            || state_posteriors.len() != t1
            || action_posteriors.len() + 1 != t1
            || actions_taken.len() + 1 != t1
        {
            return Err(invalid(format!(
                "inconsistent chain lengths: {} observations, {} states, {} action posteriors, {} actions",
                t1,
                state_posteriors.len(),
                action_posteriors.len(),
                actions_taken.len()
            )));
        }
        for o in &observations {
            check_obs(model, *o)?;
        }
        for s in &state_posteriors {
            if s.len() != model.num_states() {
                return Err(invalid("state posterior has the wrong length"));
            }
            check_distribution(s)?;
        }
        for (q, u) in action_posteriors.iter().zip(&actions_taken) {
            if q.len() != model.num_actions() {
                return Err(invalid("action posterior has the wrong length"));
            }
            check_distribution(q)?;
            if let Some(u) = u {
                if *u >= model.num_actions() {
                    return Err(invalid(format!("action {u} out of range")));
                }
            }
        }
        Ok(Self {
            observations,
            state_posteriors,
            action_posteriors,
            actions_taken,
        })
    }

    /// Index of the present time step.
    pub fn t(&self) -> usize {
        self.observations.len() - 1
    }

    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    pub fn state_posteriors(&self) -> &[Vec<f64>] {
        &self.state_posteriors
    }

    pub fn action_posteriors(&self) -> &[Vec<f64>] {
        &self.action_posteriors
    }

    pub fn actions_taken(&self) -> &[Option<usize>] {
        &self.actions_taken
    }

    pub fn state(&self, tau: usize) -> &[f64] {
        &self.state_posteriors[tau]
    }

    pub fn current_state(&self) -> &[f64] {
        &self.state_posteriors[self.t()]
    }

    pub(crate) fn set_state(&mut self, tau: usize, q: Vec<f64>) {
        self.state_posteriors[tau] = q;
    }

    pub(crate) fn set_action(&mut self, tau: usize, q: Vec<f64>) {
        self.action_posteriors[tau] = q;
    }

    pub fn is_pinned(&self, tau: usize) -> bool {
        self.actions_taken.get(tau).is_some_and(|u| u.is_some())
    }
}

fn check_obs(model: &Model, o: usize) -> Result<()> {
    if o >= model.num_obs() {
        return Err(invalid(format!(
            "observation {o} out of range for {} observations",
            model.num_obs()
        )));
    }
    Ok(())
}

pub type NodeId = usize;

/// A future node `S_I, O_I` of the planning tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub index: MultiIndex,
    /// `D̂_I`. Empty for the root, whose belief lives in the chain.
    pub state: Vec<f64>,
    /// `Ê_I`. Empty for the root.
    pub obs: Vec<f64>,
    pub visits: u64,
    pub aggregated_cost: f64,
    /// Cost assigned when the node was evaluated.
    pub cost: f64,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
}

impl TreeNode {
    pub fn mean_cost(&self) -> f64 {
        self.aggregated_cost / self.visits as f64
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Arena holding the root (id 0) and every expanded future node.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanTree {
    nodes: Vec<TreeNode>,
    expansions: usize,
}

impl Default for PlanTree {
    fn default() -> Self {
        Self::new()
    }
}

impl PlanTree {
    pub const ROOT: NodeId = 0;

    pub fn new() -> Self {
        Self {
            nodes: vec![TreeNode {
                index: MultiIndex::root(),
                state: Vec::new(),
                obs: Vec::new(),
                visits: 1,
                aggregated_cost: 0.0,
                cost: 0.0,
                children: Vec::new(),
                parent: None,
            }],
            expansions: 0,
        }
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id]
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[Self::ROOT]
    }

    /// Number of nodes including the root.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn expansions(&self) -> usize {
        self.expansions
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Adds `num_actions` children with uniform posteriors below a leaf.
    pub fn add_children(
        &mut self,
        leaf: NodeId,
        num_actions: usize,
        num_states: usize,
        num_obs: usize,
    ) -> Result<Vec<NodeId>> {
        if leaf >= self.nodes.len() {
            return Err(invalid(format!("node {leaf} does not exist")));
        }
        if !self.nodes[leaf].children.is_empty() {
            return Err(crate::error::contract(format!(
                "node {} is already expanded",
                self.nodes[leaf].index
            )));
        }
        let first = self.nodes.len();
        for u in 0..num_actions {
            let index = self.nodes[leaf].index.append_action(u, num_actions)?;
            self.nodes.push(TreeNode {
                index,
                state: vec![1.0 / num_states as f64; num_states],
                obs: vec![1.0 / num_obs as f64; num_obs],
                visits: 1,
                aggregated_cost: 0.0,
                cost: 0.0,
                children: Vec::new(),
                parent: Some(leaf),
            });
        }
        let ids: Vec<NodeId> = (first..first + num_actions).collect();
        self.nodes[leaf].children = ids.clone();
        self.expansions += 1;
        Ok(ids)
    }

    /// Node ids in breadth-first order, root first.
    pub fn breadth_first(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        order.push(Self::ROOT);
        let mut head = 0;
        while head < order.len() {
            let id = order[head];
            order.extend(self.nodes[id].children.iter().copied());
            head += 1;
        }
        order
    }
}

/// Records the executed action and the new observation, adds a fresh uniform
/// state posterior and discards the whole future tree.
pub fn integrate_step(
    chain: &mut BeliefChain,
    tree: &mut PlanTree,
    model: &Model,
    executed_action: usize,
    observation: usize,
) -> Result<()> {
    let pinned = one_hot(executed_action, model.num_actions())?;
    check_obs(model, observation)?;
    let ns = model.num_states();
    chain.action_posteriors.push(pinned);
    chain.actions_taken.push(Some(executed_action));
    chain.observations.push(observation);
    chain.state_posteriors.push(vec![1.0 / ns as f64; ns]);
    *tree = PlanTree::new();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maze_like_a() -> Vec<f64> {
        vec![0.05, 0.05, 0.9, 0.05, 0.9, 0.05, 0.9, 0.05, 0.05]
    }

    fn two_state_model() -> Model {
        let t = ModelTensors::from_fns(
            2,
            2,
            3,
            |o, s| if o == s { 1.0 } else { 0.0 },
            |n, p, u| if (u == 0 && n == p) || (u != 0 && n != p) { 1.0 } else { 0.0 },
            vec![0.5, 0.5],
        )
        .unwrap();
        Model::new(t).unwrap()
    }

    #[test]
    fn identity_a_is_valid() {
        let m = two_state_model();
        assert!(validate_model(m.tensors()).is_empty());
    }

    #[test]
    fn non_normalized_a_column_is_reported() {
        let t = ModelTensors::from_fns(
            2,
            2,
            1,
            |o, s| if s == 1 { [0.5, 0.4][o] } else { [1.0, 0.0][o] },
            |n, p, _| if n == p { 1.0 } else { 0.0 },
            vec![1.0, 0.0],
        )
        .unwrap();
        let v = validate_model(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].tensor, "A");
        assert_eq!(v[0].coordinates, vec![1]);
        assert!(Model::new(t).is_err());
    }

    #[test]
    fn three_by_three_likelihood_is_valid() {
        let a = maze_like_a();
        let t = ModelTensors::from_fns(
            3,
            3,
            1,
            |o, s| a[o * 3 + s],
            |n, p, _| if n == p { 1.0 } else { 0.0 },
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        assert!(validate_model(&t).is_empty());
    }

    #[test]
    fn append_action_cases() {
        let root = MultiIndex::root();
        let one = root.append_action(1, 3).unwrap();
        assert_eq!(one.actions(), [1]);
        assert!(root.is_empty());
        let eleven = one.append_action(1, 3).unwrap();
        assert_eq!(eleven.actions(), [1, 1]);
        assert_eq!(eleven.to_string(), "(11)");
        let two = root.append_action(2, 3).unwrap();
        assert_eq!(two.append_action(0, 3).unwrap().actions(), [2, 0]);
        assert!(root.append_action(3, 3).is_err());
        assert_eq!(eleven.parent().unwrap(), one);
    }

    #[test]
    fn integrate_step_extends_chain_and_prunes_tree() {
        let m = two_state_model();
        let mut chain = BeliefChain::new(&m, 0).unwrap();
        let mut tree = PlanTree::new();
        let kids = tree.add_children(PlanTree::ROOT, 3, 2, 2).unwrap();
        tree.add_children(kids[0], 3, 2, 2).unwrap();
        assert_eq!(tree.len(), 7);
        integrate_step(&mut chain, &mut tree, &m, 2, 1).unwrap();
        assert_eq!(chain.t(), 1);
        assert_eq!(chain.action_posteriors()[0], vec![0.0, 0.0, 1.0]);
        assert!(chain.is_pinned(0));
        assert_eq!(tree.len(), 1);
        assert!(tree.root().is_leaf());
        for _ in 0..19 {
            integrate_step(&mut chain, &mut tree, &m, 0, 0).unwrap();
        }
        assert_eq!(chain.state_posteriors().len(), 21);
        assert_eq!(chain.actions_taken().len(), 20);
    }

    #[test]
    fn double_expansion_is_a_contract_violation() {
        let mut tree = PlanTree::new();
        tree.add_children(PlanTree::ROOT, 2, 2, 2).unwrap();
        assert!(matches!(
            tree.add_children(PlanTree::ROOT, 2, 2, 2),
            Err(crate::Error::ContractViolation(_))
        ));
    }

    #[test]
    fn predictions_match_dense_products() {
        let m = two_state_model();
        assert_eq!(m.predict_state(&[0.3, 0.7], 1), vec![0.7, 0.3]);
        assert_eq!(m.predict_obs(&[0.3, 0.7]), vec![0.3, 0.7]);
    }

    #[test]
    fn breadth_first_visits_levels_in_order() {
        let mut tree = PlanTree::new();
        let kids = tree.add_children(0, 2, 1, 1).unwrap();
        let grand = tree.add_children(kids[1], 2, 1, 1).unwrap();
        let deep = tree.add_children(grand[0], 2, 1, 1).unwrap();
        tree.add_children(kids[0], 2, 1, 1).unwrap();
        let order = tree.breadth_first();
        let depth: Vec<usize> = order.iter().map(|id| tree.node(*id).index.len()).collect();
        assert!(depth.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(order.len(), tree.len());
        assert!(order.contains(&deep[1]));
    }
}
