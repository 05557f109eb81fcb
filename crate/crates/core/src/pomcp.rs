//! POMCP: Monte Carlo tree search over action/observation histories with a
//! rejection particle filter for the belief state.

use std::collections::HashMap;

use rand::Rng;

use crate::env::Lake;
use crate::error::{invalid, Error, Result};

/// Generative simulator used by the search. Steps never mutate `self`.
pub trait Simulator {
    type State: Clone;

    fn num_actions(&self) -> usize;

    /// Draw from the initial belief.
    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn step<R: Rng + ?Sized>(&self, state: &Self::State, action: usize, rng: &mut R) -> SimStep<Self::State>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimStep<S> {
    pub state: S,
    pub observation: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// The lake seen by the search: reaching the frisbee keeps paying 1 per step
/// and holes only cost their penalty.
impl Simulator for Lake {
    type State = usize;

    fn num_actions(&self) -> usize {
        crate::env::lake::ACTIONS.len()
    }

    fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) -> usize {
        self.start_state()
    }

    fn step<R: Rng + ?Sized>(&self, state: &usize, action: usize, _rng: &mut R) -> SimStep<usize> {
        let next = self.next_state(*state, action);
        SimStep {
            state: next,
            observation: next,
            reward: self.reward(next),
            terminal: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PomcpConfig {
    /// Simulations per decision.
    pub timeout: usize,
    pub exp_const: f64,
    /// Discount factor.
    pub gamma: f64,
    pub no_particles: usize,
}

impl Default for PomcpConfig {
    fn default() -> Self {
        Self {
            timeout: 1000,
            exp_const: 3.0,
            gamma: 0.9,
            no_particles: 100,
        }
    }
}

impl PomcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout == 0 || self.no_particles == 0 {
            return Err(invalid("TIMEOUT and NO_PARTICLES must be positive"));
        }
        if !(self.exp_const >= 0.0 && self.exp_const.is_finite()) {
            return Err(invalid("EXP_CONST must be a finite non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("GAMMA must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet<S> {
    particles: Vec<S>,
    capacity: usize,
}

impl<S: Clone> ParticleSet<S> {
    pub fn new(particles: Vec<S>, capacity: usize) -> Result<Self> {
        if particles.is_empty() || capacity == 0 {
            return Err(invalid("particle sets must be non-empty"));
        }
        Ok(Self { particles, capacity })
    }

    pub fn from_initial<M: Simulator<State = S>, R: Rng + ?Sized>(sim: &M, capacity: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..capacity).map(|_| sim.initial_state(rng)).collect(), capacity)
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &S {
        &self.particles[rng.random_range(0..self.particles.len())]
    }
}

/// Rejection filtering: simulate random particles through `action` and keep
/// those that reproduce `observation`. Short sets are refilled with copies
/// of survivors.
pub fn update_belief<M: Simulator, R: Rng + ?Sized>(
    particles: &ParticleSet<M::State>,
    action: usize,
    observation: usize,
    sim: &M,
    rng: &mut R,
) -> Result<ParticleSet<M::State>> {
    let capacity = particles.capacity;
    let max_attempts = capacity * 100;
    let mut kept = Vec::with_capacity(capacity);
    for _ in 0..max_attempts {
        if kept.len() == capacity {
            break;
        }
        let out = sim.step(particles.sample(rng), action, rng);
        if out.observation == observation {
            kept.push(out.state);
        }
    }
    if kept.is_empty() {
        return Err(Error::BeliefCollapse { observation });
    }
    let survivors = kept.len();
    while kept.len() < capacity {
        let copy = kept[rng.random_range(0..survivors)].clone();
        kept.push(copy);
    }
    Ok(ParticleSet { particles: kept, capacity })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryNode {
    pub visits: u64,
    pub action_visits: Vec<u64>,
    pub values: Vec<f64>,
    pub children: HashMap<(usize, usize), usize>,
}

impl HistoryNode {
    fn new(num_actions: usize) -> Self {
        Self {
            visits: 0,
            action_visits: vec![0; num_actions],
            values: vec![0.0; num_actions],
            children: HashMap::new(),
        }
    }
}

/// UCB1 with unvisited actions tried first (lowest index wins ties).
pub fn ucb_action(node: &HistoryNode, exp_const: f64) -> usize {
    if let Some(a) = node.action_visits.iter().position(|n| *n == 0) {
        return a;
    }
    let ln_n = (node.visits as f64).ln();
    let mut best = (0, f64::NEG_INFINITY);
    for (a, (q, n)) in node.values.iter().zip(&node.action_visits).enumerate() {
        let score = q + exp_const * (ln_n / *n as f64).sqrt();
        if score > best.1 {
            best = (a, score);
        }
    }
    best.0
}

/// Discounted return of a uniformly random policy for at most `horizon` steps.
pub fn rollout<M: Simulator, R: Rng + ?Sized>(sim: &M, state: &M::State, horizon: usize, gamma: f64, rng: &mut R) -> f64 {
    let mut state = state.clone();
    let (mut total, mut discount) = (0.0, 1.0);
    for _ in 0..horizon {
        let a = rng.random_range(0..sim.num_actions());
        let out = sim.step(&state, a, rng);
        total += discount * out.reward;
        discount *= gamma;
        if out.terminal {
            break;
        }
        state = out.state;
    }
    total
}

/// Search tree stored as an arena; node 0 is the current history.
#[derive(Clone, Debug)]
pub struct SearchTree {
    nodes: Vec<HistoryNode>,
    num_actions: usize,
}

impl SearchTree {
    pub fn new(num_actions: usize) -> Self {
        Self {
            nodes: vec![HistoryNode::new(num_actions)],
            num_actions,
        }
    }

    pub fn root(&self) -> &HistoryNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &HistoryNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Keeps the subtree under `(action, observation)` as the new root.
    pub fn advance(&mut self, action: usize, observation: usize) {
        let Some(&child) = self.root().children.get(&(action, observation)) else {
            *self = Self::new(self.num_actions);
            return;
        };
        let mut kept = Vec::new();
        let mut remap = HashMap::new();
        let mut stack = vec![child];
        while let Some(id) = stack.pop() {
            remap.insert(id, kept.len());
            kept.push(id);
            stack.extend(self.nodes[id].children.values().copied());
        }
        let mut nodes: Vec<HistoryNode> = kept.iter().map(|id| std::mem::replace(&mut self.nodes[*id], HistoryNode::new(0))).collect();
        for node in &mut nodes {
            for id in node.children.values_mut() {
                *id = remap[id];
            }
        }
        self.nodes = nodes;
    }

    fn simulate<M: Simulator, R: Rng + ?Sized>(
        &mut self,
        sim: &M,
        cfg: &PomcpConfig,
        state: &M::State,
        node: usize,
        remaining: usize,
        rng: &mut R,
    ) -> f64 {
        if remaining == 0 {
            return 0.0;
        }
        let a = ucb_action(&self.nodes[node], cfg.exp_const);
        let out = sim.step(state, a, rng);
        let future = if out.terminal {
            0.0
        } else {
            match self.nodes[node].children.get(&(a, out.observation)).copied() {
                Some(child) => self.simulate(sim, cfg, &out.state, child, remaining - 1, rng),
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(HistoryNode::new(self.num_actions));
                    self.nodes[node].children.insert((a, out.observation), id);
                    rollout(sim, &out.state, remaining - 1, cfg.gamma, rng)
                }
            }
        };
        let total = out.reward + cfg.gamma * future;
        let n = &mut self.nodes[node];
        n.visits += 1;
        n.action_visits[a] += 1;
        n.values[a] += (total - n.values[a]) / n.action_visits[a] as f64;
        total
    }

    /// Runs `cfg.timeout` simulations from the root and returns argmax q.
    pub fn search<M: Simulator, R: Rng + ?Sized>(
        &mut self,
        sim: &M,
        particles: &ParticleSet<M::State>,
        cfg: &PomcpConfig,
        remaining: usize,
        rng: &mut R,
    ) -> Result<usize> {
        if particles.is_empty() {
            return Err(Error::BeliefCollapse { observation: usize::MAX });
        }
        if sim.num_actions() != self.num_actions {
            return Err(invalid("simulator and tree disagree on the action count"));
        }
        for _ in 0..cfg.timeout {
            let s = particles.sample(rng).clone();
            self.simulate(sim, cfg, &s, 0, remaining.max(1), rng);
        }
        Ok(best_action(self.root()))
    }
}

/// Most valuable visited action; lowest index on ties.
pub fn best_action(node: &HistoryNode) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (a, (q, n)) in node.values.iter().zip(&node.action_visits).enumerate() {
        if *n > 0 && *q > best.1 {
            best = (a, *q);
        }
    }
    best.0
}

/// Search tree plus belief, kept across decisions.
#[derive(Clone, Debug)]
pub struct PomcpAgent<'s, M: Simulator> {
    sim: &'s M,
    cfg: PomcpConfig,
    tree: SearchTree,
    particles: ParticleSet<M::State>,
}

impl<'s, M: Simulator> PomcpAgent<'s, M> {
    pub fn new<R: Rng + ?Sized>(sim: &'s M, cfg: PomcpConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let particles = ParticleSet::from_initial(sim, cfg.no_particles, rng)?;
        Ok(Self {
            tree: SearchTree::new(sim.num_actions()),
            sim,
            cfg,
            particles,
        })
    }

    pub fn act<R: Rng + ?Sized>(&mut self, remaining: usize, rng: &mut R) -> Result<usize> {
        self.tree.search(self.sim, &self.particles, &self.cfg, remaining, rng)
    }

    pub fn observe<R: Rng + ?Sized>(&mut self, action: usize, observation: usize, rng: &mut R) -> Result<()> {
        self.particles = update_belief(&self.particles, action, observation, self.sim, rng)?;
        self.tree.advance(action, observation);
        Ok(())
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn particles(&self) -> &ParticleSet<M::State> {
        &self.particles
    }
}
