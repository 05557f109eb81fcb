//! Variational message passing over the belief chain and the planning tree.

use crate::error::{contract, invalid, Result};
use crate::math::{entropy, normalize_logits};
use crate::model::{BeliefChain, Model, NodeId, PlanTree};

/// Stopping rule for [`run_vmp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VmpSettings {
    /// Largest absolute parameter change that counts as converged.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for VmpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_sweeps: 100,
        }
    }
}

/// A factor whose posterior [`run_vmp`] should refresh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    PastState(usize),
    PastAction(usize),
    /// Both `D̂_I` and `Ê_I` of a non-root tree node.
    FutureNode(NodeId),
}

/// `Q*(S_τ)` for `0 ≤ τ ≤ t`. Children of the root contribute only at `τ = t`.
pub fn update_past_state(
    chain: &BeliefChain,
    tree: Option<&PlanTree>,
    model: &Model,
    tau: usize,
) -> Result<Vec<f64>> {
    let t = chain.t();
    if tau > t {
        return Err(invalid(format!("time step {tau} is beyond the present {t}")));
    }
    let mut logits = vec![0.0; model.num_states()];
    if tau == 0 {
        for (l, d) in logits.iter_mut().zip(model.ln_d()) {
            *l += d;
        }
    } else {
        let prev = chain.state(tau - 1);
        for (u, w) in chain.action_posteriors()[tau - 1].iter().enumerate() {
            if *w > 0.0 {
                model.ln_b(u).accumulate_over_cols(prev, *w, &mut logits);
            }
        }
    }
    model
        .ln_a()
        .accumulate_row(chain.observations()[tau], 1.0, &mut logits);
    if tau == t {
        if let Some(tree) = tree {
            for child in &tree.root().children {
                let node = tree.node(*child);
                let u = node.index.last().expect("child of the root has an action");
                model.ln_b(u).accumulate_over_rows(&node.state, 1.0, &mut logits);
            }
        }
    } else {
        let next = chain.state(tau + 1);
        for (u, w) in chain.action_posteriors()[tau].iter().enumerate() {
            if *w > 0.0 {
                model.ln_b(u).accumulate_over_rows(next, *w, &mut logits);
            }
        }
    }
    normalize_logits(&mut logits);
    Ok(logits)
}

/// `Q*(U_τ)` for `τ < t`. Returns `None` when the step is pinned to an
/// executed action, in which case its posterior is left alone.
pub fn update_past_action(chain: &BeliefChain, model: &Model, tau: usize) -> Result<Option<Vec<f64>>> {
    let t = chain.t();
    if tau >= t {
        return Err(invalid(format!("no action posterior at step {tau} (present is {t})")));
    }
    if chain.is_pinned(tau) {
        return Ok(None);
    }
    let (cur, next) = (chain.state(tau), chain.state(tau + 1));
    let mut logits = model.ln_theta().to_vec();
    let mut tmp = vec![0.0; model.num_states()];
    for (u, l) in logits.iter_mut().enumerate() {
        tmp.iter_mut().for_each(|x| *x = 0.0);
        model.ln_b(u).accumulate_over_cols(cur, 1.0, &mut tmp);
        *l += tmp.iter().zip(next).map(|(a, b)| a * b).sum::<f64>();
    }
    normalize_logits(&mut logits);
    Ok(Some(logits))
}

/// `Q*(O_I) = σ(ln A ⊙ D̂_I)`.
pub fn update_future_obs(tree: &PlanTree, node: NodeId, model: &Model) -> Vec<f64> {
    let mut logits = vec![0.0; model.num_obs()];
    model
        .ln_a()
        .accumulate_over_cols(&tree.node(node).state, 1.0, &mut logits);
    normalize_logits(&mut logits);
    logits
}

/// `Q*(S_I)` for a non-root node: likelihood message from `Ê_I`, forward
/// message from the parent and backward messages from the children.
pub fn update_future_state(
    chain: &BeliefChain,
    tree: &PlanTree,
    node: NodeId,
    model: &Model,
) -> Result<Vec<f64>> {
    let n = tree.node(node);
    let (Some(parent), Some(u)) = (n.parent, n.index.last()) else {
        return Err(contract("the root's state belongs to the belief chain"));
    };
    let parent_state = if parent == PlanTree::ROOT {
        chain.current_state()
    } else {
        &tree.node(parent).state
    };
    let mut logits = vec![0.0; model.num_states()];
    model.ln_a().accumulate_over_rows(&n.obs, 1.0, &mut logits);
    model.ln_b(u).accumulate_over_cols(parent_state, 1.0, &mut logits);
    for child in &n.children {
        let c = tree.node(*child);
        let k = c.index.last().expect("child has an action");
        model.ln_b(k).accumulate_over_rows(&c.state, 1.0, &mut logits);
    }
    normalize_logits(&mut logits);
    Ok(logits)
}

fn max_delta(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Places the targets in the fixed update schedule: past states in time
/// order, future nodes breadth-first, then free action posteriors.
fn schedule(tree: &PlanTree, targets: &[Target]) -> Vec<Target> {
    let mut bfs_rank = vec![usize::MAX; tree.len()];
    if targets.iter().any(|t| matches!(t, Target::FutureNode(_))) {
        for (rank, id) in tree.breadth_first().into_iter().enumerate() {
            bfs_rank[id] = rank;
        }
    }
    let mut sorted: Vec<Target> = targets.to_vec();
    sorted.sort_by_key(|t| match t {
        Target::PastState(tau) => (0, *tau),
        Target::FutureNode(id) => (1, bfs_rank.get(*id).copied().unwrap_or(usize::MAX)),
        Target::PastAction(tau) => (2, *tau),
    });
    sorted.dedup();
    sorted
}

/// Sweeps the update equations over `targets` until no parameter moves by
/// more than the tolerance. Returns the number of sweeps performed, including
/// the one that detected convergence.
pub fn run_vmp(
    chain: &mut BeliefChain,
    tree: &mut PlanTree,
    model: &Model,
    targets: &[Target],
    settings: VmpSettings,
) -> Result<usize> {
    let order = schedule(tree, targets);
    for target in &order {
        match target {
            Target::PastState(tau) if *tau > chain.t() => {
                return Err(invalid(format!("time step {tau} is beyond the present")))
            }
            Target::PastAction(tau) if *tau >= chain.t() => {
                return Err(invalid(format!("no action posterior at step {tau}")))
            }
            Target::FutureNode(id) if *id == PlanTree::ROOT || *id >= tree.len() => {
                return Err(invalid(format!("node {id} is not a future node")))
            }
            _ => {}
        }
    }
    for sweep in 1..=settings.max_sweeps {
        let mut delta: f64 = 0.0;
        for target in &order {
            match *target {
                Target::PastState(tau) => {
                    let q = update_past_state(chain, Some(tree), model, tau)?;
                    delta = delta.max(max_delta(chain.state(tau), &q));
                    chain.set_state(tau, q);
                }
                Target::PastAction(tau) => {
                    if let Some(q) = update_past_action(chain, model, tau)? {
                        delta = delta.max(max_delta(&chain.action_posteriors()[tau], &q));
                        chain.set_action(tau, q);
                    }
                }
                Target::FutureNode(id) => {
                    let q = update_future_state(chain, tree, id, model)?;
                    delta = delta.max(max_delta(&tree.node(id).state, &q));
                    tree.node_mut(id).state = q;
                    let e = update_future_obs(tree, id, model);
                    delta = delta.max(max_delta(&tree.node(id).obs, &e));
                    tree.node_mut(id).obs = e;
                }
            }
        }
        if delta < settings.tolerance {
            return Ok(sweep);
        }
    }
    Ok(settings.max_sweeps)
}

/// Targets for a full pass over the chain: every state and every free action.
pub fn chain_targets(chain: &BeliefChain) -> Vec<Target> {
    (0..=chain.t())
        .map(Target::PastState)
        .chain((0..chain.t()).filter(|tau| !chain.is_pinned(*tau)).map(Target::PastAction))
        .collect()
}

fn bilinear(model: &Model, u: usize, next: &[f64], prev: &[f64]) -> f64 {
    let mut tmp = vec![0.0; model.num_states()];
    model.ln_b(u).accumulate_over_cols(prev, 1.0, &mut tmp);
    tmp.iter().zip(next).map(|(a, b)| a * b).sum()
}

/// Mean-field variational free energy `E_Q[ln Q − ln P]` of the chain and
/// every future node in the tree.
pub fn free_energy(chain: &BeliefChain, tree: &PlanTree, model: &Model) -> f64 {
    let mut f = 0.0;
    let d0 = chain.state(0);
    f -= d0.iter().zip(model.ln_d()).map(|(q, l)| q * l).sum::<f64>();
    for tau in 0..=chain.t() {
        let q = chain.state(tau);
        f -= entropy(q);
        let o = chain.observations()[tau];
        f -= q
            .iter()
            .enumerate()
            .map(|(s, p)| p * model.ln_a().get(o, s))
            .sum::<f64>();
        if tau > 0 {
            let th = &chain.action_posteriors()[tau - 1];
            f -= entropy(th);
            f -= th
                .iter()
                .zip(model.ln_theta())
                .map(|(a, b)| a * b)
                .sum::<f64>();
            for (u, w) in th.iter().enumerate() {
                if *w > 0.0 {
                    f -= w * bilinear(model, u, q, chain.state(tau - 1));
                }
            }
        }
    }
    for id in 1..tree.len() {
        let n = tree.node(id);
        let parent = n.parent.expect("future node has a parent");
        let parent_state = if parent == PlanTree::ROOT {
            chain.current_state()
        } else {
            &tree.node(parent).state
        };
        f -= entropy(&n.state) + entropy(&n.obs);
        let mut tmp = vec![0.0; model.num_states()];
        model.ln_a().accumulate_over_rows(&n.obs, 1.0, &mut tmp);
        f -= tmp.iter().zip(&n.state).map(|(a, b)| a * b).sum::<f64>();
        f -= bilinear(model, n.index.last().expect("future node"), &n.state, parent_state);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{dims, ln_clamped, one_hot, softmax, NamedTensor};
    use crate::model::ModelTensors;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ln_vec(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| ln_clamped(*x)).collect()
    }

    fn random_dist(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    fn random_model(rng: &mut impl Rng, no: usize, ns: usize, nu: usize) -> Model {
        let a: Vec<Vec<f64>> = (0..ns).map(|_| random_dist(rng, no)).collect();
        let b: Vec<Vec<Vec<f64>>> = (0..nu)
            .map(|_| (0..ns).map(|_| random_dist(rng, ns)).collect())
            .collect();
        let d = random_dist(rng, ns);
        Model::new(
            ModelTensors::from_fns(no, ns, nu, |o, s| a[s][o], |n, p, u| b[u][p][n], d).unwrap(),
        )
        .unwrap()
    }

    fn identity_model(n: usize, nu: usize) -> Model {
        Model::new(
            ModelTensors::from_fns(
                n,
                n,
                nu,
                |o, s| (o == s) as u8 as f64,
                |nx, p, u| (nx == (p + u) % n) as u8 as f64,
                vec![1.0 / n as f64; n],
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn uniform_model(n: usize, nu: usize) -> Model {
        let v = 1.0 / n as f64;
        Model::new(ModelTensors::from_fns(n, n, nu, |_, _| v, |_, _, _| v, vec![v; n]).unwrap())
            .unwrap()
    }

    /// Straight-line dense evaluation of the update equations on named tensors.
    struct Dense {
        ln_a: NamedTensor,
        ln_b: NamedTensor,
        ln_d: Vec<f64>,
        ln_theta: Vec<f64>,
    }

    impl Dense {
        fn new(m: &Model) -> Self {
            let t = m.tensors();
            Self {
                ln_a: t.a.map(ln_clamped),
                ln_b: t.b.map(ln_clamped),
                ln_d: ln_vec(&t.d),
                ln_theta: ln_vec(&t.theta),
            }
        }

        fn past_state(&self, chain: &BeliefChain, tree: &PlanTree, tau: usize) -> Vec<f64> {
            let ns = self.ln_d.len();
            let no = self.ln_a.shape()[0];
            let mut l = vec![0.0; ns];
            let add = |l: &mut Vec<f64>, v: Vec<f64>| l.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            if tau == 0 {
                add(&mut l, self.ln_d.clone());
            } else {
                add(
                    &mut l,
                    self.ln_b
                        .inner_product(&[
                            (dims::PREV_STATE, chain.state(tau - 1)),
                            (dims::ACTION, &chain.action_posteriors()[tau - 1]),
                        ])
                        .unwrap(),
                );
            }
            let o = one_hot(chain.observations()[tau], no).unwrap();
            add(&mut l, self.ln_a.inner_product(&[(dims::OBS, &o)]).unwrap());
            if tau == chain.t() {
                for c in &tree.root().children {
                    let n = tree.node(*c);
                    let u = one_hot(n.index.last().unwrap(), self.ln_theta.len()).unwrap();
                    add(
                        &mut l,
                        self.ln_b
                            .inner_product(&[(dims::NEXT_STATE, &n.state), (dims::ACTION, &u)])
                            .unwrap(),
                    );
                }
            } else {
                add(
                    &mut l,
                    self.ln_b
                        .inner_product(&[
                            (dims::NEXT_STATE, chain.state(tau + 1)),
                            (dims::ACTION, &chain.action_posteriors()[tau]),
                        ])
                        .unwrap(),
                );
            }
            softmax(&l, 1.0).unwrap()
        }

        fn past_action(&self, chain: &BeliefChain, tau: usize) -> Vec<f64> {
            let z = self
                .ln_b
                .inner_product(&[
                    (dims::NEXT_STATE, chain.state(tau + 1)),
                    (dims::PREV_STATE, chain.state(tau)),
                ])
                .unwrap();
            let l: Vec<f64> = z.iter().zip(&self.ln_theta).map(|(a, b)| a + b).collect();
            softmax(&l, 1.0).unwrap()
        }

        fn future_obs(&self, state: &[f64]) -> Vec<f64> {
            softmax(&self.ln_a.inner_product(&[(dims::STATE, state)]).unwrap(), 1.0).unwrap()
        }

        fn future_state(&self, chain: &BeliefChain, tree: &PlanTree, id: NodeId) -> Vec<f64> {
            let n = tree.node(id);
            let nu = self.ln_theta.len();
            let parent = n.parent.unwrap();
            let ps = if parent == 0 { chain.current_state().to_vec() } else { tree.node(parent).state.clone() };
            let u = one_hot(n.index.last().unwrap(), nu).unwrap();
            let mut l = self.ln_a.inner_product(&[(dims::OBS, &n.obs)]).unwrap();
            let fwd = self
                .ln_b
                .inner_product(&[(dims::PREV_STATE, &ps), (dims::ACTION, &u)])
                .unwrap();
            l.iter_mut().zip(fwd).for_each(|(a, b)| *a += b);
            for c in &n.children {
                let cn = tree.node(*c);
                let k = one_hot(cn.index.last().unwrap(), nu).unwrap();
                let bwd = self
                    .ln_b
                    .inner_product(&[(dims::NEXT_STATE, &cn.state), (dims::ACTION, &k)])
                    .unwrap();
                l.iter_mut().zip(bwd).for_each(|(a, b)| *a += b);
            }
            softmax(&l, 1.0).unwrap()
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn random_chain(rng: &mut impl Rng, m: &Model, t: usize, pinned: bool) -> BeliefChain {
        let (ns, nu, no) = (m.num_states(), m.num_actions(), m.num_obs());
        let obs = (0..=t).map(|_| rng.random_range(0..no)).collect();
        let states = (0..=t).map(|_| random_dist(rng, ns)).collect();
        let (actions, taken) = if pinned {
            let us: Vec<usize> = (0..t).map(|_| rng.random_range(0..nu)).collect();
            (
                us.iter().map(|u| one_hot(*u, nu).unwrap()).collect(),
                us.into_iter().map(Some).collect(),
            )
        } else {
            ((0..t).map(|_| random_dist(rng, nu)).collect(), vec![None; t])
        };
        BeliefChain::from_parts(m, obs, states, actions, taken).unwrap()
    }

    fn random_tree(rng: &mut impl Rng, m: &Model, expansions: usize) -> PlanTree {
        let mut tree = PlanTree::new();
        for _ in 0..expansions {
            let leaves: Vec<NodeId> = (0..tree.len()).filter(|i| tree.node(*i).is_leaf()).collect();
            let leaf = leaves[rng.random_range(0..leaves.len())];
            for c in tree
                .add_children(leaf, m.num_actions(), m.num_states(), m.num_obs())
                .unwrap()
            {
                tree.node_mut(c).state = random_dist(rng, m.num_states());
                tree.node_mut(c).obs = random_dist(rng, m.num_obs());
            }
        }
        tree
    }

    #[test]
    fn identity_likelihood_dominates_uniform_prior() {
        let m = identity_model(2, 1);
        let chain = BeliefChain::new(&m, 1).unwrap();
        let q = update_past_state(&chain, None, &m, 0).unwrap();
        assert!(q[0] < 1e-20 && (q[1] - 1.0).abs() < 1e-12);
        assert!(update_past_state(&chain, None, &m, 1).is_err());
    }

    #[test]
    fn uniform_model_gives_uniform_updates() {
        let m = uniform_model(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chain = random_chain(&mut rng, &m, 2, false);
        let tree = random_tree(&mut rng, &m, 3);
        for tau in 0..=2 {
            assert!(close(&update_past_state(&chain, Some(&tree), &m, tau).unwrap(), &[1.0 / 3.0; 3], 1e-12));
        }
        assert!(close(&update_past_action(&chain, &m, 0).unwrap().unwrap(), &[0.5, 0.5], 1e-12));
        for id in 1..tree.len() {
            assert!(close(&update_future_obs(&tree, id, &m), &[1.0 / 3.0; 3], 1e-12));
            assert!(close(&update_future_state(&chain, &tree, id, &m).unwrap(), &[1.0 / 3.0; 3], 1e-12));
        }
    }

    #[test]
    fn updates_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..25 {
            let m = random_model(&mut rng, 3, 3, 2);
            let dense = Dense::new(&m);
            let chain = random_chain(&mut rng, &m, 2, false);
            let tree = random_tree(&mut rng, &m, 4);
            for tau in 0..=2 {
                let q = update_past_state(&chain, Some(&tree), &m, tau).unwrap();
                assert!(close(&q, &dense.past_state(&chain, &tree, tau), 1e-12));
            }
            for tau in 0..2 {
                let q = update_past_action(&chain, &m, tau).unwrap().unwrap();
                assert!(close(&q, &dense.past_action(&chain, tau), 1e-12));
            }
            for id in 1..tree.len() {
                let s = update_future_state(&chain, &tree, id, &m).unwrap();
                assert!(close(&s, &dense.future_state(&chain, &tree, id), 1e-12));
                let e = update_future_obs(&tree, id, &m);
                assert!(close(&e, &dense.future_obs(&tree.node(id).state), 1e-12));
            }
        }
    }

    #[test]
    fn chain_fixed_point_matches_dense_coordinate_ascent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 3, 3, 2);
        let dense = Dense::new(&m);
        let mut chain = random_chain(&mut rng, &m, 1, false);
        let mut oracle = chain.clone();
        let mut tree = PlanTree::new();
        let settings = VmpSettings {
            tolerance: 1e-14,
            max_sweeps: 10_000,
        };
        let targets = chain_targets(&chain);
        run_vmp(&mut chain, &mut tree, &m, &targets, settings).unwrap();
        for _ in 0..10_000 {
            for tau in 0..=1 {
                let q = dense.past_state(&oracle, &tree, tau);
                oracle.set_state(tau, q);
            }
            let q = dense.past_action(&oracle, 0);
            oracle.set_action(0, q);
        }
        for tau in 0..=1 {
            assert!(close(chain.state(tau), oracle.state(tau), 1e-9));
        }
        assert!(close(&chain.action_posteriors()[0], &oracle.action_posteriors()[0], 1e-9));
    }

    #[test]
    fn past_action_cases() {
        let same = uniform_model(2, 3);
        let chain = BeliefChain::from_parts(
            &same,
            vec![0, 1],
            vec![vec![0.3, 0.7], vec![0.6, 0.4]],
            vec![vec![0.2, 0.3, 0.5]],
            vec![None],
        )
        .unwrap();
        assert!(close(&update_past_action(&chain, &same, 0).unwrap().unwrap(), &[1.0 / 3.0; 3], 1e-12));

        let flip = identity_model(2, 2);
        let chain = BeliefChain::from_parts(
            &flip,
            vec![0, 0],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.5, 0.5]],
            vec![None],
        )
        .unwrap();
        let q = update_past_action(&chain, &flip, 0).unwrap().unwrap();
        assert!(q[0] > 1.0 - 1e-12);

        let pinned = BeliefChain::from_parts(
            &flip,
            vec![0, 0],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0]],
            vec![Some(1)],
        )
        .unwrap();
        assert_eq!(update_past_action(&pinned, &flip, 0).unwrap(), None);
        assert!(update_past_action(&pinned, &flip, 1).is_err());
    }

    #[test]
    fn future_obs_cases() {
        let m = identity_model(3, 1);
        let mut tree = PlanTree::new();
        tree.add_children(0, 1, 3, 3).unwrap();
        tree.node_mut(1).state = one_hot(2, 3).unwrap();
        let e = update_future_obs(&tree, 1, &m);
        assert!(close(&e, &[0.0, 0.0, 1.0], 1e-12));

        let a = [0.05, 0.05, 0.9, 0.05, 0.9, 0.05, 0.9, 0.05, 0.05];
        let m = Model::new(
            ModelTensors::from_fns(3, 3, 1, |o, s| a[o * 3 + s], |n, p, _| (n == p) as u8 as f64, vec![1.0 / 3.0; 3])
                .unwrap(),
        )
        .unwrap();
        let d = [0.2, 0.3, 0.5];
        tree.node_mut(1).state = d.to_vec();
        let e = update_future_obs(&tree, 1, &m);
        let direct: Vec<f64> = (0..3)
            .map(|o| (0..3).map(|s| d[s] * a[o * 3 + s].ln()).sum::<f64>().exp())
            .collect();
        let z: f64 = direct.iter().sum();
        let direct: Vec<f64> = direct.iter().map(|x| x / z).collect();
        assert!(close(&e, &direct, 1e-12));
    }

    #[test]
    fn leaf_state_copies_parent_under_identity_transition() {
        let v = 1.0 / 3.0;
        let m = Model::new(
            ModelTensors::from_fns(3, 3, 1, |_, _| v, |n, p, _| (n == p) as u8 as f64, vec![v; 3]).unwrap(),
        )
        .unwrap();
        let chain = BeliefChain::from_parts(&m, vec![0], vec![one_hot(1, 3).unwrap()], vec![], vec![]).unwrap();
        let mut tree = PlanTree::new();
        tree.add_children(0, 1, 3, 3).unwrap();
        let s = update_future_state(&chain, &tree, 1, &m).unwrap();
        assert!(close(&s, &[0.0, 1.0, 0.0], 1e-12));
        assert!(update_future_state(&chain, &tree, 0, &m).is_err());
    }

    #[test]
    fn sweep_counts() {
        let m = uniform_model(2, 2);
        let mut chain = BeliefChain::new(&m, 0).unwrap();
        let mut tree = PlanTree::new();
        let kids = tree.add_children(0, 2, 2, 2).unwrap();
        let targets: Vec<Target> = kids.iter().map(|k| Target::FutureNode(*k)).collect();
        assert_eq!(run_vmp(&mut chain, &mut tree, &m, &targets, VmpSettings::default()).unwrap(), 1);

        let m = identity_model(2, 2);
        let mut chain = BeliefChain::new(&m, 0).unwrap();
        let mut tree = PlanTree::new();
        run_vmp(&mut chain, &mut tree, &m, &[Target::PastState(0)], VmpSettings::default()).unwrap();
        assert_eq!(run_vmp(&mut chain, &mut tree, &m, &[Target::PastState(0)], VmpSettings::default()).unwrap(), 1);
        let kids = tree.add_children(0, 2, 2, 2).unwrap();
        let targets: Vec<Target> = kids.iter().map(|k| Target::FutureNode(*k)).collect();
        let sweeps = run_vmp(&mut chain, &mut tree, &m, &targets, VmpSettings::default()).unwrap();
        assert!(sweeps <= 3, "{sweeps} sweeps");
        assert!(close(&tree.node(kids[0]).state, &[1.0, 0.0], 1e-12));
        assert!(close(&tree.node(kids[1]).state, &[0.0, 1.0], 1e-12));
        assert!(close(&tree.node(kids[1]).obs, &[0.0, 1.0], 1e-12));
    }

    #[test]
    fn deterministic_model_matches_exact_smoothing() {
        // Enumerate every state sequence and condition on the observations.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 2..=4 {
            for t in 0..=4 {
                let nu = 2;
                let m = identity_model(n, nu);
                let us: Vec<usize> = (0..t).map(|_| rng.random_range(0..nu)).collect();
                let s0 = rng.random_range(0..n);
                let mut obs = vec![s0];
                for u in &us {
                    obs.push((obs.last().unwrap() + u) % n);
                }
                let mut chain = BeliefChain::new(&m, obs[0]).unwrap();
                let mut tree = PlanTree::new();
                for (k, u) in us.iter().enumerate() {
                    integrate_step_for_test(&mut chain, &mut tree, &m, *u, obs[k + 1]);
                }
                let targets = chain_targets(&chain);
                run_vmp(&mut chain, &mut tree, &m, &targets, VmpSettings::default()).unwrap();
                let mut marg = vec![vec![0.0; n]; t + 1];
                let mut z = 0.0;
                for code in 0..n.pow((t + 1) as u32) {
                    let seq: Vec<usize> = (0..=t).map(|k| code / n.pow(k as u32) % n).collect();
                    let mut p = 1.0 / n as f64;
                    for k in 0..=t {
                        p *= (seq[k] == obs[k]) as u8 as f64;
                        if k > 0 {
                            p *= (seq[k] == (seq[k - 1] + us[k - 1]) % n) as u8 as f64;
                        }
                    }
                    z += p;
                    for k in 0..=t {
                        marg[k][seq[k]] += p;
                    }
                }
                for k in 0..=t {
                    let exact: Vec<f64> = marg[k].iter().map(|x| x / z).collect();
                    assert!(close(chain.state(k), &exact, 1e-9), "n={n} t={t} k={k}");
                }
            }
        }
    }

    fn integrate_step_for_test(chain: &mut BeliefChain, tree: &mut PlanTree, m: &Model, u: usize, o: usize) {
        crate::model::integrate_step(chain, tree, m, u, o).unwrap();
    }

    fn all_targets(chain: &BeliefChain, tree: &PlanTree) -> Vec<Target> {
        let mut t = chain_targets(chain);
        t.extend((1..tree.len()).map(Target::FutureNode));
        t
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn free_energy_never_increases_across_sweeps(seed in any::<u64>(), ns in 2usize..=3, t in 0usize..=3, k in 0usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng, ns, ns, 2);
            let mut chain = random_chain(&mut rng, &m, t, seed % 2 == 0);
            let mut tree = random_tree(&mut rng, &m, k);
            let targets = all_targets(&chain, &tree);
            let one = VmpSettings { tolerance: 0.0, max_sweeps: 1 };
            let mut f = free_energy(&chain, &tree, &m);
            for _ in 0..30 {
                run_vmp(&mut chain, &mut tree, &m, &targets, one).unwrap();
                let g = free_energy(&chain, &tree, &m);
                prop_assert!(g <= f + 1e-9 * f.abs().max(1.0), "{} -> {}", f, g);
                f = g;
            }
        }

        #[test]
        fn every_update_is_normalized_and_idempotent(seed in any::<u64>(), ns in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng, ns + 1, ns, 3);
            let mut chain = random_chain(&mut rng, &m, 2, false);
            let mut tree = random_tree(&mut rng, &m, 3);
            let norm = |q: &[f64]| (q.iter().sum::<f64>() - 1.0).abs() < 1e-9 && q.iter().all(|x| *x >= 0.0);
            for tau in 0..=2 {
                let q = update_past_state(&chain, Some(&tree), &m, tau).unwrap();
                prop_assert!(norm(&q));
                chain.set_state(tau, q.clone());
                prop_assert!(close(&update_past_state(&chain, Some(&tree), &m, tau).unwrap(), &q, 1e-12));
            }
            for tau in 0..2 {
                let q = update_past_action(&chain, &m, tau).unwrap().unwrap();
                prop_assert!(norm(&q));
                chain.set_action(tau, q.clone());
                prop_assert!(close(&update_past_action(&chain, &m, tau).unwrap().unwrap(), &q, 1e-12));
            }
            for id in 1..tree.len() {
                let s = update_future_state(&chain, &tree, id, &m).unwrap();
                prop_assert!(norm(&s));
                tree.node_mut(id).state = s.clone();
                prop_assert!(close(&update_future_state(&chain, &tree, id, &m).unwrap(), &s, 1e-12));
                let e = update_future_obs(&tree, id, &m);
                prop_assert!(norm(&e));
                tree.node_mut(id).obs = e.clone();
                prop_assert!(close(&update_future_obs(&tree, id, &m), &e, 1e-12));
            }
        }
    }
}
