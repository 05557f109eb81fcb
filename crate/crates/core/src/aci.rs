//! Exhaustive active inference baseline: scores every action sequence of a
//! fixed horizon by its expected free energy.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::math::{kl_unchecked, softmax};
use crate::model::{Model, Preferences};

/// Default memory cap: 16 GiB.
pub const DEFAULT_MEMORY_CAP_BYTES: u128 = 16 << 30;

/// `|U|^H`, or `None` on overflow.
pub fn policy_count(horizon: usize, num_actions: usize) -> Option<u128> {
    (num_actions as u128).checked_pow(u32::try_from(horizon).ok()?)
}

/// Lexicographic iterator over all action sequences of a given length.
#[derive(Clone, Debug)]
pub struct Policies {
    horizon: usize,
    num_actions: usize,
    count: u128,
    next: u128,
}

impl Policies {
    pub fn total(&self) -> u128 {
        self.count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The `index`-th sequence in lexicographic order.
    pub fn nth_policy(&self, index: u128) -> Vec<usize> {
        let base = self.num_actions as u128;
        let mut rest = index;
        let mut out = vec![0; self.horizon];
        for slot in out.iter_mut().rev() {
            *slot = (rest % base) as usize;
            rest /= base;
        }
        out
    }
}

impl Iterator for Policies {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        (self.next < self.count).then(|| {
            self.next += 1;
            self.nth_policy(self.next - 1)
        })
    }
}

/// All `|U|^H` policies. Fails with a budget error above `max_policies`.
pub fn enumerate_policies(horizon: usize, num_actions: usize, max_policies: Option<u128>) -> Result<Policies> {
    if horizon == 0 || num_actions == 0 {
        return Err(invalid("horizon and action count must be positive"));
    }
    let count = policy_count(horizon, num_actions).ok_or_else(|| invalid("policy count overflows"))?;
    if let Some(cap) = max_policies {
        if count > cap {
            let row = (horizon * std::mem::size_of::<usize>()) as u128;
            return Err(Error::BudgetExceeded {
                policies: count,
                required_bytes: count * row,
                cap_bytes: cap * row,
            });
        }
    }
    Ok(Policies {
        horizon,
        num_actions,
        count,
        next: 0,
    })
}

/// Bytes needed to keep per-policy state beliefs for every one of the
/// `H + 1` time points, as seen from each of the `H + 1` time points.
pub fn memory_requirement(policies: u128, horizon: usize, num_states: usize) -> u128 {
    let t = horizon as u128 + 1;
    policies * t * t * num_states as u128 * std::mem::size_of::<f64>() as u128
}

/// Risk plus ambiguity of the beliefs predicted under `policy` from `state`.
pub fn policy_efe(policy: &[usize], model: &Model, prefs: &Preferences, state: &[f64]) -> f64 {
    let mut s = state.to_vec();
    let mut total = 0.0;
    for u in policy {
        s = model.predict_state(&s, *u);
        total += step_cost(model, prefs, &s);
    }
    total
}

fn step_cost(model: &Model, prefs: &Preferences, s: &[f64]) -> f64 {
    let o = model.predict_obs(s);
    let ambiguity: f64 = s.iter().zip(model.likelihood_entropy()).map(|(p, h)| p * h).sum();
    kl_unchecked(&o, &prefs.c_o) + ambiguity
}

#[derive(Clone, Debug, PartialEq)]
pub struct AciDecision {
    pub action: usize,
    /// Posterior mass of each first action.
    pub first_action_probs: Vec<f64>,
    pub policies: u128,
    /// Size of the belief table actually allocated for the rollouts.
    pub allocated_bytes: usize,
}

/// Enumerates every policy, weighs them by `σ(−EFE)` and returns the most
/// probable first action. The memory estimate is checked before allocating.
pub fn aci_select_action(
    model: &Model,
    prefs: &Preferences,
    state: &[f64],
    horizon: usize,
    memory_cap_bytes: u128,
) -> Result<AciDecision> {
    if state.len() != model.num_states() {
        return Err(invalid("state belief has the wrong size"));
    }
    let policies = enumerate_policies(horizon, model.num_actions(), None)?;
    let count = policies.total();
    let required = memory_requirement(count, horizon, model.num_states());
    if required > memory_cap_bytes {
        return Err(Error::BudgetExceeded {
            policies: count,
            required_bytes: required,
            cap_bytes: memory_cap_bytes,
        });
    }
    let n = usize::try_from(count).map_err(|_| invalid("too many policies for this platform"))?;
    let ns = model.num_states();
    let mut beliefs = vec![0.0; n * (horizon + 1) * ns];
    let efe: Vec<f64> = beliefs
        .par_chunks_mut((horizon + 1) * ns)
        .enumerate()
        .map(|(i, table)| {
            let policy = policies.nth_policy(i as u128);
            table[..ns].copy_from_slice(state);
            for (tau, u) in policy.iter().enumerate() {
                let (past, future) = table.split_at_mut((tau + 1) * ns);
                future[..ns].copy_from_slice(&model.predict_state(&past[tau * ns..], *u));
            }
            table[ns..].chunks(ns).map(|s| step_cost(model, prefs, s)).sum::<f64>()
        })
        .collect();
    let neg: Vec<f64> = efe.iter().map(|g| -g).collect();
    let posterior = softmax(&neg, 1.0)?;
    let nu = model.num_actions();
    let block = n / nu;
    let first_action_probs: Vec<f64> = (0..nu).map(|u| posterior[u * block..(u + 1) * block].iter().sum()).collect();
    Ok(AciDecision {
        action: crate::math::argmax(&first_action_probs),
        first_action_probs,
        policies: count,
        allocated_bytes: beliefs.len() * std::mem::size_of::<f64>(),
    })
}
