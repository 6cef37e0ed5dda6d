use rand::{Rng, RngCore};

use super::Agent;
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, LowRankMdp, Policy, PolicyRule, StochasticPolicy};
use crate::scalar::Scalar;

/// Plays a fixed deterministic policy and never learns; with the optimal
/// policy this is the zero-regret oracle.
#[derive(Debug, Clone)]
pub struct FixedPolicyAgent {
    policy: Policy,
    horizon: usize,
    k: usize,
}

impl FixedPolicyAgent {
    pub fn new(policy: Policy) -> Self {
        let horizon = policy.horizon();
        Self { policy, horizon, k: 1 }
    }
}

impl<T: Scalar> Agent<T> for FixedPolicyAgent {
    fn name(&self) -> &'static str {
        "fixed"
    }
    fn episode(&self) -> usize {
        self.k
    }
    fn plan(&mut self, _rng: &mut dyn RngCore) -> Result<()> {
        Ok(())
    }
    fn act(&self, t: usize, s: usize, _rng: &mut dyn RngCore) -> Result<usize> {
        if t >= self.horizon || s >= self.policy.num_states() {
            return Err(Error::invalid(format!("(t={t}, s={s}) out of range")));
        }
        Ok(self.policy.action(t, s))
    }
    fn observe(&mut self, t: usize, _s: usize, _a: usize, _r: T, _s_next: usize) -> Result<()> {
        if t + 1 == self.horizon {
            self.k += 1;
        }
        Ok(())
    }
    fn policy_rule(&self) -> PolicyRule<T> {
        PolicyRule::Deterministic(self.policy.clone())
    }
    fn check_compatible(&self, mdp: &LowRankMdp<T>) -> Result<()> {
        if self.horizon != mdp.horizon() || self.policy.num_states() != mdp.num_states() {
            return Err(Error::invalid("fixed policy shape does not match the MDP"));
        }
        evaluate_policy(mdp, &self.policy).map(|_| ())
    }
}

/// Picks actions uniformly at random.
#[derive(Debug, Clone)]
pub struct UniformRandomAgent {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    k: usize,
}

impl UniformRandomAgent {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            k: 1,
        }
    }
}

impl<T: Scalar> Agent<T> for UniformRandomAgent {
    fn name(&self) -> &'static str {
        "uniform"
    }
    fn episode(&self) -> usize {
        self.k
    }
    fn plan(&mut self, _rng: &mut dyn RngCore) -> Result<()> {
        Ok(())
    }
    fn act(&self, _t: usize, _s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(rng.random_range(0..self.num_actions))
    }
    fn observe(&mut self, t: usize, _s: usize, _a: usize, _r: T, _s_next: usize) -> Result<()> {
        if t + 1 == self.horizon {
            self.k += 1;
        }
        Ok(())
    }
    fn policy_rule(&self) -> PolicyRule<T> {
        PolicyRule::Stochastic(StochasticPolicy::uniform(self.horizon, self.num_states, self.num_actions))
    }
    fn check_compatible(&self, mdp: &LowRankMdp<T>) -> Result<()> {
        if (self.horizon, self.num_states, self.num_actions) != (mdp.horizon(), mdp.num_states(), mdp.num_actions()) {
            return Err(Error::invalid("uniform agent shape does not match the MDP"));
        }
        Ok(())
    }
}
