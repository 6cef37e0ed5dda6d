//! Exact backward dynamic programming.

use super::{validate, LowRankMdp};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Deterministic nonstationary decision rule, one action per `(t, s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    num_states: usize,
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(horizon: usize, num_states: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::invalid(format!(
                "policy needs {} entries, got {}",
                horizon * num_states,
                actions.len()
            )));
        }
        Ok(Self { num_states, actions })
    }

    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            num_states,
            actions: vec![action; horizon * num_states],
        }
    }

    pub fn from_fn(horizon: usize, num_states: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut actions = Vec::with_capacity(horizon * num_states);
        for t in 0..horizon {
            for s in 0..num_states {
                actions.push(f(t, s));
            }
        }
        Self { num_states, actions }
    }

    #[inline]
    pub fn action(&self, t: usize, s: usize) -> usize {
        self.actions[t * self.num_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len() / self.num_states.max(1)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn actions_at(&self, t: usize) -> &[usize] {
        &self.actions[t * self.num_states..(t + 1) * self.num_states]
    }
}

/// Randomized nonstationary policy: a distribution over actions per `(t, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy<T> {
    num_states: usize,
    num_actions: usize,
    probs: Vec<T>,
}

impl<T: Scalar> StochasticPolicy<T> {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, probs: Vec<T>) -> Result<Self> {
        if probs.len() != horizon * num_states * num_actions {
            return Err(Error::invalid("stochastic policy table has the wrong size"));
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = T::from_usize_lossy(num_actions).recip();
        Self {
            num_states,
            num_actions,
            probs: vec![p; horizon * num_states * num_actions],
        }
    }

    /// `(1 - explore)` mass on the deterministic rule plus `explore` spread uniformly.
    pub fn epsilon_greedy(policy: &Policy, num_actions: usize, explore: T) -> Self {
        let horizon = policy.horizon();
        let num_states = policy.num_states();
        let spread = explore / T::from_usize_lossy(num_actions);
        let mut probs = vec![spread; horizon * num_states * num_actions];
        for t in 0..horizon {
            for s in 0..num_states {
                probs[(t * num_states + s) * num_actions + policy.action(t, s)] += T::one() - explore;
            }
        }
        Self {
            num_states,
            num_actions,
            probs,
        }
    }

    #[inline]
    pub fn probs(&self, t: usize, s: usize) -> &[T] {
        let start = (t * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }
}

/// What an agent executes in an episode, for exact evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyRule<T> {
    Deterministic(Policy),
    Stochastic(StochasticPolicy<T>),
}

/// Tables of `Q`, `V` and the action attaining (or taken at) each `(t, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables<T> {
    num_states: usize,
    num_actions: usize,
    q: Vec<T>,
    v: Vec<T>,
    policy: Policy,
}

impl<T: Scalar> ValueTables<T> {
    #[inline]
    pub fn q(&self, t: usize, s: usize, a: usize) -> T {
        self.q[(t * self.num_states + s) * self.num_actions + a]
    }

    #[inline]
    pub fn v(&self, t: usize, s: usize) -> T {
        self.v[t * self.num_states + s]
    }

    /// For optimal tables the greedy rule; for evaluated policies the rule
    /// that was evaluated (argmax of `Q` for stochastic ones).
    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn q_row(&self, t: usize, s: usize) -> &[T] {
        let start = (t * self.num_states + s) * self.num_actions;
        &self.q[start..start + self.num_actions]
    }

    /// `V_t(s)` at every state for step `t`; `t == horizon` is the zero terminal.
    pub fn v_at(&self, t: usize) -> &[T] {
        &self.v[t * self.num_states..(t + 1) * self.num_states]
    }

    /// Expected initial value under the MDP's start-state law.
    pub fn initial_value(&self, mdp: &LowRankMdp<T>) -> T {
        match mdp.initial_state() {
            super::InitialState::Fixed(s) => self.v(0, *s),
            super::InitialState::Distribution(p) => dot(p, self.v_at(0)),
        }
    }
}

/// Lowest index attaining the maximum.
pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (a, &x) in values.iter().enumerate().skip(1) {
        if x > values[best] {
            best = a;
        }
    }
    best
}

fn backward<T: Scalar>(
    mdp: &LowRankMdp<T>,
    mut pick: impl FnMut(usize, usize, &[T]) -> (T, usize),
) -> ValueTables<T> {
    let (h, s_n, a_n) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut q = vec![T::zero(); h * s_n * a_n];
    // One extra block for the terminal V_{H} = 0.
    let mut v = vec![T::zero(); (h + 1) * s_n];
    let mut actions = vec![0usize; h * s_n];
    for t in (0..h).rev() {
        let (head, tail) = v.split_at_mut((t + 1) * s_n);
        let v_next = &tail[..s_n];
        for s in 0..s_n {
            let q_row = &mut q[(t * s_n + s) * a_n..(t * s_n + s + 1) * a_n];
            for (a, qa) in q_row.iter_mut().enumerate() {
                *qa = mdp.reward(t, s, a) + dot(mdp.transition_row(t, s, a), v_next);
            }
            let (value, action) = pick(t, s, q_row);
            head[t * s_n + s] = value;
            actions[t * s_n + s] = action;
        }
    }
    ValueTables {
        num_states: s_n,
        num_actions: a_n,
        q,
        v,
        policy: Policy {
            num_states: s_n,
            actions,
        },
    }
}

/// Optimal `Q*`, `V*` and the greedy optimal policy (ties to the lowest action).
pub fn compute_optimal<T: Scalar>(mdp: &LowRankMdp<T>) -> Result<ValueTables<T>> {
    let report = validate(mdp);
    if report.has_hard_violations() {
        let first = report.violations.iter().find(|v| v.kind.is_hard()).unwrap();
        return Err(Error::PreconditionViolation(format!("MDP fails validation: {first}")));
    }
    Ok(backward(mdp, |_, _, q_row| {
        let a = argmax(q_row);
        (q_row[a], a)
    }))
}

/// Exact value of a deterministic nonstationary policy.
pub fn evaluate_policy<T: Scalar>(mdp: &LowRankMdp<T>, policy: &Policy) -> Result<ValueTables<T>> {
    if policy.num_states() != mdp.num_states() || policy.horizon() != mdp.horizon() {
        return Err(Error::invalid("policy shape does not match the MDP"));
    }
    if let Some(&bad) = policy.actions.iter().find(|&&a| a >= mdp.num_actions()) {
        return Err(Error::invalid(format!(
            "policy action {bad} out of range 0..{}",
            mdp.num_actions()
        )));
    }
    Ok(backward(mdp, |t, s, q_row| {
        let a = policy.action(t, s);
        (q_row[a], a)
    }))
}

/// Exact value of a randomized nonstationary policy.
pub fn evaluate_stochastic_policy<T: Scalar>(
    mdp: &LowRankMdp<T>,
    policy: &StochasticPolicy<T>,
) -> Result<ValueTables<T>> {
    if policy.num_states != mdp.num_states()
        || policy.num_actions != mdp.num_actions()
        || policy.probs.len() != mdp.horizon() * mdp.num_states() * mdp.num_actions()
    {
        return Err(Error::invalid("stochastic policy shape does not match the MDP"));
    }
    Ok(backward(mdp, |t, s, q_row| (dot(policy.probs(t, s), q_row), argmax(q_row))))
}

impl<T: Scalar> PolicyRule<T> {
    pub fn evaluate(&self, mdp: &LowRankMdp<T>) -> Result<ValueTables<T>> {
        match self {
            PolicyRule::Deterministic(p) => evaluate_policy(mdp, p),
            PolicyRule::Stochastic(p) => evaluate_stochastic_policy(mdp, p),
        }
    }
}
