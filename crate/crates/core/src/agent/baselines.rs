//! Reference LSVI agents without pseudonoise: a bonus-driven optimistic agent,
//! a purely greedy one, and an epsilon-greedy one.

use rand::{Rng, RngCore};

use super::{Agent, LsviCore};
use crate::error::{Error, Result};
use crate::mdp::{dp_argmax, FeatureMap, LowRankMdp, Policy, PolicyRule, StochasticPolicy};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Ucb,
    Greedy,
    EpsilonGreedy,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Ucb => "ucb",
            BaselineKind::Greedy => "greedy",
            BaselineKind::EpsilonGreedy => "epsilon_greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig<T> {
    pub kind: BaselineKind,
    /// Multiplier on the `‖phi‖_{Sigma^{-1}}` bonus (UCB only).
    pub bonus_scale: T,
    /// Probability of a uniformly random action (epsilon-greedy only).
    pub epsilon_explore: T,
    pub lambda: T,
    /// Clip every `Q` to `[0, H - t]`.
    pub clip_high: bool,
}

impl<T: Scalar> BaselineConfig<T> {
    pub fn greedy() -> Self {
        Self {
            kind: BaselineKind::Greedy,
            bonus_scale: T::zero(),
            epsilon_explore: T::zero(),
            lambda: T::one(),
            clip_high: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.bonus_scale >= T::zero()) {
            return Err(Error::invalid("bonus_scale must be nonnegative"));
        }
        if !(self.epsilon_explore >= T::zero() && self.epsilon_explore <= T::one()) {
            return Err(Error::invalid("epsilon_explore must lie in [0, 1]"));
        }
        if !(self.lambda > T::zero()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineAgent<T> {
    core: LsviCore<T>,
    config: BaselineConfig<T>,
    theta_hat: Vec<Vec<T>>,
    /// Acting `Q` flattened `[t][s][a]`.
    q: Vec<T>,
    planned_for: usize,
}

impl<T: Scalar> BaselineAgent<T> {
    pub fn new(features: FeatureMap<T>, config: BaselineConfig<T>) -> Result<Self> {
        config.check()?;
        Ok(Self {
            core: LsviCore::new(features, config.lambda)?,
            config,
            theta_hat: Vec::new(),
            q: Vec::new(),
            planned_for: 0,
        })
    }

    pub fn core(&self) -> &LsviCore<T> {
        &self.core
    }

    pub fn config(&self) -> &BaselineConfig<T> {
        &self.config
    }

    pub fn theta_hat(&self) -> &[Vec<T>] {
        &self.theta_hat
    }

    pub fn q_values(&self, t: usize, s: usize) -> &[T] {
        let f = self.core.features();
        let base = (t * f.num_states() + s) * f.num_actions();
        &self.q[base..base + f.num_actions()]
    }

    fn check_planned(&self) -> Result<()> {
        if self.planned_for != self.core.episode() {
            return Err(Error::ProtocolViolation(format!(
                "episode {} has not been planned",
                self.core.episode()
            )));
        }
        Ok(())
    }

    fn greedy_policy(&self) -> Policy {
        let f = self.core.features();
        Policy::from_fn(f.horizon(), f.num_states(), |t, s| dp_argmax(self.q_values(t, s)))
    }
}

impl<T: Scalar> Agent<T> for BaselineAgent<T> {
    fn name(&self) -> &'static str {
        self.config.kind.as_str()
    }

    fn episode(&self) -> usize {
        self.core.episode()
    }

    fn plan(&mut self, _rng: &mut dyn RngCore) -> Result<()> {
        let f = self.core.features();
        let (h, s_n, a_n) = (f.horizon(), f.num_states(), f.num_actions());
        let mut q = vec![T::zero(); h * s_n * a_n];
        let mut v = vec![T::zero(); h * s_n];
        let mut theta_hat = vec![Vec::new(); h];
        let bonus = match self.config.kind {
            BaselineKind::Ucb => self.config.bonus_scale,
            _ => T::zero(),
        };
        for t in (0..h).rev() {
            let v_next = (t + 1 < h).then(|| &v[(t + 1) * s_n..(t + 2) * s_n]);
            let theta = self.core.ridge(t, v_next)?;
            let design = self.core.design(t);
            let cap = T::from_usize_lossy(h - t);
            for s in 0..s_n {
                let base = (t * s_n + s) * a_n;
                for a in 0..a_n {
                    let phi = f.phi(t, s, a);
                    let mut value = dot(phi, &theta);
                    if bonus > T::zero() {
                        value += bonus * design.inverse_norm_unchecked(phi);
                    }
                    if self.config.clip_high {
                        value = value.max(T::zero()).min(cap);
                    }
                    q[base + a] = value;
                }
                let row = &q[base..base + a_n];
                v[t * s_n + s] = row[dp_argmax(row)];
            }
            theta_hat[t] = theta;
        }
        self.theta_hat = theta_hat;
        self.q = q;
        self.planned_for = self.core.episode();
        Ok(())
    }

    fn act(&self, t: usize, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        self.check_planned()?;
        let f = self.core.features();
        if t >= f.horizon() || s >= f.num_states() {
            return Err(Error::invalid(format!("(t={t}, s={s}) out of range")));
        }
        if self.config.kind == BaselineKind::EpsilonGreedy
            && rng.random::<f64>() < self.config.epsilon_explore.as_f64()
        {
            return Ok(rng.random_range(0..f.num_actions()));
        }
        Ok(dp_argmax(self.q_values(t, s)))
    }

    fn observe(&mut self, t: usize, s: usize, a: usize, r: T, s_next: usize) -> Result<()> {
        self.core.observe(t, s, a, r, s_next)
    }

    fn policy_rule(&self) -> PolicyRule<T> {
        let f = self.core.features();
        if self.planned_for != self.core.episode() {
            return PolicyRule::Deterministic(Policy::constant(f.horizon(), f.num_states(), 0));
        }
        let greedy = self.greedy_policy();
        match self.config.kind {
            BaselineKind::EpsilonGreedy if self.config.epsilon_explore > T::zero() => PolicyRule::Stochastic(
                StochasticPolicy::epsilon_greedy(&greedy, f.num_actions(), self.config.epsilon_explore),
            ),
            _ => PolicyRule::Deterministic(greedy),
        }
    }

    fn initial_value(&self, s: usize) -> Option<T> {
        if self.planned_for != self.core.episode() {
            return None;
        }
        let row = self.q_values(0, s);
        Some(row[dp_argmax(row)])
    }

    fn feature_norm(&self, t: usize, s: usize, a: usize) -> Option<T> {
        Some(self.core.design(t).inverse_norm_unchecked(self.core.features().phi(t, s, a)))
    }

    fn check_compatible(&self, mdp: &LowRankMdp<T>) -> Result<()> {
        self.core.check_compatible(mdp)
    }

    fn memory_bytes(&self) -> usize {
        self.core.memory_bytes() + self.q.len() * std::mem::size_of::<T>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{generate_mixture_mdp, FeatureMap, InitialState, LowRankMdp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Deterministic 2-state, 2-action, H = 2 instance. Only the path
    /// `s0 --a1--> s1 --a0-->` pays (reward 1 at the second step).
    fn rewarding_path() -> LowRankMdp<f64> {
        let features = FeatureMap::one_hot(2, 2, 2).unwrap();
        let d = 4;
        let mut psi = vec![0.0; 2 * 2 * d];
        let mut theta = vec![0.0; 2 * d];
        // t = 0: (s0,a0)->s0, (s0,a1)->s1, (s1,*)->s1
        let next0 = [0, 1, 1, 1];
        // t = 1: everything stays; reward 1 only for (s1, a0)
        let next1 = [0, 1, 1, 1];
        for j in 0..d {
            psi[next0[j] * d + j] = 1.0;
            psi[(2 + next1[j]) * d + j] = 1.0;
        }
        theta[d + 2] = 1.0;
        LowRankMdp::from_factors(features, psi, theta, InitialState::Fixed(0)).unwrap()
    }

    fn play(agent: &mut BaselineAgent<f64>, mdp: &LowRankMdp<f64>, actions: &[usize]) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        agent.plan(&mut rng).unwrap();
        let mut s = 0;
        for (t, &a) in actions.iter().enumerate() {
            let (sn, r) = mdp.step(t, s, a, &mut rng).unwrap();
            agent.observe(t, s, a, r, sn).unwrap();
            s = sn;
        }
    }

    #[test]
    fn greedy_replays_observed_rewarding_path() {
        let mdp = rewarding_path();
        let mut agent = BaselineAgent::new(mdp.features().clone(), BaselineConfig::greedy()).unwrap();
        play(&mut agent, &mdp, &[1, 0]);
        agent.plan(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Fitted Q: step 1 (s1, a0) = 1/2, step 0 (s0, a1) = (0 + 1/2)/2.
        assert_eq!(agent.act(0, 0, &mut rng).unwrap(), 1);
        assert_eq!(agent.act(1, 1, &mut rng).unwrap(), 0);
        assert!((agent.q_values(1, 1)[0] - 0.5).abs() < 1e-12);
        assert!((agent.q_values(0, 0)[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_bonus_ucb_equals_greedy() {
        let mdp = generate_mixture_mdp::<f64>(5, 3, 3, 2, 6).unwrap();
        let mut greedy = BaselineAgent::new(mdp.features().clone(), BaselineConfig::greedy()).unwrap();
        let mut ucb = BaselineAgent::new(
            mdp.features().clone(),
            BaselineConfig {
                kind: BaselineKind::Ucb,
                ..BaselineConfig::greedy()
            },
        )
        .unwrap();
        for k in 0..5 {
            let actions = [k % 3, (k + 1) % 3, 2];
            play(&mut greedy, &mdp, &actions);
            play(&mut ucb, &mdp, &actions);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        greedy.plan(&mut rng).unwrap();
        ucb.plan(&mut rng).unwrap();
        assert_eq!(greedy.q, ucb.q);
        assert_eq!(greedy.theta_hat, ucb.theta_hat);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mdp = generate_mixture_mdp::<f64>(4, 4, 2, 2, 1).unwrap();
        let cfg = BaselineConfig {
            kind: BaselineKind::EpsilonGreedy,
            epsilon_explore: 1.0,
            ..BaselineConfig::greedy()
        };
        let mut agent = BaselineAgent::new(mdp.features().clone(), cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        agent.plan(&mut rng).unwrap();
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[agent.act(0, 1, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn clipping_bounds_q() {
        let mdp = generate_mixture_mdp::<f64>(5, 2, 3, 2, 2).unwrap();
        let cfg = BaselineConfig {
            kind: BaselineKind::Ucb,
            bonus_scale: 50.0,
            clip_high: true,
            ..BaselineConfig::greedy()
        };
        let mut agent = BaselineAgent::new(mdp.features().clone(), cfg).unwrap();
        agent.plan(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for t in 0..3 {
            for s in 0..5 {
                for &q in agent.q_values(t, s) {
                    assert!((0.0..=(3 - t) as f64).contains(&q));
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = BaselineConfig {
            epsilon_explore: 1.5,
            ..BaselineConfig::<f64>::greedy()
        };
        assert!(bad.check().is_err());
        let bad = BaselineConfig {
            bonus_scale: -1.0,
            ..BaselineConfig::<f64>::greedy()
        };
        assert!(bad.check().is_err());
    }
}
