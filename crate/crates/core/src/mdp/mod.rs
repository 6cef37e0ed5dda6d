//! Finite-horizon tabular MDPs with an explicit low-rank factorization.
//!
//! Timesteps are zero-based throughout: `t ∈ 0..horizon`, and the value at
//! step `t` lies in `[0, horizon - t]`.

mod dp;
mod generate;
mod io;
mod validate;

pub(crate) use dp::argmax as dp_argmax;
pub use dp::{compute_optimal, evaluate_policy, evaluate_stochastic_policy, Policy, PolicyRule, StochasticPolicy, ValueTables};
pub use generate::{generate_hard_chain, generate_mixture_mdp, perturb_rewards, perturb_transitions, CHAIN_ACTIONS};
pub use io::{read_mdp, write_mdp, MdpFile, MDP_FORMAT, MDP_SCHEMA_VERSION};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Scalar};

/// Per-timestep embedding `phi_t(s, a) ∈ R^d` of a finite state-action space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
    /// Flattened `[t][s][a][j]`.
    phi: Vec<T>,
    l_phi: T,
}

impl<T: Scalar> FeatureMap<T> {
    /// Builds a feature map and sets `l_phi` to the largest feature norm.
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, dim: usize, phi: Vec<T>) -> Result<Self> {
        let mut fm = Self::with_bound(num_states, num_actions, horizon, dim, phi, T::one())?;
        let max_norm = fm.max_norm();
        fm.l_phi = if max_norm > T::zero() { max_norm } else { T::one() };
        Ok(fm)
    }

    /// Builds a feature map with an explicitly declared norm bound.
    pub fn with_bound(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        dim: usize,
        phi: Vec<T>,
        l_phi: T,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "feature map sizes must be positive (S={num_states}, A={num_actions}, H={horizon}, d={dim})"
            )));
        }
        let expected = horizon * num_states * num_actions * dim;
        if phi.len() != expected {
            return Err(Error::invalid(format!(
                "feature table needs {expected} entries, got {}",
                phi.len()
            )));
        }
        if !(l_phi > T::zero()) {
            return Err(Error::invalid("feature norm bound must be positive"));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            dim,
            phi,
            l_phi,
        })
    }

    /// One-hot features over `(s, a)`, identical at every timestep; `d = S * A`.
    pub fn one_hot(num_states: usize, num_actions: usize, horizon: usize) -> Result<Self> {
        let dim = num_states * num_actions;
        let mut phi = vec![T::zero(); horizon * dim * dim];
        for t in 0..horizon {
            for idx in 0..dim {
                phi[(t * dim + idx) * dim + idx] = T::one();
            }
        }
        Self::with_bound(num_states, num_actions, horizon, dim, phi, T::one())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn l_phi(&self) -> T {
        self.l_phi
    }
    pub fn raw(&self) -> &[T] {
        &self.phi
    }

    #[inline]
    pub fn phi(&self, t: usize, s: usize, a: usize) -> &[T] {
        let start = ((t * self.num_states + s) * self.num_actions + a) * self.dim;
        &self.phi[start..start + self.dim]
    }

    pub fn max_norm(&self) -> T {
        self.phi
            .chunks_exact(self.dim)
            .map(norm2)
            .fold(T::zero(), T::max)
    }
}

/// How the start state of each episode is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState<T> {
    Fixed(usize),
    Distribution(Vec<T>),
}

/// Tabular MDP with features `phi`, factors `psi`, `theta_r`, and the exact
/// transition and reward tables.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankMdp<T> {
    pub(crate) features: FeatureMap<T>,
    /// Flattened `[t][s'][j]`: `psi_t(s') ∈ R^d`.
    pub(crate) psi: Vec<T>,
    /// Flattened `[t][j]`.
    pub(crate) theta_r: Vec<T>,
    /// Flattened `[t][s][a][s']`.
    pub(crate) transition: Vec<T>,
    /// Flattened `[t][s][a]`.
    pub(crate) reward: Vec<T>,
    pub(crate) epsilon: T,
    pub(crate) l_psi: T,
    pub(crate) l_r: T,
    pub(crate) initial_state: InitialState<T>,
}

impl<T: Scalar> LowRankMdp<T> {
    /// Exact low-rank instance: transitions `phi^T psi` and rewards `phi^T theta_r`.
    pub fn from_factors(
        features: FeatureMap<T>,
        psi: Vec<T>,
        theta_r: Vec<T>,
        initial_state: InitialState<T>,
    ) -> Result<Self> {
        let (h, s_n, a_n, d) = (
            features.horizon(),
            features.num_states(),
            features.num_actions(),
            features.dim(),
        );
        check_len("psi", psi.len(), h * s_n * d)?;
        check_len("theta_r", theta_r.len(), h * d)?;
        let mut transition = vec![T::zero(); h * s_n * a_n * s_n];
        let mut reward = vec![T::zero(); h * s_n * a_n];
        for t in 0..h {
            let theta = &theta_r[t * d..(t + 1) * d];
            for s in 0..s_n {
                for a in 0..a_n {
                    let phi = features.phi(t, s, a);
                    let idx = (t * s_n + s) * a_n + a;
                    reward[idx] = dot(phi, theta);
                    for sp in 0..s_n {
                        let psi_sp = &psi[(t * s_n + sp) * d..(t * s_n + sp + 1) * d];
                        transition[idx * s_n + sp] = dot(phi, psi_sp);
                    }
                }
            }
        }
        Self::from_parts(features, psi, theta_r, transition, reward, T::zero(), initial_state)
    }

    /// Assembles an instance from all tables. `epsilon` is the declared
    /// misspecification bound; [`validate`] checks it against the residuals.
    pub fn from_parts(
        features: FeatureMap<T>,
        psi: Vec<T>,
        theta_r: Vec<T>,
        transition: Vec<T>,
        reward: Vec<T>,
        epsilon: T,
        initial_state: InitialState<T>,
    ) -> Result<Self> {
        let (h, s_n, a_n, d) = (
            features.horizon(),
            features.num_states(),
            features.num_actions(),
            features.dim(),
        );
        check_len("psi", psi.len(), h * s_n * d)?;
        check_len("theta_r", theta_r.len(), h * d)?;
        check_len("transition", transition.len(), h * s_n * a_n * s_n)?;
        check_len("reward", reward.len(), h * s_n * a_n)?;
        if !(epsilon >= T::zero()) {
            return Err(Error::invalid("misspecification epsilon must be nonnegative"));
        }
        match &initial_state {
            InitialState::Fixed(s) if *s >= s_n => {
                return Err(Error::invalid(format!("initial state {s} out of range 0..{s_n}")))
            }
            InitialState::Distribution(p) if p.len() != s_n => {
                return Err(Error::invalid("initial distribution length differs from state count"))
            }
            _ => {}
        }
        let l_psi = (0..h)
            .map(|t| {
                (0..s_n)
                    .map(|sp| norm2(&psi[(t * s_n + sp) * d..(t * s_n + sp + 1) * d]))
                    .sum::<T>()
            })
            .fold(T::zero(), T::max);
        let l_r = theta_r.chunks_exact(d).map(norm2).fold(T::zero(), T::max);
        Ok(Self {
            features,
            psi,
            theta_r,
            transition,
            reward,
            epsilon,
            l_psi,
            l_r,
            initial_state,
        })
    }

    pub fn features(&self) -> &FeatureMap<T> {
        &self.features
    }
    pub fn num_states(&self) -> usize {
        self.features.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.features.num_actions
    }
    pub fn horizon(&self) -> usize {
        self.features.horizon
    }
    pub fn dim(&self) -> usize {
        self.features.dim
    }
    pub fn epsilon(&self) -> T {
        self.epsilon
    }
    pub fn l_phi(&self) -> T {
        self.features.l_phi
    }
    pub fn l_psi(&self) -> T {
        self.l_psi
    }
    pub fn l_r(&self) -> T {
        self.l_r
    }
    pub fn initial_state(&self) -> &InitialState<T> {
        &self.initial_state
    }

    #[inline]
    pub fn psi(&self, t: usize, s_next: usize) -> &[T] {
        let d = self.dim();
        let start = (t * self.num_states() + s_next) * d;
        &self.psi[start..start + d]
    }

    #[inline]
    pub fn theta_r(&self, t: usize) -> &[T] {
        let d = self.dim();
        &self.theta_r[t * d..(t + 1) * d]
    }

    #[inline]
    fn sa_index(&self, t: usize, s: usize, a: usize) -> usize {
        (t * self.num_states() + s) * self.num_actions() + a
    }

    #[inline]
    pub fn transition_row(&self, t: usize, s: usize, a: usize) -> &[T] {
        let s_n = self.num_states();
        let start = self.sa_index(t, s, a) * s_n;
        &self.transition[start..start + s_n]
    }

    #[inline]
    pub fn reward(&self, t: usize, s: usize, a: usize) -> T {
        self.reward[self.sa_index(t, s, a)]
    }

    pub fn check_indices(&self, t: usize, s: usize, a: usize) -> Result<()> {
        if t >= self.horizon() || s >= self.num_states() || a >= self.num_actions() {
            return Err(Error::invalid(format!(
                "index (t={t}, s={s}, a={a}) out of range for H={}, S={}, A={}",
                self.horizon(),
                self.num_states(),
                self.num_actions()
            )));
        }
        Ok(())
    }

    /// Samples the successor by inverse CDF and returns it with the deterministic reward.
    pub fn step<R: Rng + ?Sized>(&self, t: usize, s: usize, a: usize, rng: &mut R) -> Result<(usize, T)> {
        self.check_indices(t, s, a)?;
        let row = self.transition_row(t, s, a);
        Ok((sample_categorical(row, rng), self.reward(t, s, a)))
    }

    pub fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.initial_state {
            InitialState::Fixed(s) => *s,
            InitialState::Distribution(p) => sample_categorical(p, rng),
        }
    }

    /// Transition matrix `P_t^pi` over states for a deterministic decision rule at step `t`.
    pub fn policy_transition_matrix(&self, t: usize, actions: &[usize]) -> Vec<Vec<T>> {
        (0..self.num_states())
            .map(|s| self.transition_row(t, s, actions[s]).to_vec())
            .collect()
    }
}

fn check_len(name: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::invalid(format!("{name} table needs {expected} entries, got {got}")));
    }
    Ok(())
}

/// Inverse-CDF draw; the last index with positive mass absorbs rounding.
pub(crate) fn sample_categorical<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_mdp(row: [f64; 2]) -> LowRankMdp<f64> {
        let features = FeatureMap::one_hot(2, 1, 1).unwrap();
        // psi_t(s')[(s,a)] = P(s' | s, a); both states share `row`.
        let psi = vec![row[0], row[0], row[1], row[1]];
        LowRankMdp::from_factors(features, psi, vec![0.5, 0.25], InitialState::Fixed(0)).unwrap()
    }

    #[test]
    fn deterministic_row_always_same_successor() {
        let mdp = two_state_mdp([0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(mdp.step(0, 0, 0, &mut rng).unwrap(), (1, 0.5));
        }
    }

    #[test]
    fn step_reproducible_for_seed() {
        let mdp = two_state_mdp([0.3, 0.7]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| mdp.step(0, 1, 0, &mut rng).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(draw(17), draw(17));
    }

    #[test]
    fn step_frequency_matches_row() {
        let mdp = two_state_mdp([0.25, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let ones = (0..n).filter(|_| mdp.step(0, 0, 0, &mut rng).unwrap().0 == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.75).abs() <= 0.01, "freq {freq}");
    }

    #[test]
    fn step_rejects_bad_indices() {
        let mdp = two_state_mdp([0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(mdp.step(1, 0, 0, &mut rng), Err(Error::InvalidArgument(_))));
        assert!(matches!(mdp.step(0, 2, 0, &mut rng), Err(Error::InvalidArgument(_))));
        assert!(matches!(mdp.step(0, 0, 1, &mut rng), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn one_hot_features_reproduce_psi_rows() {
        // Tabular special case: S = d, one-hot features over states (A = 1).
        let s_n = 3;
        let mut phi = vec![0.0; s_n * s_n];
        for s in 0..s_n {
            phi[s * s_n + s] = 1.0;
        }
        let features = FeatureMap::new(s_n, 1, 1, s_n, phi).unwrap();
        let stochastic = [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.1, 0.1, 0.8]];
        let mut psi = vec![0.0; s_n * s_n];
        for sp in 0..s_n {
            for j in 0..s_n {
                psi[sp * s_n + j] = stochastic[j][sp];
            }
        }
        let mdp = LowRankMdp::from_factors(features, psi, vec![0.0; 3], InitialState::Fixed(0)).unwrap();
        for (s, row) in stochastic.iter().enumerate() {
            assert_eq!(mdp.transition_row(0, s, 0), row);
        }
    }
}
