//! Benchmark instance generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{validate, FeatureMap, InitialState, LowRankMdp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of actions in the combination-lock chain.
pub const CHAIN_ACTIONS: usize = 2;

/// Uniform draw from the probability simplex of size `n` (flat Dirichlet).
fn simplex_point<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Mixture instance with exact low-rank dynamics.
///
/// Each timestep has `d` anchor distributions over the `S` states; every
/// feature is a point of the `d`-simplex, so each transition row is a convex
/// mixture of anchors and each reward a convex mixture of `theta_r ∈ [0,1]^d`.
pub fn generate_mixture_mdp<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
    seed: u64,
) -> Result<LowRankMdp<T>> {
    if num_states == 0 || num_actions == 0 || horizon == 0 || dim == 0 {
        return Err(Error::invalid("mixture generator needs positive S, A, H, d"));
    }
    if dim > num_states {
        return Err(Error::invalid(format!(
            "mixture generator requires d <= S (got d = {dim}, S = {num_states})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut psi = vec![T::zero(); horizon * num_states * dim];
    let mut theta_r = vec![T::zero(); horizon * dim];
    let mut phi = Vec::with_capacity(horizon * num_states * num_actions * dim);
    for t in 0..horizon {
        for j in 0..dim {
            let anchor = simplex_point(&mut rng, num_states);
            for (sp, p) in anchor.into_iter().enumerate() {
                psi[(t * num_states + sp) * dim + j] = T::lit(p);
            }
        }
        for j in 0..dim {
            theta_r[t * dim + j] = T::lit(rng.random::<f64>());
        }
        for _ in 0..num_states * num_actions {
            phi.extend(simplex_point(&mut rng, dim).into_iter().map(T::lit));
        }
    }
    let features = FeatureMap::new(num_states, num_actions, horizon, dim, phi)?;
    LowRankMdp::from_factors(features, psi, theta_r, InitialState::Fixed(0))
}

/// Combination-lock chain over states `0..=N` with [`CHAIN_ACTIONS`] actions.
///
/// In state `s < N` one seeded "correct" action advances to `s + 1`; every
/// other action resets to state 0. State `N` absorbs. Reward 1 is paid for
/// the transition that reaches `N` and for every step spent in `N`, so from
/// state 0 at the first step the optimal return is `H - N + 1`. Features are
/// one-hot over `(s, a)`, giving `d = (N + 1) * A` and an exact factorization.
pub fn generate_hard_chain<T: Scalar>(chain_length: usize, horizon: usize, seed: u64) -> Result<LowRankMdp<T>> {
    if chain_length < 2 {
        return Err(Error::invalid(format!("chain length must be at least 2, got {chain_length}")));
    }
    if horizon < chain_length {
        return Err(Error::invalid(format!(
            "chain requires H >= N (got H = {horizon}, N = {chain_length})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_states = chain_length + 1;
    let num_actions = CHAIN_ACTIONS;
    let correct: Vec<usize> = (0..chain_length).map(|_| rng.random_range(0..num_actions)).collect();

    let features = FeatureMap::one_hot(num_states, num_actions, horizon)?;
    let dim = features.dim();
    let mut psi = vec![T::zero(); horizon * num_states * dim];
    let mut theta_r = vec![T::zero(); horizon * dim];
    for t in 0..horizon {
        for s in 0..num_states {
            for a in 0..num_actions {
                let j = s * num_actions + a;
                let (next, reward) = if s == chain_length {
                    (chain_length, 1.0)
                } else if a == correct[s] {
                    (s + 1, if s + 1 == chain_length { 1.0 } else { 0.0 })
                } else {
                    (0, 0.0)
                };
                psi[(t * num_states + next) * dim + j] = T::one();
                theta_r[t * dim + j] = T::lit(reward);
            }
        }
    }
    LowRankMdp::from_factors(features, psi, theta_r, InitialState::Fixed(0))
}

/// Misspecification knob: adds `U[0, magnitude]` noise to every transition
/// entry and renormalizes. The returned instance declares the measured
/// `epsilon`.
pub fn perturb_transitions<T: Scalar>(mdp: &LowRankMdp<T>, magnitude: f64, seed: u64) -> Result<LowRankMdp<T>> {
    if !(magnitude >= 0.0) {
        return Err(Error::invalid("perturbation magnitude must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = mdp.clone();
    let s_n = mdp.num_states();
    for row in out.transition.chunks_exact_mut(s_n) {
        for p in row.iter_mut() {
            *p += T::lit(magnitude * rng.random::<f64>());
        }
        let total: T = row.iter().copied().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    let report = validate(&out);
    out.epsilon = T::lit(report.reward_residual.max(report.transition_residual));
    Ok(out)
}

/// Adds `U[-magnitude, magnitude]` noise to rewards, clamped into `[0, 1]`,
/// and declares the measured `epsilon`.
pub fn perturb_rewards<T: Scalar>(mdp: &LowRankMdp<T>, magnitude: f64, seed: u64) -> Result<LowRankMdp<T>> {
    if !(magnitude >= 0.0) {
        return Err(Error::invalid("perturbation magnitude must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = mdp.clone();
    for r in out.reward.iter_mut() {
        let noise = magnitude * (2.0 * rng.random::<f64>() - 1.0);
        *r = T::lit((r.as_f64() + noise).clamp(0.0, 1.0));
    }
    let report = validate(&out);
    out.epsilon = T::lit(report.reward_residual.max(report.transition_residual));
    Ok(out)
}
