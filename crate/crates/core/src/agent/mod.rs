//! Agents sharing the episodic protocol `plan → (act, observe) × H`.

mod baselines;
mod checkpoint;
mod rlsvi;
mod simple;

pub use baselines::{BaselineAgent, BaselineConfig, BaselineKind};
pub use checkpoint::{AgentCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_SCHEMA_VERSION};
pub use rlsvi::{interpolate, q_bar, OptRlsvi, OptRlsviConfig, Plan, Regime};
pub use simple::{FixedPolicyAgent, UniformRandomAgent};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{DesignState, DEFAULT_RECOMPUTE_PERIOD};
use crate::mdp::{FeatureMap, LowRankMdp, PolicyRule};
use crate::scalar::Scalar;

/// An episodic learner. Timesteps are zero-based.
pub trait Agent<T: Scalar>: Send {
    fn name(&self) -> &'static str;

    /// One-based index of the episode about to be (or being) played.
    fn episode(&self) -> usize;

    /// Computes the decision rule for the current episode.
    fn plan(&mut self, rng: &mut dyn RngCore) -> Result<()>;

    fn act(&self, t: usize, s: usize, rng: &mut dyn RngCore) -> Result<usize>;

    fn observe(&mut self, t: usize, s: usize, a: usize, r: T, s_next: usize) -> Result<()>;

    /// The full rule executed this episode, enumerated over every `(t, s)`.
    fn policy_rule(&self) -> PolicyRule<T>;

    /// The agent's own estimate of the initial-step value, when it has one.
    fn initial_value(&self, _s: usize) -> Option<T> {
        None
    }

    /// `‖phi_t(s, a)‖` in the agent's current inverse design norm, when it keeps one.
    fn feature_norm(&self, _t: usize, _s: usize, _a: usize) -> Option<T> {
        None
    }

    /// Errors when the agent was built for a differently shaped MDP.
    fn check_compatible(&self, _mdp: &LowRankMdp<T>) -> Result<()> {
        Ok(())
    }

    fn as_opt_rlsvi(&self) -> Option<&OptRlsvi<T>> {
        None
    }

    /// Approximate heap footprint of the learner state in bytes.
    fn memory_bytes(&self) -> usize {
        0
    }
}

/// One stored transition of the replay buffer at a fixed timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: usize,
    pub action: usize,
    pub phi: Vec<T>,
    pub reward: T,
    pub next_state: usize,
}

/// Per-timestep designs and replay buffers shared by every LSVI-style agent.
#[derive(Debug, Clone)]
pub struct LsviCore<T> {
    features: FeatureMap<T>,
    designs: Vec<DesignState<T>>,
    replay: Vec<Vec<Transition<T>>>,
    /// One-based episode index.
    k: usize,
    next_t: usize,
}

impl<T: Scalar> LsviCore<T> {
    pub fn new(features: FeatureMap<T>, lambda: T) -> Result<Self> {
        Self::with_recompute_period(features, lambda, DEFAULT_RECOMPUTE_PERIOD)
    }

    pub fn with_recompute_period(features: FeatureMap<T>, lambda: T, recompute_period: usize) -> Result<Self> {
        let h = features.horizon();
        let design = DesignState::new(features.dim(), lambda, recompute_period)?;
        Ok(Self {
            designs: vec![design; h],
            replay: vec![Vec::new(); h],
            features,
            k: 1,
            next_t: 0,
        })
    }

    pub(crate) fn from_parts(
        features: FeatureMap<T>,
        designs: Vec<DesignState<T>>,
        replay: Vec<Vec<Transition<T>>>,
        k: usize,
    ) -> Result<Self> {
        let h = features.horizon();
        if designs.len() != h || replay.len() != h {
            return Err(Error::invalid("checkpoint horizon does not match the feature map"));
        }
        if replay.iter().any(|r| r.len() + 1 != k) {
            return Err(Error::invalid("replay buffers must all hold k - 1 transitions"));
        }
        if designs.iter().any(|ds| ds.dim() != features.dim()) {
            return Err(Error::invalid("checkpoint design dimension does not match the feature map"));
        }
        Ok(Self {
            features,
            designs,
            replay,
            k,
            next_t: 0,
        })
    }

    pub fn features(&self) -> &FeatureMap<T> {
        &self.features
    }
    pub fn horizon(&self) -> usize {
        self.features.horizon()
    }
    pub fn episode(&self) -> usize {
        self.k
    }
    pub fn design(&self, t: usize) -> &DesignState<T> {
        &self.designs[t]
    }
    pub fn designs(&self) -> &[DesignState<T>] {
        &self.designs
    }
    pub fn replay(&self, t: usize) -> &[Transition<T>] {
        &self.replay[t]
    }
    pub fn lambda(&self) -> T {
        self.designs[0].lambda()
    }

    /// `sum_i phi_ti * (r_ti + v_next[s_{t+1,i}])`; `v_next = None` means the zero terminal.
    pub fn regression_rhs(&self, t: usize, v_next: Option<&[T]>) -> Vec<T> {
        let mut rhs = vec![T::zero(); self.features.dim()];
        for tr in &self.replay[t] {
            let target = tr.reward + v_next.map_or(T::zero(), |v| v[tr.next_state]);
            for (acc, &x) in rhs.iter_mut().zip(&tr.phi) {
                *acc += x * target;
            }
        }
        rhs
    }

    /// Ridge estimate `Sigma_t^{-1} * rhs`.
    pub fn ridge(&self, t: usize, v_next: Option<&[T]>) -> Result<Vec<T>> {
        let rhs = self.regression_rhs(t, v_next);
        self.designs[t].solve(&rhs)
    }

    pub fn observe(&mut self, t: usize, s: usize, a: usize, r: T, s_next: usize) -> Result<()> {
        if t != self.next_t {
            return Err(Error::ProtocolViolation(format!(
                "expected an observation for step {}, got step {t}",
                self.next_t
            )));
        }
        let f = &self.features;
        if s >= f.num_states() || a >= f.num_actions() || s_next >= f.num_states() {
            return Err(Error::invalid(format!("observation (s={s}, a={a}, s'={s_next}) out of range")));
        }
        let phi = f.phi(t, s, a).to_vec();
        self.designs[t].rank_one_update(&phi)?;
        self.replay[t].push(Transition {
            state: s,
            action: a,
            phi,
            reward: r,
            next_state: s_next,
        });
        if t + 1 == self.horizon() {
            self.k += 1;
            self.next_t = 0;
        } else {
            self.next_t = t + 1;
        }
        Ok(())
    }

    pub fn check_compatible(&self, mdp: &LowRankMdp<T>) -> Result<()> {
        let (f, g) = (&self.features, mdp.features());
        let ours = (f.num_states(), f.num_actions(), f.horizon(), f.dim());
        let theirs = (g.num_states(), g.num_actions(), g.horizon(), g.dim());
        if ours != theirs {
            return Err(Error::invalid(format!(
                "agent built for (S, A, H, d) = {ours:?} but the MDP has {theirs:?}"
            )));
        }
        Ok(())
    }

    pub fn memory_bytes(&self) -> usize {
        let d = self.features.dim();
        let scalar = std::mem::size_of::<T>();
        let designs = self.designs.len() * 3 * d * d * scalar;
        let replay: usize = self
            .replay
            .iter()
            .map(|r| r.len() * (std::mem::size_of::<Transition<T>>() + d * scalar))
            .sum();
        designs + replay
    }
}
