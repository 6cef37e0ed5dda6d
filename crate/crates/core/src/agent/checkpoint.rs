//! Versioned TOML checkpoint of an [`OptRlsvi`] agent: designs, replay
//! buffers, schedule configuration and (if present) the current plan.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LsviCore, OptRlsvi, Transition};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::linalg::{DesignState, Matrix};
use crate::mdp::FeatureMap;
use crate::scalar::Scalar;
use crate::schedule::ScheduleParams;

pub const CHECKPOINT_FORMAT: &str = "opt-rlsvi-checkpoint";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEntry {
    pub update_count: usize,
    /// Row-major `d x d`.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub horizon: usize,
    pub dim: usize,
    /// One-based index of the next episode.
    pub episode: usize,
    pub lambda: f64,
    pub recompute_period: usize,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub practical_scale: f64,
    pub episodes: usize,
    pub epsilon: f64,
    pub l_phi: f64,
    pub l_psi: f64,
    pub l_r: f64,
    pub freeze_cutoffs: bool,
    /// `[t][j]`, present when the agent holds a plan for `episode`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    pub designs: Vec<DesignEntry>,
    pub replay: Vec<ReplayEntry>,
}

fn flat<T: Scalar>(rows: &[Vec<T>]) -> Vec<f64> {
    rows.iter().flatten().map(|x| x.as_f64()).collect()
}

fn parse_err(message: impl Into<String>) -> Error {
    Error::Parse {
        context: "agent checkpoint".into(),
        message: message.into(),
    }
}

impl AgentCheckpoint {
    pub fn from_agent<T: Scalar>(agent: &OptRlsvi<T>) -> Self {
        let core = agent.core();
        let p = agent.params();
        let plan = agent.current_plan();
        let designs = core
            .designs()
            .iter()
            .map(|ds| DesignEntry {
                update_count: ds.update_count(),
                sigma: ds.sigma().as_slice().iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        let replay = (0..core.horizon())
            .flat_map(|t| {
                core.replay(t).iter().map(move |tr| ReplayEntry {
                    t,
                    state: tr.state,
                    action: tr.action,
                    reward: tr.reward.as_f64(),
                    next_state: tr.next_state,
                    phi: tr.phi.iter().map(|x| x.as_f64()).collect(),
                })
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_SCHEMA_VERSION,
            kind: "opt_rlsvi".into(),
            horizon: core.horizon(),
            dim: core.features().dim(),
            episode: core.episode(),
            lambda: core.lambda().as_f64(),
            recompute_period: core.design(0).recompute_period(),
            delta: p.delta.as_f64(),
            c1: p.c1.as_f64(),
            c2: p.c2.as_f64(),
            practical_scale: p.practical_scale.as_f64(),
            episodes: p.episodes,
            epsilon: p.epsilon.as_f64(),
            l_phi: p.l_phi.as_f64(),
            l_psi: p.l_psi.as_f64(),
            l_r: p.l_r.as_f64(),
            freeze_cutoffs: agent.freeze_cutoffs(),
            theta_hat: plan.map(|p| flat(&p.theta_hat)),
            xi: plan.map(|p| flat(&p.xi)),
            designs,
            replay,
        }
    }

    /// Rebuilds the agent on top of the environment's feature map.
    pub fn into_agent<T: Scalar>(self, features: FeatureMap<T>) -> Result<OptRlsvi<T>> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_SCHEMA_VERSION {
            return Err(parse_err(format!(
                "unsupported checkpoint {:?} version {}",
                self.format, self.version
            )));
        }
        if self.kind != "opt_rlsvi" {
            return Err(parse_err(format!("unsupported agent kind {:?}", self.kind)));
        }
        if self.horizon != features.horizon() || self.dim != features.dim() {
            return Err(Error::invalid(format!(
                "checkpoint has H={}, d={} but the MDP has H={}, d={}",
                self.horizon,
                self.dim,
                features.horizon(),
                features.dim()
            )));
        }
        let lambda = T::lit(self.lambda);
        let designs = self
            .designs
            .iter()
            .map(|e| {
                let sigma = Matrix::from_row_major(self.dim, e.sigma.iter().map(|&x| T::lit(x)).collect())?;
                DesignState::from_sigma(sigma, lambda, e.update_count, self.recompute_period)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut replay: Vec<Vec<Transition<T>>> = vec![Vec::new(); self.horizon];
        for e in self.replay {
            if e.t >= self.horizon || e.phi.len() != self.dim {
                return Err(parse_err("replay entry has the wrong shape"));
            }
            replay[e.t].push(Transition {
                state: e.state,
                action: e.action,
                phi: e.phi.into_iter().map(T::lit).collect(),
                reward: T::lit(e.reward),
                next_state: e.next_state,
            });
        }
        let core = LsviCore::from_parts(features, designs, replay, self.episode)?;
        let params = ScheduleParams {
            horizon: self.horizon,
            dim: self.dim,
            l_phi: T::lit(self.l_phi),
            l_psi: T::lit(self.l_psi),
            l_r: T::lit(self.l_r),
            lambda,
            epsilon: T::lit(self.epsilon),
            delta: T::lit(self.delta),
            episodes: self.episodes,
            c1: T::lit(self.c1),
            c2: T::lit(self.c2),
            practical_scale: T::lit(self.practical_scale),
        };
        let unflat = |v: Vec<f64>| -> Vec<Vec<T>> {
            v.chunks(self.dim.max(1)).map(|c| c.iter().map(|&x| T::lit(x)).collect()).collect()
        };
        let plan = match (self.theta_hat, self.xi) {
            (Some(h), Some(x)) => Some((unflat(h), unflat(x))),
            (None, None) => None,
            _ => return Err(parse_err("theta_hat and xi must be stored together")),
        };
        OptRlsvi::from_parts(core, params, self.freeze_cutoffs, plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| parse_err(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_err(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_toml()?.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Agent, OptRlsviConfig};
    use crate::mdp::generate_mixture_mdp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_history_and_plan() {
        let mdp = generate_mixture_mdp::<f64>(5, 2, 3, 2, 3).unwrap();
        let cfg = OptRlsviConfig {
            practical_scale: 0.05,
            episodes: 20,
            ..Default::default()
        };
        let mut agent = OptRlsvi::for_mdp(&mdp, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..6 {
            agent.plan(&mut rng).unwrap();
            let mut s = 0;
            for t in 0..3 {
                let a = agent.act(t, s, &mut rng).unwrap();
                let (sn, r) = mdp.step(t, s, a, &mut rng).unwrap();
                agent.observe(t, s, a, r, sn).unwrap();
                s = sn;
            }
        }
        agent.plan(&mut rng).unwrap();

        let text = AgentCheckpoint::from_agent(&agent).to_toml().unwrap();
        let restored = AgentCheckpoint::from_toml(&text)
            .unwrap()
            .into_agent(mdp.features().clone())
            .unwrap();
        assert_eq!(restored.episode(), 7);
        for t in 0..3 {
            assert_eq!(restored.core().replay(t), agent.core().replay(t));
            assert_eq!(restored.core().design(t).sigma(), agent.core().design(t).sigma());
        }
        let (a, b) = (agent.current_plan().unwrap(), restored.current_plan().unwrap());
        assert_eq!(a.theta_bar, b.theta_bar);
        for (x, y) in a.q.iter().zip(&b.q) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_mismatched_mdp() {
        let mdp = generate_mixture_mdp::<f64>(5, 2, 3, 2, 3).unwrap();
        let agent = OptRlsvi::for_mdp(&mdp, OptRlsviConfig::default()).unwrap();
        let ckpt = AgentCheckpoint::from_agent(&agent);
        let other = generate_mixture_mdp::<f64>(5, 2, 4, 2, 3).unwrap();
        assert!(ckpt.into_agent(other.features().clone()).is_err());
    }
}
