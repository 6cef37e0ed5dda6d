//! Versioned plain-text (TOML) serialization of [`LowRankMdp`].
//!
//! Floats are written in shortest round-trip decimal form, so `f64` tables
//! survive a write/read cycle bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureMap, InitialState, LowRankMdp};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::scalar::Scalar;

pub const MDP_FORMAT: &str = "lowrank-mdp";
pub const MDP_SCHEMA_VERSION: u32 = 1;

/// On-disk layout. Tables are flattened row-major in the index order noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub format: String,
    pub version: u32,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub dim: usize,
    pub epsilon: f64,
    pub l_phi: f64,
    pub l_psi: f64,
    pub l_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_distribution: Option<Vec<f64>>,
    /// `[t][s][a][j]`
    pub phi: Vec<f64>,
    /// `[t][s'][j]`
    pub psi: Vec<f64>,
    /// `[t][j]`
    pub theta_r: Vec<f64>,
    /// `[t][s][a][s']`
    pub transition: Vec<f64>,
    /// `[t][s][a]`
    pub reward: Vec<f64>,
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

impl MdpFile {
    pub fn from_mdp<T: Scalar>(mdp: &LowRankMdp<T>) -> Self {
        let (initial_state, initial_distribution) = match mdp.initial_state() {
            InitialState::Fixed(s) => (Some(*s), None),
            InitialState::Distribution(p) => (None, Some(to_f64(p))),
        };
        Self {
            format: MDP_FORMAT.to_string(),
            version: MDP_SCHEMA_VERSION,
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            dim: mdp.dim(),
            epsilon: mdp.epsilon.as_f64(),
            l_phi: mdp.l_phi().as_f64(),
            l_psi: mdp.l_psi.as_f64(),
            l_r: mdp.l_r.as_f64(),
            initial_state,
            initial_distribution,
            phi: to_f64(mdp.features().raw()),
            psi: to_f64(&mdp.psi),
            theta_r: to_f64(&mdp.theta_r),
            transition: to_f64(&mdp.transition),
            reward: to_f64(&mdp.reward),
        }
    }

    pub fn into_mdp<T: Scalar>(self) -> Result<LowRankMdp<T>> {
        if self.format != MDP_FORMAT {
            return Err(Error::Parse {
                context: "mdp file".into(),
                message: format!("unexpected format tag {:?}", self.format),
            });
        }
        if self.version != MDP_SCHEMA_VERSION {
            return Err(Error::Parse {
                context: "mdp file".into(),
                message: format!("unsupported schema version {}", self.version),
            });
        }
        let initial = match (self.initial_state, self.initial_distribution) {
            (Some(s), None) => InitialState::Fixed(s),
            (None, Some(p)) => InitialState::Distribution(from_f64(&p)),
            _ => {
                return Err(Error::Parse {
                    context: "mdp file".into(),
                    message: "exactly one of initial_state / initial_distribution is required".into(),
                })
            }
        };
        let features = FeatureMap::with_bound(
            self.num_states,
            self.num_actions,
            self.horizon,
            self.dim,
            from_f64(&self.phi),
            T::lit(self.l_phi),
        )?;
        let mut mdp = LowRankMdp::from_parts(
            features,
            from_f64(&self.psi),
            from_f64(&self.theta_r),
            from_f64(&self.transition),
            from_f64(&self.reward),
            T::lit(self.epsilon),
            initial,
        )?;
        // Keep the declared bounds rather than the recomputed ones.
        mdp.l_psi = T::lit(self.l_psi);
        mdp.l_r = T::lit(self.l_r);
        Ok(mdp)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            context: "mdp serialization".into(),
            message: e.to_string(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            context: "mdp file".into(),
            message: e.to_string(),
        })
    }
}

pub fn write_mdp<T: Scalar>(path: impl AsRef<Path>, mdp: &LowRankMdp<T>) -> Result<()> {
    let text = MdpFile::from_mdp(mdp).to_toml()?;
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn read_mdp<T: Scalar>(path: impl AsRef<Path>) -> Result<LowRankMdp<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MdpFile::from_toml(&text)?.into_mdp()
}
