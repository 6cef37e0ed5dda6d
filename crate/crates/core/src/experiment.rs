//! TOML run and sweep configurations, and the glue that turns them into
//! MDPs, agents and harness runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{Agent, BaselineAgent, BaselineConfig, BaselineKind, OptRlsvi, OptRlsviConfig, UniformRandomAgent};
use crate::error::{Error, Result};
use crate::harness::{self, RunOptions, RunOutput, RunSummary, SweepRow};
use crate::linalg::DEFAULT_RECOMPUTE_PERIOD;
use crate::mdp::{generate_hard_chain, generate_mixture_mdp, read_mdp, LowRankMdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum MdpSpec {
    Mixture {
        states: usize,
        actions: usize,
        horizon: usize,
        dim: usize,
        seed: u64,
    },
    Chain {
        length: usize,
        horizon: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

impl MdpSpec {
    pub fn build(&self) -> Result<LowRankMdp<f64>> {
        match self {
            MdpSpec::Mixture {
                states,
                actions,
                horizon,
                dim,
                seed,
            } => generate_mixture_mdp(*states, *actions, *horizon, *dim, *seed),
            MdpSpec::Chain { length, horizon, seed } => generate_hard_chain(*length, *horizon, *seed),
            MdpSpec::File { path } => read_mdp(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    OptRlsvi,
    Ucb,
    Greedy,
    EpsilonGreedy,
    Uniform,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::OptRlsvi => "opt_rlsvi",
            AgentKind::Ucb => "ucb",
            AgentKind::Greedy => "greedy",
            AgentKind::EpsilonGreedy => "epsilon_greedy",
            AgentKind::Uniform => "uniform",
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}
fn default_epsilon_explore() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_recompute() -> usize {
    DEFAULT_RECOMPUTE_PERIOD
}
fn default_resample_from() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "one")]
    pub practical_scale: f64,
    #[serde(default)]
    pub freeze_cutoffs: bool,
    #[serde(default = "default_recompute")]
    pub recompute_period: usize,
    #[serde(default = "one")]
    pub bonus_scale: f64,
    #[serde(default = "default_epsilon_explore")]
    pub epsilon_explore: f64,
    #[serde(default = "default_true")]
    pub clip_high: bool,
}

impl AgentSpec {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            lambda: 1.0,
            delta: default_delta(),
            c1: 1.0,
            c2: 1.0,
            practical_scale: 1.0,
            freeze_cutoffs: false,
            recompute_period: DEFAULT_RECOMPUTE_PERIOD,
            bonus_scale: 1.0,
            epsilon_explore: default_epsilon_explore(),
            clip_high: true,
        }
    }

    /// Builds the agent; `episodes` is the budget `K` used by the noise schedule.
    pub fn build(&self, mdp: &LowRankMdp<f64>, episodes: usize) -> Result<Box<dyn Agent<f64>>> {
        let baseline = |kind| -> Result<Box<dyn Agent<f64>>> {
            let cfg = BaselineConfig {
                kind,
                bonus_scale: self.bonus_scale,
                epsilon_explore: self.epsilon_explore,
                lambda: self.lambda,
                clip_high: self.clip_high,
            };
            Ok(Box::new(BaselineAgent::new(mdp.features().clone(), cfg)?))
        };
        match self.kind {
            AgentKind::OptRlsvi => {
                let cfg = OptRlsviConfig {
                    lambda: self.lambda,
                    delta: self.delta,
                    c1: self.c1,
                    c2: self.c2,
                    practical_scale: self.practical_scale,
                    episodes,
                    freeze_cutoffs: self.freeze_cutoffs,
                    recompute_period: self.recompute_period,
                };
                Ok(Box::new(OptRlsvi::for_mdp(mdp, cfg)?))
            }
            AgentKind::Ucb => baseline(BaselineKind::Ucb),
            AgentKind::Greedy => baseline(BaselineKind::Greedy),
            AgentKind::EpsilonGreedy => baseline(BaselineKind::EpsilonGreedy),
            AgentKind::Uniform => Ok(Box::new(UniformRandomAgent::new(
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions(),
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub optimism_resamples: usize,
    #[serde(default = "default_resample_from")]
    pub resample_from: usize,
    #[serde(default = "default_true")]
    pub diagnostics: bool,
    pub mdp: MdpSpec,
    pub agent: AgentSpec,
}

fn parse_err(context: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        context: context.display().to_string(),
        message: e.to_string(),
    }
}

fn resolve(base: &Path, mdp: &mut MdpSpec) {
    if let MdpSpec::File { path } = mdp {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_err(Path::new("run config"), e))
    }

    /// Loads a config; a relative MDP file path is taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(&read_text(path)?).map_err(|e| parse_err(path, e))?;
        resolve(path.parent().unwrap_or(Path::new(".")), &mut cfg.mdp);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| parse_err(Path::new("run config"), e))
    }

    /// Short hex digest of the canonical serialization; the output directory
    /// is excluded since it does not affect results.
    pub fn digest(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.output_dir = None;
        let hash = Sha256::digest(canon.to_toml()?.as_bytes());
        Ok(hex::encode(&hash[..8]))
    }

    pub fn check(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidConfiguration("episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn options(&self) -> Result<RunOptions> {
        Ok(RunOptions {
            episodes: self.episodes,
            seed: self.seed,
            optimism_resamples: self.optimism_resamples,
            resample_from: self.resample_from,
            diagnostics: self.diagnostics,
            digest: self.digest()?,
        })
    }

    /// Builds the MDP and agent and plays the run.
    pub fn execute(&self) -> Result<RunOutput> {
        self.check()?;
        let mdp = self.mdp.build()?;
        let mut agent = self.agent.build(&mdp, self.episodes)?;
        harness::run(&mdp, agent.as_mut(), &self.options()?)
    }

    /// File stem used for this run's CSVs.
    pub fn stem(&self) -> Result<String> {
        Ok(format!("run-{}-seed{}", self.digest()?, self.seed))
    }
}

/// Lists of values to sweep; absent axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub kind: Option<Vec<AgentKind>>,
    #[serde(default)]
    pub practical_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub bonus_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon_explore: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Seeds per grid point: `base.seed, base.seed + 1, ...`.
    pub seeds: usize,
    pub base: RunConfig,
    #[serde(default)]
    pub grid: Grid,
}

/// One configuration of the grid with its seeded runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub label: String,
    pub digest: String,
    pub runs: Vec<RunConfig>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(&read_text(path)?).map_err(|e| parse_err(path, e))?;
        resolve(path.parent().unwrap_or(Path::new(".")), &mut cfg.base.mdp);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_err(Path::new("sweep config"), e))
    }

    pub fn digest(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.base.output_dir = None;
        let text = toml::to_string(&canon).map_err(|e| parse_err(Path::new("sweep config"), e))?;
        Ok(hex::encode(&Sha256::digest(text.as_bytes())[..8]))
    }

    /// Cartesian product of the grid axes, in axis order
    /// `kind × practical_scale × bonus_scale × epsilon_explore`.
    pub fn expand(&self) -> Result<Vec<GridPoint>> {
        if self.seeds == 0 {
            return Err(Error::InvalidConfiguration("seeds must be positive".into()));
        }
        self.base.check()?;
        let g = &self.grid;
        let axis = |v: &Option<Vec<f64>>| v.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or(vec![None]);
        let kinds: Vec<Option<AgentKind>> = g
            .kind
            .clone()
            .map(|v| v.into_iter().map(Some).collect())
            .unwrap_or(vec![None]);
        let (scales, bonuses, epsilons) = (axis(&g.practical_scale), axis(&g.bonus_scale), axis(&g.epsilon_explore));
        if [kinds.len(), scales.len(), bonuses.len(), epsilons.len()].contains(&0) {
            return Err(Error::InvalidConfiguration("sweep grid is empty".into()));
        }
        let mut points = Vec::new();
        for &kind in &kinds {
            for &scale in &scales {
                for &bonus in &bonuses {
                    for &eps in &epsilons {
                        let mut cfg = self.base.clone();
                        let mut label = Vec::new();
                        if let Some(k) = kind {
                            cfg.agent.kind = k;
                            label.push(format!("kind={}", k.as_str()));
                        }
                        if let Some(x) = scale {
                            cfg.agent.practical_scale = x;
                            label.push(format!("practical_scale={x}"));
                        }
                        if let Some(x) = bonus {
                            cfg.agent.bonus_scale = x;
                            label.push(format!("bonus_scale={x}"));
                        }
                        if let Some(x) = eps {
                            cfg.agent.epsilon_explore = x;
                            label.push(format!("epsilon_explore={x}"));
                        }
                        let runs = (0..self.seeds as u64)
                            .map(|i| {
                                let mut run = cfg.clone();
                                run.seed = cfg.seed.wrapping_add(i);
                                run
                            })
                            .collect();
                        let mut label = label.join(",");
                        if label.is_empty() {
                            let _ = write!(label, "kind={}", cfg.agent.kind.as_str());
                        }
                        points.push(GridPoint {
                            label,
                            digest: cfg.digest()?,
                            runs,
                        });
                    }
                }
            }
        }
        Ok(points)
    }

    /// Runs every seed of every grid point on `threads` workers. When
    /// `output_dir` is given each run's CSVs are written as soon as it ends.
    pub fn execute(&self, threads: Option<usize>, output_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
        let points = self.expand()?;
        let jobs: Vec<(usize, &RunConfig)> = points
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.runs.iter().map(move |r| (i, r)))
            .collect();
        let summaries: Vec<(usize, RunSummary)> = harness::sweep(&jobs, threads, |&(i, cfg)| {
            let out = cfg.execute()?;
            if let Some(dir) = output_dir {
                harness::write_run_outputs(dir, &cfg.stem()?, &out.records, &out.summary)?;
            }
            Ok((i, out.summary))
        })?;
        Ok(points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let runs: Vec<RunSummary> =
                    summaries.iter().filter(|(j, _)| *j == i).map(|(_, s)| s.clone()).collect();
                harness::aggregate(&p.label, &p.digest, &runs)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN: &str = r#"
seed = 7
episodes = 20

[mdp]
generator = "chain"
length = 3
horizon = 5
seed = 1

[agent]
kind = "opt_rlsvi"
practical_scale = 0.05
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_toml(RUN).unwrap();
        assert_eq!(cfg.agent.delta, 0.1);
        assert_eq!(cfg.agent.c1, 1.0);
        assert!(cfg.diagnostics);
        assert_eq!(cfg.optimism_resamples, 0);
    }

    #[test]
    fn digest_tracks_content_not_output_dir() {
        let a = RunConfig::from_toml(RUN).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.agent.practical_scale = 0.1;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = RUN.replace("practical_scale", "practical_scael");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn large_delta_rejected() {
        let mut cfg = RunConfig::from_toml(RUN).unwrap();
        cfg.agent.delta = 0.5;
        let msg = cfg.execute().unwrap_err().to_string();
        assert!(msg.contains("0.1587"), "{msg}");
    }

    #[test]
    fn grid_expands_with_seeds() {
        let sweep = SweepConfig {
            seeds: 2,
            base: RunConfig::from_toml(RUN).unwrap(),
            grid: Grid {
                practical_scale: Some(vec![0.02, 0.05, 0.1]),
                ..Default::default()
            },
        };
        let points = sweep.expand().unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[1].label, "practical_scale=0.05");
        assert_eq!(points[2].runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8]);
        let rows = sweep.execute(Some(2), None).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.runs == 2));
    }

    #[test]
    fn single_point_sweep_matches_run() {
        let base = RunConfig::from_toml(RUN).unwrap();
        let run = base.execute().unwrap().summary;
        let sweep = SweepConfig {
            seeds: 1,
            base,
            grid: Grid::default(),
        };
        let rows = sweep.execute(Some(1), None).unwrap();
        assert_eq!(rows[0].regret_mean, run.final_regret());
        assert_eq!(rows[0].warmup_mean, run.warmup_total as f64);
    }
}
