//! Agent–environment runs with exact regret against the DP oracles,
//! optimism and good-event diagnostics, and seed sweeps.

mod report;
pub mod stats;

pub use report::{
    run_csv, summary_csv, sweep_csv, write_run_outputs, RUN_CSV_SCHEMA, SUMMARY_CSV_SCHEMA, SWEEP_CSV_SCHEMA,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::{Agent, OptRlsvi};
use crate::error::{Error, Result};
use crate::linalg::NormKind;
use crate::mdp::{compute_optimal, LowRankMdp};
use crate::scalar::{dot, Scalar};

/// Regret invariant slack: `V*_1 - V^pi_1 >= -REGRET_TOL`.
pub const REGRET_TOL: f64 = 1e-9;

/// Separate ChaCha streams so that environment draws do not shift when an
/// agent consumes a different amount of randomness.
const ENV_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;
const RESAMPLE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Replans per episode for the resampled optimism rate; 0 disables it.
    pub optimism_resamples: usize,
    /// First (one-based) episode that gets resampled.
    pub resample_from: usize,
    /// Compute eta and xi norms each episode (costs `O(H k (S + d))`).
    pub diagnostics: bool,
    pub digest: String,
}

impl RunOptions {
    pub fn new(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            seed,
            optimism_resamples: 0,
            resample_from: 1,
            diagnostics: true,
            digest: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// Noise schedule in force during an opt-RLSVI episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSnapshot {
    pub sigma: f64,
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub sqrt_beta: f64,
    pub xi_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub k: usize,
    pub start_state: usize,
    pub trajectory: Vec<Step>,
    pub optimal_value: f64,
    pub policy_value: f64,
    pub per_episode_regret: f64,
    /// The agent's own `V_1(s_1)` estimate, if it has one.
    pub agent_value: Option<f64>,
    pub optimistic: Option<bool>,
    /// Optimism relaxed by the misspecification slack `4 H^2 epsilon`.
    pub optimistic_relaxed: Option<bool>,
    /// Fraction of independent replans at this history that were optimistic.
    pub resampled_optimism: Option<f64>,
    /// Steps with `‖phi‖_{Sigma^{-1}} > alpha_L`.
    pub default_steps: usize,
    /// Pre-update `‖phi_tk‖_{Sigma_tk^{-1}}` along the trajectory; empty when
    /// the agent keeps no design.
    pub feature_norms: Vec<f64>,
    pub eta_norms: Vec<f64>,
    pub xi_norms: Vec<f64>,
    pub good_event_xi: Vec<bool>,
    pub schedule: Option<ScheduleSnapshot>,
}

impl EpisodeRecord {
    pub fn max_eta_norm(&self) -> Option<f64> {
        self.eta_norms.iter().copied().reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub agent: String,
    pub seed: u64,
    pub digest: String,
    pub episodes: usize,
    pub cumulative_regret: Vec<f64>,
    pub optimism_rate: Option<f64>,
    pub relaxed_optimism_rate: Option<f64>,
    pub resampled_optimism_rate: Option<f64>,
    pub warmup_total: usize,
    /// `(2 H d / alpha_L^2) ln((lambda + K L_phi^2) / lambda)` with the run's
    /// smallest `alpha_L`.
    pub warmup_bound: Option<f64>,
    /// `sum_k min(1, ‖phi_tk‖^2_{Sigma_tk^{-1}})` per step `t`.
    pub elliptical_potential: Vec<f64>,
    /// `2 d ln((lambda + K L_phi^2) / lambda)`.
    pub potential_bound: Option<f64>,
    pub good_event_xi_rate: Option<f64>,
    pub loglog_slope: Option<f64>,
}

impl RunSummary {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<EpisodeRecord>,
    pub summary: RunSummary,
}

/// `ln((lambda + K L_phi^2) / lambda)`, the log-determinant growth factor.
fn log_growth(lambda: f64, episodes: usize, l_phi: f64) -> f64 {
    ((lambda + episodes as f64 * l_phi * l_phi) / lambda).ln()
}

pub fn warmup_bound(horizon: usize, dim: usize, alpha_l: f64, lambda: f64, episodes: usize, l_phi: f64) -> f64 {
    2.0 * (horizon * dim) as f64 / (alpha_l * alpha_l) * log_growth(lambda, episodes, l_phi)
}

pub fn potential_bound(dim: usize, lambda: f64, episodes: usize, l_phi: f64) -> f64 {
    2.0 * dim as f64 * log_growth(lambda, episodes, l_phi)
}

/// `‖eta_t‖_{Sigma_t}` for the agent's current plan, where
/// `eta_t = Sigma_t^{-1} sum_i phi_ti (Vbar_{t+1}(s'_i) - E[Vbar_{t+1}(s') | s_ti, a_ti])`
/// with the expectation taken exactly over `mdp`'s transition rows.
pub fn eta_diagnostic<T: Scalar>(agent: &OptRlsvi<T>, mdp: &LowRankMdp<T>, t: usize) -> Result<T> {
    let h = mdp.horizon();
    if t >= h {
        return Err(Error::invalid(format!("step {t} out of range 0..{h}")));
    }
    if t + 1 == h {
        return Ok(T::zero());
    }
    let v_next = agent.values_at(t + 1)?;
    let core = agent.core();
    let mut u = vec![T::zero(); mdp.dim()];
    for tr in core.replay(t) {
        let expected = dot(mdp.transition_row(t, tr.state, tr.action), v_next);
        let dev = v_next[tr.next_state] - expected;
        for (acc, &x) in u.iter_mut().zip(&tr.phi) {
            *acc += x * dev;
        }
    }
    core.design(t).mahalanobis_norm(&u, NormKind::Inverse)
}

/// `‖xi_t‖_{Sigma_t}` for every step of the agent's current plan.
pub fn xi_norms<T: Scalar>(agent: &OptRlsvi<T>) -> Result<Vec<T>> {
    let plan = agent
        .current_plan()
        .ok_or_else(|| Error::ProtocolViolation("no plan for the current episode".into()))?;
    plan.xi
        .iter()
        .enumerate()
        .map(|(t, xi)| agent.core().design(t).mahalanobis_norm(xi, NormKind::Forward))
        .collect()
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Plays `options.episodes` episodes of `agent` on `mdp`.
///
/// Each episode: sample `s_1`, plan, record the diagnostics that depend on the
/// pre-update state, roll out `H` steps, observe. Regret uses the exact value
/// of the agent's whole decision rule for the episode.
pub fn run<T: Scalar>(mdp: &LowRankMdp<T>, agent: &mut dyn Agent<T>, options: &RunOptions) -> Result<RunOutput> {
    agent.check_compatible(mdp)?;
    let optimal = compute_optimal(mdp)?;
    let h = mdp.horizon();
    let slack = 4.0 * (h * h) as f64 * mdp.epsilon().as_f64();
    let mut env_rng = rng_stream(options.seed, ENV_STREAM);
    let mut agent_rng = rng_stream(options.seed, AGENT_STREAM);
    let mut resample_rng = rng_stream(options.seed, RESAMPLE_STREAM);

    let mut records = Vec::with_capacity(options.episodes);
    for _ in 0..options.episodes {
        let k = agent.episode();
        let s1 = mdp.sample_initial_state(&mut env_rng);
        agent.plan(&mut agent_rng)?;

        let v_star = optimal.v(0, s1).as_f64();
        let v_pi = agent.policy_rule().evaluate(mdp)?.v(0, s1).as_f64();
        let agent_value = agent.initial_value(s1).map(|v| v.as_f64());

        let mut record = EpisodeRecord {
            k,
            start_state: s1,
            trajectory: Vec::with_capacity(h),
            optimal_value: v_star,
            policy_value: v_pi,
            per_episode_regret: v_star - v_pi,
            agent_value,
            optimistic: agent_value.map(|v| v >= v_star),
            optimistic_relaxed: agent_value.map(|v| v - v_star >= -slack),
            resampled_optimism: None,
            default_steps: 0,
            feature_norms: Vec::new(),
            eta_norms: Vec::new(),
            xi_norms: Vec::new(),
            good_event_xi: Vec::new(),
            schedule: None,
        };

        if let Some(opt) = agent.as_opt_rlsvi() {
            let sched = opt
                .current_plan()
                .ok_or_else(|| Error::ProtocolViolation("plan() left no plan".into()))?
                .schedule;
            let snapshot = ScheduleSnapshot {
                sigma: sched.sigma.as_f64(),
                alpha_l: sched.alpha_l.as_f64(),
                alpha_u: sched.alpha_u.as_f64(),
                sqrt_beta: sched.beta.as_f64().sqrt(),
                xi_radius: sched.xi_radius.as_f64(),
            };
            record.schedule = Some(snapshot);
            if options.diagnostics {
                for t in 0..h {
                    record.eta_norms.push(eta_diagnostic(opt, mdp, t)?.as_f64());
                }
                record.xi_norms = xi_norms(opt)?.into_iter().map(|x| x.as_f64()).collect();
                record.good_event_xi = record.xi_norms.iter().map(|&x| x <= snapshot.xi_radius).collect();
            }
            if options.optimism_resamples > 0 && k >= options.resample_from {
                let values = opt.resampled_initial_values(s1, options.optimism_resamples, &mut resample_rng)?;
                let hits = values.iter().filter(|v| v.as_f64() >= v_star).count();
                record.resampled_optimism = Some(hits as f64 / values.len() as f64);
            }
        }

        let alpha_l = record.schedule.map(|s| s.alpha_l);
        let mut s = s1;
        for t in 0..h {
            let a = agent.act(t, s, &mut agent_rng)?;
            if let Some(n) = agent.feature_norm(t, s, a) {
                let n = n.as_f64();
                record.feature_norms.push(n);
                if alpha_l.is_some_and(|al| n > al) {
                    record.default_steps += 1;
                }
            }
            let (s_next, r) = mdp.step(t, s, a, &mut env_rng)?;
            agent.observe(t, s, a, r, s_next)?;
            record.trajectory.push(Step {
                t,
                s,
                a,
                r: r.as_f64(),
                s_next,
            });
            s = s_next;
        }
        records.push(record);
    }

    let summary = summarize(agent, mdp, options, &records);
    Ok(RunOutput { records, summary })
}

fn rate(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut n, mut hits) = (0usize, 0usize);
    for f in flags.flatten() {
        n += 1;
        hits += f as usize;
    }
    (n > 0).then(|| hits as f64 / n as f64)
}

fn summarize<T: Scalar>(
    agent: &dyn Agent<T>,
    mdp: &LowRankMdp<T>,
    options: &RunOptions,
    records: &[EpisodeRecord],
) -> RunSummary {
    let h = mdp.horizon();
    let mut total = 0.0;
    let cumulative_regret: Vec<f64> = records
        .iter()
        .map(|r| {
            total += r.per_episode_regret;
            total
        })
        .collect();

    let resampled: Vec<f64> = records.iter().filter_map(|r| r.resampled_optimism).collect();
    let resampled_optimism_rate = (!resampled.is_empty()).then(|| stats::mean_stderr(&resampled).0);

    let mut elliptical_potential = vec![0.0; h];
    if records.iter().all(|r| r.feature_norms.len() == h) {
        for r in records {
            for (acc, n) in elliptical_potential.iter_mut().zip(&r.feature_norms) {
                *acc += (n * n).min(1.0);
            }
        }
    } else {
        elliptical_potential.clear();
    }

    let k_total = records.len();
    let lambda = agent.as_opt_rlsvi().map(|o| o.core().lambda().as_f64());
    let l_phi = mdp.l_phi().as_f64();
    let alpha_l_min = records.iter().filter_map(|r| r.schedule.map(|s| s.alpha_l)).reduce(f64::min);
    let warmup_bound = alpha_l_min
        .zip(lambda)
        .map(|(al, lam)| warmup_bound(h, mdp.dim(), al, lam, k_total, l_phi));
    let potential_bound = lambda.map(|lam| potential_bound(mdp.dim(), lam, k_total, l_phi));

    let xi_flags: Vec<bool> = records.iter().flat_map(|r| r.good_event_xi.iter().copied()).collect();
    let good_event_xi_rate =
        (!xi_flags.is_empty()).then(|| xi_flags.iter().filter(|&&g| g).count() as f64 / xi_flags.len() as f64);

    RunSummary {
        agent: agent.name().to_string(),
        seed: options.seed,
        digest: options.digest.clone(),
        episodes: k_total,
        loglog_slope: stats::loglog_slope(&cumulative_regret),
        cumulative_regret,
        optimism_rate: rate(records.iter().map(|r| r.optimistic)),
        relaxed_optimism_rate: rate(records.iter().map(|r| r.optimistic_relaxed)),
        resampled_optimism_rate,
        warmup_total: records.iter().map(|r| r.default_steps).sum(),
        warmup_bound,
        elliptical_potential,
        potential_bound,
        good_event_xi_rate,
    }
}

/// Mean and standard error of the headline metrics over the seeds of one
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub digest: String,
    pub runs: usize,
    pub regret_mean: f64,
    pub regret_stderr: f64,
    pub optimism_mean: f64,
    pub optimism_stderr: f64,
    pub warmup_mean: f64,
    pub warmup_stderr: f64,
    pub slope_mean: f64,
    pub slope_stderr: f64,
}

/// Aggregates summaries of independent runs. Missing optional metrics are
/// skipped; a metric missing from every run is reported as `NaN`.
pub fn aggregate(label: &str, digest: &str, runs: &[RunSummary]) -> SweepRow {
    let collect = |f: &dyn Fn(&RunSummary) -> Option<f64>| -> (f64, f64) {
        let xs: Vec<f64> = runs.iter().filter_map(f).collect();
        stats::mean_stderr(&xs)
    };
    let (regret_mean, regret_stderr) = collect(&|r| Some(r.final_regret()));
    let (optimism_mean, optimism_stderr) = collect(&|r| r.optimism_rate);
    let (warmup_mean, warmup_stderr) = collect(&|r| Some(r.warmup_total as f64));
    let (slope_mean, slope_stderr) = collect(&|r| r.loglog_slope);
    SweepRow {
        label: label.to_string(),
        digest: digest.to_string(),
        runs: runs.len(),
        regret_mean,
        regret_stderr,
        optimism_mean,
        optimism_stderr,
        warmup_mean,
        warmup_stderr,
        slope_mean,
        slope_stderr,
    }
}

/// Runs independent jobs concurrently on `threads` workers (all cores when
/// `None`) and returns results in job order.
pub fn sweep<J, R, F>(jobs: &[J], threads: Option<usize>, job: F) -> Result<Vec<R>>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> Result<R> + Sync,
{
    if jobs.is_empty() {
        return Err(Error::InvalidConfiguration("sweep grid is empty".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfiguration(format!("cannot start worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&job).collect())
}
