//! The opt-RLSVI agent.
//!
//! Each episode runs least-squares value iteration backward over the horizon,
//! perturbs every ridge estimate with Gaussian pseudonoise shaped by the
//! inverse design matrix, and evaluates actions with a value that blends the
//! perturbed linear estimate into the optimistic default `H - t` as the
//! feature becomes uncertain.

use rand::RngCore;

use super::{Agent, LsviCore};
use crate::error::{Error, Result};
use crate::linalg::{DesignState, DEFAULT_RECOMPUTE_PERIOD};
use crate::mdp::{dp_argmax, FeatureMap, LowRankMdp, Policy, PolicyRule};
use crate::scalar::{dot, Scalar};
use crate::schedule::{NoiseSchedule, ScheduleParams};

/// Which branch of the blended value fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `‖phi‖ <= alpha_L`: the perturbed linear value.
    Linear,
    /// `alpha_L < ‖phi‖ < alpha_U`: convex blend of linear and default.
    Interpolated,
    /// `‖phi‖ >= alpha_U`: the default value.
    Default,
}

/// Blends `linear` and `default` according to the uncertainty `norm`.
///
/// The linear value carries weight `(alpha_U - n) / (alpha_U - alpha_L)` and
/// the default `(n - alpha_L) / (alpha_U - alpha_L)`, so the value is
/// continuous at both cutoffs.
pub fn interpolate<T: Scalar>(linear: T, norm: T, default: T, alpha_l: T, alpha_u: T) -> Result<(T, Regime)> {
    if !(alpha_u > alpha_l) {
        return Err(Error::InvalidConfiguration(format!(
            "cutoffs must satisfy alpha_U > alpha_L (got {alpha_u} <= {alpha_l})"
        )));
    }
    Ok(if norm <= alpha_l {
        (linear, Regime::Linear)
    } else if norm >= alpha_u {
        (default, Regime::Default)
    } else {
        let width = alpha_u - alpha_l;
        let w_linear = (alpha_u - norm) / width;
        let w_default = (norm - alpha_l) / width;
        (w_linear * linear + w_default * default, Regime::Interpolated)
    })
}

/// `Qbar_t(s, a)` for feature `phi` at zero-based step `t` of an `horizon`-step episode.
pub fn q_bar<T: Scalar>(
    phi: &[T],
    theta_bar: &[T],
    design: &DesignState<T>,
    t: usize,
    horizon: usize,
    schedule: &NoiseSchedule<T>,
) -> Result<T> {
    if t >= horizon {
        return Err(Error::invalid(format!("step {t} outside horizon {horizon}")));
    }
    if theta_bar.len() != phi.len() {
        return Err(Error::invalid("parameter and feature lengths differ"));
    }
    let norm = design.mahalanobis_norm(phi, crate::linalg::NormKind::Inverse)?;
    let default = T::from_usize_lossy(horizon - t);
    interpolate(dot(phi, theta_bar), norm, default, schedule.alpha_l, schedule.alpha_u).map(|(v, _)| v)
}

/// Tunables of the agent. Defaults follow the theoretical setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptRlsviConfig<T> {
    pub lambda: T,
    pub delta: T,
    pub c1: T,
    pub c2: T,
    pub practical_scale: T,
    /// Planned episode budget `K`.
    pub episodes: usize,
    /// Use the cutoffs of episode `K` throughout instead of recomputing per episode.
    pub freeze_cutoffs: bool,
    pub recompute_period: usize,
}

impl<T: Scalar> Default for OptRlsviConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::one(),
            delta: T::lit(0.1),
            c1: T::one(),
            c2: T::one(),
            practical_scale: T::one(),
            episodes: 1000,
            freeze_cutoffs: false,
            recompute_period: DEFAULT_RECOMPUTE_PERIOD,
        }
    }
}

/// Output of one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan<T> {
    pub schedule: NoiseSchedule<T>,
    pub theta_hat: Vec<Vec<T>>,
    pub xi: Vec<Vec<T>>,
    pub theta_bar: Vec<Vec<T>>,
    /// `Qbar` flattened `[t][s][a]`.
    pub q: Vec<T>,
    /// `Vbar` flattened `[t][s]`.
    pub v: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct OptRlsvi<T> {
    core: LsviCore<T>,
    params: ScheduleParams<T>,
    freeze_cutoffs: bool,
    /// `‖phi_t(s,a)‖_{Sigma_t^{-1}}` for the current episode, `[t][s][a]`.
    norms: Vec<T>,
    /// Episode whose designs `norms` were computed from.
    norms_for: usize,
    plan: Option<Plan<T>>,
    planned_for: usize,
}

impl<T: Scalar> OptRlsvi<T> {
    pub fn new(features: FeatureMap<T>, l_psi: T, l_r: T, epsilon: T, config: OptRlsviConfig<T>) -> Result<Self> {
        let params = ScheduleParams {
            horizon: features.horizon(),
            dim: features.dim(),
            l_phi: features.l_phi(),
            l_psi,
            l_r,
            lambda: config.lambda,
            epsilon,
            delta: config.delta,
            episodes: config.episodes,
            c1: config.c1,
            c2: config.c2,
            practical_scale: config.practical_scale,
        };
        params.check()?;
        let core = LsviCore::with_recompute_period(features, config.lambda, config.recompute_period)?;
        Ok(Self {
            core,
            params,
            freeze_cutoffs: config.freeze_cutoffs,
            norms: Vec::new(),
            norms_for: 0,
            plan: None,
            planned_for: 0,
        })
    }

    /// Agent with problem constants taken from `mdp`.
    pub fn for_mdp(mdp: &LowRankMdp<T>, config: OptRlsviConfig<T>) -> Result<Self> {
        Self::new(mdp.features().clone(), mdp.l_psi(), mdp.l_r(), mdp.epsilon(), config)
    }

    pub(crate) fn from_parts(
        core: LsviCore<T>,
        params: ScheduleParams<T>,
        freeze_cutoffs: bool,
        plan: Option<(Vec<Vec<T>>, Vec<Vec<T>>)>,
    ) -> Result<Self> {
        params.check()?;
        let mut agent = Self {
            core,
            params,
            freeze_cutoffs,
            norms: Vec::new(),
            norms_for: 0,
            plan: None,
            planned_for: 0,
        };
        if let Some((theta_hat, xi)) = plan {
            agent.restore_plan(theta_hat, xi)?;
        }
        Ok(agent)
    }

    pub fn core(&self) -> &LsviCore<T> {
        &self.core
    }
    pub fn params(&self) -> &ScheduleParams<T> {
        &self.params
    }
    pub fn freeze_cutoffs(&self) -> bool {
        self.freeze_cutoffs
    }
    pub fn current_plan(&self) -> Option<&Plan<T>> {
        self.plan.as_ref().filter(|_| self.planned_for == self.core.episode())
    }

    /// Schedule used for episode `k`, honoring the cutoff-freeze flag.
    pub fn schedule_for(&self, k: usize) -> Result<NoiseSchedule<T>> {
        let mut sched = self.params.at(k)?;
        if self.freeze_cutoffs {
            let frozen = self.params.at(self.params.episodes.max(k))?;
            sched.alpha_u = frozen.alpha_u;
            sched.alpha_l = frozen.alpha_l;
        }
        Ok(sched)
    }

    fn refresh_norms(&mut self) {
        self.norms = self.compute_norms();
        self.norms_for = self.core.episode();
    }

    fn compute_norms(&self) -> Vec<T> {
        let f = self.core.features();
        let (h, s_n, a_n) = (f.horizon(), f.num_states(), f.num_actions());
        let mut norms = Vec::with_capacity(h * s_n * a_n);
        for t in 0..h {
            let design = self.core.design(t);
            for s in 0..s_n {
                for a in 0..a_n {
                    norms.push(design.inverse_norm_unchecked(f.phi(t, s, a)));
                }
            }
        }
        norms
    }

    /// Evaluates `Qbar_t` and `Vbar_t` over all states for a given `theta_bar_t`.
    fn fill_values(
        &self,
        t: usize,
        theta_bar: &[T],
        norms: &[T],
        sched: &NoiseSchedule<T>,
        q: &mut [T],
        v: &mut [T],
    ) -> Result<()> {
        let f = self.core.features();
        let (h, s_n, a_n) = (f.horizon(), f.num_states(), f.num_actions());
        let default = T::from_usize_lossy(h - t);
        for s in 0..s_n {
            let base = (t * s_n + s) * a_n;
            for a in 0..a_n {
                let linear = dot(f.phi(t, s, a), theta_bar);
                let (value, _) = interpolate(linear, norms[base + a], default, sched.alpha_l, sched.alpha_u)?;
                q[base + a] = value;
            }
            let row = &q[base..base + a_n];
            v[t * s_n + s] = row[dp_argmax(row)];
        }
        Ok(())
    }

    /// One full backward pass with fresh pseudonoise; does not touch agent state.
    pub fn backward_pass(&self, sched: &NoiseSchedule<T>, rng: &mut dyn RngCore) -> Result<Plan<T>> {
        let f = self.core.features();
        let (h, s_n, a_n) = (f.horizon(), f.num_states(), f.num_actions());
        let mut q = vec![T::zero(); h * s_n * a_n];
        let mut v = vec![T::zero(); h * s_n];
        let mut theta_hat = vec![Vec::new(); h];
        let mut xi = vec![Vec::new(); h];
        let mut theta_bar = vec![Vec::new(); h];
        let stale;
        let norms = if self.norms_for == self.core.episode() && !self.norms.is_empty() {
            &self.norms
        } else {
            stale = self.compute_norms();
            &stale
        };
        let variance = sched.sigma * sched.sigma;
        for t in (0..h).rev() {
            let v_next = (t + 1 < h).then(|| &v[(t + 1) * s_n..(t + 2) * s_n]);
            let hat = self.core.ridge(t, v_next)?;
            let noise = self.core.design(t).sample_gaussian(variance, rng)?;
            let bar: Vec<T> = hat.iter().zip(&noise).map(|(&a, &b)| a + b).collect();
            self.fill_values(t, &bar, norms, sched, &mut q, &mut v)?;
            theta_hat[t] = hat;
            xi[t] = noise;
            theta_bar[t] = bar;
        }
        Ok(Plan {
            schedule: *sched,
            theta_hat,
            xi,
            theta_bar,
            q,
            v,
        })
    }

    fn restore_plan(&mut self, theta_hat: Vec<Vec<T>>, xi: Vec<Vec<T>>) -> Result<()> {
        let h = self.core.horizon();
        let d = self.core.features().dim();
        if theta_hat.len() != h || xi.len() != h || theta_hat.iter().chain(&xi).any(|v| v.len() != d) {
            return Err(Error::invalid("stored plan has the wrong shape"));
        }
        let sched = self.schedule_for(self.core.episode())?;
        self.refresh_norms();
        let f = self.core.features();
        let (s_n, a_n) = (f.num_states(), f.num_actions());
        let mut q = vec![T::zero(); h * s_n * a_n];
        let mut v = vec![T::zero(); h * s_n];
        let theta_bar: Vec<Vec<T>> = theta_hat
            .iter()
            .zip(&xi)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x + y).collect())
            .collect();
        for t in 0..h {
            self.fill_values(t, &theta_bar[t], &self.norms, &sched, &mut q, &mut v)?;
        }
        self.plan = Some(Plan {
            schedule: sched,
            theta_hat,
            xi,
            theta_bar,
            q,
            v,
        });
        self.planned_for = self.core.episode();
        Ok(())
    }

    fn plan_or_err(&self) -> Result<&Plan<T>> {
        self.current_plan().ok_or_else(|| {
            Error::ProtocolViolation(format!("episode {} has not been planned", self.core.episode()))
        })
    }

    /// `Vbar_t(s)` of the current plan; `t == H` gives the zero terminal.
    pub fn value(&self, t: usize, s: usize) -> Result<T> {
        let plan = self.plan_or_err()?;
        let s_n = self.core.features().num_states();
        if t == self.core.horizon() {
            return Ok(T::zero());
        }
        Ok(plan.v[t * s_n + s])
    }

    /// `Vbar_t(.)` over all states of the current plan.
    pub fn values_at(&self, t: usize) -> Result<&[T]> {
        let plan = self.plan_or_err()?;
        let s_n = self.core.features().num_states();
        Ok(&plan.v[t * s_n..(t + 1) * s_n])
    }

    /// Regime of `(t, s, a)` under the current plan's cutoffs and designs.
    pub fn regime(&self, t: usize, s: usize, a: usize) -> Result<Regime> {
        let plan = self.plan_or_err()?;
        let f = self.core.features();
        let idx = (t * f.num_states() + s) * f.num_actions() + a;
        let n = self.norms[idx];
        Ok(if n <= plan.schedule.alpha_l {
            Regime::Linear
        } else if n >= plan.schedule.alpha_u {
            Regime::Default
        } else {
            Regime::Interpolated
        })
    }

    /// `Vbar_1(s)` from `m` independent replans at the current history.
    pub fn resampled_initial_values(&self, s: usize, m: usize, rng: &mut dyn RngCore) -> Result<Vec<T>> {
        let plan = self.plan_or_err()?;
        let sched = plan.schedule;
        (0..m).map(|_| self.backward_pass(&sched, rng).map(|p| p.v[s])).collect()
    }

    fn greedy_policy(&self, plan: &Plan<T>) -> Policy {
        let f = self.core.features();
        let (s_n, a_n) = (f.num_states(), f.num_actions());
        Policy::from_fn(f.horizon(), s_n, |t, s| {
            let base = (t * s_n + s) * a_n;
            dp_argmax(&plan.q[base..base + a_n])
        })
    }
}

impl<T: Scalar> Agent<T> for OptRlsvi<T> {
    fn name(&self) -> &'static str {
        "opt_rlsvi"
    }

    fn episode(&self) -> usize {
        self.core.episode()
    }

    fn plan(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        let sched = self.schedule_for(self.core.episode())?;
        self.refresh_norms();
        let plan = self.backward_pass(&sched, rng)?;
        self.plan = Some(plan);
        self.planned_for = self.core.episode();
        Ok(())
    }

    fn act(&self, t: usize, s: usize, _rng: &mut dyn RngCore) -> Result<usize> {
        let plan = self.plan_or_err()?;
        let f = self.core.features();
        if t >= f.horizon() || s >= f.num_states() {
            return Err(Error::invalid(format!("(t={t}, s={s}) out of range")));
        }
        let a_n = f.num_actions();
        let base = (t * f.num_states() + s) * a_n;
        Ok(dp_argmax(&plan.q[base..base + a_n]))
    }

    fn observe(&mut self, t: usize, s: usize, a: usize, r: T, s_next: usize) -> Result<()> {
        self.core.observe(t, s, a, r, s_next)
    }

    fn policy_rule(&self) -> PolicyRule<T> {
        match self.current_plan() {
            Some(plan) => PolicyRule::Deterministic(self.greedy_policy(plan)),
            None => {
                let f = self.core.features();
                PolicyRule::Deterministic(Policy::constant(f.horizon(), f.num_states(), 0))
            }
        }
    }

    fn initial_value(&self, s: usize) -> Option<T> {
        self.value(0, s).ok()
    }

    fn feature_norm(&self, t: usize, s: usize, a: usize) -> Option<T> {
        Some(self.core.design(t).inverse_norm_unchecked(self.core.features().phi(t, s, a)))
    }

    fn check_compatible(&self, mdp: &LowRankMdp<T>) -> Result<()> {
        self.core.check_compatible(mdp)
    }

    fn as_opt_rlsvi(&self) -> Option<&OptRlsvi<T>> {
        Some(self)
    }

    fn memory_bytes(&self) -> usize {
        let scalar = std::mem::size_of::<T>();
        let plan = self
            .plan
            .as_ref()
            .map_or(0, |p| (p.q.len() + p.v.len() + 3 * p.theta_bar.len() * self.core.features().dim()) * scalar);
        self.core.memory_bytes() + self.norms.len() * scalar + plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{generate_mixture_mdp, FeatureMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched(alpha_l: f64, alpha_u: f64) -> NoiseSchedule<f64> {
        NoiseSchedule {
            k: 1,
            delta_prime: 1e-3,
            beta: 1.0,
            nu: 1.0,
            gamma: 1.0,
            sigma: 0.0,
            alpha_u,
            alpha_l,
            xi_radius: 1.0,
        }
    }

    #[test]
    fn boundaries_and_midpoint() {
        let (lin, def) = (0.3_f64, 4.0);
        assert_eq!(interpolate(lin, 0.2, def, 0.1, 0.2).unwrap(), (def, Regime::Default));
        assert_eq!(interpolate(lin, 0.1, def, 0.1, 0.2).unwrap(), (lin, Regime::Linear));
        let (mid, regime) = interpolate(lin, 0.15, def, 0.1, 0.2).unwrap();
        assert_eq!(regime, Regime::Interpolated);
        assert!((mid - (lin + def) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_inverted_cutoffs() {
        assert!(matches!(
            interpolate(0.0, 0.1, 1.0, 0.2, 0.2),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn q_bar_uses_design_norm() {
        let design = DesignState::new(2, 4.0, 64).unwrap();
        // ‖e1‖_{Sigma^{-1}} = 0.5 == alpha_U -> default H - t.
        let v = q_bar(&[1.0, 0.0], &[2.0, 0.0], &design, 1, 5, &sched(0.25, 0.5)).unwrap();
        assert_eq!(v, 4.0);
        let v = q_bar(&[1.0, 0.0], &[2.0, 0.0], &design, 1, 5, &sched(0.5, 1.0)).unwrap();
        assert_eq!(v, 2.0);
    }

    fn small_agent(k_budget: usize) -> (LowRankMdp<f64>, OptRlsvi<f64>) {
        let mdp = generate_mixture_mdp::<f64>(5, 3, 3, 2, 4).unwrap();
        let cfg = OptRlsviConfig {
            episodes: k_budget,
            ..Default::default()
        };
        let agent = OptRlsvi::for_mdp(&mdp, cfg).unwrap();
        (mdp, agent)
    }

    #[test]
    fn first_episode_has_zero_ridge_estimate() {
        let (_, mut agent) = small_agent(10);
        agent.plan(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let plan = agent.current_plan().unwrap();
        for t in 0..3 {
            assert!(plan.theta_hat[t].iter().all(|&x| x == 0.0));
            assert_eq!(plan.theta_bar[t], plan.xi[t]);
        }
    }

    #[test]
    fn fresh_agent_defaults_everywhere_and_picks_action_zero() {
        let (mdp, mut agent) = small_agent(10);
        agent.plan(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in 0..mdp.horizon() {
            for s in 0..mdp.num_states() {
                for a in 0..mdp.num_actions() {
                    assert_eq!(agent.regime(t, s, a).unwrap(), Regime::Default);
                }
                assert_eq!(agent.act(t, s, &mut rng).unwrap(), 0);
                assert_eq!(agent.value(t, s).unwrap(), (3 - t) as f64);
            }
        }
    }

    #[test]
    fn identical_actions_tie_to_zero() {
        let phi = vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5]; // S=1, A=3, d=2, H=1
        let features = FeatureMap::new(1, 3, 1, 2, phi).unwrap();
        let cfg = OptRlsviConfig {
            practical_scale: 1e-6,
            ..Default::default()
        };
        let mut agent = OptRlsvi::new(features, 1.0, 1.0, 0.0, cfg).unwrap();
        agent.plan(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(agent.act(0, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), 0);
    }

    #[test]
    fn act_before_plan_is_protocol_violation() {
        let (_, agent) = small_agent(10);
        assert!(matches!(
            agent.act(0, 0, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn out_of_order_observation_rejected() {
        let (_, mut agent) = small_agent(10);
        assert!(matches!(agent.observe(1, 0, 0, 0.0, 0), Err(Error::ProtocolViolation(_))));
        agent.observe(0, 0, 0, 0.0, 1).unwrap();
        assert!(matches!(agent.observe(0, 0, 0, 0.0, 1), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn same_seed_same_plan() {
        let (_, mut a) = small_agent(10);
        let (_, mut b) = small_agent(10);
        a.plan(&mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        b.plan(&mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a.current_plan(), b.current_plan());
    }

    #[test]
    fn frozen_cutoffs_use_budget_episode() {
        let mdp = generate_mixture_mdp::<f64>(5, 3, 3, 2, 4).unwrap();
        let cfg = OptRlsviConfig {
            episodes: 50,
            freeze_cutoffs: true,
            ..Default::default()
        };
        let agent = OptRlsvi::for_mdp(&mdp, cfg).unwrap();
        let s1 = agent.schedule_for(1).unwrap();
        let s50 = agent.params().at(50).unwrap();
        assert_eq!(s1.alpha_u, s50.alpha_u);
        assert_eq!(s1.sigma, agent.params().at(1).unwrap().sigma);
    }
}
