//! Confidence radii, pseudonoise scale and regime cutoffs for opt-RLSVI.
//!
//! With `delta' = delta / (16 H K)` and `Lbar = max(1, L)`:
//!
//! ```text
//!   sqrt(beta_k)  = c1 H d sqrt(log(H d k Lbar_phi Lbar_psi Lbar_r lambda / delta'))
//!   sqrt(nu_k)    = sqrt(beta_k) + sqrt(lambda) L_phi (3 H L_psi + L_r) + 4 eps H sqrt(d k)
//!   sqrt(gamma_k) = c2 sqrt(d H nu_k log(d / delta'))
//!   sigma_k       = sqrt(H nu_k)
//!   alpha_U       = 1 / (4 sqrt(gamma_k)),   alpha_L = alpha_U / 2
//! ```
//!
//! `practical_scale` multiplies `sigma_k` and `sqrt(gamma_k)` (and so divides
//! the cutoffs) for desk-scale experiments; `1.0` is the theoretical setting.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Standard normal CDF at -1; `delta` must lie strictly below it.
pub const PHI_NEG_ONE: f64 = 0.158_655_253_931_457_07;

/// Inputs of the schedule that stay fixed over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams<T> {
    pub horizon: usize,
    pub dim: usize,
    pub l_phi: T,
    pub l_psi: T,
    pub l_r: T,
    pub lambda: T,
    pub epsilon: T,
    pub delta: T,
    /// Planned episode budget `K`; fixes `delta'` for the whole run.
    pub episodes: usize,
    pub c1: T,
    pub c2: T,
    pub practical_scale: T,
}

/// Schedule values for one episode index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule<T> {
    pub k: usize,
    pub delta_prime: T,
    pub beta: T,
    pub nu: T,
    pub gamma: T,
    /// Pseudonoise standard deviation multiplier (`xi ~ N(0, sigma^2 Sigma^{-1})`).
    pub sigma: T,
    pub alpha_u: T,
    pub alpha_l: T,
    /// `practical_scale * sqrt(gamma_k)`: the radius of the pseudonoise good event.
    pub xi_radius: T,
}

impl<T: Scalar> ScheduleParams<T> {
    pub fn check(&self) -> Result<()> {
        let delta = self.delta.as_f64();
        if !(delta > 0.0 && delta < PHI_NEG_ONE) {
            return Err(Error::invalid(format!(
                "delta must satisfy 0 < delta < Phi(-1) ≈ {PHI_NEG_ONE:.4}, got {delta}"
            )));
        }
        if self.horizon == 0 || self.dim == 0 || self.episodes == 0 {
            return Err(Error::invalid("horizon, dimension and episode budget must be positive"));
        }
        for (name, v) in [
            ("L_phi", self.l_phi),
            ("L_psi", self.l_psi),
            ("L_r", self.l_r),
            ("lambda", self.lambda),
            ("c1", self.c1),
            ("c2", self.c2),
            ("practical_scale", self.practical_scale),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.epsilon >= T::zero()) {
            return Err(Error::invalid("epsilon must be nonnegative"));
        }
        Ok(())
    }

    pub fn delta_prime(&self) -> T {
        self.delta / T::from_usize_lossy(16 * self.horizon * self.episodes)
    }

    /// Schedule at episode `k` (one-based).
    pub fn at(&self, k: usize) -> Result<NoiseSchedule<T>> {
        self.check()?;
        if k == 0 {
            return Err(Error::invalid("episode index is one-based"));
        }
        let one = T::one();
        let h = T::from_usize_lossy(self.horizon);
        let d = T::from_usize_lossy(self.dim);
        let kk = T::from_usize_lossy(k);
        let dp = self.delta_prime();

        let log_arg = h * d * kk * self.l_phi.max(one) * self.l_psi.max(one) * self.l_r.max(one) * self.lambda / dp;
        let log_beta = log_arg.ln();
        if !(log_beta >= T::zero()) {
            return Err(Error::Numeric(format!(
                "confidence log term is negative (argument {log_arg}); increase lambda"
            )));
        }
        let sqrt_beta = self.c1 * h * d * log_beta.sqrt();
        let sqrt_nu = sqrt_beta
            + self.lambda.sqrt() * self.l_phi * (T::lit(3.0) * h * self.l_psi + self.l_r)
            + T::lit(4.0) * self.epsilon * h * (d * kk).sqrt();
        let nu = sqrt_nu * sqrt_nu;
        let sqrt_gamma = self.c2 * (d * h * nu * (d / dp).ln()).sqrt();

        let ps = self.practical_scale;
        let alpha_u = (T::lit(4.0) * ps * sqrt_gamma).recip();
        Ok(NoiseSchedule {
            k,
            delta_prime: dp,
            beta: sqrt_beta * sqrt_beta,
            nu,
            gamma: sqrt_gamma * sqrt_gamma,
            sigma: ps * (h * nu).sqrt(),
            alpha_u,
            alpha_l: alpha_u / T::lit(2.0),
            xi_radius: ps * sqrt_gamma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ScheduleParams<f64> {
        ScheduleParams {
            horizon: 4,
            dim: 3,
            l_phi: 1.0,
            l_psi: 2.0,
            l_r: 1.5,
            lambda: 1.0,
            epsilon: 0.0,
            delta: 0.1,
            episodes: 500,
            c1: 1.0,
            c2: 1.0,
            practical_scale: 1.0,
        }
    }

    #[test]
    fn nu_at_zero_misspecification() {
        let p = params();
        let s = p.at(1).unwrap();
        let dp: f64 = 0.1 / (16.0 * 4.0 * 500.0);
        let sqrt_beta = 4.0 * 3.0 * (4.0 * 3.0 * 1.0 * 1.0 * 2.0 * 1.5 * 1.0 / dp).ln().sqrt();
        let expected = (sqrt_beta + 1.0 * (3.0 * 4.0 * 2.0 + 1.5)).powi(2);
        assert!((s.nu - expected).abs() <= 1e-9 * expected);
        assert!((s.sigma * s.sigma - 4.0 * s.nu).abs() <= 1e-9 * s.nu);
    }

    #[test]
    fn cutoff_ratio_is_one_half() {
        for ps in [1.0, 0.05, 3.0] {
            for k in [1, 7, 1000] {
                let s = ScheduleParams { practical_scale: ps, epsilon: 0.2, ..params() }.at(k).unwrap();
                assert_eq!(s.alpha_l / s.alpha_u, 0.5);
                assert!((s.alpha_u - 1.0 / (4.0 * s.xi_radius)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn monotone_in_k() {
        let p = ScheduleParams { epsilon: 0.1, ..params() };
        let mut prev = p.at(1).unwrap();
        for k in 2..=200 {
            let s = p.at(k).unwrap();
            assert!(s.beta >= prev.beta && s.nu >= prev.nu && s.gamma >= prev.gamma);
            assert!(s.alpha_u <= prev.alpha_u);
            prev = s;
        }
        assert!(p.at(100).unwrap().gamma >= p.at(1).unwrap().gamma);
    }

    #[test]
    fn delta_range_enforced() {
        for bad in [0.0, 0.5, PHI_NEG_ONE, -0.1] {
            let err = ScheduleParams { delta: bad, ..params() }.at(1).unwrap_err();
            assert!(err.to_string().contains("Phi(-1)"), "{err}");
        }
        assert!(ScheduleParams { delta: 0.158, ..params() }.at(1).is_ok());
    }

    #[test]
    fn misspecification_term_grows_with_k() {
        let p = ScheduleParams { epsilon: 0.05, ..params() };
        let s1 = p.at(1).unwrap();
        let s0 = params().at(1).unwrap();
        let extra = s1.nu.sqrt() - s0.nu.sqrt();
        assert!((extra - 4.0 * 0.05 * 4.0 * 3.0f64.sqrt()).abs() < 1e-9);
    }
}
