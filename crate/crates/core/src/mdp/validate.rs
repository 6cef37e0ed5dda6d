use std::fmt;

use super::LowRankMdp;
use crate::scalar::{dot, norm2, Scalar};

/// Row sums and residual comparisons are checked to this absolute tolerance.
pub const VALIDATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonFinite,
    NegativeProbability,
    RowSum,
    RewardRange,
    RewardResidual,
    TransitionResidual,
    FeatureNorm,
    PsiNorm,
    ThetaNorm,
    InitialState,
}

impl ViolationKind {
    /// Violations that make exact dynamic programming meaningless.
    pub fn is_hard(self) -> bool {
        matches!(
            self,
            ViolationKind::NonFinite
                | ViolationKind::NegativeProbability
                | ViolationKind::RowSum
                | ViolationKind::RewardRange
                | ViolationKind::InitialState
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub t: Option<usize>,
    pub s: Option<usize>,
    pub a: Option<usize>,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        let loc: Vec<String> = [("t", self.t), ("s", self.s), ("a", self.a)]
            .iter()
            .filter_map(|(n, v)| v.map(|v| format!("{n}={v}")))
            .collect();
        if !loc.is_empty() {
            write!(f, " at {}", loc.join(", "))?;
        }
        write!(f, " magnitude {:e}", self.magnitude)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// `max |r - phi^T theta_r|` over all `(t, s, a)`.
    pub reward_residual: f64,
    /// `max ‖P(.|s,a) - phi^T psi‖_1` over all `(t, s, a)`.
    pub transition_residual: f64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_hard_violations(&self) -> bool {
        self.violations.iter().any(|v| v.kind.is_hard())
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reward_residual = {:e}", self.reward_residual)?;
        writeln!(f, "transition_residual = {:e}", self.transition_residual)?;
        writeln!(f, "violations = {}", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Checks every structural constraint of a [`LowRankMdp`]; violations are data.
pub fn validate<T: Scalar>(mdp: &LowRankMdp<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (h, s_n, a_n) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let eps = mdp.epsilon().as_f64();
    let mut push = |kind, t, s, a, magnitude: f64| {
        report.violations.push(Violation { kind, t, s, a, magnitude });
    };

    let l_phi = mdp.l_phi().as_f64();
    for t in 0..h {
        for s in 0..s_n {
            for a in 0..a_n {
                let phi = mdp.features().phi(t, s, a);
                if phi.iter().any(|x| !x.is_finite()) {
                    push(ViolationKind::NonFinite, Some(t), Some(s), Some(a), f64::NAN);
                    continue;
                }
                let n = norm2(phi).as_f64();
                if n > l_phi * (1.0 + VALIDATION_TOL) + VALIDATION_TOL {
                    push(ViolationKind::FeatureNorm, Some(t), Some(s), Some(a), n - l_phi);
                }
            }
        }
    }

    let mut reward_residual = 0.0f64;
    let mut transition_residual = 0.0f64;
    for t in 0..h {
        for s in 0..s_n {
            for a in 0..a_n {
                let phi = mdp.features().phi(t, s, a);
                let r = mdp.reward(t, s, a).as_f64();
                if !r.is_finite() {
                    push(ViolationKind::NonFinite, Some(t), Some(s), Some(a), f64::NAN);
                } else if !(0.0..=1.0).contains(&r) {
                    let excess = if r < 0.0 { -r } else { r - 1.0 };
                    push(ViolationKind::RewardRange, Some(t), Some(s), Some(a), excess);
                }
                let res_r = (r - dot(phi, mdp.theta_r(t)).as_f64()).abs();
                if res_r > eps + VALIDATION_TOL {
                    push(ViolationKind::RewardResidual, Some(t), Some(s), Some(a), res_r);
                }
                reward_residual = reward_residual.max(res_r);

                let row = mdp.transition_row(t, s, a);
                let mut sum = 0.0;
                let mut most_negative = 0.0f64;
                let mut res_p = 0.0;
                for (sp, p) in row.iter().enumerate() {
                    let p = p.as_f64();
                    sum += p;
                    most_negative = most_negative.min(p);
                    res_p += (p - dot(phi, mdp.psi(t, sp)).as_f64()).abs();
                }
                if !sum.is_finite() {
                    push(ViolationKind::NonFinite, Some(t), Some(s), Some(a), f64::NAN);
                    continue;
                }
                if most_negative < 0.0 {
                    push(ViolationKind::NegativeProbability, Some(t), Some(s), Some(a), -most_negative);
                }
                if (sum - 1.0).abs() > VALIDATION_TOL {
                    push(ViolationKind::RowSum, Some(t), Some(s), Some(a), (sum - 1.0).abs());
                }
                if res_p > eps + VALIDATION_TOL {
                    push(ViolationKind::TransitionResidual, Some(t), Some(s), Some(a), res_p);
                }
                transition_residual = transition_residual.max(res_p);
            }
        }
    }

    let l_psi = mdp.l_psi().as_f64();
    let l_r = mdp.l_r().as_f64();
    for t in 0..h {
        let psi_sum: f64 = (0..s_n).map(|sp| norm2(mdp.psi(t, sp)).as_f64()).sum();
        if psi_sum > l_psi * (1.0 + VALIDATION_TOL) + VALIDATION_TOL {
            push(ViolationKind::PsiNorm, Some(t), None, None, psi_sum - l_psi);
        }
        let theta_norm = norm2(mdp.theta_r(t)).as_f64();
        if theta_norm > l_r * (1.0 + VALIDATION_TOL) + VALIDATION_TOL {
            push(ViolationKind::ThetaNorm, Some(t), None, None, theta_norm - l_r);
        }
    }

    if let super::InitialState::Distribution(p) = mdp.initial_state() {
        let sum: f64 = p.iter().map(|x| x.as_f64()).sum();
        let negative = p.iter().any(|x| x.as_f64() < 0.0);
        if negative || (sum - 1.0).abs() > VALIDATION_TOL {
            push(ViolationKind::InitialState, None, None, None, (sum - 1.0).abs());
        }
    }

    report.reward_residual = reward_residual;
    report.transition_residual = transition_residual;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{generate_mixture_mdp, perturb_rewards};

    #[test]
    fn scaled_row_is_one_row_sum_violation() {
        let mut mdp = generate_mixture_mdp::<f64>(5, 3, 4, 2, 7).unwrap();
        let s_n = mdp.num_states();
        let start = ((1 * s_n + 2) * mdp.num_actions() + 1) * s_n;
        for p in &mut mdp.transition[start..start + s_n] {
            *p *= 1.01;
        }
        let report = validate(&mdp);
        assert_eq!(report.count(ViolationKind::RowSum), 1);
        let v = report.violations.iter().find(|v| v.kind == ViolationKind::RowSum).unwrap();
        assert!((v.magnitude - 0.01).abs() < 1e-12);
        assert_eq!((v.t, v.s, v.a), (Some(1), Some(2), Some(1)));
        assert!(report.has_hard_violations());
    }

    #[test]
    fn reward_perturbation_residual() {
        let mdp = generate_mixture_mdp::<f64>(6, 3, 3, 2, 1).unwrap();
        // Flip every reward by exactly +/-0.05 without clamping.
        let mut shifted = mdp.clone();
        for (i, r) in shifted.reward.iter_mut().enumerate() {
            *r += if i % 2 == 0 { 0.05 } else { -0.05 };
        }
        let report = validate(&shifted);
        assert!((report.reward_residual - 0.05).abs() < 1e-12, "{}", report.reward_residual);
        assert!(report.count(ViolationKind::RewardResidual) > 0);

        let knob = perturb_rewards(&mdp, 0.05, 2).unwrap();
        let report = validate(&knob);
        assert!(report.reward_residual <= 0.05 + 1e-12);
        assert!(report.reward_residual > 0.04);
    }

    #[test]
    fn negative_probability_and_range() {
        let mut mdp = generate_mixture_mdp::<f64>(4, 2, 2, 2, 5).unwrap();
        mdp.transition[0] = -0.2;
        mdp.transition[1] += 0.2;
        mdp.reward[3] = 1.5;
        let report = validate(&mdp);
        assert_eq!(report.count(ViolationKind::NegativeProbability), 1);
        assert_eq!(report.count(ViolationKind::RewardRange), 1);
    }
}
