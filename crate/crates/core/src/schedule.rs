//! Variance-preserving noise schedules.
//!
//! Tables are indexed by timestep `t ∈ 1..=T`; `α_t² + σ_t² = 1` and the
//! signal-to-noise ratio `λ_t = α_t² / σ_t²` is strictly decreasing.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScheduleKind {
    /// Continuous-time linear-β VP process (β from 0.1 to 20).
    LinearVp,
    /// Cosine ᾱ schedule with per-step β capped at 0.999.
    CosineVp,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::LinearVp => "linear_vp",
            ScheduleKind::CosineVp => "cosine_vp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear_vp" => Ok(ScheduleKind::LinearVp),
            "cosine_vp" => Ok(ScheduleKind::CosineVp),
            other => Err(CoreError::InvalidSchedule(format!("unknown kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    /// ᾱ_t for t = 1..=T (index t-1).
    alpha_bar: Vec<f64>,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
    lambda: Vec<f64>,
}

const BETA_MIN: f64 = 0.1;
const BETA_MAX: f64 = 20.0;
const COSINE_OFFSET: f64 = 0.008;

impl NoiseSchedule {
    pub fn new(steps: usize, kind: ScheduleKind) -> Result<Self> {
        if steps < 2 {
            return Err(CoreError::InvalidSchedule(format!("T = {steps} < 2")));
        }
        let t_max = steps as f64;
        // store 1 - ᾱ separately: near t = 1 it is tiny and must not be
        // computed by cancellation
        let (alpha_bar, one_minus): (Vec<f64>, Vec<f64>) = match kind {
            ScheduleKind::LinearVp => (1..=steps)
                .map(|t| {
                    let s = t as f64 / t_max;
                    let x = BETA_MIN * s + 0.5 * (BETA_MAX - BETA_MIN) * s * s;
                    (libm::exp(-x), -libm::expm1(-x))
                })
                .unzip(),
            ScheduleKind::CosineVp => {
                let f = |t: f64| {
                    let c = libm::cos((t / t_max + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * core::f64::consts::FRAC_PI_2);
                    c * c
                };
                let f0 = f(0.0);
                let mut prev = 1.0;
                let mut out = Vec::with_capacity(steps);
                for t in 1..=steps {
                    let target = f(t as f64) / f0;
                    let beta = (1.0 - target / prev).min(0.999);
                    prev *= 1.0 - beta;
                    out.push((prev, 1.0 - prev));
                }
                out.into_iter().unzip()
            }
        };
        let alpha = alpha_bar.iter().map(|a| libm::sqrt(*a)).collect();
        let sigma = one_minus.iter().map(|s| libm::sqrt(*s)).collect();
        let lambda = alpha_bar.iter().zip(&one_minus).map(|(a, s)| a / s).collect();
        let schedule = Self {
            kind,
            alpha_bar,
            alpha,
            sigma,
            lambda,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    fn validate(&self) -> Result<()> {
        for t in 1..=self.steps() {
            let (a, s) = (self.alpha(t), self.sigma(t));
            if !(a > 0.0 && a <= 1.0 && s > 0.0 && s <= 1.0) {
                return Err(CoreError::InvalidSchedule(format!("t = {t}: α = {a}, σ = {s}")));
            }
            if t > 1 && self.lambda(t) >= self.lambda(t - 1) {
                return Err(CoreError::InvalidSchedule(format!("λ not decreasing at t = {t}")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    pub fn lambda(&self, t: usize) -> f64 {
        self.lambda[t - 1]
    }

    /// ᾱ_t, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(CoreError::TimestepOutOfRange { t, max: self.steps() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_schedule_is_monotone() {
        for kind in [ScheduleKind::LinearVp, ScheduleKind::CosineVp] {
            let s = NoiseSchedule::new(2, kind).unwrap();
            assert!(s.lambda(1) > s.lambda(2));
        }
    }

    #[test]
    fn rejects_single_step_and_unknown_kind() {
        assert!(NoiseSchedule::new(1, ScheduleKind::LinearVp).is_err());
        assert!(ScheduleKind::parse("sigmoid").is_err());
        assert_eq!(ScheduleKind::parse("cosine_vp").unwrap(), ScheduleKind::CosineVp);
    }

    #[test]
    fn cosine_endpoints() {
        let s = NoiseSchedule::new(50, ScheduleKind::CosineVp).unwrap();
        // closed form at t = 1: cos²((1/50 + 0.008)/1.008 · π/2) / cos²(0.008/1.008 · π/2)
        let f = |x: f64| libm::cos((x + 0.008) / 1.008 * core::f64::consts::FRAC_PI_2).powi(2);
        let expected = libm::sqrt(f(1.0 / 50.0) / f(0.0));
        assert!((s.alpha(1) - expected).abs() < 1e-12);
        assert!(s.alpha(1) > 0.99);
        assert!(s.alpha(50) < 0.05);
    }

    #[test]
    fn vp_identity_across_sizes() {
        for kind in [ScheduleKind::LinearVp, ScheduleKind::CosineVp] {
            for steps in [2, 10, 50, 200] {
                let s = NoiseSchedule::new(steps, kind).unwrap();
                for t in 1..=steps {
                    let v = s.alpha(t).powi(2) + s.sigma(t).powi(2);
                    assert!((v - 1.0).abs() < 1e-9, "{kind:?} T={steps} t={t}: {v}");
                }
            }
        }
    }
}
