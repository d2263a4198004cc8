//! Forward process, ε-prediction training loss and ancestral sampling.

use alloc::vec;
use alloc::vec::Vec;

use crate::denoiser::Denoiser;
use crate::error::{CoreError, Result};
use crate::optim::{clip_grad_norm, Adam};
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

/// A loss value together with its gradient over all denoiser parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// One clean training example `(y₀, c)`.
#[derive(Debug, Clone, Copy)]
pub struct Conditioned<'a> {
    pub image: &'a [f64],
    pub cond: &'a [f64],
}

/// `y_t = α_t y₀ + σ_t ε`.
pub fn forward_diffuse(y0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_t(t)?;
    if eps.len() != y0.len() {
        return Err(CoreError::ShapeMismatch {
            expected: y0.len(),
            actual: eps.len(),
        });
    }
    Ok(diffuse(y0, t, eps, schedule))
}

pub(crate) fn diffuse(y0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Vec<f64> {
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    y0.iter().zip(eps).map(|(y, e)| a * y + s * e).collect()
}

/// Squared noise-prediction error `‖ε - ε̂‖²`.
pub fn noise_error(eps: &[f64], pred: &[f64]) -> f64 {
    crate::math::sq_dist(eps, pred)
}

/// Monte-Carlo ε-prediction loss: mean over the batch of
/// `‖ε - ε_θ(y_t, t, c)‖²` with `t ~ U{1..T}`, `ε ~ N(0, I)` drawn from `rng`
/// (per example: `t` first, then `ε`).
pub fn pretrain_loss(
    denoiser: &Denoiser,
    batch: &[Conditioned<'_>],
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(CoreError::Empty("batch"));
    }
    let cfg = denoiser.config();
    let mut grad = vec![0.0; denoiser.num_params()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        if ex.image.len() != cfg.image_dim || ex.cond.len() != cfg.cond_dim {
            return Err(CoreError::ShapeMismatch {
                expected: cfg.image_dim + cfg.cond_dim,
                actual: ex.image.len() + ex.cond.len(),
            });
        }
        let t = 1 + rng.below(schedule.steps());
        let eps = rng.normal_vec(cfg.image_dim);
        let y_t = diffuse(ex.image, t, &eps, schedule);
        let (pred, cache) = denoiser.forward(&y_t, t, ex.cond);
        loss += noise_error(&eps, &pred) * scale;
        let d_out: Vec<f64> = pred.iter().zip(&eps).map(|(p, e)| 2.0 * (p - e) * scale).collect();
        denoiser.backward(&cache, &d_out, &mut grad);
    }
    Ok(LossGrad { loss, grad })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 64,
            learning_rate: 2e-3,
            grad_clip: Some(50.0),
            seed: 0,
        }
    }
}

/// Minimise [`pretrain_loss`] with Adam over minibatches drawn from
/// reshuffled passes through `corpus`. Returns the trained model and the
/// per-step losses.
pub fn pretrain(
    init: &Denoiser,
    corpus: &[Conditioned<'_>],
    schedule: &NoiseSchedule,
    config: &PretrainConfig,
) -> Result<(Denoiser, Vec<f64>)> {
    if corpus.is_empty() {
        return Err(CoreError::Empty("pretraining corpus"));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(CoreError::InvalidConfig("batch size and learning rate must be positive".into()));
    }
    let mut model = init.clone();
    let mut adam = Adam::new(model.num_params(), config.learning_rate);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = corpus.len();
    let mut pass = 0;
    let mut losses = Vec::with_capacity(config.steps);
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 0..config.steps {
        batch.clear();
        while batch.len() < config.batch_size.min(corpus.len()) {
            if cursor == corpus.len() {
                SeededRng::derived(config.seed, "pretrain-shuffle", pass).shuffle(&mut order);
                pass += 1;
                cursor = 0;
            }
            batch.push(corpus[order[cursor]]);
            cursor += 1;
        }
        let mut rng = SeededRng::derived(config.seed, "pretrain-step", step as u64);
        let mut lg = pretrain_loss(&model, &batch, schedule, &mut rng)?;
        if !lg.loss.is_finite() {
            return Err(CoreError::Divergence { step, loss: lg.loss });
        }
        if let Some(c) = config.grad_clip {
            clip_grad_norm(&mut lg.grad, c);
        }
        adam.step(model.params_mut(), &lg.grad);
        losses.push(lg.loss);
    }
    model.check_finite()?;
    Ok((model, losses))
}

/// Ancestral DDPM sampling from `y_T ~ N(0, I)` using the ε-prediction
/// posterior mean, with the implied `ŷ₀` clipped to `[-1, 1]` at every step.
pub fn sample(denoiser: &Denoiser, cond: &[f64], schedule: &NoiseSchedule, seed: u64) -> Result<Vec<f64>> {
    let cfg = denoiser.config();
    if cond.len() != cfg.cond_dim {
        return Err(CoreError::ShapeMismatch {
            expected: cfg.cond_dim,
            actual: cond.len(),
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut y = rng.normal_vec(cfg.image_dim);
    for t in (1..=schedule.steps()).rev() {
        let (eps_hat, _) = denoiser.forward(&y, t, cond);
        let ab_t = schedule.alpha_bar(t);
        let ab_prev = schedule.alpha_bar(t - 1);
        let one_minus_ab = schedule.sigma(t) * schedule.sigma(t);
        let beta_t = 1.0 - ab_t / ab_prev;
        let (a_t, s_t) = (schedule.alpha(t), schedule.sigma(t));
        let c0 = libm::sqrt(ab_prev) * beta_t / one_minus_ab;
        let ct = libm::sqrt(1.0 - beta_t) * (1.0 - ab_prev) / one_minus_ab;
        let std = if t > 1 {
            libm::sqrt(beta_t * (1.0 - ab_prev) / one_minus_ab)
        } else {
            0.0
        };
        for (yi, e) in y.iter_mut().zip(&eps_hat) {
            let x0 = ((*yi - s_t * e) / a_t).clamp(-1.0, 1.0);
            *yi = c0 * x0 + ct * *yi;
        }
        if t > 1 {
            for yi in y.iter_mut() {
                *yi += std * rng.normal();
            }
        }
    }
    for yi in y.iter_mut() {
        *yi = yi.clamp(-1.0, 1.0);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;
    use crate::gradcheck::{grad_check, GradCheckOptions};
    use crate::schedule::ScheduleKind;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::new(50, ScheduleKind::CosineVp).unwrap()
    }

    #[test]
    fn noiseless_and_zero_signal_limits() {
        let s = sched();
        let y0 = [0.5, -0.25, 1.0];
        let z = forward_diffuse(&y0, 7, &[0.0; 3], &s).unwrap();
        for (a, b) in z.iter().zip(&y0) {
            assert_eq!(*a, s.alpha(7) * b);
        }
        let eps = [1.0, -2.0, 0.5];
        let z = forward_diffuse(&[0.0; 3], 7, &eps, &s).unwrap();
        for (a, b) in z.iter().zip(&eps) {
            assert_eq!(*a, s.sigma(7) * b);
        }
    }

    #[test]
    fn out_of_range_timestep() {
        let s = sched();
        assert!(matches!(
            forward_diffuse(&[0.0], 0, &[0.0], &s),
            Err(CoreError::TimestepOutOfRange { .. })
        ));
        assert!(forward_diffuse(&[0.0], 51, &[0.0], &s).is_err());
        assert!(forward_diffuse(&[0.0], 1, &[0.0, 1.0], &s).is_err());
    }

    #[test]
    fn zero_predictor_loss_is_image_dimension() {
        let cfg = DenoiserConfig::default();
        let d = Denoiser::zeros(cfg).unwrap();
        let img = vec![0.3; 192];
        let cond = vec![0.0; cfg.cond_dim];
        let batch: Vec<Conditioned> = (0..400).map(|_| Conditioned { image: &img, cond: &cond }).collect();
        let mut rng = SeededRng::new(3);
        let lg = pretrain_loss(&d, &batch, &sched(), &mut rng).unwrap();
        // chi-square(192) mean 192, sd √384 ≈ 19.6, averaged over 400 → sd ≈ 0.98
        assert!((lg.loss - 192.0).abs() < 4.0, "{}", lg.loss);
    }

    #[test]
    fn pretrain_gradient_matches_finite_differences() {
        let cfg = DenoiserConfig {
            image_dim: 12,
            time_dim: 4,
            cond_dim: 4,
            hidden: 8,
        };
        assert!(cfg.num_params() <= 1000);
        let d = Denoiser::init(cfg, 4).unwrap();
        let mut r = SeededRng::new(1);
        let imgs: Vec<Vec<f64>> = (0..3).map(|_| r.normal_vec(12)).collect();
        let conds: Vec<Vec<f64>> = (0..3).map(|_| r.normal_vec(4)).collect();
        let batch: Vec<Conditioned> = imgs
            .iter()
            .zip(&conds)
            .map(|(i, c)| Conditioned { image: i, cond: c })
            .collect();
        let s = NoiseSchedule::new(10, ScheduleKind::LinearVp).unwrap();
        let report = grad_check(
            d.params(),
            |p| {
                let m = Denoiser::from_params(cfg, p.to_vec()).unwrap();
                let lg = pretrain_loss(&m, &batch, &s, &mut SeededRng::new(77)).unwrap();
                (lg.loss, lg.grad)
            },
            GradCheckOptions::default(),
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let d = Denoiser::init(DenoiserConfig::default(), 2).unwrap();
        let c = vec![0.1; DenoiserConfig::default().cond_dim];
        let a = sample(&d, &c, &sched(), 5).unwrap();
        let b = sample(&d, &c, &sched(), 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_ne!(a, sample(&d, &c, &sched(), 6).unwrap());
    }

    #[test]
    fn pretraining_reduces_loss_deterministically() {
        let cfg = DenoiserConfig {
            image_dim: 12,
            time_dim: 4,
            cond_dim: 4,
            hidden: 16,
        };
        let init = Denoiser::init(cfg, 1).unwrap();
        let mut r = SeededRng::new(2);
        let imgs: Vec<Vec<f64>> = (0..4).map(|_| r.normal_vec(12).iter().map(|v| v.clamp(-1.0, 1.0)).collect()).collect();
        let conds: Vec<Vec<f64>> = (0..4).map(|_| r.normal_vec(4)).collect();
        let corpus: Vec<Conditioned> = imgs.iter().zip(&conds).map(|(i, c)| Conditioned { image: i, cond: c }).collect();
        let s = NoiseSchedule::new(10, ScheduleKind::CosineVp).unwrap();
        let pc = PretrainConfig { steps: 400, batch_size: 4, learning_rate: 1e-2, grad_clip: None, seed: 3 };
        let (a, la) = pretrain(&init, &corpus, &s, &pc).unwrap();
        let (b, lb) = pretrain(&init, &corpus, &s, &pc).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(la, lb);
        let head: f64 = la[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = la[350..].iter().sum::<f64>() / 50.0;
        assert!(tail < 0.7 * head, "{head} -> {tail}");
    }
}
