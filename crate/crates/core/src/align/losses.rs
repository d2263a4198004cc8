//! Diffusion preference losses built from noise-prediction error
//! differences `Δ = δ_θ − δ_ref`, where `δ = ‖ε − ε̂(y_t, t, c)‖²`.
//!
//! Every loss here has the shape `softplus(s · D)` with `s = β·T·ω(λ_t)`
//! and `D` a signed sum of `Δ` terms, which equals `−log σ(−s·D)`. The
//! reference model is frozen, so `∇D` only involves the trained model.

use alloc::vec;
use alloc::vec::Vec;

use crate::denoiser::{Denoiser, ForwardCache};
use crate::diffusion::{diffuse, pretrain_loss, Conditioned, LossGrad};
use crate::error::{CoreError, Result};
use crate::math::{sigmoid, softplus, sq_dist};
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

/// Timestep weighting `ω(λ_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OmegaMode {
    #[default]
    ConstantOne,
    /// `ω = λ_t = α_t² / σ_t²`.
    Snr,
}

impl OmegaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OmegaMode::ConstantOne => "constant_one",
            OmegaMode::Snr => "snr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant_one" => Some(OmegaMode::ConstantOne),
            "snr" => Some(OmegaMode::Snr),
            _ => None,
        }
    }
}

/// How the two instruction-wise differences of the cross-validation loss
/// are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CrossValForm {
    /// `(Δ_{x1}^w − Δ_{x1}^l) + (Δ_{x2}^w − Δ_{x2}^l)` inside one sigmoid.
    #[default]
    Symmetric,
    /// `(Δ_{x1}^w − Δ_{x1}^l) + (Δ_{x2}^w − Δ_{x1}^l)`; `Δ_{x2}^l` is unused.
    Literal,
    /// Mean of the two per-instruction losses, each in its own sigmoid.
    Split,
}

impl CrossValForm {
    pub fn as_str(self) -> &'static str {
        match self {
            CrossValForm::Symmetric => "symmetric",
            CrossValForm::Literal => "literal",
            CrossValForm::Split => "split",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "symmetric" => Some(CrossValForm::Symmetric),
            "literal" => Some(CrossValForm::Literal),
            "split" => Some(CrossValForm::Split),
            _ => None,
        }
    }
}

/// `β` and `ω`; together with the schedule they fix `s = β·T·ω(λ_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossScale {
    pub beta: f64,
    pub omega: OmegaMode,
}

impl LossScale {
    pub fn new(beta: f64, omega: OmegaMode) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(CoreError::InvalidConfig("beta must be positive".into()));
        }
        Ok(Self { beta, omega })
    }

    pub fn at(&self, schedule: &NoiseSchedule, t: usize) -> f64 {
        let w = match self.omega {
            OmegaMode::ConstantOne => 1.0,
            OmegaMode::Snr => schedule.lambda(t),
        };
        self.beta * schedule.steps() as f64 * w
    }
}

/// Borrowed conditions and images of one preference sample.
#[derive(Debug, Clone, Copy)]
pub struct PairView<'a> {
    pub x1: &'a [f64],
    pub x2: &'a [f64],
    pub y1: &'a [f64],
    pub y2: &'a [f64],
}

/// Noise for the four `Δ` terms of the cross-validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossNoise {
    pub w1: Vec<f64>,
    pub l1: Vec<f64>,
    pub w2: Vec<f64>,
    pub l2: Vec<f64>,
}

impl CrossNoise {
    /// Four independent draws, or one draw reused four times.
    pub fn draw(dim: usize, shared: bool, rng: &mut SeededRng) -> Self {
        let w1 = rng.normal_vec(dim);
        if shared {
            return Self {
                l1: w1.clone(),
                w2: w1.clone(),
                l2: w1.clone(),
                w1,
            };
        }
        Self {
            w1,
            l1: rng.normal_vec(dim),
            w2: rng.normal_vec(dim),
            l2: rng.normal_vec(dim),
        }
    }
}

fn check_shapes(model: &Denoiser, reference: &Denoiser, image: &[f64], cond: &[f64], eps: &[f64]) -> Result<()> {
    if model.config() != reference.config() {
        return Err(CoreError::InvalidConfig("model and reference architectures differ".into()));
    }
    let cfg = model.config();
    for (expected, actual) in [
        (cfg.image_dim, image.len()),
        (cfg.cond_dim, cond.len()),
        (cfg.image_dim, eps.len()),
    ] {
        if expected != actual {
            return Err(CoreError::ShapeMismatch { expected, actual });
        }
    }
    Ok(())
}

/// `Δ = δ_θ(ε, y_t, t, c) − δ_ref(ε, y_t, t, c)` with `y_t` computed once
/// and fed to both models.
pub fn delta(
    model: &Denoiser,
    reference: &Denoiser,
    eps: &[f64],
    y: &[f64],
    t: usize,
    cond: &[f64],
    schedule: &NoiseSchedule,
) -> Result<f64> {
    schedule.check_t(t)?;
    check_shapes(model, reference, y, cond, eps)?;
    let y_t = diffuse(y, t, eps, schedule);
    let (p, _) = model.forward(&y_t, t, cond);
    let (q, _) = reference.forward(&y_t, t, cond);
    Ok(sq_dist(eps, &p) - sq_dist(eps, &q))
}

struct Term<'a> {
    image: &'a [f64],
    cond: &'a [f64],
    eps: &'a [f64],
    coef: f64,
}

struct Evaluated<'a> {
    eps: &'a [f64],
    coef: f64,
    pred: Vec<f64>,
    cache: ForwardCache,
}

/// Evaluate `D = Σ coef_i Δ_i`, keeping what the backward pass needs.
fn signed_sum<'a>(
    model: &Denoiser,
    reference: &Denoiser,
    terms: &[Term<'a>],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<(f64, Vec<Evaluated<'a>>)> {
    schedule.check_t(t)?;
    let mut d = 0.0;
    let mut out = Vec::with_capacity(terms.len());
    for term in terms {
        check_shapes(model, reference, term.image, term.cond, term.eps)?;
        let y_t = diffuse(term.image, t, term.eps, schedule);
        let (pred, cache) = model.forward(&y_t, t, term.cond);
        let (pred_ref, _) = reference.forward(&y_t, t, term.cond);
        d += term.coef * (sq_dist(term.eps, &pred) - sq_dist(term.eps, &pred_ref));
        out.push(Evaluated {
            eps: term.eps,
            coef: term.coef,
            pred,
            cache,
        });
    }
    Ok((d, out))
}

/// Accumulate `outer · ∇D` into `grad`.
fn backprop(model: &Denoiser, evaluated: &[Evaluated<'_>], outer: f64, grad: &mut [f64]) {
    for e in evaluated {
        let k = 2.0 * outer * e.coef;
        let d_out: Vec<f64> = e.pred.iter().zip(e.eps).map(|(p, n)| k * (p - n)).collect();
        model.backward(&e.cache, &d_out, grad);
    }
}

/// `softplus(s · D)` and its gradient.
fn sigmoid_loss(
    model: &Denoiser,
    reference: &Denoiser,
    terms: &[Term<'_>],
    t: usize,
    s: f64,
    schedule: &NoiseSchedule,
) -> Result<(LossGrad, f64)> {
    let (d, evaluated) = signed_sum(model, reference, terms, t, schedule)?;
    let loss = softplus(s * d);
    let mut grad = vec![0.0; model.num_params()];
    backprop(model, &evaluated, s * sigmoid(s * d), &mut grad);
    Ok((LossGrad { loss, grad }, d))
}

/// Diffusion-DPO on one triple `(c, y_w, y_l)` at a shared `t`:
/// `−log σ(−s(Δ_w − Δ_l))`.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_dpo_loss(
    model: &Denoiser,
    reference: &Denoiser,
    cond: &[f64],
    y_w: &[f64],
    y_l: &[f64],
    t: usize,
    eps_w: &[f64],
    eps_l: &[f64],
    schedule: &NoiseSchedule,
    scale: &LossScale,
) -> Result<LossGrad> {
    let terms = [
        Term { image: y_w, cond, eps: eps_w, coef: 1.0 },
        Term { image: y_l, cond, eps: eps_l, coef: -1.0 },
    ];
    Ok(sigmoid_loss(model, reference, &terms, t, scale.at(schedule, t), schedule)?.0)
}

/// The cross-validation loss over both instructions of a sample. `Δ_{x1}^w`
/// pairs `(x1, y1)`, `Δ_{x1}^l` pairs `(x1, y2)`, `Δ_{x2}^w` pairs `(x2, y2)`
/// and `Δ_{x2}^l` pairs `(x2, y1)`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validation_loss(
    model: &Denoiser,
    reference: &Denoiser,
    pair: PairView<'_>,
    t: usize,
    noise: &CrossNoise,
    schedule: &NoiseSchedule,
    scale: &LossScale,
    form: CrossValForm,
) -> Result<LossGrad> {
    let s = scale.at(schedule, t);
    let w1 = Term { image: pair.y1, cond: pair.x1, eps: &noise.w1, coef: 1.0 };
    let l1 = Term { image: pair.y2, cond: pair.x1, eps: &noise.l1, coef: -1.0 };
    let w2 = Term { image: pair.y2, cond: pair.x2, eps: &noise.w2, coef: 1.0 };
    match form {
        CrossValForm::Symmetric => {
            let l2 = Term { image: pair.y1, cond: pair.x2, eps: &noise.l2, coef: -1.0 };
            Ok(sigmoid_loss(model, reference, &[w1, l1, w2, l2], t, s, schedule)?.0)
        }
        CrossValForm::Literal => {
            let l1 = Term { coef: -2.0, ..l1 };
            Ok(sigmoid_loss(model, reference, &[w1, l1, w2], t, s, schedule)?.0)
        }
        CrossValForm::Split => {
            let l2 = Term { image: pair.y1, cond: pair.x2, eps: &noise.l2, coef: -1.0 };
            let (a, _) = sigmoid_loss(model, reference, &[w1, l1], t, s, schedule)?;
            let (b, _) = sigmoid_loss(model, reference, &[w2, l2], t, s, schedule)?;
            Ok(LossGrad {
                loss: 0.5 * (a.loss + b.loss),
                grad: a.grad.iter().zip(&b.grad).map(|(x, y)| 0.5 * (x + y)).collect(),
            })
        }
    }
}

/// Contrast between two conditions for one image, with the image, `ε` and
/// `t` shared: `−log σ(−s(Δ(c_w) − Δ(c_l)))`.
#[allow(clippy::too_many_arguments)]
pub fn text_contrast_loss(
    model: &Denoiser,
    reference: &Denoiser,
    image: &[f64],
    cond_w: &[f64],
    cond_l: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
    scale: &LossScale,
) -> Result<LossGrad> {
    let terms = [
        Term { image, cond: cond_w, eps, coef: 1.0 },
        Term { image, cond: cond_l, eps, coef: -1.0 },
    ];
    Ok(sigmoid_loss(model, reference, &terms, t, scale.at(schedule, t), schedule)?.0)
}

/// Supervised fine-tuning on matched pairs: the pretraining objective.
pub fn sft_loss(
    model: &Denoiser,
    batch: &[Conditioned<'_>],
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<LossGrad> {
    pretrain_loss(model, batch, schedule, rng)
}

/// Reference-relative form of the supervised objective on one matched pair,
/// `−log σ(−s·Δ)`; lowering the model's error below the reference's
/// decreases it.
#[allow(clippy::too_many_arguments)]
pub fn sft_relative_loss(
    model: &Denoiser,
    reference: &Denoiser,
    cond: &[f64],
    image: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
    scale: &LossScale,
) -> Result<LossGrad> {
    let terms = [Term { image, cond, eps, coef: 1.0 }];
    Ok(sigmoid_loss(model, reference, &terms, t, scale.at(schedule, t), schedule)?.0)
}
