//! Alignment trainer: one deterministic SGD loop over a preference dataset
//! against a frozen copy of the pretrained model.

use alloc::vec;
use alloc::vec::Vec;

use super::losses::{
    cross_validation_loss, diffusion_dpo_loss, sft_loss, text_contrast_loss, CrossNoise, CrossValForm,
    LossScale, OmegaMode,
};
use super::PreferenceSample;
use crate::denoiser::Denoiser;
use crate::diffusion::{Conditioned, LossGrad};
use crate::error::{CoreError, Result};
use crate::optim::{clip_grad_norm, Sgd};
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    #[default]
    CrossVal,
    DiffusionDpo,
    Sft,
    RetainDiscarded,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::CrossVal,
        Variant::DiffusionDpo,
        Variant::Sft,
        Variant::RetainDiscarded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::CrossVal => "cross_val",
            Variant::DiffusionDpo => "diffusion_dpo",
            Variant::Sft => "sft",
            Variant::RetainDiscarded => "retain_discarded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// Names of the per-step loss components logged for this variant.
    pub fn components(self) -> &'static [&'static str] {
        match self {
            Variant::RetainDiscarded => &["image_contrast", "text_contrast"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub beta: f64,
    pub omega: OmegaMode,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub variant: Variant,
    pub master_seed: u64,
    pub cross_val_form: CrossValForm,
    /// One noise draw reused for every `Δ` term of a sample.
    pub shared_noise: bool,
    pub grad_clip: Option<f64>,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            omega: OmegaMode::ConstantOne,
            learning_rate: 1e-6,
            momentum: 0.9,
            batch_size: 64,
            epochs: 10,
            variant: Variant::CrossVal,
            master_seed: 0,
            cross_val_form: CrossValForm::Symmetric,
            shared_noise: false,
            grad_clip: None,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        LossScale::new(self.beta, self.omega)?;
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::InvalidConfig("learning rate must be positive, momentum in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(CoreError::InvalidConfig("batch size and epochs must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(CoreError::InvalidConfig("grad clip must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    /// Values in the order of [`Variant::components`].
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub variant: Variant,
    pub points: Vec<CurvePoint>,
}

impl LossCurve {
    pub fn component_names(&self) -> &'static [&'static str] {
        self.variant.components()
    }

    /// Series for one component, by name.
    pub fn component(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.component_names().iter().position(|n| *n == name)?;
        Some(self.points.iter().map(|p| p.components[i]).collect())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.loss).collect()
    }
}

struct SampleLoss {
    lg: LossGrad,
    components: Vec<f64>,
}

fn sample_loss(
    model: &Denoiser,
    reference: &Denoiser,
    sample: &PreferenceSample,
    schedule: &NoiseSchedule,
    config: &AlignConfig,
    scale: &LossScale,
    rng: &mut SeededRng,
) -> Result<SampleLoss> {
    let dim = model.config().image_dim;
    let pair = sample.view();
    match config.variant {
        Variant::CrossVal => {
            let t = 1 + rng.below(schedule.steps());
            let noise = CrossNoise::draw(dim, config.shared_noise, rng);
            let lg = cross_validation_loss(model, reference, pair, t, &noise, schedule, scale, config.cross_val_form)?;
            Ok(SampleLoss { lg, components: Vec::new() })
        }
        Variant::DiffusionDpo => {
            // One unpaired instruction per sample.
            let t = 1 + rng.below(schedule.steps());
            let (c, w, l) = if rng.bernoulli(0.5) {
                (pair.x1, pair.y1, pair.y2)
            } else {
                (pair.x2, pair.y2, pair.y1)
            };
            let eps_w = rng.normal_vec(dim);
            let eps_l = if config.shared_noise {
                eps_w.clone()
            } else {
                rng.normal_vec(dim)
            };
            let lg = diffusion_dpo_loss(model, reference, c, w, l, t, &eps_w, &eps_l, schedule, scale)?;
            Ok(SampleLoss { lg, components: Vec::new() })
        }
        Variant::Sft => {
            let batch = [
                Conditioned { image: pair.y1, cond: pair.x1 },
                Conditioned { image: pair.y2, cond: pair.x2 },
            ];
            let lg = sft_loss(model, &batch, schedule, rng)?;
            Ok(SampleLoss { lg, components: Vec::new() })
        }
        Variant::RetainDiscarded => {
            let t = 1 + rng.below(schedule.steps());
            let noise = CrossNoise::draw(dim, config.shared_noise, rng);
            let image =
                cross_validation_loss(model, reference, pair, t, &noise, schedule, scale, config.cross_val_form)?;
            // The two text-contrast triples (y1, x1, x2) and (y2, x2, x1),
            // each with its own shared noise.
            let e1 = rng.normal_vec(dim);
            let e2 = rng.normal_vec(dim);
            let a = text_contrast_loss(model, reference, pair.y1, pair.x1, pair.x2, t, &e1, schedule, scale)?;
            let b = text_contrast_loss(model, reference, pair.y2, pair.x2, pair.x1, t, &e2, schedule, scale)?;
            let text = 0.5 * (a.loss + b.loss);
            let grad = image
                .grad
                .iter()
                .zip(a.grad.iter().zip(&b.grad))
                .map(|(g, (x, y))| g + 0.5 * (x + y))
                .collect();
            Ok(SampleLoss {
                lg: LossGrad { loss: image.loss + text, grad },
                components: vec![image.loss, text],
            })
        }
    }
}

/// Align a copy of `pretrained` on `dataset`. The reference model is a
/// frozen copy of `pretrained`. Returns the trained model and the per-step
/// loss curve; identical inputs give bit-identical outputs.
pub fn train_align(
    pretrained: &Denoiser,
    dataset: &[PreferenceSample],
    schedule: &NoiseSchedule,
    config: &AlignConfig,
) -> Result<(Denoiser, LossCurve)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(CoreError::Empty("dataset"));
    }
    pretrained.check_finite()?;
    let scale = LossScale::new(config.beta, config.omega)?;
    let reference = pretrained.clone();
    let mut model = pretrained.clone();
    let mut opt = Sgd::new(model.num_params(), config.learning_rate, config.momentum);
    let mut curve = LossCurve {
        variant: config.variant,
        points: Vec::new(),
    };
    let n_components = config.variant.components().len();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        SeededRng::derived(config.master_seed, "align-shuffle", epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let mut rng = SeededRng::derived(config.master_seed, "align-step", step as u64);
            let mut grad = vec![0.0; model.num_params()];
            let mut loss = 0.0;
            let mut components = vec![0.0; n_components];
            let k = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let s = sample_loss(&model, &reference, &dataset[i], schedule, config, &scale, &mut rng)?;
                loss += k * s.lg.loss;
                for (c, v) in components.iter_mut().zip(&s.components) {
                    *c += k * v;
                }
                for (g, v) in grad.iter_mut().zip(&s.lg.grad) {
                    *g += k * v;
                }
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(CoreError::Divergence { step, loss });
            }
            if let Some(c) = config.grad_clip {
                clip_grad_norm(&mut grad, c);
            }
            opt.step(model.params_mut(), &grad);
            curve.points.push(CurvePoint { step, loss, components });
            step += 1;
        }
    }
    model.check_finite()?;
    Ok((model, curve))
}
