//! Run configuration, read from TOML. Every field has a default so a file
//! only needs the values it changes.

use std::path::Path;

use prefalign_core::align::{AlignConfig, CrossValForm, OmegaMode, Variant};
use prefalign_core::diffusion::PretrainConfig;
use prefalign_core::world::{CandidateConfig, WorldConfig};
use prefalign_core::{DenoiserConfig, NoiseSchedule, ScheduleKind};
use serde::{Deserialize, Serialize};

use crate::clients::http::HttpConfig;
use crate::error::{Error, Result};
use crate::forge::{ForgeConfig, Selection};
use crate::io;
use crate::taxonomy::{ExpansionConfig, TaxonomyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxonomySection {
    pub themes: usize,
    pub subtopics_per_theme: usize,
    pub seed_corpus_size: usize,
    pub max_rounds: usize,
    pub tau_merge: f64,
    pub pool_size: usize,
}

impl Default for TaxonomySection {
    fn default() -> Self {
        let d = TaxonomyConfig::default();
        Self {
            themes: d.themes,
            subtopics_per_theme: d.subtopics_per_theme,
            seed_corpus_size: d.seed_corpus_size,
            max_rounds: d.expansion.max_rounds,
            tau_merge: d.expansion.tau_merge,
            pool_size: d.expansion.pool_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeSection {
    pub entity_candidates: usize,
    pub max_entities_per_subtopic: usize,
    pub tau_sim: f64,
    pub candidates_k: usize,
    pub noise_level: f64,
    pub p_corrupt: f64,
    pub selection: Selection,
    /// Consistency threshold of the oracle judge.
    pub judge_tau: f64,
}

impl Default for ForgeSection {
    fn default() -> Self {
        let f = ForgeConfig::default();
        Self {
            entity_candidates: f.entity_candidates,
            max_entities_per_subtopic: f.max_entities_per_subtopic,
            tau_sim: f.tau_sim,
            candidates_k: f.candidates.k,
            noise_level: f.candidates.noise_level,
            p_corrupt: f.candidates.p_corrupt,
            selection: f.selection,
            judge_tau: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Also the embedding width.
    pub cond_dim: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub schedule: ScheduleKind,
    pub timesteps: usize,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = DenoiserConfig::default();
        Self {
            cond_dim: d.cond_dim,
            hidden: d.hidden,
            time_dim: d.time_dim,
            schedule: ScheduleKind::CosineVp,
            timesteps: 50,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: Option<f64>,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            steps: d.steps,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            grad_clip: d.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub variant: Variant,
    pub beta: f64,
    pub omega: OmegaMode,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub cross_val_form: CrossValForm,
    pub shared_noise: bool,
    pub grad_clip: Option<f64>,
}

impl Default for AlignSection {
    fn default() -> Self {
        let d = AlignConfig::default();
        Self {
            variant: d.variant,
            beta: d.beta,
            omega: d.omega,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            batch_size: d.batch_size,
            epochs: d.epochs,
            cross_val_form: d.cross_val_form,
            shared_noise: d.shared_noise,
            grad_clip: d.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub prompts: usize,
    /// Samples drawn per prompt.
    pub samples: usize,
    /// Composite difference below which a comparison is a tie.
    pub tie_margin: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            prompts: 200,
            samples: 1,
            tie_margin: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub backend: Backend,
    pub taxonomy: TaxonomySection,
    pub forge: ForgeSection,
    pub world: WorldConfig,
    pub model: ModelSection,
    pub pretrain: PretrainSection,
    pub align: AlignSection,
    pub eval: EvalSection,
    pub http: HttpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backend: Backend::Mock,
            taxonomy: TaxonomySection::default(),
            forge: ForgeSection::default(),
            world: WorldConfig::default(),
            model: ModelSection::default(),
            pretrain: PretrainSection::default(),
            align: AlignSection::default(),
            eval: EvalSection::default(),
            http: HttpConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::format(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::format(path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        io::sha256_hex(serde_json::to_string(self).expect("config serialises").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.cond_dim == 0 {
            return Err(Error::Invalid("cond_dim must be positive".into()));
        }
        if self.backend == Backend::Http && self.http.embedding_dim != self.model.cond_dim {
            return Err(Error::Invalid(format!(
                "http.embedding_dim {} must equal model.cond_dim {}",
                self.http.embedding_dim, self.model.cond_dim
            )));
        }
        if !(self.forge.tau_sim > -1.0 && self.forge.tau_sim < 1.0) {
            return Err(Error::Invalid("tau_sim outside (-1, 1)".into()));
        }
        if self.forge.candidates_k == 0 || self.eval.prompts == 0 || self.eval.samples == 0 {
            return Err(Error::Invalid("candidate, prompt and sample counts must be positive".into()));
        }
        self.denoiser_config().validate()?;
        self.align_config().validate()?;
        self.schedule()?;
        Ok(())
    }

    pub fn taxonomy_config(&self) -> TaxonomyConfig {
        let t = &self.taxonomy;
        TaxonomyConfig {
            themes: t.themes,
            subtopics_per_theme: t.subtopics_per_theme,
            seed_corpus_size: t.seed_corpus_size,
            expansion: ExpansionConfig {
                max_rounds: t.max_rounds,
                tau_merge: t.tau_merge,
                pool_size: t.pool_size,
            },
        }
    }

    pub fn forge_config(&self) -> ForgeConfig {
        let f = &self.forge;
        ForgeConfig {
            entity_candidates: f.entity_candidates,
            max_entities_per_subtopic: f.max_entities_per_subtopic,
            tau_sim: f.tau_sim,
            candidates: CandidateConfig {
                k: f.candidates_k,
                noise_level: f.noise_level,
                p_corrupt: f.p_corrupt,
            },
            selection: f.selection,
            world: self.world,
        }
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            image_dim: self.world.shape.len(),
            time_dim: self.model.time_dim,
            cond_dim: self.model.cond_dim,
            hidden: self.model.hidden,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::new(self.model.timesteps, self.model.schedule)?)
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let p = &self.pretrain;
        PretrainConfig {
            steps: p.steps,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            grad_clip: p.grad_clip,
            seed: self.seed,
        }
    }

    pub fn align_config(&self) -> AlignConfig {
        let a = &self.align;
        AlignConfig {
            beta: a.beta,
            omega: a.omega,
            learning_rate: a.learning_rate,
            momentum: a.momentum,
            batch_size: a.batch_size,
            epochs: a.epochs,
            variant: a.variant,
            master_seed: self.seed,
            cross_val_form: a.cross_val_form,
            shared_noise: a.shared_noise,
            grad_clip: a.grad_clip,
        }
    }
}
