//! End-to-end stages shared by the command-line driver and the tests:
//! taxonomy, forging, pretraining, alignment, evaluation and ablation.

use std::collections::HashSet;

use prefalign_core::align::{train_align, LossCurve, Variant};
use prefalign_core::diffusion::{pretrain, Conditioned};
use prefalign_core::eval::{compare_reports, evaluate, EvalReport, Prompt, SamplerSource};
use prefalign_core::rng::derive_seed;
use prefalign_core::{Denoiser, Image, NoiseSchedule};

use crate::clients::http::HttpClient;
use crate::clients::mock::{seed_corpus, MockEmbedder, MockImageGen, MockJudge, MockMembership, MockTextGen};
use crate::clients::{Clients, Embedder, MembershipJudge, TextGen};
use crate::config::{Backend, RunConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forge::{build_samples, eval_prompts, forge_all, ForgeManifest, Selection};
use crate::taxonomy::{build_taxonomy, Taxonomy};

/// Owned client set for a run. Text, embedding and membership go to the
/// configured backend; candidate images and the image judge always come
/// from the synthetic world, whose oracle defines the scores.
pub struct Backends {
    text: Box<dyn TextGen>,
    embed: Box<dyn Embedder>,
    membership: Box<dyn MembershipJudge>,
    judge: MockJudge,
    images: MockImageGen,
}

impl Backends {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let (text, embed, membership): (Box<dyn TextGen>, Box<dyn Embedder>, Box<dyn MembershipJudge>) =
            match config.backend {
                Backend::Mock => (
                    Box::new(MockTextGen::new()),
                    Box::new(MockEmbedder::new(config.model.cond_dim, 0)),
                    Box::new(MockMembership),
                ),
                Backend::Http => (
                    Box::new(HttpClient::from_env(config.http.clone())?),
                    Box::new(HttpClient::from_env(config.http.clone())?),
                    Box::new(HttpClient::from_env(config.http.clone())?),
                ),
            };
        let forge = config.forge_config();
        Ok(Self {
            text,
            embed,
            membership,
            judge: MockJudge {
                world: config.world,
                tau: config.forge.judge_tau,
            },
            images: MockImageGen {
                world: config.world,
                candidates: forge.candidates,
            },
        })
    }

    pub fn clients(&self) -> Clients<'_> {
        Clients {
            text: self.text.as_ref(),
            embed: self.embed.as_ref(),
            membership: self.membership.as_ref(),
            judge: &self.judge,
            images: &self.images,
        }
    }
}

pub fn run_taxonomy(config: &RunConfig, backends: &Backends) -> Result<Taxonomy> {
    let corpus = seed_corpus(config.taxonomy.seed_corpus_size, config.seed);
    let c = backends.clients();
    let tax = build_taxonomy(&corpus, c.text, c.embed, &config.taxonomy_config(), config.seed)?;
    log::info!("taxonomy: {} themes, {} subtopics", tax.themes.len(), tax.subtopic_count());
    Ok(tax)
}

/// Entities, instruction pairs, judged preference samples and held-out
/// prompts for a taxonomy.
pub fn run_forge(config: &RunConfig, backends: &Backends, taxonomy: &Taxonomy) -> Result<(ForgeManifest, Dataset)> {
    let forge = config.forge_config();
    let c = backends.clients();
    let mut manifest = forge_all(taxonomy, &c, &forge, config.seed)?;
    let samples = build_samples(&mut manifest, &c, &forge, config.seed)?;
    let train: HashSet<String> = manifest
        .pairs
        .iter()
        .flat_map(|p| [p.pos_text.clone(), p.neg_text.clone()])
        .collect();
    let prompts = eval_prompts(
        &manifest.entities,
        &train,
        config.eval.prompts,
        derive_seed(config.seed, "eval", 0),
        c.embed,
    )?;
    log::info!("forge: {:?}", manifest.counts);
    let dataset = Dataset {
        image_shape: config.world.shape,
        cond_dim: config.model.cond_dim,
        samples,
        eval_prompts: prompts,
    };
    dataset.validate()?;
    Ok((manifest, dataset))
}

/// The base model's training set: every forged instruction (both sides of
/// every pair) with all of its raw candidates, before selection or judging.
pub fn pretrain_corpus(
    config: &RunConfig,
    backends: &Backends,
    manifest: &ForgeManifest,
) -> Result<Vec<(Vec<f64>, Image)>> {
    let c = backends.clients();
    let k = config.forge.candidates_k;
    let mut out = Vec::with_capacity(2 * k * manifest.pairs.len());
    for (i, pair) in manifest.pairs.iter().enumerate() {
        for (side, text) in [&pair.pos_text, &pair.neg_text].into_iter().enumerate() {
            let cond = c.embed.embed(text)?.into_values();
            let seed = derive_seed(config.seed, "candidates", 2 * i as u64 + side as u64);
            for img in c.images.generate(text, k, seed)? {
                out.push((cond.clone(), img));
            }
        }
    }
    Ok(out)
}

pub fn run_pretrain(config: &RunConfig, corpus: &[(Vec<f64>, Image)]) -> Result<(Denoiser, Vec<f64>)> {
    let schedule = config.schedule()?;
    let init = Denoiser::init(config.denoiser_config(), config.model.init_seed ^ config.seed)?;
    let view: Vec<Conditioned<'_>> = corpus
        .iter()
        .map(|(c, img)| Conditioned {
            image: &img.pixels,
            cond: c,
        })
        .collect();
    Ok(pretrain(&init, &view, &schedule, &config.pretrain_config())?)
}

pub fn run_align(
    config: &RunConfig,
    pretrained: &Denoiser,
    dataset: &Dataset,
    variant: Variant,
) -> Result<(Denoiser, LossCurve)> {
    let mut align = config.align_config();
    align.variant = variant;
    Ok(train_align(pretrained, &dataset.samples, &config.schedule()?, &align)?)
}

/// Sample seeds for evaluation, `stream` selecting an independent set.
pub fn eval_seeds(config: &RunConfig, stream: u64) -> Vec<u64> {
    (0..config.eval.samples as u64)
        .map(|j| derive_seed(config.seed, &format!("eval-seeds-{stream}"), j))
        .collect()
}

pub fn run_eval(
    config: &RunConfig,
    model: &Denoiser,
    schedule: &NoiseSchedule,
    prompts: &[Prompt],
    seeds: &[u64],
) -> Result<EvalReport> {
    let source = SamplerSource {
        denoiser: model,
        schedule,
        shape: config.world.shape,
    };
    Ok(evaluate(&source, prompts, &config.world, seeds)?)
}

pub const ORIGIN: &str = "origin";

/// One arm of an ablation: an alignment variant on the forged data, or
/// cross-validation alignment on data re-forged with random candidate
/// selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Align(Variant),
    RandomSelect,
}

impl Arm {
    pub const ALL: [Arm; 5] = [
        Arm::Align(Variant::CrossVal),
        Arm::Align(Variant::DiffusionDpo),
        Arm::Align(Variant::Sft),
        Arm::Align(Variant::RetainDiscarded),
        Arm::RandomSelect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Align(v) => v.as_str(),
            Arm::RandomSelect => "random_select",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    /// [`ORIGIN`] for the pretrained model, else the arm name.
    pub name: String,
    pub report: EvalReport,
    pub curve: Option<LossCurve>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub manifest: ForgeManifest,
    pub samples: usize,
    pub pretrain_losses: Vec<f64>,
    /// Origin first, then arms in request order.
    pub runs: Vec<VariantRun>,
    /// A second evaluation of the first arm with independent sample seeds.
    pub replicate: Option<EvalReport>,
}

impl SeedRun {
    pub fn get(&self, name: &str) -> Option<&VariantRun> {
        self.runs.iter().find(|r| r.name == name)
    }

    pub fn composite(&self, name: &str) -> Option<f64> {
        self.get(name).map(|r| r.report.average)
    }
}

/// Full pipeline for one seed: taxonomy, forge, pretrain, then every
/// arm aligned from the same pretrained model and evaluated on the same
/// held-out prompts with the same sample seeds.
pub fn run_seed(config: &RunConfig, arms: &[Arm], replicate: bool) -> Result<SeedRun> {
    config.validate()?;
    let backends = Backends::from_config(config)?;
    let taxonomy = run_taxonomy(config, &backends)?;
    let (manifest, dataset) = run_forge(config, &backends, &taxonomy)?;
    if dataset.samples.is_empty() {
        return Err(Error::Invalid("forge produced no preference samples".into()));
    }
    let corpus = pretrain_corpus(config, &backends, &manifest)?;
    let (base, pretrain_losses) = run_pretrain(config, &corpus)?;
    let schedule = config.schedule()?;
    let prompts: Vec<Prompt> = dataset.eval_prompts.iter().map(|p| p.prompt()).collect();
    let seeds = eval_seeds(config, 0);
    let mut runs = vec![VariantRun {
        name: ORIGIN.into(),
        report: run_eval(config, &base, &schedule, &prompts, &seeds)?,
        curve: None,
    }];
    let mut replica = None;
    for (i, &arm) in arms.iter().enumerate() {
        let (model, curve) = match arm {
            Arm::Align(v) => run_align(config, &base, &dataset, v)?,
            Arm::RandomSelect => {
                let mut random = config.clone();
                random.forge.selection = Selection::Random;
                let (_, reforged) = run_forge(&random, &backends, &taxonomy)?;
                run_align(config, &base, &reforged, Variant::CrossVal)?
            }
        };
        let report = run_eval(config, &model, &schedule, &prompts, &seeds)?;
        if replicate && i == 0 {
            replica = Some(run_eval(config, &model, &schedule, &prompts, &eval_seeds(config, 1))?);
        }
        log::info!("seed {} {}: composite {:.4}", config.seed, arm.name(), report.average);
        runs.push(VariantRun {
            name: arm.name().into(),
            report,
            // a random-select curve would be labelled cross_val
            curve: matches!(arm, Arm::Align(_)).then_some(curve),
        });
    }
    Ok(SeedRun {
        seed: config.seed,
        samples: dataset.samples.len(),
        manifest,
        pretrain_losses,
        runs,
        replicate: replica,
    })
}

/// Pooled pairwise comparison of two named runs over all seeds.
pub fn pooled_compare(
    runs: &[SeedRun],
    a: &str,
    b: &str,
    margin: f64,
) -> Result<prefalign_core::eval::WinRateResult> {
    let mut total = prefalign_core::eval::WinRateResult::default();
    for r in runs {
        let (Some(x), Some(y)) = (r.get(a), r.get(b)) else {
            return Err(Error::Invalid(format!("seed {} lacks {a} or {b}", r.seed)));
        };
        total = total.merge(&compare_reports(&x.report, &y.report, margin)?);
    }
    Ok(total)
}
