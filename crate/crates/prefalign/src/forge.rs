//! Entity mining under each subtopic, preference-dimension contrast pairs,
//! and the candidate-selection and judging funnel that turns them into
//! preference samples.

use std::collections::HashSet;

use prefalign_core::align::{Instruction, PreferenceSample, Provenance};
use prefalign_core::eval::Prompt;
use prefalign_core::instruction::{contrast_spec, render_text, sample_base_spec};
use prefalign_core::rng::derive_seed;
use prefalign_core::world::{random_select, CandidateConfig, WorldConfig};
use prefalign_core::{InstructionSpec, PreferenceDimension, SeededRng};
use serde::{Deserialize, Serialize};

use crate::clients::{prompts, Clients, Embedder, MembershipJudge, TextGen, TextGenRequest};
use crate::error::{Error, Result};
use crate::taxonomy::{Entity, SubtopicRef, Taxonomy};

/// Request `n` entity names for a subtopic; duplicates (case-insensitive)
/// are dropped, first occurrence wins.
pub fn generate_entities(
    subtopic: &str,
    subtopic_ref: SubtopicRef,
    text: &dyn TextGen,
    n: usize,
    seed: u64,
) -> Result<Vec<Entity>> {
    let req = TextGenRequest::new(
        prompts::entities(subtopic),
        n,
        derive_seed(seed, &format!("entities:{subtopic_ref}"), 0),
    );
    let mut seen = HashSet::new();
    Ok(text
        .textgen(&req)?
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(s.to_lowercase()))
        .map(|name| Entity {
            name,
            subtopic_ref,
            similarity: 0.0,
            confirmed: false,
        })
        .collect())
}

/// Keep entities whose embedding cosine to the subtopic is at least `tau_sim`.
pub fn filter_entities(entities: Vec<Entity>, subtopic: &str, embed: &dyn Embedder, tau_sim: f64) -> Result<Vec<Entity>> {
    let anchor = embed.embed(subtopic)?;
    let mut out = Vec::new();
    for mut e in entities {
        e.similarity = embed.embed(&e.name)?.cosine(&anchor);
        if e.similarity >= tau_sim {
            out.push(e);
        }
    }
    Ok(out)
}

/// Keep entities the membership judge accepts, marking them confirmed.
pub fn confirm_membership(entities: Vec<Entity>, subtopic: &str, judge: &dyn MembershipJudge) -> Result<Vec<Entity>> {
    let mut out = Vec::new();
    for mut e in entities {
        let v = judge.confirm_membership(&e.name, subtopic)?;
        if v.accept {
            e.confirmed = true;
            out.push(e);
        } else {
            log::debug!("membership rejected {:?}: {}", e.name, v.rationale);
        }
    }
    Ok(out)
}

/// A preferred and a contrasting instruction for one entity and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub entity: String,
    pub dimension: PreferenceDimension,
    pub pos_spec: InstructionSpec,
    pub neg_spec: InstructionSpec,
    pub pos_text: String,
    pub neg_text: String,
}

/// One pair per preference dimension, sharing a base spec.
pub fn inject_preferences(entity: &str, entity_ref: u32, seed: u64) -> Vec<InstructionPair> {
    let base = sample_base_spec(entity_ref, &mut SeededRng::derived(seed, "base-spec", u64::from(entity_ref)));
    PreferenceDimension::ALL
        .iter()
        .enumerate()
        .map(|(d, &dimension)| {
            let mut rng = SeededRng::derived(seed, "contrast", u64::from(entity_ref) * 3 + d as u64);
            let neg = contrast_spec(&base, dimension, &mut rng);
            InstructionPair {
                entity: entity.to_string(),
                dimension,
                pos_spec: base,
                neg_spec: neg,
                pos_text: render_text(entity, &base),
                neg_text: render_text(entity, &neg),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    BestMatch,
    Random,
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Selection::BestMatch => "best_match",
            Selection::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgeConfig {
    /// Entity names requested per subtopic.
    pub entity_candidates: usize,
    /// Cap on confirmed entities kept per subtopic.
    pub max_entities_per_subtopic: usize,
    pub tau_sim: f64,
    pub candidates: CandidateConfig,
    pub selection: Selection,
    pub world: WorldConfig,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            entity_candidates: 8,
            max_entities_per_subtopic: 4,
            tau_sim: 0.3,
            candidates: CandidateConfig::default(),
            selection: Selection::BestMatch,
            world: WorldConfig::default(),
        }
    }
}

/// Counts at each stage of the funnel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SurvivalCounts {
    pub entity_requests: usize,
    pub entities_unique: usize,
    pub entities_similar: usize,
    pub entities_confirmed: usize,
    pub entities_kept: usize,
    pub instruction_pairs: usize,
    pub rejected_by_judge: usize,
    pub rejected_by_cross_check: usize,
    pub samples: usize,
}

/// Everything forged from a taxonomy, before images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeManifest {
    pub entities: Vec<Entity>,
    pub pairs: Vec<InstructionPair>,
    pub counts: SurvivalCounts,
}

/// Mine, filter and confirm entities for every subtopic, then inject the
/// preference dimensions. The entity index in the returned list is the
/// spec's `entity_ref`.
pub fn forge_all(taxonomy: &Taxonomy, clients: &Clients<'_>, config: &ForgeConfig, seed: u64) -> Result<ForgeManifest> {
    let mut counts = SurvivalCounts::default();
    let mut entities = Vec::new();
    for (r, sub) in taxonomy.subtopics() {
        let raw = generate_entities(&sub.name, r, clients.text, config.entity_candidates, seed)?;
        counts.entity_requests += config.entity_candidates;
        counts.entities_unique += raw.len();
        let similar = filter_entities(raw, &sub.name, clients.embed, config.tau_sim)?;
        counts.entities_similar += similar.len();
        let mut confirmed = confirm_membership(similar, &sub.name, clients.membership)?;
        counts.entities_confirmed += confirmed.len();
        confirmed.truncate(config.max_entities_per_subtopic);
        entities.extend(confirmed);
    }
    counts.entities_kept = entities.len();
    if entities.is_empty() {
        return Err(Error::Invalid("no entity survived filtering".into()));
    }
    let pairs: Vec<InstructionPair> = entities
        .iter()
        .enumerate()
        .flat_map(|(i, e)| inject_preferences(&e.name, i as u32, seed))
        .collect();
    counts.instruction_pairs = pairs.len();
    Ok(ForgeManifest { entities, pairs, counts })
}

/// Attach entities to their subtopics.
pub fn attach_entities(taxonomy: &Taxonomy, entities: &[Entity]) -> Taxonomy {
    let mut out = taxonomy.clone();
    for e in entities {
        if let Some(s) = out
            .themes
            .get_mut(e.subtopic_ref.theme)
            .and_then(|t| t.subtopics.get_mut(e.subtopic_ref.subtopic))
        {
            s.entities.push(e.clone());
        }
    }
    out
}

fn instruction(text: &str, spec: InstructionSpec, embed: &dyn Embedder) -> Result<Instruction> {
    Ok(Instruction {
        text: text.to_string(),
        cond: embed.embed(text)?.into_values(),
        spec,
    })
}

/// Generate, select and judge images for every pair. A sample survives
/// only if each chosen image passes the judge for its own instruction and
/// fails it for the contrasting one.
pub fn build_samples(
    manifest: &mut ForgeManifest,
    clients: &Clients<'_>,
    config: &ForgeConfig,
    seed: u64,
) -> Result<Vec<PreferenceSample>> {
    let k = config.candidates.k;
    let world = &config.world;
    let mut samples = Vec::new();
    let (mut judge_rejects, mut cross_rejects) = (0, 0);
    for (i, pair) in manifest.pairs.iter().enumerate() {
        let seeds = [
            derive_seed(seed, "candidates", 2 * i as u64),
            derive_seed(seed, "candidates", 2 * i as u64 + 1),
        ];
        let mut chosen = Vec::with_capacity(2);
        let mut selected = [0; 2];
        for (side, (text, spec)) in [(&pair.pos_text, &pair.pos_spec), (&pair.neg_text, &pair.neg_spec)]
            .into_iter()
            .enumerate()
        {
            let imgs = clients.images.generate(text, k, seeds[side])?;
            let idx = match config.selection {
                Selection::BestMatch => world.select_best_match(spec, &imgs)?,
                Selection::Random => random_select(imgs.len(), derive_seed(seed, "select", 2 * i as u64 + side as u64))?,
            };
            selected[side] = idx;
            chosen.push(imgs.into_iter().nth(idx).expect("index from selection"));
        }
        let y2 = chosen.pop().expect("two sides");
        let y1 = chosen.pop().expect("two sides");
        let own = [clients.judge.judge(&pair.pos_text, &y1)?, clients.judge.judge(&pair.neg_text, &y2)?];
        if own.iter().any(|v| !v.accept) {
            judge_rejects += 1;
            continue;
        }
        let cross = [clients.judge.judge(&pair.neg_text, &y1)?, clients.judge.judge(&pair.pos_text, &y2)?];
        if cross.iter().any(|v| v.accept) {
            cross_rejects += 1;
            continue;
        }
        let judge_scores = [world.consistency(&y1, &pair.pos_spec)?, world.consistency(&y2, &pair.neg_spec)?];
        samples.push(PreferenceSample {
            x1: instruction(&pair.pos_text, pair.pos_spec, clients.embed)?,
            x2: instruction(&pair.neg_text, pair.neg_spec, clients.embed)?,
            y1,
            y2,
            dimension: pair.dimension,
            provenance: Provenance {
                entity: pair.entity.clone(),
                seeds,
                selected,
                judge_scores,
            },
        });
    }
    manifest.counts.rejected_by_judge = judge_rejects;
    manifest.counts.rejected_by_cross_check = cross_rejects;
    manifest.counts.samples = samples.len();
    Ok(samples)
}

/// A held-out evaluation prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPrompt {
    pub text: String,
    pub spec: InstructionSpec,
    pub cond: Vec<f64>,
}

impl EvalPrompt {
    pub fn prompt(&self) -> Prompt {
        Prompt {
            cond: self.cond.clone(),
            spec: self.spec,
        }
    }
}

/// `n` fresh preferred-style prompts over the confirmed entities whose text
/// does not occur among `exclude`.
pub fn eval_prompts(
    entities: &[Entity],
    exclude: &HashSet<String>,
    n: usize,
    seed: u64,
    embed: &dyn Embedder,
) -> Result<Vec<EvalPrompt>> {
    if entities.is_empty() {
        return Err(Error::Invalid("no entities to build prompts from".into()));
    }
    let mut rng = SeededRng::derived(seed, "eval-prompts", 0);
    let mut seen = exclude.clone();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 100 * n.max(1) {
            return Err(Error::CannotReachTarget {
                what: "held-out prompts",
                target: n,
                have: out.len(),
                rounds: attempts,
            });
        }
        let e = rng.below(entities.len());
        let spec = sample_base_spec(e as u32, &mut rng);
        let text = render_text(&entities[e].name, &spec);
        if seen.insert(text.clone()) {
            let cond = embed.embed(&text)?.into_values();
            out.push(EvalPrompt { text, spec, cond });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{MockEmbedder, MockImageGen, MockJudge, MockMembership, MockTextGen};
    use crate::taxonomy::{DivisionAxis, Origin, Subtopic, Theme};

    fn tiny_taxonomy() -> Taxonomy {
        let sub = |n: &str| Subtopic {
            name: n.into(),
            division_axis: DivisionAxis::TimeSpace,
            entities: Vec::new(),
        };
        Taxonomy {
            themes: vec![
                Theme {
                    name: "Animals".into(),
                    origin: Origin::Seed,
                    seed_members: 0,
                    subtopics: vec![sub("Savanna Animals"), sub("Arctic Animals")],
                },
                Theme {
                    name: "Architecture".into(),
                    origin: Origin::Seed,
                    seed_members: 0,
                    subtopics: vec![sub("Sports Architecture")],
                },
            ],
            provenance: Vec::new(),
        }
    }

    struct Fixture {
        text: MockTextGen,
        embed: MockEmbedder,
        membership: MockMembership,
        judge: MockJudge,
        images: MockImageGen,
    }

    impl Fixture {
        fn new() -> Self {
            let world = WorldConfig::default();
            Self {
                text: MockTextGen::new(),
                embed: MockEmbedder::new(32, 0),
                membership: MockMembership,
                judge: MockJudge { world, tau: 0.8 },
                images: MockImageGen {
                    world,
                    candidates: CandidateConfig::default(),
                },
            }
        }

        fn clients(&self) -> Clients<'_> {
            Clients {
                text: &self.text,
                embed: &self.embed,
                membership: &self.membership,
                judge: &self.judge,
                images: &self.images,
            }
        }
    }

    #[test]
    fn entities_are_deduplicated() {
        struct Dup;
        impl TextGen for Dup {
            fn textgen(&self, r: &TextGenRequest) -> crate::clients::ClientResult<Vec<String>> {
                Ok((0..r.n_completions).map(|i| if i % 2 == 0 { "Stadium" } else { "stadium" }.to_string()).collect())
            }
        }
        let r = SubtopicRef { theme: 0, subtopic: 0 };
        let e = generate_entities("Sports Architecture", r, &Dup, 6, 0).unwrap();
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn sports_architecture_entities_are_venues() {
        let f = Fixture::new();
        let r = SubtopicRef { theme: 1, subtopic: 0 };
        let raw = generate_entities("Sports Architecture", r, &f.text, 20, 3).unwrap();
        let kept = filter_entities(raw, "Sports Architecture", &f.embed, 0.3).unwrap();
        let confirmed = confirm_membership(kept, "Sports Architecture", &f.membership).unwrap();
        assert!(!confirmed.is_empty());
        let venues = ["stadium", "arena", "gymnasium", "pavilion", "tower", "bridge", "cathedral", "library"];
        for e in &confirmed {
            assert!(e.confirmed && e.similarity >= 0.3);
            assert!(venues.iter().any(|v| e.name.ends_with(v)), "{}", e.name);
        }
    }

    #[test]
    fn pairs_differ_only_in_governed_fields() {
        for p in inject_preferences("grand savanna lion", 7, 1) {
            let diff = p.pos_spec.diff(&p.neg_spec);
            assert!(!diff.is_empty());
            assert!(diff.iter().all(|f| p.dimension.governed_fields().contains(f)));
            assert_ne!(p.pos_text, p.neg_text);
        }
    }

    #[test]
    fn funnel_guarantees_cross_check() {
        let f = Fixture::new();
        let tax = tiny_taxonomy();
        let mut m = forge_all(&tax, &f.clients(), &ForgeConfig::default(), 5).unwrap();
        assert_eq!(m.counts.instruction_pairs, 3 * m.entities.len());
        let samples = build_samples(&mut m, &f.clients(), &ForgeConfig::default(), 5).unwrap();
        assert!(!samples.is_empty());
        assert_eq!(
            m.counts.samples + m.counts.rejected_by_judge + m.counts.rejected_by_cross_check,
            m.counts.instruction_pairs
        );
        let w = WorldConfig::default();
        for s in &samples {
            assert!(w.consistency(&s.y1, &s.x1.spec).unwrap() > w.consistency(&s.y1, &s.x2.spec).unwrap());
            assert!(w.consistency(&s.y2, &s.x2.spec).unwrap() > w.consistency(&s.y2, &s.x1.spec).unwrap());
            assert_eq!(s.x1.cond.len(), 32);
        }
    }

    #[test]
    fn eval_prompts_are_fresh() {
        let f = Fixture::new();
        let m = forge_all(&tiny_taxonomy(), &f.clients(), &ForgeConfig::default(), 5).unwrap();
        let train: HashSet<String> = m.pairs.iter().flat_map(|p| [p.pos_text.clone(), p.neg_text.clone()]).collect();
        let prompts = eval_prompts(&m.entities, &train, 30, 2, &f.embed).unwrap();
        assert_eq!(prompts.len(), 30);
        let texts: HashSet<&str> = prompts.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts.len(), 30);
        assert!(prompts.iter().all(|p| !train.contains(&p.text)));
    }
}
