//! Seeded, hermetic client implementations. Every output is a pure
//! function of the inputs and the seed; no state is carried between calls.

use prefalign_core::instruction::parse_text;
use prefalign_core::rng::{derive_seed, fnv1a};
use prefalign_core::world::{CandidateConfig, WorldConfig};
use prefalign_core::{Image, SeededRng};

use super::{
    prompts, ClientResult, Embedder, EmbeddingVector, ImageGen, Judge, JudgeVerdict, MembershipJudge, TextGen,
    TextGenRequest,
};
use crate::error::ClientError;

pub const SEED_THEMES: [&str; 6] = ["People", "Animals", "Landscapes", "Scenes", "Architecture", "Art & Abstraction"];

/// Themes the mock proposes during expansion. A few near-duplicates of
/// each other are included on purpose.
const THEME_POOL: &[&str] = &[
    "Sports", "Food", "Vehicles", "Plants", "Fashion", "Technology", "Music", "Outer Space", "Ocean Life",
    "Weather", "Toys", "Furniture", "Tools", "Festivals", "Insects", "Birds", "Mythology", "History", "Science",
    "Medicine", "Agriculture", "Industry", "Education", "Jewelry", "Kitchenware", "Musical Instruments", "Games",
    "Fantasy", "Robots", "Dinosaurs", "Fruits", "Desserts", "Drinks", "Flowers", "Trees", "Ships", "Aircraft",
    "Household Items", "Crafts", "Textiles", "Ceramics", "Castles", "Gardens", "Markets", "Islands", "Caves",
    "Clocks", "Books", "Masks", "Sculptures", "Bird", "Sport", "Flower", "Animal", "Fruit", "Landscape",
];

const NOUNS: &[(&str, &[&str])] = &[
    ("People", &["dancer", "chef", "farmer", "painter", "sailor", "runner", "musician", "child"]),
    ("Animals", &["lion", "zebra", "elephant", "fox", "deer", "otter", "owl", "wolf"]),
    ("Landscapes", &["valley", "meadow", "canyon", "glacier", "lagoon", "hill", "dune", "waterfall"]),
    ("Scenes", &["picnic", "parade", "harbor", "street", "campfire", "classroom", "station", "plaza"]),
    ("Architecture", &["stadium", "arena", "gymnasium", "pavilion", "tower", "bridge", "cathedral", "library"]),
    ("Art & Abstraction", &["spiral", "mosaic", "collage", "fresco", "pattern", "mural", "sketch", "sculpture"]),
    ("Sports", &["ball", "racket", "helmet", "trophy", "skateboard", "bicycle", "surfboard", "kayak"]),
    ("Food", &["pizza", "noodle", "dumpling", "pie", "sandwich", "taco", "omelette", "salad"]),
    ("Vehicles", &["bus", "tractor", "scooter", "truck", "tram", "van", "sedan", "motorcycle"]),
    ("Plants", &["fern", "cactus", "moss", "vine", "bamboo", "ivy", "succulent", "reed"]),
    ("Fashion", &["dress", "jacket", "hat", "scarf", "boot", "handbag", "gown", "sneaker"]),
    ("Technology", &["laptop", "phone", "drone", "camera", "satellite", "server", "tablet", "headset"]),
    ("Music", &["concert", "choir", "record", "speaker", "band", "stage", "microphone", "metronome"]),
    ("Outer Space", &["planet", "comet", "rocket", "nebula", "asteroid", "moon", "galaxy", "astronaut"]),
    ("Ocean Life", &["whale", "dolphin", "octopus", "jellyfish", "turtle", "seahorse", "coral", "shark"]),
    ("Birds", &["sparrow", "parrot", "eagle", "penguin", "flamingo", "heron", "robin", "swan"]),
    ("Flowers", &["tulip", "rose", "daisy", "orchid", "lily", "sunflower", "peony", "lotus"]),
    ("Fruits", &["apple", "mango", "cherry", "lemon", "peach", "grape", "banana", "melon"]),
    ("Toys", &["kite", "puzzle", "doll", "yoyo", "robot", "teddy", "marble", "top"]),
    ("Furniture", &["chair", "sofa", "table", "lamp", "shelf", "bench", "cabinet", "stool"]),
];

const GENERIC_NOUNS: &[&str] = &["object", "figure", "emblem", "token", "ornament", "statue", "vessel", "device"];

const ADJECTIVES: &[&str] = &[
    "grand", "tiny", "ancient", "modern", "quiet", "busy", "gleaming", "rustic", "elegant", "wild", "gentle",
    "sturdy", "curious", "lonely", "festive", "hidden", "famous", "humble", "majestic", "playful",
];

/// Subtopic modifiers by division axis.
const AXES: &[(&str, &[&str])] = &[
    (
        "time_space",
        &["Savanna", "Forest", "Urban", "Coastal", "Mountain", "Desert", "Arctic", "Medieval", "Futuristic", "Nighttime"],
    ),
    ("theme", &["Running", "Flying", "Swimming", "Resting", "Playing", "Working", "Celebrating", "Feeding"]),
    ("style", &["Watercolor", "Cartoon", "Photorealistic", "Minimalist", "Vintage", "Pixelated"]),
    ("purpose", &["Educational", "Decorative", "Advertising", "Commemorative", "Ceremonial"]),
    ("vertical_domain", &["Sports", "Culinary", "Scientific", "Industrial", "Medical", "Maritime"]),
];

/// Lower-case alphanumeric tokens with a crude plural strip.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let t = t.to_lowercase();
            if t.len() > 3 && t.ends_with('s') && !t.ends_with("ss") {
                t[..t.len() - 1].to_string()
            } else {
                t
            }
        })
        .collect()
}

fn pick<'a, T>(items: &'a [T], rng: &mut SeededRng) -> &'a T {
    &items[rng.below(items.len())]
}

fn nouns_for(subtopic: &str) -> &'static [&'static str] {
    let lower = subtopic.to_lowercase();
    NOUNS
        .iter()
        .filter(|(theme, _)| lower.ends_with(&theme.to_lowercase()))
        .max_by_key(|(theme, _)| theme.len())
        .map(|(_, n)| *n)
        .unwrap_or(GENERIC_NOUNS)
}

/// Labelled seed corpus of `n` short captions spread over the six seed
/// categories, standing in for a sample of a real caption dataset.
pub fn seed_corpus(n: usize, seed: u64) -> Vec<(String, String)> {
    use crate::taxonomy::SeedCategory;
    let mut rng = SeededRng::derived(seed, "seed-corpus", 0);
    (0..n)
        .map(|i| {
            let cat = SeedCategory::ALL[i % SeedCategory::ALL.len()];
            let nouns = NOUNS[cat as usize].1;
            let text = format!("caption {i}: a {} {}", pick(ADJECTIVES, &mut rng), pick(nouns, &mut rng));
            (text, cat.label().to_string())
        })
        .collect()
}

/// Template-grammar text generator keyed by the prompt's role tag.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTextGen {
    /// Probability that an entity completion is off-topic.
    pub distractor_rate: f64,
}

impl MockTextGen {
    pub fn new() -> Self {
        Self { distractor_rate: 0.25 }
    }

    fn completion(&self, tag: &str, arg: Option<(&str, &str)>, rng: &mut SeededRng) -> ClientResult<String> {
        match tag {
            prompts::EXPAND_THEMES => Ok(pick(THEME_POOL, rng).to_string()),
            prompts::DIVIDE_SUBTOPICS => {
                let theme = arg.map(|a| a.1).unwrap_or("Things");
                let (axis, mods) = pick(AXES, rng);
                Ok(format!("{} {theme} | {axis}", pick(mods, rng)))
            }
            prompts::ENTITIES => {
                let subtopic = arg.map(|a| a.1).unwrap_or("Things");
                let adj = pick(ADJECTIVES, rng);
                if rng.bernoulli(self.distractor_rate) {
                    let (_, nouns) = pick(NOUNS, rng);
                    Ok(format!("{adj} {}", pick(nouns, rng)))
                } else {
                    let modifier = subtopic.split_whitespace().next().unwrap_or("plain").to_lowercase();
                    Ok(format!("{adj} {modifier} {}", pick(nouns_for(subtopic), rng)))
                }
            }
            other => Err(ClientError::Malformed(format!("mock has no grammar for tag {other:?}"))),
        }
    }
}

impl TextGen for MockTextGen {
    fn textgen(&self, request: &TextGenRequest) -> ClientResult<Vec<String>> {
        request.validate()?;
        let (tag, arg) = prompts::parse_tag(&request.prompt);
        let mut rng = SeededRng::new(derive_seed(request.seed, "textgen", fnv1a(request.prompt.as_bytes())));
        (0..request.n_completions).map(|_| self.completion(tag, arg, &mut rng)).collect()
    }
}

/// Hashed bag of tokens with a fixed seeded random projection.
///
/// Each token is hashed into one of `buckets` slots; each slot owns a
/// Gaussian `dim`-vector derived from `seed`. The embedding is the
/// normalised sum over tokens.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
    pub buckets: u64,
    pub seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            buckets: 4096,
            seed,
        }
    }

    fn bucket_vector(&self, bucket: u64, out: &mut [f64]) {
        let mut rng = SeededRng::derived(self.seed, "embed-bucket", bucket);
        for o in out.iter_mut() {
            *o += rng.normal();
        }
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> ClientResult<EmbeddingVector> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(ClientError::EmptyText);
        }
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            self.bucket_vector(fnv1a(t.as_bytes()) % self.buckets, &mut v);
        }
        EmbeddingVector::normalized(v)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Oracle judge: parses the instruction back into its spec and accepts iff
/// the image's consistency score reaches `tau`.
#[derive(Debug, Clone, Copy)]
pub struct MockJudge {
    pub world: WorldConfig,
    pub tau: f64,
}

impl Judge for MockJudge {
    fn judge(&self, instruction: &str, image: &Image) -> ClientResult<JudgeVerdict> {
        if image.shape != self.world.shape {
            return Err(ClientError::Core(prefalign_core::CoreError::ShapeMismatch {
                expected: self.world.shape.len(),
                actual: image.shape.len(),
            }));
        }
        let spec = parse_text(instruction).ok_or_else(|| ClientError::Malformed(format!("unparseable: {instruction}")))?;
        let c = self.world.consistency(image, &spec)?;
        Ok(if c >= self.tau {
            JudgeVerdict::accept(format!("consistency {c:.3}"))
        } else {
            JudgeVerdict::reject(format!("consistency {c:.3} below {:.3}", self.tau))
        })
    }
}

/// Accepts iff the entity and subtopic share a token.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockMembership;

impl MembershipJudge for MockMembership {
    fn confirm_membership(&self, entity: &str, subtopic: &str) -> ClientResult<JudgeVerdict> {
        let sub = tokenize(subtopic);
        Ok(match tokenize(entity).into_iter().find(|t| sub.contains(t)) {
            Some(t) => JudgeVerdict::accept(format!("shares \"{t}\"")),
            None => JudgeVerdict::reject(format!("\"{entity}\" is unrelated to \"{subtopic}\"")),
        })
    }
}

/// Synthetic-world candidate generator driven by the instruction text.
#[derive(Debug, Clone, Copy)]
pub struct MockImageGen {
    pub world: WorldConfig,
    pub candidates: CandidateConfig,
}

impl ImageGen for MockImageGen {
    fn generate(&self, instruction: &str, k: usize, seed: u64) -> ClientResult<Vec<Image>> {
        let spec = parse_text(instruction).ok_or_else(|| ClientError::Malformed(format!("unparseable: {instruction}")))?;
        let cfg = CandidateConfig { k, ..self.candidates };
        Ok(self
            .world
            .generate_candidates(&spec, &cfg, seed)
            .into_iter()
            .map(|c| c.image)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prefalign_core::instruction::{render_text, sample_base_spec};

    #[test]
    fn textgen_is_deterministic_and_counts() {
        let g = MockTextGen::new();
        let r = TextGenRequest::new(prompts::expand_themes(&[]), 3, 7);
        let a = g.textgen(&r).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, g.textgen(&r).unwrap());
        assert!(g.textgen(&TextGenRequest::new("", 1, 0)).is_err());
    }

    #[test]
    fn entity_grammar_uses_subtopic() {
        let g = MockTextGen { distractor_rate: 0.0 };
        let out = g
            .textgen(&TextGenRequest::new("ENTITIES subtopic=Sports Architecture", 5, 1))
            .unwrap();
        for e in &out {
            let words: Vec<&str> = e.split(' ').collect();
            assert_eq!(words.len(), 3, "{e}");
            assert!(ADJECTIVES.contains(&words[0]));
            assert_eq!(words[1], "sports");
            assert!(NOUNS[4].1.contains(&words[2]), "{e}");
        }
    }

    #[test]
    fn embedding_properties() {
        let e = MockEmbedder::new(32, 0);
        let a = e.embed("swimming pool").unwrap();
        assert_eq!(a, e.embed("swimming pool").unwrap());
        assert!((a.cosine(&a) - 1.0).abs() < 1e-9);
        let n: f64 = a.values().iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-9);
        let plural = e.embed("swimming pools").unwrap();
        let far = e.embed("volcanic eruption").unwrap();
        assert!(a.cosine(&plural) > a.cosine(&far));
        assert!(e.embed("  ,. ").is_err());
    }

    #[test]
    fn judge_accepts_ideal_and_rejects_blank_and_opposite() {
        let world = WorldConfig::default();
        let j = MockJudge { world, tau: 0.8 };
        let mut r = SeededRng::new(4);
        for _ in 0..50 {
            let spec = sample_base_spec(0, &mut r);
            let text = render_text("fox", &spec);
            assert!(j.judge(&text, &world.render_ideal(&spec)).unwrap().accept);
            let blank = Image::zeros(world.shape);
            let v = j.judge(&text, &blank).unwrap();
            assert!(!v.accept && !v.rationale.is_empty());
            for dim in prefalign_core::PreferenceDimension::ALL {
                let neg = prefalign_core::instruction::contrast_spec(&spec, dim, &mut r);
                assert!(!j.judge(&text, &world.render_ideal(&neg)).unwrap().accept);
            }
        }
    }

    #[test]
    fn membership_by_shared_token() {
        let j = MockMembership;
        assert!(j.confirm_membership("grand savanna lion", "Savanna Animals").unwrap().accept);
        assert!(!j.confirm_membership("tiny pizza", "Savanna Animals").unwrap().accept);
    }
}
