//! Narrow interfaces to the services the data pipeline depends on: text
//! generation, text embedding, judging and candidate image generation.
//!
//! [`mock`] provides hermetic seeded implementations; [`http`] talks to an
//! OpenAI-compatible chat-completions endpoint.

pub mod http;
pub mod mock;

use prefalign_core::Image;

use crate::error::ClientError;

pub type ClientResult<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextGenRequest {
    pub prompt: String,
    pub n_completions: usize,
    pub seed: u64,
}

impl TextGenRequest {
    pub fn new(prompt: impl Into<String>, n_completions: usize, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            n_completions,
            seed,
        }
    }

    pub fn validate(&self) -> ClientResult<()> {
        if self.prompt.trim().is_empty() {
            return Err(ClientError::EmptyPrompt);
        }
        if self.n_completions == 0 {
            return Err(ClientError::NoCompletions);
        }
        Ok(())
    }
}

/// Unit-norm text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalise `values`; fails on a zero vector.
    pub fn normalized(mut values: Vec<f64>) -> ClientResult<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(ClientError::Malformed("zero or non-finite embedding".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        prefalign_core::math::cosine(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeVerdict {
    pub accept: bool,
    /// Always non-empty for rejections.
    pub rationale: String,
}

impl JudgeVerdict {
    pub fn accept(rationale: impl Into<String>) -> Self {
        Self {
            accept: true,
            rationale: rationale.into(),
        }
    }

    pub fn reject(rationale: impl Into<String>) -> Self {
        let mut rationale = rationale.into();
        if rationale.is_empty() {
            rationale.push_str("rejected");
        }
        Self {
            accept: false,
            rationale,
        }
    }
}

pub trait TextGen {
    /// Exactly `request.n_completions` completions.
    fn textgen(&self, request: &TextGenRequest) -> ClientResult<Vec<String>>;
}

pub trait Embedder {
    fn embed(&self, text: &str) -> ClientResult<EmbeddingVector>;
    fn dim(&self) -> usize;
}

pub trait Judge {
    /// Does `image` depict `instruction`?
    fn judge(&self, instruction: &str, image: &Image) -> ClientResult<JudgeVerdict>;
}

pub trait MembershipJudge {
    /// Does `entity` belong to `subtopic`?
    fn confirm_membership(&self, entity: &str, subtopic: &str) -> ClientResult<JudgeVerdict>;
}

pub trait ImageGen {
    /// `k` candidate images for `instruction`.
    fn generate(&self, instruction: &str, k: usize, seed: u64) -> ClientResult<Vec<Image>>;
}

/// The clients the pipeline needs, borrowed together.
#[derive(Clone, Copy)]
pub struct Clients<'a> {
    pub text: &'a dyn TextGen,
    pub embed: &'a dyn Embedder,
    pub membership: &'a dyn MembershipJudge,
    pub judge: &'a dyn Judge,
    pub images: &'a dyn ImageGen,
}

/// Prompt-role tags. Prompts start with a tag line (`TAG key=value`)
/// followed by free-text instructions for a real model.
pub mod prompts {
    pub const EXPAND_THEMES: &str = "EXPAND_THEMES";
    pub const DIVIDE_SUBTOPICS: &str = "DIVIDE_SUBTOPICS";
    pub const ENTITIES: &str = "ENTITIES";

    pub fn expand_themes(existing: &[String]) -> String {
        format!(
            "{EXPAND_THEMES}\nPropose one new primary theme for text-to-image prompts, distinct from: {}. \
             Answer with the theme name only.",
            existing.join("; ")
        )
    }

    pub fn divide_subtopics(theme: &str) -> String {
        format!(
            "{DIVIDE_SUBTOPICS} theme={theme}\nPropose one subtopic of the theme \"{theme}\", divided by one of: \
             theme, style, purpose, time_space, vertical_domain. Answer as `<subtopic name> | <axis>`."
        )
    }

    pub fn entities(subtopic: &str) -> String {
        format!(
            "{ENTITIES} subtopic={subtopic}\nName one specific, drawable entity belonging to the subtopic \
             \"{subtopic}\". Answer with a short noun phrase only."
        )
    }

    pub fn membership(entity: &str, subtopic: &str) -> String {
        format!("Does \"{entity}\" belong to the subtopic \"{subtopic}\"? Answer yes or no, then a short reason.")
    }

    /// Split `TAG key=value` off the first line.
    pub fn parse_tag(prompt: &str) -> (&str, Option<(&str, &str)>) {
        let first = prompt.lines().next().unwrap_or("").trim();
        match first.split_once(' ') {
            Some((tag, rest)) => (tag, rest.split_once('=')),
            None => (first, None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        assert!(matches!(
            TextGenRequest::new("", 1, 0).validate(),
            Err(ClientError::EmptyPrompt)
        ));
        assert!(matches!(
            TextGenRequest::new("x", 0, 0).validate(),
            Err(ClientError::NoCompletions)
        ));
    }

    #[test]
    fn rejection_rationale_never_empty() {
        assert!(!JudgeVerdict::reject("").rationale.is_empty());
    }

    #[test]
    fn tags_parse() {
        let p = prompts::entities("Sports Architecture");
        assert_eq!(
            prompts::parse_tag(&p),
            ("ENTITIES", Some(("subtopic", "Sports Architecture")))
        );
        assert_eq!(prompts::parse_tag(&prompts::expand_themes(&[])).0, "EXPAND_THEMES");
    }
}
