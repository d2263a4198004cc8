//! Three-level taxonomy: seed categories, expanded primary themes and their
//! subtopics, with embedding-based duplicate merging and a canonical file
//! format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use prefalign_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::clients::{prompts, ClientResult, Embedder, EmbeddingVector, TextGen, TextGenRequest};
use crate::error::{Error, Result};
use crate::io;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedCategory {
    People,
    Animals,
    Landscapes,
    Scenes,
    Architecture,
    ArtAndAbstraction,
}

impl SeedCategory {
    pub const ALL: [SeedCategory; 6] = [
        SeedCategory::People,
        SeedCategory::Animals,
        SeedCategory::Landscapes,
        SeedCategory::Scenes,
        SeedCategory::Architecture,
        SeedCategory::ArtAndAbstraction,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SeedCategory::People => "people",
            SeedCategory::Animals => "animals",
            SeedCategory::Landscapes => "landscapes",
            SeedCategory::Scenes => "scenes",
            SeedCategory::Architecture => "architecture",
            SeedCategory::ArtAndAbstraction => "art_and_abstraction",
        }
    }

    pub fn theme_name(self) -> &'static str {
        crate::clients::mock::SEED_THEMES[self as usize]
    }

    pub fn parse(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisionAxis {
    Theme,
    Style,
    Purpose,
    TimeSpace,
    VerticalDomain,
}

impl DivisionAxis {
    pub const ALL: [DivisionAxis; 5] = [
        DivisionAxis::Theme,
        DivisionAxis::Style,
        DivisionAxis::Purpose,
        DivisionAxis::TimeSpace,
        DivisionAxis::VerticalDomain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DivisionAxis::Theme => "theme",
            DivisionAxis::Style => "style",
            DivisionAxis::Purpose => "purpose",
            DivisionAxis::TimeSpace => "time_space",
            DivisionAxis::VerticalDomain => "vertical_domain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Expanded,
}

/// `(theme index, subtopic index)` within a taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubtopicRef {
    pub theme: usize,
    pub subtopic: usize,
}

impl fmt::Display for SubtopicRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.theme, self.subtopic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub subtopic_ref: SubtopicRef,
    /// Cosine between the entity and subtopic embeddings.
    pub similarity: f64,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtopic {
    pub name: String,
    pub division_axis: DivisionAxis,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theme {
    pub name: String,
    pub origin: Origin,
    /// Number of seed texts behind a seed theme.
    #[serde(default)]
    pub seed_members: usize,
    pub subtopics: Vec<Subtopic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub themes: Vec<Theme>,
    /// Construction log, in order.
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedThemeSet {
    pub sampled_texts: Vec<String>,
    pub labels: BTreeMap<String, SeedCategory>,
}

impl SeedThemeSet {
    pub fn members(&self, category: SeedCategory) -> Vec<&str> {
        self.sampled_texts
            .iter()
            .filter(|t| self.labels.get(*t) == Some(&category))
            .map(String::as_str)
            .collect()
    }

    /// The six seed themes, without subtopics.
    pub fn themes(&self) -> Vec<Theme> {
        SeedCategory::ALL
            .iter()
            .map(|c| Theme {
                name: c.theme_name().to_string(),
                origin: Origin::Seed,
                seed_members: self.members(*c).len(),
                subtopics: Vec::new(),
            })
            .collect()
    }
}

/// Label every sampled text with one of the six seed categories.
pub fn ingest_seed<S: AsRef<str>>(texts: &[S], labels: &[S]) -> Result<SeedThemeSet> {
    if texts.is_empty() {
        return Err(Error::Invalid("empty seed corpus".into()));
    }
    if texts.len() != labels.len() {
        return Err(Error::Invalid(format!("{} texts but {} labels", texts.len(), labels.len())));
    }
    let mut map = BTreeMap::new();
    let mut sampled = Vec::new();
    for (t, l) in texts.iter().zip(labels) {
        let (t, l) = (t.as_ref(), l.as_ref());
        let cat = SeedCategory::parse(l).ok_or_else(|| Error::Invalid(format!("unknown seed label {l:?}")))?;
        match map.get(t) {
            Some(prev) if *prev != cat => {
                return Err(Error::Invalid(format!("text {t:?} labelled both {} and {l}", SeedCategory::label(*prev))))
            }
            Some(_) => {}
            None => {
                map.insert(t.to_string(), cat);
                sampled.push(t.to_string());
            }
        }
    }
    Ok(SeedThemeSet {
        sampled_texts: sampled,
        labels: map,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionConfig {
    pub max_rounds: usize,
    pub tau_merge: f64,
    /// Completions requested per missing item.
    pub pool_size: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            tau_merge: 0.95,
            pool_size: 3,
        }
    }
}

/// Names accepted so far with their embeddings, for near-duplicate checks.
struct NameSet<'a> {
    embed: &'a dyn Embedder,
    tau: f64,
    names: Vec<(String, EmbeddingVector)>,
}

impl<'a> NameSet<'a> {
    fn new(embed: &'a dyn Embedder, tau: f64) -> Self {
        Self {
            embed,
            tau,
            names: Vec::new(),
        }
    }

    fn admits(&self, name: &str, v: &EmbeddingVector) -> bool {
        let lower = name.to_lowercase();
        self.names
            .iter()
            .all(|(n, e)| n.to_lowercase() != lower && e.cosine(v) < self.tau)
    }

    /// Add `name` unless it duplicates an existing one.
    fn try_add(&mut self, name: &str) -> ClientResult<bool> {
        let v = self.embed.embed(name)?;
        if self.admits(name, &v) {
            self.names.push((name.to_string(), v));
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Grow the seed themes to `target` distinct primary themes.
pub fn expand_themes(
    seed_set: &SeedThemeSet,
    text: &dyn TextGen,
    embed: &dyn Embedder,
    target: usize,
    seed: u64,
    config: &ExpansionConfig,
    log: &mut Vec<String>,
) -> Result<Vec<Theme>> {
    if target < SeedCategory::ALL.len() {
        return Err(Error::Invalid(format!("theme target {target} below the six seed themes")));
    }
    let mut themes = seed_set.themes();
    let mut names = NameSet::new(embed, config.tau_merge);
    for t in &themes {
        names.try_add(&t.name)?;
    }
    let mut round = 0;
    while themes.len() < target {
        if round == config.max_rounds {
            return Err(Error::CannotReachTarget {
                what: "themes",
                target,
                have: themes.len(),
                rounds: round,
            });
        }
        let existing: Vec<String> = themes.iter().map(|t| t.name.clone()).collect();
        let need = target - themes.len();
        let req = TextGenRequest::new(
            prompts::expand_themes(&existing),
            need * config.pool_size,
            derive_seed(seed, "expand-themes", round as u64),
        );
        let mut added = 0;
        for cand in text.textgen(&req)? {
            let cand = cand.trim();
            if cand.is_empty() || themes.len() == target {
                continue;
            }
            if names.try_add(cand)? {
                themes.push(Theme {
                    name: cand.to_string(),
                    origin: Origin::Expanded,
                    seed_members: 0,
                    subtopics: Vec::new(),
                });
                added += 1;
            }
        }
        log.push(format!("expand round {round}: requested {}, added {added}", req.n_completions));
        round += 1;
    }
    Ok(themes)
}

/// Give `theme` exactly `per_theme` distinct subtopics.
#[allow(clippy::too_many_arguments)]
pub fn divide_subtopics(
    mut theme: Theme,
    text: &dyn TextGen,
    embed: &dyn Embedder,
    per_theme: usize,
    seed: u64,
    config: &ExpansionConfig,
    log: &mut Vec<String>,
) -> Result<Theme> {
    if per_theme == 0 {
        return Err(Error::Invalid("per_theme must be at least 1".into()));
    }
    let mut names = NameSet::new(embed, config.tau_merge);
    for s in &theme.subtopics {
        names.try_add(&s.name)?;
    }
    let mut round = 0;
    while theme.subtopics.len() < per_theme {
        if round == config.max_rounds {
            return Err(Error::CannotReachTarget {
                what: "subtopics",
                target: per_theme,
                have: theme.subtopics.len(),
                rounds: round,
            });
        }
        let need = per_theme - theme.subtopics.len();
        let req = TextGenRequest::new(
            prompts::divide_subtopics(&theme.name),
            need * config.pool_size,
            derive_seed(seed, &format!("divide:{}", theme.name), round as u64),
        );
        let mut skipped = 0;
        for cand in text.textgen(&req)? {
            if theme.subtopics.len() == per_theme {
                break;
            }
            let Some((name, axis)) = cand.rsplit_once('|') else {
                skipped += 1;
                continue;
            };
            let (name, Some(axis)) = (name.trim(), DivisionAxis::parse(axis)) else {
                skipped += 1;
                continue;
            };
            if !name.is_empty() && names.try_add(name)? {
                theme.subtopics.push(Subtopic {
                    name: name.to_string(),
                    division_axis: axis,
                    entities: Vec::new(),
                });
            }
        }
        if skipped > 0 {
            log.push(format!("divide {:?} round {round}: skipped {skipped} malformed", theme.name));
        }
        round += 1;
    }
    Ok(theme)
}

/// Merge sibling names whose embeddings have cosine ≥ `tau`; the
/// lexicographically smaller name survives and absorbs the other's
/// children. Themes are merged first, then subtopics within each theme.
pub fn merge_duplicates(taxonomy: &Taxonomy, embed: &dyn Embedder, tau: f64) -> Result<Taxonomy> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Invalid(format!("tau_merge {tau} outside (0, 1)")));
    }
    let mut log = taxonomy.provenance.clone();
    let theme_names: Vec<&str> = taxonomy.themes.iter().map(|t| t.name.as_str()).collect();
    let theme_target = merge_targets(&theme_names, embed, tau)?;
    let mut themes: Vec<Theme> = Vec::new();
    let mut slot = BTreeMap::new();
    for (i, t) in taxonomy.themes.iter().enumerate() {
        let keep = theme_target[i];
        if keep == i {
            slot.insert(i, themes.len());
            themes.push(t.clone());
        }
    }
    for (i, t) in taxonomy.themes.iter().enumerate() {
        let keep = theme_target[i];
        if keep != i {
            let dst = &mut themes[slot[&keep]];
            log.push(format!("merged theme {:?} into {:?}", t.name, dst.name));
            dst.seed_members += t.seed_members;
            dst.subtopics.extend(t.subtopics.iter().cloned());
        }
    }
    for (ti, theme) in themes.iter_mut().enumerate() {
        let names: Vec<&str> = theme.subtopics.iter().map(|s| s.name.as_str()).collect();
        let target = merge_targets(&names, embed, tau)?;
        let mut kept: Vec<Subtopic> = Vec::new();
        let mut slot = BTreeMap::new();
        for (i, s) in theme.subtopics.iter().enumerate() {
            if target[i] == i {
                slot.insert(i, kept.len());
                kept.push(s.clone());
            }
        }
        for (i, s) in theme.subtopics.iter().enumerate() {
            if target[i] != i {
                let dst = &mut kept[slot[&target[i]]];
                log.push(format!("merged subtopic {:?} into {:?} under {:?}", s.name, dst.name, theme.name));
                dst.entities.extend(s.entities.iter().cloned());
            }
        }
        for (si, s) in kept.iter_mut().enumerate() {
            for e in &mut s.entities {
                e.subtopic_ref = SubtopicRef { theme: ti, subtopic: si };
            }
        }
        theme.subtopics = kept;
    }
    Ok(Taxonomy { themes, provenance: log })
}

/// For each name, the index of the name it merges into (itself if it
/// survives). Names are visited in lexicographic order so the smaller one
/// of a duplicate pair always survives.
fn merge_targets(names: &[&str], embed: &dyn Embedder, tau: f64) -> Result<Vec<usize>> {
    let vecs: Vec<EmbeddingVector> = names.iter().map(|n| embed.embed(n)).collect::<ClientResult<_>>()?;
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|a, b| names[*a].cmp(names[*b]).then(a.cmp(b)));
    let mut target: Vec<usize> = (0..names.len()).collect();
    let mut survivors: Vec<usize> = Vec::new();
    for i in order {
        let dup = survivors.iter().copied().find(|&s| {
            names[s].eq_ignore_ascii_case(names[i]) || vecs[s].cosine(&vecs[i]) >= tau
        });
        match dup {
            Some(s) => target[i] = s,
            None => survivors.push(i),
        }
    }
    Ok(target)
}

impl Taxonomy {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.themes {
            if t.name.trim().is_empty() {
                return Err(Error::Invalid("empty theme name".into()));
            }
            if !seen.insert(t.name.to_lowercase()) {
                return Err(Error::Invalid(format!("duplicate theme {:?}", t.name)));
            }
            if t.subtopics.is_empty() {
                return Err(Error::Invalid(format!("theme {:?} has no subtopics", t.name)));
            }
            let mut subs = HashSet::new();
            for s in &t.subtopics {
                if !subs.insert(s.name.as_str()) {
                    return Err(Error::Invalid(format!("duplicate subtopic {:?} in {:?}", s.name, t.name)));
                }
            }
        }
        Ok(())
    }

    pub fn subtopic_count(&self) -> usize {
        self.themes.iter().map(|t| t.subtopics.len()).sum()
    }

    pub fn subtopic(&self, r: SubtopicRef) -> Option<&Subtopic> {
        self.themes.get(r.theme)?.subtopics.get(r.subtopic)
    }

    /// All `(ref, subtopic)` pairs in canonical order.
    pub fn subtopics(&self) -> impl Iterator<Item = (SubtopicRef, &Subtopic)> {
        self.themes.iter().enumerate().flat_map(|(ti, t)| {
            t.subtopics
                .iter()
                .enumerate()
                .map(move |(si, s)| (SubtopicRef { theme: ti, subtopic: si }, s))
        })
    }

    /// Canonical serialisation: JSON with sorted keys and a schema version.
    pub fn to_canonical_string(&self, config_hash: &str) -> Result<String> {
        io::canonical_json("taxonomy", SCHEMA_VERSION, config_hash, self)
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        io::write_file(path, self.to_canonical_string(config_hash)?.as_bytes())
    }

    /// Load a taxonomy and the config hash it was written with.
    pub fn load(path: &Path) -> Result<(Taxonomy, String)> {
        io::read_canonical_json(path, "taxonomy", SCHEMA_VERSION)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaxonomyConfig {
    pub themes: usize,
    pub subtopics_per_theme: usize,
    pub seed_corpus_size: usize,
    pub expansion: ExpansionConfig,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        Self {
            themes: 10,
            subtopics_per_theme: 5,
            seed_corpus_size: 1000,
            expansion: ExpansionConfig::default(),
        }
    }
}

/// Seed ingest, theme expansion, subtopic division and duplicate merging.
pub fn build_taxonomy(
    corpus: &[(String, String)],
    text: &dyn TextGen,
    embed: &dyn Embedder,
    config: &TaxonomyConfig,
    seed: u64,
) -> Result<Taxonomy> {
    let texts: Vec<&str> = corpus.iter().map(|(t, _)| t.as_str()).collect();
    let labels: Vec<&str> = corpus.iter().map(|(_, l)| l.as_str()).collect();
    let seed_set = ingest_seed(&texts, &labels)?;
    let mut log = vec![format!(
        "ingested {} seed texts into {} seed themes",
        seed_set.sampled_texts.len(),
        SeedCategory::ALL.len()
    )];
    let themes = expand_themes(&seed_set, text, embed, config.themes, seed, &config.expansion, &mut log)?;
    let themes = themes
        .into_iter()
        .map(|t| divide_subtopics(t, text, embed, config.subtopics_per_theme, seed, &config.expansion, &mut log))
        .collect::<Result<Vec<_>>>()?;
    let tax = merge_duplicates(&Taxonomy { themes, provenance: log }, embed, config.expansion.tau_merge)?;
    tax.validate()?;
    Ok(tax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{seed_corpus, MockEmbedder, MockTextGen};

    fn labels6() -> (Vec<String>, Vec<String>) {
        let texts = (0..6).map(|i| format!("text {i}")).collect();
        let labels = SeedCategory::ALL.iter().map(|c| c.label().to_string()).collect();
        (texts, labels)
    }

    #[test]
    fn ingest_one_per_category() {
        let (t, l) = labels6();
        let s = ingest_seed(&t, &l).unwrap();
        let themes = s.themes();
        assert_eq!(themes.len(), 6);
        assert!(themes.iter().all(|t| t.seed_members == 1));
    }

    #[test]
    fn ingest_rejects_conflicts_and_unknown_labels() {
        let t = vec!["a".to_string(), "a".to_string()];
        let l = vec!["people".to_string(), "animals".to_string()];
        assert!(ingest_seed(&t, &l).is_err());
        let l = vec!["people".to_string(), "robots".to_string()];
        assert!(ingest_seed(&t, &l).is_err());
        let empty: Vec<String> = Vec::new();
        assert!(ingest_seed(&empty, &empty).is_err());
    }

    #[test]
    fn thousand_entry_seed_corpus() {
        let corpus = seed_corpus(1000, 3);
        let texts: Vec<&str> = corpus.iter().map(|c| c.0.as_str()).collect();
        let labels: Vec<&str> = corpus.iter().map(|c| c.1.as_str()).collect();
        let s = ingest_seed(&texts, &labels).unwrap();
        assert_eq!(s.themes().len(), 6);
        assert_eq!(s.themes().iter().map(|t| t.seed_members).sum::<usize>(), 1000);
    }

    #[test]
    fn expansion_targets() {
        let (t, l) = labels6();
        let s = ingest_seed(&t, &l).unwrap();
        let e = MockEmbedder::new(32, 0);
        let mut log = Vec::new();
        let six = expand_themes(&s, &MockTextGen::new(), &e, 6, 1, &ExpansionConfig::default(), &mut log).unwrap();
        assert_eq!(six, s.themes());
        assert!(log.is_empty());
        let forty = expand_themes(&s, &MockTextGen::new(), &e, 40, 1, &ExpansionConfig::default(), &mut log).unwrap();
        assert_eq!(forty.len(), 40);
        assert_eq!(&forty[..6], &s.themes()[..]);
        let lower: HashSet<String> = forty.iter().map(|t| t.name.to_lowercase()).collect();
        assert_eq!(lower.len(), 40);
    }

    struct Constant;
    impl TextGen for Constant {
        fn textgen(&self, r: &TextGenRequest) -> ClientResult<Vec<String>> {
            Ok(vec!["Animals".to_string(); r.n_completions])
        }
    }

    #[test]
    fn duplicate_only_client_cannot_reach_target() {
        let (t, l) = labels6();
        let s = ingest_seed(&t, &l).unwrap();
        let e = MockEmbedder::new(32, 0);
        let err = expand_themes(&s, &Constant, &e, 8, 1, &ExpansionConfig::default(), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, Error::CannotReachTarget { rounds: 10, .. }));
    }

    #[test]
    fn animals_divide_along_space_and_action() {
        let theme = Theme {
            name: "Animals".into(),
            origin: Origin::Seed,
            seed_members: 0,
            subtopics: Vec::new(),
        };
        let e = MockEmbedder::new(32, 0);
        let t = divide_subtopics(theme.clone(), &MockTextGen::new(), &e, 20, 4, &ExpansionConfig::default(), &mut Vec::new())
            .unwrap();
        assert_eq!(t.subtopics.len(), 20);
        let axes: HashSet<DivisionAxis> = t.subtopics.iter().map(|s| s.division_axis).collect();
        assert!(axes.contains(&DivisionAxis::TimeSpace) && axes.contains(&DivisionAxis::Theme));
        let one = divide_subtopics(theme, &MockTextGen::new(), &e, 1, 4, &ExpansionConfig::default(), &mut Vec::new())
            .unwrap();
        assert_eq!(one.subtopics.len(), 1);
    }

    #[test]
    fn merging_exact_duplicates_and_idempotence() {
        let sub = |n: &str| Subtopic {
            name: n.into(),
            division_axis: DivisionAxis::Theme,
            entities: Vec::new(),
        };
        let tax = Taxonomy {
            themes: vec![Theme {
                name: "Animals".into(),
                origin: Origin::Seed,
                seed_members: 0,
                subtopics: vec![sub("Savanna Animals"), sub("Forest Animals"), sub("Savanna Animals")],
            }],
            provenance: Vec::new(),
        };
        let e = MockEmbedder::new(32, 0);
        let once = merge_duplicates(&tax, &e, 0.95).unwrap();
        assert_eq!(once.themes[0].subtopics.len(), 2);
        let twice = merge_duplicates(&once, &e, 0.95).unwrap();
        assert_eq!(once.themes, twice.themes);
        let unchanged = merge_duplicates(&once, &e, 0.95).unwrap();
        assert_eq!(unchanged.themes, once.themes);
    }

    #[test]
    fn desk_and_full_size_counts() {
        let corpus = seed_corpus(200, 1);
        let e = MockEmbedder::new(32, 0);
        let desk = build_taxonomy(&corpus, &MockTextGen::new(), &e, &TaxonomyConfig::default(), 9).unwrap();
        assert_eq!(desk.themes.len(), 10);
        assert_eq!(desk.subtopic_count(), 50);
        let full = TaxonomyConfig {
            themes: 40,
            subtopics_per_theme: 20,
            ..TaxonomyConfig::default()
        };
        let big = build_taxonomy(&corpus, &MockTextGen::new(), &e, &full, 9).unwrap();
        assert_eq!(big.subtopic_count(), 800);
    }
}
