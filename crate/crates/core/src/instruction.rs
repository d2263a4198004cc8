//! Structured instruction specs and the contrasting-pair grammar.
//!
//! Every free-text instruction is rendered from an [`InstructionSpec`], which
//! fully determines the ideal image in [`crate::world`]. A preference pair
//! starts from one base spec and perturbs only the fields governed by its
//! [`PreferenceDimension`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::SeededRng;

/// Named hue grid, as fractions of the colour wheel.
pub const HUES: [(&str, f64); 8] = [
    ("red", 0.0),
    ("orange", 1.0 / 12.0),
    ("yellow", 1.0 / 6.0),
    ("green", 1.0 / 3.0),
    ("cyan", 0.5),
    ("blue", 2.0 / 3.0),
    ("purple", 0.75),
    ("magenta", 5.0 / 6.0),
];

/// Plausible sizes and the words that describe them.
pub const PLAUSIBLE_SIZES: [(&str, f64); 3] = [("small", 0.45), ("medium-sized", 0.6), ("large", 0.75)];

/// Out-of-range sizes used only by counterfactual instructions.
pub const IMPLAUSIBLE_SIZES: [(&str, f64); 2] = [
    ("absurdly tiny, smaller than a bathtub,", 0.2),
    ("impossibly gigantic, towering over everything,", 1.0),
];

pub const MAX_COUNT: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PreferenceDimension {
    ContentConsistency,
    Counterfactual,
    Aesthetics,
}

impl PreferenceDimension {
    pub const ALL: [PreferenceDimension; 3] = [
        PreferenceDimension::ContentConsistency,
        PreferenceDimension::Counterfactual,
        PreferenceDimension::Aesthetics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PreferenceDimension::ContentConsistency => "content_consistency",
            PreferenceDimension::Counterfactual => "counterfactual",
            PreferenceDimension::Aesthetics => "aesthetics",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }

    /// Spec fields a pair along this dimension is allowed to differ in.
    pub fn governed_fields(self) -> &'static [SpecField] {
        match self {
            PreferenceDimension::ContentConsistency => &[SpecField::Count, SpecField::Hue],
            PreferenceDimension::Counterfactual => &[SpecField::Size, SpecField::Distorted],
            PreferenceDimension::Aesthetics => &[SpecField::Style],
        }
    }
}

impl fmt::Display for PreferenceDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Style {
    Vibrant,
    Dull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecField {
    Count,
    Hue,
    Size,
    Style,
    Distorted,
}

impl SpecField {
    pub const ALL: [SpecField; 5] = [
        SpecField::Count,
        SpecField::Hue,
        SpecField::Size,
        SpecField::Style,
        SpecField::Distorted,
    ];
}

/// Machine-checkable content of one instruction.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstructionSpec {
    pub entity_ref: u32,
    /// 1..=3
    pub count: u8,
    /// [0, 1), one of [`HUES`]
    pub hue: f64,
    /// (0, 1]
    pub size: f64,
    pub style: Style,
    pub distorted: bool,
}

impl InstructionSpec {
    pub fn is_valid(&self) -> bool {
        (1..=MAX_COUNT).contains(&self.count)
            && (0.0..1.0).contains(&self.hue)
            && self.size > 0.0
            && self.size <= 1.0
    }

    /// Fields in which `self` and `other` differ.
    pub fn diff(&self, other: &InstructionSpec) -> Vec<SpecField> {
        let mut out = Vec::new();
        if self.count != other.count {
            out.push(SpecField::Count);
        }
        if self.hue != other.hue {
            out.push(SpecField::Hue);
        }
        if self.size != other.size {
            out.push(SpecField::Size);
        }
        if self.style != other.style {
            out.push(SpecField::Style);
        }
        if self.distorted != other.distorted {
            out.push(SpecField::Distorted);
        }
        out
    }

    /// Every size value the renderer knows about.
    pub fn size_grid() -> impl Iterator<Item = f64> {
        PLAUSIBLE_SIZES
            .iter()
            .chain(IMPLAUSIBLE_SIZES.iter())
            .map(|(_, s)| *s)
    }

    /// Exhaustive attribute grid for one entity.
    pub fn grid(entity_ref: u32) -> Vec<InstructionSpec> {
        let mut out = Vec::new();
        for count in 1..=MAX_COUNT {
            for (_, hue) in HUES {
                for size in Self::size_grid() {
                    for style in [Style::Vibrant, Style::Dull] {
                        for distorted in [false, true] {
                            out.push(InstructionSpec {
                                entity_ref,
                                count,
                                hue,
                                size,
                                style,
                                distorted,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Replace `field` with a different value drawn from its grid.
    pub fn with_wrong(&self, field: SpecField, rng: &mut SeededRng) -> InstructionSpec {
        let mut s = *self;
        match field {
            SpecField::Count => {
                let others: Vec<u8> = (1..=MAX_COUNT).filter(|c| *c != self.count).collect();
                s.count = others[rng.below(others.len())];
            }
            SpecField::Hue => {
                let others: Vec<f64> = HUES.iter().map(|h| h.1).filter(|h| *h != self.hue).collect();
                s.hue = others[rng.below(others.len())];
            }
            SpecField::Size => {
                let others: Vec<f64> = Self::size_grid().filter(|v| *v != self.size).collect();
                s.size = others[rng.below(others.len())];
            }
            SpecField::Style => {
                s.style = match self.style {
                    Style::Vibrant => Style::Dull,
                    Style::Dull => Style::Vibrant,
                }
            }
            SpecField::Distorted => s.distorted = !self.distorted,
        }
        s
    }
}

/// Draw a base (preferred) spec: plausible size, vibrant, undistorted.
pub fn sample_base_spec(entity_ref: u32, rng: &mut SeededRng) -> InstructionSpec {
    InstructionSpec {
        entity_ref,
        count: 1 + rng.below(MAX_COUNT as usize) as u8,
        hue: HUES[rng.below(HUES.len())].1,
        size: PLAUSIBLE_SIZES[rng.below(PLAUSIBLE_SIZES.len())].1,
        style: Style::Vibrant,
        distorted: false,
    }
}

/// Perturb exactly the governed fields of `base`.
pub fn contrast_spec(
    base: &InstructionSpec,
    dimension: PreferenceDimension,
    rng: &mut SeededRng,
) -> InstructionSpec {
    match dimension {
        PreferenceDimension::ContentConsistency => {
            let s = base.with_wrong(SpecField::Count, rng);
            s.with_wrong(SpecField::Hue, rng)
        }
        PreferenceDimension::Counterfactual => {
            let mut s = *base;
            s.distorted = true;
            s.size = IMPLAUSIBLE_SIZES[rng.below(IMPLAUSIBLE_SIZES.len())].1;
            s
        }
        PreferenceDimension::Aesthetics => {
            let mut s = *base;
            s.style = Style::Dull;
            s
        }
    }
}

fn hue_name(hue: f64) -> &'static str {
    HUES.iter()
        .min_by(|a, b| {
            libm::fabs(a.1 - hue)
                .partial_cmp(&libm::fabs(b.1 - hue))
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .map(|h| h.0)
        .unwrap_or("gray")
}

fn size_phrase(size: f64) -> &'static str {
    PLAUSIBLE_SIZES
        .iter()
        .chain(IMPLAUSIBLE_SIZES.iter())
        .min_by(|a, b| {
            libm::fabs(a.1 - size)
                .partial_cmp(&libm::fabs(b.1 - size))
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .map(|s| s.0)
        .unwrap_or("odd-sized")
}

/// Naive English plural of the head noun (last word).
pub fn pluralize(name: &str) -> String {
    let lower = name.to_lowercase();
    if lower.ends_with('s') || lower.ends_with('x') || lower.ends_with("ch") || lower.ends_with("sh") {
        format!("{name}es")
    } else if lower.ends_with('y')
        && !matches!(lower.chars().rev().nth(1), Some('a' | 'e' | 'i' | 'o' | 'u'))
    {
        format!("{}ies", &name[..name.len() - 1])
    } else {
        format!("{name}s")
    }
}

/// Render a spec to instruction text. Each clause depends on exactly one
/// group of fields, so distinct specs for one entity give distinct texts.
pub fn render_text(entity: &str, spec: &InstructionSpec) -> String {
    let (lead, noun) = match spec.count {
        1 => (String::from("A single"), String::from(entity)),
        2 => (String::from("A pair of"), pluralize(entity)),
        n => (format!("A group of {}", count_word(n)), pluralize(entity)),
    };
    let style = match spec.style {
        Style::Vibrant => "vibrant and colorful, full of life",
        Style::Dull => "but gray and faded, looking lifeless",
    };
    let geometry = if spec.distorted {
        "warped and twisted out of shape"
    } else {
        "standing in natural proportions"
    };
    format!(
        "{lead} {} {} {noun}, {style}, {geometry}.",
        size_phrase(spec.size),
        hue_name(spec.hue)
    )
}

/// Recover the attribute fields of a text produced by [`render_text`].
/// `entity_ref` is set to 0. Returns `None` for text outside the grammar.
pub fn parse_text(text: &str) -> Option<InstructionSpec> {
    let (count, rest) = if let Some(r) = text.strip_prefix("A single ") {
        (1, r)
    } else if let Some(r) = text.strip_prefix("A pair of ") {
        (2, r)
    } else if let Some(r) = text.strip_prefix("A group of three ") {
        (3, r)
    } else {
        return None;
    };
    let (size, rest) = PLAUSIBLE_SIZES
        .iter()
        .chain(IMPLAUSIBLE_SIZES.iter())
        .find_map(|(phrase, v)| rest.strip_prefix(phrase)?.strip_prefix(' ').map(|r| (*v, r)))?;
    let (hue_word, _) = rest.split_once(' ')?;
    let hue = HUES.iter().find(|h| h.0 == hue_word)?.1;
    let style = if text.contains(", vibrant and colorful, full of life, ") {
        Style::Vibrant
    } else if text.contains(", but gray and faded, looking lifeless, ") {
        Style::Dull
    } else {
        return None;
    };
    let distorted = if text.ends_with(", warped and twisted out of shape.") {
        true
    } else if text.ends_with(", standing in natural proportions.") {
        false
    } else {
        return None;
    };
    Some(InstructionSpec {
        entity_ref: 0,
        count,
        hue,
        size,
        style,
        distorted,
    })
}

fn count_word(n: u8) -> &'static str {
    match n {
        1 => "one",
        2 => "two",
        3 => "three",
        _ => "several",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn grid_specs_are_valid() {
        let g = InstructionSpec::grid(0);
        assert_eq!(g.len(), 3 * 8 * 5 * 2 * 2);
        assert!(g.iter().all(|s| s.is_valid()));
    }

    #[test]
    fn contrast_touches_only_governed_fields() {
        for seed in 0..200 {
            let mut rng = SeededRng::new(seed);
            let base = sample_base_spec(3, &mut rng);
            for dim in PreferenceDimension::ALL {
                let neg = contrast_spec(&base, dim, &mut rng);
                let diff = neg.diff(&base);
                assert!(!diff.is_empty());
                assert_eq!(diff, dim.governed_fields().to_vec(), "{dim}");
                assert_eq!(neg.entity_ref, base.entity_ref);
            }
        }
    }

    #[test]
    fn text_rendering_is_injective_on_grid() {
        let grid = InstructionSpec::grid(0);
        let texts: BTreeSet<String> = grid.iter().map(|s| render_text("swimming pool", s)).collect();
        assert_eq!(texts.len(), grid.len());
    }

    #[test]
    fn aesthetic_pair_differs_only_in_style_clause() {
        let base = InstructionSpec {
            entity_ref: 0,
            count: 2,
            hue: HUES[3].1,
            size: 0.6,
            style: Style::Vibrant,
            distorted: false,
        };
        let mut rng = SeededRng::new(0);
        let neg = contrast_spec(&base, PreferenceDimension::Aesthetics, &mut rng);
        let a = render_text("sea of flowers", &base);
        let b = render_text("sea of flowers", &neg);
        assert!(a.contains("vibrant and colorful"));
        assert!(b.contains("gray and faded"));
        assert_eq!(
            a.replace("vibrant and colorful, full of life", "#"),
            b.replace("but gray and faded, looking lifeless", "#")
        );
    }

    #[test]
    fn counterfactual_text_asserts_implausible_scale() {
        let base = InstructionSpec {
            entity_ref: 0,
            count: 1,
            hue: 0.5,
            size: 0.6,
            style: Style::Vibrant,
            distorted: false,
        };
        let mut found_bathtub = false;
        for seed in 0..20 {
            let mut rng = SeededRng::new(seed);
            let neg = contrast_spec(&base, PreferenceDimension::Counterfactual, &mut rng);
            let t = render_text("indoor swimming pool", &neg);
            assert!(t.contains("warped"));
            found_bathtub |= t.contains("smaller than a bathtub");
        }
        assert!(found_bathtub);
    }

    #[test]
    fn pluralization() {
        assert_eq!(pluralize("pool"), "pools");
        assert_eq!(pluralize("bench"), "benches");
        assert_eq!(pluralize("gallery"), "galleries");
        assert_eq!(pluralize("bay"), "bays");
    }

    #[test]
    fn parse_inverts_render_over_grid() {
        for spec in InstructionSpec::grid(0) {
            for entity in ["fox", "grand sports stadium", "red bus"] {
                assert_eq!(parse_text(&render_text(entity, &spec)), Some(spec));
            }
        }
        assert_eq!(parse_text("A dog."), None);
        assert_eq!(parse_text(""), None);
    }
}
