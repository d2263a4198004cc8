//! DPO training units `(condition, winner, loser)` derived from a sample.

use alloc::vec;
use alloc::vec::Vec;

use super::PreferenceSample;

/// One of the four members of a preference sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Element {
    X1,
    X2,
    Y1,
    Y2,
}

impl Element {
    pub fn is_instruction(self) -> bool {
        matches!(self, Element::X1 | Element::X2)
    }

    /// The element's vector: a condition embedding or image pixels.
    pub fn resolve(self, sample: &PreferenceSample) -> &[f64] {
        match self {
            Element::X1 => &sample.x1.cond,
            Element::X2 => &sample.x2.cond,
            Element::Y1 => &sample.y1.pixels,
            Element::Y2 => &sample.y2.pixels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TripleKind {
    /// Conditioned on an instruction, contrasting two images.
    ImageContrast,
    /// Conditioned on an image, contrasting two instructions.
    TextContrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub condition: Element,
    pub winner: Element,
    pub loser: Element,
    pub kind: TripleKind,
}

impl Triple {
    const fn new(condition: Element, winner: Element, loser: Element, kind: TripleKind) -> Self {
        Self {
            condition,
            winner,
            loser,
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TriplePolicy {
    /// Image-contrast triples only.
    #[default]
    ImageContrastOnly,
    /// All four triples.
    All,
}

pub const IMAGE_CONTRAST: [Triple; 2] = [
    Triple::new(Element::X1, Element::Y1, Element::Y2, TripleKind::ImageContrast),
    Triple::new(Element::X2, Element::Y2, Element::Y1, TripleKind::ImageContrast),
];

pub const TEXT_CONTRAST: [Triple; 2] = [
    Triple::new(Element::Y1, Element::X1, Element::X2, TripleKind::TextContrast),
    Triple::new(Element::Y2, Element::X2, Element::X1, TripleKind::TextContrast),
];

/// Triples a sample contributes under `policy`. The sample is taken so the
/// triple list can depend on its content; at present both policies are
/// purely structural.
pub fn select_triples(_sample: &PreferenceSample, policy: TriplePolicy) -> Vec<Triple> {
    let mut out = vec![IMAGE_CONTRAST[0], IMAGE_CONTRAST[1]];
    if policy == TriplePolicy::All {
        out.extend_from_slice(&TEXT_CONTRAST);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_follow_condition_modality() {
        for t in IMAGE_CONTRAST.iter().chain(&TEXT_CONTRAST) {
            assert_eq!(t.kind == TripleKind::ImageContrast, t.condition.is_instruction());
            assert_eq!(t.winner.is_instruction(), !t.condition.is_instruction());
            assert_eq!(t.loser.is_instruction(), !t.condition.is_instruction());
            assert_ne!(t.winner, t.loser);
        }
    }
}
