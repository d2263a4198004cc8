//! Preference optimisation: discrete DPO identities, the diffusion
//! preference losses, triple selection and the alignment trainer.

pub mod discrete;
pub mod losses;
pub mod trainer;
pub mod triples;

use alloc::string::String;
use alloc::vec::Vec;

use crate::instruction::{InstructionSpec, PreferenceDimension};
use crate::world::Image;

pub use discrete::{bt_loss, dpo_loss_discrete, optimal_policy, Comparison, DiscreteToyMdp, Table};
pub use losses::{
    cross_validation_loss, delta, diffusion_dpo_loss, sft_loss, sft_relative_loss, text_contrast_loss,
    CrossNoise, CrossValForm, LossScale, OmegaMode, PairView,
};
pub use trainer::{train_align, AlignConfig, CurvePoint, LossCurve, Variant};
pub use triples::{select_triples, Element, Triple, TripleKind, TriplePolicy};

/// An instruction as seen by the trainer: text, its embedding and the spec
/// the oracle scores against.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Instruction {
    pub text: String,
    pub cond: Vec<f64>,
    pub spec: InstructionSpec,
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub entity: String,
    /// Candidate-generation seeds for `y1` and `y2`.
    pub seeds: [u64; 2],
    /// Index of the selected candidate on each side.
    pub selected: [usize; 2],
    /// Judge consistency scores of `y1` against `x1` and `y2` against `x2`.
    pub judge_scores: [f64; 2],
}

/// Two contrasting instruction–image pairs `(x1, y1)` and `(x2, y2)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreferenceSample {
    pub x1: Instruction,
    pub x2: Instruction,
    pub y1: Image,
    pub y2: Image,
    pub dimension: PreferenceDimension,
    pub provenance: Provenance,
}

impl PreferenceSample {
    pub fn view(&self) -> PairView<'_> {
        PairView {
            x1: &self.x1.cond,
            x2: &self.x2.cond,
            y1: &self.y1.pixels,
            y2: &self.y2.pixels,
        }
    }
}
