//! Numerical core for text-conditioned preference alignment of a small
//! diffusion model.
//!
//! Everything here is pure computation over `alloc` collections so the crate
//! builds with `#![no_std]`: the synthetic world (renderer, candidate
//! generator, oracle scorers), the instruction-pair grammar, the
//! variance-preserving noise schedules, a two-hidden-layer noise predictor
//! with a hand-written backward pass, the preference losses, the alignment
//! trainer and the evaluation statistics. IO, clients, file formats and the
//! command line live in the `prefalign` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod align;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod instruction;
pub mod math;
pub mod optim;
pub mod rng;
pub mod schedule;
pub mod world;

pub use denoiser::{Denoiser, DenoiserConfig};
pub use error::{CoreError, Result};
pub use instruction::{InstructionSpec, PreferenceDimension, Style};
pub use rng::SeededRng;
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use world::{Image, ImageShape, Scores, WorldConfig};
