//! Oracle evaluation of generated samples and pairwise win-rate statistics.

use alloc::vec::Vec;

use crate::denoiser::Denoiser;
use crate::diffusion::sample;
use crate::error::{CoreError, Result};
use crate::instruction::InstructionSpec;
use crate::rng::derive_seed;
use crate::schedule::NoiseSchedule;
use crate::world::{Image, ImageShape, Scores, WorldConfig};

/// A held-out prompt: its embedding and the spec the oracle scores against.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub cond: Vec<f64>,
    pub spec: InstructionSpec,
}

/// Anything that turns a prompt into an image.
pub trait ImageSource {
    fn generate(&self, prompt: &Prompt, seed: u64) -> Result<Image>;
}

/// Ancestral sampling from a denoiser.
#[derive(Debug, Clone, Copy)]
pub struct SamplerSource<'a> {
    pub denoiser: &'a Denoiser,
    pub schedule: &'a NoiseSchedule,
    pub shape: ImageShape,
}

impl ImageSource for SamplerSource<'_> {
    fn generate(&self, prompt: &Prompt, seed: u64) -> Result<Image> {
        if self.shape.len() != self.denoiser.config().image_dim {
            return Err(CoreError::ShapeMismatch {
                expected: self.denoiser.config().image_dim,
                actual: self.shape.len(),
            });
        }
        Image::from_pixels(self.shape, sample(self.denoiser, &prompt.cond, self.schedule, seed)?)
    }
}

/// The "perfect model": renders the prompt's spec exactly.
#[derive(Debug, Clone, Copy)]
pub struct IdealSource<'a> {
    pub world: &'a WorldConfig,
}

impl ImageSource for IdealSource<'_> {
    fn generate(&self, prompt: &Prompt, _seed: u64) -> Result<Image> {
        Ok(self.world.render_ideal(&prompt.spec))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub prompt: usize,
    pub seed: u64,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub means: Scores,
    /// Unweighted mean of the three metric means.
    pub average: f64,
    /// Prompt-major, one row per (prompt, seed).
    pub rows: Vec<EvalRow>,
    pub seeds: Vec<u64>,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>, seeds: Vec<u64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::Empty("evaluation rows"));
        }
        let n = rows.len() as f64;
        let mut means = Scores {
            consistency: 0.0,
            realism: 0.0,
            aesthetic: 0.0,
        };
        for r in &rows {
            means.consistency += r.scores.consistency;
            means.realism += r.scores.realism;
            means.aesthetic += r.scores.aesthetic;
        }
        means.consistency /= n;
        means.realism /= n;
        means.aesthetic /= n;
        Ok(Self {
            average: means.composite(),
            means,
            rows,
            seeds,
        })
    }

    /// Mean composite score of each prompt over its samples.
    pub fn prompt_composites(&self) -> Vec<f64> {
        let per = self.seeds.len().max(1);
        self.rows
            .chunks(per)
            .map(|c| c.iter().map(|r| r.scores.composite()).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Seed of sample `j` for prompt `i`.
pub fn sample_seed(seed: u64, prompt: usize) -> u64 {
    derive_seed(seed, "eval-sample", prompt as u64)
}

/// Generate one image per (prompt, seed) and score it with the oracle.
pub fn evaluate(source: &dyn ImageSource, prompts: &[Prompt], world: &WorldConfig, seeds: &[u64]) -> Result<EvalReport> {
    if prompts.is_empty() {
        return Err(CoreError::Empty("prompt set"));
    }
    if seeds.is_empty() {
        return Err(CoreError::Empty("seeds"));
    }
    let mut rows = Vec::with_capacity(prompts.len() * seeds.len());
    for (i, p) in prompts.iter().enumerate() {
        for &seed in seeds {
            let image = source.generate(p, sample_seed(seed, i))?;
            rows.push(EvalRow {
                prompt: i,
                seed,
                scores: world.score(&image, &p.spec)?,
            });
        }
    }
    EvalReport::from_rows(rows, seeds.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WinRateResult {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl WinRateResult {
    pub fn total(&self) -> usize {
        self.wins + self.losses + self.ties
    }

    pub fn win_rate(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        self.wins as f64 / self.total() as f64
    }

    /// One-sided sign-test p-value for "a beats b", ties dropped:
    /// `P(X ≥ wins)` with `X ~ Binomial(wins + losses, 1/2)`.
    pub fn p_value(&self) -> f64 {
        binomial_upper_tail(self.wins, self.wins + self.losses)
    }

    pub fn merge(&self, other: &WinRateResult) -> WinRateResult {
        WinRateResult {
            wins: self.wins + other.wins,
            losses: self.losses + other.losses,
            ties: self.ties + other.ties,
        }
    }

    pub fn swapped(&self) -> WinRateResult {
        WinRateResult {
            wins: self.losses,
            losses: self.wins,
            ties: self.ties,
        }
    }
}

/// `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`, summed in log space.
pub fn binomial_upper_tail(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln_half_n = -(n as f64) * core::f64::consts::LN_2;
    let lnfact = |x: usize| libm::lgamma(x as f64 + 1.0);
    let terms: Vec<f64> = (k..=n)
        .map(|j| lnfact(n) - lnfact(j) - lnfact(n - j) + ln_half_n)
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    libm::exp((m + libm::log(terms.iter().map(|t| libm::exp(t - m)).sum::<f64>())).min(0.0))
}

/// Per prompt, `a` wins if its mean composite beats `b`'s by more than
/// `margin`, ties if the difference is at most `margin`.
pub fn compare_reports(a: &EvalReport, b: &EvalReport, margin: f64) -> Result<WinRateResult> {
    if !(margin >= 0.0) {
        return Err(CoreError::InvalidConfig("margin must be non-negative".into()));
    }
    let (ca, cb) = (a.prompt_composites(), b.prompt_composites());
    if ca.len() != cb.len() {
        return Err(CoreError::ShapeMismatch {
            expected: ca.len(),
            actual: cb.len(),
        });
    }
    let mut out = WinRateResult::default();
    for (x, y) in ca.iter().zip(&cb) {
        let d = x - y;
        if d > margin {
            out.wins += 1;
        } else if d < -margin {
            out.losses += 1;
        } else {
            out.ties += 1;
        }
    }
    Ok(out)
}

/// Evaluate both sources on the same prompts and compare.
pub fn compare(
    a: &dyn ImageSource,
    b: &dyn ImageSource,
    prompts: &[Prompt],
    world: &WorldConfig,
    seeds_a: &[u64],
    seeds_b: &[u64],
    margin: f64,
) -> Result<WinRateResult> {
    let ra = evaluate(a, prompts, world, seeds_a)?;
    let rb = evaluate(b, prompts, world, seeds_b)?;
    compare_reports(&ra, &rb, margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;
    use crate::instruction::sample_base_spec;
    use crate::rng::SeededRng;
    use crate::schedule::ScheduleKind;

    fn prompts(n: usize) -> Vec<Prompt> {
        let mut r = SeededRng::new(5);
        (0..n)
            .map(|i| Prompt {
                cond: r.normal_vec(DenoiserConfig::default().cond_dim),
                spec: sample_base_spec(i as u32, &mut r),
            })
            .collect()
    }

    #[test]
    fn ideal_stub_has_perfect_consistency() {
        let w = WorldConfig::default();
        let r = evaluate(&IdealSource { world: &w }, &prompts(12), &w, &[1, 2]).unwrap();
        assert_eq!(r.rows.len(), 24);
        assert!((r.means.consistency - 1.0).abs() < 1e-12);
        let avg = (r.means.consistency + r.means.realism + r.means.aesthetic) / 3.0;
        assert!((r.average - avg).abs() < 1e-12);
    }

    #[test]
    fn sampler_report_is_deterministic_and_self_ties() {
        let w = WorldConfig::default();
        let d = Denoiser::init(DenoiserConfig::default(), 1).unwrap();
        let s = NoiseSchedule::new(10, ScheduleKind::CosineVp).unwrap();
        let src = SamplerSource { denoiser: &d, schedule: &s, shape: ImageShape::default() };
        let p = prompts(6);
        let a = evaluate(&src, &p, &w, &[3]).unwrap();
        let b = evaluate(&src, &p, &w, &[3]).unwrap();
        assert_eq!(a, b);
        let c = compare_reports(&a, &b, 0.0).unwrap();
        assert_eq!(c, WinRateResult { wins: 0, losses: 0, ties: 6 });
        assert!(evaluate(&src, &[], &w, &[3]).is_err());
    }

    #[test]
    fn comparison_is_antisymmetric() {
        let w = WorldConfig::default();
        let d = Denoiser::init(DenoiserConfig::default(), 1).unwrap();
        let s = NoiseSchedule::new(10, ScheduleKind::CosineVp).unwrap();
        let src = SamplerSource { denoiser: &d, schedule: &s, shape: ImageShape::default() };
        let ideal = IdealSource { world: &w };
        let p = prompts(8);
        let ab = compare(&src, &ideal, &p, &w, &[1], &[1], 0.02).unwrap();
        let ba = compare(&ideal, &src, &p, &w, &[1], &[1], 0.02).unwrap();
        assert_eq!(ab.swapped(), ba);
        assert_eq!(ab.total(), 8);
    }

    #[test]
    fn binomial_tail_values() {
        assert_eq!(binomial_upper_tail(0, 10), 1.0);
        assert_eq!(binomial_upper_tail(11, 10), 0.0);
        assert!((binomial_upper_tail(10, 10) - 1.0 / 1024.0).abs() < 1e-15);
        // P(X ≥ 8 | n = 10) = (45 + 10 + 1) / 1024
        assert!((binomial_upper_tail(8, 10) - 56.0 / 1024.0).abs() < 1e-13);
        let r = WinRateResult { wins: 120, losses: 80, ties: 0 };
        assert!(r.p_value() < 0.01);
        assert_eq!(r.win_rate(), 0.6);
    }
}
