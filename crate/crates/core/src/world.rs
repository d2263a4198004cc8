//! The synthetic world: a deterministic renderer from [`InstructionSpec`]s to
//! tiny RGB images, a noisy candidate generator that sometimes gets an
//! attribute wrong, and exact oracle scorers for consistency, realism and
//! aesthetics.
//!
//! Pixels are stored row-major, channel-last, in `[-1, 1]`. Internally the
//! renderer works in `[0, 1]` colour space.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::instruction::{InstructionSpec, SpecField, Style};
use crate::math::sq_dist;
use crate::rng::{derive_seed, SeededRng};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * CHANNELS
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ImageShape {
    fn default() -> Self {
        Self::new(8, 8)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Image {
    pub shape: ImageShape,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(shape: ImageShape) -> Self {
        Self {
            shape,
            pixels: vec![0.0; shape.len()],
        }
    }

    /// Wrap raw pixels, clamping into `[-1, 1]`.
    pub fn from_pixels(shape: ImageShape, mut pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != shape.len() {
            return Err(CoreError::ShapeMismatch {
                expected: shape.len(),
                actual: pixels.len(),
            });
        }
        for p in &mut pixels {
            *p = p.clamp(-1.0, 1.0);
        }
        Ok(Self { shape, pixels })
    }

    #[inline]
    fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.shape.width + col) * CHANNELS + ch
    }

    /// RGB in `[0, 1]` at one pixel.
    pub fn rgb(&self, row: usize, col: usize) -> [f64; 3] {
        let i = self.index(row, col, 0);
        [
            to_unit(self.pixels[i]),
            to_unit(self.pixels[i + 1]),
            to_unit(self.pixels[i + 2]),
        ]
    }
}

#[inline]
fn to_unit(x: f64) -> f64 {
    ((x + 1.0) * 0.5).clamp(0.0, 1.0)
}

/// Oracle scores, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scores {
    pub consistency: f64,
    pub realism: f64,
    pub aesthetic: f64,
}

impl Scores {
    /// Unweighted mean of the three scores.
    pub fn composite(&self) -> f64 {
        (self.consistency + self.realism + self.aesthetic) / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldConfig {
    pub shape: ImageShape,
    /// Bandwidth of the consistency kernel.
    pub gamma: f64,
    /// Background grey level in `[0, 1]`.
    pub background: f64,
    /// Largest blob radius as a fraction of the shorter image side.
    pub radius_scale: f64,
    pub dull_saturation: f64,
    pub dull_value: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            shape: ImageShape::default(),
            gamma: 4.0,
            background: 0.25,
            radius_scale: 0.22,
            dull_saturation: 0.25,
            dull_value: 0.7,
        }
    }
}

/// Candidate-generator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CandidateConfig {
    pub k: usize,
    /// Standard deviation of additive pixel noise (in `[-1, 1]` units).
    pub noise_level: f64,
    /// Probability that a candidate gets one attribute wrong.
    pub p_corrupt: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            k: 8,
            noise_level: 0.05,
            p_corrupt: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub image: Image,
    /// The attribute that was replaced by a wrong value, if any.
    pub corrupted: Option<SpecField>,
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h - libm::floor(h)) * 6.0;
    let sector = libm::floor(h6);
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn blob_columns(count: u8) -> &'static [f64] {
    match count {
        1 => &[0.5],
        2 => &[0.28, 0.72],
        _ => &[0.18, 0.5, 0.82],
    }
}

impl WorldConfig {
    /// Blob colour for a spec, in `[0, 1]` RGB.
    pub fn blob_color(&self, spec: &InstructionSpec) -> [f64; 3] {
        match spec.style {
            Style::Vibrant => hsv_to_rgb(spec.hue, 1.0, 1.0),
            Style::Dull => hsv_to_rgb(spec.hue, self.dull_saturation, self.dull_value),
        }
    }

    /// Blob coverage in `[0, 1]` at a pixel centre.
    fn coverage(&self, spec: &InstructionSpec, py: f64, px: f64) -> f64 {
        let h = self.shape.height as f64;
        let w = self.shape.width as f64;
        let r = spec.size * self.radius_scale * h.min(w);
        let mut best: f64 = 0.0;
        for (i, frac) in blob_columns(spec.count).iter().enumerate() {
            let cy = h * 0.5;
            let cx = w * frac;
            let d = if spec.distorted {
                // sheared, squashed ellipse pushed off its slot
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let dy = py - (cy + sign * 0.12 * h);
                let dx = px - (cx + 0.35 * r + 0.5);
                let u = (dx - 0.8 * dy) / 1.7;
                let v = dy / 0.6;
                libm::sqrt(u * u + v * v)
            } else {
                let dy = py - cy;
                let dx = px - cx;
                libm::sqrt(dx * dx + dy * dy)
            };
            best = best.max((r + 0.5 - d).clamp(0.0, 1.0));
        }
        best
    }

    /// Deterministic ideal image for a spec.
    pub fn render_ideal(&self, spec: &InstructionSpec) -> Image {
        let shape = self.shape;
        let color = self.blob_color(spec);
        let bg = self.background;
        let mut pixels = Vec::with_capacity(shape.len());
        for row in 0..shape.height {
            for col in 0..shape.width {
                let m = self.coverage(spec, row as f64 + 0.5, col as f64 + 0.5);
                for c in color {
                    let v = bg * (1.0 - m) + c * m;
                    pixels.push(2.0 * v - 1.0);
                }
            }
        }
        Image { shape, pixels }
    }

    fn check_shape(&self, image: &Image) -> Result<()> {
        if image.shape != self.shape || image.pixels.len() != self.shape.len() {
            return Err(CoreError::ShapeMismatch {
                expected: self.shape.len(),
                actual: image.pixels.len(),
            });
        }
        Ok(())
    }

    /// `exp(-‖image - ideal‖² / γ)`.
    pub fn consistency(&self, image: &Image, spec: &InstructionSpec) -> Result<f64> {
        self.check_shape(image)?;
        let ideal = self.render_ideal(spec);
        Ok(libm::exp(-sq_dist(&image.pixels, &ideal.pixels) / self.gamma))
    }

    /// Left–right mirror symmetry of the foreground. Undistorted blobs sit in
    /// mirror-symmetric slots, so regular geometry scores 1.
    pub fn realism(&self, image: &Image) -> f64 {
        let (h, w) = (image.shape.height, image.shape.width);
        let bg = self.background;
        let mut energy = 0.0;
        let mut asym = 0.0;
        for row in 0..h {
            for col in 0..w {
                let a = image.rgb(row, col);
                let b = image.rgb(row, w - 1 - col);
                for c in 0..CHANNELS {
                    let fa = a[c] - bg;
                    let fb = b[c] - bg;
                    energy += fa * fa;
                    asym += (fa - fb) * (fa - fb);
                }
            }
        }
        if energy < 1e-12 {
            return 0.0;
        }
        (1.0 - asym / (2.0 * energy)).clamp(0.0, 1.0)
    }

    /// Foreground-weighted chroma.
    pub fn aesthetic(&self, image: &Image) -> f64 {
        let bg = self.background;
        let (mut num, mut den) = (0.0, 0.0);
        for row in 0..image.shape.height {
            for col in 0..image.shape.width {
                let rgb = image.rgb(row, col);
                let hi = rgb[0].max(rgb[1]).max(rgb[2]);
                let lo = rgb[0].min(rgb[1]).min(rgb[2]);
                let weight = rgb.iter().map(|c| libm::fabs(c - bg)).fold(0.0, f64::max);
                num += (hi - lo) * weight;
                den += weight;
            }
        }
        if den < 1e-12 {
            0.0
        } else {
            (num / den).clamp(0.0, 1.0)
        }
    }

    pub fn score(&self, image: &Image, spec: &InstructionSpec) -> Result<Scores> {
        Ok(Scores {
            consistency: self.consistency(image, spec)?,
            realism: self.realism(image),
            aesthetic: self.aesthetic(image),
        })
    }

    /// `k` noisy renders of `spec`; each independently has probability
    /// `p_corrupt` of one attribute being replaced by a wrong value.
    pub fn generate_candidates(
        &self,
        spec: &InstructionSpec,
        config: &CandidateConfig,
        seed: u64,
    ) -> Vec<Candidate> {
        (0..config.k)
            .map(|i| {
                let mut rng = SeededRng::new(derive_seed(seed, "candidate", i as u64));
                let corrupted = if rng.bernoulli(config.p_corrupt) {
                    Some(SpecField::ALL[rng.below(SpecField::ALL.len())])
                } else {
                    None
                };
                let used = match corrupted {
                    Some(field) => spec.with_wrong(field, &mut rng),
                    None => *spec,
                };
                let mut image = self.render_ideal(&used);
                if config.noise_level > 0.0 {
                    for p in &mut image.pixels {
                        *p = (*p + config.noise_level * rng.normal()).clamp(-1.0, 1.0);
                    }
                }
                Candidate { image, corrupted }
            })
            .collect()
    }

    /// Index of the candidate with the highest consistency; ties go to the
    /// lowest index.
    pub fn select_best_match(&self, spec: &InstructionSpec, candidates: &[Image]) -> Result<usize> {
        if candidates.is_empty() {
            return Err(CoreError::Empty("candidates"));
        }
        let ideal = self.render_ideal(spec);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, c) in candidates.iter().enumerate() {
            self.check_shape(c)?;
            let s = -sq_dist(&c.pixels, &ideal.pixels);
            if s > best.1 {
                best = (i, s);
            }
        }
        Ok(best.0)
    }
}

/// Uniform choice among `n` candidates; the random-selection ablation.
pub fn random_select(n: usize, seed: u64) -> Result<usize> {
    if n == 0 {
        return Err(CoreError::Empty("candidates"));
    }
    Ok(SeededRng::new(derive_seed(seed, "random-select", 0)).below(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruction::{contrast_spec, sample_base_spec, PreferenceDimension, HUES};

    fn saturation(world: &WorldConfig, img: &Image) -> f64 {
        let mut total = 0.0;
        for r in 0..world.shape.height {
            for c in 0..world.shape.width {
                let rgb = img.rgb(r, c);
                total += rgb[0].max(rgb[1]).max(rgb[2]) - rgb[0].min(rgb[1]).min(rgb[2]);
            }
        }
        total
    }

    fn spec() -> InstructionSpec {
        InstructionSpec {
            entity_ref: 0,
            count: 2,
            hue: HUES[5].1,
            size: 0.6,
            style: Style::Vibrant,
            distorted: false,
        }
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let w = WorldConfig::default();
        let a = w.render_ideal(&spec());
        let b = w.render_ideal(&spec());
        assert_eq!(a, b);
        assert_eq!(a.pixels.len(), 192);
        assert!(a.pixels.iter().all(|p| (-1.0..=1.0).contains(p)));
    }

    #[test]
    fn dull_lowers_saturation_and_aesthetic() {
        let w = WorldConfig::default();
        let v = spec();
        let d = InstructionSpec {
            style: Style::Dull,
            ..v
        };
        let (iv, id) = (w.render_ideal(&v), w.render_ideal(&d));
        assert!(saturation(&w, &id) < saturation(&w, &iv));
        assert!(w.aesthetic(&id) < w.aesthetic(&iv));
    }

    #[test]
    fn self_score_is_one() {
        let w = WorldConfig::default();
        let s = spec();
        let sc = w.score(&w.render_ideal(&s), &s).unwrap();
        assert_eq!(sc.consistency, 1.0);
        assert!((sc.realism - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blank_image_scores_low_consistency() {
        let w = WorldConfig::default();
        for s in InstructionSpec::grid(0) {
            let c = w.consistency(&Image::zeros(w.shape), &s).unwrap();
            assert!(c < 0.5, "{c}");
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let w = WorldConfig::default();
        let img = Image::zeros(ImageShape::new(4, 4));
        assert!(matches!(
            w.score(&img, &spec()),
            Err(CoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn noiseless_generator_reproduces_ideal() {
        let w = WorldConfig::default();
        let cfg = CandidateConfig {
            k: 8,
            noise_level: 0.0,
            p_corrupt: 0.0,
        };
        let ideal = w.render_ideal(&spec());
        for c in w.generate_candidates(&spec(), &cfg, 11) {
            assert_eq!(c.image, ideal);
            assert!(c.corrupted.is_none());
        }
    }

    #[test]
    fn best_match_finds_ideal_among_corrupted() {
        let w = WorldConfig::default();
        let s = spec();
        let mut rng = SeededRng::new(5);
        let mut cands: Vec<Image> = (0..7)
            .map(|_| {
                let f = SpecField::ALL[rng.below(5)];
                w.render_ideal(&s.with_wrong(f, &mut rng))
            })
            .collect();
        cands.insert(4, w.render_ideal(&s));
        assert_eq!(w.select_best_match(&s, &cands).unwrap(), 4);
        assert_eq!(w.select_best_match(&s, &cands[..1]).unwrap(), 0);
        assert!(w.select_best_match(&s, &[]).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let w = WorldConfig::default();
        let img = w.render_ideal(&spec());
        let cands = vec![img.clone(), img.clone(), img];
        assert_eq!(w.select_best_match(&spec(), &cands).unwrap(), 0);
    }

    #[test]
    fn forged_negatives_score_below_positives() {
        let w = WorldConfig::default();
        for seed in 0..300 {
            let mut rng = SeededRng::new(seed);
            let pos = sample_base_spec(0, &mut rng);
            for dim in PreferenceDimension::ALL {
                let neg = contrast_spec(&pos, dim, &mut rng);
                let cross = w.consistency(&w.render_ideal(&neg), &pos).unwrap();
                assert!(cross < 0.6, "{dim}: {cross}");
                let cross = w.consistency(&w.render_ideal(&pos), &neg).unwrap();
                assert!(cross < 0.6, "{dim}: {cross}");
            }
        }
    }

    #[test]
    fn random_select_in_range() {
        for seed in 0..50 {
            assert!(random_select(8, seed).unwrap() < 8);
        }
        assert!(random_select(0, 1).is_err());
    }
}
