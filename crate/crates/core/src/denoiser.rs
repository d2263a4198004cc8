//! Conditional noise predictor `ε_θ(y_t, t, c)`.
//!
//! A two-hidden-layer SiLU network over `[flat image ⊕ sinusoidal t ⊕ c]`,
//! plus a time-gated skip: each output pixel adds `g_i(t) · y_t[i]` where
//! the gate `g(t)` is linear in the time embedding. The skip lets a narrow
//! network pass the noisy image through at every noise level.
//! All weights live in one flat `Vec<f64>` so optimizers, checkpoints and
//! the finite-difference checker can treat them uniformly. The backward
//! pass is written out by hand.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenoiserConfig {
    pub image_dim: usize,
    /// Width of the sinusoidal timestep embedding; must be even.
    pub time_dim: usize,
    pub cond_dim: usize,
    pub hidden: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            image_dim: 192,
            time_dim: 16,
            cond_dim: 256,
            hidden: 128,
        }
    }
}

impl DenoiserConfig {
    pub fn input_dim(&self) -> usize {
        self.image_dim + self.time_dim + self.cond_dim
    }

    pub fn num_params(&self) -> usize {
        let (i, h, o) = (self.input_dim(), self.hidden, self.image_dim);
        h * i + h + h * h + h + o * h + o + o * self.time_dim + o
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_dim == 0 || self.hidden == 0 || self.time_dim % 2 != 0 {
            return Err(CoreError::InvalidConfig(format!("bad denoiser config {self:?}")));
        }
        Ok(())
    }

    fn offsets(&self) -> Offsets {
        let (i, h, o) = (self.input_dim(), self.hidden, self.image_dim);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        let ws = b3 + o;
        let bs = ws + o * self.time_dim;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            ws,
            bs,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    ws: usize,
    bs: usize,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    config: DenoiserConfig,
    params: Vec<f64>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

#[inline]
fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// `out = W x + b` for row-major `W` (rows = out.len()).
#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * n..(r + 1) * n];
        let mut acc = b[r];
        for (a, v) in row.iter().zip(x) {
            acc += a * v;
        }
        *o = acc;
    }
}

/// Backward of `affine`: accumulate `dW += dz ⊗ x`, `db += dz` and, when
/// requested, write `dx = Wᵀ dz`.
#[inline]
fn affine_backward(w: &[f64], x: &[f64], dz: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let n = x.len();
    for (r, g) in dz.iter().enumerate() {
        db[r] += g;
        if *g == 0.0 {
            continue;
        }
        for (d, v) in dw[r * n..(r + 1) * n].iter_mut().zip(x) {
            *d += g * v;
        }
    }
    if let Some(dx) = dx {
        dx.fill(0.0);
        for (r, g) in dz.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            for (d, a) in dx.iter_mut().zip(&w[r * n..(r + 1) * n]) {
                *d += g * a;
            }
        }
    }
}

/// Sinusoidal embedding of an integer timestep.
pub fn time_embedding(t: usize, dim: usize, out: &mut [f64]) {
    let half = dim / 2;
    for k in 0..half {
        let freq = libm::exp(-libm::log(1000.0) * k as f64 / half as f64);
        let arg = t as f64 * freq;
        out[k] = libm::sin(arg);
        out[half + k] = libm::cos(arg);
    }
}

impl Denoiser {
    /// Glorot-uniform weights, zero biases, skip gate closed.
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut params = vec![0.0; config.num_params()];
        let off = config.offsets();
        let (i, h, o) = (config.input_dim(), config.hidden, config.image_dim);
        let mut fill = |range: core::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for p in &mut params[range] {
                *p = a * (2.0 * rng.uniform() - 1.0);
            }
        };
        fill(off.w1..off.b1, i, h);
        fill(off.w2..off.b2, h, h);
        fill(off.w3..off.b3, h, o);
        Ok(Self { config, params })
    }

    pub fn zeros(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params: vec![0.0; config.num_params()],
        })
    }

    pub fn from_params(config: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.num_params() {
            return Err(CoreError::ShapeMismatch {
                expected: config.num_params(),
                actual: params.len(),
            });
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.params.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(CoreError::NonFiniteParams(i)),
            None => Ok(()),
        }
    }

    fn check_inputs(&self, y_t: &[f64], cond: &[f64]) -> Result<()> {
        if y_t.len() != self.config.image_dim {
            return Err(CoreError::ShapeMismatch {
                expected: self.config.image_dim,
                actual: y_t.len(),
            });
        }
        if cond.len() != self.config.cond_dim {
            return Err(CoreError::ShapeMismatch {
                expected: self.config.cond_dim,
                actual: cond.len(),
            });
        }
        Ok(())
    }

    /// Deterministic prediction `ε̂ = ε_θ(y_t, t, c)`.
    pub fn predict(&self, y_t: &[f64], t: usize, cond: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(y_t, cond)?;
        self.check_finite()?;
        Ok(self.forward(y_t, t, cond).0)
    }

    /// Forward pass without validation; callers guarantee shapes.
    pub fn forward(&self, y_t: &[f64], t: usize, cond: &[f64]) -> (Vec<f64>, ForwardCache) {
        let c = &self.config;
        let off = c.offsets();
        let p = &self.params;
        let mut input = vec![0.0; c.input_dim()];
        input[..c.image_dim].copy_from_slice(y_t);
        time_embedding(t, c.time_dim, &mut input[c.image_dim..c.image_dim + c.time_dim]);
        input[c.image_dim + c.time_dim..].copy_from_slice(cond);

        let mut z1 = vec![0.0; c.hidden];
        affine(&p[off.w1..off.b1], &p[off.b1..off.w2], &input, &mut z1);
        let h1: Vec<f64> = z1.iter().map(|z| silu(*z)).collect();
        let mut z2 = vec![0.0; c.hidden];
        affine(&p[off.w2..off.b2], &p[off.b2..off.w3], &h1, &mut z2);
        let h2: Vec<f64> = z2.iter().map(|z| silu(*z)).collect();
        let mut out = vec![0.0; c.image_dim];
        affine(&p[off.w3..off.b3], &p[off.b3..off.ws], &h2, &mut out);
        let mut gate = vec![0.0; c.image_dim];
        let temb = &input[c.image_dim..c.image_dim + c.time_dim];
        affine(&p[off.ws..off.bs], &p[off.bs..], temb, &mut gate);
        for ((o, g), y) in out.iter_mut().zip(&gate).zip(y_t) {
            *o += g * y;
        }
        (
            out,
            ForwardCache {
                input,
                z1,
                h1,
                z2,
                h2,
            },
        )
    }

    /// Accumulate `∂(d_out · ε̂)/∂θ` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        let c = &self.config;
        let off = c.offsets();
        let p = &self.params;
        let (g123, gs) = grad.split_at_mut(off.ws);
        let (gws, gbs) = gs.split_at_mut(off.bs - off.ws);
        let y_t = &cache.input[..c.image_dim];
        let dgate: Vec<f64> = d_out.iter().zip(y_t).map(|(d, y)| d * y).collect();
        let temb = &cache.input[c.image_dim..c.image_dim + c.time_dim];
        affine_backward(&p[off.ws..off.bs], temb, &dgate, gws, gbs, None);

        let (g12, g3) = g123.split_at_mut(off.w3);
        let (gw3, gb3) = g3.split_at_mut(off.b3 - off.w3);
        let mut dh2 = vec![0.0; c.hidden];
        affine_backward(&p[off.w3..off.b3], &cache.h2, d_out, gw3, gb3, Some(&mut dh2));
        let dz2: Vec<f64> = dh2.iter().zip(&cache.z2).map(|(d, z)| d * silu_grad(*z)).collect();

        let (g1, g2) = g12.split_at_mut(off.w2);
        let (gw2, gb2) = g2.split_at_mut(off.b2 - off.w2);
        let mut dh1 = vec![0.0; c.hidden];
        affine_backward(&p[off.w2..off.b2], &cache.h1, &dz2, gw2, gb2, Some(&mut dh1));
        let dz1: Vec<f64> = dh1.iter().zip(&cache.z1).map(|(d, z)| d * silu_grad(*z)).collect();

        let (gw1, gb1) = g1.split_at_mut(off.b1);
        affine_backward(&p[off.w1..off.b1], &cache.input, &dz1, gw1, gb1, None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};

    fn tiny() -> DenoiserConfig {
        DenoiserConfig {
            image_dim: 6,
            time_dim: 4,
            cond_dim: 3,
            hidden: 5,
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let d = Denoiser::zeros(tiny()).unwrap();
        let out = d.predict(&[0.3; 6], 4, &[0.1, 0.2, 0.3]).unwrap();
        assert!(out.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn prediction_is_deterministic_and_shaped() {
        let d = Denoiser::init(DenoiserConfig::default(), 1).unwrap();
        let y = vec![0.1; 192];
        let c = vec![0.05; DenoiserConfig::default().cond_dim];
        let a = d.predict(&y, 10, &c).unwrap();
        let b = d.predict(&y, 10, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 192);
    }

    #[test]
    fn rejects_bad_shapes_and_nan_weights() {
        let mut d = Denoiser::init(tiny(), 1).unwrap();
        assert!(d.predict(&[0.0; 5], 1, &[0.0; 3]).is_err());
        assert!(d.predict(&[0.0; 6], 1, &[0.0; 2]).is_err());
        d.params_mut()[7] = f64::NAN;
        assert_eq!(d.predict(&[0.0; 6], 1, &[0.0; 3]), Err(CoreError::NonFiniteParams(7)));
    }

    #[test]
    fn param_count_matches_layout() {
        let c = tiny();
        assert_eq!(c.num_params(), 5 * 13 + 5 + 25 + 5 + 6 * 5 + 6 + 6 * 4 + 6);
        assert!(DenoiserConfig { time_dim: 3, ..c }.validate().is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = Denoiser::init(tiny(), 9).unwrap();
        let y = [0.2, -0.4, 0.1, 0.9, -0.3, 0.05];
        let c = [0.5, -0.5, 0.7];
        let w = [1.0, -2.0, 0.5, 0.3, 0.0, 1.5];
        let f = |p: &[f64]| {
            let m = Denoiser::from_params(tiny(), p.to_vec()).unwrap();
            let (o, _) = m.forward(&y, 3, &c);
            o.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = d.forward(&y, 3, &c);
        let mut g = vec![0.0; d.num_params()];
        d.backward(&cache, &w, &mut g);
        let fd = central_difference(d.params(), f, 1e-5);
        for (a, n) in g.iter().zip(&fd) {
            assert!(relative_error(*a, *n, 1e-6) < 1e-6, "{a} vs {n}");
        }
    }
}
