//! Central finite-difference gradient verification.

use alloc::vec::Vec;

use crate::rng::SeededRng;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = libm::fabs(analytic).max(libm::fabs(numeric)).max(floor);
    libm::fabs(analytic - numeric) / denom
}

/// Full central-difference gradient of `f` at `params`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(params: &[f64], mut f: F, h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Denominator floor, scaled by `max(1, |loss|)` so round-off in the
    /// loss value does not dominate near-zero gradient entries.
    pub floor: f64,
    /// Above this many parameters a seeded subsample is checked.
    pub max_params: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            floor: 1e-6,
            max_params: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub loss: f64,
}

/// Compare the analytic gradient returned by `loss_and_grad` against central
/// differences of its loss value.
pub fn grad_check<F>(params: &[f64], mut loss_and_grad: F, options: GradCheckOptions) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    assert!(options.h > 0.0, "step must be positive");
    let (loss, analytic) = loss_and_grad(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut indices: Vec<usize> = (0..params.len()).collect();
    if indices.len() > options.max_params {
        SeededRng::new(options.seed).shuffle(&mut indices);
        indices.truncate(options.max_params);
        indices.sort_unstable();
    }
    let floor = options.floor * libm::fabs(loss).max(1.0);
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: indices.len(),
        loss,
    };
    for &i in &indices {
        let orig = p[i];
        p[i] = orig + options.h;
        let up = loss_and_grad(&p).0;
        p[i] = orig - options.h;
        let down = loss_and_grad(&p).0;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * options.h);
        let err = relative_error(analytic[i], numeric, floor);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}
