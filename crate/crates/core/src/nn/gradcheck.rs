use rand::seq::index;

use super::model::ModelParams;
use crate::rng;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Check a seeded random subset of this many coordinates instead of all.
    pub sample: Option<(usize, u64)>,
    /// Magnitude below which errors are measured absolutely rather than relatively.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            sample: None,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub failures: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares an analytic gradient against central finite differences of
/// `loss_fn` around `params`. Never fails; mismatches are counted in the report.
pub fn finite_diff_check(
    params: &ModelParams,
    analytic: &ModelParams,
    loss_fn: impl Fn(&ModelParams) -> f64,
    options: GradCheckOptions,
) -> GradCheckReport {
    let n = params.num_params();
    let coords: Vec<usize> = match options.sample {
        Some((count, seed)) if count < n => {
            let mut r = rng::stream(&[rng::tag::SUBSAMPLE, seed]);
            let mut idx = index::sample(&mut r, n, count).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: coords.len(),
        failures: 0,
        tolerance: options.tolerance,
    };
    for &i in &coords {
        let x = params.get_flat(i);
        probe.set_flat(i, x + options.step);
        let up = loss_fn(&probe);
        probe.set_flat(i, x - options.step);
        let down = loss_fn(&probe);
        probe.set_flat(i, x);
        let numeric = (up - down) / (2.0 * options.step);
        let err = relative_error(analytic.get_flat(i), numeric, options.floor);
        if err > options.tolerance || !err.is_finite() {
            report.failures += 1;
        }
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = err;
            report.worst_index = Some(i);
        }
    }
    report
}
