use rand::seq::index;

use super::Params;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckFailure {
    pub set: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

const STEP: f64 = 1e-5;
/// Denominator floor for relative errors.
const FLOOR: f64 = 1e-7;

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Compares analytic gradients with central differences.
///
/// `loss` evaluates the scalar loss and its gradient for every parameter set
/// in `params`. Up to `per_set` randomly chosen coordinates of each set are
/// perturbed. A coordinate that fails at the default step is retried with a
/// step ten times smaller, which clears relu kinks crossed by the wider step.
pub fn gradient_check<F>(
    params: &mut [Params],
    mut loss: F,
    per_set: usize,
    tolerance: f64,
    rng: &mut SeededRng,
) -> GradCheckReport
where
    F: FnMut(&[Params]) -> (f64, Vec<Params>),
{
    let (_, grads) = loss(params);
    assert_eq!(grads.len(), params.len(), "one gradient per parameter set");
    let mut report = GradCheckReport { checked: 0, max_relative_error: 0.0, tolerance, failures: Vec::new() };
    for set in 0..params.len() {
        let n = params[set].len();
        let picks = index::sample(rng, n, per_set.min(n)).into_vec();
        for i in picks {
            let analytic = grads[set].get(i);
            let mut numeric = central_difference(params, &mut loss, set, i, STEP);
            let mut err = relative_error(analytic, numeric);
            if err > tolerance {
                let retry = central_difference(params, &mut loss, set, i, STEP / 10.0);
                let retry_err = relative_error(analytic, retry);
                if retry_err < err {
                    numeric = retry;
                    err = retry_err;
                }
            }
            report.checked += 1;
            report.max_relative_error = report.max_relative_error.max(err);
            if err > tolerance {
                report.failures.push(GradCheckFailure { set, index: i, analytic, numeric, relative_error: err });
            }
        }
    }
    report
}

fn central_difference<F>(params: &mut [Params], loss: &mut F, set: usize, i: usize, h: f64) -> f64
where
    F: FnMut(&[Params]) -> (f64, Vec<Params>),
{
    let original = params[set].get(i);
    params[set].set(i, original + h);
    let (plus, _) = loss(params);
    params[set].set(i, original - h);
    let (minus, _) = loss(params);
    params[set].set(i, original);
    (plus - minus) / (2.0 * h)
}
