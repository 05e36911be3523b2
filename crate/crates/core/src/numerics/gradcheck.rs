/// Outcome of a central-difference gradient comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index where the worst error occurred.
    pub worst_index: usize,
    pub checked: usize,
}

/// Denominator floor for the relative error; gradients smaller than this are
/// compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// Compares `analytic` against central differences of the scalar function
/// `forward` around `params`, evaluated in 64-bit.
///
/// Relative error per coordinate is `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn grad_check<F>(mut forward: F, params: &[f64], analytic: &[f64], epsilon: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per parameter");
    let mut probe = params.to_vec();
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_index: 0, checked: params.len() };
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let up = forward(&probe);
        probe[i] = orig - epsilon;
        let down = forward(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        if err > report.max_relative_error || err.is_nan() {
            report.max_relative_error = if err.is_nan() { f64::INFINITY } else { err };
            report.worst_index = i;
        }
    }
    report
}
