use super::Tensor;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares `analytic` against `(f(p + h) - f(p - h)) / 2h` entry by entry.
///
/// The relative error of one entry is
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
/// `params` is perturbed in place and restored before returning.
pub fn finite_diff_check<F>(
    params: &mut [Tensor],
    analytic: &[Tensor],
    h: f64,
    mut f: F,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for p in 0..params.len() {
        assert_eq!(params[p].shape(), analytic[p].shape());
        for k in 0..params[p].numel() {
            let orig = params[p].data()[k];
            params[p].data_mut()[k] = orig + h;
            let up = f(params);
            params[p].data_mut()[k] = orig - h;
            let down = f(params);
            params[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[p].data()[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((p, k));
            }
        }
    }
    report
}
