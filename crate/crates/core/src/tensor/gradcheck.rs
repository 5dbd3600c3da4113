//! Central finite-difference verification of analytic gradients.

use super::TensorError;

/// One evaluation of the function under test.
#[derive(Clone, Debug, Default)]
pub struct Probe {
    pub value: f64,
    /// Analytic gradient; only read at the base point.
    pub gradient: Vec<f64>,
    /// Discrete branch signature (see [`super::Tape::branch_signature`]).
    /// Coordinates whose `+step` and `-step` probes disagree with the base
    /// signature straddle a kink and are skipped.
    pub branch: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Magnitudes below this are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Compares the analytic gradient of `f` at `params` against central
/// differences with the given step.
///
/// `f(x, want_gradient)` evaluates the function; the analytic gradient is
/// only requested at the base point.
pub fn gradient_check<F>(mut f: F, params: &[f64], step: f64) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&[f64], bool) -> Probe,
{
    if !(step > 0.0) {
        return Err(TensorError::Evaluation(format!("step must be positive, got {step}")));
    }
    let base = f(params, true);
    if !base.value.is_finite() {
        return Err(TensorError::Evaluation(format!("non-finite value {} at base point", base.value)));
    }
    if base.gradient.len() != params.len() {
        return Err(TensorError::Dimension(format!(
            "analytic gradient has {} entries for {} params",
            base.gradient.len(),
            params.len()
        )));
    }
    let mut x = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(&x, false);
        x[i] = orig - step;
        let minus = f(&x, false);
        x[i] = orig;
        if !plus.value.is_finite() || !minus.value.is_finite() {
            return Err(TensorError::Evaluation(format!("non-finite value probing coordinate {i}")));
        }
        if plus.branch != base.branch || minus.branch != base.branch {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * step);
        let analytic = base.gradient[i];
        let abs = (numeric - analytic).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let r = gradient_check(
            |x, _| Probe { value: x[0] * x[0], gradient: vec![2.0 * x[0]], branch: 0 },
            &[3.0],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn linear_function_is_exact_to_rounding() {
        let w = [0.5, -1.25, 2.0];
        let r = gradient_check(
            |x, _| Probe {
                value: x.iter().zip(&w).map(|(a, b)| a * b).sum(),
                gradient: w.to_vec(),
                branch: 0,
            },
            &[1.0, 2.0, -3.0],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let r = gradient_check(
            |x, _| Probe { value: x[0].powi(3), gradient: vec![2.0 * x[0] * x[0]], branch: 0 },
            &[1.5],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let r = gradient_check(|_, _| Probe { value: f64::NAN, gradient: vec![0.0], branch: 0 }, &[0.0], 1e-5);
        assert!(matches!(r, Err(TensorError::Evaluation(_))));
    }

    #[test]
    fn kink_coordinates_are_skipped() {
        // |x| probed at 0 straddles the kink.
        let r = gradient_check(
            |x, _| Probe {
                value: x[0].abs() + x[1] * x[1],
                gradient: vec![0.0, 2.0 * x[1]],
                branch: (x[0] > 0.0) as u64 + 2 * (x[0] < 0.0) as u64,
            },
            &[0.0, 1.0],
            1e-5,
        )
        .unwrap();
        assert_eq!(r.skipped_kinks, 1);
        assert_eq!(r.checked, 1);
    }
}
