//! Finite-difference gradient checking.
//!
//! The numeric side never touches the analytic code path: it only evaluates
//! the loss closure at perturbed parameter vectors, so a sign or indexing
//! bug in a hand-written backward pass cannot cancel itself out here.

/// Central-difference gradient of `f` at `theta`.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let plus = f(&probe);
        probe[i] = theta[i] - eps;
        let minus = f(&probe);
        probe[i] = theta[i];
        grad.push((plus - minus) / (2.0 * eps));
    }
    grad
}

/// Worst relative disagreement between two gradient vectors:
/// `max_i |a_i - b_i| / (|a_i| + |b_i| + 1e-12)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs() + 1e-12))
        .fold(0.0, f64::max)
}

/// Convenience wrapper: numeric gradient of `f` at `theta` against the
/// provided analytic gradient, returning the worst relative error.
pub fn grad_check(
    f: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    let numeric = finite_difference_gradient(f, theta, eps);
    max_relative_error(analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        let theta = vec![1.5, -2.0, 0.25];
        let f = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>();
        let analytic: Vec<f64> = theta.iter().map(|v| 2.0 * v).collect();
        let err = grad_check(f, &theta, &analytic, 1e-5);
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn sign_flip_is_detected() {
        // A sabotaged analytic gradient must produce a large reported error;
        // this is the guard that keeps the checker honest.
        let theta = vec![0.7, -1.3];
        let f = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>();
        let mut sabotaged: Vec<f64> = theta.iter().map(|v| 2.0 * v).collect();
        sabotaged[1] = -sabotaged[1];
        let err = grad_check(f, &theta, &sabotaged, 1e-5);
        assert!(err > 0.5, "sabotage went unnoticed, err {err}");
    }

    #[test]
    fn nonsmooth_kink_reports_mismatch() {
        // |x| at 0 has no gradient; the checker should not silently agree
        // with any claimed value other than the numeric slope 0.
        let f = |t: &[f64]| t[0].abs();
        let err = grad_check(f, &[0.0], &[1.0], 1e-5);
        assert!(err > 0.4);
    }
}
