use alloc::vec::Vec;

use super::Matrix;

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, element index)` of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Denominators below this are clamped so that near-zero gradients are
/// judged on absolute error.
const REL_FLOOR: f64 = 1e-4;

/// Compares `analytic` against central differences
/// `(f(p + eps) - f(p - eps)) / 2 eps`, one scalar at a time.
///
/// The error for one entry is `|a - n| / max(|a|, |n|, 1e-4)`.
///
/// # Panics
///
/// If `eps` is outside `[1e-7, 1e-4]` or `analytic` is not shaped like
/// `params`.
pub fn grad_check<F>(mut f: F, params: &[Matrix], analytic: &[Matrix], eps: f64) -> GradCheck
where
    F: FnMut(&[Matrix]) -> f64,
{
    assert!((1e-7..=1e-4).contains(&eps), "eps {eps} outside [1e-7, 1e-4]");
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.shape(), params[pi].shape(), "gradient {pi} shape");
        for ei in 0..grad.len() {
            let original = work[pi].as_slice()[ei];
            work[pi].as_mut_slice()[ei] = original + eps;
            let plus = f(&work);
            work[pi].as_mut_slice()[ei] = original - eps;
            let minus = f(&work);
            work[pi].as_mut_slice()[ei] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.as_slice()[ei];
            let denom = libm::fabs(a).max(libm::fabs(numeric)).max(REL_FLOOR);
            let err = libm::fabs(a - numeric) / denom;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = (pi, ei);
            }
            report.checked += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Tape, Var};
    use alloc::vec;

    #[test]
    fn linear_function_is_exact() {
        let coeffs = Matrix::new(2, 2, vec![0.3, -1.7, 2.2, 0.05]).unwrap();
        let f = |p: &[Matrix]| p[0].as_slice().iter().zip(coeffs.as_slice()).map(|(a, b)| a * b).sum();
        let params = [Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()];
        let report = grad_check(f, &params, std::slice::from_ref(&coeffs), 1e-5);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn quadratic_form_through_tape() {
        // f(x) = x^T A x with x a 3x1 parameter; gradient from the tape.
        let a = Matrix::new(3, 3, vec![2.0, 0.5, -1.0, 0.5, 1.0, 0.3, -1.0, 0.3, 3.0]).unwrap();
        let x = Matrix::new(3, 1, vec![0.4, -0.2, 0.9]).unwrap();
        let eval = |x: &Matrix| -> (f64, Matrix) {
            let mut tape = Tape::new();
            let xv = tape.param(0, x).unwrap();
            let av = tape.input(a.clone());
            let ax = tape.matmul(av, xv).unwrap();
            let xt = tape.transpose(xv);
            let q: Var = tape.matmul(xt, ax).unwrap();
            let value = tape.value(q).get(0, 0);
            let g = tape.backward(&[(q, Matrix::filled(1, 1, 1.0))]).unwrap();
            (value, g.param(0).unwrap().clone())
        };
        let (_, grad) = eval(&x);
        let report = grad_check(|p| eval(&p[0]).0, &[x], &[grad], 1e-5);
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |p: &[Matrix]| p[0].get(0, 0) * p[0].get(0, 0);
        let params = [Matrix::filled(1, 1, 2.0)];
        let report = grad_check(f, &params, &[Matrix::filled(1, 1, 3.0)], 1e-5);
        assert!(report.max_rel_error > 0.2);
    }
}
